#!/usr/bin/env python3
"""Full pipeline: fit the spatial model, inspect the surfaces, predict.

Generates one strong-dependence scenario, fits both the spatial model and the
non-spatial baseline, and compares surface recovery and out-of-sample
prediction error. Reproduces the qualitative gap reported for this design:
the baseline cannot absorb the spatially amplified response variance.
"""

import numpy as np

from sfofr import (
    SimConfig,
    contraction_diagnostic,
    fit_fofr_fpc,
    fit_sfofr,
    fitted_values,
    gen_predictors,
    gen_response,
    generate,
    ise_surface,
    mse_curves,
    predict,
    r_squared,
    reconstruct_beta,
    reconstruct_rho,
    represent_response,
    spectral_radius,
)

cfg = SimConfig(
    n_train=250, n_test=500, alpha=0.9, weight_kind="exponential", seed=12,
)
train = generate(cfg)

# disjoint test block with its own weight matrix, independent stream
test_rng = np.random.default_rng((cfg.seed, 1))
w_test = cfg.make_weights(cfg.n_test)
x_test = gen_predictors(cfg.n_test, cfg.grid, test_rng)
y_test = gen_response(x_test, w_test, cfg.alpha, test_rng)

print("fitting the spatial model on n =", cfg.n_train, "curves...")
fit = fit_sfofr(train.y_data, train.x_data, train.weights)
print("  response components:", fit.k_y, "| predictor components:", fit.k_x)
print("  score-space objective:", f"{fit.msar_fit.objective:.3f}",
      "| iterations:", fit.msar_fit.iterations)
print("  spectral radius of rho_hat:", f"{spectral_radius(fit.msar_fit.params.rho):.3f}")

# --- surface recovery ---------------------------------------------------------
rho_hat = reconstruct_rho(fit, cfg.grid, cfg.grid)
beta_hat = reconstruct_beta(fit, cfg.grid, cfg.grid)
print("\nISE(rho_hat) =", f"{ise_surface(rho_hat, train.rho_surface):.4f}",
      "(the reference value for this design is about 0.030)")
print("ISE(beta_hat) =", f"{ise_surface(beta_hat, train.beta_surface):.4f}")

diag = contraction_diagnostic(rho_hat, train.weights)
print("contraction diagnostic:", {k: (round(v, 4) if isinstance(v, float) else v)
                                  for k, v in diag.items()})

# --- prediction ---------------------------------------------------------------
baseline = fit_fofr_fpc(train.y_data, train.x_data)
for label, model in (("spatial", fit), ("baseline", baseline)):
    pred = predict(model, x_test, w_test)
    obs = represent_response(model, y_test)
    print(f"\n{label}: MSPE = {mse_curves(pred, obs):.4f}, "
          f"out-of-sample R^2 = {r_squared(pred, obs):.4f}")

fitted = fitted_values(fit)
obs_train = represent_response(fit, train.y_data)
print("\nspatial in-sample MSE =", f"{mse_curves(fitted, obs_train):.4f}")
