"""Spatial weight matrices and Moran autocorrelation statistics.

Weight matrices are nonnegative with an exactly zero diagonal and are usually
row-normalized so each row with at least one neighbor sums to one. Three
constructions are provided: inverse distance 1/(1+|i-i'|), exponential decay
exp(-d|i-i'|), and K-nearest-neighbor weights from great-circle (Haversine)
distances. Moran's I comes in the scalar flavor x'Wx / x'x (on centered x)
and the functional flavor evaluated pointwise along curves.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import (
    DataError,
    ParameterError,
    PreconditionError,
    UndefinedStatisticError,
)
from .fdbasis import BasisCoefficients, evaluate_basis

EARTH_RADIUS_KM = 6371.0

# Matrices of at least this many rows are stored in CSR form; KNN and other
# thresholded constructions are sparse at that scale.
SPARSE_THRESHOLD = 2000


@dataclass(frozen=True)
class SpatialWeights:
    """n x n spatial weight matrix with nonnegative entries and zero diagonal."""

    matrix: np.ndarray | sp.csr_array
    normalized: bool = False
    kind: str = "custom"

    def __post_init__(self):
        mat = self.matrix
        if sp.issparse(mat):
            mat = sp.csr_array(mat)
        else:
            mat = np.asarray(mat, dtype=float)
            if mat.ndim != 2:
                raise ParameterError("weight matrix must be 2-D")
        if mat.shape[0] != mat.shape[1]:
            raise ParameterError("weight matrix must be square")
        if mat.shape[0] >= SPARSE_THRESHOLD and not sp.issparse(mat):
            mat = sp.csr_array(mat)
        object.__setattr__(self, "matrix", mat)
        data = mat.data if sp.issparse(mat) else mat
        if data.size and np.min(data) < 0:
            raise DataError("weight matrix has negative entries")
        diag = mat.diagonal()
        if np.any(diag != 0):
            raise DataError("weight matrix diagonal must be exactly zero")
        if self.normalized:
            sums = self.row_sums()
            bad = np.abs(sums - 1.0) > 1e-12
            bad &= sums != 0.0
            if np.any(bad):
                raise DataError("normalized=True but some nonzero row sums differ from 1")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def row_sums(self) -> np.ndarray:
        if sp.issparse(self.matrix):
            return np.asarray(self.matrix.sum(axis=1)).ravel()
        return self.matrix.sum(axis=1)

    def toarray(self) -> np.ndarray:
        if sp.issparse(self.matrix):
            return self.matrix.toarray()
        return np.array(self.matrix)

    # --- linear-algebra helpers used by the estimation core ---

    def matmul(self, m: np.ndarray) -> np.ndarray:
        """W @ m."""
        return np.asarray(self.matrix @ m)

    def rmatmul(self, m: np.ndarray) -> np.ndarray:
        """W' @ m."""
        return np.asarray(self.matrix.T @ m)

    def diag_wtw(self) -> np.ndarray:
        """Diagonal of W'W, i.e. squared column norms."""
        if sp.issparse(self.matrix):
            return np.asarray(self.matrix.multiply(self.matrix).sum(axis=0)).ravel()
        return np.einsum("ij,ij->j", self.matrix, self.matrix)

    def inf_norm(self) -> float:
        """Maximum absolute row sum (entries are nonnegative, so max row sum)."""
        return float(np.max(self.row_sums())) if self.n else 0.0

    def spectral_radius(self) -> float:
        cached = getattr(self, "_spec_rad", None)
        if cached is None:
            from .msar import spectral_radius as _sr

            cached = _sr(self.toarray() if self.n <= 4000 else self.matrix)
            object.__setattr__(self, "_spec_rad", cached)
        return cached


@dataclass(frozen=True)
class GeoCoordinates:
    """Latitude/longitude pairs in degrees."""

    lat: np.ndarray
    lon: np.ndarray

    def __post_init__(self):
        lat = np.atleast_1d(np.asarray(self.lat, dtype=float))
        lon = np.atleast_1d(np.asarray(self.lon, dtype=float))
        if lat.shape != lon.shape or lat.ndim != 1:
            raise ParameterError("lat and lon must be 1-D arrays of equal length")
        if np.any(np.abs(lat) > 90):
            raise ParameterError("latitudes must lie in [-90, 90]")
        if np.any(np.abs(lon) > 180):
            raise ParameterError("longitudes must lie in [-180, 180]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)

    @property
    def n(self) -> int:
        return self.lat.size


def _lattice_weights(n: int, values: np.ndarray, kind: str) -> SpatialWeights:
    np.fill_diagonal(values, 0.0)
    values /= values.sum(axis=1, keepdims=True)
    np.fill_diagonal(values, 0.0)  # keep the diagonal exactly zero
    return SpatialWeights(matrix=values, normalized=True, kind=kind)


def inverse_distance_weights(n: int) -> SpatialWeights:
    """Row-normalized weights w[i, j] = 1 / (1 + |i - j|) on a 1-D lattice."""
    if int(n) != n or n < 2:
        raise ParameterError("n must be an integer >= 2")
    idx = np.arange(int(n))
    dist = np.abs(idx[:, None] - idx[None, :]).astype(float)
    return _lattice_weights(int(n), 1.0 / (1.0 + dist), "inverse_distance")


def exponential_weights(n: int, d: float = 0.5) -> SpatialWeights:
    """Row-normalized weights w[i, j] = exp(-d |i - j|) with decay rate d > 0."""
    if int(n) != n or n < 2:
        raise ParameterError("n must be an integer >= 2")
    if not d > 0:
        raise ParameterError("decay parameter d must be > 0")
    idx = np.arange(int(n))
    dist = np.abs(idx[:, None] - idx[None, :]).astype(float)
    return _lattice_weights(int(n), np.exp(-d * dist), "exponential")


def haversine_km(lat1, lon1, lat2, lon2) -> np.ndarray | float:
    """Great-circle distance in km between coordinate pairs given in degrees.

    Uses a = sin^2(du/2) + cos(u1) cos(u2) sin^2(dv/2) and
    d = 2 R atan2(sqrt(a), sqrt(1 - a)) with R = 6371 km.
    """
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(v, dtype=float)) for v in (lat1, lon1, lat2, lon2))
    a = (
        np.sin((lat2 - lat1) / 2) ** 2
        + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    )
    a = np.clip(a, 0.0, 1.0)
    c = 2 * np.arctan2(np.sqrt(a), np.sqrt(1 - a))
    out = EARTH_RADIUS_KM * c
    return float(out) if np.ndim(out) == 0 else out


def haversine_matrix(coords: GeoCoordinates) -> np.ndarray:
    """Pairwise Haversine distance matrix in km."""
    return haversine_km(
        coords.lat[:, None], coords.lon[:, None], coords.lat[None, :], coords.lon[None, :]
    )


def knn_weights(coords: GeoCoordinates, h: int) -> SpatialWeights:
    """K-nearest-neighbor weights: w[i, j] = 1/h if j is among the h nearest
    units to i by Haversine distance, else 0. Distance ties are broken by the
    lower unit index so the construction is deterministic.
    """
    n = coords.n
    if int(h) != h or not 1 <= h <= n - 1:
        raise ParameterError("h must be an integer with 1 <= h <= n - 1")
    h = int(h)
    dist = haversine_matrix(coords)
    np.fill_diagonal(dist, np.inf)
    rows = np.repeat(np.arange(n), h)
    cols = np.empty(n * h, dtype=np.int64)
    order_idx = np.arange(n)
    for i in range(n):
        # lexsort: primary key distance, secondary key index (lower index wins ties)
        neighbors = np.lexsort((order_idx, dist[i]))[:h]
        cols[i * h : (i + 1) * h] = neighbors
    vals = np.full(n * h, 1.0 / h)
    if n >= SPARSE_THRESHOLD:
        mat = sp.csr_array((vals, (rows, cols)), shape=(n, n))
    else:
        mat = np.zeros((n, n))
        mat[rows, cols] = vals
    return SpatialWeights(matrix=mat, normalized=True, kind="knn")


def row_normalize(weights: SpatialWeights) -> SpatialWeights:
    """Scale each nonzero row to sum to one; all-zero rows are kept and warned about."""
    sums = weights.row_sums()
    zero_rows = sums == 0
    if np.any(zero_rows):
        warnings.warn(
            f"{int(zero_rows.sum())} isolated unit(s) with no neighbors; "
            "their rows stay zero",
            stacklevel=2,
        )
    scale = np.where(zero_rows, 1.0, sums)
    if sp.issparse(weights.matrix):
        mat = sp.csr_array(weights.matrix.multiply(1.0 / scale[:, None]))
    else:
        mat = weights.matrix / scale[:, None]
    return SpatialWeights(matrix=mat, normalized=True, kind=weights.kind)


def morans_i(x, weights: SpatialWeights) -> float:
    """Moran's I statistic x_c' W x_c / x_c' x_c of the mean-centered values."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != weights.n:
        raise ParameterError("value vector length must match weight matrix size")
    xc = x - x.mean()
    denom = float(xc @ xc)
    if denom < 1e-14 * max(1.0, float(x @ x)):
        raise UndefinedStatisticError("Moran's I is undefined for constant values")
    return float(xc @ weights.matmul(xc)) / denom


def functional_morans_i(
    coeffs: BasisCoefficients, weights: SpatialWeights, tgrid
) -> np.ndarray:
    """Functional Moran's I along tgrid for curves given by centered coefficients.

    At each t the statistic is (g(t)' A' W A g(t)) / (g(t)' A' A g(t)) with A the
    coefficient matrix and g the basis vector, i.e. the scalar Moran's I of the
    curve values at t.
    """
    if not coeffs.is_centered():
        raise PreconditionError("coefficients must be centered (column means zero)")
    if coeffs.n != weights.n:
        raise ParameterError("coefficient rows must match weight matrix size")
    tgrid = np.atleast_1d(np.asarray(tgrid, dtype=float))
    phi = evaluate_basis(coeffs.basis, tgrid)
    vals = coeffs.coef @ phi.T  # n x |tgrid| curve values at each t
    num = np.einsum("ij,ij->j", vals, weights.matmul(vals))
    den = np.einsum("ij,ij->j", vals, vals)
    bad = den < 1e-14
    if np.any(bad):
        raise UndefinedStatisticError(
            "functional Moran's I undefined (zero variance) at t = "
            + ", ".join(f"{t:g}" for t in tgrid[bad][:10])
        )
    return num / den
