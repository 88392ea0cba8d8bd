"""Coarray MUSIC estimators for one-bit and unquantized cross-dipole data."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .geometry import (ArrayConfig, DifferenceCoarray, GeometryError, LagMap, coarray_average,
                       difference_coarray, lag_map)
from .quantize import (NormalizedCovariance, normalize_covariance, reconstruct_normalized_covariance,
                       sample_covariance)
from .signal_model import SnapshotMatrix

DENOMINATOR_FLOOR = 1e-15
DEFAULT_GRID = np.arange(-0.5, 0.5, 1e-3)


class EstimationError(RuntimeError):
    """Raised when an estimator cannot produce the requested number of DOAs."""


@dataclass(frozen=True)
class CoarrayGeometry:
    """Difference coarray and lag map of one array, computed once and reused."""

    array: ArrayConfig
    coarray: DifferenceCoarray
    lags: LagMap

    @classmethod
    def of(cls, array: ArrayConfig) -> "CoarrayGeometry":
        return cls(array, difference_coarray(array), lag_map(array))

    @property
    def max_sources(self) -> int:
        return self.coarray.max_uniform_lag


@dataclass
class CoarrayMeasurement:
    """Lag-averaged covariance over the central uniform segment ``-u..u``."""

    values: np.ndarray
    axis: str = "x"

    @property
    def max_lag(self) -> int:
        return (len(self.values) - 1) // 2

    def at(self, lag: int) -> complex:
        return self.values[lag + self.max_lag]


@dataclass
class CoarrayCovariance:
    """Hermitian Toeplitz matrix ``R[n1, n2] = x(n1 - n2)`` over lags ``0..u``."""

    matrix: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass
class DoaEstimate:
    thetas: np.ndarray
    spectrum: Optional[Tuple[np.ndarray, np.ndarray]] = None


def _as_geometry(geometry) -> CoarrayGeometry:
    if isinstance(geometry, CoarrayGeometry):
        return geometry
    if isinstance(geometry, ArrayConfig):
        return CoarrayGeometry.of(geometry)
    raise TypeError(f"expected ArrayConfig or CoarrayGeometry, got {type(geometry).__name__}")


def coarray_measurement(normalized_cov, geometry) -> CoarrayMeasurement:
    geo = _as_geometry(geometry)
    u = geo.coarray.max_uniform_lag
    if u == 0:
        raise GeometryError("the coarray uniform segment is only {0}; no DOA can be estimated")
    matrix = getattr(normalized_cov, "matrix", normalized_cov)
    axis = getattr(normalized_cov, "axis", "x")
    values = coarray_average(matrix, geo.lags, range(-u, u + 1))
    return CoarrayMeasurement(values, axis)


def coarray_covariance(meas: CoarrayMeasurement) -> CoarrayCovariance:
    u = meas.max_lag
    idx = np.arange(u + 1)
    return CoarrayCovariance(meas.values[(idx[:, None] - idx[None, :]) + u])


def sum_covariance(r1: CoarrayCovariance, r2: CoarrayCovariance) -> CoarrayCovariance:
    if r1.matrix.shape != r2.matrix.shape:
        raise ValueError(f"shape mismatch: {r1.matrix.shape} vs {r2.matrix.shape}")
    return CoarrayCovariance(r1.matrix + r2.matrix)


def noise_subspace(cov, k: int) -> np.ndarray:
    """Eigenvectors of the ``dim - k`` smallest eigenvalues."""
    r = np.asarray(getattr(cov, "matrix", cov))
    n = r.shape[0]
    if k < 1:
        raise ValueError("need at least one source")
    if k >= n:
        raise EstimationError(f"{k} sources cannot be resolved with a {n}x{n} coarray covariance")
    # eigh returns ascending eigenvalues; stable for ties
    w, v = np.linalg.eigh(0.5 * (r + r.conj().T))
    gap = abs(w[n - k] - w[n - k - 1])
    if gap < 1e-10 * max(abs(w[-1]), 1e-300):
        warnings.warn("signal and noise eigenvalues are nearly degenerate", RuntimeWarning, stacklevel=3)
    return v[:, : n - k]


def music_spectrum(cov, k: int, grid: Sequence[float] = DEFAULT_GRID) -> Tuple[np.ndarray, np.ndarray]:
    """MUSIC pseudo-spectrum ``1 / (v^H Un Un^H v)`` on a grid of normalized DOAs."""
    un = noise_subspace(cov, k)
    grid = np.asarray(grid, dtype=float)
    v = np.exp(2j * np.pi * np.outer(np.arange(un.shape[0]), grid))
    proj = un.conj().T @ v
    denom = np.maximum(np.sum(np.abs(proj) ** 2, axis=0), DENOMINATOR_FLOOR)
    return grid, 1.0 / denom


def spectrum_peaks(grid: np.ndarray, spectrum: np.ndarray, k: int) -> np.ndarray:
    """Grid locations of the ``k`` largest local maxima, sorted."""
    s = np.asarray(spectrum)
    interior = (s[1:-1] >= s[:-2]) & (s[1:-1] >= s[2:])
    idx = np.nonzero(interior)[0] + 1
    top = idx[np.argsort(s[idx])[::-1][:k]]
    return np.sort(np.asarray(grid)[top])


def root_music(cov, k: int) -> DoaEstimate:
    """Root-MUSIC on a coarray covariance.

    The noise projector's diagonal sums form a conjugate-reciprocal polynomial;
    of its roots inside the unit circle the ``k`` nearest to the circle give
    the DOAs.
    """
    un = noise_subspace(cov, k)
    c = un @ un.conj().T
    n = c.shape[0]
    # coefficient of z^(d + n - 1) is the sum of the d-th diagonal, highest power first
    coeffs = np.array([np.trace(c, offset=d) for d in range(n - 1, -n, -1)])
    # negligible end coefficients are roots at 0 / infinity that spoil conditioning
    big = np.nonzero(np.abs(coeffs) > 1e-12 * np.abs(coeffs).max())[0]
    roots = np.roots(coeffs[big[0]: big[-1] + 1])
    inside = roots[np.abs(roots) <= 1.0]
    if len(inside) < k:
        raise EstimationError(f"only {len(inside)} admissible roots for {k} sources")
    chosen = inside[np.argsort(1.0 - np.abs(inside))[:k]]
    thetas = np.angle(chosen) / (2.0 * np.pi)
    return DoaEstimate(np.sort(thetas))


def _axis_covariances(snapshots: SnapshotMatrix, geo: CoarrayGeometry, one_bit: bool):
    covs = []
    for axis in ("x", "y"):
        r = sample_covariance(snapshots, axis)
        nc = reconstruct_normalized_covariance(r, axis) if one_bit else normalize_covariance(r, axis)
        covs.append(coarray_covariance(coarray_measurement(nc, geo)))
    return covs


def _check(snapshots: SnapshotMatrix, geo: CoarrayGeometry, k: int, quantized: bool):
    if snapshots.quantized != quantized:
        raise ValueError("one-bit estimators need quantized snapshots" if quantized
                         else "the unquantized baseline needs raw snapshots")
    if snapshots.num_sensors != geo.array.size:
        raise ValueError("snapshot rows do not match the array size")
    if k > geo.max_sources:
        raise EstimationError(f"{k} sources exceed the {geo.max_sources} resolvable by this coarray")


def _finish(cov: CoarrayCovariance, k: int, method: str, grid) -> DoaEstimate:
    if method == "root":
        est = root_music(cov, k)
        if grid is not None:
            est.spectrum = music_spectrum(cov, k, grid)
        return est
    if method == "spectrum":
        g, p = music_spectrum(cov, k, DEFAULT_GRID if grid is None else grid)
        return DoaEstimate(spectrum_peaks(g, p, k), (g, p))
    raise ValueError(f"unknown search method {method!r}")


def ob_music1_covariance(snapshots: SnapshotMatrix, axis, geometry) -> CoarrayCovariance:
    geo = _as_geometry(geometry)
    r = sample_covariance(snapshots, axis)
    return coarray_covariance(coarray_measurement(reconstruct_normalized_covariance(r, axis), geo))


def ob_music2_covariance(snapshots: SnapshotMatrix, geometry) -> CoarrayCovariance:
    geo = _as_geometry(geometry)
    r1, r2 = _axis_covariances(snapshots, geo, one_bit=True)
    return sum_covariance(r1, r2)


def baseline_covariance(snapshots: SnapshotMatrix, geometry) -> CoarrayCovariance:
    geo = _as_geometry(geometry)
    r1, r2 = _axis_covariances(snapshots, geo, one_bit=False)
    return sum_covariance(r1, r2)


def ob_music1(snapshots: SnapshotMatrix, axis, k: int, geometry, method: str = "root",
              grid=None) -> DoaEstimate:
    """Single-axis one-bit coarray MUSIC."""
    geo = _as_geometry(geometry)
    _check(snapshots, geo, k, quantized=True)
    return _finish(ob_music1_covariance(snapshots, axis, geo), k, method, grid)


def ob_music2(snapshots: SnapshotMatrix, k: int, geometry, method: str = "root",
              grid=None) -> DoaEstimate:
    """One-bit coarray MUSIC on the sum of both axes' coarray covariances."""
    geo = _as_geometry(geometry)
    _check(snapshots, geo, k, quantized=True)
    return _finish(ob_music2_covariance(snapshots, geo), k, method, grid)


def baseline_unquantized(snapshots: SnapshotMatrix, k: int, geometry, method: str = "root",
                         grid=None) -> DoaEstimate:
    """Same pipeline as :func:`ob_music2` on unit-diagonal sample covariances of raw data."""
    geo = _as_geometry(geometry)
    _check(snapshots, geo, k, quantized=False)
    return _finish(baseline_covariance(snapshots, geo), k, method, grid)


METHODS = ("ob_music1_x", "ob_music1_y", "ob_music2", "baseline_unquantized")


def run_method(name: str, raw: SnapshotMatrix, quantized: SnapshotMatrix, k: int,
               geometry, method: str = "root", grid=None) -> DoaEstimate:
    """Dispatch by method name; ``raw`` feeds the baseline, ``quantized`` the rest."""
    if name == "ob_music1_x":
        return ob_music1(quantized, "x", k, geometry, method, grid)
    if name == "ob_music1_y":
        return ob_music1(quantized, "y", k, geometry, method, grid)
    if name == "ob_music2":
        return ob_music2(quantized, k, geometry, method, grid)
    if name == "baseline_unquantized":
        return baseline_unquantized(raw, k, geometry, method, grid)
    raise ValueError(f"unknown method {name!r}; choose from {METHODS}")
