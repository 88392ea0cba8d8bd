"""Sparse linear array layouts and their difference coarrays.

Sensor positions are integers in units of half a wavelength.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

ARRAY_KINDS = ("ula", "nested", "coprime", "custom")


class GeometryError(ValueError):
    """Raised for invalid array parameters or degenerate coarrays."""


@dataclass(frozen=True)
class ArrayConfig:
    """A one-dimensional array of cross-dipoles on an integer grid."""

    positions: Tuple[int, ...]
    label: str = "custom"

    def __post_init__(self):
        pos = tuple(int(p) for p in self.positions)
        if len(pos) == 0:
            raise GeometryError("an array needs at least one sensor")
        if any(p < 0 for p in pos):
            raise GeometryError("sensor positions must be non-negative")
        if len(set(pos)) != len(pos):
            raise GeometryError(f"duplicate sensor positions in {pos}")
        if self.label not in ARRAY_KINDS:
            raise GeometryError(f"unknown array label {self.label!r}")
        object.__setattr__(self, "positions", tuple(sorted(pos)))

    @property
    def size(self) -> int:
        return len(self.positions)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)


def ula(n: int) -> ArrayConfig:
    """Uniform linear array at positions 0..n-1."""
    if n < 1:
        raise GeometryError(f"ULA needs n >= 1, got {n}")
    return ArrayConfig(tuple(range(n)), "ula")


def nested_array(l1: int, l2: int) -> ArrayConfig:
    """Two-level nested array with ``l1`` dense and ``l2`` sparse sensors.

    Positions are ``{1..l1} U {(l1+1), 2(l1+1), ..., l2(l1+1)}``.
    """
    if l1 < 1 or l2 < 1:
        raise GeometryError(f"nested array needs L1, L2 >= 1, got ({l1}, {l2})")
    inner = range(1, l1 + 1)
    outer = ((l1 + 1) * i for i in range(1, l2 + 1))
    return ArrayConfig(tuple(sorted(set(inner) | set(outer))), "nested")


def coprime_array(m: int, n: int) -> ArrayConfig:
    """Extended coprime array with ``2m + n - 1`` sensors.

    Positions are ``{0, m, ..., (n-1)m} U {n, 2n, ..., (2m-1)n}``; the shared
    origin is counted once.
    """
    if m < 1 or n < 1:
        raise GeometryError(f"coprime array needs M, N >= 1, got ({m}, {n})")
    if math.gcd(m, n) != 1:
        raise GeometryError(f"M={m} and N={n} are not coprime")
    first = {m * i for i in range(n)}
    second = {n * i for i in range(2 * m)}
    return ArrayConfig(tuple(sorted(first | second)), "coprime")


@dataclass(frozen=True)
class DifferenceCoarray:
    """Set of pairwise position differences and its central uniform run.

    Attributes:
        lags: Sorted distinct differences, symmetric about zero.
        max_uniform_lag: Largest ``u`` such that every integer in
            ``[-u, u]`` is a lag.
    """

    lags: Tuple[int, ...]
    max_uniform_lag: int

    @property
    def uniform_segment(self) -> Tuple[int, ...]:
        u = self.max_uniform_lag
        return tuple(range(-u, u + 1))

    @property
    def nonneg_uniform(self) -> Tuple[int, ...]:
        return tuple(range(self.max_uniform_lag + 1))

    @property
    def holes(self) -> Tuple[int, ...]:
        """Missing lags inside ``[-max(lags), max(lags)]``."""
        present = set(self.lags)
        top = self.lags[-1]
        return tuple(d for d in range(-top, top + 1) if d not in present)


def difference_coarray(config: ArrayConfig) -> DifferenceCoarray:
    pos = np.asarray(config.positions)
    lags = np.unique(pos[:, None] - pos[None, :])
    present = set(lags.tolist())
    u = 0
    while (u + 1) in present:
        u += 1
    return DifferenceCoarray(tuple(int(d) for d in lags), u)


@dataclass(frozen=True)
class LagMap:
    """Index pairs ``(i, j)`` grouped by lag ``positions[i] - positions[j]``.

    This is the sparse form of the 0/1 selection matrix that sums covariance
    entries sharing a lag. ``counts[d]`` is the coarray weight function.
    """

    size: int
    buckets: Dict[int, Tuple[Tuple[int, int], ...]] = field(repr=False)

    @property
    def lags(self) -> List[int]:
        return sorted(self.buckets)

    @property
    def counts(self) -> Dict[int, int]:
        return {d: len(pairs) for d, pairs in self.buckets.items()}

    def indices(self, lag: int) -> Tuple[np.ndarray, np.ndarray]:
        pairs = self.buckets[lag]
        rows = np.fromiter((p[0] for p in pairs), dtype=int, count=len(pairs))
        cols = np.fromiter((p[1] for p in pairs), dtype=int, count=len(pairs))
        return rows, cols


def lag_map(config: ArrayConfig) -> LagMap:
    pos = config.positions
    buckets: Dict[int, List[Tuple[int, int]]] = {}
    for i, wi in enumerate(pos):
        for j, wj in enumerate(pos):
            buckets.setdefault(wi - wj, []).append((i, j))
    return LagMap(len(pos), {d: tuple(v) for d, v in sorted(buckets.items())})


def coarray_average(cov: np.ndarray, lmap: LagMap, lags: Sequence[int] | None = None) -> np.ndarray:
    """Average covariance entries over each lag bucket.

    Equivalent to applying the pseudo-inverse of the lag selection matrix to
    ``vec(cov)``: its columns are disjoint 0/1 indicators, so the pseudo-inverse
    reduces to a per-lag mean.

    Args:
        cov: ``L x L`` covariance matrix.
        lmap: Lag map of the same array.
        lags: Lags to evaluate, in order. Defaults to every lag in ``lmap``.

    Returns:
        Complex vector with one entry per requested lag.
    """
    cov = np.asarray(cov)
    if cov.shape != (lmap.size, lmap.size):
        raise ValueError(f"covariance shape {cov.shape} does not match array size {lmap.size}")
    if lags is None:
        lags = lmap.lags
    out = np.empty(len(lags), dtype=complex)
    for n, d in enumerate(lags):
        if d not in lmap.buckets:
            raise GeometryError(f"lag {d} is not in the difference coarray")
        rows, cols = lmap.indices(d)
        out[n] = cov[rows, cols].mean()
    return out


def selection_matrix(config: ArrayConfig, lags: Sequence[int] | None = None) -> np.ndarray:
    """Materialized ``L^2 x |lags|`` 0/1 selection matrix (column-major vec).

    Only meant for cross-checking :func:`coarray_average` on small arrays.
    """
    pos = np.asarray(config.positions)
    diff = (pos[:, None] - pos[None, :]).ravel(order="F")
    if lags is None:
        lags = difference_coarray(config).lags
    return (diff[:, None] == np.asarray(lags)[None, :]).astype(float)


def describe(config: ArrayConfig) -> dict:
    """Summary used by the ``geometry`` CLI subcommand."""
    co = difference_coarray(config)
    counts = lag_map(config).counts
    return {
        "label": config.label,
        "positions": list(config.positions),
        "num_sensors": config.size,
        "lags": list(co.lags),
        "holes": list(co.holes),
        "max_uniform_lag": co.max_uniform_lag,
        "uniform_segment": [-co.max_uniform_lag, co.max_uniform_lag],
        "max_resolvable_sources": co.max_uniform_lag,
        "weights": {str(d): counts[d] for d in co.lags},
    }
