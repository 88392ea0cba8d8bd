"""Polarized EM sources and cross-dipole array snapshots.

Each cross-dipole has an x-oriented and a y-oriented dipole. For a source at
normalized direction ``theta_bar = sin(theta) / 2`` the x dipole sees gain -1
and the y dipole sees ``cos(theta) = sqrt(1 - 4 theta_bar^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .geometry import ArrayConfig

AXES = ("x", "y")


class ScenarioError(ValueError):
    """Raised for inconsistent source or scenario parameters."""


def _axis_index(axis) -> int:
    if axis == "x" or axis == 0:
        return 0
    if axis == "y" or axis == 1:
        return 1
    raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")


def jones_vector(varphi: float, psi: float) -> np.ndarray:
    """Normalized Jones vector ``[cos(varphi), sin(varphi) exp(j psi)]``."""
    return np.array([math.cos(varphi), math.sin(varphi) * np.exp(1j * psi)])


def _rotation(alpha: float) -> np.ndarray:
    c, s = math.cos(alpha), math.sin(alpha)
    return np.array([[c, s], [-s, c]])


def _ellipticity(beta: float) -> np.ndarray:
    return np.array([math.cos(beta), 1j * math.sin(beta)])


def jones_to_orientation(varphi: float, psi: float) -> Tuple[float, float]:
    """Convert auxiliary angles (varphi, psi) to orientation/ellipticity (alpha, beta).

    Both describe the same polarization ellipse; the match is made through the
    normalized Stokes parameters, so ``Q(alpha) w(beta)`` equals the Jones
    vector up to a global phase.
    """
    s1 = math.cos(2 * varphi)
    s2 = math.sin(2 * varphi) * math.cos(psi)
    s3 = math.sin(2 * varphi) * math.sin(psi)
    beta = 0.5 * math.asin(max(-1.0, min(1.0, s3)))
    alpha = 0.5 * math.atan2(-s2, s1)
    return alpha, beta


@dataclass(frozen=True)
class SourceSpec:
    """One far-field EM source.

    Attributes:
        theta_bar: Normalized DOA in [-1/2, 1/2].
        power: Total power p^2 across both polarization components.
        dop: Degree of polarization eta in [0, 1].
        alpha: Polarization orientation angle in [-pi/2, pi/2].
        beta: Polarization ellipticity angle in [-pi/4, pi/4].
        mode: ``"dst"`` (two streams) or ``"sst"`` (one stream, fully polarized).
    """

    theta_bar: float
    power: float = 1.0
    dop: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    mode: str = "dst"

    def __post_init__(self):
        if not -0.5 <= self.theta_bar <= 0.5:
            raise ScenarioError(f"theta_bar={self.theta_bar} outside [-1/2, 1/2]")
        if not self.power > 0:
            raise ScenarioError(f"source power must be positive, got {self.power}")
        if not 0.0 <= self.dop <= 1.0:
            raise ScenarioError(f"dop={self.dop} outside [0, 1]")
        if not -math.pi / 2 - 1e-12 <= self.alpha <= math.pi / 2 + 1e-12:
            raise ScenarioError(f"alpha={self.alpha} outside [-pi/2, pi/2]")
        if not -math.pi / 4 - 1e-12 <= self.beta <= math.pi / 4 + 1e-12:
            raise ScenarioError(f"beta={self.beta} outside [-pi/4, pi/4]")
        if self.mode not in ("dst", "sst"):
            raise ScenarioError(f"mode must be 'dst' or 'sst', got {self.mode!r}")
        if self.mode == "sst" and self.dop != 1.0:
            raise ScenarioError("single-stream sources are completely polarized (dop=1)")

    @classmethod
    def from_jones(cls, theta_bar: float, varphi: float, psi: float, dop: float = 1.0,
                   power: float = 1.0, mode: Optional[str] = None) -> "SourceSpec":
        """Build a source whose polarized part has Jones vector (varphi, psi)."""
        if not 0.0 <= varphi <= math.pi / 2:
            raise ScenarioError(f"varphi={varphi} outside [0, pi/2]")
        alpha, beta = jones_to_orientation(varphi, psi)
        if mode is None:
            mode = "sst" if dop == 1.0 else "dst"
        return cls(theta_bar, power, dop, alpha, beta, mode)


@dataclass(frozen=True)
class SourceCovariance:
    matrix: np.ndarray
    power: float


def source_covariance(spec: SourceSpec) -> SourceCovariance:
    """2x2 covariance of the source's (x, y) field components.

    Sum of a completely polarized part with power ``p^2 eta`` and an
    unpolarized part with power ``p^2 (1 - eta)``.
    """
    e = _rotation(spec.alpha) @ _ellipticity(spec.beta)
    pc = spec.power * spec.dop
    pu = spec.power * (1.0 - spec.dop)
    r = pc * np.outer(e, e.conj()) + 0.5 * pu * np.eye(2)
    return SourceCovariance(r, spec.power)


def dop(cov) -> float:
    """Degree of polarization ``sqrt(1 - 4 det(R) / trace(R)^2)``.

    Evaluated as the eigenvalue gap over the trace, which is the same quantity
    without the cancellation near ``eta = 0``.
    """
    r = np.asarray(getattr(cov, "matrix", cov))
    tr = np.trace(r).real
    if tr <= 0:
        raise ValueError("covariance trace must be positive")
    gap = math.hypot((r[0, 0] - r[1, 1]).real, 2.0 * abs(r[0, 1]))
    return min(1.0, gap / tr)


def dipole_gain(axis, theta_bar) -> np.ndarray | float:
    """Cross-dipole response on one axis; -1 on x and ``cos(arcsin(2 theta_bar))`` on y."""
    t = np.asarray(theta_bar, dtype=float)
    if np.any(np.abs(t) > 0.5 + 1e-12):
        raise ScenarioError("theta_bar outside [-1/2, 1/2]")
    if _axis_index(axis) == 0:
        g = -np.ones_like(t)
    else:
        g = np.sqrt(np.clip(1.0 - 4.0 * t ** 2, 0.0, None))
    return float(g) if g.ndim == 0 else g


def dipole_gain_derivative(axis, theta_bar) -> np.ndarray:
    """Derivative of :func:`dipole_gain` with respect to theta_bar."""
    t = np.asarray(theta_bar, dtype=float)
    if _axis_index(axis) == 0:
        return np.zeros_like(t)
    return -4.0 * t / np.sqrt(1.0 - 4.0 * t ** 2)


def steering_vector(config: ArrayConfig, theta_bar: float) -> np.ndarray:
    return np.exp(2j * np.pi * theta_bar * config.as_array())


def steering_matrix(config: ArrayConfig, thetas: Sequence[float]) -> np.ndarray:
    """``L x K`` matrix of steering vectors."""
    return np.exp(2j * np.pi * np.outer(config.as_array(), np.asarray(thetas, dtype=float)))


def snr_to_noise_power(snr_db: float) -> float:
    """Noise power for unit-power sources: ``SNR = 10 log10(1 / (2 sigma^2))``."""
    return 1.0 / (2.0 * 10.0 ** (snr_db / 10.0))


def noise_power_to_snr(noise_power: float) -> float:
    return 10.0 * math.log10(1.0 / (2.0 * noise_power))


@dataclass(frozen=True)
class Scenario:
    sources: Tuple[SourceSpec, ...]
    array: ArrayConfig
    noise_power: float
    snapshots: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        thetas = [s.theta_bar for s in self.sources]
        if len(set(thetas)) != len(thetas):
            raise ScenarioError(f"source DOAs must be distinct, got {thetas}")
        if self.noise_power < 0:
            raise ScenarioError("noise power must be non-negative")
        if self.snapshots < 1:
            raise ScenarioError("need at least one snapshot")

    @property
    def thetas(self) -> np.ndarray:
        return np.array([s.theta_bar for s in self.sources], dtype=float)

    @property
    def num_sources(self) -> int:
        return len(self.sources)


@dataclass
class SnapshotMatrix:
    """Per-axis measurements, each ``L x Z``."""

    x_axis: np.ndarray
    y_axis: np.ndarray
    quantized: bool = False

    def __post_init__(self):
        self.x_axis = np.atleast_2d(np.asarray(self.x_axis, dtype=complex))
        self.y_axis = np.atleast_2d(np.asarray(self.y_axis, dtype=complex))
        if self.x_axis.shape != self.y_axis.shape:
            raise ValueError(f"axis shapes differ: {self.x_axis.shape} vs {self.y_axis.shape}")

    @property
    def num_sensors(self) -> int:
        return self.x_axis.shape[0]

    @property
    def num_snapshots(self) -> int:
        return self.x_axis.shape[1]

    def axis(self, axis) -> np.ndarray:
        return self.x_axis if _axis_index(axis) == 0 else self.y_axis

    def scaled(self, c: float) -> "SnapshotMatrix":
        return SnapshotMatrix(c * self.x_axis, c * self.y_axis, self.quantized)


def circular_gaussian(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian samples; real and imaginary parts have variance/2 each."""
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def source_signals(sources: Sequence[SourceSpec], snapshots: int, rng: np.random.Generator) -> np.ndarray:
    """Field components of every source, shape ``(K, 2, Z)``.

    Each source is an orthonormal polarization basis applied to two independent
    unit-power streams scaled by the basis powers (eigen-decomposition of the
    source covariance); a single-stream source has one zero power.
    """
    k = len(sources)
    g = circular_gaussian(rng, (k, 2, snapshots))
    out = np.empty_like(g)
    for n, spec in enumerate(sources):
        lam, basis = np.linalg.eigh(source_covariance(spec).matrix)
        out[n] = basis @ (np.sqrt(np.clip(lam, 0.0, None))[:, None] * g[n])
    return out


def measure(array: ArrayConfig, thetas: Sequence[float], signals: np.ndarray,
            noise_power: float, rng: np.random.Generator) -> SnapshotMatrix:
    """Apply steering and dipole gains to source signals and add noise."""
    thetas = np.asarray(thetas, dtype=float)
    a = steering_matrix(array, thetas)
    z = signals.shape[-1]
    noise = circular_gaussian(rng, (2, array.size, z), noise_power)
    axes = []
    for m in range(2):
        gains = dipole_gain(AXES[m], thetas)
        sig = np.asarray(gains).reshape(-1, 1) * signals[:, m, :] if len(thetas) else np.zeros((0, z))
        axes.append(a @ sig + noise[m])
    return SnapshotMatrix(axes[0], axes[1], quantized=False)


def generate_snapshots(scenario: Scenario, rng: Optional[np.random.Generator] = None) -> SnapshotMatrix:
    if rng is None:
        rng = np.random.default_rng(scenario.seed)
    signals = source_signals(scenario.sources, scenario.snapshots, rng)
    return measure(scenario.array, scenario.thetas, signals, scenario.noise_power, rng)


def axis_powers(sources: Sequence[SourceSpec]) -> np.ndarray:
    """``(K, 2)`` diagonal entries ``r_{k,11}, r_{k,22}`` of the source covariances."""
    if not sources:
        return np.zeros((0, 2))
    return np.array([np.diag(source_covariance(s).matrix).real for s in sources])


def exact_covariance(array: ArrayConfig, sources: Sequence[SourceSpec], noise_power: float,
                     axis) -> np.ndarray:
    """Infinite-snapshot covariance ``A P_m A^H + sigma^2 I`` of one axis."""
    m = _axis_index(axis)
    thetas = np.array([s.theta_bar for s in sources], dtype=float)
    a = steering_matrix(array, thetas)
    p = axis_powers(sources)[:, m] * np.asarray(dipole_gain(AXES[m], thetas)) ** 2 if sources else np.zeros(0)
    return (a * p) @ a.conj().T + noise_power * np.eye(array.size)


def total_axis_power(sources: Sequence[SourceSpec], noise_power: float, axis) -> float:
    """Per-sensor received power on one axis (all diagonal entries are equal)."""
    m = _axis_index(axis)
    if not sources:
        return noise_power
    thetas = np.array([s.theta_bar for s in sources])
    p = axis_powers(sources)[:, m] * np.asarray(dipole_gain(AXES[m], thetas)) ** 2
    return float(p.sum() + noise_power)


def power_loss_db(eta: float, varphi: float, theta_bar: float = 0.0, which: str = "x") -> float:
    """Fraction of source power lost by a single-axis or axis-summed receiver, in dB.

    ``x`` and ``y`` use the share of power on that axis; ``sum`` adds the y share
    weighted by the squared y-dipole gain at ``theta_bar``.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta outside [0, 1]")
    px = (1.0 - eta) / 2.0 + eta * math.cos(varphi) ** 2
    py = (1.0 - eta) / 2.0 + eta * math.sin(varphi) ** 2
    if which == "x":
        share = px
    elif which == "y":
        share = py
    elif which == "sum":
        share = px + dipole_gain("y", theta_bar) ** 2 * py
    else:
        raise ValueError(f"which must be 'x', 'y' or 'sum', got {which!r}")
    return -10.0 * math.log10(share)
