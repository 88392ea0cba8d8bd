"""Cramér-Rao bounds on normalized DOAs for one-bit and unquantized cross-dipole data.

Deterministic-signal model: at snapshot ``z`` the noiseless output of dipole
axis ``m`` at sensor ``l`` is

    mu[m, l] = sum_k A[z, k, m] exp(j kappa[z, k, m]) exp(j 2 pi theta_k w_l)

with the dipole gain folded into ``A``. Each snapshot carries its own
amplitudes and phases; the DOAs are shared. Real and imaginary parts of the
measurement are Gaussian with variance ``sigma^2 / 2`` around ``Re mu`` and
``Im mu``; the one-bit data keep only their signs.

Parameter ordering of the full information matrix::

    [theta_1..theta_K, A(z=0), kappa(z=0), A(z=1), kappa(z=1), ...]

where each ``A(z)`` / ``kappa(z)`` block lists ``(k, m)`` pairs row-major:
``A[z,0,x], A[z,0,y], A[z,1,x], ...``. With one snapshot this is the 5K-vector
``[theta, A, kappa]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, log_ndtr

from .geometry import ArrayConfig
from .signal_model import AXES, dipole_gain, dipole_gain_derivative

MAX_CONDITION = 1e12
KINDS = ("one_bit", "unquantized")


class SingularInformationError(np.linalg.LinAlgError):
    """The Fisher information is singular or too ill-conditioned to invert."""


def phi(x):
    """``(1/sqrt(pi)) int_{-inf}^x exp(-t^2) dt = (1 + erf(x)) / 2``."""
    return 0.5 * (1.0 + erf(x))


def weight_omega(x):
    """One-bit information weight ``exp(-2x^2) / (2 pi phi(x) (1 - phi(x)))``.

    Evaluated in log domain so large ``|x|`` decays to 0 instead of 0/0.
    """
    x = np.abs(np.asarray(x, dtype=float))
    s = math.sqrt(2.0) * x
    logw = -2.0 * x * x - math.log(2.0 * math.pi) - log_ndtr(s) - log_ndtr(-s)
    w = np.exp(logw)
    return float(w) if w.ndim == 0 else w


@dataclass
class CrbParams:
    """DOAs plus one realization of per-snapshot amplitudes and phases.

    Attributes:
        thetas: ``(K,)`` normalized DOAs.
        amplitudes: ``(Z, K, 2)`` magnitudes of the gained source components.
        phases: ``(Z, K, 2)`` phases of the same.
        noise_power: Complex noise variance per dipole.
        array: Sensor geometry.
        couple_y_gain: If true, the y amplitude is ``b_y(theta) * const`` so the
            y-dipole gain's DOA dependence enters the DOA derivative. The
            default treats both amplitudes as free parameters.
    """

    thetas: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray
    noise_power: float
    array: ArrayConfig
    couple_y_gain: bool = False

    def __post_init__(self):
        self.thetas = np.atleast_1d(np.asarray(self.thetas, dtype=float))
        k = self.thetas.size
        amp = np.asarray(self.amplitudes, dtype=float)
        ph = np.asarray(self.phases, dtype=float)
        if amp.ndim == 2:
            amp = amp[None]
        if ph.ndim == 2:
            ph = ph[None]
        if amp.shape != ph.shape or amp.shape[1:] != (k, 2):
            raise ValueError(f"amplitudes/phases must be (Z, {k}, 2), got {amp.shape} and {ph.shape}")
        self.amplitudes, self.phases = amp, ph

    @property
    def num_sources(self) -> int:
        return self.thetas.size

    @property
    def num_snapshots(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def num_params(self) -> int:
        return self.num_sources * (1 + 4 * self.num_snapshots)

    @classmethod
    def from_signals(cls, thetas, signals: np.ndarray, noise_power: float, array: ArrayConfig,
                     couple_y_gain: bool = False) -> "CrbParams":
        """Build from raw source field components ``(K, 2, Z)`` by applying dipole gains."""
        thetas = np.asarray(thetas, dtype=float)
        gains = np.stack([np.atleast_1d(dipole_gain(a, thetas)) for a in AXES], axis=-1)  # (K, 2)
        gained = np.transpose(signals, (2, 0, 1)) * gains[None]
        return cls(thetas, np.abs(gained), np.angle(gained), noise_power, array, couple_y_gain)

    def repeated(self, times: int) -> "CrbParams":
        """Same realization tiled ``times`` times along the snapshot axis."""
        return CrbParams(self.thetas, np.tile(self.amplitudes, (times, 1, 1)),
                         np.tile(self.phases, (times, 1, 1)), self.noise_power, self.array,
                         self.couple_y_gain)


@dataclass
class FisherInfo:
    matrix: np.ndarray
    kind: str
    num_sources: int


def _jacobians(params: CrbParams, z: int):
    k = params.num_sources
    w = params.array.as_array()
    nl = w.size
    steer = np.exp(2j * np.pi * np.outer(w, params.thetas))  # (L, K)
    amp, ph = params.amplitudes[z], params.phases[z]  # (K, 2)
    mu = np.zeros(2 * nl, dtype=complex)
    jac = np.zeros((2 * nl, 5 * k), dtype=complex)
    cart = np.zeros((2 * nl, 4 * k), dtype=complex)
    for m in range(2):
        rows = slice(m * nl, (m + 1) * nl)
        unit = steer * np.exp(1j * ph[:, m])[None, :]  # d mu / d A
        term = unit * amp[:, m][None, :]
        mu[rows] = term.sum(axis=1)
        dtheta = 2j * np.pi * w[:, None] * term
        if params.couple_y_gain and m == 1:
            b = np.asarray(dipole_gain("y", params.thetas))
            if np.any(b <= 0):
                raise ValueError("y-gain coupling is undefined at endfire")
            db = dipole_gain_derivative("y", params.thetas)
            dtheta = dtheta + term * (db / b)[None, :]
        jac[rows, :k] = dtheta
        jac[rows, k + m: 3 * k: 2] = unit
        jac[rows, 3 * k + m:: 2] = 1j * term
        # real/imaginary parts of A exp(j kappa): same span as (A, kappa) whenever A > 0
        cart[rows, m: 2 * k: 2] = steer
        cart[rows, 2 * k + m:: 2] = 1j * steer
    return mu, jac, cart


def response_and_derivatives(params: CrbParams, z: int = 0):
    """Noiseless response of snapshot ``z`` and its partials.

    Returns:
        ``(r, i, dr, di)``: real and imaginary parts of the ``2L`` stacked
        responses (x-axis rows first), and ``2L x 5K`` Jacobians with respect
        to the snapshot-local parameters ``[theta, A(z), kappa(z)]``.
    """
    mu, jac, _ = _jacobians(params, z)
    return mu.real, mu.imag, jac.real, jac.imag


def _row_weights(params: CrbParams, mu: np.ndarray, kind: str) -> np.ndarray:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if not params.noise_power > 0:
        raise ValueError("noise power must be positive")
    if kind == "unquantized":
        return np.ones(2 * mu.size)
    sigma = math.sqrt(params.noise_power)
    return weight_omega(np.r_[mu.real, mu.imag] / sigma)


def snapshot_fim(params: CrbParams, z: int, kind: str = "one_bit") -> np.ndarray:
    """``5K x 5K`` information carried by snapshot ``z`` about ``[theta, A(z), kappa(z)]``."""
    mu, jac, _ = _jacobians(params, z)
    wts = _row_weights(params, mu, kind)
    g = np.vstack([jac.real, jac.imag])
    f = (2.0 / params.noise_power) * (g.T * wts) @ g
    return 0.5 * (f + f.T)


def _full_fim(params: CrbParams, kind: str) -> FisherInfo:
    k = params.num_sources
    n = params.num_params
    f = np.zeros((n, n))
    for z in range(params.num_snapshots):
        fz = snapshot_fim(params, z, kind)
        idx = np.r_[np.arange(k), k + 4 * k * z + np.arange(4 * k)]
        f[np.ix_(idx, idx)] += fz
    return FisherInfo(f, kind, k)


def fim_one_bit(params: CrbParams) -> FisherInfo:
    return _full_fim(params, "one_bit")


def fim_unquantized(params: CrbParams) -> FisherInfo:
    return _full_fim(params, "unquantized")


def _equilibrated_condition(f: np.ndarray) -> float:
    d = np.sqrt(np.abs(np.diag(f)))
    if np.any(d == 0):
        return np.inf
    w = np.linalg.eigvalsh(f / np.outer(d, d))
    return np.inf if w[0] <= 0 else w[-1] / w[0]


def crb_extract(info, k: int) -> np.ndarray:
    """First ``k`` diagonal entries of the inverse information matrix.

    Raises:
        SingularInformationError: if the diagonally scaled matrix has condition
            number above ``MAX_CONDITION``.
    """
    f = np.asarray(getattr(info, "matrix", info), dtype=float)
    f = 0.5 * (f + f.T)
    cond = _equilibrated_condition(f)
    if not cond < MAX_CONDITION:
        raise SingularInformationError(f"Fisher information is singular (condition {cond:.3g})")
    e = np.zeros((f.shape[0], k))
    e[:k, :k] = np.eye(k)
    x = np.linalg.solve(f, e)
    return np.diag(x[:k, :k]).copy()


def _projected_information(params: CrbParams, kind: str):
    k = params.num_sources
    total, before = np.zeros((k, k)), np.zeros(k)
    for z in range(params.num_snapshots):
        mu, jac, cart = _jacobians(params, z)
        sw = np.sqrt(_row_weights(params, mu, kind))[:, None]
        g_theta = sw * np.vstack([jac[:, :k].real, jac[:, :k].imag])
        g_nuis = sw * np.vstack([cart.real, cart.imag])
        coef = np.linalg.lstsq(g_nuis, g_theta, rcond=None)[0]
        resid = g_theta - g_nuis @ coef
        total += resid.T @ resid
        before += np.sum(g_theta ** 2, axis=0)
    scale = 2.0 / params.noise_power
    return scale * total, scale * before


def doa_information(params: CrbParams, kind: str = "one_bit") -> np.ndarray:
    """``K x K`` DOA information after eliminating each snapshot's nuisances.

    Per snapshot, the weighted DOA Jacobian is projected off the span of the
    nuisance Jacobian and the residual Gram matrices are summed. Its inverse
    equals the DOA block of the inverse full matrix without forming it.
    """
    return _projected_information(params, kind)[0]


def crb_doa(params: CrbParams, kind: str = "one_bit") -> np.ndarray:
    """Per-source CRB on normalized DOAs, shape ``(K,)``.

    Raises:
        SingularInformationError: if the nuisances absorb (numerically) all of
            some source's DOA information, or the result is ill-conditioned.
    """
    info, before = _projected_information(params, kind)
    # what survives the projection is round-off when the DOA is not identifiable
    if np.any(np.diag(info) <= before / MAX_CONDITION):
        raise SingularInformationError("DOA information is absorbed by the nuisance parameters")
    return crb_extract(info, params.num_sources)
