"""One-bit quantization and arcsine-law covariance reconstruction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_model import SnapshotMatrix, _axis_index

INV_SQRT2 = 1.0 / np.sqrt(2.0)


@dataclass
class NormalizedCovariance:
    """Unit-diagonal covariance of one dipole axis."""

    matrix: np.ndarray
    axis: str = "x"


def signc(c: np.ndarray) -> np.ndarray:
    """Complex one-bit quantizer; ``sign(0)`` maps to -1."""
    c = np.asarray(c)
    re = np.where(np.real(c) > 0, 1.0, -1.0)
    im = np.where(np.imag(c) > 0, 1.0, -1.0)
    return INV_SQRT2 * (re + 1j * im)


def one_bit_quantize(snapshots: SnapshotMatrix) -> SnapshotMatrix:
    if snapshots.quantized:
        raise ValueError("snapshots are already quantized")
    return SnapshotMatrix(signc(snapshots.x_axis), signc(snapshots.y_axis), quantized=True)


def sample_covariance(snapshots: SnapshotMatrix, axis) -> np.ndarray:
    """``(1/Z) sum_z y(z) y(z)^H`` for one axis.

    For quantized input the product is formed from the integer sign pattern,
    so the diagonal is exactly one. The result is exactly Hermitian.
    """
    y = snapshots.axis(axis)
    z = y.shape[1]
    if snapshots.quantized:
        s = np.sign(y.real) + 1j * np.sign(y.imag)
        return (s @ s.conj().T) / (2.0 * z)
    r = (y @ y.conj().T) / z
    return 0.5 * (r + r.conj().T)


def _check_unit_box(c: np.ndarray, tol: float = 1e-12) -> None:
    if np.any(np.abs(c.real) > 1 + tol) or np.any(np.abs(c.imag) > 1 + tol):
        raise ValueError("arcsine argument has a component outside [-1, 1]")


def arcsine_forward(normalized_cov) -> np.ndarray:
    """Covariance of one-bit data implied by a normalized Gaussian covariance."""
    r = np.asarray(getattr(normalized_cov, "matrix", normalized_cov), dtype=complex)
    _check_unit_box(r)
    re = np.clip(r.real, -1.0, 1.0)
    im = np.clip(r.imag, -1.0, 1.0)
    return (2.0 / np.pi) * (np.arcsin(re) + 1j * np.arcsin(im))


def reconstruct_normalized_covariance(one_bit_cov: np.ndarray, axis: str = "x") -> NormalizedCovariance:
    """Invert the arcsine law entrywise: ``sin(pi/2 Re) + j sin(pi/2 Im)``."""
    r = np.asarray(one_bit_cov, dtype=complex)
    re = np.clip(r.real, -1.0, 1.0)
    im = np.clip(r.imag, -1.0, 1.0)
    out = np.sin(0.5 * np.pi * re) + 1j * np.sin(0.5 * np.pi * im)
    return NormalizedCovariance(out, "x" if _axis_index(axis) == 0 else "y")


def normalize_covariance(cov: np.ndarray, axis: str = "x") -> NormalizedCovariance:
    """Scale a covariance to unit diagonal, ``D^-1/2 R D^-1/2``."""
    cov = np.asarray(cov, dtype=complex)
    d = np.sqrt(np.real(np.diag(cov)))
    if np.any(d <= 0):
        raise ValueError("covariance has a non-positive diagonal entry")
    out = cov / np.outer(d, d)
    np.fill_diagonal(out, 1.0)
    return NormalizedCovariance(out, "x" if _axis_index(axis) == 0 else "y")
