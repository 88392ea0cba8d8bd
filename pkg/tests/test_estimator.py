import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obdoa.estimator import (CoarrayCovariance, CoarrayGeometry, CoarrayMeasurement, EstimationError,
                             baseline_covariance, baseline_unquantized, coarray_covariance,
                             coarray_measurement, music_spectrum, ob_music1, ob_music2, root_music,
                             run_method, spectrum_peaks, sum_covariance)
from obdoa.geometry import ArrayConfig, GeometryError, coprime_array, difference_coarray, nested_array, ula
from obdoa.quantize import (NormalizedCovariance, arcsine_forward, normalize_covariance, one_bit_quantize,
                            reconstruct_normalized_covariance)
from obdoa.signal_model import (Scenario, SourceSpec, exact_covariance, generate_snapshots,
                                snr_to_noise_power, steering_vector)

NESTED = nested_array(3, 3)
COPRIME = coprime_array(2, 3)


def exact_coarray_cov(thetas, size, powers=None, noise=0.0):
    """Toeplitz coarray covariance built directly from the line-spectrum model."""
    thetas = np.asarray(thetas, dtype=float)
    powers = np.ones_like(thetas) if powers is None else np.asarray(powers)
    v = np.exp(2j * np.pi * np.outer(np.arange(size), thetas))
    return CoarrayCovariance((v * powers) @ v.conj().T + noise * np.eye(size))


def is_toeplitz_hermitian(m, tol=1e-12):
    n = m.shape[0]
    d = np.subtract.outer(np.arange(n), np.arange(n))
    col = m[:, 0]
    expected = np.where(d >= 0, col[np.abs(d)], col[np.abs(d)].conj())
    return np.allclose(m, expected, atol=tol) and np.allclose(m, m.conj().T, atol=tol)


def random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return a + a.conj().T


# ---- coarray measurement and covariance ----

def test_measurement_single_source():
    theta = 0.23
    v = steering_vector(NESTED, theta)
    meas = coarray_measurement(NormalizedCovariance(np.outer(v, v.conj())), CoarrayGeometry.of(NESTED))
    lags = np.arange(-11, 12)
    npt.assert_allclose(meas.values, np.exp(2j * np.pi * theta * lags), atol=1e-13)


def test_measurement_identity_is_impulse():
    meas = coarray_measurement(np.eye(6), COPRIME)
    expected = np.zeros(15)
    expected[7] = 1
    npt.assert_allclose(meas.values, expected)


@given(st.integers(0, 2**32 - 1))
def test_measurement_conjugate_symmetric(seed):
    meas = coarray_measurement(random_hermitian(np.random.default_rng(seed), 6), COPRIME)
    npt.assert_allclose(meas.values[::-1], meas.values.conj(), atol=1e-12)
    assert meas.at(0).imag == pytest.approx(0, abs=1e-12)


def test_measurement_rejects_degenerate_array():
    with pytest.raises(GeometryError):
        coarray_measurement(np.eye(2), ArrayConfig((0, 5)))


def test_covariance_from_impulse_is_identity():
    vals = np.zeros(9, dtype=complex)
    vals[4] = 1
    npt.assert_array_equal(coarray_covariance(CoarrayMeasurement(vals)).matrix, np.eye(5))


def test_covariance_from_line_is_rank_one():
    theta = -0.31
    lags = np.arange(-7, 8)
    r = coarray_covariance(CoarrayMeasurement(np.exp(2j * np.pi * theta * lags))).matrix
    v = np.exp(2j * np.pi * theta * np.arange(8))
    npt.assert_allclose(r, np.outer(v, v.conj()), atol=1e-13)
    w = np.linalg.eigvalsh(r)
    assert np.sum(w > 1e-9) == 1


@given(st.integers(0, 2**32 - 1))
def test_covariance_toeplitz_hermitian(seed):
    rng = np.random.default_rng(seed)
    meas = coarray_measurement(random_hermitian(rng, 6), NESTED)
    r1 = coarray_covariance(meas)
    r2 = coarray_covariance(coarray_measurement(random_hermitian(rng, 6), NESTED))
    assert is_toeplitz_hermitian(r1.matrix)
    assert is_toeplitz_hermitian(sum_covariance(r1, r2).matrix)


def test_sum_covariance_examples():
    r1, r2 = exact_coarray_cov([0.1], 6), exact_coarray_cov([-0.25], 6)
    zero = CoarrayCovariance(np.zeros((6, 6)))
    npt.assert_array_equal(sum_covariance(r1, zero).matrix, r1.matrix)
    npt.assert_array_equal(sum_covariance(r1, r2).matrix, sum_covariance(r2, r1).matrix)
    assert np.linalg.matrix_rank(sum_covariance(r1, r2).matrix, tol=1e-9) == 2
    with pytest.raises(ValueError):
        sum_covariance(r1, exact_coarray_cov([0.1], 5))


# ---- MUSIC ----

def test_spectrum_argmax_single_source():
    grid, p = music_spectrum(exact_coarray_cov([0.2], 12, noise=0.01), 1)
    assert grid[np.argmax(p)] == pytest.approx(0.2, abs=1e-3)


@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_spectrum_positive(seed, k):
    _, p = music_spectrum(random_hermitian(np.random.default_rng(seed), 6), k, np.linspace(-0.5, 0.5, 101))
    assert np.all(p > 0) and np.all(np.isfinite(p))


def test_spectrum_floor_on_exact_null():
    _, p = music_spectrum(exact_coarray_cov([0.0], 4), 1, [0.0])
    assert np.isfinite(p[0]) and p[0] > 1e10


def test_too_many_sources():
    with pytest.raises(EstimationError):
        music_spectrum(np.eye(4), 4)
    with pytest.raises(EstimationError):
        root_music(np.eye(4), 5)


@pytest.mark.parametrize("thetas", [[0.3], [-0.2, 0.25], [0.0]])
def test_root_music_exact(thetas):
    est = root_music(exact_coarray_cov(thetas, 8), len(thetas))
    npt.assert_allclose(est.thetas, sorted(thetas), atol=1e-6)


def test_root_music_zero_angle_is_real_root():
    est = root_music(exact_coarray_cov([0.0], 5, noise=0.1), 1)
    # double roots on the circle limit accuracy to about sqrt(eps)
    assert abs(est.thetas[0]) < 1e-7


@given(st.floats(1e-6, 1e6), st.floats(-0.45, 0.45), st.floats(0.1, 0.4))
@settings(max_examples=50)
def test_music_scale_invariant(c, t0, sep):
    thetas = [t0, (t0 + sep + 0.5) % 1.0 - 0.5]
    cov = exact_coarray_cov(thetas, 8, powers=[1.0, 0.6], noise=0.2)
    scaled = CoarrayCovariance(c * cov.matrix)
    npt.assert_allclose(root_music(scaled, 2).thetas, root_music(cov, 2).thetas, atol=1e-7)
    grid = np.linspace(-0.5, 0.5, 201)
    assert np.argmax(music_spectrum(scaled, 2, grid)[1]) == np.argmax(music_spectrum(cov, 2, grid)[1])


@pytest.mark.parametrize("array", [NESTED, COPRIME], ids=["nested", "coprime"])
def test_exact_identifiability_sweep(array):
    geo = CoarrayGeometry.of(array)
    for k in range(1, geo.max_sources + 1):
        thetas = np.linspace(-0.45, 0.45, k) + (0.013 if k == 1 else 0.0)
        cov = exact_covariance(array, [SourceSpec(t) for t in thetas], 0.0, "x")
        nc = normalize_covariance(cov)
        est = root_music(coarray_covariance(coarray_measurement(nc, geo)), k)
        npt.assert_allclose(est.thetas, np.sort(thetas), atol=1e-6)


def test_spectrum_peaks_picks_largest():
    grid = np.linspace(0, 1, 11)
    spec = np.array([0, 1, 0, 5, 0, 3, 0, 0, 2, 0, 0], dtype=float)
    npt.assert_allclose(spectrum_peaks(grid, spec, 2), [0.3, 0.5])


# ---- pipelines ----

def _scenario(sources, array, snr_db, z):
    return Scenario(tuple(sources), array, snr_to_noise_power(snr_db), z)


def test_ob_music1_single_unpolarized_source():
    geo = CoarrayGeometry.of(NESTED)
    errs = {"x": [], "y": []}
    for trial in range(100):
        sc = _scenario([SourceSpec(0.17, dop=0.0)], NESTED, 10.0, 10_000)
        q = one_bit_quantize(generate_snapshots(sc, np.random.default_rng(trial)))
        for axis in "xy":
            errs[axis].append(abs(ob_music1(q, axis, 1, geo).thetas[0] - 0.17))
    assert np.median(errs["x"]) < 0.01
    assert np.median(errs["y"]) < 0.01


def test_y_polarized_source():
    # all power on the y dipoles: x carries noise only, the sum still works
    src = SourceSpec(0.21, dop=1.0, alpha=math.pi / 2, beta=0.0, mode="sst")
    sc = _scenario([src], NESTED, 10.0, 2000)
    raw = generate_snapshots(sc, np.random.default_rng(4))
    npt.assert_allclose(np.linalg.norm(raw.x_axis) ** 2 / raw.x_axis.size, sc.noise_power, rtol=0.05)
    q = one_bit_quantize(raw)
    assert abs(ob_music1(q, "y", 1, NESTED).thetas[0] - 0.21) < 5e-3
    assert abs(ob_music2(q, 1, NESTED).thetas[0] - 0.21) < 5e-3


def test_baseline_noiseless_source():
    sc = Scenario((SourceSpec(-0.27, dop=0.4, alpha=0.3, beta=0.1),), NESTED, 0.0, 1000)
    est = baseline_unquantized(generate_snapshots(sc, np.random.default_rng(0)), 1, NESTED)
    assert abs(est.thetas[0] + 0.27) < 1e-3


def test_baseline_and_ob_music2_agree_on_exact_covariances():
    geo = CoarrayGeometry.of(NESTED)
    srcs = [SourceSpec(t, dop=0.5, alpha=0.2, beta=-0.3) for t in (-0.3, 0.05, 0.33)]
    noise = 0.3
    base, onebit = [], []
    for axis in "xy":
        cov = exact_covariance(NESTED, srcs, noise, axis)
        nc = normalize_covariance(cov, axis)
        base.append(coarray_covariance(coarray_measurement(nc, geo)))
        rec = reconstruct_normalized_covariance(arcsine_forward(nc), axis)
        onebit.append(coarray_covariance(coarray_measurement(rec, geo)))
    a = root_music(sum_covariance(*base), 3).thetas
    b = root_music(sum_covariance(*onebit), 3).thetas
    npt.assert_allclose(a, b, atol=1e-10)
    npt.assert_allclose(a, [-0.3, 0.05, 0.33], atol=1e-6)


def test_spectrum_resolves_more_sources_than_sensors():
    array = nested_array(5, 5)
    thetas = np.linspace(-0.4, 0.4, 15)
    sc = _scenario([SourceSpec(t) for t in thetas], array, 10.0, 200)
    q = one_bit_quantize(generate_snapshots(sc, np.random.default_rng(0)))
    est = ob_music2(q, 15, array, method="spectrum")
    assert len(est.thetas) == 15
    npt.assert_allclose(est.thetas, thetas, atol=0.01)


def test_pipeline_deterministic():
    sc = _scenario([SourceSpec(t) for t in (-0.2, 0.1, 0.35)], COPRIME, 0.0, 200)
    outs = []
    for _ in range(2):
        raw = generate_snapshots(sc, np.random.default_rng(99))
        q = one_bit_quantize(raw)
        outs.append(np.concatenate([run_method(m, raw, q, 3, COPRIME).thetas
                                    for m in ("ob_music1_x", "ob_music1_y", "ob_music2",
                                              "baseline_unquantized")]))
    npt.assert_array_equal(outs[0], outs[1])


def test_pipeline_input_checks():
    sc = _scenario([SourceSpec(0.1)], ula(4), 10.0, 10)
    raw = generate_snapshots(sc, np.random.default_rng(0))
    with pytest.raises(ValueError):
        ob_music2(raw, 1, ula(4))
    with pytest.raises(ValueError):
        baseline_unquantized(one_bit_quantize(raw), 1, ula(4))
    with pytest.raises(EstimationError):
        ob_music2(one_bit_quantize(raw), 4, ula(4))
    with pytest.raises(ValueError):
        run_method("bogus", raw, one_bit_quantize(raw), 1, ula(4))


def test_summed_measurements_stay_conjugate_symmetric():
    sc = _scenario([SourceSpec(0.1), SourceSpec(-0.3)], COPRIME, 5.0, 300)
    r = baseline_covariance(generate_snapshots(sc, np.random.default_rng(1)), COPRIME).matrix
    assert is_toeplitz_hermitian(r)
