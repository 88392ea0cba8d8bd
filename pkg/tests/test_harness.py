import itertools
import json
import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obdoa.config import ConfigError, ExperimentSpec, SourceTemplate, parse_experiment
from obdoa.geometry import nested_array
from obdoa.harness import (emit_results, match_estimates, quantization_loss, read_csv, run_experiment,
                           squared_error, to_csv, to_json, trial_rng)
from obdoa.signal_model import noise_power_to_snr

MINIMAL = """
[array]
kind = nested
l1 = 3
l2 = 3

[source]
theta = 0.1
"""

DEFAULT_SCENARIO = """
# five unit-power sources on the 10-sensor nested array
[array]
kind = nested
l1 = 5
l2 = 5

[scenario]
noise_power = 0.5
snapshots = 200
seed = {seed}

[sources]
thetas = -0.4, -0.2, 0.0, 0.2, 0.4
power = 1
dop = uniform 0 1
polarization = random

[experiment]
sweep = {sweep}
grid = {grid}
methods = ob_music2, baseline_unquantized
trials = {trials}
compute_crb = {crb}
"""


def default_spec(seed=0, sweep="none", grid="", trials=100, crb="false"):
    return parse_experiment(DEFAULT_SCENARIO.format(seed=seed, sweep=sweep, grid=grid, trials=trials, crb=crb))


def brute_force_match(est, truth):
    best = min(itertools.permutations(range(len(truth))),
               key=lambda p: sum((est[p[i]] - truth[i]) ** 2 for i in range(len(truth))))
    return sum((est[best[i]] - truth[i]) ** 2 for i in range(len(truth)))


# ---- loss and matching ----

def test_quantization_loss_examples():
    assert quantization_loss(3.0, 3.0) == 0.0
    assert quantization_loss(10.0, 1.0) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        quantization_loss(0.0, 1.0)
    with pytest.raises(ValueError):
        quantization_loss(1.0, -1.0)


@given(st.lists(st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5)), min_size=1, max_size=7))
@settings(max_examples=200)
def test_matching_is_optimal_bijection(pairs):
    est, truth = [p[0] for p in pairs], [p[1] for p in pairs]
    matched = match_estimates(est, truth)
    assert sorted(matched) == sorted(est)
    assert squared_error(est, truth) == pytest.approx(brute_force_match(est, truth), abs=1e-12)


def test_matching_examples():
    npt.assert_allclose(match_estimates([0.31, -0.09, 0.11], [-0.1, 0.1, 0.3]), [-0.09, 0.11, 0.31])
    assert squared_error([0.0, 0.2], [0.2, 0.0]) == 0.0
    with pytest.raises(ValueError):
        match_estimates([0.1], [0.1, 0.2])


def test_trial_streams_independent_and_reproducible():
    a = trial_rng(3, 0).standard_normal(4)
    npt.assert_array_equal(a, trial_rng(3, 0).standard_normal(4))
    assert not np.allclose(a, trial_rng(3, 1).standard_normal(4))
    assert not np.allclose(a, trial_rng(4, 0).standard_normal(4))


# ---- config parsing ----

def test_minimal_config_defaults():
    spec = parse_experiment(MINIMAL)
    assert spec.array.positions == (1, 2, 3, 4, 8, 12)
    assert spec.trials == 100
    assert spec.snapshots == 200
    assert spec.sweep == "none"
    assert noise_power_to_snr(spec.noise_power) == pytest.approx(10.0)
    assert spec.sources[0].dop == (0.0, 1.0)


def test_default_scenario_snr_formula():
    spec = default_spec()
    assert spec.array.size == 10
    assert noise_power_to_snr(spec.noise_power) == 0.0
    npt.assert_allclose(spec.thetas, [-0.4, -0.2, 0.0, 0.2, 0.4])


def test_config_from_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(MINIMAL)
    assert parse_experiment(path).thetas.tolist() == [0.1]
    assert parse_experiment(str(path)).thetas.tolist() == [0.1]


@pytest.mark.parametrize("text,fragment", [
    (MINIMAL + "\n[source]\ntheta = 0.1\n", "distinct"),
    (MINIMAL.replace("l2 = 3", "l2 = 3\nwidth = 2"), "line 6"),
    (MINIMAL + "\n[bogus]\n", "unknown section"),
    (MINIMAL.replace("kind = nested", "kind = spiral"), "unknown array kind"),
    (MINIMAL.replace("theta = 0.1", "theta = 0.7"), "theta"),
    (MINIMAL + "\n[experiment]\ntrials = 0\n", "trials"),
    (MINIMAL + "\n[experiment]\nsweep = snr\n", "grid"),
    (MINIMAL + "\n[experiment]\nmethods = ob_music3\n", "unknown method"),
    (MINIMAL + "\n[scenario]\nsnr_db = 3\nnoise_power = 1\n", "not both"),
    (MINIMAL.replace("l1 = 3", "l1 = zero"), "line"),
    ("[array]\nkind = coprime\nm = 2\nn = 4\n[source]\ntheta = 0\n", "coprime"),
])
def test_config_errors(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_experiment(text)


def test_missing_config_file():
    with pytest.raises(ConfigError):
        parse_experiment("/nonexistent/path.cfg")


def test_polarization_options_realize():
    rng = np.random.default_rng(0)
    fixed = SourceTemplate(0.1, 2.0, (0.5, 0.5), ("orientation", 0.3, -0.2))
    s = fixed.realize(rng)
    assert (s.power, s.dop, s.alpha, s.beta) == (2.0, 0.5, 0.3, -0.2)
    assert SourceTemplate(0.1, polarization=("jones", 0.0, 0.0)).realize(rng, dop=1.0).alpha == 0.0
    r = SourceTemplate(0.1, dop=(0.2, 0.4)).realize(rng)
    assert 0.2 <= r.dop <= 0.4
    assert SourceTemplate(0.1, mode="sst").realize(rng).dop == 1.0


def test_sweep_points_realize_scenarios():
    spec = default_spec(sweep="dop", grid="0, 0.5, 1", trials=1)
    sc = spec.scenario(trial_rng(0, 0), 0.5)
    assert all(s.dop == 0.5 for s in sc.sources)
    spec = default_spec(sweep="snapshots", grid="50, 100", trials=1)
    assert spec.scenario(trial_rng(0, 0), 50).snapshots == 50


# ---- experiment runner ----

def test_single_point_experiment():
    spec = default_spec(trials=5).with_overrides(methods=("ob_music2",))
    result = run_experiment(spec)
    assert len(result.rows) == 1
    csv_text = to_csv(result)
    assert len(csv_text.strip().splitlines()) == 2
    assert csv_text.splitlines()[0].startswith("sweep_value,method,mse,mse_db,trials,failures,crb_1bit,"
                                               "crb_unq,loss_db")


def test_determinism_across_threads():
    spec = default_spec(sweep="snr", grid="0, 10", trials=6, crb="true")
    outs = {t: to_csv(run_experiment(spec, threads=t)) for t in (1, 3)}
    outs["again"] = to_csv(run_experiment(spec, threads=1))
    assert outs[1] == outs[3] == outs["again"]
    assert to_json(run_experiment(spec, threads=2), spec) == to_json(run_experiment(spec, threads=1), spec)


def test_failures_counted_and_excluded():
    text = MINIMAL.replace("kind = nested\nl1 = 3\nl2 = 3", "kind = ula\nn = 3")
    text += "\n[source]\ntheta = 0.3\n[source]\ntheta = -0.3\n"
    spec = parse_experiment(text).with_overrides(trials=4, methods=("ob_music2",))
    row = run_experiment(spec).rows[0]
    assert row.failures == 4 and row.trials == 0 and row.mse is None


def test_sanity_ordering_default_scenario():
    spec = default_spec(sweep="snr", grid="0, 10", trials=100, crb="true")
    result = run_experiment(spec, threads=4)
    for snr in (0.0, 10.0):
        ob = result.get("ob_music2", snr)
        base = result.get("baseline_unquantized", snr)
        assert 0 <= base.mse <= ob.mse
        assert ob.crb_unquantized <= ob.crb_one_bit
        assert ob.loss_db > 0
    assert result.crb_failures == 0


def test_crb_modes():
    spec = default_spec(sweep="snr", grid="0, 10", trials=8, crb="true")
    per_trial = run_experiment(spec)
    pooled = run_experiment(parse_experiment(DEFAULT_SCENARIO.format(
        seed=0, sweep="snr", grid="0, 10", trials=8, crb="true") + "crb_mode = average_fim\n"))
    for snr in (0.0, 10.0):
        a, b = per_trial.get("ob_music2", snr), pooled.get("ob_music2", snr)
        # the mean of inverses dominates the inverse of the mean
        assert a.crb_one_bit >= b.crb_one_bit * (1 - 1e-12)
        assert a.crb_unquantized >= b.crb_unquantized * (1 - 1e-12)
        assert b.crb_one_bit > b.crb_unquantized
        assert a.mse == b.mse
    with pytest.raises(ConfigError, match="crb_mode"):
        parse_experiment(MINIMAL + "\n[experiment]\ncrb_mode = median\n")


def test_emit_and_reingest(tmp_path):
    spec = default_spec(sweep="snr", grid="0, 5, 10, 15, 20", trials=100)
    result = run_experiment(spec, threads=4)
    path = emit_results(result, tmp_path / "sweep.csv", "csv", spec, {"seed": 0, "wall_time_s": 1.0})
    assert json.loads((tmp_path / "sweep.csv.meta.json").read_text())["seed"] == 0
    rows = read_csv(path)
    for method in spec.methods:
        mse = [r["mse"] for r in rows if r["method"] == method]
        assert len(mse) == 5
        assert all(a > b for a, b in zip(mse, mse[1:])), (method, mse)
    again = emit_results(run_experiment(spec, threads=1), tmp_path / "again.csv", "csv")
    assert again.read_bytes() == path.read_bytes()


def test_json_output(tmp_path):
    spec = default_spec(trials=3)
    path = emit_results(run_experiment(spec), tmp_path / "r.json", "json", spec)
    doc = json.loads(path.read_text())
    assert doc["seed"] == 0 and doc["scenario"]["snr_db"] == 0.0
    assert {r["method"] for r in doc["rows"]} == set(spec.methods)
    assert all(r["mse"] >= 0 for r in doc["rows"])


def test_unwritable_path(tmp_path):
    result = run_experiment(default_spec(trials=1))
    with pytest.raises(OSError):
        emit_results(result, tmp_path / "missing" / "r.csv")
