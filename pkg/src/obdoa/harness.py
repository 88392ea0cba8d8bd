"""Monte Carlo runner: MSE sweeps, CRB overlays and quantization-loss tables."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .config import ExperimentSpec
from .crb import CrbParams, SingularInformationError, crb_doa, crb_extract, doa_information
from .estimator import CoarrayGeometry, EstimationError, run_method
from .geometry import GeometryError
from .quantize import one_bit_quantize
from .signal_model import measure, noise_power_to_snr, source_signals

BASELINE = "baseline_unquantized"
BRUTE_FORCE_MAX = 6
CSV_COLUMNS = ("sweep_value", "method", "mse", "mse_db", "trials", "failures", "crb_1bit", "crb_unq",
               "loss_db", "mse_per_source")


def quantization_loss(mse_one_bit: float, mse_unquantized: float) -> float:
    """``10 log10(MSE_one_bit / MSE_unquantized)``."""
    if not (mse_one_bit > 0 and mse_unquantized > 0):
        raise ValueError("both MSE values must be positive")
    return 10.0 * math.log10(mse_one_bit / mse_unquantized)


def match_estimates(estimates: Sequence[float], truth: Sequence[float]) -> np.ndarray:
    """Reorder ``estimates`` to the bijection with ``truth`` minimizing total squared error.

    Exhaustive search for up to ``BRUTE_FORCE_MAX`` sources, Hungarian method above.
    """
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ValueError(f"got {est.size} estimates for {tru.size} sources")
    cost = (est[:, None] - tru[None, :]) ** 2
    if tru.size <= BRUTE_FORCE_MAX:
        perms = np.array(list(itertools.permutations(range(tru.size))), dtype=int).reshape(-1, tru.size)
        best = perms[np.argmin(cost[perms, np.arange(tru.size)].sum(axis=1))]
        return est[best]
    rows, cols = linear_sum_assignment(cost)
    out = np.empty_like(tru)
    out[cols] = est[rows]
    return out


def squared_error(estimates: Sequence[float], truth: Sequence[float]) -> float:
    """Summed squared error over sources after optimal matching."""
    return float(np.sum((match_estimates(estimates, truth) - np.asarray(truth)) ** 2))


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream per trial, shared across sweep values (common random numbers)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


@dataclass
class TrialOutcome:
    errors: Dict[str, Optional[float]]
    crb_one_bit: Optional[float] = None
    crb_unquantized: Optional[float] = None
    info_one_bit: Optional[np.ndarray] = None
    info_unquantized: Optional[np.ndarray] = None


@dataclass
class PointResult:
    sweep_value: Optional[float]
    method: str
    mse: Optional[float]
    trials: int
    failures: int
    crb_one_bit: Optional[float] = None
    crb_unquantized: Optional[float] = None
    loss_db: Optional[float] = None
    num_sources: int = 1

    @property
    def mse_db(self) -> Optional[float]:
        return 10.0 * math.log10(self.mse) if self.mse and self.mse > 0 else None

    @property
    def mse_per_source(self) -> Optional[float]:
        return None if self.mse is None else self.mse / self.num_sources


@dataclass
class ExperimentResult:
    sweep: str
    seed: int
    rows: List[PointResult] = field(default_factory=list)
    crb_failures: int = 0

    def get(self, method: str, sweep_value=None) -> PointResult:
        for r in self.rows:
            if r.method == method and (sweep_value is None or r.sweep_value == sweep_value):
                return r
        raise KeyError((method, sweep_value))


def run_trial(spec: ExperimentSpec, geo: CoarrayGeometry, point, trial: int) -> TrialOutcome:
    rng = trial_rng(spec.seed, trial)
    scenario = spec.scenario(rng, point)
    signals = source_signals(scenario.sources, scenario.snapshots, rng)
    raw = measure(scenario.array, scenario.thetas, signals, scenario.noise_power, rng)
    quantized = one_bit_quantize(raw)
    k = scenario.num_sources
    errors: Dict[str, Optional[float]] = {}
    for name in spec.methods:
        try:
            est = run_method(name, raw, quantized, k, geo)
            errors[name] = squared_error(est.thetas, scenario.thetas)
        except (EstimationError, GeometryError, np.linalg.LinAlgError):
            errors[name] = None
    out = TrialOutcome(errors)
    if spec.compute_crb:
        params = CrbParams.from_signals(scenario.thetas, signals, scenario.noise_power, scenario.array)
        if spec.crb_mode == "average_fim":
            out.info_one_bit = doa_information(params, "one_bit")
            out.info_unquantized = doa_information(params, "unquantized")
        else:
            try:
                out.crb_one_bit = float(np.sum(crb_doa(params, "one_bit")))
                out.crb_unquantized = float(np.sum(crb_doa(params, "unquantized")))
            except np.linalg.LinAlgError:
                pass
    return out


def _mean(values) -> Optional[float]:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def _crb_of_mean_information(chunk, k: int):
    """Summed CRB from the trial-averaged DOA information (``average_fim`` mode)."""
    try:
        return tuple(float(np.sum(crb_extract(np.mean([getattr(o, attr) for o in chunk], axis=0), k)))
                     for attr in ("info_one_bit", "info_unquantized"))
    except SingularInformationError:
        return None, None


def run_experiment(spec: ExperimentSpec, threads: Optional[int] = None) -> ExperimentResult:
    """Run every sweep point and trial; output does not depend on ``threads``."""
    geo = CoarrayGeometry.of(spec.array)
    k = len(spec.sources)
    workers = threads or spec.threads
    result = ExperimentResult(spec.sweep, spec.seed)
    tasks = list(itertools.product(range(len(spec.points)), range(spec.trials)))

    def work(task):
        gi, trial = task
        return run_trial(spec, geo, spec.points[gi], trial)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(work, tasks))
    else:
        outcomes = [work(t) for t in tasks]

    for gi, point in enumerate(spec.points):
        chunk = outcomes[gi * spec.trials:(gi + 1) * spec.trials]
        crb1 = crb0 = None
        if spec.compute_crb and spec.crb_mode == "average_fim":
            crb1, crb0 = _crb_of_mean_information(chunk, k)
            result.crb_failures += crb1 is None
        elif spec.compute_crb:
            crb1 = _mean(o.crb_one_bit for o in chunk)
            crb0 = _mean(o.crb_unquantized for o in chunk)
            result.crb_failures += sum(o.crb_one_bit is None for o in chunk)
        rows = {}
        for name in spec.methods:
            errs = [o.errors[name] for o in chunk]
            ok = [e for e in errs if e is not None]
            rows[name] = PointResult(point, name, _mean(ok), len(ok), len(errs) - len(ok),
                                     crb1, crb0, num_sources=k)
        base = rows.get(BASELINE)
        for name, row in rows.items():
            if name != BASELINE and base is not None and row.mse and base.mse:
                row.loss_db = quantization_loss(row.mse, base.mse)
        result.rows.extend(rows.values())
    return result


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(v)
    return repr(float(v))


def to_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in result.rows:
        w.writerow([_fmt(r.sweep_value), r.method, _fmt(r.mse), _fmt(r.mse_db), r.trials, r.failures,
                    _fmt(r.crb_one_bit), _fmt(r.crb_unquantized), _fmt(r.loss_db), _fmt(r.mse_per_source)])
    return buf.getvalue()


def to_json(result: ExperimentResult, spec: Optional[ExperimentSpec] = None) -> str:
    rows = []
    for r in result.rows:
        d = asdict(r)
        d.pop("num_sources")
        d["mse_db"] = r.mse_db
        d["mse_per_source"] = r.mse_per_source
        rows.append(d)
    doc = {"sweep": result.sweep, "seed": result.seed, "crb_failures": result.crb_failures, "rows": rows}
    if spec is not None:
        doc["scenario"] = {
            "array": list(spec.array.positions),
            "array_kind": spec.array.label,
            "thetas": spec.thetas.tolist(),
            "snapshots": spec.snapshots,
            "snr_db": noise_power_to_snr(spec.noise_power) if spec.noise_power > 0 else None,
            "trials": spec.trials,
            "methods": list(spec.methods),
            "grid": list(spec.grid),
        }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def emit_results(result: ExperimentResult, path, fmt: str = "csv", spec: Optional[ExperimentSpec] = None,
                 metadata: Optional[dict] = None) -> Path:
    """Write the result file, plus a ``.meta.json`` sidecar for run-dependent metadata.

    The result file depends only on (spec, seed); wall time and version
    strings go to the sidecar so reruns stay byte-identical.
    """
    path = Path(path)
    text = to_csv(result) if fmt == "csv" else to_json(result, spec)
    path.write_text(text)
    if metadata is not None:
        Path(str(path) + ".meta.json").write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")
    return path


def read_csv(path) -> List[dict]:
    """Load a result CSV back into row dicts with numeric fields parsed (empty -> None)."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for key, val in rec.items():
                if key == "method":
                    row[key] = val
                elif val == "":
                    row[key] = None
                elif key in ("trials", "failures"):
                    row[key] = int(val)
                else:
                    row[key] = float(val)
            rows.append(row)
    return rows
