"""Scenario / experiment configuration files.

The format is flat ``key = value`` lines grouped under ``[section]`` headers;
``#`` starts a comment. ``[source]`` may repeat, one block per source. See
``configs/`` in the repository for complete examples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .estimator import METHODS
from .geometry import ArrayConfig, GeometryError, coprime_array, nested_array, ula
from .signal_model import Scenario, ScenarioError, SourceSpec, snr_to_noise_power

SWEEPS = ("none", "snr", "snapshots", "dop")
CRB_MODES = ("average_crb", "average_fim")

_KEYS = {
    "array": {"kind", "l1", "l2", "m", "n", "positions"},
    "scenario": {"snr_db", "noise_power", "snapshots", "seed"},
    "sources": {"thetas", "power", "dop", "polarization", "mode"},
    "source": {"theta", "power", "dop", "polarization", "mode"},
    "experiment": {"sweep", "grid", "methods", "trials", "compute_crb", "crb_mode", "output", "format",
                   "threads"},
}


class ConfigError(ValueError):
    """Malformed or out-of-range configuration; message carries the line number."""


@dataclass
class _Entry:
    value: str
    line: int


@dataclass
class _Section:
    name: str
    line: int
    entries: Dict[str, _Entry] = field(default_factory=dict)


def _read_sections(text: str) -> List[_Section]:
    sections: List[_Section] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in _KEYS:
                raise ConfigError(f"line {lineno}: unknown section [{name}]")
            if name != "source" and any(s.name == name for s in sections):
                raise ConfigError(f"line {lineno}: section [{name}] appears twice")
            sections.append(_Section(name, lineno))
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if not sections:
            raise ConfigError(f"line {lineno}: key outside of any section")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        sec = sections[-1]
        if key not in _KEYS[sec.name]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{sec.name}]")
        if key in sec.entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        sec.entries[key] = _Entry(value, lineno)
    return sections


def _num(entry: _Entry, kind=float):
    try:
        return kind(entry.value)
    except ValueError:
        raise ConfigError(f"line {entry.line}: cannot read {entry.value!r} as {kind.__name__}") from None


def _list(entry: _Entry, kind=float) -> List:
    parts = [p for p in entry.value.replace(",", " ").split() if p]
    try:
        return [kind(p) for p in parts]
    except ValueError:
        raise ConfigError(f"line {entry.line}: cannot read {entry.value!r} as a list of {kind.__name__}") from None


def _bool(entry: _Entry) -> bool:
    v = entry.value.lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"line {entry.line}: expected true/false, got {entry.value!r}")


@dataclass(frozen=True)
class SourceTemplate:
    """A source whose polarization may be redrawn every trial.

    ``dop`` is a ``(low, high)`` range, equal ends meaning fixed. ``polarization``
    is ``("random",)``, ``("jones", varphi, psi)`` or ``("orientation", alpha, beta)``.
    Random polarization draws varphi in [0, pi/2] and psi in (-pi, pi].
    """

    theta_bar: float
    power: float = 1.0
    dop: Tuple[float, float] = (0.0, 1.0)
    polarization: Tuple = ("random",)
    mode: str = "dst"

    def realize(self, rng: np.random.Generator, dop: Optional[float] = None) -> SourceSpec:
        lo, hi = self.dop
        eta = rng.uniform(lo, hi) if lo != hi else lo
        if dop is not None:
            eta = dop
        if self.mode == "sst":
            eta = 1.0
        kind = self.polarization[0]
        if kind == "random":
            varphi = rng.uniform(0.0, math.pi / 2)
            psi = rng.uniform(-math.pi, math.pi)
            return SourceSpec.from_jones(self.theta_bar, varphi, psi, eta, self.power, self.mode)
        if kind == "jones":
            return SourceSpec.from_jones(self.theta_bar, self.polarization[1], self.polarization[2],
                                         eta, self.power, self.mode)
        return SourceSpec(self.theta_bar, self.power, eta, self.polarization[1], self.polarization[2],
                          self.mode)


@dataclass(frozen=True)
class ExperimentSpec:
    array: ArrayConfig
    sources: Tuple[SourceTemplate, ...]
    noise_power: float
    snapshots: int = 200
    seed: int = 0
    sweep: str = "none"
    grid: Tuple[float, ...] = ()
    methods: Tuple[str, ...] = ("ob_music2", "baseline_unquantized")
    trials: int = 100
    compute_crb: bool = False
    crb_mode: str = "average_crb"
    output_path: Optional[str] = None
    output_format: str = "csv"
    threads: int = 1

    def __post_init__(self):
        if self.sweep not in SWEEPS:
            raise ConfigError(f"sweep must be one of {SWEEPS}")
        if self.sweep != "none" and not self.grid:
            raise ConfigError("a sweep needs a non-empty grid")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.crb_mode not in CRB_MODES:
            raise ConfigError(f"crb_mode must be one of {CRB_MODES}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        thetas = [s.theta_bar for s in self.sources]
        if len(set(thetas)) != len(thetas):
            raise ConfigError(f"source DOAs must be distinct, got {thetas}")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")

    @property
    def thetas(self) -> np.ndarray:
        return np.array([s.theta_bar for s in self.sources], dtype=float)

    @property
    def points(self) -> Tuple[Optional[float], ...]:
        return (None,) if self.sweep == "none" else tuple(self.grid)

    def with_overrides(self, **kwargs) -> "ExperimentSpec":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})

    def scenario(self, rng: np.random.Generator, point: Optional[float] = None) -> Scenario:
        """Realize a concrete scenario for one trial at one sweep value (``None``: base values)."""
        noise, snaps, dop = self.noise_power, self.snapshots, None
        if point is None:
            pass
        elif self.sweep == "snr":
            noise = snr_to_noise_power(point)
        elif self.sweep == "snapshots":
            snaps = int(point)
        elif self.sweep == "dop":
            dop = float(point)
        sources = tuple(t.realize(rng, dop) for t in self.sources)
        return Scenario(sources, self.array, noise, snaps, self.seed)


def _parse_array(sec: Optional[_Section]) -> ArrayConfig:
    if sec is None:
        raise ConfigError("missing [array] section")
    e = sec.entries
    if "kind" not in e:
        raise ConfigError(f"line {sec.line}: [array] needs 'kind'")
    kind = e["kind"].value.lower()

    def need(key):
        if key not in e:
            raise ConfigError(f"line {sec.line}: {kind} array needs {key!r}")
        return _num(e[key], int)

    try:
        if kind == "nested":
            return nested_array(need("l1"), need("l2"))
        if kind == "coprime":
            return coprime_array(need("m"), need("n"))
        if kind == "ula":
            return ula(need("n"))
        if kind == "custom":
            if "positions" not in e:
                raise ConfigError(f"line {sec.line}: custom array needs 'positions'")
            return ArrayConfig(tuple(_list(e["positions"], int)), "custom")
    except GeometryError as err:
        raise ConfigError(f"line {sec.line}: {err}") from None
    raise ConfigError(f"line {e['kind'].line}: unknown array kind {kind!r}")


def _parse_dop(entry: Optional[_Entry]) -> Tuple[float, float]:
    if entry is None:
        return (0.0, 1.0)
    words = entry.value.lower().split()
    if words[0] in ("uniform", "random"):
        try:
            lo, hi = (0.0, 1.0) if len(words) == 1 else (float(words[1]), float(words[2]))
        except (ValueError, IndexError):
            raise ConfigError(f"line {entry.line}: expected 'uniform LOW HIGH'") from None
    else:
        lo = hi = _num(entry)
    if not 0.0 <= lo <= hi <= 1.0:
        raise ConfigError(f"line {entry.line}: dop must lie in [0, 1]")
    return (lo, hi)


def _parse_polarization(entry: Optional[_Entry]) -> Tuple:
    if entry is None:
        return ("random",)
    words = entry.value.lower().split()
    if words == ["random"]:
        return ("random",)
    if len(words) == 3 and words[0] in ("jones", "orientation"):
        try:
            return (words[0], float(words[1]), float(words[2]))
        except ValueError:
            pass
    raise ConfigError(f"line {entry.line}: polarization must be 'random', 'jones VARPHI PSI' "
                      f"or 'orientation ALPHA BETA'")


def _templates(sec: _Section, thetas: Sequence[float]) -> List[SourceTemplate]:
    e = sec.entries
    power = _num(e["power"]) if "power" in e else 1.0
    mode = e["mode"].value.lower() if "mode" in e else "dst"
    if mode not in ("dst", "sst"):
        raise ConfigError(f"line {e['mode'].line}: mode must be dst or sst")
    dop = _parse_dop(e.get("dop"))
    pol = _parse_polarization(e.get("polarization"))
    out = []
    for t in thetas:
        if not -0.5 <= t <= 0.5 or not power > 0:
            raise ConfigError(f"line {sec.line}: theta must lie in [-0.5, 0.5] and power be positive")
        out.append(SourceTemplate(t, power, dop, pol, mode))
    return out


def parse_experiment(source) -> ExperimentSpec:
    """Parse config text or a path to a config file into a validated spec."""
    if isinstance(source, Path) or "\n" not in source:
        try:
            text = Path(source).read_text()
        except OSError as err:
            raise ConfigError(f"cannot read config: {err}") from None
    else:
        text = source
    sections = _read_sections(text)
    by_name = {s.name: s for s in sections if s.name != "source"}
    array = _parse_array(by_name.get("array"))

    templates: List[SourceTemplate] = []
    if "sources" in by_name:
        sec = by_name["sources"]
        if "thetas" not in sec.entries:
            raise ConfigError(f"line {sec.line}: [sources] needs 'thetas'")
        templates += _templates(sec, _list(sec.entries["thetas"]))
    for sec in (s for s in sections if s.name == "source"):
        if "theta" not in sec.entries:
            raise ConfigError(f"line {sec.line}: [source] needs 'theta'")
        templates += _templates(sec, [_num(sec.entries["theta"])])
    thetas = [t.theta_bar for t in templates]
    if len(set(thetas)) != len(thetas):
        raise ConfigError(f"source DOAs must be distinct, got {thetas}")

    sc = by_name.get("scenario")
    e = sc.entries if sc else {}
    if "snr_db" in e and "noise_power" in e:
        raise ConfigError(f"line {e['noise_power'].line}: give snr_db or noise_power, not both")
    if "noise_power" in e:
        noise = _num(e["noise_power"])
        if noise < 0:
            raise ConfigError(f"line {e['noise_power'].line}: noise_power must be non-negative")
    else:
        noise = snr_to_noise_power(_num(e["snr_db"]) if "snr_db" in e else 10.0)
    snapshots = _num(e["snapshots"], int) if "snapshots" in e else 200
    if snapshots < 1:
        raise ConfigError(f"line {e['snapshots'].line}: snapshots must be >= 1")
    seed = _num(e["seed"], int) if "seed" in e else 0

    ex = by_name.get("experiment")
    x = ex.entries if ex else {}
    kwargs = {}
    if "sweep" in x:
        kwargs["sweep"] = x["sweep"].value.lower()
        if kwargs["sweep"] not in SWEEPS:
            raise ConfigError(f"line {x['sweep'].line}: sweep must be one of {SWEEPS}")
    if "grid" in x:
        kwargs["grid"] = tuple(_list(x["grid"]))
    if "methods" in x:
        kwargs["methods"] = tuple(m.strip() for m in x["methods"].value.split(",") if m.strip())
        bad = [m for m in kwargs["methods"] if m not in METHODS]
        if bad:
            raise ConfigError(f"line {x['methods'].line}: unknown method(s) {bad}")
    if "trials" in x:
        kwargs["trials"] = _num(x["trials"], int)
        if kwargs["trials"] < 1:
            raise ConfigError(f"line {x['trials'].line}: trials must be >= 1")
    if "compute_crb" in x:
        kwargs["compute_crb"] = _bool(x["compute_crb"])
    if "crb_mode" in x:
        kwargs["crb_mode"] = x["crb_mode"].value.lower()
        if kwargs["crb_mode"] not in CRB_MODES:
            raise ConfigError(f"line {x['crb_mode'].line}: crb_mode must be one of {CRB_MODES}")
    if "output" in x:
        kwargs["output_path"] = x["output"].value
    if "format" in x:
        kwargs["output_format"] = x["format"].value.lower()
        if kwargs["output_format"] not in ("csv", "json"):
            raise ConfigError(f"line {x['format'].line}: format must be csv or json")
    if "threads" in x:
        kwargs["threads"] = _num(x["threads"], int)
    try:
        return ExperimentSpec(array, tuple(templates), noise, snapshots, seed, **kwargs)
    except (ScenarioError, GeometryError) as err:
        raise ConfigError(str(err)) from None
