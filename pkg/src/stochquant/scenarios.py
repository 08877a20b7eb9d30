"""Scenario configuration: YAML files, strict validation and built-in presets.

A scenario file is a nested mapping (see ``docs/config.md``).  Unknown keys
are rejected, every error names the dotted path of the offending field, and
YAML syntax errors report the line number.  ``dump(load(x))`` is a fixed
point: loading fills every default, dumping writes them all back.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import states
from .action import HamiltonianSpec, StochasticParams
from .errors import ConfigurationError
from .numerics import SpatialGrid
from .oracles import width_doubling_time
from .solver import WaveFunction
from .trajectories import EnsembleSetup

# -- schema -------------------------------------------------------------------
# Leaves are (checker, default).  ``REQUIRED`` marks fields without a default.

REQUIRED = object()


def _num(positive=False, nonneg=False, lo=None, hi=None, integer=False):
    def check(v, path):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigurationError(f"{path}: expected a number, got {v!r}")
        if integer and int(v) != v:
            raise ConfigurationError(f"{path}: expected an integer, got {v!r}")
        v = int(v) if integer else float(v)
        if not np.isfinite(v):
            raise ConfigurationError(f"{path}: must be finite")
        if positive and not v > 0:
            raise ConfigurationError(f"{path}: must be > 0, got {v}")
        if nonneg and v < 0:
            raise ConfigurationError(f"{path}: must be >= 0, got {v}")
        if lo is not None and v < lo:
            raise ConfigurationError(f"{path}: must be >= {lo}, got {v}")
        if hi is not None and v > hi:
            raise ConfigurationError(f"{path}: must be <= {hi}, got {v}")
        return v

    return check


def _choice(*options):
    def check(v, path):
        if v not in options:
            raise ConfigurationError(f"{path}: must be one of {list(options)}, got {v!r}")
        return v

    return check


def _vec(item, allow_scalar=True):
    """A scalar or a list of one or two items (one per axis)."""

    def check(v, path):
        if isinstance(v, (list, tuple)):
            if len(v) not in (1, 2):
                raise ConfigurationError(f"{path}: expected 1 or 2 components, got {len(v)}")
            out = [item(x, f"{path}[{i}]") for i, x in enumerate(v)]
            return out[0] if len(out) == 1 else out
        if not allow_scalar:
            raise ConfigurationError(f"{path}: expected a list")
        return item(v, path)

    return check


def _extent(v, path):
    if not isinstance(v, (list, tuple)) or len(v) not in (1, 2):
        raise ConfigurationError(f"{path}: expected a list of [min, max] pairs (one per axis)")
    out = []
    for i, pair in enumerate(v):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigurationError(f"{path}[{i}]: expected [min, max]")
        lo, hi = (_num()(x, f"{path}[{i}]") for x in pair)
        if hi <= lo:
            raise ConfigurationError(f"{path}[{i}]: max must exceed min")
        out.append([lo, hi])
    return out


def _points(v, path):
    if not isinstance(v, (list, tuple)) or len(v) not in (1, 2):
        raise ConfigurationError(f"{path}: expected a list of point counts (one per axis)")
    return [_num(integer=True, lo=8)(x, f"{path}[{i}]") for i, x in enumerate(v)]


def _seed(v, path):
    v = _num(integer=True, nonneg=True)(v, path)
    if v >= 2**64:
        raise ConfigurationError(f"{path}: must fit in 64 bits")
    return v


def _times(v, path):
    if not isinstance(v, (list, tuple)):
        raise ConfigurationError(f"{path}: expected a list of times")
    return [_num(nonneg=True)(x, f"{path}[{i}]") for i, x in enumerate(v)]


def _complex(v, path):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigurationError(f"{path}: complex numbers are [re, im]")
        return [_num()(v[0], path), _num()(v[1], path)]
    return [_num()(v, path), 0.0]


POTENTIALS = {
    "none": {},
    "harmonic": {"omega": (_vec(_num(positive=True)), 1.0), "center": (_vec(_num()), 0.0)},
    "linear": {"force": (_vec(_num()), 0.0)},
    "constant": {"value": (_num(), 0.0)},
}
METRICS = {
    "constant": {},
    "lorentzian": {"alpha": (_num(nonneg=True), 0.1)},
}
VECTOR_POTENTIALS = {
    "none": {},
    "constant": {"value": (_vec(_num()), 0.0)},
    "symmetric_gauge": {"field": (_num(), 0.0)},
}
STATES = {
    "gaussian": {"center": (_vec(_num()), 0.0), "width": (_vec(_num(positive=True)), 1.0), "boost": (_vec(_num()), 0.0)},
    "oscillator": {"n": (_vec(_num(integer=True, nonneg=True)), 0), "omega": (_num(positive=True), 1.0),
                   "center": (_vec(_num()), 0.0)},
    "plane_wave": {"momentum": (_vec(_num()), 0.0)},
    "vortex": {"width": (_num(positive=True), 1.0), "charge": (_num(integer=True), 1)},
    "superposition": {"terms": (None, REQUIRED)},
}

SCHEMA = {
    "name": (lambda v, p: str(v), "custom"),
    "dim": (_choice(1, 2), 1),
    "hamiltonian": {
        "mass": (_vec(_num(positive=True)), 1.0),
        "potential": ("kind", POTENTIALS, "none"),
        "metric": ("kind", METRICS, "constant"),
        "vector_potential": ("kind", VECTOR_POTENTIALS, "none"),
    },
    "grid": {
        "extent": (_extent, REQUIRED),
        "points": (_points, REQUIRED),
        "boundary": (_choice("dirichlet", "periodic"), "dirichlet"),
    },
    "initial": ("kind", STATES, REQUIRED),
    "stochastic": {
        "lambda_mag": (_num(positive=True), 1.0),
        "dt": (_num(positive=True), REQUIRED),
        "flip_prob": (_num(positive=True, hi=1.0), 0.5),
        "seed": (_seed, 0),
    },
    "run": {
        "t_final": (_num(nonneg=True), REQUIRED),
        "snapshots": (_times, None),
        "trajectories": (_num(integer=True, nonneg=True), 10000),
        "workers": (_num(integer=True, lo=1), 1),
    },
}


def _reject_unknown(raw: dict, allowed, path: str):
    extra = sorted(set(raw) - set(allowed))
    if extra:
        where = f"{path}." if path else ""
        raise ConfigurationError(f"unknown key(s) {', '.join(where + k for k in extra)}")


def _validate_kind(raw, kinds: dict, default_kind, path: str):
    if raw is None:
        if default_kind is REQUIRED:
            raise ConfigurationError(f"{path}: missing required section")
        raw = {"kind": default_kind}
    if isinstance(raw, str):
        raw = {"kind": raw}
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: expected a mapping with a 'kind' key")
    kind = raw.get("kind")
    if kind not in kinds:
        raise ConfigurationError(f"{path}.kind: must be one of {sorted(kinds)}, got {kind!r}")
    fields = kinds[kind]
    _reject_unknown(raw, ["kind", *fields], path)
    out = {"kind": kind}
    for key, (check, default) in fields.items():
        sub = f"{path}.{key}"
        if key == "terms":
            out[key] = _validate_terms(raw.get(key), sub)
            continue
        if key not in raw:
            if default is REQUIRED:
                raise ConfigurationError(f"{sub}: missing required field")
            out[key] = default
        else:
            out[key] = check(raw[key], sub)
    return out


def _validate_terms(raw, path):
    if not isinstance(raw, list) or not raw:
        raise ConfigurationError(f"{path}: expected a non-empty list of terms")
    out = []
    for i, term in enumerate(raw):
        sub = f"{path}[{i}]"
        if not isinstance(term, dict):
            raise ConfigurationError(f"{sub}: expected a mapping with 'state' and 'coefficient'")
        _reject_unknown(term, ["state", "coefficient"], sub)
        state = _validate_kind(term.get("state"), {k: v for k, v in STATES.items() if k != "superposition"},
                               REQUIRED, f"{sub}.state")
        out.append({"state": state, "coefficient": _complex(term.get("coefficient", 1.0), f"{sub}.coefficient")})
    return out


def _validate(raw, schema, path=""):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path or 'config'}: expected a mapping")
    _reject_unknown(raw, schema, path)
    out = {}
    for key, rule in schema.items():
        sub = f"{path}.{key}" if path else key
        if isinstance(rule, dict):
            out[key] = _validate(raw.get(key), rule, sub)
        elif rule[0] == "kind":
            out[key] = _validate_kind(raw.get(key), rule[1], rule[2], sub)
        else:
            check, default = rule
            if key not in raw or raw[key] is None:
                if default is REQUIRED:
                    raise ConfigurationError(f"{sub}: missing required field")
                out[key] = copy.deepcopy(default)
            else:
                out[key] = check(raw[key], sub)
    return out


def _cross_check(cfg: dict) -> None:
    dim = cfg["dim"]
    if len(cfg["grid"]["extent"]) != dim or len(cfg["grid"]["points"]) != dim:
        raise ConfigurationError(f"grid: extent and points need {dim} entr{'y' if dim == 1 else 'ies'}")
    if dim == 2 and cfg["hamiltonian"]["metric"]["kind"] != "constant":
        raise ConfigurationError("hamiltonian.metric: only constant metrics are supported in 2D")
    if dim == 1 and cfg["hamiltonian"]["vector_potential"]["kind"] == "symmetric_gauge":
        raise ConfigurationError("hamiltonian.vector_potential: symmetric_gauge needs dim 2")
    if dim == 1 and cfg["initial"]["kind"] == "vortex":
        raise ConfigurationError("initial.kind: vortex needs dim 2")
    run = cfg["run"]
    dt = cfg["stochastic"]["dt"]
    for name, t in [("run.t_final", run["t_final"])] + [(f"run.snapshots[{i}]", t) for i, t in enumerate(run["snapshots"] or [])]:
        k = round(t / dt)
        if abs(k * dt - t) > 1e-9 * max(1.0, t):
            raise ConfigurationError(f"{name}: {t} is not a multiple of stochastic.dt={dt}")
        if t > run["t_final"] + 1e-12:
            raise ConfigurationError(f"{name}: beyond run.t_final")


def validate_config(raw: dict) -> dict:
    cfg = _validate(raw, SCHEMA)
    _cross_check(cfg)
    return cfg


# -- building objects -----------------------------------------------------------

def _axis_values(v, dim):
    return list(np.broadcast_to(np.asarray(v, dtype=float), (dim,)))


def _potential(cfg: dict, dim: int) -> Callable | None:
    kind = cfg["kind"]
    if kind == "none":
        return None
    if kind == "harmonic":
        om = _axis_values(cfg["omega"], dim)
        c = _axis_values(cfg["center"], dim)
        return _Harmonic(om, c)
    if kind == "linear":
        return _Linear(_axis_values(cfg["force"], dim))
    return _Constant(cfg["value"])


class _Harmonic:
    """``sum_i omega_i^2 (q_i - c_i)^2 / 2`` (unit mass scaling applied by the caller)."""

    def __init__(self, omega, center, mass=None):
        self.omega, self.center, self.mass = omega, center, mass

    def __call__(self, *q):
        m = self.mass or [1.0] * len(q)
        return sum(0.5 * m[i] * self.omega[i] ** 2 * (q[i] - self.center[i]) ** 2 for i in range(len(q)))


class _Linear:
    def __init__(self, force):
        self.force = force

    def __call__(self, *q):
        return sum(-self.force[i] * q[i] for i in range(len(q)))


class _Constant:
    def __init__(self, value):
        self.value = value

    def __call__(self, *q):
        return np.full(np.broadcast(*q).shape, self.value)


@dataclass
class Scenario:
    """A validated scenario; ``config`` holds the full normalized mapping."""

    config: dict

    @property
    def name(self) -> str:
        return self.config["name"]

    @property
    def dim(self) -> int:
        return self.config["dim"]

    def grid(self) -> SpatialGrid:
        g = self.config["grid"]
        return SpatialGrid(tuple(tuple(e) for e in g["extent"]), tuple(g["points"]), g["boundary"])

    def params(self) -> StochasticParams:
        s = self.config["stochastic"]
        return StochasticParams(s["lambda_mag"], s["dt"], s["flip_prob"], s["seed"])

    def spec(self) -> HamiltonianSpec:
        h = self.config["hamiltonian"]
        dim = self.dim
        masses = _axis_values(h["mass"], dim)
        pot = _potential(h["potential"], dim)
        if isinstance(pot, _Harmonic):
            pot.mass = masses
        metric = None
        if h["metric"]["kind"] == "lorentzian":
            alpha, m = h["metric"]["alpha"], masses[0]
            metric = lambda q, alpha=alpha, m=m: 1.0 / (m * (1.0 + alpha * q**2))  # noqa: E731
        vec = None
        va = h["vector_potential"]
        if va["kind"] == "constant":
            vals = _axis_values(va["value"], dim)
            vec = tuple((lambda *q, v=v: np.full(np.broadcast(*q).shape, v)) for v in vals)
        elif va["kind"] == "symmetric_gauge":
            b = va["field"]
            vec = (lambda x, y, b=b: -0.5 * b * y + 0 * x, lambda x, y, b=b: 0.5 * b * x + 0 * y)
        return HamiltonianSpec(dim=dim, mass=tuple(masses) if dim == 2 else masses[0], potential=pot,
                               vector_potential=vec, metric=metric, label=self.name)

    def _state(self, cfg: dict, grid: SpatialGrid, lam: float) -> WaveFunction:
        kind = cfg["kind"]
        masses = _axis_values(self.config["hamiltonian"]["mass"], self.dim)
        if kind == "gaussian":
            return states.gaussian(grid, cfg["center"], cfg["width"], cfg["boost"], lam)
        if kind == "oscillator":
            return states.oscillator_eigenstate(grid, cfg["n"], masses[0], cfg["omega"], lam, cfg["center"])
        if kind == "plane_wave":
            return states.plane_wave(grid, cfg["momentum"], lam)
        if kind == "vortex":
            return states.vortex(grid, cfg["width"], cfg["charge"], lam)
        parts = [self._state(t["state"], grid, lam) for t in cfg["terms"]]
        return states.superposition(parts, [complex(*t["coefficient"]) for t in cfg["terms"]])

    def initial_state(self) -> WaveFunction:
        return self._state(self.config["initial"], self.grid(), self.config["stochastic"]["lambda_mag"])

    def setup(self) -> EnsembleSetup:
        return EnsembleSetup(self.spec(), self.grid(), self.params(), self.initial_state(), self.name)

    @property
    def t_final(self) -> float:
        return self.config["run"]["t_final"]

    @property
    def snapshot_times(self) -> list[float]:
        snaps = self.config["run"]["snapshots"]
        return [0.0, self.t_final] if snaps is None else list(snaps)

    @property
    def trajectories(self) -> int:
        return self.config["run"]["trajectories"]

    def with_overrides(self, **dotted: Any) -> "Scenario":
        """Copy with fields replaced; keys are dotted paths or unique leaf names."""
        raw = copy.deepcopy(self.config)
        for key, value in dotted.items():
            path = resolve_key(raw, key)
            node = raw
            for part in path[:-1]:
                node = node[part]
            node[path[-1]] = value
        return Scenario(validate_config(raw))

    def dump(self) -> str:
        return dump(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.config, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def resolve_key(cfg: dict, key: str) -> list[str]:
    parts = key.split(".")
    node = cfg
    ok = True
    for p in parts:
        if isinstance(node, dict) and p in node:
            node = node[p]
        else:
            ok = False
            break
    if ok:
        return parts
    hits = []

    def walk(node, prefix):
        if isinstance(node, dict):
            for k, v in node.items():
                if k == key:
                    hits.append(prefix + [k])
                walk(v, prefix + [k])

    walk(cfg, [])
    if len(hits) != 1:
        raise ConfigurationError(f"cannot resolve config key {key!r}" + (" (ambiguous)" if hits else ""))
    return hits[0]


def loads(text: str, source: str = "<string>") -> Scenario:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark is not None else source
        raise ConfigurationError(f"{where}: YAML parse error: {getattr(exc, 'problem', exc)}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{source}: top level must be a mapping")
    return Scenario(validate_config(raw))


def load_config(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from exc
    return loads(text, str(path))


def dump(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.config, sort_keys=False, default_flow_style=None)


# -- presets --------------------------------------------------------------------

_DOUBLING = width_doubling_time(1.0)

PRESETS: dict[str, dict] = {
    "free_gaussian": {
        "name": "free_gaussian",
        "initial": {"kind": "gaussian", "center": 0.0, "width": 1.0, "boost": 0.0},
        "grid": {"extent": [[-16.0, 16.0]], "points": [1600]},
        "stochastic": {"dt": _DOUBLING / 560},
        "run": {"t_final": _DOUBLING, "trajectories": 100000},
    },
    "boosted_gaussian": {
        "name": "boosted_gaussian",
        "initial": {"kind": "gaussian", "center": 0.0, "width": 1.0, "boost": 1.0},
        "grid": {"extent": [[-20.0, 20.0]], "points": [2000]},
        "stochastic": {"dt": 0.005},
        "run": {"t_final": 2.0, "trajectories": 100000},
    },
    "oscillator_n0": {
        "name": "oscillator_n0",
        "hamiltonian": {"potential": {"kind": "harmonic", "omega": 1.0}},
        "initial": {"kind": "oscillator", "n": 0},
        "grid": {"extent": [[-10.0, 10.0]], "points": [2000]},
        "stochastic": {"dt": 0.001},
        "run": {"t_final": 1.0, "trajectories": 100000},
    },
    "oscillator_n1": {
        "name": "oscillator_n1",
        "hamiltonian": {"potential": {"kind": "harmonic", "omega": 1.0}},
        "initial": {"kind": "oscillator", "n": 1},
        "grid": {"extent": [[-10.0, 10.0]], "points": [2000]},
        "stochastic": {"dt": 0.001},
        "run": {"t_final": 1.0, "trajectories": 100000},
    },
    "superposition_phase": {
        "name": "superposition_phase",
        "initial": {"kind": "superposition", "terms": [
            {"state": {"kind": "gaussian", "center": 2.0, "width": 1.0}, "coefficient": [1.0, 0.0]},
            {"state": {"kind": "gaussian", "center": -2.0, "width": 1.0}, "coefficient": [0.0, 1.0]},
        ]},
        "grid": {"extent": [[-12.0, 12.0]], "points": [2400]},
        "stochastic": {"dt": 0.001},
        "run": {"t_final": 0.5, "snapshots": [0.0, 0.5], "trajectories": 100000},
    },
    "two_free_particles": {
        "name": "two_free_particles",
        "dim": 2,
        "initial": {"kind": "gaussian", "center": [0.0, 0.0], "width": [1.0, 1.0], "boost": [0.5, -0.5]},
        "grid": {"extent": [[-10.0, 10.0], [-10.0, 10.0]], "points": [200, 200]},
        "stochastic": {"dt": 0.005},
        "run": {"t_final": 1.0, "trajectories": 20000},
    },
    "position_dependent_mass": {
        "name": "position_dependent_mass",
        "hamiltonian": {"potential": {"kind": "harmonic", "omega": 1.0},
                        "metric": {"kind": "lorentzian", "alpha": 0.2}},
        "initial": {"kind": "gaussian", "center": 0.5, "width": 0.8, "boost": 0.0},
        "grid": {"extent": [[-10.0, 10.0]], "points": [2000]},
        "stochastic": {"dt": 0.001},
        "run": {"t_final": 1.0, "trajectories": 50000},
    },
    "vortex_2d": {
        "name": "vortex_2d",
        "dim": 2,
        "hamiltonian": {"potential": {"kind": "harmonic", "omega": 1.0}},
        "initial": {"kind": "vortex", "width": 0.7071067811865476, "charge": 1},
        "grid": {"extent": [[-6.0, 6.0], [-6.0, 6.0]], "points": [240, 240]},
        "stochastic": {"dt": 0.002},
        "run": {"t_final": 0.5, "trajectories": 20000},
    },
}

DOCUMENTED = ("free_gaussian", "oscillator_n0", "oscillator_n1", "superposition_phase",
              "two_free_particles", "position_dependent_mass")


def list_scenarios() -> list[str]:
    return list(PRESETS)


def preset(name: str, **overrides) -> Scenario:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown scenario {name!r}; available: {', '.join(PRESETS)}")
    sc = Scenario(validate_config(copy.deepcopy(PRESETS[name])))
    return sc.with_overrides(**overrides) if overrides else sc
