"""Run configuration: JSON blocks mapped onto frozen dataclasses.

Parsing is strict (unknown keys are rejected), ``to_dict`` emits every field,
and ``resolved`` replaces every ``None`` default by its computed value so that a
manifest written from it reproduces the run on its own.
"""

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np

from . import noise as nz
from .errors import ConfigError
from .grid import Grid
from .potential import make_potential, registered_kinds
from .solver import SCHEMES, SolverConfig, default_alpha

EXPERIMENT_KINDS = ("solve", "verify", "converge", "potential-table")
LADDERS = ("lambda", "epsilon", "tau")
MANIFEST_KEY = "manifest"


@dataclass(frozen=True)
class GridSpec:
    extent: tuple = (1.0,)
    nodes: tuple = (32,)

    def build(self):
        return Grid(self.extent, self.nodes)


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "additive"
    modes: Optional[int] = None
    q_decay: float = 1.1
    scale: float = 1.0
    time_profile: str = "constant"
    sigma_kind: str = "tanh"
    L_B: float = 1.0
    sigma0: float = 0.0


@dataclass(frozen=True)
class SolverSpec:
    lam: float = 0.1
    tau: float = 1e-4
    T: float = 0.01
    epsilon: float = 0.0
    m: Optional[int] = None
    alpha: Optional[float] = None
    picard_tol: float = 1e-8
    picard_max: int = 50
    scheme: str = "explicit-drift"
    cfl_c: float = 0.25
    damping: float = 0.0
    method: str = "picard"

    def build(self):
        kw = {f.name: getattr(self, f.name) for f in fields(SolverConfig)}
        return SolverConfig(**kw)


@dataclass(frozen=True)
class InitialSpec:
    kind: str = "sine"
    amplitude: float = 1.0
    mode: tuple = (1,)
    center: Optional[tuple] = None
    width: float = 0.1


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str = "solve"
    paths: int = 16
    output_dir: str = "out"
    seed: int = 0
    workers: int = 1
    snapshot_times: tuple = ()
    dump_noise: bool = False
    table_points: int = 41
    table_max: float = 4.0


@dataclass(frozen=True)
class ConvergeSpec:
    ladder: str = "lambda"
    values: tuple = (0.2, 0.1, 0.05)


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    potential: dict = field(default_factory=lambda: {"kind": "p_power", "p": 3.0})
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    solver: SolverSpec = field(default_factory=SolverSpec)
    initial: InitialSpec = field(default_factory=InitialSpec)
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)
    converge: ConvergeSpec = field(default_factory=ConvergeSpec)

    # -- serialization ---------------------------------------------------------

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - {f.name for f in fields(cls)} - {MANIFEST_KEY}
        if unknown:
            raise ConfigError(f"unknown config blocks: {sorted(unknown)}")
        kw = {}
        for name, typ in (("grid", GridSpec), ("noise", NoiseSpec), ("solver", SolverSpec),
                          ("initial", InitialSpec), ("experiment", ExperimentSpec),
                          ("converge", ConvergeSpec)):
            if name in d:
                kw[name] = _block(typ, d[name], name)
        if "potential" in d:
            if not isinstance(d["potential"], dict) or "kind" not in d["potential"]:
                raise ConfigError("potential block needs a 'kind'")
            kw["potential"] = dict(d["potential"])
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = dict(v) if isinstance(v, dict) else _plain(asdict(v))
        return out

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    # -- validation and resolution ----------------------------------------------

    def validate(self):
        g = self.grid
        if len(g.extent) != len(g.nodes) or len(g.nodes) not in (1, 2):
            raise ConfigError("grid extent/nodes must have equal length 1 or 2")
        try:
            grid = g.build()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        kind = self.potential.get("kind")
        if kind not in registered_kinds():
            raise ConfigError(f"unknown potential kind {kind!r}; known: {registered_kinds()}")
        try:
            make_potential(self.potential, grid.dim)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad potential parameters: {exc}") from exc
        n = self.noise
        if n.kind not in ("none", "additive", "multiplicative"):
            raise ConfigError(f"unknown noise kind {n.kind!r}")
        if n.modes is not None and not 1 <= n.modes <= grid.size:
            raise ConfigError(f"noise.modes must lie in [1, {grid.size}]")
        if n.time_profile not in nz.TIME_PROFILES:
            raise ConfigError(f"unknown time_profile {n.time_profile!r}")
        if n.sigma_kind not in nz.SIGMA_KINDS:
            raise ConfigError(f"unknown sigma_kind {n.sigma_kind!r}")
        if n.q_decay <= 0.5:
            raise ConfigError("q_decay must exceed 1/2 for square-summable weights")
        s = self.solver
        if s.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {s.scheme!r}")
        if s.method not in ("picard", "direct"):
            raise ConfigError("solver.method must be 'picard' or 'direct'")
        if s.m is not None and s.m < 1:
            raise ConfigError("solver.m must be a positive integer")
        if s.picard_max < 1 or s.picard_tol <= 0:
            raise ConfigError("picard_max must be >= 1 and picard_tol > 0")
        try:
            cfg = s.build()
            cfg.steps
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        i = self.initial
        if i.kind not in ("sine", "bump", "zero"):
            raise ConfigError(f"unknown initial kind {i.kind!r}")
        if i.kind == "sine" and len(i.mode) != grid.dim:
            raise ConfigError("initial.mode needs one wave number per axis")
        e = self.experiment
        if e.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {e.kind!r}")
        if e.paths < 1 or e.workers < 1:
            raise ConfigError("paths and workers must be positive")
        if any(not 0 <= t <= s.T for t in e.snapshot_times):
            raise ConfigError("snapshot times must lie in [0, T]")
        c = self.converge
        if c.ladder not in LADDERS or len(c.values) < 1 or any(v <= 0 for v in c.values):
            raise ConfigError("converge needs a known ladder and positive values")

    def resolved(self):
        """Copy with every None default replaced by its computed value."""
        grid = self.grid.build()
        modes = nz.default_modes(grid) if self.noise.modes is None else self.noise.modes
        cfg = replace(self, noise=replace(self.noise, modes=modes))
        solver = cfg.solver
        if solver.m is None:
            solver = replace(solver, m=nz.default_m(grid.dim))
        if solver.alpha is None:
            B = build_diffusion(cfg, grid)
            alpha = default_alpha(B) if B is not None and B.kind == "multiplicative" else 0.0
            solver = replace(solver, alpha=alpha)
        init = cfg.initial
        if init.center is None:
            init = replace(init, center=tuple(0.5 * e for e in grid.extent))
        return replace(cfg, solver=solver, initial=init)

    def with_seed(self, seed):
        return replace(self, experiment=replace(self.experiment, seed=int(seed)))


def _block(typ, d, name):
    if not isinstance(d, dict):
        raise ConfigError(f"block {name!r} must be an object")
    names = {f.name for f in fields(typ)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    kw = {}
    defaults = typ()
    for k, v in d.items():
        ref = getattr(defaults, k)
        if isinstance(ref, tuple) or k in ("center",):
            if v is not None:
                v = tuple(v) if isinstance(v, (list, tuple)) else (v,)
        elif isinstance(ref, bool):
            if not isinstance(v, bool):
                raise ConfigError(f"{name}.{k} must be a boolean")
        elif isinstance(ref, int) and not isinstance(ref, bool):
            if not (isinstance(v, int) and not isinstance(v, bool)):
                raise ConfigError(f"{name}.{k} must be an integer")
        elif isinstance(ref, float):
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ConfigError(f"{name}.{k} must be a finite number")
            v = float(v)
        elif k == "modes" or k == "m":
            if v is not None and not (isinstance(v, int) and not isinstance(v, bool)):
                raise ConfigError(f"{name}.{k} must be an integer or null")
        elif k == "alpha":
            if v is not None and (not isinstance(v, (int, float)) or v < 0):
                raise ConfigError(f"{name}.{k} must be a nonnegative number or null")
            v = None if v is None else float(v)
        kw[k] = v
    try:
        return typ(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {name!r} block: {exc}") from exc


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}", kind="config_not_found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", kind="config_parse_error") from exc
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------------------
# builders


def build_potential(cfg, grid):
    return make_potential(cfg.potential, grid.dim)


def build_wiener(cfg, grid):
    return nz.WienerConfig(grid, cfg.noise.modes, cfg.experiment.seed)


def build_diffusion(cfg, grid, wiener=None):
    n = cfg.noise
    if n.kind == "none":
        return None
    wiener = build_wiener(cfg, grid) if wiener is None else wiener
    if n.kind == "additive":
        return nz.additive(wiener, q_decay=n.q_decay, scale=n.scale, time_profile=n.time_profile)
    return nz.multiplicative(wiener, n.sigma_kind, n.L_B, n.sigma0, q_decay=n.q_decay, scale=n.scale)


def build_initial(cfg, grid):
    i = cfg.initial
    if i.kind == "zero":
        return grid.zeros()
    X = grid.mesh()
    if i.kind == "sine":
        out = i.amplitude * np.ones(grid.shape)
        for x, k, L in zip(X, i.mode, grid.extent):
            out = out * np.sin(k * np.pi * x / L)
        return out
    center = i.center if i.center is not None else tuple(0.5 * e for e in grid.extent)
    r2 = sum((x - c) ** 2 for x, c in zip(X, center))
    return i.amplitude * np.exp(-r2 / (2 * i.width ** 2))
