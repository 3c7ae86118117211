"""Run configuration, tunable thresholds, hashing, and the output manifest.

Every numerical knob of the pipeline lives in ``Thresholds`` with its default
value; configs serialize to canonical JSON so that a config hash identifies a
run and the determinism contract can be checked.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigInvalid

VERSION = "0.1.0"

MODES = ("trace", "interval", "diagram", "chaos", "nquasi", "rank")


@dataclass(frozen=True)
class Thresholds:
    """All tunable tolerances and budgets, with their defaults.

    Lengths are in the units of the ambient space; "periods" are multiples of
    the lattice period scale (2*pi for the default cubic lattice).
    """

    # direction classification / integer searches
    tol_dir: float = 1e-9
    direction_bound: int = 20
    m_max: int = 12
    tol_angle: float = 1e-6
    tol_label: float = 0.05

    # level-line tracing
    h_min: float = 1e-4
    h_max: float = 0.05
    tol_level: float = 1e-9
    tol_close: float = 3e-4
    g_min: float = 1e-7
    g_probe: float = 1e-3
    tol_saddle_level: float = 1e-8
    theta_max: float = 0.15
    max_vertices: int = 4_000_000

    # trajectory classification
    w_max_periods: float = 10.0
    aspect_min: float = 20.0
    l_reg_periods: float = 200.0
    theta_conv: float = 0.05
    l_chaos_periods: float = 1e4

    # open-trajectory search / energy intervals
    d_open_periods: float = 20.0
    open_budget_factor: float = 12.0
    n_shifts: int = 32
    max_seeds: int = 8
    seed_grid: int = 48
    tol_energy: float = 0.02
    bisect_budget: int = 40
    n_levels_scan: int = 33

    # value range / topological rank grids
    value_grid: int = 48
    rank_grid: int = 64

    # sphere sweep probe budgets (lighter than the full classifier)
    sweep_shifts: int = 3
    sweep_seeds: int = 4
    sweep_trace_periods: float = 60.0
    sweep_open_periods: float = 12.0

    # stable sub-interval estimation
    perturb_samples: int = 8
    perturb_angle: float = 1e-3
    perturb_energy: float = 1e-2

    def replace(self, **overrides) -> "Thresholds":
        bad = set(overrides) - {f.name for f in dataclasses.fields(self)}
        if bad:
            raise ConfigInvalid(f"unknown threshold(s): {sorted(bad)}")
        return dataclasses.replace(self, **overrides)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "Thresholds":
        return Thresholds().replace(**d)


@dataclass(frozen=True)
class RunConfig:
    """Fully serializable description of one CLI run."""

    mode: str
    model: str | None = None
    coeffs: str | None = None
    lattice: tuple | None = None          # N row-vectors, None = unit cubic
    dimension: int = 3
    b: tuple | None = None                # field direction, N = 3
    xi: tuple | None = None               # two spanning N-vectors
    level: float | None = None
    levels: tuple | None = None           # (lo, hi, n)
    shift: tuple | None = None
    res: int = 64
    refine: int = 2
    workers: int = 1
    seed: int = 0
    out: str = "out"
    checkpoint: str | None = None
    thresholds: Thresholds = field(default_factory=Thresholds)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigInvalid(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.model is None and self.coeffs is None:
            raise ConfigInvalid("either a built-in model name or a coefficient file is required")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["thresholds"] = self.thresholds.to_dict()
        return d

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        d = dict(d)
        thr = d.pop("thresholds", {})
        known = {f.name for f in dataclasses.fields(RunConfig)}
        bad = set(d) - known
        if bad:
            raise ConfigInvalid(f"unknown config key(s): {sorted(bad)}")
        for key in ("lattice", "b", "xi", "levels", "shift"):
            if d.get(key) is not None:
                d[key] = _to_tuple(d[key])
        return RunConfig(thresholds=Thresholds.from_dict(thr), **d)

    def serialize(self) -> str:
        return canonical_json(self.to_dict())

    @staticmethod
    def parse(text: str) -> "RunConfig":
        try:
            return RunConfig.from_dict(json.loads(text))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigInvalid(str(exc)) from exc

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()


def _to_tuple(x):
    if isinstance(x, (list, tuple)):
        return tuple(_to_tuple(v) for v in x)
    return x


def canonical_json(obj) -> str:
    """Key-sorted compact JSON; stable across dict insertion order."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class Manifest:
    """Provenance record written next to every run's outputs."""

    config_hash: str
    version: str = VERSION
    started: str = ""
    finished: str = ""
    status: str = "incomplete"
    files: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "Manifest":
        return Manifest(**json.loads(text))

    def record_file(self, path, name=None):
        self.files[name or str(path)] = sha256_file(path)
