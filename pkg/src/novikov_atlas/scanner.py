"""Parameter-space searches: open trajectories, energy intervals, sphere sweeps.

The open/closed verdict at a fixed direction and level is a finite-budget
surrogate for unboundedness: a trajectory is OPEN evidence when its extent
exceeds ``d_open`` periods without closing, or when an unbounded complex of
on-level saddles and separatrices is found.  CLOSED_ONLY requires every seed
in every sampled plane to close; UNRESOLVED is the honest leftover.

For rational directions the separatrix level varies with the plane shift, so
sampled shifts almost never land on it; the probe therefore tracks critical
values across the shift family and bisects the shift parameter to land on
on-level saddle configurations exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .classifier import (
    ChaosHint,
    TrajectoryClass,
    TrajectoryTag,
    OrbitType,
    classify_trajectory,
    integer_label,
    orbit_type,
    strip_fit,
    trajectory_diameter,
)
from .config import Thresholds
from .dispersion import DispersionModel, value_range
from .errors import NoLabelWithinBound, NonRationalDirection, SeedProjectionFailed
from .lattice import DirectionTag, Lattice, primitive
from .section import PlaneSection, SectionField, build_section
from .sphere_grid import SphereGrid
from .tracer import (
    SeparatrixComplex,
    Termination,
    Trajectory,
    _saddle_branch_directions,
    build_separatrix_complex,
    find_critical_points,
    find_seeds,
    trace_level_line,
)
from . import _kernels as K


class Verdict(Enum):
    OPEN = "open"
    CLOSED_ONLY = "closed_only"
    UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class OpenResult:
    verdict: Verdict
    witness_kind: str | None = None        # trajectory | complex
    witness_shift: tuple | None = None
    witness_seed: tuple | None = None
    witness: Trajectory | None = None
    max_closed_diameter: float = 0.0
    max_open_extent: float = 0.0
    n_traced: int = 0
    complex_rank: int | None = None        # rank of the witness complex, if known


def _halton(index: int, base: int) -> float:
    f = 1.0
    r = 0.0
    i = index
    while i > 0:
        f /= base
        r += f * (i % base)
        i //= base
    return r


def shift_offsets(section: PlaneSection, n: int, lattice: Lattice) -> list[np.ndarray]:
    """Deterministic shift sample covering the inequivalent parallel planes.

    For a rational 3-d direction the planes repeat with spacing
    2*pi / |sum w_i l_i| along B, so a stratified sample of that interval is
    exhaustive; otherwise a Halton sequence over the reciprocal cell is
    projected onto the normal space.
    """
    nrm = section.normals
    if section.dimension == 3 and section.b_field is not None:
        bhat = nrm[0]
        dc = section.direction_class
        if dc is not None and dc.tag is DirectionTag.RATIONAL:
            span = 2.0 * math.pi / np.linalg.norm(lattice.direct_vector(dc.witness))
        else:
            span = lattice.period_scale
        return [((k + 0.5) / n * span) * bhat for k in range(n)]
    bases = (2, 3, 5, 7)[: lattice.dimension]
    offsets = []
    for k in range(n):
        t = np.array([_halton(k + 1, b) for b in bases], dtype=float)
        p = t @ lattice.reciprocal
        offsets.append((p @ nrm.T) @ nrm)
    return offsets


class DirectionProbe:
    """Cached per-direction machinery: sections, shift samples, saddle table."""

    def __init__(self, model: DispersionModel, direction, thresholds: Thresholds | None = None):
        self.model = model
        self.lattice = model.lattice
        self.thr = thresholds or Thresholds()
        self.section = build_section(
            direction, self.lattice, bound=self.thr.direction_bound, tol_dir=self.thr.tol_dir
        )
        self.period = self.lattice.period_scale
        self._saddle_table = None
        self._shift_cache: dict[int, list] = {}

    @property
    def is_rational(self) -> bool:
        dc = self.section.direction_class
        return dc is not None and dc.tag is DirectionTag.RATIONAL

    def shifts(self, n: int) -> list[np.ndarray]:
        if n not in self._shift_cache:
            self._shift_cache[n] = shift_offsets(self.section, n, self.lattice)
        return self._shift_cache[n]

    def n_shifts_effective(self) -> int:
        # for N = 3 the plane pattern at a non-rational direction is shift
        # independent, so a few samples guard the numerics; for N >= 4 the
        # planes of one direction are genuinely inequivalent and the full
        # sample is mandatory
        if self.lattice.dimension >= 4 or self.is_rational:
            return self.thr.n_shifts
        return min(self.thr.n_shifts, 6)

    # -- rational saddle machinery ------------------------------------------

    def saddle_table(self, n_tau: int = 48):
        """Critical values of the plane field per shift parameter (rational only)."""
        if self._saddle_table is not None:
            return self._saddle_table
        dc = self.section.direction_class
        span = 2.0 * math.pi / np.linalg.norm(self.lattice.direct_vector(dc.witness))
        bhat = self.section.normals[0]
        taus = [(k + 0.5) / n_tau * span for k in range(n_tau)]
        table = []
        for tau in taus:
            vals = self._saddle_values_at(tau * bhat)
            table.append((tau, vals))
        self._saddle_table = (span, table)
        return self._saddle_table

    def _saddle_values_at(self, offset) -> np.ndarray:
        sec = self.section.with_shift(self.section.shift + offset)
        w = 1.2 * self.period
        pts, vals, dets = find_critical_points(
            self.model, sec, (-w, w, -w, w), grid_m=24, thresholds=self.thr
        )
        if len(pts) == 0:
            return np.empty(0)
        return np.sort(vals[dets < 0.0])

    def saddle_crossing(self, level: float, tol: float = 1e-8):
        """Shift offset at which some saddle sits exactly on ``level``, if any."""
        span, table = self.saddle_table()
        best = None
        for k in range(len(table)):
            tau1, v1 = table[k]
            tau2, v2 = table[(k + 1) % len(table)]
            if k + 1 == len(table):
                tau2 += span
            if len(v1) == 0 or len(v2) == 0:
                continue
            j1 = int(np.argmin(np.abs(v1 - level)))
            j2 = int(np.argmin(np.abs(v2 - level)))
            r1 = v1[j1] - level
            r2 = v2[j2] - level
            if abs(r1) <= tol:
                return table[k][0]
            if r1 * r2 <= 0.0:
                lo, hi = tau1, tau2
                rlo = r1
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    vm = self._saddle_values_at(mid * self.section.normals[0])
                    if len(vm) == 0:
                        break
                    rm = vm[int(np.argmin(np.abs(vm - level)))] - level
                    if abs(rm) <= tol:
                        return mid
                    if rlo * rm <= 0.0:
                        hi = mid
                    else:
                        lo, rlo = mid, rm
                best = 0.5 * (lo + hi)
        return best if best is not None else None

    # -- open/closed probing ------------------------------------------------

    def probe_level(
        self,
        level: float,
        n_shifts: int | None = None,
        max_seeds: int | None = None,
        d_open_periods: float | None = None,
        keep_witness: bool = False,
    ) -> OpenResult:
        thr = self.thr
        n_sh = n_shifts if n_shifts is not None else self.n_shifts_effective()
        n_seeds = max_seeds if max_seeds is not None else thr.max_seeds
        d_open = (d_open_periods if d_open_periods is not None else thr.d_open_periods) * self.period
        l_max = thr.open_budget_factor * d_open

        any_unresolved = False
        max_closed = 0.0
        max_extent = 0.0
        n_traced = 0
        win = 1.05 * self.period

        for shift in self.shifts(n_sh):
            sec = self.section.with_shift(self.section.shift + shift)
            fld = SectionField.build(self.model, sec)
            lo = fld.const - float(np.sum(np.abs(fld.amp)))
            hi = fld.const + float(np.sum(np.abs(fld.amp)))
            if not (lo - 1e-12 <= level <= hi + 1e-12):
                continue
            seeds = find_seeds(
                self.model, sec, level, (-win, win, -win, win),
                grid_m=thr.seed_grid, thresholds=thr, _field=fld,
            )
            if not seeds:
                continue
            step = max(1, len(seeds) // n_seeds)
            for seed in seeds[::step][:n_seeds]:
                try:
                    traj = trace_level_line(
                        self.model, sec, level, seed, thresholds=thr,
                        max_arc_length=l_max, _field=fld,
                    )
                except SeedProjectionFailed:
                    continue
                n_traced += 1
                if traj.is_closed:
                    from .classifier import trajectory_diameter

                    max_closed = max(max_closed, trajectory_diameter(traj))
                    continue
                max_extent = max(max_extent, traj.extent)
                if traj.termination is Termination.SADDLE_PROXIMITY:
                    ext, complex_traj = self._singular_extent(sec, fld, level, traj, d_open, l_max)
                    max_extent = max(max_extent, ext)
                    if ext > d_open:
                        return OpenResult(
                            Verdict.OPEN, "complex", tuple(shift), tuple(seed),
                            complex_traj if keep_witness else None,
                            max_closed, max_extent, n_traced,
                        )
                    continue
                if traj.extent > d_open:
                    return OpenResult(
                        Verdict.OPEN, "trajectory", tuple(shift), tuple(seed),
                        traj if keep_witness else None, max_closed, max_extent, n_traced,
                    )
                any_unresolved = True

        if self.is_rational:
            result = self._probe_rational_singular(level, d_open, keep_witness)
            if result is not None:
                return replace(result, max_closed_diameter=max_closed, n_traced=n_traced)

        if any_unresolved:
            return OpenResult(Verdict.UNRESOLVED, None, None, None, None, max_closed, max_extent, n_traced)
        return OpenResult(Verdict.CLOSED_ONLY, None, None, None, None, max_closed, max_extent, n_traced)

    def _singular_extent(self, sec, fld, level, first: Trajectory, d_open, l_max):
        """Union extent of the separatrix complex grown from a saddle hit."""
        thr = self.thr
        delta = 50.0 * thr.h_min
        lo = np.array([np.inf, np.inf])
        hi = -lo
        for v in (first.vertices[:: max(1, len(first.vertices) // 64)], first.saddle_events[:, :2]):
            if len(v):
                lo = np.minimum(lo, v.min(axis=0))
                hi = np.maximum(hi, v.max(axis=0))
        visited = set()
        frontier = [tuple(e[:2]) for e in first.saddle_events]
        budget = 24
        best_traj = first
        while frontier and budget > 0:
            sx, sy = frontier.pop(0)
            keyp = (round(sx, 5), round(sy, 5))
            if keyp in visited:
                continue
            visited.add(keyp)
            try:
                d1, d2 = _saddle_branch_directions(fld, sx, sy)
            except Exception:
                continue
            for d in (d1, -d1, d2, -d2):
                if budget <= 0:
                    break
                budget -= 1
                seed = np.array([sx, sy]) + delta * d
                _f, fx, fy = K.field_grad(fld.kx, fld.ky, fld.amp, fld.phase, fld.const, seed[0], seed[1])
                orient = 1 if (fy * d[0] - fx * d[1]) >= 0 else -1
                try:
                    traj = trace_level_line(
                        self.model, sec, level, seed, thresholds=thr,
                        max_arc_length=l_max, orientation=orient, _field=fld,
                    )
                except SeedProjectionFailed:
                    continue
                v = traj.vertices
                lo = np.minimum(lo, v.min(axis=0))
                hi = np.maximum(hi, v.max(axis=0))
                if traj.extent > best_traj.extent:
                    best_traj = traj
                ext = float(np.linalg.norm(hi - lo))
                if ext > d_open:
                    return ext, best_traj
                for e in traj.saddle_events:
                    keyq = (round(e[0], 5), round(e[1], 5))
                    if keyq not in visited:
                        frontier.append((e[0], e[1]))
        return float(np.linalg.norm(hi - lo)), best_traj

    def _probe_rational_singular(self, level, d_open, keep_witness):
        tau = self.saddle_crossing(level, tol=self.thr.tol_saddle_level)
        if tau is None:
            return None
        offset = tau * self.section.normals[0]
        sec = self.section.with_shift(self.section.shift + offset)
        w = 1.2 * self.period
        try:
            cx = build_separatrix_complex(
                self.model, sec, level, (-w, w, -w, w), thresholds=self.thr,
                saddle_level_tol=max(10.0 * self.thr.tol_saddle_level, 1e-7),
            )
        except Exception:
            return None
        if len(cx.saddles) and not cx.bounded:
            witness = None
            if keep_witness and cx.arcs:
                longest = max(cx.arcs, key=lambda a: len(a.polyline))
                witness = Trajectory(
                    level=float(level), vertices=np.array(longest.polyline),
                    arc_length=float(np.sum(np.linalg.norm(np.diff(longest.polyline, axis=0), axis=1))),
                    termination=Termination.SADDLE_PROXIMITY, orientation=1,
                )
            return OpenResult(Verdict.OPEN, "complex", tuple(offset), None, witness,
                              complex_rank=cx.rank)
        return None


def open_exists(model: DispersionModel, direction, level: float,
                thresholds: Thresholds | None = None, **budget) -> OpenResult:
    """OPEN / CLOSED_ONLY / UNRESOLVED verdict for one direction and level."""
    return DirectionProbe(model, direction, thresholds).probe_level(level, **budget)


# -- energy intervals --------------------------------------------------------


@dataclass(frozen=True)
class EnergyInterval:
    """Range of levels carrying open (possibly singular) level lines."""

    lo: float
    hi: float
    tol: float
    degenerate: bool
    unresolved: bool = False
    boundary_suspect: bool = False
    stable_lo: float | None = None
    stable_hi: float | None = None
    probe_levels: tuple = ()
    probe_verdicts: tuple = ()
    contiguity_ok: bool = True

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)


def _bisect_edge(probe_fn, c_in: float, c_out: float, tol: float):
    """Refine the boundary between an OPEN level and a non-OPEN one."""
    suspect = False
    while abs(c_out - c_in) > tol:
        mid = 0.5 * (c_in + c_out)
        v = probe_fn(mid)
        if v is Verdict.OPEN:
            c_in = mid
        else:
            if v is Verdict.UNRESOLVED:
                suspect = True
            c_out = mid
    return c_in, suspect


def energy_interval(
    model: DispersionModel,
    direction,
    thresholds: Thresholds | None = None,
    tol_energy: float | None = None,
    estimate_stable: bool = False,
    probe: DirectionProbe | None = None,
) -> EnergyInterval:
    """Levels with open level lines for a fixed direction: a closed interval.

    A coarse scan locates OPEN witnesses; bisection refines both endpoints to
    the tolerance.  With no OPEN witness the result is a degenerate interval
    at the best candidate level, marked unresolved.  The scan also asserts
    interval structure on the probe set: no CLOSED_ONLY verdict strictly
    between two OPEN ones.
    """
    thr = thresholds or Thresholds()
    tol = tol_energy if tol_energy is not None else thr.tol_energy
    pr = probe if probe is not None else DirectionProbe(model, direction, thr)
    emin, emax = value_range(model, thr.value_grid)
    margin = 0.01 * (emax - emin)
    levels = np.linspace(emin + margin, emax - margin, thr.n_levels_scan)

    results = [pr.probe_level(float(c)) for c in levels]
    verdicts = [r.verdict for r in results]

    open_idx = [i for i, v in enumerate(verdicts) if v is Verdict.OPEN]
    contiguity_ok = True
    if open_idx:
        for i in range(open_idx[0], open_idx[-1] + 1):
            if verdicts[i] is Verdict.CLOSED_ONLY:
                contiguity_ok = False

    if not open_idx:
        scores = [r.max_open_extent for r in results]
        best = int(np.argmax(scores)) if any(s > 0 for s in scores) else len(levels) // 2
        c0 = float(levels[best])
        return EnergyInterval(
            lo=c0, hi=c0, tol=tol, degenerate=True, unresolved=True,
            probe_levels=tuple(float(c) for c in levels),
            probe_verdicts=tuple(v.value for v in verdicts),
            contiguity_ok=contiguity_ok,
        )

    def probe_fn(c):
        return pr.probe_level(float(c)).verdict

    lo_in = float(levels[open_idx[0]])
    lo_out = float(levels[open_idx[0] - 1]) if open_idx[0] > 0 else float(emin)
    lo, s1 = _bisect_edge(probe_fn, lo_in, lo_out, tol)

    hi_in = float(levels[open_idx[-1]])
    hi_out = float(levels[open_idx[-1] + 1]) if open_idx[-1] + 1 < len(levels) else float(emax)
    hi, s2 = _bisect_edge(probe_fn, hi_in, hi_out, tol)

    stable_lo = stable_hi = None
    if estimate_stable and model.lattice.dimension == 3:
        stable_lo, stable_hi = _stable_subinterval(model, pr, lo, hi, thr)

    return EnergyInterval(
        lo=lo, hi=hi, tol=tol, degenerate=(hi - lo) <= tol,
        boundary_suspect=s1 or s2,
        stable_lo=stable_lo, stable_hi=stable_hi,
        probe_levels=tuple(float(c) for c in levels),
        probe_verdicts=tuple(v.value for v in verdicts),
        contiguity_ok=contiguity_ok,
    )


def _stable_subinterval(model, probe: DirectionProbe, lo, hi, thr: Thresholds):
    """Sampled-perturbation estimate of the stable open-level range."""
    if hi <= lo:
        return None, None
    rng = np.random.default_rng(12345)
    b = probe.section.b_field
    b = b / np.linalg.norm(b)
    levels = np.linspace(lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo), 7)
    passing = []
    for c in levels:
        ok = True
        for _ in range(thr.perturb_samples):
            r = rng.normal(size=3)
            r -= (r @ b) * b
            r /= np.linalg.norm(r)
            b2 = b + thr.perturb_angle * r
            b2 /= np.linalg.norm(b2)
            c2 = float(c + rng.uniform(-thr.perturb_energy, thr.perturb_energy))
            res = open_exists(model, b2, c2, thr, n_shifts=2, max_seeds=4)
            if res.verdict is not Verdict.OPEN:
                ok = False
                break
        if ok:
            passing.append(float(c))
    if not passing:
        return None, None
    return max(lo, min(passing)), min(hi, max(passing))


def level_interval(
    model: DispersionModel,
    xi_span,
    thresholds: Thresholds | None = None,
    tol_energy: float | None = None,
) -> EnergyInterval:
    """Interval of levels with unbounded plane level lines for an N >= 4 direction.

    Identical machinery to the 3-d energy interval, but the shift family is
    mandatory: planes of one direction are sampled across the projected
    fundamental domain.
    """
    if model.lattice.dimension < 4:
        raise ValueError("level_interval is the N >= 4 entry point; use energy_interval for N = 3")
    return energy_interval(model, np.asarray(xi_span, dtype=float), thresholds, tol_energy)


# -- angular diagram sweep ----------------------------------------------------


class CellStatus(Enum):
    ZONE = "zone"
    GAP = "gap"
    CLOSED_ALL = "closed_all"
    UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class DirectionRecord:
    key: tuple                      # (depth, i, j)
    direction: tuple                # unit vector
    status: CellStatus
    dir_tag: str
    label: tuple | None = None
    tclass: str | None = None
    strip_width: float | None = None
    extent: float | None = None
    boundary_suspect: bool = False

    def with_flag(self, flag: bool) -> "DirectionRecord":
        return replace(self, boundary_suspect=flag)


@dataclass(frozen=True)
class StabilityZone:
    label: tuple
    cells: tuple                    # cell keys
    area_fraction: float
    witness_directions: tuple       # a few interior unit vectors
    boundary_directions: tuple      # sample of boundary-cell unit vectors


@dataclass
class AngularDiagram:
    model_name: str
    level: float
    resolution: int
    refine_depth: int
    records: dict                   # key -> DirectionRecord
    zones: list = field(default_factory=list)
    gap_fraction_by_depth: list = field(default_factory=list)
    grid: SphereGrid | None = None

    @property
    def gap_keys(self):
        return [k for k, r in self.records.items() if r.status is CellStatus.GAP]

    def area_fraction(self, keys) -> float:
        total = sum(self.grid.solid_angle(k) for k in self.records)
        if total <= 0:
            return 0.0
        return sum(self.grid.solid_angle(k) for k in keys) / total

    def gap_fraction(self) -> float:
        return self.area_fraction(
            [k for k, r in self.records.items()
             if r.status in (CellStatus.GAP, CellStatus.UNRESOLVED)]
        )


def _sweep_thresholds(thr: Thresholds) -> Thresholds:
    """Lighter budgets for per-cell probes; labels are provisional."""
    return thr.replace(
        l_reg_periods=0.55 * thr.sweep_trace_periods,
        aspect_min=3.0,
        n_shifts=thr.sweep_shifts,
        max_seeds=thr.sweep_seeds,
        d_open_periods=thr.sweep_open_periods,
        seed_grid=32,
    )


def classify_cell_direction(model: DispersionModel, direction, level: float,
                            thresholds: Thresholds) -> dict:
    """Status + provisional label for one sweep direction (worker body)."""
    thr_s = _sweep_thresholds(thresholds)
    probe = DirectionProbe(model, np.asarray(direction, dtype=float), thr_s)
    res = probe.probe_level(level, keep_witness=True)
    dc = probe.section.direction_class
    out = {
        "dir_tag": dc.tag.value if dc is not None else "unknown",
        "status": CellStatus.UNRESOLVED,
        "label": None,
        "tclass": None,
        "strip_width": None,
        "extent": None,
    }
    if res.verdict is Verdict.CLOSED_ONLY:
        out["status"] = CellStatus.CLOSED_ALL
        return out
    if res.verdict is Verdict.UNRESOLVED:
        out["status"] = CellStatus.UNRESOLVED
        return out

    traj = res.witness
    if res.witness_kind == "trajectory" and traj is not None:
        # extend the witness for a steadier direction fit
        sec = probe.section.with_shift(probe.section.shift + np.asarray(res.witness_shift))
        try:
            traj = trace_level_line(
                model, sec, level, traj.vertices[0], thresholds=thr_s,
                max_arc_length=thr_s.sweep_trace_periods * probe.period,
            )
        except SeedProjectionFailed:
            pass
        tc = classify_trajectory(traj, sec, model.lattice, thr_s)
        out["tclass"] = tc.tag.value
        out["strip_width"] = tc.strip_width
        out["extent"] = tc.extent
        if tc.tag in (TrajectoryTag.TOPOLOGICALLY_REGULAR, TrajectoryTag.PERIODIC_OPEN) and tc.label:
            out["status"] = CellStatus.ZONE
            out["label"] = tc.label
        elif tc.tag is TrajectoryTag.CHAOTIC_CANDIDATE:
            out["status"] = CellStatus.GAP
        elif tc.tag is TrajectoryTag.CLOSED:
            out["status"] = CellStatus.UNRESOLVED
        else:
            out["status"] = CellStatus.UNRESOLVED
        return out

    # singular open witness: label from the complex direction when possible
    if traj is not None and len(traj.vertices) >= 8:
        from .classifier import strip_fit

        direction_fit, width, extent = strip_fit(traj)
        out["strip_width"] = width
        out["extent"] = extent
        d_amb = direction_fit @ probe.section.frame
        try:
            out["label"] = integer_label(d_amb, probe.section, model.lattice, thr_s.m_max, thr_s.tol_label)
            out["status"] = CellStatus.ZONE
            out["tclass"] = "singular_open"
        except NoLabelWithinBound:
            out["status"] = CellStatus.GAP
            out["tclass"] = "singular_open"
    else:
        out["status"] = CellStatus.GAP
    return out


def _sweep_chunk(args):
    model, level, thr, items = args
    out = []
    for key, direction in items:
        out.append((key, classify_cell_direction(model, direction, level, thr)))
    return out


def sweep(
    model: DispersionModel,
    level: float,
    resolution: int = 64,
    refine_depth: int = 2,
    thresholds: Thresholds | None = None,
    workers: int = 1,
    checkpoint_path=None,
    config_hash: str = "",
    log=None,
) -> AngularDiagram:
    """Angular diagram: classify directions over the sphere with refinement.

    Cells whose neighborhood disagrees (status or label), plus all gap and
    unresolved cells, are split and re-probed at each refinement depth.  The
    result is deterministic for a fixed configuration; a checkpoint file, when
    given, allows resuming by completed depth.
    """
    from . import reports

    thr = thresholds or Thresholds()
    grid = SphereGrid(resolution)
    records: dict = {}
    gap_by_depth = []

    done_depth = -1
    if checkpoint_path is not None:
        loaded = reports.load_checkpoint(checkpoint_path, config_hash)
        if loaded is not None:
            done_depth, records, leaves, gap_by_depth = loaded
            grid.leaves = leaves

    for depth in range(refine_depth + 1):
        if depth <= done_depth:
            continue
        todo = sorted(k for k in grid.leaves if k not in records)
        if log:
            log(f"depth {depth}: classifying {len(todo)} cells")
        items = [(k, tuple(grid.center(k))) for k in todo]
        results = _run_items(model, level, thr, items, workers)
        for key, data in results:
            records[key] = DirectionRecord(
                key=key,
                direction=tuple(grid.center(key)),
                status=data["status"],
                dir_tag=data["dir_tag"],
                label=data["label"],
                tclass=data["tclass"],
                strip_width=data["strip_width"],
                extent=data["extent"],
            )
        diagram_now = AngularDiagram(model.name, float(level), resolution, depth, records, grid=grid)
        gap_by_depth.append(diagram_now.gap_fraction())
        if checkpoint_path is not None:
            reports.save_checkpoint(checkpoint_path, config_hash, depth, records, grid.leaves, gap_by_depth)
        if depth == refine_depth:
            break
        targets = _refine_targets(grid, records)
        if log:
            log(f"depth {depth}: refining {len(targets)} cells")
        for k in targets:
            grid.split(k)
            records.pop(k, None)

    records = {k: r for k, r in records.items() if k in grid.leaves}
    _flag_boundaries(grid, records)
    diagram = AngularDiagram(
        model.name, float(level), resolution, refine_depth, records,
        gap_fraction_by_depth=gap_by_depth, grid=grid,
    )
    diagram.zones = extract_zones(diagram)
    return diagram


def _run_items(model, level, thr, items, workers):
    if workers <= 1 or len(items) < 32:
        return _sweep_chunk((model, level, thr, items))
    chunks = max(workers * 4, 1)
    size = (len(items) + chunks - 1) // chunks
    tasks = [(model, level, thr, items[i : i + size]) for i in range(0, len(items), size)]
    results = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_sweep_chunk, tasks):
            results.extend(part)
    return results


def _refine_targets(grid: SphereGrid, records) -> list:
    targets = set()
    for key in grid.leaves:
        rec = records.get(key)
        if rec is None:
            continue
        if rec.status in (CellStatus.GAP, CellStatus.UNRESOLVED):
            targets.add(key)
            continue
        for nb in grid.neighbors(key):
            nrec = records.get(nb)
            if nrec is None:
                continue
            if nrec.status is not rec.status or nrec.label != rec.label:
                targets.add(key)
                break
    return sorted(targets)


def _flag_boundaries(grid: SphereGrid, records):
    for key in sorted(records):
        rec = records[key]
        for nb in grid.neighbors(key):
            nrec = records.get(nb)
            if nrec is not None and (nrec.status is not rec.status or nrec.label != rec.label):
                records[key] = rec.with_flag(True)
                break


def extract_zones(diagram: AngularDiagram) -> list[StabilityZone]:
    """Connected same-label components of the ZONE cells."""
    grid = diagram.grid
    zone_keys = {k for k, r in diagram.records.items() if r.status is CellStatus.ZONE}
    seen = set()
    zones = []
    for start in sorted(zone_keys):
        if start in seen:
            continue
        label = diagram.records[start].label
        comp = []
        stack = [start]
        seen.add(start)
        while stack:
            k = stack.pop()
            comp.append(k)
            for nb in grid.neighbors(k):
                if nb in zone_keys and nb not in seen and diagram.records[nb].label == label:
                    seen.add(nb)
                    stack.append(nb)
        comp.sort()
        interior = [k for k in comp if not diagram.records[k].boundary_suspect]
        witnesses = [diagram.records[k].direction for k in (interior or comp)[:5]]
        boundary = [diagram.records[k].direction for k in comp if diagram.records[k].boundary_suspect][:16]
        zones.append(
            StabilityZone(
                label=label,
                cells=tuple(comp),
                area_fraction=diagram.area_fraction(comp),
                witness_directions=tuple(witnesses),
                boundary_directions=tuple(boundary),
            )
        )
    zones.sort(key=lambda z: (-len(z.cells), z.label))
    return zones


@dataclass(frozen=True)
class DiagramFeatures:
    zone_count: int
    labels: tuple
    zone_area_fractions: tuple
    gap_fraction: float
    gap_fraction_by_depth: tuple
    both_orbit_types: bool | None
    orbit_type_counts: tuple
    periodic_arcs: tuple            # ((m, coverage fraction), ...) top arcs


def diagram_features(diagram: AngularDiagram, model: DispersionModel | None = None,
                     thresholds: Thresholds | None = None, orbit_samples: int = 50) -> DiagramFeatures:
    """Descriptive feature report for a completed sweep."""
    thr = thresholds or Thresholds()
    zones = diagram.zones
    labels = tuple(sorted({z.label for z in zones}))

    both = None
    type_counts = (0, 0)
    if model is not None:
        closed_keys = sorted(k for k, r in diagram.records.items() if r.status is CellStatus.CLOSED_ALL)
        step = max(1, len(closed_keys) // orbit_samples)
        ne = nh = 0
        for k in closed_keys[::step][:orbit_samples]:
            t = _sample_orbit_type(model, diagram.records[k].direction, diagram.level, thr)
            if t is OrbitType.ELECTRON:
                ne += 1
            elif t is OrbitType.HOLE:
                nh += 1
        type_counts = (ne, nh)
        if ne + nh > 0:
            both = ne > 0 and nh > 0

    arcs = _periodic_arcs(diagram)
    return DiagramFeatures(
        zone_count=len(zones),
        labels=labels,
        zone_area_fractions=tuple(z.area_fraction for z in zones),
        gap_fraction=diagram.gap_fraction(),
        gap_fraction_by_depth=tuple(diagram.gap_fraction_by_depth),
        both_orbit_types=both,
        orbit_type_counts=type_counts,
        periodic_arcs=arcs,
    )


def _sample_orbit_type(model, direction, level, thr):
    probe = DirectionProbe(model, np.asarray(direction), thr)
    for shift in probe.shifts(4):
        sec = probe.section.with_shift(probe.section.shift + shift)
        seeds = find_seeds(model, sec, level, (-probe.period, probe.period, -probe.period, probe.period),
                           grid_m=32, thresholds=thr)
        for seed in seeds[:3]:
            try:
                traj = trace_level_line(model, sec, level, seed, thresholds=thr,
                                        max_arc_length=40.0 * probe.period)
            except SeedProjectionFailed:
                continue
            if traj.is_closed:
                try:
                    return orbit_type(traj, sec, model)
                except Exception:
                    continue
    return None


def _periodic_arcs(diagram: AngularDiagram, bound: int = 3, top: int = 8):
    """Gap/boundary cells clustered on great circles orthogonal to small
    reciprocal vectors (the periodic-trajectory direction arcs)."""
    from .lattice import _int_box

    keys = [k for k, r in diagram.records.items()
            if r.status is CellStatus.GAP or r.boundary_suspect]
    if not keys:
        return ()
    dirs = np.array([diagram.records[k].direction for k in keys])
    # reciprocal vectors in the default coordinates of the records
    box = _int_box(3, bound)
    out = []
    cell_scale = 2.0 / diagram.resolution
    for m in box:
        v = np.asarray(m, dtype=float)
        v /= np.linalg.norm(v)
        near = np.abs(dirs @ v) <= 2.0 * cell_scale
        frac = float(near.mean())
        if frac > 0.02:
            out.append((tuple(int(x) for x in m), frac))
    out.sort(key=lambda t: -t[1])
    return tuple(out[:top])
