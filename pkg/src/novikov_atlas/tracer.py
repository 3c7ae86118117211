"""Level-line tracing, seeds, the marching-squares oracle, and separatrix complexes.

Orientation convention: the motion direction along a level line is the
gradient rotated by -90 degrees in the (e1, e2) frame, which equals the
projected direction of [grad x B] for the right-handed frame of a 3-d
section.  ``orientation=+1`` traces along that direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels as K
from .config import Thresholds
from .dispersion import DispersionModel
from .errors import (
    MultipleSaddleUnresolved,
    NonRationalDirection,
    SeedProjectionFailed,
)
from .lattice import DirectionTag, Lattice, integer_rank_and_basis, primitive, _int_box
from .section import PlaneSection, SectionField


class Termination(Enum):
    CLOSED = "closed"
    MAX_LENGTH = "max_length"
    SADDLE_PROXIMITY = "saddle_proximity"
    LEFT_WINDOW = "left_window"


_TERM_BY_CODE = {
    K.CLOSED: Termination.CLOSED,
    K.MAX_LENGTH: Termination.MAX_LENGTH,
    K.SADDLE_PROXIMITY: Termination.SADDLE_PROXIMITY,
    K.LEFT_WINDOW: Termination.LEFT_WINDOW,
    # a step collapse without a saddle explanation yields a partial polyline;
    # it is reported via the `stagnant` flag, not a termination of its own
    K.STAGNANT: Termination.MAX_LENGTH,
}


@dataclass(frozen=True)
class Trajectory:
    """Traced level-line polyline with closure and extent metadata."""

    level: float
    vertices: np.ndarray          # (n, 2) plane coordinates
    arc_length: float
    termination: Termination
    orientation: int
    closure_residual: float = math.inf
    saddle_events: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    stagnant: bool = False

    def __post_init__(self):
        self.vertices.setflags(write=False)
        self.saddle_events.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        v = self.vertices
        return float(v[:, 0].min()), float(v[:, 0].max()), float(v[:, 1].min()), float(v[:, 1].max())

    @property
    def extent(self) -> float:
        """Diagonal of the bounding box."""
        x0, x1, y0, y1 = self.bbox
        return math.hypot(x1 - x0, y1 - y0)

    @property
    def is_closed(self) -> bool:
        return self.termination is Termination.CLOSED


def _opts_vector(c, thr: Thresholds, l_max, r_max):
    opts = np.empty(K.N_OPTS)
    opts[K.OPT_H_MIN] = thr.h_min
    opts[K.OPT_H_MAX] = thr.h_max
    opts[K.OPT_TOL_LEVEL] = thr.tol_level
    opts[K.OPT_TOL_CLOSE] = thr.tol_close
    opts[K.OPT_G_MIN] = thr.g_min
    opts[K.OPT_G_PROBE] = thr.g_probe
    opts[K.OPT_TOL_SAD] = thr.tol_saddle_level
    opts[K.OPT_L_MAX] = l_max
    opts[K.OPT_R_MAX] = r_max
    opts[K.OPT_THETA_MAX] = thr.theta_max
    return opts


def trace_level_line(
    model: DispersionModel,
    section: PlaneSection,
    level: float,
    seed,
    thresholds: Thresholds | None = None,
    max_arc_length: float = 1e4,
    window_radius: float = math.inf,
    orientation: int = 1,
    _field: SectionField | None = None,
) -> Trajectory:
    """Trace the level line through ``seed`` until it closes or a limit hits.

    The seed is first Newton-projected onto the level set; failure to converge
    raises SeedProjectionFailed.  A step collapse without a saddle explanation
    is reported on the returned trajectory via ``stagnant`` (the polyline up
    to that point is still valid).
    """
    thr = thresholds or Thresholds()
    fld = _field if _field is not None else SectionField.build(model, section)
    seed = np.asarray(seed, dtype=float)
    max_verts = int(min(thr.max_vertices, max(64, 8.0 * max_arc_length / thr.h_max)))
    opts = _opts_vector(level, thr, max_arc_length, window_radius)
    verts, nv, status, arc, closure, events, nev = K.trace_level(
        fld.kx, fld.ky, fld.amp, fld.phase, fld.const,
        float(level), seed[0], seed[1], float(orientation), opts, max_verts,
    )
    if status == K.SEED_FAIL:
        raise SeedProjectionFailed(
            f"seed {seed} did not project onto level {level} within 20 iterations"
        )
    return Trajectory(
        level=float(level),
        vertices=verts[:nv].copy(),
        arc_length=float(arc),
        termination=_TERM_BY_CODE[status],
        orientation=int(orientation),
        closure_residual=float(closure),
        saddle_events=events[:nev].copy(),
        stagnant=(status == K.STAGNANT),
    )


def find_seeds(
    model: DispersionModel,
    section: PlaneSection,
    level: float,
    window,
    grid_m: int = 48,
    thresholds: Thresholds | None = None,
    _field: SectionField | None = None,
) -> list[np.ndarray]:
    """Seed points on the level set inside a rectangular window.

    Sign changes of f - c along grid edges give linear-interpolated crossing
    points, each Newton-projected and deduplicated within h_max.  An empty
    list means the level does not cross the window at this resolution.
    """
    if grid_m < 16:
        raise ValueError("grid_m must be at least 16")
    thr = thresholds or Thresholds()
    fld = _field if _field is not None else SectionField.build(model, section)
    x0, x1, y0, y1 = window
    xs = np.linspace(x0, x1, grid_m)
    ys = np.linspace(y0, y1, grid_m)
    vals = fld.value_grid(xs, ys) - level

    cand = []
    sx = np.sign(vals)
    cx = sx[:-1, :] * sx[1:, :] < 0
    ii, jj = np.nonzero(cx)
    t = vals[ii, jj] / (vals[ii, jj] - vals[ii + 1, jj])
    cand.append(np.column_stack([xs[ii] + t * (xs[ii + 1] - xs[ii]), ys[jj]]))
    cy = sx[:, :-1] * sx[:, 1:] < 0
    ii, jj = np.nonzero(cy)
    t = vals[ii, jj] / (vals[ii, jj] - vals[ii, jj + 1])
    cand.append(np.column_stack([xs[ii], ys[jj] + t * (ys[jj + 1] - ys[jj])]))
    pts = np.vstack(cand)
    if len(pts) == 0:
        return []

    seeds = []
    taken = None
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    for idx in order:
        p = pts[idx]
        qx, qy, ok = K.project_to_level(
            fld.kx, fld.ky, fld.amp, fld.phase, fld.const, float(level), p[0], p[1], thr.tol_level, 20
        )
        if not ok:
            continue
        q = np.array([qx, qy])
        if taken is not None:
            d, _ = taken.query(q)
            if d < thr.h_max:
                continue
            pts_taken = np.vstack([taken.data, q])
        else:
            pts_taken = q.reshape(1, 2)
        taken = cKDTree(pts_taken)
        seeds.append(q)
    return seeds


def marching_squares(
    model: DispersionModel,
    section: PlaneSection,
    level: float,
    window,
    cell: float,
    _field: SectionField | None = None,
) -> list[np.ndarray]:
    """Independent level-set extraction: linear interpolation on grid cells.

    Ambiguous saddle cells are resolved with the cell-center value.  Returns
    chained polylines (closed ones repeat their first point at the end).
    """
    if cell <= 0:
        raise ValueError("cell size must be positive")
    fld = _field if _field is not None else SectionField.build(model, section)
    x0, x1, y0, y1 = window
    nx = max(2, int(math.ceil((x1 - x0) / cell)) + 1)
    ny = max(2, int(math.ceil((y1 - y0) / cell)) + 1)
    xs = x0 + np.arange(nx) * cell
    ys = y0 + np.arange(ny) * cell
    v = fld.value_grid(xs, ys) - level

    segments = []
    pos = v >= 0
    cellmask = np.zeros((nx - 1, ny - 1), dtype=bool)
    # cells with at least one sign change among corners
    c00 = pos[:-1, :-1]
    c10 = pos[1:, :-1]
    c11 = pos[1:, 1:]
    c01 = pos[:-1, 1:]
    cellmask = ~((c00 == c10) & (c10 == c11) & (c11 == c01))
    ii, jj = np.nonzero(cellmask)

    def interp(xa, ya, va, xb, yb, vb):
        t = va / (va - vb)
        return (xa + t * (xb - xa), ya + t * (yb - ya))

    for i, j in zip(ii, jj):
        x_a, x_b = xs[i], xs[i + 1]
        y_a, y_b = ys[j], ys[j + 1]
        vv = (v[i, j], v[i + 1, j], v[i + 1, j + 1], v[i, j + 1])  # ccw from lower-left
        code = (vv[0] >= 0) | ((vv[1] >= 0) << 1) | ((vv[2] >= 0) << 2) | ((vv[3] >= 0) << 3)
        if code in (0, 15):
            continue
        # edge crossing points: bottom, right, top, left
        eb = interp(x_a, y_a, vv[0], x_b, y_a, vv[1]) if (vv[0] >= 0) != (vv[1] >= 0) else None
        er = interp(x_b, y_a, vv[1], x_b, y_b, vv[2]) if (vv[1] >= 0) != (vv[2] >= 0) else None
        et = interp(x_b, y_b, vv[2], x_a, y_b, vv[3]) if (vv[2] >= 0) != (vv[3] >= 0) else None
        el = interp(x_a, y_b, vv[3], x_a, y_a, vv[0]) if (vv[3] >= 0) != (vv[0] >= 0) else None
        pts = [p for p in (eb, er, et, el) if p is not None]
        if len(pts) == 2:
            segments.append((pts[0], pts[1]))
        elif len(pts) == 4:
            center = fld.value(0.5 * (x_a + x_b), 0.5 * (y_a + y_b)) - level
            same_as_ll = (center >= 0) == (vv[0] >= 0)
            if same_as_ll:
                segments.append((eb, er))
                segments.append((et, el))
            else:
                segments.append((eb, el))
                segments.append((er, et))

    return _chain_segments(segments, snap=cell * 1e-9)


def _chain_segments(segments, snap):
    """Join segments sharing endpoints into polylines (deterministic order)."""
    if not segments:
        return []

    def key(p):
        return (round(p[0] / snap), round(p[1] / snap))

    links: dict = {}
    for si, (a, b) in enumerate(segments):
        links.setdefault(key(a), []).append((si, 0))
        links.setdefault(key(b), []).append((si, 1))

    used = [False] * len(segments)
    polylines = []
    for start in range(len(segments)):
        if used[start]:
            continue
        used[start] = True
        a, b = segments[start]
        chain = [a, b]
        # extend forward from b, then backward from a
        for end_idx in (1, 0):
            while True:
                p = chain[-1] if end_idx == 1 else chain[0]
                nxt = None
                for si, side in links.get(key(p), []):
                    if not used[si]:
                        nxt = (si, side)
                        break
                if nxt is None:
                    break
                si, side = nxt
                used[si] = True
                other = segments[si][1 - side]
                if end_idx == 1:
                    chain.append(other)
                else:
                    chain.insert(0, other)
        polylines.append(np.array(chain))
    return polylines


def polyline_point_distance(polyline: np.ndarray, points: np.ndarray, tree: cKDTree | None = None) -> np.ndarray:
    """Distance from each query point to a polyline (exact segment distance).

    A KD-tree on the polyline vertices narrows the candidate segments; exact
    point-segment distances are then taken over the local neighborhood.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(polyline) == 1:
        return np.linalg.norm(pts - polyline[0], axis=1)
    if tree is None:
        tree = cKDTree(polyline)
    seg_len = np.linalg.norm(np.diff(polyline, axis=0), axis=1)
    max_seg = float(seg_len.max()) if len(seg_len) else 0.0
    d_vert, idx = tree.query(pts)
    out = np.empty(len(pts))
    for i, (p, dv, j) in enumerate(zip(pts, d_vert, idx)):
        lo = max(0, j - 2)
        hi = min(len(polyline) - 1, j + 2)
        best = dv
        # any segment closer than best has a vertex within best + its length
        cand = tree.query_ball_point(p, dv + max_seg)
        for k in set(cand) | set(range(lo, hi + 1)):
            if k >= len(polyline) - 1:
                continue
            a = polyline[k]
            b = polyline[k + 1]
            ab = b - a
            denom = ab @ ab
            if denom <= 0:
                continue
            t = np.clip(((p - a) @ ab) / denom, 0.0, 1.0)
            dd = np.linalg.norm(a + t * ab - p)
            if dd < best:
                best = dd
        out[i] = best
    return out


def hausdorff_distance(a: np.ndarray, b: np.ndarray, sample: float | None = None) -> float:
    """Symmetric Hausdorff distance between two polylines.

    When ``sample`` is given, both are resampled at that spacing first so
    the measure reflects the curves rather than the vertex placement.
    """

    def densify(p):
        if sample is None or len(p) < 2:
            return p
        out = [p[0]]
        for i in range(len(p) - 1):
            seg = p[i + 1] - p[i]
            ln = np.linalg.norm(seg)
            n = max(1, int(math.ceil(ln / sample)))
            for k in range(1, n + 1):
                out.append(p[i] + seg * (k / n))
        return np.array(out)

    da = densify(np.asarray(a, float))
    db = densify(np.asarray(b, float))
    d_ab = polyline_point_distance(db, da).max()
    d_ba = polyline_point_distance(da, db).max()
    return float(max(d_ab, d_ba))


def in_plane_period_vectors(section: PlaneSection, bound: int = 20, tol: float = 1e-9):
    """Reciprocal vectors lying in the plane direction, as (m, in-plane 2-vector).

    Sorted by in-plane length.  For a rational 3-d section these span the
    projected period lattice; for partially irrational there is exactly one.
    """
    lat = section.lattice
    box = _int_box(lat.dimension, int(bound))
    v = box @ lat.reciprocal
    vn = np.linalg.norm(v, axis=1)
    t = v @ section.frame.T
    resid = np.sqrt(np.maximum(0.0, vn**2 - np.sum(t**2, axis=1)))
    hits = np.nonzero(resid <= np.maximum(tol * vn, 1e-12))[0]
    order = hits[np.argsort(vn[hits])]
    return [(tuple(int(x) for x in box[i]), t[i]) for i in order]


def detect_periodicity(
    trajectory: Trajectory,
    section: PlaneSection,
    lattice: Lattice,
    bound: int = 20,
    thresholds: Thresholds | None = None,
) -> tuple | None:
    """Smallest reciprocal-lattice period of an open trajectory, if any.

    Returns the irreducible integer tuple w such that translating the vertex
    chain by the in-plane projection of sum(w_i a_i) maps it onto itself
    within tol_close, or None if no such vector exists within the bound.
    """
    if trajectory.is_closed:
        raise ValueError("periodicity detection requires an open trajectory")
    thr = thresholds or Thresholds()
    verts = trajectory.vertices
    if len(verts) < 8:
        return None
    tree = cKDTree(verts)
    chain_dir = verts[-1] - verts[0]
    ncd = np.linalg.norm(chain_dir)
    if ncd < 1e-12:
        return None
    chain_dir /= ncd

    # a point on the true curve sits within one chord sagitta of the polyline
    sag = _max_sagitta(verts)
    tol = thr.tol_close + sag

    candidates = in_plane_period_vectors(section, bound=bound, tol=thr.tol_dir)
    for m, t in candidates:
        tn = np.linalg.norm(t)
        if tn < 1e-12 or trajectory.arc_length < 2.0 * tn:
            continue
        tt = t if (t @ chain_dir) >= 0 else -t
        s = (verts - verts[0]) @ chain_dir
        s_max = s.max()
        t_s = tt @ chain_dir
        ok_idx = np.nonzero(s + t_s <= s_max - 0.5 * thr.h_max)[0]
        if len(ok_idx) < 4:
            continue
        take = ok_idx[:: max(1, len(ok_idx) // 64)]
        shifted = verts[take] + tt
        d = polyline_point_distance(verts, shifted, tree=tree)
        if d.max() <= tol:
            return primitive(m)
    return None


def _max_sagitta(verts: np.ndarray) -> float:
    """Largest deviation of a middle vertex from its neighbors' chord."""
    if len(verts) < 3:
        return 0.0
    a = verts[:-2]
    b = verts[1:-1]
    c = verts[2:]
    ab = c - a
    ln = np.linalg.norm(ab, axis=1)
    ln[ln == 0] = 1.0
    cross = np.abs(ab[:, 0] * (b - a)[:, 1] - ab[:, 1] * (b - a)[:, 0]) / ln
    return float(cross.max())


@dataclass(frozen=True)
class SeparatrixArc:
    start_saddle: int
    end_saddle: int | None            # index into the saddle list, or None
    offset: tuple | None              # period-lattice offset (n1, n2) of the endpoint
    polyline: np.ndarray


@dataclass(frozen=True)
class ComplexComponent:
    saddle_ids: tuple[int, ...]
    cycle_classes: tuple[tuple, ...]   # reciprocal-basis integer tuples
    rank: int
    bounded: bool


@dataclass(frozen=True)
class SeparatrixComplex:
    """On-level saddles and connecting separatrices in one window.

    Components are the connected pieces of the saddle graph modulo the
    projected period lattice; each carries the integer homology classes of
    its cycles and their rank.  ``is_special`` marks a component of rank >= 2
    (characteristic of special rational directions).
    """

    level: float
    saddles: np.ndarray               # (n, 2)
    arcs: tuple[SeparatrixArc, ...]
    components: tuple[ComplexComponent, ...]
    period_vectors: tuple             # ((m1, t1), (m2, t2))

    @property
    def rank(self) -> int:
        return max((c.rank for c in self.components), default=0)

    @property
    def bounded(self) -> bool:
        return all(c.bounded for c in self.components)

    @property
    def is_special(self) -> bool:
        return any(c.rank >= 2 for c in self.components)

    @property
    def cycle_classes(self) -> tuple:
        out = []
        for c in self.components:
            out.extend(c.cycle_classes)
        return tuple(out)


def find_critical_points(
    model: DispersionModel,
    section: PlaneSection,
    window,
    grid_m: int = 48,
    thresholds: Thresholds | None = None,
    _field: SectionField | None = None,
):
    """Critical points of the plane field in a window: (points, values, dets).

    Newton from every coarse-grid cell, deduplicated; ``dets`` holds Hessian
    determinants (negative = saddle).
    """
    thr = thresholds or Thresholds()
    fld = _field if _field is not None else SectionField.build(model, section)
    x0, x1, y0, y1 = window
    xs = np.linspace(x0, x1, grid_m)
    ys = np.linspace(y0, y1, grid_m)
    pts = []
    vals = []
    dets = []
    for xa in xs:
        for ya in ys:
            cx, cy, cf, cg, cdet, ok = K.critical_newton(
                fld.kx, fld.ky, fld.amp, fld.phase, fld.const, float(xa), float(ya), thr.g_min, 60
            )
            if not ok or cg > thr.g_min:
                continue
            if not (x0 - 1e-9 <= cx <= x1 + 1e-9 and y0 - 1e-9 <= cy <= y1 + 1e-9):
                continue
            dup = False
            for p in pts:
                if math.hypot(p[0] - cx, p[1] - cy) < 10.0 * thr.h_min:
                    dup = True
                    break
            if not dup:
                pts.append((cx, cy))
                vals.append(cf)
                dets.append(cdet)
    return np.array(pts).reshape(-1, 2), np.array(vals), np.array(dets)


def _saddle_branch_directions(fld: SectionField, x, y):
    """The two level-line tangent directions at a saddle (null directions of H)."""
    _, _, _, fxx, fxy, fyy = K.field_hess(fld.kx, fld.ky, fld.amp, fld.phase, fld.const, x, y)
    # solve fxx u^2 + 2 fxy u v + fyy v^2 = 0
    if abs(fxx) >= abs(fyy) and abs(fxx) > 1e-14:
        disc = fxy * fxy - fxx * fyy
        if disc < 0:
            raise MultipleSaddleUnresolved(f"no real null directions at ({x:.6f}, {y:.6f})")
        r = math.sqrt(disc)
        d1 = np.array([(-fxy + r) / fxx, 1.0])
        d2 = np.array([(-fxy - r) / fxx, 1.0])
    elif abs(fyy) > 1e-14:
        disc = fxy * fxy - fxx * fyy
        if disc < 0:
            raise MultipleSaddleUnresolved(f"no real null directions at ({x:.6f}, {y:.6f})")
        r = math.sqrt(disc)
        d1 = np.array([1.0, (-fxy + r) / fyy])
        d2 = np.array([1.0, (-fxy - r) / fyy])
    elif abs(fxy) > 1e-14:
        d1 = np.array([1.0, 0.0])
        d2 = np.array([0.0, 1.0])
    else:
        raise MultipleSaddleUnresolved(f"degenerate Hessian at ({x:.6f}, {y:.6f})")
    return d1 / np.linalg.norm(d1), d2 / np.linalg.norm(d2)


def build_separatrix_complex(
    model: DispersionModel,
    section: PlaneSection,
    level: float,
    window,
    thresholds: Thresholds | None = None,
    saddle_level_tol: float | None = None,
) -> SeparatrixComplex:
    """Assemble the on-level saddle/separatrix complex for a rational section.

    Saddles are Newton-refined from a grid scan; four separatrix branches are
    traced from each saddle's null directions; arc endpoints are matched to
    saddles modulo the projected period lattice, and the integer classes of
    graph cycles give each component's rank and boundedness.
    """
    thr = thresholds or Thresholds()
    if section.direction_class is None or section.direction_class.tag is not DirectionTag.RATIONAL:
        raise NonRationalDirection("separatrix complexes require a rational field direction")
    periods = in_plane_period_vectors(section, bound=thr.direction_bound, tol=thr.tol_dir)
    if len(periods) < 2:
        raise NonRationalDirection("projected period lattice is not rank 2 within the bound")
    (m1, t1), (m2, t2) = periods[0], _first_independent(periods, periods[0][1])
    tol_sad = saddle_level_tol if saddle_level_tol is not None else thr.tol_saddle_level

    fld = SectionField.build(model, section)
    pts, vals, dets = find_critical_points(model, section, window, thresholds=thr, _field=fld)
    if len(pts) and np.any(np.abs(dets) < 1e-12):
        raise MultipleSaddleUnresolved("degenerate critical point in window")
    on_level = (np.abs(vals - level) <= tol_sad) & (dets < 0)
    saddles = pts[on_level]
    if len(saddles) == 0:
        return SeparatrixComplex(float(level), saddles, (), (), ((m1, t1), (m2, t2)))

    sad_level = float(np.mean(vals[on_level]))
    arcs = []
    # seed far enough out that the gradient clears the probe trigger
    delta = 50.0 * thr.h_min
    x0, x1, y0, y1 = window
    span = math.hypot(x1 - x0, y1 - y0)
    for si, (sx, sy) in enumerate(saddles):
        d1, d2 = _saddle_branch_directions(fld, sx, sy)
        for d in (d1, -d1, d2, -d2):
            seed = np.array([sx, sy]) + delta * d
            _f, fx, fy = K.field_grad(fld.kx, fld.ky, fld.amp, fld.phase, fld.const, seed[0], seed[1])
            orient = 1 if (fy * d[0] - fx * d[1]) >= 0 else -1
            try:
                traj = trace_level_line(
                    model, section, sad_level, seed, thresholds=thr,
                    max_arc_length=6.0 * span, window_radius=3.0 * span,
                    orientation=orient, _field=fld,
                )
            except SeedProjectionFailed:
                continue
            end_saddle, offset = _match_endpoint(traj, saddles, t1, t2, thr)
            arcs.append(SeparatrixArc(si, end_saddle, offset, traj.vertices))

    components = _complex_components(len(saddles), arcs, m1, m2)
    return SeparatrixComplex(float(level), saddles, tuple(arcs), components, ((m1, t1), (m2, t2)))


def _first_independent(periods, t_ref):
    nref = t_ref / np.linalg.norm(t_ref)
    for m, t in periods[1:]:
        resid = t - (t @ nref) * nref
        if np.linalg.norm(resid) > 1e-6 * np.linalg.norm(t):
            return m, t
    raise NonRationalDirection("projected period lattice is not rank 2 within the bound")


def _match_endpoint(traj: Trajectory, saddles, t1, t2, thr: Thresholds):
    """Identify the trajectory endpoint as saddle_j + n1 t1 + n2 t2, if it is one."""
    if traj.termination is not Termination.SADDLE_PROXIMITY or len(traj.saddle_events) == 0:
        return None, None
    end = traj.saddle_events[-1, :2]
    mat = np.column_stack([t1, t2])
    inv = np.linalg.inv(mat)
    for j, s in enumerate(saddles):
        n = inv @ (end - s)
        ni = np.round(n)
        resid = mat @ (n - ni)
        if np.linalg.norm(resid) <= max(100.0 * thr.tol_close, 1e-2):
            return j, (int(ni[0]), int(ni[1]))
    return None, None


def _complex_components(n_saddles, arcs, m1, m2):
    """Connected components of the saddle graph with cycle translation classes."""
    import collections

    adj = collections.defaultdict(list)
    unresolved = collections.defaultdict(bool)
    for arc in arcs:
        if arc.end_saddle is None:
            unresolved[arc.start_saddle] = True
            continue
        adj[arc.start_saddle].append((arc.end_saddle, arc.offset))
        adj[arc.end_saddle].append((arc.start_saddle, (-arc.offset[0], -arc.offset[1])))

    m1 = np.asarray(m1, dtype=np.int64)
    m2 = np.asarray(m2, dtype=np.int64)
    seen = {}
    components = []
    for root in range(n_saddles):
        if root in seen:
            continue
        potential = {root: (0, 0)}
        seen[root] = True
        queue = [root]
        cycles = []
        escaped = unresolved[root]
        while queue:
            u = queue.pop()
            for v, off in adj[u]:
                cand = (potential[u][0] + off[0], potential[u][1] + off[1])
                if v not in potential:
                    potential[v] = cand
                    seen[v] = True
                    escaped = escaped or unresolved[v]
                    queue.append(v)
                else:
                    cyc = (cand[0] - potential[v][0], cand[1] - potential[v][1])
                    if cyc != (0, 0):
                        cycles.append(cyc)
        classes = []
        for n1v, n2v in cycles:
            w = primitive(tuple(n1v * m1 + n2v * m2))
            if any(w):
                classes.append(w)
        classes = sorted(set(classes))
        rank, _ = integer_rank_and_basis(classes)
        bounded = (rank == 0) and not escaped
        components.append(ComplexComponent(tuple(sorted(potential)), tuple(classes), rank, bounded))
    return tuple(components)
