"""Trajectory classification: closed / periodic / regular with integer label / chaotic.

The decision cascade for a traced trajectory:

    closed                         -> CLOSED (diameter, electron/hole type)
    lattice-periodic               -> PERIODIC_OPEN (period vector)
    strip-confined with a label    -> TOPOLOGICALLY_REGULAR (direction, width, label)
    strip test decisively failed   -> CHAOTIC_CANDIDATE (growth/convergence metrics)
    budget exhausted               -> UNRESOLVED

Electron/hole convention: closed orbits traversed clockwise in the (e1, e2)
frame are ELECTRON type, counterclockwise are HOLE type.  With the
right-handed frame and motion along [grad x B], orbits around energy minima
come out ELECTRON and orbits around maxima HOLE; mirroring the section flips
the type.  Only type differences across diagram regions are physically
meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial import ConvexHull

from .config import Thresholds
from .dispersion import DispersionModel, evaluate
from .errors import NoLabelWithinBound, SelfIntersecting
from .lattice import Lattice, _int_box
from .section import PlaneSection
from .tracer import Trajectory, Termination, detect_periodicity


class TrajectoryTag(Enum):
    CLOSED = "closed"
    PERIODIC_OPEN = "periodic_open"
    TOPOLOGICALLY_REGULAR = "topologically_regular"
    CHAOTIC_CANDIDATE = "chaotic_candidate"
    UNRESOLVED = "unresolved"


class OrbitType(Enum):
    ELECTRON = "electron"
    HOLE = "hole"


class ChaosHint(Enum):
    TSAREV_LIKE = "tsarev_like"
    DYNNIKOV_LIKE = "dynnikov_like"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ChaosMetrics:
    """Growth and direction statistics sampled along one open trajectory."""

    arc_samples: np.ndarray          # s_j, increasing
    displacement: np.ndarray         # |x(s_j) - x(0)|
    deviation: np.ndarray            # D(s_j): max deviation from prefix fit line
    directions: np.ndarray           # unit displacement directions u(s_j)
    growth_exponent: float           # log-log slope of D vs s
    max_last_decade_angle: float     # direction spread over the last decade
    direction_converged: bool
    box_counts: tuple                # ((delta, count), ...) at 3 scales
    hint: ChaosHint


@dataclass(frozen=True)
class TrajectoryClass:
    tag: TrajectoryTag
    diameter: float | None = None
    orbit_type: OrbitType | None = None
    period_vector: tuple | None = None
    direction_plane: tuple | None = None      # mean unit direction (x, y)
    direction_ambient: tuple | None = None
    strip_width: float | None = None
    label: tuple | None = None
    extent: float | None = None
    metrics: ChaosMetrics | None = None
    note: str = ""


def _weighted_line_fit(verts: np.ndarray):
    """Arc-length weighted total-least-squares line through a polyline.

    Returns (centroid, unit direction, signed longitudinal coords,
    signed perpendicular deviations).
    """
    seg = np.diff(verts, axis=0)
    w = np.linalg.norm(seg, axis=1)
    if w.sum() <= 0:
        w = np.ones(len(verts) - 1)
    mid = 0.5 * (verts[:-1] + verts[1:])
    centroid = (mid * w[:, None]).sum(axis=0) / w.sum()
    d = mid - centroid
    cov = (d * w[:, None]).T @ d / w.sum()
    evals, evecs = np.linalg.eigh(cov)
    direction = evecs[:, int(np.argmax(evals))]
    rel = verts - centroid
    lon = rel @ direction
    if lon[-1] - lon[0] < 0:
        direction = -direction
        lon = -lon
    perp = rel @ np.array([-direction[1], direction[0]])
    return centroid, direction, lon, perp


def strip_fit(trajectory: Trajectory):
    """(plane direction, strip half-width W, longitudinal extent) of a polyline."""
    _, direction, lon, perp = _weighted_line_fit(trajectory.vertices)
    return direction, float(np.abs(perp).max()), float(lon.max() - lon.min())


def trajectory_diameter(trajectory: Trajectory) -> float:
    """Max pairwise vertex distance (via the convex hull)."""
    v = trajectory.vertices
    if len(v) < 3:
        return float(np.linalg.norm(v[-1] - v[0]))
    hull = v[ConvexHull(v).vertices]
    d2 = np.sum((hull[:, None, :] - hull[None, :, :]) ** 2, axis=-1)
    return float(math.sqrt(d2.max()))


def integer_label(
    direction_ambient,
    section: PlaneSection,
    lattice: Lattice,
    m_max: int = 12,
    tol_label: float = 0.05,
) -> tuple:
    """Irreducible integer tuple m with the strip direction orthogonal to sum(m_i l_i).

    For a 3-d section the test is the angle between B x l_m and the ambient
    mean direction; for N >= 4 it is near-orthogonality of the direction to
    l_m.  The minimal Chebyshev-norm candidate wins, ties broken by angle
    then lexicographic order; NoLabelWithinBound reports the best near-miss.
    """
    d = np.asarray(direction_ambient, dtype=float)
    d = d / np.linalg.norm(d)
    n = lattice.dimension
    box = _int_box(n, int(m_max))
    lv = box @ lattice.direct
    if n == 3 and section.b_field is not None:
        b = section.b_field / np.linalg.norm(section.b_field)
        cand = np.cross(np.broadcast_to(b, lv.shape), lv)
        cn = np.linalg.norm(cand, axis=1)
        good = cn > 1e-12
        ang = np.full(len(box), np.inf)
        cosa = np.abs(cand[good] @ d) / cn[good]
        ang[good] = np.arccos(np.minimum(1.0, cosa))
    else:
        ln = np.linalg.norm(lv, axis=1)
        ang = np.arcsin(np.minimum(1.0, np.abs(lv @ d) / ln))
    hits = np.nonzero(ang <= tol_label)[0]
    if hits.size == 0:
        best = int(np.argmin(ang))
        raise NoLabelWithinBound(
            f"no label within bound {m_max} at tolerance {tol_label}; "
            f"best near-miss {tuple(int(x) for x in box[best])} at {ang[best]:.4f} rad",
            best=tuple(int(x) for x in box[best]),
            best_angle=float(ang[best]),
        )
    cheb = np.max(np.abs(box[hits]), axis=1)
    order = np.lexsort((ang[hits], cheb))
    return tuple(int(x) for x in box[hits[order[0]]])


def orbit_type(trajectory: Trajectory, section: PlaneSection, model: DispersionModel) -> OrbitType:
    """Electron/hole type of a closed orbit from its traversal chirality.

    Requires a simple closed trajectory.  An interior probe point is
    evaluated as a consistency record but the decision is the signed area of
    the oriented loop (see module docstring for the convention).
    """
    if not trajectory.is_closed:
        raise ValueError("orbit type is defined for closed trajectories")
    from shapely.geometry import LineString, Polygon

    # the final vertex may overshoot the start by a fraction of a step;
    # trim at most a few trailing points before declaring self-intersection
    v = trajectory.vertices
    for trim in range(4):
        if len(v) - trim < 4:
            raise SelfIntersecting("closed trajectory is not simple within tolerance")
        ring = np.vstack([v[: len(v) - trim], v[:1]])
        if LineString(ring).is_simple:
            v = v[: len(v) - trim]
            break
    else:
        raise SelfIntersecting("closed trajectory is not simple within tolerance")
    area = 0.5 * float(np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]))
    # interior probe kept as a sanity record: for orbits traced with the
    # motion convention, interior below level <=> clockwise traversal
    probe = Polygon(ring).representative_point()
    _ = evaluate(model, section.embed([probe.x, probe.y]))
    return OrbitType.ELECTRON if area < 0 else OrbitType.HOLE


def chaos_metrics(trajectory: Trajectory, thresholds: Thresholds | None = None,
                  period_scale: float = 2.0 * math.pi, n_samples: int = 48) -> ChaosMetrics:
    """Deviation growth and direction convergence statistics for an open trace."""
    thr = thresholds or Thresholds()
    v = trajectory.vertices
    seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total <= 0 or len(v) < 16:
        raise ValueError("trajectory too short for chaos metrics")

    s_lo = max(total * 1e-3, 4.0 * period_scale)
    s_lo = min(s_lo, total / 4.0)
    s_samples = np.geomspace(s_lo, total, n_samples)
    idx = np.minimum(np.searchsorted(s, s_samples), len(v) - 1)

    disp_vec = v[idx] - v[0]
    disp = np.linalg.norm(disp_vec, axis=1)
    dirs = np.zeros_like(disp_vec)
    nz = disp > 1e-12
    dirs[nz] = disp_vec[nz] / disp[nz, None]

    dev = np.empty(n_samples)
    for j, i in enumerate(idx):
        prefix = v[: i + 1]
        if len(prefix) < 3:
            dev[j] = 0.0
            continue
        _, _, _, perp = _weighted_line_fit(prefix)
        dev[j] = np.abs(perp).max()

    pos = dev > 1e-12
    if pos.sum() >= 8:
        growth = float(np.polyfit(np.log(s_samples[pos]), np.log(dev[pos]), 1)[0])
    else:
        growth = 0.0

    last = s_samples >= total / 10.0
    u = dirs[last]
    u = u[np.linalg.norm(u, axis=1) > 0.5]
    max_angle = 0.0
    if len(u) >= 2:
        dots = np.clip(u @ u.T, -1.0, 1.0)
        max_angle = float(np.arccos(dots.min()))
    converged = max_angle <= thr.theta_conv and len(u) >= 2

    counts = []
    for scale in (0.25, 0.5, 1.0):
        delta = scale * period_scale
        cells = np.unique(np.floor(v / delta), axis=0)
        counts.append((float(delta), int(len(cells))))

    w_max = thr.w_max_periods * period_scale
    final_dev = float(dev[-1])
    if converged and final_dev > w_max:
        hint = ChaosHint.TSAREV_LIKE
    elif not converged and total >= 0.5 * thr.l_chaos_periods * period_scale:
        hint = ChaosHint.DYNNIKOV_LIKE
    else:
        hint = ChaosHint.INCONCLUSIVE

    return ChaosMetrics(
        arc_samples=s_samples,
        displacement=disp,
        deviation=dev,
        directions=dirs,
        growth_exponent=growth,
        max_last_decade_angle=max_angle,
        direction_converged=converged,
        box_counts=tuple(counts),
        hint=hint,
    )


def classify_trajectory(
    trajectory: Trajectory,
    section: PlaneSection,
    lattice: Lattice,
    thresholds: Thresholds | None = None,
    model: DispersionModel | None = None,
) -> TrajectoryClass:
    """Apply the decision cascade to one traced trajectory.

    ``model`` is only needed to fill the electron/hole type of closed orbits.
    UNRESOLVED is the honest fallback when the arc budget ran out before any
    criterion stabilized.
    """
    thr = thresholds or Thresholds()
    p_scale = lattice.period_scale

    if trajectory.is_closed:
        diam = trajectory_diameter(trajectory)
        otype = None
        if model is not None:
            try:
                otype = orbit_type(trajectory, section, model)
            except SelfIntersecting:
                otype = None
        return TrajectoryClass(TrajectoryTag.CLOSED, diameter=diam, orbit_type=otype)

    if len(trajectory.vertices) < 8:
        return TrajectoryClass(TrajectoryTag.UNRESOLVED, note="trace too short")

    w = detect_periodicity(trajectory, section, lattice, bound=thr.direction_bound, thresholds=thr)
    direction, width, extent = strip_fit(trajectory)
    d_ambient = direction @ section.frame

    if w is not None:
        try:
            label = integer_label(d_ambient, section, lattice, thr.m_max, thr.tol_label)
        except NoLabelWithinBound:
            label = None
        return TrajectoryClass(
            TrajectoryTag.PERIODIC_OPEN,
            period_vector=w,
            direction_plane=tuple(direction),
            direction_ambient=tuple(d_ambient),
            strip_width=width,
            label=label,
            extent=extent,
        )

    w_max = thr.w_max_periods * p_scale
    l_reg = thr.l_reg_periods * p_scale
    strip_ok = extent >= l_reg and width <= w_max and extent >= thr.aspect_min * max(width, 1e-12)

    if strip_ok:
        try:
            label = integer_label(d_ambient, section, lattice, thr.m_max, thr.tol_label)
            return TrajectoryClass(
                TrajectoryTag.TOPOLOGICALLY_REGULAR,
                direction_plane=tuple(direction),
                direction_ambient=tuple(d_ambient),
                strip_width=width,
                label=label,
                extent=extent,
            )
        except NoLabelWithinBound as exc:
            return TrajectoryClass(
                TrajectoryTag.UNRESOLVED,
                direction_plane=tuple(direction),
                direction_ambient=tuple(d_ambient),
                strip_width=width,
                extent=extent,
                note=f"strip confined but unlabeled: {exc}",
            )

    if width > w_max:
        metrics = None
        try:
            metrics = chaos_metrics(trajectory, thr, period_scale=p_scale)
        except ValueError:
            pass
        return TrajectoryClass(
            TrajectoryTag.CHAOTIC_CANDIDATE,
            direction_plane=tuple(direction),
            direction_ambient=tuple(d_ambient),
            strip_width=width,
            extent=extent,
            metrics=metrics,
        )

    return TrajectoryClass(
        TrajectoryTag.UNRESOLVED,
        direction_plane=tuple(direction),
        direction_ambient=tuple(d_ambient),
        strip_width=width,
        extent=extent,
        note="arc budget exhausted before the strip test stabilized",
    )
