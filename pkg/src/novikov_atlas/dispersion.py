"""Finite Fourier models of N-periodic energy functions and their level topology.

A model is a real trigonometric polynomial on R^N, periodic under every
reciprocal basis translation.  Its wavevectors are therefore integer
combinations of the *direct* basis: the term indexed by k in Z^N contributes
c_k * exp(i <sum_j k_j l_j, p>).  Reality (c_{-k} = conj(c_k)) is enforced at
ingestion and one representative per +-k pair is stored, so evaluation is
exactly real by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLevel, RealityViolation
from .lattice import Lattice, integer_rank_and_basis, primitive

MAX_TERMS = 10_000


@dataclass(frozen=True)
class DispersionModel:
    """Real trig polynomial, periodic with respect to the reciprocal lattice.

    ``wavevecs`` holds one integer representative per +-k pair (k = 0
    excluded); ``amp_cos``/``amp_sin`` are the paired real amplitudes so that

        value(p) = const + sum_j amp_cos_j cos(<K_j, p>) + amp_sin_j sin(<K_j, p>)

    with K_j = sum_i wavevecs[j, i] * l_i.
    """

    lattice: Lattice
    wavevecs: np.ndarray  # (n_terms, N) int
    amp_cos: np.ndarray
    amp_sin: np.ndarray
    const: float
    name: str = ""

    def __post_init__(self):
        for attr in ("wavevecs", "amp_cos", "amp_sin"):
            a = getattr(self, attr)
            a.setflags(write=False)

    @property
    def kvectors(self) -> np.ndarray:
        """Real wavevectors K_j = sum_i k_ji l_i, shape (n_terms, N)."""
        return self.wavevecs @ self.lattice.direct

    @staticmethod
    def from_terms(lattice: Lattice, terms, name: str = "") -> "DispersionModel":
        """Build a model from (integer tuple k, complex coefficient) pairs.

        Duplicate k entries are summed.  If both k and -k are given, their
        coefficients must be complex conjugates (within 1e-12 of the larger
        magnitude); if only one side is given, the conjugate partner is
        implied.  The k = 0 coefficient must be real.
        """
        n = lattice.dimension
        acc: dict[tuple, complex] = {}
        for k, c in terms:
            k = tuple(int(round(x)) for x in k)
            if len(k) != n:
                raise ValueError(f"wavevector {k} has wrong dimension (lattice is {n}-d)")
            acc[k] = acc.get(k, 0.0) + complex(c)
        if len(acc) > 2 * MAX_TERMS:
            raise ValueError(f"too many Fourier terms ({len(acc)} > {2 * MAX_TERMS})")

        const = 0.0
        reps: dict[tuple, complex] = {}
        for k, c in acc.items():
            if all(x == 0 for x in k):
                if abs(c.imag) > 1e-12 * max(1.0, abs(c)):
                    raise RealityViolation(f"constant term has imaginary part {c.imag:.3e}")
                const = c.real
                continue
            neg = tuple(-x for x in k)
            rep = max(k, neg)  # deterministic representative per pair
            c_rep = c if k == rep else np.conj(c)
            if rep in reps:
                prev = reps[rep]
                if abs(prev - c_rep) > 1e-12 * max(1.0, abs(prev), abs(c_rep)):
                    raise RealityViolation(
                        f"coefficients for {rep} and its negation are not conjugate: "
                        f"{prev} vs {np.conj(c_rep)}"
                    )
            else:
                reps[rep] = c_rep

        keys = sorted(reps.keys())
        wavevecs = np.array(keys, dtype=np.int64).reshape(len(keys), n)
        coeffs = np.array([reps[k] for k in keys], dtype=complex)
        return DispersionModel(
            lattice=lattice,
            wavevecs=wavevecs,
            amp_cos=2.0 * coeffs.real,
            amp_sin=-2.0 * coeffs.imag,
            const=float(const),
            name=name,
        )


def _cos_terms(*kvecs):
    """Terms of sum_j cos(<l_{k_j}, p>) given integer wavevector tuples."""
    out = []
    for k in kvecs:
        out.append((k, 0.5))
        out.append((tuple(-x for x in k), 0.5))
    return out


def builtin_model(name: str, lattice: Lattice | None = None) -> DispersionModel:
    """Named fixture models.

    cos-sum      cos p_x + cos p_y + cos p_z
    cos-product  cos p_x cos p_y + cos p_y cos p_z + cos p_z cos p_x
    planes       cos p_x
    planes4      cos z1 (N = 4)
    """
    if name in ("cos-sum", "cos-product", "planes"):
        lat = lattice if lattice is not None else Lattice.cubic(3)
    elif name == "planes4":
        lat = lattice if lattice is not None else Lattice.cubic(4)
    else:
        raise ValueError(f"unknown built-in model {name!r}")

    if name == "cos-sum":
        terms = _cos_terms((1, 0, 0), (0, 1, 0), (0, 0, 1))
    elif name == "planes":
        terms = _cos_terms((1, 0, 0))
    elif name == "planes4":
        terms = _cos_terms((1, 0, 0, 0))
    else:  # cos-product: products expand to half-sums of cos(k +- k')
        terms = []
        pairs = [((1, 0, 0), (0, 1, 0)), ((0, 1, 0), (0, 0, 1)), ((0, 0, 1), (1, 0, 0))]
        for ka, kb in pairs:
            for sign in (1, -1):
                k = tuple(a + sign * b for a, b in zip(ka, kb))
                terms.append((k, 0.25))
                terms.append((tuple(-x for x in k), 0.25))
    return DispersionModel.from_terms(lat, terms, name=name)


def parse_coefficient_file(path, lattice: Lattice) -> DispersionModel:
    """Read `k1 k2 k3 [k4] re im` lines ('#' comments) into a model."""
    n = lattice.dimension
    terms = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != n + 2:
                raise ValueError(f"{path}:{lineno}: expected {n + 2} columns, got {len(parts)}")
            k = tuple(int(p) for p in parts[:n])
            terms.append((k, complex(float(parts[n]), float(parts[n + 1]))))
    return DispersionModel.from_terms(lattice, terms, name=str(path))


def evaluate(model: DispersionModel, p) -> float | np.ndarray:
    """Energy at point(s) p; accepts shape (N,) or (..., N)."""
    p = np.asarray(p, dtype=float)
    theta = p @ model.kvectors.T
    val = model.const + np.cos(theta) @ model.amp_cos + np.sin(theta) @ model.amp_sin
    return float(val) if p.ndim == 1 else val


def gradient(model: DispersionModel, p) -> np.ndarray:
    """Analytic gradient of the energy at point(s) p."""
    p = np.asarray(p, dtype=float)
    kv = model.kvectors
    theta = p @ kv.T
    w = -np.sin(theta) * model.amp_cos + np.cos(theta) * model.amp_sin
    return w @ kv


def value_range(model: DispersionModel, grid_n: int = 48, refine_steps: int = 20) -> tuple[float, float]:
    """(min, max) of the model over the torus, grid scan plus local polish.

    The scan covers one reciprocal fundamental domain with grid_n points per
    axis; the best points are refined by ``refine_steps`` backtracking
    gradient steps.
    """
    if grid_n < 16:
        raise ValueError("grid_n must be at least 16")
    n = model.lattice.dimension
    axes = [np.arange(grid_n) / grid_n for _ in range(n)]
    frac = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    pts = frac @ model.lattice.reciprocal
    vals = np.empty(len(pts))
    chunk = 1 << 18
    for i in range(0, len(pts), chunk):
        vals[i : i + chunk] = evaluate(model, pts[i : i + chunk])

    def polish(p0, sign):
        p = p0.copy()
        v = evaluate(model, p)
        step = np.min(np.linalg.norm(model.lattice.reciprocal, axis=1)) / grid_n
        for _ in range(refine_steps):
            g = gradient(model, p)
            ng = np.linalg.norm(g)
            if ng < 1e-14:
                break
            for _ in range(30):
                q = p + sign * step * g / ng
                vq = evaluate(model, q)
                if sign * (vq - v) > 0:
                    p, v = q, vq
                    step *= 1.5
                    break
                step *= 0.5
            else:
                break
        return v

    lo = polish(pts[int(np.argmin(vals))], -1.0)
    hi = polish(pts[int(np.argmax(vals))], +1.0)
    return float(lo), float(hi)


@dataclass(frozen=True)
class LevelSurfaceRank:
    """Topological rank of a level surface in the periodicity torus.

    ``rank`` is the dimension of the integer span of boundary-crossing loop
    translations, maximized over connected components; ``generators`` holds
    one generating set per component (reciprocal-basis integer coordinates).
    """

    level: float
    rank: int
    grid_n: int
    component_ranks: tuple[int, ...]
    generators: tuple[tuple[tuple, ...], ...]


def topological_rank(model: DispersionModel, level: float, grid_n: int = 64) -> LevelSurfaceRank:
    """Rank of the image of the level surface's loops in the torus homology.

    Works on an n^3 cell decomposition of one fundamental domain with
    periodic face identification.  Cells straddling the level are joined
    across sign-changing faces; a union-find with integer offsets records the
    translation class of every loop that wraps the domain, and the rank of
    the recorded span is the surface rank (per component, then maximized).
    """
    if model.lattice.dimension != 3:
        raise ValueError("topological rank is defined for 3-d models only")
    n = int(grid_n)
    axes = np.arange(n) / n
    frac = np.stack(np.meshgrid(axes, axes, axes, indexing="ij"), axis=-1).reshape(-1, 3)
    pts = frac @ model.lattice.reciprocal
    vals = np.empty(len(pts))
    chunk = 1 << 18
    for i in range(0, len(pts), chunk):
        vals[i : i + chunk] = evaluate(model, pts[i : i + chunk])
    s = (vals - level).reshape(n, n, n)

    corner = np.empty((8, n, n, n))
    idx = 0
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                corner[idx] = np.roll(np.roll(np.roll(s, -dx, 0), -dy, 1), -dz, 2)
                idx += 1
    cmin = corner.min(axis=0)
    cmax = corner.max(axis=0)
    if np.any(np.max(np.abs(corner), axis=0) < 1e-12):
        raise DegenerateLevel(f"grid cell with all corners within 1e-12 of level {level}")
    surface = (cmin < 0.0) & (cmax >= 0.0)

    cell_id = -np.ones((n, n, n), dtype=np.int64)
    ns = int(surface.sum())
    cell_id[surface] = np.arange(ns)
    if ns == 0:
        return LevelSurfaceRank(float(level), 0, n, (), ())

    parent = np.arange(ns, dtype=np.int64)
    offset = np.zeros((ns, 3), dtype=np.int64)
    size = np.ones(ns, dtype=np.int64)
    cycles: dict[int, list] = {}

    def find(i):
        root = i
        off = np.zeros(3, dtype=np.int64)
        while parent[root] != root:
            off += offset[root]
            root = parent[root]
        # path compression
        j = i
        acc = np.zeros(3, dtype=np.int64)
        while parent[j] != j:
            nxt = parent[j]
            step = offset[j].copy()
            parent[j] = root
            offset[j] = off - acc
            acc += step
            j = nxt
        return root, off

    def union(i, j, t):
        ri, oi = find(i)
        rj, oj = find(j)
        if ri == rj:
            cyc = oi + t - oj
            if np.any(cyc != 0):
                cycles.setdefault(ri, []).append(tuple(int(x) for x in cyc))
            return
        # attach smaller tree; offset[rj] must satisfy off(j->ri) = oj + offset[rj]
        if size[ri] < size[rj]:
            ri, rj = rj, ri
            oi, oj = oj, oi
            t = -t
        parent[rj] = ri
        offset[rj] = oi + t - oj
        size[ri] += size[rj]
        if rj in cycles:
            cycles.setdefault(ri, []).extend(cycles.pop(rj))

    # faces with a sign change connect the two adjacent cells; the shared face
    # between cell v and v+e_axis consists of the corners of v+e_axis with
    # coordinate 0 along `axis`
    for axis in range(3):
        sh = [(dx, dy, dz) for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)]
        sel = [k for k, d in enumerate(sh) if d[axis] == 0]
        shifted = np.stack(
            [np.roll(np.roll(np.roll(s, -(sh[k][0] + (axis == 0)), 0), -(sh[k][1] + (axis == 1)), 1), -(sh[k][2] + (axis == 2)), 2) for k in sel]
        )
        fmin = shifted.min(axis=0)
        fmax = shifted.max(axis=0)
        cross = (fmin < 0.0) & (fmax >= 0.0) & surface
        ii, jj, kk = np.nonzero(cross)
        nb = [ii.copy(), jj.copy(), kk.copy()]
        wrap = nb[axis] + 1 >= n
        nb[axis] = (nb[axis] + 1) % n
        a_ids = cell_id[ii, jj, kk]
        b_ids = cell_id[nb[0], nb[1], nb[2]]
        ok = b_ids >= 0
        tvec = np.zeros(3, dtype=np.int64)
        tvec[axis] = 1
        for a, b, w in zip(a_ids[ok], b_ids[ok], wrap[ok]):
            union(int(a), int(b), tvec if w else np.zeros(3, dtype=np.int64))

    roots = {}
    for i in range(ns):
        r, _ = find(i)
        roots.setdefault(r, 0)
        roots[r] += 1
    comp_ranks = []
    gens = []
    for r in sorted(roots):
        vecs = cycles.get(r, [])
        rank, basis = integer_rank_and_basis(vecs)
        comp_ranks.append(rank)
        gens.append(tuple(basis))
    rank = max(comp_ranks) if comp_ranks else 0
    return LevelSurfaceRank(float(level), rank, n, tuple(comp_ranks), tuple(gens))
