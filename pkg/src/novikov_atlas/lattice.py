"""Direct/reciprocal lattice arithmetic and direction classification.

Conventions (fixed globally):
    hbar = 1, e/c = 1.  The direct basis l_1..l_N is stored as the ROWS of an
    (N, N) matrix; the reciprocal basis a_1..a_N satisfies <a_i, l_j> = 2*pi*delta_ij
    and is always recomputed from the direct basis, never stored independently.

A field direction ``B`` is *rational* when it is parallel to an integer
combination of the direct basis, *partially irrational* when the plane
orthogonal to it contains exactly one reciprocal lattice vector up to a
factor, and *generic* otherwise.  Floating-point classification is relative
to a search bound ``Q`` and tolerance ``tol_dir``, which are reported with
every result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import SingularBasis

TWO_PI = 2.0 * math.pi


def primitive(m) -> tuple:
    """Reduce an integer vector to its irreducible, sign-normalized form.

    Components are divided by their gcd and the sign is flipped so the first
    nonzero component is positive.  The zero vector is returned unchanged.
    """
    m = tuple(int(round(x)) for x in m)
    g = 0
    for x in m:
        g = math.gcd(g, abs(x))
    if g == 0:
        return m
    m = tuple(x // g for x in m)
    for x in m:
        if x != 0:
            if x < 0:
                m = tuple(-y for y in m)
            break
    return m


@lru_cache(maxsize=32)
def _int_box(n: int, bound: int) -> np.ndarray:
    """All irreducible sign-normalized integer n-vectors with |m_i| <= bound.

    Sorted by (Chebyshev norm, squared Euclidean norm, lexicographic order) so
    that "smallest witness" searches are deterministic.
    """
    rng = np.arange(-bound, bound + 1, dtype=np.int64)
    grids = np.meshgrid(*([rng] * n), indexing="ij")
    m = np.stack([g.ravel() for g in grids], axis=1)
    m = m[np.any(m != 0, axis=1)]
    # sign normalization: first nonzero component positive
    first = np.argmax(m != 0, axis=1)
    lead = m[np.arange(len(m)), first]
    m = m[lead > 0]
    # irreducibility
    g = np.gcd.reduce(np.abs(m), axis=1)
    m = m[g == 1]
    cheb = np.max(np.abs(m), axis=1)
    eucl = np.sum(m * m, axis=1)
    order = np.lexsort(tuple(m[:, i] for i in range(n - 1, -1, -1)) + (eucl, cheb))
    return np.ascontiguousarray(m[order])


def integer_rank_and_basis(vectors) -> tuple[int, list[tuple]]:
    """Exact rank and a generating set of the integer span of ``vectors``.

    Uses fraction-free Euclidean row reduction; inputs must be small integer
    vectors (overflow is not guarded).
    """
    rows = [list(int(x) for x in v) for v in vectors if any(int(x) != 0 for x in v)]
    if not rows:
        return 0, []
    ncols = len(rows[0])
    basis = []
    col = 0
    while rows and col < ncols:
        live = [r for r in rows if any(r[col:])]
        rows = live
        cand = [r for r in rows if r[col] != 0]
        if not cand:
            col += 1
            continue
        while True:
            cand = [r for r in rows if r[col] != 0]
            if len(cand) <= 1:
                break
            cand.sort(key=lambda r: abs(r[col]))
            p = cand[0]
            for r in cand[1:]:
                q = r[col] // p[col]
                for j in range(ncols):
                    r[j] -= q * p[j]
        pivot = next(r for r in rows if r[col] != 0)
        rows = [r for r in rows if r is not pivot and any(r)]
        basis.append(primitive(pivot))
        col += 1
    return len(basis), basis


@dataclass(frozen=True)
class Lattice:
    """Rank-N Bravais lattice given by its direct basis (rows l_1..l_N)."""

    direct: np.ndarray
    reciprocal: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = np.array(self.direct, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise SingularBasis(f"direct basis must be square, got shape {d.shape}")
        d.setflags(write=False)
        object.__setattr__(self, "direct", d)
        r = reciprocal_basis(d)
        r.setflags(write=False)
        object.__setattr__(self, "reciprocal", r)

    @property
    def dimension(self) -> int:
        return self.direct.shape[0]

    @property
    def period_scale(self) -> float:
        """Geometric-mean reciprocal basis length; the natural 'one period'."""
        return float(np.exp(np.mean(np.log(np.linalg.norm(self.reciprocal, axis=1)))))

    def direct_vector(self, m) -> np.ndarray:
        """Sum m_i l_i for an integer tuple m."""
        return np.asarray(m, dtype=float) @ self.direct

    def reciprocal_vector(self, m) -> np.ndarray:
        """Sum m_i a_i for an integer tuple m."""
        return np.asarray(m, dtype=float) @ self.reciprocal

    @staticmethod
    def cubic(n: int = 3, spacing: float = 1.0) -> "Lattice":
        return Lattice(np.eye(n) * spacing)


def reciprocal_basis(direct: np.ndarray) -> np.ndarray:
    """Reciprocal basis rows a_i with <a_i, l_j> = 2*pi*delta_ij.

    For N = 3 this coincides with the cyclic cross-product formula
    a_1 = 2*pi (l_2 x l_3) / (l_1, l_2, l_3); for general N it is
    2*pi times the inverse transpose of the direct basis matrix.
    """
    d = np.asarray(direct, dtype=float)
    det = np.linalg.det(d)
    scale = np.prod(np.linalg.norm(d, axis=1))
    if scale <= 0.0 or abs(det) <= 1e-12 * scale:
        raise SingularBasis(f"direct basis is singular (det={det:.3e}, scale={scale:.3e})")
    return TWO_PI * np.linalg.inv(d).T


class DirectionTag(Enum):
    RATIONAL = "rational"
    PARTIALLY_IRRATIONAL = "partially_irrational"
    GENERIC = "generic"


@dataclass(frozen=True)
class DirectionClass:
    """Classification of a field direction relative to a search bound.

    ``witness`` is the irreducible integer tuple: direct-basis coefficients of
    a vector parallel to B for RATIONAL, reciprocal-basis coefficients of the
    (unique up to sign) vector orthogonal to B for PARTIALLY_IRRATIONAL, and
    None for GENERIC.
    """

    tag: DirectionTag
    witness: tuple | None
    bound: int
    tol: float

    @property
    def is_rational(self) -> bool:
        return self.tag is DirectionTag.RATIONAL


def classify_direction(b, lattice: Lattice, bound: int = 20, tol_dir: float = 1e-9) -> DirectionClass:
    """Classify direction ``b`` as rational / partially irrational / generic.

    The outcome is relative to (bound, tol_dir): GENERIC means no integer
    witness was found within the search box, never an error.
    """
    b = np.asarray(b, dtype=float)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        raise ValueError("direction must be nonzero")
    b = b / nb
    n = lattice.dimension
    box = _int_box(n, int(bound))

    # rational: sin(angle) between span(sum m_i l_i) and span(b) below tol
    v = box @ lattice.direct
    vn = np.linalg.norm(v, axis=1)
    cosb = np.abs(v @ b) / vn
    sinb = np.sqrt(np.maximum(0.0, 1.0 - np.minimum(1.0, cosb) ** 2))
    hit = np.nonzero(sinb <= tol_dir)[0]
    if hit.size:
        return DirectionClass(DirectionTag.RATIONAL, tuple(int(x) for x in box[hit[0]]), int(bound), tol_dir)

    # partially irrational: reciprocal vectors orthogonal to b
    r = box @ lattice.reciprocal
    rn = np.linalg.norm(r, axis=1)
    cosr = np.abs(r @ b) / rn
    ortho = np.nonzero(cosr <= tol_dir)[0]
    if ortho.size:
        rank, _ = integer_rank_and_basis(box[ortho[: min(64, ortho.size)]])
        if rank >= 2:
            # b is orthogonal to a rank-2 reciprocal sublattice, hence rational
            # at a scale the direct test missed; report the best direct witness.
            best = int(np.argmin(sinb))
            return DirectionClass(DirectionTag.RATIONAL, tuple(int(x) for x in box[best]), int(bound), tol_dir)
        return DirectionClass(
            DirectionTag.PARTIALLY_IRRATIONAL, tuple(int(x) for x in box[ortho[0]]), int(bound), tol_dir
        )
    return DirectionClass(DirectionTag.GENERIC, None, int(bound), tol_dir)


def integer_vector_search(target, lattice: Lattice, m_max: int = 12, tol_angle: float = 1e-6) -> list[tuple]:
    """Irreducible integer tuples m whose lattice vector aligns with ``target``.

    Alignment is measured as the angle between the lines spanned by
    sum(m_i l_i) and ``target`` (sign-insensitive).  Results are sorted by
    Chebyshev norm, then angle; the empty list is a valid outcome.
    """
    t = np.asarray(target, dtype=float)
    nt = np.linalg.norm(t)
    if nt == 0.0:
        raise ValueError("target must be nonzero")
    t = t / nt
    box = _int_box(lattice.dimension, int(m_max))
    v = box @ lattice.direct
    vn = np.linalg.norm(v, axis=1)
    cosa = np.minimum(1.0, np.abs(v @ t) / vn)
    ang = np.arccos(cosa)
    keep = np.nonzero(ang <= tol_angle)[0]
    cheb = np.max(np.abs(box[keep]), axis=1)
    order = np.lexsort((ang[keep], cheb))
    return [tuple(int(x) for x in box[keep[i]]) for i in order]
