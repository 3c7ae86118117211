"""Affine 2-plane sections of R^N and the restricted plane field.

A section is the isometric embedding iota(x, y) = p0 + x e1 + y e2 with an
orthonormal frame (e1, e2).  For N = 3 the frame is right-handed with respect
to the field direction, e1 x e2 = B/|B|, which fixes the orientation of
motion along [grad x B] and hence the electron/hole sign convention
downstream.  The restriction f = F o iota of a model F is again a trig
polynomial, in two variables; ``SectionField`` holds that reduced form, which
is what the tracer evaluates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dispersion import DispersionModel, evaluate, gradient
from .errors import DegenerateDirection
from .lattice import Lattice, DirectionClass, classify_direction, _int_box

_ORTHO_TOL = 1e-12


@dataclass(frozen=True)
class PlaneSection:
    """Affine 2-plane with orthonormal frame and normal data."""

    lattice: Lattice
    frame: np.ndarray        # (2, N) rows e1, e2
    normals: np.ndarray      # (N-2, N) orthonormal basis of the normal space
    shift: np.ndarray        # p0, (N,)
    b_field: np.ndarray | None = None          # original B (N = 3 only)
    direction_class: DirectionClass | None = None

    def __post_init__(self):
        for attr in ("frame", "normals", "shift"):
            getattr(self, attr).setflags(write=False)
        if self.b_field is not None:
            self.b_field.setflags(write=False)

    @property
    def dimension(self) -> int:
        return self.frame.shape[1]

    def embed(self, xy) -> np.ndarray:
        """iota(x, y); accepts shape (2,) or (..., 2)."""
        xy = np.asarray(xy, dtype=float)
        return self.shift + xy @ self.frame

    def project(self, points) -> np.ndarray:
        """Plane coordinates of ambient point(s) (orthogonal projection)."""
        p = np.asarray(points, dtype=float) - self.shift
        return p @ self.frame.T

    def with_shift(self, shift) -> "PlaneSection":
        return PlaneSection(
            lattice=self.lattice,
            frame=self.frame.copy(),
            normals=self.normals.copy(),
            shift=np.array(shift, dtype=float),
            b_field=None if self.b_field is None else self.b_field.copy(),
            direction_class=self.direction_class,
        )


def build_section(direction, lattice: Lattice, shift=None, bound: int = 20, tol_dir: float = 1e-9) -> PlaneSection:
    """Construct a plane section from a field direction B or a spanning pair.

    ``direction`` of shape (N,) is a field direction (N must be 3); shape
    (2, N) gives two spanning vectors of the plane (any N >= 3), which are
    orthonormalized by Gram-Schmidt.
    """
    d = np.asarray(direction, dtype=float)
    n = lattice.dimension
    if shift is None:
        shift = np.zeros(n)
    shift = np.asarray(shift, dtype=float)

    if d.ndim == 1:
        if n != 3 or d.shape != (3,):
            raise DegenerateDirection("a single field direction requires a 3-d lattice")
        nb = np.linalg.norm(d)
        if nb < 1e-300:
            raise DegenerateDirection("field direction is zero")
        bhat = d / nb
        ref = np.zeros(3)
        ref[int(np.argmin(np.abs(bhat)))] = 1.0
        e1 = ref - (ref @ bhat) * bhat
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(bhat, e1)  # gives e1 x e2 = bhat
        frame = np.vstack([e1, e2])
        normals = bhat.reshape(1, 3)
        dclass = classify_direction(bhat, lattice, bound=bound, tol_dir=tol_dir)
        return PlaneSection(lattice, frame, normals, shift, b_field=d.copy(), direction_class=dclass)

    if d.ndim != 2 or d.shape != (2, n):
        raise DegenerateDirection(f"spanning pair must have shape (2, {n}), got {d.shape}")
    u = d[0]
    nu = np.linalg.norm(u)
    if nu < 1e-300:
        raise DegenerateDirection("first spanning vector is zero")
    e1 = u / nu
    v = d[1] - (d[1] @ e1) * e1
    nv = np.linalg.norm(v)
    if nv <= 1e-12 * np.linalg.norm(d[1]):
        raise DegenerateDirection("spanning vectors are linearly dependent")
    e2 = v / nv
    frame = np.vstack([e1, e2])
    # normal space as the null space of the frame
    _, _, vt = np.linalg.svd(frame)
    normals = vt[2:]
    dclass = None
    if n == 3:
        bhat = np.cross(e1, e2)
        dclass = classify_direction(bhat, lattice, bound=bound, tol_dir=tol_dir)
        return PlaneSection(lattice, frame, normals, shift, b_field=bhat, direction_class=dclass)
    return PlaneSection(lattice, frame, normals, shift, b_field=None, direction_class=dclass)


def restrict(model: DispersionModel, section: PlaneSection, xy) -> float | np.ndarray:
    """f(x, y) = F(iota(x, y))."""
    return evaluate(model, section.embed(xy))


def in_plane_gradient(model: DispersionModel, section: PlaneSection, xy) -> np.ndarray:
    """(df/dx, df/dy) = projections of the ambient gradient onto the frame."""
    g = gradient(model, section.embed(xy))
    return g @ section.frame.T


@dataclass(frozen=True)
class GrassmannDirection:
    """Rationality data of a plane direction xi in G(N, 2).

    ``integer_vectors`` lists irreducible integer tuples m (reciprocal-basis
    coordinates) whose lattice vector lies in xi within tol; the flag marks
    xi contained in a hyperplane with integer (direct-basis) normal.  Both
    are relative to the search bound.
    """

    dimension: int
    frame: np.ndarray
    integer_vectors: tuple[tuple, ...]
    in_rational_hyperplane: bool
    bound: int
    tol: float


def analyze_grassmann(section: PlaneSection, bound: int = 20, tol: float = 1e-9) -> GrassmannDirection:
    """Integer-vector content of the plane direction of ``section``."""
    lat = section.lattice
    n = lat.dimension
    box = _int_box(n, int(bound))
    v = box @ lat.reciprocal
    vn = np.linalg.norm(v, axis=1)
    inplane = v @ section.frame.T  # (M, 2)
    resid = np.sqrt(np.maximum(0.0, vn**2 - np.sum(inplane**2, axis=1)))
    hits = np.nonzero(resid <= tol * vn)[0]
    vecs = tuple(tuple(int(x) for x in box[i]) for i in hits[:16])

    u = box @ lat.direct
    un = np.linalg.norm(u, axis=1)
    perp = np.abs(u @ section.frame.T)  # |<l_m, e_i>|
    in_hyper = bool(np.any(np.all(perp <= tol * un[:, None], axis=1)))
    return GrassmannDirection(n, section.frame.copy(), vecs, in_hyper, int(bound), tol)


@dataclass(frozen=True)
class SectionField:
    """The restricted model as a 2-d trig polynomial.

    value(x, y) = const + sum_j amp_j cos(kx_j x + ky_j y + phase_j).
    Terms whose wavevector is orthogonal to the plane fold into the constant.
    """

    kx: np.ndarray
    ky: np.ndarray
    amp: np.ndarray
    phase: np.ndarray
    const: float

    @staticmethod
    def build(model: DispersionModel, section: PlaneSection) -> "SectionField":
        kv = model.kvectors
        kx = kv @ section.frame[0]
        ky = kv @ section.frame[1]
        phi = kv @ section.shift
        # a cos(t) + b sin(t) = R cos(t - atan2(b, a))
        amp = np.hypot(model.amp_cos, model.amp_sin)
        delta = np.arctan2(model.amp_sin, model.amp_cos)
        phase = phi - delta
        const = model.const
        flat = np.hypot(kx, ky) < 1e-14
        if np.any(flat):
            const += float(np.sum(amp[flat] * np.cos(phase[flat])))
        keep = ~flat
        return SectionField(
            kx=np.ascontiguousarray(kx[keep]),
            ky=np.ascontiguousarray(ky[keep]),
            amp=np.ascontiguousarray(amp[keep]),
            phase=np.ascontiguousarray(phase[keep]),
            const=float(const),
        )

    def value(self, x, y):
        th = np.multiply.outer(np.asarray(x, float), self.kx) + np.multiply.outer(np.asarray(y, float), self.ky) + self.phase
        return self.const + np.cos(th) @ self.amp

    def grad(self, x, y):
        th = np.multiply.outer(np.asarray(x, float), self.kx) + np.multiply.outer(np.asarray(y, float), self.ky) + self.phase
        s = -np.sin(th) * self.amp
        return s @ self.kx, s @ self.ky

    def value_grid(self, xs, ys):
        """Vectorized values on the tensor grid xs x ys, shape (len(xs), len(ys))."""
        tx = np.multiply.outer(xs, self.kx)
        ty = np.multiply.outer(ys, self.ky)
        th = tx[:, None, :] + ty[None, :, :] + self.phase
        return self.const + np.cos(th) @ self.amp
