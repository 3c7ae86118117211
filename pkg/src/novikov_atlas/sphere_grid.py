"""Octahedral sphere discretization with quadtree refinement.

The unit sphere maps onto the square [-1, 1]^2 by the octahedral (L1) chart:
the northern hemisphere fills the central diamond |u| + |v| <= 1 and the
southern hemisphere folds into the four corners.  Cells are an R x R grid of
the square, refined locally by quadtree splits; each square boundary edge
glues to itself with a half-turn, so there is no pole pathology and every
cell has full-rank neighbors.

Cell keys are (depth, i, j); children of (d, i, j) are (d+1, 2i+a, 2j+b).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def square_to_sphere(u, v):
    """Map chart coordinates in [-1, 1]^2 to unit vectors; broadcasts."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    au = np.abs(u)
    av = np.abs(v)
    south = au + av > 1.0
    x = np.where(south, np.where(u >= 0, 1.0, -1.0) * (1.0 - av), u)
    y = np.where(south, np.where(v >= 0, 1.0, -1.0) * (1.0 - au), v)
    z = np.where(south, -(au + av - 1.0), 1.0 - au - av)
    vec = np.stack([x, y, z], axis=-1)
    n = np.linalg.norm(vec, axis=-1, keepdims=True)
    n = np.where(n == 0, 1.0, n)
    return vec / n


def sphere_to_square(d):
    """Inverse chart; ``d`` is a unit vector or array of them."""
    d = np.asarray(d, dtype=float)
    t = np.sum(np.abs(d), axis=-1, keepdims=True)
    p = d[..., 0:1] / t
    q = d[..., 1:2] / t
    south = d[..., 2:3] < 0
    ps = np.where(p >= 0, 1.0, -1.0) * (1.0 - np.abs(q))
    qs = np.where(q >= 0, 1.0, -1.0) * (1.0 - np.abs(p))
    u = np.where(south, ps, p)
    v = np.where(south, qs, q)
    return np.concatenate([u, v], axis=-1)


def fold_index(i: int, j: int, size: int):
    """Fold an out-of-range cell index back into the grid.

    Each boundary edge of the chart square glues to itself with a half-turn:
    stepping past column size-1 lands back in column size-1 with the row
    mirrored, and likewise for the other three edges.
    """
    for _ in range(4):
        if i < 0:
            i, j = -1 - i, size - 1 - j
        elif i >= size:
            i, j = 2 * size - 1 - i, size - 1 - j
        elif j < 0:
            i, j = size - 1 - i, -1 - j
        elif j >= size:
            i, j = size - 1 - i, 2 * size - 1 - j
        else:
            return i, j
    raise ValueError(f"index ({i}, {j}) too far outside a {size}x{size} grid")


@dataclass(frozen=True)
class Cell:
    depth: int
    i: int
    j: int

    @property
    def key(self):
        return (self.depth, self.i, self.j)

    def children(self):
        d, i, j = self.depth, self.i, self.j
        return [Cell(d + 1, 2 * i + a, 2 * j + b) for a in (0, 1) for b in (0, 1)]


class SphereGrid:
    """Leaf cells of a quadtree over the octahedral chart."""

    def __init__(self, resolution: int):
        if resolution < 2 or resolution % 2:
            raise ValueError("resolution must be an even integer >= 2")
        self.resolution = int(resolution)
        self.leaves: set[tuple] = {(0, i, j) for i in range(resolution) for j in range(resolution)}

    def size_at(self, depth: int) -> int:
        return self.resolution * (1 << depth)

    def center(self, key) -> np.ndarray:
        d, i, j = key
        g = self.size_at(d)
        u = -1.0 + 2.0 * (i + 0.5) / g
        v = -1.0 + 2.0 * (j + 0.5) / g
        return square_to_sphere(u, v)

    def corners(self, key) -> np.ndarray:
        d, i, j = key
        g = self.size_at(d)
        us = [-1.0 + 2.0 * i / g, -1.0 + 2.0 * (i + 1) / g]
        vs = [-1.0 + 2.0 * j / g, -1.0 + 2.0 * (j + 1) / g]
        quad = [(us[0], vs[0]), (us[1], vs[0]), (us[1], vs[1]), (us[0], vs[1])]
        return square_to_sphere([p[0] for p in quad], [p[1] for p in quad])

    def solid_angle(self, key) -> float:
        """Spherical area of the cell (two-triangle decomposition)."""
        c = self.corners(key)
        return _triangle_solid_angle(c[0], c[1], c[2]) + _triangle_solid_angle(c[0], c[2], c[3])

    def split(self, key):
        """Replace a leaf by its four children; returns the new keys."""
        self.leaves.discard(key)
        kids = [c.key for c in Cell(*key).children()]
        self.leaves.update(kids)
        return kids

    def neighbors(self, key) -> list[tuple]:
        """Leaf cells sharing an edge with ``key`` (across folds and depths)."""
        d, i, j = key
        g = self.size_at(d)
        out = []
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ni, nj = fold_index(i + di, j + dj, g)
            found = self._find_leaf(d, ni, nj)
            if found is not None:
                out.append(found)
                continue
            # finer leaves along the shared edge
            out.extend(self._finer_leaves(d, ni, nj, toward=(-di, -dj)))
        seen = []
        for k in out:
            if k != key and k not in seen:
                seen.append(k)
        return seen

    def _find_leaf(self, d, i, j):
        while d >= 0:
            if (d, i, j) in self.leaves:
                return (d, i, j)
            d -= 1
            i //= 2
            j //= 2
        return None

    def _finer_leaves(self, d, i, j, toward, max_extra_depth=8):
        """Leaves below (d, i, j) that touch the edge facing direction ``toward``."""
        out = []
        stack = [(d, i, j)]
        while stack:
            dd, ii, jj = stack.pop()
            if dd - d > max_extra_depth:
                continue
            kids = Cell(dd, ii, jj).children()
            for c in kids:
                # keep children on the side of the shared edge
                if toward[0] == 1 and c.i != 2 * ii + 1:
                    continue
                if toward[0] == -1 and c.i != 2 * ii:
                    continue
                if toward[1] == 1 and c.j != 2 * jj + 1:
                    continue
                if toward[1] == -1 and c.j != 2 * jj:
                    continue
                if c.key in self.leaves:
                    out.append(c.key)
                else:
                    stack.append(c.key)
        return out


def _triangle_solid_angle(a, b, c) -> float:
    """Solid angle of a spherical triangle (van Oosterom-Strackee)."""
    num = abs(float(np.dot(a, np.cross(b, c))))
    den = 1.0 + float(a @ b) + float(b @ c) + float(a @ c)
    return 2.0 * abs(math.atan2(num, den))
