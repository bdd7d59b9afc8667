"""Quadrature rules on polytopal elements and faces.

Cell rules are assembled by mapping a symmetric reference-triangle rule to
every simplex of the element's centroid fan.  The reference rule is a
collapsed Gauss-Legendre x Gauss-Jacobi product (all weights positive, any
requested exactness), symmetrized over the three rotations of the triangle.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

MAX_EXACTNESS = 60


class QuadratureCapabilityError(Exception):
    """Requested exactness beyond what this module provides."""


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray    # (n, 2) physical coordinates
    weights: np.ndarray   # (n,), positive, summing to the domain measure
    exactness: int


def _check_exactness(d: int):
    if d < 0:
        raise ValueError("exactness must be nonnegative")
    if d > MAX_EXACTNESS:
        raise QuadratureCapabilityError(
            f"exactness {d} beyond supported maximum {MAX_EXACTNESS}")


@lru_cache(maxsize=None)
def reference_triangle_rule(exactness: int) -> tuple[np.ndarray, np.ndarray]:
    """Rule on the unit reference triangle {x, y >= 0, x + y <= 1}."""
    _check_exactness(exactness)
    n = max(1, (exactness + 2) // 2)
    xg, wg = leggauss(n)
    u = 0.5 * (xg + 1.0)
    wu = 0.5 * wg
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    v = 0.5 * (xj + 1.0)
    wv = 0.25 * wj
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    x = (U * (1.0 - V)).ravel()
    y = V.ravel()
    w = W.ravel()
    # symmetrize over the cyclic vertex rotations of the triangle
    pts = np.concatenate([
        np.column_stack([x, y]),
        np.column_stack([y, 1.0 - x - y]),
        np.column_stack([1.0 - x - y, x]),
    ])
    wts = np.concatenate([w, w, w]) / 3.0
    return pts, wts


def simplex_rule(tri: np.ndarray, exactness: int) -> QuadratureRule:
    """Map the reference rule onto one positively oriented triangle (3, 2)."""
    ref_pts, ref_w = reference_triangle_rule(exactness)
    v0, v1, v2 = tri
    jac = (v1[0] - v0[0]) * (v2[1] - v0[1]) - (v2[0] - v0[0]) * (v1[1] - v0[1])
    pts = v0 + np.outer(ref_pts[:, 0], v1 - v0) + np.outer(ref_pts[:, 1], v2 - v0)
    return QuadratureRule(points=pts, weights=ref_w * jac, exactness=exactness)


def cell_rule(element, exactness: int) -> QuadratureRule:
    """Quadrature over a polytopal element via its simplicial submesh."""
    _check_exactness(exactness)
    ref_pts, ref_w = reference_triangle_rule(exactness)
    tris = element.simplices
    v0 = tris[:, 0]
    e1 = tris[:, 1] - v0
    e2 = tris[:, 2] - v0
    jac = e1[:, 0] * e2[:, 1] - e2[:, 0] * e1[:, 1]
    pts = (v0[:, None, :] + ref_pts[None, :, 0, None] * e1[:, None, :]
           + ref_pts[None, :, 1, None] * e2[:, None, :])
    wts = ref_w[None, :] * jac[:, None]
    return QuadratureRule(points=pts.reshape(-1, 2), weights=wts.ravel(),
                          exactness=exactness)


def segment_rule(pa, pb, exactness: int) -> QuadratureRule:
    """Gauss-Legendre rule on the segment [pa, pb]; weights sum to its length."""
    _check_exactness(exactness)
    n = max(1, (exactness + 2) // 2)
    xg, wg = leggauss(n)
    pa = np.asarray(pa, dtype=float)
    pb = np.asarray(pb, dtype=float)
    mid = 0.5 * (pa + pb)
    half = 0.5 * (pb - pa)
    pts = mid[None, :] + np.outer(xg, half)
    length = float(np.hypot(*(pb - pa)))
    return QuadratureRule(points=pts, weights=wg * (length / 2.0), exactness=exactness)


def face_rule(mesh, face_id: int, exactness: int) -> QuadratureRule:
    f = mesh.faces[face_id]
    pa = mesh.vertices[f.vertices[0]]
    pb = mesh.vertices[f.vertices[1]]
    return segment_rule(pa, pb, exactness)
