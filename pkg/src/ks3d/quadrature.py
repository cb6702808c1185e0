"""Fixed-point quadrature rules on reference simplices.

Rules are conical-product (collapsed Gauss-Jacobi) constructions: exact for
all polynomials up to the declared total degree, with all points strictly
inside the simplex and positive weights.  Points are stored as barycentric
coordinates and weights are normalized to sum to 1, so integrating f over a
cell T reads  sum_k w_k |T| f(x_k).
"""

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi

from .errors import UnsupportedDegree

SUPPORTED_DEGREES = (1, 2, 3, 4, 5, 6, 8)
SUPPORTED_FACE_DEGREES = (1, 2, 3, 4)


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature rule on the reference simplex in barycentric coordinates."""

    points: np.ndarray  # (nq, dim+1) barycentric coordinates
    weights: np.ndarray  # (nq,) positive, sums to 1
    exactness_degree: int

    @property
    def num_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1] - 1


def _gauss_01(n: int, alpha: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes/weights on (0,1) for the weight (1-t)^alpha."""
    x, w = roots_jacobi(n, alpha, 0.0)
    # map [-1,1] -> [0,1]; the factor 2^(alpha+1) absorbs (1-x)^alpha = (2(1-t))^alpha and dx
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def rule_for_degree(d: int) -> QuadratureRule:
    """Tetrahedron rule with exactness_degree >= d, fixed point count per degree."""
    if d not in SUPPORTED_DEGREES:
        raise UnsupportedDegree(f"tetrahedron quadrature degree {d} not in {SUPPORTED_DEGREES}")
    if d == 1:
        points = np.full((1, 4), 0.25)
        return QuadratureRule(points, np.ones(1), 1)
    n = (d + 2) // 2  # n-point Gauss is exact through degree 2n-1 per axis
    t1, w1 = _gauss_01(n, 2)
    t2, w2 = _gauss_01(n, 1)
    t3, w3 = _gauss_01(n, 0)
    # collapsed map: x1=s1, x2=s2(1-s1), x3=s3(1-s1)(1-s2)
    s1 = np.repeat(t1, n * n)
    s2 = np.tile(np.repeat(t2, n), n)
    s3 = np.tile(t3, n * n)
    x1 = s1
    x2 = s2 * (1.0 - s1)
    x3 = s3 * (1.0 - s1) * (1.0 - s2)
    w = (np.repeat(w1, n * n) * np.tile(np.repeat(w2, n), n) * np.tile(w3, n * n))
    w = w / w.sum()  # raw sum is |ref tet| = 1/6; normalize to 1
    points = np.column_stack([1.0 - x1 - x2 - x3, x1, x2, x3])
    return QuadratureRule(points, w, 2 * n - 1)


@lru_cache(maxsize=None)
def face_rule_for_degree(d: int) -> QuadratureRule:
    """Triangle rule with exactness_degree >= d (traction terms, face means)."""
    if d not in SUPPORTED_FACE_DEGREES:
        raise UnsupportedDegree(f"triangle quadrature degree {d} not in {SUPPORTED_FACE_DEGREES}")
    if d == 1:
        points = np.full((1, 3), 1.0 / 3.0)
        return QuadratureRule(points, np.ones(1), 1)
    n = (d + 2) // 2
    t1, w1 = _gauss_01(n, 1)
    t2, w2 = _gauss_01(n, 0)
    s1 = np.repeat(t1, n)
    s2 = np.tile(t2, n)
    x1 = s1
    x2 = s2 * (1.0 - s1)
    w = np.repeat(w1, n) * np.tile(w2, n)
    w = w / w.sum()
    points = np.column_stack([1.0 - x1 - x2, x1, x2])
    return QuadratureRule(points, w, 2 * n - 1)


def integrate(mesh, cell: int, f, rule: QuadratureRule) -> float:
    """Integrate f over one cell; f maps an (n, 3) point array to (n,) values."""
    verts = mesh.vertices[mesh.cells[cell]]  # (4, 3)
    phys = rule.points @ verts  # (nq, 3)
    vals = np.asarray(f(phys), dtype=float).reshape(rule.num_points)
    return float(mesh.cell_volume[cell] * (rule.weights @ vals))


def integrate_face(mesh, face: int, f, rule: QuadratureRule) -> float:
    """Integrate f over one face; f maps an (n, 3) point array to (n,) values."""
    verts = mesh.vertices[mesh.face_vertices[face]]  # (3, 3)
    phys = rule.points @ verts
    vals = np.asarray(f(phys), dtype=float).reshape(rule.num_points)
    return float(mesh.face_area[face] * (rule.weights @ vals))


def simplex_monomial_integral(exponents, measure: float) -> float:
    """Closed-form integral of a barycentric monomial over a d-simplex.

    For exponents a over the d+1 barycentric coordinates:
    integral = d! * |S| * prod(a_i!) / (|a| + d)!
    """
    a = tuple(int(e) for e in exponents)
    d = len(a) - 1
    num = factorial(d) * measure
    for e in a:
        num *= factorial(e)
    return num / factorial(sum(a) + d)
