"""Closed-form Stokes solutions and the data they manufacture.

Each case stores its velocity and pressure as jet-valued expressions, so
body forces, boundary tractions, and exact gradients all come from the
same formulas with machine-accurate derivatives.  The four built-in
cases cover smooth flow in a unit cube with a traction boundary, two
polynomial flows in a larger cube, and a corner-singular flow in an
L-shaped prism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import LOAD_RULE_DEGREE, _chunks, _layout, _shape_tables
from .errors import UnknownCase
from .jets import Jet3, atan2
from .mesh import Mesh
from .quadrature import rule_for_degree
from .spaces import DofMap, VelocitySpace, barycentric_gradients

__all__ = [
    "CORNER_ANGLE",
    "CORNER_EXPONENT",
    "CASE_NAMES",
    "ErrorNorms",
    "ManufacturedCase",
    "case_library",
    "corner_potential",
    "error_norms",
    "eval_corner_potential",
]

# Smallest positive exponent solving the angular eigenvalue problem for a
# 270-degree re-entrant corner with no-slip walls; the velocity scales like
# r**CORNER_EXPONENT near the edge.
CORNER_EXPONENT = 0.544483736782464
CORNER_ANGLE = 1.5 * math.pi

# small enough that one jet product's work set stays cache-resident
_POINT_CHUNK = 4096


@dataclass(frozen=True)
class ManufacturedCase:
    """A Stokes solution given in closed form.

    ``fields`` maps three coordinate jets to the jets ``(u1, u2, u3, p)``.
    Everything else (values, gradients, momentum forcing, traction) is
    derived from those expansions, so the data fed to the solver is exactly
    consistent with the reported errors.
    """

    name: str
    fields: object

    def _jets(self, points):
        x, y, z = Jet3.variables(points)
        return self.fields(x, y, z)

    def _chunked(self, points, fn, tail):
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        out = np.empty((pts.shape[0],) + tail)
        for start in range(0, max(pts.shape[0], 1), _POINT_CHUNK):
            sl = slice(start, start + _POINT_CHUNK)
            if pts[sl].shape[0]:
                out[sl] = fn(pts[sl])
        return out

    def velocity(self, points) -> np.ndarray:
        def fn(pts):
            u1, u2, u3, _ = self._jets(pts)
            return np.stack([u1.value, u2.value, u3.value], axis=-1)

        return self._chunked(points, fn, (3,))

    def velocity_gradient(self, points) -> np.ndarray:
        """(n, 3, 3) array with entry [n, i, j] = du_i/dx_j."""

        def fn(pts):
            jets = self._jets(pts)
            return np.stack([jets[i].gradient.T for i in range(3)], axis=1)

        return self._chunked(points, fn, (3, 3))

    def pressure(self, points) -> np.ndarray:
        return self._chunked(points, lambda pts: self._jets(pts)[3].value, ())

    def sample(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Velocity (n, 3), velocity gradient (n, 3, 3), and pressure (n,)
        from a single jet evaluation per chunk."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        n = pts.shape[0]
        u = np.empty((n, 3))
        grad = np.empty((n, 3, 3))
        p = np.empty(n)
        for start in range(0, max(n, 1), _POINT_CHUNK):
            sl = slice(start, start + _POINT_CHUNK)
            if pts[sl].shape[0] == 0:
                continue
            jets = self._jets(pts[sl])
            for i in range(3):
                u[sl, i] = jets[i].value
                grad[sl, i] = jets[i].gradient.T
            p[sl] = jets[3].value
        return u, grad, p

    def divergence(self, points) -> np.ndarray:
        grad = self.velocity_gradient(points)
        return np.trace(grad, axis1=1, axis2=2)

    def body_force(self, points, mu: float) -> np.ndarray:
        """Momentum forcing -mu (lap u + grad div u) + grad p."""

        def fn(pts):
            u1, u2, u3, p = self._jets(pts)
            u = (u1, u2, u3)
            eye = np.eye(3, dtype=int)
            g = np.empty((u1.num_points, 3))
            for i in range(3):
                lap = sum(u[i].derivative(tuple(2 * eye[j])) for j in range(3))
                grad_div = sum(
                    u[j].derivative(tuple(eye[i] + eye[j])) for j in range(3)
                )
                g[:, i] = -mu * (lap + grad_div) + p.derivative(tuple(eye[i]))
            return g

        return self._chunked(points, fn, (3,))

    def traction(self, points, normals, mu: float) -> np.ndarray:
        """Normal stress (2 mu eps(u) - p I) n for outward unit normals n."""
        normals = np.asarray(normals, dtype=float).reshape(-1, 3)
        grad = self.velocity_gradient(points)
        strain = 0.5 * (grad + np.transpose(grad, (0, 2, 1)))
        p = self.pressure(points)
        tn = 2.0 * mu * np.einsum("nij,nj->ni", strain, normals)
        return tn - p[:, None] * normals


def _zero(like: Jet3) -> Jet3:
    return Jet3.constant(np.zeros(like.num_points))


def _fields_cube1(x, y, z):
    # divergence-free swirl in the unit cube, vanishing on the whole boundary
    pi = math.pi
    sx, cx = (x * pi).sin(), (x * pi).cos()
    sy, cy = (y * pi).sin(), (y * pi).cos()
    sz = (z * pi).sin()
    u1 = pi * sx * sx * cy * sy * sz
    u2 = -pi * cx * sx * sy * sy * sz
    return u1, u2, _zero(x), _zero(x)


def _fields_cube2(x, y, z):
    u1 = 10.0 * x * y**4 + 10.0 * x * z**4 - 4.0 * x**5
    u2 = 10.0 * y * x**4 + 10.0 * y * z**4 - 4.0 * y**5
    u3 = 10.0 * z * x**4 + 10.0 * z * y**4 - 4.0 * z**5
    p = (
        -60.0 * x**2 * y**2
        - 60.0 * x**2 * z**2
        - 60.0 * y**2 * z**2
        + 20.0 * x**4
        + 20.0 * y**4
        + 20.0 * z**4
    )
    return u1, u2, u3, p


def _fields_cube3(x, y, z):
    bx = x * x - 1.0
    by = y * y - 1.0
    bz = z * z - 1.0
    u1 = 2.0 * y * z * bx * bx * by * bz
    u2 = -x * z * bx * by * by * bz
    u3 = -x * y * bx * by * bz * bz
    return u1, u2, u3, x * y * z


def _angle_profile(theta: Jet3) -> Jet3:
    # angular factor of the corner singularity; vanishes with its first
    # derivative on both walls of the 270-degree corner
    am = CORNER_EXPONENT - 1.0
    ap = CORNER_EXPONENT + 1.0
    lead = math.sin(am * CORNER_ANGLE) / am - math.sin(ap * CORNER_ANGLE) / ap
    trail = math.cos(am * CORNER_ANGLE) - math.cos(ap * CORNER_ANGLE)
    cos_diff = (theta * am).cos() - (theta * ap).cos()
    sin_comb = (theta * am).sin() / am - (theta * ap).sin() / ap
    return cos_diff * lead - sin_comb * trail


def corner_potential(x: Jet3, y: Jet3) -> Jet3:
    """In-plane stream-function weight for the L-shaped domain.

    Squared bump factors pin the outer box; the radial power times the
    angular profile carries the corner singularity.  On the re-entrant edge
    itself the jet is clamped to zero, matching the limit of the field.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = x * x + y * y
        edge = r2.value < 1e-24  # squared distance stays NaN-free at the edge
        r = r2.sqrt()
        theta = atan2(y, x)
        theta = theta + 2.0 * math.pi * (theta.value < 0.0)
        bump = (x * x - 1.0) ** 2 * (y * y - 1.0) ** 2
        pot = bump * r.power(1.0 + CORNER_EXPONENT) * _angle_profile(theta)
    coef = pot.coef
    coef[:, edge] = 0.0
    return Jet3(coef, pot.order)


def eval_corner_potential(x1, x2) -> np.ndarray:
    """Point values of the corner stream-function weight."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    pts = np.stack([x1, x2, np.zeros_like(x1)], axis=-1)
    x, y, _ = Jet3.variables(pts)
    return corner_potential(x, y).value


def _fields_lshape(x, y, z):
    # velocity is the curl of ((1-z^2)^2 w, cos(pi z) w, z w) with w the
    # corner potential; automatically divergence-free
    pot = corner_potential(x, y)
    d1 = pot.partial(0)
    d2 = pot.partial(1)
    pi = math.pi
    one_mz2 = 1.0 - z * z
    u1 = z * d2 + pi * (z * pi).sin() * pot
    u2 = -4.0 * z * one_mz2 * pot - z * d1
    u3 = (z * pi).cos() * d1 - one_mz2 * one_mz2 * d2
    return u1, u2, u3, _zero(x)


CASES = {
    "cube1": ManufacturedCase("cube1", _fields_cube1),
    "cube2": ManufacturedCase("cube2", _fields_cube2),
    "cube3": ManufacturedCase("cube3", _fields_cube3),
    "lshape": ManufacturedCase("lshape", _fields_lshape),
}

CASE_NAMES = tuple(CASES)


def case_library(name: str) -> ManufacturedCase:
    try:
        return CASES[name]
    except KeyError:
        raise UnknownCase(f"unknown case {name!r}") from None


@dataclass(frozen=True)
class ErrorNorms:
    h1: float  # broken H1 seminorm of the velocity error
    l2_velocity: float
    l2_pressure: float


def error_norms(
    case: ManufacturedCase,
    mesh: Mesh,
    vspace: VelocitySpace,
    pspace: DofMap,
    velocity,
    pressure,
) -> ErrorNorms:
    """Errors of a discrete solution against the case's exact fields.

    ``velocity`` and ``pressure`` are coefficient vectors (or FEFunctions).
    All integrals use the same high-order volume rule as the load assembly.
    """
    u_coef = np.asarray(getattr(velocity, "coefficients", velocity), dtype=float)
    p_coef = np.asarray(getattr(pressure, "coefficients", pressure), dtype=float)
    rule = rule_for_degree(LOAD_RULE_DEGREE)
    layout = _layout(mesh, vspace)
    vals, derivs = _shape_tables(layout.kinds, rule.points)
    grad_lam = barycentric_gradients(mesh)
    corners = mesh.vertices[mesh.cells]
    w = rule.weights
    cell_p = p_coef[pspace.cell_to_global[:, 0]]
    slot_coef = np.where(layout.glob >= 0, u_coef[np.clip(layout.glob, 0, None)], 0.0)
    h1_sq = l2u_sq = l2p_sq = 0.0
    for sl in _chunks(mesh.num_cells):
        pts = np.einsum("qi,cik->cqk", rule.points, corners[sl])
        flat = pts.reshape(-1, 3)
        vol = mesh.cell_volume[sl]
        c = slot_coef[sl]
        d = layout.dirs[sl]
        uh = np.einsum("cl,clk,ql->cqk", c, d, vals)
        g = np.einsum("qla,cak->cqlk", derivs, grad_lam[sl])
        guh = np.einsum("cl,clk,cqlm->cqkm", c, d, g)
        u_ex, grad_ex, p_ex = case.sample(flat)
        du = uh - u_ex.reshape(uh.shape)
        dg = guh - grad_ex.reshape(guh.shape)
        dp = cell_p[sl][:, None] - p_ex.reshape(pts.shape[:2])
        l2u_sq += float(np.einsum("cqk,cqk,q,c->", du, du, w, vol))
        h1_sq += float(np.einsum("cqkm,cqkm,q,c->", dg, dg, w, vol))
        l2p_sq += float(np.einsum("cq,cq,q,c->", dp, dp, w, vol))
    return ErrorNorms(math.sqrt(h1_sq), math.sqrt(l2u_sq), math.sqrt(l2p_sq))
