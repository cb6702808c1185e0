"""Discrete Korn and inf-sup constants, degeneracy witnesses, oscillation.

The Korn constant of a velocity space is the square root of the smallest
eigenvalue of the broken symmetric-gradient gram matrix against the full
broken H1 gram matrix, over the boundary-condition-respecting dofs.  The
inf-sup constant of a velocity/pressure pairing is the square root of the
smallest eigenvalue of the pressure Schur complement (divergence coupling
against the broken gradient energy) with respect to the pressure mass
matrix.  Both come with explicit finite-dimensional witnesses: the two
``counterexample_*`` drivers build small meshes on which a documented
pairing degenerates, verify the analytic kernel fields algebraically, and
cross-check them against the spectral constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    LOAD_RULE_DEGREE,
    _chunks,
    _layout,
    _shape_tables,
    assemble_b,
    assemble_gram,
    gram_energy,
)
from .domains import octa_patch, tensor_cross_mesh, wedge_mesh
from .errors import AssertionFailed
from .linalg import factorized_spd, smallest_generalized_eigenpair
from .mesh import Mesh
from .quadrature import rule_for_degree
from .spaces import VelocitySpace, barycentric_gradients, pressure_space, velocity_space

__all__ = [
    "DEGENERACY_THRESHOLD",
    "CounterexampleReport",
    "StabilityReport",
    "counterexample_infsup",
    "counterexample_korn",
    "divergence_means",
    "infsup_constant",
    "korn_constant",
    "oscillation",
]

DEGENERACY_THRESHOLD = 1e-8
DENSE_SCHUR_MAX = 4096


@dataclass(frozen=True)
class StabilityReport:
    """One computed stability constant with its minimizing direction."""

    kind: str  # "korn" or "infsup"
    space: str
    constant: float
    vector: np.ndarray  # velocity coefficients (korn) or cell pressures (infsup)
    degenerate: bool
    level: int | None = None

    @property
    def verdict(self) -> str:
        return "degenerate" if self.degenerate else "stable"


@dataclass(frozen=True)
class CounterexampleReport:
    """Outcome of a degeneracy witness run; every check already passed."""

    kind: str
    space: str
    mesh: Mesh
    constant: float
    witness: np.ndarray
    checks: dict = field(default_factory=dict)


def _resolve_space(mesh, space):
    if isinstance(space, VelocitySpace):
        return space
    return velocity_space(mesh, space)


def korn_constant(mesh: Mesh, space, level: int | None = None) -> StabilityReport:
    """Broken Korn constant of a velocity space under its boundary conditions.

    Zero (up to roundoff) exactly when some nonzero discrete field has
    vanishing broken symmetric gradient, i.e. the space admits a spurious
    rigid-like mode.
    """
    vspace = _resolve_space(mesh, space)
    free = vspace.free_dofs
    if free.size == 0:
        raise AssertionFailed("no free velocity dofs; the Korn quotient is empty")
    e = assemble_gram(mesh, vspace, "eps")
    m = (assemble_gram(mesh, vspace, "mass") + assemble_gram(mesh, vspace, "grad")).tocsr()
    m_ff = m[free][:, free].tocsr()
    _, vec = smallest_generalized_eigenpair(e[free][:, free].tocsr(), m_ff)
    full = np.zeros(vspace.num_dofs)
    full[free] = vec
    # quotient of the minimizer, with the strain energy summed cellwise as
    # squares; the matrix form cannot certify eigenvalues below roundoff |E|
    lam = gram_energy(mesh, vspace, "eps", full) / float(vec @ (m_ff @ vec))
    constant = math.sqrt(max(lam, 0.0))
    return StabilityReport(
        "korn", vspace.name, constant, full, constant <= DEGENERACY_THRESHOLD, level
    )


def infsup_constant(mesh: Mesh, space, level: int | None = None) -> StabilityReport:
    """Discrete inf-sup constant of a velocity space against cell pressures.

    On closed cavities (no traction boundary) the constant pressure mode is
    deflated before taking the smallest eigenvalue.
    """
    vspace = _resolve_space(mesh, space)
    pspace = pressure_space(mesh)
    free = vspace.free_dofs
    if free.size == 0:
        raise AssertionFailed("no free velocity dofs; the inf-sup quotient is empty")
    g = assemble_gram(mesh, vspace, "grad")
    b = assemble_b(mesh, vspace, pspace)
    g_ff = g[free][:, free].tocsr()
    b_f = b[:, free].tocsr()
    solve = factorized_spd(g_ff)
    n_p = pspace.num_dofs
    w = mesh.cell_volume
    deflate = None if mesh.has_neumann else np.ones(n_p)
    if n_p <= DENSE_SCHUR_MAX:
        bt = b_f.toarray().T
        x = np.column_stack([solve(bt[:, j]) for j in range(n_p)])
        schur = b_f @ x
        schur = 0.5 * (schur + schur.T)
        lam, q = smallest_generalized_eigenpair(schur, np.diag(w), deflate)
    else:
        bt = b_f.T.tocsr()

        def schur_mv(q):
            return b_f @ solve(bt @ q)

        s_op = spla.LinearOperator((n_p, n_p), matvec=schur_mv)
        lam, q = smallest_generalized_eigenpair(s_op, sp.diags(w).tocsr(), deflate)
    constant = math.sqrt(max(lam, 0.0))
    return StabilityReport(
        "infsup", vspace.name, constant, q, constant <= DEGENERACY_THRESHOLD, level
    )


def divergence_means(b, velocity, cell_volumes) -> np.ndarray:
    """Per-cell means of the broken divergence of a discrete velocity."""
    u = np.asarray(getattr(velocity, "coefficients", velocity), dtype=float)
    return -(b @ u) / np.asarray(cell_volumes, dtype=float)


def oscillation(mesh: Mesh, f) -> float:
    """L2 distance of (vector or scalar) data to its cellwise means."""
    rule = rule_for_degree(LOAD_RULE_DEGREE)
    corners = mesh.vertices[mesh.cells]
    w = rule.weights
    total = 0.0
    for sl in _chunks(mesh.num_cells):
        pts = np.einsum("qi,cik->cqk", rule.points, corners[sl])
        vals = np.asarray(f(pts.reshape(-1, 3)), dtype=float)
        vals = vals.reshape(pts.shape[0], rule.num_points, -1)
        means = np.einsum("cqk,q->ck", vals, w)
        diff = vals - means[:, None, :]
        total += float(np.einsum("cqk,cqk,q,c->", diff, diff, w, mesh.cell_volume[sl]))
    return math.sqrt(total)


def _broken_gradients(mesh, vspace, coefficients) -> np.ndarray:
    """Cellwise velocity gradients at the barycenter, shape (nc, 3, 3)."""
    layout = _layout(mesh, vspace)
    lam = np.full((1, 4), 0.25)
    _, derivs = _shape_tables(layout.kinds, lam)
    g = np.einsum("qla,cak->clk", derivs, barycentric_gradients(mesh))
    slot = np.where(
        layout.glob >= 0, coefficients[np.clip(layout.glob, 0, None)], 0.0
    )
    return np.einsum("cl,clk,clm->ckm", slot, layout.dirs, g)


def counterexample_infsup() -> CounterexampleReport:
    """Checkerboard pressure annihilating the divergence coupling.

    On the 8-cell octahedral patch with continuous first and second velocity
    components and face-mean-continuous third component, the mean-free
    pressure that is +1 where the first two coordinates agree in sign kills
    b(v, q) for every admissible v; the pairing's inf-sup constant is zero.
    """
    mesh = octa_patch()
    vspace = velocity_space(mesh, "p1p1nc")
    pspace = pressure_space(mesh)
    b = assemble_b(mesh, vspace, pspace)
    b_f = b[:, vspace.free_dofs].tocsr()
    centroids = mesh.vertices[mesh.cells].mean(axis=1)
    indicator = (centroids[:, 0] * centroids[:, 1] > 0).astype(float)
    w = mesh.cell_volume
    q = indicator - (w @ indicator) / w.sum()
    scale = max(1.0, np.abs(q).max())
    checks = {}

    checks["checkerboard_residual"] = float(np.abs(b_f.T @ q).max())
    if checks["checkerboard_residual"] > 1e-13 * scale:
        raise AssertionFailed(
            f"checkerboard pressure does not annihilate the divergence coupling: "
            f"residual {checks['checkerboard_residual']:.3e}"
        )
    checks["constant_residual"] = float(np.abs(b_f.T @ np.ones(pspace.num_dofs)).max())
    if checks["constant_residual"] > 1e-13:
        raise AssertionFailed(
            f"constant pressure residual {checks['constant_residual']:.3e} on a closed cavity"
        )
    rng = np.random.default_rng(2024)
    r = rng.standard_normal(pspace.num_dofs)
    r -= (w @ r) / w.sum()
    r /= np.linalg.norm(r)
    checks["negative_control_residual"] = float(np.abs(b_f.T @ r).max())
    if checks["negative_control_residual"] <= 1e-6:
        raise AssertionFailed(
            "random mean-free pressure also annihilates the coupling; "
            "the check would not distinguish the constructed mode"
        )
    report = infsup_constant(mesh, vspace)
    if report.constant > DEGENERACY_THRESHOLD:
        raise AssertionFailed(
            f"inf-sup constant {report.constant:.3e} is not degenerate"
        )
    checks["infsup_constant"] = report.constant
    return CounterexampleReport("infsup", vspace.name, mesh, report.constant, q, checks)


def _wedge_kernel_formulas(a):
    # cell order matches the wedge construction: quadrants (+,+), (-,+),
    # (-,-), (+,-) of the last two coordinates around the shared edge
    return (
        lambda p: np.stack([a - 3 * a * p[:, 2], -a + 3 * a * p[:, 1]], axis=-1),
        lambda p: np.stack([-a + 3 * a * p[:, 2], -a - 3 * a * p[:, 1]], axis=-1),
        lambda p: np.stack([-a - 3 * a * p[:, 2], a + 3 * a * p[:, 1]], axis=-1),
        lambda p: np.stack([a + 3 * a * p[:, 2], a - 3 * a * p[:, 1]], axis=-1),
    )


def counterexample_korn(variant: str = "wedge", amplitude: float = 1.0) -> CounterexampleReport:
    """Spurious rigid-like mode of the fully nonconforming pairing.

    ``wedge``: on four cells around a shared edge, an explicit piecewise
    rigid field (cellwise rotations of alternating sign) lies in the
    face-mean-continuous space with homogeneous boundary means, has zero
    broken symmetric gradient, yet has broken gradient norm of order the
    amplitude.  ``tensor``: the analogous degeneracy on the four-cell cross
    patch, certified spectrally.
    """
    if variant not in ("wedge", "tensor"):
        raise ValueError(f"unknown counterexample variant {variant!r}")
    if variant == "tensor":
        mesh = tensor_cross_mesh()
        report = korn_constant(mesh, "p1ncnc")
        if report.constant > 1e-10:
            raise AssertionFailed(
                f"Korn constant {report.constant:.3e} on the cross patch is not degenerate"
            )
        return CounterexampleReport(
            "korn-tensor",
            "p1ncnc",
            mesh,
            report.constant,
            report.vector,
            {"korn_constant": report.constant},
        )

    a = float(amplitude)
    if a == 0.0:
        raise ValueError("amplitude must be nonzero")
    mesh = wedge_mesh()
    vspace = velocity_space(mesh, "p1ncnc")
    formulas = _wedge_kernel_formulas(a)
    tol = 1e-13 * abs(a)
    checks = {}

    # face-mean coefficients, filled from each incident cell; the two values
    # on interior faces must agree, boundary means must vanish
    face_vals = np.full((mesh.num_faces, 2), np.nan)
    jump = 0.0
    for c in range(mesh.num_cells):
        vals = formulas[c](mesh.face_centroid[mesh.cell_faces[c]])
        for k, f in enumerate(mesh.cell_faces[c]):
            if np.isnan(face_vals[f, 0]):
                face_vals[f] = vals[k]
            else:
                jump = max(jump, float(np.abs(face_vals[f] - vals[k]).max()))
    checks["interior_mean_jump"] = jump
    if jump > tol:
        raise AssertionFailed(f"face means of the kernel field jump by {jump:.3e}")
    boundary = np.abs(face_vals[mesh.dirichlet_faces]).max()
    checks["boundary_mean"] = float(boundary)
    if boundary > tol:
        raise AssertionFailed(f"kernel field has boundary face means up to {boundary:.3e}")

    coefficients = np.zeros(vspace.num_dofs)
    for block, comp in zip(vspace.blocks[1:], (0, 1)):
        coefficients[block.offset : block.offset + block.dofmap.num_dofs] = face_vals[:, comp]
    coefficients[vspace.constrained] = 0.0

    grads = _broken_gradients(mesh, vspace, coefficients)
    strain = 0.5 * (grads + np.transpose(grads, (0, 2, 1)))
    checks["strain_max"] = float(np.abs(strain).max())
    if checks["strain_max"] > tol:
        raise AssertionFailed(
            f"cellwise symmetric gradient reaches {checks['strain_max']:.3e}"
        )
    g = assemble_gram(mesh, vspace, "grad")
    checks["strain_energy"] = math.sqrt(max(gram_energy(mesh, vspace, "eps", coefficients), 0.0))
    if checks["strain_energy"] > 1e-12 * max(1.0, abs(a)):
        raise AssertionFailed(
            f"broken strain energy {checks['strain_energy']:.3e} is not negligible"
        )
    checks["gradient_norm"] = math.sqrt(float(coefficients @ (g @ coefficients)))
    if checks["gradient_norm"] < abs(a):
        raise AssertionFailed(
            f"kernel field is degenerate: broken gradient norm {checks['gradient_norm']:.3e}"
        )

    report = korn_constant(mesh, vspace)
    if report.constant > 1e-10:
        raise AssertionFailed(
            f"Korn constant {report.constant:.3e} on the wedge is not degenerate"
        )
    checks["korn_constant"] = report.constant
    m = assemble_gram(mesh, vspace, "mass") + g
    inner = float(coefficients @ (m @ report.vector))
    norms = math.sqrt(
        float(coefficients @ (m @ coefficients)) * float(report.vector @ (m @ report.vector))
    )
    checks["eigenvector_cosine"] = abs(inner) / norms
    if checks["eigenvector_cosine"] < 1.0 - 1e-8:
        raise AssertionFailed(
            f"spectral minimizer misaligned with the kernel field: "
            f"cosine {checks['eigenvector_cosine']:.12f}"
        )
    return CounterexampleReport("korn-wedge", "p1ncnc", mesh, report.constant, coefficients, checks)
