"""Assembly of stiffness, divergence, gram, and load terms.

Every velocity basis function is a scalar shape sigma times a constant unit
direction d (a coordinate axis, or the fixed unit normal of a face for
normal bubbles).  With phi = sigma_I d_I and psi = sigma_J d_J:

* symmetric-gradient product:
  2 eps(phi) : eps(psi)
    = (d_I . d_J)(grad sigma_I . grad sigma_J)
      + (d_J . grad sigma_I)(d_I . grad sigma_J)
* full-gradient product: grad phi : grad psi = (d_I . d_J)(grad s_I . grad s_J)
* divergence: div phi = d_I . grad sigma_I

Cells are processed in fixed-size chunks with one einsum per term, and
triplets are emitted in a fixed order, so reassembly is bitwise reproducible.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import QuadratureDegreeTooLow, ShapeMismatch
from .linalg import build_csr
from .mesh import Mesh
from .quadrature import face_rule_for_degree, rule_for_degree
from .spaces import (
    DofMap,
    SpaceKind,
    VelocitySpace,
    barycentric_gradients,
    eval_basis,
    eval_basis_deriv,
)

CELL_CHUNK = 512

_SHAPE_DEGREE = {
    SpaceKind.P1C: 1,
    SpaceKind.P2C: 2,
    SpaceKind.P1NC: 1,
    SpaceKind.BUBBLE: 3,
    SpaceKind.P1C_PLUS_BUBBLE: 3,
    SpaceKind.P0: 0,
}

VOLUME_RULE_DEGREE = 4  # covers products of bubble gradients
MASS_RULE_DEGREE = 6
DIV_RULE_DEGREE = 2
LOAD_RULE_DEGREE = 8
FACE_RULE_DEGREE = 4


def space_degree(vspace: VelocitySpace) -> int:
    return max(_SHAPE_DEGREE[block.dofmap.kind] for block in vspace.blocks)


@dataclass(frozen=True)
class _Layout:
    """Flattened per-cell slot tables across the blocks of a velocity space."""

    glob: np.ndarray  # (nc, L) global dof of each slot, -1 where absent
    dirs: np.ndarray  # (nc, L, 3) unit direction of each slot
    kinds: tuple  # ((SpaceKind, slice), ...) into the slot axis


def _layout(mesh: Mesh, vspace: VelocitySpace) -> _Layout:
    nc = mesh.num_cells
    glob_parts, kinds = [], []
    start = 0
    total = sum(b.dofmap.kind.local_count for b in vspace.blocks)
    dirs = np.empty((nc, total, 3))
    for block in vspace.blocks:
        nloc = block.dofmap.kind.local_count
        table = block.dofmap.cell_to_global
        glob_parts.append(np.where(table >= 0, table + block.offset, -1))
        sl = slice(start, start + nloc)
        kinds.append((block.dofmap.kind, sl))
        if block.direction == "normal":
            dirs[:, sl, :] = mesh.face_normal[mesh.cell_faces]
        else:
            e = np.zeros(3)
            e[block.direction] = 1.0
            dirs[:, sl, :] = e
        start += nloc
    return _Layout(glob=np.hstack(glob_parts), dirs=dirs, kinds=tuple(kinds))


def _shape_tables(kinds, points):
    """Values (nq, L) and barycentric derivatives (nq, L, 4) of all slots."""
    vals = [eval_basis(kind, points) for kind, _ in kinds]
    derivs = [eval_basis_deriv(kind, points) for kind, _ in kinds]
    return np.concatenate(vals, axis=-1), np.concatenate(derivs, axis=-2)


def _require_degree(rule, needed, what):
    if rule.exactness_degree < needed:
        raise QuadratureDegreeTooLow(
            f"{what} needs exactness degree {needed}, rule has {rule.exactness_degree}"
        )


def _emit_upper(glob, local):
    """COO triplets of the upper triangle (incl. diagonal) of per-cell
    symmetric blocks, skipping absent slots."""
    nc, nl = glob.shape
    rows = np.repeat(glob, nl, axis=1).reshape(nc, nl, nl)
    cols = np.tile(glob[:, None, :], (1, nl, 1))
    keep = (rows >= 0) & (cols >= 0) & (rows <= cols)
    return rows[keep], cols[keep], local[keep]


def _chunks(n, size=CELL_CHUNK):
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def _assemble_velocity_matrix(mesh, vspace, rule, term, mu=1.0):
    """Shared driver for the symmetric velocity-velocity forms."""
    needed = max(
        1,
        2 * (space_degree(vspace) - 1) if term != "mass" else 2 * space_degree(vspace),
    )
    _require_degree(rule, needed, f"{term} form")
    layout = _layout(mesh, vspace)
    vals, derivs = _shape_tables(layout.kinds, rule.points)
    grad_lam = barycentric_gradients(mesh)
    w = rule.weights
    rows, cols, data = [], [], []
    if term == "mass":
        vv = np.einsum("qi,qj,q->ij", vals, vals, w)
    for sl in _chunks(mesh.num_cells):
        d = layout.dirs[sl]
        vol = mesh.cell_volume[sl]
        dd = np.einsum("cik,cjk->cij", d, d)
        if term == "mass":
            local = vol[:, None, None] * dd * vv
        else:
            g = np.einsum("qla,cak->cqlk", derivs, grad_lam[sl])
            gg = np.einsum("cqik,cqjk,q->cij", g, g, w)
            if term == "grad":
                local = vol[:, None, None] * dd * gg
            else:  # eps-based forms
                p = np.einsum("cqik,cjk->cqij", g, d)
                t2 = np.einsum("cqij,cqji,q->cij", p, p, w)
                local = (mu * vol)[:, None, None] * (dd * gg + t2)
                if term == "eps":
                    local *= 0.5
        local = 0.5 * (local + local.transpose(0, 2, 1))  # exact local symmetry
        r, c, v = _emit_upper(layout.glob[sl], local)
        rows.append(r)
        cols.append(c)
        data.append(v)
    n = vspace.num_dofs
    upper = build_csr(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(data), (n, n)
    )
    # Mirroring the strict upper triangle keeps the matrix symmetric to the bit:
    # each off-diagonal value is stored once and copied, never re-summed.
    diag = sp.diags(upper.diagonal(), format="csr")
    strict = upper - diag
    return (strict + strict.T + diag).tocsr()


def assemble_a(mesh: Mesh, vspace: VelocitySpace, mu: float, rule=None) -> sp.csr_matrix:
    """Viscous stiffness 2 mu int eps(u):eps(v), elementwise."""
    rule = rule or rule_for_degree(VOLUME_RULE_DEGREE)
    return _assemble_velocity_matrix(mesh, vspace, rule, "a", mu=mu)


def assemble_gram(mesh: Mesh, vspace: VelocitySpace, which: str, rule=None) -> sp.csr_matrix:
    """Gram matrices: "mass" (L2), "grad" (broken gradient), "eps" (broken
    symmetric gradient)."""
    if which == "mass":
        rule = rule or rule_for_degree(MASS_RULE_DEGREE)
        return _assemble_velocity_matrix(mesh, vspace, rule, "mass")
    if which == "grad":
        rule = rule or rule_for_degree(VOLUME_RULE_DEGREE)
        return _assemble_velocity_matrix(mesh, vspace, rule, "grad")
    if which == "eps":
        rule = rule or rule_for_degree(VOLUME_RULE_DEGREE)
        return _assemble_velocity_matrix(mesh, vspace, rule, "eps", mu=1.0)
    raise ValueError(f"unknown gram matrix {which!r}")


def gram_energy(mesh: Mesh, vspace: VelocitySpace, which: str, coefficients, rule=None) -> float:
    """Gram energy of a coefficient vector, accumulated cellwise.

    Evaluates the same quadratic form as ``assemble_gram`` but as a weighted
    sum of squares over quadrature points.  Matrix-vector evaluation of the
    form bottoms out at roundoff times the matrix norm; the sum of squares
    stays meaningful down to roundoff squared, which matters when certifying
    that a field is numerically rigid under the "eps" form.
    """
    if which not in ("mass", "grad", "eps"):
        raise ValueError(f"unknown gram energy {which!r}")
    coefficients = np.asarray(getattr(coefficients, "coefficients", coefficients), dtype=float)
    if coefficients.shape != (vspace.num_dofs,):
        raise ShapeMismatch("coefficient vector does not match the velocity space")
    if which == "mass":
        rule = rule or rule_for_degree(MASS_RULE_DEGREE)
        needed = 2 * space_degree(vspace)
    else:
        rule = rule or rule_for_degree(VOLUME_RULE_DEGREE)
        needed = max(1, 2 * (space_degree(vspace) - 1))
    _require_degree(rule, needed, f"{which} energy")
    layout = _layout(mesh, vspace)
    vals, derivs = _shape_tables(layout.kinds, rule.points)
    grad_lam = barycentric_gradients(mesh)
    w = rule.weights
    total = 0.0
    for sl in _chunks(mesh.num_cells):
        glob = layout.glob[sl]
        dofs = np.where(glob >= 0, coefficients[np.clip(glob, 0, None)], 0.0)
        d = layout.dirs[sl]
        if which == "mass":
            u = np.einsum("ci,cij,qi->cqj", dofs, d, vals)
            dens = np.einsum("cqj,cqj->cq", u, u)
        else:
            g = np.einsum("qla,cak->cqlk", derivs, grad_lam[sl])
            grad = np.einsum("ci,cij,cqik->cqjk", dofs, d, g)
            if which == "eps":
                grad = 0.5 * (grad + grad.transpose(0, 1, 3, 2))
            dens = np.einsum("cqjk,cqjk->cq", grad, grad)
        total += float(np.einsum("cq,q,c->", dens, w, mesh.cell_volume[sl]))
    return total


def assemble_b(mesh: Mesh, vspace: VelocitySpace, pspace: DofMap, rule=None) -> sp.csr_matrix:
    """Divergence coupling B[T, I] = -int_T div(basis_I)."""
    rule = rule or rule_for_degree(DIV_RULE_DEGREE)
    _require_degree(rule, max(1, space_degree(vspace) - 1), "divergence form")
    layout = _layout(mesh, vspace)
    _, derivs = _shape_tables(layout.kinds, rule.points)
    grad_lam = barycentric_gradients(mesh)
    w = rule.weights
    rows, cols, data = [], [], []
    cell_ids = pspace.cell_to_global[:, 0]
    for sl in _chunks(mesh.num_cells):
        g = np.einsum("qla,cak->cqlk", derivs, grad_lam[sl])
        div = np.einsum("cqik,cik,q->ci", g, layout.dirs[sl], w)
        local = -mesh.cell_volume[sl][:, None] * div
        glob = layout.glob[sl]
        valid = glob >= 0
        rr = np.broadcast_to(cell_ids[sl][:, None], glob.shape)
        rows.append(rr[valid])
        cols.append(glob[valid])
        data.append(local[valid])
    return build_csr(
        np.concatenate(rows),
        np.concatenate(cols),
        np.concatenate(data),
        (pspace.num_dofs, vspace.num_dofs),
    )


def assemble_load(mesh: Mesh, vspace: VelocitySpace, case, mu: float) -> np.ndarray:
    """Load vector: body force over cells plus traction over Neumann faces.

    ``case`` provides ``body_force(points, mu) -> (n, 3)`` and, when the mesh
    has Neumann faces, ``traction(points, normal, mu) -> (n, 3)``.
    """
    layout = _layout(mesh, vspace)
    rule = rule_for_degree(LOAD_RULE_DEGREE)
    vals, _ = _shape_tables(layout.kinds, rule.points)
    w = rule.weights
    load = np.zeros(vspace.num_dofs)
    corners = mesh.vertices[mesh.cells]
    for sl in _chunks(mesh.num_cells):
        pts = np.einsum("qi,cik->cqk", rule.points, corners[sl])
        nq = rule.num_points
        gvals = np.asarray(case.body_force(pts.reshape(-1, 3), mu)).reshape(-1, nq, 3)
        contrib = np.einsum("cqk,cik,qi,q->ci", gvals, layout.dirs[sl], vals, w)
        contrib *= mesh.cell_volume[sl][:, None]
        glob = layout.glob[sl]
        valid = glob >= 0
        np.add.at(load, glob[valid], contrib[valid])

    neumann = mesh.neumann_faces
    if neumann.size:
        frule = face_rule_for_degree(FACE_RULE_DEGREE)
        fpts = np.einsum("qi,fik->fqk", frule.points, mesh.vertices[mesh.face_vertices[neumann]])
        cells = mesh.face_plus[neumann]
        # face quadrature points in the barycentric frame of the owning cell
        v0 = mesh.vertices[mesh.cells[cells, 0]]
        edges = np.transpose(
            mesh.vertices[mesh.cells[cells][:, 1:]] - v0[:, None, :], (0, 2, 1)
        )
        lam123 = np.linalg.solve(edges[:, None, :, :], (fpts - v0[:, None, :])[..., None])[..., 0]
        lam = np.concatenate([1.0 - lam123.sum(axis=-1, keepdims=True), lam123], axis=-1)
        shapes, _ = _shape_tables(layout.kinds, lam)  # (nf, nqf, L)
        normals = mesh.face_normal[neumann]
        nqf = frule.num_points
        tvals = np.asarray(
            case.traction(fpts.reshape(-1, 3), np.repeat(normals, nqf, axis=0), mu)
        ).reshape(-1, nqf, 3)
        contrib = np.einsum("fqk,fik,fqi,q->fi", tvals, layout.dirs[cells], shapes, frule.weights)
        contrib *= mesh.face_area[neumann][:, None]
        glob = layout.glob[cells]
        valid = glob >= 0
        np.add.at(load, glob[valid], contrib[valid])
    return load


@dataclass(frozen=True)
class StokesSystem:
    """Unconstrained discrete system over all velocity dofs."""

    mesh: Mesh
    vspace: VelocitySpace
    pspace: DofMap
    mu: float
    a: sp.csr_matrix  # (n_v, n_v)
    b: sp.csr_matrix  # (n_p, n_v)
    load: np.ndarray  # (n_v,)


def build_system(mesh: Mesh, vspace: VelocitySpace, pspace: DofMap, case, mu: float) -> StokesSystem:
    return StokesSystem(
        mesh=mesh,
        vspace=vspace,
        pspace=pspace,
        mu=mu,
        a=assemble_a(mesh, vspace, mu),
        b=assemble_b(mesh, vspace, pspace),
        load=assemble_load(mesh, vspace, case, mu),
    )


@dataclass(frozen=True)
class ReducedSystem:
    """System restricted to free dofs after shifting by a Dirichlet lifting.

    The full velocity solution is ``lifting + correction`` where the
    correction is supported on the free dofs; it does not depend on the free
    entries of the lifting.
    """

    system: StokesSystem
    free: np.ndarray
    a_ff: sp.csr_matrix
    b_f: sp.csr_matrix
    rhs_f: np.ndarray
    rhs_g: np.ndarray
    lifting: np.ndarray


def apply_dirichlet(system: StokesSystem, lifting=None) -> ReducedSystem:
    free = system.vspace.free_dofs
    if lifting is None:
        lifting = np.zeros(system.vspace.num_dofs)
    else:
        lifting = np.asarray(
            getattr(lifting, "coefficients", lifting), dtype=float
        ).copy()
    rhs_f = (system.load - system.a @ lifting)[free]
    rhs_g = -(system.b @ lifting)
    return ReducedSystem(
        system=system,
        free=free,
        a_ff=system.a[free][:, free].tocsr(),
        b_f=system.b[:, free].tocsr(),
        rhs_f=rhs_f,
        rhs_g=rhs_g,
        lifting=lifting,
    )


def expand_solution(reduced: ReducedSystem, u_f: np.ndarray) -> np.ndarray:
    u = reduced.lifting.copy()
    u[reduced.free] += u_f
    return u
