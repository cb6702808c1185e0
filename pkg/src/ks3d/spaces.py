"""Scalar and vector finite element spaces.

Scalar building blocks (per cell, barycentric coordinates lam):

* P1C: continuous piecewise linears, nodal at vertices, shapes lam_i.
* P2C: continuous piecewise quadratics, nodal at vertices and edge midpoints.
* P1NC: piecewise linears with face-mean continuity only; the shape paired
  with the face opposite local vertex i is 1 - 3 lam_i (mean 1 on that face,
  mean 0 on the other three).
* BUBBLE: cubic face bubble 60 lam_a lam_b lam_c for the face spanned by
  vertices a, b, c; identically zero on the other three faces and with mean
  exactly 1 on its own face.  Bubble dofs live only on interior and traction
  boundary faces; Dirichlet faces carry no bubble dof (sentinel -1 in the
  cell-to-global table).
* P0: piecewise constants (pressures).

Vector velocity spaces combine one scalar block per direction.  A block
direction is a coordinate axis (0, 1, 2) or "normal", meaning each dof points
along the fixed unit normal of its face (used for normal face bubbles).

Local dof order within a cell: vertex slots in cell order, then edge slots in
the pair order (0,1),(0,2),(0,3),(1,2),(1,3),(2,3), then face slots opposite
each vertex.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ShapeMismatch, UnknownSpace
from .mesh import BoundaryLabel, Mesh
from .quadrature import face_rule_for_degree, rule_for_degree

EDGE_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
FACE_TRIPLES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))  # opposite vertex i


class SpaceKind(Enum):
    P1C = "p1c"
    P2C = "p2c"
    P1NC = "p1nc"
    BUBBLE = "bubble"
    P1C_PLUS_BUBBLE = "p1c+bubble"
    P0 = "p0"

    @property
    def local_count(self) -> int:
        return _LOCAL_COUNT[self]


_LOCAL_COUNT = {
    SpaceKind.P1C: 4,
    SpaceKind.P2C: 10,
    SpaceKind.P1NC: 4,
    SpaceKind.BUBBLE: 4,
    SpaceKind.P1C_PLUS_BUBBLE: 8,
    SpaceKind.P0: 1,
}


@dataclass(frozen=True)
class DofMap:
    """Global numbering of one scalar block on a mesh."""

    kind: SpaceKind
    mesh: Mesh
    num_dofs: int
    cell_to_global: np.ndarray  # (nc, local_count), -1 marks an absent slot
    constrained: np.ndarray  # (num_dofs,) bool, True on the Dirichlet boundary


def _bubble_index(mesh: Mesh):
    """Running dof index over non-Dirichlet faces, -1 on Dirichlet faces."""
    keep = mesh.face_label != BoundaryLabel.DIRICHLET
    index = np.full(mesh.num_faces, -1, dtype=np.int64)
    index[keep] = np.arange(int(keep.sum()))
    return index, int(keep.sum())


def build_dofmap(mesh: Mesh, kind: SpaceKind) -> DofMap:
    nv, nc = mesh.num_vertices, mesh.num_cells
    if kind == SpaceKind.P1C:
        table = mesh.cells.copy()
        constrained = mesh.dirichlet_vertex.copy()
        n = nv
    elif kind == SpaceKind.P2C:
        table = np.hstack([mesh.cells, nv + mesh.cell_edges])
        constrained = np.concatenate([mesh.dirichlet_vertex, mesh.dirichlet_edge])
        n = nv + mesh.num_edges
    elif kind == SpaceKind.P1NC:
        table = mesh.cell_faces.copy()
        constrained = mesh.face_label == BoundaryLabel.DIRICHLET
        n = mesh.num_faces
    elif kind == SpaceKind.BUBBLE:
        index, n = _bubble_index(mesh)
        table = index[mesh.cell_faces]
        constrained = np.zeros(n, dtype=bool)
    elif kind == SpaceKind.P1C_PLUS_BUBBLE:
        index, nb = _bubble_index(mesh)
        bubbles = index[mesh.cell_faces]
        bubbles = np.where(bubbles >= 0, nv + bubbles, -1)
        table = np.hstack([mesh.cells, bubbles])
        constrained = np.concatenate([mesh.dirichlet_vertex, np.zeros(nb, dtype=bool)])
        n = nv + nb
    elif kind == SpaceKind.P0:
        table = np.arange(nc, dtype=np.int64)[:, None]
        constrained = np.zeros(nc, dtype=bool)
        n = nc
    else:
        raise UnknownSpace(f"unknown space kind {kind!r}")
    table = np.ascontiguousarray(table, dtype=np.int64)
    table.setflags(write=False)
    constrained.setflags(write=False)
    return DofMap(kind=kind, mesh=mesh, num_dofs=n, cell_to_global=table, constrained=constrained)


def eval_basis(kind: SpaceKind, bary) -> np.ndarray:
    """Shape function values at barycentric points; output (..., local_count)."""
    lam = np.asarray(bary, dtype=float)
    if lam.shape[-1] != 4:
        raise ShapeMismatch("barycentric points must have 4 components")
    if kind == SpaceKind.P1C:
        return lam.copy()
    if kind == SpaceKind.P2C:
        vertex = lam * (2.0 * lam - 1.0)
        edge = np.stack([4.0 * lam[..., a] * lam[..., b] for a, b in EDGE_PAIRS], axis=-1)
        return np.concatenate([vertex, edge], axis=-1)
    if kind == SpaceKind.P1NC:
        return 1.0 - 3.0 * lam
    if kind == SpaceKind.BUBBLE:
        return np.stack(
            [60.0 * lam[..., a] * lam[..., b] * lam[..., c] for a, b, c in FACE_TRIPLES],
            axis=-1,
        )
    if kind == SpaceKind.P1C_PLUS_BUBBLE:
        return np.concatenate(
            [eval_basis(SpaceKind.P1C, lam), eval_basis(SpaceKind.BUBBLE, lam)], axis=-1
        )
    if kind == SpaceKind.P0:
        return np.ones(lam.shape[:-1] + (1,))
    raise UnknownSpace(f"unknown space kind {kind!r}")


def eval_basis_deriv(kind: SpaceKind, bary) -> np.ndarray:
    """Derivatives with respect to the four barycentric coordinates,
    output (..., local_count, 4)."""
    lam = np.asarray(bary, dtype=float)
    base = lam.shape[:-1]
    if kind == SpaceKind.P1C:
        return np.broadcast_to(np.eye(4), base + (4, 4)).copy()
    if kind == SpaceKind.P2C:
        out = np.zeros(base + (10, 4))
        for i in range(4):
            out[..., i, i] = 4.0 * lam[..., i] - 1.0
        for k, (a, b) in enumerate(EDGE_PAIRS):
            out[..., 4 + k, a] = 4.0 * lam[..., b]
            out[..., 4 + k, b] = 4.0 * lam[..., a]
        return out
    if kind == SpaceKind.P1NC:
        return np.broadcast_to(-3.0 * np.eye(4), base + (4, 4)).copy()
    if kind == SpaceKind.BUBBLE:
        out = np.zeros(base + (4, 4))
        for i, (a, b, c) in enumerate(FACE_TRIPLES):
            out[..., i, a] = 60.0 * lam[..., b] * lam[..., c]
            out[..., i, b] = 60.0 * lam[..., a] * lam[..., c]
            out[..., i, c] = 60.0 * lam[..., a] * lam[..., b]
        return out
    if kind == SpaceKind.P1C_PLUS_BUBBLE:
        return np.concatenate(
            [
                eval_basis_deriv(SpaceKind.P1C, lam),
                eval_basis_deriv(SpaceKind.BUBBLE, lam),
            ],
            axis=-2,
        )
    if kind == SpaceKind.P0:
        return np.zeros(base + (1, 4))
    raise UnknownSpace(f"unknown space kind {kind!r}")


def barycentric_gradients(mesh: Mesh) -> np.ndarray:
    """Constant physical gradients of the four barycentric coordinates,
    one (4, 3) block per cell."""
    edges = mesh.vertices[mesh.cells[:, 1:]] - mesh.vertices[mesh.cells[:, :1]]
    inv_t = np.transpose(np.linalg.inv(edges), (0, 2, 1))  # rows solve E^T lam = x - v0
    grads = np.empty((mesh.num_cells, 4, 3))
    grads[:, 1:, :] = inv_t
    grads[:, 0, :] = -inv_t.sum(axis=1)
    return grads


def eval_basis_gradients(mesh: Mesh, cell: int, kind: SpaceKind, bary) -> np.ndarray:
    """Physical gradients of the shape functions of one cell,
    output (..., local_count, 3)."""
    v = mesh.vertices[mesh.cells[cell]]
    inv_m = np.linalg.inv((v[1:] - v[0]).T)  # (3, 3), row i is grad lam_{i+1}
    grad_lam = np.vstack([-inv_m.sum(axis=0), inv_m])  # (4, 3)
    return eval_basis_deriv(kind, bary) @ grad_lam


@dataclass(frozen=True)
class Block:
    """One scalar block of a velocity space with its direction."""

    dofmap: DofMap
    direction: int | str  # coordinate axis 0/1/2 or "normal"
    offset: int


@dataclass(frozen=True)
class VelocitySpace:
    name: str
    mesh: Mesh
    blocks: tuple[Block, ...]
    num_dofs: int
    constrained: np.ndarray  # (num_dofs,) bool

    @property
    def free_dofs(self) -> np.ndarray:
        return np.flatnonzero(~self.constrained)


# component layout of each velocity space, by what the dofs do
VELOCITY_SPACE_BLOCKS = {
    # continuous linears / continuous quadratics / face-mean linears
    "ks-p2": ((SpaceKind.P1C, 0), (SpaceKind.P2C, 1), (SpaceKind.P1NC, 2)),
    # middle component enriched with face bubbles instead of quadratics
    "ks-bubble": ((SpaceKind.P1C, 0), (SpaceKind.P1C_PLUS_BUBBLE, 1), (SpaceKind.P1NC, 2)),
    # continuous linears in all components plus normal face bubbles
    "br": (
        (SpaceKind.P1C, 0),
        (SpaceKind.P1C, 1),
        (SpaceKind.P1C, 2),
        (SpaceKind.BUBBLE, "normal"),
    ),
    # degraded pairings used by the instability demonstrations
    "p1p1nc": ((SpaceKind.P1C, 0), (SpaceKind.P1C, 1), (SpaceKind.P1NC, 2)),
    "p1ncnc": ((SpaceKind.P1C, 0), (SpaceKind.P1NC, 1), (SpaceKind.P1NC, 2)),
}

VELOCITY_SPACE_NAMES = tuple(VELOCITY_SPACE_BLOCKS)


def velocity_space(mesh: Mesh, name: str) -> VelocitySpace:
    try:
        layout = VELOCITY_SPACE_BLOCKS[name]
    except KeyError:
        raise UnknownSpace(
            f"unknown velocity space {name!r}; choose from {sorted(VELOCITY_SPACE_BLOCKS)}"
        ) from None
    blocks = []
    offset = 0
    constrained = []
    for kind, direction in layout:
        dofmap = build_dofmap(mesh, kind)
        blocks.append(Block(dofmap=dofmap, direction=direction, offset=offset))
        constrained.append(dofmap.constrained)
        offset += dofmap.num_dofs
    mask = np.concatenate(constrained)
    mask.setflags(write=False)
    return VelocitySpace(
        name=name, mesh=mesh, blocks=tuple(blocks), num_dofs=offset, constrained=mask
    )


def pressure_space(mesh: Mesh) -> DofMap:
    return build_dofmap(mesh, SpaceKind.P0)


def block_directions(block: Block, mesh: Mesh):
    """Direction vectors of one block's local slots.

    Returns a fixed (3,) axis vector, or an (nc, local_count, 3) array of
    face normals for "normal" blocks.
    """
    if block.direction == "normal":
        return mesh.face_normal[mesh.cell_faces]
    e = np.zeros(3)
    e[block.direction] = 1.0
    return e


@dataclass(frozen=True)
class FEFunction:
    """Coefficients of a finite element function on its space."""

    space: VelocitySpace | DofMap
    coefficients: np.ndarray


def _local_coefficients(dofmap: DofMap, coefficients: np.ndarray) -> np.ndarray:
    """Per-cell coefficient table with absent slots contributing zero."""
    table = dofmap.cell_to_global
    safe = np.where(table >= 0, table, 0)
    local = coefficients[safe]
    return np.where(table >= 0, local, 0.0)


def eval_function(fef: FEFunction, cell: int, bary) -> np.ndarray:
    """Values of a finite element function at barycentric points of one cell.

    Velocity functions return (..., 3) arrays, scalar functions (...,).
    """
    lam = np.asarray(bary, dtype=float)
    if isinstance(fef.space, DofMap):
        dofmap = fef.space
        values = eval_basis(dofmap.kind, lam)
        local = _local_coefficients(dofmap, fef.coefficients)[cell]
        return values @ local
    space = fef.space
    out = np.zeros(lam.shape[:-1] + (3,))
    for block in space.blocks:
        dofmap = block.dofmap
        shapes = eval_basis(dofmap.kind, lam)  # (..., nloc)
        coeffs = fef.coefficients[block.offset : block.offset + dofmap.num_dofs]
        local = _local_coefficients(dofmap, coeffs)[cell]  # (nloc,)
        if block.direction == "normal":
            normals = space.mesh.face_normal[space.mesh.cell_faces[cell]]  # (nloc, 3)
            out += np.einsum("...i,i,ik->...k", shapes, local, normals)
        else:
            out[..., block.direction] += shapes @ local
    return out


def _face_quad_points(mesh: Mesh, faces: np.ndarray, rule):
    """Physical quadrature points on the given faces, (len(faces), nq, 3)."""
    corners = mesh.vertices[mesh.face_vertices[faces]]  # (nfq, 3, 3)
    return np.einsum("qi,fik->fqk", rule.points, corners)


def _face_means(mesh: Mesh, faces: np.ndarray, f, rule) -> np.ndarray:
    pts = _face_quad_points(mesh, faces, rule)
    vals = np.asarray(f(pts.reshape(-1, 3))).reshape(len(faces), rule.num_points)
    return vals @ rule.weights


def _interpolate_scalar(dofmap: DofMap, f) -> np.ndarray:
    mesh = dofmap.mesh
    kind = dofmap.kind
    if kind == SpaceKind.P1C:
        return np.asarray(f(mesh.vertices), dtype=float)
    if kind == SpaceKind.P2C:
        mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
        return np.concatenate([np.asarray(f(mesh.vertices)), np.asarray(f(mids))]).astype(float)
    if kind == SpaceKind.P1NC:
        rule = face_rule_for_degree(4)
        return _face_means(mesh, np.arange(mesh.num_faces), f, rule)
    if kind == SpaceKind.P0:
        rule = rule_for_degree(4)
        pts = np.einsum("qi,cik->cqk", rule.points, mesh.vertices[mesh.cells])
        vals = np.asarray(f(pts.reshape(-1, 3))).reshape(mesh.num_cells, rule.num_points)
        return vals @ rule.weights
    if kind in (SpaceKind.BUBBLE, SpaceKind.P1C_PLUS_BUBBLE):
        index, nb = _bubble_index(mesh)
        faces = np.flatnonzero(index >= 0)
        rule = face_rule_for_degree(4)
        means = _face_means(mesh, faces, f, rule)
        vertex_values = np.asarray(f(mesh.vertices), dtype=float)
        # face mean of the vertex interpolant is the vertex average on the face
        linear_means = vertex_values[mesh.face_vertices[faces]].mean(axis=1)
        bubble = means - linear_means
        if kind == SpaceKind.BUBBLE:
            return bubble
        return np.concatenate([vertex_values, bubble])
    raise UnknownSpace(f"unknown space kind {kind!r}")


def interpolate(space, f) -> FEFunction:
    """Canonical interpolation of a smooth (vectorized) function.

    Scalar spaces take f mapping (n, 3) points to (n,) values; velocity
    spaces take f mapping (n, 3) to (n, 3).  Bubble dofs absorb the face-mean
    defect left by the vertex-interpolant part, so face means of the
    interpolant match those of f on every face carrying a bubble dof.
    """
    if isinstance(space, DofMap):
        return FEFunction(space, _interpolate_scalar(space, f))
    mesh = space.mesh
    parts = []
    for block in space.blocks:
        if block.direction == "normal":
            index, _ = _bubble_index(mesh)
            faces = np.flatnonzero(index >= 0)
            rule = face_rule_for_degree(4)
            normals = mesh.face_normal[faces]
            pts = _face_quad_points(mesh, faces, rule)
            vals = np.asarray(f(pts.reshape(-1, 3))).reshape(len(faces), rule.num_points, 3)
            means = np.einsum("fqk,fk,q->f", vals, normals, rule.weights)
            vertex_values = np.asarray(f(mesh.vertices), dtype=float)  # (nv, 3)
            linear = vertex_values[mesh.face_vertices[faces]].mean(axis=1)  # (nfq, 3)
            linear_means = np.einsum("fk,fk->f", linear, normals)
            parts.append(means - linear_means)
        else:
            i = block.direction
            parts.append(
                _interpolate_scalar(block.dofmap, lambda p, _i=i: np.asarray(f(p))[:, _i])
            )
    return FEFunction(space, np.concatenate(parts))
