"""Tetrahedral meshes: construction, red refinement, validity checks.

A Mesh is immutable after construction.  Faces are deduplicated by their
sorted vertex triple and carry a fixed unit normal pointing out of the
incident cell with the smaller index (that cell is ``T_plus``); boundary
faces point outward.  Checks for the two mesh assumptions used by the
stability theory are provided:

* ``check_H2``: no interior face may have all three vertices on the domain
  boundary, and the mesh must consist of more than one cell.
* ``check_H1``: every horizontal Dirichlet face (|normal_z| = 1) must be
  anchored to the rest of the Dirichlet boundary through condition (a) or (b)
  below; isolated horizontal Dirichlet "islands" are reported.
"""

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvertedCell, NonConforming, UnclassifiedBoundaryFace

DUPLICATE_VERTEX_TOL = 1e-12
HORIZONTAL_TOL = 1e-12

# local faces opposite each local vertex, and local edges in lexicographic order
_LOCAL_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
_LOCAL_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])


class BoundaryLabel(IntEnum):
    INTERIOR = 0
    DIRICHLET = 1
    NEUMANN = 2


@dataclass(frozen=True)
class Mesh:
    """Conforming tetrahedral mesh with face/edge connectivity."""

    vertices: np.ndarray  # (nv, 3)
    cells: np.ndarray  # (nc, 4), positively oriented
    face_vertices: np.ndarray  # (nf, 3), sorted triples
    face_plus: np.ndarray  # (nf,) index of T_plus
    face_minus: np.ndarray  # (nf,) index of T_minus, -1 on the boundary
    face_normal: np.ndarray  # (nf, 3) unit normal out of T_plus
    face_area: np.ndarray  # (nf,)
    face_diameter: np.ndarray  # (nf,)
    face_centroid: np.ndarray  # (nf, 3)
    face_label: np.ndarray  # (nf,) BoundaryLabel values
    cell_faces: np.ndarray  # (nc, 4), entry i is the face opposite local vertex i
    cell_volume: np.ndarray  # (nc,)
    cell_diameter: np.ndarray  # (nc,)
    edges: np.ndarray  # (ne, 2), sorted pairs in lexicographic order
    cell_edges: np.ndarray  # (nc, 6), local edge order (0,1),(0,2),(0,3),(1,2),(1,3),(2,3)
    boundary_vertex: np.ndarray  # (nv,) bool
    dirichlet_vertex: np.ndarray  # (nv,) bool: vertex lies on a Dirichlet face
    dirichlet_edge: np.ndarray  # (ne,) bool: edge of a Dirichlet face

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def num_faces(self) -> int:
        return self.face_vertices.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def h_max(self) -> float:
        return float(self.cell_diameter.max())

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_minus >= 0)

    @property
    def dirichlet_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_label == BoundaryLabel.DIRICHLET)

    @property
    def neumann_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_label == BoundaryLabel.NEUMANN)

    @property
    def has_neumann(self) -> bool:
        return bool((self.face_label == BoundaryLabel.NEUMANN).any())


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


def _signed_volumes(vertices, cells):
    edges = vertices[cells[:, 1:]] - vertices[cells[:, :1]]
    return np.linalg.det(edges) / 6.0


def _check_no_hanging_vertices(vertices, face_vertices, face_centroid, face_diameter):
    """A vertex lying on a face it does not span makes the mesh non-conforming."""
    tree = cKDTree(vertices)
    a = vertices[face_vertices[:, 0]]
    b = vertices[face_vertices[:, 1]]
    c = vertices[face_vertices[:, 2]]
    candidates = tree.query_ball_point(face_centroid, r=face_diameter, workers=-1)
    for f, cand in enumerate(candidates):
        own = set(face_vertices[f])
        extra = [v for v in cand if v not in own]
        if not extra:
            continue
        u, w = b[f] - a[f], c[f] - a[f]
        normal = np.cross(u, w)
        normal /= np.linalg.norm(normal)
        tol = 1e-9 * face_diameter[f]
        for v in extra:
            d = vertices[v] - a[f]
            if abs(d @ normal) > tol:
                continue
            # barycentric coordinates of the in-plane projection
            m = np.array([[u @ u, u @ w], [u @ w, w @ w]])
            rhs = np.array([d @ u, d @ w])
            s, t = np.linalg.solve(m, rhs)
            if s >= -1e-9 and t >= -1e-9 and s + t <= 1.0 + 1e-9:
                raise NonConforming(
                    f"vertex {v} lies on face {tuple(int(i) for i in face_vertices[f])}"
                )


def _build(vertices, cells, classify=None, face_label_lookup=None, validate=True):
    """Shared mesh constructor.

    Boundary labels come from ``face_label_lookup`` (sorted vertex triple ->
    BoundaryLabel) when given, otherwise from ``classify`` (face centroid ->
    BoundaryLabel).
    """
    vertices = np.ascontiguousarray(vertices, dtype=float)
    cells = np.ascontiguousarray(cells, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise NonConforming("vertices must be an (n, 3) array")
    if cells.ndim != 2 or cells.shape[1] != 4:
        raise NonConforming("cells must be an (n, 4) array")
    nv = vertices.shape[0]
    if cells.min(initial=0) < 0 or cells.max(initial=-1) >= nv:
        raise NonConforming("cell vertex index out of range")
    used = np.zeros(nv, dtype=bool)
    used[cells] = True
    if not used.all():
        raise NonConforming(f"vertex {int(np.flatnonzero(~used)[0])} not referenced by any cell")

    if validate:
        tree = cKDTree(vertices)
        pairs = tree.query_pairs(r=DUPLICATE_VERTEX_TOL)
        if pairs:
            i, j = sorted(next(iter(pairs)))
            raise NonConforming(f"duplicate vertices {i} and {j}")

    vols = _signed_volumes(vertices, cells)
    if (vols <= 0).any():
        bad = int(np.argmin(vols))
        raise InvertedCell(f"cell {bad} has signed volume {vols[bad]:.3e}")

    # deduplicate faces by sorted vertex triple; local face i is opposite vertex i
    all_faces = np.sort(cells[:, _LOCAL_FACES], axis=2).reshape(-1, 3)
    face_vertices, inverse = np.unique(all_faces, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    nf = face_vertices.shape[0]
    cell_faces = inverse.reshape(-1, 4)

    counts = np.bincount(inverse, minlength=nf)
    if (counts > 2).any():
        raise NonConforming(f"face {int(np.argmax(counts))} shared by more than two cells")
    face_plus = np.full(nf, -1, dtype=np.int64)
    face_minus = np.full(nf, -1, dtype=np.int64)
    owner = np.repeat(np.arange(cells.shape[0]), 4)
    order = np.argsort(inverse, kind="stable")
    sorted_faces = inverse[order]
    sorted_owner = owner[order]
    first = np.searchsorted(sorted_faces, np.arange(nf), side="left")
    face_plus[:] = sorted_owner[first]
    second_mask = counts == 2
    face_minus[second_mask] = sorted_owner[first[second_mask] + 1]
    swap = second_mask & (face_minus < face_plus)
    face_plus[swap], face_minus[swap] = face_minus[swap], face_plus[swap]

    a = vertices[face_vertices[:, 0]]
    b = vertices[face_vertices[:, 1]]
    c = vertices[face_vertices[:, 2]]
    cross = np.cross(b - a, c - a)
    face_area = 0.5 * np.linalg.norm(cross, axis=1)
    face_normal = cross / np.linalg.norm(cross, axis=1)[:, None]
    face_centroid = (a + b + c) / 3.0
    edge_len = np.stack(
        [
            np.linalg.norm(b - a, axis=1),
            np.linalg.norm(c - a, axis=1),
            np.linalg.norm(c - b, axis=1),
        ]
    )
    face_diameter = edge_len.max(axis=0)

    # orient each normal out of T_plus
    cell_centroid = vertices[cells].mean(axis=1)
    outward = face_centroid - cell_centroid[face_plus]
    flip = np.einsum("fk,fk->f", face_normal, outward) < 0
    face_normal[flip] *= -1.0

    if validate:
        _check_no_hanging_vertices(vertices, face_vertices, face_centroid, face_diameter)

    boundary = face_minus < 0
    face_label = np.full(nf, BoundaryLabel.INTERIOR, dtype=np.int8)
    if face_label_lookup is not None:
        for f in np.flatnonzero(boundary):
            key = tuple(int(v) for v in face_vertices[f])
            label = face_label_lookup.get(key)
            if label is None or label == BoundaryLabel.INTERIOR:
                raise UnclassifiedBoundaryFace(f"boundary face {key} has no label")
            face_label[f] = label
    elif classify is not None:
        for f in np.flatnonzero(boundary):
            label = classify(face_centroid[f])
            if label is None or label == BoundaryLabel.INTERIOR:
                raise UnclassifiedBoundaryFace(
                    f"boundary face with centroid {face_centroid[f]} has no label"
                )
            face_label[f] = label
    elif boundary.any():
        raise UnclassifiedBoundaryFace("mesh has boundary faces but no classifier was given")

    cell_volume = vols
    vv = vertices[cells]  # (nc, 4, 3)
    diffs = vv[:, :, None, :] - vv[:, None, :, :]
    cell_diameter = np.sqrt((diffs**2).sum(axis=3).max(axis=(1, 2)))

    all_edges = np.sort(cells[:, _LOCAL_EDGES], axis=2).reshape(-1, 2)
    edges, edge_inverse = np.unique(all_edges, axis=0, return_inverse=True)
    cell_edges = edge_inverse.reshape(-1).reshape(-1, 6)

    boundary_vertex = np.zeros(nv, dtype=bool)
    boundary_vertex[face_vertices[boundary]] = True
    dirichlet = face_label == BoundaryLabel.DIRICHLET
    dirichlet_vertex = np.zeros(nv, dtype=bool)
    dirichlet_vertex[face_vertices[dirichlet]] = True
    dirichlet_edge = np.zeros(edges.shape[0], dtype=bool)
    if dirichlet.any():
        dpairs = np.sort(
            face_vertices[dirichlet][:, [[0, 1], [0, 2], [1, 2]]].reshape(-1, 2), axis=1
        )
        edge_ids = np.searchsorted(
            edges[:, 0] * (nv + 1) + edges[:, 1], dpairs[:, 0] * (nv + 1) + dpairs[:, 1]
        )
        dirichlet_edge[edge_ids] = True

    _freeze(
        vertices, cells, face_vertices, face_plus, face_minus, face_normal, face_area,
        face_diameter, face_centroid, face_label, cell_faces, cell_volume, cell_diameter,
        edges, cell_edges, boundary_vertex, dirichlet_vertex, dirichlet_edge,
    )
    return Mesh(
        vertices=vertices,
        cells=cells,
        face_vertices=face_vertices,
        face_plus=face_plus,
        face_minus=face_minus,
        face_normal=face_normal,
        face_area=face_area,
        face_diameter=face_diameter,
        face_centroid=face_centroid,
        face_label=face_label,
        cell_faces=cell_faces,
        cell_volume=cell_volume,
        cell_diameter=cell_diameter,
        edges=edges,
        cell_edges=cell_edges,
        boundary_vertex=boundary_vertex,
        dirichlet_vertex=dirichlet_vertex,
        dirichlet_edge=dirichlet_edge,
    )


def build_mesh(vertices, cells, classify) -> Mesh:
    """Build a conforming mesh; classify maps boundary-face centroids to labels."""
    return _build(vertices, cells, classify=classify)


def barycentric_coordinates(mesh: Mesh, cell: int, points) -> np.ndarray:
    """Barycentric coordinates of physical points with respect to one cell."""
    v = mesh.vertices[mesh.cells[cell]]
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lam123 = np.linalg.solve((v[1:] - v[0]).T, (pts - v[0]).T).T
    lam0 = 1.0 - lam123.sum(axis=1)
    out = np.column_stack([lam0, lam123])
    return out[0] if np.asarray(points).ndim == 1 else out


def orient_cells(cells, vertices):
    """Swap the last two vertices of cells with negative signed volume.

    Keeps the cell order and vertex sets, so region-based identifications
    (which cell covers which octant) survive.
    """
    cells = np.array(cells, dtype=np.int64)
    vols = _signed_volumes(vertices, cells)
    neg = vols < 0
    cells[neg, 2], cells[neg, 3] = cells[neg, 3], cells[neg, 2].copy()
    return cells


def red_refine(mesh: Mesh) -> Mesh:
    """Split every cell into 8 children (4 corner tets + octahedron split).

    The octahedron is cut along its shortest interior diagonal; exact length
    ties are broken by the smallest sorted pair of midpoint vertex indices.
    Boundary labels are inherited from the parent faces.
    """
    nv = mesh.num_vertices
    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, midpoints])

    # midpoint index of the parent edge between local vertices a and b
    local_pair_to_edge = {(0, 1): 0, (0, 2): 1, (0, 3): 2, (1, 2): 3, (1, 3): 4, (2, 3): 5}
    mids = nv + mesh.cell_edges  # (nc, 6)

    children = []
    for t in range(mesh.num_cells):
        g = mesh.cells[t]
        m = {}
        for (la, lb), e in local_pair_to_edge.items():
            m[(la, lb)] = mids[t, e]
            m[(lb, la)] = mids[t, e]
        children.append([g[0], m[0, 1], m[0, 2], m[0, 3]])
        children.append([g[1], m[0, 1], m[1, 2], m[1, 3]])
        children.append([g[2], m[0, 2], m[1, 2], m[2, 3]])
        children.append([g[3], m[0, 3], m[1, 3], m[2, 3]])
        # octahedron diagonals pair midpoints of opposite parent edges
        diagonals = [
            ((0, 1), (2, 3), ((0, 2), (0, 3), (1, 3), (1, 2))),
            ((0, 2), (1, 3), ((0, 1), (0, 3), (2, 3), (1, 2))),
            ((0, 3), (1, 2), ((0, 1), (0, 2), (2, 3), (1, 3))),
        ]
        best = None
        for pa, pb, equator in diagonals:
            da, db = m[pa], m[pb]
            length = float(np.linalg.norm(vertices[da] - vertices[db]))
            key = (length, min(da, db), max(da, db))
            if best is None or key < best[0]:
                best = (key, da, db, equator)
        _, da, db, equator = best
        ring = [m[p] for p in equator]
        for k in range(4):
            children.append([da, db, ring[k], ring[(k + 1) % 4]])

    cells = orient_cells(np.array(children, dtype=np.int64), vertices)

    # children of a labeled parent face, keyed by sorted vertex triple
    label_lookup = {}
    bfaces = np.flatnonzero(mesh.face_minus < 0)
    edge_index = {(int(e[0]), int(e[1])): i for i, e in enumerate(mesh.edges)}
    for f in bfaces:
        va, vb, vc = (int(v) for v in mesh.face_vertices[f])
        mab = nv + edge_index[(va, vb)]
        mac = nv + edge_index[(va, vc)]
        mbc = nv + edge_index[(vb, vc)]
        label = BoundaryLabel(mesh.face_label[f])
        for tri in ((va, mab, mac), (vb, mab, mbc), (vc, mac, mbc), (mab, mac, mbc)):
            label_lookup[tuple(sorted(tri))] = label

    return _build(vertices, cells, face_label_lookup=label_lookup)


@dataclass(frozen=True)
class MeshViolation:
    """One violated mesh assumption; ``face`` is None for global conditions."""

    assumption: str  # "H1" or "H2"
    reason: str
    face: int | None = None


def check_H2(mesh: Mesh) -> list[MeshViolation]:
    """Interior faces with all vertices on the boundary, and single-cell meshes."""
    violations = []
    if mesh.num_cells == 1:
        violations.append(
            MeshViolation("H2", "mesh consists of a single cell", None)
        )
    interior = mesh.interior_faces
    all_on_boundary = mesh.boundary_vertex[mesh.face_vertices[interior]].all(axis=1)
    for f in interior[all_on_boundary]:
        violations.append(
            MeshViolation("H2", "interior face with all three vertices on the boundary", int(f))
        )
    return violations


def _vertex_to_faces(mesh: Mesh, faces: np.ndarray) -> dict[int, list[int]]:
    table: dict[int, list[int]] = {}
    for f in faces:
        for v in mesh.face_vertices[f]:
            table.setdefault(int(v), []).append(int(f))
    return table


def check_H1(mesh: Mesh) -> list[MeshViolation]:
    """Horizontal Dirichlet faces not anchored by condition (a) or (b).

    (a) the face shares a vertex with a non-horizontal Dirichlet face;
    (b) there are two further distinct Dirichlet faces such that all three
        faces intersect in exactly one vertex.
    """
    dirichlet = mesh.dirichlet_faces
    horizontal = dirichlet[np.abs(mesh.face_normal[dirichlet, 2]) >= 1.0 - HORIZONTAL_TOL]
    if horizontal.size == 0:
        return []
    nonhorizontal = np.setdiff1d(dirichlet, horizontal)
    anchored_vertices = set(int(v) for v in mesh.face_vertices[nonhorizontal].ravel())
    v2f = _vertex_to_faces(mesh, dirichlet)

    violations = []
    for f in horizontal:
        fset = set(int(v) for v in mesh.face_vertices[f])
        if fset & anchored_vertices:
            continue  # condition (a)
        ok = False
        for z in fset:
            incident = [g for g in v2f.get(z, []) if g != int(f)]
            for i in range(len(incident)):
                gi = set(int(v) for v in mesh.face_vertices[incident[i]])
                common_i = fset & gi
                for j in range(i + 1, len(incident)):
                    gj = set(int(v) for v in mesh.face_vertices[incident[j]])
                    if common_i & gj == {z}:
                        ok = True
                        break
                if ok:
                    break
            if ok:
                break
        if not ok:
            violations.append(
                MeshViolation("H1", "horizontal Dirichlet face not anchored via (a) or (b)", int(f))
            )
    return violations


def write_mesh_file(mesh: Mesh, path) -> None:
    """Write the ASCII mesh format (vertices, cells, labeled boundary faces)."""
    lines = [f"$vertices {mesh.num_vertices}"]
    lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines.append(f"$cells {mesh.num_cells}")
    lines += [f"{a} {b} {c} {d}" for a, b, c, d in mesh.cells]
    bfaces = np.flatnonzero(mesh.face_minus < 0)
    lines.append(f"$boundary {bfaces.size}")
    for f in bfaces:
        marker = "D" if mesh.face_label[f] == BoundaryLabel.DIRICHLET else "N"
        va, vb, vc = mesh.face_vertices[f]
        lines.append(f"{va} {vb} {vc} {marker}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh_file(path, classify=None) -> Mesh:
    """Read the ASCII mesh format.

    Faces listed in the ``$boundary`` section carry explicit D/N markers;
    unlisted boundary faces fall back to ``classify`` (all-Dirichlet when no
    classifier is given).
    """
    with open(path, encoding="ascii") as fh:
        tokens = fh.read().split()
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(tokens):
            raise NonConforming("unexpected end of mesh file")
        tok = tokens[pos]
        pos += 1
        return tok

    vertices = cells = None
    labels: dict[tuple[int, int, int], BoundaryLabel] = {}
    while pos < len(tokens):
        section = take()
        if section == "$vertices":
            n = int(take())
            vertices = np.array([[float(take()) for _ in range(3)] for _ in range(n)])
        elif section == "$cells":
            n = int(take())
            cells = np.array([[int(take()) for _ in range(4)] for _ in range(n)], dtype=np.int64)
        elif section == "$boundary":
            n = int(take())
            for _ in range(n):
                tri = tuple(sorted(int(take()) for _ in range(3)))
                marker = take()
                if marker not in ("D", "N"):
                    raise NonConforming(f"unknown boundary marker {marker!r}")
                labels[tri] = BoundaryLabel.DIRICHLET if marker == "D" else BoundaryLabel.NEUMANN
        else:
            raise NonConforming(f"unknown mesh file section {section!r}")
    if vertices is None or cells is None:
        raise NonConforming("mesh file must contain $vertices and $cells sections")

    fallback = classify if classify is not None else (lambda x: BoundaryLabel.DIRICHLET)
    if labels:
        # explicit markers win; build once to learn face triples, then relabel
        probe = _build(vertices, cells, classify=lambda x: BoundaryLabel.DIRICHLET)
        full = dict(labels)
        for f in np.flatnonzero(probe.face_minus < 0):
            key = tuple(int(v) for v in probe.face_vertices[f])
            if key not in full:
                full[key] = fallback(probe.face_centroid[f])
        return _build(vertices, cells, face_label_lookup=full)
    return _build(vertices, cells, classify=fallback)
