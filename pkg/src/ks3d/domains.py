"""Built-in meshes: reference tet, octahedron patch, counterexample meshes,
cube and L-shaped domains with centre-oriented Kuhn subdivisions.

All axis-aligned box meshes subdivide each sub-box into six tetrahedra whose
common diagonal runs from the sub-box corner facing the outside of the domain
piece to the corner at the piece's centre.  This orientation makes adjacent
sub-box interfaces match and keeps every interior face of the coarsest mesh
away from having all its vertices on the boundary.
"""

import itertools

import numpy as np

from .errors import UnknownCase
from .mesh import BoundaryLabel, Mesh, build_mesh, orient_cells

_GEOM_TOL = 1e-12


def all_dirichlet(_x) -> BoundaryLabel:
    return BoundaryLabel.DIRICHLET


def reference_tet(classify=all_dirichlet) -> Mesh:
    vertices = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    cells = np.array([[0, 1, 2, 3]])
    return build_mesh(vertices, cells, classify)


def octa_patch(classify=all_dirichlet) -> Mesh:
    """Eight tetrahedra around the origin spanned by +-unit vectors.

    Cell order is lexicographic in the sign pattern (+++, ++-, +-+, +--,
    -++, -+-, --+, ---) of the three axis vertices.
    """
    vertices = np.array(
        [
            [0.0, 0, 0],
            [1, 0, 0],
            [-1, 0, 0],
            [0, 1, 0],
            [0, -1, 0],
            [0, 0, 1],
            [0, 0, -1],
        ]
    )
    cells = []
    for sx, sy, sz in itertools.product((0, 1), repeat=3):
        cells.append([0, 1 + sx, 3 + sy, 5 + sz])
    return build_mesh(vertices, orient_cells(cells, vertices), classify)


def wedge_mesh() -> Mesh:
    """Four tetrahedra sharing the edge from the origin to (1,0,0).

    Cells wrap around that edge through the quadrants of the (y, z) plane in
    the order (+,+), (-,+), (-,-), (+,-).  All of the boundary is Dirichlet.
    """
    vertices = np.array(
        [
            [0.0, 0, 0],
            [1, 0, 0],
            [0, 1, 0],
            [0, -1, 0],
            [0, 0, 1],
            [0, 0, -1],
        ]
    )
    cells = [
        [0, 1, 2, 4],
        [0, 1, 3, 4],
        [0, 1, 3, 5],
        [0, 1, 2, 5],
    ]
    return build_mesh(vertices, orient_cells(cells, vertices), all_dirichlet)


def tensor_cross_mesh() -> Mesh:
    """Four tetrahedra sharing the edge from the apex (1,0,0) to the origin.

    The base square with corners (0, +-1, +-1) is cut into four triangles
    from its centre; each triangle plus the apex is one cell.  All of the
    boundary is Dirichlet.
    """
    vertices = np.array(
        [
            [1.0, 0, 0],
            [0, 0, 0],
            [0, 1, 1],
            [0, -1, 1],
            [0, -1, -1],
            [0, 1, -1],
        ]
    )
    corners = [2, 3, 4, 5]
    cells = [[0, 1, corners[j], corners[(j + 1) % 4]] for j in range(4)]
    return build_mesh(vertices, orient_cells(cells, vertices), all_dirichlet)


def _kuhn_box(lo, hi, outer_bits):
    """Six tetrahedra filling the box [lo, hi], all containing the diagonal
    from the corner selected by outer_bits to the opposite corner."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)

    def corner(bits):
        return np.where(np.asarray(bits, dtype=bool), hi, lo)

    start = np.asarray(outer_bits, dtype=int)
    verts = []
    for perm in itertools.permutations(range(3)):
        bits = start.copy()
        path = [corner(bits)]
        for axis in perm:
            bits = bits.copy()
            bits[axis] = 1 - bits[axis]
            path.append(corner(bits))
        verts.append(path)
    return verts  # list of 6 tets, each a list of 4 points


def _mesh_from_tet_points(tet_points, classify):
    """Deduplicate shared corners and build the mesh."""
    index: dict[tuple, int] = {}
    vertices: list[np.ndarray] = []
    cells = []
    for tet in tet_points:
        cell = []
        for p in tet:
            key = tuple(np.round(np.asarray(p, dtype=float), 12))
            i = index.get(key)
            if i is None:
                i = len(vertices)
                index[key] = i
                vertices.append(np.asarray(p, dtype=float))
            cell.append(i)
        cells.append(cell)
    varr = np.array(vertices)
    return build_mesh(varr, orient_cells(cells, varr), classify)


def _box_pattern_tets(lo, hi):
    """2x2x2 sub-boxes of [lo, hi], each Kuhn-subdivided with its diagonal
    running from the box-corner-facing sub-box corner to the box centre."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    mid = 0.5 * (lo + hi)
    tets = []
    for bits in itertools.product((0, 1), repeat=3):
        bits = np.array(bits)
        sub_lo = np.where(bits, mid, lo)
        sub_hi = np.where(bits, hi, mid)
        # outer corner of the sub-box = corner of the enclosing box
        outer = bits
        tets.extend(_kuhn_box(sub_lo, sub_hi, outer))
    return tets


def cube_mesh(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0), classify=all_dirichlet) -> Mesh:
    """48-cell coarse mesh of the box [lo, hi] (2x2x2 sub-boxes, 6 tets each)."""
    return _mesh_from_tet_points(_box_pattern_tets(lo, hi), classify)


def kuhn_cube_mesh(classify=all_dirichlet) -> Mesh:
    """Plain 6-tet Kuhn cube on (0,1)^3: every vertex is a boundary vertex,
    so the interior faces all violate the interior-face check."""
    return _mesh_from_tet_points(_kuhn_box((0.0, 0, 0), (1.0, 1, 1), (0, 0, 0)), classify)


def lshape_mesh(classify=all_dirichlet) -> Mesh:
    """144-cell coarse mesh of the L-shaped prism
    ((-1,1)^2 minus [0,1]x[-1,0]) x (-1,1)."""
    pieces = [
        ((-1.0, -1.0, -1.0), (0.0, 0.0, 1.0)),
        ((-1.0, 0.0, -1.0), (0.0, 1.0, 1.0)),
        ((0.0, 0.0, -1.0), (1.0, 1.0, 1.0)),
    ]
    tets = []
    for lo, hi in pieces:
        tets.extend(_box_pattern_tets(lo, hi))
    return _mesh_from_tet_points(tets, classify)


def horizontal_island_tet() -> Mesh:
    """Single tet whose only Dirichlet face is horizontal: trips the anchor check."""
    vertices = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, -1]])
    cells = orient_cells([[0, 1, 2, 3]], vertices)

    def classify(x):
        if abs(x[2]) < _GEOM_TOL:
            return BoundaryLabel.DIRICHLET
        return BoundaryLabel.NEUMANN

    return build_mesh(vertices, cells, classify)


def _near(a, b):
    return abs(a - b) < _GEOM_TOL


def classify_cube1(x) -> BoundaryLabel:
    """Unit cube with the bottom (z = 0) as the traction boundary."""
    if _near(x[2], 0.0):
        return BoundaryLabel.NEUMANN
    return BoundaryLabel.DIRICHLET


def classify_cube23(x) -> BoundaryLabel:
    """Cube (-1,1)^3 with the traction boundary (0,1)^2 x {-1}."""
    if _near(x[2], -1.0) and x[0] > 0.0 and x[1] > 0.0:
        return BoundaryLabel.NEUMANN
    return BoundaryLabel.DIRICHLET


def classify_lshape(x) -> BoundaryLabel:
    """L-shaped prism with the traction boundary {1} x (0,1) x (-1,1)."""
    if _near(x[0], 1.0) and x[1] > 0.0:
        return BoundaryLabel.NEUMANN
    return BoundaryLabel.DIRICHLET


def initial_mesh(case: str) -> Mesh:
    """Coarsest mesh and boundary split for each built-in benchmark case."""
    if case == "cube1":
        return cube_mesh((0.0, 0, 0), (1.0, 1, 1), classify_cube1)
    if case in ("cube2", "cube3"):
        return cube_mesh((-1.0, -1, -1), (1.0, 1, 1), classify_cube23)
    if case == "lshape":
        return lshape_mesh(classify_lshape)
    raise UnknownCase(f"unknown case {case!r}")
