"""Mesh construction, refinement, and validity-check tests."""

import numpy as np
import pytest

from ks3d.domains import (
    all_dirichlet,
    classify_cube1,
    classify_cube23,
    classify_lshape,
    cube_mesh,
    horizontal_island_tet,
    initial_mesh,
    kuhn_cube_mesh,
    lshape_mesh,
    octa_patch,
    reference_tet,
    tensor_cross_mesh,
    wedge_mesh,
)
from ks3d.errors import InvertedCell, NonConforming, UnclassifiedBoundaryFace
from ks3d.mesh import (
    BoundaryLabel,
    build_mesh,
    check_H1,
    check_H2,
    orient_cells,
    read_mesh_file,
    red_refine,
    write_mesh_file,
)

UNIT_TET_VERTS = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])


def refine_times(mesh, n):
    for _ in range(n):
        mesh = red_refine(mesh)
    return mesh


def boundary_area(mesh):
    return mesh.face_area[mesh.face_minus < 0].sum()


class TestConstruction:
    def test_reference_tet_basics(self):
        mesh = reference_tet()
        assert mesh.num_vertices == 4
        assert mesh.num_cells == 1
        assert mesh.num_faces == 4
        assert mesh.num_edges == 6
        assert np.isclose(mesh.cell_volume[0], 1 / 6, rtol=0, atol=1e-15)
        assert np.isclose(mesh.cell_diameter[0], np.sqrt(2.0))
        assert (mesh.face_minus == -1).all()
        assert (mesh.face_label == BoundaryLabel.DIRICHLET).all()
        assert mesh.boundary_vertex.all()

    def test_boundary_normals_point_outward(self):
        mesh = octa_patch()
        inward = mesh.vertices[mesh.cells[mesh.face_plus]].mean(axis=1) - mesh.face_centroid
        dots = np.einsum("fk,fk->f", mesh.face_normal, -inward)
        boundary = mesh.face_minus < 0
        assert (dots[boundary] > 0).all()
        assert np.allclose(np.linalg.norm(mesh.face_normal, axis=1), 1.0, atol=1e-14)

    def test_interior_normals_consistent_between_cells(self):
        mesh = refine_times(octa_patch(), 1)
        interior = mesh.interior_faces
        for f in interior:
            out_plus = mesh.face_centroid[f] - mesh.vertices[mesh.cells[mesh.face_plus[f]]].mean(axis=0)
            out_minus = mesh.face_centroid[f] - mesh.vertices[mesh.cells[mesh.face_minus[f]]].mean(axis=0)
            assert mesh.face_normal[f] @ out_plus > 0
            assert mesh.face_normal[f] @ out_minus < 0
        assert (mesh.face_plus[interior] < mesh.face_minus[interior]).all()

    def test_cell_faces_opposite_vertices(self):
        mesh = octa_patch()
        for t in range(mesh.num_cells):
            for i in range(4):
                face = set(mesh.face_vertices[mesh.cell_faces[t, i]])
                cell = [int(v) for v in mesh.cells[t]]
                assert face == set(cell) - {cell[i]}

    def test_inverted_cell_rejected(self):
        cells = np.array([[0, 1, 3, 2]])  # negative orientation
        with pytest.raises(InvertedCell):
            build_mesh(UNIT_TET_VERTS, cells, all_dirichlet)

    def test_duplicate_vertices_rejected(self):
        verts = np.vstack([UNIT_TET_VERTS, UNIT_TET_VERTS[0] + 1e-14])
        cells = np.array([[0, 1, 2, 3], [4, 1, 2, 3]])
        with pytest.raises(NonConforming, match="duplicate"):
            build_mesh(verts, cells, all_dirichlet)

    def test_index_out_of_range_rejected(self):
        with pytest.raises(NonConforming, match="out of range"):
            build_mesh(UNIT_TET_VERTS, np.array([[0, 1, 2, 7]]), all_dirichlet)

    def test_orphan_vertex_rejected(self):
        verts = np.vstack([UNIT_TET_VERTS, [5.0, 5, 5]])
        with pytest.raises(NonConforming, match="not referenced"):
            build_mesh(verts, np.array([[0, 1, 2, 3]]), all_dirichlet)

    def test_face_shared_by_three_cells_rejected(self):
        verts = np.vstack([UNIT_TET_VERTS, [0.0, 0, -1], [1.0, 1, 1]])
        cells = orient_cells([[0, 1, 2, 3], [0, 1, 2, 4], [0, 1, 2, 5]], verts)
        with pytest.raises(NonConforming, match="more than two"):
            build_mesh(verts, cells, all_dirichlet)

    def test_hanging_vertex_on_face_rejected(self):
        # second cell shares the edge (0, e1) and puts a vertex inside the
        # first cell's bottom face
        verts = np.vstack([UNIT_TET_VERTS, [0.25, 0.25, 0.0], [0.0, 0, -1]])
        cells = orient_cells([[0, 1, 2, 3], [0, 1, 4, 5]], verts)
        with pytest.raises(NonConforming, match="lies on face"):
            build_mesh(verts, cells, all_dirichlet)

    def test_unclassified_boundary_face(self):
        with pytest.raises(UnclassifiedBoundaryFace):
            build_mesh(UNIT_TET_VERTS, np.array([[0, 1, 2, 3]]), lambda x: None)
        with pytest.raises(UnclassifiedBoundaryFace):
            build_mesh(
                UNIT_TET_VERTS, np.array([[0, 1, 2, 3]]), lambda x: BoundaryLabel.INTERIOR
            )

    def test_orient_cells_fixes_volumes_and_keeps_order(self):
        cells = [[0, 1, 3, 2], [0, 1, 2, 3]]
        fixed = orient_cells(cells, UNIT_TET_VERTS)
        assert set(fixed[0]) == {0, 1, 2, 3}
        assert list(fixed[1]) == [0, 1, 2, 3]
        edges = UNIT_TET_VERTS[fixed[:, 1:]] - UNIT_TET_VERTS[fixed[:, :1]]
        assert (np.linalg.det(edges) > 0).all()

    def test_arrays_are_frozen(self):
        mesh = reference_tet()
        with pytest.raises(ValueError):
            mesh.vertices[0, 0] = 7.0


class TestBuiltinDomains:
    def test_octa_patch_counts(self):
        mesh = octa_patch()
        assert mesh.num_vertices == 7
        assert mesh.num_cells == 8
        assert mesh.interior_faces.size == 12
        assert (mesh.face_minus < 0).sum() == 8
        assert np.isclose(mesh.cell_volume.sum(), 4 / 3, atol=1e-14)
        # every interior face contains the centre vertex 0
        assert (mesh.face_vertices[mesh.interior_faces] == 0).any(axis=1).all()

    def test_octa_patch_cell_octants(self):
        mesh = octa_patch()
        centroids = mesh.vertices[mesh.cells].mean(axis=1)
        signs = np.sign(centroids)
        expected = [
            (1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1),
            (-1, 1, 1), (-1, 1, -1), (-1, -1, 1), (-1, -1, -1),
        ]
        assert [tuple(int(s) for s in row) for row in signs] == expected

    def test_wedge_mesh(self):
        mesh = wedge_mesh()
        assert mesh.num_vertices == 6
        assert mesh.num_cells == 4
        assert np.isclose(mesh.cell_volume.sum(), 4 / 6, atol=1e-14)
        assert (mesh.face_label[mesh.face_minus < 0] == BoundaryLabel.DIRICHLET).all()
        # the four cells wrap around the shared edge through the (y, z) quadrants
        centroids = mesh.vertices[mesh.cells].mean(axis=1)
        quadrant_signs = [tuple(int(s) for s in np.sign(c[1:])) for c in centroids]
        assert quadrant_signs == [(1, 1), (-1, 1), (-1, -1), (1, -1)]

    def test_tensor_cross_mesh(self):
        mesh = tensor_cross_mesh()
        assert mesh.num_vertices == 6
        assert mesh.num_cells == 4
        assert np.isclose(mesh.cell_volume.sum(), 4 / 3, atol=1e-14)
        assert mesh.interior_faces.size == 4

    def test_cube_mesh_counts(self):
        mesh = cube_mesh()
        assert mesh.num_cells == 48
        assert mesh.num_vertices == 27
        assert np.isclose(mesh.cell_volume.sum(), 1.0, atol=1e-13)
        assert np.isclose(mesh.h_max, np.sqrt(3) / 2)
        assert np.isclose(boundary_area(mesh), 6.0, atol=1e-13)

    def test_cube_mesh_centered_box(self):
        mesh = cube_mesh((-1.0, -1, -1), (1.0, 1, 1))
        assert np.isclose(mesh.cell_volume.sum(), 8.0, atol=1e-13)
        assert np.isclose(boundary_area(mesh), 24.0, atol=1e-13)

    def test_lshape_mesh_counts(self):
        mesh = lshape_mesh()
        assert mesh.num_cells == 144
        assert mesh.num_vertices == 63
        assert np.isclose(mesh.cell_volume.sum(), 6.0, atol=1e-13)

    def test_initial_mesh_neumann_parts(self):
        m1 = initial_mesh("cube1")
        neumann = m1.neumann_faces
        assert neumann.size > 0
        assert np.allclose(m1.face_centroid[neumann][:, 2], 0.0, atol=1e-14)
        assert np.isclose(m1.face_area[neumann].sum(), 1.0, atol=1e-13)

        m2 = initial_mesh("cube2")
        neumann = m2.neumann_faces
        c = m2.face_centroid[neumann]
        assert np.allclose(c[:, 2], -1.0, atol=1e-14)
        assert (c[:, 0] > 0).all() and (c[:, 1] > 0).all()
        assert np.isclose(m2.face_area[neumann].sum(), 1.0, atol=1e-13)

        ml = initial_mesh("lshape")
        neumann = ml.neumann_faces
        c = ml.face_centroid[neumann]
        assert np.allclose(c[:, 0], 1.0, atol=1e-14)
        assert np.isclose(ml.face_area[neumann].sum(), 2.0, atol=1e-13)

    def test_initial_mesh_unknown_case(self):
        from ks3d.errors import UnknownCase

        with pytest.raises(UnknownCase):
            initial_mesh("torus")


class TestRedRefine:
    def test_counts_and_volume(self):
        mesh = octa_patch()
        once = red_refine(mesh)
        twice = red_refine(once)
        assert once.num_cells == 64
        assert twice.num_cells == 512
        assert np.isclose(once.cell_volume.sum(), 4 / 3, atol=1e-13)
        assert np.isclose(twice.cell_volume.sum(), 4 / 3, atol=1e-13)

    def test_h_halves(self):
        mesh = cube_mesh()
        fine = red_refine(mesh)
        assert np.isclose(fine.h_max, mesh.h_max / 2, atol=1e-14)

    def test_boundary_preserved(self):
        mesh = initial_mesh("cube2")
        fine = red_refine(mesh)
        assert np.isclose(boundary_area(fine), boundary_area(mesh), atol=1e-12)
        # parent vertices keep their boundary status
        nv = mesh.num_vertices
        assert (fine.boundary_vertex[:nv] == mesh.boundary_vertex).all()
        # Neumann surface measure is preserved
        assert np.isclose(
            fine.face_area[fine.neumann_faces].sum(),
            mesh.face_area[mesh.neumann_faces].sum(),
            atol=1e-13,
        )

    def test_deterministic(self):
        a = red_refine(red_refine(octa_patch()))
        b = red_refine(red_refine(octa_patch()))
        assert np.array_equal(a.cells, b.cells)
        assert np.array_equal(a.vertices, b.vertices)
        assert np.array_equal(a.face_label, b.face_label)

    def test_dihedral_angle_classes_stabilize(self):
        def dihedral_angles(mesh):
            out = []
            for t in range(mesh.num_cells):
                verts = mesh.vertices[mesh.cells[t]]
                normals = []
                for i in range(4):
                    tri = [k for k in range(4) if k != i]
                    a, b, c = verts[tri]
                    n = np.cross(b - a, c - a)
                    n /= np.linalg.norm(n)
                    if n @ (verts[i] - a) > 0:
                        n = -n
                    normals.append(n)
                for i in range(4):
                    for j in range(i + 1, 4):
                        cosang = np.clip(-normals[i] @ normals[j], -1.0, 1.0)
                        out.append(np.arccos(cosang))
            reps = []
            for ang in np.sort(out):
                if not reps or ang - reps[-1] > 1e-8:
                    reps.append(ang)
            return np.array(reps)

        base = reference_tet()
        level2 = dihedral_angles(refine_times(base, 2))
        level3 = dihedral_angles(refine_times(base, 3))
        assert level2.size == level3.size
        assert np.allclose(level2, level3, atol=1e-9)


class TestChecks:
    def test_single_tet_fails_H2(self):
        violations = check_H2(reference_tet())
        assert len(violations) == 1
        assert violations[0].reason == "mesh consists of a single cell"

    def test_kuhn_cube_fails_H2(self):
        mesh = kuhn_cube_mesh()
        violations = check_H2(mesh)
        faces = [v.face for v in violations]
        assert len(violations) == 6
        assert all(v.assumption == "H2" for v in violations)
        assert set(faces) <= set(int(f) for f in mesh.interior_faces)

    def test_octa_patch_passes_both(self):
        mesh = octa_patch()
        assert check_H2(mesh) == []
        assert check_H1(mesh) == []

    @pytest.mark.parametrize("levels", [0, 1, 2])
    def test_cube_passes_both(self, levels):
        mesh = refine_times(cube_mesh(), levels)
        assert check_H2(mesh) == []
        assert check_H1(mesh) == []

    @pytest.mark.parametrize("case", ["cube1", "cube2", "lshape"])
    def test_benchmark_meshes_pass_both(self, case):
        mesh = red_refine(initial_mesh(case))
        assert check_H2(mesh) == []
        assert check_H1(mesh) == []

    def test_horizontal_island_flagged_by_H1(self):
        mesh = horizontal_island_tet()
        violations = check_H1(mesh)
        assert len(violations) == 1
        f = violations[0].face
        assert abs(mesh.face_normal[f, 2]) > 1 - 1e-12
        assert mesh.face_label[f] == BoundaryLabel.DIRICHLET

    def test_no_horizontal_dirichlet_faces_means_empty(self):
        # all octa patch boundary faces are oblique
        mesh = octa_patch()
        assert np.abs(mesh.face_normal[mesh.dirichlet_faces, 2]).max() < 1 - 1e-12
        assert check_H1(mesh) == []

    def test_checks_invariant_under_renumbering(self):
        rng = np.random.default_rng(7)
        mesh = kuhn_cube_mesh()
        perm = rng.permutation(mesh.num_vertices)
        inv = np.argsort(perm)
        shuffled = build_mesh(mesh.vertices[perm], inv[mesh.cells], all_dirichlet)

        def face_sets(m, violations):
            return {
                frozenset(int(v) for v in m.face_vertices[viol.face])
                for viol in violations
                if viol.face is not None
            }

        orig = face_sets(mesh, check_H2(mesh))
        new = face_sets(shuffled, check_H2(shuffled))
        mapped = {frozenset(int(inv[v]) for v in fs) for fs in orig}
        assert mapped == new


class TestMeshFileIO:
    def test_round_trip(self, tmp_path):
        mesh = initial_mesh("cube1")
        path = tmp_path / "mesh.msh"
        write_mesh_file(mesh, path)
        back = read_mesh_file(path)
        assert back.num_vertices == mesh.num_vertices
        assert back.num_cells == mesh.num_cells
        assert np.allclose(back.vertices, mesh.vertices)
        assert np.array_equal(back.cells, mesh.cells)
        assert np.array_equal(back.face_label, mesh.face_label)

    def test_read_without_boundary_section_defaults_dirichlet(self, tmp_path):
        path = tmp_path / "tet.msh"
        path.write_text(
            "$vertices 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n$cells 1\n0 1 2 3\n"
        )
        mesh = read_mesh_file(path)
        assert (mesh.face_label == BoundaryLabel.DIRICHLET).all()

    def test_read_malformed_rejected(self, tmp_path):
        path = tmp_path / "bad.msh"
        path.write_text("$vertices 4\n0 0 0\n")
        with pytest.raises(NonConforming):
            read_mesh_file(path)
        path.write_text("$things 1\n")
        with pytest.raises(NonConforming):
            read_mesh_file(path)
