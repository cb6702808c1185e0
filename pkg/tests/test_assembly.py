"""Assembly oracles: closed-form energies, kernels, determinism, load terms."""

import numpy as np
import pytest

from ks3d.assembly import (
    apply_dirichlet,
    assemble_a,
    assemble_b,
    assemble_gram,
    assemble_load,
    build_system,
    expand_solution,
)
from ks3d.domains import all_dirichlet, classify_cube1, cube_mesh, octa_patch, reference_tet
from ks3d.errors import QuadratureDegreeTooLow
from ks3d.linalg import solve_saddle
from ks3d.mesh import BoundaryLabel, build_mesh, red_refine
from ks3d.quadrature import rule_for_degree
from ks3d.spaces import VELOCITY_SPACE_NAMES, interpolate, pressure_space, velocity_space

RNG = np.random.default_rng(99)

RIGID_FIELDS = [
    lambda x: np.column_stack([np.ones(len(x)), np.zeros(len(x)), np.zeros(len(x))]),
    lambda x: np.column_stack([np.zeros(len(x)), np.ones(len(x)), np.zeros(len(x))]),
    lambda x: np.column_stack([np.zeros(len(x)), np.zeros(len(x)), np.ones(len(x))]),
    lambda x: np.column_stack([np.zeros(len(x)), -x[:, 2], x[:, 1]]),
    lambda x: np.column_stack([x[:, 2], np.zeros(len(x)), -x[:, 0]]),
    lambda x: np.column_stack([-x[:, 1], x[:, 0], np.zeros(len(x))]),
]


class ConstantCase:
    """Duck-typed forcing with constant body force and traction."""

    def __init__(self, g=(0.0, 0.0, 0.0), t=(0.0, 0.0, 0.0)):
        self.g = np.asarray(g, dtype=float)
        self.t = np.asarray(t, dtype=float)

    def body_force(self, x, mu):
        return np.broadcast_to(self.g, (len(x), 3))

    def traction(self, x, normal, mu):
        return np.broadcast_to(self.t, (len(x), 3))


class TestEnergyOracles:
    def test_a_linear_shear_energy(self):
        # v = (x1, 0, 0): eps = diag(1,0,0), 2 mu int eps:eps = 2 mu |T|
        mesh = reference_tet()
        vs = velocity_space(mesh, "ks-p2")
        v = interpolate(vs, lambda x: np.column_stack([x[:, 0], 0 * x[:, 0], 0 * x[:, 0]]))
        a = assemble_a(mesh, vs, mu=0.5)
        assert np.isclose(v.coefficients @ a @ v.coefficients, 1 / 6, atol=1e-14)

    def test_b_of_identity_field(self):
        # div x = 3, so b(x, 1) = -int div = -3 |T| = -1/2
        mesh = reference_tet()
        vs = velocity_space(mesh, "ks-p2")
        ps = pressure_space(mesh)
        v = interpolate(vs, lambda x: x)
        b = assemble_b(mesh, vs, ps)
        assert np.isclose(np.ones(1) @ (b @ v.coefficients), -0.5, atol=1e-14)

    def test_mass_of_constant_field(self):
        mesh = reference_tet()
        vs = velocity_space(mesh, "ks-p2")
        v = interpolate(vs, lambda x: np.column_stack([np.ones(len(x)), 0 * x[:, 0], 0 * x[:, 0]]))
        m = assemble_gram(mesh, vs, "mass")
        assert np.isclose(v.coefficients @ m @ v.coefficients, 1 / 6, atol=1e-14)

    @pytest.mark.parametrize("name", VELOCITY_SPACE_NAMES)
    def test_rigid_motions_in_eps_kernel(self, name):
        mesh = octa_patch()
        vs = velocity_space(mesh, name)
        eps = assemble_gram(mesh, vs, "eps")
        coeff_vectors = []
        for field in RIGID_FIELDS:
            c = interpolate(vs, field).coefficients
            coeff_vectors.append(c)
            assert np.abs(eps @ c).max() < 1e-12
        # the six interpolants are linearly independent
        gram = np.array([[a @ b for b in coeff_vectors] for a in coeff_vectors])
        assert np.linalg.matrix_rank(gram, tol=1e-10) == 6

    @pytest.mark.parametrize("name", VELOCITY_SPACE_NAMES)
    def test_grad_dominates_eps(self, name):
        mesh = octa_patch()
        vs = velocity_space(mesh, name)
        grad = assemble_gram(mesh, vs, "grad")
        eps = assemble_gram(mesh, vs, "eps")
        for _ in range(5):
            c = RNG.standard_normal(vs.num_dofs)
            ge = c @ grad @ c
            ee = c @ eps @ c
            assert ee <= ge + 1e-12 * abs(ge)
            assert ee >= -1e-13 * abs(ge)

    def test_a_equals_two_mu_eps(self):
        mesh = octa_patch()
        vs = velocity_space(mesh, "ks-bubble")
        a = assemble_a(mesh, vs, mu=1.7)
        eps = assemble_gram(mesh, vs, "eps")
        diff = (a - 2 * 1.7 * eps).toarray()
        assert np.abs(diff).max() < 1e-12


class TestLoads:
    def test_constant_force_on_face_mean_block(self):
        # z block of ks-p2 is face-mean linear; int_T (1 - 3 lam_i) = |T|/4
        mesh = reference_tet()
        vs = velocity_space(mesh, "ks-p2")
        load = assemble_load(mesh, vs, ConstantCase(g=(0, 0, 1)), mu=1.0)
        z_offset = vs.blocks[2].offset
        z_load = load[z_offset:]
        assert np.allclose(z_load, 1 / 24, atol=1e-15)
        assert np.abs(load[:z_offset]).max() < 1e-15 or np.allclose(
            load[: vs.blocks[1].offset], 0.0, atol=1e-15
        )

    def test_traction_on_neumann_face(self):
        verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])

        def classify(x):
            return BoundaryLabel.NEUMANN if abs(x[2]) < 1e-12 else BoundaryLabel.DIRICHLET

        mesh = build_mesh(verts, np.array([[0, 1, 2, 3]]), classify)
        vs = velocity_space(mesh, "ks-p2")
        load = assemble_load(mesh, vs, ConstantCase(t=(0, 0, 1)), mu=1.0)
        z_offset = vs.blocks[2].offset
        neumann_face = int(mesh.neumann_faces[0])
        # the face-mean shape of the traction face integrates the constant to |F|
        expected = np.zeros(4)
        expected[neumann_face] = mesh.face_area[neumann_face]
        assert np.allclose(load[z_offset:], expected, atol=1e-14)

    def test_bubble_slots_on_dirichlet_faces_are_skipped(self):
        mesh = octa_patch()
        vs = velocity_space(mesh, "br")
        load = assemble_load(mesh, vs, ConstantCase(g=(1.0, 2.0, 3.0)), mu=1.0)
        assert load.shape == (vs.num_dofs,)
        assert np.isfinite(load).all()


class TestSystemReduction:
    def test_free_column_sums_of_b_vanish_on_closed_cavity(self):
        mesh = octa_patch()
        for name in ("ks-p2", "ks-bubble", "br"):
            vs = velocity_space(mesh, name)
            b = assemble_b(mesh, vs, pressure_space(mesh))
            col_sums = np.asarray(b[:, vs.free_dofs].sum(axis=0)).ravel()
            assert np.abs(col_sums).max() < 1e-14

    def test_dirichlet_shift_equivalence(self):
        mesh = cube_mesh((0.0, 0, 0), (1.0, 1, 1), classify_cube1)
        vs = velocity_space(mesh, "ks-p2")
        ps = pressure_space(mesh)
        system = build_system(mesh, vs, ps, ConstantCase(g=(0.0, 0.0, -1.0)), mu=1.0)
        u_bc = lambda x: np.column_stack([x[:, 1] ** 2, x[:, 2], x[:, 0] * x[:, 1]])
        lifting = interpolate(vs, u_bc).coefficients
        shift = RNG.standard_normal(vs.num_dofs)
        shift[vs.constrained] = 0.0

        totals = []
        for lift in (lifting, lifting + shift):
            red = apply_dirichlet(system, lift)
            u_f, p = solve_saddle(
                red.a_ff, red.b_f, red.rhs_f, red.rhs_g, tol=1e-11,
                pressure_nullspace=False,
            )
            totals.append((expand_solution(red, u_f), p))
        assert np.allclose(totals[0][0], totals[1][0], atol=1e-9)
        assert np.allclose(totals[0][1], totals[1][1], atol=1e-9)

    def test_all_constrained_edge_case(self):
        mesh = reference_tet()
        vs = velocity_space(mesh, "ks-p2")
        ps = pressure_space(mesh)
        system = build_system(mesh, vs, ps, ConstantCase(), mu=1.0)
        assert vs.free_dofs.size == 0
        lifting = interpolate(vs, lambda x: x).coefficients
        red = apply_dirichlet(system, lifting)
        assert red.a_ff.shape == (0, 0)
        assert red.b_f.shape == (1, 0)
        u = expand_solution(red, np.zeros(0))
        assert np.array_equal(u, lifting)


class TestDeterminismAndGuards:
    def test_reassembly_is_bitwise_identical(self):
        mesh = red_refine(octa_patch())
        vs = velocity_space(mesh, "ks-bubble")
        a1 = assemble_a(mesh, vs, mu=1.0)
        a2 = assemble_a(mesh, vs, mu=1.0)
        assert np.array_equal(a1.data, a2.data)
        assert np.array_equal(a1.indices, a2.indices)
        assert np.array_equal(a1.indptr, a2.indptr)

    def test_assembled_matrix_exactly_symmetric(self):
        mesh = red_refine(octa_patch())
        for name in ("ks-p2", "ks-bubble", "br"):
            vs = velocity_space(mesh, name)
            a = assemble_a(mesh, vs, mu=2.0)
            asym = (a - a.T).tocoo()
            assert asym.nnz == 0 or np.abs(asym.data).max() == 0.0

    def test_quadrature_degree_guard(self):
        mesh = octa_patch()
        vs = velocity_space(mesh, "ks-bubble")
        with pytest.raises(QuadratureDegreeTooLow):
            assemble_a(mesh, vs, mu=1.0, rule=rule_for_degree(2))
        with pytest.raises(QuadratureDegreeTooLow):
            assemble_b(mesh, vs, pressure_space(mesh), rule=rule_for_degree(1))
        with pytest.raises(QuadratureDegreeTooLow):
            assemble_gram(mesh, vs, "mass", rule=rule_for_degree(4))
