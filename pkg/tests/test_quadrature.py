"""Quadrature rules: monomial exactness oracles and integration helpers."""

import itertools
from types import SimpleNamespace

import numpy as np
import pytest

from ks3d.errors import UnsupportedDegree
from ks3d.quadrature import (
    SUPPORTED_DEGREES,
    SUPPORTED_FACE_DEGREES,
    face_rule_for_degree,
    integrate,
    integrate_face,
    rule_for_degree,
    simplex_monomial_integral,
)

WEIGHT_SUM_TOL = 1e-14
MONOMIAL_RTOL = 1e-12


def multi_indices(num_vars, max_total):
    for combo in itertools.product(range(max_total + 1), repeat=num_vars):
        if sum(combo) <= max_total:
            yield combo


def reference_tet_stub():
    """Just enough mesh surface for integrate(): the reference tetrahedron."""
    return SimpleNamespace(
        vertices=np.array(
            [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        ),
        cells=np.array([[0, 1, 2, 3]]),
        cell_volume=np.array([1.0 / 6.0]),
    )


class TestTetRules:
    def test_unsupported_degree(self):
        with pytest.raises(UnsupportedDegree):
            rule_for_degree(7)

    def test_degree_one_is_centroid(self):
        rule = rule_for_degree(1)
        assert rule.num_points == 1
        np.testing.assert_allclose(rule.points, 0.25)
        np.testing.assert_allclose(rule.weights, 1.0)

    @pytest.mark.parametrize("d", SUPPORTED_DEGREES)
    def test_weights_sum_to_one(self, d):
        rule = rule_for_degree(d)
        assert abs(rule.weights.sum() - 1.0) <= WEIGHT_SUM_TOL
        assert (rule.weights > 0).all()

    @pytest.mark.parametrize("d", SUPPORTED_DEGREES)
    def test_points_inside_simplex(self, d):
        rule = rule_for_degree(d)
        assert (rule.points >= 0).all() and (rule.points <= 1).all()
        np.testing.assert_allclose(rule.points.sum(axis=1), 1.0, atol=1e-14)

    @pytest.mark.parametrize("d", SUPPORTED_DEGREES)
    def test_monomial_exactness(self, d):
        # property: quadrature of every barycentric monomial with |a| <= degree
        # matches the closed-form simplex integral (unit measure)
        rule = rule_for_degree(d)
        assert rule.exactness_degree >= d
        for a in multi_indices(4, rule.exactness_degree):
            vals = np.prod(rule.points ** np.asarray(a), axis=1)
            approx = float(rule.weights @ vals)
            exact = simplex_monomial_integral(a, 1.0)
            assert approx == pytest.approx(exact, rel=MONOMIAL_RTOL), a

    def test_point_counts_fixed(self):
        counts = {d: rule_for_degree(d).num_points for d in SUPPORTED_DEGREES}
        assert counts == {1: 1, 2: 8, 3: 8, 4: 27, 5: 27, 6: 64, 8: 125}

    def test_lambda1_squared_oracle(self):
        # d=2 rule on lambda_1^2 over the reference tet: (1/6)*(2!*3!)/5! = 1/60
        rule = rule_for_degree(2)
        vals = rule.points[:, 1] ** 2
        assert (1.0 / 6.0) * float(rule.weights @ vals) == pytest.approx(1.0 / 60.0, rel=1e-14)

    def test_face_bubble_squared_oracle(self):
        # (60 l1 l2 l3)^2 is degree 6: d=6 rule gives |T|*3600*48/362880
        rule = rule_for_degree(6)
        vals = (60.0 * rule.points[:, 1] * rule.points[:, 2] * rule.points[:, 3]) ** 2
        exact = (1.0 / 6.0) * 3600.0 * 48.0 / 362880.0
        assert (1.0 / 6.0) * float(rule.weights @ vals) == pytest.approx(exact, rel=1e-13)


class TestFaceRules:
    def test_unsupported_degree(self):
        with pytest.raises(UnsupportedDegree):
            face_rule_for_degree(6)

    @pytest.mark.parametrize("d", SUPPORTED_FACE_DEGREES)
    def test_monomial_exactness(self, d):
        rule = face_rule_for_degree(d)
        assert abs(rule.weights.sum() - 1.0) <= WEIGHT_SUM_TOL
        assert rule.exactness_degree >= d
        for a in multi_indices(3, rule.exactness_degree):
            vals = np.prod(rule.points ** np.asarray(a), axis=1)
            approx = float(rule.weights @ vals)
            exact = simplex_monomial_integral(a, 1.0)
            assert approx == pytest.approx(exact, rel=MONOMIAL_RTOL), a

    def test_lambda_product_oracle(self):
        # int_F l1 l2 l3 ds = |F|/60 on any triangle (unit measure here)
        rule = face_rule_for_degree(4)
        vals = np.prod(rule.points, axis=1)
        assert float(rule.weights @ vals) == pytest.approx(1.0 / 60.0, rel=1e-13)


class TestIntegrate:
    def test_constant(self):
        mesh = reference_tet_stub()
        assert integrate(mesh, 0, lambda x: np.ones(len(x)), rule_for_degree(2)) == pytest.approx(
            1.0 / 6.0
        )

    def test_barycentric_coordinate(self):
        # f = lambda_1 = 1 - x1 - x2 - x3 integrates to |T|/4 = 1/24
        mesh = reference_tet_stub()
        val = integrate(mesh, 0, lambda x: 1.0 - x.sum(axis=1), rule_for_degree(1))
        assert val == pytest.approx(1.0 / 24.0, rel=1e-14)

    def test_coordinate_sum(self):
        mesh = reference_tet_stub()
        val = integrate(mesh, 0, lambda x: x.sum(axis=1), rule_for_degree(1))
        assert val == pytest.approx(1.0 / 8.0, rel=1e-14)

    def test_affine_invariance(self):
        # int_{A(T)} f dx = |det A| int_T (f o A) dx for random affine maps
        rng = np.random.default_rng(20260814)
        base = reference_tet_stub()
        rule = rule_for_degree(4)
        for _ in range(10):
            A = rng.uniform(-1.0, 1.0, (3, 3)) + 2.0 * np.eye(3)
            b = rng.uniform(-1.0, 1.0, 3)
            det = abs(np.linalg.det(A))
            mapped_verts = base.vertices @ A.T + b
            mapped = SimpleNamespace(
                vertices=mapped_verts,
                cells=base.cells,
                cell_volume=np.array([det / 6.0]),
            )

            def f(x):
                return x[:, 0] ** 3 - 2.0 * x[:, 1] * x[:, 2] + 0.5 * x[:, 2] ** 4

            lhs = integrate(mapped, 0, f, rule)
            rhs = det * integrate(base, 0, lambda x, A=A, b=b: f(x @ A.T + b), rule)
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_integrate_face_area_and_mean(self):
        # one face of the reference tet lying in the z=0 plane, area 1/2
        mesh = SimpleNamespace(
            vertices=np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
            face_vertices=np.array([[0, 1, 2]]),
            face_area=np.array([0.5]),
        )
        rule = face_rule_for_degree(2)
        assert integrate_face(mesh, 0, lambda x: np.ones(len(x)), rule) == pytest.approx(0.5)
        # int_F x1 ds = |F|/3 (barycentric first moment)
        assert integrate_face(mesh, 0, lambda x: x[:, 0], rule) == pytest.approx(
            0.5 / 3.0, rel=1e-13
        )
