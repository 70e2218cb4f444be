"""
Tests for the invariant powers of the sublaplacian, their special cases,
Folland-Stein factorization and operator matrices.
"""

import unittest

import sympy
from sympy.polys.domains import QQ_I

from backend.services.cr_calculus.checks import all_passed
from backend.services.cr_calculus.heisenberg import Frame, Signature, Weight, frame_operator
from backend.services.cr_calculus.invariant_ops import (
    IndexPattern,
    build_invariant_operator,
    default_pattern,
    flat_coefficient,
    flat_power,
    folland_stein_factorize,
    folland_stein_product,
    graded_basis,
    matrix_to_strings,
    operator_matrix,
    order_k,
    p00_formula,
    principal_part,
    q_curvature_3d,
    special_L00,
    sublaplacian_operator,
    verify_factorization,
    verify_flatgoody,
    verify_integration_by_parts,
    verify_operator_invariance,
    verify_pattern_independence,
    verify_q_curvature,
    verify_self_adjoint,
    verify_special_k2,
    weights_for_order,
)
from backend.services.cr_calculus.scalars import CalculusError, as_scalar, make_rng, parse_real_poly
from backend.services.cr_calculus.structures import PHStructure


class TestIndexPattern(unittest.TestCase):
    """Test cases for index patterns and default choices."""

    def test_parse(self):
        p = IndexPattern.parse("ub", 3)
        self.assertEqual((p.k, p.k1, p.k2), (3, 1, 1))
        self.assertTrue(p.consistent)
        self.assertEqual(str(p), "ub:01:10")
        self.assertFalse(IndexPattern.parse("ub:01:01", 3).consistent)

    def test_parse_errors(self):
        for text, k in (("ub", 2), ("ux", 3), ("ub:01", 3), ("ub:0a:10", 3), ("ub:00:10", 3)):
            with self.assertRaises(CalculusError, msg=text):
                IndexPattern.parse(text, k)

    def test_default_pattern(self):
        self.assertEqual(default_pattern(1, Weight("1/2", "-1/2")), IndexPattern.uniform(2))
        self.assertEqual(default_pattern(1, Weight(2, -2)), IndexPattern.uniform(2, barred=True))
        with self.assertRaises(CalculusError):
            default_pattern(1, Weight(0, 0))

    def test_order_k(self):
        self.assertEqual(order_k(2, Weight(0, 0)), 3)
        with self.assertRaises(CalculusError):
            order_k(1, Weight(-2, -1))

    def test_flat_coefficient(self):
        self.assertEqual(flat_coefficient(0, 0, 5, 7), QQ_I(1, 0))
        self.assertEqual(flat_coefficient(1, 0, 3, 0), QQ_I(-3, 0))
        self.assertEqual(flat_coefficient(1, 1, 2, 3), QQ_I(12, 0))
        self.assertEqual(flat_coefficient(2, 0, 1, 0), QQ_I(0, 0))


class TestFlatOperators(unittest.TestCase):
    """Explicit flat operators in low order."""

    def setUp(self):
        """Set up test fixtures."""
        self.sig = Signature.of(1)
        self.flat = PHStructure.flat(self.sig)
        self.lap = sublaplacian_operator(self.sig)
        self.T = frame_operator(self.sig, Frame.T)

    def test_first_order_is_folland_stein(self):
        """At k=1 the operator is Delta_b - i(n+2w) T."""
        for w in ("-1/2", "0", "1/2", "-3"):
            weight = Weight(w, -1 - sympy.Rational(w))
            op = build_invariant_operator(self.flat, weight)
            alpha = -(1 + 2 * sympy.Rational(w))
            self.assertEqual(op, folland_stein_product(self.sig, [alpha]), w)
            self.assertEqual(folland_stein_factorize(op, self.sig, 1), [as_scalar(alpha)])

    def test_self_dual_weight_gives_sublaplacian(self):
        op = build_invariant_operator(self.flat, Weight("-1/2", "-1/2"))
        self.assertEqual(op, self.lap)
        self.assertEqual(op.codomain_weight, Weight("-3/2", "-3/2"))

    def test_L00(self):
        """On E(0,0) in three dimensions L = Delta_b^2 + T^2 = (Delta_b + iT)(Delta_b - iT)."""
        L = special_L00(self.flat)
        self.assertEqual(L, self.lap.power(2) + self.T.power(2))
        self.assertEqual(folland_stein_factorize(L, self.sig, 2), [as_scalar(1), as_scalar(-1)])
        self.assertEqual(L, p00_formula(self.flat))

    def test_L00_requires_resonant_weight(self):
        with self.assertRaises(CalculusError):
            special_L00(self.flat, Weight(0, 1))

    def test_principal_parts(self):
        L = special_L00(self.flat)
        self.assertEqual(principal_part(L), principal_part(self.lap.power(2)))
        self.assertEqual(principal_part(L, nonisotropic=True), principal_part(self.lap.power(2), nonisotropic=True))

    def test_flat_power_matches_construction(self):
        weight = Weight("1/2", "-1/2")
        self.assertEqual(build_invariant_operator(self.flat, weight), flat_power(self.sig, weight, 2))

    def test_vanishing_normalization(self):
        """Two barred indices on w' = 0 make the normalization vanish."""
        with self.assertRaises(CalculusError):
            build_invariant_operator(self.flat, Weight(1, 0), IndexPattern.parse("bb", 3))
        with self.assertRaises(CalculusError):
            build_invariant_operator(self.flat, Weight("1/2", "-1/2"), IndexPattern.uniform(3))

    def test_q_curvature_requires_three_dimensions(self):
        with self.assertRaises(CalculusError):
            q_curvature_3d(PHStructure.flat(Signature.of(2)))
        self.assertTrue(q_curvature_3d(self.flat).is_zero())


class TestOperatorMatrix(unittest.TestCase):
    """Test cases for graded monomial matrices."""

    def setUp(self):
        """Set up test fixtures."""
        self.sig = Signature.of(1)

    def test_graded_basis(self):
        basis = graded_basis(3, 2)
        self.assertEqual(len(basis), 7)
        self.assertEqual(basis[0], (0, 0, 0))
        self.assertIn((0, 0, 1), basis)
        self.assertNotIn((1, 0, 1), basis)

    def test_degree_zero(self):
        op = build_invariant_operator(PHStructure.flat(self.sig), Weight(0, -1))
        basis, M = operator_matrix(op, 0)
        self.assertEqual(basis, [(0, 0, 0)])
        self.assertEqual(M.shape, (1, 1))
        self.assertEqual(matrix_to_strings(M), [["0"]])

    def test_sublaplacian_on_norm(self):
        basis, M = operator_matrix(sublaplacian_operator(self.sig), 2)
        column = basis.index((1, 1, 0))
        self.assertEqual(M.to_list()[basis.index((0, 0, 0))][column], QQ_I(-2, 0))

    def test_image_outside_span(self):
        lifted = sublaplacian_operator(self.sig).left_multiply(self.sig.ring.gens[2] ** 2)
        with self.assertRaises(CalculusError):
            operator_matrix(lifted, 2)


class TestInvariantIdentities(unittest.TestCase):
    """Invariance, self-adjointness and the three-dimensional special cases."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = make_rng(17)
        self.sig = Signature.of(1)
        R = self.sig.ring
        self.st = PHStructure(self.sig, parse_real_poly("z1*zb1", R))
        self.chained = PHStructure(self.sig, parse_real_poly("t", R), base=self.st)

    def test_flatgoody(self):
        for k in (1, 2):
            weights = weights_for_order(1, k, ["1/2", "-1"])
            self.assertTrue(all_passed(verify_flatgoody(self.sig, k, weights, self.rng)), k)
        with self.assertRaises(CalculusError):
            verify_flatgoody(self.sig, 2, [Weight(0, -1)], self.rng)

    def test_factorization_and_patterns(self):
        for weight in (Weight("1/2", "-1/2"), Weight(-1, 1), Weight(0, -1)):
            self.assertTrue(all_passed(verify_factorization(self.sig, weight)), str(weight))
        self.assertTrue(all_passed(verify_pattern_independence(self.sig, Weight("1/2", "-1/2"))))

    def test_operator_invariance(self):
        for weight in (Weight("-1/2", "-1/2"), Weight("1/2", "-1/2")):
            self.assertTrue(all_passed(verify_operator_invariance(self.st, weight)), str(weight))

    def test_self_adjoint(self):
        self.assertTrue(all_passed(verify_self_adjoint(self.st, Weight("-1/2", "-1/2"))))

    def test_integration_by_parts(self):
        for weight in (Weight(0, 0), Weight("1/2", "-1/2")):
            self.assertTrue(all_passed(verify_integration_by_parts(self.st, weight, self.rng)), str(weight))

    def test_special_k2_and_q(self):
        weights = [Weight(0, 0), Weight(2, -2), Weight(-1, 1)]
        for st in (self.st, self.chained):
            self.assertTrue(all_passed(verify_special_k2(st, weights)), st.describe())
            self.assertTrue(all_passed(verify_q_curvature(st)), st.describe())


if __name__ == "__main__":
    unittest.main()
