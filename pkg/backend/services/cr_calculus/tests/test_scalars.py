"""
Tests for the exact scalar layer: Gaussian rationals, conjugation,
parsing and random sampling.
"""

import unittest
from fractions import Fraction

from hypothesis import given, settings
from hypothesis import strategies as st
from sympy.polys.domains import QQ_I

from backend.services.cr_calculus.scalars import (
    CalculusError,
    as_polynomial,
    as_scalar,
    conj_scalar,
    conjugate,
    derive,
    divide,
    heisenberg_ring,
    heisenberg_symbols,
    is_real,
    make_rng,
    parse_poly,
    parse_real_poly,
    poly_to_str,
    random_poly,
    random_real_poly,
    rational_field,
    scalar_from_json,
    scalar_to_json,
)


class TestGaussianRationals(unittest.TestCase):
    """Test cases for scalar conversion."""

    def test_as_scalar_inputs(self):
        """Integers, fractions and strings convert exactly."""
        self.assertEqual(as_scalar(3), QQ_I(3, 0))
        self.assertEqual(as_scalar(Fraction(1, 3)) * 3, QQ_I(1, 0))
        self.assertEqual(as_scalar("1/2") * 2, QQ_I(1, 0))
        self.assertEqual(as_scalar("2*I"), QQ_I(0, 2))

    def test_as_scalar_rejects_symbols(self):
        with self.assertRaises(CalculusError):
            as_scalar("x")

    def test_json_form(self):
        c = as_scalar("1/3 - 2*I")
        data = scalar_to_json(c)
        self.assertEqual(data, {"re": "1/3", "im": "-2"})
        self.assertEqual(scalar_from_json(data), c)

    @given(st.integers(-50, 50), st.integers(-50, 50), st.integers(1, 9))
    def test_conjugation_is_an_involution(self, re_part, im_part, denominator):
        c = QQ_I(re_part, im_part) / QQ_I(denominator, 0)
        self.assertEqual(conj_scalar(conj_scalar(c)), c)
        self.assertEqual((c * conj_scalar(c)).y, 0)


class TestPolynomials(unittest.TestCase):
    """Test cases for the Heisenberg polynomial ring."""

    def setUp(self):
        """Set up test fixtures."""
        self.R = heisenberg_ring(2)

    def test_symbol_order(self):
        self.assertEqual(heisenberg_symbols(2), ["z1", "z2", "zb1", "zb2", "t"])
        with self.assertRaises(CalculusError):
            heisenberg_symbols(0)

    def test_conjugate_swaps_symbols(self):
        p = parse_poly("I*z1*zb2 + t", self.R)
        self.assertEqual(conjugate(p), parse_poly("-I*zb1*z2 + t", self.R))

    def test_reality(self):
        self.assertTrue(is_real(parse_poly("z1*zb1 + t", self.R)))
        self.assertFalse(is_real(parse_poly("z1", self.R)))
        with self.assertRaises(CalculusError):
            parse_real_poly("I*t", self.R)

    def test_parse_errors(self):
        """Unknown symbols and syntax errors raise CalculusError."""
        with self.assertRaises(CalculusError):
            parse_poly("z3", self.R)
        with self.assertRaises(CalculusError):
            parse_poly("z1 +* 2", self.R)
        with self.assertRaises(CalculusError):
            parse_poly("1/z1", self.R)

    def test_derive(self):
        p = parse_poly("t*z1 + zb2**2", self.R)
        self.assertEqual(derive(p, "t"), parse_poly("z1", self.R))
        self.assertEqual(derive(p, 3), parse_poly("2*zb2", self.R))
        with self.assertRaises(CalculusError):
            derive(p, "w")

    def test_derive_rational_function(self):
        """Quotient rule in the fraction field, by name and by generator."""
        F = rational_field(("z1", "zb1", "t"))
        z1, zb1, t = F.gens
        q = t / (1 + z1 * zb1)
        self.assertEqual(derive(q, "t"), 1 / (1 + z1 * zb1))
        self.assertEqual(derive(q, z1), -t * zb1 / (1 + z1 * zb1) ** 2)
        self.assertEqual(derive(F.one * 3, "zb1"), F.zero)
        with self.assertRaises(CalculusError):
            derive(q, z1 * zb1)

    def test_divide(self):
        z1 = parse_poly("z1", self.R)
        q = divide(z1 * z1, z1)
        self.assertEqual(as_polynomial(q), z1)
        self.assertIsNone(as_polynomial(divide(self.R.one, z1)))
        with self.assertRaises(CalculusError):
            divide(z1, self.R.zero)

    def test_printing_is_deterministic(self):
        p = parse_poly("t + z1*zb1", self.R)
        self.assertEqual(poly_to_str(p), poly_to_str(parse_poly("zb1*z1 + t", self.R)))
        self.assertEqual(poly_to_str(self.R.zero), "0")

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_random_polynomials(self, seed):
        """Sampling is reproducible and conjugation is an involution on samples."""
        p = random_poly(self.R, make_rng(seed))
        self.assertEqual(p, random_poly(self.R, make_rng(seed)))
        self.assertEqual(conjugate(conjugate(p)), p)
        self.assertTrue(is_real(random_real_poly(self.R, make_rng(seed))))


if __name__ == "__main__":
    unittest.main()
