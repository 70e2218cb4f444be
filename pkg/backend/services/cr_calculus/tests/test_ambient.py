"""
Tests for defining functions, the ambient Laplacian and the obstruction
to formal harmonic extension.
"""

import unittest

import sympy
from sympy.polys.domains import QQ_I

from backend.services.cr_calculus.ambient import (
    DefiningFunction,
    PhiSeries,
    heisenberg_translation,
    obstruction,
    obstruction_ratio,
    transverse_data,
    verify_ambient,
    verify_obstruction,
)
from backend.services.cr_calculus.checks import all_passed
from backend.services.cr_calculus.heisenberg import Signature, Weight
from backend.services.cr_calculus.scalars import CalculusError, as_scalar, make_rng, parse_poly


def _constant(value):
    """The constant of a rational function with ground numerator and denominator."""
    return value.numer.LC / value.denom.LC


class TestDefiningFunction(unittest.TestCase):
    """Test cases for the Monge-Ampere normalization and transverse data."""

    def setUp(self):
        """Set up test fixtures."""
        self.sig = Signature.of(1)

    def test_heisenberg_J(self):
        df = DefiningFunction.heisenberg_type(self.sig)
        self.assertEqual(df.kind, "heisenberg")
        self.assertEqual(_constant(df.J), as_scalar("1/4"))

    def test_sphere_J(self):
        self.assertEqual(_constant(DefiningFunction.hyperquadric(self.sig).J), QQ_I(1, 0))

    def test_degenerate_rejected(self):
        with self.assertRaises(CalculusError):
            DefiningFunction.parse("z1*zb1", self.sig)
        with self.assertRaises(CalculusError):
            DefiningFunction.parse("I*z1", self.sig)

    def test_heisenberg_transverse_field(self):
        """xi = 2i d/dz2 with vanishing transverse curvature."""
        df = DefiningFunction.heisenberg_type(self.sig)
        data = transverse_data(df)
        self.assertFalse(data.r)
        self.assertFalse(data.xi[0])
        self.assertEqual(data.xi[1], df.K.one * QQ_I(0, 2))

    def test_sphere_transverse_field(self):
        """xi^a = -z^a/|z|^2 and r = -1/|z|^2 on the sphere."""
        df = DefiningFunction.hyperquadric(self.sig)
        K = df.K
        z1, z2, zb1, zb2 = K.gens[1], K.gens[2], K.gens[4], K.gens[5]
        norm = z1 * zb1 + z2 * zb2
        data = transverse_data(df)
        self.assertEqual(data.r, -1 / norm)
        self.assertEqual(data.xi[0], -z1 / norm)
        self.assertEqual(data.xi[1], -z2 / norm)

    def test_scaling(self):
        df = DefiningFunction.heisenberg_type(self.sig).scaled(2)
        self.assertEqual(df.scale, QQ_I(2, 0))
        self.assertEqual(df.kind, "heisenberg")


class TestPhiSeries(unittest.TestCase):
    """Test cases for formal powers of the defining function."""

    def setUp(self):
        """Set up test fixtures."""
        self.df = DefiningFunction.hyperquadric(Signature.of(1))

    def test_power_arithmetic(self):
        phi = self.df.phi
        half = PhiSeries.power(phi, sympy.Rational(1, 2))
        self.assertEqual(half * half, PhiSeries.constant(phi, phi))
        self.assertFalse(half - half)

    def test_integral_powers_are_rational(self):
        phi = self.df.phi
        series = PhiSeries.power(phi, 2) + PhiSeries.constant(phi, phi.field.one)
        self.assertEqual(series.as_rational(), phi ** 2 + 1)


class TestAmbientIdentities(unittest.TestCase):
    """The ambient metric, the homogeneous Laplacian and its boundary operator."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = make_rng(23)
        self.sig = Signature.of(1)

    def test_verify_ambient(self):
        weights = [Weight(0, 0), Weight(1, 0)]
        for df in (DefiningFunction.heisenberg_type(self.sig), DefiningFunction.hyperquadric(self.sig)):
            results = verify_ambient(df, self.rng, weights=weights, scat_weights=[0, sympy.Rational(-1, 2)],
                                     samples=1)
            self.assertTrue(all_passed(results), df.kind)


class TestObstruction(unittest.TestCase):
    """Test cases for the obstruction on the Heisenberg-type hypersurface."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = make_rng(29)
        self.sig = Signature.of(1)
        self.df = DefiningFunction.heisenberg_type(self.sig)
        self.R = self.sig.ring

    def test_first_order_ratio(self):
        """At k=1 the obstruction is one half of -2 box."""
        fs = [parse_poly(text, self.R) for text in ("z1*zb1", "t*z1*zb1 + t**2", "z1**2*zb1 + I*t")]
        ratio = obstruction_ratio(self.df, Weight("-1/2", "-1/2"), fs, 1)
        self.assertEqual(ratio, as_scalar("1/2"))

    def test_order_mismatch(self):
        with self.assertRaises(CalculusError):
            obstruction(self.df, Weight(0, 0), parse_poly("t", self.R), 1)

    def test_verify_obstruction(self):
        results, ratio = verify_obstruction(self.df, Weight(0, -1), 1, self.rng, samples=3)
        self.assertTrue(all_passed(results))
        self.assertIsNotNone(ratio)

    def test_translation(self):
        f = parse_poly("t + z1*zb1", self.R)
        self.assertEqual(heisenberg_translation(self.sig, f, [0], 0), f)
        self.assertEqual(heisenberg_translation(self.sig, f, [0], 1), f + 1)


if __name__ == "__main__":
    unittest.main()
