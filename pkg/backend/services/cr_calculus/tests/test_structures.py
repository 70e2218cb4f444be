"""
Tests for pseudohermitian rescalings and their curvature data.
"""

import unittest

from backend.services.cr_calculus.checks import all_passed
from backend.services.cr_calculus.heisenberg import IndexKind, Signature, Weight
from backend.services.cr_calculus.scalars import CalculusError, make_rng, parse_poly, parse_real_poly
from backend.services.cr_calculus.structures import (
    PHStructure,
    compose_rescalings,
    curvature_data,
    random_density,
    verify_curvature_symmetries,
    verify_dencomm,
    verify_leibniz,
    verify_transformation_laws,
)
from backend.services.cr_calculus.tractor import random_tractor


class TestPHStructure(unittest.TestCase):
    """Test cases for structure construction."""

    def setUp(self):
        """Set up test fixtures."""
        self.sig = Signature.of(1)
        self.R = self.sig.ring

    def test_flat(self):
        st = PHStructure.flat(self.sig)
        self.assertTrue(st.is_flat)
        self.assertTrue(curvature_data(st).is_zero())

    def test_rejects_complex_rescaling(self):
        with self.assertRaises(CalculusError):
            PHStructure(self.sig, parse_poly("I*t", self.R))

    def test_rejects_foreign_ring(self):
        with self.assertRaises(CalculusError):
            PHStructure(self.sig, Signature.of(2).ring.zero)

    def test_chained_rescaling(self):
        u1 = parse_real_poly("z1*zb1", self.R)
        u2 = parse_real_poly("t", self.R)
        st = PHStructure(self.sig, u2, base=PHStructure(self.sig, u1))
        self.assertFalse(st.is_flat)
        self.assertEqual(st.total_upsilon(), u1 + u2)
        self.assertIn("then", st.describe())

    def test_rescaled_curvature_nonzero(self):
        st = PHStructure(self.sig, parse_real_poly("z1*zb1", self.R))
        self.assertFalse(curvature_data(st).is_zero())


class TestStructureIdentities(unittest.TestCase):
    """The commutation, transformation and composition identities hold exactly."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = make_rng(11)

    def _structures(self, sig):
        R = sig.ring
        return [
            PHStructure.flat(sig),
            PHStructure(sig, parse_real_poly(" + ".join(f"z{a}*zb{a}" for a in range(1, sig.n + 1)), R)),
            PHStructure(sig, parse_real_poly("t + z1*zb1", R)),
        ]

    def test_dencomm(self):
        for sig in (Signature.of(1), Signature.of(2, [1, -1])):
            for st in self._structures(sig):
                for weight in (Weight(0, 0), Weight("1/2", "-1/2"), Weight(2, -1)):
                    f = random_density(sig, weight, self.rng, degree=2)
                    self.assertTrue(all_passed(verify_dencomm(st, f)), f"{st.describe()} {weight}")

    def test_leibniz(self):
        sig = Signature.of(1)
        st = self._structures(sig)[1]
        F = random_density(sig, Weight(1, 0), self.rng, degree=2)
        G = random_tractor(sig, Weight(0, 1), (IndexKind.HOL_DOWN,), self.rng)
        self.assertTrue(all_passed(verify_leibniz(st, F, G)))

    def test_curvature_symmetries_and_laws(self):
        sig = Signature.of(2)
        for st in self._structures(sig):
            self.assertTrue(all_passed(verify_curvature_symmetries(st)))
            self.assertTrue(all_passed(verify_transformation_laws(st)))

    def test_compose_rescalings(self):
        sig = Signature.of(1)
        R = sig.ring
        f = random_density(sig, Weight(0, 0), self.rng, degree=2)
        results = compose_rescalings(sig, parse_real_poly("z1*zb1", R), parse_real_poly("t", R), fields=[f])
        self.assertTrue(all_passed(results))
        self.assertGreater(len(results), 6)


if __name__ == "__main__":
    unittest.main()
