"""
Tests for the tractor connection, the D operator and the box operator.
"""

import unittest

from sympy.polys.domains import QQ_I

from backend.services.cr_calculus.checks import all_passed, check_weight
from backend.services.cr_calculus.heisenberg import Field, IndexKind, Signature, Weight, contract
from backend.services.cr_calculus.scalars import CalculusError, make_rng, parse_poly, parse_real_poly
from backend.services.cr_calculus.structures import PHStructure
from backend.services.cr_calculus.tractor import (
    box,
    box_bar,
    canonical_multiply,
    canonical_tractor,
    pairing,
    random_tractor,
    tractor_D,
    tractor_D_bar,
    tractor_D_upper,
    tractor_curvature,
    transport,
    verify_box_resonance,
    verify_d_operator,
    verify_flat_tractor_identities,
    verify_synthetic_curvature,
    verify_tractor_connection,
    verify_tractor_curvature,
    verify_transport,
)


class TestFlatTractorD(unittest.TestCase):
    """Test cases for explicit flat-model values."""

    def setUp(self):
        """Set up test fixtures."""
        self.sig = Signature.of(1)
        self.R = self.sig.ring
        self.flat = PHStructure.flat(self.sig)

    def test_D_of_norm(self):
        """D_A |z|^2 on E(1,0) is (2|z|^2, 2 zb, -1)."""
        f = Field.scalar(self.sig, Weight(1, 0), parse_poly("z1*zb1", self.R))
        D = tractor_D(self.flat, f)
        self.assertEqual(D.kinds, (IndexKind.TRAC_DOWN,))
        self.assertEqual(D.weight, Weight(0, 0))
        self.assertEqual(D[(0,)], parse_poly("2*z1*zb1", self.R))
        self.assertEqual(D[(1,)], parse_poly("2*zb1", self.R))
        self.assertEqual(D[(2,)], parse_poly("-1", self.R))

    def test_box_of_t(self):
        """box t = i(1/2 + w) on the flat model."""
        for w, expected in ((0, QQ_I(0, 1) / QQ_I(2, 0)), (1, QQ_I(0, 3) / QQ_I(2, 0))):
            f = Field.scalar(self.sig, Weight(w, -w), parse_poly("t", self.R))
            self.assertEqual(box(self.flat, f)[()], self.R.ground_new(expected))

    def test_D_contracted_with_D_upper(self):
        """D_A D^A f vanishes."""
        f = Field.scalar(self.sig, Weight(0, 0), parse_poly("z1 + t", self.R))
        raised = tractor_D_upper(self.flat, f)
        self.assertEqual(raised.kinds, (IndexKind.TRAC_UP,))
        contracted = contract(tractor_D(self.flat, tractor_D_upper(self.flat, f)), 0, 1)
        self.assertTrue(contracted.is_zero())

    def test_flat_curvature_vanishes(self):
        self.assertTrue(tractor_curvature(self.flat).is_zero())


class TestTransport(unittest.TestCase):
    """Test cases for changing the realization."""

    def setUp(self):
        """Set up test fixtures."""
        self.sig = Signature.of(2, [1, -1])
        self.st = PHStructure(self.sig, parse_real_poly("z1*zb1 - z2*zb2 + t", self.sig.ring))
        self.rng = make_rng(5)

    def test_canonical_tractor_fixed(self):
        Z = canonical_tractor(self.sig)
        self.assertEqual(transport(self.st, Z), Z)

    def test_metric_preserved(self):
        u = random_tractor(self.sig, Weight(0, 0), (IndexKind.TRAC_DOWN,), self.rng)
        v = random_tractor(self.sig, Weight(0, 0), (IndexKind.TRAC_DOWN,), self.rng)
        self.assertEqual(pairing(transport(self.st, u), transport(self.st, v)), pairing(u, v))

    def test_transport_by_polynomial(self):
        """A bare rescaling polynomial transports like the structure it defines."""
        u = random_tractor(self.sig, Weight(0, 0), (IndexKind.TRAC_DOWN,), self.rng)
        self.assertEqual(transport(self.st.upsilon, u), transport(self.st, u))

    def test_verify_transport(self):
        self.assertTrue(all_passed(verify_transport(self.st, self.rng)))


class TestTractorIdentities(unittest.TestCase):
    """Invariance and flatness identities on rescaled structures."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = make_rng(3)
        self.sig = Signature.of(1)
        R = self.sig.ring
        self.structures = [
            PHStructure(self.sig, parse_real_poly("z1*zb1", R)),
            PHStructure(self.sig, parse_real_poly("t + z1*zb1", R)),
        ]

    def test_connection(self):
        for st in self.structures:
            self.assertTrue(all_passed(verify_tractor_connection(st, self.rng)), st.describe())

    def test_d_operator(self):
        for st in self.structures:
            for weight in (Weight(0, 0), Weight("1/2", "-1/2"), Weight(2, -1)):
                self.assertTrue(all_passed(verify_d_operator(st, weight, self.rng)), f"{st.describe()} {weight}")

    def test_d_operator_vanishing_factors(self):
        """(n+w+w'+2)(n+w+1) is zero at (-2,0) and (-1,-2) for n=1."""
        flat = PHStructure.flat(self.sig)
        for weight in (Weight(-2, 0), Weight(-1, -2)):
            f = Field.scalar(self.sig, weight, parse_poly("z1*zb1 + t*z1 + 3", self.sig.ring))
            dz = contract(tractor_D(flat, canonical_multiply(f, upper=True)), 0, 1)
            self.assertTrue(dz.is_zero(), f"{weight}")
            for st in self.structures:
                self.assertTrue(all_passed(verify_d_operator(st, weight, self.rng)), f"{st.describe()} {weight}")

    def test_output_weights(self):
        st = self.structures[1]
        f = Field.scalar(self.sig, Weight("1/2", "-1/2"), parse_poly("z1*t", self.sig.ring))
        self.assertEqual(tractor_D(st, f).weight, Weight("-1/2", "-1/2"))
        self.assertEqual(tractor_D_bar(st, f).weight, Weight("1/2", "-3/2"))
        self.assertEqual(box(st, f).weight, Weight("-1/2", "-3/2"))
        self.assertEqual(box_bar(st, f).weight, Weight("-1/2", "-3/2"))
        self.assertFalse(check_weight("wrong tag", "output weights", box(st, f), Weight("1/2", "-1/2")).passed)

    def test_box_resonance(self):
        resonant = Weight("1/2", "-3/2")
        for st in self.structures:
            self.assertTrue(all_passed(verify_box_resonance(st, resonant, self.rng)))
        with self.assertRaises(CalculusError):
            verify_box_resonance(self.structures[0], Weight(0, 0), self.rng)

    def test_curvature_vanishes(self):
        for st in self.structures:
            self.assertTrue(all_passed(verify_tractor_curvature(st)))
        self.assertTrue(all_passed(verify_synthetic_curvature(Signature.of(2), self.rng)))

    def test_flat_identities(self):
        """Commutators and [box^k, Z_A] = k box^(k-1) D~_A up to k=4, on densities and tractors."""
        weights = [Weight(0, 0), Weight("1/2", "-1/2")]
        results = verify_flat_tractor_identities(self.sig, weights, self.rng, k_max=4)
        self.assertTrue(all_passed(results))


if __name__ == "__main__":
    unittest.main()
