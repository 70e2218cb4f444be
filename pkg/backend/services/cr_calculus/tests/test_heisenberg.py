"""
Tests for signatures, weights, the Heisenberg frame and field operations.
"""

import unittest

import sympy
from sympy.polys.domains import QQ_I

from backend.services.cr_calculus.heisenberg import (
    Field,
    Frame,
    IndexKind,
    Signature,
    Weight,
    contract,
    frame_apply,
    frame_self_check,
    is_natural,
    levi_field,
    raise_lower,
    sublaplacian,
    tensor,
)
from backend.services.cr_calculus.scalars import CalculusError, parse_poly


class TestSignatureAndWeight(unittest.TestCase):
    """Test cases for Signature and Weight validation."""

    def test_signature_validation(self):
        self.assertEqual(Signature.of(2).eps, (1, 1))
        self.assertEqual(Signature.of(2, [1, -1]).q, 1)
        with self.assertRaises(CalculusError):
            Signature.of(0)
        with self.assertRaises(CalculusError):
            Signature.of(2, [1])
        with self.assertRaises(CalculusError):
            Signature.of(1, [2])

    def test_weight_admissibility(self):
        w = Weight("1/2", "-1/2")
        self.assertEqual(w.total(), 0)
        self.assertEqual(w.conjugate(), Weight("-1/2", "1/2"))
        self.assertEqual(w.shift(-1, 0), Weight("-1/2", "-1/2"))
        with self.assertRaises(CalculusError):
            Weight("1/2", 1)
        with self.assertRaises(CalculusError):
            Weight("sqrt(2)", 0)

    def test_is_natural(self):
        self.assertTrue(is_natural(sympy.Integer(0)))
        self.assertFalse(is_natural(sympy.Integer(-1)))
        self.assertFalse(is_natural(sympy.Rational(1, 2)))


class TestFrame(unittest.TestCase):
    """Test cases for the Heisenberg frame."""

    def test_self_check(self):
        """Frame commutators hold in every signature."""
        for sig in (Signature.of(1), Signature.of(1, [-1]), Signature.of(2, [1, -1])):
            self.assertTrue(frame_self_check(sig))

    def test_frame_on_coordinates(self):
        sig = Signature.of(1)
        R = sig.ring
        t = parse_poly("t", R)
        self.assertEqual(frame_apply(sig, Frame.Z, 1, t), parse_poly("I/2*zb1", R))
        self.assertEqual(frame_apply(sig, "Zbar", 1, t), parse_poly("-I/2*z1", R))
        with self.assertRaises(CalculusError):
            frame_apply(sig, Frame.Z, 2, t)


class TestFieldOperations(unittest.TestCase):
    """Test cases for Field arithmetic, metric operations and the sublaplacian."""

    def setUp(self):
        """Set up test fixtures."""
        self.sig = Signature.of(1)
        self.R = self.sig.ring

    def test_sublaplacian_of_norm(self):
        """Delta_b |z|^2 = -2 on the flat model."""
        F = Field.scalar(self.sig, Weight(0, 0), parse_poly("z1*zb1", self.R))
        lap = sublaplacian(F)
        self.assertEqual(lap[()], self.R.ground_new(QQ_I(-2, 0)))
        self.assertEqual(lap.weight, Weight(-1, -1))

    def test_key_validation(self):
        with self.assertRaises(CalculusError):
            Field(self.sig, Weight(0, 0), (IndexKind.HOL_DOWN,), {(2,): self.R.one})
        with self.assertRaises(CalculusError):
            Field(self.sig, Weight(0, 0), (IndexKind.HOL_DOWN,), {(1, 1): self.R.one})

    def test_incompatible_addition(self):
        a = Field(self.sig, Weight(0, 0), (IndexKind.HOL_DOWN,), {(1,): self.R.one})
        b = Field(self.sig, Weight(0, 0), (IndexKind.AHOL_DOWN,), {(1,): self.R.one})
        with self.assertRaises(CalculusError):
            a + b

    def test_raise_and_contract(self):
        """Raising a slot of the Levi form and contracting gives the dimension."""
        sig = Signature.of(2, [1, -1])
        h = levi_field(sig)
        raised = raise_lower(h, 1)
        self.assertEqual(raised.kinds, (IndexKind.HOL_DOWN, IndexKind.HOL_UP))
        self.assertEqual(raised.weight, Weight(0, 0))
        self.assertEqual(contract(raised, 0, 1)[()], sig.ring.ground_new(QQ_I(2, 0)))
        with self.assertRaises(CalculusError):
            contract(h, 0, 1)
        with self.assertRaises(CalculusError):
            raise_lower(h, 2)

    def test_tensor_weights(self):
        f = Field.scalar(self.sig, Weight(1, 0), parse_poly("z1", self.R))
        g = Field.scalar(self.sig, Weight(0, 1), parse_poly("zb1", self.R))
        fg = tensor(f, g)
        self.assertEqual(fg.weight, Weight(1, 1))
        self.assertEqual(fg[()], parse_poly("z1*zb1", self.R))

    def test_conjugate_field(self):
        f = Field.scalar(self.sig, Weight(1, 0), parse_poly("I*z1", self.R))
        conj = f.conjugate()
        self.assertEqual(conj.weight, Weight(0, 1))
        self.assertEqual(conj[()], parse_poly("-I*zb1", self.R))


if __name__ == "__main__":
    unittest.main()
