"""
The flat Heisenberg model.

Coordinates (z, zb, t), the admissible frame
    Z_a = d/dz_a + (i/2) eps_a zb_a d/dt,   Zbar_a = conj(Z_a),   T = d/dt,
the Levi form h = diag(eps), weighted tensor/tractor Fields, and the flat
Tanaka-Webster connection, which acts componentwise in the fixed density
trivialization.
"""

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import sympy
from sympy.polys.domains import QQ_I
from sympy.polys.rings import PolyElement, PolyRing

from backend.services.cr_calculus.diffop import (
    Component,
    DiffOp,
    component_to_str,
    conjugate_component,
    multiply_components,
    scale_component,
    vector_field_action,
)
from backend.services.cr_calculus.scalars import CalculusError, heisenberg_ring

logger = logging.getLogger(__name__)

Key = Tuple[int, ...]


# ---------------------------------------------------------------------------
# Signature and weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Signature:
    """CR dimension n and Levi signs eps (p plus signs, q minus signs)."""

    n: int
    eps: Tuple[int, ...]

    def __post_init__(self):
        if self.n < 1:
            raise CalculusError(f"CR dimension must be positive, got n={self.n}")
        if len(self.eps) != self.n:
            raise CalculusError(f"Signature needs {self.n} signs, got {len(self.eps)}")
        if any(e not in (1, -1) for e in self.eps):
            raise CalculusError(f"Levi signs must be +1 or -1, got {list(self.eps)}")

    @classmethod
    def of(cls, n: int, eps: Optional[Sequence[int]] = None) -> "Signature":
        return cls(n, tuple(int(e) for e in eps) if eps is not None else (1,) * n)

    @property
    def p(self) -> int:
        return sum(1 for e in self.eps if e == 1)

    @property
    def q(self) -> int:
        return self.n - self.p

    @property
    def ring(self) -> PolyRing:
        return heisenberg_ring(self.n)

    def sign(self, a: int) -> int:
        """eps_a for a in 1..n."""
        return self.eps[a - 1]

    def z(self, a: int) -> int:
        return a - 1

    def zb(self, a: int) -> int:
        return self.n + a - 1

    @property
    def t(self) -> int:
        return 2 * self.n

    def to_json(self) -> Dict[str, Any]:
        return {"n": self.n, "eps": list(self.eps)}


def _rational(value: Any) -> sympy.Rational:
    if isinstance(value, Fraction):
        return sympy.Rational(value.numerator, value.denominator)
    r = sympy.nsimplify(value) if isinstance(value, float) else sympy.sympify(value)
    if not r.is_Rational:
        raise CalculusError(f"Weight components must be rational, got {value!r}")
    return sympy.Rational(r)


@dataclass(frozen=True)
class Weight:
    """Density weight (w, w') with w - w' an integer."""

    w: sympy.Rational
    wp: sympy.Rational

    def __post_init__(self):
        object.__setattr__(self, "w", _rational(self.w))
        object.__setattr__(self, "wp", _rational(self.wp))
        if not (self.w - self.wp).is_integer:
            raise CalculusError(f"Weight ({self.w},{self.wp}) is not admissible: w - w' must be an integer")

    def shift(self, dw: Any, dwp: Any) -> "Weight":
        return Weight(self.w + _rational(dw), self.wp + _rational(dwp))

    def __add__(self, other: "Weight") -> "Weight":
        return Weight(self.w + other.w, self.wp + other.wp)

    def conjugate(self) -> "Weight":
        return Weight(self.wp, self.w)

    def total(self) -> sympy.Rational:
        return self.w + self.wp

    def __str__(self) -> str:
        return f"({self.w},{self.wp})"

    def to_json(self) -> List[str]:
        return [str(self.w), str(self.wp)]


def is_natural(x: sympy.Rational) -> bool:
    return bool(x.is_integer and x >= 0)


# ---------------------------------------------------------------------------
# Index kinds
# ---------------------------------------------------------------------------

class IndexKind(Enum):
    HOL_UP = "HolUp"
    HOL_DOWN = "HolDown"
    AHOL_UP = "AHolUp"
    AHOL_DOWN = "AHolDown"
    TRAC_DOWN = "TracDown"
    TRAC_UP = "TracUp"
    ATRAC_DOWN = "ATracDown"
    ATRAC_UP = "ATracUp"

    @property
    def is_tractor(self) -> bool:
        return self in _TRACTOR_KINDS

    @property
    def is_barred(self) -> bool:
        return self in (IndexKind.AHOL_UP, IndexKind.AHOL_DOWN, IndexKind.ATRAC_DOWN, IndexKind.ATRAC_UP)

    @property
    def is_lower(self) -> bool:
        return self in (IndexKind.HOL_DOWN, IndexKind.AHOL_DOWN, IndexKind.TRAC_DOWN, IndexKind.ATRAC_DOWN)

    def conjugate(self) -> "IndexKind":
        return _CONJUGATE_KIND[self]

    def dual(self) -> "IndexKind":
        return _DUAL_KIND[self]

    def metric_partner(self) -> "IndexKind":
        """The kind obtained by raising or lowering with the (tractor) Levi form."""
        return self.conjugate().dual()

    def values(self, n: int) -> range:
        return range(0, n + 2) if self.is_tractor else range(1, n + 1)


_TRACTOR_KINDS = (IndexKind.TRAC_DOWN, IndexKind.TRAC_UP, IndexKind.ATRAC_DOWN, IndexKind.ATRAC_UP)
_CONJUGATE_KIND = {
    IndexKind.HOL_UP: IndexKind.AHOL_UP,
    IndexKind.AHOL_UP: IndexKind.HOL_UP,
    IndexKind.HOL_DOWN: IndexKind.AHOL_DOWN,
    IndexKind.AHOL_DOWN: IndexKind.HOL_DOWN,
    IndexKind.TRAC_DOWN: IndexKind.ATRAC_DOWN,
    IndexKind.ATRAC_DOWN: IndexKind.TRAC_DOWN,
    IndexKind.TRAC_UP: IndexKind.ATRAC_UP,
    IndexKind.ATRAC_UP: IndexKind.TRAC_UP,
}
_DUAL_KIND = {
    IndexKind.HOL_UP: IndexKind.HOL_DOWN,
    IndexKind.HOL_DOWN: IndexKind.HOL_UP,
    IndexKind.AHOL_UP: IndexKind.AHOL_DOWN,
    IndexKind.AHOL_DOWN: IndexKind.AHOL_UP,
    IndexKind.TRAC_DOWN: IndexKind.TRAC_UP,
    IndexKind.TRAC_UP: IndexKind.TRAC_DOWN,
    IndexKind.ATRAC_DOWN: IndexKind.ATRAC_UP,
    IndexKind.ATRAC_UP: IndexKind.ATRAC_DOWN,
}


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

def _accumulate(out: Dict[Key, Component], key: Key, comp: Component) -> None:
    if key in out:
        out[key] = out[key] + comp
    else:
        out[key] = comp


class Field:
    """
    A weighted tensor/tractor field on the Heisenberg model.

    Components are polynomials, or DiffOps when the field is operator
    valued (the image of the identity operator under a chain of field
    operations). Missing keys denote zero. Tractor slot values are
    0 = top, 1..n = mid, n+1 = bot.
    """

    __slots__ = ("sig", "weight", "kinds", "_comps", "operator")

    def __init__(
        self,
        sig: Signature,
        weight: Weight,
        kinds: Sequence[IndexKind] = (),
        components: Optional[Mapping[Key, Component]] = None,
        operator: Optional[bool] = None,
    ):
        self.sig = sig
        self.weight = weight
        self.kinds = tuple(kinds)
        comps: Dict[Key, Component] = {}
        for key, comp in (components or {}).items():
            key = tuple(key)
            if len(key) != len(self.kinds):
                raise CalculusError(f"Key {key} does not match signature of length {len(self.kinds)}")
            for kind, v in zip(self.kinds, key):
                if v not in kind.values(sig.n):
                    raise CalculusError(f"Index value {v} out of range for {kind.value} (n={sig.n})")
            if comp:
                comps[key] = comp
        if operator is None:
            operator = any(isinstance(c, DiffOp) for c in comps.values())
        self.operator = operator
        self._comps = comps

    # -- construction helpers ---------------------------------------------------

    @classmethod
    def scalar(cls, sig: Signature, weight: Weight, value: Component) -> "Field":
        return cls(sig, weight, (), {(): value}, operator=isinstance(value, DiffOp))

    @classmethod
    def identity_operator(cls, sig: Signature, weight: Weight) -> "Field":
        """The scalar operator-valued field f -> f on E(w,w')."""
        return cls.scalar(sig, weight, DiffOp.identity(sig.ring, weight))

    def like(self, components: Mapping[Key, Component], weight: Optional[Weight] = None,
             kinds: Optional[Sequence[IndexKind]] = None) -> "Field":
        return Field(self.sig, weight or self.weight, self.kinds if kinds is None else kinds,
                     components, operator=self.operator)

    @property
    def ring(self) -> PolyRing:
        return self.sig.ring

    def zero_component(self) -> Component:
        return DiffOp.zero(self.ring) if self.operator else self.ring.zero

    # -- access -----------------------------------------------------------------

    def __getitem__(self, key: Key) -> Component:
        return self._comps.get(tuple(key), self.zero_component())

    def items(self) -> Iterator[Tuple[Key, Component]]:
        return iter(sorted(self._comps.items()))

    def nonzero_keys(self) -> List[Key]:
        return sorted(self._comps)

    def all_keys(self) -> Iterator[Key]:
        return itertools.product(*(k.values(self.sig.n) for k in self.kinds))

    def is_zero(self) -> bool:
        return not self._comps

    def __bool__(self) -> bool:
        return bool(self._comps)

    # -- arithmetic ---------------------------------------------------------------

    def _check_compatible(self, other: "Field") -> None:
        if self.kinds != other.kinds or self.sig != other.sig:
            raise CalculusError(
                f"Incompatible fields: {[k.value for k in self.kinds]} vs {[k.value for k in other.kinds]}"
            )

    def __add__(self, other: "Field") -> "Field":
        self._check_compatible(other)
        out = dict(self._comps)
        for key, comp in other._comps.items():
            _accumulate(out, key, comp)
        return Field(self.sig, self.weight, self.kinds, out, operator=self.operator or other.operator)

    def __neg__(self) -> "Field":
        return self.like({k: scale_component(c, -1) for k, c in self._comps.items()})

    def __sub__(self, other: "Field") -> "Field":
        return self + (-other)

    def scale(self, factor: Any) -> "Field":
        """Multiply every component by an exact scalar or a polynomial."""
        return self.like({k: scale_component(c, factor) for k, c in self._comps.items()})

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Field):
            return NotImplemented
        if self.kinds != other.kinds or self.sig != other.sig:
            return False
        return (self - other).is_zero()

    __hash__ = None  # type: ignore[assignment]

    def conjugate(self) -> "Field":
        """Swap barred and unbarred kinds, swap the weight, conjugate components."""
        return Field(
            self.sig,
            self.weight.conjugate(),
            [k.conjugate() for k in self.kinds],
            {k: conjugate_component(c) for k, c in self._comps.items()},
            operator=self.operator,
        )

    def map_components(self, fn: Callable[[Component], Component], weight: Optional[Weight] = None) -> "Field":
        return self.like({k: fn(c) for k, c in self._comps.items()}, weight=weight)

    def apply_to(self, f: PolyElement) -> "Field":
        """Evaluate an operator-valued field on a polynomial density component."""
        if not self.operator:
            raise CalculusError("apply_to needs an operator-valued field")
        return Field(self.sig, self.weight, self.kinds,
                     {k: c.apply(f) for k, c in self._comps.items()}, operator=False)

    def only_component(self) -> Component:
        if self.kinds:
            raise CalculusError("only_component is defined for scalar fields")
        return self[()]

    # -- slot manipulation ---------------------------------------------------------

    def prepend(self, kind: IndexKind, slots: Mapping[int, "Field"], weight: Weight) -> "Field":
        """New field with a leading slot whose value-v part is slots[v]."""
        out: Dict[Key, Component] = {}
        for v, part in slots.items():
            for key, comp in part._comps.items():
                out[(v,) + key] = comp
        return Field(self.sig, weight, (kind,) + self.kinds, out, operator=self.operator)

    def slot_part(self, slot: int, value: int) -> "Field":
        """Fix one slot to a value and drop it."""
        out = {k[:slot] + k[slot + 1:]: c for k, c in self._comps.items() if k[slot] == value}
        return Field(self.sig, self.weight, self.kinds[:slot] + self.kinds[slot + 1:], out, operator=self.operator)

    def permute_slots(self, order: Sequence[int]) -> "Field":
        """Reorder slots: the new slot i is the old slot order[i]."""
        out = {tuple(k[i] for i in order): c for k, c in self._comps.items()}
        return Field(self.sig, self.weight, [self.kinds[i] for i in order], out, operator=self.operator)

    def to_json(self) -> Dict[str, Any]:
        return {
            "weight": self.weight.to_json(),
            "kinds": [k.value for k in self.kinds],
            "components": [{"key": list(k), "value": component_to_str(c)} for k, c in self.items()],
        }

    def __repr__(self) -> str:
        body = ", ".join(f"{list(k)}: {component_to_str(c)}" for k, c in list(self.items())[:6])
        more = "" if len(self._comps) <= 6 else ", ..."
        return f"Field{self.weight}[{','.join(k.value for k in self.kinds)}]{{{body}{more}}}"


def first_difference(lhs: Field, rhs: Field) -> Optional[str]:
    """Witness string for the first differing component, or None when equal."""
    if lhs.kinds != rhs.kinds:
        return f"signature mismatch {[k.value for k in lhs.kinds]} vs {[k.value for k in rhs.kinds]}"
    diff = lhs - rhs
    if diff.is_zero():
        return None
    key = diff.nonzero_keys()[0]
    return f"component {list(key)}: lhs={component_to_str(lhs[key])} rhs={component_to_str(rhs[key])}"


# ---------------------------------------------------------------------------
# Frame
# ---------------------------------------------------------------------------

class Frame(Enum):
    Z = "Z"
    ZBAR = "Zbar"
    T = "T"


@lru_cache(maxsize=None)
def frame_coefficients(sig: Signature, which: Frame, a: int = 0) -> Dict[int, PolyElement]:
    """
    Coefficients (generator index -> polynomial) of a frame vector field.

    Raises:
        CalculusError: if a is out of 1..n for Z or Zbar
    """
    R = sig.ring
    gens = R.gens
    if which is Frame.T:
        return {sig.t: R.one}
    if not 1 <= a <= sig.n:
        raise CalculusError(f"Frame index {a} out of range 1..{sig.n}")
    e = sig.sign(a)
    if which is Frame.Z:
        return {sig.z(a): R.one, sig.t: gens[sig.zb(a)].mul_ground(QQ_I(0, sympy.Rational(e, 2)))}
    return {sig.zb(a): R.one, sig.t: gens[sig.z(a)].mul_ground(QQ_I(0, sympy.Rational(-e, 2)))}


def frame_apply(sig: Signature, which: Union[Frame, str], a: int, f: Component) -> Component:
    which = Frame(which) if isinstance(which, str) else which
    return vector_field_action(f, frame_coefficients(sig, which, a))


def frame_operator(sig: Signature, which: Frame, a: int = 0) -> DiffOp:
    return DiffOp.vector_field(sig.ring, frame_coefficients(sig, which, a))


def frame_self_check(sig: Signature) -> bool:
    """
    Assert [Z_a, Zbar_b] = -i h_ab T, [Z_a, Z_b] = 0 and [Z_a, T] = 0.

    Raises:
        CalculusError: if the frame conventions are inconsistent
    """
    T = frame_operator(sig, Frame.T)
    for a in range(1, sig.n + 1):
        Za = frame_operator(sig, Frame.Z, a)
        if (Za * T - T * Za):
            raise CalculusError(f"[Z_{a}, T] does not vanish")
        for b in range(1, sig.n + 1):
            Zb = frame_operator(sig, Frame.Z, b)
            Zbarb = frame_operator(sig, Frame.ZBAR, b)
            expected = T.scale(QQ_I(0, -sig.sign(a))) if a == b else DiffOp.zero(sig.ring)
            if Za * Zbarb - Zbarb * Za != expected:
                raise CalculusError(f"[Z_{a}, Zbar_{b}] != -i h T")
            if (Za * Zb - Zb * Za):
                raise CalculusError(f"[Z_{a}, Z_{b}] does not vanish")
    logger.info(f"Frame self-check passed for n={sig.n}, eps={list(sig.eps)}")
    return True


# ---------------------------------------------------------------------------
# Flat connection
# ---------------------------------------------------------------------------

class FlatConnection:
    """
    The flat Tanaka-Webster connection: componentwise frame differentiation
    in the fixed trivialization. Derivative indices are appended as the
    last slot.
    """

    def __init__(self, sig: Signature):
        self.sig = sig

    def hol(self, F: Field) -> Field:
        return _frame_derivative(F, Frame.Z, IndexKind.HOL_DOWN)

    def ahol(self, F: Field) -> Field:
        return _frame_derivative(F, Frame.ZBAR, IndexKind.AHOL_DOWN)

    def zero(self, F: Field) -> Field:
        coeffs = frame_coefficients(F.sig, Frame.T)
        return F.like({k: vector_field_action(c, coeffs) for k, c in F.items()}, weight=F.weight.shift(-1, -1))

    def triple(self, F: Field) -> Tuple[Field, Field, Field]:
        return self.hol(F), self.ahol(F), self.zero(F)


def _frame_derivative(F: Field, which: Frame, kind: IndexKind) -> Field:
    out: Dict[Key, Component] = {}
    for c in range(1, F.sig.n + 1):
        coeffs = frame_coefficients(F.sig, which, c)
        for key, comp in F.items():
            d = vector_field_action(comp, coeffs)
            if d:
                out[key + (c,)] = d
    return Field(F.sig, F.weight, F.kinds + (kind,), out, operator=F.operator)


def flat_cov_derivative(F: Field) -> Tuple[Field, Field, Field]:
    """(nabla_a F, nabla_abar F, nabla_0 F) for the flat structure."""
    return FlatConnection(F.sig).triple(F)


def sublaplacian(F: Field, connection: Any = None) -> Field:
    """
    Delta_b F = -(nabla^a nabla_a F + nabla^abar nabla_abar F), weight (w-1,w'-1).

    Args:
        F: any field; extra slots ride along
        connection: object with hol/ahol methods (flat by default)
    """
    conn = connection or FlatConnection(F.sig)
    m = len(F.kinds)
    first = conn.ahol(conn.hol(F))
    second = conn.hol(conn.ahol(F))
    out: Dict[Key, Component] = {}
    for G in (first, second):
        for key, comp in G.items():
            if key[m] == key[m + 1]:
                _accumulate(out, key[:m], scale_component(comp, -F.sig.sign(key[m])))
    return Field(F.sig, F.weight.shift(-1, -1), F.kinds, out, operator=F.operator)


# ---------------------------------------------------------------------------
# Metric operations
# ---------------------------------------------------------------------------

def levi_field(sig: Signature) -> Field:
    """The weighted Levi form h_ab (components diag(eps), weight (1,1))."""
    R = sig.ring
    comps = {(a, a): R.ground_new(sig.sign(a)) for a in range(1, sig.n + 1)}
    return Field(sig, Weight(1, 1), (IndexKind.HOL_DOWN, IndexKind.AHOL_DOWN), comps)


def raise_lower(F: Field, slot: int) -> Field:
    """
    Raise or lower one slot with the Levi form or the tractor metric.

    Holomorphic-type slots pass to the conjugate dual kind with the factor
    eps_a and a weight shift of (-1,-1) when raising, (+1,+1) when lowering.
    Tractor slots use h_AB (top <-> bot, mid scaled by eps) without
    weight shift.

    Raises:
        CalculusError: if the slot index is out of range
    """
    if not 0 <= slot < len(F.kinds):
        raise CalculusError(f"Slot {slot} out of range for {len(F.kinds)} slots")
    kind = F.kinds[slot]
    n = F.sig.n
    new_kinds = list(F.kinds)
    new_kinds[slot] = kind.metric_partner()
    out: Dict[Key, Component] = {}
    for key, comp in F.items():
        v = key[slot]
        if kind.is_tractor:
            if v == 0:
                nv, factor = n + 1, 1
            elif v == n + 1:
                nv, factor = 0, 1
            else:
                nv, factor = v, F.sig.sign(v)
        else:
            nv, factor = v, F.sig.sign(v)
        new_key = key[:slot] + (nv,) + key[slot + 1:]
        out[new_key] = scale_component(comp, factor)
    if kind.is_tractor:
        weight = F.weight
    else:
        weight = F.weight.shift(-1, -1) if kind.is_lower else F.weight.shift(1, 1)
    return Field(F.sig, weight, new_kinds, out, operator=F.operator)


def contract(F: Field, i: int, j: int) -> Field:
    """
    Contract a lower slot with a dual upper slot of the same family.

    Raises:
        CalculusError: if the kinds are not dual
    """
    ki, kj = F.kinds[i], F.kinds[j]
    if ki.dual() is not kj:
        raise CalculusError(f"Cannot contract {ki.value} with {kj.value}")
    keep = [s for s in range(len(F.kinds)) if s not in (i, j)]
    out: Dict[Key, Component] = {}
    for key, comp in F.items():
        if key[i] == key[j]:
            _accumulate(out, tuple(key[s] for s in keep), comp)
    return Field(F.sig, F.weight, [F.kinds[s] for s in keep], out, operator=F.operator)


def tensor(F: Field, G: Field) -> Field:
    """Tensor product: kinds concatenated, weights added."""
    out: Dict[Key, Component] = {}
    for k1, c1 in F.items():
        for k2, c2 in G.items():
            prod = multiply_components(c1, c2)
            if prod:
                out[k1 + k2] = prod
    return Field(F.sig, F.weight + G.weight, F.kinds + G.kinds, out, operator=F.operator or G.operator)
