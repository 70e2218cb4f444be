"""
Scalar differential operators in normal-ordered coordinate form.

A DiffOp is a finite map from derivative multi-indices (one exponent per
ring generator) to polynomial coefficients, every derivative standing to
the right of its coefficient. Canonical form drops zero coefficients, so
operator equality is dictionary equality.
"""

import itertools
import logging
from math import comb
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

from sympy.polys.rings import PolyElement, PolyRing

from backend.services.cr_calculus.scalars import (
    CalculusError,
    _conjugation_permutation,
    as_scalar,
    conjugate,
    parse_poly,
    poly_to_str,
)

logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, ...]


def _add_index(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return tuple(x + y for x, y in zip(a, b))


def _sub_indices(m: MultiIndex) -> Iterator[MultiIndex]:
    return itertools.product(*(range(e + 1) for e in m))


def _multi_binomial(m: MultiIndex, beta: MultiIndex) -> int:
    out = 1
    for e, b in zip(m, beta):
        out *= comb(e, b)
    return out


def _partial(p: PolyElement, beta: MultiIndex) -> PolyElement:
    for i, e in enumerate(beta):
        for _ in range(e):
            if not p:
                return p
            p = p.diff(i)
    return p


class DiffOp:
    """
    Normal-ordered differential operator with polynomial coefficients.

    Attributes:
        ring: coefficient ring; multi-indices have one entry per generator
        terms: mapping multi-index -> nonzero coefficient
        domain_weight / codomain_weight: optional density bookkeeping
    """

    __slots__ = ("ring", "_terms", "domain_weight", "codomain_weight")

    def __init__(
        self,
        ring: PolyRing,
        terms: Optional[Mapping[MultiIndex, PolyElement]] = None,
        domain_weight: Any = None,
        codomain_weight: Any = None,
    ):
        self.ring = ring
        clean: Dict[MultiIndex, PolyElement] = {}
        for m, c in (terms or {}).items():
            if len(m) != ring.ngens:
                raise CalculusError(f"Multi-index {m} does not match {ring.ngens} generators")
            if c:
                clean[tuple(m)] = c
        self._terms = clean
        self.domain_weight = domain_weight
        self.codomain_weight = codomain_weight

    # -- constructors -------------------------------------------------------

    @classmethod
    def identity(cls, ring: PolyRing, weight: Any = None) -> "DiffOp":
        return cls(ring, {(0,) * ring.ngens: ring.one}, weight, weight)

    @classmethod
    def zero(cls, ring: PolyRing) -> "DiffOp":
        return cls(ring, {})

    @classmethod
    def multiplication(cls, p: PolyElement) -> "DiffOp":
        return cls(p.ring, {(0,) * p.ring.ngens: p})

    @classmethod
    def partial(cls, ring: PolyRing, index: int, order: int = 1) -> "DiffOp":
        m = [0] * ring.ngens
        m[index] = order
        return cls(ring, {tuple(m): ring.one})

    @classmethod
    def vector_field(cls, ring: PolyRing, coeffs: Mapping[int, PolyElement]) -> "DiffOp":
        terms = {}
        for i, c in coeffs.items():
            m = [0] * ring.ngens
            m[i] = 1
            terms[tuple(m)] = c
        return cls(ring, terms)

    # -- basic protocol -------------------------------------------------------

    @property
    def terms(self) -> Dict[MultiIndex, PolyElement]:
        return dict(self._terms)

    def items(self) -> Iterable[Tuple[MultiIndex, PolyElement]]:
        return self._terms.items()

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, DiffOp):
            return self.ring == other.ring and self._terms == other._terms
        return NotImplemented

    __hash__ = None  # type: ignore[assignment]

    def _with(self, terms: Mapping[MultiIndex, PolyElement]) -> "DiffOp":
        return DiffOp(self.ring, terms, self.domain_weight, self.codomain_weight)

    def __add__(self, other: "DiffOp") -> "DiffOp":
        if not isinstance(other, DiffOp):
            return NotImplemented
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out[m] + c if m in out else c
        return self._with(out)

    def __neg__(self) -> "DiffOp":
        return self._with({m: -c for m, c in self._terms.items()})

    def __sub__(self, other: "DiffOp") -> "DiffOp":
        return self + (-other)

    def __mul__(self, other: Union["DiffOp", Any]) -> "DiffOp":
        if isinstance(other, DiffOp):
            return self.compose(other)
        if isinstance(other, PolyElement):
            return self.compose(DiffOp.multiplication(other))
        return self.scale(other)

    def __rmul__(self, other: Any) -> "DiffOp":
        if isinstance(other, PolyElement):
            return self.left_multiply(other)
        return self.scale(other)

    def scale(self, c: Any) -> "DiffOp":
        c = as_scalar(c)
        return self._with({m: v.mul_ground(c) for m, v in self._terms.items()})

    def left_multiply(self, p: PolyElement) -> "DiffOp":
        return self._with({m: p * v for m, v in self._terms.items()})

    # -- algebra --------------------------------------------------------------

    def apply(self, f: PolyElement) -> PolyElement:
        """Apply the operator to a polynomial."""
        out = self.ring.zero
        for m, c in self._terms.items():
            d = _partial(f, m)
            if d:
                out = out + c * d
        return out

    def apply_vector_field(self, coeffs: Mapping[int, PolyElement]) -> "DiffOp":
        """
        Left-compose with the first-order operator sum_i coeffs[i] * d_i.

        Args:
            coeffs: generator index -> coefficient polynomial

        Returns:
            The normal-ordered composite V o self
        """
        out: Dict[MultiIndex, PolyElement] = {}

        def add(m: MultiIndex, c: PolyElement) -> None:
            if c:
                out[m] = out[m] + c if m in out else c

        for m, c in self._terms.items():
            for i, v in coeffs.items():
                if not v:
                    continue
                dc = c.diff(i)
                if dc:
                    add(m, v * dc)
                bumped = list(m)
                bumped[i] += 1
                add(tuple(bumped), v * c)
        return self._with(out)

    def compose(self, other: "DiffOp") -> "DiffOp":
        """Return self o other in normal-ordered form."""
        if self.ring != other.ring:
            raise CalculusError("Cannot compose operators over different rings")
        out: Dict[MultiIndex, PolyElement] = {}
        for m, c in self._terms.items():
            for beta in _sub_indices(m):
                rest = tuple(e - b for e, b in zip(m, beta))
                binom = _multi_binomial(m, beta)
                for k, d in other._terms.items():
                    dd = _partial(d, beta)
                    if not dd:
                        continue
                    key = _add_index(rest, k)
                    val = (c * dd) * binom if binom != 1 else c * dd
                    out[key] = out[key] + val if key in out else val
        return DiffOp(self.ring, out, other.domain_weight, self.codomain_weight)

    def power(self, k: int) -> "DiffOp":
        result = DiffOp.identity(self.ring, self.domain_weight)
        for _ in range(k):
            result = self.compose(result)
        return result

    def conjugate(self) -> "DiffOp":
        """The operator f -> conj(P(conj f))."""
        perm = _conjugation_permutation(tuple(self.ring.symbols))
        out = {}
        for m, c in self._terms.items():
            new = [0] * len(m)
            for i, e in enumerate(m):
                new[perm[i]] = e
            out[tuple(new)] = conjugate(c)
        return self._with(out)

    def transpose(self) -> "DiffOp":
        """
        Bilinear formal transpose: sum (-1)^|m| d^m o c_m, renormal-ordered.

        Characterized by integral(P(u) v) = integral(u P^t(v)) for compactly
        supported u, v against coordinate Lebesgue measure.
        """
        out: Dict[MultiIndex, PolyElement] = {}
        for m, c in self._terms.items():
            sign = -1 if sum(m) % 2 else 1
            for beta in _sub_indices(m):
                dc = _partial(c, beta)
                if not dc:
                    continue
                key = tuple(e - b for e, b in zip(m, beta))
                val = dc * (sign * _multi_binomial(m, beta))
                out[key] = out[key] + val if key in out else val
        return DiffOp(self.ring, out, self.codomain_weight, self.domain_weight)

    def adjoint(self) -> "DiffOp":
        """Hermitian formal adjoint for the pairing integral(u conj(v))."""
        return self.conjugate().transpose()

    # -- inspection -------------------------------------------------------------

    def order(self) -> int:
        return max((sum(m) for m in self._terms), default=0)

    def grade(self, m: MultiIndex, weights: Sequence[int]) -> int:
        return sum(e * g for e, g in zip(m, weights))

    def sorted_terms(self) -> List[Tuple[MultiIndex, PolyElement]]:
        return sorted(self._terms.items(), key=lambda kv: (sum(kv[0]), kv[0]))

    def to_records(self) -> List[Dict[str, Any]]:
        """Serialize as [{multi_index, coeff}] in canonical multi-index order."""
        return [{"multi_index": list(m), "coeff": poly_to_str(c)} for m, c in self.sorted_terms()]

    @classmethod
    def from_records(cls, records: Sequence[Mapping[str, Any]], ring: PolyRing) -> "DiffOp":
        terms: Dict[MultiIndex, PolyElement] = {}
        for rec in records:
            m = tuple(int(e) for e in rec["multi_index"])
            c = parse_poly(str(rec["coeff"]), ring)
            terms[m] = terms[m] + c if m in terms else c
        return cls(ring, terms)

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        names = [str(s) for s in self.ring.symbols]
        parts = []
        for m, c in self.sorted_terms():
            derivs = [f"{names[i]}^{e}" if e > 1 else names[i] for i, e in enumerate(m) if e]
            d = f"D[{','.join(derivs)}]" if derivs else "1"
            parts.append(f"({poly_to_str(c)})*{d}")
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"DiffOp({self})"


# ---------------------------------------------------------------------------
# Component dispatch: Field components are polynomials or operators
# ---------------------------------------------------------------------------

Component = Union[PolyElement, DiffOp]


def vector_field_action(comp: Component, coeffs: Mapping[int, PolyElement]) -> Component:
    """Apply the vector field sum_i coeffs[i] d_i to a component."""
    if isinstance(comp, DiffOp):
        return comp.apply_vector_field(coeffs)
    out = comp.ring.zero
    for i, v in coeffs.items():
        if v:
            d = comp.diff(i)
            if d:
                out = out + v * d
    return out


def scale_component(comp: Component, factor: Any) -> Component:
    """Multiply a component by a polynomial or an exact scalar."""
    if isinstance(factor, PolyElement):
        if isinstance(comp, DiffOp):
            return comp.left_multiply(factor)
        return comp * factor
    c = as_scalar(factor)
    if isinstance(comp, DiffOp):
        return comp.scale(c)
    return comp.mul_ground(c)


def conjugate_component(comp: Component) -> Component:
    if isinstance(comp, DiffOp):
        return comp.conjugate()
    return conjugate(comp)


def multiply_components(a: Component, b: Component) -> Component:
    if isinstance(a, DiffOp) and isinstance(b, DiffOp):
        raise CalculusError("Tensor product of two operator-valued fields is not defined")
    if isinstance(a, DiffOp):
        return a.left_multiply(b)
    if isinstance(b, DiffOp):
        return b.left_multiply(a)
    return a * b


def component_to_str(comp: Component) -> str:
    return str(comp) if isinstance(comp, DiffOp) else poly_to_str(comp)
