"""
Exact scalar layer for the CR calculus engine.

Gaussian rationals (sympy's QQ_I), sparse multivariate polynomials and
rational functions over the Heisenberg symbols z1..zn, zb1..zbn, t.
The holomorphic and antiholomorphic symbols are independent (Wirtinger
formalism); reality of a polynomial is a predicate checked through the
conjugation involution.
"""

import logging
import re
from tokenize import TokenError
from fractions import Fraction
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy
from sympy.polys.domains import QQ, QQ_I
from sympy.polys.fields import FracElement, FracField, field
from sympy.polys.polyerrors import CoercionFailed
from sympy.polys.rings import PolyElement, PolyRing, ring

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

ExactScalar = Any  # element of QQ_I
Poly = PolyElement
RatFunc = FracElement
Scalarish = Union[int, Fraction, str, sympy.Basic, Any]

_HOL_NAME = re.compile(r"^z(\d+)$")
_AHOL_NAME = re.compile(r"^zb(\d+)$")


class CalculusError(ValueError):
    """Raised for any invalid input to the CR calculus engine."""


# ---------------------------------------------------------------------------
# Gaussian rationals
# ---------------------------------------------------------------------------

def as_scalar(value: Scalarish) -> ExactScalar:
    """
    Convert a Python or sympy number to an exact Gaussian rational.

    Args:
        value: int, Fraction, sympy number, numeric string or QQ_I element

    Returns:
        The QQ_I element

    Raises:
        CalculusError: if the value is not a Gaussian rational
    """
    if isinstance(value, QQ_I.dtype):
        return value
    if isinstance(value, (int, np.integer)):
        return QQ_I(int(value), 0)
    if isinstance(value, Fraction):
        return QQ_I(QQ(value.numerator, value.denominator), 0)
    try:
        return QQ_I.from_sympy(sympy.sympify(value))
    except (CoercionFailed, sympy.SympifyError, TypeError) as e:
        raise CalculusError(f"Not an exact Gaussian rational: {value!r}") from e


def conj_scalar(c: ExactScalar) -> ExactScalar:
    return QQ_I.new(c.x, -c.y)


I_UNIT = QQ_I(0, 1)


def rational_to_str(q: Any) -> str:
    """Serialize a rational as the exact string 'p/q' (or 'p' for integers)."""
    frac = Fraction(int(q.numerator), int(q.denominator))
    if frac.denominator == 1:
        return str(frac.numerator)
    return f"{frac.numerator}/{frac.denominator}"


def scalar_to_json(c: ExactScalar) -> Dict[str, str]:
    return {"re": rational_to_str(c.x), "im": rational_to_str(c.y)}


def scalar_from_json(data: Dict[str, str]) -> ExactScalar:
    re_part, im_part = Fraction(data["re"]), Fraction(data["im"])
    return QQ_I(QQ(re_part.numerator, re_part.denominator), QQ(im_part.numerator, im_part.denominator))


def scalar_to_str(c: ExactScalar) -> str:
    return str(QQ_I.to_sympy(c))


# ---------------------------------------------------------------------------
# Rings and fields
# ---------------------------------------------------------------------------

def heisenberg_symbols(n: int) -> List[str]:
    """Symbol names in the fixed order z1..zn, zb1..zbn, t."""
    if n < 1:
        raise CalculusError(f"CR dimension must be positive, got n={n}")
    return [f"z{a}" for a in range(1, n + 1)] + [f"zb{a}" for a in range(1, n + 1)] + ["t"]


@lru_cache(maxsize=None)
def heisenberg_ring(n: int) -> PolyRing:
    """Polynomial ring over QQ_I in the Heisenberg symbols for dimension n."""
    R, *_ = ring(heisenberg_symbols(n), QQ_I)
    logger.debug(f"Created Heisenberg ring for n={n}: {R}")
    return R


@lru_cache(maxsize=None)
def polynomial_ring(names: Tuple[str, ...]) -> PolyRing:
    R, *_ = ring(list(names), QQ_I)
    return R


@lru_cache(maxsize=None)
def rational_field(names: Tuple[str, ...]) -> FracField:
    F, *_ = field(list(names), QQ_I)
    return F


@lru_cache(maxsize=None)
def _conjugation_permutation(symbols: Tuple[str, ...]) -> Tuple[int, ...]:
    names = [str(s) for s in symbols]
    perm = []
    for name in names:
        hol = _HOL_NAME.match(name)
        ahol = _AHOL_NAME.match(name)
        if hol:
            partner = f"zb{hol.group(1)}"
        elif ahol:
            partner = f"z{ahol.group(1)}"
        else:
            partner = name
        perm.append(names.index(partner) if partner in names else names.index(name))
    return tuple(perm)


def _conjugate_poly(p: Poly) -> Poly:
    R = p.ring
    perm = _conjugation_permutation(tuple(R.symbols))
    out = {}
    for monom, coeff in p.items():
        new = [0] * len(monom)
        for i, e in enumerate(monom):
            new[perm[i]] = e
        out[tuple(new)] = conj_scalar(coeff)
    return R.from_dict(out)


def conjugate(a: Union[Poly, RatFunc]) -> Union[Poly, RatFunc]:
    """
    Apply the conjugation involution: z<k> <-> zb<k>, other symbols fixed,
    coefficients conjugated.
    """
    if isinstance(a, FracElement):
        return a.field.new(_conjugate_poly(a.numer), _conjugate_poly(a.denom))
    return _conjugate_poly(a)


def is_real(a: Union[Poly, RatFunc]) -> bool:
    return not (conjugate(a) - a)


def derive(a: Union[Poly, RatFunc], sym: Union[str, int, Poly, RatFunc]) -> Union[Poly, RatFunc]:
    """
    Formal partial derivative.

    Args:
        a: polynomial or rational function
        sym: symbol name, generator index or generator

    Returns:
        The derivative in the same ring or field
    """
    if isinstance(a, FracElement):
        F = a.field
        x = F.ring.gens[_index(F.symbols, sym)]
        num, den = a.numer, a.denom
        return F.new(num.diff(x) * den - num * den.diff(x), den ** 2)
    return a.diff(_index(a.ring.symbols, sym))


def _index(symbols: Sequence[Any], sym: Union[str, int, Any]) -> int:
    if isinstance(sym, int):
        if not 0 <= sym < len(symbols):
            raise CalculusError(f"Generator index {sym} out of range")
        return sym
    if isinstance(sym, str):
        names = [str(s) for s in symbols]
        if sym not in names:
            raise CalculusError(f"Unknown symbol {sym!r}; expected one of {names}")
        return names.index(sym)
    if isinstance(sym, FracElement):
        poly = as_polynomial(sym)
        if poly is None:
            raise CalculusError(f"{sym} is not a generator")
        sym = poly
    if sym not in sym.ring.gens:
        raise CalculusError(f"{sym} is not a generator")
    return sym.ring.gens.index(sym)


def divide(a: Union[Poly, RatFunc], b: Union[Poly, RatFunc]) -> RatFunc:
    """Exact quotient in the rational function field; division by zero raises."""
    if not b:
        raise CalculusError("Division by the zero polynomial")
    if isinstance(a, PolyElement):
        a = a.ring.to_field().new(a)
    if isinstance(b, PolyElement):
        b = b.ring.to_field().new(b)
    return a / b


def as_polynomial(a: RatFunc) -> Optional[Poly]:
    """Return the polynomial equal to a, or None when a has a nonconstant denominator."""
    if not a.denom.is_ground:
        return None
    return a.numer.mul_ground(QQ_I.one / a.denom.LC)


# ---------------------------------------------------------------------------
# Parsing and printing
# ---------------------------------------------------------------------------

def parse_poly(text: str, R: PolyRing) -> Poly:
    """
    Parse a polynomial expression string over the ring's symbols.

    'I' (or 'i' when it is not a symbol) denotes the imaginary unit.

    Raises:
        CalculusError: on syntax errors, unknown symbols or non-polynomial input
    """
    names = [str(s) for s in R.symbols]
    local = {name: sympy.Symbol(name) for name in names}
    local.setdefault("i", sympy.I)
    local["I"] = sympy.I
    try:
        expr = sympy.parse_expr(text, local_dict=local, evaluate=True)
    except (SyntaxError, TypeError, sympy.SympifyError, TokenError) as e:
        raise CalculusError(f"Cannot parse polynomial {text!r}: {e}") from e
    unknown = {str(s) for s in expr.free_symbols} - set(names)
    if unknown:
        raise CalculusError(f"Unknown symbols {sorted(unknown)} in {text!r}; allowed: {names}")
    try:
        return R.from_expr(sympy.expand(expr))
    except (ValueError, CoercionFailed) as e:
        raise CalculusError(f"Not a polynomial over Gaussian rationals: {text!r}") from e


def parse_real_poly(text: str, R: PolyRing) -> Poly:
    p = parse_poly(text, R)
    if not is_real(p):
        raise CalculusError(
            f"Expression {text!r} is not real: conjugation (z<->zb, i->-i) changes it to "
            f"{poly_to_str(conjugate(p))}"
        )
    return p


def poly_to_str(p: Union[Poly, RatFunc]) -> str:
    """Deterministic string form (lexicographic term order)."""
    if isinstance(p, FracElement):
        if p.denom == p.field.ring.one:
            return poly_to_str(p.numer)
        return f"({poly_to_str(p.numer)})/({poly_to_str(p.denom)})"
    if not p:
        return "0"
    return sympy.sstr(p.as_expr(), order="lex")


# ---------------------------------------------------------------------------
# Substitution and sampling
# ---------------------------------------------------------------------------

def substitute(p: Poly, images: Sequence[Poly], target: PolyRing) -> Poly:
    """
    Ring morphism sending the i-th generator of p.ring to images[i] in target.
    """
    if len(images) != p.ring.ngens:
        raise CalculusError("Substitution needs one image per generator")
    powers: Dict[Tuple[int, int], Poly] = {}
    result = target.zero
    for monom, coeff in p.items():
        term = target.ground_new(coeff)
        for i, e in enumerate(monom):
            if e:
                key = (i, e)
                if key not in powers:
                    powers[key] = images[i] ** e
                term = term * powers[key]
        result = result + term
    return result


def make_rng(seed: Optional[int]) -> np.random.Generator:
    return np.random.default_rng(seed)


def random_poly(
    R: PolyRing,
    rng: np.random.Generator,
    degree: int = 3,
    terms: int = 4,
    coefficient_range: int = 3,
    gaussian: bool = True,
) -> Poly:
    """
    Draw a random polynomial with small Gaussian-integer coefficients.

    Args:
        R: target ring
        rng: numpy Generator (seeded by the caller)
        degree: bound on the total degree of every monomial
        terms: number of monomials drawn
        coefficient_range: coefficients are drawn from [-range, range]
        gaussian: draw imaginary parts as well

    Returns:
        A polynomial in R (possibly zero only if every draw cancels)
    """
    data: Dict[Tuple[int, ...], Any] = {}
    for _ in range(terms):
        total = int(rng.integers(0, degree + 1))
        monom = [0] * R.ngens
        for _ in range(total):
            monom[int(rng.integers(0, R.ngens))] += 1
        re_part = int(rng.integers(-coefficient_range, coefficient_range + 1))
        im_part = int(rng.integers(-coefficient_range, coefficient_range + 1)) if gaussian else 0
        coeff = QQ_I(re_part, im_part)
        key = tuple(monom)
        data[key] = data.get(key, QQ_I.zero) + coeff
    return R.from_dict({k: v for k, v in data.items() if v})


def random_real_poly(R: PolyRing, rng: np.random.Generator, degree: int = 2, terms: int = 3) -> Poly:
    p = random_poly(R, rng, degree=degree, terms=terms)
    return p + conjugate(p)
