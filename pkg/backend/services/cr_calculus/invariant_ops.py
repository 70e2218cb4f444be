"""
Invariant powers of the sublaplacian built from iterated tractor D operators.

An IndexPattern fixes which of the k-1 contracted tractor indices are
barred and in which order the D factors appear on either side of the
middle box. Operators are produced by running the tractor machinery on the
operator-valued identity field and reading off the resulting DiffOp.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy
from sympy.polys.domains import QQ_I
from sympy.polys.matrices import DomainMatrix
from sympy.polys.polyerrors import CoercionFailed

from backend.services.cr_calculus.checks import CheckResult, check_equal, check_true
from backend.services.cr_calculus.diffop import DiffOp, MultiIndex
from backend.services.cr_calculus.heisenberg import (
    Field,
    Frame,
    IndexKind,
    Signature,
    Weight,
    contract,
    frame_operator,
    is_natural,
    sublaplacian,
    tensor,
)
from backend.services.cr_calculus.scalars import CalculusError, as_scalar, conjugate, scalar_to_str
from backend.services.cr_calculus.structures import I, PHStructure, connection_for, curvature_data, random_density
from backend.services.cr_calculus.tractor import (
    box,
    box_bar,
    box_power,
    canonical_multiply,
    random_tractor,
    tractor_D,
    tractor_D_bar,
    tractor_D_upper,
)

logger = logging.getLogger(__name__)

__all__ = [
    "DiffOp",
    "IndexPattern",
    "build_invariant_operator",
    "flat_coefficient",
    "special_L00",
    "p00_formula",
    "q_curvature_3d",
    "formal_adjoint",
    "formal_transpose",
    "folland_stein_factorize",
    "operator_matrix",
    "principal_part",
]


# ---------------------------------------------------------------------------
# Index patterns
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndexPattern:
    """
    Bars and orderings of the k-1 contracted indices.

    right_order lists the labels of D_A ... D_B from left to right;
    left_order lists the labels of D^B ... D^A from left to right.
    """

    bars: Tuple[bool, ...]
    left_order: Tuple[int, ...]
    right_order: Tuple[int, ...]

    def __post_init__(self):
        m = len(self.bars)
        for name, order in (("left", self.left_order), ("right", self.right_order)):
            if sorted(order) != list(range(m)):
                raise CalculusError(f"{name} order {list(order)} is not a permutation of 0..{m - 1}")

    @classmethod
    def uniform(cls, k: int, barred: bool = False) -> "IndexPattern":
        m = k - 1
        order = tuple(range(m))
        return cls((barred,) * m, tuple(reversed(order)), order)

    @classmethod
    def split(cls, k1: int, k2: int) -> "IndexPattern":
        """k1 unbarred indices followed by k2 barred ones, consistently ordered."""
        order = tuple(range(k1 + k2))
        return cls((False,) * k1 + (True,) * k2, tuple(reversed(order)), order)

    @classmethod
    def parse(cls, text: str, k: int) -> "IndexPattern":
        """
        Parse 'uub' or 'uub:012:120' (bars, then right and left orders).

        Raises:
            CalculusError: on malformed text or a length different from k-1
        """
        parts = text.strip().split(":")
        bars_text = parts[0]
        if any(ch not in "ub" for ch in bars_text):
            raise CalculusError(f"Pattern {text!r} must use 'u' (unbarred) and 'b' (barred)")
        if len(bars_text) != k - 1:
            raise CalculusError(f"Pattern {text!r} needs {k - 1} indices for k={k}")
        bars = tuple(ch == "b" for ch in bars_text)
        if len(parts) == 1:
            order = tuple(range(k - 1))
            return cls(bars, tuple(reversed(order)), order)
        if len(parts) != 3:
            raise CalculusError(f"Pattern {text!r} must be 'bars' or 'bars:right:left'")
        try:
            right = tuple(int(ch) for ch in parts[1])
            left = tuple(int(ch) for ch in parts[2])
        except ValueError as e:
            raise CalculusError(f"Pattern orders in {text!r} must be digit strings") from e
        return cls(bars, left, right)

    @property
    def k(self) -> int:
        return len(self.bars) + 1

    @property
    def k1(self) -> int:
        return sum(1 for b in self.bars if not b)

    @property
    def k2(self) -> int:
        return sum(1 for b in self.bars if b)

    @property
    def consistent(self) -> bool:
        return self.left_order == tuple(reversed(self.right_order))

    def __str__(self) -> str:
        bars = "".join("b" if b else "u" for b in self.bars)
        return f"{bars}:{''.join(map(str, self.right_order))}:{''.join(map(str, self.left_order))}"


def order_k(n: int, weight: Weight) -> int:
    """k = n + w + w' + 1, required to be a positive integer."""
    k = n + weight.total() + 1
    if not (k.is_integer and k >= 1):
        raise CalculusError(f"n+w+w'+1 = {k} is not a positive integer for weight {weight}")
    return int(k)


def default_pattern(n: int, weight: Weight) -> IndexPattern:
    """
    All-unbarred when w is not a natural number, all-barred otherwise.

    Raises:
        CalculusError: for (w,w') in N0 x N0, where no invariant power exists
    """
    k = order_k(n, weight)
    if is_natural(weight.w) and is_natural(weight.wp):
        raise CalculusError(
            f"Weight {weight} lies in N0 x N0; the construction requires (w,w') outside N0 x N0"
        )
    return IndexPattern.uniform(k, barred=is_natural(weight.w))


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def flat_coefficient(k1: int, k2: int, w: Any, wp: Any) -> Any:
    """(-1)^(k-1) (k-1)! prod_{i<k1} (w-i) prod_{j<k2} (w'-j) with k-1 = k1+k2."""
    w, wp = sympy.Rational(w), sympy.Rational(wp)
    m = k1 + k2
    value = sympy.Integer(-1) ** m * math.factorial(m)
    for i in range(k1):
        value *= w - i
    for j in range(k2):
        value *= wp - j
    return as_scalar(value)


def _vanishing_factor(pattern: IndexPattern, weight: Weight) -> Optional[str]:
    for i in range(pattern.k1):
        if weight.w - i == 0:
            return f"(w - {i}) with w = {weight.w}"
    for j in range(pattern.k2):
        if weight.wp - j == 0:
            return f"(w' - {j}) with w' = {weight.wp}"
    return None


def apply_pattern(st: PHStructure, F: Field, pattern: IndexPattern) -> Field:
    """D^.. box D_.. applied to a weighted scalar (polynomial or operator valued)."""
    labels: List[int] = []
    for label in reversed(pattern.right_order):
        F = tractor_D_bar(st, F) if pattern.bars[label] else tractor_D(st, F)
        labels.insert(0, label)
    F = box(st, F)
    for label in reversed(pattern.left_order):
        F = tractor_D_upper(st, F, barred=pattern.bars[label])
        F = contract(F, 0, 1 + labels.index(label))
        labels.remove(label)
    return F


def build_invariant_operator(st: PHStructure, weight: Weight, pattern: Optional[IndexPattern] = None) -> DiffOp:
    """
    The invariant operator on E(w,w'), normalized so that the flat result is
    exactly (-2 box)^k.

    Args:
        st: pseudohermitian structure whose realization is used
        weight: (w,w') with n+w+w'+1 = k a positive integer
        pattern: bars and orderings; the default follows default_pattern

    Returns:
        DiffOp from E(w,w') to E(w-k,w'-k)

    Raises:
        CalculusError: on inadmissible weights or a vanishing normalization factor
    """
    n = st.n
    k = order_k(n, weight)
    if pattern is None:
        pattern = default_pattern(n, weight)
    if pattern.k != k:
        raise CalculusError(f"Pattern has {pattern.k - 1} indices but k-1 = {k - 1}")
    factor = _vanishing_factor(pattern, weight)
    if factor is not None:
        raise CalculusError(f"Normalization factor {factor} vanishes for pattern {pattern}")
    coeff = flat_coefficient(pattern.k1, pattern.k2, weight.w, weight.wp)
    result = apply_pattern(st, Field.identity_operator(st.sig, weight), pattern)
    if result.weight != weight.shift(-k, -k):
        raise CalculusError(f"Pattern {pattern} lands in weight {result.weight}, expected {weight.shift(-k, -k)}")
    op = result.only_component().scale(as_scalar((-2) ** k) / coeff)
    logger.debug(f"Built invariant operator for n={n}, weight {weight}, pattern {pattern}: order {op.order()}")
    return DiffOp(op.ring, op.terms, weight, result.weight)


def box_operator(st: PHStructure, weight: Weight) -> DiffOp:
    return box(st, Field.identity_operator(st.sig, weight)).only_component()


def flat_power(sig: Signature, weight: Weight, k: int) -> DiffOp:
    """(-2 box)^k on E(w,w') for the flat structure."""
    st = PHStructure.flat(sig)
    F = box_power(st, Field.identity_operator(sig, weight), k)
    return F.only_component().scale((-2) ** k)


def sublaplacian_operator(sig: Signature) -> DiffOp:
    """Flat Delta_b = -sum eps_a (Zbar_a Z_a + Z_a Zbar_a)."""
    out = DiffOp.zero(sig.ring)
    for a in range(1, sig.n + 1):
        Z = frame_operator(sig, Frame.Z, a)
        Zb = frame_operator(sig, Frame.ZBAR, a)
        out = out + (Zb * Z + Z * Zb).scale(-sig.sign(a))
    return out


def folland_stein_product(sig: Signature, alphas: Sequence[Any]) -> DiffOp:
    """prod_j (Delta_b + i alpha_j T), leftmost factor first."""
    lap = sublaplacian_operator(sig)
    T = frame_operator(sig, Frame.T)
    out = DiffOp.identity(sig.ring)
    for alpha in alphas:
        out = out * (lap + T.scale(I * as_scalar(alpha)))
    return out


def principal_part(P: DiffOp, nonisotropic: bool = False) -> DiffOp:
    """Terms of top order; with nonisotropic set, d/dt counts twice."""
    if not P:
        return P
    grades = [1] * P.ring.ngens
    if nonisotropic:
        grades[-1] = 2
    top = max(P.grade(m, grades) for m, _ in P.items())
    return DiffOp(P.ring, {m: c for m, c in P.items() if P.grade(m, grades) == top})


# ---------------------------------------------------------------------------
# Special operators in low order
# ---------------------------------------------------------------------------

def special_L00(st: PHStructure, weight: Optional[Weight] = None) -> DiffOp:
    """
    L with 4 box D_A f = -Z_A L f at n+w+w' = 1.

    Raises:
        CalculusError: if n+w+w' != 1 or the upper slots of box D_A f do not vanish
    """
    weight = weight or Weight(0, 0)
    n = st.n
    if n + weight.total() != 1:
        raise CalculusError(f"L is defined at n+w+w' = 1; got n={n}, weight {weight}")
    X = box(st, tractor_D(st, Field.identity_operator(st.sig, weight)))
    for key, comp in X.items():
        if key[0] != n + 1:
            raise CalculusError(f"Slot {key[0]} of box D_A f does not vanish: {comp}")
    op = X[(n + 1,)].scale(-4)
    return DiffOp(op.ring, op.terms, weight, weight.shift(-2, -2))


def _require_three_dimensional(st: PHStructure, what: str) -> None:
    if st.n != 1:
        raise CalculusError(f"{what} is defined for n=1 only, got n={st.n}")


def p00_formula(st: PHStructure) -> DiffOp:
    """Delta_b^2 + T^2 + 4 Im nabla_b (A^{ab} nabla_a) on E(0,0), with the hatted connection and torsion."""
    _require_three_dimensional(st, "The fourth-order operator on E(0,0)")
    sig = st.sig
    conn = connection_for(st)
    data = curvature_data(st)
    F = Field.identity_operator(sig, Weight(0, 0))
    lap2 = sublaplacian(sublaplacian(F, conn), conn).only_component()
    T2 = conn.zero(conn.zero(F)).only_component()
    d_hol = conn.hol(F)
    rng = range(1, sig.n + 1)
    comps = {}
    for b in rng:
        op = DiffOp.zero(sig.ring)
        for a in rng:
            coeff = conjugate(data.a(a, b)) * (sig.sign(a) * sig.sign(b))
            if coeff:
                op = op + d_hol[(a,)].left_multiply(coeff)
        comps[(b,)] = op
    H = Field(sig, Weight(-2, -2), (IndexKind.HOL_UP,), comps, operator=True)
    dH = conn.hol(H)
    X = DiffOp.zero(sig.ring)
    for b in rng:
        X = X + dH[(b, b)]
    imaginary = (X - X.conjugate()).scale(-2 * I)
    op = lap2 + T2 + imaginary
    return DiffOp(op.ring, op.terms, Weight(0, 0), Weight(-2, -2))


def q_curvature_3d(st: PHStructure) -> Field:
    """3Q = 2(Delta_b R - 2 Im nabla^a nabla^b A_ab), weight (-2,-2)."""
    _require_three_dimensional(st, "Q-curvature")
    sig = st.sig
    n = sig.n
    conn = connection_for(st)
    data = curvature_data(st)
    scalar = Field.scalar(sig, Weight(-1, -1), data.trace() * (2 * (n + 1)))
    lap = sublaplacian(scalar, conn)[()]
    ddA = conn.ahol(conn.ahol(data.A))
    rng = range(1, n + 1)
    Y = sig.ring.zero
    for a in rng:
        for b in rng:
            Y = Y + ddA[(a, b, b, a)] * (sig.sign(a) * sig.sign(b))
    value = lap.mul_ground(as_scalar(sympy.Rational(2, 3))) + (Y - conjugate(Y)).mul_ground(
        I * as_scalar(sympy.Rational(2, 3)))
    return Field.scalar(sig, Weight(-2, -2), value)


# ---------------------------------------------------------------------------
# Adjoints
# ---------------------------------------------------------------------------

def formal_adjoint(P: DiffOp) -> DiffOp:
    """Adjoint for the pairing integral(u conj(v)) on the flat volume."""
    return P.adjoint()


def formal_transpose(P: DiffOp) -> DiffOp:
    """Bilinear transpose for integral(u v) on the flat volume."""
    return P.transpose()


# ---------------------------------------------------------------------------
# Folland-Stein factorization
# ---------------------------------------------------------------------------

def _solve_exact(columns: List[DiffOp], target: DiffOp) -> Optional[List[Any]]:
    """Exact solution c with sum c_j columns[j] = target, or None."""
    rows: Dict[Tuple[MultiIndex, Tuple[int, ...]], List[Any]] = {}
    width = len(columns) + 1
    for j, op in enumerate(columns + [target]):
        for m, coeff in op.items():
            for monom, c in coeff.items():
                rows.setdefault((m, monom), [QQ_I.zero] * width)[j] = c
    if not rows:
        return [QQ_I.zero] * len(columns)
    data = [rows[key] for key in sorted(rows)]
    augmented = DomainMatrix(data, (len(data), width), QQ_I)
    reduced, pivots = augmented.rref()
    if len(columns) in pivots:
        return None
    dense = reduced.to_list()
    solution = [QQ_I.zero] * len(columns)
    for row, col in enumerate(pivots):
        solution[col] = dense[row][-1]
    return solution


def folland_stein_factorize(P: DiffOp, sig: Signature, k: int) -> Optional[List[Any]]:
    """
    Find alpha_1..alpha_k with P = prod_j (Delta_b + i alpha_j T).

    P is first written as sum_m c_m Delta_b^(k-m) T^m with c_0 = 1; the
    alphas are then i / root for the roots of sum_m c_m s^m, in
    descending order, with alpha = 0 for every missing degree.

    Returns:
        The list of alphas as Gaussian rationals, or None when no exact
        factorization exists
    """
    lap = sublaplacian_operator(sig)
    T = frame_operator(sig, Frame.T)
    columns = [lap.power(k - m) * T.power(m) for m in range(k + 1)]
    coeffs = _solve_exact(columns, P)
    if coeffs is None or coeffs[0] != QQ_I.one:
        logger.info(f"No Folland-Stein factorization of order {k}")
        return None
    s = sympy.Symbol("s")
    poly = sympy.Poly(sum(QQ_I.to_sympy(c) * s ** m for m, c in enumerate(coeffs)), s)
    roots = sympy.roots(poly)
    if sum(roots.values()) != poly.degree():
        return None
    alphas = []
    try:
        for root, mult in roots.items():
            alphas.extend([QQ_I.from_sympy(sympy.nsimplify(sympy.I / root))] * mult)
    except CoercionFailed:
        return None
    alphas.extend([QQ_I.zero] * (k - len(alphas)))
    alphas.sort(key=lambda a: (QQ_I.to_sympy(a).as_real_imag()), reverse=True)
    if folland_stein_product(sig, alphas) != DiffOp(P.ring, P.terms):
        return None
    return alphas


# ---------------------------------------------------------------------------
# Matrices
# ---------------------------------------------------------------------------

def graded_basis(ngens: int, bound: int) -> List[Tuple[int, ...]]:
    """Monomials of weighted degree <= bound (last generator counts twice), sorted by (degree, exponents)."""
    grades = [1] * (ngens - 1) + [2]
    basis = []
    for exps in itertools.product(*(range(bound // g + 1) for g in grades)):
        degree = sum(e * g for e, g in zip(exps, grades))
        if degree <= bound:
            basis.append((degree, exps))
    return [exps for _, exps in sorted(basis)]


def operator_matrix(P: DiffOp, degree_bound: int) -> Tuple[List[Tuple[int, ...]], DomainMatrix]:
    """
    Matrix of P on the graded monomial basis (column j = image of basis j).

    Raises:
        CalculusError: if an image leaves the span of the basis
    """
    R = P.ring
    basis = graded_basis(R.ngens, degree_bound)
    position = {m: i for i, m in enumerate(basis)}
    N = len(basis)
    rows = [[QQ_I.zero] * N for _ in range(N)]
    for j, monom in enumerate(basis):
        image = P.apply(R.from_dict({monom: QQ_I.one}))
        for m, c in image.items():
            if m not in position:
                raise CalculusError(f"Image of basis monomial {monom} has term {m} outside degree bound {degree_bound}")
            rows[position[m]][j] = c
    return basis, DomainMatrix(rows, (N, N), QQ_I)


def matrix_to_strings(M: DomainMatrix) -> List[List[str]]:
    return [[scalar_to_str(c) for c in row] for row in M.to_list()]


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

def weights_for_order(n: int, k: int, w_values: Sequence[Any]) -> List[Weight]:
    """Weights (w, k-1-n-w) for the given w values."""
    return [Weight(w, k - 1 - n - sympy.Rational(w)) for w in w_values]


def verify_flatgoody(sig: Signature, k: int, weights: Sequence[Weight], rng: np.random.Generator) -> List[CheckResult]:
    """
    For every bar-splitting k1 + k2 = k-1 on the flat structure:
    box D..D f = (-1)^(k-1) Z..Z box^k f, the full contraction against its
    closed-form coefficient, independence of the splitting, and box^k = boxbar^k.
    """
    st = PHStructure.flat(sig)
    results: List[CheckResult] = []
    for weight in weights:
        if order_k(sig.n, weight) != k:
            raise CalculusError(f"Weight {weight} does not give k={k} for n={sig.n}")
        f = random_density(sig, weight, rng, degree=2 * k)
        boxk = box_power(st, f, k)
        reduced = []
        for k1 in range(k):
            k2 = k - 1 - k1
            bars = [False] * k1 + [True] * k2
            lhs = f
            rhs = boxk
            for barred in reversed(bars):
                lhs = tractor_D_bar(st, lhs) if barred else tractor_D(st, lhs)
                rhs = canonical_multiply(rhs, barred=barred)
            lhs = box(st, lhs)
            rhs = rhs.scale((-1) ** (k - 1))
            label = f"k1={k1},k2={k2} on {weight}"
            results.append(check_equal(f"box D..D = (-1)^(k-1) Z..Z box^k ({label})",
                                       "flat box of iterated D", lhs, rhs))
            bottom = lhs
            for _ in bars:
                bottom = bottom.slot_part(0, sig.n + 1)
            reduced.append(bottom.scale((-1) ** (k - 1)))
            pattern = IndexPattern.split(k1, k2)
            full = apply_pattern(st, f, pattern)
            coeff = flat_coefficient(k1, k2, weight.w, weight.wp)
            results.append(check_equal(f"full contraction coefficient ({label})", "flat operator coefficient",
                                       full, boxk.scale(coeff)))
        for other in reduced[1:]:
            results.append(check_equal(f"splitting independence on {weight}", "splitting independence",
                                       other, reduced[0]))
        conj_power = f
        for _ in range(k):
            conj_power = box_bar(st, conj_power)
        results.append(check_equal(f"box^{k} = boxbar^{k} on {weight}", "conjugation of box powers", boxk, conj_power))
    return results


def verify_operator_invariance(st: PHStructure, weight: Weight, pattern: Optional[IndexPattern] = None
                               ) -> List[CheckResult]:
    """The operator of st against the flat one, the flat normalization and principal parts."""
    sig = st.sig
    n = sig.n
    k = order_k(n, weight)
    flat = PHStructure.flat(sig)
    hatted = build_invariant_operator(st, weight, pattern)
    plain = build_invariant_operator(flat, weight, pattern)
    power = flat_power(sig, weight, k)
    lap_k = sublaplacian_operator(sig).power(k)
    results = [
        check_equal(f"invariance on {weight}", "invariance of the operator", hatted, plain),
        check_equal(f"flat normalization on {weight}", "flat normalization", plain, power),
        check_equal(f"principal part on {weight}", "principal part", principal_part(hatted), principal_part(lap_k)),
        check_equal(f"nonisotropic principal part on {weight}", "nonisotropic principal part",
                    principal_part(hatted, nonisotropic=True), principal_part(power, nonisotropic=True)),
        check_true(f"codomain of the operator on {weight}", "output weights",
                   hatted.codomain_weight == weight.shift(-k, -k),
                   f"codomain {hatted.codomain_weight} expected {weight.shift(-k, -k)}"),
    ]
    if n + weight.total() == 0:
        results.append(check_equal(f"box invariance at resonance on {weight}", "box invariance at resonance",
                                   box_operator(st, weight), box_operator(flat, weight)))
    return results


def verify_pattern_independence(sig: Signature, weight: Weight) -> List[CheckResult]:
    """All admissible bar patterns and orderings agree on the flat structure."""
    k = order_k(sig.n, weight)
    flat = PHStructure.flat(sig)
    reference = flat_power(sig, weight, k)
    results = []
    for bars in itertools.product((False, True), repeat=k - 1):
        for right in itertools.permutations(range(k - 1)):
            for left in (tuple(reversed(right)), right):
                pattern = IndexPattern(tuple(bars), left, tuple(right))
                if _vanishing_factor(pattern, weight) is not None:
                    continue
                op = build_invariant_operator(flat, weight, pattern)
                results.append(check_equal(f"pattern {pattern} on {weight}", "pattern independence", op, reference))
    return results


def verify_self_adjoint(st: PHStructure, weight: Weight, pattern: Optional[IndexPattern] = None) -> List[CheckResult]:
    sig = st.sig
    op = build_invariant_operator(st, weight, pattern)
    results = [check_equal(f"self-adjoint on {weight}", "self-adjointness", formal_adjoint(op), op)]
    if weight.w == weight.wp:
        flat_box = box_operator(PHStructure.flat(sig), weight)
        results.append(check_equal(f"flat box self-adjoint on {weight}", "self-adjointness of box",
                                   formal_adjoint(flat_box), flat_box))
    return results


def verify_integration_by_parts(st: PHStructure, weight: Weight, rng: np.random.Generator) -> List[CheckResult]:
    """Divergence, box and D-contraction identities for the bilinear transpose."""
    sig = st.sig
    n = sig.n
    R = sig.ring
    conn = connection_for(st)
    results: List[CheckResult] = []

    for a in range(1, n + 1):
        comps = {(b,): (DiffOp.identity(R) if b == a else DiffOp.zero(R)) for b in range(1, n + 1)}
        form = Field(sig, Weight(-n, -n), (IndexKind.HOL_DOWN,), comps, operator=True)
        d_ahol = conn.ahol(form)
        div = DiffOp.zero(R)
        for b in range(1, n + 1):
            div = div + d_ahol[(b, b)].scale(sig.sign(b))
        results.append(check_equal(f"divergence of component {a} integrates to zero", "divergence theorem",
                                   formal_transpose(div).apply(R.one), R.zero))

    dual = Weight(-n - weight.w, -n - weight.wp)
    lhs = formal_transpose(box_operator(st, weight))
    rhs = box_operator(st, dual)
    P = curvature_data(st).trace()
    if P:
        rhs = rhs + DiffOp.multiplication(P).scale(as_scalar(n + weight.total()))
    results.append(check_equal(f"box transpose on {weight}", "box integration by parts", lhs, rhs))

    g = random_tractor(sig, Weight(-n - weight.w, -n - weight.wp - 1), (IndexKind.TRAC_UP,), rng)
    paired = contract(tensor(g, tractor_D(st, Field.identity_operator(sig, weight))), 0, 1).only_component()
    divergence = contract(tractor_D(st, g), 0, 1).only_component()
    results.append(check_equal(f"D pairing transpose on {weight}", "D integration by parts",
                               formal_transpose(paired).apply(R.one), divergence))
    return results


def verify_special_k2(st: PHStructure, weights: Sequence[Weight]) -> List[CheckResult]:
    """Upper slots of box D_A f vanish at n+w+w' = 1; L00 against P00; L against the invariant operator."""
    results: List[CheckResult] = []
    for weight in weights:
        try:
            L = special_L00(st, weight)
        except CalculusError as e:
            results.append(check_true(f"upper slots of box D_A vanish on {weight}", "k=2 special case", False, str(e)))
            continue
        results.append(check_true(f"upper slots of box D_A vanish on {weight}", "k=2 special case", True))
        if weight.w == 0 and weight.wp == 0 and st.n == 1:
            results.append(check_equal("L00 equals the explicit fourth-order formula", "explicit P00",
                                       L, p00_formula(st)))
        if weight.w != 0:
            op = build_invariant_operator(st, weight, IndexPattern.uniform(2, barred=False))
            results.append(check_equal(f"L equals the invariant operator on {weight}", "L for nonzero w", L, op))
    return results


def verify_q_curvature(st: PHStructure) -> List[CheckResult]:
    """Q of st equals Q of its base plus P00 (of the base) applied to U."""
    base = st.base if st.base is not None else PHStructure.flat(st.sig)
    Q = q_curvature_3d(st)
    expected = q_curvature_3d(base)[()] + p00_formula(base).apply(st.upsilon)
    return [check_equal("Q transformation law", "Q-curvature transformation", Q[()], expected)]


def verify_factorization(sig: Signature, weight: Weight) -> List[CheckResult]:
    """Factor the flat operator into Folland-Stein operators and rebuild it."""
    k = order_k(sig.n, weight)
    op = flat_power(sig, weight, k)
    alphas = folland_stein_factorize(op, sig, k)
    if alphas is None:
        return [check_true(f"Folland-Stein factorization on {weight}", "Folland-Stein factorization", False,
                           "no exact factorization found")]
    shown = ", ".join(scalar_to_str(a) for a in alphas)
    results = [check_equal(f"Folland-Stein factorization on {weight} (alpha = {shown})", "Folland-Stein factorization",
                           folland_stein_product(sig, alphas), op)]
    basis, M = operator_matrix(op, 2 * k)
    factors = [sublaplacian_operator(sig) + frame_operator(sig, Frame.T).scale(I * a) for a in alphas]
    product = None
    for factor in factors:
        _, F = operator_matrix(factor, 2 * k)
        product = F if product is None else product * F
    results.append(check_true(f"matrix of the product on {weight}", "Folland-Stein factorization",
                              product == M, "matrix of the factors differs"))
    return results
