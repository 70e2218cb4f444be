"""
Hypersurface realization of the invariant operators.

A real hypersurface M = {phi = 0} in C^{n+1} carries the Kaehler metric
g = (log 1/phi)_{ab} on {phi > 0} and, on C* x U, the homogeneous ambient
metric built from -|z0|^2 phi. Densities of weight (w,w') become functions
homogeneous of degree (w,w') in z0; the invariant operators appear as the
obstruction to extending boundary data to solutions of Delta_{w,w'} u = 0.

All quantities are exact rational functions over Q(i) in the symbols
z0..z{n+1}, zb0..zb{n+1}; fractional powers of phi are kept as a formal
symbol with d(phi^s) = s phi^(s-1) d(phi).
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import sympy
from sympy.polys.domains import QQ_I
from sympy.polys.matrices import DomainMatrix
from sympy.polys.matrices.exceptions import DMNonInvertibleMatrixError

from backend.services.cr_calculus.checks import CheckResult, check_equal, check_true
from backend.services.cr_calculus.diffop import DiffOp
from backend.services.cr_calculus.heisenberg import Field, Signature, Weight
from backend.services.cr_calculus.invariant_ops import flat_power, order_k
from backend.services.cr_calculus.scalars import (
    CalculusError,
    Poly,
    RatFunc,
    as_polynomial,
    as_scalar,
    conj_scalar,
    conjugate,
    derive,
    parse_real_poly,
    poly_to_str,
    polynomial_ring,
    random_poly,
    rational_field,
    scalar_to_str,
    substitute,
)
from backend.services.cr_calculus.structures import I

logger = logging.getLogger(__name__)

Matrix = List[List[Any]]


# ---------------------------------------------------------------------------
# Coordinates
# ---------------------------------------------------------------------------

def ambient_symbols(n: int) -> Tuple[str, ...]:
    """z0..z{n+1}, zb0..zb{n+1}; z0 is the fiber coordinate."""
    return tuple(f"z{a}" for a in range(n + 2)) + tuple(f"zb{a}" for a in range(n + 2))


def hypersurface_symbols(n: int) -> Tuple[str, ...]:
    return tuple(f"z{a}" for a in range(1, n + 2)) + tuple(f"zb{a}" for a in range(1, n + 2))


@lru_cache(maxsize=None)
def ambient_field(n: int):
    return rational_field(ambient_symbols(n))


def _embed(p: Poly, n: int) -> RatFunc:
    """Polynomial in the hypersurface symbols as an element of the ambient field."""
    K = ambient_field(n)
    R = K.ring
    m = n + 2
    images = [R.gens[a] for a in range(1, m)] + [R.gens[m + a] for a in range(1, m)]
    return K.new(substitute(p, images, R))


# ---------------------------------------------------------------------------
# Formal powers of phi
# ---------------------------------------------------------------------------

class PhiSeries:
    """
    Finite sum of phi^s * c with c a rational function.

    Exponents are stored modulo 1: integral parts are absorbed into the
    coefficients, so equality is exact comparison of coefficient maps.
    """

    __slots__ = ("phi", "terms")

    def __init__(self, phi: RatFunc, terms: Optional[Mapping[Any, RatFunc]] = None):
        self.phi = phi
        self.terms: Dict[sympy.Rational, RatFunc] = {}
        for s, c in (terms or {}).items():
            self._accumulate(sympy.Rational(s), c)

    def _accumulate(self, s: sympy.Rational, c: RatFunc) -> None:
        whole = sympy.floor(s)
        frac = s - whole
        if whole:
            c = c * self.phi ** int(whole)
        total = self.terms.get(frac, self.phi.field.zero) + c
        if total:
            self.terms[frac] = total
        else:
            self.terms.pop(frac, None)

    @classmethod
    def constant(cls, phi: RatFunc, c: RatFunc) -> "PhiSeries":
        return cls(phi, {0: c})

    @classmethod
    def power(cls, phi: RatFunc, s: Any, c: Optional[RatFunc] = None) -> "PhiSeries":
        return cls(phi, {sympy.Rational(s): phi.field.one if c is None else c})

    def _new(self, terms: Mapping[Any, RatFunc]) -> "PhiSeries":
        return PhiSeries(self.phi, terms)

    def __add__(self, other: "PhiSeries") -> "PhiSeries":
        out = self._new(self.terms)
        for s, c in other.terms.items():
            out._accumulate(s, c)
        return out

    def __neg__(self) -> "PhiSeries":
        return self._new({s: -c for s, c in self.terms.items()})

    def __sub__(self, other: "PhiSeries") -> "PhiSeries":
        return self + (-other)

    def __mul__(self, other: Any) -> "PhiSeries":
        if isinstance(other, PhiSeries):
            out = self._new({})
            for s1, c1 in self.terms.items():
                for s2, c2 in other.terms.items():
                    out._accumulate(s1 + s2, c1 * c2)
            return out
        return self._new({s: c * other for s, c in self.terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PhiSeries):
            return NotImplemented
        return not (self - other).terms

    __hash__ = None  # type: ignore[assignment]

    def __bool__(self) -> bool:
        return bool(self.terms)

    def diff(self, index: int) -> "PhiSeries":
        """Derivative in the index-th ambient generator."""
        phi_i = derive(self.phi, index)
        out = self._new({})
        for s, c in self.terms.items():
            out._accumulate(s, derive(c, index))
            if s:
                out._accumulate(s, c * phi_i * as_scalar(s) / self.phi)
        return out

    def as_rational(self) -> RatFunc:
        if any(s != 0 for s in self.terms):
            raise CalculusError("Series carries fractional powers of phi")
        return self.terms.get(sympy.Integer(0), self.phi.field.zero)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        return " + ".join(f"phi^{s}*({poly_to_str(c)})" for s, c in sorted(self.terms.items()))


@dataclass
class AmbientFunction:
    """z0^w zb0^w' * body, with body free of z0."""

    homogeneity: Weight
    body: PhiSeries

    def expand(self) -> RatFunc:
        """The honest rational function, for integral weights and no fractional phi powers."""
        w, wp = self.homogeneity.w, self.homogeneity.wp
        if not (w.is_integer and wp.is_integer):
            raise CalculusError(f"Homogeneity {self.homogeneity} is not integral")
        K = self.body.phi.field
        m = len(K.gens) // 2
        return K.gens[0] ** int(w) * K.gens[m] ** int(wp) * self.body.as_rational()


# ---------------------------------------------------------------------------
# Defining functions
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class DefiningFunction:
    """
    A real defining function phi on C^{n+1}; sig records the signature of the
    Levi form -phi_{ab} on T^{1,0}M.

    kind is 'heisenberg' for scale * (Im z{n+1} - sum eps |z_a|^2), where
    adapted coordinates are available, 'hyperquadric' or 'custom'.
    """

    sig: Signature
    phi: RatFunc
    kind: str = "custom"
    scale: Any = field(default_factory=lambda: QQ_I.one)

    def __post_init__(self):
        J = monge_ampere_J(self)
        if not J or not (J.numer.is_ground and J.denom.is_ground):
            raise CalculusError(f"J(phi) must be a nonzero constant, got {poly_to_str(J)}")
        self.J = J

    @classmethod
    def heisenberg_type(cls, sig: Signature, scale: Any = 1) -> "DefiningFunction":
        n = sig.n
        K = ambient_field(n)
        c = as_scalar(scale)
        m = n + 2
        w, wb = K.gens[n + 1], K.gens[m + n + 1]
        im_w = (w - wb) * as_scalar(sympy.Rational(1, 2) * -sympy.I)
        body = im_w
        for a in range(1, n + 1):
            body = body - K.gens[a] * K.gens[m + a] * sig.sign(a)
        return cls(sig, body * c, "heisenberg", c)

    @classmethod
    def hyperquadric(cls, sig: Signature) -> "DefiningFunction":
        """1 - sum eps_a |z_a|^2 - |z{n+1}|^2, the sphere for positive signature."""
        n = sig.n
        K = ambient_field(n)
        m = n + 2
        phi = K.one - K.gens[n + 1] * K.gens[m + n + 1]
        for a in range(1, n + 1):
            phi = phi - K.gens[a] * K.gens[m + a] * sig.sign(a)
        return cls(sig, phi, "hyperquadric")

    @classmethod
    def parse(cls, text: str, sig: Signature) -> "DefiningFunction":
        R = polynomial_ring(hypersurface_symbols(sig.n))
        return cls(sig, _embed(parse_real_poly(text, R), sig.n))

    def scaled(self, c: Any) -> "DefiningFunction":
        c = as_scalar(c)
        return DefiningFunction(self.sig, self.phi * c, self.kind, self.scale * c)

    @property
    def n(self) -> int:
        return self.sig.n

    @property
    def K(self):
        return self.phi.field

    def hol(self, a: int) -> int:
        """Generator index of z_a, a = 0..n+1."""
        return a

    def ahol(self, a: int) -> int:
        return self.n + 2 + a

    def d(self, a: int) -> RatFunc:
        return derive(self.phi, self.hol(a))

    def db(self, b: int) -> RatFunc:
        return derive(self.phi, self.ahol(b))

    def ddb(self, a: int, b: int) -> RatFunc:
        return derive(self.d(a), self.ahol(b))

    def indices(self) -> range:
        return range(1, self.n + 2)


def monge_ampere_J(df: DefiningFunction) -> RatFunc:
    """(-1)^(p+1) det [[phi, phi_b], [phi_a, phi_ab]] over a, b = 1..n+1."""
    idx = list(df.indices())
    rows = [[df.phi] + [df.db(b) for b in idx]]
    for a in idx:
        rows.append([df.d(a)] + [df.ddb(a, b) for b in idx])
    size = len(rows)
    det = DomainMatrix(rows, (size, size), df.K.to_domain()).det()
    return det * (-1) ** (df.sig.p + 1)


# ---------------------------------------------------------------------------
# Transverse and Kaehler data
# ---------------------------------------------------------------------------

@dataclass
class TransverseData:
    xi: List[RatFunc]
    xib: List[RatFunc]
    r: RatFunc


def transverse_data(df: DefiningFunction) -> TransverseData:
    """
    Solve phi_{ab} xi^b = r phi_a, xi^b phi_b = 1 for xi^b and r.

    Raises:
        CalculusError: if the system is singular (degenerate Levi form)
    """
    idx = list(df.indices())
    size = len(idx) + 1
    rows = []
    for a in idx:
        rows.append([df.ddb(a, b) for b in idx] + [-df.d(a)])
    rows.append([df.db(b) for b in idx] + [df.K.zero])
    dom = df.K.to_domain()
    A = DomainMatrix(rows, (size, size), dom)
    rhs = DomainMatrix([[dom.zero]] * (size - 1) + [[dom.one]], (size, 1), dom)
    try:
        solution = [row[0] for row in A.lu_solve(rhs).to_list()]
    except DMNonInvertibleMatrixError as e:
        raise CalculusError(f"Levi form of {poly_to_str(df.phi)} is degenerate: no transverse field") from e
    xib = solution[:-1]
    r = solution[-1]
    xi = [conjugate(x) for x in xib]
    logger.debug(f"Transverse curvature r = {poly_to_str(r)}")
    return TransverseData(xi, xib, r)


@dataclass
class KahlerData:
    """g_{ab}, its inverse g^{ab} (row a, column b) and phi^a = g^{ab} phi_b."""

    g: Matrix
    ginv: Matrix
    phi_up: List[RatFunc]
    phi_upb: List[RatFunc]


def kahler_data(df: DefiningFunction) -> KahlerData:
    idx = list(df.indices())
    size = len(idx)
    phi = df.phi
    g = [[-df.ddb(a, b) / phi + df.d(a) * df.db(b) / phi ** 2 for b in idx] for a in idx]
    dom = df.K.to_domain()
    try:
        inv = DomainMatrix(g, (size, size), dom).transpose().inv().to_list()
    except DMNonInvertibleMatrixError as e:
        raise CalculusError("Kaehler metric is degenerate") from e
    phi_up = [sum((inv[i][j] * df.db(b) for j, b in enumerate(idx)), df.K.zero) for i in range(size)]
    phi_upb = [sum((inv[j][i] * df.d(a) for j, a in enumerate(idx)), df.K.zero) for i in range(size)]
    return KahlerData(g, inv, phi_up, phi_upb)


def smooth_across(df: DefiningFunction, q: RatFunc) -> bool:
    """True when q has no pole along phi = 0."""
    return bool(q.denom.gcd(df.phi.numer).is_ground)


# ---------------------------------------------------------------------------
# Ambient metric
# ---------------------------------------------------------------------------

def ambient_metric(df: DefiningFunction) -> Matrix:
    """g~_{AB} = -[[phi, zb0 phi_b], [z0 phi_a, |z0|^2 phi_ab]], A, B = 0..n+1."""
    K = df.K
    z0, zb0 = K.gens[df.hol(0)], K.gens[df.ahol(0)]
    idx = list(df.indices())
    rows = [[-df.phi] + [-zb0 * df.db(b) for b in idx]]
    for a in idx:
        rows.append([-z0 * df.d(a)] + [-z0 * zb0 * df.ddb(a, b) for b in idx])
    return rows


def inverse_blocks(df: DefiningFunction, kd: Optional[KahlerData] = None) -> Matrix:
    """(|z0|^2 phi) g~^{AB} assembled from the Kaehler blocks."""
    kd = kd or kahler_data(df)
    K = df.K
    z0, zb0 = K.gens[df.hol(0)], K.gens[df.ahol(0)]
    phi = df.phi
    idx = list(df.indices())
    norm = sum((kd.phi_up[i] * df.d(a) for i, a in enumerate(idx)), K.zero)
    rows = [[z0 * zb0 * (norm / phi ** 2 - 1)] + [-z0 * kd.phi_upb[j] / phi for j in range(len(idx))]]
    for i in range(len(idx)):
        rows.append([-zb0 * kd.phi_up[i] / phi] + [kd.ginv[i][j] for j in range(len(idx))])
    return rows


def factor_matrices(df: DefiningFunction, kd: Optional[KahlerData] = None) -> Tuple[Matrix, Matrix, Matrix]:
    """The three factors of g~ with half-integer powers of phi."""
    kd = kd or kahler_data(df)
    K = df.K
    phi = df.phi
    z0, zb0 = K.gens[df.hol(0)], K.gens[df.ahol(0)]
    idx = list(df.indices())
    size = len(idx)
    half, minus_half = sympy.Rational(1, 2), sympy.Rational(-1, 2)
    zero = PhiSeries(phi)

    def unit(i: int, j: int, c: RatFunc) -> PhiSeries:
        return PhiSeries.power(phi, half, c) if i == j else zero

    left = [[PhiSeries.power(phi, half)] + [zero] * size]
    for i, a in enumerate(idx):
        left.append([PhiSeries.power(phi, minus_half, z0 * df.d(a))] + [unit(i, j, z0) for j in range(size)])
    middle = [[PhiSeries.constant(phi, -K.one)] + [zero] * size]
    for i in range(size):
        middle.append([zero] + [PhiSeries.constant(phi, kd.g[i][j]) for j in range(size)])
    right = [[PhiSeries.power(phi, half)] + [PhiSeries.power(phi, minus_half, zb0 * df.db(b)) for b in idx]]
    for i in range(size):
        right.append([zero] + [unit(i, j, zb0) for j in range(size)])
    return left, middle, right


def _matmul(A: Matrix, B: Matrix, zero: Any) -> Matrix:
    return [[sum((A[i][k] * B[k][j] for k in range(len(B))), zero) for j in range(len(B[0]))]
            for i in range(len(A))]


def _laplacian(coeffs: Matrix, hol: Sequence[int], ahol: Sequence[int], F: Any, diff) -> Any:
    """-sum coeffs[a][b] d_a d_b F."""
    out = None
    for i, a in enumerate(hol):
        for j, b in enumerate(ahol):
            c = coeffs[i][j]
            if c:
                term = diff(diff(F, b), a) * (-c)
                out = term if out is None else out + term
    return out


def kahler_laplacian(df: DefiningFunction, G: PhiSeries, kd: Optional[KahlerData] = None) -> PhiSeries:
    """Delta_g = -g^{ab} d_a d_b."""
    kd = kd or kahler_data(df)
    hol = [df.hol(a) for a in df.indices()]
    ahol = [df.ahol(b) for b in df.indices()]
    out = _laplacian(kd.ginv, hol, ahol, G, lambda x, i: x.diff(i))
    return out if out is not None else PhiSeries(df.phi)


def ambient_laplacian(df: DefiningFunction, F: AmbientFunction, kd: Optional[KahlerData] = None) -> AmbientFunction:
    """
    (|z0|^2 phi) times the ambient Laplacian of F, same homogeneity.

    z0-derivatives are evaluated through homogeneity: z0 d_0 F = w F,
    zb0 d_0b F = w' F.
    """
    kd = kd or kahler_data(df)
    w, wp = F.homogeneity.w, F.homogeneity.wp
    phi = df.phi
    G = F.body
    idx = list(df.indices())
    out = kahler_laplacian(df, G, kd)
    if wp:
        for i, a in enumerate(idx):
            out = out + G.diff(df.hol(a)) * (kd.phi_up[i] * as_scalar(wp) / phi)
    if w:
        for j, b in enumerate(idx):
            out = out + G.diff(df.ahol(b)) * (kd.phi_upb[j] * as_scalar(w) / phi)
    if w and wp:
        norm = sum((kd.phi_up[i] * df.d(a) for i, a in enumerate(idx)), df.K.zero)
        out = out - G * ((norm / phi ** 2 - 1) * as_scalar(w * wp))
    return AmbientFunction(F.homogeneity, out)


def brute_force_ambient_laplacian(df: DefiningFunction, F: RatFunc) -> RatFunc:
    """-g~^{AB} d_A d_B F with the bordered metric inverted directly."""
    G = ambient_metric(df)
    size = len(G)
    inv = DomainMatrix(G, (size, size), df.K.to_domain()).transpose().inv().to_list()
    hol = [df.hol(a) for a in range(df.n + 2)]
    ahol = [df.ahol(b) for b in range(df.n + 2)]
    return _laplacian(inv, hol, ahol, F, derive)


# ---------------------------------------------------------------------------
# Delta_{w,w'}
# ---------------------------------------------------------------------------

class DeltaWW:
    """
    phi^-1 Delta_g + w'(1-r phi)^-1 xi^a d_a + w (1-r phi)^-1 xib^b d_b - w w' r (1-r phi)^-1.
    """

    def __init__(self, df: DefiningFunction, weight: Weight):
        self.df = df
        self.weight = weight
        self.kd = kahler_data(df)
        self.td = transverse_data(df)
        phi = df.phi
        inv = 1 / (1 - self.td.r * phi)
        self.inner = [[c / phi for c in row] for row in self.kd.ginv]
        self.hol_field = [x * inv for x in self.td.xi]
        self.ahol_field = [x * inv for x in self.td.xib]
        self.potential = self.td.r * inv
        logger.debug(f"Delta_ww built for weight {weight} and phi = {poly_to_str(phi)}")

    def coefficients(self) -> List[RatFunc]:
        flat = [c for row in self.inner for c in row]
        return flat + self.hol_field + self.ahol_field + [self.potential]

    def apply(self, G: PhiSeries) -> PhiSeries:
        df = self.df
        w, wp = self.weight.w, self.weight.wp
        hol = [df.hol(a) for a in df.indices()]
        ahol = [df.ahol(b) for b in df.indices()]
        out = _laplacian(self.inner, hol, ahol, G, lambda x, i: x.diff(i)) or PhiSeries(df.phi)
        for i, a in enumerate(hol):
            if wp:
                out = out + G.diff(a) * (self.hol_field[i] * as_scalar(wp))
            if w:
                out = out + G.diff(ahol[i]) * (self.ahol_field[i] * as_scalar(w))
        if w and wp:
            out = out - G * (self.potential * as_scalar(w * wp))
        return out

    def adapted_operator(self) -> DiffOp:
        """The operator in adapted coordinates (z, zb, s, rho = phi); heisenberg-type phi only."""
        ac = adapted_coordinates(self.df)
        w, wp = self.weight.w, self.weight.wp
        idx = list(self.df.indices())
        hol = [ac.vector_field(a, barred=False) for a in idx]
        ahol = [ac.vector_field(b, barred=True) for b in idx]
        op = DiffOp.zero(ac.ring)
        for i in range(len(idx)):
            for j in range(len(idx)):
                c = ac.pull_back(self.inner[i][j])
                if c:
                    op = op + (hol[i] * ahol[j]).left_multiply(-c)
        for i in range(len(idx)):
            if wp:
                op = op + hol[i].left_multiply(ac.pull_back(self.hol_field[i])).scale(wp)
            if w:
                op = op + ahol[i].left_multiply(ac.pull_back(self.ahol_field[i])).scale(w)
        if w and wp:
            op = op - DiffOp.multiplication(ac.pull_back(self.potential)).scale(w * wp)
        return op


def delta_ww(df: DefiningFunction, weight: Weight) -> DeltaWW:
    return DeltaWW(df, weight)


# ---------------------------------------------------------------------------
# Adapted coordinates and the obstruction
# ---------------------------------------------------------------------------

class AdaptedCoordinates:
    """
    (z_a, zb_a, s, rho) with z{n+1} = s + i(sum eps |z_a|^2 + rho/c) for
    phi = c (Im z{n+1} - sum eps |z_a|^2); the boundary is rho = 0 and the
    Heisenberg coordinate is t = s/2.
    """

    def __init__(self, df: DefiningFunction):
        if df.kind != "heisenberg":
            raise CalculusError("Adapted coordinates are available for heisenberg-type defining functions only")
        self.df = df
        sig = df.sig
        n = sig.n
        self.n = n
        names = tuple(f"z{a}" for a in range(1, n + 1)) + tuple(f"zb{a}" for a in range(1, n + 1)) + ("s", "rho")
        self.ring = polynomial_ring(names)
        A = self.ring
        self.s_index = 2 * n
        self.rho_index = 2 * n + 1
        s, rho = A.gens[self.s_index], A.gens[self.rho_index]
        c = df.scale
        height = rho * (QQ_I.one / c)
        for a in range(1, n + 1):
            height = height + A.gens[a - 1] * A.gens[n + a - 1] * sig.sign(a)
        w = s + height * I
        wb = s - height * I
        images = [A.zero] + [A.gens[a - 1] for a in range(1, n + 1)] + [w]
        images += [A.zero] + [A.gens[n + a - 1] for a in range(1, n + 1)] + [wb]
        self._images = images

    def pull_back(self, q: RatFunc) -> Poly:
        p = as_polynomial(q)
        if p is None:
            raise CalculusError(f"Coefficient {poly_to_str(q)} is not polynomial in adapted coordinates")
        return substitute(p, self._images, self.ring)

    def vector_field(self, a: int, barred: bool) -> DiffOp:
        """d/dz_a (or d/dzb_a) at fixed z{n+1}, zb{n+1}, written in adapted coordinates."""
        A = self.ring
        n = self.n
        c = self.df.scale
        if a <= n:
            eps = self.df.sig.sign(a)
            own = (n + a - 1) if barred else (a - 1)
            partner = A.gens[(a - 1) if barred else (n + a - 1)]
            return DiffOp.vector_field(A, {own: A.one, self.rho_index: partner * (-c * eps)})
        half = QQ_I(sympy.Rational(1, 2), 0)
        rho_coeff = I * c * half * (1 if barred else -1)
        return DiffOp.vector_field(A, {self.s_index: A.ground_new(half), self.rho_index: A.ground_new(rho_coeff)})

    def from_boundary(self, f: Poly) -> Poly:
        """Heisenberg polynomial in (z, zb, t) as a rho-independent function, t = s/2."""
        A = self.ring
        n = self.n
        images = [A.gens[i] for i in range(2 * n)] + [A.gens[self.s_index] * QQ_I(sympy.Rational(1, 2), 0)]
        return substitute(f, images, A)

    def to_boundary(self, p: Poly) -> Poly:
        R = self.df.sig.ring
        n = self.n
        images = [R.gens[i] for i in range(2 * n)] + [R.gens[2 * n] * 2, R.zero]
        return substitute(p, images, R)

    def rho_coefficient(self, p: Poly, j: int) -> Poly:
        return self.ring.from_dict({m[:-1] + (0,): c for m, c in p.items() if m[-1] == j})

    def rho_power(self, j: int) -> Poly:
        return self.ring.gens[self.rho_index] ** j


@lru_cache(maxsize=32)
def adapted_coordinates(df: DefiningFunction) -> AdaptedCoordinates:
    return AdaptedCoordinates(df)


@lru_cache(maxsize=32)
def _adapted_delta(df: DefiningFunction, weight: Weight) -> DiffOp:
    return delta_ww(df, weight).adapted_operator()


def obstruction(df: DefiningFunction, weight: Weight, f: Poly, k: int) -> Field:
    """
    Raw obstruction to a smooth formal solution of Delta_{w,w'} u = 0 with u = f on M.

    Solves u = sum_{j<k} u_j rho^j order by order and returns the rho^(k-1)
    coefficient of Delta_{w,w'} u on the boundary, as a Heisenberg density.

    Raises:
        CalculusError: if n+w+w'+1 != k or an indicial coefficient vanishes before order k
    """
    n = df.n
    if order_k(n, weight) != k:
        raise CalculusError(f"n+w+w'+1 = {n + weight.total() + 1} does not equal k={k}")
    ac = adapted_coordinates(df)
    L = _adapted_delta(df, weight)
    u = ac.from_boundary(f)
    for j in range(1, k):
        indicial = ac.rho_coefficient(L.apply(ac.rho_power(j)), j - 1)
        if not indicial or not indicial.is_ground:
            raise CalculusError(f"Indicial coefficient at order {j} is {poly_to_str(indicial)}; expected a nonzero constant")
        residual = ac.rho_coefficient(L.apply(u), j - 1)
        u = u - residual.mul_ground(QQ_I.one / indicial.LC) * ac.rho_power(j)
        image = L.apply(u)
        for i in range(j):
            if ac.rho_coefficient(image, i):
                raise CalculusError(f"Formal solution failed to cancel order {i} at step {j}")
    value = ac.to_boundary(ac.rho_coefficient(L.apply(u), k - 1))
    logger.info(f"Obstruction at k={k}, weight {weight}: {poly_to_str(value)}")
    return Field.scalar(df.sig, weight.shift(-k, -k), value)


def obstruction_ratio(df: DefiningFunction, weight: Weight, fs: Sequence[Poly], k: int) -> Any:
    """
    The single constant c with obstruction(f) = c (-2 box)^k f for all f in fs.

    Raises:
        CalculusError: when no single constant exists
    """
    P = flat_power(df.sig, weight, k)
    ratio = None
    for f in fs:
        obs = obstruction(df, weight, f, k)[()]
        target = P.apply(f)
        if not target:
            if obs:
                raise CalculusError(f"Obstruction of {poly_to_str(f)} is nonzero where the operator vanishes")
            continue
        m = max(target.keys())
        c = obs.get(m, QQ_I.zero) / target[m]
        if obs != target.mul_ground(c):
            raise CalculusError(f"Obstruction of {poly_to_str(f)} is not a multiple of the invariant operator")
        if ratio is not None and c != ratio:
            raise CalculusError(f"Ratio {scalar_to_str(c)} differs from {scalar_to_str(ratio)}")
        ratio = c
    if ratio is None:
        raise CalculusError("No test polynomial gave a nonzero operator image")
    return ratio


def heisenberg_translation(sig: Signature, f: Poly, shift: Sequence[Any], height: Any = 0) -> Poly:
    """f(z + a, t + b - Im sum eps conj(a) z) for the group element (a, b)."""
    R = sig.ring
    n = sig.n
    a = [as_scalar(x) for x in shift]
    images = [R.gens[i] + R.ground_new(a[i]) for i in range(n)]
    images += [R.gens[n + i] + R.ground_new(conj_scalar(a[i])) for i in range(n)]
    t = R.gens[2 * n] + R.ground_new(as_scalar(height))
    half_i = I * QQ_I(sympy.Rational(1, 2), 0)
    for i in range(n):
        t = t + (R.gens[i] * conj_scalar(a[i]) - R.gens[n + i] * a[i]) * (half_i * sig.sign(i + 1))
    images.append(t)
    return substitute(f, images, R)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

def _random_body(df: DefiningFunction, rng: np.random.Generator, degree: int = 2) -> RatFunc:
    R = polynomial_ring(hypersurface_symbols(df.n))
    return _embed(random_poly(R, rng, degree=degree, terms=3), df.n)


def verify_ambient(df: DefiningFunction, rng: np.random.Generator,
                   weights: Sequence[Weight] = (), scat_weights: Sequence[Any] = (0, -1, sympy.Rational(-1, 2),
                                                                                     sympy.Rational(1, 3)),
                   samples: int = 2) -> List[CheckResult]:
    """Metric factorization, transverse identities and the homogeneous Laplacian relations."""
    n = df.n
    K = df.K
    phi = df.phi
    z0, zb0 = K.gens[df.hol(0)], K.gens[df.ahol(0)]
    idx = list(df.indices())
    kd = kahler_data(df)
    td = transverse_data(df)
    label = df.kind
    results: List[CheckResult] = [
        check_equal(f"J scaling law ({label})", "Monge-Ampere scaling",
                    monge_ampere_J(df.scaled(3)), df.J * as_scalar(3 ** (n + 2))),
    ]

    G = ambient_metric(df)
    left, middle, right = factor_matrices(df, kd)
    zero = PhiSeries(phi)
    product = _matmul(_matmul(left, middle, zero), right, zero)
    results.append(check_true(f"factorization reassembles the ambient metric ({label})", "ambient metric factorization",
                              all(product[i][j] == PhiSeries.constant(phi, G[i][j])
                                  for i in range(n + 2) for j in range(n + 2)),
                              "factor product differs from the bordered metric"))
    H = inverse_blocks(df, kd)
    ok = True
    for A_ in range(n + 2):
        for C in range(n + 2):
            entry = sum((H[A_][B] * G[C][B] for B in range(n + 2)), K.zero)
            expected = z0 * zb0 * phi if A_ == C else K.zero
            ok = ok and not (entry - expected)
    results.append(check_true(f"inverse blocks invert the ambient metric ({label})", "ambient inverse", ok,
                              "inverse block product is not |z0|^2 phi times the identity"))

    for a in idx:
        lhs = sum((df.ddb(a, b) * td.xib[j] for j, b in enumerate(idx)), K.zero)
        results.append(check_equal(f"transverse field equation, row {a} ({label})", "transverse field",
                                   lhs, td.r * df.d(a)))
    results.append(check_equal(f"xi normalization ({label})", "transverse field",
                               sum((td.xi[i] * df.d(a) for i, a in enumerate(idx)), K.zero), K.one))
    r_formula = sum((df.ddb(a, b) * td.xi[i] * td.xib[j] for i, a in enumerate(idx) for j, b in enumerate(idx)),
                    K.zero)
    results.append(check_equal(f"transverse curvature ({label})", "transverse curvature", r_formula, td.r))
    factor = phi ** 2 / (1 - td.r * phi)
    for i in range(len(idx)):
        results.append(check_equal(f"raised phi_{idx[i]} ({label})", "raised gradient",
                                   kd.phi_up[i], factor * td.xi[i]))
    norm = sum((kd.phi_up[i] * df.d(a) for i, a in enumerate(idx)), K.zero)
    results.append(check_equal(f"gradient length ({label})", "raised gradient", norm, factor))
    trace = sum((kd.ginv[i][j] * df.ddb(a, b) for i, a in enumerate(idx) for j, b in enumerate(idx)), K.zero)
    results.append(check_equal(f"trace of the Levi form ({label})", "Levi form trace", trace,
                               phi / (1 - td.r * phi) * ((n + 1) * td.r * phi - n)))

    for weight in weights:
        op = delta_ww(df, weight)
        poles = [poly_to_str(c) for c in op.coefficients() if not smooth_across(df, c)]
        results.append(check_true(f"Delta_ww coefficients smooth across M on {weight} ({label})",
                                  "smoothness across the boundary", not poles, "; ".join(poles)))
        for _ in range(samples):
            body = PhiSeries.constant(phi, _random_body(df, rng))
            F = AmbientFunction(weight, body)
            scaled = ambient_laplacian(df, F, kd)
            results.append(check_true(f"homogeneous Laplacian on {weight} ({label})", "homogeneous ambient Laplacian",
                                      op.apply(body) * phi == scaled.body,
                                      "phi Delta_ww differs from the scaled ambient Laplacian"))
            if weight.w.is_integer and weight.wp.is_integer:
                direct = brute_force_ambient_laplacian(df, F.expand())
                results.append(check_equal(f"ambient Laplacian against the bordered inverse on {weight} ({label})",
                                           "ambient Laplacian", direct * z0 * zb0 * phi, scaled.expand()))

    for w in scat_weights:
        w = sympy.Rational(w)
        u = _random_body(df, rng)
        F = AmbientFunction(Weight(w, w), PhiSeries.power(phi, w, u))
        lhs = ambient_laplacian(df, F, kd).body
        lap = kahler_laplacian(df, PhiSeries.constant(phi, u), kd).as_rational()
        rhs = PhiSeries.power(phi, w, lap + u * as_scalar(w * (n + 1 + w)))
        results.append(check_true(f"Laplacian of |z0|^2w phi^w u for w={w} ({label})", "scattering relation",
                                  lhs == rhs, f"lhs={lhs}, rhs={rhs}"))
    return results


def verify_obstruction(df: DefiningFunction, weight: Weight, k: int, rng: np.random.Generator,
                       samples: int = 5) -> Tuple[List[CheckResult], Optional[Any]]:
    """Ratio constancy against (-2 box)^k, linearity and translation equivariance."""
    sig = df.sig
    R = sig.ring
    fs = [random_poly(R, rng, degree=2 * k + 1, terms=3) for _ in range(samples)]
    results: List[CheckResult] = []
    ratio = None
    try:
        ratio = obstruction_ratio(df, weight, fs, k)
        results.append(check_true(f"single obstruction constant on {weight}, k={k} (c = {scalar_to_str(ratio)})",
                                  "obstruction proportionality", bool(ratio), "constant is zero"))
    except CalculusError as e:
        results.append(check_true(f"single obstruction constant on {weight}, k={k}", "obstruction proportionality",
                                  False, str(e)))
    f, g = fs[0], fs[1 % len(fs)]
    results.append(check_equal(f"obstruction linearity on {weight}", "obstruction linearity",
                               obstruction(df, weight, f + g.mul_ground(as_scalar(2)), k)[()],
                               obstruction(df, weight, f, k)[()] + obstruction(df, weight, g, k)[()].mul_ground(
                                   as_scalar(2))))
    for shift, height in (([1] + [0] * (sig.n - 1), 0), ([0] * sig.n, 1)):
        moved = heisenberg_translation(sig, f, shift, height)
        results.append(check_equal(f"obstruction commutes with translation by {shift}, {height}",
                                   "translation equivariance",
                                   obstruction(df, weight, moved, k)[()],
                                   heisenberg_translation(sig, obstruction(df, weight, f, k)[()], shift, height)))
    return results, ratio
