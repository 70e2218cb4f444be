"""
Tractor calculus on the Heisenberg model.

A tractor v_A is realized, for a choice of pseudohermitian structure, as
the triple (sigma, tau_a, rho) of weights (1,0), (1,0)-form (1,0) and
(0,-1). Slot values follow that order: 0 = top, 1..n = mid, n+1 = bot.
Changing the structure by e^U acts on the triple by the lower triangular
matrix M_U; the tractor connection, the D operator and the box operator
are expressed in a single realization and compared across realizations
through transport.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy
from sympy.polys.domains import QQ_I
from sympy.polys.rings import PolyElement

from backend.services.cr_calculus.checks import CheckResult, check_equal, check_true, check_weight, check_zero
from backend.services.cr_calculus.diffop import Component, scale_component
from backend.services.cr_calculus.heisenberg import (
    Field,
    IndexKind,
    Key,
    Signature,
    Weight,
    _accumulate,
    contract,
    raise_lower,
    tensor,
)
from backend.services.cr_calculus.scalars import (
    CalculusError,
    as_scalar,
    conjugate,
    random_poly,
)
from backend.services.cr_calculus.structures import (
    HALF,
    I,
    CurvatureData,
    DerivKind,
    PHStructure,
    PseudohermitianConnection,
    SlotMatrix,
    conjugate_matrix,
    connection_for,
    curvature_data,
    dual_matrix,
    random_density,
)

logger = logging.getLogger(__name__)

TRAC = IndexKind.TRAC_DOWN
ATRAC = IndexKind.ATRAC_DOWN


# ---------------------------------------------------------------------------
# Tractor connection
# ---------------------------------------------------------------------------

class TractorConnection(PseudohermitianConnection):
    """
    The tractor connection of a PHStructure coupled with its
    pseudohermitian connection on every non-tractor slot and on the
    density weight. Tractor slots carry the correction matrices built from
    A, P_ab, P, T and S; upper and barred slots use the dual and conjugate
    matrices.
    """

    def __init__(self, st: PHStructure):
        super().__init__(st)
        self.curvature: CurvatureData = curvature_data(st)

    def _has_tractor_terms(self) -> bool:
        return True

    def slot_matrix(self, skind: IndexKind, kind: DerivKind, c: int) -> SlotMatrix:
        M = dict(super().slot_matrix(skind, kind, c))
        if skind.is_tractor:
            for key, v in self.tractor_matrix(skind, kind, c).items():
                M[key] = M[key] + v if key in M else v
        return M

    def tractor_matrix(self, skind: IndexKind, kind: DerivKind, c: int) -> SlotMatrix:
        if skind is IndexKind.TRAC_DOWN:
            return self._trac_down_matrix(kind, c)
        if skind is IndexKind.TRAC_UP:
            return dual_matrix(self._trac_down_matrix(kind, c))
        conj_down = conjugate_matrix(self._trac_down_matrix(kind.conjugate(), c))
        if skind is IndexKind.ATRAC_DOWN:
            return conj_down
        return dual_matrix(conj_down)

    def _trac_down_matrix(self, kind: DerivKind, c: int) -> SlotMatrix:
        data = self.curvature
        sig = self.sig
        n = sig.n
        bot = n + 1
        R = sig.ring
        eps = sig.sign
        rng = range(1, n + 1)
        M: SlotMatrix = {}

        def add(x: int, y: int, v: PolyElement) -> None:
            if v:
                M[(x, y)] = M[(x, y)] + v if (x, y) in M else v

        if kind is DerivKind.HOL:
            add(0, c, -R.one)
            for a in rng:
                add(a, 0, data.a(a, c).mul_ground(I))
                add(bot, a, -data.p(c, a) * eps(a))
            add(bot, 0, data.t(c))
        elif kind is DerivKind.AHOL:
            add(c, bot, R.one * eps(c))
            for a in rng:
                add(a, 0, data.p(a, c))
                add(bot, a, conjugate(data.a(c, a)).mul_ground(I) * eps(a))
            add(bot, 0, -conjugate(data.t(c)))
        else:
            pk = data.trace().mul_ground(I * QQ_I(sympy.Rational(1, n + 2), 0))
            add(0, 0, pk)
            add(0, bot, R.one.mul_ground(-I))
            add(bot, bot, pk)
            add(bot, 0, data.s().mul_ground(I))
            for a in rng:
                add(a, a, pk)
                add(a, 0, data.t(a).mul_ground(2 * I))
                add(bot, a, conjugate(data.t(a)).mul_ground(2 * I) * eps(a))
                for b in rng:
                    add(a, b, data.p(a, b).mul_ground(-I) * eps(b))
        return M


@lru_cache(maxsize=64)
def tractor_connection_for(st: PHStructure) -> TractorConnection:
    return TractorConnection(st)


def tractor_cov_derivative(st: PHStructure, F: Field) -> Tuple[Field, Field, Field]:
    """(nabla_a F, nabla_abar F, nabla_0 F) with the tractor-coupled connection."""
    return tractor_connection_for(st).triple(F)


def base_structure(st: PHStructure) -> PHStructure:
    return st.base if st.base is not None else PHStructure.flat(st.sig)


# ---------------------------------------------------------------------------
# Metric, canonical tractor and pairing
# ---------------------------------------------------------------------------

def tractor_metric(sig: Signature) -> Field:
    """h_{A Bbar}: top-bot and bot-top entries 1, mid block the Levi form."""
    R = sig.ring
    n = sig.n
    comps: Dict[Key, PolyElement] = {(0, n + 1): R.one, (n + 1, 0): R.one}
    for a in range(1, n + 1):
        comps[(a, a)] = R.one * sig.sign(a)
    return Field(sig, Weight(0, 0), (TRAC, ATRAC), comps)


def canonical_tractor(sig: Signature, barred: bool = False, upper: bool = False) -> Field:
    """Z_A in E_A(0,1) (or Z_Abar in E_Abar(1,0)); upper=True gives Z^A or Z^Abar."""
    one = Field.scalar(sig, Weight(0, 0), sig.ring.one)
    return canonical_multiply(one, barred=barred, upper=upper)


def canonical_multiply(F: Field, barred: bool = False, upper: bool = False) -> Field:
    """Multiplication by the canonical tractor, prepended as slot 0."""
    n = F.sig.n
    if upper:
        kind = IndexKind.ATRAC_UP if barred else IndexKind.TRAC_UP
        weight = F.weight.shift(0, 1) if barred else F.weight.shift(1, 0)
        return F.prepend(kind, {0: F}, weight)
    kind = ATRAC if barred else TRAC
    weight = F.weight.shift(1, 0) if barred else F.weight.shift(0, 1)
    return F.prepend(kind, {n + 1: F}, weight)


def pairing(u: Field, v: Field) -> PolyElement:
    """
    Hermitian pairing of two single-slot tractors of the same kind through
    the tractor metric (top with bot, mid with eps).
    """
    if len(u.kinds) != 1 or u.kinds != v.kinds or not u.kinds[0].is_tractor:
        raise CalculusError("pairing expects two fields with one tractor slot of the same kind")
    n = u.sig.n
    R = u.ring
    total = R.zero
    for (x,), comp in u.items():
        if x == 0:
            partner, factor = n + 1, 1
        elif x == n + 1:
            partner, factor = 0, 1
        else:
            partner, factor = x, u.sig.sign(x)
        other = v[(partner,)]
        if other:
            total = total + comp * conjugate(other) * factor
    return total


# ---------------------------------------------------------------------------
# Transport between realizations
# ---------------------------------------------------------------------------

def _transport_down(st: PHStructure, sign: int) -> SlotMatrix:
    """M_U (sign=+1) or M_{-U} (sign=-1) on a lower unbarred tractor slot."""
    jet = connection_for(st).jet
    sig = st.sig
    n = sig.n
    bot = n + 1
    R = sig.ring
    M: SlotMatrix = {(0, 0): R.one, (bot, bot): R.one}
    norm = R.zero
    for a in range(1, n + 1):
        M[(a, a)] = R.one
        if jet.u[a]:
            M[(a, 0)] = jet.u[a] * sign
        if jet.ub[a]:
            M[(bot, a)] = jet.ub[a] * (-sign * sig.sign(a))
        norm = norm + jet.ub[a] * jet.u[a] * sig.sign(a)
    corner = (norm + jet.u0.mul_ground(I) * sign).mul_ground(-HALF)
    if corner:
        M[(bot, 0)] = corner
    return M


def transport_matrix(st: PHStructure, kind: IndexKind, inverse: bool = False) -> SlotMatrix:
    """
    Matrix (target, source) carrying one tractor slot from the base
    realization to that of st (or back, when inverse is set).
    """
    sign = -1 if inverse else 1
    if kind is IndexKind.TRAC_DOWN:
        return _transport_down(st, sign)
    if kind is IndexKind.TRAC_UP:
        return {(y, x): v for (x, y), v in _transport_down(st, -sign).items()}
    conj = transport_matrix(st, kind.conjugate(), inverse)
    return conjugate_matrix(conj)


def transport(st: Union[PHStructure, PolyElement], F: Field, inverse: bool = False) -> Field:
    """
    Re-express F from the base realization in that of st by applying M_U on
    every tractor slot; weights and non-tractor slots are unchanged.

    Args:
        st: target structure, or a real polynomial U over the flat structure
        F: field with at least one tractor slot
        inverse: apply M_{-U} instead (st realization back to base)

    Raises:
        CalculusError: if F has no tractor slot
    """
    if isinstance(st, PolyElement):
        st = PHStructure(F.sig, st)
    slots = [s for s, k in enumerate(F.kinds) if k.is_tractor]
    if not slots:
        raise CalculusError("transport needs a field with at least one tractor slot")
    if not st.upsilon:
        return F
    comps: Dict[Key, Component] = dict(F.items())
    for s in slots:
        M = transport_matrix(st, F.kinds[s], inverse)
        out: Dict[Key, Component] = {}
        for key, comp in comps.items():
            y = key[s]
            for (x, yy), coeff in M.items():
                if yy == y:
                    _accumulate(out, key[:s] + (x,) + key[s + 1:], scale_component(comp, coeff))
        comps = out
    return Field(F.sig, F.weight, F.kinds, comps, operator=F.operator)


# ---------------------------------------------------------------------------
# D, box and friends
# ---------------------------------------------------------------------------

def _with_weight(F: Field, weight: Weight) -> Field:
    return Field(F.sig, weight, F.kinds, dict(F.items()), operator=F.operator)


def _hol_trace(conn: TractorConnection, d_hol: Field) -> Field:
    """nabla^b nabla_b F from nabla_b F: sum_b eps_b nabla_bbar nabla_b F."""
    second = conn.ahol(d_hol)
    m = len(d_hol.kinds) - 1
    out: Dict[Key, Component] = {}
    for key, comp in second.items():
        if key[m] == key[m + 1]:
            _accumulate(out, key[:m], scale_component(comp, d_hol.sig.sign(key[m])))
    return Field(d_hol.sig, d_hol.weight.shift(-1, -1), d_hol.kinds[:m], out, operator=d_hol.operator)


def _box_from(st: PHStructure, F: Field, d_hol: Field) -> Field:
    conn = tractor_connection_for(st)
    n = st.n
    w, wp = F.weight.w, F.weight.wp
    out = _hol_trace(conn, d_hol)
    if w:
        out = out + _with_weight(conn.zero(F), out.weight).scale(I * as_scalar(w))
    P = conn.curvature.trace()
    coeff = w * (1 + (wp - w) / sympy.Integer(n + 2))
    if P and coeff:
        out = out + _with_weight(F.scale(P), out.weight).scale(as_scalar(coeff))
    return out


def box(st: PHStructure, F: Field) -> Field:
    """box F = nabla^a nabla_a F + i w nabla_0 F + w(1 + (w'-w)/(n+2)) P F."""
    return _box_from(st, F, tractor_connection_for(st).hol(F))


def box_bar(st: PHStructure, F: Field) -> Field:
    """The conjugate operator nabla_a nabla^a F - i w' nabla_0 F + w'(1 - (w'-w)/(n+2)) P F."""
    return box(st, F.conjugate()).conjugate()


def tractor_D(st: PHStructure, F: Field) -> Field:
    """
    D_A F = (w(n+w+w') F, (n+w+w') nabla_a F, -box F), prepended as a
    lower tractor slot; weight (w-1, w').
    """
    conn = tractor_connection_for(st)
    n = st.n
    w, wp = F.weight.w, F.weight.wp
    c = n + w + wp
    d_hol = conn.hol(F)
    m = len(F.kinds)
    slots: Dict[int, Field] = {0: F.scale(as_scalar(w * c)), n + 1: -_box_from(st, F, d_hol)}
    if c:
        for a in range(1, n + 1):
            slots[a] = d_hol.slot_part(m, a).scale(as_scalar(c))
    return F.prepend(TRAC, slots, F.weight.shift(-1, 0))


def tractor_D_bar(st: PHStructure, F: Field) -> Field:
    """D_Abar F, the conjugate operation; weight (w, w'-1)."""
    return tractor_D(st, F.conjugate()).conjugate()


def tilde_D(st: PHStructure, F: Field) -> Field:
    """D~_A F = (w F, nabla_a F, 0)."""
    conn = tractor_connection_for(st)
    n = st.n
    d_hol = conn.hol(F)
    m = len(F.kinds)
    slots = {0: F.scale(as_scalar(F.weight.w))}
    for a in range(1, n + 1):
        slots[a] = d_hol.slot_part(m, a)
    return F.prepend(TRAC, slots, F.weight.shift(-1, 0))


def tractor_D_upper(st: PHStructure, F: Field, barred: bool = False) -> Field:
    """D^A F = h^{A Bbar} D_Bbar F (or D^Abar F when barred)."""
    lowered = tractor_D(st, F) if barred else tractor_D_bar(st, F)
    return raise_lower(lowered, 0)


def box_power(st: PHStructure, F: Field, k: int) -> Field:
    for _ in range(k):
        F = box(st, F)
    return F


# ---------------------------------------------------------------------------
# Tractor curvature
# ---------------------------------------------------------------------------

@dataclass
class TractorCurvature:
    """Component tensors of the tractor curvature and the assembled blocks."""

    S: Field
    V: Optional[Field]
    U: Optional[Field]
    Q: Optional[Field]
    Y: Optional[Field]
    omega: Dict[str, Field] = field(default_factory=dict)

    def tensors(self) -> Dict[str, Field]:
        named = {"S": self.S, "V": self.V, "U": self.U, "Q": self.Q, "Y": self.Y}
        return {k: v for k, v in named.items() if v is not None}

    def is_zero(self) -> bool:
        return all(f.is_zero() for f in self.tensors().values()) and all(
            f.is_zero() for f in self.omega.values())


def _levi(sig: Signature, x: int, y: int) -> int:
    return sig.sign(x) if x == y else 0


def chern_tensor(sig: Signature, R: Field, P_ab: Field) -> Field:
    """S_{ab r s} = R_{ab r s} minus the four P h terms."""
    n = sig.n
    rng = range(1, n + 1)
    out: Dict[Key, PolyElement] = {}
    for a in rng:
        for b in rng:
            for r in rng:
                for s in rng:
                    val = R[(a, b, r, s)]
                    for (p1, p2, h1, h2) in ((a, b, r, s), (r, s, a, b), (a, s, r, b), (r, b, a, s)):
                        e = _levi(sig, h1, h2)
                        if e:
                            val = val - P_ab[(p1, p2)] * e
                    if val:
                        out[(a, b, r, s)] = val
    hol, ahol = IndexKind.HOL_DOWN, IndexKind.AHOL_DOWN
    return Field(sig, Weight(1, 1), (hol, ahol, hol, ahol), out)


def _omega_blocks(sig: Signature, S: Field, V: Field, U: Field, Q: Field, Y: Field) -> Dict[str, Field]:
    n = sig.n
    bot = n + 1
    rng = range(1, n + 1)
    eps = sig.sign
    kinds_mixed = (IndexKind.HOL_DOWN, IndexKind.AHOL_DOWN, TRAC, IndexKind.TRAC_UP)
    kinds_hol0 = (IndexKind.HOL_DOWN, TRAC, IndexKind.TRAC_UP)
    kinds_ahol0 = (IndexKind.AHOL_DOWN, TRAC, IndexKind.TRAC_UP)
    mixed: Dict[Key, PolyElement] = {}
    hol0: Dict[Key, PolyElement] = {}
    ahol0: Dict[Key, PolyElement] = {}

    def put(target: Dict[Key, PolyElement], key: Key, v: PolyElement) -> None:
        if v:
            target[key] = v

    for r in rng:
        for s in rng:
            for a in rng:
                put(mixed, (r, s, a, 0), V[(r, s, a)].mul_ground(I))
                for b in rng:
                    put(mixed, (r, s, a, b), S[(r, s, a, b)] * eps(b))
            put(mixed, (r, s, bot, 0), U[(r, s)])
            for b in rng:
                put(mixed, (r, s, bot, b), conjugate(V[(s, r, b)]).mul_ground(-I) * eps(b))
        for a in rng:
            put(hol0, (r, a, 0), Q[(a, r)])
            put(ahol0, (r, a, 0), U[(a, r)].mul_ground(-I))
            for b in rng:
                put(hol0, (r, a, b), V[(r, b, a)] * eps(b))
                put(ahol0, (r, a, b), -conjugate(V[(b, a, r)]) * eps(b))
        put(hol0, (r, bot, 0), Y[(r,)])
        put(ahol0, (r, bot, 0), -conjugate(Y[(r,)]))
        for b in rng:
            put(hol0, (r, bot, b), U[(r, b)].mul_ground(-I) * eps(b))
            put(ahol0, (r, bot, b), -conjugate(Q[(r, b)]) * eps(b))
    return {
        "rho_sigmabar": Field(sig, Weight(0, 0), kinds_mixed, mixed),
        "rho_0": Field(sig, Weight(-1, -1), kinds_hol0, hol0),
        "rhobar_0": Field(sig, Weight(-1, -1), kinds_ahol0, ahol0),
    }


def tractor_curvature(st: PHStructure) -> TractorCurvature:
    """S, V, U, Q, Y of st from its curvature data and hatted derivatives, plus the blocks of Omega."""
    sig = st.sig
    n = sig.n
    rng = range(1, n + 1)
    eps = sig.sign
    R = sig.ring
    data = curvature_data(st)
    conn = connection_for(st)
    S = chern_tensor(sig, data.R, data.P_ab)
    dA_bar = conn.ahol(data.A)
    dP = conn.hol(data.P_ab)
    T_bar = data.T.conjugate()
    dTbar_hol = conn.hol(T_bar)
    dT_ahol = conn.ahol(data.T)
    dA_zero = conn.zero(data.A)
    dT_hol = conn.hol(data.T)
    dT_zero = conn.zero(data.T)
    dS_hol = conn.hol(data.S)
    V: Dict[Key, PolyElement] = {}
    U: Dict[Key, PolyElement] = {}
    Q: Dict[Key, PolyElement] = {}
    Y: Dict[Key, PolyElement] = {}
    for a in rng:
        for b in rng:
            for r in rng:
                val = dA_bar[(a, r, b)] + dP[(a, b, r)].mul_ground(I)
                val = val - (data.t(r) * _levi(sig, a, b)).mul_ground(I)
                val = val - (data.t(a) * _levi(sig, r, b)).mul_ground(2 * I)
                V[(a, b, r)] = val
            u_val = dTbar_hol[(b, a)] + dT_ahol[(a, b)] + data.s() * _levi(sig, a, b)
            q_val = dA_zero[(a, b)].mul_ground(I) - dT_hol[(a, b)].mul_ground(2 * I)
            for g in rng:
                u_val = u_val + data.p(a, g) * data.p(g, b) * eps(g)
                u_val = u_val - data.a(a, g) * conjugate(data.a(g, b)) * eps(g)
                q_val = q_val + data.p(a, g) * data.a(g, b) * (2 * eps(g))
            U[(a, b)] = u_val
            Q[(a, b)] = q_val
        y_val = dT_zero[(a,)] - dS_hol[(a,)].mul_ground(I)
        for g in rng:
            y_val = y_val + (data.p(a, g) * data.t(g)).mul_ground(2 * I) * eps(g)
            y_val = y_val - data.a(a, g) * conjugate(data.t(g)) * (3 * eps(g))
        Y[(a,)] = y_val
    hol, ahol = IndexKind.HOL_DOWN, IndexKind.AHOL_DOWN
    V_f = Field(sig, Weight(0, 0), (hol, ahol, hol), V)
    U_f = Field(sig, Weight(-1, -1), (hol, ahol), U)
    Q_f = Field(sig, Weight(-1, -1), (hol, hol), Q)
    Y_f = Field(sig, Weight(-2, -2), (hol,), Y)
    return TractorCurvature(S, V_f, U_f, Q_f, Y_f, _omega_blocks(sig, S, V_f, U_f, Q_f, Y_f))


def synthetic_curvature(sig: Signature, rng: np.random.Generator, degree: int = 1) -> Tuple[Field, Field]:
    """
    Random curvature-type data (R_{ab r s} with the unbarred/barred swap
    symmetries and Hermitian symmetry) and the Schouten tensor it defines.

    Returns:
        (R, P_ab) as Fields
    """
    n = sig.n
    R_ring = sig.ring
    idx = range(1, n + 1)
    X = {(a, b, r, s): random_poly(R_ring, rng, degree=degree, terms=2)
         for a in idx for b in idx for r in idx for s in idx}
    R1 = {(a, b, r, s): X[(a, b, r, s)] + X[(r, b, a, s)] + X[(a, s, r, b)] + X[(r, s, a, b)]
          for (a, b, r, s) in X}
    curv = {(a, b, r, s): R1[(a, b, r, s)] + conjugate(R1[(b, a, s, r)]) for (a, b, r, s) in X}
    ric = {(a, b): sum((curv[(a, b, r, r)] * sig.sign(r) for r in idx), R_ring.zero) for a in idx for b in idx}
    scalar = sum((ric[(a, a)] * sig.sign(a) for a in idx), R_ring.zero)
    inv = QQ_I(sympy.Rational(1, n + 2), 0)
    scal_coeff = QQ_I(sympy.Rational(1, 2 * (n + 1)), 0)
    P_ab = {}
    for a in idx:
        for b in idx:
            val = ric[(a, b)]
            if a == b:
                val = val - scalar.mul_ground(scal_coeff) * sig.sign(a)
            P_ab[(a, b)] = val.mul_ground(inv)
    hol, ahol = IndexKind.HOL_DOWN, IndexKind.AHOL_DOWN
    return (Field(sig, Weight(1, 1), (hol, ahol, hol, ahol), curv),
            Field(sig, Weight(0, 0), (hol, ahol), P_ab))


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

def random_tractor(sig: Signature, weight: Weight, kinds: Sequence[IndexKind], rng: np.random.Generator,
                   degree: int = 2) -> Field:
    template = Field(sig, weight, kinds)
    comps = {key: random_poly(sig.ring, rng, degree=degree, terms=2) for key in template.all_keys()}
    return Field(sig, weight, kinds, comps)


def verify_transport(st: PHStructure, rng: np.random.Generator) -> List[CheckResult]:
    """M_U fixes Z_A, preserves the tractor metric and is inverted by M_{-U}."""
    sig = st.sig
    Z = canonical_tractor(sig)
    u = random_tractor(sig, Weight(0, 0), (TRAC,), rng)
    v = random_tractor(sig, Weight(0, 0), (TRAC,), rng)
    up = random_tractor(sig, Weight(0, 0), (IndexKind.TRAC_UP,), rng)
    results = [
        check_equal("M_U fixes Z_A", "canonical tractor invariance", transport(st, Z), Z),
        check_equal("M_U preserves the tractor metric", "invariant Hermitian metric",
                    pairing(transport(st, u), transport(st, v)), pairing(u, v)),
        check_equal("inverse transport", "transport inverse", transport(st, transport(st, u), inverse=True), u),
        check_equal("inverse transport (upper)", "transport inverse",
                    transport(st, transport(st, up), inverse=True), up),
    ]
    both = tensor(u, up)
    moved = transport(st, both)
    results.append(check_equal("contraction is realization independent", "transport of dual slots",
                               contract(moved, 0, 1), contract(both, 0, 1)))
    return results


def verify_tractor_connection(st: PHStructure, rng: np.random.Generator) -> List[CheckResult]:
    """Parallel metric, vanishing curvature through commutators, and invariance on H components."""
    sig = st.sig
    n = sig.n
    conn = tractor_connection_for(st)
    results: List[CheckResult] = []
    for label, part in zip(("hol", "antihol", "transverse"), conn.triple(tractor_metric(sig))):
        results.append(check_zero(f"tractor metric parallel ({label})", "parallel tractor metric", part))

    v = random_tractor(sig, Weight(0, 0), (TRAC,), rng)
    d_hol, d_ahol, d_zero = conn.triple(v)
    hh = conn.hol(d_hol)
    results.append(check_equal("tractor [nabla_a, nabla_b]", "flat tractor connection",
                               hh, hh.permute_slots([0, 2, 1])))
    ha = conn.hol(d_ahol)
    ah = conn.ahol(d_hol)
    lhs2, rhs2 = {}, {}
    for key, comp in ha.items():
        A, b, a = key
        _accumulate(lhs2, (A, a, b), comp)
    for key, comp in ah.items():
        _accumulate(lhs2, key, -comp)
    for (A,), comp in d_zero.items():
        for a in range(1, n + 1):
            rhs2[(A, a, a)] = comp.mul_ground(-I) * sig.sign(a)
    kinds2 = (TRAC, IndexKind.HOL_DOWN, IndexKind.AHOL_DOWN)
    results.append(check_equal("tractor [nabla_a, nabla_bbar]", "flat tractor connection",
                               Field(sig, v.weight, kinds2, lhs2), Field(sig, v.weight, kinds2, rhs2)))
    hz = conn.hol(d_zero)
    zh = conn.zero(d_hol)
    data = conn.curvature
    rhs3: Dict[Key, PolyElement] = {}
    for (A, g), comp in d_ahol.items():
        for a in range(1, n + 1):
            coeff = data.a(a, g)
            if coeff:
                _accumulate(rhs3, (A, a), comp * coeff * sig.sign(g))
    kinds3 = (TRAC, IndexKind.HOL_DOWN)
    results.append(check_equal("tractor [nabla_a, nabla_0]", "flat tractor connection",
                               hz - zh,
                               Field(sig, hz.weight, kinds3, rhs3)))

    base_conn = tractor_connection_for(base_structure(st))
    moved = transport(st, v)
    results.append(check_equal("connection invariance (hol)", "tractor connection invariance",
                               conn.hol(moved), transport(st, base_conn.hol(v))))
    results.append(check_equal("connection invariance (antihol)", "tractor connection invariance",
                               conn.ahol(moved), transport(st, base_conn.ahol(v))))
    raised = raise_lower(v, 0)
    results.append(check_equal("raising commutes with nabla", "tractor metric compatibility",
                               raise_lower(conn.hol(v), 0), conn.hol(raised)))
    return results


def verify_d_operator(st: PHStructure, weight: Weight, rng: np.random.Generator) -> List[CheckResult]:
    """DZ, D_A D^A = 0, the splitting of D, box - boxbar, resonance and D invariance."""
    sig = st.sig
    n = sig.n
    f = random_density(sig, weight, rng, degree=3)
    w, wp = weight.w, weight.wp
    results: List[CheckResult] = []

    dz = contract(tractor_D(st, canonical_multiply(f, upper=True)), 0, 1)
    factor = as_scalar((n + w + wp + 2) * (n + w + 1))
    results.append(check_equal(f"D_A Z^A f on {weight}", "D applied to Z^A", dz, f.scale(factor)))

    dd = contract(tractor_D(st, tractor_D_upper(st, f)), 0, 1)
    results.append(check_zero(f"D_A D^A f on {weight}", "D_A D^A vanishes", dd))

    Df = tractor_D(st, f)
    split = tilde_D(st, f).scale(as_scalar(n + w + wp)) - canonical_multiply(box(st, f))
    results.append(check_equal(f"D = (n+w+w') D~ - Z box on {weight}", "D splitting", Df, split))

    expected = {
        "D_A": (Df, weight.shift(-1, 0)),
        "D_Abar": (tractor_D_bar(st, f), weight.shift(0, -1)),
        "D~_A": (tilde_D(st, f), weight.shift(-1, 0)),
        "box": (box(st, f), weight.shift(-1, -1)),
        "boxbar": (box_bar(st, f), weight.shift(-1, -1)),
        "D_A Z^A": (dz, weight),
    }
    for label, (value, target) in expected.items():
        results.append(check_weight(f"weight of {label} f on {weight}", "output weights", value, target))

    conn = tractor_connection_for(st)
    diff = box(st, f) - box_bar(st, f)
    # nabla_0 and P carry weight (-1,-1); the frame components do not
    rhs = _with_weight(conn.zero(f).scale(I), diff.weight)
    P = conn.curvature.trace()
    if P:
        rhs = rhs + _with_weight(f.scale(P), diff.weight).scale(as_scalar((wp - w) / sympy.Integer(n + 2)))
    results.append(check_equal(f"box - boxbar on {weight}", "box minus conjugate box",
                               diff, rhs.scale(as_scalar(n + w + wp))))

    moved = transport(st, tractor_D(base_structure(st), f))
    results.append(check_equal(f"D invariance on {weight}", "D invariance", moved, Df))
    moved_bar = transport(st, tractor_D_bar(base_structure(st), f))
    results.append(check_equal(f"Dbar invariance on {weight}", "D invariance", moved_bar, tractor_D_bar(st, f)))
    return results


def verify_box_resonance(st: PHStructure, weight: Weight, rng: np.random.Generator) -> List[CheckResult]:
    """At n+w+w' = 0: box = boxbar, and box agrees with its base-realization version."""
    sig = st.sig
    if sig.n + weight.total() != 0:
        raise CalculusError(f"Weight {weight} is not resonant for n={sig.n}")
    f = random_density(sig, weight, rng, degree=3)
    b = box(st, f)
    return [
        check_equal(f"box = boxbar on {weight}", "box equals its conjugate at resonance", b, box_bar(st, f)),
        check_equal(f"box invariance on {weight}", "box invariance at resonance", b, box(base_structure(st), f)),
    ]


def verify_tractor_curvature(st: PHStructure) -> List[CheckResult]:
    tc = tractor_curvature(st)
    results = [check_zero(f"tractor curvature {name} vanishes", "curvature of a CR flat structure", value)
               for name, value in tc.tensors().items()]
    for name, block in tc.omega.items():
        results.append(check_zero(f"Omega block {name} vanishes", "curvature of a CR flat structure", block))
    return results


def verify_synthetic_curvature(sig: Signature, rng: np.random.Generator) -> List[CheckResult]:
    """
    Algebraic properties of S for random curvature-type data: trace-free,
    symmetric in the unbarred pair, Hermitian, and the S block of the trace
    of Omega vanishes.
    """
    curv, P_ab = synthetic_curvature(sig, rng)
    S = chern_tensor(sig, curv, P_ab)
    idx = range(1, sig.n + 1)
    R = sig.ring
    trace_ok = all(
        not sum((S[(a, a, r, s)] * sig.sign(a) for a in idx), R.zero)
        for r in idx for s in idx
    )
    sym_ok = all(not (S[(a, b, r, s)] - S[(r, b, a, s)]) for a in idx for b in idx for r in idx for s in idx)
    herm_ok = all(not (S[(a, b, r, s)] - conjugate(S[(b, a, s, r)]))
                  for a in idx for b in idx for r in idx for s in idx)
    omega_trace = all(
        not sum((S[(r, r, a, b)] * sig.sign(r) * sig.sign(b) for r in idx), R.zero)
        for a in idx for b in idx
    )
    return [
        check_true("S trace-free", "S tensor trace", trace_ok),
        check_true("S symmetric in unbarred pair", "S tensor symmetry", sym_ok),
        check_true("S Hermitian", "S tensor symmetry", herm_ok),
        check_true("Omega trace S block", "trace of tractor curvature", omega_trace),
    ]


def verify_flat_tractor_identities(sig: Signature, weights: Sequence[Weight], rng: np.random.Generator,
                                   k_max: int = 4) -> List[CheckResult]:
    """
    Flat-structure identities on random densities and tractors:
    commuting D's, [box, Z_A] = D~_A, [box, D~_A] = 0 and
    [box^k, Z_A] = k box^{k-1} D~_A.
    """
    st = PHStructure.flat(sig)
    results: List[CheckResult] = []
    for weight in weights:
        f = random_density(sig, weight, rng, degree=3)
        DD = tractor_D(st, tractor_D(st, f))
        results.append(check_equal(f"[D_B, D_C] on {weight}", "commuting D operators", DD, DD.permute_slots([1, 0])))
        DDb = tractor_D(st, tractor_D_bar(st, f))
        DbD = tractor_D_bar(st, tractor_D(st, f))
        results.append(check_equal(f"[D_B, D_Cbar] on {weight}", "commuting D operators",
                                   DDb, DbD.permute_slots([1, 0])))
        DbDb = tractor_D_bar(st, tractor_D_bar(st, f))
        results.append(check_equal(f"[D_Bbar, D_Cbar] on {weight}", "commuting D operators",
                                   DbDb, DbDb.permute_slots([1, 0])))

        samples = (f, random_tractor(sig, weight, (TRAC,), rng, degree=3))
        for g in samples:
            label = "tractor" if g.kinds else "density"
            lhs = box(st, canonical_multiply(g)) - canonical_multiply(box(st, g))
            results.append(check_equal(f"[box, Z_A] on {label} {weight}", "box commutator with Z",
                                       lhs, tilde_D(st, g)))
            box_of_tilde = box(st, tilde_D(st, g))
            results.append(check_equal(f"[box, D~_A] on {label} {weight}", "box commutes with D~",
                                       box_of_tilde, tilde_D(st, box(st, g))))

        for g in samples:
            label = "tractor" if g.kinds else "density"
            for k in range(1, k_max + 1):
                lhs = box_power(st, canonical_multiply(g), k) - canonical_multiply(box_power(st, g, k))
                rhs = box_power(st, tilde_D(st, g), k - 1).scale(k)
                results.append(check_equal(f"[box^{k}, Z_A] on {label} {weight}", "box powers against Z", lhs, rhs))
                results.append(check_weight(f"weight of [box^{k}, Z_A] on {label} {weight}", "output weights",
                                            lhs, weight.shift(-k, 1 - k)))
    logger.info(f"Flat tractor identities: {sum(r.passed for r in results)}/{len(results)} passed for n={sig.n}")
    return results
