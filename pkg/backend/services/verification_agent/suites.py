# suites.py
"""
One function per verification suite.

Every suite takes a SuiteContext and returns the list of CheckResult
records produced by the engine; notes collect the conventions a reader
needs to reproduce constants (boundary identification, ratios).
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import sympy

from backend.services.cr_calculus.ambient import DefiningFunction, verify_ambient, verify_obstruction
from backend.services.cr_calculus.checks import CheckResult, check_true
from backend.services.cr_calculus.heisenberg import IndexKind, Signature, Weight, frame_self_check, is_natural
from backend.services.cr_calculus.invariant_ops import (
    IndexPattern,
    verify_factorization,
    verify_flatgoody,
    verify_integration_by_parts,
    verify_operator_invariance,
    verify_pattern_independence,
    verify_q_curvature,
    verify_self_adjoint,
    verify_special_k2,
    weights_for_order,
)
from backend.services.cr_calculus.scalars import CalculusError, parse_real_poly, scalar_to_str
from backend.services.cr_calculus.structures import (
    PHStructure,
    compose_rescalings,
    random_density,
    verify_curvature_symmetries,
    verify_dencomm,
    verify_leibniz,
    verify_transformation_laws,
)
from backend.services.cr_calculus.tractor import (
    random_tractor,
    verify_box_resonance,
    verify_d_operator,
    verify_flat_tractor_identities,
    verify_synthetic_curvature,
    verify_tractor_connection,
    verify_tractor_curvature,
    verify_transport,
)
from backend.services.verification_agent.report_schema import SuiteParameters

logger = logging.getLogger(__name__)


@dataclass
class SuiteContext:
    params: SuiteParameters
    sig: Signature
    rng: np.random.Generator
    conventions: Dict[str, Any]
    notes: List[str] = field(default_factory=list)

    @property
    def k_max(self) -> int:
        return self.params.k_max or int(self.conventions.get("k_max", 3))

    @property
    def flat_identity_k_max(self) -> int:
        return self.params.k_max or int(self.conventions.get("flat_identity_k_max", 4))

    def upsilons(self) -> List[Any]:
        if self.params.upsilon:
            texts = [self.params.upsilon]
        else:
            samples = self.conventions.get("upsilon_samples", {})
            texts = samples.get(str(self.sig.n)) or [" + ".join(f"z{a}*zb{a}" for a in range(1, self.sig.n + 1))]
        return [parse_real_poly(text, self.sig.ring) for text in texts]

    def structures(self, include_flat: bool = True) -> List[PHStructure]:
        out = [PHStructure.flat(self.sig)] if include_flat else []
        ups = self.upsilons()
        out.extend(PHStructure(self.sig, u) for u in ups)
        if len(ups) > 1 and not self.params.upsilon:
            out.append(PHStructure(self.sig, ups[1], base=PHStructure(self.sig, ups[0])))
        return out

    def pattern(self, k: int) -> Optional[IndexPattern]:
        return IndexPattern.parse(self.params.pattern, k) if self.params.pattern else None

    def weights_for(self, k: int) -> List[Weight]:
        """Sampled weights of order k; N0 x N0 has no invariant power and is skipped."""
        given = self.params.weight()
        if given is not None:
            return [given] if self.sig.n + given.total() + 1 == k else []
        samples = self.conventions.get("weight_samples", {}).get(str(k), ["1/2"])
        weights = weights_for_order(self.sig.n, k, [sympy.Rational(s) for s in samples])
        return [wt for wt in weights if not (is_natural(wt.w) and is_natural(wt.wp))]

    def density_weights(self) -> List[Weight]:
        """Generic weights plus the two where a factor of D_A Z^A vanishes."""
        given = self.params.weight()
        if given is not None:
            return [given]
        n = self.sig.n
        half = sympy.Rational(1, 2)
        return [
            Weight(0, 0),
            Weight(half, -half),
            Weight(2, -1),
            Weight(-half, 3 * half),
            Weight(-n - 1, 0),
            Weight(-1, -n - 1),
        ]

    def orders(self, cap: Optional[int] = None) -> List[int]:
        if self.params.k is not None:
            return [self.params.k]
        given = self.params.weight()
        if given is not None:
            return [int(self.sig.n + given.total() + 1)]
        top = self.k_max if cap is None else min(self.k_max, cap)
        return list(range(1, top + 1))


def suite_dencomm(ctx: SuiteContext) -> List[CheckResult]:
    results: List[CheckResult] = []
    sig = ctx.sig
    for st in ctx.structures():
        for weight in ctx.density_weights():
            f = random_density(sig, weight, ctx.rng)
            results.extend(verify_dencomm(st, f))
        F = random_density(sig, Weight(1, 0), ctx.rng, degree=2)
        G = random_tractor(sig, Weight(0, 1), (IndexKind.HOL_DOWN,), ctx.rng)
        results.extend(verify_leibniz(st, F, G))
    ups = ctx.upsilons()
    if len(ups) > 1:
        f = random_density(sig, ctx.density_weights()[0], ctx.rng, degree=2)
        results.extend(compose_rescalings(sig, ups[0], ups[1], fields=[f]))
    return results


def suite_transform_laws(ctx: SuiteContext) -> List[CheckResult]:
    results = [check_true("frame commutators", "Heisenberg frame", frame_self_check(ctx.sig))]
    for st in ctx.structures():
        results.extend(verify_curvature_symmetries(st))
        results.extend(verify_transformation_laws(st))
    return results


def suite_tractor_flat(ctx: SuiteContext) -> List[CheckResult]:
    results = verify_flat_tractor_identities(ctx.sig, ctx.density_weights(), ctx.rng, k_max=ctx.flat_identity_k_max)
    results.extend(verify_tractor_connection(PHStructure.flat(ctx.sig), ctx.rng))
    return results


def suite_tractor_invariance(ctx: SuiteContext) -> List[CheckResult]:
    results: List[CheckResult] = []
    n = ctx.sig.n
    for st in ctx.structures(include_flat=False):
        results.extend(verify_transport(st, ctx.rng))
        results.extend(verify_tractor_connection(st, ctx.rng))
        for weight in ctx.density_weights():
            results.extend(verify_d_operator(st, weight, ctx.rng))
        resonant = Weight(sympy.Rational(1, 2), -n - sympy.Rational(1, 2))
        results.extend(verify_box_resonance(st, resonant, ctx.rng))
    return results


def suite_curvature_vanishing(ctx: SuiteContext) -> List[CheckResult]:
    results: List[CheckResult] = []
    for st in ctx.structures():
        results.extend(verify_tractor_curvature(st))
    results.extend(verify_synthetic_curvature(ctx.sig, ctx.rng))
    return results


def suite_flatgoody(ctx: SuiteContext) -> List[CheckResult]:
    results: List[CheckResult] = []
    for k in ctx.orders():
        weights = ctx.weights_for(k)
        if not weights:
            continue
        results.extend(verify_flatgoody(ctx.sig, k, weights, ctx.rng))
        results.extend(verify_factorization(ctx.sig, weights[0]))
        if k <= 3:
            results.extend(verify_pattern_independence(ctx.sig, weights[0]))
    return results


def suite_operator_invariance(ctx: SuiteContext) -> List[CheckResult]:
    results: List[CheckResult] = []
    structures = ctx.structures(include_flat=False)
    for k in ctx.orders():
        for weight in ctx.weights_for(k):
            for st in structures:
                results.extend(verify_operator_invariance(st, weight, ctx.pattern(k)))
    return results


def suite_adjoint(ctx: SuiteContext) -> List[CheckResult]:
    results: List[CheckResult] = []
    structures = ctx.structures()
    for k in ctx.orders():
        for weight in ctx.weights_for(k):
            for st in structures:
                results.extend(verify_self_adjoint(st, weight, ctx.pattern(k)))
    for st in structures:
        for weight in ctx.density_weights()[:2]:
            results.extend(verify_integration_by_parts(st, weight, ctx.rng))
    return results


def suite_q3d(ctx: SuiteContext) -> List[CheckResult]:
    if ctx.sig.n != 1:
        raise CalculusError("The q3d suite is defined for n=1")
    results: List[CheckResult] = []
    weights = [Weight(0, 0), Weight(2, -2), Weight(-1, 1)]
    for st in ctx.structures():
        results.extend(verify_special_k2(st, weights))
        results.extend(verify_q_curvature(st))
    return results


def suite_ambient(ctx: SuiteContext) -> List[CheckResult]:
    weights = [Weight(sympy.Rational(w), sympy.Rational(wp)) for w, wp in ctx.conventions.get("ambient_weights", [])]
    scat = [sympy.Rational(s) for s in ctx.conventions.get("scat_weights", ["0"])]
    results: List[CheckResult] = []
    for df in (DefiningFunction.heisenberg_type(ctx.sig), DefiningFunction.hyperquadric(ctx.sig)):
        ctx.notes.append(f"{df.kind}: J(phi) = {scalar_to_str(df.J.numer.LC / df.J.denom.LC)}")
        results.extend(verify_ambient(df, ctx.rng, weights=weights, scat_weights=scat))
    return results


def suite_obstruction(ctx: SuiteContext) -> List[CheckResult]:
    df = DefiningFunction.heisenberg_type(ctx.sig)
    ctx.notes.append("boundary identification: t = s/2 with z{n+1} = s + i(sum eps |z|^2 + phi)")
    samples = int(ctx.conventions.get("obstruction_samples", 5))
    results: List[CheckResult] = []
    for k in ctx.orders(cap=2):
        for weight in ctx.weights_for(k)[:1]:
            checks, ratio = verify_obstruction(df, weight, k, ctx.rng, samples=samples)
            results.extend(checks)
            if ratio is not None:
                ctx.notes.append(f"obstruction constant on {weight}, k={k}: {scalar_to_str(ratio)}")
    return results


SUITES: Dict[str, Callable[[SuiteContext], List[CheckResult]]] = {
    "dencomm": suite_dencomm,
    "transform-laws": suite_transform_laws,
    "tractor-flat": suite_tractor_flat,
    "tractor-invariance": suite_tractor_invariance,
    "curvature-vanishing": suite_curvature_vanishing,
    "flatgoody": suite_flatgoody,
    "operator-invariance": suite_operator_invariance,
    "adjoint": suite_adjoint,
    "q3d": suite_q3d,
    "ambient": suite_ambient,
    "obstruction": suite_obstruction,
}
