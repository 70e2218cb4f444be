# verifier.py
"""
Orchestration for the Verification Agent.

Runs the named identity suites against the CR calculus engine and builds
a Report; also serves operator printing and operator matrices for the
CLI and the Flask service.
"""

import json
import logging
import os
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

from backend.services.cr_calculus.checks import CheckResult
from backend.services.cr_calculus.config import load_conventions
from backend.services.cr_calculus.diffop import DiffOp
from backend.services.cr_calculus.invariant_ops import (
    IndexPattern,
    build_invariant_operator,
    default_pattern,
    folland_stein_factorize,
    matrix_to_strings,
    operator_matrix,
    order_k,
    special_L00,
)
from backend.services.cr_calculus.scalars import (
    CalculusError,
    make_rng,
    parse_real_poly,
    scalar_to_str,
)
from backend.services.cr_calculus.structures import PHStructure
from backend.services.verification_agent.report_schema import CheckRecord, Report, SuiteParameters
from backend.services.verification_agent.suites import SUITES, SuiteContext

logger = logging.getLogger(__name__)

CATALOG_PATH = Path(__file__).parent / "config" / "suite_catalog.json"


class VerificationAgent:
    """
    Runs verification suites and operator queries with fixed conventions.
    """

    def __init__(self, catalog_path: Optional[str] = None, conventions_path: Optional[str] = None):
        """
        Initialize the agent.

        Args:
            catalog_path (str, optional): Path to the suite catalog JSON file
            conventions_path (str, optional): Path to the engine conventions JSON file
        """
        self.logger = logging.getLogger(__name__)
        self.conventions = load_conventions(conventions_path)
        self.catalog_path = Path(catalog_path) if catalog_path else CATALOG_PATH
        self.catalog = self._load_catalog()
        self.logger.info(f"Verification Agent initialized with {len(self.catalog.get('suites', []))} suites")

    def _load_catalog(self) -> Dict[str, Any]:
        """Load the suite catalog, falling back to the registered suites."""
        try:
            if self.catalog_path.exists():
                with open(self.catalog_path, "r", encoding="utf-8") as f:
                    return json.load(f)
            self.logger.warning(f"Suite catalog not found at {self.catalog_path}")
        except (OSError, json.JSONDecodeError) as e:
            self.logger.error(f"Failed to load suite catalog: {str(e)}")
        return {
            "suites": [{"id": s, "description": s, "anchor": s} for s in SUITES],
            "all": list(SUITES),
            "three_dimensional_only": ["q3d"],
        }

    def default_seed(self) -> int:
        env = os.getenv("CR_VERIFIER_SEED")
        if env:
            try:
                return int(env)
            except ValueError:
                self.logger.warning(f"Ignoring non-integer CR_VERIFIER_SEED={env!r}")
        return int(self.conventions.get("default_seed", 7))

    def _expand(self, suite: str, n: int) -> List[str]:
        if suite != "all":
            return [suite]
        skip = set(self.catalog.get("three_dimensional_only", [])) if n != 1 else set()
        return [s for s in self.catalog.get("all", list(SUITES)) if s not in skip]

    def run(self, params: SuiteParameters) -> Report:
        """
        Run the requested suite (or every suite for 'all').

        Returns:
            Report with one CheckRecord per identity check

        Raises:
            CalculusError: on inadmissible parameters for the chosen suite
        """
        seed = params.seed if params.seed is not None else self.default_seed()
        sig = params.sig()
        start = time.perf_counter()
        checks: List[CheckResult] = []
        notes: List[str] = []
        if params.suite == "all" and sig.n != 1:
            notes.append("q3d skipped: defined for n=1")
        for suite in self._expand(params.suite, sig.n):
            suite_start = time.perf_counter()
            self.logger.info(f"Running suite {suite} for n={sig.n}, seed={seed}")
            ctx = SuiteContext(params, sig, make_rng(seed), self.conventions)
            results = SUITES[suite](ctx)
            notes.extend(ctx.notes)
            checks.extend(results)
            passed = sum(1 for r in results if r.passed)
            self.logger.info(
                f"Suite {suite}: {passed}/{len(results)} passed in {time.perf_counter() - suite_start:.2f}s"
            )
        records = [CheckRecord(**r.to_dict()) for r in checks]
        failed = sum(1 for r in records if r.status == "fail")
        parameters = params.model_dump()
        parameters["seed"] = seed
        return Report(
            suite=params.suite,
            parameters=parameters,
            checks=records,
            passed=len(records) - failed,
            failed=failed,
            elapsed_seconds=round(time.perf_counter() - start, 3),
            notes=notes,
        )

    # -- operators ----------------------------------------------------------------

    def _structure(self, params: SuiteParameters) -> PHStructure:
        sig = params.sig()
        if params.upsilon:
            return PHStructure(sig, parse_real_poly(params.upsilon, sig.ring))
        return PHStructure.flat(sig)

    def build_operator(self, params: SuiteParameters) -> Dict[str, Any]:
        """
        Build the invariant operator for the requested weight.

        The n+w+w' = 1 case with (w,w') in N0 x N0 goes through the special
        k=2 path.
        """
        weight = params.weight()
        if weight is None:
            raise CalculusError("Operator queries need --w and --wp")
        st = self._structure(params)
        n = st.n
        k = order_k(n, weight)
        if params.pattern:
            pattern = IndexPattern.parse(params.pattern, k)
            return {"op": build_invariant_operator(st, weight, pattern), "path": f"pattern {pattern}", "k": k}
        try:
            pattern = default_pattern(n, weight)
        except CalculusError:
            if n + weight.total() == 1:
                return {"op": special_L00(st, weight), "path": "special k=2", "k": k}
            raise
        return {"op": build_invariant_operator(st, weight, pattern), "path": f"pattern {pattern}", "k": k}

    def operator(self, params: SuiteParameters) -> Dict[str, Any]:
        built = self.build_operator(params)
        op: DiffOp = built["op"]
        return {
            "n": params.n,
            "weight": [params.w, params.wp],
            "k": built["k"],
            "path": built["path"],
            "upsilon": params.upsilon or "0",
            "order": op.order(),
            "operator": str(op),
            "terms": op.to_records(),
        }

    def matrix(self, params: SuiteParameters) -> Dict[str, Any]:
        built = self.build_operator(params)
        op: DiffOp = built["op"]
        basis, M = operator_matrix(op, params.degree)
        names = [str(s) for s in op.ring.symbols]
        out: Dict[str, Any] = {
            "n": params.n,
            "weight": [params.w, params.wp],
            "degree": params.degree,
            "basis": [_monomial(names, m) for m in basis],
            "matrix": matrix_to_strings(M),
        }
        if not params.upsilon:
            alphas = folland_stein_factorize(op, params.sig(), built["k"])
            out["folland_stein"] = None if alphas is None else [scalar_to_str(a) for a in alphas]
        return out


def _monomial(names: List[str], exps: Any) -> str:
    parts = [name if e == 1 else f"{name}**{e}" for name, e in zip(names, exps) if e]
    return "*".join(parts) or "1"


# Global instance for convenience
_agent: Optional[VerificationAgent] = None


def run_verification_agent(params: Dict[str, Any]) -> Dict[str, Any]:
    """
    Convenience function to run a suite with the shared agent.

    Args:
        params (Dict): raw parameters (validated with SuiteParameters)

    Returns:
        Dict: the serialized Report
    """
    global _agent
    if _agent is None:
        _agent = VerificationAgent()
    report = _agent.run(SuiteParameters(**params))
    return report.model_dump()
