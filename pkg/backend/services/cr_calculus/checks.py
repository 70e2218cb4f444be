"""
Identity-check records shared by the engine modules.

Every verification routine returns a list of CheckResult; a failed check
carries a witness string instead of raising.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

from backend.services.cr_calculus.diffop import DiffOp
from backend.services.cr_calculus.heisenberg import Field, Weight, first_difference
from backend.services.cr_calculus.scalars import poly_to_str

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    anchor: str
    passed: bool
    witness: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "anchor": self.anchor,
            "status": "pass" if self.passed else "fail",
            "witness": self.witness,
        }


def _witness(lhs: Any, rhs: Any) -> Optional[str]:
    if isinstance(lhs, Field) and isinstance(rhs, Field):
        return first_difference(lhs, rhs)
    if isinstance(lhs, DiffOp) and isinstance(rhs, DiffOp):
        if lhs == rhs:
            return None
        diff = lhs - rhs
        m, c = diff.sorted_terms()[0]
        return f"multi-index {list(m)} differs by {poly_to_str(c)}"
    if not (lhs - rhs):
        return None
    return f"lhs={poly_to_str(lhs)} rhs={poly_to_str(rhs)}"


def check_equal(name: str, anchor: str, lhs: Any, rhs: Any) -> CheckResult:
    """Exact comparison of two Fields, DiffOps or polynomials."""
    witness = _witness(lhs, rhs)
    if witness is not None:
        logger.warning(f"Check '{name}' failed: {witness}")
    return CheckResult(name, anchor, witness is None, witness)


def check_zero(name: str, anchor: str, value: Field) -> CheckResult:
    witness = None
    if not value.is_zero():
        key = value.nonzero_keys()[0]
        witness = f"nonzero component {list(key)}: {value[key]}"
        logger.warning(f"Check '{name}' failed: {witness}")
    return CheckResult(name, anchor, witness is None, witness)


def check_weight(name: str, anchor: str, value: Field, expected: Weight) -> CheckResult:
    """Field equality ignores the weight tag; this compares it on its own."""
    witness = None
    if value.weight != expected:
        witness = f"weight {value.weight} expected {expected}"
        logger.warning(f"Check '{name}' failed: {witness}")
    return CheckResult(name, anchor, witness is None, witness)


def check_true(name: str, anchor: str, condition: bool, witness: Optional[str] = None) -> CheckResult:
    if not condition:
        logger.warning(f"Check '{name}' failed: {witness}")
    return CheckResult(name, anchor, bool(condition), None if condition else (witness or "condition is false"))


def all_passed(results: List[CheckResult]) -> bool:
    return all(r.passed for r in results)
