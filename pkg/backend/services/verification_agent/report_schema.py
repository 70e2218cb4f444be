# report_schema.py
"""
Pydantic models for verification requests and reports.
"""

from typing import Any, Dict, List, Literal, Optional

import sympy
from pydantic import BaseModel, ValidationError, field_validator, model_validator

from backend.services.cr_calculus.heisenberg import Signature, Weight
from backend.services.cr_calculus.scalars import CalculusError

SUITE_IDS = (
    "dencomm",
    "transform-laws",
    "tractor-flat",
    "tractor-invariance",
    "curvature-vanishing",
    "flatgoody",
    "operator-invariance",
    "adjoint",
    "q3d",
    "ambient",
    "obstruction",
    "all",
)


def _rational(text: str) -> sympy.Rational:
    try:
        value = sympy.Rational(text)
    except (TypeError, ValueError) as e:
        raise ValueError(f"not an exact rational: {text!r}") from e
    return value


class SuiteParameters(BaseModel):
    """Parameters shared by the verify, op and matrix commands."""

    suite: str = "all"
    n: int = 1
    signature: Optional[List[int]] = None
    w: Optional[str] = None
    wp: Optional[str] = None
    k: Optional[int] = None
    k_max: Optional[int] = None
    pattern: Optional[str] = None
    upsilon: Optional[str] = None
    seed: Optional[int] = None
    degree: int = 4

    @field_validator("suite")
    @classmethod
    def known_suite(cls, v: str) -> str:
        if v not in SUITE_IDS:
            raise ValueError(f"unknown suite {v!r}; expected one of {', '.join(SUITE_IDS)}")
        return v

    @field_validator("n")
    @classmethod
    def positive_dimension(cls, v: int) -> int:
        if v < 1:
            raise ValueError("n must be at least 1")
        return v

    @field_validator("signature")
    @classmethod
    def unit_signs(cls, v: Optional[List[int]]) -> Optional[List[int]]:
        if v is not None and any(e not in (1, -1) for e in v):
            raise ValueError(f"signature entries must be +1 or -1, got {v}")
        return v

    @field_validator("w", "wp")
    @classmethod
    def exact_weight(cls, v: Optional[str]) -> Optional[str]:
        if v is not None:
            _rational(v)
        return v

    @field_validator("k", "k_max")
    @classmethod
    def positive_order(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 1:
            raise ValueError("orders must be positive")
        return v

    @model_validator(mode="after")
    def consistent(self) -> "SuiteParameters":
        if self.signature is not None and len(self.signature) != self.n:
            raise ValueError(f"signature has {len(self.signature)} entries but n={self.n}")
        if (self.w is None) != (self.wp is None):
            raise ValueError("w and wp must be given together")
        if self.w is not None:
            diff = _rational(self.w) - _rational(self.wp)
            if not diff.is_integer:
                raise ValueError(f"w - w' = {diff} is not an integer")
        return self

    def sig(self) -> Signature:
        return Signature.of(self.n, self.signature)

    def weight(self) -> Optional[Weight]:
        if self.w is None:
            return None
        try:
            return Weight(_rational(self.w), _rational(self.wp))
        except CalculusError as e:
            raise ValueError(str(e)) from e


class CheckRecord(BaseModel):
    name: str
    anchor: str
    status: Literal["pass", "fail"]
    witness: Optional[str] = None


class Report(BaseModel):
    suite: str
    parameters: Dict[str, Any]
    checks: List[CheckRecord]
    passed: int
    failed: int
    elapsed_seconds: float
    notes: List[str] = []

    @property
    def all_passed(self) -> bool:
        return self.failed == 0


def validate_parameters(data: Dict[str, Any]) -> SuiteParameters:
    """Validate a raw parameter mapping (CLI namespace or JSON body)."""
    try:
        return SuiteParameters(**{k: v for k, v in data.items() if v is not None})
    except ValidationError as e:
        raise ValueError(f"Parameter validation error: {e}")
