"""
Verification Agent: runs identity suites against the CR calculus engine
and reports pass/fail records.

Main entry point: run_verification_agent()
"""

from .verifier import run_verification_agent

__all__ = ["run_verification_agent"]
