# test_verification_agent.py
"""
Tests for the verification agent and its command-line front end. Suite
execution is mocked where only the exit-code plumbing is under test.
"""

import json

import pytest
from unittest.mock import patch

from backend.services.cr_calculus.config import load_conventions
from backend.services.cr_calculus.heisenberg import Signature, is_natural
from backend.services.cr_calculus.invariant_ops import order_k
from backend.services.cr_calculus.scalars import make_rng
from backend.services.verification_agent.cli import format_report, main
from backend.services.verification_agent.report_schema import CheckRecord, Report, validate_parameters
from backend.services.verification_agent.suites import (
    SuiteContext,
    suite_adjoint,
    suite_operator_invariance,
    suite_tractor_flat,
)
from backend.services.verification_agent.verifier import VerificationAgent, run_verification_agent


def _report(failed: int) -> Report:
    checks = [CheckRecord(name="frame commutators", anchor="Heisenberg frame", status="pass")]
    if failed:
        checks.append(CheckRecord(name="box invariance", anchor="box invariance at resonance", status="fail",
                                  witness="component []: lhs=1 rhs=0"))
    return Report(suite="tractor-invariance", parameters={"n": 1}, checks=checks, passed=1, failed=failed,
                  elapsed_seconds=0.1)


def test_unknown_suite_is_usage_error(capsys):
    assert main(["verify", "nosuch"]) == 2
    assert "unknown suite" in capsys.readouterr().err


def test_inadmissible_weight_is_usage_error():
    assert main(["op", "--n", "1", "--w=1/2", "--wp", "0"]) == 2
    assert main(["op", "--n", "1", "--w", "0"]) == 2


def test_bad_flag_is_usage_error():
    assert main(["verify", "--format", "yaml"]) == 2


@patch("backend.services.verification_agent.cli.VerificationAgent")
def test_failed_check_exit_code(mock_agent, capsys):
    mock_agent.return_value.run.return_value = _report(failed=1)
    assert main(["verify", "tractor-invariance", "--n", "1"]) == 1
    out = capsys.readouterr().out
    assert "FAIL box invariance [box invariance at resonance]" in out
    assert "1 passed, 1 failed" in out


@patch("backend.services.verification_agent.cli.VerificationAgent")
def test_json_report(mock_agent, capsys):
    mock_agent.return_value.run.return_value = _report(failed=0)
    assert main(["verify", "--suite", "tractor-invariance", "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["failed"] == 0
    assert data["checks"][0]["anchor"] == "Heisenberg frame"


def test_special_operator_path(capsys):
    assert main(["op", "--n", "1", "--w", "0", "--wp", "0", "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["path"] == "special k=2"
    assert data["k"] == 2
    assert data["order"] == 4


def test_first_order_operator(capsys):
    assert main(["op", "--n", "1", "--w=-1/2", "--wp=-1/2", "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["k"] == 1
    assert data["order"] == 2
    assert data["weight"] == ["-1/2", "-1/2"]


def test_matrix_degree_zero(capsys):
    assert main(["matrix", "--n", "1", "--w", "0", "--wp", "-1", "--degree", "0", "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["basis"] == ["1"]
    assert data["matrix"] == [["0"]]
    assert data["folland_stein"] == ["-1"]


def test_matrix_csv(capsys):
    assert main(["matrix", "--n", "1", "--w", "0", "--wp", "-1", "--degree", "1", "--format", "csv"]) == 0
    rows = capsys.readouterr().out.strip().splitlines()
    assert rows[0] == ",1,zb1,z1"
    assert len(rows) == 4


def test_transform_laws_suite():
    out = run_verification_agent({"suite": "transform-laws", "n": 1, "seed": 3})
    assert out["failed"] == 0
    assert out["parameters"]["seed"] == 3
    assert all(c["status"] == "pass" for c in out["checks"])


def test_q3d_skipped_in_higher_dimension():
    agent = VerificationAgent()
    assert "q3d" not in agent._expand("all", 2)
    assert "q3d" in agent._expand("all", 1)


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("CR_VERIFIER_SEED", "41")
    assert VerificationAgent().default_seed() == 41
    monkeypatch.setenv("CR_VERIFIER_SEED", "many")
    assert VerificationAgent().default_seed() == 7


def test_parameter_validation():
    params = validate_parameters({"n": 2, "signature": [1, -1], "w": "1/2", "wp": "-1/2", "seed": None})
    assert params.sig().q == 1
    assert params.weight().total() == 0
    for bad in ({"n": 2, "signature": [1]}, {"n": 0}, {"signature": [2], "n": 1}, {"k": 0}):
        with pytest.raises(ValueError):
            validate_parameters(bad)


def test_format_report_lists_notes():
    report = _report(failed=0)
    report.notes.append("q3d skipped: defined for n=1")
    text = format_report(report)
    assert "note: q3d skipped" in text
    assert text.endswith("1 passed, 0 failed in 0.1s")


def _context(n: int = 1) -> SuiteContext:
    params = validate_parameters({"n": n, "seed": 3})
    return SuiteContext(params, Signature.of(n), make_rng(3), load_conventions())


def test_ambient_suite_end_to_end(capsys):
    assert main(["verify", "ambient", "--n", "1", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "note: heisenberg" in out
    assert "0 failed" in out


def test_obstruction_suite_end_to_end(capsys):
    assert main(["verify", "obstruction", "--n", "1", "--seed", "3", "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["failed"] == 0
    assert any(note.startswith("obstruction constant") for note in data["notes"])


@patch("backend.services.verification_agent.suites.verify_operator_invariance", return_value=[])
def test_operator_invariance_covers_k_up_to_three(mock_verify):
    suite_operator_invariance(_context())
    weights_by_k = {}
    structures = set()
    for call in mock_verify.call_args_list:
        st, weight = call.args[0], call.args[1]
        assert not (is_natural(weight.w) and is_natural(weight.wp))
        weights_by_k.setdefault(order_k(1, weight), set()).add(weight)
        structures.add(st.describe())
    assert sorted(weights_by_k) == [1, 2, 3]
    assert all(len(ws) >= 4 for ws in weights_by_k.values())
    assert len(structures) == 3


@patch("backend.services.verification_agent.suites.verify_integration_by_parts", return_value=[])
@patch("backend.services.verification_agent.suites.verify_self_adjoint", return_value=[])
def test_adjoint_runs_every_structure_to_k_three(mock_adjoint, mock_ibp):
    suite_adjoint(_context())
    orders = {order_k(1, call.args[1]) for call in mock_adjoint.call_args_list}
    assert orders == {1, 2, 3}
    structures = [call.args[0] for call in mock_adjoint.call_args_list]
    assert any(st.is_flat for st in structures)
    assert any(st.base is not None for st in structures)


@pytest.mark.parametrize("n", [1, 2])
def test_density_weights_hit_vanishing_factors(n):
    weights = _context(n).density_weights()
    assert len(weights) >= 6
    assert any(n + w.w + 1 == 0 for w in weights)
    assert any(n + w.total() + 2 == 0 for w in weights)


@patch("backend.services.verification_agent.suites.verify_tractor_connection", return_value=[])
@patch("backend.services.verification_agent.suites.verify_flat_tractor_identities", return_value=[])
def test_flat_identities_run_to_k_four(mock_flat, mock_conn):
    suite_tractor_flat(_context())
    assert mock_flat.call_args.kwargs["k_max"] == 4
