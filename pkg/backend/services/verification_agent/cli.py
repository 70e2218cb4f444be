# cli.py
"""
Command-line front end for the Verification Agent.

    python -m backend.services.verification_agent.cli verify flatgoody --n 1 --k-max 3
    python -m backend.services.verification_agent.cli op --n 1 --w 0 --wp 0
    python -m backend.services.verification_agent.cli matrix --n 1 --w 0 --wp -1 --degree 3

Negative rationals need the --w=-1/2 form so argparse does not read them as
flags.

Exit codes: 0 when every check passes, 1 when a check fails, 2 on usage
or validation errors.
"""

import argparse
import csv
import io
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from backend.services.cr_calculus.scalars import CalculusError
from backend.services.verification_agent.report_schema import SUITE_IDS, Report, validate_parameters
from backend.services.verification_agent.verifier import VerificationAgent

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def _signature(text: str) -> List[int]:
    try:
        return [int(e) for e in text.replace("+", "").split(",") if e.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"signature must be a comma list of 1 and -1, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, default=1, help="CR dimension")
    common.add_argument("--signature", type=_signature, help="Levi signs, e.g. 1,-1")
    common.add_argument("--w", help="weight w (exact rational, e.g. -1/2)")
    common.add_argument("--wp", help="weight w' (exact rational)")
    common.add_argument("--k", type=int, help="order k = n+w+w'+1")
    common.add_argument("--kmax", "--k-max", dest="k_max", type=int, help="largest order for k-indexed suites")
    common.add_argument("--pattern", help="index pattern, e.g. 'ub' or 'ub:01:10'")
    common.add_argument("--upsilon", help="real rescaling polynomial in z1..zn, zb1..zbn, t")
    common.add_argument("--seed", type=int, help="random seed (default from conventions or CR_VERIFIER_SEED)")
    common.add_argument("--degree", type=int, default=4, help="weighted degree bound for matrices")
    common.add_argument("--format", choices=("text", "json", "csv"), default="text")

    parser = argparse.ArgumentParser(prog="cr-verify", description="Exact CR tractor calculus verifier")
    sub = parser.add_subparsers(dest="command", required=True)
    verify = sub.add_parser("verify", parents=[common], help="run a verification suite")
    verify.add_argument("suite", nargs="?", default=None, help=f"one of {', '.join(SUITE_IDS)}")
    verify.add_argument("--suite", dest="suite_flag", help=argparse.SUPPRESS)
    sub.add_parser("op", parents=[common], help="print an invariant operator")
    sub.add_parser("matrix", parents=[common], help="print an operator matrix on graded monomials")
    return parser


def _parameters(args: argparse.Namespace) -> Dict[str, Any]:
    data = {name: getattr(args, name, None)
            for name in ("n", "signature", "w", "wp", "k", "k_max", "pattern", "upsilon", "seed", "degree")}
    if args.command == "verify":
        data["suite"] = args.suite or args.suite_flag or "all"
    return data


def format_report(report: Report) -> str:
    lines = []
    for check in report.checks:
        mark = "PASS" if check.status == "pass" else "FAIL"
        line = f"{mark} {check.name} [{check.anchor}]"
        if check.witness:
            line += f": {check.witness}"
        lines.append(line)
    for note in report.notes:
        lines.append(f"note: {note}")
    lines.append(f"{report.suite}: {report.passed} passed, {report.failed} failed in {report.elapsed_seconds}s")
    return "\n".join(lines)


def _matrix_csv(result: Dict[str, Any]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow([""] + result["basis"])
    for label, row in zip(result["basis"], result["matrix"]):
        writer.writerow([label] + row)
    return buffer.getvalue()


def main(argv: Optional[List[str]] = None) -> int:
    level = os.getenv("CR_VERIFIER_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK

    try:
        params = validate_parameters(_parameters(args))
        agent = VerificationAgent()
        if args.command == "verify":
            report = agent.run(params)
            if args.format == "json":
                print(report.model_dump_json(indent=2))
            else:
                print(format_report(report))
            return EXIT_OK if report.all_passed else EXIT_FAILED
        if args.command == "op":
            result = agent.operator(params)
            print(json.dumps(result, indent=2) if args.format == "json" else result["operator"])
            return EXIT_OK
        result = agent.matrix(params)
        if args.format == "csv":
            print(_matrix_csv(result), end="")
        elif args.format == "json":
            print(json.dumps(result, indent=2))
        else:
            print("basis: " + ", ".join(result["basis"]))
            for row in result["matrix"]:
                print("  ".join(row))
            if result.get("folland_stein") is not None:
                print("folland-stein alphas: " + ", ".join(result["folland_stein"]))
        return EXIT_OK
    except (CalculusError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
