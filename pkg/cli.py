"""Command line: run, predict, lowerbound, verify, replay, serve.

Exit codes: 0 when everything executed, 1 on any hard error, 2 when a
``verify`` suite fails.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from app.core.config import settings
from app.core.constants import OutputFormat, RowStatus, TraceLevel
from app.services import analysis
from app.services.exceptions import ServiceException
from app.services.harness import (
    ExperimentRunner,
    emit_results,
    load_plan,
    lowerbound_experiment,
    write_edge_csv,
    write_trace_csv,
)
from app.services.verification import run_suites
from app.utils.logging_config import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERIFY_FAILED = 2


def _emit(data):
    print(json.dumps(data))


def cmd_run(args) -> int:
    plan = load_plan(args.plan)
    result = ExperimentRunner(args.parallel).run_plan(plan)
    out = args.out or plan.outputs.dir
    formats = OutputFormat(args.format) if args.format else plan.outputs.format
    emit_results(result.rows, formats, out, result.summaries)
    _emit({"plan": plan.name, "out": str(out), "summaries": [s.to_dict() for s in result.summaries]})
    failed = [row.key for row in result.rows if row.status == RowStatus.ERROR.value]
    if failed:
        logger.error(f"{len(failed)} row(s) failed: {', '.join(failed[:10])}")
        return EXIT_ERROR
    return EXIT_OK


def cmd_predict(args) -> int:
    try:
        queries = json.loads(Path(args.query).read_text())
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Cannot read queries from {args.query}: {e}")
        return EXIT_ERROR
    if isinstance(queries, dict):
        queries = [queries]
    status = EXIT_OK
    for query in queries:
        outcome = analysis.run_query(query)
        if "error" in outcome:
            status = EXIT_ERROR
        _emit(outcome)
    return status


def cmd_lowerbound(args) -> int:
    result = lowerbound_experiment(args.n, args.beta, args.gamma, args.rounds,
                                   args.seeds, sticky=not args.fresh)
    data = result.to_dict()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "lowerbound.json").write_text(json.dumps(data, indent=2) + "\n")
    _emit(data)
    return EXIT_OK


def cmd_verify(args) -> int:
    reports = run_suites(full=args.full, seeds=args.seeds)
    for report in reports:
        _emit(report.to_dict())
    return EXIT_OK if all(report.passed for report in reports) else EXIT_VERIFY_FAILED


def cmd_replay(args) -> int:
    plan = load_plan(args.plan)
    trace_level = TraceLevel(args.trace_level)
    run = ExperimentRunner().replay(plan, args.key, trace_level=trace_level)
    out = Path(args.out or plan.outputs.dir) / f"replay_{args.key.replace(':', '_')}"
    write_trace_csv(run, out / "trace.csv")
    write_edge_csv(run, out / "edges.csv")
    _emit(run.to_dict())
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn
    uvicorn.run("main:app", host=settings.HOST, port=settings.PORT,
                log_level=settings.LOG_LEVEL.lower())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gossip", description="Robust gossip aggregation toolkit")
    parser.add_argument("--log-level", default=None, help="Override LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="Run an experiment plan")
    p.add_argument("plan")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=[f.value for f in OutputFormat], default=None)
    p.add_argument("--parallel", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("predict", help="Evaluate analysis queries from a JSON file")
    p.add_argument("query")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("lowerbound", help="Direct-contact lower-bound experiment")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--fresh", action="store_true", help="Draw a new corrupted set every round")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_lowerbound)

    p = sub.add_parser("verify", help="Run the built-in property suites")
    p.add_argument("--full", action="store_true", help="Include the desk-scale acceptance suite")
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("replay", help="Re-run one result row with traces")
    p.add_argument("plan")
    p.add_argument("key", help="<point_id>:<seed>")
    p.add_argument("--out", default=None)
    p.add_argument("--trace-level", choices=[t.value for t in TraceLevel], default=TraceLevel.SUMMARY.value)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="Start the HTTP API")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return args.func(args)
    except ServiceException as e:
        logger.error(f"{type(e).__name__}: {e.message} {e.details}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
