"""Command-line entry point: serve / simulate / report.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import analytics
from .datastore import DataStore, ingest_course_data, load_grades
from .errors import CoursebotError


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coursebot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the bot and the instructor API")
    serve.add_argument("--config", required=True, help="config JSON path")
    serve.add_argument("--port", type=int, default=None)
    serve.add_argument("--data-dir", default=None)

    simulate = sub.add_parser(
        "simulate", help="run a seeded synthetic semester or a scenario file"
    )
    simulate.add_argument("--weeks", type=int, default=1)
    simulate.add_argument("--students", type=int, default=10)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--out", default="data")
    simulate.add_argument("--scenario", default=None, help="JSON event script")
    simulate.add_argument(
        "--config", default=None, help="course data JSON (scenario mode)"
    )

    report = sub.add_parser("report", help="compute the analytics report")
    report.add_argument("--data-dir", default=None)
    report.add_argument("--out", default=None, help="default: <data-dir>/report")
    report.add_argument(
        "--course", default=None, help="course data JSON (default: <data-dir>/course.json)"
    )
    return parser


def _effective_data_dir(flag_value: str | None) -> str:
    if flag_value:
        return flag_value
    return os.environ.get("COURSEBOT_DATA_DIR", "data")


def cmd_serve(args) -> int:
    from .api import load_api_config, serve

    config = load_api_config(
        args.config,
        port=args.port,
        data_dir=args.data_dir or os.environ.get("COURSEBOT_DATA_DIR"),
        auth_token=os.environ.get("COURSEBOT_API_TOKEN"),
    )
    serve(config)
    return 0


def cmd_simulate(args) -> int:
    from .simulate import run_scenario_file, run_simulation

    out = args.out or _effective_data_dir(None)
    if args.scenario:
        if not args.config:
            print("error: --scenario requires --config", file=sys.stderr)
            return 1
        course = ingest_course_data(Path(args.config).read_text(encoding="utf-8"))
        app = run_scenario_file(
            course, Path(args.scenario).read_text(encoding="utf-8"), out
        )
        print(
            f"scenario replayed: {len(app.gateway.transcript.entries)} "
            f"transcript entries, data in {out}"
        )
        return 0
    run_simulation(args.weeks, args.students, args.seed, out)
    return 0


def cmd_report(args) -> int:
    data_dir = Path(_effective_data_dir(args.data_dir))
    if not data_dir.is_dir():
        print(f"error: data dir {data_dir} is not readable", file=sys.stderr)
        return 2
    course = None
    course_path = Path(args.course) if args.course else data_dir / "course.json"
    if course_path.exists():
        course = ingest_course_data(course_path.read_text(encoding="utf-8"))
    store = DataStore(data_dir)
    grades = load_grades(data_dir / "grades.csv")
    report = analytics.export_report(course, store, grades)

    out_dir = Path(args.out) if args.out else data_dir / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    report_path.write_text(
        json.dumps(report.document, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    for chart in report.charts:
        with open(
            out_dir / f"figure_{chart.figure_id}.csv", "w",
            encoding="utf-8", newline="",
        ) as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("figure_id", "option", "count", "percentage"))
            for option, count, percentage in chart.rows:
                writer.writerow((chart.figure_id, option, count, percentage))

    print(f"report written to {report_path}")
    for figure in report.document["figures"]:
        total = figure["total"]
        print(f"  figure {figure['figure_id']}: {total} responses")
    for key, corr in sorted(report.document["correlations"].items()):
        if "rho" in corr:
            print(f"  {key}: rho={corr['rho']:.4f} (n={corr['n']})")
        else:
            print(f"  {key}: {corr['error']}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "serve": cmd_serve,
        "simulate": cmd_simulate,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except CoursebotError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
