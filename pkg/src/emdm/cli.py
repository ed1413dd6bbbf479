"""Command-line entry point: ``emdm <subcommand> SCHEME [flags]``."""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from pathlib import Path

from emdm.checker import EventError, InstanceError, apply_event, check_all, load_events, load_instance, write_instance
from emdm.parser import SchemeParseError, load_scheme
from emdm.pipeline import build, bundled
from emdm.planner import render_plan
from emdm.translator import order_sets
from emdm.validate import validate_scheme

EXIT_OK, EXIT_VIOLATIONS, EXIT_USAGE = 0, 1, 2

_NEEDS = {
    "emit-sql": ("out_dir",),
    "check": ("instance",),
    "simulate": ("instance", "events"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 as well; keep the usage text
        self.print_usage(sys.stderr)
        raise _Usage(f"{self.prog}: error: {message}")


class _Usage(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="emdm", description="Translate (E)MDM schemes into relational schemas and enforcement plans.")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    helps = {
        "validate": "parse and check a scheme",
        "translate": "print the translation report and residual constraints",
        "emit-sql": "write the DDL script into --out-dir",
        "plan": "print the enforcement plan",
        "check": "list violations in an instance",
        "simulate": "replay an event stream against an instance",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, description=text)
        sp.add_argument("scheme", help="scheme file, or the name of a bundled example")
        sp.add_argument("--instance", metavar="DIR")
        sp.add_argument("--events", metavar="FILE")
        sp.add_argument("--dialect", choices=("ansi", "strict"), default="ansi")
        sp.add_argument("--current-year", type=int, metavar="N", default=datetime.date.today().year)
        sp.add_argument("--analyzer", choices=("on", "off"), default="on")
        sp.add_argument("--out-dir", metavar="DIR")
        sp.add_argument("--format", choices=("human", "json"), default=None)
    return p


def _scheme_path(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    stem = path.name.removesuffix(".mdm")
    candidate = bundled(stem) / f"{stem}.mdm"
    if candidate.exists():
        return candidate
    raise FileNotFoundError(f"no such scheme: {arg}")


def _instance_dir(arg: str, scheme_path: Path) -> Path:
    path = Path(arg)
    if path.is_dir():
        return path
    local = scheme_path.parent / arg
    if local.is_dir():
        return local
    raise FileNotFoundError(f"no such instance directory: {arg}")


def _events_path(arg: str, scheme_path: Path) -> Path:
    path = Path(arg)
    if path.is_file():
        return path
    local = scheme_path.parent / arg
    if local.is_file():
        return local
    raise FileNotFoundError(f"no such events file: {arg}")


def _emit(args, human: str, data) -> None:
    if (args.format or "human") == "json":
        print(json.dumps(data, indent=2, ensure_ascii=False))
    else:
        print(human, end="" if human.endswith("\n") else "\n")


def _cmd_validate(args, path: Path) -> int:
    scheme = load_scheme(path)
    diagnostics = validate_scheme(scheme)
    human = "\n".join(str(d) for d in diagnostics) or f"{path.name}: ok"
    _emit(args, human, [{"severity": d.severity, "location": d.location, "message": d.message} for d in diagnostics])
    return EXIT_VIOLATIONS if any(d.severity == "error" for d in diagnostics) else EXIT_OK


def _cmd_translate(args, path: Path) -> int:
    b = build(path, dialect=args.dialect, analyzer=args.analyzer == "on")
    order = order_sets(b.scheme)
    lines = [
        b.report.summary(),
        f"e={b.report.e} r={b.report.r} a={b.report.a} f={b.report.f}",
        "order: " + ", ".join(order.names),
        "relational: " + ", ".join(f"{k}={v}" for k, v in b.report.categories.items()),
        f"residual ({len(b.residual)}):",
    ]
    lines += [f"  {e.label:<4} on {', '.join(e.host_sets)}  {e.constraint.description}" for e in b.residual]
    if b.implication is not None:
        lines.append(f"analyzer: pruned {len(b.implication.pruned)}, {b.enforced.constraint_count} relational constraints enforced")
        lines += [f"  {p}" for p in b.implication.pruned]
        lines += [f"  note: {n}" for n in b.implication.kept_implied]
    data = {
        "report": b.report.as_dict(),
        "order": list(order.names),
        "residual": [{"id": e.label, "hosts": list(e.host_sets), "description": e.constraint.description} for e in b.residual],
        "analyzer": b.implication.as_dict() if b.implication is not None else None,
        "enforced": b.enforced.constraint_count,
    }
    _emit(args, "\n".join(lines), data)
    return EXIT_OK


def _cmd_emit_sql(args, path: Path) -> int:
    b = build(path, dialect=args.dialect, analyzer=args.analyzer == "on")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"{path.stem}.{args.dialect}.sql"
    target.write_text(b.sql, encoding="utf-8")
    lines = [f"wrote {target}", f"demotions: {len(b.demotions)}"]
    lines += [f"  {d.source}: {d.reason} -> {d.target_strategy}" for d in b.demotions]
    data = {
        "file": str(target),
        "demotions": [
            {"source": d.source, "table": d.table, "columns": list(d.columns), "reason": d.reason, "strategy": d.target_strategy}
            for d in b.demotions
        ],
    }
    _emit(args, "\n".join(lines), data)
    return EXIT_OK


def _cmd_plan(args, path: Path) -> int:
    b = build(path, dialect=args.dialect, analyzer=args.analyzer == "on")
    text = render_plan(b.plan, "human" if args.format == "human" else "machine")
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_check(args, path: Path) -> int:
    b = build(path, dialect=args.dialect, analyzer=args.analyzer == "on")
    inst = load_instance(_instance_dir(args.instance, path), b.enforced, args.current_year)
    found = check_all(inst, b.residual)
    human = "\n".join(f"{v.constraint_id}: {v.message}" for v in found) or "no violations"
    _emit(args, human, [v.as_dict() for v in found])
    return EXIT_VIOLATIONS if found else EXIT_OK


def _cmd_simulate(args, path: Path) -> int:
    b = build(path, dialect=args.dialect, analyzer=args.analyzer == "on")
    inst = load_instance(_instance_dir(args.instance, path), b.enforced, args.current_year)
    events = load_events(_events_path(args.events, path))
    log, lines, rejected = [], [], 0
    residual = list(b.residual)
    for n, event in enumerate(events, start=1):
        result = apply_event(inst, event, b.plan, residual)
        verdict = "accept" if result.accepted else "reject"
        rejected += not result.accepted
        lines.append(f"{n}: {verdict.upper()} {event.op} {event.table} x={result.x}")
        kind = "warning" if result.accepted else "error"
        lines += [f"   {kind}: {m}" for m in result.messages]
        log.append({
            "event": event.as_dict(),
            "x": result.x,
            "verdict": verdict,
            "messages": result.messages,
            "violated": result.violated,
            "mutations": [
                {"table": m.table, "x": m.x, "column": m.column, "old": m.old, "new": m.new} for m in result.mutations
            ],
        })
    if args.out_dir:
        write_instance(inst, args.out_dir)
    _emit(args, "\n".join(lines) or "no events", log)
    return EXIT_VIOLATIONS if rejected else EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "translate": _cmd_translate,
    "emit-sql": _cmd_emit_sql,
    "plan": _cmd_plan,
    "check": _cmd_check,
    "simulate": _cmd_simulate,
}


def run(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except _Usage as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    missing = [f"--{name.replace('_', '-')}" for name in _NEEDS.get(args.subcommand, ()) if not getattr(args, name)]
    if missing:
        parser.print_usage(sys.stderr)
        print(f"emdm {args.subcommand}: missing {', '.join(missing)}", file=sys.stderr)
        return EXIT_USAGE
    try:
        path = _scheme_path(args.scheme)
        return _COMMANDS[args.subcommand](args, path)
    except SchemeParseError as exc:
        for err in exc.errors:
            print(err, file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, InstanceError, EventError) as exc:
        print(f"emdm: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
