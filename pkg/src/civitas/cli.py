"""Command-line entry point.

Exit codes: 0 all compliant (or rule holds), 2 at least one violation,
3 no violation but something undecided, 1 usage, parse or internal error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Iterable, Optional, TextIO

from civitas.finder import Counterexample, HoldsWithinScope, find_counterexample, minimize_witness, parse_scope
from civitas.lexer import ParseError
from civitas.model import FactError
from civitas.pipeline import WorldMode, judge, render_report
from civitas.principles import builtin_ruleset, builtin_source, rule_source, safety_assertion
from civitas.rules.ast import RuleDef, format_rules
from civitas.rules.parser import parse_rules
from civitas.scenario import parse_facts, parse_scenario, render_facts, render_scenario

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATION = 2
EXIT_INDETERMINATE = 3

COLOR_ENV = "CIVITAS_NO_COLOR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="civitas", description="Judge smart-city models against rights-based rules.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    check = sub.add_parser("check", help="judge a scenario against a rule set")
    check.add_argument("scenario", help=".city file")
    check.add_argument("--rules", help=".rules file (default: the builtin P1..P13)")
    check.add_argument("--facts", help=".facts file with human overrides")
    check.add_argument("--world", choices=[m.value for m in WorldMode], default="open")
    check.add_argument("--format", choices=["text", "json"], default="text")
    check.add_argument("--out", help="write the report here instead of stdout")

    find = sub.add_parser("find", help="search for a counterexample within a bounded scope")
    find.add_argument("--rule", required=True, help="builtin id (P1..P13, SafetyPrinciple) or .rules file")
    find.add_argument("--scope", default="", help="e.g. devices=1,residents=1,neighborhoods=3,flows=2")
    find.add_argument("--budget", type=int, help="maximum candidates to examine")
    find.add_argument("--minimize", action="store_true", help="shrink the counterexample before printing")

    rules = sub.add_parser("rules", help="inspect the builtin rules")
    rules_sub = rules.add_subparsers(dest="action", required=True, parser_class=_Parser)
    rules_sub.add_parser("list", help="one line per builtin rule")
    show = rules_sub.add_parser("show", help="print a rule's source")
    show.add_argument("id")
    export = rules_sub.add_parser("export", help="print all builtin rules as a .rules file")
    export.add_argument("--out")

    fmt = sub.add_parser("fmt", help="rewrite a .city, .facts or .rules file canonically")
    fmt.add_argument("path")
    fmt.add_argument("--check", action="store_true", help="exit 2 instead of rewriting if the file would change")
    return parser


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise UsageError(f"{path} is not UTF-8 text") from None


def _write(path: str, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror or exc}") from None


def _parsed(path: str, parse):
    try:
        return parse(_read(path))
    except ParseError as exc:
        raise UsageError(f"{path}:{exc.span.line}:{exc.span.column}: {exc.message}") from None


def _use_color(stream: TextIO) -> bool:
    return not os.environ.get(COLOR_ENV) and hasattr(stream, "isatty") and stream.isatty()


def _emit(data: bytes, out: TextIO) -> None:
    out.flush()
    buffer = getattr(out, "buffer", None)
    if buffer is not None:
        buffer.write(data)
        buffer.flush()
    else:
        out.write(data.decode("utf-8"))


def exit_code_for(statuses: Iterable[str]) -> int:
    statuses = set(statuses)
    if "violated" in statuses:
        return EXIT_VIOLATION
    if "indeterminate" in statuses:
        return EXIT_INDETERMINATE
    return EXIT_OK


def cmd_check(args, out: TextIO) -> int:
    model = _parsed(args.scenario, parse_scenario)
    ruleset = _parsed(args.rules, lambda t: parse_rules(t, Path(args.rules).stem)) if args.rules else builtin_ruleset()
    facts = _parsed(args.facts, parse_facts) if args.facts else None
    try:
        report = judge(model, ruleset, facts, args.world)
    except FactError as exc:
        raise UsageError(f"{args.facts}: {exc}") from None
    color = args.format == "text" and not args.out and _use_color(out)
    data = render_report(report, args.format, color=color)
    if args.out:
        _write(args.out, data)
    else:
        _emit(data, out)
    return exit_code_for(e.verdict.status for e in report.entries)


def _resolve_rule(name_or_path: str) -> RuleDef:
    if name_or_path.casefold() == "safetyprinciple":
        return safety_assertion()
    try:
        return builtin_ruleset().get(name_or_path)
    except LookupError:
        pass
    if Path(name_or_path).is_file():
        ruleset = _parsed(name_or_path, parse_rules)
        if len(ruleset) != 1:
            raise UsageError(f"{name_or_path} defines {len(ruleset)} rules; find needs exactly one")
        return ruleset.rules[0]
    known = ", ".join(builtin_ruleset().ids() + ["SafetyPrinciple"])
    raise UsageError(f"unknown rule {name_or_path!r}; expected one of {known} or a .rules file")


def cmd_find(args, out: TextIO) -> int:
    rule = _resolve_rule(args.rule)
    try:
        scope = parse_scope(args.scope)
        if args.budget is not None:
            scope = parse_scope(f"budget={args.budget}", scope)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = find_counterexample(rule, scope)
    if isinstance(result, Counterexample):
        model = minimize_witness(result.model, rule) if args.minimize else result.model
        out.write(f"# {rule.id} is violated; counterexample after {result.candidates_examined} candidates\n")
        out.write(render_scenario(model))
        return EXIT_VIOLATION
    if isinstance(result, HoldsWithinScope):
        out.write(f"{rule.id} holds within scope ({result.candidates_examined} candidates examined)\n")
        return EXIT_OK
    out.write(f"{rule.id}: budget exhausted after {result.candidates_examined} candidates; no counterexample yet\n")
    return EXIT_INDETERMINATE


def cmd_rules(args, out: TextIO) -> int:
    if args.action == "list":
        for rule in builtin_ruleset():
            pair = "-".join(rule.perspective)
            out.write(f"{rule.id:<4} {rule.right.value:<15} {pair:<28} {rule.statement}\n")
        return EXIT_OK
    if args.action == "show":
        try:
            out.write(rule_source(args.id))
        except LookupError as exc:
            raise UsageError(str(exc.args[0])) from None
        return EXIT_OK
    data = builtin_source().encode("utf-8")
    if args.out:
        _write(args.out, data)
    else:
        _emit(data, out)
    return EXIT_OK


def _canonical(path: str, text: str) -> str:
    suffix = Path(path).suffix.casefold()
    try:
        if suffix == ".facts":
            return render_facts(parse_facts(text))
        if suffix == ".rules":
            return format_rules(parse_rules(text).rules)
        return render_scenario(parse_scenario(text))
    except ParseError as exc:
        raise UsageError(f"{path}:{exc.span.line}:{exc.span.column}: {exc.message}") from None


def cmd_fmt(args, out: TextIO) -> int:
    original = _read(args.path)
    canonical = _canonical(args.path, original)
    # Compare bytes as stored: a CRLF file is not canonical.
    unchanged = Path(args.path).read_bytes() == canonical.encode("utf-8")
    if args.check:
        if not unchanged:
            sys.stderr.write(f"{args.path} would be reformatted\n")
            return EXIT_VIOLATION
        return EXIT_OK
    if not unchanged:
        _write(args.path, canonical.encode("utf-8"))
    return EXIT_OK


_COMMANDS = {"check": cmd_check, "find": cmd_find, "rules": cmd_rules, "fmt": cmd_fmt}


def main(argv: Optional[Iterable[str]] = None, out: TextIO | None = None) -> int:
    try:
        args = build_parser().parse_args(None if argv is None else list(argv))
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    out = out or sys.stdout
    try:
        return _COMMANDS[args.command](args, out)
    except UsageError as exc:
        sys.stderr.write(f"civitas: error: {exc}\n")
        return EXIT_ERROR
    except Exception as exc:  # pragma: no cover - last-resort guard
        sys.stderr.write(f"civitas: internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
