"""Batch judgment: ingest facts, evaluate every rule, aggregate and render."""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from typing import Any

from civitas.model import CityModel, apply_facts
from civitas.rules.ast import PERSPECTIVE_ROLES, Right, RuleSet
from civitas.rules.evaluate import Indeterminate, Verdict, Violated, Witness, eval_rule
from civitas.rules.explain import explain
from civitas.scenario import FactSet

STATUSES = ("compliant", "violated", "indeterminate")


class WorldMode(str, enum.Enum):
    OPEN = "open"
    CLOSED = "closed"


@dataclass(frozen=True)
class JudgmentEntry:
    rule: str
    right: Right
    perspective: tuple[str, str]
    verdict: Verdict
    explanation: str


@dataclass(frozen=True)
class JudgmentReport:
    scenario_name: str
    world_mode: WorldMode
    entries: tuple[JudgmentEntry, ...]
    facts_applied: int = 0

    @property
    def summary(self) -> dict[str, int]:
        counts = dict.fromkeys(STATUSES, 0)
        for entry in self.entries:
            counts[entry.verdict.status] += 1
        return counts


def rule_sort_key(rule_id: str) -> tuple:
    """Natural order, so P2 sorts before P10."""
    parts = re.split(r"(\d+)", rule_id.casefold())
    return tuple((0, int(p)) if p.isdigit() else (1, p) for p in parts if p)


def judge(
    model: CityModel,
    ruleset: RuleSet,
    facts: FactSet | None = None,
    world_mode: WorldMode | str = WorldMode.OPEN,
) -> JudgmentReport:
    """Apply facts, fix the world mode, evaluate every rule and explain it."""
    mode = WorldMode(world_mode)
    judged = apply_facts(model, facts) if facts else model
    if mode is WorldMode.CLOSED:
        judged = judged.closed()
    entries = []
    for rule in sorted(ruleset, key=lambda r: rule_sort_key(r.id)):
        verdict = eval_rule(rule, judged)
        entries.append(JudgmentEntry(rule.id, rule.right, rule.perspective, verdict, explain(verdict, rule)))
    return JudgmentReport(model.scenario_name, mode, tuple(entries), len(facts) if facts else 0)


def _perspective_order(pair: tuple[str, str]) -> tuple[int, int]:
    return (PERSPECTIVE_ROLES.index(pair[0]), PERSPECTIVE_ROLES.index(pair[1]))


def aggregate(report: JudgmentReport) -> dict[str, dict[str, dict[str, int]]]:
    """Verdict counts keyed by right and by perspective pair.

    Rights follow the order of the ``Right`` enum; perspectives are ordered
    by role.  Only groups with at least one entry appear.
    """
    by_right: dict[Right, dict[str, int]] = {}
    by_perspective: dict[tuple[str, str], dict[str, int]] = {}
    for entry in report.entries:
        for table, key in ((by_right, entry.right), (by_perspective, entry.perspective)):
            table.setdefault(key, dict.fromkeys(STATUSES, 0))[entry.verdict.status] += 1
    rights = [r for r in Right if r in by_right]
    pairs = sorted(by_perspective, key=_perspective_order)
    return {
        "by_right": {r.value: by_right[r] for r in rights},
        "by_perspective": {f"{a}-{b}": by_perspective[(a, b)] for a, b in pairs},
    }


def _witness_json(witness: Witness) -> dict[str, Any]:
    return {
        "bindings": {var: {"kind": ref.kind.value, "name": ref.name} for var, ref in witness.bindings},
        "facts": list(witness.facts),
        "flows": [
            {
                "source": {"kind": f.source.kind.value, "name": f.source.name},
                "dest": {"kind": f.dest.kind.value, "name": f.dest.name},
                "payload": f.payload.value,
                "consent": f.consent.value,
                "provenance": f.provenance.value,
            }
            for f in witness.flows
        ],
    }


def report_json(report: JudgmentReport) -> dict[str, Any]:
    entries = []
    for entry in report.entries:
        verdict = entry.verdict
        entries.append(
            {
                "rule": entry.rule,
                "right": entry.right.value,
                "perspective": list(entry.perspective),
                "verdict": verdict.status,
                "witnesses": [_witness_json(w) for w in verdict.witnesses] if isinstance(verdict, Violated) else [],
                "unknowns": list(verdict.unknown_atoms) if isinstance(verdict, Indeterminate) else [],
                "explanation": entry.explanation,
            }
        )
    return {
        "scenario": report.scenario_name,
        "world_mode": report.world_mode.value,
        "facts_applied": report.facts_applied,
        "entries": entries,
        "summary": report.summary,
    }


_STYLES = {"violated": "\x1b[31m", "indeterminate": "\x1b[33m", "compliant": "\x1b[32m", "bold": "\x1b[1m"}
_RESET = "\x1b[0m"


def _style(text: str, style: str, color: bool) -> str:
    return f"{_STYLES[style]}{text}{_RESET}" if color else text


def render_text(report: JudgmentReport, color: bool = False) -> str:
    lines = [
        _style(f"Scenario: {report.scenario_name}", "bold", color),
        f"World: {report.world_mode.value}    Facts applied: {report.facts_applied}",
    ]
    for right in Right:
        group = [e for e in report.entries if e.right is right]
        if not group:
            continue
        lines.append("")
        lines.append(_style(f"[{right.value}]", "bold", color))
        for entry in group:
            pair = "-".join(entry.perspective)
            status = entry.verdict.status
            lines.append(f"  {entry.rule:<5} {pair:<28} {_style(status.upper(), status, color)}")
            for detail in entry.explanation.splitlines()[1:]:
                lines.append(f"  {detail}")
    summary = report.summary
    lines.append("")
    lines.append(", ".join(f"{summary[s]} {s}" for s in STATUSES))
    return "\n".join(lines) + "\n"


def render_report(report: JudgmentReport, format: str = "text", color: bool = False) -> bytes:
    """Serialize a report; identical reports give identical bytes."""
    if format == "json":
        return (json.dumps(report_json(report), indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    if format == "text":
        return render_text(report, color).encode("utf-8")
    raise ValueError(f"unknown report format {format!r}; expected text or json")


__all__ = [
    "JudgmentEntry",
    "JudgmentReport",
    "WorldMode",
    "aggregate",
    "judge",
    "render_report",
    "report_json",
    "rule_sort_key",
]
