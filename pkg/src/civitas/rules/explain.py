"""One-paragraph human explanations of verdicts."""

from __future__ import annotations

from civitas.rules.ast import RuleDef
from civitas.rules.evaluate import Compliant, Indeterminate, Verdict, Violated


def _header(rule: RuleDef) -> str:
    a, b = rule.perspective
    return f"{rule.id} ({rule.right.value}, {a}-{b})"


def _suggest_fact(atom: str) -> str | None:
    # Unknown atoms are rendered flow patterns; turn one into a facts line.
    if not atom.startswith("flow("):
        return None
    body = atom[len("flow(") : -1]
    pattern, _, consent = body.partition(", consent=")
    ends, _, payload = pattern.partition(" : ")
    src, _, dst = ends.partition(" -> ")
    src = "<source>" if src == "*" else f"<{src}>"
    dst = "<dest>" if dst == "*" else f"<{dst}>"
    line = f"flow {src} -> {dst} : {payload}"
    return line + f" consent={consent}" if consent else line


def explain(verdict: Verdict, rule: RuleDef) -> str:
    """Readable account of ``verdict`` for ``rule``."""
    head = _header(rule)
    if isinstance(verdict, Compliant):
        return f"{head}: compliant."
    if isinstance(verdict, Violated):
        count = len(verdict.witnesses)
        lines = [f"{head}: violated ({count} witness{'es' if count != 1 else ''})."]
        lines.extend(f"  - {w.describe()}" for w in verdict.witnesses)
        return "\n".join(lines)
    if isinstance(verdict, Indeterminate):
        lines = [f"{head}: indeterminate; these conditions could not be decided:"]
        lines.extend(f"  - {atom}" for atom in verdict.unknown_atoms)
        suggestions = [s for s in (_suggest_fact(a) for a in verdict.unknown_atoms) if s]
        if suggestions:
            lines.append("  Supply the missing facts in a .facts file, for example:")
            lines.extend(f"    {s}" for s in suggestions)
            lines.append("  or declare flows_complete: true if the flow list is exhaustive.")
        return "\n".join(lines)
    raise TypeError(f"not a verdict: {verdict!r}")
