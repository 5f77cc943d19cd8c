from __future__ import annotations

import json
import random
from dataclasses import replace

from hypothesis import given, settings
from hypothesis import strategies as st

from civitas.model import CityModel, EntityKind
from civitas.pipeline import WorldMode, aggregate, judge, render_report, report_json, rule_sort_key
from civitas.principles import builtin_ruleset
from civitas.rules import FlowExists, RuleSet, eval_rule, parse_rules
from civitas.scenario import FactSet, FlowFact, RefSpec
from civitas.finder import rule_footprint
from oracles import random_model
from strategies import city_models

FLASH_OPEN = {
    "P1": "violated",
    "P2": "compliant",
    "P3": "indeterminate",
    "P4": "indeterminate",
    "P5": "indeterminate",
    "P6": "indeterminate",
    "P7": "indeterminate",
    "P8": "compliant",
    "P9": "compliant",
    "P10": "indeterminate",
    "P11": "compliant",
    "P12": "compliant",
    "P13": "compliant",
}


def _statuses(report):
    return {e.rule: e.verdict.status for e in report.entries}


def _flow_free(rule) -> bool:
    return not any(isinstance(node, FlowExists) for node in _nodes(rule.expr))


def _nodes(expr):
    yield expr
    for value in vars(expr).values():
        items = value if isinstance(value, tuple) else (value,)
        for item in items:
            if hasattr(item, "__dataclass_fields__") and not isinstance(item, (str, int)):
                yield from _nodes(item)


class TestJudge:
    def test_flash_open(self, flash):
        report = judge(flash, builtin_ruleset())
        assert _statuses(report) == FLASH_OPEN
        assert report.world_mode is WorldMode.OPEN and report.facts_applied == 0

    def test_flash_closed(self, flash):
        statuses = _statuses(judge(flash, builtin_ruleset(), world_mode="closed"))
        expected = dict(FLASH_OPEN, P3="compliant", P4="compliant", P5="compliant", P6="compliant", P7="compliant")
        expected["P10"] = "violated"
        assert statuses == expected

    def test_flash_with_consentless_facts(self, flash, consentless):
        report = judge(flash, builtin_ruleset(), consentless)
        statuses = _statuses(report)
        assert statuses["P4"] == statuses["P6"] == statuses["P1"] == "violated"
        assert report.facts_applied == 2

    def test_empty_ruleset(self, flash):
        report = judge(flash, RuleSet("none", ()))
        assert report.entries == () and report.summary == {"compliant": 0, "violated": 0, "indeterminate": 0}
        assert aggregate(report) == {"by_right": {}, "by_perspective": {}}
        assert json.loads(render_report(report, "json"))["entries"] == []

    def test_entries_sorted_naturally(self, flash):
        text = "".join(
            f"rule {rid} right=safety perspective=residents-iot_service: true\n" for rid in ("P10", "P2", "A1", "P1")
        )
        report = judge(flash, parse_rules(text))
        assert [e.rule for e in report.entries] == sorted(["P10", "P2", "A1", "P1"], key=rule_sort_key)
        assert [e.rule for e in report.entries] == ["A1", "P1", "P2", "P10"]

    def test_input_model_untouched(self, flash, consentless):
        before = replace(flash)
        judge(flash, builtin_ruleset(), consentless, "closed")
        assert flash == before


class TestAggregate:
    def test_flash_safety_row(self, flash):
        groups = aggregate(judge(flash, builtin_ruleset()))
        assert groups["by_right"]["safety"] == {"compliant": 1, "violated": 1, "indeterminate": 1}
        assert list(groups["by_right"]) == ["safety", "privacy", "fairness", "truth", "what_is_agreed", "authority"]
        assert groups["by_perspective"]["business-business"] == {"compliant": 1, "violated": 0, "indeterminate": 0}

    def test_all_compliant(self):
        text = "rule A right=privacy perspective=residents-government: true\n"
        text += "rule B right=truth perspective=residents-business: true\n"
        groups = aggregate(judge(CityModel("m"), parse_rules(text)))
        for table in groups.values():
            assert all(counts["violated"] == 0 for counts in table.values())

    @settings(max_examples=100, deadline=None)
    @given(city_models())
    def test_groups_reconcile(self, model):
        report = judge(model, builtin_ruleset())
        groups = aggregate(report)
        for table in groups.values():
            assert sum(sum(c.values()) for c in table.values()) == len(report.entries)


class TestRender:
    def test_json_first_entry(self, flash):
        data = json.loads(render_report(judge(flash, builtin_ruleset()), "json"))
        first = data["entries"][0]
        assert (first["rule"], first["verdict"]) == ("P1", "violated")
        assert first["witnesses"][0]["bindings"]["d"] == {"kind": "device", "name": "Parking_device"}
        assert "d.risk_type = high" in first["witnesses"][0]["facts"]
        assert set(data) == {"scenario", "world_mode", "facts_applied", "entries", "summary"}
        assert set(first) == {"rule", "right", "perspective", "verdict", "witnesses", "unknowns", "explanation"}

    def test_unknowns_listed(self, flash):
        data = report_json(judge(flash, builtin_ruleset()))
        p4 = next(e for e in data["entries"] if e["rule"] == "P4")
        assert p4["unknowns"] == ["flow(device -> government : resident_personal_data, consent=denied)"]

    def test_bytes_stable(self, flash, consentless):
        for fmt in ("json", "text"):
            a = render_report(judge(flash, builtin_ruleset(), consentless), fmt)
            b = render_report(judge(flash, builtin_ruleset(), consentless), fmt)
            assert a == b

    def test_text_grouped_by_right(self, flash):
        text = render_report(judge(flash, builtin_ruleset())).decode()
        assert text.index("[safety]") < text.index("[privacy]") < text.index("[authority]")
        assert "P1" in text and "VIOLATED" in text and "\x1b[" not in text
        assert text.rstrip().endswith("6 compliant, 1 violated, 6 indeterminate")

    def test_color_only_on_request(self, flash):
        assert b"\x1b[31m" in render_report(judge(flash, builtin_ruleset()), "text", color=True)


class TestInvariants:
    @settings(max_examples=150, deadline=None)
    @given(city_models())
    def test_entries_equal_eval_rule(self, model):
        report = judge(model, builtin_ruleset())
        for entry in report.entries:
            assert entry.verdict == eval_rule(builtin_ruleset().get(entry.rule), model)

    @settings(max_examples=150, deadline=None)
    @given(city_models())
    def test_closed_world_without_flows_decides_flow_rules(self, model):
        report = judge(replace(model, flows=()), builtin_ruleset(), world_mode="closed")
        assert all(e.verdict.status != "indeterminate" for e in report.entries)

    @settings(max_examples=150, deadline=None)
    @given(city_models())
    def test_summary_reconciles(self, model):
        report = judge(model, builtin_ruleset())
        assert sum(report.summary.values()) == len(report.entries) == 13

    @settings(max_examples=150, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_flow_facts_leave_flow_free_rules_alone(self, seed):
        rng = random.Random(seed)
        model = random_model(rng)
        names = [(e.ref.kind, e.name) for e in model.all_entities()]
        if not names:
            return
        facts = []
        for _ in range(rng.randint(1, 3)):
            (sk, sn), (dk, dn) = rng.choice(names), rng.choice(names)
            if (sk, sn) == (dk, dn):
                continue
            payload = rng.choice(["resident_personal_data", "resident_location", "arrival_time", "project_goals"])
            facts.append(FlowFact(RefSpec(sn, sk), RefSpec(dn, dk), payload, rng.choice(["granted", "denied", "unknown"])))
        before = judge(model, builtin_ruleset())
        after = judge(model, builtin_ruleset(), FactSet(flow_facts=tuple(facts)))
        for old, new in zip(before.entries, after.entries):
            rule = builtin_ruleset().get(old.rule)
            if _flow_free(rule):
                assert old.verdict == new.verdict, old.rule

    def test_flow_free_rules_identified(self):
        free = [r.id for r in builtin_ruleset() if _flow_free(r)]
        assert free == ["P1", "P2", "P8", "P9", "P11", "P12", "P13"]
        assert EntityKind.DEVICE in rule_footprint(builtin_ruleset().get("P1").expr).kinds
