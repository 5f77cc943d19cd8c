from __future__ import annotations

import random
import re
from dataclasses import replace

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from civitas.lexer import ParseError
from civitas.model import (
    CityModel,
    Consent,
    DataFlow,
    DeviceInstance,
    EntityKind,
    EntityRef,
    GovernmentInstance,
    Provenance,
    ResidentGroup,
)
from civitas.scenario import (
    FactSet,
    ScenarioValidationError,
    parse_facts,
    parse_scenario,
    render_facts,
    render_scenario,
)
from oracles import random_model
from strategies import awkward_names, city_models

DEVICE_BODY = """
    title: "Kiosk"
    neighborhoods: [A]
    movement: still
    interaction: physical
    risk: {risk}
    collects_resident_data: true
    transmits_harmful: false
    agreement_violated: false
"""


def _scenario(risk="high", extra=""):
    return f'scenario "s" {{\n  device K {{{DEVICE_BODY.format(risk=risk)}  }}\n{extra}}}\n'


class TestParse:
    def test_flash_counts(self, flash):
        assert (len(flash.devices), len(flash.resident_groups), len(flash.governments), len(flash.businesses)) == (
            1,
            1,
            1,
            1,
        )
        device = flash.devices[0]
        assert device.movement_type.value == "stationary"
        assert [n.name for n in device.deploy_neighborhoods] == ["Center City", "Fairmount", "Queen Village", "Brewerytown"]
        assert flash.flows_complete is False and flash.declared_total_neighborhoods is None

    def test_empty_input(self):
        with pytest.raises(ParseError, match="no scenario block"):
            parse_scenario("")
        with pytest.raises(ParseError, match="no scenario block"):
            parse_scenario("   # only a comment\n")

    def test_unknown_risk_lists_options(self):
        with pytest.raises(ParseError) as info:
            parse_scenario(_scenario(risk="extreme"))
        message = str(info.value)
        assert all(word in message for word in ("low", "medium", "high"))
        assert info.value.span.line == 7

    def test_missing_field(self):
        text = 'scenario "s" { device K { title: "x" } }'
        with pytest.raises(ParseError, match="missing required fields"):
            parse_scenario(text)

    def test_unknown_field_key(self):
        with pytest.raises(ParseError, match="unknown device field 'colour'"):
            parse_scenario('scenario "s" { device K { colour: red } }')

    def test_duplicate_field(self):
        with pytest.raises(ParseError, match="duplicate field"):
            parse_scenario('scenario "s" { device K { risk: low risk: high } }')

    def test_flow_with_consent_and_provenance(self):
        text = _scenario(
            extra='  government G { oversight_iot_safety: true enforce_safety_standards: false }\n'
            "  flow K -> G : resident_personal_data consent=denied provenance=human_override\n"
            "  flow K -> external hacker : resident_location\n"
            "  flows_complete: true\n"
            "  total_neighborhoods: 4\n"
        )
        model = parse_scenario(text)
        first, second = model.flows
        assert first.consent is Consent.DENIED and first.provenance is Provenance.HUMAN_OVERRIDE
        assert second.dest == EntityRef(EntityKind.EXTERNAL, "hacker") and second.consent is Consent.UNKNOWN
        assert model.flows_complete and model.declared_total_neighborhoods == 4

    def test_unknown_payload(self):
        with pytest.raises(ParseError, match="payload"):
            parse_scenario(_scenario(extra="  flow K -> external h : gossip\n"))

    def test_dangling_flow_is_located(self):
        text = _scenario(extra="  flow K -> Nobody : arrival_time\n")
        with pytest.raises(ScenarioValidationError) as info:
            parse_scenario(text)
        assert "Nobody" in str(info.value)
        assert info.value.span.line == text.splitlines().index("  flow K -> Nobody : arrival_time") + 1

    def test_validation_issue_promoted(self):
        text = _scenario(extra="  total_neighborhoods: 0\n")
        with pytest.raises(ScenarioValidationError, match="UniverseTooSmall"):
            parse_scenario(text)

    def test_ambiguous_flow_endpoint(self):
        text = _scenario(
            extra="  government K { oversight_iot_safety: true enforce_safety_standards: true }\n"
            "  flow K -> external h : arrival_time\n"
        )
        with pytest.raises(ParseError, match="ambiguous"):
            parse_scenario(text)
        fixed = text.replace("flow K ->", "flow government K ->")
        assert parse_scenario(fixed).flows[0].source.kind is EntityKind.GOVERNMENT

    def test_crlf_accepted(self, fixtures):
        text = (fixtures / "flash.city").read_text(encoding="utf-8")
        assert parse_scenario(text.replace("\n", "\r\n")) == parse_scenario(text)

    def test_curly_quotes(self):
        model = parse_scenario(_scenario().replace('"Kiosk"', "“Kiosk”"))
        assert model.devices[0].device_title == "Kiosk"

    def test_declaration_order_preserved(self):
        text = _scenario().replace("device K {", "device Zed {") + ""
        text = text.replace("}\n}\n", "}\n  device Alpha {" + DEVICE_BODY.format(risk="low") + "  }\n}\n")
        model = parse_scenario(text)
        assert [d.name for d in model.devices] == ["Zed", "Alpha"]


class TestRender:
    def test_flash_round_trip(self, flash):
        assert parse_scenario(render_scenario(flash)) == flash

    def test_render_is_a_fixed_point(self, flash):
        text = render_scenario(flash)
        assert render_scenario(parse_scenario(text)) == text

    def test_empty_model_minimal_header(self):
        assert render_scenario(CityModel("Empty City")) == 'scenario "Empty City" {\n}\n'
        assert parse_scenario(render_scenario(CityModel("Empty City"))) == CityModel("Empty City")

    def test_unicode_neighborhoods_verbatim(self):
        device = DeviceInstance("Cam", "t", ("Zürich Nord", "東京"), "mobile", "physical", "low", False, False, False)
        model = CityModel("Ünïcode", devices=(device,))
        text = render_scenario(model)
        assert "Zürich Nord" in text and "東京" in text
        assert parse_scenario(text) == model

    def test_lf_only(self, flash):
        assert "\r" not in render_scenario(flash)

    @settings(max_examples=100, deadline=None)
    @given(city_models())
    def test_round_trip_random(self, model):
        assert parse_scenario(render_scenario(model)) == model

    @settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(awkward_names, awkward_names, awkward_names, st.booleans())
    def test_round_trip_awkward_names(self, entity, hood, scenario_name, complete):
        device = DeviceInstance(entity, hood, (hood,), "hazardous", "non_physical", "medium", True, True, False)
        gov = GovernmentInstance(entity, gov_type=hood, goal_labels=(hood,), project_goals=("efficiency",))
        group = ResidentGroup(entity, (hood,), (hood,), ("middle",), (hood,), (hood,), True)
        flows = (
            DataFlow(device.ref, gov.ref, "resident_personal_data", "granted"),
            DataFlow(gov.ref, group.ref, "project_goals"),
            DataFlow(device.ref, EntityRef("external", entity), "arrival_time", "denied", "human_override"),
        )
        model = CityModel(scenario_name, (device,), (group,), (gov,), (), flows, complete, 3)
        assert parse_scenario(render_scenario(model)) == model


class TestFacts:
    def test_single_flow_fact(self):
        facts = parse_facts("flow Parking_device -> G : resident_personal_data consent=denied")
        assert len(facts) == 1
        fact = facts.flow_facts[0]
        assert fact.consent is Consent.DENIED and fact.provenance is Provenance.HUMAN_OVERRIDE

    def test_empty_file(self):
        assert parse_facts("") == FactSet()
        assert len(parse_facts("# nothing\n")) == 0

    def test_conflicting_override(self):
        with pytest.raises(ParseError, match="conflicting override"):
            parse_facts("set G.oversight_iot_safety = false\nset G.oversight_iot_safety = true\n")

    def test_overrides_all_tagged(self, consentless):
        facts = parse_facts("set G.oversight_iot_safety = false\nflow a -> b : arrival_time\n")
        assert all(f.provenance is Provenance.HUMAN_OVERRIDE for f in facts.flow_facts + facts.field_overrides)
        assert len(consentless) == 2

    def test_provenance_attribute_rejected(self):
        with pytest.raises(ParseError, match="human overrides"):
            parse_facts("flow a -> b : arrival_time provenance=scenario")

    def test_syntax_error_span(self):
        with pytest.raises(ParseError) as info:
            parse_facts("flow a -> b : arrival_time\nflow a b\n")
        assert (info.value.span.line, info.value.span.column) == (2, 8)

    def test_round_trip(self):
        text = (
            "flow Parking_device -> G : resident_personal_data consent=denied\n"
            "flow device X -> external hacker : resident_location\n"
            'set Residents.living = ["Center City", Fishtown]\n'
        )
        assert render_facts(parse_facts(text)) == text


def _mutations(seed: int, text: str) -> str:
    rng = random.Random(seed)
    chars = list(text)
    for _ in range(rng.randint(1, 6)):
        op = rng.random()
        pos = rng.randrange(len(chars) + 1)
        if op < 0.4 and chars:
            del chars[min(pos, len(chars) - 1)]
        elif op < 0.8:
            chars.insert(pos, rng.choice('{}[]:,="\\-> \n#abc1é“'))
        else:
            chars[pos:pos] = list(rng.choice(["flow ", "device ", "scenario ", "consent=", "external "]))
    return "".join(chars)


def _check_total(parse, text):
    lines = re.split(r"\r\n|\r|\n", text)
    try:
        parse(text)
    except ParseError as exc:
        span = exc.span
        assert 1 <= span.line <= len(lines)
        assert 1 <= span.column <= len(lines[span.line - 1]) + 1
        assert span.length >= 1


class TestTotality:
    @settings(max_examples=300, deadline=None)
    @given(st.text(max_size=200))
    def test_arbitrary_text_never_crashes(self, text):
        _check_total(parse_scenario, text)
        _check_total(parse_facts, text)

    @settings(max_examples=300, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_mutated_scenarios_never_crash(self, seed):
        base = render_scenario(random_model(random.Random(seed)))
        _check_total(parse_scenario, _mutations(seed, base))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_mutated_facts_never_crash(self, seed):
        base = "flow Parking_device -> G : resident_personal_data consent=denied\nset G.oversight_iot_safety = false\n"
        _check_total(parse_facts, _mutations(seed, base))


def test_flash_fixture_round_trips_through_replace(flash):
    changed = replace(flash, flows_complete=True, declared_total_neighborhoods=12)
    assert parse_scenario(render_scenario(changed)) == changed
