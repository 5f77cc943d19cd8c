from __future__ import annotations

import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from civitas.model import CityModel, DeviceInstance, EntityRef, ResidentGroup
from civitas.principles import builtin_ruleset, builtin_source, rule_source, safety_assertion
from civitas.rules import Compliant, Violated, eval_rule, parse_expr, parse_rule, parse_rules
from oracles import CHECKERS, oracle_status, random_model
from strategies import city_models

# Expected encodings, typed independently of the shipped rule text.
EXPECTED = {
    "P1": (
        "safety",
        "residents-iot_service",
        "forall d in devices: not (d.movement_type in {mobile, hazardous} or d.risk_type = high"
        " or d.transmits_harmful = true)",
    ),
    "P2": (
        "safety",
        "residents-government",
        "forall g in governments: forall d in devices:"
        " not (transform_physical_living_environment in g.project_goals) or d.interaction_type = non_physical",
    ),
    "P3": ("safety", "residents-residents", "not flow(* -> residents : resident_location)"),
    "P4": (
        "privacy",
        "residents-government",
        "forall d in devices: not d.collects_resident_data"
        " or not flow(device -> government : resident_personal_data, consent=denied)",
    ),
    "P5": (
        "privacy",
        "residents-residents",
        "forall d in devices: not d.collects_resident_data"
        " or not flow(device -> residents : resident_personal_data, consent=denied)",
    ),
    "P6": (
        "privacy",
        "residents-business",
        "forall d in devices: not d.collects_resident_data"
        " or (not flow(device -> business : resident_personal_data, consent=denied)"
        " and not flow(device -> external : resident_personal_data, consent=denied))",
    ),
    "P7": (
        "fairness",
        "residents-business",
        "not flow(* -> business : arrival_time) and not flow(* -> business : economic_status)",
    ),
    "P8": ("fairness", "residents-residents", "forall r in resident_groups: card(r.iot_usage_preferences) = 1"),
    "P9": (
        "fairness",
        "business-business",
        "forall d in devices: 5 * card(d.deploy_neighborhoods) >= 2 * card(universe)",
    ),
    "P10": ("truth", "residents-government", "flow(government -> residents : project_goals)"),
    "P11": ("what_is_agreed", "residents-iot_service", "forall d in devices: d.agreement_violated = false"),
    "P12": ("authority", "residents-iot_service", "forall r in resident_groups: r.has_legitimate_authority = true"),
    "P13": (
        "authority",
        "residents-government",
        "forall g in governments: g.oversight_iot_safety = true and g.enforce_safety_standards = true",
    ),
}


def _device(name="D", **kw):
    base = dict(
        device_title="t",
        deploy_neighborhoods=("a",),
        movement_type="stationary",
        interaction_type="physical",
        risk_type="low",
        transmits_harmful=False,
        collects_resident_data=False,
        agreement_violated=False,
    )
    base.update(kw)
    return DeviceInstance(name=name, **base)


class TestBuiltinSet:
    def test_thirteen_in_order(self):
        assert builtin_ruleset().ids() == [f"P{i}" for i in range(1, 14)]

    @pytest.mark.parametrize("rule_id", list(EXPECTED))
    def test_encoding_and_metadata(self, rule_id):
        right, perspective, body = EXPECTED[rule_id]
        rule = builtin_ruleset().get(rule_id)
        assert rule.right.value == right
        assert "-".join(rule.perspective) == perspective
        assert rule.expr == parse_expr(body)
        assert rule.statement

    @pytest.mark.parametrize("rule_id", list(EXPECTED) + ["SafetyPrinciple"])
    def test_source_round_trip(self, rule_id):
        expected = safety_assertion() if rule_id == "SafetyPrinciple" else builtin_ruleset().get(rule_id)
        assert parse_rule(rule_source(rule_id)) == expected

    def test_unknown_id(self):
        with pytest.raises(LookupError, match="P99"):
            rule_source("P99")

    def test_export_reparses(self):
        assert parse_rules(builtin_source()).rules == builtin_ruleset().rules

    def test_p9_integer_boundary(self):
        # 4 of 10 sits exactly on the two-fifths line and must count as covered.
        hoods = tuple(f"n{i}" for i in range(10))
        group = ResidentGroup("R", hoods, (), ("low",), ("x",))
        rule = builtin_ruleset().get("P9")
        at = CityModel("m", devices=(_device(deploy_neighborhoods=hoods[:4]),), resident_groups=(group,))
        below = replace(at, declared_total_neighborhoods=11)
        assert eval_rule(rule, at) == Compliant()
        assert isinstance(eval_rule(rule, below), Violated)

    def test_flash_examples(self, flash):
        rules = builtin_ruleset()
        assert eval_rule(rules.get("P9"), flash) == Compliant()
        assert eval_rule(rules.get("P8"), flash) == Compliant()


class TestSafetyAssertion:
    def test_flash_device_violates(self, flash):
        verdict = eval_rule(safety_assertion(), flash)
        assert isinstance(verdict, Violated)
        assert verdict.witnesses[0].bindings[0][1] == EntityRef("device", "Parking_device")

    @pytest.mark.parametrize(
        "movement, interaction, violated",
        [
            ("hazardous", "physical", False),
            ("mobile", "non_physical", False),
            ("stationary", "physical", True),
            ("mobile", "physical", True),
            ("stationary", "non_physical", False),
        ],
    )
    def test_cases(self, movement, interaction, violated):
        model = CityModel("m", devices=(_device(movement_type=movement, interaction_type=interaction),))
        assert isinstance(eval_rule(safety_assertion(), model), Violated) is violated


class TestProperties:
    def test_checkers_cover_every_rule(self):
        assert set(CHECKERS) == set(builtin_ruleset().ids()) | {"SafetyPrinciple"}

    @settings(max_examples=300, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_oracle_equivalence(self, seed):
        model = random_model(random.Random(seed))
        for rule in list(builtin_ruleset()) + [safety_assertion()]:
            assert eval_rule(rule, model).status == oracle_status(rule.id, model), rule.id

    @settings(max_examples=200, deadline=None)
    @given(city_models())
    def test_privacy_rules_need_collection(self, model):
        quiet = replace(model, devices=tuple(replace(d, collects_resident_data=False) for d in model.devices))
        for rule_id in ("P4", "P5", "P6"):
            assert not isinstance(eval_rule(builtin_ruleset().get(rule_id), quiet), Violated)

    @settings(max_examples=200, deadline=None)
    @given(city_models(), st.randoms(use_true_random=False))
    def test_p9_ignores_neighborhood_names(self, model, rng):
        names = sorted({n.name.casefold() for n in _all_names(model)})
        fresh = [f"Renamed {i}" for i in range(len(names))]
        rng.shuffle(fresh)
        mapping = dict(zip(names, fresh))
        renamed = _rename(model, mapping)
        rule = builtin_ruleset().get("P9")
        assert eval_rule(rule, renamed).status == eval_rule(rule, model).status


def _all_names(model: CityModel):
    for d in model.devices:
        yield from d.deploy_neighborhoods
    for r in model.resident_groups:
        yield from r.living_neighborhoods
        yield from r.favored_neighborhoods
    for b in model.businesses:
        yield from b.neighborhoods


def _rename(model: CityModel, mapping: dict) -> CityModel:
    def hoods(items):
        return tuple(mapping[n.name.casefold()] for n in items)

    return replace(
        model,
        devices=tuple(replace(d, deploy_neighborhoods=hoods(d.deploy_neighborhoods)) for d in model.devices),
        resident_groups=tuple(
            replace(r, living_neighborhoods=hoods(r.living_neighborhoods), favored_neighborhoods=hoods(r.favored_neighborhoods))
            for r in model.resident_groups
        ),
        businesses=tuple(replace(b, neighborhoods=hoods(b.neighborhoods)) for b in model.businesses),
    )
