"""The thirteen built-in rules P1..P13 and the device safety assertion.

Each rule is kept as rule-language source and parsed once on first use, so the
shipped text and the evaluated AST can never drift apart.
"""

from __future__ import annotations

from functools import lru_cache

from civitas.rules.ast import RuleDef, RuleSet, format_rule
from civitas.rules.parser import parse_rule

BUILTIN_NAME = "builtin"

_SOURCES = (
    (
        "P1",
        "safety",
        "residents-iot_service",
        "Devices serving residents must stay put and avoid both high risk and harmful transmissions.",
        "forall d in devices: not (d.movement_type in {mobile, hazardous}"
        " or d.risk_type = high or d.transmits_harmful = true)",
    ),
    (
        "P2",
        "safety",
        "residents-government",
        "A government reshaping the living environment may only use devices residents do not touch.",
        "forall g in governments, d in devices:"
        " not (transform_physical_living_environment in g.project_goals) or d.interaction_type = non_physical",
    ),
    (
        "P3",
        "safety",
        "residents-residents",
        "Residents must not learn where other residents are.",
        "not exists flow(* -> residents : resident_location)",
    ),
    (
        "P4",
        "privacy",
        "residents-government",
        "Collected resident data must not reach government agencies against refused consent.",
        "forall d in devices: not d.collects_resident_data"
        " or not flow(device -> government : resident_personal_data, consent=denied)",
    ),
    (
        "P5",
        "privacy",
        "residents-residents",
        "Collected resident data must not reach other residents against refused consent.",
        "forall d in devices: not d.collects_resident_data"
        " or not flow(device -> residents : resident_personal_data, consent=denied)",
    ),
    (
        "P6",
        "privacy",
        "residents-business",
        "Collected resident data must not reach businesses or outside parties against refused consent.",
        "forall d in devices: not d.collects_resident_data"
        " or not flow(device -> business : resident_personal_data, consent=denied)"
        " and not flow(device -> external : resident_personal_data, consent=denied)",
    ),
    (
        "P7",
        "fairness",
        "residents-business",
        "Businesses must not receive customer arrival times or economic standing.",
        "not flow(* -> business : arrival_time) and not flow(* -> business : economic_status)",
    ),
    (
        "P8",
        "fairness",
        "residents-residents",
        "Every resident group holds exactly one usage preference, so no preferences compete.",
        "forall r in resident_groups: card(r.iot_usage_preferences) = 1",
    ),
    (
        "P9",
        "fairness",
        "business-business",
        "Each device covers at least two fifths of all neighborhoods.",
        "forall d in devices: 5 * card(d.deploy_neighborhoods) >= 2 * card(universe)",
    ),
    (
        "P10",
        "truth",
        "residents-government",
        "Some government tells residents the project goals.",
        "exists flow(government -> residents : project_goals)",
    ),
    (
        "P11",
        "what_is_agreed",
        "residents-iot_service",
        "No device breaks its usage agreement.",
        "forall d in devices: d.agreement_violated = false",
    ),
    (
        "P12",
        "authority",
        "residents-iot_service",
        "Every resident group can demand corrective action from the service.",
        "forall r in resident_groups: r.has_legitimate_authority = true",
    ),
    (
        "P13",
        "authority",
        "residents-government",
        "Every government oversees device safety and enforces safety standards.",
        "forall g in governments: g.oversight_iot_safety = true and g.enforce_safety_standards = true",
    ),
)

_SAFETY_SOURCE = (
    'rule SafetyPrinciple right=safety perspective=residents-iot_service'
    ' statement="Only hazardous devices may be physically interactive." :\n'
    "  forall d in devices: d.movement_type != hazardous implies d.interaction_type != physical\n"
)


def _header_source(rule_id, right, perspective, statement, body) -> str:
    return f'rule {rule_id} right={right} perspective={perspective} statement="{statement}" :\n  {body}\n'


@lru_cache(maxsize=None)
def builtin_ruleset() -> RuleSet:
    """P1..P13 in order."""
    return RuleSet(BUILTIN_NAME, tuple(parse_rule(_header_source(*row)) for row in _SOURCES))


@lru_cache(maxsize=None)
def safety_assertion() -> RuleDef:
    """Non-hazardous devices must not be physically interactive."""
    return parse_rule(_SAFETY_SOURCE)


def rule_source(rule_id: str) -> str:
    """Canonical rule-language source for a builtin id; raises LookupError if unknown."""
    if rule_id.casefold() == "safetyprinciple":
        return format_rule(safety_assertion())
    return format_rule(builtin_ruleset().get(rule_id))


def builtin_source() -> str:
    """The whole builtin set as one ``.rules`` file."""
    return "\n".join(format_rule(r) for r in builtin_ruleset())
