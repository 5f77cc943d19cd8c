"""Rights-based compliance checking for smart-city socio-technical models."""

from civitas.finder import Scope, find_counterexample, minimize_witness
from civitas.model import CityModel, apply_facts, neighborhood_universe, validate_model
from civitas.pipeline import JudgmentReport, WorldMode, aggregate, judge, render_report
from civitas.principles import builtin_ruleset, rule_source, safety_assertion
from civitas.rules import eval_expr, eval_rule, explain, parse_rule, parse_rules
from civitas.scenario import parse_facts, parse_scenario, render_scenario

__version__ = "0.1.0"

__all__ = [
    "CityModel",
    "JudgmentReport",
    "Scope",
    "WorldMode",
    "aggregate",
    "apply_facts",
    "builtin_ruleset",
    "eval_expr",
    "eval_rule",
    "explain",
    "find_counterexample",
    "judge",
    "minimize_witness",
    "neighborhood_universe",
    "parse_facts",
    "parse_rule",
    "parse_rules",
    "parse_scenario",
    "render_report",
    "render_scenario",
    "rule_source",
    "safety_assertion",
    "validate_model",
]
