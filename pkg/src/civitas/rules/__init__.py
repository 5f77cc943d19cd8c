"""Rule language: AST, parser, three-valued evaluator and explanations."""

from civitas.rules.ast import (
    And,
    Card,
    Compare,
    Exists,
    FieldAccess,
    FlowExists,
    Forall,
    Implies,
    Literal,
    Member,
    Not,
    Or,
    Right,
    RuleDef,
    RuleSet,
    ScaledCompare,
    SetLiteral,
    Universe,
    format_expr,
    format_rule,
    format_rules,
)
from civitas.rules.evaluate import Compliant, Indeterminate, Verdict, Violated, Witness, eval_expr, eval_rule
from civitas.rules.explain import explain
from civitas.rules.parser import RuleTypeError, parse_expr, parse_rule, parse_rules
from civitas.rules.truth import TruthValue

__all__ = [
    "And",
    "Card",
    "Compare",
    "Compliant",
    "Exists",
    "FieldAccess",
    "FlowExists",
    "Forall",
    "Implies",
    "Indeterminate",
    "Literal",
    "Member",
    "Not",
    "Or",
    "Right",
    "RuleDef",
    "RuleSet",
    "RuleTypeError",
    "ScaledCompare",
    "SetLiteral",
    "TruthValue",
    "Universe",
    "Verdict",
    "Violated",
    "Witness",
    "eval_expr",
    "eval_rule",
    "explain",
    "format_expr",
    "format_rule",
    "format_rules",
    "parse_expr",
    "parse_rule",
    "parse_rules",
]
