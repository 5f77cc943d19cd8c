"""Rule AST nodes, rule metadata and the canonical source printer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Union

from civitas.lexer import is_bare_token, quote, render_token
from civitas.model import BOOL, Consent, EntityKind, FieldType, NeighborhoodId, PayloadKind, TokenEnum

INT = FieldType("int")
NEIGHBORHOOD_SET = FieldType("neighborhood", is_set=True)

KEYWORDS = frozenset(
    {"forall", "exists", "not", "and", "or", "implies", "in", "card", "universe", "flow", "true", "false", "rule"}
)

DOMAIN_NAMES = {
    EntityKind.DEVICE: "devices",
    EntityKind.RESIDENTS: "resident_groups",
    EntityKind.GOVERNMENT: "governments",
    EntityKind.BUSINESS: "businesses",
}


class Right(TokenEnum):
    SAFETY = "safety"
    PRIVACY = "privacy"
    FAIRNESS = "fairness"
    TRUTH = "truth"
    WHAT_IS_AGREED = "what_is_agreed"
    AUTHORITY = "authority"

    @classmethod
    def label(cls):
        return "right"


PERSPECTIVE_ROLES = ("residents", "iot_service", "government", "business")


# --- terms -------------------------------------------------------------------


@dataclass(frozen=True)
class FieldAccess:
    var: str
    field: str
    kind: EntityKind
    type: FieldType


@dataclass(frozen=True)
class Card:
    arg: Term
    type = INT


@dataclass(frozen=True)
class Universe:
    type = NEIGHBORHOOD_SET


@dataclass(frozen=True)
class Literal:
    value: Any
    type: FieldType


@dataclass(frozen=True)
class SetLiteral:
    items: tuple
    type: FieldType


Term = Union[FieldAccess, Card, Universe, Literal, SetLiteral]


# --- formulas ----------------------------------------------------------------


@dataclass(frozen=True)
class Compare:
    op: str
    lhs: Term
    rhs: Term


@dataclass(frozen=True)
class ScaledCompare:
    """``lhs_factor * lhs  op  rhs_factor * rhs`` over integers."""

    op: str
    lhs_factor: int
    lhs: Term
    rhs_factor: int
    rhs: Term


@dataclass(frozen=True)
class Member:
    element: Term
    collection: Term


@dataclass(frozen=True)
class FlowExists:
    source: EntityKind | None  # None matches any kind
    dest: EntityKind | None
    payload: PayloadKind
    consent: Consent | None = None  # None matches any consent


@dataclass(frozen=True)
class Not:
    operand: Expr


@dataclass(frozen=True)
class And:
    operands: tuple


@dataclass(frozen=True)
class Or:
    operands: tuple


@dataclass(frozen=True)
class Implies:
    antecedent: Expr
    consequent: Expr


@dataclass(frozen=True)
class Forall:
    var: str
    domain: EntityKind
    body: Expr


@dataclass(frozen=True)
class Exists:
    var: str
    domain: EntityKind
    body: Expr


# A bare boolean FieldAccess or Literal is also a formula.
Expr = Union[Compare, ScaledCompare, Member, FlowExists, Not, And, Or, Implies, Forall, Exists, FieldAccess, Literal]

ATOMS = (Compare, ScaledCompare, Member, FlowExists, FieldAccess, Literal)


@dataclass(frozen=True)
class RuleDef:
    id: str
    right: Right
    perspective: tuple[str, str]
    statement: str
    expr: Expr


@dataclass(frozen=True)
class RuleSet:
    name: str
    rules: tuple[RuleDef, ...]

    def __iter__(self):
        return iter(self.rules)

    def __len__(self):
        return len(self.rules)

    def ids(self) -> list[str]:
        return [r.id for r in self.rules]

    def get(self, rule_id: str) -> RuleDef:
        for rule in self.rules:
            if rule.id.casefold() == rule_id.casefold():
                return rule
        raise LookupError(f"unknown rule id {rule_id!r}")


# --- printing ----------------------------------------------------------------


def format_value(value: Any) -> str:
    """Human-readable rendering of a runtime value (used in witnesses)."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, TokenEnum):
        return value.value
    if isinstance(value, (tuple, list, frozenset, set)):
        items = sorted(value) if isinstance(value, (frozenset, set)) else value
        return "{" + ", ".join(format_value(v) for v in items) + "}"
    if isinstance(value, NeighborhoodId):
        return render_token(value.name)
    if isinstance(value, str):
        return render_token(value)
    return str(value)


def _format_literal(value: Any, ftype: FieldType, bound: frozenset) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int) and not isinstance(value, TokenEnum):
        return str(value)
    if ftype.base in ("enum", "goal"):
        text = value.value if isinstance(value, TokenEnum) else str(value)
        if is_bare_token(text) and text not in KEYWORDS and text not in bound:
            return text
        return quote(text)
    return quote(value.name if isinstance(value, NeighborhoodId) else str(value))


def format_term(term: Term, bound: frozenset = frozenset()) -> str:
    if isinstance(term, FieldAccess):
        return f"{term.var}.{term.field}"
    if isinstance(term, Card):
        return f"card({format_term(term.arg, bound)})"
    if isinstance(term, Universe):
        return "universe"
    if isinstance(term, SetLiteral):
        return "{" + ", ".join(_format_literal(v, term.type.element(), bound) for v in term.items) + "}"
    if isinstance(term, Literal):
        return _format_literal(term.value, term.type, bound)
    raise TypeError(f"not a term: {term!r}")


def format_pattern(kind: EntityKind | None) -> str:
    return "*" if kind is None else kind.value


def format_flow(atom: FlowExists) -> str:
    text = f"flow({format_pattern(atom.source)} -> {format_pattern(atom.dest)} : {atom.payload.value}"
    if atom.consent is not None:
        text += f", consent={atom.consent.value}"
    return text + ")"


# precedence: 0 quantifier/implies, 1 or, 2 and, 3 not, 4 atom
def format_expr(expr: Expr, level: int = 0, bound: frozenset = frozenset()) -> str:
    """Canonical rule-language source for ``expr``; re-parses to an equal AST."""

    def wrap(text: str, own: int) -> str:
        return f"({text})" if level > own else text

    if isinstance(expr, (Forall, Exists)):
        word = "forall" if isinstance(expr, Forall) else "exists"
        inner = bound | {expr.var}
        text = f"{word} {expr.var} in {DOMAIN_NAMES[expr.domain]}: {format_expr(expr.body, 0, inner)}"
        return wrap(text, 0)
    if isinstance(expr, Implies):
        text = f"{format_expr(expr.antecedent, 1, bound)} implies {format_expr(expr.consequent, 0, bound)}"
        return wrap(text, 0)
    if isinstance(expr, Or):
        return wrap(" or ".join(format_expr(o, 2, bound) for o in expr.operands), 1)
    if isinstance(expr, And):
        return wrap(" and ".join(format_expr(o, 3, bound) for o in expr.operands), 2)
    if isinstance(expr, Not):
        inner = format_expr(expr.operand, 4, bound)
        return wrap(f"not {inner}", 3)
    if isinstance(expr, Compare):
        return f"{format_term(expr.lhs, bound)} {expr.op} {format_term(expr.rhs, bound)}"
    if isinstance(expr, ScaledCompare):
        lhs = format_term(expr.lhs, bound)
        rhs = format_term(expr.rhs, bound)
        if expr.lhs_factor != 1:
            lhs = f"{expr.lhs_factor} * {lhs}"
        if expr.rhs_factor != 1:
            rhs = f"{expr.rhs_factor} * {rhs}"
        return f"{lhs} {expr.op} {rhs}"
    if isinstance(expr, Member):
        return f"{format_term(expr.element, bound)} in {format_term(expr.collection, bound)}"
    if isinstance(expr, FlowExists):
        return format_flow(expr)
    if isinstance(expr, (FieldAccess, Literal)):
        return format_term(expr, bound)
    raise TypeError(f"not a rule expression: {expr!r}")


def format_rule(rule: RuleDef) -> str:
    header = f"rule {rule.id} right={rule.right.value} perspective={rule.perspective[0]}-{rule.perspective[1]}"
    if rule.statement:
        header += f" statement={quote(rule.statement)}"
    return f"{header} :\n  {format_expr(rule.expr)}\n"


def format_rules(rules) -> str:
    return "\n".join(format_rule(r) for r in rules)
