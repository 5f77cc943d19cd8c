"""Three-valued evaluation of rule expressions against a city model.

Connectives follow the strong Kleene tables.  ``flow(...)`` atoms are the only
source of ``unknown``: an undeclared flow is unknown unless the model declares
its flow list complete, and a flow whose consent is unknown cannot settle a
pattern that asks for granted or denied consent.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Any, ClassVar, Mapping, Union

from civitas.model import CityModel, Consent, DataFlow, EntityRef, neighborhood_universe
from civitas.rules.ast import (
    DOMAIN_NAMES,
    And,
    Card,
    Compare,
    Exists,
    Expr,
    FieldAccess,
    FlowExists,
    Forall,
    Implies,
    Literal,
    Member,
    Not,
    Or,
    RuleDef,
    ScaledCompare,
    SetLiteral,
    Universe,
    format_expr,
    format_flow,
    format_term,
    format_value,
)
from civitas.rules.truth import TruthValue

WITNESS_CAP = 32

T, F, U = TruthValue.TRUE, TruthValue.FALSE, TruthValue.UNKNOWN

_OPS = {
    "=": operator.eq,
    "!=": operator.ne,
    ">=": operator.ge,
    "<=": operator.le,
    ">": operator.gt,
    "<": operator.lt,
}


@dataclass(frozen=True)
class Witness:
    """Variable bindings, observed facts and flows that justify a result."""

    bindings: tuple[tuple[str, EntityRef], ...] = ()
    facts: tuple[str, ...] = ()
    flows: tuple[DataFlow, ...] = ()

    def bind(self, var: str, ref: EntityRef) -> Witness:
        return Witness(((var, ref),) + self.bindings, self.facts, self.flows)

    def merge(self, other: Witness) -> Witness:
        return Witness(
            _dedup(self.bindings + other.bindings),
            _dedup(self.facts + other.facts),
            _dedup(self.flows + other.flows),
        )

    def describe(self) -> str:
        parts = []
        if self.bindings:
            parts.append(", ".join(f"{var}={ref.name}" for var, ref in self.bindings))
        parts.extend(self.facts)
        parts.extend(f"flow {flow}" for flow in self.flows)
        return "; ".join(parts)


@dataclass(frozen=True)
class Compliant:
    status: ClassVar[str] = "compliant"


@dataclass(frozen=True)
class Violated:
    witnesses: tuple[Witness, ...]
    status: ClassVar[str] = "violated"

    def __post_init__(self):
        if not self.witnesses:
            raise ValueError("a violation needs at least one witness")


@dataclass(frozen=True)
class Indeterminate:
    unknown_atoms: tuple[str, ...]
    status: ClassVar[str] = "indeterminate"

    def __post_init__(self):
        if not self.unknown_atoms:
            raise ValueError("an indeterminate verdict needs at least one unknown atom")


Verdict = Union[Compliant, Violated, Indeterminate]


def _dedup(items: tuple) -> tuple:
    return tuple(dict.fromkeys(items))


@dataclass(frozen=True)
class _Outcome:
    value: TruthValue
    reasons: tuple[Witness, ...] = ()
    unknowns: tuple[str, ...] = ()


def _conjoin(reason_lists) -> tuple[Witness, ...]:
    combined = [Witness()]
    for reasons in reason_lists:
        if not reasons:
            continue
        combined = [a.merge(b) for a in combined for b in reasons][:WITNESS_CAP]
    return tuple(combined)


class _Evaluator:
    def __init__(self, model: CityModel, explain: bool):
        self.model = model
        self.explain = explain
        self._universe = None

    @property
    def universe(self):
        if self._universe is None:
            self._universe = neighborhood_universe(self.model)
        return self._universe

    # -- terms ----------------------------------------------------------------

    def term(self, term, env) -> Any:
        if isinstance(term, FieldAccess):
            return getattr(env[term.var], term.field)
        if isinstance(term, Card):
            return len(self.term(term.arg, env))
        if isinstance(term, Universe):
            return self.universe
        if isinstance(term, (Literal, SetLiteral)):
            return term.value if isinstance(term, Literal) else term.items
        raise TypeError(f"not a term: {term!r}")

    def _observed(self, terms, values) -> tuple[str, ...]:
        return tuple(
            f"{format_term(t)} = {format_value(v)}"
            for t, v in zip(terms, values)
            if not isinstance(t, (Literal, SetLiteral))
        )

    def _atom(self, value: bool, facts) -> _Outcome:
        if not self.explain:
            return _Outcome(T if value else F)
        return _Outcome(T if value else F, (Witness(facts=facts),))

    # -- formulas -------------------------------------------------------------

    def formula(self, expr: Expr, env: Mapping[str, Any]) -> _Outcome:
        if isinstance(expr, Compare):
            lhs, rhs = self.term(expr.lhs, env), self.term(expr.rhs, env)
            if isinstance(lhs, tuple) or isinstance(lhs, frozenset):
                lhs, rhs = frozenset(lhs), frozenset(rhs)
            value = _OPS[expr.op](lhs, rhs)
            facts = self._observed((expr.lhs, expr.rhs), (lhs, rhs)) if self.explain else ()
            return self._atom(value, facts or (format_expr(expr),))
        if isinstance(expr, ScaledCompare):
            lhs, rhs = self.term(expr.lhs, env), self.term(expr.rhs, env)
            value = _OPS[expr.op](expr.lhs_factor * lhs, expr.rhs_factor * rhs)
            facts = self._observed((expr.lhs, expr.rhs), (lhs, rhs)) if self.explain else ()
            return self._atom(value, facts or (format_expr(expr),))
        if isinstance(expr, Member):
            elem, coll = self.term(expr.element, env), self.term(expr.collection, env)
            value = elem in coll
            facts = self._observed((expr.element, expr.collection), (elem, coll)) if self.explain else ()
            return self._atom(value, facts or (format_expr(expr),))
        if isinstance(expr, FieldAccess):
            value = bool(getattr(env[expr.var], expr.field))
            return self._atom(value, (f"{format_term(expr)} = {format_value(value)}",))
        if isinstance(expr, Literal):
            return self._atom(bool(expr.value), (format_value(bool(expr.value)),))
        if isinstance(expr, FlowExists):
            return self.flow(expr)
        if isinstance(expr, Not):
            inner = self.formula(expr.operand, env)
            return _Outcome(~inner.value, inner.reasons, inner.unknowns)
        if isinstance(expr, And):
            return self.junction(expr.operands, env, conjunction=True)
        if isinstance(expr, Or):
            return self.junction(expr.operands, env, conjunction=False)
        if isinstance(expr, Implies):
            return self.junction((Not(expr.antecedent), expr.consequent), env, conjunction=False)
        if isinstance(expr, (Forall, Exists)):
            return self.quantifier(expr, env)
        raise TypeError(f"not a rule expression: {expr!r}")

    def junction(self, operands, env, conjunction: bool) -> _Outcome:
        # ``decisive`` settles the result on its own: FALSE for and, TRUE for or.
        decisive = F if conjunction else T
        outcomes = []
        for operand in operands:
            out = self.formula(operand, env)
            outcomes.append(out)
            if out.value is decisive and not self.explain:
                return _Outcome(decisive)
        values = [o.value for o in outcomes]
        value = TruthValue(min(values) if conjunction else max(values))
        if not self.explain:
            return _Outcome(value)
        if value is U:
            return _Outcome(U, (), _dedup(sum((o.unknowns for o in outcomes if o.value is U), ())))
        if value is decisive:
            reasons = sum((o.reasons for o in outcomes if o.value is decisive), ())
            return _Outcome(value, reasons[:WITNESS_CAP])
        return _Outcome(value, _conjoin(o.reasons for o in outcomes))

    def quantifier(self, expr, env) -> _Outcome:
        conjunction = isinstance(expr, Forall)
        decisive = F if conjunction else T
        elements = self.model.entities(expr.domain)
        scoped = dict(env)
        results = []
        for entity in elements:
            scoped[expr.var] = entity
            out = self.formula(expr.body, scoped)
            results.append((entity, out))
            if out.value is decisive and not self.explain:
                return _Outcome(decisive)
        if not results:
            value = T if conjunction else F
            if not self.explain:
                return _Outcome(value)
            return _Outcome(value, (Witness(facts=(f"no {DOMAIN_NAMES[expr.domain]}",)),))
        values = [o.value for _, o in results]
        value = TruthValue(min(values) if conjunction else max(values))
        if not self.explain:
            return _Outcome(value)
        if value is U:
            return _Outcome(U, (), _dedup(sum((o.unknowns for _, o in results if o.value is U), ())))
        # Either the decisive elements, or (when none is decisive) every element.
        chosen = [(e, o) for e, o in results if o.value is value]
        reasons = []
        for entity, out in chosen:
            for reason in out.reasons or (Witness(),):
                reasons.append(reason.bind(expr.var, entity.ref))
                if len(reasons) >= WITNESS_CAP:
                    return _Outcome(value, tuple(reasons))
        return _Outcome(value, tuple(reasons))

    def flow(self, atom: FlowExists) -> _Outcome:
        matching = []
        pending = []
        for flow in self.model.flows:
            if atom.payload is not flow.payload:
                continue
            if atom.source is not None and flow.source.kind is not atom.source:
                continue
            if atom.dest is not None and flow.dest.kind is not atom.dest:
                continue
            if atom.consent is None or flow.consent is atom.consent:
                matching.append(flow)
            elif flow.consent is Consent.UNKNOWN:
                pending.append(flow)
        text = format_flow(atom)
        if matching:
            return _Outcome(T, (Witness(flows=tuple(matching[:WITNESS_CAP])),) if self.explain else ())
        if pending or not self.model.flows_complete:
            return _Outcome(U, (), (text,) if self.explain else ())
        return _Outcome(F, (Witness(facts=(f"no {text} (flow list complete)",)),) if self.explain else ())


def _bind_env(model: CityModel, env: Mapping[str, Any] | None) -> dict[str, Any]:
    bound = {}
    for var, value in (env or {}).items():
        if isinstance(value, EntityRef):
            entity = model.lookup(value)
            if entity is None:
                raise LookupError(f"{value} is not declared in the model")
            value = entity
        bound[var] = value
    return bound


def eval_expr(expr: Expr, model: CityModel, env: Mapping[str, Any] | None = None) -> TruthValue:
    """Kleene value of ``expr``; ``env`` maps free variables to entities or EntityRefs."""
    return _Evaluator(model, explain=False).formula(expr, _bind_env(model, env)).value


def eval_rule(rule: RuleDef, model: CityModel) -> Verdict:
    """Judge one rule: true is compliant, false violated, unknown indeterminate."""
    out = _Evaluator(model, explain=True).formula(rule.expr, {})
    if out.value is T:
        return Compliant()
    if out.value is F:
        witnesses = out.reasons[:WITNESS_CAP] or (Witness(facts=(f"{format_expr(rule.expr)} is false",)),)
        return Violated(tuple(witnesses))
    return Indeterminate(out.unknowns or (format_expr(rule.expr),))
