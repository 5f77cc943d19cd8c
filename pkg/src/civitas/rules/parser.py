"""Parser and type checker for the ``.rules`` language.

Grammar (informal)::

    rule    := 'rule' ID attr* ':' expr
    attr    := 'right=' ID | 'perspective=' ROLE '-' ROLE | 'statement=' STRING
    expr    := quant | or ('implies' expr)?
    quant   := ('forall' | 'exists') ID 'in' DOMAIN (',' ID 'in' DOMAIN)* ':' expr
    or      := and ('or' and)*
    and     := not ('and' not)*
    not     := 'not' not | primary
    primary := '(' expr ')' | quant | 'exists'? flow | atom
    flow    := 'flow' '(' KIND|'*' '->' KIND|'*' ':' PAYLOAD (',' 'consent' '=' CONSENT|'*')? ')'
    atom    := term (CMP term | 'in' term)?
    term    := [INT '*'] (var '.' field | 'card' '(' term ')' | 'universe' | literal | '{' literal,* '}')

Bare identifiers that are not bound variables are literals whose type comes
from the other operand; type errors are reported at parse time.
"""

from __future__ import annotations

from dataclasses import dataclass

from civitas.lexer import ParseError, SourceSpan, Token, TokenStream
from civitas.model import (
    ENTITY_FIELDS,
    GOAL_TAGS,
    HIDDEN_FIELDS,
    Consent,
    EntityKind,
    FieldType,
    NeighborhoodId,
    PayloadKind,
    UnknownValueError,
    token_key,
)
from civitas.rules.ast import (
    BOOL,
    DOMAIN_NAMES,
    INT,
    KEYWORDS,
    PERSPECTIVE_ROLES,
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
)


class RuleTypeError(ParseError):
    """A well-formed rule whose operands or fields do not type-check."""


_DOMAINS = {name: kind for kind, name in DOMAIN_NAMES.items()}
_DOMAINS.update({"residents": EntityKind.RESIDENTS})

_CMP_OPS = {"=": "=", "!=": "!=", "≠": "!=", ">=": ">=", "≥": ">=", "<=": "<=", "≤": "<=", ">": ">", "<": "<"}
_ORDER_OPS = {">=", "<=", ">", "<"}


@dataclass(frozen=True)
class _Pending:
    """Literal whose type is not yet known."""

    text: str
    span: SourceSpan


@dataclass(frozen=True)
class _PendingSet:
    items: tuple
    span: SourceSpan


class _RuleParser:
    def __init__(self, text: str):
        self.ts = TokenStream(text)
        self.scope: dict[str, EntityKind] = {}

    # -- rules --------------------------------------------------------------

    def rule(self) -> RuleDef:
        ts = self.ts
        ts.expect_word("rule")
        id_tok = ts.expect_ident("rule id")
        if id_tok.text in KEYWORDS:
            raise ParseError(f"rule id {id_tok.text!r} is a reserved word", id_tok.span)
        attrs: dict[str, Token] = {}
        while ts.at_word("right", "perspective", "statement"):
            key_tok = ts.next()
            key = key_tok.text.casefold()
            if key in attrs:
                raise ParseError(f"duplicate attribute {key}", key_tok.span)
            ts.expect_op("=", f"after {key}")
            value = ts.next()
            if value.kind not in ("ident", "string"):
                ts.error(f"expected a value for {key}", value)
            attrs[key] = value
        if "right" not in attrs:
            ts.error(f"rule {id_tok.text} needs right=<right>")
        if "perspective" not in attrs:
            ts.error(f"rule {id_tok.text} needs perspective=<role>-<role>")
        try:
            right = Right.parse(attrs["right"].value)
        except UnknownValueError as exc:
            raise ParseError(str(exc), attrs["right"].span) from None
        perspective = self._perspective(attrs["perspective"])
        statement = str(attrs["statement"].value).strip() if "statement" in attrs else ""
        ts.expect_op(":", "before the rule body")
        expr = self.expr()
        return RuleDef(id_tok.text, right, perspective, statement, expr)

    def _perspective(self, tok: Token) -> tuple[str, str]:
        parts = [p.strip() for p in str(tok.value).casefold().split("-")]
        if len(parts) != 2 or not all(p in PERSPECTIVE_ROLES for p in parts):
            raise ParseError(
                f"perspective must be <role>-<role> with roles from {{{', '.join(PERSPECTIVE_ROLES)}}}", tok.span
            )
        return (parts[0], parts[1])

    # -- formulas -----------------------------------------------------------

    def expr(self):
        if self.ts.at_word("forall", "exists") and not self._at_exists_flow():
            return self.quantifier()
        left = self.or_expr()
        if self.ts.at_word("implies"):
            self.ts.next()
            return Implies(left, self.expr())
        return left

    def _at_exists_flow(self) -> bool:
        ts = self.ts
        return ts.at_word("exists") and ts.peek(1).kind == "ident" and ts.peek(1).text == "flow"

    def quantifier(self):
        ts = self.ts
        word = ts.next().text
        binders = []
        while True:
            var_tok = ts.expect_ident("variable name")
            var = var_tok.text
            if var in KEYWORDS:
                raise ParseError(f"{var!r} is a reserved word", var_tok.span)
            if var in self.scope or any(v == var for v, _ in binders):
                raise RuleTypeError(f"variable {var} is already bound", var_tok.span)
            ts.expect_word("in")
            dom_tok = ts.expect_ident("a domain (devices, resident_groups, governments, businesses)")
            domain = _DOMAINS.get(dom_tok.text.casefold())
            if domain is None:
                raise ParseError(
                    str(UnknownValueError("domain", dom_tok.text, sorted(DOMAIN_NAMES.values()))), dom_tok.span
                )
            binders.append((var, domain))
            if not ts.accept_op(","):
                break
        ts.expect_op(":", "after the quantifier binders")
        saved = dict(self.scope)
        for var, domain in binders:
            self.scope[var] = domain
        body = self.expr()
        self.scope = saved
        node_cls = Forall if word == "forall" else Exists
        for var, domain in reversed(binders):
            body = node_cls(var, domain, body)
        return body

    def or_expr(self):
        operands = [self.and_expr()]
        while self.ts.at_word("or"):
            self.ts.next()
            operands.append(self.and_expr())
        return operands[0] if len(operands) == 1 else Or(tuple(operands))

    def and_expr(self):
        operands = [self.not_expr()]
        while self.ts.at_word("and"):
            self.ts.next()
            operands.append(self.not_expr())
        return operands[0] if len(operands) == 1 else And(tuple(operands))

    def not_expr(self):
        if self.ts.at_word("not"):
            self.ts.next()
            return Not(self.not_expr())
        return self.primary()

    def primary(self):
        ts = self.ts
        if ts.accept_op("("):
            inner = self.expr()
            ts.expect_op(")", "to close the parenthesis")
            return inner
        if self._at_exists_flow():
            ts.next()
            return self.flow()
        if ts.at_word("forall", "exists"):
            return self.quantifier()
        if ts.peek().kind == "ident" and ts.peek().text == "flow" and ts.peek(1).text == "(":
            return self.flow()
        return self.atom()

    def flow(self) -> FlowExists:
        ts = self.ts
        ts.expect_word("flow")
        ts.expect_op("(", "after flow")
        source = self._pattern()
        ts.expect_op("->", "between flow patterns")
        dest = self._pattern()
        ts.expect_op(":", "before the payload")
        pay_tok = ts.expect_ident("payload kind")
        try:
            payload = PayloadKind.parse(pay_tok.text)
        except UnknownValueError as exc:
            raise ParseError(str(exc), pay_tok.span) from None
        consent = None
        if ts.accept_op(","):
            ts.expect_word("consent")
            ts.expect_op("=", "after consent")
            if not ts.accept_op("*"):
                c_tok = ts.expect_ident("granted, denied or *")
                try:
                    consent = Consent.parse(c_tok.text)
                except UnknownValueError as exc:
                    raise ParseError(str(exc), c_tok.span) from None
                if consent is Consent.UNKNOWN:
                    raise ParseError("a flow pattern matches consent=granted, denied or *", c_tok.span)
        ts.expect_op(")", "to close flow(...)")
        return FlowExists(source, dest, payload, consent)

    def _pattern(self) -> EntityKind | None:
        ts = self.ts
        if ts.accept_op("*"):
            return None
        tok = ts.expect_ident("an entity kind or *")
        try:
            return EntityKind.parse(tok.text)
        except UnknownValueError as exc:
            raise ParseError(str(exc), tok.span) from None

    # -- atoms --------------------------------------------------------------

    def atom(self):
        ts = self.ts
        start = ts.peek()
        lhs_factor, lhs = self.scaled_term()
        tok = ts.peek()
        if tok.kind == "op" and tok.text in _CMP_OPS:
            op = _CMP_OPS[ts.next().text]
            rhs_factor, rhs = self.scaled_term()
            if lhs_factor is not None or rhs_factor is not None:
                return self._scaled(op, lhs_factor or 1, lhs, rhs_factor or 1, rhs, tok.span)
            return self._compare(op, lhs, rhs, tok.span)
        if lhs_factor is not None:
            ts.error("expected a comparison after a scaled term")
        if ts.at_word("in"):
            in_tok = ts.next()
            coll = self.term()
            return self._member(lhs, coll, in_tok.span)
        if isinstance(lhs, (_Pending, _PendingSet)):
            raise RuleTypeError(f"{start.text!r} is not a condition", start.span)
        if lhs.type != BOOL:
            raise RuleTypeError(f"{start.text} has type {lhs.type}, expected a boolean condition", start.span)
        return lhs

    def scaled_term(self):
        ts = self.ts
        if ts.peek().kind == "int" and ts.peek(1).kind == "op" and ts.peek(1).text == "*":
            factor = ts.next().value
            ts.next()
            return factor, self.term()
        return None, self.term()

    def term(self):
        ts = self.ts
        tok = ts.peek()
        if tok.kind == "int":
            ts.next()
            return Literal(tok.value, INT)
        if tok.kind == "string":
            ts.next()
            return _Pending(str(tok.value), tok.span)
        if tok.kind == "op" and tok.text == "{":
            ts.next()
            items = []
            while not ts.at_op("}"):
                item = ts.next()
                if item.kind not in ("ident", "string", "int"):
                    ts.error("expected a set element", item)
                items.append(_Pending(str(item.value), item.span))
                if not ts.accept_op(","):
                    break
            ts.expect_op("}", "to close the set")
            return _PendingSet(tuple(items), tok.span)
        if tok.kind != "ident":
            ts.error("expected a term")
        ts.next()
        word = tok.text
        if word in ("true", "false"):
            return Literal(word == "true", BOOL)
        if word == "card":
            ts.expect_op("(", "after card")
            inner_tok = ts.peek()
            arg = self.term()
            ts.expect_op(")", "to close card(...)")
            if isinstance(arg, _PendingSet) or isinstance(arg, _Pending) or not arg.type.is_set:
                raise RuleTypeError(f"card(...) needs a set-valued field or universe, got {inner_tok.text!r}", inner_tok.span)
            return Card(arg)
        if word == "universe":
            return Universe()
        if word in self.scope:
            kind = self.scope[word]
            ts.expect_op(".", f"after variable {word}")
            field_tok = ts.expect_ident("field name")
            fname = token_key(field_tok.text)
            fields = ENTITY_FIELDS[kind]
            if fname not in fields or (kind, fname) in HIDDEN_FIELDS:
                visible = [f for f in fields if (kind, f) not in HIDDEN_FIELDS]
                raise RuleTypeError(
                    f"unknown field {field_tok.text} on {kind.value} (variable {word}); fields: {', '.join(visible)}",
                    field_tok.span,
                )
            return FieldAccess(word, fname, kind, fields[fname])
        if ts.at_op("."):
            raise RuleTypeError(f"unbound variable {word}", tok.span)
        return _Pending(tok.value, tok.span)

    # -- typing -------------------------------------------------------------

    def _resolve(self, pending, ftype: FieldType):
        if isinstance(pending, _PendingSet):
            if not ftype.is_set:
                raise RuleTypeError(f"a set literal cannot stand for {ftype}", pending.span)
            elem = ftype.element()
            return SetLiteral(tuple(self._resolve(p, elem).value for p in pending.items), ftype)
        if not isinstance(pending, _Pending):
            return pending
        if ftype.is_set:
            raise RuleTypeError(f"{pending.text!r} is a single value, expected {ftype}", pending.span)
        text = pending.text
        try:
            if ftype.base == "enum":
                return Literal(ftype.enum.parse(text), ftype)
            if ftype.base == "goal":
                tag = token_key(text)
                if tag not in GOAL_TAGS:
                    raise UnknownValueError("goal tag", text, GOAL_TAGS)
                return Literal(tag, ftype)
            if ftype.base == "neighborhood":
                return Literal(NeighborhoodId(text), ftype)
            if ftype.base == "text":
                return Literal(text.strip(), ftype)
        except ValueError as exc:
            raise RuleTypeError(str(exc), pending.span) from None
        raise RuleTypeError(f"{text!r} is not a valid {ftype}", pending.span)

    def _compare(self, op, lhs, rhs, span):
        lhs_pending = isinstance(lhs, (_Pending, _PendingSet))
        rhs_pending = isinstance(rhs, (_Pending, _PendingSet))
        if lhs_pending and rhs_pending:
            raise RuleTypeError("cannot infer the type of a comparison between two literals", span)
        if lhs_pending:
            lhs = self._resolve(lhs, rhs.type)
        elif rhs_pending:
            rhs = self._resolve(rhs, lhs.type)
        if lhs.type != rhs.type:
            raise RuleTypeError(f"cannot compare {lhs.type} with {rhs.type}", span)
        if op in _ORDER_OPS and lhs.type != INT:
            raise RuleTypeError(f"'{op}' needs integer operands, got {lhs.type}", span)
        return Compare(op, lhs, rhs)

    def _scaled(self, op, lf, lhs, rf, rhs, span):
        for side in (lhs, rhs):
            if isinstance(side, (_Pending, _PendingSet)) or side.type != INT:
                raise RuleTypeError("scaled comparisons need integer operands", span)
        return ScaledCompare(op, lf, lhs, rf, rhs)

    def _member(self, elem, coll, span):
        elem_pending = isinstance(elem, (_Pending, _PendingSet))
        if isinstance(coll, _Pending):
            raise RuleTypeError(f"{coll.text!r} is not a set", coll.span)
        if isinstance(coll, _PendingSet):
            if elem_pending:
                raise RuleTypeError("cannot infer the type of a membership test between literals", span)
            if elem.type.is_set:
                raise RuleTypeError(f"membership needs a single value on the left, got {elem.type}", span)
            coll = self._resolve(coll, FieldType(elem.type.base, elem.type.enum, True))
            return Member(elem, coll)
        if not coll.type.is_set:
            raise RuleTypeError(f"'in' needs a set on the right, got {coll.type}", span)
        elem = self._resolve(elem, coll.type.element())
        if elem.type != coll.type.element():
            raise RuleTypeError(f"cannot test {elem.type} for membership in {coll.type}", span)
        return Member(elem, coll)


def parse_rule(text: str) -> RuleDef:
    """Parse exactly one ``rule`` definition."""
    parser = _RuleParser(text)
    rule = parser.rule()
    if parser.ts.peek().kind != "eof":
        parser.ts.error("unexpected text after the rule")
    return rule


def parse_rules(text: str, name: str = "rules") -> RuleSet:
    """Parse a ``.rules`` file holding any number of rule definitions."""
    parser = _RuleParser(text)
    rules: list[RuleDef] = []
    seen: set[str] = set()
    while parser.ts.peek().kind != "eof":
        id_tok = parser.ts.peek(1)
        rule = parser.rule()
        if rule.id.casefold() in seen:
            raise ParseError(f"duplicate rule id {rule.id}", id_tok.span)
        seen.add(rule.id.casefold())
        rules.append(rule)
    return RuleSet(name, tuple(rules))


def parse_expr(text: str, scope: dict[str, EntityKind] | None = None):
    """Parse a bare rule expression, optionally with pre-bound variables."""
    parser = _RuleParser(text)
    parser.scope = dict(scope or {})
    expr = parser.expr()
    if parser.ts.peek().kind != "eof":
        parser.ts.error("unexpected text after the expression")
    return expr
