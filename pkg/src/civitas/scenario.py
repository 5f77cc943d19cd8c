"""Text formats for city models (``.city``) and human-supplied facts (``.facts``).

A scenario looks like::

    scenario "FLASH Parking" {
      device Parking_device {
        title: "FLASH Parking"
        neighborhoods: ["Center City", Fairmount]
        movement: still
        ...
      }
      flow Parking_device -> G : resident_personal_data consent=denied
      flows_complete: false
    }

A facts file is a list of ``flow`` lines and ``set <entity>.<field> = <value>``
overrides.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from civitas.lexer import ParseError, SourceSpan, Token, TokenStream, quote, render_token
from civitas.model import (
    ENTITY_CLASSES,
    ENTITY_FIELDS,
    PRINCIPAL_KINDS,
    SHORT_KEYS,
    CityModel,
    Consent,
    DataFlow,
    EntityKind,
    EntityRef,
    PayloadKind,
    Provenance,
    UnknownValueError,
    coerce_field_value,
    normalize_token,
    resolve_field_key,
    token_key,
    validate_model,
)

REQUIRED_FIELDS = {
    EntityKind.DEVICE: tuple(ENTITY_FIELDS[EntityKind.DEVICE]),
    EntityKind.RESIDENTS: ("living_neighborhoods", "economic_status", "has_legitimate_authority"),
    EntityKind.GOVERNMENT: ("oversight_iot_safety", "enforce_safety_standards"),
    EntityKind.BUSINESS: ("scale", "neighborhoods"),
}

_DEFAULTS = {"text": "", "set": ()}


class ScenarioValidationError(ParseError):
    """The scenario parsed but describes an ill-formed model."""

    def __init__(self, message, span, issues):
        super().__init__(message, span)
        self.issues = issues


@dataclass(frozen=True)
class RefSpec:
    """Entity reference as written: a name, optionally qualified by kind."""

    name: str
    kind: EntityKind | None = None

    def __str__(self):
        return f"{self.kind.value} {self.name}" if self.kind else self.name


@dataclass(frozen=True)
class FlowFact:
    source: RefSpec
    dest: RefSpec
    payload: PayloadKind
    consent: Consent = Consent.UNKNOWN
    provenance: Provenance = field(default=Provenance.HUMAN_OVERRIDE, init=False)


@dataclass(frozen=True)
class FieldOverride:
    target: RefSpec
    field_name: str
    value: Any  # raw: str, int, or tuple of str
    provenance: Provenance = field(default=Provenance.HUMAN_OVERRIDE, init=False)


@dataclass(frozen=True)
class FactSet:
    flow_facts: tuple[FlowFact, ...] = ()
    field_overrides: tuple[FieldOverride, ...] = ()

    def __len__(self):
        return len(self.flow_facts) + len(self.field_overrides)


# ---------------------------------------------------------------------------
# Parsing


def _parse_value(ts: TokenStream) -> Any:
    tok = ts.peek()
    if ts.accept_op("["):
        items = []
        while not ts.at_op("]"):
            item = ts.next()
            if item.kind not in ("ident", "string", "int"):
                ts.error("expected a list item", item)
            items.append(str(item.value))
            if not ts.accept_op(","):
                break
        ts.expect_op("]", "to close the list")
        return tuple(items)
    if tok.kind in ("ident", "string"):
        ts.next()
        return tok.value
    if tok.kind == "int":
        ts.next()
        return tok.value
    ts.error("expected a value")


def _parse_name(ts: TokenStream, what: str) -> Token:
    tok = ts.peek()
    if tok.kind not in ("ident", "string"):
        ts.error(f"expected {what}")
    ts.next()
    if not normalize_token(tok.value):
        raise ParseError(f"{what} is empty", tok.span)
    return tok


_KIND_WORDS = {k.value: k for k in EntityKind}


def _parse_ref(ts: TokenStream) -> tuple[RefSpec, SourceSpan]:
    tok = ts.peek()
    nxt = ts.peek(1)
    if tok.kind == "ident" and tok.text.casefold() in _KIND_WORDS and nxt.kind in ("ident", "string"):
        ts.next()
        name = _parse_name(ts, "entity name")
        return RefSpec(normalize_token(name.value), _KIND_WORDS[tok.text.casefold()]), tok.span
    name = _parse_name(ts, "entity name")
    return RefSpec(normalize_token(name.value)), name.span


def _enum_word(ts: TokenStream, enum_cls, what: str):
    tok = ts.peek()
    if tok.kind not in ("ident", "string"):
        ts.error(f"expected {what}")
    ts.next()
    try:
        return enum_cls.parse(tok.value)
    except UnknownValueError as exc:
        raise ParseError(str(exc), tok.span) from None


def _parse_flow(ts: TokenStream):
    """Parse after the ``flow`` keyword; returns (src, dst, payload, attrs, spans)."""
    src, src_span = _parse_ref(ts)
    ts.expect_op("->", "between flow source and destination")
    dst, dst_span = _parse_ref(ts)
    ts.expect_op(":", "before the flow payload")
    payload = _enum_word(ts, PayloadKind, "payload kind")
    attrs: dict[str, Any] = {}
    while ts.at_word("consent", "provenance"):
        key_tok = ts.next()
        key = key_tok.text.casefold()
        if key in attrs:
            raise ParseError(f"duplicate {key} attribute", key_tok.span)
        ts.expect_op("=", f"after {key}")
        attrs[key] = _enum_word(ts, Consent if key == "consent" else Provenance, key)
    return src, dst, payload, attrs, (src_span, dst_span)


def _bool_setting(ts: TokenStream, name: str) -> bool:
    tok = ts.peek()
    if tok.kind == "ident" and tok.text.casefold() in ("true", "false"):
        ts.next()
        return tok.text.casefold() == "true"
    ts.error(f"expected true or false for {name}")


class _ScenarioParser:
    def __init__(self, text: str):
        self.ts = TokenStream(text)
        self.entity_spans: dict[tuple[str, str], SourceSpan] = {}
        self.flow_spans: list[tuple[SourceSpan, SourceSpan, SourceSpan]] = []
        self.setting_spans: dict[str, SourceSpan] = {}

    def parse(self) -> CityModel:
        ts = self.ts
        if ts.peek().kind == "eof":
            raise ParseError("no scenario block", ts.peek().span)
        ts.expect_word("scenario")
        name_tok = _parse_name(ts, "scenario name")
        ts.expect_op("{", "to open the scenario block")
        entities: dict[EntityKind, list] = {k: [] for k in PRINCIPAL_KINDS}
        raw_flows = []
        settings: dict[str, Any] = {}
        while not ts.at_op("}"):
            tok = ts.peek()
            word = tok.text.casefold() if tok.kind == "ident" else ""
            if word in ("device", "residents", "government", "business"):
                ts.next()
                entities[EntityKind(word)].append(self._entity(EntityKind(word)))
            elif word == "flow":
                ts.next()
                src, dst, payload, attrs, spans = _parse_flow(ts)
                raw_flows.append((src, dst, payload, attrs, spans, tok.span))
            elif word in ("flows_complete", "total_neighborhoods"):
                ts.next()
                if word in settings:
                    raise ParseError(f"duplicate setting {word}", tok.span)
                ts.expect_op(":", f"after {word}")
                if word == "flows_complete":
                    settings[word] = _bool_setting(ts, word)
                else:
                    num = ts.peek()
                    if num.kind != "int":
                        ts.error("expected a neighborhood count")
                    ts.next()
                    settings[word] = num.value
                self.setting_spans[word] = tok.span
            elif tok.kind == "eof":
                ts.error("expected '}' to close the scenario block")
            else:
                ts.error("expected device, residents, government, business, flow, flows_complete or total_neighborhoods")
            while ts.accept_op(",") or ts.accept_op(";"):
                pass
        ts.expect_op("}")
        if ts.peek().kind != "eof":
            ts.error("unexpected text after the scenario block")

        flows = []
        for index, (src, dst, payload, attrs, spans, flow_span) in enumerate(raw_flows):
            source = self._resolve(entities, src, spans[0])
            dest = self._resolve(entities, dst, spans[1])
            flows.append(
                DataFlow(
                    source,
                    dest,
                    payload,
                    attrs.get("consent", Consent.UNKNOWN),
                    attrs.get("provenance", Provenance.SCENARIO),
                )
            )
            self.flow_spans.append(flow_span)

        model = CityModel(
            scenario_name=normalize_token(name_tok.value),
            devices=tuple(entities[EntityKind.DEVICE]),
            resident_groups=tuple(entities[EntityKind.RESIDENTS]),
            governments=tuple(entities[EntityKind.GOVERNMENT]),
            businesses=tuple(entities[EntityKind.BUSINESS]),
            flows=tuple(flows),
            flows_complete=settings.get("flows_complete", False),
            declared_total_neighborhoods=settings.get("total_neighborhoods"),
        )
        issues = validate_model(model)
        if issues:
            first = issues[0]
            raise ScenarioValidationError(
                "; ".join(str(i) for i in issues), self._issue_span(first.path, name_tok.span), issues
            )
        return model

    def _entity(self, kind: EntityKind):
        ts = self.ts
        name_tok = _parse_name(ts, f"{kind.value} name")
        name = normalize_token(name_tok.value)
        self.entity_spans.setdefault((kind.value, token_key(name)), name_tok.span)
        ts.expect_op("{", f"to open {kind.value} {name}")
        values: dict[str, Any] = {}
        while not ts.at_op("}"):
            key_tok = ts.expect_ident(f"a {kind.value} field name or '}}'")
            fname = resolve_field_key(kind, key_tok.text)
            if fname is None:
                options = sorted(set(SHORT_KEYS[kind]) | set(ENTITY_FIELDS[kind]))
                raise ParseError(str(UnknownValueError(f"{kind.value} field", key_tok.text, options)), key_tok.span)
            if fname in values:
                raise ParseError(f"duplicate field {key_tok.text} in {kind.value} {name}", key_tok.span)
            ts.expect_op(":", f"after {key_tok.text}")
            value_tok = ts.peek()
            raw = _parse_value(ts)
            try:
                values[fname] = coerce_field_value(kind, fname, raw)
            except ValueError as exc:
                raise ParseError(str(exc), value_tok.span) from None
            while ts.accept_op(",") or ts.accept_op(";"):
                pass
        ts.expect_op("}")
        missing = [f for f in REQUIRED_FIELDS[kind] if f not in values]
        if missing:
            raise ParseError(f"{kind.value} {name} is missing required fields: {', '.join(missing)}", name_tok.span)
        for fname, ftype in ENTITY_FIELDS[kind].items():
            if fname not in values:
                values[fname] = () if ftype.is_set else _DEFAULTS["text"]
        return ENTITY_CLASSES[kind](name=name, **values)

    def _resolve(self, entities, ref: RefSpec, span: SourceSpan) -> EntityRef:
        if ref.kind is EntityKind.EXTERNAL:
            return EntityRef(EntityKind.EXTERNAL, ref.name)
        kinds = [ref.kind] if ref.kind else list(PRINCIPAL_KINDS)
        key = token_key(ref.name)
        found = [e.ref for k in kinds for e in entities[k] if token_key(e.name) == key]
        if not found:
            raise ScenarioValidationError(
                f"DanglingRef: flow references undeclared entity {ref}", span, []
            )
        if len(found) > 1 and len({f.kind for f in found}) > 1:
            kinds_text = ", ".join(f.kind.value for f in found)
            raise ParseError(f"ambiguous entity {ref.name!r} ({kinds_text}); qualify it with its kind", span)
        return found[0]

    def _issue_span(self, path: tuple, default: SourceSpan) -> SourceSpan:
        if path and path[0] == "flows" and path[1] < len(self.flow_spans):
            return self.flow_spans[path[1]]
        if len(path) == 2 and (path[0], token_key(str(path[1]))) in self.entity_spans:
            return self.entity_spans[(path[0], token_key(str(path[1])))]
        if path and path[0] in self.setting_spans:
            return self.setting_spans[path[0]]
        return default


def parse_scenario(text: str) -> CityModel:
    """Parse ``.city`` text into a validated model.

    Raises ParseError (with a SourceSpan) on syntax errors, unknown
    vocabulary, or validation issues.
    """
    return _ScenarioParser(text).parse()


def parse_facts(text: str) -> FactSet:
    """Parse ``.facts`` text; every entry is tagged as a human override."""
    ts = TokenStream(text)
    flows: list[FlowFact] = []
    overrides: list[FieldOverride] = []
    seen: dict[tuple, SourceSpan] = {}
    while ts.peek().kind != "eof":
        tok = ts.peek()
        if ts.at_word("flow"):
            ts.next()
            src, dst, payload, attrs, _ = _parse_flow(ts)
            if "provenance" in attrs:
                raise ParseError("facts are always human overrides; drop the provenance attribute", tok.span)
            flows.append(FlowFact(src, dst, payload, attrs.get("consent", Consent.UNKNOWN)))
        elif ts.at_word("set"):
            ts.next()
            target, _ = _parse_ref(ts)
            ts.expect_op(".", "between entity and field")
            field_tok = ts.expect_ident("field name")
            ts.expect_op("=", "after the field name")
            value = _parse_value(ts)
            key = (token_key(target.name), target.kind, token_key(field_tok.text))
            if key in seen:
                raise ParseError(
                    f"conflicting override of {target.name}.{field_tok.text} (first set at {seen[key]})", field_tok.span
                )
            seen[key] = field_tok.span
            overrides.append(FieldOverride(target, token_key(field_tok.text), value))
        else:
            ts.error("expected 'flow' or 'set'")
        while ts.accept_op(",") or ts.accept_op(";"):
            pass
    return FactSet(tuple(flows), tuple(overrides))


# ---------------------------------------------------------------------------
# Rendering


def _render_scalar(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if hasattr(value, "value") and not isinstance(value, str):
        return value.value
    if isinstance(value, int):
        return str(value)
    return render_token(str(value))


def render_value(value: Any) -> str:
    if isinstance(value, tuple):
        return "[" + ", ".join(_render_scalar(v) for v in value) + "]"
    return _render_scalar(value)


def _key_for(kind: EntityKind, fname: str) -> str:
    for short, full in SHORT_KEYS[kind].items():
        if full == fname:
            return short
    return fname


def _render_ref(model: CityModel, ref: EntityRef) -> str:
    name = render_token(ref.name)
    if ref.kind is EntityKind.EXTERNAL:
        return f"external {name}"
    key = token_key(ref.name)
    clashes = sum(1 for k in PRINCIPAL_KINDS for e in model.entities(k) if token_key(e.name) == key)
    return f"{ref.kind.value} {name}" if clashes > 1 else name


def render_flow(model: CityModel, flow: DataFlow) -> str:
    line = f"flow {_render_ref(model, flow.source)} -> {_render_ref(model, flow.dest)} : {flow.payload.value}"
    if flow.consent is not Consent.UNKNOWN:
        line += f" consent={flow.consent.value}"
    if flow.provenance is not Provenance.SCENARIO:
        line += f" provenance={flow.provenance.value}"
    return line


def render_scenario(model: CityModel) -> str:
    """Canonical text for ``model``; ``parse_scenario`` inverts it exactly."""
    lines = [f"scenario {quote(model.scenario_name)} {{"]
    blocks = []
    for kind in PRINCIPAL_KINDS:
        for entity in model.entities(kind):
            block = [f"  {kind.value} {render_token(entity.name)} {{"]
            for fname in ENTITY_FIELDS[kind]:
                block.append(f"    {_key_for(kind, fname)}: {render_value(getattr(entity, fname))}")
            block.append("  }")
            blocks.append("\n".join(block))
    tail = [f"  {render_flow(model, flow)}" for flow in model.flows]
    if model.flows_complete:
        tail.append("  flows_complete: true")
    if model.declared_total_neighborhoods is not None:
        tail.append(f"  total_neighborhoods: {model.declared_total_neighborhoods}")
    if tail:
        blocks.append("\n".join(tail))
    if blocks:
        lines.append("\n\n".join(blocks))
    lines.append("}")
    return "\n".join(lines) + "\n"


def _render_refspec(ref: RefSpec) -> str:
    name = render_token(ref.name)
    return f"{ref.kind.value} {name}" if ref.kind else name


def render_facts(facts: FactSet) -> str:
    lines = []
    for fact in facts.flow_facts:
        line = f"flow {_render_refspec(fact.source)} -> {_render_refspec(fact.dest)} : {fact.payload.value}"
        if fact.consent is not Consent.UNKNOWN:
            line += f" consent={fact.consent.value}"
        lines.append(line)
    for override in facts.field_overrides:
        lines.append(f"set {_render_refspec(override.target)}.{override.field_name} = {render_value(override.value)}")
    return "\n".join(lines) + ("\n" if lines else "")
