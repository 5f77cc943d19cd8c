"""Bounded counterexample search for rules.

Candidates are enumerated in a fixed order: entity counts ascending (by total,
then lexicographically), then field assignments (odometer order over each
field's values, last field fastest), then flow sets (by size, then
combination order).  Every candidate is judged closed-world, so flow atoms are
two-valued and a hit is a definite violation.

Three reductions keep desk-scale scopes tractable without losing any
violation:

* Only the rule's footprint is enumerated.  Kinds the rule never quantifies
  over or names in a flow pattern stay empty, and fields it never reads are
  pinned to their first valid value.
* Entities of one kind are generated as sorted multisets of field
  assignments, so renamings are never revisited.
* Flow atoms only see (source kind, dest kind, payload, consent), so flows
  are drawn from one representative endpoint per kind, restricted to
  payloads and kinds some atom can match.  Unknown consent is skipped: it
  can only turn a definite atom into an unknown one, never create a
  violation that granted or denied would not.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, fields, replace
from typing import ClassVar, Iterator, Union

from civitas.model import (
    ENTITY_CLASSES,
    ENTITY_FIELDS,
    GOAL_TAGS,
    PRINCIPAL_KINDS,
    CityModel,
    Consent,
    DataFlow,
    EntityKind,
    EntityRef,
    FieldType,
    NeighborhoodId,
    PayloadKind,
    validate_model,
)
from civitas.rules.ast import Exists, FieldAccess, FlowExists, Forall, RuleDef, Universe
from civitas.rules.evaluate import Violated, eval_expr, eval_rule
from civitas.rules.truth import TruthValue

TEXT_ALPHABET = ("t0", "t1")
COUNTEREXAMPLE_NAME = "counterexample"

_SCOPE_KEYS = {
    "devices": "max_devices",
    "device": "max_devices",
    "residents": "max_resident_groups",
    "resident_groups": "max_resident_groups",
    "governments": "max_governments",
    "government": "max_governments",
    "businesses": "max_businesses",
    "business": "max_businesses",
    "neighborhoods": "neighborhood_universe_size",
    "universe": "neighborhood_universe_size",
    "flows": "max_flows",
    "set_card": "max_set_card",
    "sets": "max_set_card",
    "budget": "candidate_budget",
}


@dataclass(frozen=True)
class Scope:
    max_devices: int = 3
    max_resident_groups: int = 3
    max_governments: int = 3
    max_businesses: int = 3
    neighborhood_universe_size: int = 5
    max_flows: int = 4
    max_set_card: int = 3
    candidate_budget: int = 5_000_000

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError(f"scope bound {f.name} must be an integer, got {value!r}")
            if value < 0:
                raise ValueError(f"scope bound {f.name} must be >= 0, got {value}")
        if self.candidate_budget < 1:
            raise ValueError("candidate_budget must be >= 1")

    def max_count(self, kind: EntityKind) -> int:
        return {
            EntityKind.DEVICE: self.max_devices,
            EntityKind.RESIDENTS: self.max_resident_groups,
            EntityKind.GOVERNMENT: self.max_governments,
            EntityKind.BUSINESS: self.max_businesses,
        }[kind]


def parse_scope(text: str, base: Scope | None = None) -> Scope:
    """Parse ``devices=1,residents=1,neighborhoods=3,flows=2``; unset keys keep ``base``."""
    values = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        key, sep, raw = part.partition("=")
        key = key.strip().casefold()
        if not sep or key not in _SCOPE_KEYS:
            raise ValueError(f"bad scope entry {part!r}; use key=count with keys {', '.join(sorted(set(_SCOPE_KEYS)))}")
        try:
            values[_SCOPE_KEYS[key]] = int(raw.strip())
        except ValueError:
            raise ValueError(f"scope entry {part!r} needs an integer count") from None
    return replace(base or Scope(), **values)


@dataclass(frozen=True)
class HoldsWithinScope:
    candidates_examined: int
    status: ClassVar[str] = "holds"


@dataclass(frozen=True)
class Counterexample:
    model: CityModel
    candidates_examined: int
    status: ClassVar[str] = "counterexample"


@dataclass(frozen=True)
class BudgetExhausted:
    candidates_examined: int
    status: ClassVar[str] = "budget_exhausted"


CheckResult = Union[HoldsWithinScope, Counterexample, BudgetExhausted]


# ---------------------------------------------------------------------------
# Footprint


@dataclass(frozen=True)
class Footprint:
    """What a rule can observe in a model."""

    kinds: tuple[EntityKind, ...]  # kinds that get entities, canonical order
    fields: frozenset[tuple[EntityKind, str]]
    uses_neighborhoods: bool
    flow_atoms: tuple[FlowExists, ...]


def _walk(expr) -> Iterator:
    yield expr
    for f in fields(expr) if hasattr(expr, "__dataclass_fields__") else ():
        value = getattr(expr, f.name)
        if isinstance(value, tuple):
            for item in value:
                if hasattr(item, "__dataclass_fields__"):
                    yield from _walk(item)
        elif hasattr(value, "__dataclass_fields__") and not isinstance(value, (FieldType, NeighborhoodId)):
            yield from _walk(value)


def rule_footprint(expr) -> Footprint:
    kinds: set[EntityKind] = set()
    used: set[tuple[EntityKind, str]] = set()
    uses_universe = False
    atoms: list[FlowExists] = []
    for node in _walk(expr):
        if isinstance(node, (Forall, Exists)):
            kinds.add(node.domain)
        elif isinstance(node, FieldAccess):
            kinds.add(node.kind)
            used.add((node.kind, node.field))
        elif isinstance(node, Universe):
            uses_universe = True
        elif isinstance(node, FlowExists):
            if node not in atoms:
                atoms.append(node)
            for end in (node.source, node.dest):
                if end is not None and end is not EntityKind.EXTERNAL:
                    kinds.add(end)
    # A wildcard endpoint is stood in for by an external entity, unless some
    # pattern names external explicitly; then every principal kind may be needed.
    named_external = any(EntityKind.EXTERNAL in (a.source, a.dest) for a in atoms)
    has_wildcard = any(None in (a.source, a.dest) for a in atoms)
    if named_external and has_wildcard:
        kinds.update(PRINCIPAL_KINDS)
    # favored must stay inside living, so reading favored means varying living too.
    if (EntityKind.RESIDENTS, "favored_neighborhoods") in used:
        used.add((EntityKind.RESIDENTS, "living_neighborhoods"))
    uses_neighborhoods = uses_universe or any(ENTITY_FIELDS[k][f].base == "neighborhood" for k, f in used)
    return Footprint(
        tuple(k for k in PRINCIPAL_KINDS if k in kinds),
        frozenset(used),
        uses_neighborhoods,
        tuple(atoms),
    )


# ---------------------------------------------------------------------------
# Value domains


def _subsets(items: tuple, max_card: int, nonempty: bool = False) -> list[tuple]:
    out = []
    for size in range(1 if nonempty else 0, min(max_card, len(items)) + 1):
        out.extend(itertools.combinations(items, size))
    return out


def _scalar_domain(ftype: FieldType, universe: tuple) -> tuple:
    if ftype.base == "bool":
        return (False, True)
    if ftype.base == "enum":
        return tuple(ftype.enum)
    if ftype.base == "goal":
        return GOAL_TAGS
    if ftype.base == "neighborhood":
        return universe
    return TEXT_ALPHABET


def field_domain(kind: EntityKind, name: str, universe: tuple, max_set_card: int) -> list:
    """Values a field may take inside a scope, in enumeration order."""
    ftype = ENTITY_FIELDS[kind][name]
    scalars = _scalar_domain(ftype.element(), universe)
    if not ftype.is_set:
        return list(scalars)
    nonempty = (kind, name) in ((EntityKind.RESIDENTS, "economic_status"), (EntityKind.BUSINESS, "neighborhoods"))
    return _subsets(scalars, max_set_card, nonempty)


def _assignments(kind: EntityKind, footprint: Footprint, universe: tuple, scope: Scope) -> list[dict]:
    names = list(ENTITY_FIELDS[kind])
    domains = []
    for name in names:
        domain = field_domain(kind, name, universe, scope.max_set_card)
        if not domain:
            return []
        domains.append(domain if (kind, name) in footprint.fields else domain[:1])
    out = []
    for combo in itertools.product(*domains):
        values = dict(zip(names, combo))
        if kind is EntityKind.RESIDENTS and not set(values["favored_neighborhoods"]) <= set(
            values["living_neighborhoods"]
        ):
            continue
        out.append(values)
    return out


def _multisets(options: list, count: int) -> Iterator[tuple]:
    return itertools.combinations_with_replacement(range(len(options)), count)


def _count_vectors(kinds: tuple[EntityKind, ...], scope: Scope) -> list[tuple[int, ...]]:
    ranges = [range(scope.max_count(k) + 1) for k in kinds]
    return sorted(itertools.product(*ranges), key=lambda v: (sum(v), v))


# ---------------------------------------------------------------------------
# Flow pool


def _entity_name(kind: EntityKind, index: int) -> str:
    return f"{kind.value}{index}"


def _flow_pool(footprint: Footprint, counts: dict[EntityKind, int]) -> list[DataFlow]:
    present = [k for k in PRINCIPAL_KINDS if counts.get(k, 0) > 0]
    endpoints = present + [EntityKind.EXTERNAL]
    pool = []
    for src_kind in endpoints:
        for dst_kind in endpoints:
            for payload in PayloadKind:
                if src_kind is EntityKind.EXTERNAL and payload is PayloadKind.PROJECT_GOALS:
                    continue
                if not any(
                    a.payload is payload and a.source in (None, src_kind) and a.dest in (None, dst_kind)
                    for a in footprint.flow_atoms
                ):
                    continue
                src = EntityRef(src_kind, "ext0" if src_kind is EntityKind.EXTERNAL else _entity_name(src_kind, 0))
                if dst_kind is EntityKind.EXTERNAL:
                    dst = EntityRef(dst_kind, "ext1" if src_kind is EntityKind.EXTERNAL else "ext0")
                elif dst_kind is src_kind and payload is not PayloadKind.GENERIC_MESSAGE:
                    if counts[dst_kind] < 2:
                        continue
                    dst = EntityRef(dst_kind, _entity_name(dst_kind, 1))
                else:
                    dst = EntityRef(dst_kind, _entity_name(dst_kind, 0))
                for consent in (Consent.GRANTED, Consent.DENIED):
                    pool.append(DataFlow(src, dst, payload, consent))
    return pool


# ---------------------------------------------------------------------------
# Search


def _universe_sizes(footprint: Footprint, counts: dict[EntityKind, int], scope: Scope) -> range:
    if footprint.uses_neighborhoods:
        return range(scope.neighborhood_universe_size + 1)
    # Neighborhoods are invisible to the rule; only businesses need one.
    smallest = 1 if counts.get(EntityKind.BUSINESS, 0) > 0 else 0
    return range(smallest, min(smallest, scope.neighborhood_universe_size) + 1)


def _entity_groups(kinds, counts, options) -> Iterator[tuple]:
    """Lazy product over kinds of sorted multisets of field assignments."""
    if not kinds:
        yield ()
        return
    kind, rest = kinds[0], kinds[1:]
    for combo in _multisets(options[kind], counts[kind]):
        entities = tuple(
            ENTITY_CLASSES[kind](name=_entity_name(kind, i), **options[kind][j]) for i, j in enumerate(combo)
        )
        for tail in _entity_groups(rest, counts, options):
            yield (entities,) + tail


def iter_candidates(rule: RuleDef, scope: Scope) -> Iterator[CityModel]:
    """Every candidate model for ``rule`` within ``scope`` in canonical order."""
    footprint = rule_footprint(rule.expr)
    for vector in _count_vectors(footprint.kinds, scope):
        counts = dict(zip(footprint.kinds, vector))
        active = tuple(k for k in footprint.kinds if counts[k] > 0)
        pool = _flow_pool(footprint, counts)
        flow_sets = _subsets(tuple(pool), scope.max_flows)
        for size in _universe_sizes(footprint, counts, scope):
            universe = tuple(NeighborhoodId(f"n{i}") for i in range(size))
            options = {k: _assignments(k, footprint, universe, scope) for k in active}
            if any(not options[k] for k in active):
                continue
            for groups in _entity_groups(active, counts, options):
                by_kind = dict(zip(active, groups))
                base = CityModel(
                    scenario_name=COUNTEREXAMPLE_NAME,
                    devices=by_kind.get(EntityKind.DEVICE, ()),
                    resident_groups=by_kind.get(EntityKind.RESIDENTS, ()),
                    governments=by_kind.get(EntityKind.GOVERNMENT, ()),
                    businesses=by_kind.get(EntityKind.BUSINESS, ()),
                    flows_complete=True,
                    declared_total_neighborhoods=size,
                )
                for flows in flow_sets:
                    yield replace(base, flows=flows) if flows else base


def find_counterexample(rule: RuleDef, scope: Scope | None = None) -> CheckResult:
    """First closed-world violation of ``rule`` within ``scope``, if any."""
    scope = scope or Scope()
    examined = 0
    for candidate in iter_candidates(rule, scope):
        if examined >= scope.candidate_budget:
            return BudgetExhausted(examined)
        examined += 1
        if eval_expr(rule.expr, candidate) is TruthValue.FALSE:
            return Counterexample(candidate, examined)
    return HoldsWithinScope(examined)


# ---------------------------------------------------------------------------
# Minimization


class MinimizeError(ValueError):
    """minimize_witness was given a model that does not violate the rule."""


def _removals(model: CityModel) -> list:
    """Single-step removals in canonical order (callers walk it reversed)."""
    steps = []
    for kind in PRINCIPAL_KINDS:
        for index, entity in enumerate(model.entities(kind)):
            steps.append(("entity", kind, index))
            for name, ftype in ENTITY_FIELDS[kind].items():
                if ftype.is_set:
                    for pos in range(len(getattr(entity, name))):
                        steps.append(("element", kind, index, name, pos))
    steps.extend(("flow", i) for i in range(len(model.flows)))
    return steps


_ATTRS = {
    EntityKind.DEVICE: "devices",
    EntityKind.RESIDENTS: "resident_groups",
    EntityKind.GOVERNMENT: "governments",
    EntityKind.BUSINESS: "businesses",
}


def _apply_removal(model: CityModel, step) -> CityModel:
    if step[0] == "flow":
        return replace(model, flows=model.flows[: step[1]] + model.flows[step[1] + 1 :])
    kind, index = step[1], step[2]
    entities = model.entities(kind)
    if step[0] == "entity":
        gone = entities[index].ref
        flows = tuple(f for f in model.flows if gone not in (f.source, f.dest))
        return replace(model, **{_ATTRS[kind]: entities[:index] + entities[index + 1 :]}, flows=flows)
    name, pos = step[3], step[4]
    entity = entities[index]
    value = getattr(entity, name)
    shrunk = replace(entity, **{name: value[:pos] + value[pos + 1 :]})
    return replace(model, **{_ATTRS[kind]: entities[:index] + (shrunk,) + entities[index + 1 :]})


def minimize_witness(model: CityModel, rule: RuleDef) -> CityModel:
    """Greedily shrink a closed-world violation of ``rule`` to a local minimum.

    Removals are tried in reverse canonical order (flows, then set elements
    and entities from the last declared backwards); the first removal that
    keeps the model valid and violating is taken and the scan restarts.  The
    result is judged and returned closed-world.
    """
    current = model.closed()
    if not isinstance(eval_rule(rule, current), Violated):
        raise MinimizeError(f"{rule.id} is not violated by {model.scenario_name!r} under closed world")
    changed = True
    while changed:
        changed = False
        for step in reversed(_removals(current)):
            candidate = _apply_removal(current, step)
            if validate_model(candidate):
                continue
            if eval_expr(rule.expr, candidate) is TruthValue.FALSE:
                current = candidate
                changed = True
                break
    return current


__all__ = [
    "BudgetExhausted",
    "CheckResult",
    "Counterexample",
    "Footprint",
    "HoldsWithinScope",
    "MinimizeError",
    "Scope",
    "field_domain",
    "find_counterexample",
    "iter_candidates",
    "minimize_witness",
    "parse_scope",
    "rule_footprint",
]
