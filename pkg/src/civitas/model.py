"""The finite socio-technical city instance that rules are judged against.

A :class:`CityModel` holds four principal entity kinds (IoT devices, resident
groups, government agencies, businesses) plus the data flows between them.
Models are immutable; every operation here returns new values.
"""

from __future__ import annotations

import difflib
import enum
import unicodedata
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Any, Iterable, Iterator, Union

if TYPE_CHECKING:
    from civitas.scenario import FactSet


def normalize_token(text: str) -> str:
    """NFC-normalize and trim a token."""
    return unicodedata.normalize("NFC", text).strip()


def token_key(text: str) -> str:
    return normalize_token(text).casefold()


class UnknownValueError(ValueError):
    """A token outside a closed vocabulary."""

    def __init__(self, what: str, value: str, options: Iterable[str]):
        self.what = what
        self.value = value
        self.options = tuple(options)
        close = difflib.get_close_matches(value.casefold(), self.options, n=1)
        self.suggestion = close[0] if close else None
        msg = f"unknown {what} {value!r}; expected one of {{{', '.join(self.options)}}}"
        if self.suggestion:
            msg += f" (did you mean {self.suggestion!r}?)"
        super().__init__(msg)


class TokenEnum(str, enum.Enum):
    """Closed vocabulary parsed case-insensitively, with per-enum synonyms."""

    @classmethod
    def synonyms(cls) -> dict[str, str]:
        return {}

    @classmethod
    def label(cls) -> str:
        return cls.__name__

    @classmethod
    def parse(cls, text: str):
        if isinstance(text, cls):
            return text
        key = token_key(str(text)).replace(" ", "_")
        key = cls.synonyms().get(key, key)
        for member in cls:
            if member.value == key:
                return member
        raise UnknownValueError(cls.label(), str(text), [m.value for m in cls])

    def __str__(self) -> str:
        return self.value


class EntityKind(TokenEnum):
    DEVICE = "device"
    RESIDENTS = "residents"
    GOVERNMENT = "government"
    BUSINESS = "business"
    EXTERNAL = "external"

    @classmethod
    def label(cls) -> str:
        return "entity kind"


PRINCIPAL_KINDS = (EntityKind.DEVICE, EntityKind.RESIDENTS, EntityKind.GOVERNMENT, EntityKind.BUSINESS)


class MovementType(TokenEnum):
    STATIONARY = "stationary"
    MOBILE = "mobile"
    HAZARDOUS = "hazardous"

    @classmethod
    def synonyms(cls):
        return {"still": "stationary"}

    @classmethod
    def label(cls):
        return "movement type"


class InteractionType(TokenEnum):
    PHYSICAL = "physical"
    NON_PHYSICAL = "non_physical"

    @classmethod
    def synonyms(cls):
        return {"non-physical": "non_physical", "nonphysical": "non_physical"}

    @classmethod
    def label(cls):
        return "interaction type"


class RiskType(TokenEnum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @classmethod
    def label(cls):
        return "risk type"


class EconomicStatus(TokenEnum):
    LOW = "low"
    MIDDLE = "middle"
    HIGH = "high"

    @classmethod
    def synonyms(cls):
        return {"medium": "middle"}

    @classmethod
    def label(cls):
        return "economic status"


class BusinessScale(TokenEnum):
    SMALL = "small"
    MED = "med"
    LARGE = "large"

    @classmethod
    def synonyms(cls):
        return {"medium": "med"}

    @classmethod
    def label(cls):
        return "business scale"


class PayloadKind(TokenEnum):
    RESIDENT_PERSONAL_DATA = "resident_personal_data"
    RESIDENT_LOCATION = "resident_location"
    ARRIVAL_TIME = "arrival_time"
    ECONOMIC_STATUS = "economic_status"
    PROJECT_GOALS = "project_goals"
    GENERIC_MESSAGE = "generic_message"
    HARMFUL_CONTENT = "harmful_content"

    @classmethod
    def label(cls):
        return "payload"


class Consent(TokenEnum):
    GRANTED = "granted"
    DENIED = "denied"
    UNKNOWN = "unknown"

    @classmethod
    def label(cls):
        return "consent"


class Provenance(TokenEnum):
    SCENARIO = "scenario"
    HUMAN_OVERRIDE = "human_override"

    @classmethod
    def label(cls):
        return "provenance"


# Goal tags a government may declare; free-text goals go in ``goal_labels``.
GOAL_TAGS = ("transform_physical_living_environment", "sustainability", "efficiency")


class NeighborhoodId:
    """Neighborhood name: case preserved, compared case-insensitively."""

    __slots__ = ("name", "_key")

    def __init__(self, name: str):
        norm = normalize_token(str(name))
        if not norm:
            raise ValueError("neighborhood name is empty")
        object.__setattr__(self, "name", norm)
        object.__setattr__(self, "_key", norm.casefold())

    def __setattr__(self, key, value):
        raise AttributeError("NeighborhoodId is immutable")

    def __eq__(self, other):
        if isinstance(other, NeighborhoodId):
            return self._key == other._key
        return NotImplemented

    def __hash__(self):
        return hash(self._key)

    def __lt__(self, other: NeighborhoodId) -> bool:
        return (self._key, self.name) < (other._key, other.name)

    def __repr__(self):
        return f"NeighborhoodId({self.name!r})"

    def __str__(self):
        return self.name

    def __reduce__(self):
        return (NeighborhoodId, (self.name,))


def _ordered_set(items: Iterable[Any], convert=lambda x: x) -> tuple:
    seen = set()
    out = []
    for item in items:
        value = convert(item)
        if value not in seen:
            seen.add(value)
            out.append(value)
    return tuple(out)


def _neighborhoods(items) -> tuple[NeighborhoodId, ...]:
    return _ordered_set(items, lambda x: x if isinstance(x, NeighborhoodId) else NeighborhoodId(x))


def _texts(items) -> tuple[str, ...]:
    return _ordered_set(items, lambda x: normalize_token(str(x)))


def _set(obj, name: str, value) -> None:
    object.__setattr__(obj, name, value)


@dataclass(frozen=True)
class EntityRef:
    kind: EntityKind
    name: str

    def __post_init__(self):
        _set(self, "kind", EntityKind.parse(self.kind))
        _set(self, "name", normalize_token(self.name))

    def __str__(self):
        return f"{self.kind.value} {self.name}"


@dataclass(frozen=True)
class DeviceInstance:
    name: str
    device_title: str
    deploy_neighborhoods: tuple[NeighborhoodId, ...]
    movement_type: MovementType
    interaction_type: InteractionType
    risk_type: RiskType
    transmits_harmful: bool
    collects_resident_data: bool
    agreement_violated: bool

    kind = EntityKind.DEVICE

    def __post_init__(self):
        _set(self, "name", normalize_token(self.name))
        _set(self, "device_title", normalize_token(self.device_title))
        _set(self, "deploy_neighborhoods", _neighborhoods(self.deploy_neighborhoods))
        _set(self, "movement_type", MovementType.parse(self.movement_type))
        _set(self, "interaction_type", InteractionType.parse(self.interaction_type))
        _set(self, "risk_type", RiskType.parse(self.risk_type))

    @property
    def ref(self) -> EntityRef:
        return EntityRef(self.kind, self.name)


@dataclass(frozen=True)
class ResidentGroup:
    name: str
    living_neighborhoods: tuple[NeighborhoodId, ...]
    favored_neighborhoods: tuple[NeighborhoodId, ...] = ()
    economic_status: tuple[EconomicStatus, ...] = ()
    professions: tuple[str, ...] = ()
    iot_usage_preferences: tuple[str, ...] = ()
    has_legitimate_authority: bool = False

    kind = EntityKind.RESIDENTS

    def __post_init__(self):
        _set(self, "name", normalize_token(self.name))
        _set(self, "living_neighborhoods", _neighborhoods(self.living_neighborhoods))
        _set(self, "favored_neighborhoods", _neighborhoods(self.favored_neighborhoods))
        _set(self, "economic_status", _ordered_set(self.economic_status, EconomicStatus.parse))
        _set(self, "professions", _texts(self.professions))
        _set(self, "iot_usage_preferences", _texts(self.iot_usage_preferences))

    @property
    def ref(self) -> EntityRef:
        return EntityRef(self.kind, self.name)


@dataclass(frozen=True)
class GovernmentInstance:
    name: str
    gov_type: str = ""
    project_goals: tuple[str, ...] = ()
    goal_labels: tuple[str, ...] = ()
    oversight_iot_safety: bool = False
    enforce_safety_standards: bool = False

    kind = EntityKind.GOVERNMENT

    def __post_init__(self):
        _set(self, "name", normalize_token(self.name))
        _set(self, "gov_type", normalize_token(self.gov_type))
        _set(self, "project_goals", _ordered_set(self.project_goals, token_key))
        _set(self, "goal_labels", _texts(self.goal_labels))

    @property
    def ref(self) -> EntityRef:
        return EntityRef(self.kind, self.name)


@dataclass(frozen=True)
class BusinessInstance:
    name: str
    scale: BusinessScale
    neighborhoods: tuple[NeighborhoodId, ...]
    business_types: tuple[str, ...] = ()

    kind = EntityKind.BUSINESS

    def __post_init__(self):
        _set(self, "name", normalize_token(self.name))
        _set(self, "scale", BusinessScale.parse(self.scale))
        _set(self, "neighborhoods", _neighborhoods(self.neighborhoods))
        _set(self, "business_types", _texts(self.business_types))

    @property
    def ref(self) -> EntityRef:
        return EntityRef(self.kind, self.name)


Entity = Union[DeviceInstance, ResidentGroup, GovernmentInstance, BusinessInstance]


@dataclass(frozen=True)
class ExternalEntity:
    """Undeclared party outside the city, e.g. an attacker receiving leaked data."""

    name: str
    kind = EntityKind.EXTERNAL

    @property
    def ref(self) -> EntityRef:
        return EntityRef(self.kind, self.name)


@dataclass(frozen=True)
class DataFlow:
    source: EntityRef
    dest: EntityRef
    payload: PayloadKind
    consent: Consent = Consent.UNKNOWN
    provenance: Provenance = Provenance.SCENARIO

    def __post_init__(self):
        _set(self, "payload", PayloadKind.parse(self.payload))
        _set(self, "consent", Consent.parse(self.consent))
        _set(self, "provenance", Provenance.parse(self.provenance))

    def __str__(self):
        return f"{self.source.name} -> {self.dest.name} : {self.payload.value} consent={self.consent.value}"


@dataclass(frozen=True)
class CityModel:
    scenario_name: str
    devices: tuple[DeviceInstance, ...] = ()
    resident_groups: tuple[ResidentGroup, ...] = ()
    governments: tuple[GovernmentInstance, ...] = ()
    businesses: tuple[BusinessInstance, ...] = ()
    flows: tuple[DataFlow, ...] = ()
    flows_complete: bool = False
    declared_total_neighborhoods: int | None = None

    def __post_init__(self):
        for name in ("devices", "resident_groups", "governments", "businesses", "flows"):
            _set(self, name, tuple(getattr(self, name)))

    def entities(self, kind: EntityKind) -> tuple:
        return {
            EntityKind.DEVICE: self.devices,
            EntityKind.RESIDENTS: self.resident_groups,
            EntityKind.GOVERNMENT: self.governments,
            EntityKind.BUSINESS: self.businesses,
        }.get(kind, ())

    def all_entities(self) -> Iterator[Entity]:
        for kind in PRINCIPAL_KINDS:
            yield from self.entities(kind)

    def lookup(self, ref: EntityRef) -> Entity | ExternalEntity | None:
        if ref.kind is EntityKind.EXTERNAL:
            return ExternalEntity(ref.name)
        key = token_key(ref.name)
        for entity in self.entities(ref.kind):
            if token_key(entity.name) == key:
                return entity
        return None

    def closed(self) -> CityModel:
        return replace(self, flows_complete=True) if not self.flows_complete else self


# ---------------------------------------------------------------------------
# Field registry, shared by the scenario format, the rule type checker, fact
# overrides and the model finder.


@dataclass(frozen=True)
class FieldType:
    base: str  # bool | enum | text | neighborhood | goal
    enum: type[TokenEnum] | None = None
    is_set: bool = False

    def element(self) -> FieldType:
        return FieldType(self.base, self.enum, False)

    def __str__(self):
        name = self.enum.label() if self.enum else self.base
        return f"set of {name}" if self.is_set else name


BOOL = FieldType("bool")
TEXT = FieldType("text")

ENTITY_FIELDS: dict[EntityKind, dict[str, FieldType]] = {
    EntityKind.DEVICE: {
        "device_title": TEXT,
        "deploy_neighborhoods": FieldType("neighborhood", is_set=True),
        "movement_type": FieldType("enum", MovementType),
        "interaction_type": FieldType("enum", InteractionType),
        "risk_type": FieldType("enum", RiskType),
        "transmits_harmful": BOOL,
        "collects_resident_data": BOOL,
        "agreement_violated": BOOL,
    },
    EntityKind.RESIDENTS: {
        "living_neighborhoods": FieldType("neighborhood", is_set=True),
        "favored_neighborhoods": FieldType("neighborhood", is_set=True),
        "economic_status": FieldType("enum", EconomicStatus, is_set=True),
        "professions": FieldType("text", is_set=True),
        "iot_usage_preferences": FieldType("text", is_set=True),
        "has_legitimate_authority": BOOL,
    },
    EntityKind.GOVERNMENT: {
        "gov_type": TEXT,
        "project_goals": FieldType("goal", is_set=True),
        "goal_labels": FieldType("text", is_set=True),
        "oversight_iot_safety": BOOL,
        "enforce_safety_standards": BOOL,
    },
    EntityKind.BUSINESS: {
        "scale": FieldType("enum", BusinessScale),
        "neighborhoods": FieldType("neighborhood", is_set=True),
        "business_types": FieldType("text", is_set=True),
    },
}

# Free-text goal labels are carried for reports only; rules cannot see them.
HIDDEN_FIELDS = {(EntityKind.GOVERNMENT, "goal_labels")}

ENTITY_CLASSES = {
    EntityKind.DEVICE: DeviceInstance,
    EntityKind.RESIDENTS: ResidentGroup,
    EntityKind.GOVERNMENT: GovernmentInstance,
    EntityKind.BUSINESS: BusinessInstance,
}

# Short keys used by the scenario format; every other key is the field name.
SHORT_KEYS: dict[EntityKind, dict[str, str]] = {
    EntityKind.DEVICE: {
        "title": "device_title",
        "neighborhoods": "deploy_neighborhoods",
        "movement": "movement_type",
        "interaction": "interaction_type",
        "risk": "risk_type",
    },
    EntityKind.RESIDENTS: {"living": "living_neighborhoods", "favored": "favored_neighborhoods"},
    EntityKind.GOVERNMENT: {"type": "gov_type"},
    EntityKind.BUSINESS: {},
}


def resolve_field_key(kind: EntityKind, key: str) -> str | None:
    """Map a scenario key or field name to the canonical field name."""
    key = token_key(key)
    if key in ENTITY_FIELDS[kind]:
        return key
    return SHORT_KEYS[kind].get(key)


def coerce_field_value(kind: EntityKind, name: str, raw: Any) -> Any:
    """Convert a raw parsed value (str, int, or tuple of str) to a field value.

    Raises ValueError (or UnknownValueError) naming the expected type.
    """
    ftype = ENTITY_FIELDS[kind][name]
    if ftype.is_set:
        if not isinstance(raw, tuple):
            raise ValueError(f"field {name} expects a list ([...]), got {raw!r}")
        return tuple(_coerce_scalar(ftype.element(), name, item) for item in raw)
    if isinstance(raw, tuple):
        raise ValueError(f"field {name} expects a single {ftype}, got a list")
    return _coerce_scalar(ftype, name, raw)


def _coerce_scalar(ftype: FieldType, name: str, raw: Any) -> Any:
    if ftype.base == "bool":
        if isinstance(raw, bool):
            return raw
        text = token_key(str(raw))
        if text in ("true", "false"):
            return text == "true"
        raise UnknownValueError(f"boolean for {name}", str(raw), ["true", "false"])
    if isinstance(raw, int) and not isinstance(raw, bool):
        raw = str(raw)
    if ftype.base == "enum":
        return ftype.enum.parse(raw)
    if ftype.base == "neighborhood":
        return NeighborhoodId(raw)
    if ftype.base == "goal":
        tag = token_key(raw)
        if tag not in GOAL_TAGS:
            raise UnknownValueError("goal tag", str(raw), GOAL_TAGS)
        return tag
    return normalize_token(str(raw))


def field_value(entity: Entity, name: str) -> Any:
    return getattr(entity, name)


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str
    path: tuple = ()

    def __str__(self):
        return f"{self.code}: {self.message}"


def validate_model(model: CityModel) -> list[ValidationIssue]:
    """Return every well-formedness issue in canonical order; [] means well-formed."""
    issues: list[ValidationIssue] = []
    for kind in PRINCIPAL_KINDS:
        seen: dict[str, str] = {}
        for entity in model.entities(kind):
            key = token_key(entity.name)
            if not key:
                issues.append(ValidationIssue("EmptyName", f"{kind.value} with empty name", (kind.value, entity.name)))
            elif key in seen:
                issues.append(
                    ValidationIssue(
                        "DuplicateName",
                        f"duplicate {kind.value} name {entity.name!r} (first declared as {seen[key]!r})",
                        (kind.value, entity.name),
                    )
                )
            else:
                seen[key] = entity.name
    for group in model.resident_groups:
        path = ("residents", group.name)
        living = set(group.living_neighborhoods)
        extra = [n.name for n in group.favored_neighborhoods if n not in living]
        if extra:
            issues.append(
                ValidationIssue(
                    "FavoredNotLiving",
                    f"residents {group.name}: favored neighborhoods {extra} are not among living neighborhoods",
                    path,
                )
            )
        if not group.economic_status:
            issues.append(ValidationIssue("EmptyEconomicStatus", f"residents {group.name}: economic_status is empty", path))
    for gov in model.governments:
        bad = [tag for tag in gov.project_goals if tag not in GOAL_TAGS]
        if bad:
            issues.append(
                ValidationIssue(
                    "UnknownGoalTag",
                    f"government {gov.name}: unregistered goal tags {bad}; registered: {list(GOAL_TAGS)}",
                    ("government", gov.name),
                )
            )
    for biz in model.businesses:
        if not biz.neighborhoods:
            issues.append(
                ValidationIssue("EmptyNeighborhoods", f"business {biz.name}: neighborhoods is empty", ("business", biz.name))
            )
    for index, flow in enumerate(model.flows):
        path = ("flows", index)
        for end in (flow.source, flow.dest):
            if model.lookup(end) is None:
                issues.append(ValidationIssue("DanglingRef", f"flow #{index + 1} references undeclared {end}", path))
        if flow.source == flow.dest and flow.payload is not PayloadKind.GENERIC_MESSAGE:
            issues.append(
                ValidationIssue("SelfFlow", f"flow #{index + 1}: {flow.source} sends {flow.payload.value} to itself", path)
            )
        if flow.source.kind is EntityKind.EXTERNAL and flow.payload is PayloadKind.PROJECT_GOALS:
            issues.append(
                ValidationIssue("ExternalGoalsSource", f"flow #{index + 1}: external {flow.source.name} cannot send project_goals", path)
            )
    declared = model.declared_total_neighborhoods
    if declared is not None:
        if declared < 0:
            issues.append(ValidationIssue("NegativeTotal", f"total_neighborhoods is negative ({declared})", ("total_neighborhoods",)))
        else:
            observed = len(observed_neighborhoods(model))
            if declared < observed:
                issues.append(
                    ValidationIssue(
                        "UniverseTooSmall",
                        f"total_neighborhoods = {declared} but {observed} distinct neighborhoods are named",
                        ("total_neighborhoods",),
                    )
                )
    return issues


def observed_neighborhoods(model: CityModel) -> frozenset[NeighborhoodId]:
    names: set[NeighborhoodId] = set()
    for device in model.devices:
        names.update(device.deploy_neighborhoods)
    for group in model.resident_groups:
        names.update(group.living_neighborhoods)
        names.update(group.favored_neighborhoods)
    for biz in model.businesses:
        names.update(biz.neighborhoods)
    return frozenset(names)


def neighborhood_universe(model: CityModel) -> frozenset[NeighborhoodId]:
    """All neighborhoods of the city.

    With a declared total, placeholder neighborhoods pad the observed names up
    to that count; otherwise the universe is the observed union.
    """
    observed = observed_neighborhoods(model)
    declared = model.declared_total_neighborhoods
    if declared is None or declared <= len(observed):
        return observed
    universe = set(observed)
    index = 1
    while len(universe) < declared:
        placeholder = NeighborhoodId(f"<unnamed {index}>")
        index += 1
        universe.add(placeholder)
    return frozenset(universe)


# ---------------------------------------------------------------------------
# Human-supplied facts


class FactError(ValueError):
    """A fact that cannot be applied to the model."""


def resolve_reference(model: CityModel, name: str, kind: EntityKind | None) -> EntityRef:
    """Resolve a (possibly kind-qualified) entity name against the model."""
    if kind is EntityKind.EXTERNAL:
        return EntityRef(EntityKind.EXTERNAL, name)
    kinds = [kind] if kind is not None else list(PRINCIPAL_KINDS)
    key = token_key(name)
    found = [e.ref for k in kinds for e in model.entities(k) if token_key(e.name) == key]
    if not found:
        where = f"{kind.value} " if kind else ""
        raise FactError(f"unknown entity {where}{name!r}")
    if len(found) > 1:
        options = ", ".join(f"{r.kind.value} {r.name}" for r in found)
        raise FactError(f"ambiguous entity {name!r} ({options}); qualify it with its kind")
    return found[0]


def apply_facts(model: CityModel, facts: FactSet) -> CityModel:
    """Return a new model with human-supplied flows appended and overrides applied."""
    if not facts.flow_facts and not facts.field_overrides:
        return model
    changes: dict[EntityRef, dict[str, Any]] = {}
    for override in facts.field_overrides:
        ref = resolve_reference(model, override.target.name, override.target.kind)
        name = resolve_field_key(ref.kind, override.field_name)
        if name is None:
            raise FactError(f"unknown field {override.field_name!r} on {ref.kind.value} {ref.name}")
        if name in changes.setdefault(ref, {}):
            raise FactError(f"conflicting override of {ref.name}.{name}")
        try:
            changes[ref][name] = coerce_field_value(ref.kind, name, override.value)
        except ValueError as exc:
            raise FactError(f"override of {ref.name}.{name}: {exc}") from None

    def patched(entities):
        out = []
        for entity in entities:
            update = changes.get(entity.ref)
            out.append(replace(entity, **update) if update else entity)
        return tuple(out)

    new_flows = []
    for fact in facts.flow_facts:
        source = resolve_reference(model, fact.source.name, fact.source.kind)
        dest = resolve_reference(model, fact.dest.name, fact.dest.kind)
        new_flows.append(DataFlow(source, dest, fact.payload, fact.consent, Provenance.HUMAN_OVERRIDE))

    result = replace(
        model,
        devices=patched(model.devices),
        resident_groups=patched(model.resident_groups),
        governments=patched(model.governments),
        businesses=patched(model.businesses),
        flows=model.flows + tuple(new_flows),
    )
    issues = validate_model(result)
    if issues:
        raise FactError("facts produce an ill-formed model: " + "; ".join(str(i) for i in issues))
    return result

