from __future__ import annotations

import enum


class TruthValue(enum.IntEnum):
    """Strong Kleene truth values, ordered FALSE < UNKNOWN < TRUE.

    With that order conjunction is ``min``, disjunction is ``max`` and
    negation mirrors the order.
    """

    FALSE = 0
    UNKNOWN = 1
    TRUE = 2

    @classmethod
    def of(cls, value: bool) -> TruthValue:
        return cls.TRUE if value else cls.FALSE

    def __and__(self, other):
        if not isinstance(other, TruthValue):
            return NotImplemented
        return TruthValue(min(self, other))

    def __or__(self, other):
        if not isinstance(other, TruthValue):
            return NotImplemented
        return TruthValue(max(self, other))

    def __invert__(self):
        return TruthValue(2 - self)

    def implies(self, other: TruthValue) -> TruthValue:
        return ~self | other

    def __str__(self):
        return self.name.lower()


def all_of(values) -> TruthValue:
    result = TruthValue.TRUE
    for value in values:
        result = result & value
        if result is TruthValue.FALSE:
            break
    return result


def any_of(values) -> TruthValue:
    result = TruthValue.FALSE
    for value in values:
        result = result | value
        if result is TruthValue.TRUE:
            break
    return result
