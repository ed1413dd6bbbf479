"""(E)MDM scheme types: value types, object sets, mappings, constraints.

Everything here is an immutable value; two schemes are equal iff they are
structurally equal.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable
from dataclasses import dataclass
from functools import cached_property
from typing import Union

from emdm.formula import (
    CURRENT_YEAR,
    And,
    Apply,
    Coalesce,
    Compare,
    CurrentYear,
    Forall,
    Formula,
    IsNull,
    Implies,
    MapRef,
    Not,
    Or,
    Var,
    conjoin,
)

# ---- value types -----------------------------------------------------------

Bound = Union[int, CurrentYear]


@dataclass(frozen=True, slots=True)
class Text:
    max_len: int


@dataclass(frozen=True, slots=True)
class Natural:
    max_digits: int


@dataclass(frozen=True, slots=True)
class IntRange:
    lo: Bound
    hi: Bound


@dataclass(frozen=True, slots=True)
class EnumLiterals:
    values: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class Autonumber:
    card_exponent: int


ValueType = Union[Text, Natural, IntRange, EnumLiterals, Autonumber]


def max_surrogate(card_exponent: int) -> int:
    """Largest surrogate value admitted by ``auto(k)``."""
    return 10**card_exponent - 1


def is_numeric(vtype: ValueType) -> bool:
    return isinstance(vtype, (Natural, IntRange, Autonumber))


def numeric_bounds(vtype: ValueType) -> tuple[Bound, Bound] | None:
    if isinstance(vtype, Natural):
        return 0, 10**vtype.max_digits - 1
    if isinstance(vtype, IntRange):
        return vtype.lo, vtype.hi
    if isinstance(vtype, Autonumber):
        return 1, max_surrogate(vtype.card_exponent)
    return None


# ---- sets and mappings -----------------------------------------------------


class SetKind(str, enum.Enum):
    ENTITY = "entity"
    RELATIONSHIP = "relationship"
    STATIC = "static"
    COMPUTED = "computed"


class MappingKind(str, enum.Enum):
    OBJECT_IDENTIFIER = "objectIdentifier"
    ATTRIBUTE = "attribute"
    STRUCTURAL = "structural"
    CANONICAL_PROJECTION = "canonicalProjection"
    CANONICAL_INCLUSION = "canonicalInclusion"
    COMPUTED_ATTRIBUTE = "computedAttribute"


DEFAULT_CARD_EXPONENT = 9


@dataclass(frozen=True, slots=True)
class ObjectSet:
    name: str
    kind: SetKind = SetKind.ENTITY
    card_exponent: int = DEFAULT_CARD_EXPONENT
    supersets: tuple[str, ...] = ()
    view_body: str | None = None
    values: tuple[str, ...] = ()


@dataclass(frozen=True, slots=True)
class Mapping:
    name: str
    domain: str
    codomain: str | ValueType
    kind: MappingKind
    total: bool = False
    compute: object = None  # Term, for computed attributes

    @property
    def ref(self) -> MapRef:
        return MapRef(self.domain, self.name)

    @property
    def is_functional_reference(self) -> bool:
        """True when the codomain is an object set (values are surrogates)."""
        return isinstance(self.codomain, str)


def inclusion_name(superset: str) -> str:
    return f"x{superset}"


# ---- constraints -----------------------------------------------------------


@dataclass(frozen=True, kw_only=True)
class Constraint:
    label: str
    description: str = ""
    messages: tuple[tuple[str, str], ...] = ()  # (table or "", template) overrides
    synthesized: bool = False

    kind = "constraint"

    def host_set(self) -> str:
        raise NotImplementedError

    def message_for(self, table: str) -> str | None:
        fallback = None
        for where, text in self.messages:
            if where == table:
                return text
            if where == "" and fallback is None:
                fallback = text
        return fallback

    def formula(self) -> Formula | None:
        """First-order reading used by the checker; None when checked natively."""
        return None


@dataclass(frozen=True, kw_only=True)
class Totality(Constraint):
    mapping: MapRef
    kind = "totality"

    def host_set(self) -> str:
        return self.mapping.set

    def formula(self) -> Formula:
        return Forall(("x",), self.mapping.set, Not(IsNull(Apply(self.mapping, Var("x")))))


@dataclass(frozen=True, kw_only=True)
class Key(Constraint):
    product: tuple[MapRef, ...]
    kind = "key"

    def host_set(self) -> str:
        return self.product[0].set

    @property
    def columns(self) -> tuple[str, ...]:
        return tuple(ref.name for ref in self.product)


@dataclass(frozen=True, kw_only=True)
class Range(Constraint):
    """Domain constraint: values lie in the codomain, optionally narrowed to [lo, hi]."""

    mapping: MapRef
    lo: Bound | None = None
    hi: Bound | None = None
    kind = "range"

    def host_set(self) -> str:
        return self.mapping.set


@dataclass(frozen=True, kw_only=True)
class Default(Constraint):
    mapping: MapRef
    value: int | str
    kind = "default"

    def host_set(self) -> str:
        return self.mapping.set


@dataclass(frozen=True, kw_only=True)
class TupleCheck(Constraint):
    host: str
    body: Forall
    kind = "tuple"

    def host_set(self) -> str:
        return self.host

    def formula(self) -> Formula:
        return self.body


@dataclass(frozen=True, kw_only=True)
class NullReflexive(Constraint):
    """outer(inner(a)) = a wherever inner(a) is not null; inner: A -> B, outer: B -> A."""

    outer: MapRef
    inner: MapRef
    kind = "null-reflexive"

    def host_set(self) -> str:
        return self.inner.set

    def formula(self) -> Formula:
        x = Var("x")
        inner = Apply(self.inner, x)
        return Forall(
            ("x",),
            self.inner.set,
            Implies(Not(IsNull(inner)), Compare("=", Apply(self.outer, inner), x)),
        )


@dataclass(frozen=True, kw_only=True)
class Acyclic(Constraint):
    mapping: MapRef
    kind = "acyclic"

    def host_set(self) -> str:
        return self.mapping.set


@dataclass(frozen=True, kw_only=True)
class Existence(Constraint):
    """then_mapping must be known wherever if_mapping is."""

    if_mapping: MapRef
    then_mapping: MapRef
    kind = "existence"

    def host_set(self) -> str:
        return self.if_mapping.set

    def formula(self) -> Formula:
        x = Var("x")
        return Forall(
            ("x",),
            self.if_mapping.set,
            Implies(
                Not(IsNull(Apply(self.if_mapping, x))),
                Not(IsNull(Apply(self.then_mapping, x))),
            ),
        )


@dataclass(frozen=True, kw_only=True)
class NoOverlap(Constraint):
    """Rows agreeing on ``group`` with overlapping [lo, hi] intervals differ on ``distinct``.

    A null ``hi`` means the interval is still open (up to the current year).
    """

    set: str
    distinct: MapRef
    group: tuple[MapRef, ...] = ()
    lo: MapRef
    hi: MapRef
    kind = "no-overlap"

    def host_set(self) -> str:
        return self.set

    def formula(self) -> Formula:
        x, y = Var("x"), Var("y")

        def at(ref: MapRef, var: Var) -> Apply:
            return Apply(ref, var)

        def starts_within(a: Var, b: Var) -> Formula:
            return And(
                Compare(">=", at(self.lo, a), at(self.lo, b)),
                Compare("<=", at(self.lo, a), Coalesce(at(self.hi, b), CURRENT_YEAR)),
            )

        premise = [Compare("<>", x, y)]
        premise += [Compare("=", at(g, x), at(g, y)) for g in self.group]
        premise.append(Or(starts_within(y, x), starts_within(x, y)))
        conclusion = Compare("<>", at(self.distinct, x), at(self.distinct, y))
        return Forall(("x", "y"), self.set, Implies(conjoin(premise), conclusion))


@dataclass(frozen=True, kw_only=True)
class ObjectConstraint(Constraint):
    body: Formula
    kind = "object"

    def host_set(self) -> str:
        if isinstance(self.body, Forall):
            return self.body.set
        return ""

    def formula(self) -> Formula:
        return self.body


RELATIONAL_KINDS = ("totality", "key", "range", "default")


# ---- scheme ----------------------------------------------------------------


@dataclass(frozen=True)
class MdmScheme:
    sets: tuple[ObjectSet, ...] = ()
    mappings: tuple[Mapping, ...] = ()
    constraints: tuple[Constraint, ...] = ()

    @cached_property
    def _sets(self) -> dict[str, ObjectSet]:
        return {s.name: s for s in self.sets}

    @cached_property
    def _mappings(self) -> dict[MapRef, Mapping]:
        return {m.ref: m for m in self.mappings}

    @cached_property
    def _by_domain(self) -> dict[str, list[Mapping]]:
        out: dict[str, list[Mapping]] = {s.name: [] for s in self.sets}
        for m in self.mappings:
            out.setdefault(m.domain, []).append(m)
        return out

    @cached_property
    def _by_name(self) -> dict[str, list[Mapping]]:
        out: dict[str, list[Mapping]] = {}
        for m in self.mappings:
            out.setdefault(m.name, []).append(m)
        return out

    def has_set(self, name: str) -> bool:
        return name in self._sets

    def set(self, name: str) -> ObjectSet:
        return self._sets[name]

    def mapping(self, ref: MapRef) -> Mapping:
        return self._mappings[ref]

    def find_mapping(self, ref: MapRef) -> Mapping | None:
        return self._mappings.get(ref)

    def mappings_on(self, set_name: str) -> list[Mapping]:
        return self._by_domain.get(set_name, [])

    def mappings_named(self, name: str) -> list[Mapping]:
        return self._by_name.get(name, [])

    def constraint(self, label: str) -> Constraint:
        for c in self.constraints:
            if c.label == label:
                return c
        raise KeyError(label)

    def declared_constraints(self) -> list[Constraint]:
        return [c for c in self.constraints if not c.synthesized]


def object_identifier(set_: ObjectSet) -> Mapping:
    """The synthesized surrogate key of ``set_``."""
    return Mapping(
        name="x",
        domain=set_.name,
        codomain=Autonumber(set_.card_exponent),
        kind=MappingKind.OBJECT_IDENTIFIER,
        total=True,
    )


def expand(
    sets: Iterable[ObjectSet],
    declared_mappings: Iterable[Mapping],
    declared_constraints: Iterable[Constraint],
) -> MdmScheme:
    """Build a scheme, synthesizing identifiers and the implicit relational constraints.

    Per non-view set: the identifier ``x`` (plus one inclusion mapping per superset),
    its key, domain and totality. Per declared function: a domain constraint, and a
    totality constraint when declared total.
    """
    sets = tuple(sets)
    declared_mappings = list(declared_mappings)
    mappings: list[Mapping] = []
    constraints: list[Constraint] = []
    for s in sets:
        if s.kind is SetKind.COMPUTED:
            continue
        x = object_identifier(s)
        mappings.append(x)
        constraints += [
            Key(label=f"{s.name}.x#pk", product=(x.ref,), synthesized=True),
            Range(label=f"{s.name}.x#domain", mapping=x.ref, synthesized=True),
            Totality(label=f"{s.name}.x#total", mapping=x.ref, synthesized=True),
        ]
        for sup in s.supersets:
            mappings.append(
                Mapping(
                    name=inclusion_name(sup),
                    domain=s.name,
                    codomain=sup,
                    kind=MappingKind.CANONICAL_INCLUSION,
                    total=True,
                )
            )
    mappings += declared_mappings
    for m in mappings:
        if m.kind in (MappingKind.OBJECT_IDENTIFIER,):
            continue
        constraints.append(Range(label=f"{m.domain}.{m.name}#domain", mapping=m.ref, synthesized=True))
        if m.total:
            constraints.append(
                Totality(label=f"{m.domain}.{m.name}#total", mapping=m.ref, synthesized=True)
            )
        if m.kind is MappingKind.CANONICAL_INCLUSION and m.name != inclusion_name(
            _first_superset(sets, m.domain)
        ):
            constraints.append(
                Key(label=f"{m.domain}.{m.name}#unique", product=(m.ref,), synthesized=True)
            )
    constraints += list(declared_constraints)
    return MdmScheme(tuple(sets), tuple(mappings), tuple(constraints))


def _first_superset(sets: tuple[ObjectSet, ...], name: str) -> str:
    for s in sets:
        if s.name == name:
            return s.supersets[0] if s.supersets else ""
    return ""


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.location}: {self.message}"
