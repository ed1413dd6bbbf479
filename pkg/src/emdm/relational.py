"""Relational target model produced by the translator."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from emdm.formula import Formula, Term
from emdm.model import Bound, ValueType

# Categories of relational constraints, in report order.
CATEGORIES = (
    "pk",
    "pk-domain",
    "pk-not-null",
    "not-null",
    "domain",
    "fk",
    "unique",
    "tuple",
    "default",
    "coded-domain",
)


@dataclass
class Column:
    name: str
    sql_type: ValueType
    computed_expr: Term | None = None
    max_value: int | None = None
    identity: bool = False


@dataclass
class RelConstraint:
    """One relational constraint as emitted into a table scheme.

    ``source`` is the label of the (E)MDM constraint it realizes.
    """

    category: str
    source: str
    columns: tuple[str, ...]
    ref_table: str | None = None
    max_value: int | None = None
    lo: Bound | None = None
    hi: Bound | None = None
    values: tuple[str, ...] = ()
    max_len: int | None = None
    formula: Formula | None = None
    default: int | str | None = None
    deferred: bool = False


@dataclass
class ForeignKey:
    column: str
    ref_table: str
    ref_column: str
    max_value: int
    deferred: bool
    source: str


@dataclass
class Table:
    name: str
    columns: list[Column] = field(default_factory=list)
    primary_key: str = "x"
    constraints: list[RelConstraint] = field(default_factory=list)

    def column(self, name: str) -> Column:
        for col in self.columns:
            if col.name == name:
                return col
        raise KeyError(f"{self.name}.{name}")

    def has_column(self, name: str) -> bool:
        return any(col.name == name for col in self.columns)

    def of(self, category: str) -> list[RelConstraint]:
        return [c for c in self.constraints if c.category == category]

    @property
    def not_null(self) -> set[str]:
        return {c.columns[0] for c in self.constraints if c.category in ("not-null", "pk-not-null")}

    @property
    def unique_keys(self) -> list[tuple[str, ...]]:
        return [c.columns for c in self.of("unique")]

    @property
    def foreign_keys(self) -> list[ForeignKey]:
        return [
            ForeignKey(c.columns[0], c.ref_table, "x", c.max_value or 0, c.deferred, c.source)
            for c in self.of("fk")
            if c.ref_table is not None
        ]

    @property
    def checks(self) -> list[RelConstraint]:
        return [c for c in self.constraints if c.category in ("pk-domain", "domain", "tuple", "coded-domain")]


@dataclass
class View:
    name: str
    body: str


@dataclass
class RelationalSchema:
    tables: list[Table] = field(default_factory=list)
    views: list[View] = field(default_factory=list)
    # static sets coded numerically instead of materialized: name -> literal values (code = index + 1)
    coded_domains: dict[str, tuple[str, ...]] = field(default_factory=dict)
    # identifier constraints of coded sets, which have no table to live in
    coded_constraints: list[RelConstraint] = field(default_factory=list)

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def has_table(self, name: str) -> bool:
        return any(t.name == name for t in self.tables)

    def all_constraints(self) -> list[tuple[Table | None, RelConstraint]]:
        out: list[tuple[Table | None, RelConstraint]] = [(t, c) for t in self.tables for c in t.constraints]
        out += [(None, c) for c in self.coded_constraints]
        return out

    def tally(self) -> Counter:
        return Counter(c.category for _, c in self.all_constraints())

    @property
    def constraint_count(self) -> int:
        return len(self.all_constraints())


@dataclass
class TranslationReport:
    e: int = 0
    r: int = 0
    a: int = 0
    f: int = 0
    rc: int = 0
    nrc: int = 0
    per_table: dict[str, dict[str, int]] = field(default_factory=dict)
    categories: dict[str, int] = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return self.e + self.r + self.a + self.f + self.rc + self.nrc

    def summary(self) -> str:
        return f"steps={self.steps} rc={self.rc} nrc={self.nrc}"

    def as_dict(self) -> dict:
        return {
            "e": self.e,
            "r": self.r,
            "a": self.a,
            "f": self.f,
            "rc": self.rc,
            "nrc": self.nrc,
            "steps": self.steps,
            "categories": dict(self.categories),
            "perTable": {k: dict(v) for k, v in self.per_table.items()},
        }
