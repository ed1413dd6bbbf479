"""Translation of (E)MDM schemes into relational schemas plus residual constraints."""

from __future__ import annotations

import heapq
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import networkx as nx

from emdm.formula import Apply, Exists, Forall, Var, has_composition, mappings_used, walk
from emdm.model import (
    Autonumber,
    Constraint,
    Default,
    EnumLiterals,
    IntRange,
    Key,
    Mapping,
    MappingKind,
    MdmScheme,
    Natural,
    ObjectConstraint,
    ObjectSet,
    Range,
    SetKind,
    Text,
    Totality,
    TupleCheck,
    inclusion_name,
    max_surrogate,
)
from emdm.relational import Column, RelationalSchema, RelConstraint, Table, TranslationReport, View
from emdm.validate import validate_scheme

_REFERENCE_KINDS = (
    MappingKind.STRUCTURAL,
    MappingKind.CANONICAL_PROJECTION,
    MappingKind.CANONICAL_INCLUSION,
)
_ATTRIBUTE_KINDS = (
    MappingKind.OBJECT_IDENTIFIER,
    MappingKind.ATTRIBUTE,
    MappingKind.COMPUTED_ATTRIBUTE,
)


class TranslationError(Exception):
    def __init__(self, diagnostics):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class SetOrder:
    names: tuple[str, ...]
    scc_groups: tuple[tuple[str, ...], ...]  # components with more than one set
    component: dict[str, int] = field(compare=False, hash=False, default_factory=dict)


@dataclass(frozen=True)
class ResidualEntry:
    constraint: Constraint
    host_sets: tuple[str, ...]
    provenance: str

    @property
    def label(self) -> str:
        return self.constraint.label


@dataclass
class NonRelationalOutput:
    entries: list[ResidualEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def labels(self) -> list[str]:
        return [e.label for e in self.entries]

    def get(self, label: str) -> ResidualEntry:
        for e in self.entries:
            if e.label == label:
                return e
        raise KeyError(label)


def reference_graph(scheme: MdmScheme) -> nx.DiGraph:
    """Edge A -> B whenever a structural function, role or inclusion maps A into B."""
    graph = nx.DiGraph()
    graph.add_nodes_from(s.name for s in scheme.sets)
    for m in scheme.mappings:
        if m.kind in _REFERENCE_KINDS and isinstance(m.codomain, str):
            graph.add_edge(m.domain, m.codomain)
    return graph


def order_sets(scheme: MdmScheme) -> SetOrder:
    """Referenced sets before referencing ones, over the condensation of the reference graph.

    Among sets that are ready at the same time, acyclic components come first,
    then the earliest declared; members of a component keep declaration order.
    """
    index = {s.name: i for i, s in enumerate(scheme.sets)}
    graph = reference_graph(scheme)
    cond = nx.condensation(graph)
    members = {c: sorted(cond.nodes[c]["members"], key=index.__getitem__) for c in cond.nodes}
    cyclic = {
        c: len(ms) > 1 or graph.has_edge(ms[0], ms[0]) for c, ms in members.items()
    }
    # a component is ready once every component it references has been placed
    waiting = {c: cond.out_degree(c) for c in cond.nodes}
    heap = [(cyclic[c], index[members[c][0]], c) for c in cond.nodes if waiting[c] == 0]
    heapq.heapify(heap)
    names: list[str] = []
    component: dict[str, int] = {}
    while heap:
        _, _, c = heapq.heappop(heap)
        for name in members[c]:
            names.append(name)
            component[name] = c
        for pred in cond.predecessors(c):
            waiting[pred] -= 1
            if waiting[pred] == 0:
                heapq.heappush(heap, (cyclic[pred], index[members[pred][0]], pred))
    position = {name: i for i, name in enumerate(names)}
    groups = tuple(
        tuple(members[c])
        for c in sorted(members, key=lambda c: position[members[c][0]])
        if len(members[c]) > 1
    )
    return SetOrder(tuple(names), groups, component)


def _bounds(vtype) -> tuple[object, object]:
    if isinstance(vtype, Natural):
        return 0, 10**vtype.max_digits - 1
    if isinstance(vtype, IntRange):
        return vtype.lo, vtype.hi
    if isinstance(vtype, Autonumber):
        return 1, max_surrogate(vtype.card_exponent)
    return None, None


def _domain_constraint(source: str, column: str, vtype) -> RelConstraint:
    if isinstance(vtype, Text):
        return RelConstraint("domain", source, (column,), max_len=vtype.max_len)
    if isinstance(vtype, EnumLiterals):
        return RelConstraint("domain", source, (column,), values=vtype.values)
    lo, hi = _bounds(vtype)
    return RelConstraint("domain", source, (column,), lo=lo, hi=hi)


def _is_tuple_shaped(c: Constraint, host: str, scheme: MdmScheme) -> bool:
    """One universally quantified variable over ``host``, applying only stored attributes of it."""
    if isinstance(c, TupleCheck):
        body = c.body
    elif isinstance(c, ObjectConstraint) and isinstance(c.body, Forall):
        body = c.body
    else:
        return False
    if body.set != host or len(body.vars) != 1 or has_composition(body.body):
        return False
    if any(isinstance(n, (Forall, Exists)) for n in walk(body.body)):
        return False
    for node in walk(body.body):
        if isinstance(node, Apply):
            if not isinstance(node.arg, Var):
                return False
            mapping = scheme.find_mapping(node.mapping)
            if mapping is None or mapping.domain != host or mapping.kind is not MappingKind.ATTRIBUTE:
                return False
    return True


def _residual_reason(c: Constraint, scheme: MdmScheme) -> str:
    if isinstance(c, (TupleCheck, ObjectConstraint)):
        body = c.formula()
        if isinstance(body, Forall) and len(body.vars) > 1:
            return "quantifies over several rows"
        if has_composition(body):
            return "composes functions"
        for ref in mappings_used(body):
            mapping = scheme.find_mapping(ref)
            if mapping is not None and mapping.kind is MappingKind.COMPUTED_ATTRIBUTE:
                return f"uses computed {ref}"
        return "not expressible as a check"
    return f"{c.kind} is not relational"


def _host_sets(c: Constraint, scheme: MdmScheme) -> tuple[str, ...]:
    out: dict[str, None] = {}
    formula = c.formula()
    if formula is not None:
        for node in walk(formula):
            if isinstance(node, (Forall, Exists)):
                out.setdefault(node.set, None)
        for ref in mappings_used(formula):
            out.setdefault(ref.set, None)
    refs = [getattr(c, a) for a in ("mapping", "outer", "inner", "if_mapping", "then_mapping", "distinct", "lo", "hi") if hasattr(c, a)]
    for ref in refs:
        if hasattr(ref, "set"):
            out.setdefault(ref.set, None)
    if not out and c.host_set():
        out[c.host_set()] = None
    return tuple(out)


class Translator:
    def __init__(self, scheme: MdmScheme):
        self.scheme = scheme
        self.order = order_sets(scheme)
        self.schema = RelationalSchema()
        self.tables: dict[str, Table] = {}
        self.created: set[str] = set()
        self.used: set[int] = set()  # ids of consumed constraints
        self.by_mapping: dict[object, list[Constraint]] = defaultdict(list)
        self.by_host: dict[str, list[Constraint]] = defaultdict(list)
        for c in scheme.constraints:
            if isinstance(c, (Totality, Range, Default)):
                self.by_mapping[c.mapping].append(c)
            else:
                self.by_host[c.host_set()].append(c)

    def consume(self, c: Constraint) -> None:
        self.used.add(id(c))

    # sets become tables, coded domains or views
    def create_table(self, s: ObjectSet) -> Table | None:
        own = self.scheme.mappings_on(s.name)
        has_attributes = any(m.kind in (MappingKind.ATTRIBUTE, MappingKind.COMPUTED_ATTRIBUTE) for m in own)
        referencing = any(m.kind in _REFERENCE_KINDS for m in own)
        x = next(m for m in own if m.kind is MappingKind.OBJECT_IDENTIFIER)
        if s.kind is SetKind.STATIC and not has_attributes and not referencing:
            self.schema.coded_domains[s.name] = s.values
            for c in self.by_mapping[x.ref] + [k for k in self.by_host[s.name] if isinstance(k, Key) and k.product == (x.ref,)]:
                self.consume(c)
                self.schema.coded_constraints.append(RelConstraint("coded-domain", c.label, ("x",), lo=1, hi=len(s.values)))
            return None
        table = Table(s.name)
        self.tables[s.name] = table
        self.schema.tables.append(table)
        self.created.add(s.name)
        key = next(k for k in self.by_host[s.name] if isinstance(k, Key) and k.product == (x.ref,))
        self.consume(key)
        table.constraints.append(RelConstraint("pk", key.label, ("x",)))
        if s.supersets:
            first = self.scheme.mapping(self._inclusion_ref(s.name, s.supersets[0]))
            table.columns.append(Column("x", Autonumber(s.card_exponent)))
            self.add_foreign_key(table, first, s.supersets[0], column="x")
        else:
            table.columns.append(Column("x", Autonumber(s.card_exponent), identity=True))
        for c in self.by_mapping[x.ref]:
            self.consume(c)
            if isinstance(c, Totality):
                table.constraints.append(RelConstraint("pk-not-null", c.label, ("x",)))
            else:
                lo, hi = _bounds(x.codomain)
                table.constraints.append(RelConstraint("pk-domain", c.label, ("x",), lo=lo, hi=hi))
        self.complete_scheme(table, s)
        return table

    def _inclusion_ref(self, set_name: str, superset: str):
        return Mapping(inclusion_name(superset), set_name, superset, MappingKind.CANONICAL_INCLUSION).ref

    # remaining functions and constraints of a set
    def complete_scheme(self, table: Table, s: ObjectSet) -> None:
        for m in self.scheme.mappings_on(s.name):
            if m.kind is MappingKind.STRUCTURAL:
                self.add_foreign_key(table, m, m.codomain)  # type: ignore[arg-type]
            elif m.kind is MappingKind.CANONICAL_INCLUSION and m.name != inclusion_name(s.supersets[0]):
                self.add_foreign_key(table, m, m.codomain)  # type: ignore[arg-type]
            elif m.kind in (MappingKind.ATTRIBUTE, MappingKind.COMPUTED_ATTRIBUTE):
                self.add_column(table, m)
        for m in self.scheme.mappings_on(s.name):
            if m.kind is MappingKind.CANONICAL_PROJECTION:
                continue  # roles are added after the table
            self._totality(table, m)
        self._keys_and_checks(table, s)

    def _totality(self, table: Table, m: Mapping) -> None:
        if m.kind is MappingKind.OBJECT_IDENTIFIER:
            return
        column = "x" if not table.has_column(m.name) else m.name
        for c in self.by_mapping[m.ref]:
            if isinstance(c, Totality) and id(c) not in self.used:
                self.consume(c)
                table.constraints.append(RelConstraint("not-null", c.label, (column,)))

    def _keys_and_checks(self, table: Table, s: ObjectSet) -> None:
        for c in self.by_host[s.name]:
            if id(c) in self.used:
                continue
            if isinstance(c, Key):
                if all(ref.set == s.name and table.has_column(ref.name) for ref in c.product):
                    self.consume(c)
                    table.constraints.append(RelConstraint("unique", c.label, c.columns, deferred=True))
            elif _is_tuple_shaped(c, s.name, self.scheme):
                self.consume(c)
                table.constraints.append(
                    RelConstraint("tuple", c.label, tuple(r.name for r in mappings_used(c.formula())), formula=c.formula())
                )

    # one column with its domain and default
    def add_column(self, table: Table, m: Mapping) -> None:
        table.columns.append(Column(m.name, m.codomain, computed_expr=m.compute))  # type: ignore[arg-type]
        for c in self.by_mapping[m.ref]:
            if isinstance(c, Range):
                self.consume(c)
                if c.synthesized:
                    table.constraints.append(_domain_constraint(c.label, m.name, m.codomain))
                else:
                    table.constraints.append(RelConstraint("domain", c.label, (m.name,), lo=c.lo, hi=c.hi))
            elif isinstance(c, Default):
                self.consume(c)
                table.constraints.append(RelConstraint("default", c.label, (m.name,), default=c.value))

    # a reference becomes a foreign key (or a coded-domain check)
    def add_foreign_key(self, table: Table, m: Mapping, target: str, column: str | None = None) -> None:
        column = column or m.name
        target_set = self.scheme.set(target)
        if not table.has_column(column):
            table.columns.append(Column(column, Autonumber(target_set.card_exponent), max_value=max_surrogate(target_set.card_exponent)))
        for c in self.by_mapping[m.ref]:
            if not isinstance(c, (Range, Default)) or id(c) in self.used:
                continue
            self.consume(c)
            if isinstance(c, Default):
                table.constraints.append(RelConstraint("default", c.label, (column,), default=c.value))
            elif target in self.schema.coded_domains:
                n = len(self.schema.coded_domains[target])
                table.constraints.append(RelConstraint("fk", c.label, (column,), lo=1, hi=n, max_value=n))
            elif not c.synthesized:
                table.constraints.append(RelConstraint("domain", c.label, (column,), lo=c.lo, hi=c.hi))
            else:
                deferred = target not in self.created or (
                    self.order.component.get(target) == self.order.component.get(table.name)
                )
                table.constraints.append(
                    RelConstraint(
                        "fk",
                        c.label,
                        (column,),
                        ref_table=target,
                        max_value=max_surrogate(target_set.card_exponent),
                        deferred=deferred,
                    )
                )

    def run(self) -> tuple[RelationalSchema, NonRelationalOutput, TranslationReport]:
        sets = [self.scheme.set(n) for n in self.order.names]
        for s in sets:
            if s.kind is SetKind.RELATIONSHIP:
                continue
            if s.kind is SetKind.COMPUTED:
                self.schema.views.append(View(s.name, s.view_body or ""))
            else:
                self.create_table(s)
        for s in sets:
            if s.kind is not SetKind.RELATIONSHIP:
                continue
            table = self.create_table(s)
            if table is None:
                continue
            for m in self.scheme.mappings_on(s.name):
                if m.kind is MappingKind.CANONICAL_PROJECTION:
                    self.add_foreign_key(table, m, m.codomain)  # type: ignore[arg-type]
                    self._totality(table, m)
        residual = NonRelationalOutput(
            [
                ResidualEntry(c, _host_sets(c, self.scheme), _residual_reason(c, self.scheme))
                for c in self.scheme.constraints
                if id(c) not in self.used
            ]
        )
        return self.schema, residual, self.report(residual)

    def report(self, residual: NonRelationalOutput) -> TranslationReport:
        kinds = Counter(s.kind for s in self.scheme.sets)
        a = sum(1 for m in self.scheme.mappings if m.kind in _ATTRIBUTE_KINDS)
        per_table = {t.name: dict(Counter(c.category for c in t.constraints)) for t in self.schema.tables}
        return TranslationReport(
            e=len(self.scheme.sets) - kinds[SetKind.RELATIONSHIP],
            r=kinds[SetKind.RELATIONSHIP],
            a=a,
            f=len(self.scheme.mappings) - a,
            rc=self.schema.constraint_count,
            nrc=len(residual),
            per_table=per_table,
            categories=dict(self.schema.tally()),
        )


def translate(scheme: MdmScheme) -> tuple[RelationalSchema, NonRelationalOutput, TranslationReport]:
    """Run the translation; raises :class:`TranslationError` on an invalid scheme."""
    errors = [d for d in validate_scheme(scheme) if d.severity == "error"]
    if errors:
        raise TranslationError(errors)
    return Translator(scheme).run()
