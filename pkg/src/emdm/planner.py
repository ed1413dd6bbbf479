"""Enforcement plans: which table, event and strategy guards each residual constraint."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field

from emdm.formula import (
    And,
    Apply,
    Compare,
    Exists,
    Forall,
    Formula,
    Implies,
    IsNull,
    Lit,
    MapRef,
    Not,
    Or,
    Var,
    conjuncts,
    has_composition,
    mappings_used,
    term_to_text,
    to_text,
)
from emdm.model import (
    Acyclic,
    Constraint,
    Existence,
    MappingKind,
    MdmScheme,
    NoOverlap,
    NullReflexive,
)
from emdm.relational import RelationalSchema
from emdm.sqlgen import Demotion
from emdm.translator import NonRelationalOutput

EVENTS = (
    "row-current",
    "column-before-update",
    "row-before-update",
    "column-after-update",
    "row-after-update",
    "before-delete",
)
STRATEGIES = (
    "filter-domain",
    "reject-check",
    "lock-columns",
    "nullify-and-warn",
    "propagate-update",
    "cycle-check",
    "existence-check",
    "cross-row-check",
    "unique-nulls-distinct",
)


@dataclass(frozen=True)
class PlanEntry:
    constraint_id: str
    table: str
    event: str
    strategy: str
    columns: tuple[str, ...]  # tracked columns
    predicate: str = ""
    message: str = ""
    event_column: str | None = None
    skip_new_rows: bool = False
    advisory: bool = False
    targets: tuple[str, ...] = ()  # columns filtered, locked or nulled
    guard: Formula | None = field(default=None, compare=False)

    @property
    def event_name(self) -> str:
        return f"{self.event}({self.event_column})" if self.event_column else self.event

    def as_dict(self) -> dict:
        return {
            "table": self.table,
            "event": self.event_name,
            "strategy": self.strategy,
            "columns": list(self.columns),
            "predicate": self.predicate,
            "message": self.message,
            "skipNewRows": self.skip_new_rows,
            "advisory": self.advisory,
        }


@dataclass
class EnforcementPlan:
    entries: list[PlanEntry] = field(default_factory=list)
    descriptions: dict[str, str] = field(default_factory=dict)  # constraint id -> text, in plan order
    warnings: list[str] = field(default_factory=list)

    def coverage(self) -> dict[str, list[PlanEntry]]:
        out: dict[str, list[PlanEntry]] = {cid: [] for cid in self.descriptions}
        for e in self.entries:
            out.setdefault(e.constraint_id, []).append(e)
        return out

    def by_table(self) -> dict[str, list[PlanEntry]]:
        out: dict[str, list[PlanEntry]] = defaultdict(list)
        for e in self.entries:
            out[e.table].append(e)
        return dict(out)

    def for_constraint(self, cid: str) -> list[PlanEntry]:
        return [e for e in self.entries if e.constraint_id == cid]


# ---- analysis helpers -------------------------------------------------------


def _quantified_sets(formula: Formula) -> tuple[set[str], set[str]]:
    """(universal, existential) sets, taking the polarity of each quantifier into account."""
    universal: set[str] = set()
    existential: set[str] = set()

    def visit(f: Formula, positive: bool) -> None:
        if isinstance(f, (Forall, Exists)):
            is_universal = isinstance(f, Forall) == positive
            (universal if is_universal else existential).add(f.set)
            visit(f.body, positive)
        elif isinstance(f, Not):
            visit(f.arg, not positive)
        elif isinstance(f, Implies):
            visit(f.lhs, not positive)
            visit(f.rhs, positive)
        elif isinstance(f, (And, Or)):
            visit(f.lhs, positive)
            visit(f.rhs, positive)

    visit(formula, True)
    return universal, existential - universal


def _tracked(refs: list[MapRef], scheme: MdmScheme, schema: RelationalSchema) -> dict[str, list[str]]:
    """Columns per table touched by ``refs``; computed columns pull in their inputs."""
    out: dict[str, list[str]] = {}

    def add(ref: MapRef) -> None:
        if not schema.has_table(ref.set):
            return
        mapping = scheme.find_mapping(ref)
        if mapping is None or mapping.kind is MappingKind.OBJECT_IDENTIFIER:
            return
        cols = out.setdefault(ref.set, [])
        name = ref.name if schema.table(ref.set).has_column(ref.name) else "x"
        if name != "x" and name not in cols:
            cols.append(name)
        if mapping.kind is MappingKind.COMPUTED_ATTRIBUTE and mapping.compute is not None:
            for inner in mappings_used(mapping.compute):
                add(inner)

    for ref in refs:
        add(ref)
    return {t: cols for t, cols in out.items() if cols}


def _refs_of(c: Constraint) -> list[MapRef]:
    formula = c.formula()
    if formula is not None:
        return mappings_used(formula)
    if isinstance(c, Acyclic):
        return [c.mapping]
    return []


def _single_column_event(cols: list[str] | tuple[str, ...]) -> tuple[str, str | None]:
    return ("column-before-update", cols[0]) if len(cols) == 1 else ("row-before-update", None)


def _domain_filter(body: Formula, host: str) -> tuple[MapRef, MapRef, Lit] | None:
    """Match ``g(f(x)) = literal`` where f is a function on ``host``."""
    if not (isinstance(body, Compare) and body.op == "=" and isinstance(body.rhs, Lit)):
        return None
    outer = body.lhs
    if not (isinstance(outer, Apply) and isinstance(outer.arg, Apply) and isinstance(outer.arg.arg, Var)):
        return None
    if outer.arg.mapping.set != host:
        return None
    return outer.arg.mapping, outer.mapping, body.rhs


def _null_conclusions(body: Formula, host: str) -> tuple[Formula, list[str]] | None:
    """Match ``guard implies f1(x) is null and ... and fn(x) is null`` over ``host`` columns."""
    if not isinstance(body, Implies) or has_composition(body.lhs):
        return None
    targets: list[str] = []
    for part in conjuncts(body.rhs):
        if not (isinstance(part, IsNull) and isinstance(part.term, Apply) and isinstance(part.term.arg, Var)):
            return None
        if part.term.mapping.set != host:
            return None
        targets.append(part.term.mapping.name)
    if any(ref.set != host for ref in mappings_used(body.lhs)) or not mappings_used(body.lhs):
        return None
    return body.lhs, targets


def _default_message(strategy: str, description: str) -> str:
    if strategy == "nullify-and-warn":
        return "{row}: {columns} cleared. " + description
    if strategy == "lock-columns":
        return "{row}: {columns} must stay empty. " + description
    return description + " (violated for {table} row {row})"


# ---- planning ---------------------------------------------------------------


class _Planner:
    def __init__(self, scheme: MdmScheme, schema: RelationalSchema):
        self.scheme = scheme
        self.schema = schema
        self.plan = EnforcementPlan()

    def add(self, c_id: str, description: str, message_for, **kw) -> PlanEntry:
        strategy = kw["strategy"]
        message = message_for(kw["table"]) if message_for else None
        if message is None or strategy in ("nullify-and-warn", "lock-columns", "propagate-update"):
            message = _default_message(strategy, description)
        entry = PlanEntry(constraint_id=c_id, message=message, **kw)
        self.plan.entries.append(entry)
        return entry

    def constraint(self, c: Constraint) -> None:
        self.plan.descriptions[c.label] = c.description
        add = lambda **kw: self.add(c.label, c.description, c.message_for, **kw)  # noqa: E731
        tracked = _tracked(_refs_of(c), self.scheme, self.schema)
        formula = c.formula()
        universal, existential = _quantified_sets(formula) if formula is not None else ({c.host_set()}, set())
        made: list[PlanEntry] = []

        if isinstance(c, NullReflexive):  # rule 2
            inner, outer = c.inner, c.outer
            outer_total = self.scheme.mapping(outer).total
            predicate = f"{outer.set}.{outer.name} = x"
            if not outer_total:
                predicate += f" or {outer.set}.{outer.name} is null"
            made.append(add(table=inner.set, event="row-current", strategy="filter-domain",
                            columns=(inner.name,), targets=(inner.name,), predicate=predicate))
            made.append(add(table=outer.set, event="column-before-update", event_column=outer.name,
                            strategy="reject-check", columns=(outer.name,),
                            predicate=to_text(formula), skip_new_rows=outer.set not in universal))
            if not outer_total:
                made.append(add(table=inner.set, event="column-after-update", event_column=inner.name,
                                strategy="propagate-update", columns=(inner.name,), advisory=True,
                                predicate=f"{outer.set}.{outer.name}({inner.name}(x)) := x"))
        elif isinstance(c, Existence):  # rule 6
            cols = (c.if_mapping.name, c.then_mapping.name)
            made.append(add(table=c.host_set(), event="row-before-update", strategy="existence-check",
                            columns=cols, predicate=to_text(formula)))
        elif isinstance(c, Acyclic):  # rule 7
            made.append(add(table=c.host_set(), event="column-before-update", event_column=c.mapping.name,
                            strategy="cycle-check", columns=(c.mapping.name,),
                            predicate=f"{c.mapping.name} acyclic"))
        elif isinstance(c, NoOverlap):  # rule 8
            cols = tuple(tracked.get(c.set, []))
            made.append(add(table=c.set, event="row-before-update", strategy="cross-row-check",
                            columns=cols, predicate=to_text(formula)))
        elif isinstance(formula, Forall) and len(formula.vars) > 1:  # rule 8
            pass  # every table is handled by the coverage pass below
        elif isinstance(formula, Forall):
            host = formula.set
            body = formula.body
            host_cols = tracked.get(host, [])
            domain_filter = _domain_filter(body, host)
            nulls = _null_conclusions(body, host)
            if domain_filter is not None:  # rule 1
                f, g, lit = domain_filter
                made.append(add(table=host, event="row-current", strategy="filter-domain",
                                columns=(f.name,), targets=(f.name,),
                                predicate=f"{g.set}.{g.name} = {term_to_text(lit)}"))
                made.append(add(table=host, event="column-before-update", event_column=f.name,
                                strategy="reject-check", columns=(f.name,), predicate=to_text(formula)))
            elif nulls is not None:  # rule 3
                guard, targets = nulls
                guard_cols = [r.name for r in mappings_used(guard)]
                event, column = ("column-after-update", guard_cols[0]) if len(guard_cols) == 1 else ("row-after-update", None)
                made.append(add(table=host, event="row-current", strategy="lock-columns",
                                columns=tuple(targets), targets=tuple(targets),
                                predicate=to_text(guard), guard=guard))
                made.append(add(table=host, event=event, event_column=column, strategy="nullify-and-warn",
                                columns=tuple(guard_cols), targets=tuple(targets),
                                predicate=to_text(guard), guard=guard))
            elif host_cols:  # rules 4 and 5
                event, column = _single_column_event(host_cols)
                made.append(add(table=host, event=event, event_column=column, strategy="reject-check",
                                columns=tuple(host_cols), predicate=to_text(formula)))
        else:
            self.plan.warnings.append(f"{c.label}: unclassified, checked as a cross-row constraint")

        # coverage: every touched column of every table gets an entry
        for table, cols in tracked.items():
            covered = {col for e in made if e.table == table for col in e.columns}
            rest = [col for col in cols if col not in covered]
            if not rest:
                continue
            event, column = _single_column_event(rest)
            made.append(add(table=table, event=event, event_column=column, strategy="cross-row-check",
                            columns=tuple(rest), predicate=to_text(formula) if formula is not None else "",
                            skip_new_rows=table not in universal))
        for set_name in sorted(existential):  # rule 9
            if self.schema.has_table(set_name):
                made.append(add(table=set_name, event="before-delete", strategy="cross-row-check",
                                columns=tuple(tracked.get(set_name, [])),
                                predicate=to_text(formula), skip_new_rows=True))
        if not made:
            host = c.host_set()
            self.plan.warnings.append(f"{c.label}: no column to track, checked on every {host} change")
            add(table=host, event="row-before-update", strategy="cross-row-check", columns=(),
                predicate=to_text(formula) if formula is not None else "")

    def demotion(self, d: Demotion) -> None:
        cid = d.source
        self.plan.descriptions[cid] = f"{d.description} ({d.reason})"
        if d.target_strategy == "unique-nulls-distinct":
            event, column = _single_column_event(d.columns)
            self.add(cid, d.description, None, table=d.table, event=event, event_column=column,
                     strategy="unique-nulls-distinct", columns=d.columns,
                     predicate="unique over rows with no null in " + ", ".join(d.columns))
        elif d.target_strategy == "propagate-update":
            col = d.columns[0]
            expr = self.schema.table(d.table).column(col).computed_expr
            inputs = tuple(r.name for r in mappings_used(expr)) if expr is not None else ()
            event, column = ("column-after-update", inputs[0]) if len(inputs) == 1 else ("row-after-update", None)
            self.add(cid, d.description, None, table=d.table, event=event, event_column=column,
                     strategy="propagate-update", columns=inputs, targets=(col,),
                     predicate=f"{col} := {term_to_text(expr)}" if expr is not None else col)
        else:
            event, column = _single_column_event(d.columns)
            self.add(cid, d.description, None, table=d.table, event=event, event_column=column,
                     strategy="reject-check", columns=d.columns, predicate=d.reason)


def plan(
    residual: NonRelationalOutput,
    demotions: list[Demotion],
    scheme: MdmScheme,
    schema: RelationalSchema,
) -> EnforcementPlan:
    """Build the enforcement plan for residual constraints and dialect demotions."""
    planner = _Planner(scheme, schema)
    for entry in residual:
        planner.constraint(entry.constraint)
    for d in demotions:
        planner.demotion(d)
    return planner.plan


def render_plan(p: EnforcementPlan, fmt: str = "machine") -> str:
    if fmt == "machine":
        doc = {
            "planVersion": 1,
            "constraints": [
                {
                    "id": cid,
                    "description": desc,
                    "entries": [e.as_dict() for e in entries],
                }
                for cid, desc in p.descriptions.items()
                for entries in [p.for_constraint(cid)]
            ],
        }
        return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
    if fmt != "human":
        raise ValueError(f"unknown plan format {fmt!r}")
    lines: list[str] = []
    for table, entries in p.by_table().items():
        lines.append(table)
        for e in entries:
            flags = []
            if e.skip_new_rows:
                flags.append("existing rows only")
            if e.advisory:
                flags.append("advisory")
            suffix = f"  ({', '.join(flags)})" if flags else ""
            lines.append(f"  {e.constraint_id:<28} {e.event_name:<40} {e.strategy:<22} [{', '.join(e.columns)}]{suffix}")
    for w in p.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + ("\n" if lines else "")
