"""Pruning of unique keys implied by residual constraints.

Two rules are recognised:

* R1: ``outer o inner`` null-reflexive makes ``inner`` injective on its non-null
  values, so a unique key on ``inner`` alone is redundant.
* R2: a no-overlap constraint makes ``group + distinct + lo`` and
  ``group + distinct + hi`` unique, provided intervals are well formed
  (a ``lo <= hi`` check is enforced and ``lo`` never exceeds the current year).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from emdm.formula import Apply, Coalesce, Compare, CurrentYear, Forall, Implies, Lit, Sub, Var, conjuncts
from emdm.model import IntRange, MapRef, MappingKind, MdmScheme, NoOverlap, NullReflexive, TupleCheck
from emdm.relational import RelationalSchema, RelConstraint, Table
from emdm.translator import NonRelationalOutput


@dataclass(frozen=True)
class PrunedKey:
    table: str
    columns: tuple[str, ...]
    key_label: str
    implied_by: str
    rule: str

    def __str__(self) -> str:
        return f"{self.table}({' . '.join(self.columns)}) implied by {self.implied_by} [{self.rule}]"


@dataclass
class ImplicationReport:
    pruned: list[PrunedKey] = field(default_factory=list)
    kept_implied: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "pruned": [
                {
                    "table": p.table,
                    "columns": list(p.columns),
                    "key": p.key_label,
                    "impliedBy": p.implied_by,
                    "rule": p.rule,
                }
                for p in self.pruned
            ],
            "keptImplied": list(self.kept_implied),
        }


def _find_key(table: Table, columns: set[str]) -> RelConstraint | None:
    for c in table.constraints:
        if c.category == "unique" and set(c.columns) == columns:
            return c
    return None


def _has_order_check(table: Table, lo: str, hi: str) -> bool:
    for c in table.of("tuple"):
        f = c.formula
        body = f.body if isinstance(f, Forall) else f
        if not isinstance(body, Compare):
            continue
        pair = (_column_of(body.lhs), _column_of(body.rhs))
        if (body.op == "<=" and pair == (lo, hi)) or (body.op == ">=" and pair == (hi, lo)):
            return True
    return False


def _column_of(term) -> str | None:
    if isinstance(term, Apply) and isinstance(term.arg, Var):
        return term.mapping.name
    return None


def _lo_bounded_by_current_year(scheme: MdmScheme, lo: MapRef) -> bool:
    codomain = scheme.mapping(lo).codomain
    return isinstance(codomain, IntRange) and isinstance(codomain.hi, CurrentYear)


def _table_of(schema: RelationalSchema, name: str) -> Table | None:
    return schema.table(name) if schema.has_table(name) else None


def _lifespan_note(residual: NonRelationalOutput, scheme: MdmScheme, schema: RelationalSchema) -> list[str]:
    """Guarded range checks on a computed ``isNull(hi, currentYear()) - lo`` with lower bound 0."""
    notes: list[str] = []
    for entry in residual:
        c = entry.constraint
        if not isinstance(c, TupleCheck):
            continue
        body = c.body.body
        if not isinstance(body, Implies):
            continue
        for part in conjuncts(body.rhs):
            if not (isinstance(part, Compare) and part.op == "<=" and part.lhs == Lit(0)):
                continue
            ref = part.rhs.mapping if isinstance(part.rhs, Apply) else None
            mapping = scheme.find_mapping(ref) if ref is not None else None
            if mapping is None or mapping.kind is not MappingKind.COMPUTED_ATTRIBUTE:
                continue
            expr = mapping.compute
            if not (isinstance(expr, Sub) and isinstance(expr.lhs, Coalesce)):
                continue
            lo, hi = _column_of(expr.rhs), _column_of(expr.lhs.first)
            table = _table_of(schema, c.host)
            if lo and hi and table is not None and _has_order_check(table, lo, hi):
                notes.append(
                    f"{c.label} implies {c.host} check {lo} <= {hi} only where its guard holds; "
                    f"the check is kept"
                )
    return notes


def analyze(
    schema: RelationalSchema, residual: NonRelationalOutput, scheme: MdmScheme
) -> tuple[RelationalSchema, ImplicationReport]:
    """Return a copy of ``schema`` without implied unique keys, and what was removed."""
    pruned_schema = copy.deepcopy(schema)
    report = ImplicationReport()
    doomed: list[tuple[Table, RelConstraint, str, str]] = []
    for entry in residual:
        c = entry.constraint
        if isinstance(c, NullReflexive):
            table = _table_of(pruned_schema, c.inner.set)
            key = _find_key(table, {c.inner.name}) if table is not None else None
            if key is not None:
                doomed.append((table, key, c.label, "R1"))
        elif isinstance(c, NoOverlap):
            table = _table_of(pruned_schema, c.set)
            if table is None:
                continue
            if not _has_order_check(table, c.lo.name, c.hi.name):
                report.kept_implied.append(f"{c.label}: no {c.lo.name} <= {c.hi.name} check, keys kept")
                continue
            base = {g.name for g in c.group} | {c.distinct.name}
            candidates = [base | {c.hi.name}]
            if _lo_bounded_by_current_year(scheme, c.lo):
                candidates.insert(0, base | {c.lo.name})
            else:
                report.kept_implied.append(f"{c.label}: {c.lo.name} may exceed the current year, start key kept")
            for columns in candidates:
                key = _find_key(table, columns)
                if key is not None:
                    doomed.append((table, key, c.label, "R2"))
    seen: set[int] = set()
    for table, key, implied_by, rule in doomed:
        if id(key) in seen:
            continue
        seen.add(id(key))
        table.constraints.remove(key)
        report.pruned.append(PrunedKey(table.name, key.columns, key.source, implied_by, rule))
    report.kept_implied += _lifespan_note(residual, scheme, pruned_schema)
    return pruned_schema, report
