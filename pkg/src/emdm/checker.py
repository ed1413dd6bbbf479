"""Instance checking and event simulation under an enforcement plan.

Formulas are compiled into closures over Python values: ``None`` is null, and
three-valued results are ``True``, ``False`` or ``None`` (unknown).  Only a
``False`` verdict is a violation.
"""

from __future__ import annotations

import copy
import csv
import enum
import itertools
import json
import operator
import re
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from pathlib import Path

from emdm.formula import (
    Add,
    And,
    Apply,
    Coalesce,
    Compare,
    CurrentYear,
    Exists,
    Forall,
    Formula,
    Implies,
    IsNull,
    Lit,
    Not,
    Or,
    Sub,
    Term,
    Var,
    has_composition,
    mappings_used,
    quantifiers,
)
from emdm.model import Acyclic, Constraint, EnumLiterals, Text, is_numeric
from emdm.planner import EnforcementPlan, PlanEntry
from emdm.relational import RelationalSchema, RelConstraint, Table
from emdm.translator import NonRelationalOutput

Row = dict[str, object]


class Verdict(enum.Enum):
    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"

    @classmethod
    def of(cls, value: bool | None) -> Verdict:
        return cls.UNKNOWN if value is None else cls.TRUE if value else cls.FALSE


class InstanceError(Exception):
    pass


class EventError(Exception):
    """An event that cannot be applied at all (unknown table, row or column)."""


@dataclass
class Instance:
    schema: RelationalSchema
    tables: dict[str, dict[int, Row]]
    current_year: int

    def rows(self, table: str) -> dict[int, Row]:
        return self.tables.setdefault(table, {})

    def copy(self) -> Instance:
        return Instance(self.schema, copy.deepcopy(self.tables), self.current_year)

    def snapshot(self) -> dict[str, dict[int, Row]]:
        return copy.deepcopy(self.tables)


@dataclass(frozen=True)
class Violation:
    constraint_id: str
    table: str
    row: tuple[int, ...]
    message: str
    severity: str = "error"

    def as_dict(self) -> dict:
        return {
            "constraint": self.constraint_id,
            "table": self.table,
            "row": list(self.row),
            "message": self.message,
            "severity": self.severity,
        }


@dataclass(frozen=True)
class Mutation:
    table: str
    x: int
    column: str
    old: object
    new: object


@dataclass(frozen=True)
class Event:
    op: str
    table: str
    x: int | None = None
    values: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> Event:
        op = d.get("op")
        if op not in ("insert", "update", "delete"):
            raise EventError(f"unknown event op {op!r}")
        if "table" not in d:
            raise EventError("event without table")
        if op != "insert" and "x" not in d:
            raise EventError(f"{op} event without x")
        return cls(op, d["table"], d.get("x"), dict(d.get("values") or {}))

    def as_dict(self) -> dict:
        d: dict = {"op": self.op, "table": self.table}
        if self.x is not None:
            d["x"] = self.x
        if self.values:
            d["values"] = dict(self.values)
        return d


@dataclass
class EventResult:
    accepted: bool
    messages: list[str] = field(default_factory=list)
    mutations: list[Mutation] = field(default_factory=list)
    x: int | None = None
    violated: list[str] = field(default_factory=list)  # ids of the constraints that caused a rejection
    checked: list[str] = field(default_factory=list)  # residual constraints the plan re-evaluated

    def __iter__(self):
        return iter((self.accepted, self.messages, self.mutations))


# ---- compilation -------------------------------------------------------------

Env = dict[str, object]
TermFn = Callable[[Instance, Env], object]
FormulaFn = Callable[[Instance, Env], "bool | None"]

_OPS = {
    "=": operator.eq,
    "<>": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}
_cache: dict[int, tuple[object, Callable]] = {}


def _cached(node, build):
    hit = _cache.get(id(node))
    if hit is not None and hit[0] is node:
        return hit[1]
    fn = build(node)
    _cache[id(node)] = (node, fn)
    return fn


def compile_term(term: Term) -> TermFn:
    return _cached(term, _build_term)


def _build_term(term: Term) -> TermFn:
    if isinstance(term, Var):
        name = term.name
        return lambda inst, env: env[name]
    if isinstance(term, Lit):
        value = term.value
        return lambda inst, env: value
    if isinstance(term, CurrentYear):
        return lambda inst, env: inst.current_year
    if isinstance(term, Apply):
        arg = compile_term(term.arg)
        table, col = term.mapping.set, term.mapping.name

        def apply(inst: Instance, env: Env) -> object:
            v = arg(inst, env)
            if v is None:
                return None
            row = inst.tables.get(table, {}).get(v)  # type: ignore[call-overload]
            if row is None:
                return None
            return row.get(col, v) if col in row else v  # identity and inclusion mappings
        return apply
    if isinstance(term, (Add, Sub)):
        lhs, rhs = compile_term(term.lhs), compile_term(term.rhs)
        op = operator.add if isinstance(term, Add) else operator.sub

        def arith(inst: Instance, env: Env) -> object:
            a = lhs(inst, env)
            if a is None:
                return None
            b = rhs(inst, env)
            return None if b is None else op(a, b)
        return arith
    if isinstance(term, Coalesce):
        first, second = compile_term(term.first), compile_term(term.second)

        def coalesce(inst: Instance, env: Env) -> object:
            a = first(inst, env)
            return second(inst, env) if a is None else a
        return coalesce
    raise TypeError(f"not a term: {term!r}")


def compile_formula(formula: Formula) -> FormulaFn:
    return _cached(formula, _build_formula)


def _build_formula(f: Formula) -> FormulaFn:
    if isinstance(f, Compare):
        lhs, rhs, op = compile_term(f.lhs), compile_term(f.rhs), _OPS[f.op]

        def compare(inst, env):
            a = lhs(inst, env)
            if a is None:
                return None
            b = rhs(inst, env)
            if b is None:
                return None
            return op(a, b)
        return compare
    if isinstance(f, IsNull):
        term = compile_term(f.term)
        return lambda inst, env: term(inst, env) is None
    if isinstance(f, Not):
        arg = compile_formula(f.arg)

        def negate(inst, env):
            v = arg(inst, env)
            return None if v is None else not v
        return negate
    if isinstance(f, And):
        lhs, rhs = compile_formula(f.lhs), compile_formula(f.rhs)

        def conj(inst, env):
            a = lhs(inst, env)
            if a is False:
                return False
            b = rhs(inst, env)
            if b is False:
                return False
            return None if a is None or b is None else True
        return conj
    if isinstance(f, Or):
        lhs, rhs = compile_formula(f.lhs), compile_formula(f.rhs)

        def disj(inst, env):
            a = lhs(inst, env)
            if a is True:
                return True
            b = rhs(inst, env)
            if b is True:
                return True
            return None if a is None or b is None else False
        return disj
    if isinstance(f, Implies):
        lhs, rhs = compile_formula(f.lhs), compile_formula(f.rhs)

        def implies(inst, env):
            a = lhs(inst, env)
            if a is False:
                return True
            b = rhs(inst, env)
            if b is True:
                return True
            return None if a is None or b is None else False
        return implies
    if isinstance(f, (Forall, Exists)):
        body = compile_formula(f.body)
        names, table = f.vars, f.set
        universal = isinstance(f, Forall)
        stop = False if universal else True

        def quantified(inst, env):
            result: bool | None = universal
            keys = list(inst.tables.get(table, {}))
            for combo in itertools.product(keys, repeat=len(names)):
                inner = dict(env)
                inner.update(zip(names, combo))
                v = body(inst, inner)
                if v is stop:
                    return stop
                if v is None:
                    result = None
            return result
        return quantified
    raise TypeError(f"not a formula: {f!r}")


def eval_formula(formula: Formula, instance: Instance, env: Env | None = None) -> Verdict:
    return Verdict.of(compile_formula(formula)(instance, env or {}))


def eval_term(term: Term, instance: Instance, env: Env | None = None) -> object:
    return compile_term(term)(instance, env or {})


# ---- instances -------------------------------------------------------------


def recompute_derived(instance: Instance, table: str | None = None, xs: Iterable[int] | None = None) -> None:
    """Refresh computed columns (all tables, or the given rows of one table)."""
    tables = [instance.schema.table(table)] if table else instance.schema.tables
    for t in tables:
        computed = [(c.name, compile_term(c.computed_expr)) for c in t.columns if c.computed_expr is not None]
        if not computed:
            continue
        rows = instance.rows(t.name)
        for x in (list(rows) if xs is None else list(xs)):
            row = rows.get(x)
            if row is None:
                continue
            for name, fn in computed:
                row[name] = fn(instance, {"x": x})


def _parse_cell(table: Table, col: str, text: str, where: str) -> object:
    if text == "":
        return None
    vtype = table.column(col).sql_type
    if col == "x" or is_numeric(vtype) or _is_reference(table, col):
        try:
            return int(text)
        except ValueError:
            raise InstanceError(f"{where}: {col} expects an integer, got {text!r}") from None
    return text


def _is_reference(table: Table, col: str) -> bool:
    return any(rc.columns == (col,) for rc in table.of("fk"))


def load_instance(directory: str | Path, schema: RelationalSchema, current_year: int) -> Instance:
    """Read ``<TABLE>.csv`` files; a missing file means an empty table."""
    directory = Path(directory)
    tables: dict[str, dict[int, Row]] = {}
    for t in schema.tables:
        rows: dict[int, Row] = {}
        tables[t.name] = rows
        path = directory / f"{t.name}.csv"
        if not path.exists():
            continue
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                continue
            unknown = [h for h in header if not t.has_column(h)]
            if unknown:
                raise InstanceError(f"{path.name}: unknown column(s) {', '.join(unknown)}")
            if "x" not in header:
                raise InstanceError(f"{path.name}: no x column")
            for lineno, cells in enumerate(reader, start=2):
                if not cells:
                    continue
                if len(cells) != len(header):
                    raise InstanceError(f"{path.name}:{lineno}: expected {len(header)} cells, got {len(cells)}")
                row: Row = {c.name: None for c in t.columns}
                for col, text in zip(header, cells):
                    row[col] = _parse_cell(t, col, text.strip(), f"{path.name}:{lineno}")
                x = row["x"]
                if x is None:
                    raise InstanceError(f"{path.name}:{lineno}: empty x")
                if x in rows:
                    raise InstanceError(f"{path.name}:{lineno}: duplicate x {x}")
                rows[x] = row  # type: ignore[index]
    instance = Instance(schema, tables, current_year)
    recompute_derived(instance)
    return instance


def write_instance(instance: Instance, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t in instance.schema.tables:
        names = [c.name for c in t.columns]
        with (directory / f"{t.name}.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for x in sorted(instance.rows(t.name)):
                row = instance.rows(t.name)[x]
                w.writerow(["" if row.get(n) is None else row.get(n) for n in names])


def load_events(path: str | Path) -> list[Event]:
    events = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            events.append(Event.from_dict(json.loads(line)))
        except (json.JSONDecodeError, EventError) as exc:
            raise EventError(f"{path}:{lineno}: {exc}") from None
    return events


# ---- messages ----------------------------------------------------------------


def display_name(instance: Instance, table: str, x: int | None, row: Row | None = None) -> str:
    if x is None:
        return "?"
    if row is None:
        row = instance.rows(table).get(x)
    if row is not None and instance.schema.has_table(table):
        for col in instance.schema.table(table).columns:
            if col.name != "x" and isinstance(col.sql_type, Text) and row.get(col.name) is not None:
                return str(row[col.name])
    return f"{table} #{x}"


def _referenced_table(instance: Instance, table: str, col: str) -> str | None:
    if not instance.schema.has_table(table):
        return None
    for rc in instance.schema.table(table).of("fk"):
        if rc.columns == (col,) and rc.ref_table is not None:
            return rc.ref_table
    return None


def _show(instance: Instance, table: str, col: str, value: object) -> str:
    if value is None:
        return "null"
    target = _referenced_table(instance, table, col)
    if target is not None:
        return display_name(instance, target, value)  # type: ignore[arg-type]
    if table in instance.schema.coded_domains and col == "x":
        return str(value)
    return str(value)


_PLACEHOLDER = re.compile(r"\{(row|table|constraint|value|columns|old:\w+|new:\w+)\}")


def render_message(
    template: str,
    instance: Instance,
    table: str,
    x: int | None,
    *,
    old: Row | None = None,
    description: str = "",
    columns: Iterable[str] = (),
    value: object = None,
) -> str:
    new = instance.rows(table).get(x) if x is not None else None
    name = display_name(instance, table, x, new or old)

    def fill(m: re.Match) -> str:
        key = m.group(1)
        if key == "row":
            return name
        if key == "table":
            return table
        if key == "constraint":
            return description
        if key == "columns":
            return ", ".join(columns)
        if key == "value":
            return "null" if value is None else str(value)
        which, col = key.split(":")
        source = old if which == "old" else new
        return _show(instance, table, col, None if source is None else source.get(col))

    return _PLACEHOLDER.sub(fill, template)


def _default_message(description: str) -> str:
    return description + " (violated for {table} row {row})"


# ---- checking -----------------------------------------------------------------


def detect_cycle(mapping_column: str, instance: Instance, table: str, start: int) -> list[int] | None:
    """Follow ``mapping_column`` from ``start``; return the path closing a cycle, if any."""
    rows = instance.rows(table)
    path: list[int] = []
    seen: dict[int, int] = {}
    x: object = start
    while x is not None and x in rows:
        if x in seen:
            return path[seen[x]:] + [x]  # type: ignore[list-item]
        seen[x] = len(path)  # type: ignore[index]
        path.append(x)  # type: ignore[arg-type]
        x = rows[x].get(mapping_column)  # type: ignore[index]
    return None


def _value_ok(rc: RelConstraint, value: object, current_year: int) -> bool:
    if value is None:
        return True
    if rc.values:
        return value in rc.values
    if rc.max_len is not None:
        return isinstance(value, str) and len(value) <= rc.max_len
    if not isinstance(value, int) or isinstance(value, bool):
        return False
    lo = current_year if isinstance(rc.lo, CurrentYear) else rc.lo
    hi = current_year if isinstance(rc.hi, CurrentYear) else rc.hi
    return (lo is None or value >= lo) and (hi is None or value <= hi)  # type: ignore[operator]


def _column_type_ok(table: Table, col: str, value: object) -> bool:
    if value is None:
        return True
    vtype = table.column(col).sql_type
    if isinstance(vtype, (Text, EnumLiterals)):
        return isinstance(value, str)
    return isinstance(value, int) and not isinstance(value, bool)


def _relational_row_problems(instance: Instance, table: Table, x: int, row: Row) -> list[tuple[RelConstraint | None, str]]:
    """Single-row relational checks: types, NOT NULL, domains, references, tuple checks."""
    out: list[tuple[RelConstraint | None, str]] = []
    name = display_name(instance, table.name, x, row)
    for col in table.columns:
        if not _column_type_ok(table, col.name, row.get(col.name)):
            out.append((None, f"{table.name} row {name}: {col.name} has the wrong type"))
    for rc in table.constraints:
        col = rc.columns[0] if rc.columns else None
        value = row.get(col) if col else None
        if rc.category in ("not-null", "pk-not-null"):
            if value is None:
                out.append((rc, f"{table.name} row {name}: {col} may not be null"))
        elif rc.category in ("domain", "pk-domain"):
            if not _value_ok(rc, value, instance.current_year):
                out.append((rc, f"{table.name} row {name}: {col} value {value!r} is out of range"))
        elif rc.category == "fk":
            if value is None:
                continue
            if rc.ref_table is None:
                if not _value_ok(rc, value, instance.current_year):
                    out.append((rc, f"{table.name} row {name}: {col} code {value!r} is out of range"))
            elif value not in instance.rows(rc.ref_table) or (rc.max_value and not 1 <= value <= rc.max_value):  # type: ignore[operator]
                out.append((rc, f"{table.name} row {name}: {col} refers to a missing {rc.ref_table} row {value}"))
        elif rc.category == "tuple":
            body = rc.formula.body if isinstance(rc.formula, Forall) else rc.formula
            if compile_formula(body)(instance, {"x": x}) is False:  # type: ignore[arg-type]
                out.append((rc, f"{table.name} row {name}: check {rc.source} fails"))
    return out


def _unique_problems(instance: Instance, table: Table, only_x: int | None = None) -> list[tuple[RelConstraint, tuple[int, ...], str]]:
    out = []
    rows = instance.rows(table.name)
    for rc in table.of("unique"):
        groups: dict[tuple, list[int]] = {}
        for x in sorted(rows):
            key = tuple(rows[x].get(c) for c in rc.columns)
            if any(v is None for v in key):
                continue
            groups.setdefault(key, []).append(x)
        for key, xs in groups.items():
            if len(xs) > 1 and (only_x is None or only_x in xs):
                shown = ", ".join(f"{c}={v}" for c, v in zip(rc.columns, key))
                out.append((rc, tuple(xs), f"{table.name}: rows {', '.join(map(str, xs))} share {shown}"))
    return out


def _binding_prefix(formula: Formula) -> tuple[list[tuple[str, str]], Formula]:
    """Leading universal variables ``[(var, set)]`` and the remaining body."""
    binds: list[tuple[str, str]] = []
    while isinstance(formula, Forall):
        binds += [(v, formula.set) for v in formula.vars]
        formula = formula.body
    return binds, formula


def constraint_violations(
    constraint: Constraint,
    instance: Instance,
    only: tuple[str, int] | None = None,
    message: str | None = None,
) -> list[Violation]:
    """Violations of a residual constraint; ``only=(table, x)`` restricts the first variable."""
    template = message or constraint.message_for(constraint.host_set()) or _default_message(constraint.description)
    out: list[Violation] = []
    if isinstance(constraint, Acyclic):
        table, col = constraint.mapping.set, constraint.mapping.name
        starts = [only[1]] if only and only[0] == table else sorted(instance.rows(table))
        reported: set[frozenset] = set()
        for start in starts:
            cycle = detect_cycle(col, instance, table, start)
            if cycle is None:
                continue
            members = frozenset(cycle)
            if members in reported:
                continue
            reported.add(members)
            anchor = min(members)
            text = render_message(template, instance, table, anchor, description=constraint.description)
            out.append(Violation(constraint.label, table, tuple(cycle), text))
        return out
    formula = constraint.formula()
    if formula is None:
        return out
    binds, body = _binding_prefix(formula)
    if not binds:
        if compile_formula(formula)(instance, {}) is False:
            host = constraint.host_set()
            out.append(Violation(constraint.label, host, (), render_message(
                template, instance, host, None, description=constraint.description)))
        return out
    fn = compile_formula(body)
    domains = [sorted(instance.rows(s)) for _, s in binds]
    if only is not None and only[0] == binds[0][1]:
        domains[0] = [only[1]] if only[1] in instance.rows(only[0]) else []
    symmetric = len({s for _, s in binds}) == 1 and len(binds) > 1
    seen: set[tuple] = set()
    host = binds[0][1]
    for combo in itertools.product(*domains):
        env = dict(zip((v for v, _ in binds), combo))
        if fn(instance, env) is not False:
            continue
        key = tuple(sorted(combo)) if symmetric else combo
        if key in seen:
            continue
        seen.add(key)
        text = render_message(template, instance, host, combo[0], description=constraint.description)
        out.append(Violation(constraint.label, host, tuple(key), text))
    return out


def check_all(instance: Instance, residual: NonRelationalOutput | Iterable[Constraint] = ()) -> list[Violation]:
    """Every violation of the relational schema and of the residual constraints."""
    out: list[Violation] = []
    for t in instance.schema.tables:
        rows = instance.rows(t.name)
        for x in sorted(rows):
            for rc, text in _relational_row_problems(instance, t, x, rows[x]):
                cid = rc.source if rc is not None else f"{t.name}#type"
                out.append(Violation(cid, t.name, (x,), text))
        for rc, xs, text in _unique_problems(instance, t):
            out.append(Violation(rc.source, t.name, xs, text))
    for item in residual:
        c = getattr(item, "constraint", item)
        out += constraint_violations(c, instance)
    return out


# ---- events -------------------------------------------------------------------

_CHECKING = ("filter-domain", "reject-check", "cross-row-check", "cycle-check", "existence-check")


def _row_local(c: Constraint) -> bool:
    formula = c.formula()
    if formula is None:
        return isinstance(c, Acyclic)
    binds, body = _binding_prefix(formula)
    return len(binds) == 1 and not has_composition(body) and not quantifiers(body)


def _fired(plan: EnforcementPlan, table: str, op: str, changed: set[str]) -> list[PlanEntry]:
    out = []
    for e in plan.entries:
        if e.table != table or e.advisory or e.strategy not in _CHECKING:
            continue
        if op == "delete":
            hit = e.event == "before-delete"
        elif op == "insert":
            hit = e.event != "before-delete" and not e.skip_new_rows
        else:
            hit = e.event != "before-delete" and bool(changed & set(e.columns))
        if hit:
            out.append(e)
    return out


def apply_event(
    instance: Instance,
    event: Event | dict,
    plan: EnforcementPlan,
    residual: NonRelationalOutput | Iterable[Constraint],
) -> EventResult:
    """Apply one event if the plan accepts it; a rejected event leaves ``instance`` untouched."""
    if isinstance(event, dict):
        event = Event.from_dict(event)
    schema = instance.schema
    if not schema.has_table(event.table):
        raise EventError(f"unknown table {event.table}")
    table = schema.table(event.table)
    rows = instance.rows(table.name)
    for col in event.values:
        if not table.has_column(col) or col == "x":
            raise EventError(f"{table.name} has no updatable column {col}")
        if table.column(col).computed_expr is not None:
            raise EventError(f"{table.name}.{col} is computed")
    x = event.x
    if event.op == "insert":
        if x is None:
            x = max(rows, default=0) + 1
        if x in rows:
            raise EventError(f"{table.name} already has row {x}")
    elif x not in rows:
        raise EventError(f"{table.name} has no row {x}")
    constraints = {getattr(i, "constraint", i).label: getattr(i, "constraint", i) for i in residual}

    old = copy.deepcopy(rows.get(x))
    changed = set(event.values)
    entries = [e for e in plan.entries if e.table == table.name]

    # columns locked by a guard that holds on the current row
    if event.op == "update":
        for e in entries:
            if e.strategy != "lock-columns" or e.guard is None:
                continue
            guard_cols = {r.name for r in mappings_used(e.guard)}
            if guard_cols & changed:
                continue
            if compile_formula(e.guard)(instance, {"x": x}) is True and any(
                event.values.get(c) is not None for c in e.targets
            ):
                text = render_message(e.message, instance, table.name, x, old=old,
                                      description=plan.descriptions.get(e.constraint_id, ""), columns=e.targets)
                return EventResult(False, [text], [], x, [e.constraint_id])

    snapshot = {k: copy.deepcopy(v) for k, v in rows.items()} if _has_cross_row_derivation(table) else None

    def rollback() -> None:
        if snapshot is not None:
            rows.clear()
            rows.update(snapshot)
        elif old is None:
            rows.pop(x, None)
        else:
            rows[x] = old

    if event.op == "delete":
        del rows[x]
    else:
        row = copy.deepcopy(old) if old is not None else {c.name: None for c in table.columns}
        row["x"] = x
        row.update(event.values)
        rows[x] = row
        recompute_derived(instance, table.name, None if snapshot is not None else [x])

    messages: list[str] = []
    mutations: list[Mutation] = []
    if event.op != "delete":
        row = rows[x]
        for e in entries:
            if e.strategy != "nullify-and-warn" or e.guard is None:
                continue
            guard_cols = {r.name for r in mappings_used(e.guard)}
            set_cols = changed if event.op == "update" else set(event.values) | guard_cols
            if not guard_cols & set_cols or compile_formula(e.guard)(instance, {"x": x}) is not True:
                continue
            cleared = [c for c in e.targets if row.get(c) is not None]
            if not cleared:
                continue
            for c in cleared:
                mutations.append(Mutation(table.name, x, c, row[c], None))
            messages.append(render_message(e.message, instance, table.name, x, old=old,
                                           description=plan.descriptions.get(e.constraint_id, ""),
                                           columns=cleared))
            for c in cleared:
                row[c] = None
            changed |= set(cleared)
        recompute_derived(instance, table.name, None if snapshot is not None else [x])

    problems = _event_relational_problems(instance, table, event.op, x, old)
    if problems:
        rollback()
        return EventResult(False, [text for _, text in problems], [], x, [cid for cid, _ in problems])

    done: set[str] = set()
    checked: list[str] = []
    for e in _fired(plan, table.name, event.op, changed):
        c = constraints.get(e.constraint_id)
        if c is None or c.label in done:
            continue
        done.add(c.label)
        checked.append(c.label)
        host = c.host_set()
        only = (table.name, x) if event.op != "delete" and host == table.name and _row_local(c) else None
        found = constraint_violations(c, instance, only=only, message=e.message)
        if found:
            row_x = x if event.op != "delete" else None
            text = render_message(e.message, instance, table.name, row_x, old=old,
                                  description=c.description, value=None)
            if event.op == "delete":
                text = found[0].message
            rollback()
            return EventResult(False, [text], [], x, [c.label], checked)
    return EventResult(True, messages, mutations, x, [], checked)


def _has_cross_row_derivation(table: Table) -> bool:
    return any(c.computed_expr is not None and has_composition(c.computed_expr) for c in table.columns)


def _event_relational_problems(instance: Instance, table: Table, op: str, x: int, old: Row | None) -> list[tuple[str, str]]:
    """(constraint id, message) pairs for the row an event touched."""
    if op == "delete":
        out = []
        for t in instance.schema.tables:
            for rc in t.of("fk"):
                if rc.ref_table != table.name:
                    continue
                users = [y for y, r in instance.rows(t.name).items() if r.get(rc.columns[0]) == x]
                if users:
                    name = display_name(instance, table.name, x, old)
                    out.append((rc.source, f"{name} is still referenced by {t.name}.{rc.columns[0]}"))
        return out
    row = instance.rows(table.name)[x]
    out = [(rc.source if rc else f"{table.name}#type", text) for rc, text in _relational_row_problems(instance, table, x, row)]
    out += [(rc.source, text) for rc, _, text in _unique_problems(instance, table, only_x=x)]
    return out


def simulate(
    instance: Instance,
    events: Iterable[Event | dict],
    plan: EnforcementPlan,
    residual: NonRelationalOutput | Iterable[Constraint],
) -> list[EventResult]:
    residual = list(residual)
    return [apply_event(instance, e, plan, residual) for e in events]
