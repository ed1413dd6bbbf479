"""SQL DDL generation under dialect capability profiles."""

from __future__ import annotations

import re
from dataclasses import dataclass

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
    uses_current_year,
    walk,
)
from emdm.model import Autonumber, EnumLiterals, IntRange, Natural, Text, ValueType
from emdm.relational import Column, RelationalSchema, RelConstraint, Table


@dataclass(frozen=True)
class DialectProfile:
    name: str
    nulls_distinct_unique: bool
    dynamic_check_expr: bool
    persisted_nondeterministic_computed: bool
    conditional_check_expr: bool


PROFILES = {
    "ansi": DialectProfile("ansi", True, True, True, True),
    "strict": DialectProfile("strict", False, False, False, False),
}


@dataclass(frozen=True)
class Demotion:
    source: str  # label of the relational constraint or computed column
    table: str
    columns: tuple[str, ...]
    description: str
    reason: str
    target_strategy: str  # planner strategy taking over enforcement


class UnsupportedType(Exception):
    pass


_SQL_CURRENT_YEAR = "EXTRACT(YEAR FROM CURRENT_DATE)"
_INT32_MAX = 2**31 - 1


def _ident(name: str) -> str:
    return name if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name) else '"' + name.replace('"', '""') + '"'


def _constraint_name(table: str, rc: RelConstraint) -> str:
    source = rc.source
    for prefix in (f"{table}.", f"{table}("):
        if source.startswith(prefix):
            source = source[len(prefix):]
    source = source.split("#")[0]
    raw = f"{table}_{rc.category}_{source}"
    return _ident(re.sub(r"[^A-Za-z0-9_]+", "_", raw).strip("_"))


def _bound(value) -> str:
    return _SQL_CURRENT_YEAR if isinstance(value, CurrentYear) else str(value)


def _sql_literal(value) -> str:
    if isinstance(value, str):
        return "'" + value.replace("'", "''") + "'"
    return str(value)


def sql_type(vtype: ValueType) -> str:
    if isinstance(vtype, Text):
        return f"VARCHAR({vtype.max_len})"
    if isinstance(vtype, EnumLiterals):
        return f"VARCHAR({max(len(v) for v in vtype.values)})"
    if isinstance(vtype, Autonumber):
        return "BIGINT" if 10**vtype.card_exponent - 1 > _INT32_MAX else "INTEGER"
    if isinstance(vtype, Natural):
        return "BIGINT" if 10**vtype.max_digits - 1 > _INT32_MAX else "INTEGER"
    if isinstance(vtype, IntRange):
        return "INTEGER"
    raise UnsupportedType(f"no SQL type for {vtype!r}")


def term_sql(term: Term) -> str:
    if isinstance(term, Apply):
        if not isinstance(term.arg, Var):
            raise UnsupportedType("function composition has no column form")
        return _ident(term.mapping.name)
    if isinstance(term, Var):
        return "x"
    if isinstance(term, Lit):
        return _sql_literal(term.value)
    if isinstance(term, CurrentYear):
        return _SQL_CURRENT_YEAR
    if isinstance(term, Coalesce):
        return f"COALESCE({term_sql(term.first)}, {term_sql(term.second)})"
    if isinstance(term, (Add, Sub)):
        op = "+" if isinstance(term, Add) else "-"
        rhs = term_sql(term.rhs)
        if isinstance(term.rhs, (Add, Sub)):
            rhs = f"({rhs})"
        return f"{term_sql(term.lhs)} {op} {rhs}"
    raise UnsupportedType(f"no SQL form for {term!r}")


def formula_sql(formula: Formula) -> str:
    if isinstance(formula, Forall):
        return formula_sql(formula.body)
    if isinstance(formula, Compare):
        return f"{term_sql(formula.lhs)} {formula.op} {term_sql(formula.rhs)}"
    if isinstance(formula, IsNull):
        return f"{term_sql(formula.term)} IS NULL"
    if isinstance(formula, Not):
        if isinstance(formula.arg, IsNull):
            return f"{term_sql(formula.arg.term)} IS NOT NULL"
        return f"NOT ({formula_sql(formula.arg)})"
    if isinstance(formula, And):
        return f"({formula_sql(formula.lhs)}) AND ({formula_sql(formula.rhs)})"
    if isinstance(formula, Or):
        return f"({formula_sql(formula.lhs)}) OR ({formula_sql(formula.rhs)})"
    if isinstance(formula, Implies):
        return f"NOT ({formula_sql(formula.lhs)}) OR ({formula_sql(formula.rhs)})"
    if isinstance(formula, Exists):
        raise UnsupportedType("quantified sub-formulas have no check form")
    raise UnsupportedType(f"no SQL form for {formula!r}")


def _is_conditional(formula: Formula) -> bool:
    return any(isinstance(n, (Implies, Or)) for n in walk(formula))


def _check_sql(rc: RelConstraint) -> str:
    col = _ident(rc.columns[0]) if rc.columns else ""
    if rc.category == "tuple":
        return formula_sql(rc.formula)  # type: ignore[arg-type]
    if rc.values:
        return f"{col} IN ({', '.join(_sql_literal(v) for v in rc.values)})"
    if rc.max_len is not None:
        return f"CHAR_LENGTH({col}) <= {rc.max_len}"
    return f"{col} BETWEEN {_bound(rc.lo)} AND {_bound(rc.hi)}"


def _uses_current_year(rc: RelConstraint) -> bool:
    if isinstance(rc.lo, CurrentYear) or isinstance(rc.hi, CurrentYear):
        return True
    return rc.formula is not None and uses_current_year(rc.formula)


def demotion_for(table: Table, rc: RelConstraint, profile: DialectProfile) -> Demotion | None:
    """Why ``rc`` cannot be declared under ``profile``, or None when it can."""
    cols = " . ".join(rc.columns)
    if rc.category == "unique" and not profile.nulls_distinct_unique:
        nullable = [c for c in rc.columns if c not in table.not_null]
        if nullable:
            return Demotion(
                rc.source,
                table.name,
                rc.columns,
                f"{table.name} unique key {cols}",
                f"nullable column(s) {', '.join(nullable)} in a unique key",
                "unique-nulls-distinct",
            )
    if rc.category in ("domain", "pk-domain", "tuple") and not profile.dynamic_check_expr and _uses_current_year(rc):
        return Demotion(
            rc.source,
            table.name,
            rc.columns,
            f"{table.name} check on {cols}",
            "check calls the current date",
            "reject-check",
        )
    if rc.category == "tuple" and not profile.conditional_check_expr and _is_conditional(rc.formula):  # type: ignore[arg-type]
        return Demotion(
            rc.source,
            table.name,
            rc.columns,
            f"{table.name} check on {cols}",
            "conditional check expression",
            "reject-check",
        )
    return None


def column_demotion(table: Table, col: Column, profile: DialectProfile) -> Demotion | None:
    if col.computed_expr is None or profile.persisted_nondeterministic_computed:
        return None
    if not any(isinstance(n, CurrentYear) for n in walk(col.computed_expr)):
        return None
    return Demotion(
        f"{table.name}.{col.name}#computed",
        table.name,
        (col.name,),
        f"{table.name}.{col.name} computed column",
        "non-deterministic computed",
        "propagate-update",
    )


def _column_sql(table: Table, col: Column, profile: DialectProfile) -> str:
    parts = [_ident(col.name), sql_type(col.sql_type)]
    if col.identity:
        parts.append("GENERATED BY DEFAULT AS IDENTITY")
    if col.computed_expr is not None and column_demotion(table, col, profile) is None:
        parts.append(f"GENERATED ALWAYS AS ({term_sql(col.computed_expr)})")  # type: ignore[arg-type]
    if col.name in table.not_null:
        parts.append("NOT NULL")
    for rc in table.of("default"):
        if rc.columns == (col.name,):
            parts.append(f"DEFAULT {_sql_literal(rc.default)}")
    return " ".join(parts)


def _constraint_sql(table: Table, rc: RelConstraint) -> list[str]:
    name = _constraint_name(table.name, rc)
    cols = ", ".join(_ident(c) for c in rc.columns)
    if rc.category == "pk":
        return [f"CONSTRAINT {name} PRIMARY KEY ({cols})"]
    if rc.category == "unique":
        return [f"CONSTRAINT {name} UNIQUE ({cols})"]
    if rc.category == "fk":
        if rc.ref_table is None:
            return [f"CONSTRAINT {name} CHECK ({_ident(rc.columns[0])} BETWEEN {rc.lo} AND {rc.hi})"]
        return [
            f"CONSTRAINT {name} FOREIGN KEY ({cols}) REFERENCES {_ident(rc.ref_table)} (x)",
            f"CONSTRAINT {name}_max CHECK ({_ident(rc.columns[0])} BETWEEN 1 AND {rc.max_value})",
        ]
    if rc.category in ("pk-domain", "domain", "tuple"):
        if rc.max_len is not None:
            return []  # carried by the column type
        return [f"CONSTRAINT {name} CHECK ({_check_sql(rc)})"]
    return []  # not-null and default are column clauses


def _fk_sql(table: Table, rc: RelConstraint) -> list[str]:
    name = _constraint_name(table.name, rc)
    col = _ident(rc.columns[0])
    return [
        f"ALTER TABLE {_ident(table.name)} ADD CONSTRAINT {name} FOREIGN KEY ({col}) "
        f"REFERENCES {_ident(rc.ref_table)} (x);",  # type: ignore[arg-type]
        f"ALTER TABLE {_ident(table.name)} ADD CONSTRAINT {name}_max CHECK ({col} BETWEEN 1 AND {rc.max_value});",
    ]


def _is_phase_two(rc: RelConstraint) -> bool:
    return rc.category == "unique" or (rc.category == "fk" and rc.deferred and rc.ref_table is not None)


def emit_ddl(schema: RelationalSchema, profile: DialectProfile) -> tuple[str, list[Demotion]]:
    """Render ``schema`` as SQL; returns the script and what the profile could not declare."""
    demotions: list[Demotion] = []
    phase_one: list[str] = []
    phase_two: list[str] = []
    for table in schema.tables:
        lines: list[str] = []
        for col in table.columns:
            demoted = column_demotion(table, col, profile)
            if demoted is not None:
                demotions.append(demoted)
            lines.append(_column_sql(table, col, profile))
        for rc in table.constraints:
            demoted = demotion_for(table, rc, profile)
            if demoted is not None:
                demotions.append(demoted)
                continue
            if _is_phase_two(rc):
                if rc.category == "unique":
                    cols = ", ".join(_ident(c) for c in rc.columns)
                    phase_two.append(
                        f"ALTER TABLE {_ident(table.name)} ADD CONSTRAINT "
                        f"{_constraint_name(table.name, rc)} UNIQUE ({cols});"
                    )
                else:
                    phase_two += _fk_sql(table, rc)
                continue
            lines += _constraint_sql(table, rc)
        body = ",\n".join("  " + line for line in lines)
        phase_one.append(f"CREATE TABLE {_ident(table.name)} (\n{body}\n);")
    for view in schema.views:
        phase_one.append(f"CREATE VIEW {_ident(view.name)} AS {view.body};")
    out = [f"-- profile: {profile.name}", "", "-- phase 1: tables", ""]
    out.append("\n\n".join(phase_one))
    if phase_two:
        out += ["", "-- phase 2: deferred foreign keys and unique keys", ""]
        out += phase_two
    return "\n".join(out) + "\n", demotions


def emitted_sources(schema: RelationalSchema, profile: DialectProfile) -> set[tuple[str, str]]:
    """(table, source label) of every relational constraint the profile declares."""
    return {
        (t.name, rc.source)
        for t in schema.tables
        for rc in t.constraints
        if demotion_for(t, rc, profile) is None
    }
