"""Shared fixtures and generators for the test-suite."""

from __future__ import annotations

import copy
import random

from emdm.checker import Event, Instance, apply_event, check_all, load_instance, recompute_derived
from emdm.pipeline import Build, build, bundled, bundled_scheme

CURRENT_YEAR = 2026
FIXTURE_DIR = bundled("genealogy")

_BUILDS: dict[tuple[str, bool], Build] = {}


def genealogy(dialect: str = "ansi", analyzer: bool = True) -> Build:
    key = (dialect, analyzer)
    if key not in _BUILDS:
        _BUILDS[key] = build(bundled_scheme("genealogy"), dialect=dialect, analyzer=analyzer)
    return _BUILDS[key]


def fixture_instance(b: Build | None = None) -> Instance:
    b = b or genealogy()
    return load_instance(FIXTURE_DIR, b.enforced, CURRENT_YEAR)


def extended_instance(b: Build | None = None) -> Instance:
    """The fixture plus a non-person (9) and a woman of unknown birth (10)."""
    inst = fixture_instance(b)
    rulers = inst.rows("RULERS")
    blank = {c.name: None for c in inst.schema.table("RULERS").columns}
    rulers[9] = {**blank, "x": 9, "Name": "Crown Estate", "Sex": "N"}
    rulers[10] = {**blank, "x": 10, "Name": "Unknown", "Sex": "F"}
    recompute_derived(inst)
    return inst


def mutate(inst: Instance, table: str, x: int, **values) -> Instance:
    out = inst.copy()
    out.rows(table)[x].update(values)
    recompute_derived(out)
    return out


# ---- random event streams ----------------------------------------------------

_NAMES = ["Anne", "George", "Mary", "Edward", "Elizabeth", "Henry", "London", "Paris", "Windsor", "King"]


def _value(rng: random.Random, inst: Instance, table: str, column: str):
    t = inst.schema.table(table)
    if rng.random() < 0.15:
        return None
    for rc in t.of("fk"):
        if rc.columns == (column,) and rc.ref_table:
            keys = sorted(inst.rows(rc.ref_table))
            if not keys or rng.random() < 0.05:
                return max(keys, default=0) + 1
            return rng.choice(keys)
    kind = type(t.column(column).sql_type).__name__
    if kind == "EnumLiterals":
        return rng.choice(["M", "F", "F", "M", "N"])
    if kind == "IntRange":
        return rng.randint(1900, CURRENT_YEAR + 2)
    if kind in ("Natural", "Autonumber"):
        return rng.randint(0, 50)
    return rng.choice(_NAMES) + ("" if rng.random() < 0.5 else f" {rng.randint(1, 9)}")


def random_event(rng: random.Random, inst: Instance) -> Event:
    table = rng.choice(["RULERS", "RULERS", "RULERS", "MARRIAGES", "MARRIAGES", "REIGNS", "CITIES", "COUNTRIES", "DYNASTIES", "TITLES"])
    t = inst.schema.table(table)
    columns = [c.name for c in t.columns if c.name != "x" and c.computed_expr is None]
    rows = sorted(inst.rows(table))
    roll = rng.random()
    if roll < 0.2 or not rows:
        values = {c: _value(rng, inst, table, c) for c in columns if rng.random() < 0.8}
        return Event("insert", table, None, values)
    if roll < 0.27:
        return Event("delete", table, rng.choice(rows))
    picked = rng.sample(columns, k=1 if rng.random() < 0.7 else min(2, len(columns)))
    return Event("update", table, rng.choice(rows), {c: _value(rng, inst, table, c) for c in picked})


def oracle_apply(inst: Instance, event: Event, residual) -> tuple[bool, Instance]:
    """Apply ``event`` blindly (plus the non-person side effect) and accept iff nothing is violated."""
    out = inst.copy()
    rows = out.rows(event.table)
    if event.op == "delete":
        del rows[event.x]
    else:
        x = event.x if event.x is not None else max(rows, default=0) + 1
        row = copy.deepcopy(rows.get(x)) or {c.name: None for c in out.schema.table(event.table).columns}
        row.update(event.values)
        row["x"] = x
        if event.table == "RULERS" and row.get("Sex") == "N" and "Sex" in event.values:
            for col in ("Mother", "Father", "Dynasty", "KilledBy"):
                row[col] = None
        rows[x] = row
    recompute_derived(out)
    return not check_all(out, residual), out


def replay_stream(b: Build, seed: int, length: int) -> list[str]:
    """Divergences between plan-driven acceptance and the full-recheck oracle."""
    rng = random.Random(seed)
    inst = fixture_instance(b)
    residual = list(b.residual)
    problems = []
    for step in range(length):
        event = random_event(rng, inst)
        expected, after = oracle_apply(inst, event, residual)
        before = inst.snapshot()
        result = apply_event(inst, event, b.plan, residual)
        if result.accepted != expected:
            problems.append(f"seed {seed} step {step}: {event} accepted={result.accepted} oracle={expected} {result.messages}")
            break
        if result.accepted and inst.tables != after.tables:
            problems.append(f"seed {seed} step {step}: {event} state differs from oracle")
            break
        if not result.accepted and inst.tables != before:
            problems.append(f"seed {seed} step {step}: {event} rejected but instance changed")
            break
    return problems


# ---- synthetic schemes ---------------------------------------------------------


def synthetic_scheme_text(blocks: int) -> str:
    """``blocks`` copies of a small entity/relationship pattern, chained by references."""
    out = []
    for i in range(blocks):
        prev = f"A{i - 1}" if i else f"A{i}"
        out.append(f"""
set A{i} entity card 4;
set B{i} entity card 4;
fun Name : A{i} -> ascii(64) total;
fun Year : A{i} -> int[0, 3000];
fun Parent{i} : A{i} -> A{i};
fun Owner : B{i} -> A{i} total;
fun Prior : B{i} -> {prev};
fun Code : B{i} -> ascii(16);
key A{i}(Name) "Names are unique.";
key B{i}(Owner . Code) "Codes are unique per owner.";
constraint T{i} tuple A{i} "Year(x) <= 2500" "Years stay below 2500.";
constraint S{i} tuple B{i} "Year(Owner(x)) is null or Year(Owner(x)) >= 0" "Owners have non-negative years.";
constraint Y{i} acyclic Parent{i} "Parents never loop.";
""")
    return "".join(out)


# ---- brute-force oracles for key pruning ------------------------------------------


def r1_counterexamples(max_rows: int = 3) -> int:
    """Instances where ``outer(inner(c)) = c`` holds but ``inner`` is not injective.

    Models a COUNTRIES/CITIES pair directly with Python tuples; ``None`` is null.
    """
    import itertools

    bad = 0
    for n_inner in range(1, max_rows + 1):
        for n_outer in range(1, max_rows + 1):
            inner_ids = range(1, n_inner + 1)
            outer_ids = range(1, n_outer + 1)
            for capitals in itertools.product([None, *outer_ids], repeat=n_inner):
                for countries in itertools.product(inner_ids, repeat=n_outer):
                    holds = all(
                        cap is None or countries[cap - 1] == c
                        for c, cap in zip(inner_ids, capitals)
                    )
                    used = [cap for cap in capitals if cap is not None]
                    if holds and len(used) != len(set(used)):
                        bad += 1
    return bad


def r2_counterexamples(
    key: str,
    max_rows: int = 3,
    lo_values=(1, 2, 3),
    hi_values=(None, 1, 2, 3),
    current_year: int = 3,
    check_premises: bool = True,
) -> int:
    """Instances satisfying no-overlap (plus premises) that violate the start or end key.

    Rows are ``(distinct, group, lo, hi)``; ``key`` is ``"lo"`` or ``"hi"``.
    """
    import itertools

    row_space = [
        (d, g, lo, hi)
        for d in (1, 2)
        for g in (1, 2)
        for lo in lo_values
        for hi in hi_values
    ]

    def starts_within(a, b):
        return b[2] <= a[2] <= (b[3] if b[3] is not None else current_year)

    def no_overlap(rows):
        for i, j in itertools.permutations(range(len(rows)), 2):
            a, b = rows[i], rows[j]
            if a[1] == b[1] and (starts_within(a, b) or starts_within(b, a)) and a[0] == b[0]:
                return False
        return True

    def premises(rows):
        return all((r[3] is None or r[2] <= r[3]) and r[2] <= current_year for r in rows)

    col = 2 if key == "lo" else 3
    bad = 0
    for n in range(2, max_rows + 1):
        for rows in itertools.combinations_with_replacement(row_space, n):
            if check_premises and not premises(rows):
                continue
            if not no_overlap(rows):
                continue
            keys = [(r[0], r[1], r[col]) for r in rows if r[col] is not None]
            if len(keys) != len(set(keys)):
                bad += 1
    return bad


def load_events_file(name: str):
    from emdm.checker import load_events

    return load_events(FIXTURE_DIR / name)
