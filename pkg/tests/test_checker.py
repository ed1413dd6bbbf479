import pytest

from emdm.checker import (
    Event,
    EventError,
    InstanceError,
    Verdict,
    apply_event,
    check_all,
    detect_cycle,
    eval_formula,
    load_instance,
    write_instance,
)
from emdm.formula import And, Apply, Compare, Implies, IsNull, Lit, MapRef, Not, Or, Var

import helpers

AGES = {1: 78, 2: 36, 3: 44, 4: 42, 5: 44, 6: 45, 7: 79, 8: 87}

# (table, x, values, the one constraint expected to break); base "ext" adds rulers 9 and 10
MUTATIONS = [
    ("fix", "COUNTRIES", 1, {"Capital": 5}, "C2"),
    ("fix", "RULERS", 8, {"BirthYear": 1800}, "C6"),
    ("ext", "RULERS", 9, {"Dynasty": 1}, "C9"),
    ("fix", "RULERS", 3, {"BirthYear": 1960}, "C12"),
    ("fix", "MARRIAGES", 5, {"Wife": 1}, "C18"),
    ("ext", "RULERS", 10, {"Mother": 10}, "C27"),
    ("fix", "RULERS", 8, {"KilledBy": 1}, "C29"),
    ("fix", "REIGNS", 2, {"Ruler": 1}, "C33"),
    ("fix", "RULERS", 8, {"Dynasty": 9}, "RULERS.Dynasty#domain"),
    ("fix", "CITIES", 4, {"City": "London"}, "CITIES(City.Country)"),
    ("fix", "RULERS", 3, {"Mother": 1}, "C7"),
    ("fix", "MARRIAGES", 1, {"DivorceYear": 1980}, "C17"),
]


def _base(gen, which):
    return helpers.fixture_instance(gen) if which == "fix" else helpers.extended_instance(gen)


def test_fixture_is_clean(gen, inst):
    assert check_all(inst, gen.residual) == []


def test_fixture_clean_without_analyzer(gen_raw):
    assert check_all(helpers.fixture_instance(gen_raw), gen_raw.residual) == []


def test_ages_are_derived(inst):
    assert {x: r["Age"] for x, r in inst.rows("RULERS").items()} == AGES


def test_extended_base_is_clean(gen):
    assert check_all(helpers.extended_instance(gen), gen.residual) == []


@pytest.mark.parametrize("base,table,x,values,expected", MUTATIONS, ids=[m[-1] for m in MUTATIONS])
def test_single_mutation_breaks_one_constraint(gen, base, table, x, values, expected):
    mutated = helpers.mutate(_base(gen, base), table, x, **values)
    assert {v.constraint_id for v in check_all(mutated, gen.residual)} == {expected}


@pytest.mark.parametrize("base,table,x,values,expected", MUTATIONS, ids=[m[-1] for m in MUTATIONS])
def test_plan_rejects_each_mutation(gen, base, table, x, values, expected):
    inst = _base(gen, base)
    before = inst.snapshot()
    result = apply_event(inst, Event("update", table, x, values), gen.plan, gen.residual)
    assert not result.accepted
    assert result.violated == [expected]
    assert inst.tables == before


def test_entangled_mutations(gen, inst):
    # a man as wife also makes the couple close relatives
    wife = helpers.mutate(inst, "MARRIAGES", 4, Wife=3)
    assert {v.constraint_id for v in check_all(wife, gen.residual)} == {"C18", "C32"}
    mother = helpers.mutate(inst, "RULERS", 2, Mother=3)
    assert {v.constraint_id for v in check_all(mother, gen.residual)} == {"C7", "C12", "C27"}


def test_violation_reported_once_per_pair(gen, inst):
    overlap = helpers.mutate(inst, "REIGNS", 2, Ruler=1)
    (v,) = check_all(overlap, gen.residual)
    assert v.row == (1, 2)


def test_cycle_reported_once(gen, inst):
    loop = helpers.mutate(inst, "RULERS", 1, Father=3)
    cycles = [v for v in check_all(loop, gen.residual) if v.constraint_id == "C28"]
    assert len(cycles) == 1 and set(cycles[0].row) == {1, 3}


def test_detect_cycle(inst):
    assert detect_cycle("Mother", inst, "RULERS", 3) is None
    inst.rows("RULERS")[2]["Mother"] = 3
    assert detect_cycle("Mother", inst, "RULERS", 4) == [2, 3, 2]
    inst.rows("RULERS")[8]["Father"] = 8
    assert detect_cycle("Father", inst, "RULERS", 8) == [8, 8]


# ---- three-valued logic ------------------------------------------------------------


@pytest.fixture
def tv(inst):
    dyn = Apply(MapRef("RULERS", "Dynasty"), Var("x"))
    t = Compare("=", Lit(1), Lit(1))
    f = Compare("=", Lit(1), Lit(2))
    u = Compare("=", dyn, Lit(1))
    return inst, t, f, u


def test_kleene_connectives(tv):
    inst, t, f, u = tv
    env = {"x": 8}  # no dynasty
    ev = lambda formula: eval_formula(formula, inst, env)  # noqa: E731
    assert ev(u) is Verdict.UNKNOWN
    assert ev(Not(u)) is Verdict.UNKNOWN
    assert ev(And(u, f)) is Verdict.FALSE
    assert ev(And(u, t)) is Verdict.UNKNOWN
    assert ev(Or(u, t)) is Verdict.TRUE
    assert ev(Or(u, f)) is Verdict.UNKNOWN
    assert ev(Implies(f, u)) is Verdict.TRUE
    assert ev(Implies(u, t)) is Verdict.TRUE
    assert ev(Implies(t, u)) is Verdict.UNKNOWN
    assert ev(Implies(t, f)) is Verdict.FALSE


def test_is_null_is_two_valued(tv):
    inst = tv[0]
    dyn = Apply(MapRef("RULERS", "Dynasty"), Var("x"))
    assert eval_formula(IsNull(dyn), inst, {"x": 8}) is Verdict.TRUE
    assert eval_formula(IsNull(dyn), inst, {"x": 1}) is Verdict.FALSE


def test_null_argument_propagates(inst):
    sex_of_mother = Apply(MapRef("RULERS", "Sex"), Apply(MapRef("RULERS", "Mother"), Var("x")))
    assert eval_formula(Compare("=", sex_of_mother, Lit("F")), inst, {"x": 1}) is Verdict.UNKNOWN
    assert eval_formula(Compare("=", sex_of_mother, Lit("F")), inst, {"x": 3}) is Verdict.TRUE


# ---- events ---------------------------------------------------------------------------


def test_moving_a_capital_rejected_with_names(gen, inst):
    result = apply_event(inst, Event("update", "CITIES", 1, {"Country": 2}), gen.plan, gen.residual)
    assert not result.accepted
    assert "London" in result.messages[0] and "U.K." in result.messages[0]


def test_non_person_side_effects(gen, inst):
    events = helpers.load_events_file("non_person.jsonl")
    first = apply_event(inst, events[0], gen.plan, gen.residual)
    assert first.accepted and first.x == 9
    second = apply_event(inst, events[1], gen.plan, gen.residual)
    assert second.accepted
    assert [m.column for m in second.mutations] == ["Mother", "Father", "Dynasty", "KilledBy"]
    assert len(second.messages) == 1
    row = inst.rows("RULERS")[9]
    assert all(row[c] is None for c in ("Mother", "Father", "Dynasty", "KilledBy"))
    assert check_all(inst, gen.residual) == []


def test_locked_columns_reject(gen):
    inst = helpers.extended_instance(gen)
    result = apply_event(inst, Event("update", "RULERS", 9, {"Mother": 2}), gen.plan, gen.residual)
    assert not result.accepted and result.violated == ["C9"]


def test_new_city_skips_c2(gen, inst):
    (event,) = helpers.load_events_file("new_city.jsonl")
    result = apply_event(inst, event, gen.plan, gen.residual)
    assert result.accepted and result.x == 6
    assert "C2" not in result.checked


def test_moving_a_non_capital_checks_c2(gen, inst):
    result = apply_event(inst, Event("update", "CITIES", 4, {"Country": 2}), gen.plan, gen.residual)
    assert result.accepted and "C2" in result.checked


def test_unknown_parents_keep_c26_unknown(gen, inst):
    # Charles's parents are unknown, so the co-reign with Camilla cannot be refuted
    result = apply_event(inst, Event("delete", "MARRIAGES", 2), gen.plan, gen.residual)
    assert result.accepted and result.checked == ["C26"]


def test_deleting_a_spouse_link_of_co_rulers(gen, inst):
    catherine = inst.rows("RULERS")[5]
    catherine.update(Mother=7, Father=8)
    for x, ruler in ((3, 3), (4, 5)):
        inst.rows("REIGNS")[x] = {"x": x, "FromY": 2023, "ToY": None, "Ruler": ruler, "Country": 2, "Title": None}
    assert check_all(inst, gen.residual) == []
    result = apply_event(inst, Event("delete", "MARRIAGES", 3), gen.plan, gen.residual)
    assert not result.accepted and result.violated == ["C26"]
    assert 3 in inst.rows("MARRIAGES")


def test_delete_restricted_by_references(gen, inst):
    result = apply_event(inst, Event("delete", "COUNTRIES", 3), gen.plan, gen.residual)
    assert not result.accepted
    assert "still referenced" in result.messages[0]


def test_delete_unreferenced(gen, inst):
    result = apply_event(inst, Event("delete", "MARRIAGES", 5), gen.plan, gen.residual)
    assert result.accepted and 5 not in inst.rows("MARRIAGES")


def test_age_follows_updates(gen, inst):
    result = apply_event(inst, Event("update", "RULERS", 8, {"PassedAwayYear": 2020}), gen.plan, gen.residual)
    assert result.accepted and inst.rows("RULERS")[8]["Age"] == 81


def test_not_null_rejected(gen, inst):
    result = apply_event(inst, Event("update", "RULERS", 1, {"Sex": None}), gen.plan, gen.residual)
    assert not result.accepted and result.violated == ["RULERS.Sex#total"]


@pytest.mark.parametrize(
    "event",
    [
        Event("update", "NOPE", 1, {}),
        Event("update", "RULERS", 99, {"Name": "X"}),
        Event("update", "RULERS", 1, {"Age": 3}),
        Event("update", "RULERS", 1, {"Shoe": 3}),
        Event("insert", "RULERS", 1, {"Name": "X"}),
    ],
)
def test_malformed_events(gen, inst, event):
    with pytest.raises(EventError):
        apply_event(inst, event, gen.plan, gen.residual)


def test_event_from_dict():
    e = Event.from_dict({"op": "update", "table": "CITIES", "x": 1, "values": {"Country": 2}})
    assert e == Event("update", "CITIES", 1, {"Country": 2})
    with pytest.raises(EventError):
        Event.from_dict({"op": "upsert", "table": "CITIES"})


# ---- instances on disk --------------------------------------------------------------


def test_missing_file_means_empty_table(gen, tmp_path):
    (tmp_path / "TITLES.csv").write_text("x,Title\n1,King\n", encoding="utf-8")
    inst = load_instance(tmp_path, gen.enforced, 2026)
    assert list(inst.rows("TITLES")) == [1] and inst.rows("RULERS") == {}


def test_bad_cells_rejected(gen, tmp_path):
    (tmp_path / "TITLES.csv").write_text("x,Title\none,King\n", encoding="utf-8")
    with pytest.raises(InstanceError, match="integer"):
        load_instance(tmp_path, gen.enforced, 2026)


def test_unknown_column_rejected(gen, tmp_path):
    (tmp_path / "TITLES.csv").write_text("x,Title,Rank\n1,King,3\n", encoding="utf-8")
    with pytest.raises(InstanceError, match="Rank"):
        load_instance(tmp_path, gen.enforced, 2026)


def test_write_then_load(gen, inst, tmp_path):
    write_instance(inst, tmp_path)
    again = load_instance(tmp_path, gen.enforced, 2026)
    assert again.tables == inst.tables


def test_random_streams_agree_with_oracle(gen):
    for seed in range(10):
        assert helpers.replay_stream(gen, 1000 + seed, 30) == []
