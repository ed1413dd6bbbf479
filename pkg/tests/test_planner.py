import json

from emdm.planner import EVENTS, STRATEGIES, render_plan

import helpers


def _entries(plan, cid):
    return plan.for_constraint(cid)


def test_every_residual_constraint_is_covered(gen):
    coverage = gen.plan.coverage()
    for label in gen.residual.labels():
        assert coverage[label], label


def test_every_tracked_column_is_watched(gen):
    from emdm.planner import _refs_of, _tracked

    for entry in gen.residual:
        tracked = _tracked(_refs_of(entry.constraint), gen.scheme, gen.enforced)
        watched = {(e.table, c) for e in _entries(gen.plan, entry.label) for c in e.columns}
        for table, cols in tracked.items():
            for col in cols:
                assert (table, col) in watched, (entry.label, table, col)


def test_vocabulary(gen):
    for e in helpers.genealogy("strict").plan.entries:
        assert e.event in EVENTS and e.strategy in STRATEGIES


def test_c2(gen):
    entries = {(e.table, e.strategy): e for e in _entries(gen.plan, "C2")}
    current = entries[("COUNTRIES", "filter-domain")]
    assert current.event == "row-current" and current.predicate == "CITIES.Country = x"
    guard = entries[("CITIES", "reject-check")]
    assert guard.event_name == "column-before-update(Country)"
    assert guard.skip_new_rows is True
    assert "{old:Country}" in guard.message


def test_c4_propagation_is_advisory(gen):
    prop = [e for e in _entries(gen.plan, "C4") if e.strategy == "propagate-update"]
    assert len(prop) == 1 and prop[0].advisory and prop[0].table == "DYNASTIES"
    assert prop[0].predicate.endswith(":= x")


def test_c7(gen):
    got = [(e.table, e.event_name, e.strategy, e.columns) for e in _entries(gen.plan, "C7")]
    assert got == [
        ("RULERS", "row-current", "filter-domain", ("Mother",)),
        ("RULERS", "column-before-update(Mother)", "reject-check", ("Mother",)),
        ("RULERS", "column-before-update(Sex)", "cross-row-check", ("Sex",)),
    ]
    assert _entries(gen.plan, "C7")[0].predicate == "RULERS.Sex = 'F'"


def test_c9_locks_and_nullifies(gen):
    lock, nullify = _entries(gen.plan, "C9")
    assert lock.strategy == "lock-columns" and lock.event == "row-current"
    assert lock.targets == ("Mother", "Father", "Dynasty", "KilledBy")
    assert nullify.strategy == "nullify-and-warn"
    assert nullify.event_name == "column-after-update(Sex)"


def test_c26_spans_three_tables(gen):
    entries = _entries(gen.plan, "C26")
    assert {e.table for e in entries} == {"REIGNS", "RULERS", "MARRIAGES"}
    deletes = [e for e in entries if e.event == "before-delete"]
    assert [e.table for e in deletes] == ["MARRIAGES"]
    reigns = [e for e in entries if e.table == "REIGNS"]
    assert all(not e.skip_new_rows for e in reigns)
    assert all(e.skip_new_rows for e in entries if e.table != "REIGNS")


def test_acyclic_and_existence(gen):
    (c27,) = _entries(gen.plan, "C27")
    assert (c27.strategy, c27.event_name) == ("cycle-check", "column-before-update(Mother)")
    (c29,) = _entries(gen.plan, "C29")
    assert c29.strategy == "existence-check" and c29.columns == ("KilledBy", "PassedAwayYear")


def test_c6_tracks_age_inputs(gen):
    (c6,) = _entries(gen.plan, "C6")
    assert set(c6.columns) == {"Sex", "Age", "BirthYear", "PassedAwayYear"}


def test_url_demotion_enforced_by_plan():
    plan = helpers.genealogy("strict", analyzer=False).plan
    (url,) = plan.for_constraint("RULERS(URL)")
    assert url.strategy == "unique-nulls-distinct"
    assert url.event_name == "column-before-update(URL)"


def test_no_demotion_entries_under_ansi(gen):
    assert set(gen.plan.descriptions) == set(gen.residual.labels())
    assert gen.plan.warnings == []


def test_machine_rendering(gen):
    text = render_plan(gen.plan, "machine")
    doc = json.loads(text)
    assert doc["planVersion"] == 1
    assert [c["id"] for c in doc["constraints"]] == gen.residual.labels()
    first = doc["constraints"][0]["entries"][0]
    assert list(first) == ["table", "event", "strategy", "columns", "predicate", "message", "skipNewRows", "advisory"]
    assert text == render_plan(helpers.genealogy().plan, "machine")


def test_human_rendering(gen):
    text = render_plan(gen.plan, "human")
    assert text.splitlines()[0] == "COUNTRIES"
    assert "existing rows only" in text
