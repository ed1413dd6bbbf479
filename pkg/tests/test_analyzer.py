from emdm.analyzer import analyze

import helpers


def test_prunes_the_four_implied_keys(gen):
    pruned = {(p.table, p.columns, p.implied_by, p.rule) for p in gen.implication.pruned}
    assert pruned == {
        ("COUNTRIES", ("Capital",), "C2", "R1"),
        ("DYNASTIES", ("Founder",), "C4", "R1"),
        ("REIGNS", ("Ruler", "Country", "FromY"), "C33", "R2"),
        ("REIGNS", ("Ruler", "Country", "ToY"), "C33", "R2"),
    }
    assert gen.enforced.constraint_count == 78


def test_original_schema_untouched(gen):
    assert gen.schema.constraint_count == 82


def test_lifespan_note_kept(gen):
    notes = gen.implication.kept_implied
    assert len(notes) == 1 and notes[0].startswith("C6")


def test_idempotent(gen):
    again, report = analyze(gen.enforced, gen.residual, gen.scheme)
    assert report.pruned == []
    assert again.constraint_count == 78


def test_report_dict_shape(gen):
    d = gen.implication.as_dict()
    assert [p["key"] for p in d["pruned"]] == ["COUNTRIES(Capital)", "DYNASTIES(Founder)", "C22", "C23"]


def test_r1_oracle_sound():
    assert helpers.r1_counterexamples() == 0


def test_r2_oracle_sound():
    assert helpers.r2_counterexamples("lo") == 0
    assert helpers.r2_counterexamples("hi") == 0


def test_r2_premises_matter():
    assert helpers.r2_counterexamples("hi", check_premises=False) > 0
    assert helpers.r2_counterexamples("lo", lo_values=(1, 2, 3, 4), check_premises=False) > 0


def test_no_order_check_keeps_keys():
    from emdm.parser import parse_scheme
    from emdm.translator import translate

    s = parse_scheme(
        "set P entity;\nset T entity;\nfun Who : T -> P total;\nfun Lo : T -> int[0, currentYear()] total;\n"
        "fun Hi : T -> int[0, currentYear()];\n"
        "key K1 T(Who . Lo);\nkey K2 T(Who . Hi);\n"
        "constraint N no-overlap T distinct Who interval Lo, Hi \"No overlaps.\";\n"
    )
    schema, residual, _ = translate(s)
    _, report = analyze(schema, residual, s)
    assert report.pruned == []
