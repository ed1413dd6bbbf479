import time

from emdm.parser import parse_scheme
from emdm.translator import order_sets, reference_graph, translate

import helpers


def test_set_order(gen):
    order = order_sets(gen.scheme)
    assert order.names == ("TITLES", "COUNTRIES", "CITIES", "DYNASTIES", "RULERS", "MARRIAGES", "REIGNS")
    assert order.scc_groups == (("COUNTRIES", "CITIES"), ("DYNASTIES", "RULERS"))


def test_referenced_sets_precede_referencing_ones(gen):
    order = order_sets(gen.scheme)
    pos = {name: i for i, name in enumerate(order.names)}
    for a, b in reference_graph(gen.scheme).edges:
        if order.component[a] != order.component[b]:
            assert pos[b] < pos[a], (a, b)


def test_report_counts(gen):
    r = gen.report
    assert (r.e, r.r, r.a, r.f, r.rc, r.nrc, r.steps) == (7, 0, 21, 17, 82, 23, 150)
    assert r.summary() == "steps=150 rc=82 nrc=23"


def test_category_tally(gen):
    assert dict(gen.schema.tally()) == {
        "pk": 7, "pk-domain": 7, "pk-not-null": 7, "not-null": 13,
        "domain": 14, "fk": 17, "unique": 14, "tuple": 3,
    }


def test_residual_labels(gen):
    assert gen.residual.labels() == [
        "C2", "C4", "C5", "C6", "C7", "C8", "C9", "C12", "C13", "C14", "C27", "C28", "C29",
        "C18", "C19", "C20", "C21", "C30", "C31", "C32", "C25", "C26", "C33",
    ]


def test_c26_hosts(gen):
    assert set(gen.residual.get("C26").host_sets) == {"REIGNS", "RULERS", "MARRIAGES"}


def test_tables_and_columns(gen):
    rulers = gen.schema.table("RULERS")
    assert [c.name for c in rulers.columns][:6] == ["x", "Name", "Sex", "BirthYear", "PassedAwayYear", "Age"]
    assert rulers.column("Age").computed_expr is not None
    assert "Sex" in rulers.not_null and "Mother" not in rulers.not_null


def test_intra_component_foreign_keys_are_deferred(gen):
    fk = {(t.name, c.columns[0]): c.deferred for t in gen.schema.tables for c in t.of("fk")}
    assert fk[("CITIES", "Country")] is True
    assert fk[("COUNTRIES", "Capital")] is True
    assert fk[("RULERS", "Title")] is False
    assert fk[("MARRIAGES", "Husband")] is False


def test_translation_is_deterministic(gen):
    again = translate(gen.scheme)
    assert again[0] == gen.schema
    assert again[1].labels() == gen.residual.labels()


def test_subset_static_and_relationship():
    s = parse_scheme(
        "set P entity;\nset Q entity subset-of P;\nset S static values {'a', 'b'};\n"
        "set R relationship;\nfun u : R -> P role;\nfun v : R -> Q role;\nfun w : P -> S;\n"
    )
    schema, residual, report = translate(s)
    assert [t.name for t in schema.tables] == ["P", "Q", "R"]
    assert schema.coded_domains == {"S": ("a", "b")}
    q_fk = schema.table("Q").of("fk")
    assert [(c.columns, c.ref_table) for c in q_fk] == [(("x",), "P")]
    r = schema.table("R")
    assert {c.columns[0] for c in r.of("fk")} == {"u", "v"}
    assert {"u", "v"} <= r.not_null
    w = schema.table("P").of("fk")[0]
    assert w.ref_table is None and (w.lo, w.hi) == (1, 2)
    assert report.r == 1 and len(residual) == 0


def test_two_cycle_defers_one_side():
    s = parse_scheme("set A entity;\nset B entity;\nfun f : A -> B;\nfun g : B -> A;\n")
    schema, _, _ = translate(s)
    order = order_sets(s)
    assert order.scc_groups == (("A", "B"),)
    assert all(c.deferred for t in schema.tables for c in t.of("fk"))


def test_synthetic_counts_scale_exactly():
    small = translate(parse_scheme(helpers.synthetic_scheme_text(2)))[2]
    large = translate(parse_scheme(helpers.synthetic_scheme_text(20)))[2]
    assert large.steps == 10 * small.steps
    assert large.rc == 10 * small.rc and large.nrc == 10 * small.nrc


def test_translation_is_fast(gen):
    start = time.perf_counter()
    translate(gen.scheme)
    assert time.perf_counter() - start < 1.0
