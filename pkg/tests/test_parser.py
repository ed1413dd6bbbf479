from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emdm.formula import Apply, Compare, Exists, Forall, Implies, Lit, MapRef, Var, to_text, walk
from emdm.model import Acyclic, Key, MappingKind, NoOverlap, NullReflexive
from emdm.parser import SchemeParseError, parse_formula, parse_scheme, serialize_scheme
from emdm.pipeline import bundled_scheme

import helpers

SOURCE = bundled_scheme().read_text(encoding="utf-8")


def test_fixture_counts(gen):
    s = gen.scheme
    assert len(s.sets) == 7
    assert len(s.mappings) == 38
    assert len(s.constraints) == 105


def test_fixture_mapping_kinds(gen):
    kinds = [m.kind for m in gen.scheme.mappings]
    assert kinds.count(MappingKind.OBJECT_IDENTIFIER) == 7
    assert kinds.count(MappingKind.COMPUTED_ATTRIBUTE) == 1


def test_round_trip_fixture(gen):
    assert parse_scheme(serialize_scheme(gen.scheme)) == gen.scheme


def test_empty_source_is_empty_scheme():
    s = parse_scheme("")
    assert s.sets == () and s.mappings == () and s.constraints == ()


def test_comments_and_blank_lines_only():
    assert parse_scheme("# nothing here\n\n   \n").sets == ()


def test_unknown_codomain_reports_position():
    broken = SOURCE.replace("fun Capital : COUNTRIES -> CITIES;", "fun Capital : COUNTRIES -> CITIS;")
    with pytest.raises(SchemeParseError) as info:
        parse_scheme(broken, "g.mdm")
    first = info.value.errors[0]
    assert "unknown set CITIS" in first.message
    assert (first.span.line_start, first.span.col_start) == (13, 28)


def test_errors_are_collected_across_statements():
    text = "set A entity;\nfun f : A -> B;\nset A entity;\nfun g A -> ;\nconstraint Q tuple A \"f(x) = \";"
    with pytest.raises(SchemeParseError) as info:
        parse_scheme(text, "m.mdm")
    lines = [e.span.line_start for e in info.value.errors]
    assert lines == [2, 3, 4, 5]
    assert "duplicate declaration of set A" in info.value.errors[1].message


def test_type_error_in_formula():
    text = "set C entity;\nset D entity;\nfun f : C -> D;\nfun g : D -> ascii(3);\nconstraint Q tuple C \"g(f(x)) = 3\";"
    with pytest.raises(SchemeParseError, match="cannot compare"):
        parse_scheme(text)


def test_c6_ast(gen):
    f = gen.scheme.constraint("C6").formula()
    age = Apply(MapRef("RULERS", "Age"), Var("x"))
    assert isinstance(f, Forall) and f.set == "RULERS"
    assert f.body.lhs == Compare("<>", Apply(MapRef("RULERS", "Sex"), Var("x")), Lit("N"))
    assert to_text(f.body.rhs) == "0 <= Age(x) and Age(x) <= 140"
    assert isinstance(f.body.rhs.lhs, Compare) and f.body.rhs.lhs.rhs == age


def test_c26_ast_resolves_sets(gen):
    f = gen.scheme.constraint("C26").formula()
    assert f.vars == ("x", "y") and f.set == "REIGNS"
    assert isinstance(f.body, Implies)
    rhs = f.body.rhs  # the existential closes the disjunction
    while not isinstance(rhs, Exists):
        rhs = rhs.rhs
    assert rhs.set == "MARRIAGES" and rhs.vars == ("z",)
    sex_of_ruler = Apply(MapRef("RULERS", "Sex"), Apply(MapRef("REIGNS", "Ruler"), Var("x")))
    assert sex_of_ruler in list(walk(f))


def test_typed_constraints(gen):
    s = gen.scheme
    assert isinstance(s.constraint("C2"), NullReflexive)
    assert isinstance(s.constraint("C27"), Acyclic)
    assert isinstance(s.constraint("C33"), NoOverlap)
    assert s.constraint("C3").columns == ("Name", "Dynasty", "BirthYear")
    assert isinstance(s.constraint("C1"), Key)


def test_constraint_messages(gen):
    c2 = gen.scheme.constraint("C2")
    assert "{old:Country}" in c2.message_for("CITIES")
    assert c2.message_for("COUNTRIES").startswith("The capital of {row}")


def test_parse_formula_against_scheme(gen):
    f = parse_formula("Sex(Wife(x)) = 'F'", gen.scheme, {"x": "MARRIAGES"})
    assert f == Compare(
        "=",
        Apply(MapRef("RULERS", "Sex"), Apply(MapRef("MARRIAGES", "Wife"), Var("x"))),
        Lit("F"),
    )


def test_chained_comparison(gen):
    f = parse_formula("0 <= Age(x) <= 140", gen.scheme, {"x": "RULERS"})
    assert to_text(f) == "0 <= Age(x) and Age(x) <= 140"


def test_load_from_path(tmp_path: Path):
    p = tmp_path / "tiny.mdm"
    p.write_text("set A entity;\nfun Name : A -> ascii(8) total;\n", encoding="utf-8")
    from emdm.parser import load_scheme

    assert [m.name for m in load_scheme(p).mappings] == ["x", "Name"]


# ---- random schemes ----------------------------------------------------------

_IDENT = st.sampled_from(["Alpha", "Beta", "Gamma", "Delta", "Eps", "Zeta"])


@st.composite
def schemes(draw):
    n_sets = draw(st.integers(1, 4))
    sets = [f"S{i}" for i in range(n_sets)]
    lines = []
    for i, name in enumerate(sets):
        card = draw(st.integers(1, 9))
        sup = f" subset-of {sets[i - 1]}" if i and draw(st.booleans()) else ""
        lines.append(f"set {name} entity card {card}{sup};")
    funs: dict[str, list[tuple[str, str]]] = {s: [] for s in sets}
    for s in sets:
        names = draw(st.lists(_IDENT, max_size=4, unique=True))
        for n in names:
            kind = draw(st.sampled_from(["text", "int", "ref", "enum"]))
            if kind == "text":
                cod = f"ascii({draw(st.integers(1, 300))})"
            elif kind == "int":
                lo = draw(st.integers(-100, 100))
                cod = f"int[{lo}, {lo + draw(st.integers(0, 500))}]"
            elif kind == "enum":
                cod = "{'a', 'b'}"
            else:
                cod = draw(st.sampled_from(sets))
            total = " total" if draw(st.booleans()) else ""
            lines.append(f"fun {n} : {s} -> {cod}{total};")
            funs[s].append((n, kind))
    for s in sets:
        if funs[s] and draw(st.booleans()):
            cols = draw(st.lists(st.sampled_from([n for n, _ in funs[s]]), min_size=1, max_size=2, unique=True))
            lines.append(f"key {s}({' . '.join(cols)}) \"unique {s}\";")
        ints = [n for n, k in funs[s] if k == "int"]
        if ints and draw(st.booleans()):
            lines.append(f"constraint T{s} tuple {s} \"{ints[0]}(x) is null or {ints[0]}(x) >= 0\";")
    return "\n".join(lines) + "\n"


@settings(max_examples=60, deadline=None)
@given(schemes())
def test_random_scheme_round_trip(text):
    scheme = parse_scheme(text)
    assert parse_scheme(serialize_scheme(scheme)) == scheme


def test_synthetic_scheme_parses():
    s = parse_scheme(helpers.synthetic_scheme_text(3))
    assert len(s.sets) == 6
