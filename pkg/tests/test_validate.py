from emdm.formula import Apply, Compare, Lit, MapRef, Var
from emdm.parser import parse_scheme
from emdm.validate import check_formula, validate_scheme


def test_fixture_is_valid(gen):
    assert validate_scheme(gen.scheme) == []


def test_superset_cycle_detected():
    s = parse_scheme("set A entity subset-of B;\nset B entity subset-of A;\n")
    diags = validate_scheme(s)
    assert diags and all(d.severity == "error" for d in diags)
    assert any("superset cycle" in d.message for d in diags)


def test_sex_of_capital_is_ill_typed(gen):
    bad = Compare("=", Apply(MapRef("RULERS", "Sex"), Apply(MapRef("COUNTRIES", "Capital"), Var("x"))), Lit("F"))
    errors = check_formula(bad, gen.scheme, {"x": "COUNTRIES"})
    assert errors


def test_well_typed_formula_has_no_errors(gen):
    ok = Compare("=", Apply(MapRef("RULERS", "Sex"), Apply(MapRef("RULERS", "Mother"), Var("x"))), Lit("F"))
    assert check_formula(ok, gen.scheme, {"x": "RULERS"}) == []
