"""Scheme well-formedness: structural invariants and formula type checking."""

from __future__ import annotations

from emdm.formula import (
    Add,
    Apply,
    Coalesce,
    Compare,
    CurrentYear,
    Exists,
    Forall,
    Formula,
    IsNull,
    Lit,
    Not,
    Sub,
    Term,
    Var,
    children,
    free_vars,
)
from emdm.model import (
    Acyclic,
    Autonumber,
    Constraint,
    Default,
    Diagnostic,
    EnumLiterals,
    Existence,
    IntRange,
    Key,
    Mapping,
    MappingKind,
    MdmScheme,
    NoOverlap,
    NullReflexive,
    ObjectConstraint,
    Range,
    SetKind,
    Text,
    Totality,
    TupleCheck,
    ValueType,
)

# A term's type is either ("set", NAME) for surrogate-valued terms or ("int",) / ("str",).
TermType = tuple


class FormulaTypeError(Exception):
    pass


def value_type_tag(vtype: ValueType) -> TermType:
    if isinstance(vtype, (Text, EnumLiterals)):
        return ("str",)
    return ("int",)


def codomain_tag(mapping: Mapping) -> TermType:
    if isinstance(mapping.codomain, str):
        return ("set", mapping.codomain)
    return value_type_tag(mapping.codomain)


def _describe(tag: TermType) -> str:
    return tag[1] if tag[0] == "set" else tag[0]


def type_of(term: Term, env: dict[str, str], scheme: MdmScheme) -> TermType:
    """Infer the type of ``term``; ``env`` maps variables to their quantified sets."""
    if isinstance(term, Var):
        if term.name not in env:
            raise FormulaTypeError(f"unbound variable {term.name}")
        return ("set", env[term.name])
    if isinstance(term, Lit):
        return ("str",) if isinstance(term.value, str) else ("int",)
    if isinstance(term, CurrentYear):
        return ("int",)
    if isinstance(term, Apply):
        arg = type_of(term.arg, env, scheme)
        mapping = scheme.find_mapping(term.mapping)
        if mapping is None:
            raise FormulaTypeError(f"unknown mapping {term.mapping}")
        if arg != ("set", mapping.domain):
            raise FormulaTypeError(
                f"{term.mapping.name} is defined on {mapping.domain}, "
                f"but is applied to a value of {_describe(arg)}"
            )
        return codomain_tag(mapping)
    if isinstance(term, (Add, Sub)):
        for side in (term.lhs, term.rhs):
            if type_of(side, env, scheme) != ("int",):
                raise FormulaTypeError("arithmetic requires integer operands")
        return ("int",)
    if isinstance(term, Coalesce):
        first = type_of(term.first, env, scheme)
        second = type_of(term.second, env, scheme)
        if first != second:
            raise FormulaTypeError(
                f"isNull arguments differ in type ({_describe(first)} vs {_describe(second)})"
            )
        return first
    raise FormulaTypeError(f"not a term: {term!r}")


def check_formula(formula: Formula, scheme: MdmScheme, env: dict[str, str] | None = None) -> list[str]:
    """Return type errors (empty when well typed and closed)."""
    errors: list[str] = []
    env = dict(env or {})
    unbound = free_vars(formula) - set(env)
    errors += [f"unbound variable {name}" for name in sorted(unbound)]
    _check(formula, env, scheme, errors)
    return errors


def _check(formula: Formula, env: dict[str, str], scheme: MdmScheme, errors: list[str]) -> None:
    if isinstance(formula, (Forall, Exists)):
        if not scheme.has_set(formula.set):
            errors.append(f"unknown set {formula.set}")
            return
        inner = dict(env)
        inner.update({v: formula.set for v in formula.vars})
        _check(formula.body, inner, scheme, errors)
        return
    if isinstance(formula, Compare):
        try:
            lhs = type_of(formula.lhs, env, scheme)
            rhs = type_of(formula.rhs, env, scheme)
        except FormulaTypeError as exc:
            errors.append(str(exc))
            return
        if lhs != rhs:
            errors.append(f"cannot compare {_describe(lhs)} with {_describe(rhs)}")
        elif lhs[0] != "int" and formula.op not in ("=", "<>"):
            errors.append(f"operator {formula.op} needs integer operands")
        return
    if isinstance(formula, IsNull):
        try:
            type_of(formula.term, env, scheme)
        except FormulaTypeError as exc:
            errors.append(str(exc))
        return
    if isinstance(formula, Not):
        _check(formula.arg, env, scheme, errors)
        return
    for child in children(formula):
        _check(child, env, scheme, errors)


def _superset_cycles(scheme: MdmScheme) -> list[str]:
    """Sets lying on a cycle of the set-inclusion graph (iterative DFS, linear)."""
    graph = {s.name: [t for t in s.supersets if scheme.has_set(t)] for s in scheme.sets}
    state: dict[str, int] = {}
    on_cycle: list[str] = []
    for root in graph:
        if root in state:
            continue
        stack = [(root, iter(graph[root]))]
        path = [root]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                path.pop()
                state[node] = 2
            elif state.get(nxt) == 1:
                on_cycle.append(nxt)
            elif nxt not in state:
                state[nxt] = 1
                path.append(nxt)
                stack.append((nxt, iter(graph[nxt])))
    return sorted(set(on_cycle))


def _check_value_type(vtype: ValueType, where: str, out: list[Diagnostic]) -> None:
    if isinstance(vtype, IntRange):
        if isinstance(vtype.lo, int) and isinstance(vtype.hi, int) and vtype.lo > vtype.hi:
            out.append(Diagnostic("error", where, f"empty range [{vtype.lo}, {vtype.hi}]"))
    elif isinstance(vtype, EnumLiterals):
        if not vtype.values:
            out.append(Diagnostic("error", where, "empty literal set"))
        elif len(set(vtype.values)) != len(vtype.values):
            out.append(Diagnostic("error", where, "duplicate literals"))
    elif isinstance(vtype, Autonumber):
        if vtype.card_exponent < 1:
            out.append(Diagnostic("error", where, "auto(k) needs k >= 1"))


def _ref_ok(scheme: MdmScheme, ref, where: str, out: list[Diagnostic]) -> Mapping | None:
    mapping = scheme.find_mapping(ref)
    if mapping is None:
        out.append(Diagnostic("error", where, f"unknown mapping {ref}"))
    return mapping


def _check_constraint(c: Constraint, scheme: MdmScheme, out: list[Diagnostic]) -> None:
    where = f"constraint {c.label}"
    if isinstance(c, (Totality, Range, Default, Acyclic)):
        mapping = _ref_ok(scheme, c.mapping, where, out)
        if isinstance(c, Acyclic) and mapping is not None and mapping.codomain != mapping.domain:
            out.append(Diagnostic("error", where, f"{c.mapping.name} is not a self-map"))
    elif isinstance(c, Key):
        sets = {ref.set for ref in c.product}
        for ref in c.product:
            _ref_ok(scheme, ref, where, out)
        if len(sets) > 1:
            out.append(Diagnostic("error", where, "key mappings span several sets"))
    elif isinstance(c, NullReflexive):
        inner = _ref_ok(scheme, c.inner, where, out)
        outer = _ref_ok(scheme, c.outer, where, out)
        if inner and outer and not (inner.codomain == outer.domain and outer.codomain == inner.domain):
            out.append(
                Diagnostic("error", where, f"{c.outer.name} o {c.inner.name} is not an endomap")
            )
    elif isinstance(c, Existence):
        a = _ref_ok(scheme, c.if_mapping, where, out)
        b = _ref_ok(scheme, c.then_mapping, where, out)
        if a and b and a.domain != b.domain:
            out.append(Diagnostic("error", where, "existence mappings have different domains"))
    elif isinstance(c, NoOverlap):
        refs = [c.distinct, *c.group, c.lo, c.hi]
        found = [_ref_ok(scheme, ref, where, out) for ref in refs]
        if any(ref.set != c.set for ref in refs):
            out.append(Diagnostic("error", where, f"all mappings must be defined on {c.set}"))
        lo = found[len(refs) - 2]
        if lo is not None and not lo.total:
            out.append(Diagnostic("error", where, f"interval start {c.lo.name} must be total"))
    elif isinstance(c, TupleCheck):
        body = c.body
        if not (isinstance(body, Forall) and body.set == c.host and len(body.vars) == 1):
            out.append(Diagnostic("error", where, "tuple constraint needs one variable over its host"))
        out += [Diagnostic("error", where, msg) for msg in check_formula(body, scheme)]
    elif isinstance(c, ObjectConstraint):
        out += [Diagnostic("error", where, msg) for msg in check_formula(c.body, scheme)]


def validate_scheme(scheme: MdmScheme) -> list[Diagnostic]:
    """All invariant violations of ``scheme``; empty iff it is well formed."""
    out: list[Diagnostic] = []
    seen_sets: set[str] = set()
    for s in scheme.sets:
        where = f"set {s.name}"
        if s.name in seen_sets:
            out.append(Diagnostic("error", where, "duplicate set"))
        seen_sets.add(s.name)
        if s.card_exponent < 1:
            out.append(Diagnostic("error", where, "card exponent must be >= 1"))
        for sup in s.supersets:
            if not scheme.has_set(sup):
                out.append(Diagnostic("error", where, f"unknown superset {sup}"))
        if s.kind is SetKind.STATIC and len(set(s.values)) != len(s.values):
            out.append(Diagnostic("error", where, "duplicate static values"))
        own = scheme.mappings_on(s.name)
        if s.kind is SetKind.RELATIONSHIP:
            roles = [m for m in own if m.kind is MappingKind.CANONICAL_PROJECTION]
            if len(roles) < 2:
                out.append(Diagnostic("error", where, "relationship set needs at least 2 roles"))
        if s.kind is SetKind.STATIC:
            if any(m.kind is MappingKind.STRUCTURAL for m in own):
                out.append(Diagnostic("error", where, "static sets may not have structural functions"))
        if s.kind is not SetKind.COMPUTED:
            ids = [m for m in own if m.kind is MappingKind.OBJECT_IDENTIFIER]
            if len(ids) != 1:
                out.append(Diagnostic("error", where, "needs exactly one object identifier x"))
    for name in _superset_cycles(scheme):
        out.append(Diagnostic("error", f"set {name}", "superset cycle"))

    seen_maps: set = set()
    for m in scheme.mappings:
        where = f"function {m.domain}.{m.name}"
        if m.ref in seen_maps:
            out.append(Diagnostic("error", where, "duplicate function"))
        seen_maps.add(m.ref)
        if not scheme.has_set(m.domain):
            out.append(Diagnostic("error", where, f"unknown domain {m.domain}"))
            continue
        if isinstance(m.codomain, str):
            if not scheme.has_set(m.codomain):
                out.append(Diagnostic("error", where, f"unknown codomain {m.codomain}"))
            if m.kind in (MappingKind.ATTRIBUTE, MappingKind.COMPUTED_ATTRIBUTE):
                out.append(Diagnostic("error", where, "attribute codomain must be a value type"))
        else:
            _check_value_type(m.codomain, where, out)
            if m.kind in (
                MappingKind.STRUCTURAL,
                MappingKind.CANONICAL_PROJECTION,
                MappingKind.CANONICAL_INCLUSION,
            ):
                out.append(Diagnostic("error", where, "structural codomain must be an object set"))
        if m.kind is MappingKind.CANONICAL_PROJECTION:
            if scheme.set(m.domain).kind is not SetKind.RELATIONSHIP:
                out.append(Diagnostic("error", where, "roles are only defined on relationship sets"))
            if not m.total:
                out.append(Diagnostic("error", where, "roles are total"))
        if m.kind is MappingKind.COMPUTED_ATTRIBUTE:
            if m.compute is None:
                out.append(Diagnostic("error", where, "computed attribute without expression"))
            else:
                try:
                    tag = type_of(m.compute, {"x": m.domain}, scheme)
                    if tag != value_type_tag(m.codomain):  # type: ignore[arg-type]
                        out.append(Diagnostic("error", where, "expression type differs from codomain"))
                except FormulaTypeError as exc:
                    out.append(Diagnostic("error", where, str(exc)))

    labels: set[str] = set()
    for c in scheme.constraints:
        if c.label in labels:
            out.append(Diagnostic("error", f"constraint {c.label}", "duplicate label"))
        labels.add(c.label)
        _check_constraint(c, scheme, out)
    return sorted(out, key=lambda d: (d.location, d.message))
