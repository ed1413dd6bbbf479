"""Constraint formula AST, traversal helpers and the surface-syntax printer."""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True, slots=True)
class MapRef:
    """A mapping identified by its domain set and name (names repeat across sets)."""

    set: str
    name: str

    def __str__(self) -> str:
        return f"{self.set}.{self.name}"


# ---- terms -----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Var:
    name: str


@dataclass(frozen=True, slots=True)
class Apply:
    mapping: MapRef
    arg: Term


@dataclass(frozen=True, slots=True)
class Lit:
    value: int | str


@dataclass(frozen=True, slots=True)
class Add:
    lhs: Term
    rhs: Term


@dataclass(frozen=True, slots=True)
class Sub:
    lhs: Term
    rhs: Term


@dataclass(frozen=True, slots=True)
class Coalesce:
    first: Term
    second: Term


@dataclass(frozen=True, slots=True)
class CurrentYear:
    pass


CURRENT_YEAR = CurrentYear()

Term = Union[Var, Apply, Lit, Add, Sub, Coalesce, CurrentYear]

# ---- formulas --------------------------------------------------------------

COMPARE_OPS = ("=", "<>", "<", "<=", ">", ">=")


@dataclass(frozen=True, slots=True)
class Compare:
    op: str
    lhs: Term
    rhs: Term


@dataclass(frozen=True, slots=True)
class IsNull:
    term: Term


@dataclass(frozen=True, slots=True)
class Not:
    arg: Formula


@dataclass(frozen=True, slots=True)
class And:
    lhs: Formula
    rhs: Formula


@dataclass(frozen=True, slots=True)
class Or:
    lhs: Formula
    rhs: Formula


@dataclass(frozen=True, slots=True)
class Implies:
    lhs: Formula
    rhs: Formula


@dataclass(frozen=True, slots=True)
class Forall:
    vars: tuple[str, ...]
    set: str
    body: Formula


@dataclass(frozen=True, slots=True)
class Exists:
    vars: tuple[str, ...]
    set: str
    body: Formula


Formula = Union[Compare, IsNull, Not, And, Or, Implies, Forall, Exists]
Node = Union[Term, Formula]


def children(node: Node) -> tuple[Node, ...]:
    if isinstance(node, (Var, Lit, CurrentYear)):
        return ()
    if isinstance(node, Apply):
        return (node.arg,)
    if isinstance(node, (Add, Sub, Compare, And, Or, Implies)):
        return (node.lhs, node.rhs)
    if isinstance(node, Coalesce):
        return (node.first, node.second)
    if isinstance(node, IsNull):
        return (node.term,)
    if isinstance(node, Not):
        return (node.arg,)
    if isinstance(node, (Forall, Exists)):
        return (node.body,)
    raise TypeError(f"not a formula node: {node!r}")


def walk(node: Node) -> Iterator[Node]:
    """Pre-order traversal."""
    stack = [node]
    while stack:
        current = stack.pop()
        yield current
        stack.extend(reversed(children(current)))


def mappings_used(node: Node) -> list[MapRef]:
    """Distinct mappings applied anywhere in ``node``, in first-occurrence order."""
    seen: dict[MapRef, None] = {}
    for sub in walk(node):
        if isinstance(sub, Apply):
            seen.setdefault(sub.mapping, None)
    return list(seen)


def has_composition(node: Node) -> bool:
    return any(isinstance(sub, Apply) and isinstance(sub.arg, Apply) for sub in walk(node))


def uses_current_year(node: Node) -> bool:
    return any(isinstance(sub, CurrentYear) for sub in walk(node))


def quantifiers(node: Node) -> list[Forall | Exists]:
    return [sub for sub in walk(node) if isinstance(sub, (Forall, Exists))]


def free_vars(node: Node, bound: frozenset[str] = frozenset()) -> set[str]:
    if isinstance(node, Var):
        return set() if node.name in bound else {node.name}
    if isinstance(node, (Forall, Exists)):
        return free_vars(node.body, bound | set(node.vars))
    out: set[str] = set()
    for child in children(node):
        out |= free_vars(child, bound)
    return out


def conjuncts(formula: Formula) -> list[Formula]:
    if isinstance(formula, And):
        return conjuncts(formula.lhs) + conjuncts(formula.rhs)
    return [formula]


def conjoin(items: list[Formula]) -> Formula:
    result = items[0]
    for item in items[1:]:
        result = And(result, item)
    return result


def disjoin(items: list[Formula]) -> Formula:
    result = items[0]
    for item in items[1:]:
        result = Or(result, item)
    return result


# ---- printing --------------------------------------------------------------

_LEVEL = {Implies: 1, Or: 2, And: 3, Not: 4}


def _level(formula: Formula) -> int:
    if isinstance(formula, (Forall, Exists)):
        return 0
    return _LEVEL.get(type(formula), 5)


def term_to_text(term: Term, *, qualified: bool = False) -> str:
    if isinstance(term, Var):
        return term.name
    if isinstance(term, Lit):
        if isinstance(term.value, str):
            return "'" + term.value.replace("'", "''") + "'"
        return str(term.value)
    if isinstance(term, CurrentYear):
        return "currentYear()"
    if isinstance(term, Apply):
        name = str(term.mapping) if qualified else term.mapping.name
        return f"{name}({term_to_text(term.arg, qualified=qualified)})"
    if isinstance(term, Coalesce):
        first = term_to_text(term.first, qualified=qualified)
        second = term_to_text(term.second, qualified=qualified)
        return f"isNull({first}, {second})"
    if isinstance(term, (Add, Sub)):
        op = "+" if isinstance(term, Add) else "-"
        lhs = term_to_text(term.lhs, qualified=qualified)
        rhs = term_to_text(term.rhs, qualified=qualified)
        if isinstance(term.rhs, (Add, Sub)):
            rhs = f"({rhs})"
        return f"{lhs} {op} {rhs}"
    raise TypeError(f"not a term: {term!r}")


def to_text(formula: Formula, *, qualified: bool = False) -> str:
    """Render in the surface syntax accepted by the formula parser.

    The output re-parses to an equal AST.
    """

    def operand(sub: Formula, min_level: int) -> str:
        text = to_text(sub, qualified=qualified)
        return f"({text})" if _level(sub) < min_level else text

    if isinstance(formula, (Forall, Exists)):
        word = "forall" if isinstance(formula, Forall) else "exists"
        body = to_text(formula.body, qualified=qualified)
        return f"{word} {', '.join(formula.vars)} in {formula.set}: {body}"
    if isinstance(formula, Implies):
        return f"{operand(formula.lhs, 2)} implies {operand(formula.rhs, 1)}"
    if isinstance(formula, Or):
        return f"{operand(formula.lhs, 2)} or {operand(formula.rhs, 3)}"
    if isinstance(formula, And):
        return f"{operand(formula.lhs, 3)} and {operand(formula.rhs, 4)}"
    if isinstance(formula, Not):
        if isinstance(formula.arg, IsNull):
            return f"{term_to_text(formula.arg.term, qualified=qualified)} is not null"
        return f"not {operand(formula.arg, 4)}"
    if isinstance(formula, IsNull):
        return f"{term_to_text(formula.term, qualified=qualified)} is null"
    if isinstance(formula, Compare):
        lhs = term_to_text(formula.lhs, qualified=qualified)
        rhs = term_to_text(formula.rhs, qualified=qualified)
        return f"{lhs} {formula.op} {rhs}"
    raise TypeError(f"not a formula: {formula!r}")
