"""Parser and serializer for ``.mdm`` scheme files and constraint formulas.

Scheme statements are keyword-led and semicolon-terminated::

    set RULERS entity card 16;
    fun Mother : RULERS -> RULERS;
    fun Sex : RULERS -> {'M', 'F', 'N'} total;
    key C10 RULERS(Mother . Name);
    constraint C27 acyclic Mother "Nobody may be his/her maternal ancestor.";

Formulas and computed-attribute expressions are embedded as double-quoted
strings and use the syntax described in :func:`parse_formula`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from emdm.formula import (
    CURRENT_YEAR,
    COMPARE_OPS,
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
    MapRef,
    Not,
    Or,
    Sub,
    Term,
    Var,
    term_to_text,
    to_text,
)
from emdm.model import (
    Acyclic,
    Autonumber,
    Bound,
    Constraint,
    Default,
    EnumLiterals,
    Existence,
    IntRange,
    Key,
    Mapping,
    MappingKind,
    MdmScheme,
    Natural,
    NoOverlap,
    NullReflexive,
    ObjectConstraint,
    ObjectSet,
    Range,
    SetKind,
    Text,
    TupleCheck,
    ValueType,
    expand,
)
from emdm.validate import FormulaTypeError, check_formula, codomain_tag, type_of


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line_start: int
    col_start: int
    line_end: int
    col_end: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line_start}:{self.col_start}"


@dataclass(frozen=True)
class ParseError:
    message: str
    span: SourceSpan

    def __str__(self) -> str:
        return f"{self.span}: {self.message}"


class SchemeParseError(Exception):
    """Raised by :func:`parse_scheme`; carries every independent error found."""

    def __init__(self, errors: list[ParseError]):
        self.errors = errors
        super().__init__("\n".join(str(e) for e in errors))


class FormulaParseError(Exception):
    def __init__(self, message: str, offset: int = 0, length: int = 1):
        self.message = message
        self.offset = offset
        self.length = length
        super().__init__(message)


# ---- lexing ----------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    kind: str  # ident, int, string, literal, op, eof
    text: str
    offset: int
    value: object = None


_SCHEME_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:-[A-Za-z][A-Za-z0-9_]*)*)
  | (?P<int>\d+)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<literal>'(?:[^'\n]|'')*')
  | (?P<op>->|[;:,()\[\]{}.\-])
    """,
    re.VERBOSE,
)

_FORMULA_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<int>\d+)
  | (?P<literal>'(?:[^']|'')*')
  | (?P<op><=|>=|<>|[=<>+\-(),:.])
    """,
    re.VERBOSE,
)


def _tokenize(text: str, pattern: re.Pattern[str]) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(text):
        match = pattern.match(text, pos)
        if match is None:
            raise FormulaParseError(f"unexpected character {text[pos]!r}", pos)
        kind = match.lastgroup or ""
        raw = match.group()
        if kind != "ws":
            value: object = None
            if kind == "int":
                value = int(raw)
            elif kind == "string":
                value = re.sub(r"\\(.)", r"\1", raw[1:-1])
            elif kind == "literal":
                value = raw[1:-1].replace("''", "'")
            tokens.append(Token(kind, raw, pos, value))
        pos = match.end()
    tokens.append(Token("eof", "", len(text)))
    return tokens


class _Cursor:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, ahead: int = 1) -> Token:
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "ident") and self.tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise FormulaParseError(f"expected {text!r}, found {self.tok.text or 'end of input'!r}", self.tok.offset, max(1, len(self.tok.text)))
        tok = self.tok
        self.i += 1
        return tok

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            raise FormulaParseError(f"expected {what}, found {self.tok.text or 'end of input'!r}", self.tok.offset, max(1, len(self.tok.text)))
        tok = self.tok
        self.i += 1
        return tok


# ---- formulas --------------------------------------------------------------

_KEYWORDS = {"forall", "exists", "in", "implies", "and", "or", "not", "is", "null"}


class _FormulaParser:
    """Recursive descent; precedence from loosest: implies (right), or, and, not, comparison."""

    def __init__(self, text: str):
        self.c = _Cursor(_tokenize(text, _FORMULA_TOKEN))

    def formula(self) -> Formula:
        result = self.implication()
        if self.c.tok.kind != "eof":
            tok = self.c.tok
            raise FormulaParseError(f"unexpected {tok.text!r}", tok.offset, len(tok.text))
        return result

    def implication(self) -> Formula:
        lhs = self.disjunction()
        if self.c.accept("implies"):
            return Implies(lhs, self.implication())
        return lhs

    def disjunction(self) -> Formula:
        lhs = self.conjunction()
        while self.c.accept("or"):
            lhs = Or(lhs, self.conjunction())
        return lhs

    def conjunction(self) -> Formula:
        lhs = self.negation()
        while self.c.accept("and"):
            lhs = And(lhs, self.negation())
        return lhs

    def negation(self) -> Formula:
        if self.c.accept("not"):
            return Not(self.negation())
        return self.atom()

    def atom(self) -> Formula:
        if self.c.at("forall") or self.c.at("exists"):
            return self.quantified()
        if self.c.at("("):
            # parenthesised formula, or a parenthesised term starting a comparison
            save = self.c.i
            self.c.i += 1
            try:
                inner = self.implication()
                self.c.expect(")")
                if not self._at_comparison():
                    return inner
            except FormulaParseError:
                pass
            self.c.i = save
        return self.comparison()

    def _at_comparison(self) -> bool:
        return (self.c.tok.kind == "op" and self.c.tok.text in COMPARE_OPS) or self.c.at("is")

    def quantified(self) -> Formula:
        universal = self.c.tok.text == "forall"
        self.c.i += 1
        names = [self._var_name()]
        while self.c.accept(","):
            names.append(self._var_name())
        self.c.expect("in")
        set_name = self.c.expect_kind("ident", "set name").text
        self.c.expect(":")
        body = self.implication()
        cls = Forall if universal else Exists
        return cls(tuple(names), set_name, body)

    def _var_name(self) -> str:
        tok = self.c.expect_kind("ident", "variable")
        if tok.text in _KEYWORDS:
            raise FormulaParseError(f"keyword {tok.text!r} used as variable", tok.offset, len(tok.text))
        return tok.text

    def comparison(self) -> Formula:
        first = self.term()
        if self.c.accept("is"):
            negated = self.c.accept("not")
            self.c.expect("null")
            test: Formula = IsNull(first)
            return Not(test) if negated else test
        parts: list[Formula] = []
        lhs = first
        while self.c.tok.kind == "op" and self.c.tok.text in COMPARE_OPS:
            op = self.c.tok.text
            self.c.i += 1
            rhs = self.term()
            parts.append(Compare(op, lhs, rhs))
            lhs = rhs
        if not parts:
            tok = self.c.tok
            raise FormulaParseError("expected a comparison", tok.offset, max(1, len(tok.text)))
        result = parts[0]
        for part in parts[1:]:
            result = And(result, part)
        return result

    def term(self) -> Term:
        lhs = self.unary()
        while self.c.tok.kind == "op" and self.c.tok.text in "+-":
            op = self.c.tok.text
            self.c.i += 1
            rhs = self.unary()
            lhs = Add(lhs, rhs) if op == "+" else Sub(lhs, rhs)
        return lhs

    def unary(self) -> Term:
        if self.c.at("-") and self.c.peek().kind == "int":
            self.c.i += 1
            return Lit(-self.c.expect_kind("int", "integer").value)  # type: ignore[operator]
        return self.primary()

    def primary(self) -> Term:
        tok = self.c.tok
        if tok.kind == "int" or tok.kind == "literal":
            self.c.i += 1
            return Lit(tok.value)  # type: ignore[arg-type]
        if self.c.accept("("):
            inner = self.term()
            self.c.expect(")")
            return inner
        if tok.kind != "ident" or tok.text in _KEYWORDS:
            raise FormulaParseError(f"expected a term, found {tok.text or 'end of input'!r}", tok.offset, max(1, len(tok.text)))
        self.c.i += 1
        if tok.text == "currentYear" and self.c.at("("):
            self.c.expect("(")
            self.c.expect(")")
            return CURRENT_YEAR
        if tok.text == "isNull" and self.c.at("("):
            self.c.expect("(")
            first = self.term()
            self.c.expect(",")
            second = self.term()
            self.c.expect(")")
            return Coalesce(first, second)
        qualifier = ""
        name = tok.text
        if self.c.at(".") and self.c.peek().kind == "ident":
            self.c.i += 1
            qualifier, name = name, self.c.expect_kind("ident", "function name").text
        if self.c.accept("("):
            arg = self.term()
            self.c.expect(")")
            return Apply(MapRef(qualifier, name), arg)
        if qualifier:
            raise FormulaParseError(f"{qualifier}.{name} must be applied", tok.offset, len(tok.text))
        return Var(name)


class _Resolver:
    """Fills the domain of every unqualified application by type inference."""

    def __init__(self, scheme: MdmScheme):
        self.scheme = scheme

    def formula(self, f: Formula, env: dict[str, str]) -> Formula:
        if isinstance(f, (Forall, Exists)):
            if not self.scheme.has_set(f.set):
                raise FormulaTypeError(f"unknown set {f.set}")
            inner = dict(env)
            inner.update({v: f.set for v in f.vars})
            return type(f)(f.vars, f.set, self.formula(f.body, inner))
        if isinstance(f, (And, Or, Implies)):
            return type(f)(self.formula(f.lhs, env), self.formula(f.rhs, env))
        if isinstance(f, Not):
            return Not(self.formula(f.arg, env))
        if isinstance(f, IsNull):
            return IsNull(self.term(f.term, env))
        if isinstance(f, Compare):
            return Compare(f.op, self.term(f.lhs, env), self.term(f.rhs, env))
        raise FormulaTypeError(f"not a formula: {f!r}")

    def term(self, t: Term, env: dict[str, str]) -> Term:
        if isinstance(t, Apply):
            arg = self.term(t.arg, env)
            arg_type = type_of(arg, env, self.scheme)
            if arg_type[0] != "set":
                raise FormulaTypeError(f"{t.mapping.name} applied to a {arg_type[0]} value")
            domain = arg_type[1]
            if t.mapping.set and t.mapping.set != domain:
                raise FormulaTypeError(
                    f"{t.mapping} is defined on {t.mapping.set}, but is applied to a value of {domain}"
                )
            ref = MapRef(domain, t.mapping.name)
            if self.scheme.find_mapping(ref) is None:
                owners = sorted(m.domain for m in self.scheme.mappings_named(t.mapping.name))
                if owners:
                    raise FormulaTypeError(
                        f"{t.mapping.name} is defined on {', '.join(owners)}, "
                        f"but is applied to a value of {domain}"
                    )
                raise FormulaTypeError(f"unknown function {t.mapping.name}")
            return Apply(ref, arg)
        if isinstance(t, Var):
            if t.name not in env:
                raise FormulaTypeError(f"unbound variable {t.name}")
            return t
        if isinstance(t, (Add, Sub)):
            return type(t)(self.term(t.lhs, env), self.term(t.rhs, env))
        if isinstance(t, Coalesce):
            return Coalesce(self.term(t.first, env), self.term(t.second, env))
        return t


def parse_formula(text: str, scheme: MdmScheme, env: dict[str, str] | None = None) -> Formula:
    """Parse and type-check a closed constraint formula.

    Syntax: ``forall x, y in SET: ...``, ``exists z in SET: ...``, ``implies``,
    ``or``, ``and``, ``not``, comparisons ``= <> < <= > >=`` (chains such as
    ``0 <= Age(x) <= 140`` expand to conjunctions), ``t is null``,
    ``t is not null``, ``isNull(a, b)`` (first non-null), ``currentYear()``.
    A quantifier's body extends as far right as possible.

    Raises :class:`FormulaParseError` on syntax errors and
    :class:`~emdm.validate.FormulaTypeError` on typing errors.
    """
    raw = _FormulaParser(text).formula()
    resolved = _Resolver(scheme).formula(raw, dict(env or {}))
    errors = check_formula(resolved, scheme, env)
    if errors:
        raise FormulaTypeError(errors[0])
    return resolved


def parse_term(text: str, scheme: MdmScheme, env: dict[str, str]) -> Term:
    p = _FormulaParser(text)
    term = p.term()
    if p.c.tok.kind != "eof":
        tok = p.c.tok
        raise FormulaParseError(f"unexpected {tok.text!r}", tok.offset, len(tok.text))
    resolved = _Resolver(scheme).term(term, env)
    type_of(resolved, env, scheme)
    return resolved


# ---- schemes ---------------------------------------------------------------

_SET_KINDS = {k.value: k for k in SetKind}


@dataclass
class _Stmt:
    keyword: str
    offset: int
    end: int
    fields: dict = field(default_factory=dict)


class _SchemeReader:
    def __init__(self, text: str, filename: str):
        self.text = text
        self.filename = filename
        self.errors: list[ParseError] = []
        self._line_starts = [0] + [m.end() for m in re.finditer("\n", text)]

    # positions

    def _line_col(self, offset: int) -> tuple[int, int]:
        lo, hi = 0, len(self._line_starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self._line_starts[mid] <= offset:
                lo = mid
            else:
                hi = mid - 1
        return lo + 1, offset - self._line_starts[lo] + 1

    def span(self, offset: int, length: int = 1) -> SourceSpan:
        line, col = self._line_col(offset)
        end_line, end_col = self._line_col(offset + max(length, 1) - 1)
        return SourceSpan(self.filename, line, col, end_line, end_col)

    def error(self, message: str, offset: int, length: int = 1) -> None:
        self.errors.append(ParseError(message, self.span(offset, length)))

    # statements

    def statements(self) -> list[_Stmt]:
        try:
            tokens = _tokenize(self.text, _SCHEME_TOKEN)
        except FormulaParseError as exc:
            self.error(exc.message, exc.offset)
            return []
        c = _Cursor(tokens)
        out: list[_Stmt] = []
        while c.tok.kind != "eof":
            start = c.i
            try:
                out.append(self._statement(c))
            except FormulaParseError as exc:
                self.error(exc.message, exc.offset, exc.length)
                c.i = max(c.i, start + 1)
                while c.tok.kind != "eof" and not c.at(";"):
                    c.i += 1
                c.accept(";")
        return out

    def _statement(self, c: _Cursor) -> _Stmt:
        tok = c.expect_kind("ident", "a declaration keyword")
        handler = {
            "set": self._set,
            "fun": self._fun,
            "key": self._key,
            "range": self._range,
            "default": self._default,
            "constraint": self._constraint,
        }.get(tok.text)
        if handler is None:
            raise FormulaParseError(f"unknown declaration {tok.text!r}", tok.offset, len(tok.text))
        stmt = _Stmt(tok.text, tok.offset, tok.offset)
        handler(c, stmt.fields)
        end = c.expect(";")
        stmt.end = end.offset + 1
        return stmt

    def _name(self, c: _Cursor, what: str) -> Token:
        return c.expect_kind("ident", what)

    def _ref(self, c: _Cursor) -> tuple[str, str, int]:
        first = self._name(c, "function name")
        if c.at(".") and c.peek().kind == "ident":
            c.i += 1
            second = self._name(c, "function name")
            return first.text, second.text, first.offset
        return "", first.text, first.offset

    def _string(self, c: _Cursor, what: str) -> Token:
        return c.expect_kind("string", what)

    def _trailer(self, c: _Cursor, f: dict) -> None:
        if c.tok.kind == "string":
            f["description"] = c.tok.value
            c.i += 1
        f["messages"] = []
        while c.accept("message"):
            table = ""
            if c.accept("on"):
                table = self._name(c, "table name").text
            f["messages"].append((table, self._string(c, "message text").value))

    def _int(self, c: _Cursor) -> int:
        negative = c.accept("-")
        value = c.expect_kind("int", "integer").value
        return -value if negative else value  # type: ignore[operator]

    def _bound(self, c: _Cursor) -> Bound:
        if c.accept("currentYear"):
            c.expect("(")
            c.expect(")")
            return CURRENT_YEAR
        return self._int(c)

    def _literals(self, c: _Cursor) -> tuple[str, ...]:
        c.expect("{")
        values: list[str] = []
        if not c.at("}"):
            values.append(c.expect_kind("literal", "quoted literal").value)  # type: ignore[arg-type]
            while c.accept(","):
                values.append(c.expect_kind("literal", "quoted literal").value)  # type: ignore[arg-type]
        c.expect("}")
        return tuple(values)

    def _set(self, c: _Cursor, f: dict) -> None:
        name = self._name(c, "set name")
        f["name"], f["offset"] = name.text, name.offset
        kind = self._name(c, "set kind")
        if kind.text not in _SET_KINDS:
            raise FormulaParseError(f"unknown set kind {kind.text!r}", kind.offset, len(kind.text))
        f["kind"] = _SET_KINDS[kind.text]
        f["supersets"] = []
        while not c.at(";"):
            if c.accept("card"):
                f["card"] = c.expect_kind("int", "cardinality exponent").value
            elif c.accept("subset-of"):
                sup = self._name(c, "superset")
                f["supersets"].append((sup.text, sup.offset))
                while c.accept(","):
                    sup = self._name(c, "superset")
                    f["supersets"].append((sup.text, sup.offset))
            elif c.accept("values"):
                f["values"] = self._literals(c)
            elif c.accept("view"):
                f["view"] = self._string(c, "view body").value
            else:
                tok = c.tok
                raise FormulaParseError(f"unexpected {tok.text!r} in set declaration", tok.offset, max(1, len(tok.text)))

    def _codomain(self, c: _Cursor) -> tuple[object, int]:
        tok = c.tok
        if c.at("{"):
            return EnumLiterals(self._literals(c)), tok.offset
        name = self._name(c, "codomain")
        if name.text == "ascii" and c.at("("):
            c.expect("(")
            n = c.expect_kind("int", "length").value
            c.expect(")")
            return Text(n), tok.offset  # type: ignore[arg-type]
        if name.text == "nat" and c.at("("):
            c.expect("(")
            n = c.expect_kind("int", "digit count").value
            c.expect(")")
            return Natural(n), tok.offset  # type: ignore[arg-type]
        if name.text == "int" and c.at("["):
            c.expect("[")
            lo = self._bound(c)
            c.expect(",")
            hi = self._bound(c)
            c.expect("]")
            return IntRange(lo, hi), tok.offset
        return name.text, tok.offset

    def _fun(self, c: _Cursor, f: dict) -> None:
        name = self._name(c, "function name")
        f["name"], f["offset"] = name.text, name.offset
        c.expect(":")
        domain = self._name(c, "domain set")
        f["domain"], f["domain_offset"] = domain.text, domain.offset
        c.expect("->")
        f["codomain"], f["codomain_offset"] = self._codomain(c)
        f["total"] = False
        f["role"] = False
        while not c.at(";"):
            if c.accept("total"):
                f["total"] = True
            elif c.accept("role"):
                f["role"] = True
            elif c.accept("computed"):
                tok = self._string(c, "computed expression")
                f["computed"] = (tok.value, tok.offset + 1)
            else:
                tok = c.tok
                raise FormulaParseError(f"unexpected {tok.text!r} in function declaration", tok.offset, max(1, len(tok.text)))

    def _key(self, c: _Cursor, f: dict) -> None:
        first = self._name(c, "set name")
        if c.tok.kind == "ident":
            f["label"] = first.text
            first = self._name(c, "set name")
        f["set"], f["offset"] = first.text, first.offset
        c.expect("(")
        names = [self._name(c, "function name")]
        while c.accept("."):
            names.append(self._name(c, "function name"))
        c.expect(")")
        f["product"] = [(t.text, t.offset) for t in names]
        self._trailer(c, f)

    def _range(self, c: _Cursor, f: dict) -> None:
        f["ref"] = self._ref(c)
        c.expect("[")
        f["lo"] = self._bound(c)
        c.expect(",")
        f["hi"] = self._bound(c)
        c.expect("]")
        self._trailer(c, f)

    def _default(self, c: _Cursor, f: dict) -> None:
        f["ref"] = self._ref(c)
        tok = c.tok
        if tok.kind == "literal":
            c.i += 1
            f["value"] = tok.value
        else:
            f["value"] = self._int(c)
        self._trailer(c, f)

    def _constraint(self, c: _Cursor, f: dict) -> None:
        label = self._name(c, "constraint label")
        f["label"], f["offset"] = label.text, label.offset
        kind = self._name(c, "constraint kind")
        f["kind"] = kind.text
        if kind.text == "tuple":
            host = self._name(c, "host set")
            f["host"], f["host_offset"] = host.text, host.offset
            body = self._string(c, "formula")
            f["body"] = (body.value, body.offset + 1)
        elif kind.text == "object":
            body = self._string(c, "formula")
            f["body"] = (body.value, body.offset + 1)
        elif kind.text == "null-reflexive":
            f["outer"] = self._ref(c)
            c.expect("o")
            f["inner"] = self._ref(c)
        elif kind.text == "acyclic":
            f["ref"] = self._ref(c)
        elif kind.text == "existence":
            f["if"] = self._ref(c)
            c.expect("->")
            f["then"] = self._ref(c)
        elif kind.text == "no-overlap":
            host = self._name(c, "host set")
            f["host"], f["host_offset"] = host.text, host.offset
            c.expect("distinct")
            f["distinct"] = self._ref(c)
            f["group"] = []
            if c.accept("group"):
                f["group"].append(self._ref(c))
                while c.accept(","):
                    f["group"].append(self._ref(c))
            c.expect("interval")
            f["lo"] = self._ref(c)
            c.expect(",")
            f["hi"] = self._ref(c)
        else:
            raise FormulaParseError(f"unknown constraint kind {kind.text!r}", kind.offset, len(kind.text))
        self._trailer(c, f)


def _auto_key_label(set_name: str, names: list[str]) -> str:
    return f"{set_name}({'.'.join(names)})"


class _Builder:
    """Second pass: resolves names and builds the scheme."""

    def __init__(self, reader: _SchemeReader):
        self.r = reader
        self.sets: dict[str, ObjectSet] = {}
        self.mappings: list[Mapping] = []
        self.constraints: list[Constraint] = []
        self.partial = MdmScheme()

    def build(self, stmts: list[_Stmt]) -> MdmScheme:
        for st in stmts:
            if st.keyword == "set":
                self._set(st.fields)
        for st in stmts:
            if st.keyword == "set":
                for sup, off in st.fields["supersets"]:
                    if sup not in self.sets:
                        self.r.error(f"unknown set {sup}", off, len(sup))
        seen: set[MapRef] = set()
        pending_computed: list[tuple[int, tuple[str, int]]] = []
        for st in stmts:
            if st.keyword == "fun":
                mapping = self._fun(st.fields)
                if mapping is None:
                    continue
                if mapping.ref in seen or mapping.name == "x":
                    self.r.error(f"duplicate declaration of {mapping.ref}", st.fields["offset"], len(mapping.name))
                    continue
                seen.add(mapping.ref)
                if "computed" in st.fields:
                    pending_computed.append((len(self.mappings), st.fields["computed"]))
                self.mappings.append(mapping)
        self.partial = expand(self.sets.values(), self.mappings, [])
        for index, (text, offset) in pending_computed:
            mapping = self.mappings[index]
            try:
                term = parse_term(text, self.partial, {"x": mapping.domain})
            except FormulaParseError as exc:
                self.r.error(exc.message, offset + exc.offset, exc.length)
                continue
            except FormulaTypeError as exc:
                self.r.error(str(exc), offset, len(text))
                continue
            self.mappings[index] = Mapping(
                mapping.name, mapping.domain, mapping.codomain, mapping.kind, mapping.total, term
            )
        self.partial = expand(self.sets.values(), self.mappings, [])
        labels: set[str] = set()
        for st in stmts:
            if st.keyword in ("key", "range", "default", "constraint"):
                built = getattr(self, "_" + st.keyword)(st.fields)
                if built is None:
                    continue
                if built.label in labels:
                    self.r.error(f"duplicate declaration of constraint {built.label}", st.offset, len(st.keyword))
                    continue
                labels.add(built.label)
                self.constraints.append(built)
        return expand(self.sets.values(), self.mappings, self.constraints)

    # declarations

    def _set(self, f: dict) -> None:
        name = f["name"]
        if name in self.sets:
            self.r.error(f"duplicate declaration of set {name}", f["offset"], len(name))
            return
        kind = f["kind"]
        if kind is SetKind.COMPUTED and "view" not in f:
            self.r.error(f"computed set {name} needs a view body", f["offset"], len(name))
        self.sets[name] = ObjectSet(
            name=name,
            kind=kind,
            card_exponent=f.get("card", ObjectSet.__dataclass_fields__["card_exponent"].default),
            supersets=tuple(s for s, _ in f["supersets"]),
            view_body=f.get("view"),
            values=tuple(f.get("values", ())),
        )

    def _fun(self, f: dict) -> Mapping | None:
        ok = True
        if f["domain"] not in self.sets:
            self.r.error(f"unknown set {f['domain']}", f["domain_offset"], len(f["domain"]))
            ok = False
        codomain = f["codomain"]
        if isinstance(codomain, str) and codomain not in self.sets:
            self.r.error(f"unknown set {codomain}", f["codomain_offset"], len(codomain))
            ok = False
        if not ok:
            return None
        if "computed" in f:
            kind = MappingKind.COMPUTED_ATTRIBUTE
        elif f["role"]:
            kind = MappingKind.CANONICAL_PROJECTION
        elif isinstance(codomain, str):
            kind = MappingKind.STRUCTURAL
        else:
            kind = MappingKind.ATTRIBUTE
        return Mapping(f["name"], f["domain"], codomain, kind, f["total"] or f["role"])

    def _resolve_ref(self, ref: tuple[str, str, int], host: str | None = None) -> MapRef | None:
        qualifier, name, offset = ref
        if qualifier:
            found = MapRef(qualifier, name)
            if self.partial.find_mapping(found) is None:
                self.r.error(f"unknown function {qualifier}.{name}", offset, len(qualifier) + len(name) + 1)
                return None
            return found
        if host is not None:
            found = MapRef(host, name)
            if self.partial.find_mapping(found) is None:
                self.r.error(f"unknown function {name} on {host}", offset, len(name))
                return None
            return found
        candidates = self.partial.mappings_named(name)
        if not candidates:
            self.r.error(f"unknown function {name}", offset, len(name))
            return None
        if len(candidates) > 1:
            owners = ", ".join(m.domain for m in candidates)
            self.r.error(f"ambiguous function {name} (defined on {owners}); qualify it", offset, len(name))
            return None
        return candidates[0].ref

    def _common(self, f: dict) -> dict:
        return {"description": f.get("description", ""), "messages": tuple(f.get("messages", ()))}

    def _key(self, f: dict) -> Constraint | None:
        set_name = f["set"]
        if set_name not in self.sets:
            self.r.error(f"unknown set {set_name}", f["offset"], len(set_name))
            return None
        refs = [self._resolve_ref(("", n, off), set_name) for n, off in f["product"]]
        if any(r is None for r in refs):
            return None
        label = f.get("label") or _auto_key_label(set_name, [n for n, _ in f["product"]])
        return Key(label=label, product=tuple(refs), **self._common(f))  # type: ignore[arg-type]

    def _range(self, f: dict) -> Constraint | None:
        ref = self._resolve_ref(f["ref"])
        if ref is None:
            return None
        return Range(label=f"{ref}#range", mapping=ref, lo=f["lo"], hi=f["hi"], **self._common(f))

    def _default(self, f: dict) -> Constraint | None:
        ref = self._resolve_ref(f["ref"])
        if ref is None:
            return None
        return Default(label=f"{ref}#default", mapping=ref, value=f["value"], **self._common(f))

    def _formula(self, text: str, offset: int, env: dict[str, str] | None = None) -> Formula | None:
        try:
            return parse_formula(text, self.partial, env)
        except FormulaParseError as exc:
            self.r.error(exc.message, offset + exc.offset, exc.length)
        except FormulaTypeError as exc:
            self.r.error(str(exc), offset, len(text))
        return None

    def _constraint(self, f: dict) -> Constraint | None:
        kind = f["kind"]
        common = dict(label=f["label"], **self._common(f))
        if kind in ("tuple", "no-overlap") and f["host"] not in self.sets:
            self.r.error(f"unknown set {f['host']}", f["host_offset"], len(f["host"]))
            return None
        if kind == "tuple":
            text, offset = f["body"]
            body = self._formula(text, offset, {"x": f["host"]})
            if body is None:
                return None
            return TupleCheck(host=f["host"], body=Forall(("x",), f["host"], body), **common)
        if kind == "object":
            text, offset = f["body"]
            body = self._formula(text, offset)
            return None if body is None else ObjectConstraint(body=body, **common)
        if kind == "null-reflexive":
            inner = self._resolve_ref(f["inner"])
            if inner is None:
                return None
            mapping = self.partial.mapping(inner)
            target = mapping.codomain if isinstance(mapping.codomain, str) else None
            outer = self._resolve_ref(f["outer"], target if not f["outer"][0] else None)
            if outer is None:
                return None
            return NullReflexive(outer=outer, inner=inner, **common)
        if kind == "acyclic":
            ref = self._resolve_ref(f["ref"])
            return None if ref is None else Acyclic(mapping=ref, **common)
        if kind == "existence":
            a = self._resolve_ref(f["if"])
            b = self._resolve_ref(f["then"], a.set if a is not None and not f["then"][0] else None)
            if a is None or b is None:
                return None
            return Existence(if_mapping=a, then_mapping=b, **common)
        if kind == "no-overlap":
            host = f["host"]
            refs = [self._resolve_ref(r, None if r[0] else host) for r in
                    [f["distinct"], *f["group"], f["lo"], f["hi"]]]
            if any(r is None for r in refs):
                return None
            return NoOverlap(
                set=host,
                distinct=refs[0],
                group=tuple(refs[1:-2]),
                lo=refs[-2],
                hi=refs[-1],
                **common,
            )
        return None


def parse_scheme(text: str, filename: str = "<input>") -> MdmScheme:
    """Parse ``.mdm`` source into a scheme with synthesized identifiers.

    Raises :class:`SchemeParseError` listing every syntax, duplicate-declaration,
    unknown-reference and typing error found in the file.
    """
    reader = _SchemeReader(text, filename)
    stmts = reader.statements()
    scheme = _Builder(reader).build(stmts)
    if reader.errors:
        raise SchemeParseError(sorted(reader.errors, key=lambda e: (e.span.line_start, e.span.col_start)))
    return scheme


# ---- serialization ---------------------------------------------------------


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _literal(value: str) -> str:
    return "'" + value.replace("'", "''") + "'"


def _bound_text(bound: Bound) -> str:
    return "currentYear()" if isinstance(bound, CurrentYear) else str(bound)


def _codomain_text(codomain: str | ValueType) -> str:
    if isinstance(codomain, str):
        return codomain
    if isinstance(codomain, Text):
        return f"ascii({codomain.max_len})"
    if isinstance(codomain, Natural):
        return f"nat({codomain.max_digits})"
    if isinstance(codomain, IntRange):
        return f"int[{_bound_text(codomain.lo)}, {_bound_text(codomain.hi)}]"
    if isinstance(codomain, EnumLiterals):
        return "{" + ", ".join(_literal(v) for v in codomain.values) + "}"
    raise ValueError(f"cannot serialize codomain {codomain!r}")


def _trailer_text(c: Constraint) -> str:
    out = ""
    if c.description:
        out += " " + _quote(c.description)
    for table, text in c.messages:
        where = f"on {table} " if table else ""
        out += f" message {where}{_quote(text)}"
    return out


def _constraint_text(c: Constraint) -> str:
    if isinstance(c, Key):
        names = [ref.name for ref in c.product]
        label = "" if c.label == _auto_key_label(c.host_set(), names) else c.label + " "
        return f"key {label}{c.host_set()}({' . '.join(names)}){_trailer_text(c)};"
    if isinstance(c, Range):
        return f"range {c.mapping} [{_bound_text(c.lo)}, {_bound_text(c.hi)}]{_trailer_text(c)};"  # type: ignore[arg-type]
    if isinstance(c, Default):
        value = _literal(c.value) if isinstance(c.value, str) else str(c.value)
        return f"default {c.mapping} {value}{_trailer_text(c)};"
    head = f"constraint {c.label} {c.kind}"
    if isinstance(c, TupleCheck):
        return f"{head} {c.host} {_quote(to_text(c.body.body, qualified=True))}{_trailer_text(c)};"
    if isinstance(c, ObjectConstraint):
        return f"{head} {_quote(to_text(c.body, qualified=True))}{_trailer_text(c)};"
    if isinstance(c, NullReflexive):
        return f"{head} {c.outer} o {c.inner}{_trailer_text(c)};"
    if isinstance(c, Acyclic):
        return f"{head} {c.mapping}{_trailer_text(c)};"
    if isinstance(c, Existence):
        return f"{head} {c.if_mapping} -> {c.then_mapping}{_trailer_text(c)};"
    if isinstance(c, NoOverlap):
        group = f" group {', '.join(str(g) for g in c.group)}" if c.group else ""
        return (
            f"{head} {c.set} distinct {c.distinct}{group} interval {c.lo}, {c.hi}"
            f"{_trailer_text(c)};"
        )
    raise ValueError(f"cannot serialize constraint {c!r}")


def serialize_scheme(scheme: MdmScheme) -> str:
    """Render ``scheme`` as ``.mdm`` source; synthesized elements are omitted."""
    lines: list[str] = []
    for s in scheme.sets:
        parts = [f"set {s.name} {s.kind.value}"]
        if s.card_exponent != ObjectSet.__dataclass_fields__["card_exponent"].default:
            parts.append(f"card {s.card_exponent}")
        if s.supersets:
            parts.append("subset-of " + ", ".join(s.supersets))
        if s.values:
            parts.append("values {" + ", ".join(_literal(v) for v in s.values) + "}")
        if s.view_body is not None:
            parts.append("view " + _quote(s.view_body))
        lines.append(" ".join(parts) + ";")
    for m in scheme.mappings:
        if m.kind in (MappingKind.OBJECT_IDENTIFIER, MappingKind.CANONICAL_INCLUSION):
            continue
        text = f"fun {m.name} : {m.domain} -> {_codomain_text(m.codomain)}"
        if m.kind is MappingKind.CANONICAL_PROJECTION:
            text += " role"
        elif m.total:
            text += " total"
        if m.compute is not None:
            text += " computed " + _quote(term_to_text(m.compute, qualified=True))  # type: ignore[arg-type]
        lines.append(text + ";")
    for c in scheme.declared_constraints():
        lines.append(_constraint_text(c))
    return "\n".join(lines) + ("\n" if lines else "")


def load_scheme(path) -> MdmScheme:
    from pathlib import Path

    path = Path(path)
    return parse_scheme(path.read_text(encoding="utf-8"), str(path))


__all__ = [
    "FormulaParseError",
    "ParseError",
    "SchemeParseError",
    "SourceSpan",
    "load_scheme",
    "parse_formula",
    "parse_scheme",
    "parse_term",
    "serialize_scheme",
    "codomain_tag",
]
