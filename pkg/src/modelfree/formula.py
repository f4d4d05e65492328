"""A small additive formula language (``y ~ x1 + x2 - 1``) and design matrices.

Grammar::

    formula   := name "~" term_expr
    term_expr := ("." | "0" | "1" | name) ("+" name)* ("-" "1")?
    name      := [A-Za-z_][A-Za-z0-9_.]*  |  `any text without backticks`

Whitespace is insignificant. ``.`` stands for every column except the
response and is expanded against a Dataset in :func:`build_design`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import DuplicateTerm, FormulaSyntaxError, ResponseInTerms, TooFewRows, UnknownColumn
from .tabular import Dataset

INTERCEPT = "(Intercept)"
DOT = "."

_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")


@dataclass(frozen=True)
class ModelSpec:
    response: str
    terms: tuple[str, ...]
    intercept: bool = True

    def __post_init__(self):
        if self.response in self.terms:
            raise ResponseInTerms(self.response)
        seen = set()
        for t in self.terms:
            if t in seen:
                raise DuplicateTerm(t)
            seen.add(t)
        if not self.terms and not self.intercept:
            raise FormulaSyntaxError(0, "model has no terms and no intercept")

    def expand(self, columns: tuple[str, ...]) -> "ModelSpec":
        """Replace ``.`` with the non-response columns, in column order."""
        if DOT not in self.terms:
            return self
        explicit = [t for t in self.terms if t != DOT]
        out: list[str] = []
        for t in self.terms:
            if t == DOT:
                out.extend(c for c in columns if c != self.response and c not in explicit)
            else:
                out.append(t)
        return ModelSpec(self.response, tuple(out), self.intercept)


@dataclass(frozen=True)
class DesignMatrix:
    y: np.ndarray
    X: np.ndarray
    term_names: tuple[str, ...]
    response: str = "y"

    def __post_init__(self):
        y = np.array(self.y, dtype=np.float64).reshape(-1)
        X = np.array(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != y.size:
            raise ValueError("X and y have different numbers of rows")
        if X.shape[1] != len(self.term_names):
            raise ValueError("term_names does not match the number of columns")
        if X.shape[1] < 1:
            raise ValueError("design needs at least one column")
        if X.shape[0] < X.shape[1]:
            raise TooFewRows(f"n = {X.shape[0]} rows is fewer than d = {X.shape[1]} columns")
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def has_intercept(self) -> bool:
        return self.term_names[0] == INTERCEPT

    def index(self, term: str | int) -> int:
        if isinstance(term, (int, np.integer)):
            if not 0 <= term < self.d:
                raise IndexError(f"coefficient index {term} out of range")
            return int(term)
        try:
            return self.term_names.index(term)
        except ValueError:
            raise UnknownColumn(term) from None

    def take(self, rows: np.ndarray) -> "DesignMatrix":
        return DesignMatrix(self.y[rows], self.X[rows], self.term_names, self.response)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            found = self.peek() or "end of input"
            raise FormulaSyntaxError(self.pos, f"expected {ch!r}, found {found!r}")
        self.pos += 1

    def name(self) -> str:
        self.skip_ws()
        if self.peek() == "`":
            end = self.text.find("`", self.pos + 1)
            if end < 0:
                raise FormulaSyntaxError(self.pos, "unterminated backtick name")
            value = self.text[self.pos + 1 : end]
            if not value:
                raise FormulaSyntaxError(self.pos, "empty backtick name")
            self.pos = end + 1
            return value
        m = _NAME.match(self.text, self.pos)
        if not m:
            raise FormulaSyntaxError(self.pos, "expected a column name")
        self.pos = m.end()
        return m.group()

    def literal(self, digit: str) -> bool:
        """Consume a standalone ``0``/``1`` token."""
        self.skip_ws()
        if self.text.startswith(digit, self.pos):
            nxt = self.text[self.pos + 1 : self.pos + 2]
            if not nxt or not (nxt.isalnum() or nxt in "_."):
                self.pos += 1
                return True
        return False


def parse_formula(text: str) -> ModelSpec:
    p = _Parser(text)
    response = p.name()
    p.expect("~")
    intercept = True
    terms: list[str] = []

    p.skip_ws()
    first_pos = p.pos
    # names never start with '.', so a leading dot is always the wildcard
    if p.peek() == DOT:
        p.pos += 1
        terms.append(DOT)
    elif p.literal("1"):
        pass
    elif p.literal("0"):
        intercept = False
    else:
        terms.append(p.name())

    while p.peek() == "+":
        p.pos += 1
        if p.peek() == DOT:
            p.pos += 1
            term = DOT
        else:
            term = p.name()
        if term in terms:
            raise DuplicateTerm(term)
        terms.append(term)

    if p.peek() == "-":
        p.pos += 1
        if not p.literal("1"):
            raise FormulaSyntaxError(p.pos, "only '- 1' may follow a '-'")
        intercept = False

    if p.peek():
        raise FormulaSyntaxError(p.pos, f"unexpected {p.peek()!r}")
    if response in terms:
        raise ResponseInTerms(response)
    if not terms and not intercept:
        raise FormulaSyntaxError(first_pos, "model has no terms and no intercept")
    return ModelSpec(response, tuple(terms), intercept)


def _quote(name: str) -> str:
    return name if name == DOT or _NAME.fullmatch(name) else f"`{name}`"


def render_formula(spec: ModelSpec) -> str:
    """Canonical text form; ``parse_formula(render_formula(s)) == s``."""
    if spec.terms:
        rhs = " + ".join(_quote(t) for t in spec.terms)
        if not spec.intercept:
            rhs += " - 1"
    else:
        rhs = "1"
    return f"{_quote(spec.response)} ~ {rhs}"


def build_design(spec: ModelSpec, data: Dataset) -> DesignMatrix:
    spec = spec.expand(data.names)
    y = data.column(spec.response)
    cols = [data.column(t) for t in spec.terms]
    names = list(spec.terms)
    if spec.intercept:
        cols.insert(0, np.ones(data.n_rows))
        names.insert(0, INTERCEPT)
    if not cols:
        raise FormulaSyntaxError(0, "no regressors after expansion")
    X = np.column_stack(cols)
    return DesignMatrix(y, X, tuple(names), spec.response)
