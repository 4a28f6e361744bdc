"""Shared pyparsing grammar for terms and boolean expressions.

Both the program parser and the specification parser build on the same term
and comparison syntax. Parsing produces ``Raw`` nodes that keep their source
offset; ``ExpressionResolver`` then turns them into sorted terms and guards
against a symbol table, reporting errors with line and column.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Optional, Tuple

import pyparsing as pp

from utils.errors import SortError, SyntaxError_, UnknownSymbol
from utils.vocab.guards import Guard, Neg, Test, conj, disj, TRUE, FALSE
from utils.vocab.sorts import BOOL, Sort
from utils.vocab.terms import (FUNCTIONS, Const, Equals, Pre, Predicate,
                               SymbolTable, Term, Var, make_apply)

pp.ParserElement.enable_packrat()

KEYWORDS = (
    "shared", "process", "local", "with", "expose", "goto", "if", "when",
    "atomic", "else", "true", "false", "pre", "A", "E", "U", "R", "bool",
)

TEMPORAL_OP = pp.Regex(r"(?:[AE]X\d*|[AE][FG])(?![A-Za-z0-9_.])")


@dataclass(frozen=True)
class Raw:
    kind: str
    value: Any
    children: Tuple["Raw", ...]
    loc: int


# --- Grammar construction ---

def _ident(temporal):
    base = pp.Regex(r"[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)?")
    reserved = pp.MatchFirst([pp.Keyword(k) for k in KEYWORDS])
    if temporal:
        return ~reserved + ~TEMPORAL_OP + base
    return ~reserved + base


def _fold_left(s, loc, toks):
    items = toks[0]
    node = items[0]
    for i in range(1, len(items), 2):
        node = Raw("bin", items[i], (node, items[i + 1]), loc)
    return node


def _fold_right(s, loc, toks):
    items = toks[0]
    node = items[-1]
    for i in range(len(items) - 2, 0, -2):
        node = Raw("bin", items[i], (items[i - 1], node), loc)
    return node


def _fold_unary(s, loc, toks):
    items = toks[0]
    node = items[-1]
    for op in reversed(items[:-1]):
        node = Raw("unary", op, (node,), loc)
    return node


class ExpressionGrammar:
    """Holds the term and boolean-expression grammars; ``temporal`` adds CTL operators."""

    def __init__(self, temporal: bool = False):
        self.temporal = temporal
        self.ident = _ident(temporal)
        lpar, rpar = pp.Suppress("("), pp.Suppress(")")

        integer = pp.Regex(r"\d+").set_parse_action(
            lambda s, loc, t: Raw("int", int(t[0]), (), loc))
        boolean = (pp.Keyword("true") | pp.Keyword("false")).set_parse_action(
            lambda s, loc, t: Raw("bool", t[0] == "true", (), loc))
        name = self.ident.copy().set_parse_action(
            lambda s, loc, t: Raw("id", t[0], (), loc))

        term = pp.Forward()
        call = (self.ident + lpar + pp.Group(pp.Optional(pp.DelimitedList(term))) + rpar).set_parse_action(
            lambda s, loc, t: Raw("call", t[0], tuple(t[1]), loc))
        operand = integer | boolean | call | name
        if temporal:
            pre = (pp.Keyword("pre") + lpar + term + rpar).set_parse_action(
                lambda s, loc, t: Raw("pre", None, (t[1],), loc))
            operand = pre | operand
        term <<= pp.infix_notation(operand, [
            (pp.Regex(r"[+]|-(?!>)"), 2, pp.OpAssoc.LEFT, _fold_left),
        ])
        self.term = term

        cmp_op = pp.Regex(r"<=|>=|!=|=|<(?!->)|>")
        comparison = (term + cmp_op + term).set_parse_action(
            lambda s, loc, t: Raw("cmp", t[1], (t[0], t[2]), loc))
        bool_operand = comparison | boolean | name

        unary = pp.Regex(r"!(?!=)")
        if temporal:
            unary = unary | TEMPORAL_OP
            formula = pp.Forward()
            lbr, rbr = pp.Suppress("["), pp.Suppress("]")
            path = (pp.one_of("A E") + lbr + formula + (pp.Keyword("U") | pp.Keyword("R"))
                    + formula + rbr).set_parse_action(
                lambda s, loc, t: Raw("path", t[0] + t[2], (t[1], t[3]), loc))
            bool_operand = path | bool_operand

        expression = pp.infix_notation(bool_operand, [
            (unary, 1, pp.OpAssoc.RIGHT, _fold_unary),
            (pp.Literal("&"), 2, pp.OpAssoc.LEFT, _fold_left),
            (pp.Regex(r"\|"), 2, pp.OpAssoc.LEFT, _fold_left),
            (pp.Literal("->"), 2, pp.OpAssoc.RIGHT, _fold_right),
            (pp.Literal("<->"), 2, pp.OpAssoc.LEFT, _fold_left),
        ])
        if temporal:
            formula <<= expression
            self.expression = formula
        else:
            self.expression = expression


def parse_text(element: pp.ParserElement, text: str, source: Optional[str] = None):
    """Parse the whole of ``text`` or raise SyntaxError_ with a position."""
    try:
        return element.parse_string(text, parse_all=True)
    except pp.ParseBaseException as e:
        raise SyntaxError_(f"Syntax error: {e.msg}", line=e.lineno, column=e.col, source=source)


# --- Resolution ---

class ExpressionResolver:
    """Turns ``Raw`` nodes into sorted terms and guards for one scope."""

    def __init__(self, symbols: SymbolTable, text: str, source: Optional[str] = None,
                 scope: Optional[str] = None, visible: Optional[Iterable[str]] = None,
                 allow_pre: bool = False):
        self.symbols = symbols
        self.text = text
        self.source = source
        self.scope = scope
        self.visible = set(visible) if visible is not None else None
        self.allow_pre = allow_pre

    def fail(self, cls, message, loc):
        raise cls(message, line=pp.lineno(loc, self.text), column=pp.col(loc, self.text),
                  source=self.source)

    # --- Terms ---

    def variable(self, name: str, loc: int) -> Optional[Var]:
        var = self.symbols.lookup(name, self.scope)
        if var is None:
            return None
        if self.visible is not None and var.name not in self.visible:
            self.fail(SortError, f"Variable '{var.name}' is not visible here", loc)
        return var

    def term(self, raw: Raw, expected: Optional[Sort] = None) -> Term:
        if raw.kind == "int":
            sort = expected if expected is not None and expected.family == "int" else None
            return Const(raw.value, sort)
        if raw.kind == "bool":
            return Const(raw.value, BOOL)
        if raw.kind == "id":
            var = self.variable(raw.value, raw.loc)
            if var is not None:
                return var
            if expected is not None and raw.value in expected.domain:
                return Const(raw.value, expected)
            self.fail(SortError, f"Undeclared variable '{raw.value}'", raw.loc)
        if raw.kind == "pre":
            if not self.allow_pre:
                self.fail(SyntaxError_, "pre(...) is only allowed in formulas", raw.loc)
            return Pre(self.term(raw.children[0], expected))
        if raw.kind == "call":
            if raw.value not in FUNCTIONS:
                self.fail(UnknownSymbol, f"Unknown function '{raw.value}'", raw.loc)
            args = [self.term(c) for c in raw.children]
            return self._checked(make_apply(raw.value, *args), raw.loc)
        if raw.kind == "bin" and raw.value in ("+", "-"):
            left = self.term(raw.children[0], expected)
            right = self.term(raw.children[1], expected)
            return self._checked(make_apply(raw.value, left, right), raw.loc)
        self.fail(SyntaxError_, "Expected a term", raw.loc)

    def _checked(self, t: Term, loc: int) -> Term:
        try:
            self.symbols.sort_of(t)
        except (SortError, UnknownSymbol) as e:
            self.fail(type(e), e.message, loc)
        return t

    def _unresolved_label(self, raw: Raw) -> bool:
        return raw.kind == "id" and self.symbols.lookup(raw.value, self.scope) is None

    def operands(self, left_raw: Raw, right_raw: Raw) -> Tuple[Term, Term]:
        """Resolve both sides of a comparison; a bare label takes the other side's sort."""
        if self._unresolved_label(left_raw) and not self._unresolved_label(right_raw):
            right = self.term(right_raw)
            return self.term(left_raw, self.symbols.sort_of(right)), right
        left = self.term(left_raw)
        return left, self.term(right_raw, self.symbols.sort_of(left))

    def atom(self, raw: Raw):
        """Return (atom, negated) for a comparison node."""
        left, right = self.operands(*raw.children)
        op = raw.value
        if op in ("=", "!="):
            atom = Equals(left, right)
        else:
            atom = Predicate(op, (left, right))
        try:
            self.symbols.check_atom(atom)
        except (SortError, UnknownSymbol) as e:
            self.fail(type(e), e.message, raw.loc)
        return atom, op == "!="

    def bool_variable(self, raw: Raw):
        var = self.variable(raw.value, raw.loc)
        if var is None:
            self.fail(SortError, f"Undeclared variable '{raw.value}'", raw.loc)
        if var.sort.family != "bool":
            self.fail(SortError, f"'{var.name}' is not boolean", raw.loc)
        return Equals(var, Const(True, BOOL))

    # --- Guards ---

    def guard(self, raw: Raw) -> Guard:
        if raw.kind == "bool":
            return TRUE if raw.value else FALSE
        if raw.kind == "id":
            return Test(self.bool_variable(raw))
        if raw.kind == "cmp":
            atom, negated = self.atom(raw)
            return Neg(Test(atom)) if negated else Test(atom)
        if raw.kind == "unary" and raw.value == "!":
            return Neg(self.guard(raw.children[0]))
        if raw.kind == "bin":
            left, right = (self.guard(c) for c in raw.children)
            if raw.value == "&":
                return conj([left, right])
            if raw.value == "|":
                return disj([left, right])
            if raw.value == "->":
                return disj([Neg(left), right])
            if raw.value == "<->":
                return disj([conj([left, right]), conj([Neg(left), Neg(right)])])
        self.fail(SyntaxError_, "Temporal operators are not allowed in guards", raw.loc)
