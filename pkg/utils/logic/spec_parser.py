"""Parser for ``.lctl`` temporal specifications.

A file holds one or more formulas separated by ``;``; they are conjoined.
"""
from __future__ import annotations

from typing import Optional

import pyparsing as pp

from utils.errors import SortError, SyntaxError_
from utils.logic.formula import (AR, AU, AX, ER, EU, EX, FALSE, TRUE, And,
                                 AtomLit, Formula, Iff, Implies, NegAtom, Not,
                                 Or, Unary)
from utils.vocab.expressions import (ExpressionGrammar, ExpressionResolver,
                                     Raw, parse_text)
from utils.vocab.terms import SymbolTable

_SPEC = None


def _grammar() -> pp.ParserElement:
    global _SPEC
    if _SPEC is None:
        expression = ExpressionGrammar(temporal=True).expression
        _SPEC = pp.DelimitedList(expression, ";") + pp.Optional(pp.Suppress(";"))
        _SPEC.ignore(pp.cpp_style_comment)
        _SPEC.ignore(pp.python_style_comment)
    return _SPEC


class FormulaBuilder:
    def __init__(self, resolver: ExpressionResolver, processes: Optional[int]):
        self.resolver = resolver
        self.processes = processes

    def build(self, raw: Raw) -> Formula:
        if raw.kind == "bool":
            return TRUE if raw.value else FALSE
        if raw.kind == "id":
            return AtomLit(self.resolver.bool_variable(raw))
        if raw.kind == "cmp":
            atom, negated = self.resolver.atom(raw)
            return NegAtom(atom) if negated else AtomLit(atom)
        if raw.kind == "unary":
            body = self.build(raw.children[0])
            op = raw.value
            if op == "!":
                return Not(body)
            if len(op) > 2:
                index = int(op[2:])
                if index < 1 or (self.processes is not None and index > self.processes):
                    self.resolver.fail(SortError, f"No process with index {index}", raw.loc)
                return (AX if op[0] == "A" else EX)(index, body)
            return Unary(op, body)
        if raw.kind == "bin":
            left, right = (self.build(c) for c in raw.children)
            return {"&": And, "|": Or, "->": Implies, "<->": Iff}[raw.value](left, right)
        if raw.kind == "path":
            left, right = (self.build(c) for c in raw.children)
            return {"AU": AU, "EU": EU, "AR": AR, "ER": ER}[raw.value](left, right)
        self.resolver.fail(SyntaxError_, "Expected a formula", raw.loc)


def parse_spec(text: str, symbols: SymbolTable, processes: Optional[int] = None,
               source: Optional[str] = None) -> Formula:
    """
    Parse a specification against the program's symbol table.

    Sugar stays in the returned AST; call ``to_nnf`` before deciding it.

    Raises:
        SyntaxError_: Malformed or empty input.
        SortError: Ill-sorted atom, undeclared variable or bad process index.
    """
    if not text.strip() or not _strip_comments(text).strip():
        raise SyntaxError_("Empty specification", line=1, column=1, source=source)
    parsed = parse_text(_grammar(), text, source)
    resolver = ExpressionResolver(symbols, text, source, allow_pre=True)
    builder = FormulaBuilder(resolver, processes)
    formula = None
    for raw in parsed:
        f = builder.build(raw)
        formula = f if formula is None else And(formula, f)
    return formula


def _strip_comments(text: str) -> str:
    return pp.python_style_comment.suppress().transform_string(
        pp.cpp_style_comment.suppress().transform_string(text))
