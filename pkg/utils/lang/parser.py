"""Parser for the ``.cp`` concurrent-program language.

    shared v1, v2: {0..3} with v1 = 0;
    expose loc2;
    process P1 {
        local y: bool with y = false;
        a: if (v1 < 1) b, halt;
        b: when v2 = 0 -> { v1, v2 := v2, v1 + 1; if (y) y := false; }
        halt: goto halt
    }
"""
from __future__ import annotations

import logging
from typing import Dict, List, Optional, Tuple

import pyparsing as pp

from utils.errors import DuplicateName, SortError, UnknownLabel
from utils.lang.program import (CCR, Assign, Block, ConcurrentProgram,
                                Declaration, Goto, GuardedAssign, IfGoto,
                                Process, statement_labels)
from utils.vocab.expressions import (ExpressionGrammar, ExpressionResolver,
                                     Raw, parse_text)
from utils.vocab.sorts import BOOL, Sort, location_sort
from utils.vocab.terms import SymbolTable

logger = logging.getLogger(__name__)


def _raw(kind):
    def action(s, loc, t):
        return Raw(kind, tuple(t), (), loc)
    return action


class ProgramGrammar:
    def __init__(self):
        expr = ExpressionGrammar(temporal=False)
        ident = expr.ident
        term, guard = expr.term, expr.expression
        semi = pp.Suppress(";")
        lpar, rpar = pp.Suppress("("), pp.Suppress(")")
        lbrace, rbrace = pp.Suppress("{"), pp.Suppress("}")
        colon = pp.Suppress(pp.Regex(r":(?!=)"))
        K = pp.Keyword

        integer = pp.Regex(r"-?\d+").set_parse_action(lambda t: int(t[0]))
        boolean = (K("true") | K("false")).set_parse_action(lambda t: t[0] == "true")
        value = integer | boolean | ident
        names = pp.Group(pp.DelimitedList(ident))

        domain = (
            (lbrace + integer + pp.Suppress("..") + integer + rbrace).set_parse_action(
                lambda s, loc, t: Raw("range", (t[0], t[1]), (), loc))
            | (lbrace + pp.DelimitedList(value) + rbrace).set_parse_action(
                lambda s, loc, t: Raw("enum", tuple(t), (), loc))
            | K("bool").set_parse_action(lambda s, loc, t: Raw("bool", None, (), loc))
        )
        init = pp.Group(ident + pp.Suppress("=") + value)
        inits = pp.Group(pp.Optional(pp.Suppress(K("with")) + pp.DelimitedList(init)))

        shared = (pp.Suppress(K("shared")) + names + colon + domain + inits + semi).set_parse_action(
            lambda s, loc, t: Raw("shared", (tuple(t[0]), t[1], tuple(tuple(i) for i in t[2])), (), loc))
        local = (pp.Suppress(K("local")) + names + colon + domain + inits + semi).set_parse_action(
            lambda s, loc, t: Raw("local", (tuple(t[0]), t[1], tuple(tuple(i) for i in t[2])), (), loc))
        expose = (pp.Suppress(K("expose")) + names + semi).set_parse_action(
            lambda s, loc, t: Raw("expose", tuple(t[0]), (), loc))

        assign = (pp.Group(pp.DelimitedList(ident)) + pp.Suppress(":=")
                  + pp.Group(pp.DelimitedList(term))).set_parse_action(
            lambda s, loc, t: Raw("assign", tuple(t[0]), tuple(t[1]), loc))
        goto = (pp.Suppress(K("goto")) + ident).set_parse_action(
            lambda s, loc, t: Raw("goto", t[0], (), loc))
        branch = (pp.Suppress(K("if")) + lpar + guard + rpar + ident + pp.Suppress(",") + ident).set_parse_action(
            lambda s, loc, t: Raw("if", (t[1], t[2]), (t[0],), loc))
        guarded = pp.Forward()
        guarded <<= (pp.Suppress(K("if")) + lpar + guard + rpar + assign
                     + pp.Optional(pp.Suppress(K("else")) + (guarded | assign))).set_parse_action(
            lambda s, loc, t: Raw("guarded", None, tuple(t), loc))

        statement = pp.Forward()
        body = lbrace + pp.Group(pp.ZeroOrMore(statement)) + rbrace
        atomic = (pp.Suppress(K("atomic")) + body).set_parse_action(
            lambda s, loc, t: Raw("atomic", None, tuple(t[0]), loc))
        statement <<= (atomic | guarded | branch | goto | assign) + pp.Optional(semi)

        when = (pp.Suppress(K("when")) + guard + pp.Suppress("->") + body).set_parse_action(
            lambda s, loc, t: Raw("when", None, (t[0],) + tuple(t[1]), loc))
        instruction = when | atomic | branch | goto | assign
        labeled = (ident + colon + instruction + pp.Optional(semi)).set_parse_action(
            lambda s, loc, t: Raw("labeled", t[0], (t[1],), loc))

        process = (pp.Suppress(K("process")) + ident + lbrace + pp.Group(pp.ZeroOrMore(local))
                   + pp.Group(pp.OneOrMore(labeled)) + rbrace).set_parse_action(
            lambda s, loc, t: Raw("process", t[0], (tuple(t[1]), tuple(t[2])), loc))

        self.program = pp.Group(pp.ZeroOrMore(shared | expose)) + pp.Group(pp.OneOrMore(process))
        self.program.ignore(pp.cpp_style_comment)
        self.program.ignore(pp.python_style_comment)


_GRAMMAR = None


def _grammar() -> ProgramGrammar:
    global _GRAMMAR
    if _GRAMMAR is None:
        _GRAMMAR = ProgramGrammar()
    return _GRAMMAR


class ProgramBuilder:
    """Resolves the parsed structure into a checked ConcurrentProgram."""

    def __init__(self, text: str, source: Optional[str] = None):
        self.text = text
        self.source = source

    def fail(self, cls, message, loc):
        raise cls(message, line=pp.lineno(loc, self.text), column=pp.col(loc, self.text),
                  source=self.source)

    def sort_of(self, raw: Raw, label: str) -> Sort:
        if raw.kind == "bool":
            return BOOL
        if raw.kind == "range":
            lo, hi = raw.value
            if hi < lo:
                self.fail(SortError, f"Empty domain for {label}", raw.loc)
            return Sort.range(lo, hi)
        try:
            return Sort.enumeration(raw.value)
        except ValueError as e:
            self.fail(SortError, str(e), raw.loc)

    def declarations(self, raw: Raw, owner: Optional[str], taken: Dict[str, int]) -> List[Declaration]:
        names, domain, inits = raw.value
        sort = self.sort_of(domain, ", ".join(names))
        prefix = f"{owner}." if owner else ""
        values = {}
        for name, value in inits:
            values[name] = value
        decls = []
        for name in names:
            full = prefix + name
            if full in taken or (owner and name in taken):
                self.fail(DuplicateName, f"Variable '{name}' declared twice", raw.loc)
            taken[full] = raw.loc
            init, shadow = values.pop(name, None), None
            if isinstance(init, str) and init not in sort.domain:
                shadow, init = init, None
            if init is not None and init not in sort:
                self.fail(SortError, f"Initial value {init} of '{name}' is outside {sort}", raw.loc)
            decls.append(Declaration(full, sort, init, owner, shadow))
        if values:
            self.fail(SortError, f"Initializer for undeclared variable '{next(iter(values))}'", raw.loc)
        return decls

    def build(self, parsed) -> ConcurrentProgram:
        decl_raws, process_raws = parsed[0], parsed[1]
        taken: Dict[str, int] = {}
        shared: List[Declaration] = []
        exposed_raw: List[Raw] = []
        for raw in decl_raws:
            if raw.kind == "expose":
                exposed_raw.append(raw)
            else:
                shared.extend(self.declarations(raw, None, taken))

        # Locations and locals first, so guards may mention any control variable.
        skeletons = []
        seen_processes = set()
        for index, raw in enumerate(process_raws, start=1):
            name = raw.value
            if name in seen_processes:
                self.fail(DuplicateName, f"Process '{name}' declared twice", raw.loc)
            seen_processes.add(name)
            local_raws, labeled = raw.children
            locals_ = [d for lr in local_raws for d in self.declarations(lr, name, taken)]
            labels = []
            for stmt in labeled:
                if stmt.value in labels:
                    self.fail(DuplicateName, f"Label '{stmt.value}' used twice in {name}", stmt.loc)
                labels.append(stmt.value)
            skeletons.append((index, name, tuple(locals_), tuple(labels), labeled))

        symbols = SymbolTable({d.name: d.sort for d in shared})
        for index, name, locals_, labels, _ in skeletons:
            symbols.declare(f"loc{index}", location_sort(name, labels))
            for d in locals_:
                symbols.declare(d.name, d.sort)
        for d in shared:
            if d.shadow_of is not None:
                if d.shadow_of not in symbols.variables:
                    self.fail(SortError, f"'{d.name}' mirrors undeclared variable '{d.shadow_of}'", 0)
                if symbols.variables[d.shadow_of].family != d.sort.family:
                    self.fail(SortError, f"'{d.name}' and '{d.shadow_of}' have different sorts", 0)

        exposed = []
        for raw in exposed_raw:
            for name in raw.value:
                if name not in symbols.variables:
                    self.fail(SortError, f"Cannot expose undeclared variable '{name}'", raw.loc)
                exposed.append(name)

        processes = []
        for index, name, locals_, labels, labeled in skeletons:
            visible = {d.name for d in shared} | {d.name for d in locals_} | set(exposed)
            resolver = ExpressionResolver(symbols, self.text, self.source, scope=name, visible=visible)
            instructions = tuple(self.instruction(stmt.children[0], resolver) for stmt in labeled)
            process = Process(name, index, locals_, labels, instructions)
            self.check_labels(process, labeled)
            processes.append(process)

        program = ConcurrentProgram(tuple(shared), tuple(processes), tuple(exposed))
        logger.debug(f"Parsed program with {len(processes)} processes and "
                     f"{len(program.data_variables)} data variables")
        return program

    def check_labels(self, process: Process, labeled) -> None:
        for (label, instr), stmt in zip(process.body().items(), labeled):
            for target in statement_labels(instr):
                if target not in process.labels:
                    self.fail(UnknownLabel, f"Unknown label '{target}' in {process.name}", stmt.loc)
            if process.next_label(label) is None and _may_fall_through(instr):
                self.fail(UnknownLabel, f"'{label}' is the last location of {process.name} "
                          f"but its instruction falls through", stmt.loc)

    def instruction(self, raw: Raw, resolver: ExpressionResolver):
        if raw.kind == "when":
            return CCR(resolver.guard(raw.children[0]),
                       tuple(self.statement(c, resolver) for c in raw.children[1:]))
        return self.statement(raw, resolver)

    def statement(self, raw: Raw, resolver: ExpressionResolver):
        if raw.kind == "goto":
            return Goto(raw.value)
        if raw.kind == "if":
            return IfGoto(resolver.guard(raw.children[0]), raw.value[0], raw.value[1])
        if raw.kind == "guarded":
            orelse = self.statement(raw.children[2], resolver) if len(raw.children) > 2 else None
            return GuardedAssign(resolver.guard(raw.children[0]), self.assign(raw.children[1], resolver), orelse)
        if raw.kind == "atomic":
            return Block(tuple(self.statement(c, resolver) for c in raw.children))
        if raw.kind == "assign":
            return self.assign(raw, resolver)
        self.fail(SortError, f"Unexpected {raw.kind} statement", raw.loc)

    def assign(self, raw: Raw, resolver: ExpressionResolver) -> Assign:
        names, sources = raw.value, raw.children
        if len(names) != len(sources):
            self.fail(SortError, "Assignment needs as many sources as targets", raw.loc)
        if len(set(names)) != len(names):
            self.fail(SortError, "Assignment targets must be distinct", raw.loc)
        targets = []
        for name in names:
            var = resolver.variable(name, raw.loc)
            if var is None:
                self.fail(SortError, f"Undeclared variable '{name}'", raw.loc)
            if var.name.startswith("loc") and var.sort.family.startswith("location_"):
                self.fail(SortError, f"Control variable '{var.name}' cannot be assigned", raw.loc)
            targets.append(var)
        terms = []
        for target, source in zip(targets, sources):
            t = resolver.term(source, target.sort)
            sort = resolver.symbols.sort_of(t)
            if sort is not None and sort.family != target.sort.family:
                self.fail(SortError, f"Cannot assign {t} of sort {sort} to '{target.name}'", raw.loc)
            terms.append(t)
        return Assign(tuple(targets), tuple(terms))


def _may_fall_through(instr) -> bool:
    if isinstance(instr, (Goto, IfGoto)):
        return False
    if isinstance(instr, (Block, CCR)):
        stmts = instr.statements if isinstance(instr, Block) else instr.body
        for st in stmts:
            if isinstance(st, (Goto, IfGoto)):
                return False
            if isinstance(st, Block) and not _may_fall_through(st):
                return False
    return True


def parse_program(text: str, source: Optional[str] = None) -> ConcurrentProgram:
    """
    Parse and check a ``.cp`` program.

    Args:
        text: Program text.
        source: File name used in diagnostics.

    Returns:
        ConcurrentProgram: The checked AST.

    Raises:
        ParseError: SyntaxError_, SortError, UnknownLabel or DuplicateName with line and column.
    """
    parsed = parse_text(_grammar().program, text, source)
    return ProgramBuilder(text, source).build(parsed)
