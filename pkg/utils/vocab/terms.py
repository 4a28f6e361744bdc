"""Terms, atoms and their evaluation under a valuation.

Constants are 0-ary function symbols; a resolved constant is kept as a
``Const`` node carrying its value and sort. ``Pre`` wraps a term whose value is
read from the state a move starts in; it is resolved by ``instantiate_term``
before evaluation.
"""
from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Any, Callable, Dict, Mapping, NamedTuple, Optional, Tuple

from utils.errors import PartialApplication, SortError, UnknownSymbol
from utils.vocab.sorts import BOOL, Sort, format_value


class Term:
    __slots__ = ()

    def variables(self) -> frozenset:
        raise NotImplementedError


@dataclass(frozen=True)
class Var(Term):
    name: str
    sort: Sort

    def variables(self):
        return frozenset((self.name,))

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Const(Term):
    value: Any
    sort: Optional[Sort] = None

    def variables(self):
        return frozenset()

    def __str__(self):
        return format_value(self.value)


@dataclass(frozen=True)
class Apply(Term):
    symbol: str
    args: Tuple[Term, ...]
    sort: Optional[Sort] = None

    def variables(self):
        return frozenset().union(*(a.variables() for a in self.args))

    def __str__(self):
        if self.symbol in INFIX and len(self.args) == 2:
            return f"({self.args[0]} {self.symbol} {self.args[1]})"
        return f"{self.symbol}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Pre(Term):
    term: Term

    @property
    def sort(self):
        return getattr(self.term, "sort", None)

    def variables(self):
        return self.term.variables()

    def __str__(self):
        return f"pre({self.term})"


# --- Atoms ---

class Atom:
    __slots__ = ()


@dataclass(frozen=True)
class Equals(Atom):
    left: Term
    right: Term

    def variables(self):
        return self.left.variables() | self.right.variables()

    def terms(self):
        return (self.left, self.right)

    def __str__(self):
        return f"{self.left} = {self.right}"


@dataclass(frozen=True)
class Predicate(Atom):
    symbol: str
    args: Tuple[Term, ...]

    def variables(self):
        return frozenset().union(*(a.variables() for a in self.args))

    def terms(self):
        return self.args

    def __str__(self):
        if len(self.args) == 2:
            return f"{self.args[0]} {self.symbol} {self.args[1]}"
        return f"{self.symbol}({', '.join(str(a) for a in self.args)})"


def simple_atom(var: Var, value) -> Equals:
    return Equals(var, Const(value, var.sort))


def as_simple(atom: Atom):
    """Return (name, value) when ``atom`` has the shape ``v = c``, else None."""
    if isinstance(atom, Equals):
        left, right = atom.left, atom.right
        if isinstance(left, Var) and isinstance(right, Const):
            return left.name, right.value
        if isinstance(right, Var) and isinstance(left, Const):
            return right.name, left.value
    return None


# --- Built-in symbols ---

class FunctionSymbol(NamedTuple):
    arity: int
    family: str
    evaluator: Callable


class PredicateSymbol(NamedTuple):
    arity: int
    family: str
    evaluator: Callable


INFIX = {"+", "-"}

FUNCTIONS: Dict[str, FunctionSymbol] = {
    "+": FunctionSymbol(2, "int", operator.add),
    "-": FunctionSymbol(2, "int", operator.sub),
    "not": FunctionSymbol(1, "bool", operator.not_),
    "and": FunctionSymbol(2, "bool", lambda a, b: a and b),
    "or": FunctionSymbol(2, "bool", lambda a, b: a or b),
}

PREDICATES: Dict[str, PredicateSymbol] = {
    "<": PredicateSymbol(2, "int", operator.lt),
    ">": PredicateSymbol(2, "int", operator.gt),
    "<=": PredicateSymbol(2, "int", operator.le),
    ">=": PredicateSymbol(2, "int", operator.ge),
}


def make_apply(symbol: str, *args: Term) -> Apply:
    """Build an application, taking the result sort from the first sorted argument."""
    if symbol not in FUNCTIONS:
        raise UnknownSymbol(f"Unknown function symbol '{symbol}'")
    if FUNCTIONS[symbol].family == "bool":
        return Apply(symbol, tuple(args), BOOL)
    sort = next((a.sort for a in args if getattr(a, "sort", None) is not None), None)
    return Apply(symbol, tuple(args), sort)


# --- Evaluation ---

def eval_term(t: Term, s: Mapping[str, Any]):
    if isinstance(t, Var):
        try:
            return s[t.name]
        except KeyError:
            raise UnknownSymbol(f"Variable '{t.name}' has no value in this state")
    if isinstance(t, Const):
        return t.value
    if isinstance(t, Apply):
        symbol = FUNCTIONS.get(t.symbol)
        if symbol is None:
            raise UnknownSymbol(f"Unknown function symbol '{t.symbol}'")
        value = symbol.evaluator(*(eval_term(a, s) for a in t.args))
        if t.sort is not None and value not in t.sort:
            raise PartialApplication(
                f"{t} = {format_value(value)} lies outside {t.sort}")
        return value
    if isinstance(t, Pre):
        raise UnknownSymbol(f"{t} needs a pre-state; instantiate it first")
    raise TypeError(f"Not a term: {t!r}")


def eval_atom(g: Atom, s: Mapping[str, Any]) -> bool:
    if isinstance(g, Equals):
        return eval_term(g.left, s) == eval_term(g.right, s)
    if isinstance(g, Predicate):
        symbol = PREDICATES.get(g.symbol)
        if symbol is None:
            raise UnknownSymbol(f"Unknown predicate symbol '{g.symbol}'")
        return bool(symbol.evaluator(*(eval_term(a, s) for a in g.args)))
    raise TypeError(f"Not an atom: {g!r}")


def instantiate_term(t: Term, pre_state: Mapping[str, Any]) -> Term:
    """Replace every ``pre(u)`` by the constant value of ``u`` in ``pre_state``."""
    if isinstance(t, Pre):
        return Const(eval_term(t.term, pre_state), t.sort)
    if isinstance(t, Apply):
        return Apply(t.symbol, tuple(instantiate_term(a, pre_state) for a in t.args), t.sort)
    return t


def instantiate_atom(g: Atom, pre_state: Mapping[str, Any]) -> Atom:
    if isinstance(g, Equals):
        return Equals(instantiate_term(g.left, pre_state), instantiate_term(g.right, pre_state))
    return Predicate(g.symbol, tuple(instantiate_term(a, pre_state) for a in g.args))


def has_pre(t) -> bool:
    if isinstance(t, Pre):
        return True
    if isinstance(t, Apply):
        return any(has_pre(a) for a in t.args)
    if isinstance(t, (Equals, Predicate)):
        return any(has_pre(a) for a in t.terms())
    return False


def substitute_term(t: Term, mapping: Mapping[str, Term]) -> Term:
    if isinstance(t, Var):
        return mapping.get(t.name, t)
    if isinstance(t, Apply):
        return Apply(t.symbol, tuple(substitute_term(a, mapping) for a in t.args), t.sort)
    if isinstance(t, Pre):
        return Pre(substitute_term(t.term, mapping))
    return t


def substitute_atom(g: Atom, mapping: Mapping[str, Term]) -> Atom:
    if isinstance(g, Equals):
        return Equals(substitute_term(g.left, mapping), substitute_term(g.right, mapping))
    return Predicate(g.symbol, tuple(substitute_term(a, mapping) for a in g.args))


# --- Symbol table ---

class SymbolTable:
    """Declared variables plus the fixed built-in function and predicate symbols."""

    def __init__(self, variables: Optional[Mapping[str, Sort]] = None):
        self.variables: Dict[str, Sort] = dict(variables or {})
        self.functions = FUNCTIONS
        self.predicates = PREDICATES

    def declare(self, name: str, sort: Sort) -> Var:
        if name in self.variables:
            raise SortError(f"Variable '{name}' declared twice")
        self.variables[name] = sort
        return Var(name, sort)

    def lookup(self, name: str, scope: Optional[str] = None) -> Optional[Var]:
        if scope is not None and f"{scope}.{name}" in self.variables:
            name = f"{scope}.{name}"
        sort = self.variables.get(name)
        return Var(name, sort) if sort is not None else None

    def sort_of(self, t: Term) -> Optional[Sort]:
        """Check ``t`` is well-sorted and return its sort (None for a bare integer literal)."""
        if isinstance(t, Var):
            if t.name not in self.variables:
                raise SortError(f"Undeclared variable '{t.name}'")
            return self.variables[t.name]
        if isinstance(t, Const):
            return t.sort
        if isinstance(t, Pre):
            return self.sort_of(t.term)
        if isinstance(t, Apply):
            symbol = self.functions.get(t.symbol)
            if symbol is None:
                raise UnknownSymbol(f"Unknown function symbol '{t.symbol}'")
            if len(t.args) != symbol.arity:
                raise SortError(f"'{t.symbol}' expects {symbol.arity} arguments")
            for a in t.args:
                sort = self.sort_of(a)
                family = sort.family if sort is not None else "int"
                if family != symbol.family:
                    raise SortError(f"'{t.symbol}' applied to {a} of sort {sort}")
            return t.sort
        raise TypeError(f"Not a term: {t!r}")

    def check_atom(self, g: Atom) -> None:
        if isinstance(g, Equals):
            left, right = self.sort_of(g.left), self.sort_of(g.right)
            if left is not None and right is not None and left.family != right.family:
                raise SortError(f"'{g}' compares {left} with {right}")
            return
        symbol = self.predicates.get(g.symbol)
        if symbol is None:
            raise UnknownSymbol(f"Unknown predicate symbol '{g.symbol}'")
        for a in g.args:
            sort = self.sort_of(a)
            family = sort.family if sort is not None else "int"
            if family != symbol.family:
                raise SortError(f"'{g.symbol}' applied to {a} of sort {sort}")
