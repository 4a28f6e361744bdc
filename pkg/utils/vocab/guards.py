"""Propositional guards over atoms: CCR guards, condition tests and their cubes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

from utils.errors import PartialApplication
from utils.vocab.terms import (Atom, Var, as_simple, eval_atom, simple_atom,
                               substitute_atom)


class Guard:
    __slots__ = ()


@dataclass(frozen=True)
class Truth(Guard):
    value: bool

    def __str__(self):
        return "true" if self.value else "false"


@dataclass(frozen=True)
class Test(Guard):
    atom: Atom

    def __str__(self):
        return str(self.atom)


@dataclass(frozen=True)
class Neg(Guard):
    operand: Guard

    def __str__(self):
        if isinstance(self.operand, Test):
            return f"!({self.operand})"
        return f"!{self.operand}"


@dataclass(frozen=True)
class Conj(Guard):
    parts: Tuple[Guard, ...]

    def __str__(self):
        return "(" + " & ".join(str(p) for p in self.parts) + ")"


@dataclass(frozen=True)
class Disj(Guard):
    parts: Tuple[Guard, ...]

    def __str__(self):
        return "(" + " | ".join(str(p) for p in self.parts) + ")"


TRUE = Truth(True)
FALSE = Truth(False)


def conj(parts: Iterable[Guard]) -> Guard:
    parts = [p for p in parts if p != TRUE]
    if any(p == FALSE for p in parts):
        return FALSE
    if not parts:
        return TRUE
    return parts[0] if len(parts) == 1 else Conj(tuple(parts))


def disj(parts: Iterable[Guard]) -> Guard:
    parts = [p for p in parts if p != FALSE]
    if any(p == TRUE for p in parts):
        return TRUE
    if not parts:
        return FALSE
    return parts[0] if len(parts) == 1 else Disj(tuple(parts))


def eval_guard(g: Guard, s: Mapping) -> bool:
    """Evaluate ``g`` in ``s``; an atom whose terms leave their domain is false."""
    if isinstance(g, Truth):
        return g.value
    if isinstance(g, Test):
        try:
            return eval_atom(g.atom, s)
        except PartialApplication:
            return False
    if isinstance(g, Neg):
        return not eval_guard(g.operand, s)
    if isinstance(g, Conj):
        return all(eval_guard(p, s) for p in g.parts)
    if isinstance(g, Disj):
        return any(eval_guard(p, s) for p in g.parts)
    raise TypeError(f"Not a guard: {g!r}")


def guard_atoms(g: Guard) -> List[Atom]:
    if isinstance(g, Test):
        return [g.atom]
    if isinstance(g, Neg):
        return guard_atoms(g.operand)
    if isinstance(g, (Conj, Disj)):
        return [a for p in g.parts for a in guard_atoms(p)]
    return []


def guard_variables(g: Guard) -> FrozenSet[str]:
    return frozenset().union(*(a.variables() for a in guard_atoms(g)))


def guard_sorts(g: Guard) -> Dict[str, object]:
    """Sorts of the variables a guard mentions, read off its Var nodes."""
    found = {}

    def visit(t):
        if isinstance(t, Var):
            found[t.name] = t.sort
        for child in getattr(t, "args", ()):
            visit(child)
        if hasattr(t, "term"):
            visit(t.term)

    for atom in guard_atoms(g):
        for t in atom.terms():
            visit(t)
    return found


def substitute_guard(g: Guard, mapping) -> Guard:
    if isinstance(g, Test):
        return Test(substitute_atom(g.atom, mapping))
    if isinstance(g, Neg):
        return Neg(substitute_guard(g.operand, mapping))
    if isinstance(g, Conj):
        return Conj(tuple(substitute_guard(p, mapping) for p in g.parts))
    if isinstance(g, Disj):
        return Disj(tuple(substitute_guard(p, mapping) for p in g.parts))
    return g


# --- Cubes ---

Cube = FrozenSet[Tuple[str, object]]


def cube_guard(values: Mapping, variables: Mapping[str, Var]) -> Guard:
    """Conjunction of simple atoms ``v = value`` in sorted variable order."""
    return conj(Test(simple_atom(variables[name], values[name])) for name in sorted(values))


def guard_cubes(g: Guard) -> Optional[List[Dict[str, object]]]:
    """Read ``g`` as a disjunction of simple-atom conjunctions, or None if it has another shape."""
    if g == FALSE:
        return []
    if g == TRUE:
        return [{}]
    disjuncts = g.parts if isinstance(g, Disj) else (g,)
    cubes = []
    for d in disjuncts:
        literals = d.parts if isinstance(d, Conj) else (d,)
        cube = {}
        for lit in literals:
            if lit == TRUE:
                continue
            if not isinstance(lit, Test):
                return None
            simple = as_simple(lit.atom)
            if simple is None:
                return None
            name, value = simple
            if name in cube and cube[name] != value:
                cube = None
                break
            cube[name] = value
        if cube is not None:
            cubes.append(cube)
    return cubes
