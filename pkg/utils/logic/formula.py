"""Formulas of CTL over typed atoms with process-indexed next-time operators.

The core variants are the NNF ones: truth constants, atoms and negated atoms,
binary conjunction and disjunction, ``AXi``/``EXi`` and the four path
operators ``AU``, ``EU``, ``AR``, ``ER``. Surface sugar (``!``, ``->``, ``<->``,
unindexed ``AX``/``EX``, ``AF``/``EF``/``AG``/``EG``) is kept in the AST for
printing and removed by ``to_nnf``.

Formulas compare and hash by their printed form, so sets of formulas and node
labels can be ordered canonically.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Set, Union

from utils.errors import PartialApplication
from utils.vocab.guards import Conj, Disj, Guard, Neg, Test, Truth
from utils.vocab.terms import Atom, eval_atom, has_pre, instantiate_atom


class Formula:
    _key: str

    def __eq__(self, other):
        return type(self) is type(other) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __lt__(self, other):
        return self._key < other._key

    def __str__(self):
        return self._key

    def __repr__(self):
        return f"<{type(self).__name__} {self._key}>"


def _frozen(cls):
    return dataclass(frozen=True, eq=False, repr=False)(cls)


def _set_key(obj, key):
    object.__setattr__(obj, "_key", key)


@_frozen
class Top(Formula):
    value: bool

    def __post_init__(self):
        _set_key(self, "true" if self.value else "false")


@_frozen
class AtomLit(Formula):
    atom: Atom

    def __post_init__(self):
        _set_key(self, str(self.atom))


@_frozen
class NegAtom(Formula):
    atom: Atom

    def __post_init__(self):
        _set_key(self, f"!({self.atom})")


@_frozen
class And(Formula):
    left: Formula
    right: Formula

    def __post_init__(self):
        _set_key(self, f"({self.left} & {self.right})")


@_frozen
class Or(Formula):
    left: Formula
    right: Formula

    def __post_init__(self):
        _set_key(self, f"({self.left} | {self.right})")


@_frozen
class EX(Formula):
    process: int
    body: Formula

    def __post_init__(self):
        _set_key(self, f"EX{self.process} {self.body}")


@_frozen
class AX(Formula):
    process: int
    body: Formula

    def __post_init__(self):
        _set_key(self, f"AX{self.process} {self.body}")


@_frozen
class AU(Formula):
    left: Formula
    right: Formula

    def __post_init__(self):
        if self.left == TRUE:
            _set_key(self, f"AF {self.right}")
        else:
            _set_key(self, f"A[{self.left} U {self.right}]")


@_frozen
class EU(Formula):
    left: Formula
    right: Formula

    def __post_init__(self):
        if self.left == TRUE:
            _set_key(self, f"EF {self.right}")
        else:
            _set_key(self, f"E[{self.left} U {self.right}]")


@_frozen
class AR(Formula):
    left: Formula
    right: Formula

    def __post_init__(self):
        if self.left == FALSE:
            _set_key(self, f"AG {self.right}")
        else:
            _set_key(self, f"A[{self.left} R {self.right}]")


@_frozen
class ER(Formula):
    left: Formula
    right: Formula

    def __post_init__(self):
        if self.left == FALSE:
            _set_key(self, f"EG {self.right}")
        else:
            _set_key(self, f"E[{self.left} R {self.right}]")


TRUE = Top(True)
FALSE = Top(False)


# --- Surface sugar ---

@_frozen
class Not(Formula):
    operand: Formula

    def __post_init__(self):
        _set_key(self, f"!{self.operand}")


@_frozen
class Implies(Formula):
    left: Formula
    right: Formula

    def __post_init__(self):
        _set_key(self, f"({self.left} -> {self.right})")


@_frozen
class Iff(Formula):
    left: Formula
    right: Formula

    def __post_init__(self):
        _set_key(self, f"({self.left} <-> {self.right})")


@_frozen
class Unary(Formula):
    """Unindexed next-time and the F/G abbreviations: ``op`` is one of AX EX AF EF AG EG."""

    op: str
    body: Formula

    def __post_init__(self):
        _set_key(self, f"{self.op} {self.body}")


def AF(f): return Unary("AF", f)
def EF(f): return Unary("EF", f)
def AG(f): return Unary("AG", f)
def EG(f): return Unary("EG", f)
def AXAll(f): return Unary("AX", f)
def EXAny(f): return Unary("EX", f)


TEMPORAL = (EX, AX, AU, EU, AR, ER, Unary)
PATH = (AU, EU, AR, ER)
EVENTUALITIES = (AU, EU)


# --- Constructors ---

def conj(parts: Iterable[Formula]) -> Formula:
    """Right-nested conjunction, dropping ``true`` and collapsing on ``false``."""
    items = []
    for p in parts:
        if p == FALSE:
            return FALSE
        if p != TRUE and p not in items:
            items.append(p)
    if not items:
        return TRUE
    result = items[-1]
    for p in reversed(items[:-1]):
        result = And(p, result)
    return result


def disj(parts: Iterable[Formula]) -> Formula:
    items = []
    for p in parts:
        if p == TRUE:
            return TRUE
        if p != FALSE and p not in items:
            items.append(p)
    if not items:
        return FALSE
    result = items[-1]
    for p in reversed(items[:-1]):
        result = Or(p, result)
    return result


def ax_all(f: Formula, k: int) -> Formula:
    """AX f = ⋀ᵢ AXᵢ f."""
    return conj(AX(i, f) for i in range(1, k + 1))


def ex_any(f: Formula, k: int) -> Formula:
    """EX f = ⋁ᵢ EXᵢ f."""
    return disj(EX(i, f) for i in range(1, k + 1))


def implies(a: Formula, b: Formula) -> Formula:
    """NNF of a → b for a propositional ``a``."""
    return disj([to_nnf(a, 0, True), b])


def children(f: Formula) -> List[Formula]:
    if isinstance(f, (And, Or, AU, EU, AR, ER, Implies, Iff)):
        return [f.left, f.right]
    if isinstance(f, (EX, AX, Unary)):
        return [f.body]
    if isinstance(f, Not):
        return [f.operand]
    return []


# --- Negation normal form ---

@lru_cache(maxsize=None)
def to_nnf(f: Formula, k: int, negated: bool = False) -> Formula:
    """
    Push negations onto atoms and expand sugar.

    Args:
        f: Any formula.
        k: Number of processes, used to expand unindexed AX/EX.
        negated: Produce the NNF of ``!f`` instead.
    """
    if isinstance(f, Top):
        return Top(f.value != negated)
    if isinstance(f, AtomLit):
        return NegAtom(f.atom) if negated else f
    if isinstance(f, NegAtom):
        return AtomLit(f.atom) if negated else f
    if isinstance(f, Not):
        return to_nnf(f.operand, k, not negated)
    if isinstance(f, And):
        parts = [to_nnf(f.left, k, negated), to_nnf(f.right, k, negated)]
        return disj(parts) if negated else conj(parts)
    if isinstance(f, Or):
        parts = [to_nnf(f.left, k, negated), to_nnf(f.right, k, negated)]
        return conj(parts) if negated else disj(parts)
    if isinstance(f, Implies):
        return to_nnf(Or(Not(f.left), f.right), k, negated)
    if isinstance(f, Iff):
        both = And(f.left, f.right)
        neither = And(Not(f.left), Not(f.right))
        return to_nnf(Or(both, neither), k, negated)
    if isinstance(f, EX):
        body = to_nnf(f.body, k, negated)
        return AX(f.process, body) if negated else EX(f.process, body)
    if isinstance(f, AX):
        body = to_nnf(f.body, k, negated)
        return EX(f.process, body) if negated else AX(f.process, body)
    if isinstance(f, Unary):
        body = f.body
        expanded = {
            "AX": lambda: conj(AX(i, body) for i in range(1, k + 1)),
            "EX": lambda: disj(EX(i, body) for i in range(1, k + 1)),
            "AF": lambda: AU(TRUE, body),
            "EF": lambda: EU(TRUE, body),
            "AG": lambda: AR(FALSE, body),
            "EG": lambda: ER(FALSE, body),
        }[f.op]()
        return to_nnf(expanded, k, negated)
    if isinstance(f, PATH):
        left, right = to_nnf(f.left, k, negated), to_nnf(f.right, k, negated)
        dual = {AU: ER, EU: AR, AR: EU, ER: AU}
        cls = dual[type(f)] if negated else type(f)
        return cls(left, right)
    raise TypeError(f"Not a formula: {f!r}")


# --- Alpha/beta classification ---

class Elementary(NamedTuple):
    pass


class Alpha(NamedTuple):
    first: Formula
    second: Formula


class Beta(NamedTuple):
    first: Formula
    second: Formula


ELEMENTARY = Elementary()

Classification = Union[Elementary, Alpha, Beta]


@lru_cache(maxsize=None)
def classify(f: Formula, k: int) -> Classification:
    """Split an NNF formula into its conjunctive or disjunctive components."""
    if isinstance(f, (Top, AtomLit, NegAtom, EX, AX)):
        return ELEMENTARY
    if isinstance(f, And):
        return Alpha(f.left, f.right)
    if isinstance(f, Or):
        return Beta(f.left, f.right)
    if isinstance(f, AU):
        return Beta(f.right, conj([f.left, ax_all(f, k)]))
    if isinstance(f, EU):
        return Beta(f.right, conj([f.left, ex_any(f, k)]))
    if isinstance(f, AR):
        return Alpha(f.right, disj([f.left, ax_all(f, k)]))
    if isinstance(f, ER):
        return Alpha(f.right, disj([f.left, ex_any(f, k)]))
    raise TypeError(f"classify needs an NNF formula, got {f!r}")


def is_elementary(f: Formula, k: int) -> bool:
    return classify(f, k) is ELEMENTARY


def is_eventuality(f: Formula) -> bool:
    return isinstance(f, EVENTUALITIES)


def is_propositional(f: Formula) -> bool:
    if isinstance(f, TEMPORAL):
        return False
    return all(is_propositional(c) for c in children(f))


def closure(f: Formula, k: int) -> FrozenSet[Formula]:
    """Every formula reachable from ``f`` by classification and next-time unwrapping."""
    seen: Set[Formula] = set()
    stack = [to_nnf(f, k)]
    while stack:
        g = stack.pop()
        if g in seen:
            continue
        seen.add(g)
        kind = classify(g, k)
        if kind is ELEMENTARY:
            stack.extend(children(g))
        else:
            stack.extend([kind.first, kind.second])
    return frozenset(seen)


def atoms(f: Formula) -> List[Atom]:
    if isinstance(f, (AtomLit, NegAtom)):
        return [f.atom]
    return [a for c in children(f) for a in atoms(c)]


def variables(f: Formula) -> FrozenSet[str]:
    return frozenset().union(*(a.variables() for a in atoms(f)))


def mentions_pre(f: Formula) -> bool:
    """Whether ``pre`` occurs in the current step, outside nested temporal operators."""
    if isinstance(f, (AtomLit, NegAtom)):
        return has_pre(f.atom)
    if isinstance(f, (And, Or, Not, Implies, Iff)):
        return any(mentions_pre(c) for c in children(f))
    return False


# --- Valuation-dependent rewriting ---

def instantiate(f: Formula, pre_state: Mapping) -> Formula:
    """
    Replace ``pre(t)`` by its value in ``pre_state``.

    Only the current step is rewritten: ``pre`` under a nested next-time or
    path operator belongs to a later move and is left alone. An atom whose
    ``pre`` term is undefined there is false.
    """
    if isinstance(f, (AtomLit, NegAtom)):
        if not has_pre(f.atom):
            return f
        try:
            atom = instantiate_atom(f.atom, pre_state)
        except PartialApplication:
            return FALSE if isinstance(f, AtomLit) else TRUE
        return type(f)(atom)
    if isinstance(f, And):
        return conj([instantiate(f.left, pre_state), instantiate(f.right, pre_state)])
    if isinstance(f, Or):
        return disj([instantiate(f.left, pre_state), instantiate(f.right, pre_state)])
    return f


def truth(f: Formula, partial: Mapping) -> Optional[bool]:
    """Three-valued truth of a propositional NNF formula under a partial valuation."""
    if isinstance(f, Top):
        return f.value
    if isinstance(f, (AtomLit, NegAtom)):
        if has_pre(f.atom) or not f.atom.variables() <= set(partial):
            return None
        try:
            value = eval_atom(f.atom, partial)
        except PartialApplication:
            value = False
        return value if isinstance(f, AtomLit) else not value
    if isinstance(f, And):
        left, right = truth(f.left, partial), truth(f.right, partial)
        if left is False or right is False:
            return False
        return True if left and right else None
    if isinstance(f, Or):
        left, right = truth(f.left, partial), truth(f.right, partial)
        if left or right:
            return True
        return False if left is False and right is False else None
    return None


def sorted_formulas(formulas: Iterable[Formula]) -> List[Formula]:
    return sorted(formulas, key=lambda g: g._key)


def label_key(formulas: Iterable[Formula]) -> str:
    return " ; ".join(g._key for g in sorted_formulas(set(formulas)))


def group_by_process(formulas: Iterable[Formula], cls) -> Dict[int, List[Formula]]:
    """Bodies of the ``cls`` (AX or EX) formulas, keyed by process index."""
    grouped: Dict[int, List[Formula]] = {}
    for g in sorted_formulas(formulas):
        if isinstance(g, cls):
            grouped.setdefault(g.process, []).append(g.body)
    return grouped


def conjuncts(f: Formula) -> List[Formula]:
    if isinstance(f, And):
        return conjuncts(f.left) + conjuncts(f.right)
    return [] if f == TRUE else [f]


def from_guard(g: Guard) -> Formula:
    """NNF formula with the same truth table as a propositional guard."""
    if isinstance(g, Truth):
        return TRUE if g.value else FALSE
    if isinstance(g, Test):
        return AtomLit(g.atom)
    if isinstance(g, Neg):
        return to_nnf(from_guard(g.operand), 0, True)
    if isinstance(g, Conj):
        return conj(from_guard(p) for p in g.parts)
    if isinstance(g, Disj):
        return disj(from_guard(p) for p in g.parts)
    raise TypeError(f"Not a guard: {g!r}")
