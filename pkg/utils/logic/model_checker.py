"""Explicit-state model checker.

Satisfaction sets are numpy boolean vectors over the states of a ``Model``.
Least fixpoints compute AU/EU and greatest fixpoints compute AR/ER. This code
shares nothing with the tableau, so it can check the tableau's output.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from utils.errors import DeadlockDetected, NonTotalModel, PartialApplication
from utils.lang.program import ConcurrentProgram
from utils.lang.semantics import (TransitionSystem, build_transition_system,
                                  initial_valuations)
from utils.logic.formula import (AR, AU, AX, ER, EU, EX, And, AtomLit,
                                 Formula, NegAtom, Or, Top, instantiate,
                                 mentions_pre, to_nnf)
from utils.vocab.terms import eval_atom
from utils.vocab.valuation import Valuation

logger = logging.getLogger(__name__)


@dataclass
class Model:
    """A Kripke structure M = (S, R, L) with process-indexed transitions."""

    labels: List[Valuation]
    transitions: List[Tuple[int, int, int]]
    processes: int
    initial: List[int] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.labels)

    def adjacency(self, process: Optional[int] = None) -> np.ndarray:
        matrix = np.zeros((self.size, self.size), dtype=bool)
        for s, i, t in self.transitions:
            if process is None or i == process:
                matrix[s, t] = True
        return matrix

    def dead_states(self) -> List[int]:
        return [int(s) for s in np.flatnonzero(~self.adjacency().any(axis=1))]

    def to_networkx(self) -> nx.MultiDiGraph:
        graph = nx.MultiDiGraph()
        for n, label in enumerate(self.labels):
            graph.add_node(n, label=repr(label), initial=n in self.initial)
        for s, i, t in sorted(self.transitions):
            graph.add_edge(s, t, process=i, label=str(i))
        return graph

    @classmethod
    def from_transition_system(cls, ts: TransitionSystem, processes: int) -> "Model":
        index = ts.index()
        transitions = sorted((index[s], i, index[t]) for s, i, t in ts.transitions)
        return cls(list(ts.states), transitions, processes, [index[s] for s in ts.initial])


class ModelChecker:
    """Bottom-up evaluation of NNF formulas on one model, memoized per subformula."""

    def __init__(self, model: Model):
        dead = model.dead_states()
        if dead:
            raise NonTotalModel(f"State {model.labels[dead[0]]!r} has no successor",
                                state=model.labels[dead[0]])
        self.model = model
        self.all = model.adjacency()
        self.by_process = {i: model.adjacency(i) for i in range(1, model.processes + 1)}
        self.cache: Dict[Formula, np.ndarray] = {}

    # --- Successor quantifiers ---

    @staticmethod
    def _some(adjacency: np.ndarray, z: np.ndarray) -> np.ndarray:
        return (adjacency & z[np.newaxis, :]).any(axis=1)

    @staticmethod
    def _every(adjacency: np.ndarray, z: np.ndarray) -> np.ndarray:
        return ~(adjacency & ~z[np.newaxis, :]).any(axis=1)

    def _atom(self, f) -> np.ndarray:
        values = np.zeros(self.model.size, dtype=bool)
        for n, label in enumerate(self.model.labels):
            try:
                values[n] = eval_atom(f.atom, label)
            except PartialApplication:
                values[n] = False
        return values

    def _next(self, f) -> np.ndarray:
        adjacency = self.by_process.get(f.process, np.zeros_like(self.all))
        quantifier = self._some if isinstance(f, EX) else self._every
        if not mentions_pre(f.body):
            return quantifier(adjacency, self.sat(f.body))
        result = np.zeros(self.model.size, dtype=bool)
        for n, label in enumerate(self.model.labels):
            body = self.sat(instantiate(f.body, label))
            result[n] = quantifier(adjacency[n:n + 1], body)[0]
        return result

    def sat(self, f: Formula) -> np.ndarray:
        if f in self.cache:
            return self.cache[f]
        n = self.model.size
        if isinstance(f, Top):
            result = np.full(n, f.value, dtype=bool)
        elif isinstance(f, AtomLit):
            result = self._atom(f)
        elif isinstance(f, NegAtom):
            result = ~self._atom(f)
        elif isinstance(f, And):
            result = self.sat(f.left) & self.sat(f.right)
        elif isinstance(f, Or):
            result = self.sat(f.left) | self.sat(f.right)
        elif isinstance(f, (EX, AX)):
            result = self._next(f)
        elif isinstance(f, (AU, EU)):
            quantifier = self._every if isinstance(f, AU) else self._some
            p, q = self.sat(f.left), self.sat(f.right)
            result = q.copy()
            while True:
                grown = result | (p & quantifier(self.all, result))
                if np.array_equal(grown, result):
                    break
                result = grown
        elif isinstance(f, (AR, ER)):
            quantifier = self._every if isinstance(f, AR) else self._some
            p, q = self.sat(f.left), self.sat(f.right)
            result = q.copy()
            while True:
                shrunk = result & (p | quantifier(self.all, result))
                if np.array_equal(shrunk, result):
                    break
                result = shrunk
        else:
            return self.sat(to_nnf(f, self.model.processes))
        self.cache[f] = result
        return result


def model_check(model: Model, f: Formula) -> Dict[int, bool]:
    """
    Decide M, s ⊨ f for every state s.

    Raises:
        NonTotalModel: Some state has no successor.
    """
    values = ModelChecker(model).sat(to_nnf(f, model.processes))
    return {n: bool(v) for n, v in enumerate(values)}


def holds_initially(model: Model, f: Formula) -> Tuple[bool, Optional[int]]:
    """True iff ``f`` holds at every initial state; otherwise the first failing one."""
    values = ModelChecker(model).sat(to_nnf(f, model.processes))
    for s in sorted(model.initial):
        if not values[s]:
            return False, s
    return True, None


@dataclass
class CheckResult:
    holds: bool
    witness: Optional[Valuation]
    ts: TransitionSystem

    @property
    def verdict(self) -> str:
        return "PASS" if self.holds else "FAIL"


def program_satisfies(program: ConcurrentProgram, f: Formula,
                      initials: Optional[Sequence[Valuation]] = None,
                      mode: str = "all-init") -> CheckResult:
    """
    P ⊨ f iff f holds at every initial state of P's transition system.

    Raises:
        NonTotalModel: The program deadlocks in a reachable state.
    """
    if initials is None:
        initials = initial_valuations(program, mode)
    try:
        ts = build_transition_system(program, initials)
    except DeadlockDetected as e:
        raise NonTotalModel(e.message, state=e.state)
    model = Model.from_transition_system(ts, len(program.processes))
    holds, failing = holds_initially(model, f)
    witness = model.labels[failing] if failing is not None else None
    logger.debug(f"Checked {f} on {model.size} states: {'PASS' if holds else 'FAIL'}")
    return CheckResult(holds, witness, ts)
