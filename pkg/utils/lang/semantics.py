"""Explicit transition-system semantics of concurrent programs.

A state is exactly its valuation of V = Loc ∪ Var. ``build_transition_system``
explores every interleaving breadth-first from the given initial states.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import networkx as nx

from utils.errors import (DeadlockDetected, PartialApplication,
                          UninitializedInAllInitMode)
from utils.lang.program import (CCR, Assign, Block, ConcurrentProgram, Goto,
                                GuardedAssign, IfGoto, Process)
from utils.vocab.guards import eval_guard
from utils.vocab.sorts import format_value
from utils.vocab.terms import eval_term
from utils.vocab.valuation import Valuation

logger = logging.getLogger(__name__)

INIT_MODES = ("all-init", "with-inputs")

Transition = Tuple[Valuation, int, Valuation]


@dataclass(frozen=True)
class TransitionSystem:
    states: Tuple[Valuation, ...]
    initial: Tuple[Valuation, ...]
    transitions: FrozenSet[Transition]
    deadlocks: Tuple[Valuation, ...] = field(default=())

    def successors(self, state: Valuation, process: Optional[int] = None) -> List[Valuation]:
        return sorted(t for s, i, t in self.transitions
                      if s == state and (process is None or i == process))

    def index(self) -> Dict[Valuation, int]:
        return {s: n for n, s in enumerate(self.states)}

    def to_dict(self) -> dict:
        """States as variable→value maps, transitions as index triples."""
        index = self.index()
        return {
            "states": [s.to_dict() for s in self.states],
            "initial": [index[s] for s in self.initial],
            "transitions": sorted([index[s], i, index[t]] for s, i, t in self.transitions),
            "deadlocks": [index[s] for s in self.deadlocks],
        }

    def to_networkx(self) -> nx.MultiDiGraph:
        graph = nx.MultiDiGraph()
        for n, s in enumerate(self.states):
            graph.add_node(n, label=repr(s), initial=s in self.initial)
        index = self.index()
        for s, i, t in sorted(self.transitions, key=lambda tr: (index[tr[0]], tr[1], index[tr[2]])):
            graph.add_edge(index[s], index[t], process=i, label=str(i))
        return graph


# --- Local moves ---

def _assign(state: Dict, instr: Assign, origin: Valuation, label: str) -> None:
    values = [eval_term(t, state) for t in instr.sources]
    for target, value in zip(instr.targets, values):
        if value not in target.sort:
            raise PartialApplication(
                f"{target.name} := {format_value(value)} lies outside {target.sort}",
                state=origin, instruction=label)
    for target, value in zip(instr.targets, values):
        state[target.name] = value


def _run(statements: Sequence, state: Dict, origin: Valuation, label: str) -> Optional[str]:
    """Run block statements in place; return the jump target if one is taken."""
    for st in statements:
        if isinstance(st, Assign):
            _assign(state, st, origin, label)
        elif isinstance(st, GuardedAssign):
            if eval_guard(st.guard, state):
                _assign(state, st.assign, origin, label)
            elif st.orelse is not None:
                _run((st.orelse,), state, origin, label)
        elif isinstance(st, IfGoto):
            return st.l_if if eval_guard(st.guard, state) else st.l_else
        elif isinstance(st, Goto):
            return st.label
        elif isinstance(st, Block):
            target = _run(st.statements, state, origin, label)
            if target is not None:
                return target
    return None


def execute_instruction(process: Process, label: str, state: Valuation) -> Optional[Valuation]:
    """
    Perform the local move of ``process`` at ``label`` from ``state``.

    Returns:
        The successor valuation, or None when a CCR guard is false.

    Raises:
        PartialApplication: A term left its sort during the move.
    """
    instr = process.instruction_at(label)
    control = process.control.name
    work = state.to_dict()
    try:
        if isinstance(instr, CCR):
            if not eval_guard(instr.guard, work):
                return None
            target = _run(instr.body, work, state, label)
        elif isinstance(instr, Block):
            target = _run(instr.statements, work, state, label)
        else:
            target = _run((instr,), work, state, label)
    except PartialApplication as e:
        if e.state is None:
            raise PartialApplication(e.message, state=state, instruction=f"{process.name}.{label}")
        raise
    work[control] = target if target is not None else process.next_label(label)
    return Valuation(work)


# --- Initial states ---

def initial_valuations(program: ConcurrentProgram, mode: str = "all-init") -> List[Valuation]:
    """
    Initial states of ``program``.

    In ``all-init`` mode every data variable needs a declared value and there is
    one initial state; in ``with-inputs`` mode uninitialized variables range over
    their whole domain.
    """
    if mode not in INIT_MODES:
        raise ValueError(f"Unknown initialization mode '{mode}'")
    fixed = {p.control.name: p.start for p in program.processes}
    inputs = []
    for d in program.declarations:
        if d.init is not None:
            fixed[d.name] = d.init
        elif d.shadow_of is None:
            inputs.append(d)
    if inputs and mode == "all-init":
        names = ", ".join(d.name for d in inputs)
        raise UninitializedInAllInitMode(f"Variables without an initial value: {names}", stage="phigen")
    result = []
    for values in product(*(d.sort.domain for d in inputs)):
        state = dict(fixed)
        state.update(zip((d.name for d in inputs), values))
        for d in program.declarations:
            if d.shadow_of is not None:
                state[d.name] = state[d.shadow_of]
        result.append(Valuation(state))
    return sorted(result)


# --- Reachability ---

def build_transition_system(program: ConcurrentProgram, initials: Sequence[Valuation],
                            allow_deadlock: bool = False) -> TransitionSystem:
    """
    Explore every interleaving of ``program`` from ``initials``.

    Args:
        program: The program.
        initials: Valuations of V consistent with the declarations.
        allow_deadlock: Record states without successors instead of raising.

    Raises:
        PartialApplication: With the offending state and instruction.
        DeadlockDetected: A reachable state has no outgoing transition.
    """
    seen = set(initials)
    queue = deque(sorted(seen))
    transitions = set()
    deadlocks = []
    while queue:
        state = queue.popleft()
        moved = False
        for process in program.processes:
            target = execute_instruction(process, state[process.control.name], state)
            if target is None:
                continue
            moved = True
            transitions.add((state, process.index, target))
            if target not in seen:
                seen.add(target)
                queue.append(target)
        if not moved:
            if not allow_deadlock:
                raise DeadlockDetected(f"No process can move from {state!r}", state=state)
            deadlocks.append(state)
    ts = TransitionSystem(tuple(sorted(seen)), tuple(sorted(set(initials))),
                          frozenset(transitions), tuple(sorted(deadlocks)))
    logger.debug(f"Transition system: {len(ts.states)} states, {len(ts.transitions)} transitions")
    if deadlocks:
        logger.warning(f"{len(deadlocks)} reachable states without successors")
    return ts
