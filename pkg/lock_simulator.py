"""Exhaustive interpreter for compiled lock/condition-variable code.

A simulator state holds the program valuation, each thread's block and
program counter, lock owners and the wait set of every condition variable.
``wait`` releases its lock and joins the wait set in one step, so a signal
cannot fall between them. A signal wakes one waiter; every choice is explored.
"""
import logging
from collections import deque
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

from alive_progress import alive_bar

from code_generator import CompiledProgram, Op
from utils.errors import ResourceLimit, SimDeadlock
from utils.lang.semantics import TransitionSystem, execute_instruction
from utils.logic.model_checker import Model
from utils.vocab.valuation import Valuation

logger = logging.getLogger(__name__)

RUN = "run"
WAITING = "wait"
WOKEN = "wake"


@dataclass(frozen=True)
class Thread:
    block: str
    pc: int = 0
    status: str = RUN


@dataclass(frozen=True)
class SimState:
    valuation: Valuation
    threads: Tuple[Thread, ...]
    owners: Tuple[Tuple[str, int], ...] = ()
    waiting: Tuple[Tuple[str, Tuple[int, ...]], ...] = ()

    def owner(self, lock: str) -> Optional[int]:
        return dict(self.owners).get(lock)

    def with_owner(self, lock: str, owner: Optional[int]) -> "SimState":
        owners = dict(self.owners)
        if owner is None:
            owners.pop(lock, None)
        else:
            owners[lock] = owner
        return replace(self, owners=tuple(sorted(owners.items())))

    def waiters(self, cv: str) -> Tuple[int, ...]:
        return dict(self.waiting).get(cv, ())

    def with_waiters(self, cv: str, waiters: Sequence[int]) -> "SimState":
        waiting = dict(self.waiting)
        if waiters:
            waiting[cv] = tuple(sorted(waiters))
        else:
            waiting.pop(cv, None)
        return replace(self, waiting=tuple(sorted(waiting.items())))

    def with_thread(self, i: int, thread: Thread) -> "SimState":
        threads = list(self.threads)
        threads[i - 1] = thread
        return replace(self, threads=tuple(threads))


Move = Tuple[SimState, Optional[Tuple[Valuation, int, Valuation]]]


@dataclass
class SimulationResult:
    """
    The explored lock-state graph and its projection onto program variables.

    ``states`` and ``edges`` form the graph itself: an edge ``(s, i, t)`` is one
    step of thread ``i``, lock operations included. ``ts`` keeps only the
    executed CCRs.
    """

    granularity: str
    ts: TransitionSystem
    states: List[SimState]
    edges: List[Tuple[int, int, int]]
    initial: List[int]

    @property
    def explored(self) -> int:
        return len(self.states)

    def to_model(self, processes: int) -> Model:
        """Lock states labeled with their valuations; a stuck waiter stays visible."""
        return Model([s.valuation for s in self.states], list(self.edges), processes, list(self.initial))

    @property
    def valuations(self) -> frozenset:
        return frozenset(self.ts.states)


class LockSimulator:
    def __init__(self, compiled: CompiledProgram):
        self.compiled = compiled
        self.program = compiled.program

    def op(self, i: int, thread: Thread) -> Op:
        return self.compiled.block(i, thread.block).ops[thread.pc]

    def initial_state(self, valuation: Valuation) -> SimState:
        threads = tuple(Thread(valuation[p.control.name]) for p in self.program.processes)
        return SimState(valuation, threads)

    def moves(self, state: SimState, i: int) -> List[Move]:
        """Successors of ``state`` when thread ``i`` takes one step."""
        thread = state.threads[i - 1]
        op = self.op(i, thread)
        if thread.status == WAITING:
            return []
        if thread.status == WOKEN:
            if state.owner(op.lock) is not None:
                return []
            nxt = state.with_owner(op.lock, i).with_thread(i, Thread(thread.block, op.target))
            return [(nxt, None)]

        if op.kind == "acquire":
            if state.owner(op.lock) is not None:
                return []
            return [(state.with_owner(op.lock, i).with_thread(i, replace(thread, pc=thread.pc + 1)), None)]
        if op.kind == "release":
            if state.owner(op.lock) != i:
                raise SimDeadlock(f"Thread {i} releases {op.lock} it does not hold", state=state.valuation)
            return [(state.with_owner(op.lock, None).with_thread(i, replace(thread, pc=thread.pc + 1)), None)]
        if op.kind == "test_exec":
            process = self.program.process(i)
            post = execute_instruction(process, thread.block, state.valuation)
            if post is None:
                if op.target is None:
                    raise SimDeadlock(f"Guard of {process.name}.{thread.block} failed without a wait path",
                                      state=state.valuation)
                return [(state.with_thread(i, replace(thread, pc=op.target)), None)]
            nxt = replace(state, valuation=post).with_thread(i, replace(thread, pc=thread.pc + 1))
            return [(nxt, (state.valuation, i, post))]
        if op.kind == "wait":
            nxt = state.with_owner(op.lock, None).with_waiters(op.cv, state.waiters(op.cv) + (i,))
            return [(nxt.with_thread(i, replace(thread, status=WAITING)), None)]
        if op.kind == "signal":
            advanced = state.with_thread(i, replace(thread, pc=thread.pc + 1))
            waiters = state.waiters(op.cv)
            if not waiters:
                return [(advanced, None)]
            result = []
            for w in waiters:
                woken = advanced.with_waiters(op.cv, [x for x in waiters if x != w])
                sleeper = woken.threads[w - 1]
                result.append((woken.with_thread(w, replace(sleeper, status=WOKEN)), None))
            return result
        if op.kind == "end":
            label = state.valuation[self.program.process(i).control.name]
            return [(state.with_thread(i, Thread(label)), None)]
        raise ValueError(f"Unknown operation {op.kind}")

    def explore(self, initials: Sequence[Valuation], progress: bool = False,
                state_limit: int = 2_000_000) -> SimulationResult:
        """
        Visit every reachable simulator state.

        Raises:
            SimDeadlock: No thread can step.
            ResourceLimit: More than ``state_limit`` simulator states.
        """
        starts = [self.initial_state(v) for v in sorted(set(initials))]
        states: List[SimState] = list(starts)
        index: Dict[SimState, int] = {s: n for n, s in enumerate(starts)}
        queue = deque(starts)
        valuations = {s.valuation for s in starts}
        transitions = set()
        edges = set()
        k = len(self.program.processes)
        with alive_bar(title=f"Simulating {self.compiled.plan.granularity}", disable=not progress,
                       force_tty=True) as bar:
            while queue:
                state = queue.popleft()
                bar()
                successors = [(i, move) for i in range(1, k + 1) for move in self.moves(state, i)]
                if not successors:
                    logger.error(f"Simulator deadlock at {state.valuation!r}")
                    raise SimDeadlock(f"Every thread is blocked at {state.valuation!r}",
                                      state=state.valuation)
                for i, (nxt, step) in successors:
                    if step is not None:
                        transitions.add(step)
                        valuations.add(nxt.valuation)
                    if nxt not in index:
                        if len(states) >= state_limit:
                            raise ResourceLimit(f"Simulator exceeded {state_limit} states", stage="simulate")
                        index[nxt] = len(states)
                        states.append(nxt)
                        queue.append(nxt)
                    edges.add((index[state], i, index[nxt]))
        ts = TransitionSystem(tuple(sorted(valuations)), tuple(sorted(set(initials))),
                              frozenset(transitions), ())
        logger.info(f"Simulated {len(states)} lock states, {len(valuations)} valuations")
        return SimulationResult(self.compiled.plan.granularity, ts, states, sorted(edges),
                                list(range(len(starts))))


def simulate_lock_semantics(compiled: CompiledProgram, initials: Sequence[Valuation],
                            progress: bool = False) -> SimulationResult:
    """
    Explore the compiled program's lock semantics.

    The result keeps the full lock-state graph for model checking and its
    projection, with one transition per executed CCR, for comparing reachable
    valuations.
    """
    return LockSimulator(compiled).explore(initials, progress)
