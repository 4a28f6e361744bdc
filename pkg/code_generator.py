"""Compile CCR programs to lock and condition-variable pseudocode.

Each location becomes a block of micro-operations (``Op``). The same blocks
drive the ``.sync`` text rendered by the Jinja2 templates and the interpreter
in ``lock_simulator``.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple

import networkx as nx
from jinja2 import Environment, FileSystemLoader

from ccr_synthesizer import SynchronizedProgram
from utils.errors import LockOrderViolation
from utils.lang.printer import format_statement
from utils.lang.program import CCR, ConcurrentProgram, reads, writes
from utils.vocab.guards import TRUE, guard_variables

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parent / "templates"
COARSE = "coarse"
FINE = "fine"
GLOBAL_LOCK = "l"

_env = Environment(loader=FileSystemLoader(str(TEMPLATE_DIR)), trim_blocks=True,
                   lstrip_blocks=True, keep_trailing_newline=True)

Location = Tuple[int, str]


def _safe(name: str) -> str:
    return name.replace(".", "_")


def condvar_name(location: Location) -> str:
    return f"cv_{location[0]}_{_safe(location[1])}"


def lock_name(variable: str) -> str:
    return f"l_{_safe(variable)}"


# --- Lock plan ---

@dataclass
class LockPlan:
    granularity: str
    locks: List[str]
    condvars: Dict[Location, str]
    condvar_locks: Dict[str, str]
    variable_locks: Dict[str, str] = field(default_factory=dict)
    signal_map: Dict[Location, List[str]] = field(default_factory=dict)

    def order(self, lock: str) -> int:
        return self.locks.index(lock)

    def to_dict(self) -> dict:
        return {
            "granularity": self.granularity,
            "locks": list(self.locks),
            "condvars": {f"{i}.{l}": cv for (i, l), cv in sorted(self.condvars.items())},
            "condvar_locks": dict(sorted(self.condvar_locks.items())),
            "variable_locks": dict(sorted(self.variable_locks.items())),
            "signal_map": {f"{i}.{l}": list(cvs) for (i, l), cvs in sorted(self.signal_map.items())},
        }


def written_by(program: ConcurrentProgram, location: Location) -> frozenset:
    """Variables a CCR may change, its location counter included."""
    i, label = location
    process = program.process(i)
    return writes(process.instruction_at(label)) | {process.control.name}


def build_signal_map(program: ConcurrentProgram, condvars: Dict[Location, str]) -> Dict[Location, List[str]]:
    """
    For each CCR, the condition variables of other processes' guards that
    mention a variable the CCR writes.
    """
    signal_map = {}
    for p in program.processes:
        for label in p.labels:
            changed = written_by(program, (p.index, label))
            targets = []
            for (j, other), cv in sorted(condvars.items()):
                if j == p.index:
                    continue
                guard = program.process(j).instruction_at(other).guard
                if guard_variables(guard) & changed:
                    targets.append(cv)
            signal_map[(p.index, label)] = targets
    return signal_map


def _condvars(program: ConcurrentProgram) -> Dict[Location, str]:
    condvars = {}
    for p in program.processes:
        for label, instr in zip(p.labels, p.instructions):
            if isinstance(instr, CCR) and instr.guard != TRUE:
                condvars[(p.index, label)] = condvar_name((p.index, label))
    return condvars


def _lockable(sp: SynchronizedProgram) -> List[Tuple[int, str]]:
    """Variables more than one process can touch, ranked for the global lock order."""
    program = sp.program
    ranked = []
    controls = {p.control.name for p in program.processes}
    for name in sorted({d.name for d in program.shared} | set(program.exposed)):
        if name == sp.aux_variable:
            ranked.append((3, name))
        elif name in controls:
            ranked.append((2, name))
        else:
            ranked.append((1, name))
    return sorted(ranked)


def plan_locks(sp: SynchronizedProgram, granularity: str,
               signal_map: Optional[Dict[Location, List[str]]] = None) -> LockPlan:
    """
    Declare locks and condition variables.

    Fine-grained locks are totally ordered: condition-variable locks first,
    then data variables, exposed location counters and the auxiliary
    variable, each group by name. This reverses a data-first order: a waiter
    takes its data locks while holding its condition-variable lock.
    """
    program = sp.program
    condvars = _condvars(program)
    signals = signal_map if signal_map is not None else build_signal_map(program, condvars)
    if granularity == COARSE:
        locks = [GLOBAL_LOCK]
        return LockPlan(COARSE, locks, condvars, {cv: GLOBAL_LOCK for cv in condvars.values()}, {}, signals)
    condvar_locks = {cv: f"l_{cv}" for cv in condvars.values()}
    variable_locks = {name: lock_name(name) for _, name in _lockable(sp)}
    locks = sorted(condvar_locks.values()) + [variable_locks[name] for _, name in _lockable(sp)]
    return LockPlan(FINE, locks, condvars, condvar_locks, variable_locks, signals)


# --- Emitted code ---

class Op(NamedTuple):
    """
    One step of the lock semantics.

    ``test_exec`` runs the CCR body when its guard holds and jumps to
    ``target`` otherwise; ``wait`` releases ``lock`` and resumes at ``target``
    after a signal and reacquisition.
    """

    kind: str
    lock: Optional[str] = None
    cv: Optional[str] = None
    target: Optional[int] = None


@dataclass
class EmittedBlock:
    label: str
    guard: str
    condvar: Optional[str]
    wait_lock: Optional[str]
    locks: List[str]
    body: List[str]
    signals: List[Tuple[str, str]]
    ops: List[Op]
    subroutine: Optional[str] = None


@dataclass
class EmittedProcess:
    index: int
    name: str
    blocks: Dict[str, EmittedBlock]
    text: str = ""


@dataclass
class CompiledProgram:
    plan: LockPlan
    processes: List[EmittedProcess]
    program: ConcurrentProgram

    def block(self, process: int, label: str) -> EmittedBlock:
        return self.processes[process - 1].blocks[label]

    def files(self) -> Dict[str, str]:
        return {f"{p.name}.{self.plan.granularity}.sync": p.text for p in self.processes}


def _body_lines(instr: CCR) -> List[str]:
    return [format_statement(st) for st in instr.body]


def _coarse_ops(condvar: Optional[str], signals: List[str]) -> List[Op]:
    ops = [Op("acquire", GLOBAL_LOCK), Op("test_exec")]
    ops += [Op("signal", cv=cv) for cv in signals]
    ops += [Op("release", GLOBAL_LOCK), Op("end")]
    if condvar is not None:
        ops[1] = Op("test_exec", target=len(ops))
        ops.append(Op("wait", GLOBAL_LOCK, condvar, 1))
    return ops


def _fine_ops(condvar: Optional[str], wait_lock: Optional[str], locks: List[str],
              signals: List[Tuple[str, str]]) -> List[Op]:
    ops = []
    if condvar is not None:
        ops.append(Op("acquire", wait_lock))
    head = len(ops)
    ops += [Op("acquire", lock) for lock in locks]
    test = len(ops)
    ops.append(Op("test_exec"))
    ops += [Op("release", lock) for lock in reversed(locks)]
    if condvar is not None:
        ops.append(Op("release", wait_lock))
    for cv, lock in signals:
        ops += [Op("acquire", lock), Op("signal", cv=cv), Op("release", lock)]
    ops.append(Op("end"))
    if condvar is not None:
        ops[test] = Op("test_exec", target=len(ops))
        ops += [Op("release", lock) for lock in reversed(locks)]
        ops.append(Op("wait", wait_lock, condvar, head))
    return ops


def _fine_locks(sp: SynchronizedProgram, plan: LockPlan, location: Location) -> List[str]:
    i, label = location
    program = sp.program
    process = program.process(i)
    instr = process.instruction_at(label)
    touched = reads(instr) | writes(instr) | {process.control.name}
    return sorted((plan.variable_locks[n] for n in touched if n in plan.variable_locks), key=plan.order)


def _compile(sp: SynchronizedProgram, granularity: str,
             signal_map: Optional[Dict[Location, List[str]]] = None) -> CompiledProgram:
    plan = plan_locks(sp, granularity, signal_map)
    template = _env.get_template(f"{granularity}.sync.j2")
    emitted = []
    for p in sp.program.processes:
        blocks = {}
        for label, instr in zip(p.labels, p.instructions):
            location = (p.index, label)
            condvar = plan.condvars.get(location)
            wait_lock = plan.condvar_locks.get(condvar) if condvar else None
            signals = [(cv, plan.condvar_locks[cv]) for cv in plan.signal_map.get(location, [])]
            if granularity == COARSE:
                locks = [GLOBAL_LOCK]
                ops = _coarse_ops(condvar, [cv for cv, _ in signals])
                subroutine = None
            else:
                locks = _fine_locks(sp, plan, location)
                ops = _fine_ops(condvar, wait_lock, locks, signals)
                subroutine = f"guard_{p.index}_{_safe(label)}"
            blocks[label] = EmittedBlock(label, str(instr.guard), condvar, wait_lock, locks,
                                         _body_lines(instr), signals, ops, subroutine)
        process = EmittedProcess(p.index, p.name, blocks)
        process.text = template.render(process=process, plan=plan, blocks=list(blocks.values()))
        emitted.append(process)
    compiled = CompiledProgram(plan, emitted, sp.program)
    check_lock_order(compiled)
    logger.info(f"Compiled {granularity}: {len(plan.locks)} locks, {len(plan.condvars)} condition variables")
    return compiled


def compile_coarse(sp: SynchronizedProgram,
                   signal_map: Optional[Dict[Location, List[str]]] = None) -> CompiledProgram:
    """One global lock; a condition variable per location whose guard is not ``true``."""
    return _compile(sp, COARSE, signal_map)


def compile_fine(sp: SynchronizedProgram,
                 signal_map: Optional[Dict[Location, List[str]]] = None) -> CompiledProgram:
    """
    Per-variable locks taken in the global order by a guard subroutine; waits
    and signals happen under each condition variable's own lock.
    """
    return _compile(sp, FINE, signal_map)


def compile_program(sp: SynchronizedProgram, granularity: str) -> CompiledProgram:
    if granularity not in (COARSE, FINE):
        raise ValueError(f"Unknown granularity '{granularity}'")
    return _compile(sp, granularity)


# --- Static lock-order check ---

def lock_graph(compiled: CompiledProgram) -> nx.DiGraph:
    """Edge a -> b when some block acquires b while holding a."""
    graph = nx.DiGraph()
    graph.add_nodes_from(compiled.plan.locks)
    for process in compiled.processes:
        for block in process.blocks.values():
            held: List[str] = []
            for op in block.ops:
                if op.kind == "acquire":
                    for lock in held:
                        graph.add_edge(lock, op.lock, block=f"{process.name}.{block.label}")
                    held.append(op.lock)
                elif op.kind in ("release", "wait") and op.lock in held:
                    held.remove(op.lock)
    return graph


def check_lock_order(compiled: CompiledProgram) -> None:
    """
    Raises:
        LockOrderViolation: A nested acquisition goes against the plan's order.
    """
    graph = lock_graph(compiled)
    plan = compiled.plan
    for a, b, data in sorted(graph.edges(data=True)):
        if plan.order(a) >= plan.order(b):
            raise LockOrderViolation(f"{data['block']} takes {b} while holding {a}", stage="codegen")
    if not nx.is_directed_acyclic_graph(graph):
        raise LockOrderViolation("Lock acquisition graph has a cycle", stage="codegen")
