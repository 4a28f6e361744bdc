"""AST of concurrent programs."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

from utils.vocab.guards import Guard, guard_variables
from utils.vocab.sorts import Sort, location_sort
from utils.vocab.terms import SymbolTable, Term, Var


@dataclass(frozen=True)
class Declaration:
    name: str
    sort: Sort
    init: Any = None
    owner: Optional[str] = None
    shadow_of: Optional[str] = None

    @property
    def initialized(self) -> bool:
        return self.init is not None or self.shadow_of is not None

    @property
    def var(self) -> Var:
        return Var(self.name, self.sort)


# --- Statements and instructions ---

@dataclass(frozen=True)
class Assign:
    targets: Tuple[Var, ...]
    sources: Tuple[Term, ...]


@dataclass(frozen=True)
class IfGoto:
    guard: Guard
    l_if: str
    l_else: str


@dataclass(frozen=True)
class Goto:
    label: str


@dataclass(frozen=True)
class GuardedAssign:
    """``if (G) assign [else ...]``; the else branch is another GuardedAssign or an Assign."""

    guard: Guard
    assign: Assign
    orelse: Optional[Union["GuardedAssign", Assign]] = None


@dataclass(frozen=True)
class Block:
    statements: Tuple["Statement", ...]


@dataclass(frozen=True)
class CCR:
    guard: Guard
    body: Tuple["Statement", ...]


Statement = Union[Assign, IfGoto, Goto, GuardedAssign, Block]
Instruction = Union[Assign, IfGoto, Goto, Block, CCR]


def statement_labels(st) -> List[str]:
    if isinstance(st, IfGoto):
        return [st.l_if, st.l_else]
    if isinstance(st, Goto):
        return [st.label]
    if isinstance(st, (Block, CCR)):
        inner = st.statements if isinstance(st, Block) else st.body
        return [l for s in inner for l in statement_labels(s)]
    return []


def reads(st) -> frozenset:
    """Variables a statement or instruction may read."""
    if isinstance(st, Assign):
        return frozenset().union(*(t.variables() for t in st.sources))
    if isinstance(st, IfGoto):
        return guard_variables(st.guard)
    if isinstance(st, GuardedAssign):
        return guard_variables(st.guard) | reads(st.assign) | reads(st.orelse)
    if isinstance(st, Block):
        return frozenset().union(*(reads(s) for s in st.statements))
    if isinstance(st, CCR):
        return guard_variables(st.guard) | frozenset().union(*(reads(s) for s in st.body))
    return frozenset()


def writes(st) -> frozenset:
    """Data variables a statement or instruction may assign."""
    if isinstance(st, Assign):
        return frozenset(t.name for t in st.targets)
    if isinstance(st, GuardedAssign):
        return writes(st.assign) | writes(st.orelse)
    if isinstance(st, Block):
        return frozenset().union(*(writes(s) for s in st.statements))
    if isinstance(st, CCR):
        return frozenset().union(*(writes(s) for s in st.body))
    return frozenset()


@dataclass(frozen=True)
class Process:
    name: str
    index: int
    locals: Tuple[Declaration, ...]
    labels: Tuple[str, ...]
    instructions: Tuple[Instruction, ...]

    @property
    def start(self) -> str:
        return self.labels[0]

    @property
    def location_sort(self) -> Sort:
        return location_sort(self.name, self.labels)

    @property
    def control(self) -> Var:
        return Var(f"loc{self.index}", self.location_sort)

    def instruction_at(self, label: str) -> Instruction:
        return self.instructions[self.labels.index(label)]

    def next_label(self, label: str) -> Optional[str]:
        position = self.labels.index(label) + 1
        return self.labels[position] if position < len(self.labels) else None

    def body(self) -> Dict[str, Instruction]:
        return dict(zip(self.labels, self.instructions))


@dataclass(frozen=True)
class ConcurrentProgram:
    shared: Tuple[Declaration, ...]
    processes: Tuple[Process, ...]
    exposed: Tuple[str, ...] = field(default=())

    @property
    def declarations(self) -> Tuple[Declaration, ...]:
        return self.shared + tuple(d for p in self.processes for d in p.locals)

    @property
    def data_variables(self) -> Tuple[Var, ...]:
        return tuple(d.var for d in self.declarations)

    @property
    def control_variables(self) -> Tuple[Var, ...]:
        return tuple(p.control for p in self.processes)

    @property
    def variables(self) -> Tuple[Var, ...]:
        """V = Loc ∪ Var, control variables first."""
        return self.control_variables + self.data_variables

    @property
    def sorts(self) -> Dict[str, Sort]:
        return {v.name: v.sort for v in self.variables}

    @property
    def input_variables(self) -> Tuple[Var, ...]:
        return tuple(d.var for d in self.declarations if not d.initialized)

    def declaration(self, name: str) -> Declaration:
        for d in self.declarations:
            if d.name == name:
                return d
        raise KeyError(name)

    def process(self, index: int) -> Process:
        return self.processes[index - 1]

    def visible_to(self, process: Process) -> frozenset:
        """Varᵢ plus every exposed variable."""
        names = {d.name for d in self.shared} | {d.name for d in process.locals}
        return frozenset(names | set(self.exposed))

    def symbols(self) -> SymbolTable:
        return SymbolTable(self.sorts)

    def has_ccrs(self) -> bool:
        return any(isinstance(i, CCR) for p in self.processes for i in p.instructions)
