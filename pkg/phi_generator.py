import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from utils.errors import UninitializedInAllInitMode
from utils.lang.program import (CCR, Assign, Block, ConcurrentProgram, Goto,
                                GuardedAssign, IfGoto, Process)
from utils.logic.formula import (AR, EX, FALSE, TRUE, AX, AtomLit, Formula,
                                 conj, conjuncts, disj, from_guard, implies)
from utils.vocab.guards import TRUE as GUARD_TRUE
from utils.vocab.guards import Guard, Neg, conj as guard_conj, substitute_guard
from utils.vocab.terms import Equals, Pre, Term, simple_atom, substitute_term
from utils.vocab.valuation import Valuation

logger = logging.getLogger(__name__)


def AG(f: Formula) -> Formula:
    return AR(FALSE, f)


@dataclass
class PhiP:
    """The program-semantics formula, kept clause by clause."""

    initial: Formula
    interleaving: Formula
    progress: Formula
    per_instruction: List[Formula] = field(default_factory=list)

    @property
    def conjunction(self) -> Formula:
        return conj([self.initial, self.interleaving, self.progress] + self.per_instruction)

    def clauses(self) -> List[Tuple[str, Formula]]:
        named = [("initial", self.initial)]
        named += [("interleaving", f) for f in conjuncts(self.interleaving)]
        named += [("progress", self.progress)]
        named += [("instruction", f) for f in self.per_instruction]
        return named

    def to_text(self) -> str:
        """Specification syntax, one clause per line; the spec parser conjoins them back."""
        lines = []
        for name, f in self.clauses():
            lines.append(f"// {name}")
            lines.append(f"{f};")
        return "\n".join(lines) + "\n"


# --- Symbolic execution of instruction bodies ---

Path = Tuple[Guard, Dict[str, Term], Optional[str]]


def _apply(assign: Assign, mapping: Dict[str, Term]) -> Dict[str, Term]:
    updated = dict(mapping)
    for target, source in zip(assign.targets, assign.sources):
        updated[target.name] = substitute_term(source, mapping)
    return updated


def _paths(statements: Sequence, condition: Guard, mapping: Dict[str, Term]) -> Iterator[Path]:
    """Each path through ``statements`` as (pre-state condition, final terms, jump)."""
    if not statements:
        yield condition, mapping, None
        return
    head, rest = statements[0], statements[1:]
    if isinstance(head, Assign):
        yield from _paths(rest, condition, _apply(head, mapping))
    elif isinstance(head, GuardedAssign):
        g = substitute_guard(head.guard, mapping)
        yield from _paths(rest, guard_conj([condition, g]), _apply(head.assign, mapping))
        otherwise = (head.orelse,) + tuple(rest) if head.orelse is not None else rest
        yield from _paths(otherwise, guard_conj([condition, Neg(g)]), mapping)
    elif isinstance(head, IfGoto):
        g = substitute_guard(head.guard, mapping)
        yield guard_conj([condition, g]), mapping, head.l_if
        yield guard_conj([condition, Neg(g)]), mapping, head.l_else
    elif isinstance(head, Goto):
        yield condition, mapping, head.label
    elif isinstance(head, Block):
        for cond, inner, target in _paths(head.statements, condition, mapping):
            if target is not None:
                yield cond, inner, target
            else:
                yield from _paths(rest, cond, inner)


def instruction_paths(instr) -> List[Path]:
    if isinstance(instr, CCR):
        return list(_paths(instr.body, instr.guard, {}))
    if isinstance(instr, Block):
        return list(_paths(instr.statements, GUARD_TRUE, {}))
    return list(_paths((instr,), GUARD_TRUE, {}))


class PhiGenerator:
    def __init__(self, program: ConcurrentProgram):
        self.program = program
        self.k = len(program.processes)
        self.data = program.data_variables

    def at(self, process: Process, label: str) -> Formula:
        return AtomLit(simple_atom(process.control, label))

    # --- Clause 1 ---

    def initial_clause(self, mode: str, initial: Optional[Valuation] = None) -> Formula:
        variables = {v.name: v for v in self.program.variables}
        if initial is not None:
            return conj(AtomLit(simple_atom(variables[n], initial[n])) for n in sorted(initial))
        parts = [self.at(p, p.start) for p in self.program.processes]
        missing = []
        for d in self.program.declarations:
            if d.init is not None:
                parts.append(AtomLit(simple_atom(d.var, d.init)))
            elif d.shadow_of is not None:
                origin = self.program.declaration(d.shadow_of)
                if origin.init is not None:
                    parts.append(AtomLit(simple_atom(d.var, origin.init)))
                else:
                    parts.append(AtomLit(Equals(d.var, origin.var)))
            else:
                missing.append(d)
                parts.append(disj(AtomLit(simple_atom(d.var, value)) for value in d.sort.domain))
        if missing and mode == "all-init":
            names = ", ".join(d.name for d in missing)
            raise UninitializedInAllInitMode(f"Variables without an initial value: {names}", stage="phigen")
        return conj(parts)

    # --- Clauses 2 and 3 ---

    def interleaving_clause(self) -> Formula:
        groups = []
        for p in self.program.processes:
            for j in range(1, self.k + 1):
                if j == p.index:
                    continue
                stable = [implies(self.at(p, l), AX(j, self.at(p, l))) for l in p.labels]
                groups.append(AG(conj(stable)))
        return conj(groups)

    def progress_clause(self) -> Formula:
        return AG(disj(EX(i, TRUE) for i in range(1, self.k + 1)))

    # --- Clauses 4 to 6 ---

    def move(self, process: Process, target: str, mapping: Dict[str, Term]) -> Formula:
        parts = [self.at(process, target)]
        for v in self.data:
            parts.append(AtomLit(Equals(v, Pre(mapping.get(v.name, v)))))
        return AX(process.index, conj(parts))

    def instruction_clauses(self, process: Process, label: str) -> List[Formula]:
        instr = process.instruction_at(label)
        here = self.at(process, label)
        clauses = []
        for condition, mapping, target in instruction_paths(instr):
            cond = from_guard(condition)
            if cond == FALSE:
                continue
            target = target if target is not None else process.next_label(label)
            clauses.append(AG(implies(conj([here, cond]), self.move(process, target, mapping))))
        if isinstance(instr, CCR):
            blocked = conj([here, from_guard(Neg(instr.guard))])
            if blocked != FALSE:
                clauses.append(AG(implies(blocked, AX(process.index, FALSE))))
        return clauses

    def generate(self, mode: str = "all-init", initial: Optional[Valuation] = None) -> PhiP:
        per_instruction = [c for p in self.program.processes for l in p.labels
                           for c in self.instruction_clauses(p, l)]
        phi = PhiP(self.initial_clause(mode, initial), self.interleaving_clause(),
                   self.progress_clause(), per_instruction)
        logger.debug(f"phi_P has {len(phi.clauses())} clauses for {self.k} processes")
        return phi


def generate_phi_p(program: ConcurrentProgram, mode: str = "all-init",
                   initial: Optional[Valuation] = None) -> PhiP:
    """
    Build the formula describing ``program``'s semantics.

    Args:
        program: The unsynchronized (or CCR) program.
        mode: ``all-init`` or ``with-inputs``.
        initial: Fix the initial clause to this one valuation of V.

    Raises:
        UninitializedInAllInitMode: ``all-init`` with an undeclared initial value.
    """
    return PhiGenerator(program).generate(mode, initial)
