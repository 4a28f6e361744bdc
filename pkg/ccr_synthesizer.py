import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from model_extractor import ExtractedModel
from utils.errors import (ExtractionError, NonTotalModel, PartialApplication,
                          ProjectionUnsound, SkeletonMismatch)
from utils.lang.program import (CCR, Assign, Block, ConcurrentProgram,
                                Declaration, GuardedAssign, Process, reads,
                                writes)
from utils.lang.semantics import execute_instruction, initial_valuations
from utils.logic.formula import Formula
from utils.logic.model_checker import program_satisfies
from utils.vocab.guards import (FALSE, TRUE, Guard, Neg, Test, conj,
                                cube_guard, disj, eval_guard, guard_cubes,
                                guard_sorts, substitute_guard)
from utils.vocab.sorts import Sort, format_value
from utils.vocab.terms import Const, Var, simple_atom
from utils.vocab.valuation import Valuation, all_valuations

logger = logging.getLogger(__name__)

FULLY_SHARED = "fully-shared"
PER_PROCESS = "per-process"
LIMITED = "limited"


# --- Guard table ---

@dataclass(frozen=True)
class AuxUpdate:
    """``if (condition) x := value``, read against the state the CCR starts in."""

    value: int
    condition: Guard

    def to_dict(self) -> dict:
        return {"value": self.value, "condition": str(self.condition)}


@dataclass
class GuardEntry:
    process: int
    label: str
    guard: Guard
    enabled_states: List[int] = field(default_factory=list)
    aux_updates: List[AuxUpdate] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "process": self.process,
            "label": self.label,
            "guard": str(self.guard),
            "enabled_states": list(self.enabled_states),
            "aux_updates": [u.to_dict() for u in self.aux_updates],
        }


GuardTable = Dict[Tuple[int, str], GuardEntry]


def aux_chain(aux: Var, updates: Sequence[AuxUpdate]) -> Optional[GuardedAssign]:
    """One if/else-if chain, so at most one update fires per move."""
    chain = None
    for update in sorted(updates, key=lambda u: u.value, reverse=True):
        assign = Assign((aux,), (Const(update.value, aux.sort),))
        chain = GuardedAssign(update.condition, assign, chain)
    return chain


def _unwrap(instr) -> Tuple:
    if isinstance(instr, CCR):
        return (Block(instr.body),)
    return (instr,)


def assemble(source: ConcurrentProgram, guards: GuardTable,
             extra_shared: Sequence[Declaration] = (),
             aux_variable: Optional[str] = None) -> ConcurrentProgram:
    """
    Wrap every instruction of ``source`` in a CCR built from the guard table.

    Variables a guard reads that its process cannot see are added to the
    ``expose`` list, so the printed program parses back.
    """
    shared = tuple(source.shared) + tuple(extra_shared)
    aux = None
    if aux_variable is not None:
        decl = next(d for d in extra_shared if d.name == aux_variable)
        aux = decl.var
    processes = []
    for p in source.processes:
        instructions = []
        for label, instr in zip(p.labels, p.instructions):
            entry = guards[(p.index, label)]
            body = _unwrap(instr)
            chain = aux_chain(aux, entry.aux_updates) if aux is not None and entry.aux_updates else None
            if chain is not None:
                body = (chain,) + body
            instructions.append(CCR(entry.guard, body))
        processes.append(Process(p.name, p.index, p.locals, p.labels, tuple(instructions)))
    draft = ConcurrentProgram(shared, tuple(processes), tuple(source.exposed))

    exposed = set(source.exposed)
    for p in draft.processes:
        visible = draft.visible_to(p)
        for instr in p.instructions:
            exposed |= reads(instr) - visible
    return replace(draft, exposed=tuple(sorted(exposed)))


def erase(program: ConcurrentProgram, aux_variable: Optional[str] = None) -> ConcurrentProgram:
    """Strip CCR guards and auxiliary updates, recovering the unsynchronized bodies."""
    processes = []
    for p in program.processes:
        instructions = []
        for instr in p.instructions:
            if not isinstance(instr, CCR):
                instructions.append(instr)
                continue
            body = list(instr.body)
            if body and aux_variable is not None and _is_aux_chain(body[0], aux_variable):
                body = body[1:]
            if len(body) == 1:
                instructions.append(body[0])
            else:
                instructions.append(Block(tuple(body)))
        processes.append(Process(p.name, p.index, p.locals, p.labels, tuple(instructions)))
    shared = tuple(d for d in program.shared if d.name != aux_variable)
    return ConcurrentProgram(shared, tuple(processes), program.exposed)


def _is_aux_chain(st, aux_variable: str) -> bool:
    while isinstance(st, GuardedAssign):
        if [t.name for t in st.assign.targets] != [aux_variable]:
            return False
        st = st.orelse
    return st is None


@dataclass
class SynchronizedProgram:
    """The CCR program together with the table its guards came from."""

    source: ConcurrentProgram
    guards: GuardTable
    extra_shared: Tuple[Declaration, ...] = ()
    aux_variable: Optional[str] = None
    warnings: List[str] = field(default_factory=list)
    projection: str = "none"
    per_valuation: Dict[Valuation, "SynchronizedProgram"] = field(default_factory=dict)

    @cached_property
    def program(self) -> ConcurrentProgram:
        return assemble(self.source, self.guards, self.extra_shared, self.aux_variable)

    @property
    def aux_domain(self) -> Optional[Tuple[int, ...]]:
        for d in self.extra_shared:
            if d.name == self.aux_variable:
                return tuple(d.sort.domain)
        return None

    def guard(self, process: int, label: str) -> Guard:
        return self.guards[(process, label)].guard

    def entries(self) -> List[GuardEntry]:
        return [self.guards[key] for key in sorted(self.guards)]

    def with_guards(self, guards: GuardTable, projection: str) -> "SynchronizedProgram":
        return SynchronizedProgram(self.source, guards, self.extra_shared, self.aux_variable,
                                   list(self.warnings), projection, dict(self.per_valuation))

    def to_dict(self) -> dict:
        return {
            "aux_variable": self.aux_variable,
            "aux_domain": list(self.aux_domain) if self.aux_domain else None,
            "projection": self.projection,
            "exposed": list(self.program.exposed),
            "warnings": list(self.warnings),
            "guards": [e.to_dict() for e in self.entries()],
        }

    def rows(self) -> List[dict]:
        """One flat record per location for the tabular guard report."""
        rows = []
        for e in self.entries():
            p = self.source.process(e.process)
            rows.append({
                "process": p.name,
                "label": e.label,
                "guard": str(e.guard),
                "enabled_states": len(e.enabled_states),
                "aux_updates": "; ".join(f"{self.aux_variable} := {u.value} if {u.condition}"
                                         for u in e.aux_updates),
            })
        return rows

    @classmethod
    def from_program(cls, program: ConcurrentProgram) -> "SynchronizedProgram":
        """
        Read the guard table back off a CCR program, e.g. one loaded from disk.

        The auxiliary variable is the shared variable that is only ever written
        by leading if/else-if chains of CCR bodies.
        """
        aux_variable = _find_aux(program)
        source = erase(program, aux_variable)
        guards: GuardTable = {}
        for p in program.processes:
            for label, instr in zip(p.labels, p.instructions):
                guard = instr.guard if isinstance(instr, CCR) else TRUE
                updates = []
                if isinstance(instr, CCR) and instr.body and aux_variable is not None \
                        and _is_aux_chain(instr.body[0], aux_variable):
                    st = instr.body[0]
                    while st is not None:
                        updates.append(AuxUpdate(st.assign.sources[0].value, st.guard))
                        st = st.orelse
                guards[(p.index, label)] = GuardEntry(p.index, label, guard, [], updates)
        extra = tuple(d for d in program.shared if d.name == aux_variable)
        sp = cls(source, guards, extra, aux_variable, projection="loaded")
        # Plain instructions run unguarded; the compiler expects a CCR everywhere.
        processes = tuple(replace(p, instructions=tuple(
            i if isinstance(i, CCR) else CCR(TRUE, (i,)) for i in p.instructions)) for p in program.processes)
        sp.__dict__["program"] = replace(program, processes=processes)
        return sp


def _find_aux(program: ConcurrentProgram) -> Optional[str]:
    leading, elsewhere = set(), set()
    for p in program.processes:
        for instr in p.instructions:
            if not isinstance(instr, CCR):
                elsewhere |= writes(instr)
                continue
            body = list(instr.body)
            if body and isinstance(body[0], GuardedAssign):
                names = set()
                st = body[0]
                while isinstance(st, GuardedAssign):
                    names |= {t.name for t in st.assign.targets}
                    st = st.orelse
                if len(names) == 1 and st is None:
                    leading |= names
                    body = body[1:]
            for st in body:
                elsewhere |= writes(st)
    shared = {d.name for d in program.shared}
    candidates = sorted((leading & shared) - elsewhere)
    return candidates[0] if candidates else None


# --- Simplification ---

def _cube_key(cube: Mapping) -> Tuple:
    return tuple(sorted((name, format_value(value)) for name, value in cube.items()))


def _merge(cubes: Iterable[Mapping], sorts: Mapping[str, Sort]) -> List[Dict]:
    pool = {frozenset(c.items()) for c in cubes}
    changed = True
    while changed:
        changed = False
        for name in sorted(sorts):
            groups: Dict[FrozenSet, set] = {}
            for cube in pool:
                values = dict(cube)
                if name in values:
                    groups.setdefault(cube - {(name, values[name])}, set()).add(values[name])
            for rest, values in groups.items():
                if set(sorts[name].domain) <= values:
                    for value in values:
                        pool.discard(rest | {(name, value)})
                    pool.add(rest)
                    changed = True
        absorbed = {c for c in pool if any(other < c for other in pool)}
        if absorbed:
            pool -= absorbed
            changed = True
    return sorted((dict(c) for c in pool), key=_cube_key)


def simplify(g: Guard, sorts: Optional[Mapping[str, Sort]] = None) -> Guard:
    """
    Equivalent guard with fewer atoms.

    Cubes that differ in one variable and together cover its domain are merged,
    and cubes implied by a smaller one are absorbed. A guard that is not a
    disjunction of simple-atom cubes is first expanded through its truth table.
    """
    if g in (TRUE, FALSE):
        return g
    found = dict(guard_sorts(g))
    if sorts:
        found.update({n: s for n, s in sorts.items() if n in found})
    cubes = guard_cubes(g)
    if cubes is None:
        cubes = [v.to_dict() for v in all_valuations(found) if eval_guard(g, v)]
    merged = _merge(cubes, found)
    if not merged:
        return FALSE
    if any(not c for c in merged):
        return TRUE
    variables = {name: Var(name, sort) for name, sort in found.items()}
    return disj(cube_guard(c, variables) for c in merged)


# --- Extraction ---

def _state_cube(label: Valuation, exclude: Iterable[str], sorts: Mapping[str, Sort]) -> Guard:
    values = label.drop(exclude).to_dict()
    return cube_guard(values, {name: Var(name, sorts[name]) for name in values})


def enabled_states(m: ExtractedModel, p: ConcurrentProgram) -> Dict[Tuple[int, str], List[int]]:
    """
    States where each instruction is enabled, checked against the program.

    Raises:
        ExtractionError: A model transition is not a legal move of its process.
    """
    aux = [m.aux_variable] if m.aux_variable else []
    enabled: Dict[Tuple[int, str], set] = {}
    assigns: Dict[Tuple[int, int], set] = {}
    for tr in m.transitions:
        process = p.process(tr.process)
        source, target = m.labels[tr.source], m.labels[tr.target]
        label = source[process.control.name]
        try:
            expected = execute_instruction(process, label, source.drop(aux))
        except PartialApplication as e:
            raise ExtractionError(f"Transition {tr.as_tuple()} is undefined: {e.message}", stage="synth")
        if expected is None or expected != target.drop(aux):
            raise ExtractionError(f"Transition {tr.as_tuple()} is not a move of {process.name} at {label}",
                                  stage="synth")
        enabled.setdefault((tr.process, label), set()).add(tr.source)
        assigns.setdefault((tr.source, tr.process), set()).add(tr.assign)
    for (s, i), values in sorted(assigns.items()):
        if len(values) > 1:
            raise ExtractionError(f"State {s} has conflicting auxiliary updates for process {i}",
                                  stage="synth")
    return {key: sorted(states) for key, states in enabled.items()}


def extract_ccrs(m: ExtractedModel, p: ConcurrentProgram) -> SynchronizedProgram:
    """
    Decompose a disambiguated model into one CCR per location.

    The guard at (i, l) is the disjunction of the valuations, minus locᵢ, of
    the states where process i moves from l. Each annotated transition out of
    such a state adds ``if (G_s) x := j`` in front of the instruction.

    Args:
        m: Model extracted from the tableau of φ_P ∧ φ_spec, disambiguated.
        p: The program φ_P was generated from.

    Returns:
        SynchronizedProgram: CCR program with simplified guards.
    """
    enabled = enabled_states(m, p)
    by_source = {(tr.source, tr.process): tr for tr in m.transitions}
    guards: GuardTable = {}
    warnings = []
    for process in p.processes:
        control = process.control.name
        for label in process.labels:
            states = enabled.get((process.index, label), [])
            if not states:
                message = f"{process.name}.{label} is never enabled in the model; its guard is false"
                logger.warning(message)
                warnings.append(message)
                guards[(process.index, label)] = GuardEntry(process.index, label, FALSE)
                continue
            cubes = {s: _state_cube(m.labels[s], [control], m.sorts) for s in states}
            guard = simplify(disj(cubes[s] for s in states), m.sorts)
            updates: Dict[int, List[Guard]] = {}
            for s in states:
                tr = by_source[(s, process.index)]
                if tr.assign is not None:
                    updates.setdefault(tr.assign, []).append(cubes[s])
            aux_updates = [AuxUpdate(value, simplify(disj(conditions), m.sorts))
                           for value, conditions in sorted(updates.items())]
            guards[(process.index, label)] = GuardEntry(process.index, label, guard, states, aux_updates)

    extra = ()
    if m.aux_variable is not None:
        extra = (Declaration(m.aux_variable, m.sorts[m.aux_variable], 0),)
    sp = SynchronizedProgram(p, guards, extra, m.aux_variable, warnings, "none")
    logger.info(f"Extracted {len(guards)} CCRs from a model of {m.size} states")
    return sp


# --- Initial-value unification ---

def shadow_name(name: str, taken: Iterable[str]) -> str:
    taken = set(taken)
    base = f"{name}0" if "." not in name else name.replace(".", "_") + "0"
    candidate, n = base, 1
    while candidate in taken:
        candidate = f"{base}_{n}"
        n += 1
    return candidate


def _skeleton(p: ConcurrentProgram) -> Tuple:
    return tuple((q.name, q.labels, q.instructions) for q in p.processes)


def unify_inits(per_valuation: Mapping[Valuation, SynchronizedProgram],
                program: Optional[ConcurrentProgram] = None) -> SynchronizedProgram:
    """
    Merge the CCR programs synthesized for each initial valuation into one.

    Every input variable v gets a read-only shadow v0 holding its initial
    value. A guard G of the program for valuation υ becomes
    ``(⋀ v0 = υ(v)) ∧ G`` and the unified guard is the disjunction over υ.

    Raises:
        SkeletonMismatch: The per-valuation programs differ outside their guards.
    """
    if not per_valuation:
        raise ValueError("Nothing to unify")
    items = sorted(per_valuation.items(), key=lambda kv: kv[0].sort_key())
    first = items[0][1]
    program = program or first.source
    for valuation, sp in items:
        if _skeleton(sp.source) != _skeleton(program):
            raise SkeletonMismatch(f"Program for {valuation!r} has a different skeleton", stage="synth")
    inputs = [v for v in program.input_variables]
    if not inputs:
        return first

    # Reuse shadows declared in the source; invent the rest.
    taken = set(program.sorts)
    shadows: Dict[str, Var] = {}
    extra: List[Declaration] = []
    for v in inputs:
        declared = [d for d in program.declarations if d.shadow_of == v.name]
        if declared:
            shadows[v.name] = declared[0].var
            continue
        name = shadow_name(v.name, taken)
        taken.add(name)
        shadows[v.name] = Var(name, v.sort)
        extra.append(Declaration(name, v.sort, None, None, v.name))

    aux_variable = next((sp.aux_variable for _, sp in items if sp.aux_variable), None)
    aux_max = max((max(sp.aux_domain) for _, sp in items if sp.aux_domain), default=0)
    aux_sort = Sort.range(0, aux_max)

    def retag(g: Guard) -> Guard:
        # Per-valuation guards carry x with that run's domain.
        if aux_variable is None:
            return g
        return substitute_guard(g, {aux_variable: Var(aux_variable, aux_sort)})

    def tagged(valuation: Valuation, g: Guard) -> Guard:
        marker = conj(Test(simple_atom(shadows[v.name], valuation[v.name])) for v in inputs)
        return conj([marker, retag(g)])

    guards: GuardTable = {}
    warnings = []
    for key in sorted(first.guards):
        entries = [(valuation, sp.guards[key]) for valuation, sp in items]
        guard = disj(tagged(valuation, e.guard) for valuation, e in entries if e.guard != FALSE)
        updates: Dict[int, List[Guard]] = {}
        for valuation, e in entries:
            for u in e.aux_updates:
                updates.setdefault(u.value, []).append(tagged(valuation, u.condition))
        guards[key] = GuardEntry(key[0], key[1], simplify(guard),
                                 [], [AuxUpdate(j, simplify(disj(c))) for j, c in sorted(updates.items())])
    for _, sp in items:
        warnings += [w for w in sp.warnings if w not in warnings]
    if aux_variable is not None:
        extra.append(Declaration(aux_variable, aux_sort, 0))
    unified = SynchronizedProgram(program, guards, tuple(extra), aux_variable, warnings,
                                  first.projection, dict(per_valuation))
    logger.info(f"Unified {len(items)} initial valuations over inputs "
                f"{', '.join(v.name for v in inputs)}")
    return unified


# --- Observability ---

@dataclass(frozen=True)
class ObservabilityVerdict:
    kind: str
    processes: Tuple[int, ...] = ()
    shared: Tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "processes": list(self.processes), "shared": list(self.shared)}


def shared_names(m: ExtractedModel, p: ConcurrentProgram) -> FrozenSet[str]:
    """X: shared data variables, exposures and the auxiliary variable."""
    names = {d.name for d in p.shared} | set(p.exposed)
    if m.aux_variable:
        names.add(m.aux_variable)
    return frozenset(n for n in names if n in m.sorts)


def _identifies(labels: Sequence[Valuation], names: Iterable[str]) -> bool:
    seen: Dict[Valuation, Valuation] = {}
    for label in labels:
        key = label.restrict(names)
        if key in seen and seen[key] != label:
            return False
        seen[key] = label
    return True


def check_observability(m: ExtractedModel, p: ConcurrentProgram) -> ObservabilityVerdict:
    """
    Decide which variable sets tell the model's states apart.

    ``fully-shared``: the valuation of X determines the state. ``per-process``:
    for the listed processes, X plus the process's own location and locals
    determines it. ``limited``: neither holds for any process.
    """
    x = shared_names(m, p)
    if _identifies(m.labels, x):
        return ObservabilityVerdict(FULLY_SHARED, tuple(q.index for q in p.processes), tuple(sorted(x)))
    observable = []
    for q in p.processes:
        own = {q.control.name} | {d.name for d in q.locals}
        if _identifies(m.labels, x | own):
            observable.append(q.index)
    kind = PER_PROCESS if observable else LIMITED
    verdict = ObservabilityVerdict(kind, tuple(observable), tuple(sorted(x)))
    logger.info(f"Observability: {kind} {list(observable) if observable else ''}".rstrip())
    return verdict


# --- Projection ---

def _project(labels: Iterable[Valuation], names: FrozenSet[str], sorts: Mapping[str, Sort]) -> Guard:
    cubes = {}
    for label in labels:
        values = label.restrict(names).to_dict()
        cubes[_cube_key(values)] = values
    if not cubes:
        return FALSE
    variables = {name: Var(name, sorts[name]) for name in names}
    return simplify(disj(cube_guard(c, variables) for _, c in sorted(cubes.items())), sorts)


def project_guards(sp: SynchronizedProgram, m: ExtractedModel, verdict: ObservabilityVerdict,
                   spec: Optional[Formula] = None, initials: Optional[Sequence[Valuation]] = None,
                   limited: Optional[Iterable[int]] = None) -> SynchronizedProgram:
    """
    Rewrite guards over the variables each process can read.

    Processes the verdict marks observable get the exact projection of their
    enabled states. The others get ``¬(⋁ blocked)``, where ``blocked`` are the
    visible projections of states at the location whose instruction is not
    enabled there; this accepts fewer states than the exact guard.

    Args:
        limited: Processes forced onto the ``¬(⋁ blocked)`` form.

    Raises:
        ProjectionUnsound: ``spec`` no longer holds, or the result deadlocks.
            ``fallback`` is ``sp`` unchanged.
    """
    x = shared_names(m, sp.source)
    forced = set(limited or ())
    guards: GuardTable = {}
    for key, entry in sorted(sp.guards.items()):
        i, label = key
        process = sp.source.process(i)
        control = process.control.name
        own = frozenset(d.name for d in process.locals)
        exact = verdict.kind == FULLY_SHARED or i in verdict.processes
        names = (x if verdict.kind == FULLY_SHARED else x | own)
        names = frozenset(n for n in names if n != control)
        at_label = [s for s, lab in enumerate(m.labels) if lab[control] == label]
        enabled = set(entry.enabled_states)
        if exact and i not in forced:
            guard = _project((m.labels[s] for s in entry.enabled_states), names, m.sorts)
        else:
            names = frozenset(n for n in x | own if n != control)
            blocked = _project((m.labels[s] for s in at_label if s not in enabled), names, m.sorts)
            guard = TRUE if blocked == FALSE else _negate(blocked, m.sorts)
        updates = []
        for u in entry.aux_updates:
            sources = [s for s in entry.enabled_states
                       if eval_guard(u.condition, m.labels[s])]
            updates.append(AuxUpdate(u.value, _project((m.labels[s] for s in sources), names, m.sorts)))
        guards[key] = GuardEntry(i, label, guard, list(entry.enabled_states), updates)

    kind = verdict.kind if not forced else LIMITED
    projected = sp.with_guards(guards, kind)
    if spec is not None:
        try:
            result = program_satisfies(projected.program, spec, initials)
        except NonTotalModel as e:
            raise ProjectionUnsound(f"Projected program deadlocks: {e.message}", fallback=sp, witness=e.state)
        if not result.holds:
            raise ProjectionUnsound("Projected program violates the specification",
                                    fallback=sp, witness=result.witness)
    return projected


def _negate(g: Guard, sorts: Mapping[str, Sort]) -> Guard:
    cubes = guard_cubes(g)
    if cubes is not None and len(cubes) == 1:
        names = sorted(cubes[0])
        return disj(Neg(Test(simple_atom(Var(n, sorts[n]), cubes[0][n]))) for n in names)
    return Neg(g)


def initial_states(program: ConcurrentProgram, mode: str = "all-init",
                   restrict: Optional[Valuation] = None) -> List[Valuation]:
    """Initial valuations of a CCR program, optionally only those extending ``restrict``."""
    states = initial_valuations(program, mode)
    if restrict is None:
        return states
    return [s for s in states if all(s[n] == v for n, v in restrict.items() if n in s)]
