import pytest

from ccr_synthesizer import (FULLY_SHARED, LIMITED, PER_PROCESS, AuxUpdate,
                             GuardEntry, SynchronizedProgram, aux_chain,
                             check_observability, erase, extract_ccrs,
                             initial_states, project_guards, shadow_name,
                             simplify, unify_inits)
from helpers import MUTEX_SKELETON, MUTEX_SPEC, parse_with_spec
from main import Synthesizer
from model_extractor import ExtractedModel, ModelTransition
from phi_generator import generate_phi_p
from tableau_builder import build_tableau
from utils.config import PipelineConfig
from utils.errors import ExtractionError, ProjectionUnsound, SkeletonMismatch
from utils.lang.parser import parse_program
from utils.lang.printer import format_program
from utils.lang.program import CCR
from utils.logic.formula import conj as formula_conj, to_nnf
from utils.logic.model_checker import program_satisfies
from utils.logic.spec_parser import parse_spec
from utils.vocab.guards import (FALSE, TRUE, Test, cube_guard, disj,
                                eval_guard, guard_cubes, guard_sorts)
from utils.vocab.sorts import Sort
from utils.vocab.terms import Equals, Var, simple_atom
from utils.vocab.valuation import Valuation, all_valuations

D2 = Sort.range(0, 1)
V = Var("v", D2)
W = Var("w", D2)
VARS = {"v": V, "w": W}

WRITER = """
shared a: {0..1} with a = 0;
process P1 {
    s: a := 1;
    h: goto h
}
process P2 {
    w: goto w
}
"""


def equivalent(g, h, sorts):
    return all(eval_guard(g, s) == eval_guard(h, s) for s in all_valuations(sorts))


# --- Simplification ---

def test_cubes_covering_a_domain_merge():
    g = disj([cube_guard({"v": 0, "w": 0}, VARS), cube_guard({"v": 0, "w": 1}, VARS)])
    assert str(simplify(g)) == "v = 0"


def test_implied_cubes_are_absorbed():
    g = disj([cube_guard({"v": 0}, VARS), cube_guard({"v": 0, "w": 1}, VARS)])
    assert str(simplify(g)) == "v = 0"
    assert simplify(disj([cube_guard({"v": 0}, VARS), cube_guard({"v": 1}, VARS)])) == TRUE


def test_non_cube_guards_go_through_the_truth_table():
    g = Test(Equals(V, W))
    result = simplify(g)
    assert len(guard_cubes(result)) == 2
    assert equivalent(g, result, {"v": D2, "w": D2})


def test_aux_updates_form_one_chain():
    g1, g2 = Test(simple_atom(V, 0)), Test(simple_atom(V, 1))
    aux = Var("x", Sort.range(0, 2))
    chain = aux_chain(aux, [AuxUpdate(2, g2), AuxUpdate(1, g1)])
    assert chain.guard == g1
    assert chain.orelse.guard == g2
    assert chain.orelse.orelse is None


# --- Extraction from a hand-built model ---

def writer_model(extra_state=True):
    """S0 = (s, w, a=0) and S1 = (h, w, a=1); S2 = (s, w, a=1) is a state where P1 waits."""
    program = parse_program(WRITER)
    labels = [Valuation(loc1="s", loc2="w", a=0), Valuation(loc1="h", loc2="w", a=1)]
    transitions = [ModelTransition(0, 1, 1), ModelTransition(0, 2, 0),
                   ModelTransition(1, 1, 1), ModelTransition(1, 2, 1)]
    if extra_state:
        labels.append(Valuation(loc1="s", loc2="w", a=1))
        transitions.append(ModelTransition(2, 2, 2))
    return program, ExtractedModel(labels, transitions, [0], 2, program.sorts)


def test_guards_are_the_enabled_states():
    program, model = writer_model(extra_state=False)
    sp = extract_ccrs(model, program)
    assert str(sp.guard(1, "s")) == "a = 0"
    assert str(sp.guard(1, "h")) == "a = 1"
    assert sp.guards[(2, "w")].enabled_states == [0, 1]
    assert all(isinstance(i, CCR) for p in sp.program.processes for i in p.instructions)
    assert "loc1" in sp.program.exposed
    assert len(sp.rows()) == 3


def test_illegal_model_transition():
    program = parse_program(WRITER)
    labels = [Valuation(loc1="s", loc2="w", a=0)]
    model = ExtractedModel(labels, [ModelTransition(0, 1, 0)], [0], 2, program.sorts)
    with pytest.raises(ExtractionError):
        extract_ccrs(model, program)


def test_never_enabled_location_gets_false():
    program = parse_program(WRITER)
    model = ExtractedModel([Valuation(loc1="s", loc2="w", a=0)], [ModelTransition(0, 2, 0)],
                           [0], 2, program.sorts)
    sp = extract_ccrs(model, program)
    assert sp.guard(1, "s") == FALSE
    assert sp.guard(1, "h") == FALSE
    assert len(sp.warnings) == 2


# --- Observability and projection ---

def observed(*labels):
    program = parse_program(WRITER)
    model = ExtractedModel([Valuation(loc1=l1, loc2="w", a=a) for l1, a in labels], [], [0], 2,
                           program.sorts)
    return check_observability(model, program)


def test_observability_verdicts():
    assert observed(("s", 0), ("h", 1)).kind == FULLY_SHARED
    verdict = observed(("s", 0), ("h", 1), ("s", 1))
    assert verdict.kind == PER_PROCESS
    assert verdict.processes == (1,)
    assert verdict.shared == ("a",)
    assert observed(("s", 0), ("h", 0)).kind == PER_PROCESS


def test_limited_observability():
    program = parse_program("""
        shared a: {0..1} with a = 0;
        process P1 { s: goto h; h: goto s }
        process P2 { s: goto h; h: goto s }
    """)
    labels = [Valuation(loc1="s", loc2="s", a=0), Valuation(loc1="s", loc2="h", a=0),
              Valuation(loc1="h", loc2="s", a=0)]
    verdict = check_observability(ExtractedModel(labels, [], [0], 2, program.sorts), program)
    assert verdict.kind == LIMITED
    assert verdict.processes == ()


def test_observable_process_gets_the_exact_projection():
    program, model = writer_model()
    sp = extract_ccrs(model, program)
    verdict = check_observability(model, program)
    spec = parse_spec("AG (loc1 = h -> a = 1)", program.symbols(), 2)
    projected = project_guards(sp, model, verdict, spec)
    assert str(projected.guard(1, "s")) == "a = 0"
    assert projected.guard(2, "w") == TRUE
    assert projected.projection == PER_PROCESS


def test_forced_limited_form_negates_the_blocked_states():
    program, model = writer_model()
    sp = extract_ccrs(model, program)
    projected = project_guards(sp, model, check_observability(model, program), limited=[1])
    assert str(projected.guard(1, "s")) == "!(a = 1)"
    assert projected.projection == LIMITED


def test_unsound_projection_falls_back():
    program, model = writer_model()
    sp = extract_ccrs(model, program)
    spec = parse_spec("AG a = 0", program.symbols(), 2)
    with pytest.raises(ProjectionUnsound) as info:
        project_guards(sp, model, check_observability(model, program), spec)
    assert info.value.fallback is sp


@pytest.fixture
def limited_writer():
    program, model = writer_model()
    sp = extract_ccrs(model, program)
    return program, model, sp, check_observability(model, program)


def test_limited_projection_keeps_a_safety_property(limited_writer):
    program, model, sp, verdict = limited_writer
    spec = parse_spec("AG (loc1 = h -> a = 1)", program.symbols(), 2)
    initials = initial_states(sp.program)
    projected = project_guards(sp, model, verdict, spec, initials, limited=[1, 2])
    assert projected.projection == LIMITED
    assert projected.guard(2, "w") == TRUE
    assert program_satisfies(projected.program, spec, initials).holds


# --- Initial-value unification ---

INPUT_PROGRAM = "shared v: {0..1};\nprocess P1 { s: goto s }"


def table(guard):
    return {(1, "s"): GuardEntry(1, "s", guard)}


def test_unified_guards_are_tagged_with_the_shadow():
    program = parse_program(INPUT_PROGRAM)
    runs = {
        Valuation(loc1="s", v=0): SynchronizedProgram(program, table(TRUE)),
        Valuation(loc1="s", v=1): SynchronizedProgram(program, table(FALSE)),
    }
    sp = unify_inits(runs, program)
    assert [d.name for d in sp.extra_shared] == ["v0"]
    assert str(sp.guard(1, "s")) == "v0 = 0"
    assert sp.guards[(1, "s")].enabled_states == []
    assert len(sp.per_valuation) == 2
    initials = initial_states(sp.program, "with-inputs", Valuation(v=1))
    assert initials == [Valuation(loc1="s", v=1, v0=1)]


def test_unification_needs_one_skeleton():
    program = parse_program(INPUT_PROGRAM)
    other = parse_program("shared v: {0..1};\nprocess P1 { s: goto t; t: goto s }")
    runs = {
        Valuation(loc1="s", v=0): SynchronizedProgram(program, table(TRUE)),
        Valuation(loc1="s", v=1): SynchronizedProgram(other, table(TRUE)),
    }
    with pytest.raises(SkeletonMismatch):
        unify_inits(runs, program)


def test_shadow_names_avoid_collisions():
    assert shadow_name("v", ["v"]) == "v0"
    assert shadow_name("v", ["v", "v0"]) == "v0_1"
    assert shadow_name("P1.y", []) == "P1_y0"


# --- Synthesis of the two-process mutex ---

@pytest.fixture(scope="module")
def mutex_run():
    program, spec = parse_with_spec(MUTEX_SKELETON, MUTEX_SPEC)
    synthesizer = Synthesizer(PipelineConfig())
    synthesizer.program, synthesizer.spec, synthesizer.mode = program, spec, "all-init"
    return synthesizer, synthesizer.synthesize_valuation(None)


def test_synthesized_mutex_satisfies_the_specification(mutex_run):
    synthesizer, run = mutex_run
    assert synthesizer.verify(run.synchronized).holds


def test_erasing_guards_recovers_the_skeleton(mutex_run):
    synthesizer, run = mutex_run
    sp = run.synchronized
    erased = erase(sp.program, sp.aux_variable)
    assert erased.processes == synthesizer.program.processes
    assert [d.name for d in erased.shared] == []


def test_printed_program_reloads_with_the_same_guards(mutex_run):
    _, run = mutex_run
    sp = run.synchronized
    loaded = SynchronizedProgram.from_program(parse_program(format_program(sp.program)))
    assert loaded.aux_variable == sp.aux_variable
    for key, entry in sp.guards.items():
        mine, theirs = entry.guard, loaded.guards[key].guard
        sorts = {**guard_sorts(mine), **guard_sorts(theirs)}
        assert equivalent(mine, theirs, sorts)
        assert [u.value for u in loaded.guards[key].aux_updates] == [u.value for u in entry.aux_updates]


COPY = """
shared x, y: {0..1} with x = 0, y = 0;
process P1 {
    set: x := 1;
    halt: goto halt
}
process P2 {
    read: y := x;
    halt: goto halt
}
"""


def test_copied_values_follow_the_writer():
    program, spec = parse_with_spec(COPY, "AG (loc2 = halt -> y = 1)")
    synthesizer = Synthesizer(PipelineConfig())
    synthesizer.program, synthesizer.spec, synthesizer.mode = program, spec, "all-init"
    run = synthesizer.synthesize_valuation(None)
    assert synthesizer.verify(run.synchronized).holds
    labels = run.model.labels
    for t in run.model.transitions:
        source, target = labels[t.source], labels[t.target]
        if t.process == 2 and source["loc2"] == "read":
            assert (target["x"], target["y"]) == (source["x"], source["x"])
        if t.process == 1 and source["loc1"] == "set":
            assert (target["x"], target["y"]) == (1, source["y"])
    assert all(label["y"] == 1 for label in labels if label["loc2"] == "halt")


def mutex_tableau_nodes(size):
    """Tableau size for the mutex with an extra unconstrained variable of ``size`` values."""
    program, spec = parse_with_spec(MUTEX_SKELETON, MUTEX_SPEC)
    phi = generate_phi_p(program, "all-init")
    full = to_nnf(formula_conj([phi.conjunction, spec]), 2)
    sorts = {**program.sorts, "d": Sort.range(0, size - 1)}
    return build_tableau(full, sorts, 2, per_process=True).stats()["nodes"]


def test_doubling_a_domain_at_most_squares_the_tableau():
    small, big = mutex_tableau_nodes(2), mutex_tableau_nodes(4)
    assert small < big <= small ** 2
