import pytest

from ccr_synthesizer import SynchronizedProgram
from code_generator import (COARSE, FINE, Op, build_signal_map,
                            check_lock_order, compile_coarse, compile_fine,
                            compile_program, lock_graph)
from helpers import load_benchmark, parse_with_spec
from lock_simulator import simulate_lock_semantics
from utils.errors import LockOrderViolation, SimDeadlock
from utils.lang.parser import parse_program
from utils.lang.semantics import build_transition_system, initial_valuations
from utils.logic.model_checker import holds_initially
from utils.logic.spec_parser import parse_spec

# P1 waits for P2's write; P2 then waits for P1 to clear it.
HANDOFF = """
shared a: {0..1} with a = 0;
process P1 {
    s: when a = 1 -> { a := 0; }
    h: goto h
}
process P2 {
    s: a := 1;
    h: when a = 0 -> { goto h; }
}
"""


@pytest.fixture
def handoff():
    return SynchronizedProgram.from_program(parse_program(HANDOFF))


def reachable(sp):
    program = sp.program
    return frozenset(build_transition_system(program, initial_valuations(program)).states)


# --- Plans ---

def test_writers_signal_the_guards_they_affect(handoff):
    plan = compile_coarse(handoff).plan
    assert plan.condvars == {(1, "s"): "cv_1_s", (2, "h"): "cv_2_h"}
    assert plan.signal_map == {(1, "s"): ["cv_2_h"], (1, "h"): [],
                               (2, "s"): ["cv_1_s"], (2, "h"): []}
    assert build_signal_map(handoff.program, plan.condvars) == plan.signal_map


def test_coarse_plan_has_one_lock(handoff):
    compiled = compile_coarse(handoff)
    assert compiled.plan.locks == ["l"]
    assert set(compiled.plan.condvar_locks.values()) == {"l"}
    assert compiled.block(1, "s").ops[-1] == Op("wait", "l", "cv_1_s", 1)


def test_fine_locks_are_totally_ordered(handoff):
    compiled = compile_fine(handoff)
    assert compiled.plan.locks == ["l_cv_1_s", "l_cv_2_h", "l_a"]
    assert compiled.block(1, "s").locks == ["l_a"]
    assert compiled.block(1, "s").wait_lock == "l_cv_1_s"
    assert ("l_cv_1_s", "l_a") in lock_graph(compiled).edges


def test_signals_are_sent_outside_the_guard_locks(handoff):
    ops = compile_fine(handoff).block(2, "s").ops
    kinds = [(op.kind, op.lock or op.cv) for op in ops]
    assert kinds.index(("release", "l_a")) < kinds.index(("signal", "cv_1_s"))


def test_out_of_order_acquisition_is_rejected(handoff):
    compiled = compile_fine(handoff)
    compiled.block(2, "s").ops = [Op("acquire", "l_a"), Op("acquire", "l_cv_1_s"),
                                  Op("release", "l_cv_1_s"), Op("release", "l_a"), Op("end")]
    with pytest.raises(LockOrderViolation):
        check_lock_order(compiled)


def test_unknown_granularity(handoff):
    with pytest.raises(ValueError):
        compile_program(handoff, "medium")


# --- Rendered code ---

def test_coarse_text(handoff):
    files = compile_coarse(handoff).files()
    assert sorted(files) == ["P1.coarse.sync", "P2.coarse.sync"]
    assert "while (!(a = 1)) wait(cv_1_s, l);" in files["P1.coarse.sync"]
    assert "signal(cv_1_s);" in files["P2.coarse.sync"]


def test_fine_text(handoff):
    text = compile_fine(handoff).files()["P1.fine.sync"]
    assert "// lock order: l_cv_1_s < l_cv_2_h < l_a" in text
    assert "bool guard_1_s() {" in text
    assert "lock(l_cv_1_s) { while (!guard_1_s()) wait(cv_1_s, l_cv_1_s); }" in text
    assert "lock(l_cv_2_h) { signal(cv_2_h); }" in text


# --- Simulation ---

@pytest.mark.parametrize("granularity", [COARSE, FINE])
def test_lock_semantics_preserve_the_ccr_behaviour(handoff, granularity):
    compiled = compile_program(handoff, granularity)
    result = simulate_lock_semantics(compiled, initial_valuations(handoff.program))
    assert result.valuations == reachable(handoff)
    spec = parse_spec("AG (loc1 = h -> a = 0)", handoff.program.symbols(), 2)
    assert holds_initially(result.to_model(2), spec)[0]


@pytest.mark.parametrize("granularity", [COARSE, FINE])
def test_dropped_signals_deadlock(handoff, granularity):
    silent = {(i, label): [] for i, label in compile_coarse(handoff).plan.signal_map}
    compiled = (compile_coarse if granularity == COARSE else compile_fine)(handoff, silent)
    with pytest.raises(SimDeadlock):
        simulate_lock_semantics(compiled, initial_valuations(handoff.program))


# --- Mutations ---

@pytest.fixture
def pingpong():
    program, spec = load_benchmark("pingpong")
    return SynchronizedProgram.from_program(program), spec


def without_signal(sp, location, cv):
    signals = {key: list(cvs) for key, cvs in compile_coarse(sp).plan.signal_map.items()}
    signals[location].remove(cv)
    return signals


@pytest.mark.parametrize("granularity", [COARSE, FINE])
def test_pingpong_passes_on_the_lock_graph(pingpong, granularity):
    sp, spec = pingpong
    result = simulate_lock_semantics(compile_program(sp, granularity), initial_valuations(sp.program))
    assert result.valuations == reachable(sp)
    assert holds_initially(result.to_model(2), spec)[0]
    assert result.explored == len(result.states) > len(result.valuations)


@pytest.mark.parametrize("granularity", [COARSE, FINE])
@pytest.mark.parametrize("location, cv", [((1, "serve"), "cv_2_serve"), ((2, "serve"), "cv_1_serve")])
def test_every_single_dropped_signal_is_caught(pingpong, granularity, location, cv):
    sp, _ = pingpong
    assert compile_coarse(sp).plan.signal_map[location] == [cv]
    compile = compile_coarse if granularity == COARSE else compile_fine
    compiled = compile(sp, without_signal(sp, location, cv))
    with pytest.raises(SimDeadlock):
        simulate_lock_semantics(compiled, initial_valuations(sp.program))


# A third process spins forever, so a lost wakeup starves the waiters
# without stopping every thread.
SPINNER = """
shared t: {0..1} with t = 0;
process P1 {
    serve: when t = 0 -> { t := 1; }
    back: goto serve
}
process P2 {
    serve: when t = 1 -> { t := 0; }
    back: goto serve
}
process P3 {
    spin: goto spin
}
"""
SPINNER_SPEC = "AG (t = 0 -> EF t = 1); AG (t = 1 -> EF t = 0)"


@pytest.mark.parametrize("granularity", [COARSE, FINE])
def test_starved_waiter_fails_the_lock_level_check(granularity):
    program, spec = parse_with_spec(SPINNER, SPINNER_SPEC)
    sp = SynchronizedProgram.from_program(program)
    intact = simulate_lock_semantics(compile_program(sp, granularity), initial_valuations(sp.program))
    assert holds_initially(intact.to_model(3), spec)[0]

    compile = compile_coarse if granularity == COARSE else compile_fine
    mutant = compile(sp, without_signal(sp, (1, "serve"), "cv_2_serve"))
    starved = simulate_lock_semantics(mutant, initial_valuations(sp.program))
    assert not holds_initially(starved.to_model(3), spec)[0]
