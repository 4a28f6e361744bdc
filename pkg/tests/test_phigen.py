import pytest

from helpers import DIAMOND_TEXT, MUTEX_SKELETON
from phi_generator import generate_phi_p, instruction_paths
from utils.errors import UninitializedInAllInitMode
from utils.lang.parser import parse_program
from utils.logic.formula import conjuncts, to_nnf
from utils.logic.model_checker import program_satisfies
from utils.logic.spec_parser import parse_spec
from utils.vocab.valuation import Valuation

HANDOFF = """
shared x: {0..1} with x = 0;
process P1 {
    s: when x = 1 -> { x := 0; }
    h: goto h
}
process P2 {
    s: x := 1;
    h: goto h
}
"""


def test_initial_clause_fixes_every_variable():
    phi = generate_phi_p(parse_program(DIAMOND_TEXT))
    assert str(phi.initial) == "(loc1 = s & (loc2 = s & (a = 0 & b = 0)))"


def test_interleaving_clause_per_ordered_pair():
    program = parse_program(MUTEX_SKELETON)
    clauses = [f for name, f in generate_phi_p(program).clauses() if name == "interleaving"]
    assert len(clauses) == 2
    assert "(!(loc1 = ncs) | AX2 loc1 = ncs)" in str(clauses[0])
    assert "(!(loc2 = cs) | AX1 loc2 = cs)" in str(clauses[1])


def test_progress_clause():
    phi = generate_phi_p(parse_program(DIAMOND_TEXT))
    assert str(phi.progress) == "AG (EX1 true | EX2 true)"


def test_assignment_moves_and_frames_the_data():
    phi = generate_phi_p(parse_program(DIAMOND_TEXT))
    rendered = [str(f) for f in phi.per_instruction]
    assert "AG (!(loc1 = s) | AX1 (loc1 = h & (a = pre(1) & b = pre(b))))" in rendered
    assert "AG (!(loc1 = h) | AX1 (loc1 = h & (a = pre(a) & b = pre(b))))" in rendered
    assert len(rendered) == 4


def test_blocked_ccr_has_no_successor_for_its_process():
    phi = generate_phi_p(parse_program(HANDOFF))
    p1_at_s = [str(f) for f in phi.per_instruction if "loc1 = s" in str(f)]
    assert len(p1_at_s) == 2
    assert any("AX1 false" in f for f in p1_at_s)
    assert any("x = pre(0)" in f for f in p1_at_s)


def test_branches_split_on_the_guard():
    program = parse_program("""
        shared a: {0..2} with a = 0;
        process P1 {
            s: atomic { if (a = 1) a := 2 else if (a = 2) a := 0; }
            t: if (a = 0) s, h;
            h: goto h
        }
    """)
    p = program.process(1)
    assert len(instruction_paths(p.instruction_at("s"))) == 3
    targets = [target for _, _, target in instruction_paths(p.instruction_at("t"))]
    assert targets == ["s", "h"]


def test_uninitialized_variables_need_with_inputs():
    program = parse_program("""
        shared v: {0..1};
        shared v0: {0..1} with v0 = v;
        process P1 { s: goto s }
    """)
    with pytest.raises(UninitializedInAllInitMode):
        generate_phi_p(program)
    initial = str(generate_phi_p(program, "with-inputs").initial)
    assert "(v = 0 | v = 1)" in initial
    assert "v0 = v" in initial


def test_initial_clause_for_one_valuation():
    program = parse_program(DIAMOND_TEXT)
    start = Valuation(loc1="s", loc2="s", a=1, b=0)
    phi = generate_phi_p(program, initial=start)
    assert str(phi.initial) == "(a = 1 & (b = 0 & (loc1 = s & loc2 = s)))"


@pytest.mark.parametrize("text", [DIAMOND_TEXT, MUTEX_SKELETON, HANDOFF])
def test_program_satisfies_its_own_semantics(text):
    program = parse_program(text)
    assert program_satisfies(program, generate_phi_p(program).conjunction).holds


def test_text_export_parses_to_the_same_clauses():
    program = parse_program(HANDOFF)
    phi = generate_phi_p(program)
    parsed = parse_spec(phi.to_text(), program.symbols(), len(program.processes))
    k = len(program.processes)
    assert set(conjuncts(to_nnf(parsed, k))) == set(conjuncts(to_nnf(phi.conjunction, k)))
