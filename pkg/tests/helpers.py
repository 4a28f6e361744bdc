"""Shared test data: benchmark loading and small inline programs."""
from itertools import product
from pathlib import Path

from utils.lang.parser import parse_program
from utils.logic.formula import (AR, AU, AX, ER, EU, EX, And, AtomLit, NegAtom,
                                 Or, Top)
from utils.logic.model_checker import Model
from utils.logic.spec_parser import parse_spec
from utils.vocab.terms import Const, Pre, Var
from utils.vocab.valuation import Valuation

BENCHMARKS = Path(__file__).resolve().parent.parent / "benchmarks"

# Benchmarks with a fixed initial state, and the one with an input variable.
ALL_INIT = ["mutex2", "producer_consumer", "barrier", "mutex3", "halting"]
WITH_INPUTS = ["inputs"]

MUTEX_SKELETON = """
process P1 {
    ncs: goto try;
    try: goto cs;
    cs: goto ncs
}
process P2 {
    ncs: goto try;
    try: goto cs;
    cs: goto ncs
}
"""

MUTEX_SPEC = """
AG !(loc1 = cs & loc2 = cs);
AG (loc1 = try -> AF loc1 = cs);
AG (loc2 = try -> AF loc2 = cs)
"""


def load_benchmark(name):
    """(program, spec formula) for ``benchmarks/<name>.cp`` and ``.lctl``."""
    cp = BENCHMARKS / f"{name}.cp"
    lctl = BENCHMARKS / f"{name}.lctl"
    program = parse_program(cp.read_text(encoding="utf-8"), source=str(cp))
    spec = parse_spec(lctl.read_text(encoding="utf-8"), program.symbols(),
                      len(program.processes), source=str(lctl))
    return program, spec


def parse_with_spec(program_text, spec_text):
    program = parse_program(program_text)
    return program, parse_spec(spec_text, program.symbols(), len(program.processes))


DIAMOND_TEXT = """
shared a, b: {0..1} with a = 0, b = 0;
process P1 {
    s: a := 1;
    h: goto h
}
process P2 {
    s: b := 1;
    h: goto h
}
"""


def random_model(rng, size, processes=2):
    """A total model over x, y in {0..1}; every state gets one or two successors."""
    labels = [Valuation(x=rng.randint(0, 1), y=rng.randint(0, 1)) for _ in range(size)]
    transitions = set()
    for s in range(size):
        for _ in range(rng.randint(1, 2)):
            transitions.add((s, rng.randint(1, processes), rng.randrange(size)))
    return Model(labels, sorted(transitions), processes, [0])


def small_models(size, processes):
    """Every total model over x, y in {0..1} with states 0..size-1."""
    pairs = [(i, t) for i in range(1, processes + 1) for t in range(size)]
    moves = range(1, 2 ** len(pairs))
    for values in product(range(4), repeat=size):
        labels = [Valuation(x=v // 2, y=v % 2) for v in values]
        for choice in product(moves, repeat=size):
            transitions = [(s, i, t) for s, mask in enumerate(choice)
                           for b, (i, t) in enumerate(pairs) if mask >> b & 1]
            yield labels, transitions


class BitChecker:
    """Fixpoint evaluation over state bitmasks, independent of the numpy checker."""

    def __init__(self, labels, transitions, processes):
        self.labels = labels
        self.size = len(labels)
        self.full = (1 << self.size) - 1
        self.succ = {i: [0] * self.size for i in range(1, processes + 1)}
        self.any = [0] * self.size
        for s, i, t in transitions:
            self.succ[i][s] |= 1 << t
            self.any[s] |= 1 << t
        self.cache = {}

    def holds(self, f, state=0):
        return bool(self.sat(f) >> state & 1)

    def sat(self, f, pre=None):
        if pre is not None and isinstance(f, (AtomLit, NegAtom, And, Or)):
            return self._sat(f, pre)
        if f not in self.cache:
            self.cache[f] = self._sat(f, None)
        return self.cache[f]

    def _value(self, term, label, pre):
        if isinstance(term, Var):
            return label[term.name]
        if isinstance(term, Const):
            return term.value
        if isinstance(term, Pre) and pre is not None:
            return pre[term.term.name]
        raise TypeError(f"Unexpected term {term!r}")

    def _every(self, z):
        return sum(1 << s for s in range(self.size) if not self.any[s] & ~z)

    def _some(self, z):
        return sum(1 << s for s in range(self.size) if self.any[s] & z)

    def _sat(self, f, pre):
        if isinstance(f, Top):
            return self.full if f.value else 0
        if isinstance(f, (AtomLit, NegAtom)):
            bits = sum(1 << s for s, label in enumerate(self.labels)
                       if self._value(f.atom.left, label, pre) == self._value(f.atom.right, label, pre))
            return bits if isinstance(f, AtomLit) else self.full & ~bits
        if isinstance(f, And):
            return self.sat(f.left, pre) & self.sat(f.right, pre)
        if isinstance(f, Or):
            return self.sat(f.left, pre) | self.sat(f.right, pre)
        if isinstance(f, (EX, AX)):
            succ = self.succ.get(f.process, [0] * self.size)
            bits = 0
            for s in range(self.size):
                body = self.sat(f.body, self.labels[s])
                if isinstance(f, EX) and succ[s] & body:
                    bits |= 1 << s
                if isinstance(f, AX) and not succ[s] & ~body:
                    bits |= 1 << s
            return bits
        left, right = self.sat(f.left), self.sat(f.right)
        step = self._every if isinstance(f, (AU, AR)) else self._some
        if isinstance(f, (AU, EU)):
            z = 0
            while True:
                new = right | (left & step(z))
                if new == z:
                    return z
                z = new
        if isinstance(f, (AR, ER)):
            z = self.full
            while True:
                new = right & (left | step(z))
                if new == z:
                    return z
                z = new
        raise TypeError(f"Not an NNF formula: {f!r}")
