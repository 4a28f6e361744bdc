import sys
import time
import logging
import argparse
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

from alive_progress import alive_bar
from joblib import Parallel, delayed

from ccr_synthesizer import (ObservabilityVerdict, SynchronizedProgram,
                             check_observability, extract_ccrs, initial_states,
                             project_guards, unify_inits)
from code_generator import CompiledProgram, compile_program
from lock_simulator import SimulationResult, simulate_lock_semantics
from model_extractor import ExtractedModel, disambiguate, extract_model
from phi_generator import generate_phi_p
from tableau_builder import Tableau, build_tableau
from utils.config import DEFAULT_CONFIG_FILE, PipelineConfig, load_config
from utils.errors import (NonTotalModel, ProjectionUnsound, SynthesisError,
                          VerificationFailure)
from utils.export import (tableau_graph, write_csv, write_dot, write_json,
                          write_text)
from utils.lang.parser import parse_program
from utils.lang.printer import format_program
from utils.lang.program import ConcurrentProgram
from utils.lang.semantics import build_transition_system, initial_valuations
from utils.logger import setup_logger
from utils.logic.formula import Formula, conj, to_nnf
from utils.logic.model_checker import (CheckResult, holds_initially,
                                       program_satisfies)
from utils.logic.spec_parser import parse_spec
from utils.vocab.valuation import Valuation

logger = logging.getLogger("synthesizer")


@dataclass
class ValuationRun:
    """Everything synthesized for one initial valuation (or the single all-init run)."""

    initial: Optional[Valuation]
    tableau: Tableau
    model: ExtractedModel
    synchronized: SynchronizedProgram
    verdict: ObservabilityVerdict


class Synthesizer:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.output_dir = Path(config.output_dir)
        self.program: Optional[ConcurrentProgram] = None
        self.spec: Optional[Formula] = None
        self.mode = "all-init"
        self.report: Dict = {}

    # --- Inputs ---

    def load(self, with_spec: bool = True) -> None:
        program_path = Path(self.config.program)
        self.program = parse_program(program_path.read_text(encoding="utf-8"), source=str(program_path))
        if with_spec:
            spec_path = Path(self.config.spec)
            self.spec = parse_spec(spec_path.read_text(encoding="utf-8"), self.program.symbols(),
                                   len(self.program.processes), source=str(spec_path))
        self.mode = self.resolve_mode()

    def resolve_mode(self) -> str:
        inputs = self.program.input_variables
        if self.config.mode == "auto":
            return "with-inputs" if inputs else "all-init"
        if self.config.mode == "with-inputs" and not inputs:
            logger.warning("with-inputs mode needs an uninitialized variable; using all-init")
            return "all-init"
        return self.config.mode

    @property
    def processes(self) -> int:
        return len(self.program.processes)

    # --- Synthesis for one initial valuation ---

    def synthesize_valuation(self, initial: Optional[Valuation]) -> ValuationRun:
        phi = generate_phi_p(self.program, self.mode, initial)
        full = to_nnf(conj([phi.conjunction, self.spec]), self.processes)
        tableau = build_tableau(full, self.program.sorts, self.processes, per_process=True,
                                node_budget=self.config.node_budget)
        model = disambiguate(extract_model(tableau))
        synchronized = extract_ccrs(model, self.program)
        synchronized, verdict = self.apply_observability(synchronized, model, initial)
        return ValuationRun(initial, tableau, model, synchronized, verdict)

    def apply_observability(self, sp: SynchronizedProgram, model: ExtractedModel,
                            initial: Optional[Valuation]):
        verdict = check_observability(model, self.program)
        choice = self.config.observability
        if choice == "force-shared":
            return sp, verdict
        limited = [p.index for p in self.program.processes] if choice == "limited" else None
        initials = initial_states(sp.program, self.mode, initial)
        try:
            return project_guards(sp, model, verdict, self.spec, initials, limited), verdict
        except ProjectionUnsound as e:
            logger.warning(f"Guard projection rejected ({e.message}); keeping full guards. "
                           f"Control and local variables they read are exposed as shared")
            return e.fallback, verdict

    def synthesize_all(self) -> List[ValuationRun]:
        valuations = [None]
        if self.mode == "with-inputs":
            valuations = initial_valuations(self.program, self.mode)
        if self.config.jobs > 1 and len(valuations) > 1:
            return Parallel(n_jobs=self.config.jobs, prefer="threads")(
                delayed(self.synthesize_valuation)(v) for v in valuations)
        runs = []
        with alive_bar(len(valuations), title="Synthesizing", disable=not self.config.progress,
                       force_tty=True) as bar:
            for v in valuations:
                runs.append(self.synthesize_valuation(v))
                bar()
        return runs

    # --- Oracles ---

    def verify(self, sp: SynchronizedProgram) -> CheckResult:
        initials = initial_states(sp.program, self.mode)
        return program_satisfies(sp.program, self.spec, initials)

    def compile_and_simulate(self, sp: SynchronizedProgram, reachable: frozenset):
        compiled = compile_program(sp, self.config.target)
        initials = initial_states(sp.program, self.mode)
        simulation = simulate_lock_semantics(compiled, initials, self.config.progress)
        lock_model = simulation.to_model(self.processes)
        holds, failing = holds_initially(lock_model, self.spec)
        self.report["simulation"] = {
            "granularity": compiled.plan.granularity,
            "lock_states": simulation.explored,
            "valuations": len(simulation.valuations),
            "preserves_reachable": simulation.valuations == reachable,
            "verdict": "PASS" if holds else "FAIL",
            "witness": lock_model.labels[failing].to_dict() if failing is not None else None,
        }
        return compiled, simulation

    def check_simulation(self) -> None:
        """
        Raises:
            VerificationFailure: The lock-level program violates the specification
                or reaches a different set of valuations than its CCR program.
        """
        simulation = self.report.get("simulation")
        if simulation is None:
            return
        if simulation["verdict"] != "PASS":
            raise VerificationFailure("Compiled program does not satisfy the specification", stage="simulate")
        if not simulation["preserves_reachable"]:
            raise VerificationFailure("Compiled program reaches different valuations than the CCR program",
                                      stage="simulate")

    # --- Artifacts ---

    def write_artifacts(self, runs: List[ValuationRun], sp: SynchronizedProgram,
                        compiled: Optional[CompiledProgram]) -> None:
        out = self.output_dir
        write_text(out / "synthesized.cp", format_program(sp.program))
        if self.config.dump_guards:
            write_json(out / "guards.json", sp.to_dict())
            write_csv(out / "guards.csv", sp.rows())
        write_csv(out / "stats.csv", self.report["tableau"])
        for n, run in enumerate(runs):
            suffix = "" if len(runs) == 1 else f"_{n}"
            if self.config.dump_tableau:
                write_json(out / f"tableau{suffix}.json", run.tableau.to_dict(self.config.keep_deleted))
                write_dot(out / f"tableau{suffix}.dot", tableau_graph(run.tableau, self.config.keep_deleted),
                          "tableau")
            if self.config.dump_model:
                write_json(out / f"model{suffix}.json", run.model.to_dict())
                write_dot(out / f"model{suffix}.dot", run.model.to_networkx(), "model")
        if compiled is not None:
            write_json(out / "lockplan.json", compiled.plan.to_dict())
            for name, text in compiled.files().items():
                write_text(out / name, text)
        write_json(out / "report.json", self.report)

    # --- Pipeline ---

    def run_pipeline(self) -> int:
        """
        Parse, decide φ_P ∧ φ_spec, extract a model, synthesize CCRs, verify,
        and optionally compile to lock code. Artifacts go to ``output_dir``.

        Returns:
            int: 0 when every oracle passes.

        Raises:
            SynthesisError: Any stage failure; ``exit_code`` tells which.
        """
        start_time = time.time()

        logger.info("Step 1: Parsing program and specification...")
        self.load()
        logger.info(f"{self.processes} processes, mode {self.mode}")

        logger.info("Step 2: Building tableaux and extracting models...")
        runs = self.synthesize_all()
        self.report = {
            "program": str(self.config.program),
            "spec": str(self.config.spec),
            "mode": self.mode,
            "target": self.config.target,
            "tableau": [dict(initial=repr(r.initial) if r.initial else None, **r.tableau.stats(),
                             model_states=r.model.size) for r in runs],
            "observability": [r.verdict.to_dict() for r in runs],
        }

        logger.info("Step 3: Assembling synchronized program...")
        if self.mode == "with-inputs":
            sp = unify_inits({r.initial: r.synchronized for r in runs}, self.program)
        else:
            sp = runs[0].synchronized
        self.report["aux_variable"] = sp.aux_variable
        self.report["projection"] = sorted({r.synchronized.projection for r in runs})
        self.report["warnings"] = list(sp.warnings)

        logger.info("Step 4: Model checking the synchronized program...")
        try:
            result = self.verify(sp)
            self.report["ccr"] = {"verdict": result.verdict,
                                  "witness": result.witness.to_dict() if result.witness else None}
        except NonTotalModel as e:
            result = None
            self.report["ccr"] = {"verdict": "DEADLOCK",
                                  "witness": e.state.to_dict() if e.state else None}

        compiled = None
        if self.config.target != "ccr" and result is not None and result.holds:
            logger.info(f"Step 5: Compiling {self.config.target}-grained code and simulating...")
            reachable = frozenset(build_transition_system(sp.program, initial_states(sp.program, self.mode)).states)
            compiled, _ = self.compile_and_simulate(sp, reachable)

        logger.info(f"Writing artifacts to {self.output_dir}")
        self.write_artifacts(runs, sp, compiled)

        end_time = time.time()
        hours, rem = divmod(end_time - start_time, 3600)
        minutes, seconds = divmod(rem, 60)
        logger.info(f"Total execution time: {int(hours)} hrs {int(minutes)} mins {seconds:.2f} secs")

        if self.report["ccr"]["verdict"] != "PASS":
            raise VerificationFailure("Synthesized program does not satisfy the specification", stage="verify")
        self.check_simulation()
        return 0

    def verify_only(self) -> CheckResult:
        """Model-check the program against the specification and log the verdict."""
        self.load()
        initials = initial_valuations(self.program, self.mode)
        result = program_satisfies(self.program, self.spec, initials)
        logger.info(f"Verdict: {result.verdict}")
        if result.witness is not None:
            logger.info(f"Failing initial state: {result.witness!r}")
        return result

    def simulate_only(self) -> SimulationResult:
        """Compile a CCR program from disk and check its lock semantics."""
        self.load()
        sp = SynchronizedProgram.from_program(self.program)
        target = self.config.target if self.config.target != "ccr" else "coarse"
        self.config = self.config.model_copy(update={"target": target})
        reachable = frozenset(build_transition_system(sp.program, initial_states(sp.program, self.mode)).states)
        compiled, simulation = self.compile_and_simulate(sp, reachable)
        write_json(self.output_dir / "lockplan.json", compiled.plan.to_dict())
        for name, text in compiled.files().items():
            write_text(self.output_dir / name, text)
        write_json(self.output_dir / "report.json", self.report)
        logger.info(f"Verdict: {self.report['simulation']['verdict']}")
        self.check_simulation()
        return simulation

    def dump_phi(self) -> str:
        self.load(with_spec=False)
        text = generate_phi_p(self.program, self.mode).to_text()
        write_text(self.output_dir / "phi.lctl", text)
        return text


# --- Command line ---

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="synthesizer",
                                     description="Synthesize synchronization for concurrent programs.")
    parser.add_argument("--config", default=str(DEFAULT_CONFIG_FILE), help="INI configuration file")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, spec=True):
        p.add_argument("program", type=Path)
        if spec:
            p.add_argument("spec", type=Path)
        p.add_argument("--mode", choices=["auto", "all-init", "with-inputs"])
        p.add_argument("--out", dest="output_dir", type=Path)

    synth = sub.add_parser("synth", help="synthesize a synchronized program")
    common(synth)
    synth.add_argument("--target", choices=["ccr", "coarse", "fine"])
    synth.add_argument("--observability", choices=["auto", "force-shared", "limited"])
    synth.add_argument("--node-budget", type=int)
    synth.add_argument("--jobs", type=int)
    synth.add_argument("--dump-tableau", action="store_true", default=None)
    synth.add_argument("--dump-model", action="store_true", default=None)
    synth.add_argument("--keep-deleted", action="store_true", default=None)
    synth.add_argument("--progress", action="store_true", default=None)

    check = sub.add_parser("check", help="model-check a program")
    common(check)

    simulate = sub.add_parser("simulate", help="compile a CCR program and explore its lock semantics")
    common(simulate)
    simulate.add_argument("--target", choices=["coarse", "fine"])
    simulate.add_argument("--progress", action="store_true", default=None)

    dump = sub.add_parser("dump-phi", help="write the program-semantics formula")
    common(dump, spec=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        config = load_config(args.config, **overrides)
    except ValueError as e:
        logging.getLogger("synthesizer").error(f"Invalid configuration: {e}")
        return 2
    setup_logger(None, level=config.log_level)
    synthesizer = Synthesizer(config)
    try:
        if args.command == "synth":
            return synthesizer.run_pipeline()
        if args.command == "check":
            return 0 if synthesizer.verify_only().holds else VerificationFailure.exit_code
        if args.command == "simulate":
            synthesizer.simulate_only()
            return 0
        if args.command == "dump-phi":
            synthesizer.dump_phi()
            return 0
    except SynthesisError as e:
        logger.error(f"{e.stage or 'pipeline'} failed: {e}")
        return e.exit_code
    return 1


if __name__ == "__main__":
    sys.exit(main())
