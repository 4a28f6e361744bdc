import orjson
import pytest

from helpers import ALL_INIT, BENCHMARKS, WITH_INPUTS, parse_with_spec
from main import Synthesizer, build_parser, main
from utils.config import NODE_BUDGET_ENV, PipelineConfig, load_config
from utils.errors import VerificationFailure
from utils.logic.model_checker import program_satisfies


@pytest.fixture(autouse=True)
def no_budget_override(monkeypatch):
    monkeypatch.delenv(NODE_BUDGET_ENV, raising=False)


def run(tmp_path, *args):
    return main(["--config", str(tmp_path / "absent.prop"), *map(str, args)])


def bench(name):
    return BENCHMARKS / f"{name}.cp", BENCHMARKS / f"{name}.lctl"


def report(out):
    return orjson.loads((out / "report.json").read_bytes())


# --- Configuration ---

def test_flags_override_the_config_file(tmp_path):
    ini = tmp_path / "config.prop"
    ini.write_text("[synthesis]\ntarget = fine\nnode_budget = 10\n\n[logging]\nlevel = debug\n")
    assert load_config(ini).target == "fine"
    assert load_config(ini).log_level == "DEBUG"
    assert load_config(ini, node_budget=99, target=None).node_budget == 99


def test_environment_overrides_the_node_budget(tmp_path, monkeypatch):
    monkeypatch.setenv(NODE_BUDGET_ENV, "123")
    assert load_config(tmp_path / "absent.prop", node_budget=5).node_budget == 123


def test_parser_requires_a_subcommand():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_invalid_configuration_exits_2(tmp_path):
    program, spec = bench("mutex2")
    assert run(tmp_path, "--log-level", "loud", "check", program, spec) == 2


# --- Exit codes ---

def test_check_fails_on_the_unsynchronized_skeleton(tmp_path):
    program, spec = bench("mutex2")
    assert run(tmp_path, "check", program, spec) == 5


def test_parse_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.cp"
    bad.write_text("process P1 { s: goto nowhere }\n")
    _, spec = bench("mutex2")
    assert run(tmp_path, "check", bad, spec) == 2


def test_inconsistent_specification_exits_3(tmp_path):
    program, _ = bench("mutex2")
    spec = tmp_path / "never.lctl"
    spec.write_text("AG loc1 = ncs;\nAF loc1 = cs\n")
    assert run(tmp_path, "synth", program, spec, "--out", tmp_path / "out") == 3


def test_node_budget_exits_4(tmp_path):
    program, spec = bench("mutex2")
    assert run(tmp_path, "synth", program, spec, "--node-budget", 5, "--out", tmp_path / "out") == 4


def test_dump_phi(tmp_path):
    program, _ = bench("mutex2")
    out = tmp_path / "out"
    assert run(tmp_path, "dump-phi", program, "--out", out) == 0
    text = (out / "phi.lctl").read_text()
    assert "// progress" in text
    assert "AG (EX1 true | EX2 true);" in text


# --- Synthesis runs ---

def test_synthesis_writes_its_artifacts(tmp_path):
    program, spec = bench("mutex2")
    out = tmp_path / "out"
    assert run(tmp_path, "synth", program, spec, "--out", out, "--dump-tableau", "--dump-model") == 0
    for name in ("synthesized.cp", "guards.json", "guards.csv", "stats.csv", "report.json",
                 "tableau.json", "tableau.dot", "model.json", "model.dot"):
        assert (out / name).exists(), name
    summary = report(out)
    assert summary["schema"] == 1
    assert summary["ccr"]["verdict"] == "PASS"
    assert summary["mode"] == "all-init"
    assert run(tmp_path, "check", out / "synthesized.cp", spec) == 0


def test_synthesis_is_deterministic(tmp_path):
    program, spec = bench("mutex2")
    for out in ("a", "b"):
        assert run(tmp_path, "synth", program, spec, "--out", tmp_path / out) == 0
    for name in ("synthesized.cp", "guards.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_a_synthesized_program(tmp_path):
    program, spec = bench("mutex2")
    out = tmp_path / "out"
    assert run(tmp_path, "synth", program, spec, "--out", out) == 0
    sim = tmp_path / "sim"
    assert run(tmp_path, "simulate", out / "synthesized.cp", spec, "--out", sim) == 0
    assert (sim / "P1.coarse.sync").exists()
    assert report(sim)["simulation"]["preserves_reachable"]


@pytest.mark.parametrize("target", ["coarse", "fine"])
def test_simulate_checks_the_lock_graph(tmp_path, target):
    program, spec = bench("pingpong")
    sim = tmp_path / "sim"
    assert run(tmp_path, "simulate", program, spec, "--target", target, "--out", sim) == 0
    summary = report(sim)["simulation"]
    assert summary["verdict"] == "PASS"
    assert summary["lock_states"] > summary["valuations"]


def test_simulate_exits_5_on_a_lock_level_violation(tmp_path):
    program, _ = bench("pingpong")
    spec = tmp_path / "stuck.lctl"
    spec.write_text("AG t = 0\n")
    sim = tmp_path / "sim"
    assert run(tmp_path, "simulate", program, spec, "--out", sim) == 5
    assert report(sim)["simulation"]["witness"] is not None


def test_lock_level_divergence_is_a_verification_failure():
    synthesizer = Synthesizer(PipelineConfig())
    synthesizer.report["simulation"] = {"verdict": "PASS", "preserves_reachable": False}
    with pytest.raises(VerificationFailure) as info:
        synthesizer.check_simulation()
    assert info.value.stage == "simulate"


# --- Benchmarks ---

def every_process_moves(out, spec):
    text = (out / "synthesized.cp").read_text()
    program, formula = parse_with_spec(text, spec.read_text())
    ts = program_satisfies(program, formula).ts
    return {i for _, i, _ in ts.transitions} == set(range(1, len(program.processes) + 1))


@pytest.mark.benchmark
@pytest.mark.parametrize("name", ALL_INIT)
@pytest.mark.parametrize("target", ["coarse", "fine"])
def test_benchmark_all_init(tmp_path, name, target):
    program, spec = bench(name)
    out = tmp_path / "out"
    assert run(tmp_path, "synth", program, spec, "--target", target, "--out", out) == 0
    summary = report(out)
    assert summary["ccr"]["verdict"] == "PASS"
    assert summary["simulation"]["verdict"] == "PASS"
    assert summary["simulation"]["preserves_reachable"]
    assert run(tmp_path, "check", out / "synthesized.cp", spec) == 0
    assert every_process_moves(out, spec)


@pytest.mark.benchmark
@pytest.mark.parametrize("name", WITH_INPUTS)
def test_benchmark_with_inputs(tmp_path, name):
    program, spec = bench(name)
    out = tmp_path / "out"
    assert run(tmp_path, "synth", program, spec, "--out", out) == 0
    summary = report(out)
    assert summary["mode"] == "with-inputs"
    assert len(summary["tableau"]) == 4
    assert summary["ccr"]["verdict"] == "PASS"
    text = (out / "synthesized.cp").read_text()
    assert "shared v0: {0..3} with v0 = v;" in text


@pytest.mark.benchmark
@pytest.mark.parametrize("name", ALL_INIT + WITH_INPUTS)
def test_every_benchmark_is_deterministic(tmp_path, name):
    program, spec = bench(name)
    for out in ("a", "b"):
        assert run(tmp_path, "synth", program, spec, "--out", tmp_path / out) == 0
    first = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert first == sorted(p.name for p in (tmp_path / "b").iterdir())
    for artifact in first:
        assert (tmp_path / "a" / artifact).read_bytes() == (tmp_path / "b" / artifact).read_bytes(), artifact
