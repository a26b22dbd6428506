import csv
import json
import math

import pytest

from cattransfer import runner
from cattransfer.cli import main
from cattransfer.config import ConfigError, from_dict, load
from cattransfer.hamiltonians import TWO_PI

SMALL_IDEAL = {
    "scenario": "ideal-closed",
    "system": {"n_pairs": 1},
    "encoding": {"cutoff": 3},
    "solver": {"steps_per_T": 400},
    "outputs": {"prefix": "small"},
}
SMALL_OPEN = {
    "scenario": "effective-open",
    "system": {"n_pairs": 1},
    "encoding": {"cutoff": 2},
    "solver": {"steps_per_T": 500, "t_final_over_T": 0.2},
    "outputs": {"prefix": "open"},
}


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


# config ----------------------------------------------------------------------


def test_empty_config_resolves_to_full_open_defaults():
    cfg = from_dict({})
    assert cfg.scenario == "full-open" and cfg.path == "both"
    assert cfg.cutoffs == (3,) * 6
    assert cfg.method == "lindblad-rk4"
    assert cfg.n_steps == 600
    assert cfg.T == pytest.approx(10e-9, rel=1e-12)
    assert cfg.dt == pytest.approx(cfg.T / 500, rel=1e-12)
    assert cfg.params.g[0] == pytest.approx(TWO_PI * 150e6)


def test_rates_are_inverse_lifetimes():
    cfg = from_dict({})
    assert cfg.params.kappa == (1 / 20e-6,) * 6
    assert cfg.params.gammas == pytest.approx((1 / 30e-6, 1 / 20e-6, 1 / 60e-6))
    assert cfg.params.dephasing == pytest.approx((1 / 40e-6, 1 / 25e-6))
    off = from_dict({"system": {"kappa_inv_s": None, "t1_s": {"fg": 0}}})
    assert off.params.kappa == (0.0,) * 6 and off.params.gammas[2] == 0.0


@pytest.mark.parametrize(
    "doc,field",
    [
        ({"scenario": "warp"}, "scenario"),
        ({"system": {"g_hz": "big"}}, "system.g_hz"),
        ({"system": {"n_pairs": 0}}, "system.n_pairs"),
        ({"system": {"colour": 1}}, "system.colour"),
        ({"encoding": {"cutoff": [3, 3]}}, "encoding.cutoff"),
        ({"solver": {"method": "trajectories", "seed": None}}, "solver.seed"),
        ({"scenario": "ideal-closed", "solver": {"method": "lindblad-rk4"}}, "solver.method"),
        ({"scenario": "effective-open", "hamiltonian_path": "both"}, "hamiltonian_path"),
        ({"system": {"t1_s": {"xy": 1e-6}}}, "system.t1_s"),
        ({"system": {"kappa_inv_s": -1.0}}, "system.kappa_inv_s"),
    ],
)
def test_config_errors_name_the_field(doc, field):
    with pytest.raises(ConfigError) as exc:
        from_dict(doc)
    assert exc.value.field == field
    assert field in str(exc.value)


def test_load_reports_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load(bad)


def test_with_overrides_rebuilds():
    cfg = from_dict({})
    c2 = cfg.with_overrides(**{"solver.seed": 9, "encoding.alpha": 0.7})
    assert c2.seed == 9 and c2.params.alpha == 0.7
    assert cfg.seed is None


def test_resolved_config_round_trips():
    cfg = from_dict(SMALL_OPEN)
    again = from_dict(cfg.resolved())
    assert again.resolved() == cfg.resolved()
    assert again.params == cfg.params


def test_shipped_configs_load():
    for name in ("ideal_closed", "effective_open", "full_open", "trajectories_smoke"):
        load(f"configs/{name}.json")


def test_worker_count_honours_environment(monkeypatch):
    monkeypatch.setenv(runner.WORKERS_ENV, "3")
    assert runner.worker_count(10) == 3
    assert runner.worker_count(2) == 2
    monkeypatch.setenv(runner.WORKERS_ENV, "x")
    with pytest.raises(ValueError):
        runner.worker_count(4)
    monkeypatch.delenv(runner.WORKERS_ENV)
    assert runner.worker_count(1) == 1


def test_sweep_config_axes():
    cfg = from_dict({})
    assert runner.sweep_config(cfg, "kappa", 0).params.kappa == (0.0,) * 6
    assert runner.sweep_config(cfg, "kappa", 1e5).params.kappa[0] == pytest.approx(1e5)
    c = runner.sweep_config(cfg, "dt", cfg.T / 250)
    assert c.steps_per_T == 250 and c.n_steps == 300
    assert runner.sweep_config(cfg, "g_cr", 0.05).params.g_cr == pytest.approx(0.05 * cfg.couplings.lam)
    with pytest.raises(ValueError):
        runner.sweep_config(cfg, "mass", 1)


# runs and manifests ----------------------------------------------------------


def test_run_writes_csv_and_manifest(tmp_path):
    cfg = from_dict(SMALL_IDEAL)
    out = runner.run_experiment(cfg, tmp_path)
    csv_path = out.csv_paths["ideal"]
    with open(csv_path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:4] == ["t_seconds", "t_over_T", "fidelity", "fidelity_squared"]
    assert len(rows) == 1 + len(out.results["ideal"].times)
    run = out.manifest["runs"]["ideal"]
    assert run["fidelity_at_t0"] == 0.0
    assert run["fidelity_at_T"] == pytest.approx(1.0, abs=1e-6)
    man = json.loads(out.manifest_path.read_text())
    assert man["derived"]["hilbert_dim"] == 27
    # a manifest is itself a valid config and reproduces the run settings
    assert from_dict(man).resolved() == cfg.resolved()
    assert not list(tmp_path.glob("*.tmp"))


def test_zero_steps_gives_zero_fidelity(tmp_path):
    cfg = from_dict({**SMALL_IDEAL, "solver": {"n_steps": 0}})
    out = runner.run_experiment(cfg, tmp_path)
    assert out.results["ideal"].fidelity == [0.0]


def test_open_run_records_diagnostics(tmp_path):
    out = runner.run_experiment(from_dict(SMALL_OPEN), tmp_path)
    diag = out.manifest["runs"]["effective"]["diagnostics"]
    assert diag["method"] == "lindblad-rk4"
    assert diag["max_trace_drift"] < 1e-10
    assert diag["min_eigenvalue"] > -1e-9


def test_sweep_inline_matches_table_shape():
    rows = runner.sweep(from_dict(SMALL_OPEN), "kappa", [0.0, 1e6], workers=1)
    assert [r["value"] for r in rows] == [0.0, 1e6]
    # more loss cannot raise the fidelity reached in the window
    assert rows[1]["max_fidelity"] <= rows[0]["max_fidelity"] + 1e-12
    text = runner.sweep_csv(rows)
    assert text.splitlines()[0].startswith("axis,value,path,max_fidelity")


# command line ----------------------------------------------------------------


def test_cli_run_success(tmp_path, capsys):
    cfg = write(tmp_path, SMALL_IDEAL)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert "peak F" in capsys.readouterr().out
    assert (tmp_path / "o" / "small.csv").exists()
    assert (tmp_path / "o" / "small.manifest.json").exists()


def test_cli_config_error_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, {"system": {"g_hz": -1}})
    assert main(["run", "--config", cfg]) == 2
    assert "system.g_hz" in capsys.readouterr().err


def test_cli_resource_error_exit_3(tmp_path):
    cfg = write(tmp_path, {"scenario": "effective-open", "encoding": {"cutoff": 12}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == 3


def test_cli_verification_failure_exit_1(tmp_path, capsys):
    # unbalanced pair detuning breaks the Stark balance the swap relies on
    doc = {**SMALL_IDEAL, "system": {"n_pairs": 2, "delta_pair_hz": [450e6, -300e6]}}
    assert main(["run", "--config", write(tmp_path, doc), "--out", str(tmp_path)]) == 1
    assert "verification failed" in capsys.readouterr().err


def test_cli_step_size_failure_exit_1(tmp_path):
    doc = {**SMALL_IDEAL, "solver": {"steps_per_T": 3}}
    assert main(["run", "--config", write(tmp_path, doc), "--out", str(tmp_path)]) == 1


def test_cli_sweep_table_and_csv(tmp_path, capsys):
    cfg = write(tmp_path, SMALL_OPEN)
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", cfg, "--axis", "alpha", "--values", "0.4,0.5",
                 "--workers", "1", "--out", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "max_F" in lines[0] and len(lines) == 3
    assert len(out.read_text().splitlines()) == 3


def test_cli_sweep_bad_value_exit_2(tmp_path):
    cfg = write(tmp_path, SMALL_OPEN)
    assert main(["sweep", "--config", cfg, "--axis", "alpha", "--values", "-1", "--workers", "1"]) == 2


def test_cli_check_fast_passes(capsys):
    assert main(["check", "--fast"]) == 0
    assert "checks passed" in capsys.readouterr().out


@pytest.mark.parametrize("inject,failing", [("swap-sign", "swap:heisenberg"),
                                            ("lambda-mismatch", "condition:pair_stark_balance")])
def test_cli_check_injection_exit_1(inject, failing, capsys):
    assert main(["check", "--fast", "--inject", inject]) == 1
    out = capsys.readouterr().out
    assert any(line.startswith("FAIL") and failing in line for line in out.splitlines())


def test_cli_defaults(capsys):
    assert main(["defaults", "--scenario", "ideal-closed"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["scenario"] == "ideal-closed"
    assert from_dict(doc).scenario == "ideal-closed"


def test_stark_sign_of_pair_detunings():
    # the second pair must carry the opposite Stark shift for the phases to cancel
    lam = from_dict({}).couplings.lambda_pair
    assert lam[0] == pytest.approx(-lam[1]) and math.copysign(1, lam[1]) == math.copysign(1, lam[2])
