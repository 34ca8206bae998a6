import json

import pytest

from arguments import config_tokens, get_args, normalize_argv
from model.errors import ConfigurationError
from run import main
from tasks.utils import EXPERIMENT_TASK, EXPERIMENTS


def test_every_experiment_has_a_task():
    assert set(EXPERIMENT_TASK) == set(EXPERIMENTS)


def test_normalize_argv():
    argv = normalize_argv(["run", "ibp", "--alpha-idx", "1.5", "--samples=200", "--out_dir", "x"])
    assert argv == ["--experiment", "ibp", "--alpha_idx", "1.5", "--num_samples=200", "--out", "x"]


def test_run_without_experiment():
    with pytest.raises(ConfigurationError):
        normalize_argv(["run", "--seed", "1"])


def test_config_file_is_overridden_by_flags(tmp_path):
    path = tmp_path / "lp.ini"
    path.write_text("[experiment]\nseed = 5\n\n[ladder]\neps0 = 0.25\nscan-points = 4\n")
    experiment_args, _, _, _, ladder_args = get_args(["run", "lp-interval", "--config", str(path), "--eps0", "0.5"])
    assert experiment_args.seed == 5
    assert ladder_args.eps0 == 0.5
    assert ladder_args.scan_points == 4


@pytest.mark.parametrize(
    "text, key",
    [
        ("[grid]\nbogus = 1\n", "bogus"),
        ("[field]\nK = 4\n\n[grid]\nK = 8\n", "K"),
    ],
)
def test_bad_config_keys(tmp_path, text, key):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    with pytest.raises(ConfigurationError) as e:
        config_tokens(str(path))
    assert e.value.key == key


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigurationError):
        config_tokens(str(tmp_path / "missing.ini"))


def test_unknown_experiment_exits_with_configuration_code(tmp_path):
    assert main(["run", "no-such-experiment", "--out", str(tmp_path)]) == 3


def test_unknown_preset_exits_with_configuration_code(tmp_path):
    assert main(["run", "gradient-bound", "--drift", "swirl", "--out", str(tmp_path)]) == 3


def test_lp_interval_run(tmp_path):
    assert main(["run", "lp-interval", "--eps0", "1.0", "--out", str(tmp_path)]) == 0
    body = json.loads((tmp_path / "lp-interval.json").read_text())
    assert body["status"] == "pass"
    assert body["summary"] == {"p_lo": 1.5, "p_hi": "inf"}
    manifest = json.loads((tmp_path / "lp-interval_manifest.json").read_text())
    assert manifest["exit_code"] == 0
    assert manifest["config"]["LadderArguments"]["eps0"] == 1.0


def test_reports_are_deterministic(tmp_path):
    argv = ["run", "eq34-scan", "--dimension", "1", "--points", "41", "--seed", "3"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b")]) == 0
    first = (tmp_path / "a" / "eq34-scan.json").read_text()
    assert first == (tmp_path / "b" / "eq34-scan.json").read_text()
    assert json.loads(first)["summary"]["eps0"] == 1.0


def run_experiment(tmp_path, experiment, *flags):
    code = main(["run", experiment, "--out", str(tmp_path), *flags])
    body = json.loads((tmp_path / f"{experiment}.json").read_text())
    manifest = json.loads((tmp_path / f"{experiment}_manifest.json").read_text())
    assert manifest["exit_code"] == code
    return code, body


def test_covariance_run(tmp_path):
    code, body = run_experiment(tmp_path, "covariance", "--K", "4", "--num_samples", "20000", "--batch_size", "3000",
                                "--seed", "2")
    assert code == 0 and body["status"] == "pass"
    report = body["reports"]["free_field_covariance"]
    assert report["details"]["count"] == 20000
    assert set(report["residuals"]) == {"mode_1", "mode_2", "mode_3", "mode_4", "l_uniform", "l_alternating", "l_first_two"}
    assert body["summary"]["gram_max_deviation"] < 1e-6
    assert (tmp_path / "covariance_covariance.csv").exists()


def test_wick_moments_run(tmp_path):
    code, body = run_experiment(tmp_path, "wick-moments", "--K", "4", "--num_samples", "20000", "--batch_size", "2500",
                                "--wick_nmax", "2", "--seed", "1")
    assert code == 0 and body["status"] == "pass"
    assert body["reports"]["hermite_coefficients"]["items"]["mismatched_degrees"] == []
    assert set(body["reports"]["wick_orthogonality"]["residuals"]) == {"0,0", "0,1", "0,2", "1,1", "1,2", "2,2"}


QUARTIC_FLAGS = ["--K", "4", "--num_samples", "20000", "--batch_size", "2500", "--seed", "5", "--coefficients", "quartic"]


def test_ibp_run(tmp_path):
    code, body = run_experiment(tmp_path, "ibp", *QUARTIC_FLAGS, "--direction", "1", "--test_function", "x1")
    assert code == 0 and body["status"] == "pass"
    assert body["reports"]["quadrature_stability"]["status"] == "pass"
    assert body["reports"]["ibp[j=1]"]["status"] == "pass"
    assert body["summary"]["K"] == 4


def test_theorem1_conditions_run(tmp_path):
    code, body = run_experiment(tmp_path, "theorem1-conditions", *QUARTIC_FLAGS, "--drift_schedule", "1;2,3",
                                "--refine_K", "false")
    assert code == 0 and body["status"] == "pass"
    assert (tmp_path / "theorem1-conditions_delta_tail.csv").exists()


def test_bad_truncation_levels_exit_with_configuration_code(tmp_path):
    assert main(["run", "theorem1-conditions", *QUARTIC_FLAGS, "--drift_schedule", "1,two", "--out", str(tmp_path)]) == 3


def test_gradient_bound_with_a_short_final_time(tmp_path):
    code, body = run_experiment(tmp_path, "gradient-bound", "--dimension", "1", "--points", "121",
                                "--final_time", "0.5", "--oracle_rtol", "0.05")
    assert code == 0 and body["status"] == "pass"
    assert body["reports"]["box_truncation"]["status"] == "pass"
    assert list(body["reports"]["mehler_oracle"]["items"]["relative_sup_error"]) == ["0.5"]


def test_snapshot_times_beyond_the_final_time_are_rejected(tmp_path):
    argv = ["run", "gradient-bound", "--dimension", "1", "--points", "61", "--final_time", "0.5",
            "--snapshot_times", "0.25,1.0", "--out", str(tmp_path)]
    assert main(argv) == 3


def test_energy_estimate_run(tmp_path):
    code, body = run_experiment(tmp_path, "energy-estimate", "--dimension", "1", "--points", "41",
                                "--final_time", "0.5", "--n_snapshots", "8")
    assert code == 0 and body["status"] == "pass"


def test_l4_estimate_with_refinement(tmp_path):
    code, body = run_experiment(tmp_path, "l4-estimate", "--dimension", "1", "--points", "241", "--initial", "wide-bump",
                                "--final_time", "0.5", "--n_snapshots", "10", "--refine")
    assert code == 0 and body["status"] == "pass"
    stability = body["reports"]["l4_grid_stability"]
    assert stability["status"] == "pass"
    assert stability["items"]["relative_change"] <= stability["items"]["tolerance"]
    assert len(body["reports"]["box_truncation"]["items"]["boundary_leak"]) == 2


def test_lemma_suite_run(tmp_path):
    code, body = run_experiment(tmp_path, "lemma-suite", "--dimension", "1", "--points", "61", "--final_time", "0.5",
                                "--n_snapshots", "10", "--drift", "matching", "--budget_factor", "4")
    assert code == 0 and body["status"] == "pass"
    assert {"lemma1", "lemma2", "lemma3", "identity_lp_balance"} <= set(body["reports"])


def test_expression_drift_and_datum_from_a_config(tmp_path):
    path = tmp_path / "expr.ini"
    path.write_text("[grid]\ndimension = 1\npoints = 41\nfinal_time = 0.5\nn_snapshots = 8\n"
                    "drift = expr:-x0\ninitial = expr:exp(-x0**2)\n")
    code, body = run_experiment(tmp_path, "energy-estimate", "--config", str(path))
    assert code == 0 and body["status"] == "pass"


def test_bad_expression_exits_with_configuration_code(tmp_path):
    assert main(["run", "energy-estimate", "--dimension", "1", "--drift", "expr:-x0,-x1", "--out", str(tmp_path)]) == 3


def test_duhamel_run_with_refinement(tmp_path):
    code, body = run_experiment(tmp_path, "duhamel-l2", "--dimension", "2", "--radius", "5", "--points", "21",
                                "--final_time", "0.2", "--n_snapshots", "4", "--schedule", "0:0,0:1,0:2", "--refine",
                                "--threads", "2")
    assert code == 0 and body["status"] == "pass"
    assert body["reports"]["gap_monotonicity"]["status"] == "pass"
    assert set(body["summary"]["final_gaps"]) == {"0:0", "0:1", "0:2"}
    assert list(body["summary"]["last_rung_lp_gaps"]) == ["L1", "L2", "L4", "Linf"]


def test_markov_suite_run(tmp_path):
    code, body = run_experiment(tmp_path, "markov-suite", "--dimension", "1", "--points", "121", "--final_time", "0.5",
                                "--drift", "matching", "--num_samples", "20000", "--seed", "3")
    assert code == 0 and body["status"] == "pass"
    markov = body["reports"]["markov"]
    assert markov["items"]["certified"]
    assert markov["items"]["conservation"]["kind"] == "scheme self-check"


@pytest.mark.slow
def test_gradient_bound_acceptance_grid_is_certified(tmp_path):
    code, body = run_experiment(tmp_path, "gradient-bound", "--dimension", "2", "--radius", "6", "--points", "241",
                                "--final_time", "1.0")
    assert code == 0
    assert body["reports"]["box_truncation"]["status"] == "pass"
    assert max(body["reports"]["box_truncation"]["items"]["boundary_leak"]) <= 1e-6
