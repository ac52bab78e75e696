"""Command-line surface: exit codes, machine-readable errors, file
outputs, and seed determinism, all through real subprocesses."""

import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

GOLDEN = Path(__file__).parent / "golden"
KERNEL = '{"family":"gaussian","sigma":0.3}'


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "shiftweigh", *args],
        capture_output=True, text=True, cwd=cwd, timeout=300,
    )


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def strip_runtime(rows):
    """Drop the wall-clock column; parse floats so comparisons tolerate
    formatting-level noise from different numeric backends."""
    header, *body = rows
    keep = [i for i, name in enumerate(header) if name != "runtime_ms"]
    out = [[header[i] for i in keep]]
    for row in body:
        out.append([row[i] for i in keep])
    return out


def assert_csv_close(got, expected, float_cols):
    assert got[0] == expected[0]
    assert len(got) == len(expected)
    for grow, erow in zip(got[1:], expected[1:]):
        for name, g, e in zip(got[0], grow, erow):
            if name in float_cols and g != "" and e != "":
                assert float(g) == pytest.approx(float(e), rel=1e-9), name
            else:
                assert g == e, name


@pytest.fixture(scope="module")
def scenario_files(tmp_path_factory):
    """One exported train/test pair shared by the file-consuming tests."""
    root = tmp_path_factory.mktemp("cli_data")
    proc = run_cli(
        "export", "--scenario", "s1", "--n-tr", "200", "--n-te", "400",
        "--seed", "11", "--outdir", str(root),
    )
    assert proc.returncode == 0, proc.stderr
    return root / "train.csv", root / "test.csv"


class TestWeights:
    def test_solves_and_correlates_with_the_true_ratio(
        self, scenario_files, tmp_path
    ):
        train, test = scenario_files
        out = tmp_path / "w.csv"
        proc = run_cli(
            "weights", str(train), str(test),
            "--kernel", KERNEL, "--B", "2.84", "--out", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        report = json.loads(proc.stdout)
        assert report["converged"] is True
        assert report["n_tr"] == 200 and report["n_te"] == 400
        assert 0.0 <= report["min_beta"] <= report["max_beta"] <= 2.84 + 1e-9
        rows = read_rows(out)
        assert rows[0] == ["row", "beta_hat"]
        beta_hat = np.array([float(r[1]) for r in rows[1:]])
        beta_true = np.array(
            [float(r[-1]) for r in read_rows(train)[1:]]
        )
        assert len(beta_hat) == 200
        assert np.corrcoef(beta_hat, beta_true)[0, 1] > 0.3

    def test_unwritable_output_is_an_internal_failure(self, scenario_files):
        train, test = scenario_files
        proc = run_cli(
            "weights", str(train), str(test),
            "--kernel", KERNEL, "--B", "2.84",
            "--out", "/nonexistent_dir_zz/w.csv",
        )
        assert proc.returncode == 1
        err = json.loads(proc.stderr.strip().splitlines()[-1])
        assert "error" in err

    def test_missing_required_flag_is_invalid_input(self, scenario_files):
        train, test = scenario_files
        proc = run_cli("weights", str(train), str(test), "--kernel", KERNEL)
        assert proc.returncode == 2
        err = json.loads(proc.stderr.strip().splitlines()[-1])
        assert err["error"]["type"] == "InputError"
        assert "--B" in err["error"]["message"]


class TestEstimate:
    def test_report_goes_to_stdout_and_optionally_to_a_file(
        self, scenario_files, tmp_path
    ):
        train, test = scenario_files
        out = tmp_path / "report.json"
        proc = run_cli(
            "estimate", str(train), str(test), "--estimator", "kmm",
            "--kernel", KERNEL, "--B", "2.84", "--out", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        report = json.loads(proc.stdout)
        assert report["estimator_kind"] == "kmm"
        assert 0.0 <= report["point_unit_scale"] <= 1.0
        assert json.loads(out.read_text()) == report

    def test_oracle_uses_the_exported_truth_column(self, scenario_files):
        train, test = scenario_files
        proc = run_cli("estimate", str(train), str(test), "--estimator", "oracle")
        assert proc.returncode == 0, proc.stderr
        assert json.loads(proc.stdout)["estimator_kind"] == "oracle"

    def test_kernel_is_required_for_the_plugin(self, scenario_files):
        train, test = scenario_files
        proc = run_cli("estimate", str(train), str(test), "--estimator", "plugin")
        assert proc.returncode == 2
        err = json.loads(proc.stderr.strip().splitlines()[-1])
        assert "--kernel is required" in err["error"]["message"]

    def test_bad_label_range_syntax_is_invalid_input(self, scenario_files):
        train, test = scenario_files
        proc = run_cli(
            "estimate", str(train), str(test), "--estimator", "kmm",
            "--kernel", KERNEL, "--B", "2.84", "--label-range", "0;1",
        )
        assert proc.returncode == 2
        err = json.loads(proc.stderr.strip().splitlines()[-1])
        assert "min,max" in err["error"]["message"]


class TestBound:
    def test_in_rkhs_bound_matches_the_library(self):
        proc = run_cli(
            "bound", "--regime", "in-rkhs", "--B", "2.84", "--C", "1.0",
            "--delta", "0.05", "--n-tr", "1000", "--n-te", "10000",
            "--norm-m", "0.51",
        )
        assert proc.returncode == 0, proc.stderr
        got = json.loads(proc.stdout)
        from shiftweigh import BoundInputs, InRkhs, evaluate_bound
        want = evaluate_bound(BoundInputs(
            B=2.84, C=1.0, delta=0.05, n_tr=1000, n_te=10000,
            regime=InRkhs(0.51),
        )).to_dict()
        assert got == want

    def test_out_of_domain_parameters_exit_2(self):
        proc = run_cli(
            "bound", "--regime", "log", "--B", "2", "--C", "1",
            "--delta", "0.05", "--n-tr", "4", "--n-te", "4",
            "--c-inf", "0.5", "--s", "1.0",
        )
        assert proc.returncode == 2
        err = json.loads(proc.stderr.strip().splitlines()[-1])
        assert err["error"]["type"] == "DomainError"
        assert "must exceed 1" in err["error"]["message"]

    def test_missing_regime_parameter_exit_2(self):
        proc = run_cli(
            "bound", "--regime", "in-rkhs", "--B", "2", "--C", "1",
            "--delta", "0.05", "--n-tr", "100", "--n-te", "100",
        )
        assert proc.returncode == 2
        err = json.loads(proc.stderr.strip().splitlines()[-1])
        assert "--norm-m is required" in err["error"]["message"]


class TestExperiment:
    def test_comparison_run_reproduces_the_stored_output(self, tmp_path):
        proc = run_cli(
            "experiment", "--scenario", "s1", "--estimators", "kmm,oracle",
            "--n-grid", "40,80", "--reps", "2", "--seed", "5",
            "--outdir", str(tmp_path),
        )
        assert proc.returncode == 0, proc.stderr
        summary = json.loads(proc.stdout)
        assert summary["scenario"]["id"] == "s1"
        assert set(summary["medians"]["medians"]) == {"kmm", "oracle"}
        got = strip_runtime(read_rows(tmp_path / "trials.csv"))
        want = strip_runtime(read_rows(GOLDEN / "experiment_trials.csv"))
        assert_csv_close(got, want, float_cols={"abs_error", "lhat"})
        assert_csv_close(
            read_rows(tmp_path / "medians.csv"),
            read_rows(GOLDEN / "experiment_medians.csv"),
            float_cols={"median_abs_error"},
        )

    def test_two_runs_agree_except_for_wall_clock(self, tmp_path):
        argv = (
            "experiment", "--scenario", "s2", "--estimators", "kmm,oracle",
            "--n-grid", "30", "--reps", "2", "--seed", "9",
        )
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli(*argv, "--outdir", str(a)).returncode == 0
        assert run_cli(*argv, "--outdir", str(b)).returncode == 0
        assert (strip_runtime(read_rows(a / "trials.csv"))
                == strip_runtime(read_rows(b / "trials.csv")))

    def test_coverage_mode_writes_the_coverage_report(self, tmp_path):
        proc = run_cli(
            "experiment", "--scenario", "s1", "--coverage",
            "--n-grid", "50", "--reps", "3", "--seed", "3",
            "--outdir", str(tmp_path),
        )
        assert proc.returncode == 0, proc.stderr
        cov = json.loads((tmp_path / "coverage.json").read_text())
        assert cov["n_tr"] == 50 and cov["n_te"] == 50 and cov["reps"] == 3
        assert 0.0 <= cov["fraction"] <= 1.0
        assert cov["bound_total"] > 0

    def test_unknown_scenario_lists_choices(self, tmp_path):
        proc = run_cli(
            "experiment", "--scenario", "zz", "--outdir", str(tmp_path)
        )
        assert proc.returncode == 2
        msg = json.loads(proc.stderr.strip().splitlines()[-1])["error"]["message"]
        assert "'zz'" in msg and "s1" in msg and "s3" in msg

    def test_unknown_estimator_flag_lists_choices(self, tmp_path):
        proc = run_cli(
            "experiment", "--scenario", "s1", "--estimators", "kmm,boost",
            "--outdir", str(tmp_path),
        )
        assert proc.returncode == 2
        msg = json.loads(proc.stderr.strip().splitlines()[-1])["error"]["message"]
        assert "'boost'" in msg and "kde" in msg


class TestRank:
    def test_orders_by_reweighted_loss_and_names_columns(
        self, scenario_files, tmp_path
    ):
        train, test = scenario_files
        rng = np.random.default_rng(41)
        losses = tmp_path / "losses.csv"
        with open(losses, "w") as fh:
            fh.write("loss_a,loss_b,loss_c\n")
            for _ in range(200):
                fh.write(",".join(repr(float(v)) for v in rng.uniform(0, 1, 3)) + "\n")
        out = tmp_path / "rank.json"
        proc = run_cli(
            "rank", str(train), str(losses), str(test),
            "--kernel", KERNEL, "--B", "2.84", "--out", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        result = json.loads(proc.stdout)
        ranking = result["ranking"]
        assert [e["rank"] for e in ranking] == [1, 2, 3]
        risks = [e["risk_estimate"] for e in ranking]
        assert risks == sorted(risks)
        assert {e["classifier"] for e in ranking} == {"loss_a", "loss_b", "loss_c"}
        assert json.loads(out.read_text()) == result

    def test_row_mismatch_is_invalid_input(self, scenario_files, tmp_path):
        train, test = scenario_files
        losses = tmp_path / "short.csv"
        losses.write_text("loss_a\n0.5\n0.6\n")
        proc = run_cli(
            "rank", str(train), str(losses), str(test),
            "--kernel", KERNEL, "--B", "2.84",
        )
        assert proc.returncode == 2
        msg = json.loads(proc.stderr.strip().splitlines()[-1])["error"]["message"]
        assert "do not match training rows" in msg


class TestExport:
    def test_writes_both_files_and_reports_them(self, tmp_path):
        proc = run_cli(
            "export", "--scenario", "s3", "--n-tr", "25", "--n-te", "35",
            "--seed", "2", "--outdir", str(tmp_path),
        )
        assert proc.returncode == 0, proc.stderr
        summary = json.loads(proc.stdout)
        assert summary["scenario"]["id"] == "s3"
        train_rows = read_rows(tmp_path / "train.csv")
        test_rows = read_rows(tmp_path / "test.csv")
        assert train_rows[0] == ["x1", "x2", "y", "beta_true"]
        assert test_rows[0] == ["x1", "x2"]
        assert len(train_rows) == 26 and len(test_rows) == 36

    def test_degenerate_sizes_are_invalid_input(self, tmp_path):
        proc = run_cli(
            "export", "--scenario", "s1", "--n-tr", "0", "--n-te", "5",
            "--outdir", str(tmp_path),
        )
        assert proc.returncode == 2
