"""End-to-end tests of the command line interface, run in process."""

import json
import shutil
import subprocess

import numpy as np
import pytest

from survquant.cli import main, read_dataset
from survquant.errors import DatasetFormatError, ValidationError

SCENARIO_TEXT = "lambda_a = 1.5\ndelta = 0.1\np = 0.5\nlambda_cens = 0.48\n"
SCENARIO_DELAYED = SCENARIO_TEXT + "t_cut = 0.2\n"


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def make_dataset(path, n=35, seed=10, identical=False, rate2=1.5, cens=0.48):
    """Write a censored two-group CSV; identical=True clones group 1."""
    rng = np.random.default_rng(seed)

    def arm(rate):
        events = rng.exponential(1.0 / rate, n)
        censor = rng.exponential(1.0 / cens, n)
        observed = np.minimum(events, censor)
        return observed, (events <= censor).astype(int)

    t1, s1 = arm(1.5)
    t2, s2 = (t1, s1) if identical else arm(rate2)
    lines = ["time,status,group"]
    lines += [f"{repr(float(t))},{s},1" for t, s in zip(t1, s1)]
    lines += [f"{repr(float(t))},{s},2" for t, s in zip(t2, s2)]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.cfg"
    path.write_text(SCENARIO_TEXT)
    return str(path)


def manifest_from_table(out):
    for line in out.splitlines():
        if line.startswith("manifest: "):
            return json.loads(line[len("manifest: "):])
    raise AssertionError("no manifest line in table output")


def manifest_from_csv(out):
    first = out.splitlines()[0]
    assert first.startswith("# manifest: ")
    return json.loads(first[len("# manifest: "):])


class TestReadDataset:
    def test_round_trip(self, tmp_path):
        path = make_dataset(tmp_path / "d.csv")
        data, info = read_dataset(path)
        assert data.arm1.times.size == 35
        assert data.arm2.times.size == 35
        assert len(info["sha256"]) == 64
        assert info["ignored_columns"] == []

    def test_column_order_is_free(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("group,time,status\n1,0.5,1\n1,0.7,0\n2,0.4,1\n2,0.9,1\n")
        data, _ = read_dataset(str(path))
        assert list(data.arm1.times) == [0.5, 0.7]
        assert list(data.arm2.events) == [True, True]

    def test_extra_columns_reported(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text(
            "time,status,group,site\n0.5,1,1,a\n0.7,0,1,b\n0.4,1,2,a\n"
        )
        _, info = read_dataset(str(path))
        assert info["ignored_columns"] == ["site"]

    def test_missing_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("time,event,group\n0.5,1,1\n")
        with pytest.raises(DatasetFormatError, match="line 1.*status"):
            read_dataset(str(path))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("")
        with pytest.raises(DatasetFormatError, match="empty"):
            read_dataset(str(path))

    def test_bad_status_line_number(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("time,status,group\n0.5,1,1\n0.7,dead,1\n")
        with pytest.raises(DatasetFormatError, match="line 3: status"):
            read_dataset(str(path))

    def test_bad_time(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("time,status,group\nsoon,1,1\n")
        with pytest.raises(DatasetFormatError, match="line 2: time"):
            read_dataset(str(path))

    def test_negative_time(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("time,status,group\n-0.5,1,1\n")
        with pytest.raises(DatasetFormatError, match="non-negative"):
            read_dataset(str(path))

    def test_bad_group(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("time,status,group\n0.5,1,3\n")
        with pytest.raises(DatasetFormatError, match="group must be 1 or 2"):
            read_dataset(str(path))

    def test_field_count(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("time,status,group\n0.5,1\n")
        with pytest.raises(DatasetFormatError, match="line 2: expected 3 fields"):
            read_dataset(str(path))

    def test_single_group_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("time,status,group\n0.5,1,1\n0.7,0,1\n")
        with pytest.raises(ValidationError, match="two groups required: group 2"):
            read_dataset(str(path))

    def test_trailing_blank_line(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("time,status,group\n0.5,1,1\n0.4,1,2\n\n")
        data, _ = read_dataset(str(path))
        assert data.arm1.times.size == 1


class TestCmdTest:
    def test_identical_groups_json(self, tmp_path, capsys):
        path = make_dataset(tmp_path / "d.csv", identical=True)
        code, out, _ = run_cli(
            capsys, "test", path, "--p", "0.5", "--sigma-eps", "2.0", "--json", "-"
        )
        assert code == 0
        payload = json.loads(out)
        result = payload["results"][0]
        assert result["delta_hat"] == 0.0
        assert result["statistic"] == 0.0
        assert result["p_value"] == 1.0
        manifest = payload["manifest"]
        assert manifest["command"] == "test"
        assert manifest["config"]["p"] == [0.5]
        assert manifest["tuning"]["sigma_eps"] == 2.0
        assert manifest["tuning"]["sigma_eps_mode"] == "fixed"
        assert manifest["seeds"] == {"seed": 0}
        assert len(manifest["dataset"]["sha256"]) == 64

    def test_table_output(self, tmp_path, capsys):
        path = make_dataset(tmp_path / "d.csv", rate2=2.5)
        code, out, _ = run_cli(capsys, "test", path, "--p", "0.5",
                               "--sigma-eps", "2.0")
        assert code == 0
        assert "p_value" in out.splitlines()[0]
        manifest = manifest_from_table(out)
        assert manifest["config"]["method"] == "ls"

    def test_unreachable_quantile_exit_3(self, tmp_path, capsys):
        path = tmp_path / "d.csv"
        path.write_text(
            "time,status,group\n"
            "0.1,1,1\n0.2,0,1\n0.3,0,1\n0.4,0,1\n"
            "0.1,1,2\n0.2,0,2\n0.3,0,2\n0.5,0,2\n"
        )
        code, _, err = run_cli(capsys, "test", str(path), "--p", "0.9",
                               "--sigma-eps", "2.0")
        assert code == 3
        assert "error:" in err
        assert "not estimable" in err

    def test_extra_column_warning(self, tmp_path, capsys):
        path = tmp_path / "d.csv"
        path.write_text(
            "time,status,group,site\n"
            "0.5,1,1,a\n0.7,1,1,b\n0.9,0,1,a\n"
            "0.4,1,2,b\n0.6,1,2,a\n1.0,0,2,b\n"
        )
        code, out, err = run_cli(capsys, "test", str(path), "--p", "0.5",
                                 "--sigma-eps", "2.0", "--json", "-")
        assert code == 0
        assert "ignoring extra column(s): site" in err
        payload = json.loads(out)
        assert payload["manifest"]["dataset"]["ignored_columns"] == ["site"]

    def test_duplicate_p_rejected(self, tmp_path, capsys):
        path = make_dataset(tmp_path / "d.csv")
        code, _, err = run_cli(capsys, "test", path, "--p", "0.5,0.5")
        assert code == 2
        assert "distinct" in err

    def test_flag_cross_validation(self, tmp_path, capsys):
        path = make_dataset(tmp_path / "d.csv")
        code, _, err = run_cli(capsys, "test", path, "--p", "0.5",
                               "--method", "ls", "--bandwidth", "0.3")
        assert code == 2
        assert "kde only" in err
        code, _, err = run_cli(capsys, "test", path, "--p", "0.5",
                               "--method", "kde", "--sigma-eps", "1.0")
        assert code == 2
        assert "ls only" in err

    def test_multivariate_with_bonferroni(self, tmp_path, capsys):
        path = make_dataset(tmp_path / "d.csv", n=60, rate2=2.5)
        code, out, _ = run_cli(
            capsys, "test", path, "--p", "0.25,0.5", "--bonferroni",
            "--sigma-eps", "2.0", "--json", "-",
        )
        assert code == 0
        payload = json.loads(out)
        joint = payload["results"][0]
        assert joint["dof"] == 2
        assert 0.0 <= joint["p_value"] <= 1.0
        followup = payload["bonferroni"]
        assert len(followup) == 2
        for entry in followup:
            expected = min(1.0, 2.0 * entry["p_value"])
            assert entry["adjusted_p_value"] == pytest.approx(expected, rel=1e-15)

    def test_sigma_auto_records_selections(self, tmp_path, capsys):
        path = make_dataset(tmp_path / "d.csv")
        code, out, _ = run_cli(capsys, "test", path, "--p", "0.5", "--json", "-")
        assert code == 0
        tuning = json.loads(out)["manifest"]["tuning"]
        assert tuning["sigma_eps_mode"] == "auto"
        assert len(tuning["sigma_eps_selections"]) == 2
        assert tuning["sigma_eps"] == max(tuning["sigma_eps_selections"])

    def test_kde_fixed_bandwidth(self, tmp_path, capsys):
        path = make_dataset(tmp_path / "d.csv", rate2=2.0)
        code, out, _ = run_cli(
            capsys, "test", path, "--p", "0.5", "--method", "kde",
            "--bandwidth", "0.4", "--json", "-",
        )
        assert code == 0
        tuning = json.loads(out)["manifest"]["tuning"]
        assert tuning["bandwidth_mode"] == "fixed"
        assert tuning["bandwidth"] == 0.4
        assert tuning["bandwidth_arm1"] == 0.4
        assert tuning["bandwidth_arm2"] == 0.4

    def test_kde_auto_bandwidth(self, tmp_path, capsys):
        path = make_dataset(tmp_path / "d.csv", rate2=2.0)
        code, out, _ = run_cli(
            capsys, "test", path, "--p", "0.5", "--method", "kde", "--json", "-"
        )
        assert code == 0
        tuning = json.loads(out)["manifest"]["tuning"]
        assert tuning["bandwidth_mode"] == "auto"
        assert 0.1 <= tuning["bandwidth_arm1"] <= 1.0
        assert 0.1 <= tuning["bandwidth_arm2"] <= 1.0


class TestCmdPower:
    def test_csv_output(self, scenario_file, capsys):
        code, out, _ = run_cli(
            capsys, "power", "--scenario", scenario_file,
            "--delta", "0,0.1", "--n", "50,500",
        )
        assert code == 0
        lines = out.splitlines()
        manifest = manifest_from_csv(out)
        assert manifest["command"] == "power"
        assert lines[1] == "p,delta,n_per_group,power"
        rows = [line.split(",") for line in lines[2:]]
        assert len(rows) == 4
        # the null rows print alpha exactly
        null_rows = [r for r in rows if r[1] == "0.0"]
        assert all(r[3] == "0.05" for r in null_rows)
        cell = [r for r in rows if r[1] == "0.1" and r[2] == "500"]
        assert float(cell[0][3]) == pytest.approx(0.702758153366563, rel=1e-12)

    def test_json_payload(self, scenario_file, capsys):
        code, out, _ = run_cli(
            capsys, "power", "--scenario", scenario_file,
            "--delta", "0.1", "--n", "100,500", "--json", "-",
        )
        assert code == 0
        payload = json.loads(out)
        assert len(payload["results"]) == 2
        summary = payload["manifest"]["config"]["scenario"]
        assert summary["form"] == "proportional"
        # the comparator rate varies with delta, so it stays out of the manifest
        assert "lambda_b" not in summary

    def test_p_flag_overrides_config(self, scenario_file, capsys):
        code, out, _ = run_cli(
            capsys, "power", "--scenario", scenario_file,
            "--p", "0.25", "--delta", "0.05", "--n", "100", "--json", "-",
        )
        assert code == 0
        assert json.loads(out)["manifest"]["config"]["p"] == 0.25

    def test_missing_p(self, tmp_path, capsys):
        cfg = tmp_path / "s.cfg"
        cfg.write_text("lambda_a = 1.5\n")
        code, _, err = run_cli(
            capsys, "power", "--scenario", str(cfg), "--delta", "0.1", "--n", "100"
        )
        assert code == 2
        assert "quantile probability is required" in err

    def test_infeasible_delta(self, scenario_file, capsys):
        # the median of the control arm is about 0.46, so a shift of 0.5
        # leaves no positive comparator quantile
        code, _, err = run_cli(
            capsys, "power", "--scenario", scenario_file,
            "--delta", "0.5", "--n", "100",
        )
        assert code == 2
        assert "error:" in err

    def test_missing_scenario_file(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "power", "--scenario", str(tmp_path / "nope.cfg"),
            "--delta", "0.1", "--n", "100",
        )
        assert code == 2
        assert "cannot read scenario config" in err


class TestCmdSamplesize:
    def test_reference_cells(self, scenario_file, capsys):
        code, out, _ = run_cli(
            capsys, "samplesize", "--scenario", scenario_file,
            "--power", "0.9,0.95", "--json", "-",
        )
        assert code == 0
        payload = json.loads(out)
        rows = payload["results"]
        assert rows[0]["per_group_n"] == 846
        assert rows[1]["per_group_n"] == 1047
        for row in rows:
            assert row["achieved_power"] >= row["target_power"]
            assert row["total_n"] == 2 * row["per_group_n"]

    def test_delta_flag_override(self, scenario_file, capsys):
        code, out, _ = run_cli(
            capsys, "samplesize", "--scenario", scenario_file,
            "--delta", "0.2", "--power", "0.9", "--json", "-",
        )
        assert code == 0
        assert json.loads(out)["results"][0]["per_group_n"] == 173

    def test_delayed_scenario(self, tmp_path, capsys):
        cfg = tmp_path / "s2.cfg"
        cfg.write_text(SCENARIO_DELAYED)
        code, out, _ = run_cli(
            capsys, "samplesize", "--scenario", str(cfg),
            "--power", "0.95", "--json", "-",
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["results"][0]["per_group_n"] == 901
        assert payload["manifest"]["config"]["scenario"]["form"] == "delayed-effect"

    def test_table_output(self, scenario_file, capsys):
        code, out, _ = run_cli(
            capsys, "samplesize", "--scenario", scenario_file, "--power", "0.9"
        )
        assert code == 0
        assert "per_group_n" in out.splitlines()[0]
        assert "846" in out
        manifest = manifest_from_table(out)
        assert manifest["config"]["delta"] == pytest.approx(0.1, abs=1e-12)

    def test_target_at_alpha_rejected(self, scenario_file, capsys):
        code, _, err = run_cli(
            capsys, "samplesize", "--scenario", scenario_file, "--power", "0.05"
        )
        assert code == 2
        assert "target power" in err


class TestCmdSimulate:
    def test_smoke_csv(self, scenario_file, capsys):
        code, out, _ = run_cli(
            capsys, "simulate", "--scenario", scenario_file,
            "--n", "30", "--reps", "5", "--seed", "1",
        )
        assert code == 0
        manifest = manifest_from_csv(out)
        assert manifest["seeds"]["master_seed"] == 1
        assert manifest["config"]["replications"] == 5
        assert manifest["tuning"]["sigma_eps"] == 5.0
        header = out.splitlines()[1].split(",")
        assert "empirical" in header
        assert "rep_time_mean_s" not in header

    def test_thread_count_byte_identity(self, scenario_file, capsys):
        argv = ["simulate", "--scenario", scenario_file, "--n", "30",
                "--reps", "24", "--seed", "3"]
        _, serial, _ = run_cli(capsys, *argv, "--threads", "1")
        _, pooled, _ = run_cli(capsys, *argv, "--threads", "4")
        assert serial == pooled

    def test_threads_env_variable(self, scenario_file, capsys, monkeypatch):
        argv = ["simulate", "--scenario", scenario_file, "--n", "25",
                "--reps", "10", "--seed", "5"]
        _, explicit, _ = run_cli(capsys, *argv, "--threads", "1")
        monkeypatch.setenv("SURVQUANT_THREADS", "4")
        _, from_env, _ = run_cli(capsys, *argv)
        assert from_env == explicit

    def test_ci_env_requires_seed(self, scenario_file, capsys, monkeypatch):
        monkeypatch.setenv("CI", "true")
        code, _, err = run_cli(
            capsys, "simulate", "--scenario", scenario_file, "--n", "25",
            "--reps", "2",
        )
        assert code == 2
        assert "--seed is required" in err
        code, _, _ = run_cli(
            capsys, "simulate", "--scenario", scenario_file, "--n", "25",
            "--reps", "2", "--seed", "7",
        )
        assert code == 0

    def test_seed_defaults_to_zero_outside_ci(self, scenario_file, capsys,
                                              monkeypatch):
        monkeypatch.delenv("CI", raising=False)
        code, out, _ = run_cli(
            capsys, "simulate", "--scenario", scenario_file, "--n", "25",
            "--reps", "2",
        )
        assert code == 0
        assert manifest_from_csv(out)["seeds"]["master_seed"] == 0

    def test_timing_columns(self, scenario_file, capsys):
        code, out, _ = run_cli(
            capsys, "simulate", "--scenario", scenario_file, "--n", "25",
            "--reps", "3", "--seed", "1", "--timing",
        )
        assert code == 0
        header = out.splitlines()[1].split(",")
        assert header[-2:] == ["rep_time_mean_s", "rep_time_sd_s"]

    def test_json_to_file(self, scenario_file, tmp_path, capsys):
        target = tmp_path / "report.json"
        code, out, _ = run_cli(
            capsys, "simulate", "--scenario", scenario_file, "--n", "30",
            "--reps", "5", "--seed", "2", "--json", str(target),
        )
        assert code == 0
        assert out == ""
        payload = json.loads(target.read_text())
        entry = payload["results"][0]
        assert 0.0 <= entry["empirical"] <= 1.0
        assert entry["used"] + entry["failures"] == 5

    def test_delta_override_to_null(self, scenario_file, capsys):
        code, out, _ = run_cli(
            capsys, "simulate", "--scenario", scenario_file, "--n", "25",
            "--reps", "2", "--seed", "1", "--delta", "0",
        )
        assert code == 0
        lines = out.splitlines()
        header = lines[1].split(",")
        row = lines[2].split(",")
        assert row[header.index("formula")] == "0.05"
        assert row[header.index("delta")] == "0.0"

    def test_multivariate_probabilities(self, scenario_file, capsys):
        code, out, _ = run_cli(
            capsys, "simulate", "--scenario", scenario_file, "--n", "40",
            "--reps", "4", "--seed", "2", "--p", "0.25,0.5",
        )
        assert code == 0
        row = out.splitlines()[2].split(",")
        assert row[0] == "0.25;0.5"

    def test_kde_cross_flag(self, scenario_file, capsys):
        code, _, err = run_cli(
            capsys, "simulate", "--scenario", scenario_file, "--n", "25",
            "--reps", "2", "--seed", "1", "--method", "kde",
            "--sigma-eps", "1.0",
        )
        assert code == 2
        assert "ls only" in err


@pytest.mark.skipif(
    shutil.which("survquant") is None, reason="console script not installed"
)
class TestConsoleScript:
    def test_power_runs(self, scenario_file):
        result = subprocess.run(
            ["survquant", "power", "--scenario", scenario_file,
             "--delta", "0.1", "--n", "50"],
            capture_output=True, text=True, timeout=120,
        )
        assert result.returncode == 0
        assert result.stdout.startswith("# manifest: ")
