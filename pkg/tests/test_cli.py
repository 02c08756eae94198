"""CLI: exit codes, config echo, determinism of emitted files."""

import json
import subprocess
import sys

import pytest

from contamkit.cli import main
from contamkit.datasets import save_dataset
from contamkit.synth import synthetic_dataset

from conftest import mock_oracle_cmd


def run_cli(*argv):
    proc = subprocess.run(
        [sys.executable, "-m", "contamkit.cli", *argv],
        capture_output=True, text=True, timeout=300,
    )
    return proc.returncode, proc.stdout, proc.stderr


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A trained model file and a dataset file shared across CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    model = root / "model.bin"
    code, out, err = run_cli(
        "ngram", "train", "--corpus", "synthetic:seed=5,docs=800",
        "--order", "4", "--alpha", "0.1", "--out", str(model),
    )
    assert code == 0, err
    ds_path = root / "probe.jsonl"
    save_dataset(synthetic_dataset(31, 60, name="probe"), ds_path)
    return root, model, ds_path


class TestAudit:
    def test_sharded_audit_writes_result(self, workspace, tmp_path):
        root, model, ds_path = workspace
        out = tmp_path / "result.json"
        code, stdout, _ = run_cli(
            "audit", "--dataset", str(ds_path), "--oracle", f"builtin:ngram={model}",
            "--test", "sharded", "--shards", "10", "--permutations", "11",
            "--seed", "3", "--out", str(out),
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["test_kind"] == "sharded"
        assert doc["dataset_name"] == "probe"
        assert 0 < doc["p_value"] <= 1
        assert "verdict:" in stdout

    def test_defaults_echoed(self, workspace, tmp_path):
        root, model, ds_path = workspace
        code, stdout, _ = run_cli(
            "audit", "--dataset", str(ds_path), "--oracle", f"builtin:ngram={model}",
            "--shards", "10", "--permutations", "11",
            "--out", str(tmp_path / "r.json"),
        )
        assert code == 0
        config_line = stdout.splitlines()[0]
        assert "seed=42" in config_line
        assert "max_examples=5000" in config_line
        assert "test=sharded" in config_line

    def test_stock_defaults_without_overrides(self, workspace, tmp_path):
        # defaults are shards=50 permutations=250; dataset too small for 50
        # shards, so check the echo only and expect the config error
        root, model, ds_path = workspace
        code, stdout, stderr = run_cli(
            "audit", "--dataset", str(ds_path), "--oracle", f"builtin:ngram={model}",
            "--out", str(tmp_path / "r.json"),
        )
        assert "shards=50" in stdout and "permutations=250" in stdout
        assert code == 2  # 60 examples cannot fill 50 shards

    def test_zero_permutations_is_usage_error(self, workspace, tmp_path):
        root, model, ds_path = workspace
        code, _, stderr = run_cli(
            "audit", "--dataset", str(ds_path), "--oracle", f"builtin:ngram={model}",
            "--test", "permutation", "--permutations", "0",
            "--out", str(tmp_path / "r.json"),
        )
        assert code == 2
        assert "num_permutations" in stderr

    def test_missing_dataset_is_usage_error(self, workspace, tmp_path):
        root, model, _ = workspace
        code, _, stderr = run_cli(
            "audit", "--dataset", "/nonexistent.jsonl",
            "--oracle", f"builtin:ngram={model}", "--out", str(tmp_path / "r.json"),
        )
        assert code == 2

    def test_oracle_transport_failure_exit_3_with_partial(self, workspace, tmp_path):
        root, model, ds_path = workspace
        out = tmp_path / "partial.json"
        # canonical and one permutation answer, the next request kills the
        # process; with no retry budget the partial scores land in the file
        cmd = mock_oracle_cmd("--die-before", "3")
        code, _, stderr = run_cli(
            "audit", "--dataset", str(ds_path), "--oracle", f"cmd:{cmd}",
            "--test", "permutation", "--permutations", "9",
            "--oracle-retries", "0", "--out", str(out),
        )
        assert code == 3
        doc = json.loads(out.read_text())
        assert doc["status"] == "oracle_failure"
        assert doc["partial_scores"]["canonical_logprob"] is not None
        assert len(doc["partial_scores"]["permuted_logprobs"]) == 1

    def test_remote_oracle_audit(self, workspace, tmp_path):
        root, model, ds_path = workspace
        out = tmp_path / "remote.json"
        cmd = mock_oracle_cmd("--score", "sumord", "--name", "mock")
        code, stdout, stderr = run_cli(
            "audit", "--dataset", str(ds_path), "--oracle", f"cmd:{cmd}",
            "--test", "permutation", "--permutations", "19", "--out", str(out),
        )
        assert code == 0, stderr
        assert json.loads(out.read_text())["oracle_name"] == "mock"

    def test_jobs_byte_identical(self, workspace, tmp_path):
        root, model, ds_path = workspace
        outs = []
        for jobs in ("1", "8"):
            out = tmp_path / f"jobs{jobs}.json"
            code, _, _ = run_cli(
                "audit", "--dataset", str(ds_path),
                "--oracle", f"builtin:ngram={model}", "--test", "sharded",
                "--shards", "10", "--permutations", "11", "--seed", "5",
                "--jobs", jobs, "--out", str(out),
            )
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestAggregate:
    def write_results(self, directory, prefix, p_values):
        from contamkit.stats import TestConfig, TestResult

        directory.mkdir(parents=True, exist_ok=True)
        for name, p in p_values.items():
            result = TestResult(
                p_value=p, test_kind="sharded",
                config=TestConfig(test_kind="sharded", num_permutations=5,
                                  master_seed=1, num_shards=5),
                dataset_name=name, oracle_name=prefix,
                shard_stats=[0.0] * 5, shard_mean=0.0, shard_std=1.0,
                t_statistic=0.0, degrees_of_freedom=4,
            )
            result.write(directory / f"{name}.json")

    def test_pure_fisher_without_controls(self, tmp_path):
        self.write_results(tmp_path / "t", "target", {"a": 0.05, "b": 0.05})
        out = tmp_path / "agg.json"
        code, stdout, _ = run_cli(
            "aggregate", "--target", str(tmp_path / "t" / "*.json"),
            "--out", str(out),
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["combined_p"] == pytest.approx(0.01747866, abs=1e-6)
        assert doc["degrees_of_freedom"] == 4
        ecdf_csv = (tmp_path / "agg.ecdf.csv").read_text()
        assert ecdf_csv.splitlines()[0] == "p,empirical_cdf"

    def test_control_filtering_names_the_control(self, tmp_path):
        self.write_results(tmp_path / "t", "target", {"a": 0.5, "b": 0.4, "c": 0.9})
        self.write_results(tmp_path / "c1", "ctrl", {"a": 0.001, "b": 0.9, "c": 0.9})
        self.write_results(tmp_path / "c2", "ctrl", {"a": 0.9, "b": 0.01, "c": 0.9})
        out = tmp_path / "agg.json"
        code, stdout, _ = run_cli(
            "aggregate", "--target", str(tmp_path / "t" / "*.json"),
            "--control", str(tmp_path / "c1" / "*.json"),
            "--control", str(tmp_path / "c2" / "*.json"),
            "--out", str(out),
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["included_names"] == ["c"]
        reasons = {e["name"]: e["reason"] for e in doc["excluded"]}
        assert "c1" in reasons["a"] and "c2" in reasons["b"]

    def test_empty_glob_is_usage_error(self, tmp_path):
        code, _, stderr = run_cli(
            "aggregate", "--target", str(tmp_path / "missing" / "*.json"),
            "--out", str(tmp_path / "agg.json"),
        )
        assert code == 2
        assert "no files match" in stderr

    def test_all_excluded_is_error(self, tmp_path):
        self.write_results(tmp_path / "t", "target", {"a": 0.5})
        self.write_results(tmp_path / "c", "ctrl", {"a": 0.001})
        code, _, stderr = run_cli(
            "aggregate", "--target", str(tmp_path / "t" / "*.json"),
            "--control", str(tmp_path / "c" / "*.json"),
            "--out", str(tmp_path / "agg.json"),
        )
        assert code == 2
        assert "no exchangeable components" in stderr


class TestNgramTrain:
    def test_deterministic_model_hash(self, tmp_path):
        hashes = []
        for name in ("a.bin", "b.bin"):
            out = tmp_path / name
            code, stdout, _ = run_cli(
                "ngram", "train", "--corpus", "synthetic:seed=9,docs=300",
                "--order", "3", "--alpha", "0.2", "--out", str(out),
            )
            assert code == 0
            hashes.append(stdout.strip().split()[-1])
        assert hashes[0] == hashes[1]
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()

    def test_bad_corpus_spec(self, tmp_path):
        code, _, stderr = run_cli(
            "ngram", "train", "--corpus", "synthetic:docs=0",
            "--out", str(tmp_path / "m.bin"),
        )
        assert code == 2


class TestCanaryRun:
    def config_doc(self, out_dir):
        return {
            "canaries": [{"name": "c1", "dup": 4, "num_examples": 40}],
            "seeds": [0, 1],
            "out_dir": str(out_dir),
            "background": "synthetic:docs=400",
            "num_shards": 10,
            "num_permutations": 11,
            "control_examples": 40,
        }

    def test_run_twice_byte_identical(self, tmp_path):
        out_dir = tmp_path / "r"
        config_path = tmp_path / "c.json"
        config_path.write_text(json.dumps(self.config_doc(out_dir)))
        snapshots = []
        for _ in range(2):
            code, stdout, stderr = run_cli("canary", "run", "--config", str(config_path))
            assert code == 0, stderr
            snapshots.append(
                ((out_dir / "rows.csv").read_bytes(),
                 (out_dir / "summary.json").read_bytes())
            )
        assert snapshots[0] == snapshots[1]

    def test_plot_written(self, tmp_path):
        out_dir = tmp_path / "r"
        config_path = tmp_path / "c.json"
        config_path.write_text(json.dumps(self.config_doc(out_dir)))
        code, _, _ = run_cli("canary", "run", "--config", str(config_path), "--plot")
        assert code == 0
        svg = (out_dir / "plot.svg").read_text()
        assert svg.lstrip().startswith("<?xml")

    def test_malformed_config(self, tmp_path):
        config_path = tmp_path / "c.json"
        config_path.write_text("{not json")
        code, _, stderr = run_cli("canary", "run", "--config", str(config_path))
        assert code == 2

    def test_row_errors_exit_1(self, tmp_path):
        doc = self.config_doc(tmp_path / "r")
        doc["canaries"].append({"name": "too-small", "dup": 1, "num_examples": 8})
        config_path = tmp_path / "c.json"
        config_path.write_text(json.dumps(doc))
        code, _, stderr = run_cli("canary", "run", "--config", str(config_path))
        assert code == 1
        assert "some rows failed" in stderr


class TestCalibrate:
    def test_prints_ks(self, tmp_path):
        code, stdout, stderr = run_cli(
            "calibrate", "--runs", "100", "--dataset-size", "20",
            "--permutations", "9", "--test", "permutation",
            "--background", "synthetic:docs=300", "--seed", "7",
            "--out-dir", str(tmp_path / "cal"),
        )
        assert code == 0, stderr
        assert "KS D=" in stdout
        doc = json.loads((tmp_path / "cal" / "calibration.json").read_text())
        assert doc["num_runs"] == 100
        assert len(doc["p_values"]) == 100

    def test_too_few_runs(self, tmp_path):
        code, _, stderr = run_cli("calibrate", "--runs", "10")
        assert code == 2


class TestUsage:
    def test_no_command_is_usage_error(self):
        code, _, _ = run_cli()
        assert code == 2

    def test_help_lists_defaults(self):
        code, stdout, _ = run_cli("audit", "--help")
        assert code == 0
        assert "default: 50" in stdout
        assert "default: 250" in stdout
        assert "default: 42" in stdout

    def test_version(self):
        code, stdout, _ = run_cli("--version")
        assert code == 0
        assert "contamkit" in stdout

    def test_main_callable_in_process(self, tmp_path):
        # main() is also usable without a subprocess
        assert main(["calibrate", "--runs", "5"]) == 2
