"""Acceptance suite: one test per criterion, at the stated tolerances.

Each criterion prints a PASS/FAIL line in the terminal summary (see
conftest.pytest_terminal_summary).  Criteria 1-3 and 8 are exact-arithmetic
checks against independently generated references; 4-7 run the full pipeline
on the built-in n-gram; 9 checks byte-identical reruns through the CLI.
"""

import json
import random
import subprocess
import sys
import time
from contextlib import contextmanager

import pytest

from contamkit.harness import (
    CanaryExperimentConfig,
    CanarySpec,
    SweepConfig,
    run_canary_experiment,
    run_null_calibration,
    sensitivity_sweep,
    _LANE_CANARY,
)
from contamkit.rng import derive_key
from contamkit.special import chi2_sf, t_sf
from contamkit.stats import (
    filtered_aggregate,
    fisher_combine,
    permutation_p_value,
    shard_statistics_test,
)
from contamkit.synth import synthetic_dataset
from contamkit.datasets import save_dataset

from conftest import mock_oracle_cmd, record_acceptance
from test_special import CHI2_SF_TABLE, T_SF_TABLE

DUP_SCHEDULE = (1, 2, 4, 7, 10, 50)
SEEDS = (0, 1, 2, 3, 4)


@contextmanager
def criterion(number: int, title: str):
    try:
        yield
    except BaseException as exc:
        record_acceptance(number, title, False, detail=type(exc).__name__)
        raise
    record_acceptance(number, title, True)


# Reference (t, df, p) for injected shard-stat vectors, generated with mpmath
# at 50 decimal digits (one-sided upper-tail t survival).
SHARDED_CASES = [
    ([1.0, 2.0, 3.0], 3.4641016151377546, 2, 0.037089950113724269),
    ([-1.0, 1.0], 0.0, 1, 0.50000000000000000),
    ([0.5, 0.5, 0.5, 0.7], 11.0, 3, 0.00080443356086962542),
    ([10.0, 11.0, 9.5, 10.2, 10.8], 37.863553037831099, 4, 1.4528439202185807e-6),
    ([-2.0, -1.5, -3.0, -2.5], -6.9713700231733504, 3, 0.99697157560204580),
    ([0.001, -0.001, 0.002, -0.002, 0.0015],
     0.3905667329424716, 4, 0.35801294300307458),
    ([5.0, -5.0, 4.0, -4.0, 3.0, -3.0], 0.0, 5, 0.50000000000000000),
    ([1e-06, 2e-06, 3e-06, 4e-06], 3.8729833462074169, 3, 0.015233145831085496),
    ([100.0, 101.0, 99.0, 100.5, 99.5, 100.2],
     344.23830867277793, 5, 1.9630827341558056e-12),
    ([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
     5.7445626465380287, 9, 0.00013909800552409292),
    ([2.5, 2.5, 2.5, 2.6, 2.6, 2.6], 114.03946685248927, 5, 4.9163211417731737e-10),
    ([-0.3, 0.1, -0.2, 0.05, -0.15, 0.2, -0.1],
     -0.84484001257051545, 6, 0.78470332318022200),
    ([1.0, 1.1, 0.9, 1.05, 0.95, 1.02, 0.98, 1.01, 0.99, 1.03,
      0.97, 1.04, 0.96, 1.06, 0.94, 1.07, 0.93, 1.08, 0.92, 1.09],
     74.819069787611602, 19, 3.0509334316548922e-25),
    ([3.0, 3.5, 2.5, 4.0, 2.0, 3.2, 2.8, 3.6, 2.4, 3.1,
      2.9, 3.3, 2.7, 3.4, 2.6, 3.7, 2.3, 3.8, 2.2, 3.9,
      2.1, 4.1, 1.9, 4.2, 1.8, 4.3, 1.7, 4.4, 1.6, 4.5,
      1.5, 4.6, 1.4, 4.7, 1.3, 4.8, 1.2, 4.9, 1.1, 5.0,
      1.0, 5.1, 0.9, 5.2, 0.8, 5.3, 0.7, 5.4, 0.6, 5.5],
     14.794673127216311, 49, 5.2571420177753946e-20),
    ([-10.0, 10.0, -9.0, 9.0, -8.0], -0.35200985641397132, 4, 0.62870332832161137),
    ([0.42, 0.37, 0.51, 0.44, 0.39, 0.48, 0.41, 0.46],
     26.231486978265435, 7, 1.4972959487037415e-8),
    ([7.0, 7.0, 7.0, 7.1], 281.0, 3, 4.9693775145587876e-8),
    ([-0.5, -0.4, -0.6, -0.45, -0.55, -0.5],
     -17.320508075688773, 5, 0.99999412396995588),
    ([12.0, 8.0], 5.0, 1, 0.062832958189001184),
    ([0.3, 0.32, 0.28, 0.31, 0.29, 0.3, 0.33, 0.27, 0.3, 0.31, 0.29, 0.3],
     62.928530890209093, 11, 1.0105942938423125e-15),
    ([6.1, 5.9, 6.0, 6.05, 5.95, 6.02, 5.98, 6.03, 5.97, 6.01],
     342.12389176014794, 9, 3.9632694454988275e-20),
    ([0.0, 0.0, 0.1], 1.0, 2, 0.21132486540518712),
]


@pytest.fixture(scope="session")
def canary_report(tmp_path_factory):
    """Shared dup-schedule experiment: 6 canaries x 5 seeds x both tests."""
    out_dir = tmp_path_factory.mktemp("canary-acceptance")
    config = CanaryExperimentConfig(
        canaries=tuple(CanarySpec(name=f"dup{d}", dup=d) for d in DUP_SCHEDULE),
        seeds=SEEDS,
        out_dir=str(out_dir),
        background="synthetic:docs=4000",
        num_shards=50,
        num_permutations=51,
    )
    started = time.monotonic()
    report = run_canary_experiment(config, jobs=1)
    elapsed = time.monotonic() - started
    report.write(config.out_dir)
    return config, report, elapsed


def test_criterion_1_permutation_exactness():
    with criterion(1, "permutation-test exactness and floor"):
        started = time.monotonic()
        # hand-built sets: p-hat is exactly (exceed+1)/(m+1)
        cases = [
            (-10.0, [-12.0, -11.0, -13.0], 0, 0.25),
            (-10.0, [-9.0, -9.5, -11.0], 2, 0.75),
            (-10.0, [-9.0] * 100, 100, 1.0),
            (-10.0, [-10.0, -9.0], 1, 2 / 3),  # tie does not exceed
            (0.0, [-1.0], 0, 0.5),
        ]
        for canonical, permuted, want_exceed, want_p in cases:
            exceed, p = permutation_p_value(canonical, permuted)
            assert exceed == want_exceed
            assert p == want_p
        # min over 1000 randomized cases is exactly 1/(m+1)
        rng = random.Random(12345)
        for m in (9, 51, 100):
            observed = []
            for _ in range(1000):
                canonical = rng.uniform(-50, 0)
                permuted = [rng.uniform(-50, 0) for _ in range(m)]
                _, p = permutation_p_value(canonical, permuted)
                assert p >= 1 / (m + 1)
                observed.append(p)
            assert min(observed) == 1 / (m + 1)
        assert time.monotonic() - started < 1.0


def test_criterion_2_sharded_arithmetic():
    with criterion(2, "sharded-test arithmetic vs reference oracle"):
        started = time.monotonic()
        assert len(SHARDED_CASES) >= 20
        for stats, want_t, want_df, want_p in SHARDED_CASES:
            mean, std, t, df, p = shard_statistics_test(stats)
            assert df == want_df
            assert t == pytest.approx(want_t, rel=1e-12, abs=1e-12)
            assert p == pytest.approx(want_p, abs=1e-9)
        # the two named cases are present
        assert shard_statistics_test([1.0, 2.0, 3.0])[4] == pytest.approx(
            0.0370899501, abs=1e-9
        )
        assert shard_statistics_test([-1.0, 1.0])[4] == 0.5  # t = 0
        assert time.monotonic() - started < 1.0


def test_criterion_3_special_functions():
    with criterion(3, "special functions vs pinned tables"):
        started = time.monotonic()
        assert len(T_SF_TABLE) >= 20
        assert len(CHI2_SF_TABLE) >= 20
        for t, df, expected in T_SF_TABLE:
            assert abs(t_sf(t, df) - expected) <= 1e-10, (t, df)
        for x, df, expected in CHI2_SF_TABLE:
            assert abs(chi2_sf(x, df) - min(expected, 1.0)) <= 1e-10, (x, df)
        assert time.monotonic() - started < 1.0


def test_criterion_4_null_calibration():
    with criterion(4, "null calibration: KS and rejection rate"):
        started = time.monotonic()
        report = run_null_calibration(
            num_runs=200,
            dataset_size=200,
            num_shards=50,
            num_permutations=51,
            master_seed=42,
            order=5,
            alpha=0.1,
            background="synthetic:docs=4000",
        )
        elapsed = time.monotonic() - started
        assert report.ks < 0.0962, report.ks
        assert 0.02 <= report.fraction_below[0.05] <= 0.10, report.fraction_below
        assert elapsed < 600, f"calibration took {elapsed:.0f}s"


def test_criterion_5_power_monotonicity(canary_report):
    with criterion(5, "power vs duplication count"):
        config, report, elapsed = canary_report
        medians = report.median_p()["sharded"]
        values = [medians[d] for d in DUP_SCHEDULE]
        for earlier, later in zip(values, values[1:]):
            assert later <= earlier, medians
        assert medians[10] <= 1e-4
        assert medians[50] <= 1e-4
        assert elapsed < 1200, f"canary grid took {elapsed:.0f}s"


def test_dup50_median_is_deep(canary_report):
    # stronger than criterion 5's bound: at dup=50 the default pipeline should
    # land many orders of magnitude below the reporting threshold
    _, report, _ = canary_report
    assert report.median_p()["sharded"][50] <= 1e-6


def test_criterion_6_sharded_beats_permutation_floor(canary_report):
    with criterion(6, "sharded test beats the permutation floor at dup=10"):
        config, report, _ = canary_report
        assert config.num_permutations == 51
        permutation_floor = 1 / (51 + 1)
        sharded_median = report.median_p()["sharded"][10]
        assert sharded_median < permutation_floor
        # the permutation test itself sits at its floor for dup=10
        assert report.median_p()["permutation"][10] == pytest.approx(
            permutation_floor
        )


def test_criterion_7_permutation_count_sweep(canary_report, tmp_path):
    with criterion(7, "diminishing returns beyond 25 permutations"):
        config, report, _ = canary_report
        specs = []
        for i, c in enumerate(config.canaries):
            ds_seed = derive_key(SEEDS[0], _LANE_CANARY, i)
            specs.append(
                f"synthetic:seed={ds_seed},examples={c.num_examples},name={c.name}"
            )
        sweep = SweepConfig(
            axis="permutations",
            values=(1, 2, 10, 25, 50),
            fixed=50,
            model_path=f"{config.out_dir}/models/model-seed{SEEDS[0]}.bin",
            datasets=tuple(specs),
            seeds=(11, 12, 13),
            out_dir=str(tmp_path / "sweep"),
        )
        sweep_report = sensitivity_sweep(sweep)
        means = sweep_report.mean_log10_p()
        series = [means[v] for v in (1, 2, 10, 25, 50)]
        for earlier, later in zip(series, series[1:]):
            assert later <= earlier + 1e-12, means
        improvement_1_to_25 = means[1] - means[25]
        improvement_25_to_50 = means[25] - means[50]
        assert improvement_25_to_50 < improvement_1_to_25, means


def test_criterion_8_fisher_and_filtering():
    with criterion(8, "Fisher combination and control filtering"):
        started = time.monotonic()
        assert fisher_combine([0.05, 0.05]).combined_p == pytest.approx(
            0.01747, abs=1e-4
        )
        # 57-file fixture with 14 control-flagged files leaves 43
        rng = random.Random(99)
        target = {f"subject-{i:02d}": rng.uniform(0.001, 1.0) for i in range(57)}
        control_a = {name: 1.0 for name in target}
        control_b = {name: 1.0 for name in target}
        flagged = sorted(target)[10:24]  # 14 names, split across two controls
        for name in flagged[:7]:
            control_a[name] = 0.004
        for name in flagged[7:]:
            control_b[name] = 0.012
        result = filtered_aggregate(
            target, {"control-a": control_a, "control-b": control_b}, threshold=0.05
        )
        assert len(result.excluded) == 14
        assert len(result.included_names) == 43
        assert result.degrees_of_freedom == 86
        assert sorted(e["name"] for e in result.excluded) == flagged
        assert time.monotonic() - started < 1.0


def run_cli(*argv):
    proc = subprocess.run(
        [sys.executable, "-m", "contamkit.cli", *argv],
        capture_output=True, text=True, timeout=600,
    )
    return proc.returncode, proc.stdout, proc.stderr


def test_criterion_9_byte_identical_reruns(tmp_path):
    with criterion(9, "byte-identical result files for jobs in {1, 8}"):
        model_path = tmp_path / "model.bin"
        code, _, err = run_cli(
            "ngram", "train", "--corpus", "synthetic:seed=21,docs=1500",
            "--order", "5", "--alpha", "0.1", "--out", str(model_path),
        )
        assert code == 0, err
        ds_path = tmp_path / "probe.jsonl"
        save_dataset(synthetic_dataset(77, 120, name="probe"), ds_path)

        # audit against the built-in oracle
        builtin_files = []
        for jobs in ("1", "8"):
            out = tmp_path / f"audit-builtin-{jobs}.json"
            code, _, err = run_cli(
                "audit", "--dataset", str(ds_path),
                "--oracle", f"builtin:ngram={model_path}",
                "--test", "sharded", "--shards", "20", "--permutations", "25",
                "--seed", "42", "--jobs", jobs, "--out", str(out),
            )
            assert code == 0, err
            builtin_files.append(out.read_bytes())
        assert builtin_files[0] == builtin_files[1]

        # audit against the scripted mock remote oracle
        remote_files = []
        for jobs in ("1", "8"):
            out = tmp_path / f"audit-remote-{jobs}.json"
            code, _, err = run_cli(
                "audit", "--dataset", str(ds_path),
                "--oracle", "cmd:" + mock_oracle_cmd("--score", "sumord"),
                "--test", "permutation", "--permutations", "30",
                "--seed", "42", "--jobs", jobs, "--out", str(out),
            )
            assert code == 0, err
            remote_files.append(out.read_bytes())
        assert remote_files[0] == remote_files[1]

        # a canary experiment rerun with different worker counts
        config_doc = {
            "canaries": [{"name": "dup5", "dup": 5, "num_examples": 60}],
            "seeds": [0, 1],
            "out_dir": str(tmp_path / "exp"),
            "background": "synthetic:docs=800",
            "num_shards": 15,
            "num_permutations": 11,
            "control_examples": 60,
        }
        config_path = tmp_path / "exp.json"
        config_path.write_text(json.dumps(config_doc), encoding="utf-8")
        snapshots = []
        for jobs in ("1", "8"):
            code, _, err = run_cli(
                "canary", "run", "--config", str(config_path), "--jobs", jobs
            )
            assert code == 0, err
            snapshots.append(
                ((tmp_path / "exp" / "rows.csv").read_bytes(),
                 (tmp_path / "exp" / "summary.json").read_bytes())
            )
        assert snapshots[0] == snapshots[1]
