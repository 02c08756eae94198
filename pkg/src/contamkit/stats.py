"""Hypothesis tests for order memorization, and p-value aggregation.

Two tests share the same null: if the model never saw the dataset, the
canonical ordering's log-probability is exchangeable with that of any
shuffled ordering.

* The whole-dataset comparison ranks the canonical score among m shuffled
  scores; its p-value is (exceed_count + 1) / (m + 1) with a strict "<"
  indicator (ties count as non-exceeding) and can never be below 1/(m+1).
* The sharded comparison partitions the dataset into contiguous shards,
  computes per-shard gaps s_i = canonical - mean(shuffled), and runs a
  one-sided t-test on the s_i; its p-value has no Monte-Carlo floor.

All randomness flows from (master_seed, shard_index, permutation_index)
counter streams, so a result is a pure function of (dataset, oracle, config)
regardless of worker count.  Serialized results are byte-stable; wall time is
measured but written as null in result files to keep reruns byte-identical.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .datasets import ExampleDataset, make_shard_plan, sample_permutation, seq, shard_examples
from .errors import AggregationError, ConfigError, OracleError
from .oracles import LogProbOracle
from .special import chi2_sf, t_sf

SCHEMA_VERSION = 1
DEFAULT_P_FLOOR = 1e-38


@dataclass(frozen=True)
class TestConfig:
    __test__ = False  # "Test" prefix is domain naming, not a pytest class

    test_kind: str  # "permutation" | "sharded"
    num_permutations: int
    master_seed: int
    num_shards: int | None = None  # sharded only
    p_floor: float = DEFAULT_P_FLOOR

    def __post_init__(self):
        if self.test_kind not in ("permutation", "sharded"):
            raise ConfigError(f"unknown test kind {self.test_kind!r}")
        if self.num_permutations < 1:
            raise ConfigError(f"num_permutations must be >= 1, got {self.num_permutations}")
        if self.test_kind == "sharded" and (self.num_shards is None or self.num_shards < 2):
            raise ConfigError("sharded test needs num_shards >= 2")
        if not (self.p_floor > 0):
            raise ConfigError(f"p_floor must be > 0, got {self.p_floor}")

    def to_dict(self) -> dict:
        return {
            "test_kind": self.test_kind,
            "num_shards": self.num_shards,
            "num_permutations": self.num_permutations,
            "master_seed": self.master_seed,
            "p_floor": self.p_floor,
        }


@dataclass
class TestResult:
    __test__ = False

    p_value: float
    test_kind: str
    config: TestConfig
    dataset_name: str
    oracle_name: str
    # sharded fields
    shard_stats: list[float] | None = None
    shard_mean: float | None = None
    shard_std: float | None = None
    t_statistic: float | None = None
    degrees_of_freedom: int | None = None
    # permutation fields
    canonical_logprob: float | None = None
    permuted_logprobs: list[float] | None = None
    exceed_count: int | None = None
    wall_time_seconds: float | None = None

    def to_dict(self) -> dict:
        # wall time is intentionally nulled: result files must be byte-identical
        # across reruns; the measured value stays on the in-memory object.
        doc = {
            "schema_version": SCHEMA_VERSION,
            "tool_version": __version__,
            "test_kind": self.test_kind,
            "dataset_name": self.dataset_name,
            "oracle_name": self.oracle_name,
            "config": self.config.to_dict(),
            "p_value": self.p_value,
            "wall_time_seconds": None,
        }
        if self.test_kind == "sharded":
            doc["sharded"] = {
                "shard_stats": self.shard_stats,
                "mean": self.shard_mean,
                "std": self.shard_std,
                "t_statistic": self.t_statistic,
                "degrees_of_freedom": self.degrees_of_freedom,
            }
        else:
            doc["permutation"] = {
                "canonical_logprob": self.canonical_logprob,
                "permuted_logprobs": self.permuted_logprobs,
                "exceed_count": self.exceed_count,
            }
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_dict(cls, doc: dict) -> "TestResult":
        cfg = doc["config"]
        config = TestConfig(
            test_kind=cfg["test_kind"],
            num_permutations=cfg["num_permutations"],
            master_seed=cfg["master_seed"],
            num_shards=cfg.get("num_shards"),
            p_floor=cfg.get("p_floor", DEFAULT_P_FLOOR),
        )
        result = cls(
            p_value=doc["p_value"],
            test_kind=doc["test_kind"],
            config=config,
            dataset_name=doc["dataset_name"],
            oracle_name=doc["oracle_name"],
            wall_time_seconds=doc.get("wall_time_seconds"),
        )
        if "sharded" in doc:
            sh = doc["sharded"]
            result.shard_stats = sh["shard_stats"]
            result.shard_mean = sh["mean"]
            result.shard_std = sh["std"]
            result.t_statistic = sh["t_statistic"]
            result.degrees_of_freedom = sh["degrees_of_freedom"]
        if "permutation" in doc:
            pm = doc["permutation"]
            result.canonical_logprob = pm["canonical_logprob"]
            result.permuted_logprobs = pm["permuted_logprobs"]
            result.exceed_count = pm["exceed_count"]
        return result

    @classmethod
    def read(cls, path: str | Path) -> "TestResult":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _clamp_p(p: float, p_floor: float) -> float:
    return min(1.0, max(p_floor, p))


def _fan_out(jobs: int, count: int, fn) -> list:
    """Run fn(i) for i in range(count); results in index order regardless of jobs.

    On OracleError the exception's partial_scores is set to the longest
    consecutive prefix of completed results, so callers can persist them.
    """
    if jobs <= 1 or count <= 1:
        results = []
        try:
            for i in range(count):
                results.append(fn(i))
        except OracleError as exc:
            exc.partial_scores = results
            raise
        return results
    results: list = [None] * count
    completed = [False] * count
    error: OracleError | None = None
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = {pool.submit(fn, i): i for i in range(count)}
        for fut in as_completed(futures):
            i = futures[fut]
            try:
                results[i] = fut.result()
                completed[i] = True
            except OracleError as exc:
                if error is None:
                    error = exc
    if error is not None:
        prefix = []
        for i in range(count):
            if not completed[i]:
                break
            prefix.append(results[i])
        error.partial_scores = prefix
        raise error
    return results


# -- whole-dataset comparison ------------------------------------------------


def permutation_p_value(canonical: float, permuted: Sequence[float]) -> tuple[int, float]:
    """exceed_count and (exceed_count+1)/(m+1); strict '<', ties do not exceed."""
    if not permuted:
        raise ConfigError("need at least one permuted score")
    exceed = sum(1 for score in permuted if canonical < score)
    return exceed, (exceed + 1) / (len(permuted) + 1)


def permutation_test(
    dataset: ExampleDataset,
    oracle: LogProbOracle,
    num_permutations: int,
    master_seed: int,
    p_floor: float = DEFAULT_P_FLOOR,
    jobs: int = 1,
) -> TestResult:
    """Compare the canonical ordering's score against whole-dataset shuffles.

    The whole dataset is treated as shard index 0 of the seed lineage;
    permutation indices run 0..m-1.
    """
    config = TestConfig(
        test_kind="permutation",
        num_permutations=num_permutations,
        master_seed=master_seed,
        p_floor=p_floor,
    )
    n = len(dataset)
    if n < 2:
        raise ConfigError("permutation test needs at least 2 examples")
    texts = dataset.texts()
    started = time.monotonic()
    canonical = oracle.score(seq(texts))

    def one(i: int) -> float:
        perm = sample_permutation(n, master_seed, shard_index=0, permutation_index=i)
        return oracle.score(seq(perm.apply(texts)))

    try:
        permuted = _fan_out(jobs, num_permutations, one)
    except OracleError as exc:
        exc.partial_scores = {"canonical_logprob": canonical,
                              "permuted_logprobs": exc.partial_scores or []}
        raise
    exceed, p_hat = permutation_p_value(canonical, permuted)
    return TestResult(
        p_value=_clamp_p(p_hat, p_floor),
        test_kind="permutation",
        config=config,
        dataset_name=dataset.name,
        oracle_name=oracle.name,
        canonical_logprob=canonical,
        permuted_logprobs=permuted,
        exceed_count=exceed,
        wall_time_seconds=time.monotonic() - started,
    )


# -- sharded comparison --------------------------------------------------------


def shard_statistics_test(
    shard_stats: Sequence[float], p_floor: float = DEFAULT_P_FLOOR
) -> tuple[float, float, float | None, int, float]:
    """One-sided t-test on per-shard gaps: (mean, std, t, df, p).

    std uses the r-1 denominator.  Zero variance is the limiting t: p is the
    floor if the common gap is positive, 1 otherwise, and t is reported as
    None (serialized null).
    """
    arr = np.asarray(shard_stats, dtype=np.float64)
    r = len(arr)
    if r < 2:
        raise ConfigError("t-test needs at least 2 shard statistics")
    mean = float(arr.mean())
    std = float(arr.std(ddof=1))
    df = r - 1
    if std == 0.0:
        p = p_floor if mean > 0 else 1.0
        return mean, std, None, df, p
    t_stat = mean * math.sqrt(r) / std
    p = _clamp_p(t_sf(t_stat, df), p_floor)
    return mean, std, t_stat, df, p


def sharded_test(
    dataset: ExampleDataset,
    oracle: LogProbOracle,
    num_shards: int,
    num_permutations: int,
    master_seed: int,
    p_floor: float = DEFAULT_P_FLOOR,
    jobs: int = 1,
) -> TestResult:
    """Per-shard canonical-vs-shuffled-mean gaps aggregated by a one-sided t-test."""
    config = TestConfig(
        test_kind="sharded",
        num_shards=num_shards,
        num_permutations=num_permutations,
        master_seed=master_seed,
        p_floor=p_floor,
    )
    plan = make_shard_plan(len(dataset), num_shards)
    shards = shard_examples(dataset, plan)
    started = time.monotonic()

    def one(i: int) -> float:
        texts = [e.text for e in shards[i]]
        k = len(texts)
        canonical = oracle.score(seq(texts))
        scores = np.empty(num_permutations, dtype=np.float64)
        for j in range(num_permutations):
            perm = sample_permutation(k, master_seed, shard_index=i, permutation_index=j)
            scores[j] = oracle.score(seq(perm.apply(texts)))
        return canonical - float(scores.mean())

    try:
        stats = _fan_out(jobs, num_shards, one)
    except OracleError as exc:
        exc.partial_scores = {"shard_stats": exc.partial_scores or []}
        raise
    mean, std, t_stat, df, p = shard_statistics_test(stats, p_floor)
    return TestResult(
        p_value=p,
        test_kind="sharded",
        config=config,
        dataset_name=dataset.name,
        oracle_name=oracle.name,
        shard_stats=stats,
        shard_mean=mean,
        shard_std=std,
        t_statistic=t_stat,
        degrees_of_freedom=df,
        wall_time_seconds=time.monotonic() - started,
    )


def run_test(dataset: ExampleDataset, oracle: LogProbOracle, config: TestConfig,
             jobs: int = 1) -> TestResult:
    if config.test_kind == "sharded":
        return sharded_test(dataset, oracle, config.num_shards, config.num_permutations,
                            config.master_seed, config.p_floor, jobs)
    return permutation_test(dataset, oracle, config.num_permutations,
                            config.master_seed, config.p_floor, jobs)


# -- aggregation ---------------------------------------------------------------


@dataclass
class AggregateResult:
    component_p_values: list[float]
    included_names: list[str]
    excluded: list[dict]  # {"name": ..., "reason": ...}
    fisher_statistic: float
    degrees_of_freedom: int
    combined_p: float
    threshold: float | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "tool_version": __version__,
            "component_p_values": self.component_p_values,
            "included_names": self.included_names,
            "excluded": self.excluded,
            "fisher_statistic": self.fisher_statistic,
            "degrees_of_freedom": self.degrees_of_freedom,
            "combined_p": self.combined_p,
            "threshold": self.threshold,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def fisher_combine(
    p_values: Sequence[float],
    p_floor: float = DEFAULT_P_FLOOR,
    names: Sequence[str] | None = None,
) -> AggregateResult:
    """Fisher's method: X^2 = -2 sum(ln p_i) ~ chi-square with 2k df.

    Inputs below the floor are clamped up before the log; the combined
    p-value is clamped into [p_floor, 1] as well.
    """
    if len(p_values) == 0:
        raise AggregationError("cannot combine an empty p-value list")
    for p in p_values:
        if not (0.0 <= p <= 1.0):
            raise AggregationError(f"p-value {p!r} outside [0, 1]")
    clamped = [_clamp_p(p, p_floor) for p in p_values]
    x2 = -2.0 * sum(math.log(p) for p in clamped)
    df = 2 * len(clamped)
    combined = _clamp_p(chi2_sf(x2, df), p_floor)
    return AggregateResult(
        component_p_values=clamped,
        included_names=list(names) if names is not None else [],
        excluded=[],
        fisher_statistic=x2,
        degrees_of_freedom=df,
        combined_p=combined,
    )


def filtered_aggregate(
    target_p: Mapping[str, float],
    control_p: Mapping[str, Mapping[str, float]],
    threshold: float = 0.05,
    p_floor: float = DEFAULT_P_FLOOR,
) -> AggregateResult:
    """Exclude datasets any negative control flags, Fisher-combine the rest.

    A dataset is excluded when any control's p-value is < threshold; its
    exclusion record names every firing control.  Controls must cover exactly
    the target's dataset names.
    """
    if not target_p:
        raise AggregationError("no target p-values to aggregate")
    if not (0.0 < threshold <= 1.0):
        raise ConfigError(f"threshold must be in (0, 1], got {threshold}")
    names = sorted(target_p)
    for control_name, pvals in control_p.items():
        if sorted(pvals) != names:
            raise ConfigError(
                f"control {control_name!r} covers different datasets than the target"
            )
    included, ps, excluded = [], [], []
    for name in names:
        firing = [
            (control_name, pvals[name])
            for control_name, pvals in control_p.items()
            if pvals[name] < threshold
        ]
        if firing:
            reason = "; ".join(
                f"control {cname!r} p={cp:.6g} < {threshold:g}" for cname, cp in firing
            )
            excluded.append({"name": name, "reason": reason})
        else:
            included.append(name)
            ps.append(target_p[name])
    if not included:
        raise AggregationError(
            "no exchangeable components remain: every dataset was excluded by a control"
        )
    result = fisher_combine(ps, p_floor=p_floor, names=included)
    result.excluded = excluded
    result.threshold = threshold
    return result


# -- empirical distribution helpers ---------------------------------------------


def ecdf(p_values: Sequence[float]) -> list[tuple[float, float]]:
    """Step points (x, F(x)) of the empirical CDF at each distinct value."""
    if len(p_values) == 0:
        raise ConfigError("ecdf of an empty sample")
    xs = np.sort(np.asarray(p_values, dtype=np.float64))
    distinct = np.unique(xs)
    fractions = np.searchsorted(xs, distinct, side="right") / len(xs)
    return [(float(x), float(f)) for x, f in zip(distinct, fractions)]


def ks_statistic(p_values: Sequence[float]) -> float:
    """Exact sup-distance between the empirical CDF and Uniform(0,1)."""
    if len(p_values) == 0:
        raise ConfigError("ks_statistic of an empty sample")
    xs = np.sort(np.asarray(p_values, dtype=np.float64))
    n = len(xs)
    grid_hi = np.arange(1, n + 1) / n
    grid_lo = np.arange(0, n) / n
    return float(max(np.max(grid_hi - xs), np.max(xs - grid_lo)))
