"""End-to-end experiment drivers: canary studies, null calibration, sweeps.

Every experiment is a pure function of its config: background corpora, canary
contents, injection positions, and test randomness are all derived from the
config's seeds through fixed lanes, and report rows carry enough provenance
(per-row master seed, config hash, model hash) to re-run any single row
bit-exactly.  Row failures are recorded in place and do not stop a run.

Reports are written as rows.csv plus summary.json (and an optional SVG line
plot); reruns with the same config produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .datasets import ExampleDataset, load_dataset
from .errors import ConfigError, ContamkitError
from .ngram import CanaryPlan, NGramModel, build_contaminated_corpus
from .oracles import NGramOracle
from .stats import (
    DEFAULT_P_FLOOR,
    TestResult,
    ks_statistic,
    permutation_test,
    sharded_test,
)
from .synth import load_corpus, synthetic_dataset
from .rng import derive_key

_LANE_BACKGROUND = 0xB000
_LANE_CANARY = 0xCA00
_LANE_CONTROL = 0xC000
_LANE_INJECTION = 0x1000
_LANE_CALIBRATION = 0xCB00
_LANE_ROW = 0x7E57

CONTROL_NAME = "control"
TEST_KINDS = ("sharded", "permutation")
CALIBRATION_ALPHAS = (0.01, 0.05, 0.1)


def _hash_json(obj) -> str:
    payload = json.dumps(obj, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:16]


def _hash_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _log10(p: float) -> float:
    return math.log10(p)


# -- configs --------------------------------------------------------------


@dataclass(frozen=True)
class CanarySpec:
    """One injected dataset: synthetic by default, or loaded from a path.

    dup 0 means "never injected": the canary is still tested and should come
    out uncalibrated in no way (it degenerates to a null draw).
    """

    name: str
    dup: int
    num_examples: int = 200
    words_per_example: int = 6
    source: str | None = None

    def __post_init__(self):
        if self.dup < 0:
            raise ConfigError(f"canary {self.name!r}: dup must be >= 0, got {self.dup}")


@dataclass(frozen=True)
class CanaryExperimentConfig:
    canaries: tuple[CanarySpec, ...]
    seeds: tuple[int, ...]
    out_dir: str
    background: str = "synthetic:docs=50000"
    order: int = 5
    alpha: float = 0.1
    num_shards: int = 50
    num_permutations: int = 51
    tests: tuple[str, ...] = TEST_KINDS
    control_examples: int = 200
    p_floor: float = DEFAULT_P_FLOOR

    def __post_init__(self):
        if not self.canaries:
            raise ConfigError("canary experiment needs at least one canary")
        if not self.seeds:
            raise ConfigError("canary experiment needs at least one seed")
        for kind in self.tests:
            if kind not in TEST_KINDS:
                raise ConfigError(f"unknown test kind {kind!r}")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["canaries"] = [asdict(c) for c in self.canaries]
        doc["seeds"] = list(self.seeds)
        doc["tests"] = list(self.tests)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "CanaryExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown canary config fields: {sorted(extra)}")
        doc = dict(doc)
        try:
            doc["canaries"] = tuple(CanarySpec(**c) for c in doc["canaries"])
            doc["seeds"] = tuple(doc["seeds"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed canary config: {exc}") from None
        if "tests" in doc:
            doc["tests"] = tuple(doc["tests"])
        return cls(**doc)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "CanaryExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(doc)


@dataclass(frozen=True)
class SweepConfig:
    axis: str  # "shards" | "permutations"
    values: tuple[int, ...]
    fixed: int  # the non-swept parameter
    model_path: str
    datasets: tuple[str, ...]  # paths or synthetic specs
    seeds: tuple[int, ...]
    out_dir: str
    p_floor: float = DEFAULT_P_FLOOR

    def __post_init__(self):
        if self.axis not in ("shards", "permutations"):
            raise ConfigError(f"sweep axis must be 'shards' or 'permutations', got {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep needs at least one axis value")
        if not self.datasets or not self.seeds:
            raise ConfigError("sweep needs datasets and seeds")

    def to_dict(self) -> dict:
        doc = asdict(self)
        for key in ("values", "datasets", "seeds"):
            doc[key] = list(doc[key])
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown sweep config fields: {sorted(extra)}")
        doc = dict(doc)
        for key in ("values", "datasets", "seeds"):
            if key in doc:
                doc[key] = tuple(doc[key])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"malformed sweep config: {exc}") from None

    @classmethod
    def from_json_file(cls, path: str | Path) -> "SweepConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(doc)


# -- rows and reports ------------------------------------------------------


@dataclass
class ExperimentRow:
    dataset: str
    dup_count: int
    seed: int
    test_kind: str
    status: str  # "ok" | "error" | "skipped"
    p_value: float | None = None
    log10_p: float | None = None
    error: str = ""
    master_seed: int | None = None
    config_hash: str = ""
    model_hash: str = ""

    def to_csv_row(self) -> list:
        return [
            self.dataset, self.dup_count, self.seed, self.test_kind, self.status,
            "" if self.p_value is None else repr(self.p_value),
            "" if self.log10_p is None else repr(self.log10_p),
            self.error, "" if self.master_seed is None else self.master_seed,
            self.config_hash, self.model_hash,
        ]


_CSV_HEADER = ["dataset", "dup_count", "seed", "test_kind", "status", "p_value",
               "log10_p", "error", "master_seed", "config_hash", "model_hash"]


def _write_rows_csv(path: Path, rows: Sequence[ExperimentRow]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_HEADER)
    for row in rows:
        writer.writerow(row.to_csv_row())
    path.write_text(buf.getvalue(), encoding="utf-8")


def read_rows_csv(path: str | Path) -> list[ExperimentRow]:
    rows = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(ExperimentRow(
                dataset=rec["dataset"],
                dup_count=int(rec["dup_count"]),
                seed=int(rec["seed"]),
                test_kind=rec["test_kind"],
                status=rec["status"],
                p_value=float(rec["p_value"]) if rec["p_value"] else None,
                log10_p=float(rec["log10_p"]) if rec["log10_p"] else None,
                error=rec["error"],
                master_seed=int(rec["master_seed"]) if rec["master_seed"] else None,
                config_hash=rec["config_hash"],
                model_hash=rec["model_hash"],
            ))
    return rows


def _median(values: Sequence[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    return ordered[mid] if n % 2 else (ordered[mid - 1] + ordered[mid]) / 2.0


@dataclass
class CanaryExperimentReport:
    config: CanaryExperimentConfig
    rows: list[ExperimentRow]
    config_hash: str

    def ok_rows(self) -> list[ExperimentRow]:
        return [r for r in self.rows if r.status == "ok"]

    def has_errors(self) -> bool:
        return any(r.status == "error" for r in self.rows)

    def median_log10_p(self) -> dict[str, dict[int, float]]:
        """Per test kind, median log10 p across canary rows at each dup count."""
        out: dict[str, dict[int, float]] = {}
        for kind in self.config.tests:
            per_dup: dict[int, list[float]] = {}
            for row in self.ok_rows():
                if row.test_kind != kind or row.dataset == CONTROL_NAME:
                    continue
                per_dup.setdefault(row.dup_count, []).append(row.log10_p)
            out[kind] = {dup: _median(vals) for dup, vals in sorted(per_dup.items())}
        return out

    def median_p(self) -> dict[str, dict[int, float]]:
        medians = {}
        for kind in self.config.tests:
            per_dup: dict[int, list[float]] = {}
            for row in self.ok_rows():
                if row.test_kind != kind or row.dataset == CONTROL_NAME:
                    continue
                per_dup.setdefault(row.dup_count, []).append(row.p_value)
            medians[kind] = {dup: _median(vals) for dup, vals in sorted(per_dup.items())}
        return medians

    def summary_dict(self) -> dict:
        return {
            "schema_version": 1,
            "tool_version": __version__,
            "config": self.config.to_dict(),
            "config_hash": self.config_hash,
            "rows": len(self.rows),
            "errors": sum(1 for r in self.rows if r.status == "error"),
            "median_log10_p_by_dup": {
                kind: {str(d): v for d, v in per.items()}
                for kind, per in self.median_log10_p().items()
            },
        }

    def write(self, out_dir: str | Path, plot: bool = False) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows_csv(out / "rows.csv", self.rows)
        (out / "summary.json").write_text(
            json.dumps(self.summary_dict(), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )
        if plot:
            write_dup_plot(self, out / "plot.svg")


@dataclass
class CalibrationReport:
    p_values: list[float]
    ks: float
    fraction_below: dict[float, float]
    num_runs: int
    test_kind: str
    config_hash: str
    model_hash: str

    def summary_dict(self) -> dict:
        return {
            "schema_version": 1,
            "tool_version": __version__,
            "test_kind": self.test_kind,
            "num_runs": self.num_runs,
            "ks_statistic": self.ks,
            "fraction_below": {repr(a): f for a, f in self.fraction_below.items()},
            "config_hash": self.config_hash,
            "model_hash": self.model_hash,
            "p_values": self.p_values,
        }

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "calibration.json").write_text(
            json.dumps(self.summary_dict(), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )


@dataclass
class SweepReport:
    config: SweepConfig
    rows: list[ExperimentRow]  # dup_count column reused for the axis value
    config_hash: str

    def mean_log10_p(self) -> dict[int, float]:
        per_value: dict[int, list[float]] = {}
        for row in self.rows:
            if row.status == "ok":
                per_value.setdefault(row.dup_count, []).append(row.log10_p)
        return {v: sum(vals) / len(vals) for v, vals in sorted(per_value.items())}

    def argmin_value(self) -> int | None:
        means = self.mean_log10_p()
        if not means:
            return None
        return min(means, key=lambda v: (means[v], v))

    def has_errors(self) -> bool:
        return any(r.status == "error" for r in self.rows)

    def summary_dict(self) -> dict:
        return {
            "schema_version": 1,
            "tool_version": __version__,
            "config": self.config.to_dict(),
            "config_hash": self.config_hash,
            "axis": self.config.axis,
            "mean_log10_p": {str(v): m for v, m in self.mean_log10_p().items()},
            "best_value": self.argmin_value(),
            "skipped": [
                {"value": r.dup_count, "dataset": r.dataset, "seed": r.seed,
                 "reason": r.error}
                for r in self.rows if r.status == "skipped"
            ],
        }

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows_csv(out / "rows.csv", self.rows)
        (out / "summary.json").write_text(
            json.dumps(self.summary_dict(), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )


# -- experiment drivers ------------------------------------------------------


def _background_docs(config: CanaryExperimentConfig, seed: int) -> list[str]:
    spec = config.background
    if spec.startswith("synthetic:") and "seed=" not in spec:
        # reseed the synthetic background per run seed so replicates differ
        spec = f"{spec},seed={derive_key(seed, _LANE_BACKGROUND, 0)}"
    return load_corpus(spec)


def _canary_dataset(spec: CanarySpec, seed: int, ordinal: int) -> ExampleDataset:
    if spec.source is not None:
        return load_dataset(spec.source, name=spec.name)
    return synthetic_dataset(
        derive_key(seed, _LANE_CANARY, ordinal),
        spec.num_examples,
        words_per_example=spec.words_per_example,
        name=spec.name,
    )


def _saved_model_hash(model: NGramModel, model_path: Path | None) -> str:
    """Hash of the model's serialized form; writes the file when a path is given."""
    if model_path is not None:
        model_path.parent.mkdir(parents=True, exist_ok=True)
        model.save(model_path)
        return _hash_file(model_path)
    import tempfile

    with tempfile.NamedTemporaryFile(suffix=".bin") as fh:
        model.save(fh.name)
        return _hash_file(Path(fh.name))


def train_contaminated_model(
    config: CanaryExperimentConfig, seed: int, model_path: Path | None = None
) -> tuple[NGramModel, list[ExampleDataset], str]:
    """Build the injected corpus for one run seed and train a model on it.

    Returns (model, canary datasets in config order, model hash).  Canaries
    with dup 0 are never injected but still returned for testing.
    """
    background = _background_docs(config, seed)
    datasets = [_canary_dataset(c, seed, i) for i, c in enumerate(config.canaries)]
    injected = tuple(
        (ds, c.dup) for ds, c in zip(datasets, config.canaries) if c.dup >= 1
    )
    plan = CanaryPlan(
        background=tuple(background),
        canaries=injected,
        injection_seed=derive_key(seed, _LANE_INJECTION, 0),
    )
    corpus = build_contaminated_corpus(plan)
    model = NGramModel.train(corpus, order=config.order, alpha=config.alpha)
    return model, datasets, _saved_model_hash(model, model_path)


def _run_one_test(kind: str, dataset: ExampleDataset, oracle, master_seed: int,
                  num_shards: int, num_permutations: int, p_floor: float) -> TestResult:
    if kind == "sharded":
        return sharded_test(dataset, oracle, num_shards, num_permutations,
                            master_seed, p_floor)
    return permutation_test(dataset, oracle, num_permutations, master_seed, p_floor)


def run_canary_experiment(config: CanaryExperimentConfig, jobs: int = 1,
                          keep_models: bool = True) -> CanaryExperimentReport:
    """Train one contaminated model per seed and test every canary plus a
    held-out uncontaminated control dataset; failures are recorded per row."""
    config_hash = _hash_json(config.to_dict())
    out_dir = Path(config.out_dir)
    rows: list[ExperimentRow] = []
    for seed in config.seeds:
        model_path = (out_dir / "models" / f"model-seed{seed}.bin") if keep_models else None
        model, datasets, model_hash = train_contaminated_model(config, seed, model_path)
        oracle = NGramOracle(model)
        control = synthetic_dataset(
            derive_key(seed, _LANE_CONTROL, 0),
            config.control_examples,
            words_per_example=(config.canaries[0].words_per_example),
            name=CONTROL_NAME,
        )
        targets = [(ds, spec.dup) for ds, spec in zip(datasets, config.canaries)]
        targets.append((control, 0))

        def job(item):
            ordinal, (ds, dup, kind) = item
            master_seed = derive_key(seed, _LANE_ROW, ordinal)
            row = ExperimentRow(dataset=ds.name, dup_count=dup, seed=seed,
                                test_kind=kind, status="ok", master_seed=master_seed,
                                config_hash=config_hash, model_hash=model_hash)
            try:
                result = _run_one_test(kind, ds, oracle, master_seed,
                                       config.num_shards, config.num_permutations,
                                       config.p_floor)
                row.p_value = result.p_value
                row.log10_p = _log10(result.p_value)
            except ContamkitError as exc:
                row.status = "error"
                row.error = str(exc)
            return row

        work = [
            (ds, dup, kind) for ds, dup in targets for kind in config.tests
        ]
        items = list(enumerate(work))
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                rows.extend(pool.map(job, items))
        else:
            rows.extend(job(item) for item in items)
    return CanaryExperimentReport(config=config, rows=rows, config_hash=config_hash)


def run_null_calibration(
    num_runs: int,
    dataset_size: int,
    num_shards: int = 50,
    num_permutations: int = 51,
    master_seed: int = 42,
    order: int = 5,
    alpha: float = 0.1,
    background: str = "synthetic:docs=4000",
    test_kind: str = "sharded",
    words_per_example: int = 6,
    p_floor: float = DEFAULT_P_FLOOR,
    jobs: int = 1,
    model_out: str | Path | None = None,
) -> CalibrationReport:
    """Train one clean model, test many fresh exchangeable datasets against it.

    The fresh datasets come from a lane disjoint from the training corpus
    lanes, so under the null every p-value is a calibrated draw.
    """
    if num_runs < 100:
        raise ConfigError(f"calibration needs num_runs >= 100, got {num_runs}")
    if test_kind not in TEST_KINDS:
        raise ConfigError(f"unknown test kind {test_kind!r}")
    spec = background
    if spec.startswith("synthetic:") and "seed=" not in spec:
        spec = f"{spec},seed={derive_key(master_seed, _LANE_BACKGROUND, 0)}"
    corpus = load_corpus(spec)
    model = NGramModel.train(corpus, order=order, alpha=alpha)
    model_hash = _saved_model_hash(model, Path(model_out) if model_out else None)
    oracle = NGramOracle(model)

    def one(i: int) -> float:
        ds = synthetic_dataset(
            derive_key(master_seed, _LANE_CALIBRATION, i), dataset_size,
            words_per_example=words_per_example, name=f"calibration-{i}",
        )
        row_seed = derive_key(master_seed, _LANE_ROW, i)
        result = _run_one_test(test_kind, ds, oracle, row_seed,
                               num_shards, num_permutations, p_floor)
        return result.p_value

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            p_values = list(pool.map(one, range(num_runs)))
    else:
        p_values = [one(i) for i in range(num_runs)]

    config_hash = _hash_json({
        "num_runs": num_runs, "dataset_size": dataset_size,
        "num_shards": num_shards, "num_permutations": num_permutations,
        "master_seed": master_seed, "order": order, "alpha": alpha,
        "background": background, "test_kind": test_kind,
        "words_per_example": words_per_example, "p_floor": p_floor,
    })
    return CalibrationReport(
        p_values=p_values,
        ks=ks_statistic(p_values),
        fraction_below={
            a: sum(1 for p in p_values if p < a) / num_runs for a in CALIBRATION_ALPHAS
        },
        num_runs=num_runs,
        test_kind=test_kind,
        config_hash=config_hash,
        model_hash=model_hash,
    )


def _sweep_dataset(spec: str) -> ExampleDataset:
    if spec.startswith("synthetic:"):
        from .synth import _parse_kv

        params = _parse_kv(spec[len("synthetic:"):], "dataset spec")
        seed = int(params.pop("seed", 0))
        examples = int(params.pop("examples", 0))
        words = int(params.pop("words", 6))
        name = params.pop("name", f"synthetic-{seed:x}")
        if params:
            raise ConfigError(f"unknown dataset spec keys: {sorted(params)}")
        if examples < 2:
            raise ConfigError("synthetic dataset spec needs examples=<count >= 2>")
        return synthetic_dataset(seed, examples, words_per_example=words, name=name)
    return load_dataset(spec)


def sensitivity_sweep(config: SweepConfig, jobs: int = 1) -> SweepReport:
    """Run the sharded test over a grid of shard or permutation counts.

    Inadmissible combinations (dataset too small for the shard count) become
    "skipped" rows with the reason recorded.
    """
    config_hash = _hash_json(config.to_dict())
    model = NGramModel.load(config.model_path)
    model_hash = _hash_file(Path(config.model_path))
    oracle = NGramOracle(model)
    datasets = [_sweep_dataset(spec) for spec in config.datasets]

    work = []
    for value in config.values:
        for ds in datasets:
            for seed in config.seeds:
                work.append((value, ds, seed))

    def job(item):
        ordinal, (value, ds, seed) = item
        num_shards = value if config.axis == "shards" else config.fixed
        num_perms = value if config.axis == "permutations" else config.fixed
        master_seed = derive_key(seed, _LANE_ROW, ordinal)
        row = ExperimentRow(dataset=ds.name, dup_count=value, seed=seed,
                            test_kind="sharded", status="ok", master_seed=master_seed,
                            config_hash=config_hash, model_hash=model_hash)
        if len(ds) < 2 * num_shards:
            row.status = "skipped"
            row.error = (f"{len(ds)} examples cannot fill {num_shards} shards "
                         f"with >= 2 examples each")
            return row
        try:
            result = sharded_test(ds, oracle, num_shards, num_perms, master_seed,
                                  config.p_floor)
            row.p_value = result.p_value
            row.log10_p = _log10(result.p_value)
        except ContamkitError as exc:
            row.status = "error"
            row.error = str(exc)
        return row

    items = list(enumerate(work))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(job, items))
    else:
        rows = [job(item) for item in items]
    return SweepReport(config=config, rows=rows, config_hash=config_hash)


# -- plotting ------------------------------------------------------------------


def write_dup_plot(report: CanaryExperimentReport, path: str | Path) -> None:
    """SVG line plot of median log10 p against duplication count per test kind."""
    from matplotlib.figure import Figure

    medians = report.median_log10_p()
    fig = Figure(figsize=(6, 4))
    ax = fig.subplots()
    for kind, per_dup in medians.items():
        if not per_dup:
            continue
        dups = sorted(per_dup)
        ax.plot(dups, [per_dup[d] for d in dups], marker="o", label=kind)
    ax.set_xlabel("duplication count")
    ax.set_ylabel("median log10 p")
    ax.set_xscale("symlog")
    ax.axhline(math.log10(0.05), color="gray", linestyle="--", linewidth=1)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
