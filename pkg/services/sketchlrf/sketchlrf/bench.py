"""Synthetic workloads and the end-to-end experiment harness."""
import csv
import json
import logging
import math
import statistics
import time
from collections.abc import Iterator
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np

from sketchlrf import linalg
from sketchlrf.config import DEFAULT_CALIBRATION_C, DEFAULT_SEED, ORACLE_CELL_CAP
from sketchlrf.dp import PrivacyParams, additive_excess, private_factorize
from sketchlrf.lrf import LrfReport, evaluate, factorize, residual_from_rows
from sketchlrf.modes import Mode
from sketchlrf.sketch import SketchKind, generator
from sketchlrf.stream import TurnstileUpdate, ingest, init_state, write_stream
from sketchlrf.validation import (
    require,
    validate_alpha,
    validate_dimension,
    validate_mode_params,
    validate_nonnegative,
    validate_seed,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_NOISE_LEVEL: float = 1.0
EXACT_RECOVERY_TOLERANCE: float = 1e-6
ROW_TAG = 0x524F57
FACTOR_TAG = 0x464143
ORDER_TAG = 0x4F5244
ORDERS = ("row-major", "random")


def _rng(*words: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(words))))


@dataclass(frozen=True)
class LowRankSource:
    """A = G₁G₂ᵀ + noise_level·G₃, reproducible one row at a time"""
    m: int
    n: int
    rank: int
    noise_level: float
    seed: int

    def __post_init__(self):
        require(validate_dimension(self.m, "m"))
        require(validate_dimension(self.n, "n"))
        require(validate_dimension(self.rank, "r"))
        require(validate_nonnegative(self.noise_level, "noise_level"))
        require(validate_seed(self.seed))
        if self.rank > min(self.m, self.n):
            raise ValueError(f"r={self.rank} exceeds min(m, n)={min(self.m, self.n)}")

    @cached_property
    def right_factor(self) -> np.ndarray:
        return _rng(self.seed, FACTOR_TAG).standard_normal((self.n, self.rank))

    def row(self, i: int) -> np.ndarray:
        rng = _rng(self.seed, ROW_TAG, i)
        left = rng.standard_normal(self.rank)
        noise = rng.standard_normal(self.n)
        return self.right_factor @ left + self.noise_level * noise

    def rows(self) -> Iterator[np.ndarray]:
        for i in range(self.m):
            yield self.row(i)

    def matrix(self) -> np.ndarray:
        return np.vstack(list(self.rows()))

    def updates(self, order: str = "row-major", seed: int = 0) -> Iterator[TurnstileUpdate]:
        """Nonzero entries as unit updates; random order permutes rows and entries within a row"""
        if order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}, got {order!r}")
        rng = _rng(seed, ORDER_TAG)
        row_order = rng.permutation(self.m) if order == "random" else range(self.m)
        for i in row_order:
            row = self.row(int(i))
            columns = np.flatnonzero(row)
            if order == "random":
                columns = rng.permutation(columns)
            for j in columns:
                yield TurnstileUpdate(int(i), int(j), float(row[j]))


def gen_lowrank_plus_noise(m: int, n: int, r: int, noise_level: float, seed: int) -> np.ndarray:
    return LowRankSource(m, n, r, noise_level, seed).matrix()


def iter_lowrank_rows(m: int, n: int, r: int, noise_level: float, seed: int) -> Iterator[np.ndarray]:
    return LowRankSource(m, n, r, noise_level, seed).rows()


def matrix_updates(a, order: str = "row-major", seed: int = 0) -> list[TurnstileUpdate]:
    a = linalg.as_matrix(a)
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}, got {order!r}")
    rows, cols = np.nonzero(a)
    updates = [TurnstileUpdate(int(i), int(j), float(a[i, j])) for i, j in zip(rows, cols)]
    if order == "random":
        permutation = generator(seed).permutation(len(updates))
        updates = [updates[p] for p in permutation]
    return updates


def emit_stream(a, order: str, path: str | Path, seed: int = 0) -> int:
    a = linalg.as_matrix(a)
    count = write_stream(path, a.shape[0], a.shape[1], matrix_updates(a, order, seed))
    logger.info(f"Wrote {count} updates ({order}) to {path}")
    return count


@dataclass
class ExperimentConfig:
    m: int
    n: int
    k: int
    alpha: float
    mode: Mode = Mode.NON_PRIVATE
    epsilon: float | None = None
    delta: float | None = None
    trials: int = 1
    seed: int = DEFAULT_SEED
    sketch: SketchKind = SketchKind.COUNT_SKETCH
    c: float = DEFAULT_CALIBRATION_C
    out: Path | None = None
    rank: int | None = None
    noise_level: float = DEFAULT_NOISE_LEVEL
    order: str = "row-major"
    oracle: bool = True
    min_success_rate: float | None = None

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.sketch = SketchKind(self.sketch)
        if self.out is not None:
            self.out = Path(self.out)
        for name in ("m", "n", "k", "trials"):
            require(validate_dimension(getattr(self, name), name))
        require(validate_alpha(self.alpha, strict_upper=self.mode is Mode.PRIV1))
        require(validate_mode_params(self.mode.value, self.epsilon, self.delta))
        require(validate_seed(self.seed))
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}, got {self.order!r}")
        if self.oracle and self.m * self.n > ORACLE_CELL_CAP:
            raise ValueError(f"oracle needs a dense {self.m}x{self.n} matrix, above the cap of {ORACLE_CELL_CAP} cells")

    @property
    def privacy(self) -> PrivacyParams | None:
        if self.mode is Mode.NON_PRIVATE:
            return None
        return PrivacyParams(self.epsilon, self.delta, self.mode.privacy_level, self.alpha)

    @property
    def success_threshold(self) -> float:
        if self.min_success_rate is not None:
            return self.min_success_rate
        return 0.9 if self.mode is Mode.NON_PRIVATE else 0.0

    def to_json(self) -> dict[str, Any]:
        return {
            "m": self.m, "n": self.n, "k": self.k, "alpha": self.alpha, "mode": self.mode.value,
            "epsilon": self.epsilon, "delta": self.delta, "trials": self.trials, "seed": self.seed,
            "sketch": self.sketch.value, "c": self.c, "rank": self.rank or self.k,
            "noise_level": self.noise_level, "order": self.order, "oracle": self.oracle,
            "min_success_rate": self.success_threshold,
        }


@dataclass
class TrialRecord:
    seed: int
    residual_fro: float
    matrix_fro: float
    oracle_residual_fro: float | None = None
    ratio: float | None = None
    additive_excess: float | None = None
    effective_rank: int = 0
    update_cost_ns: float = 0.0
    factorize_ms: float = 0.0

    def succeeded(self, alpha: float) -> bool | None:
        if self.ratio is not None:
            return self.ratio <= 1 + alpha
        if self.oracle_residual_fro is not None:
            return self.residual_fro <= EXACT_RECOVERY_TOLERANCE * max(self.matrix_fro, 1.0)
        return None

    def deterministic(self) -> dict[str, Any]:
        record = asdict(self)
        del record["update_cost_ns"], record["factorize_ms"]
        return record


@dataclass
class ExperimentResult:
    records: list[TrialRecord]
    summary: dict[str, Any]
    timing: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.summary["passed"])


def run_trial(cfg: ExperimentConfig, trial_seed: int) -> TrialRecord:
    source = LowRankSource(cfg.m, cfg.n, cfg.rank or cfg.k, cfg.noise_level, trial_seed)
    # experiments pin every draw, noise included, to the trial seed
    state = init_state(cfg.m, cfg.n, cfg.k, cfg.alpha, trial_seed, cfg.mode, cfg.privacy, cfg.c, cfg.sketch,
                       noise_seed=trial_seed)

    count = 0
    start = time.perf_counter_ns()
    for update in source.updates(cfg.order, trial_seed):
        ingest(state, update)
        count += 1
    update_cost_ns = (time.perf_counter_ns() - start) / max(count, 1)

    if cfg.mode is Mode.NON_PRIVATE:
        report = factorize(state, cfg.k)
    else:
        report = private_factorize(state, cfg.k, seed=trial_seed)

    if cfg.oracle:
        reference = source.matrix()
        evaluate(report, reference, cfg.k)
        matrix_fro = linalg.frobenius_norm(reference)
    else:
        report.residual_fro = residual_from_rows(report.factorization, source.rows())
        matrix_fro = math.sqrt(sum(float(row @ row) for row in source.rows()))

    return _record(trial_seed, report, matrix_fro, cfg.alpha, update_cost_ns)


def _record(seed: int, report: LrfReport, matrix_fro: float, alpha: float, update_cost_ns: float) -> TrialRecord:
    excess = None
    if report.oracle_residual_fro is not None:
        excess = additive_excess(report.residual_fro, report.oracle_residual_fro, alpha)
    return TrialRecord(
        seed=seed,
        residual_fro=report.residual_fro,
        matrix_fro=matrix_fro,
        oracle_residual_fro=report.oracle_residual_fro,
        ratio=report.ratio,
        additive_excess=excess,
        effective_rank=report.effective_rank,
        update_cost_ns=update_cost_ns,
        factorize_ms=report.wall_time_s * 1000.0,
    )


def _median(values: list[float]) -> float | None:
    return statistics.median(values) if values else None


def _percentiles(values: list[float]) -> dict[str, float]:
    return {f"p{q}": float(np.percentile(values, q)) for q in (50, 95, 99)}


def summarize(cfg: ExperimentConfig, records: list[TrialRecord]) -> dict[str, Any]:
    records = sorted(records, key=lambda r: r.seed)
    verdicts = [r.succeeded(cfg.alpha) for r in records]
    judged = [v for v in verdicts if v is not None]
    success_rate = sum(judged) / len(judged) if judged else None
    ratios = [r.ratio for r in records if r.ratio is not None]
    excesses = [r.additive_excess for r in records if r.additive_excess is not None]
    return {
        "schema": SCHEMA_VERSION,
        "config": cfg.to_json(),
        "trials": len(records),
        "success_rate": success_rate,
        "ratio_excluded": sum(1 for r in records if r.ratio is None),
        "median_ratio": _median(ratios),
        "max_ratio": max(ratios) if ratios else None,
        "median_residual_fro": _median([r.residual_fro for r in records]),
        "median_additive_excess": _median(excesses),
        "passed": success_rate is None or success_rate >= cfg.success_threshold,
        "records": [r.deterministic() for r in records],
    }


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    records = []
    for i in range(cfg.trials):
        trial_seed = cfg.seed + i
        record = run_trial(cfg, trial_seed)
        logger.info(f"Trial {i + 1}/{cfg.trials} seed={trial_seed}: residual={record.residual_fro:.6g} ratio={record.ratio}")
        records.append(record)

    summary = summarize(cfg, records)
    timing = {
        "schema": SCHEMA_VERSION,
        "update_cost_ns": _percentiles([r.update_cost_ns for r in records]),
        "factorize_ms": _percentiles([r.factorize_ms for r in records]),
    }
    result = ExperimentResult(records=records, summary=summary, timing=timing)
    if cfg.out is not None:
        write_results(cfg.out, result)
    level = logging.INFO if result.passed else logging.WARNING
    logger.log(level, f"Experiment {'passed' if result.passed else 'failed'}: success_rate={summary['success_rate']}")
    return result


def write_json(path: str | Path, payload: dict[str, Any]) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_records_csv(path: str | Path, records: list[TrialRecord]) -> None:
    fieldnames = list(asdict(records[0]).keys()) if records else []
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for record in sorted(records, key=lambda r: r.seed):
            writer.writerow(asdict(record))


def write_results(directory: str | Path, result: ExperimentResult) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "summary.json", result.summary)
    write_json(out / "timing.json", result.timing)
    write_records_csv(out / "trials.csv", result.records)
    logger.info(f"Wrote experiment results to {out}")
    return out
