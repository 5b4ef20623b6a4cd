"""Seeded trial harness and (N1, x) calibration."""
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime
from multiprocessing import Pool
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from app.attack import (AttackConfig, default_scaling, make_instance, recover_message,
                        recover_message_alt)
from app.config import config
from app.exceptions import ParameterError, ToolkitError
from app.lattice import ScalingParams
from app.ntru import get_params
from app.snf import floor_gap
from app.utils import append_jsonl, canonical_json, hash_content

logger = logging.getLogger(__name__)

SEED_DERIVATION = "numpy.random.SeedSequence(entropy=master_seed, spawn_key=(trial_index,)).generate_state(1, uint64)[0]"
PHASES = ("build", "reduce", "extract")


@dataclass(frozen=True)
class PublishedRow:
    params: str
    N1: int
    x: int
    k1: int
    k2: int
    runtime: str
    rate: int
    highlighted: bool = False


def _combined_leak_rows(params: str, N1: int, x: int, rows: Iterable[Tuple[int, int, str, int]], mark: int) -> List[PublishedRow]:
    return [PublishedRow(params, N1, x, k1, k2, rt, rate, i == mark) for i, (k1, k2, rt, rate) in enumerate(rows)]


PUBLISHED_TABLES: Dict[str, List[PublishedRow]] = {
    "message": [
        PublishedRow("ntruhps2048509", 9, 8, 425, 0, "5m", 100),
        PublishedRow("ntruhps2048677", 1, 15, 600, 0, "12m", 90),
        PublishedRow("ntruhps4096821", 7, 21, 750, 0, "17m", 50),
    ],
    "combined": _combined_leak_rows("ntruhps2048509", 9, 8, [
        (300, 125, "3m", 10), (250, 185, "3m", 0), (300, 135, "3m", 100), (230, 215, "2m", 50),
        (250, 195, "3m", 100), (350, 100, "3m", 100), (230, 225, "2m", 100)], mark=2)
    + _combined_leak_rows("ntruhps2048677", 1, 15, [
        (500, 100, "10m", 10), (400, 210, "5m", 0), (500, 110, "10m", 90), (400, 215, "5m", 70),
        (400, 220, "5m", 10), (315, 310, "2m", 40), (315, 315, "2m", 60)], mark=2)
    + _combined_leak_rows("ntruhps4096821", 7, 21, [
        (700, 90, "14m", 90), (410, 400, "2m", 0), (500, 310, "3m", 0), (600, 210, "5m", 10),
        (410, 410, "2m", 100), (500, 320, "3m", 100), (600, 220, "5m", 100)], mark=0),
}


# tables are also addressed by their printed number
TABLE_NUMBERS = {"1": "message", "2": "combined"}


def resolve_table(table) -> str:
    key = TABLE_NUMBERS.get(str(table).strip(), str(table).strip())
    if key not in PUBLISHED_TABLES:
        raise ParameterError(f"unknown table '{table}' (use message, combined, 1 or 2)")
    return key


@dataclass(frozen=True)
class ExperimentConfig:
    params: str
    k1: int
    k2: int = 0
    N1: Optional[int] = None
    x: Optional[str] = None
    algorithm: int = 1
    leak_mode: str = "prefix"
    trials: int = 10
    seed: int = 0
    reducer: str = config.REDUCER
    timeout: Optional[float] = None
    app_value: Optional[int] = None
    workers: int = config.WORKERS

    def __post_init__(self):
        if self.trials < 1:
            raise ParameterError("need at least one trial")
        if self.algorithm not in (1, 2):
            raise ParameterError(f"algorithm must be 1 or 2, got {self.algorithm}")
        if self.algorithm == 1 and self.k2:
            raise ParameterError("leaked nonce coefficients need algorithm 2")
        self.attack_config()

    @classmethod
    def from_published(cls, table, row: int, **overrides) -> "ExperimentConfig":
        """Rows are numbered from 1 as printed"""
        table = resolve_table(table)
        rows = PUBLISHED_TABLES[table]
        if not 1 <= row <= len(rows):
            raise ParameterError(f"no row {row} in table {table}")
        published = rows[row - 1]
        base = dict(params=published.params, N1=published.N1, x=str(published.x), k1=published.k1, k2=published.k2,
                    algorithm=1 if table == "message" else 2)
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    def scale(self) -> ScalingParams:
        params = get_params(self.params)
        default = default_scaling(params)
        N1 = self.N1 if self.N1 is not None else default.N1
        if self.x is None:
            return ScalingParams.from_exponent(N1, params.q, default.x)
        return ScalingParams.from_exponent(N1, params.q, self.x)

    def attack_config(self, seed: Optional[int] = None) -> AttackConfig:
        return AttackConfig(params=get_params(self.params), scale=self.scale(), k1=self.k1, k2=self.k2,
                            leak_mode=self.leak_mode, app_value=self.app_value, reducer=self.reducer,
                            seed=seed, timeout=self.timeout)

    @property
    def percentage(self) -> float:
        N = get_params(self.params).N
        if self.algorithm == 1:
            return self.k1 / N * 100
        return (self.k1 + self.k2) / (2 * N) * 100

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class TrialRecord:
    index: int
    seed: int
    status: str
    success: bool
    accepted_row: Optional[int] = None
    candidates: int = 0
    hits: int = 0
    dim: int = 0
    error: Optional[str] = None
    timings: Dict[str, float] = field(default_factory=dict)

    def deterministic_fields(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop("timings")
        return data

    def fingerprint(self) -> str:
        """Digest of every field except wall times"""
        return hash_content(canonical_json(self.deterministic_fields()))

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["type"] = "trial"
        return data


@dataclass(frozen=True)
class ExperimentSummary:
    label: str
    trials: int
    successes: int
    errors: int
    percentage: float
    mean_times: Dict[str, float]
    std_times: Dict[str, float]
    theorem_gap_bits: Optional[float] = None
    records: Tuple[TrialRecord, ...] = ()

    @property
    def rate(self) -> float:
        return self.successes / self.trials

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": "summary",
            "label": self.label,
            "trials": self.trials,
            "successes": self.successes,
            "errors": self.errors,
            "rate": round(self.rate, 3),
            "percentage": round(self.percentage, 1),
            "mean_times": self.mean_times,
            "std_times": self.std_times,
            "theorem_gap_bits": None if self.theorem_gap_bits is None else round(self.theorem_gap_bits, 2),
        }


def derive_trial_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=(index,)).generate_state(1, dtype=np.uint64)[0])


def run_trial(cfg: ExperimentConfig, index: int) -> TrialRecord:
    """One independent instance; failures become an error record"""
    seed = derive_trial_seed(cfg.seed, index)
    try:
        rng = np.random.default_rng(seed)
        attack_cfg = cfg.attack_config(seed)
        instance = make_instance(attack_cfg.params, cfg.k1, cfg.k2, cfg.leak_mode, rng)
        recover = recover_message if cfg.algorithm == 1 else recover_message_alt
        outcome = recover(attack_cfg, instance)
    except ToolkitError as e:
        logger.warning("trial %d failed: %s", index, e)
        return TrialRecord(index=index, seed=seed, status="error", success=False, error=str(e))
    success = outcome.recovered and outcome.m.coeffs == instance.ct.m.coeffs
    return TrialRecord(
        index=index,
        seed=seed,
        status=outcome.status,
        success=success,
        accepted_row=outcome.accepted_row,
        candidates=sum(1 for rec in outcome.trace if rec.candidate),
        hits=outcome.hits,
        dim=outcome.dim,
        timings={k: round(v, 4) for k, v in outcome.timings.items()},
    )


def _run_trial_args(args: Tuple[ExperimentConfig, int]) -> TrialRecord:
    return run_trial(*args)


def summarize(cfg: ExperimentConfig, records: Sequence[TrialRecord], label: str = "") -> ExperimentSummary:
    done = [r for r in records if r.status != "error"]
    mean_times, std_times = {}, {}
    for phase in PHASES + ("total",):
        values = [sum(r.timings.values()) if phase == "total" else r.timings.get(phase, 0.0) for r in done]
        mean_times[phase] = round(float(np.mean(values)), 3) if values else 0.0
        std_times[phase] = round(float(np.std(values)), 3) if values else 0.0
    params = get_params(cfg.params)
    n_vars = params.N - cfg.k2 if cfg.algorithm == 2 else params.N
    return ExperimentSummary(
        label=label or f"{cfg.params} k1={cfg.k1} k2={cfg.k2}",
        trials=len(records),
        successes=sum(1 for r in records if r.success),
        errors=len(records) - len(done),
        percentage=cfg.percentage,
        mean_times=mean_times,
        std_times=std_times,
        theorem_gap_bits=floor_gap(n_vars, cfg.k1, params.q, cfg.scale()),
        records=tuple(records),
    )


def run_experiment(cfg: ExperimentConfig, out_path: Optional[str] = None, label: str = "",
                   progress: bool = True) -> ExperimentSummary:
    """Run cfg.trials seeded trials; records are written in trial order by this process only"""
    if out_path:
        header = {
            "type": "header",
            "config": cfg.to_dict(),
            "seed_derivation": SEED_DERIVATION,
            "started": datetime.now().isoformat(),
        }
        append_jsonl([header], out_path)

    jobs = [(cfg, i) for i in range(cfg.trials)]
    workers = max(1, min(cfg.workers, cfg.trials))
    records: List[TrialRecord] = []
    start = time.perf_counter()
    bar = tqdm(total=cfg.trials, desc=label or cfg.params, disable=not progress)
    if workers == 1:
        stream = map(_run_trial_args, jobs)
        pool = None
    else:
        pool = Pool(workers)
        stream = pool.imap(_run_trial_args, jobs)
    try:
        for record in stream:
            records.append(record)
            if out_path:
                append_jsonl([record.to_dict()], out_path)
            bar.update(1)
    finally:
        bar.close()
        if pool is not None:
            pool.close()
            pool.join()

    summary = summarize(cfg, records, label)
    if out_path:
        append_jsonl([summary.to_dict()], out_path)
    logger.info("%s: %d/%d recovered in %.1fs", summary.label, summary.successes, summary.trials,
                time.perf_counter() - start)
    return summary


@dataclass(frozen=True)
class CalibrationResult:
    table: pd.DataFrame
    best: Optional[Tuple[int, int]]


def calibrate(params: str, k1: int, k2: int = 0, N1_grid: Sequence[int] = range(1, 10),
              x_grid: Sequence[int] = range(2, 21), trials: int = 5, seed: int = 0,
              reducer: str = "internal", leak_mode: str = "prefix", workers: int = 1,
              out_csv: Optional[str] = None, progress: bool = False) -> CalibrationResult:
    """Grid search over (N1, x): highest success rate wins, ties go to the faster point"""
    rows = []
    algorithm = 1 if k2 == 0 else 2
    for N1 in N1_grid:
        for x in x_grid:
            try:
                cfg = ExperimentConfig(params=params, k1=k1, k2=k2, N1=N1, x=str(x), algorithm=algorithm,
                                       leak_mode=leak_mode, trials=trials, seed=seed, reducer=reducer,
                                       workers=workers)
            except ParameterError as e:
                logger.debug("skipping N1=%d x=%s: %s", N1, x, e)
                continue
            summary = run_experiment(cfg, label=f"N1={N1} x={x}", progress=progress)
            rows.append({
                "params": params,
                "k1": k1,
                "k2": k2,
                "N1": N1,
                "x": x,
                "trials": summary.trials,
                "successes": summary.successes,
                "rate": summary.rate,
                "mean_time": summary.mean_times["total"],
            })

    columns = ["params", "k1", "k2", "N1", "x", "trials", "successes", "rate", "mean_time"]
    table = pd.DataFrame(rows, columns=columns)
    if not table.empty:
        table = table.sort_values(["rate", "mean_time"], ascending=[False, True], kind="mergesort")
        table = table.reset_index(drop=True)
    if out_csv:
        parent = os.path.dirname(out_csv)
        if parent:
            os.makedirs(parent, exist_ok=True)
        table.to_csv(out_csv, index=False)

    best = None
    if not table.empty and table.loc[0, "rate"] > 0:
        best = (int(table.loc[0, "N1"]), int(table.loc[0, "x"]))
    logger.info("calibration for %s k1=%d k2=%d: best %s", params, k1, k2, best)
    return CalibrationResult(table=table, best=best)


def scaling_from_calibration(csv_path: str, params: str, k1: int, k2: int = 0) -> Optional[Tuple[int, int]]:
    """Best (N1, x) recorded for this leak in a calibration CSV, or None"""
    if not os.path.exists(csv_path):
        raise FileNotFoundError(f"File not found: {csv_path}")
    table = pd.read_csv(csv_path)
    rows = table[(table["params"] == params) & (table["k1"] == k1) & (table["k2"] == k2) & (table["rate"] > 0)]
    if rows.empty:
        return None
    best = rows.sort_values(["rate", "mean_time"], ascending=[False, True], kind="mergesort").iloc[0]
    return int(best["N1"]), int(best["x"])
