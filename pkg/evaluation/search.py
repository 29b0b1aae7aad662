"""
Grid search over the classical augmentation σ hyperparameters.

Every Cartesian point (σ_scale, σ_shift, σ_noise) augments the training
split, trains one recognizer per seed on the augmented set, and records
accuracy, affinity and diversity. Points are independent and may run in
parallel worker processes.
"""

import itertools
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas
from pydantic import BaseModel, Field, field_validator

import config
from augment.classical import AugmentPolicy, augment_dataset, default_joint_range
from data.skeleton import LabeledDataset
from errors import ContractViolation, UsageError
from evaluation.metrics import AffinityDiversityReport, affinity, build_report, diversity
from recognition.models import RecognizerSpec, build
from recognition.training import TrainSchedule, train_recognizer

logger = logging.getLogger(__name__)

TABLE_COLUMNS = [
    "index", "sigma_scale", "sigma_shift", "sigma_noise",
    "accuracy_mean", "accuracy_std_error", "affinity", "affinity_shift", "diversity",
]
VAL_AUGMENT_STREAM = 1_000_003


class GridSpec(BaseModel):
    sigma_scale: List[float] = list(config.COARSE_GRID["sigma_scale"])
    sigma_shift: List[float] = list(config.COARSE_GRID["sigma_shift"])
    sigma_noise: List[float] = list(config.COARSE_GRID["sigma_noise"])
    seeds: List[int] = [0]
    kind: Literal["lstm", "cnn"] = "lstm"
    hidden: int = Field(default=config.LSTM_HIDDEN, ge=1)
    latent: int = Field(default=config.LATENT_DIM, ge=1)
    multiplier: int = Field(default=config.AUG_MULTIPLIER, ge=1)
    joint_min: Optional[int] = Field(default=None, ge=1)
    joint_max: Optional[int] = Field(default=None, ge=1)
    max_points: Optional[int] = Field(default=None, ge=1)
    max_seconds: Optional[float] = Field(default=None, gt=0.0)
    schedule: TrainSchedule = TrainSchedule()

    @field_validator("sigma_scale", "sigma_shift", "sigma_noise")
    @classmethod
    def _check_sigmas(cls, values):
        if not values:
            raise ValueError("every σ list needs at least one value")
        if any(not np.isfinite(v) or v < 0 for v in values):
            raise ValueError(f"σ values must be finite and ≥ 0, got {values}")
        return values

    @field_validator("seeds")
    @classmethod
    def _check_seeds(cls, seeds):
        if not seeds:
            raise ValueError("a grid needs at least one seed")
        return seeds

    def points(self) -> List[Tuple[float, float, float]]:
        return list(itertools.product(self.sigma_scale, self.sigma_shift, self.sigma_noise))

    @classmethod
    def from_settings(cls, settings: Dict[str, str]) -> "GridSpec":
        """Build from KEY=value settings; list values are comma-separated."""
        fields: Dict[str, object] = {}
        schedule: Dict[str, str] = {}
        for key, raw in settings.items():
            name = key.lower().replace("-", "_")
            if name in ("sigma_scale", "sigma_shift", "sigma_noise"):
                fields[name] = [float(v) for v in raw.split(",") if v.strip()]
            elif name == "seeds":
                fields[name] = [int(v) for v in raw.split(",") if v.strip()]
            elif name in TrainSchedule.model_fields:
                schedule[name] = raw
            elif name in cls.model_fields:
                fields[name] = raw
            else:
                raise UsageError(f"unknown grid setting '{key}'")
        if schedule:
            fields["schedule"] = TrainSchedule(**schedule)
        return cls(**fields)


class GridPoint(BaseModel):
    index: int
    sigma_scale: float
    sigma_shift: float
    sigma_noise: float
    accuracies: List[float]
    report: AffinityDiversityReport
    seconds: float


class GridResult(BaseModel):
    points: List[GridPoint]
    expected_points: int
    best_index: int
    total_seconds: float
    complete: bool


def _point_policy(grid: GridSpec, dataset: LabeledDataset, sigmas, seed: int, multiplier: int) -> AugmentPolicy:
    joint_min, joint_max = default_joint_range(dataset.name)
    return AugmentPolicy(
        sigma_scale=sigmas[0],
        sigma_shift=sigmas[1],
        sigma_noise=sigmas[2],
        joint_min=grid.joint_min or joint_min,
        joint_max=min(grid.joint_max or joint_max, dataset.num_joints),
        multiplier=multiplier,
        seed=seed,
    )


def _recognizer_spec(grid: GridSpec, dataset: LabeledDataset, seed: int) -> RecognizerSpec:
    return RecognizerSpec(
        kind=grid.kind,
        num_classes=dataset.num_classes,
        length=dataset.length,
        width=dataset.width,
        hidden=grid.hidden,
        latent=grid.latent,
        seed=seed,
    )


def train_clean(grid: GridSpec, train_set: LabeledDataset, val_set: LabeledDataset) -> Dict[int, Dict[str, np.ndarray]]:
    """Clean-data recognizer weights per seed, used for affinity."""
    weights = {}
    for seed in grid.seeds:
        schedule = grid.schedule.model_copy(update={"seed": seed})
        trained = train_recognizer(build(_recognizer_spec(grid, train_set, seed)), train_set, val_set, schedule)
        weights[seed] = trained.recognizer.params.arrays()
    return weights


def evaluate_point(
    index: int,
    sigmas: Tuple[float, float, float],
    grid: GridSpec,
    train_set: LabeledDataset,
    val_set: LabeledDataset,
    clean_weights: Dict[int, Dict[str, np.ndarray]],
) -> GridPoint:
    """One grid point over all seeds; depends only on its arguments."""
    started = time.perf_counter()
    accuracies, affinities, diversities = [], [], []
    for seed in grid.seeds:
        policy = _point_policy(grid, train_set, sigmas, seed, grid.multiplier)
        schedule = grid.schedule.model_copy(update={"seed": seed})
        trained = train_recognizer(
            build(_recognizer_spec(grid, train_set, seed)), augment_dataset(train_set, policy), val_set, schedule
        )
        accuracies.append(trained.best().val_acc)
        diversities.append(diversity(trained))

        clean = build(_recognizer_spec(grid, train_set, seed))
        clean.params.load_arrays(clean_weights[seed])
        val_policy = _point_policy(grid, val_set, sigmas, seed + VAL_AUGMENT_STREAM, 1)
        affinities.append(affinity(clean, val_set, augment_dataset(val_set, val_policy)))

    report = build_report(
        float(np.mean(affinities)),
        float(np.mean(diversities)),
        accuracies,
        grid.seeds,
        provenance={
            "train": train_set.checksum(),
            "val": val_set.checksum(),
            "kind": grid.kind,
        },
    )
    return GridPoint(
        index=index,
        sigma_scale=sigmas[0],
        sigma_shift=sigmas[1],
        sigma_noise=sigmas[2],
        accuracies=accuracies,
        report=report,
        seconds=time.perf_counter() - started,
    )


def _tie_break_key(point: GridPoint):
    return (-point.report.accuracy_mean, point.sigma_noise, point.sigma_shift, point.sigma_scale)


def _best_index(points: List[GridPoint]) -> int:
    return min(points, key=_tie_break_key).index if points else -1


def run_grid(
    train_set: LabeledDataset,
    val_set: LabeledDataset,
    grid: GridSpec,
    jobs: int = 1,
    clean_weights: Optional[Dict[int, Dict[str, np.ndarray]]] = None,
) -> GridResult:
    """
    Evaluate every grid point, in parallel when jobs > 1.

    A budget (max_points / max_seconds) truncates the run; the result is then
    flagged incomplete rather than failing. With jobs > 1 the time budget is
    checked as points complete: queued points are cancelled, while points
    already running in a worker finish and their results are dropped.
    """
    if train_set.num_classes != val_set.num_classes:
        raise ContractViolation(f"train K={train_set.num_classes} vs val K={val_set.num_classes}")
    all_points = grid.points()
    scheduled = all_points[: grid.max_points] if grid.max_points else all_points
    clean_weights = clean_weights or train_clean(grid, train_set, val_set)
    logger.info("✓ Grid search: %d of %d points, %d seed(s) each", len(scheduled), len(all_points), len(grid.seeds))

    started = time.perf_counter()
    results: List[GridPoint] = []
    timed_out = False
    if jobs <= 1:
        for index, sigmas in enumerate(scheduled):
            if grid.max_seconds and time.perf_counter() - started > grid.max_seconds:
                timed_out = True
                break
            results.append(evaluate_point(index, sigmas, grid, train_set, val_set, clean_weights))
            logger.debug("grid point %d done: %s", index, results[-1].report.model_dump())
        total = float(sum(point.seconds for point in results))
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, os.cpu_count() or 1)) as pool:
            futures = [
                pool.submit(evaluate_point, index, sigmas, grid, train_set, val_set, clean_weights)
                for index, sigmas in enumerate(scheduled)
            ]
            for future in as_completed(futures):
                results.append(future.result())
                if grid.max_seconds and time.perf_counter() - started > grid.max_seconds:
                    timed_out = len(results) < len(futures)
                    pool.shutdown(wait=False, cancel_futures=True)
                    break
        total = time.perf_counter() - started
        results.sort(key=lambda point: point.index)

    complete = not timed_out and len(results) == len(all_points)
    if not complete:
        logger.warning("Grid search incomplete: %d of %d points evaluated", len(results), len(all_points))
    return GridResult(
        points=results,
        expected_points=len(all_points),
        best_index=_best_index(results),
        total_seconds=total,
        complete=complete,
    )


def best_policy(result: GridResult, template: Optional[AugmentPolicy] = None) -> AugmentPolicy:
    """
    The policy of the highest mean-accuracy point; ties go to the smaller
    σ_noise, then σ_shift, then σ_scale.

    Raises:
        ContractViolation: If the result holds no points
    """
    if not result.points:
        raise ContractViolation("best_policy needs at least one evaluated point")
    best = min(result.points, key=_tie_break_key)
    template = template or AugmentPolicy()
    return template.model_copy(update={
        "sigma_scale": best.sigma_scale,
        "sigma_shift": best.sigma_shift,
        "sigma_noise": best.sigma_noise,
    })


def result_table(result: GridResult) -> pandas.DataFrame:
    rows = [
        {
            "index": point.index,
            "sigma_scale": point.sigma_scale,
            "sigma_shift": point.sigma_shift,
            "sigma_noise": point.sigma_noise,
            "accuracy_mean": point.report.accuracy_mean,
            "accuracy_std_error": point.report.accuracy_std_error,
            "affinity": point.report.affinity,
            "affinity_shift": point.report.affinity_shift,
            "diversity": point.report.diversity,
        }
        for point in result.points
    ]
    return pandas.DataFrame(rows, columns=TABLE_COLUMNS)


def write_grid_table(result: GridResult, path: str) -> None:
    """Tab-separated per-point rows for plotting."""
    result_table(result).to_csv(path, sep="\t", index=False, float_format="%.17g")


def write_grid_timings(result: GridResult, path: str) -> None:
    """Wall-clock seconds per point; kept apart from the reproducible table."""
    frame = pandas.DataFrame(
        [{"index": point.index, "seconds": point.seconds} for point in result.points], columns=["index", "seconds"]
    )
    frame.to_csv(path, sep="\t", index=False)


def read_grid_table(path: str) -> pandas.DataFrame:
    return pandas.read_csv(path, sep="\t")


def best_row_index(table: pandas.DataFrame) -> int:
    """Argmax with the same tie-break as best_policy, recomputed from a table."""
    ordered = table.assign(neg_accuracy=-table["accuracy_mean"]).sort_values(
        ["neg_accuracy", "sigma_noise", "sigma_shift", "sigma_scale"], kind="mergesort"
    )
    return int(ordered.iloc[0]["index"])
