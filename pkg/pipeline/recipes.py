"""
End-to-end experiment recipes.

    table1            CD vs CAD vs GAD per recognizer kind, over seeds
    generalization    withhold classes from GAN training, then score their
                      synthetic samples per class
    ablation          GAN hidden width sweep
    affinity-scatter  coarse + fine grid points plus the CD and GAD points

Every recipe writes delimiter-separated tables into its output directory
and registers them on the run manifest.
"""

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas
from pydantic import BaseModel, Field

import config
from augment.classical import AugmentPolicy, augment_dataset, default_joint_range
from data.loaders import load_msr, load_shrec
from data.normalized import import_normalized, is_normalized_file
from data.preprocessing import prepare_clean
from data.skeleton import LabeledDataset
from data.synthetic import make_toy_dataset, make_toy_split
from errors import ContractViolation, UsageError
from evaluation.metrics import build_report, diversity, seed_stats
from evaluation.search import GridSpec, run_grid
from gan.trainer import GanModel, GanTrainConfig, generate, train
from pipeline.manifest import RunManifest
from recognition.models import RecognizerSpec, build
from recognition.training import TrainSchedule, evaluate, train_recognizer

logger = logging.getLogger(__name__)

RECIPES = ("table1", "generalization", "ablation", "affinity-scatter")
VAL_STREAM = 1_000_003
DATASET_ALIASES = {"shrec17": "shrec", "msr3d": "msr"}


def prepare(dataset: str, root: Optional[str] = None, label_mode: int = 14, seed: int = 0,
            toy_per_class: int = 20, toy_length: int = 40) -> LabeledDataset:
    """
    Load a raw dataset and produce its clean version (smoothed, padded).

    Without a root, shrec and msr are looked up under SKELAUG_DATA_DIR.

    Raises:
        UsageError: If root is already a normalized file, or the dataset is unknown
    """
    dataset = DATASET_ALIASES.get(dataset, dataset)
    if root and is_normalized_file(root):
        raise UsageError(f"{root} is already a prepared (normalized) dataset; prepare expects a raw dataset root")
    if dataset in ("shrec", "msr") and not root:
        cached = os.path.join(config.DATA_CACHE_DIR, dataset)
        if not os.path.isdir(cached):
            raise UsageError(f"--root is required for dataset '{dataset}' (nothing cached at {cached})")
        root = cached
    if dataset == "shrec":
        raw = load_shrec(root, label_mode)
    elif dataset == "msr":
        raw = load_msr(root)
    elif dataset == "toy":
        raw = make_toy_dataset(toy_per_class, toy_length, seed=seed)
    else:
        raise UsageError(f"unknown dataset '{dataset}' (expected shrec, msr or toy)")
    return prepare_clean(raw)


class RecipeConfig(BaseModel):
    name: Literal["table1", "generalization", "ablation", "affinity-scatter"]
    out_dir: str
    train_path: Optional[str] = None
    val_path: Optional[str] = None
    toy_per_class: int = Field(default=20, ge=1)
    toy_length: int = Field(default=40, ge=4)
    kinds: List[Literal["lstm", "cnn"]] = ["lstm", "cnn"]
    seeds: List[int] = list(config.SEEDS)
    recognizer_hidden: int = Field(default=config.LSTM_HIDDEN, ge=1)
    recognizer_latent: int = Field(default=config.LATENT_DIM, ge=1)
    recognizer_epochs: int = Field(default=config.RECOGNIZER_MAX_EPOCHS, ge=1)
    recognizer_lr: float = Field(default=config.RECOGNIZER_LR, gt=0.0)
    gan_hidden: int = Field(default=config.GAN_HIDDEN, ge=1)
    gan_epochs: int = Field(default=config.GAN_MAX_EPOCHS, ge=0)
    gan_batch: int = Field(default=config.GAN_BATCH, ge=1)
    gan_seed: int = 0
    per_sample: int = Field(default=config.GAN_PER_SAMPLE, ge=1)
    sigma_scale: float = Field(default=0.1, ge=0.0)
    sigma_shift: float = Field(default=0.1, ge=0.0)
    sigma_noise: float = Field(default=0.1, ge=0.0)
    multiplier: int = Field(default=config.AUG_MULTIPLIER, ge=1)
    withheld: int = Field(default=4, ge=1)
    ablation_hidden: List[int] = list(config.ABLATION_HIDDEN_UNITS)
    coarse_grid: Dict[str, List[float]] = {k: list(v) for k, v in config.COARSE_GRID.items()}
    fine_grid: Dict[str, List[float]] = {k: list(v) for k, v in config.FINE_GRID.items()}
    jobs: int = Field(default=1, ge=1)

    def schedule(self, seed: int) -> TrainSchedule:
        return TrainSchedule(lr=self.recognizer_lr, max_epochs=self.recognizer_epochs, seed=seed)

    def gan_config(self, hidden: Optional[int] = None) -> GanTrainConfig:
        return GanTrainConfig(
            hidden=hidden or self.gan_hidden, batch_size=self.gan_batch, max_epochs=self.gan_epochs, seed=self.gan_seed
        )


@dataclass
class SeedRun:
    seed: int
    accuracy: float
    diversity: float
    per_class: Dict[int, float]
    weights: Dict[str, np.ndarray]


def load_splits(cfg: RecipeConfig) -> Tuple[LabeledDataset, LabeledDataset]:
    """Prepared train/val splits from disk, or the toy split when no paths are given."""
    if cfg.train_path and cfg.val_path:
        return import_normalized(cfg.train_path), import_normalized(cfg.val_path)
    if cfg.train_path or cfg.val_path:
        raise UsageError("give both --train and --val, or neither for the toy dataset")
    train_set, val_set = make_toy_split(cfg.toy_per_class, cfg.toy_length, seed=cfg.gan_seed)
    return prepare_clean(train_set), prepare_clean(val_set)


def _spec(cfg: RecipeConfig, kind: str, dataset: LabeledDataset, seed: int) -> RecognizerSpec:
    return RecognizerSpec(
        kind=kind,
        num_classes=dataset.num_classes,
        length=dataset.length,
        width=dataset.width,
        hidden=cfg.recognizer_hidden,
        latent=cfg.recognizer_latent,
        seed=seed,
    )


def train_seed(cfg: RecipeConfig, kind: str, seed: int, train_set: LabeledDataset, val_set: LabeledDataset) -> SeedRun:
    trained = train_recognizer(build(_spec(cfg, kind, train_set, seed)), train_set, val_set, cfg.schedule(seed))
    report = evaluate(trained.recognizer, val_set)
    return SeedRun(
        seed=seed,
        accuracy=report.accuracy,
        diversity=diversity(trained),
        per_class=report.per_class,
        weights=trained.recognizer.params.arrays(),
    )


def train_over_seeds(
    cfg: RecipeConfig, kind: str, train_sets: Dict[int, LabeledDataset], val_set: LabeledDataset
) -> List[SeedRun]:
    """One recognizer per seed; seeds run in worker processes when cfg.jobs > 1."""
    seeds = list(train_sets)
    if cfg.jobs <= 1 or len(seeds) == 1:
        return [train_seed(cfg, kind, seed, train_sets[seed], val_set) for seed in seeds]
    with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(seeds))) as pool:
        futures = [pool.submit(train_seed, cfg, kind, seed, train_sets[seed], val_set) for seed in seeds]
        return [future.result() for future in futures]


def restore_recognizer(cfg: RecipeConfig, kind: str, dataset: LabeledDataset, run: SeedRun):
    """Rebuild the recognizer a SeedRun was trained as, with its best weights loaded."""
    recognizer = build(_spec(cfg, kind, dataset, run.seed))
    recognizer.params.load_arrays(run.weights)
    return recognizer


def _row(kind: str, data: str, runs: Sequence[SeedRun], affinities: Sequence[float]) -> Dict[str, object]:
    report = build_report(
        float(np.mean(affinities)),
        float(np.mean([run.diversity for run in runs])),
        [run.accuracy for run in runs],
        [run.seed for run in runs],
    )
    return {
        "recognizer": kind,
        "data": data,
        "accuracy_mean": report.accuracy_mean,
        "accuracy_std_error": report.accuracy_std_error,
        "affinity": report.affinity,
        "affinity_shift": report.affinity_shift,
        "diversity": report.diversity,
    }


def _policy(cfg: RecipeConfig, dataset: LabeledDataset, seed: int, multiplier: int) -> AugmentPolicy:
    joint_min, joint_max = default_joint_range(dataset.name)
    return AugmentPolicy(
        sigma_scale=cfg.sigma_scale,
        sigma_shift=cfg.sigma_shift,
        sigma_noise=cfg.sigma_noise,
        joint_min=joint_min,
        joint_max=min(joint_max, dataset.num_joints),
        multiplier=multiplier,
        seed=seed,
    )


def _train_gan(cfg: RecipeConfig, dataset: LabeledDataset, manifest: RunManifest, stage: str,
               hidden: Optional[int] = None) -> GanModel:
    gan_cfg = cfg.gan_config(hidden)
    with manifest.stage(stage):
        model, history = train(GanModel.initialize(dataset.width, gan_cfg), dataset, gan_cfg)
    if history:
        logger.info("✓ %s: objective %.4f → %.4f", stage, history[0].total, history[-1].total)
    return model


def _write_table(rows: List[Dict[str, object]], path: str, manifest: RunManifest, deterministic: bool = True) -> str:
    pandas.DataFrame(rows).to_csv(path, sep="\t", index=False, float_format="%.17g")
    manifest.add_artifact(path, deterministic=deterministic)
    return path


def _write_timings(manifest: RunManifest, path: str) -> str:
    rows = [{"stage": stage, "seconds": seconds} for stage, seconds in manifest.timings.items()]
    return _write_table(rows, path, manifest, deterministic=False)


def run_table1(cfg: RecipeConfig, train_set: LabeledDataset, val_set: LabeledDataset, manifest: RunManifest) -> List[str]:
    model = _train_gan(cfg, train_set, manifest, "gad:train-gan")
    with manifest.stage("gad:generate"):
        gad_train = generate(model, train_set, cfg.per_sample, seed=cfg.gan_seed)
        gad_val = generate(model, val_set, 1, seed=cfg.gan_seed + VAL_STREAM)

    rows = []
    for kind in cfg.kinds:
        with manifest.stage(f"{kind}:cd"):
            cd_runs = train_over_seeds(cfg, kind, {seed: train_set for seed in cfg.seeds}, val_set)
        rows.append(_row(kind, "CD", cd_runs, [0.0] * len(cd_runs)))
        clean = {run.seed: restore_recognizer(cfg, kind, train_set, run) for run in cd_runs}

        with manifest.stage(f"{kind}:cad"):
            cad_sets = {seed: augment_dataset(train_set, _policy(cfg, train_set, seed, cfg.multiplier)) for seed in cfg.seeds}
            cad_runs = train_over_seeds(cfg, kind, cad_sets, val_set)
        cad_affinity = [
            evaluate(clean[seed], augment_dataset(val_set, _policy(cfg, val_set, seed + VAL_STREAM, 1))).accuracy
            - evaluate(clean[seed], val_set).accuracy
            for seed in cfg.seeds
        ]
        rows.append(_row(kind, "CAD", cad_runs, cad_affinity))

        with manifest.stage(f"{kind}:gad"):
            gad_runs = train_over_seeds(cfg, kind, {seed: gad_train for seed in cfg.seeds}, val_set)
        gad_affinity = [
            evaluate(clean[seed], gad_val).accuracy - evaluate(clean[seed], val_set).accuracy for seed in cfg.seeds
        ]
        rows.append(_row(kind, "GAD", gad_runs, gad_affinity))

    return [
        _write_table(rows, os.path.join(cfg.out_dir, "table1.tsv"), manifest),
        _write_timings(manifest, os.path.join(cfg.out_dir, "timings.tsv")),
    ]


def choose_withheld(num_classes: int, count: int, seed: int) -> List[int]:
    if count >= num_classes:
        raise ContractViolation(f"cannot withhold {count} of {num_classes} classes")
    return sorted(int(c) for c in np.random.default_rng(seed).choice(num_classes, size=count, replace=False))


def _per_class_rows(view: str, runs: Sequence[Dict[int, float]], withheld: Sequence[int]) -> List[Dict[str, object]]:
    rows = []
    for label in sorted({label for run in runs for label in run}):
        values = [run[label] for run in runs if label in run]
        mean, std_error = seed_stats(values)
        rows.append({
            "view": view,
            "class": label,
            "withheld": label in withheld,
            "accuracy_mean": mean,
            "accuracy_std_error": std_error,
        })
    return rows


def run_generalization(cfg: RecipeConfig, train_set: LabeledDataset, val_set: LabeledDataset,
                       manifest: RunManifest) -> List[str]:
    withheld = choose_withheld(train_set.num_classes, min(cfg.withheld, train_set.num_classes - 1), cfg.gan_seed)
    seen = [c for c in range(train_set.num_classes) if c not in withheld]
    logger.info("✓ Withholding classes %s from GAN training", withheld)
    model = _train_gan(cfg, train_set.filter_classes(seen, name=f"{train_set.name}-seen"), manifest, "gan:seen-classes")
    with manifest.stage("generate"):
        gad_train = generate(model, train_set, cfg.per_sample, seed=cfg.gan_seed)

    kind = cfg.kinds[0]
    rows = []
    with manifest.stage("gad-trained"):
        gad_runs = train_over_seeds(cfg, kind, {seed: gad_train for seed in cfg.seeds}, val_set)
    rows += _per_class_rows("gad-trained", [run.per_class for run in gad_runs], withheld)

    with manifest.stage("cd-scored"):
        cd_runs = train_over_seeds(cfg, kind, {seed: train_set for seed in cfg.seeds}, val_set)
        scored = [evaluate(restore_recognizer(cfg, kind, train_set, run), gad_train).per_class for run in cd_runs]
    rows += _per_class_rows("cd-scored", scored, withheld)

    return [
        _write_table(rows, os.path.join(cfg.out_dir, "generalization.tsv"), manifest),
        _write_timings(manifest, os.path.join(cfg.out_dir, "timings.tsv")),
    ]


def run_ablation(cfg: RecipeConfig, train_set: LabeledDataset, val_set: LabeledDataset, manifest: RunManifest) -> List[str]:
    kind = cfg.kinds[0]
    rows = []
    for hidden in cfg.ablation_hidden:
        model = _train_gan(cfg, train_set, manifest, f"gan:h{hidden}", hidden=hidden)
        gad_train = generate(model, train_set, cfg.per_sample, seed=cfg.gan_seed)
        with manifest.stage(f"recognizer:h{hidden}"):
            runs = train_over_seeds(cfg, kind, {seed: gad_train for seed in cfg.seeds}, val_set)
        mean, std_error = seed_stats([run.accuracy for run in runs])
        rows.append({
            "hidden": hidden,
            "recognizer": kind,
            "accuracy_mean": mean,
            "accuracy_std_error": std_error,
            "diversity": float(np.mean([run.diversity for run in runs])),
        })
    return [
        _write_table(rows, os.path.join(cfg.out_dir, "ablation.tsv"), manifest),
        _write_timings(manifest, os.path.join(cfg.out_dir, "timings.tsv")),
    ]


def run_affinity_scatter(cfg: RecipeConfig, train_set: LabeledDataset, val_set: LabeledDataset,
                         manifest: RunManifest) -> List[str]:
    kind = cfg.kinds[0]
    schedule = cfg.schedule(cfg.seeds[0])
    grids = {
        name: GridSpec(
            **values, seeds=cfg.seeds, kind=kind, hidden=cfg.recognizer_hidden,
            latent=cfg.recognizer_latent, multiplier=cfg.multiplier, schedule=schedule,
        )
        for name, values in (("coarse", cfg.coarse_grid), ("fine", cfg.fine_grid))
    }
    with manifest.stage("clean"):
        cd_runs = train_over_seeds(cfg, kind, {seed: train_set for seed in cfg.seeds}, val_set)
    clean_weights = {run.seed: run.weights for run in cd_runs}

    rows = []
    for name, grid in grids.items():
        with manifest.stage(f"grid:{name}"):
            result = run_grid(train_set, val_set, grid, jobs=cfg.jobs, clean_weights=clean_weights)
        for point in result.points:
            rows.append({
                "source": name,
                "sigma_scale": point.sigma_scale,
                "sigma_shift": point.sigma_shift,
                "sigma_noise": point.sigma_noise,
                "affinity": point.report.affinity,
                "diversity": point.report.diversity,
                "accuracy_mean": point.report.accuracy_mean,
            })

    cd = _row(kind, "CD", cd_runs, [0.0] * len(cd_runs))
    model = _train_gan(cfg, train_set, manifest, "gad:train-gan")
    gad_train = generate(model, train_set, cfg.per_sample, seed=cfg.gan_seed)
    gad_val = generate(model, val_set, 1, seed=cfg.gan_seed + VAL_STREAM)
    with manifest.stage("gad"):
        gad_runs = train_over_seeds(cfg, kind, {seed: gad_train for seed in cfg.seeds}, val_set)
    gad_affinity = []
    for run in cd_runs:
        clean = restore_recognizer(cfg, kind, train_set, run)
        gad_affinity.append(evaluate(clean, gad_val).accuracy - evaluate(clean, val_set).accuracy)
    gad = _row(kind, "GAD", gad_runs, gad_affinity)
    for source, row in (("CD", cd), ("GAD", gad)):
        rows.append({
            "source": source,
            "sigma_scale": np.nan,
            "sigma_shift": np.nan,
            "sigma_noise": np.nan,
            "affinity": row["affinity"],
            "diversity": row["diversity"],
            "accuracy_mean": row["accuracy_mean"],
        })
    return [
        _write_table(rows, os.path.join(cfg.out_dir, "affinity-scatter.tsv"), manifest),
        _write_timings(manifest, os.path.join(cfg.out_dir, "timings.tsv")),
    ]


_RUNNERS = {
    "table1": run_table1,
    "generalization": run_generalization,
    "ablation": run_ablation,
    "affinity-scatter": run_affinity_scatter,
}


def run_recipe(cfg: RecipeConfig, manifest: RunManifest) -> List[str]:
    """
    Execute a recipe end to end; returns the report paths.

    Any stage failure propagates after the manifest has recorded the stage.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifest.seeds = list(cfg.seeds)
    with manifest.stage("load"):
        train_set, val_set = load_splits(cfg)
    for path in (cfg.train_path, cfg.val_path):
        if path:
            manifest.add_input(path)
    manifest.config.update({"train_checksum": train_set.checksum(), "val_checksum": val_set.checksum()})
    started = time.perf_counter()
    paths = _RUNNERS[cfg.name](cfg, train_set, val_set, manifest)
    logger.info("✓ Recipe %s finished in %.1fs: %s", cfg.name, time.perf_counter() - started, ", ".join(paths))
    return paths
