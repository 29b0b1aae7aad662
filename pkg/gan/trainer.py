"""
Training, sampling and persistence for the sequence CycleGAN.

One training set feeds both domains: each epoch draws two independent
shuffles of it as the X and Y streams. No labels are used anywhere.
"""

import json
import logging
import os
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

import config
from core.checkpoint import load_checkpoint, save_checkpoint
from core.optim import AdamState, adam_step
from core.params import ParamSet
from core.tensor import DiffValue, tape_backward
from data.skeleton import LabeledDataset, SkeletonSequence
from errors import CheckpointError, ContractViolation, NumericalFailure
from gan.networks import DiscriminatorNet, GeneratorNet, discriminator_forward, generator_forward
from gan.objectives import full_generator_objective, loss_disc

logger = logging.getLogger(__name__)

NETWORKS = ("G", "F", "D_X", "D_Y")
CHECKPOINT_KIND = "imaginative-gan"


class GanTrainConfig(BaseModel):
    hidden: int = Field(default=config.GAN_HIDDEN, ge=1)
    batch_size: int = Field(default=config.GAN_BATCH, ge=1)
    max_epochs: int = Field(default=config.GAN_MAX_EPOCHS, ge=0)
    convergence_window: int = Field(default=config.GAN_CONVERGENCE_WINDOW, ge=1)
    convergence_tol: float = Field(default=config.GAN_CONVERGENCE_TOL, ge=0.0)
    lambda1: float = Field(default=config.GAN_LAMBDA_CYCLE, ge=0.0)
    lambda2: float = Field(default=config.GAN_LAMBDA_IDENTITY, ge=0.0)
    noise_sigma: float = Field(default=config.GAN_NOISE_SIGMA, ge=0.0)
    lr: float = Field(default=config.GAN_LR, gt=0.0)
    beta1: float = Field(default=config.GAN_BETA1, ge=0.0, lt=1.0)
    checkpoint_every: int = Field(default=0, ge=0)
    checkpoint_path: Optional[str] = None
    dump_dir: Optional[str] = None
    seed: int = 0


class StepRecord(BaseModel):
    d_x: float
    d_y: float
    gen_g: float
    gen_f: float
    cycle: float
    identity: float
    total: float


class EpochRecord(StepRecord):
    epoch: int
    batches: int


class GanModel:
    """Two generators, two discriminators and their optimizer states."""

    def __init__(
        self,
        G: GeneratorNet,
        F: GeneratorNet,
        D_X: DiscriminatorNet,
        D_Y: DiscriminatorNet,
        lambda1: float = config.GAN_LAMBDA_CYCLE,
        lambda2: float = config.GAN_LAMBDA_IDENTITY,
        noise_sigma: float = config.GAN_NOISE_SIGMA,
        seed: int = 0,
        lr: float = config.GAN_LR,
        beta1: float = config.GAN_BETA1,
    ):
        if lambda1 < 0 or lambda2 < 0 or noise_sigma < 0:
            raise ContractViolation(f"λ1={lambda1}, λ2={lambda2}, noise σ={noise_sigma} must be ≥ 0")
        self.G, self.F, self.D_X, self.D_Y = G, F, D_X, D_Y
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.noise_sigma = noise_sigma
        self.seed = seed
        self.optimizers = {name: AdamState(lr=lr, beta1=beta1) for name in NETWORKS}
        self.noise_rng = np.random.default_rng([seed, 1])
        self.epoch = 0

    @classmethod
    def initialize(cls, width: int, cfg: GanTrainConfig) -> "GanModel":
        rng = np.random.default_rng(cfg.seed)
        return cls(
            G=GeneratorNet.initialize(width, cfg.hidden, rng, seed=cfg.seed),
            F=GeneratorNet.initialize(width, cfg.hidden, rng, seed=cfg.seed),
            D_X=DiscriminatorNet.initialize(width, cfg.hidden, rng, seed=cfg.seed),
            D_Y=DiscriminatorNet.initialize(width, cfg.hidden, rng, seed=cfg.seed),
            lambda1=cfg.lambda1,
            lambda2=cfg.lambda2,
            noise_sigma=cfg.noise_sigma,
            seed=cfg.seed,
            lr=cfg.lr,
            beta1=cfg.beta1,
        )

    @property
    def width(self) -> int:
        return self.G.width

    @property
    def hidden(self) -> int:
        return self.G.hidden

    def networks(self) -> Dict[str, GeneratorNet]:
        return {"G": self.G, "F": self.F, "D_X": self.D_X, "D_Y": self.D_Y}

    def translator(self, net: GeneratorNet) -> Callable[[DiffValue], DiffValue]:
        return lambda x: generator_forward(net, x, self.noise_sigma, self.noise_rng)

    def critic(self, net: DiscriminatorNet) -> Callable[[DiffValue], DiffValue]:
        return lambda x: discriminator_forward(net, x)

    def is_finite(self) -> bool:
        return all(net.params.is_finite() for net in self.networks().values())


def _dump_state(model: GanModel, losses: Dict[str, float], dump_dir: Optional[str]) -> Tuple[dict, Optional[str]]:
    state = {
        "epoch": model.epoch,
        "seed": model.seed,
        "losses": losses,
        "optimizer_steps": {name: opt.step for name, opt in model.optimizers.items()},
        "non_finite_parameters": [
            f"{net_name}.{name}"
            for net_name, net in model.networks().items()
            for name, value in net.params.items()
            if not np.all(np.isfinite(value.data))
        ],
    }
    if not dump_dir:
        return state, None
    os.makedirs(dump_dir, exist_ok=True)
    path = os.path.join(dump_dir, f"gan-failure-seed{model.seed}-epoch{model.epoch}.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(state, handle, indent=2, default=str)
    return state, path


def _check_finite(model: GanModel, losses: Dict[str, float], dump_dir: Optional[str]) -> None:
    if all(np.isfinite(v) for v in losses.values()) and model.is_finite():
        return
    state, path = _dump_state(model, losses, dump_dir)
    logger.error("Non-finite GAN loss at epoch %d: %s", model.epoch, losses)
    raise NumericalFailure(f"GAN training diverged at epoch {model.epoch}", state=state, dump_path=path)


def train_step(model: GanModel, x_batch: np.ndarray, y_batch: np.ndarray, dump_dir: Optional[str] = None) -> StepRecord:
    """
    One update: both discriminators on detached fakes, then both generators
    jointly on the full objective.

    Raises:
        NumericalFailure: If any loss or parameter becomes non-finite
    """
    x_batch = np.asarray(x_batch, dtype=np.float64)
    y_batch = np.asarray(y_batch, dtype=np.float64)
    G, F = model.translator(model.G), model.translator(model.F)
    D_X, D_Y = model.critic(model.D_X), model.critic(model.D_Y)

    fake_y = G(x_batch)
    fake_x = F(y_batch)
    d_y = loss_disc(D_Y, y_batch, fake_y)
    d_x = loss_disc(D_X, x_batch, fake_x)
    d_total = d_x + d_y
    _check_finite(model, {"d_x": d_x.item(), "d_y": d_y.item()}, dump_dir)
    tape_backward(d_total)
    adam_step(model.D_X.params, model.optimizers["D_X"])
    adam_step(model.D_Y.params, model.optimizers["D_Y"])

    total, parts = full_generator_objective(G, F, D_X, D_Y, x_batch, y_batch, model.lambda1, model.lambda2)
    losses = {name: value.item() for name, value in parts.items()}
    losses.update(d_x=d_x.item(), d_y=d_y.item(), total=total.item())
    _check_finite(model, losses, dump_dir)
    tape_backward(total)
    adam_step(model.G.params, model.optimizers["G"])
    adam_step(model.F.params, model.optimizers["F"])
    model.D_X.params.zero_grad()
    model.D_Y.params.zero_grad()
    _check_finite(model, losses, dump_dir)
    return StepRecord(**losses)


def _converged(history: List[EpochRecord], window: int, tol: float) -> bool:
    if len(history) < 2 * window:
        return False
    recent = np.mean([r.total for r in history[-window:]])
    previous = np.mean([r.total for r in history[-2 * window:-window]])
    return abs(recent - previous) / max(abs(previous), 1e-12) < tol


def train(
    model: GanModel, dataset: LabeledDataset, cfg: GanTrainConfig
) -> Tuple[GanModel, List[EpochRecord]]:
    """
    Train until max_epochs or until the windowed mean objective settles.

    Raises:
        ContractViolation: If the dataset is empty, ragged or has the wrong width
        NumericalFailure: If training diverges
    """
    if len(dataset) == 0:
        raise ContractViolation("cannot train a GAN on an empty dataset")
    frames = dataset.frames_array()
    if frames.shape[2] != model.width:
        raise ContractViolation(f"dataset width {frames.shape[2]} != model width {model.width}")

    history: List[EpochRecord] = []
    count = len(frames)
    for _ in range(cfg.max_epochs):
        rng = np.random.default_rng([cfg.seed, 2, model.epoch])
        order_x = rng.permutation(count)
        order_y = rng.permutation(count)
        records = []
        for start in range(0, count, cfg.batch_size):
            rows_x = order_x[start:start + cfg.batch_size]
            rows_y = order_y[start:start + cfg.batch_size]
            records.append(train_step(model, frames[rows_x], frames[rows_y], cfg.dump_dir))
        model.epoch += 1
        summary = {field: float(np.mean([getattr(r, field) for r in records])) for field in StepRecord.model_fields}
        history.append(EpochRecord(epoch=model.epoch, batches=len(records), **summary))
        logger.debug("GAN epoch %d: %s", model.epoch, summary)

        if cfg.checkpoint_every and cfg.checkpoint_path and model.epoch % cfg.checkpoint_every == 0:
            save_gan(model, cfg.checkpoint_path, length=dataset.length)
        if _converged(history, cfg.convergence_window, cfg.convergence_tol):
            logger.info("✓ GAN objective settled after %d epochs", model.epoch)
            break

    if history:
        logger.info("✓ GAN trained: %d epochs, final objective %.4f", model.epoch, history[-1].total)
    return model, history


def generate(
    model: GanModel,
    dataset: LabeledDataset,
    per_sample: int,
    seed: int = 0,
    sampling_noise: bool = True,
    batch_size: int = config.GAN_BATCH,
) -> LabeledDataset:
    """
    Emit per_sample synthetic sequences for every source sample.

    Copy k (1-based) goes through G when k is odd and through F when k is
    even. Sampling noise for sample i, copy k comes from default_rng([seed, i, k]).
    Labels are copied from the sources; classes unseen in GAN training are fine.
    """
    if per_sample < 0:
        raise ContractViolation(f"per_sample must be ≥ 0, got {per_sample}")
    if per_sample == 0 or len(dataset) == 0:
        return dataset.with_samples([], name=f"{dataset.name}-gad")
    if dataset.width != model.width:
        raise ContractViolation(f"dataset width {dataset.width} != model width {model.width}")

    sigma = model.noise_sigma if sampling_noise else 0.0
    nets = {1: model.G.frozen(), 0: model.F.frozen()}
    outputs: Dict[Tuple[int, int], np.ndarray] = {}
    for k in range(per_sample):
        net = nets[(k + 1) % 2]
        by_length: Dict[int, List[int]] = {}
        for i, sample in enumerate(dataset):
            by_length.setdefault(sample.length, []).append(i)
        for indices in by_length.values():
            for start in range(0, len(indices), batch_size):
                chunk = indices[start:start + batch_size]
                batch = np.stack([dataset[i].frames for i in chunk])
                if sigma > 0.0:
                    batch = batch + np.stack([
                        np.random.default_rng([seed, i, k]).normal(0.0, sigma, size=dataset[i].frames.shape)
                        for i in chunk
                    ])
                translated = generator_forward(net, batch).data
                for row, i in enumerate(chunk):
                    outputs[(i, k)] = translated[row]

    samples: List[SkeletonSequence] = []
    for i, source in enumerate(dataset):
        for k in range(per_sample):
            samples.append(source.with_frames(outputs[(i, k)], source=f"{source.source}#gan{k}"))
    logger.info("✓ Generated %d synthetic sequences from %d sources", len(samples), len(dataset))
    return dataset.with_samples(samples, name=f"{dataset.name}-gad")


def save_gan(model: GanModel, path: str, length: Optional[int] = None) -> None:
    """Write all four networks plus the GAN manifest to one checkpoint."""
    params = ParamSet(seed=model.seed)
    for net_name, net in model.networks().items():
        for name, value in net.params.items():
            params.entries[f"{net_name}.{name}"] = value
    metadata = {
        "kind": CHECKPOINT_KIND,
        "toolkit_version": config.TOOLKIT_VERSION,
        "hidden": model.hidden,
        "joints": model.width // 3,
        "length": length,
        "lambda1": model.lambda1,
        "lambda2": model.lambda2,
        "noise_sigma": model.noise_sigma,
        "epoch": model.epoch,
        "lr": model.optimizers["G"].lr,
        "beta1": model.optimizers["G"].beta1,
    }
    save_checkpoint(path, params, metadata)
    logger.info("✓ Saved GAN checkpoint to %s (epoch %d, %d parameters)", path, model.epoch, params.num_parameters())


def load_gan(path: str) -> Tuple[GanModel, Dict]:
    """
    Rebuild a GanModel from save_gan output; optimizer moments start fresh.

    Raises:
        CheckpointError: If the file is unreadable or not a GAN checkpoint
    """
    params, metadata = load_checkpoint(path)
    if metadata.get("kind") != CHECKPOINT_KIND:
        raise CheckpointError(f"{path} is not a GAN checkpoint (kind={metadata.get('kind')!r})")
    nets = {}
    try:
        for net_name in NETWORKS:
            sub = ParamSet(seed=params.seed)
            head = net_name + "."
            for name, value in params.items():
                if name.startswith(head):
                    sub.entries[name[len(head):]] = value
            nets[net_name] = (DiscriminatorNet if net_name.startswith("D") else GeneratorNet)(sub)
        model = GanModel(
            **nets,
            lambda1=float(metadata["lambda1"]),
            lambda2=float(metadata["lambda2"]),
            noise_sigma=float(metadata["noise_sigma"]),
            seed=params.seed,
            lr=float(metadata.get("lr", config.GAN_LR)),
            beta1=float(metadata.get("beta1", config.GAN_BETA1)),
        )
    except (KeyError, ContractViolation) as e:
        raise CheckpointError(f"{path} has an inconsistent GAN manifest: {e}") from e
    model.epoch = int(metadata.get("epoch", 0))
    return model, metadata
