"""
Recognizer training, evaluation and latent extraction.

Schedule: Adam at a fixed starting rate, learning rate multiplied by a
factor after `plateau_patience` epochs without validation improvement,
training stopped after `early_stop_patience` such epochs. The parameters of
the best validation epoch are restored at the end.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

import config
from core.checkpoint import load_checkpoint, save_checkpoint
from core.losses import sparse_ce_loss
from core.optim import AdamState, adam_step
from core.tensor import tape_backward
from data.skeleton import LabeledDataset
from errors import CheckpointError, ContractViolation, NumericalFailure
from recognition.models import Recognizer, RecognizerSpec, build

logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "recognizer"


class TrainSchedule(BaseModel):
    lr: float = Field(default=config.RECOGNIZER_LR, gt=0.0)
    plateau_patience: int = Field(default=config.PLATEAU_PATIENCE, ge=1)
    early_stop_patience: int = Field(default=config.EARLY_STOP_PATIENCE, ge=1)
    factor: float = Field(default=config.PLATEAU_FACTOR, gt=0.0, lt=1.0)
    improvement_threshold: float = Field(default=config.IMPROVEMENT_THRESHOLD, ge=0.0)
    batch_size: int = Field(default=config.RECOGNIZER_BATCH, ge=1)
    max_epochs: int = Field(default=config.RECOGNIZER_MAX_EPOCHS, ge=1)
    seed: int = 0


class EpochMetrics(BaseModel):
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    lr: float


class EvalReport(BaseModel):
    accuracy: float
    per_class: Dict[int, float]
    class_counts: Dict[int, int]
    loss: float
    count: int


@dataclass
class TrainedRecognizer:
    recognizer: Recognizer
    history: List[EpochMetrics] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def stopped_epoch(self) -> int:
        return len(self.history)

    @property
    def latent_dim(self) -> int:
        return self.recognizer.latent_dim

    def best(self) -> EpochMetrics:
        if not self.history:
            raise ContractViolation("recognizer has no training history")
        return self.history[self.best_epoch - 1]


class PlateauTracker:
    """
    Validation-loss bookkeeping for plateau LR reduction and early stopping.

    The best epoch is the strict minimum of the validation loss. The patience
    counters only restart when the loss beats the last counted improvement by
    more than the threshold. The plateau counter also restarts after every
    reduction.
    """

    def __init__(self, schedule: TrainSchedule):
        self.schedule = schedule
        self.best_loss = float("inf")
        self.best_epoch = 0
        self.reference_loss = float("inf")
        self.since_best = 0
        self.since_reduction = 0

    def update(self, epoch: int, val_loss: float) -> Tuple[bool, bool, bool]:
        """
        Record one epoch's validation loss.

        Returns:
            (new_best, reduce_lr, stop); new_best is True whenever val_loss is
            strictly below every earlier loss
        """
        new_best = val_loss < self.best_loss
        if new_best:
            self.best_loss = val_loss
            self.best_epoch = epoch
        if val_loss < self.reference_loss - self.schedule.improvement_threshold:
            self.reference_loss = val_loss
            self.since_best = 0
            self.since_reduction = 0
            return new_best, False, False
        self.since_best += 1
        self.since_reduction += 1
        reduce_lr = self.since_reduction >= self.schedule.plateau_patience
        if reduce_lr:
            self.since_reduction = 0
        return new_best, reduce_lr, self.since_best >= self.schedule.early_stop_patience


def _check_dataset(recognizer: Recognizer, dataset: LabeledDataset, role: str) -> None:
    if len(dataset) == 0:
        raise ContractViolation(f"{role} set is empty")
    spec = recognizer.spec
    if dataset.num_classes != spec.num_classes:
        raise ContractViolation(f"{role} set has K={dataset.num_classes}, recognizer has K={spec.num_classes}")
    if dataset.length != spec.length or dataset.width != spec.width:
        raise ContractViolation(
            f"{role} set is {dataset.length}×{dataset.width}, recognizer expects {spec.length}×{spec.width}"
        )


def accuracy_report(logits: np.ndarray, labels: np.ndarray, num_classes: int, loss: float) -> EvalReport:
    """Overall and per-class argmax accuracy for precomputed logits."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ContractViolation("cannot score an empty set")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ContractViolation(f"labels must lie in [0, {num_classes})")
    correct = np.argmax(logits, axis=1) == labels
    per_class, counts = {}, {}
    for label in np.unique(labels):
        mask = labels == label
        per_class[int(label)] = float(np.mean(correct[mask]))
        counts[int(label)] = int(np.sum(mask))
    return EvalReport(
        accuracy=float(np.mean(correct)),
        per_class=per_class,
        class_counts=counts,
        loss=float(loss),
        count=int(labels.size),
    )


def _batched_logits(recognizer: Recognizer, frames: np.ndarray, labels: np.ndarray, batch_size: int):
    frozen = recognizer.frozen()
    logits, loss_sum = [], 0.0
    for start in range(0, len(frames), batch_size):
        batch_logits = frozen.logits(frames[start:start + batch_size])
        rows = labels[start:start + batch_size]
        loss_sum += sparse_ce_loss(batch_logits, rows).item() * len(rows)
        logits.append(batch_logits.data)
    return np.concatenate(logits), loss_sum / len(frames)


def evaluate(recognizer: Recognizer, dataset: LabeledDataset, batch_size: int = config.RECOGNIZER_BATCH) -> EvalReport:
    """
    Score a recognizer on a labeled set.

    Raises:
        ContractViolation: If the set is empty or does not fit the recognizer
    """
    _check_dataset(recognizer, dataset, "evaluation")
    labels = dataset.labels()
    logits, loss = _batched_logits(recognizer, dataset.frames_array(), labels, batch_size)
    return accuracy_report(logits, labels, recognizer.spec.num_classes, loss)


def train_recognizer(
    recognizer: Recognizer,
    train_set: LabeledDataset,
    val_set: LabeledDataset,
    schedule: Optional[TrainSchedule] = None,
) -> TrainedRecognizer:
    """
    Fit a recognizer with plateau LR reduction and early stopping.

    Args:
        recognizer: Untrained (or partly trained) model; updated in place
        train_set: Training samples, uniform length matching the spec
        val_set: Validation samples, same K and shape
        schedule: Optimizer and stopping settings

    Returns:
        TrainedRecognizer carrying the best-validation parameters and the history

    Raises:
        ContractViolation: If either set is empty or mismatched
        NumericalFailure: If a training loss becomes non-finite
    """
    schedule = schedule or TrainSchedule()
    _check_dataset(recognizer, train_set, "training")
    _check_dataset(recognizer, val_set, "validation")

    frames, labels = train_set.frames_array(), train_set.labels()
    val_frames, val_labels = val_set.frames_array(), val_set.labels()
    state = AdamState(lr=schedule.lr)
    tracker = PlateauTracker(schedule)
    best_arrays = recognizer.params.arrays()
    history: List[EpochMetrics] = []

    for epoch in range(1, schedule.max_epochs + 1):
        order = np.random.default_rng([schedule.seed, epoch]).permutation(len(frames))
        batch_losses, correct = [], 0
        for start in range(0, len(frames), schedule.batch_size):
            rows = order[start:start + schedule.batch_size]
            logits = recognizer.logits(frames[rows])
            loss = sparse_ce_loss(logits, labels[rows])
            if not np.isfinite(loss.item()):
                raise NumericalFailure(
                    f"recognizer loss became {loss.item()} at epoch {epoch}",
                    state={"epoch": epoch, "lr": state.lr, "step": state.step},
                )
            correct += int(np.sum(np.argmax(logits.data, axis=1) == labels[rows]))
            batch_losses.append(loss.item())
            tape_backward(loss)
            adam_step(recognizer.params, state)

        val_logits, val_loss = _batched_logits(recognizer, val_frames, val_labels, schedule.batch_size)
        val_acc = float(np.mean(np.argmax(val_logits, axis=1) == val_labels))
        history.append(EpochMetrics(
            epoch=epoch,
            train_loss=float(np.mean(batch_losses)),
            train_acc=correct / len(frames),
            val_loss=val_loss,
            val_acc=val_acc,
            lr=state.lr,
        ))
        logger.debug("epoch %d: %s", epoch, history[-1].model_dump())

        new_best, reduce_lr, stop = tracker.update(epoch, val_loss)
        if new_best:
            best_arrays = recognizer.params.arrays()
        if stop:
            logger.info("✓ Early stop at epoch %d (best epoch %d)", epoch, tracker.best_epoch)
            break
        if reduce_lr:
            state.lr *= schedule.factor
            logger.debug("Reduced learning rate to %g", state.lr)

    recognizer.params.load_arrays(best_arrays)
    best = history[tracker.best_epoch - 1] if tracker.best_epoch else history[-1]
    logger.info(
        "✓ Trained %s recognizer (%d parameters): %d epochs, best val acc %.4f",
        recognizer.spec.kind,
        recognizer.params.num_parameters(),
        len(history),
        best.val_acc,
    )
    return TrainedRecognizer(recognizer=recognizer, history=history, best_epoch=tracker.best_epoch or len(history))


def extract_latents(
    recognizer: Recognizer, dataset: LabeledDataset, batch_size: int = config.RECOGNIZER_BATCH
) -> Tuple[np.ndarray, np.ndarray]:
    """Penultimate-layer activations [N×latent] and the matching labels."""
    _check_dataset(recognizer, dataset, "latent")
    frozen = recognizer.frozen()
    frames = dataset.frames_array()
    rows = [frozen.latent(frames[start:start + batch_size]).data for start in range(0, len(frames), batch_size)]
    return np.concatenate(rows), dataset.labels()


def save_recognizer(trained: TrainedRecognizer, path: str, metadata: Optional[dict] = None) -> None:
    meta = {
        "kind": CHECKPOINT_KIND,
        "toolkit_version": config.TOOLKIT_VERSION,
        "spec": trained.recognizer.spec.model_dump(),
        "best_epoch": trained.best_epoch,
        "history": [record.model_dump() for record in trained.history],
    }
    meta.update(metadata or {})
    save_checkpoint(path, trained.recognizer.params, meta)
    logger.info("✓ Saved recognizer checkpoint to %s", path)


def load_recognizer(path: str) -> TrainedRecognizer:
    """
    Raises:
        CheckpointError: If the file is unreadable or holds another model
    """
    params, metadata = load_checkpoint(path)
    if metadata.get("kind") != CHECKPOINT_KIND:
        raise CheckpointError(f"{path} is not a recognizer checkpoint (kind={metadata.get('kind')!r})")
    try:
        spec = RecognizerSpec(**metadata["spec"])
        recognizer = build(spec)
        recognizer.params.load_arrays(params.arrays())
        history = [EpochMetrics(**record) for record in metadata.get("history", [])]
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"{path} has an inconsistent recognizer manifest: {e}") from e
    return TrainedRecognizer(recognizer=recognizer, history=history, best_epoch=int(metadata.get("best_epoch", 0)))
