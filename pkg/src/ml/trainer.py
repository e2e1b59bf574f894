"""End-to-end training loop: NAdam, plateau scheduler, early stopping on validation loss."""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union
import numpy as np
from pydantic import BaseModel, Field, model_validator
from src.curve_repr import decode
from src.errors import EmptyDataset, NonFiniteLoss
from src.geometry import Curve3D
from src.metrics import ShapeMetrics, compare_shapes
from src.ml.dataset import iterate_batches, split_dataset, stack_frames
from src.ml.loss import LossWeights, TargetBatch, make_targets, total_loss
from src.ml.model import ModelDims, ModelParams, backward, decode_prediction, forward_batch, init_params
from src.ml.optim import NAdam, ReduceLROnPlateau, clip_by_global_norm
from src.synthetic import DeskSequence
logger = logging.getLogger(__name__)

LOG_HEADER = ['epoch', 'train_loss', 'val_loss', 'lr']


class TrainingConfig(BaseModel):
    lambda_tip: float = Field(1.0, ge=0)
    lambda_offset: float = Field(10.0, ge=0)
    lambda_stop: float = Field(1.0, ge=0)
    lr: float = Field(0.0001, gt=0)
    scheduler_factor: float = Field(0.1, gt=0, lt=1)
    scheduler_patience: int = Field(10, ge=0)
    scheduler_threshold: float = Field(0.0001, ge=0)
    max_epochs: int = Field(400, ge=0)
    early_stop_patience: int = Field(25, ge=1)
    max_segments: int = Field(64, ge=1)
    radius: float = Field(2.0, gt=0, description='Step length r of the spherical representation (mm)')
    seed: int = 0
    batch_size: int = Field(16, ge=1)
    feature_dim: int = Field(32, ge=1)
    hidden_dim: int = Field(32, ge=1)
    patch_size: int = Field(8, ge=1)
    frame_size: int = Field(64, ge=1)
    grad_clip: float = Field(5.0, ge=0)
    val_fraction: float = Field(0.2, ge=0, lt=1)
    representation: Literal['spherical', 'cartesian'] = 'spherical'
    stop_threshold: float = Field(0.5, gt=0, lt=1)
    seq_len: int = Field(4, ge=1, description='Frames per input sequence')

    @model_validator(mode='after')
    def check_weights(self):
        if self.lambda_tip + self.lambda_offset + self.lambda_stop <= 0:
            raise ValueError('at least one loss weight must be positive')
        return self

    @property
    def weights(self) -> LossWeights:
        return LossWeights(tip=self.lambda_tip, offset=self.lambda_offset, stop=self.lambda_stop)

    @property
    def dims(self) -> ModelDims:
        return ModelDims(frame_size=self.frame_size, patch_size=self.patch_size, feature_dim=self.feature_dim, hidden_dim=self.hidden_dim, max_segments=self.max_segments, representation=self.representation, radius=self.radius, seq_len=self.seq_len)


@dataclass
class TrainingResult:
    params: ModelParams
    log: List[Dict[str, float]] = field(default_factory=list)
    best_epoch: int = 0
    initial_train_loss: float = 0.0
    initial_val_loss: float = 0.0

    @property
    def final_train_loss(self) -> float:
        return self.log[-1]['train_loss'] if self.log else self.initial_train_loss


def tip_statistics(targets: TargetBatch) -> Tuple[List[float], List[float]]:
    """Per-axis mean and spread of the target tips; a flat axis keeps unit spread."""
    std = targets.tip.std(axis=0)
    return (targets.tip.mean(axis=0).tolist(), np.where(std > 1e-06, std, 1.0).tolist())


def dataset_loss(params: ModelParams, frames: np.ndarray, targets: TargetBatch, weights: LossWeights, batch_size: int=64) -> float:
    if len(targets) == 0:
        return float('nan')
    total = 0.0
    for start in range(0, len(targets), batch_size):
        index = np.arange(start, min(start + batch_size, len(targets)))
        out, _ = forward_batch(params, frames[index])
        loss, _ = total_loss(out, targets.subset(index), weights, params.dims.tip_std)
        total += loss * len(index)
    return total / len(targets)


def train(dataset: Sequence[DeskSequence], cfg: Optional[TrainingConfig]=None, validation: Optional[Sequence[DeskSequence]]=None) -> TrainingResult:
    cfg = cfg or TrainingConfig()
    if not dataset:
        raise EmptyDataset('training dataset is empty')
    if validation is None:
        train_set, val_set = split_dataset(list(dataset), cfg.val_fraction, cfg.seed)
    else:
        train_set, val_set = (list(dataset), list(validation))
    if not val_set:
        raise EmptyDataset('validation set is empty')
    weights = cfg.weights
    train_frames = stack_frames(train_set)
    val_frames = stack_frames(val_set)
    train_targets = make_targets([s.target for s in train_set], cfg.max_segments, cfg.representation)
    val_targets = make_targets([s.target for s in val_set], cfg.max_segments, cfg.representation)
    tip_mean, tip_std = tip_statistics(train_targets)
    dims = ModelDims(**{**cfg.dims.model_dump(), 'tip_mean': tip_mean, 'tip_std': tip_std})
    params = init_params(dims, cfg.seed)
    initial_train = dataset_loss(params, train_frames, train_targets, weights)
    initial_val = dataset_loss(params, val_frames, val_targets, weights)
    logger.info(f'Training on {len(train_set)} sequence(s), validating on {len(val_set)}; initial loss {initial_train:.4f} / {initial_val:.4f}')
    optimizer = NAdam(params.arrays, lr=cfg.lr)
    scheduler = ReduceLROnPlateau(optimizer, factor=cfg.scheduler_factor, patience=cfg.scheduler_patience, threshold=cfg.scheduler_threshold)
    rng = np.random.default_rng(cfg.seed)
    best = params.copy()
    best_val = initial_val
    best_epoch = 0
    log = []
    for epoch in range(1, cfg.max_epochs + 1):
        lr = optimizer.lr
        running = 0.0
        for index in iterate_batches(len(train_set), cfg.batch_size, rng):
            out, cache = forward_batch(params, train_frames[index])
            loss, head_grads = total_loss(out, train_targets.subset(index), weights, params.dims.tip_std)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f'loss became non-finite at epoch {epoch}', context=f'lr={lr}')
            grads = backward(params, cache, head_grads['tip'], head_grads['offsets'], head_grads['stop_logits'])
            optimizer.step(clip_by_global_norm(grads, cfg.grad_clip))
            running += loss * len(index)
        train_loss = running / len(train_set)
        val_loss = dataset_loss(params, val_frames, val_targets, weights)
        if not np.isfinite(val_loss):
            raise NonFiniteLoss(f'validation loss became non-finite at epoch {epoch}')
        log.append({'epoch': epoch, 'train_loss': train_loss, 'val_loss': val_loss, 'lr': lr})
        logger.debug(f'epoch {epoch}: train {train_loss:.5f} val {val_loss:.5f} lr {lr:.3g}')
        if val_loss < best_val:
            best_val = val_loss
            best = params.copy()
            best_epoch = epoch
        scheduler.step(val_loss)
        if epoch - best_epoch >= cfg.early_stop_patience:
            logger.info(f'Early stopping at epoch {epoch} (best epoch {best_epoch})')
            break
    logger.info(f'Training finished: best validation loss {best_val:.5f} at epoch {best_epoch}')
    return TrainingResult(params=best, log=log, best_epoch=best_epoch, initial_train_loss=initial_train, initial_val_loss=initial_val)


def predict_curves(params: ModelParams, samples: Sequence[DeskSequence], radius: float, stop_threshold: float=0.5) -> List[Curve3D]:
    if not samples:
        return []
    out, _ = forward_batch(params, stack_frames(samples))
    return [decode_prediction(out.sample(i), radius, stop_threshold, params.dims.representation) for i in range(len(samples))]


def evaluate_model(params: ModelParams, samples: Sequence[DeskSequence], radius: float, stop_threshold: float=0.5, delta_u: Optional[float]=None) -> List[ShapeMetrics]:
    """Shape metrics of decoded predictions against the decoded targets.

    Curves shorter than the comparison spacing are compared at their own length.
    """
    delta_u = delta_u or radius
    metrics = []
    for sample, pred in zip(samples, predict_curves(params, samples, radius, stop_threshold)):
        truth = decode(sample.target)
        spacing = min(delta_u, pred.length, truth.length)
        metrics.append(compare_shapes(pred, truth, spacing))
    return metrics


def write_log_csv(path: Union[str, Path], log: Sequence[Dict[str, float]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(LOG_HEADER)
        for row in log:
            writer.writerow([row['epoch'], f"{row['train_loss']:.8g}", f"{row['val_loss']:.8g}", f"{row['lr']:.8g}"])
    return path


def read_log_csv(path: Union[str, Path]) -> List[Dict[str, float]]:
    with open(path, 'r', newline='') as f:
        return [{'epoch': int(r['epoch']), 'train_loss': float(r['train_loss']), 'val_loss': float(r['val_loss']), 'lr': float(r['lr'])} for r in csv.DictReader(f)]
