"""Combined tip / offset / stop loss with gradients w.r.t. the head outputs."""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple
import numpy as np
from pydantic import BaseModel, Field
from scipy.special import xlogy
from src.curve_repr import SphericalCurve, decode
from src.errors import DimensionMismatch, LengthExceedsM
from src.ml.model import PredictionOutput
logger = logging.getLogger(__name__)


class LossWeights(BaseModel):
    tip: float = Field(1.0, ge=0)
    offset: float = Field(10.0, ge=0)
    stop: float = Field(1.0, ge=0)


@dataclass
class TargetBatch:
    tip: np.ndarray
    offsets: np.ndarray
    mask: np.ndarray
    stop: np.ndarray

    def __len__(self) -> int:
        return len(self.tip)

    @property
    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    def subset(self, index: np.ndarray) -> 'TargetBatch':
        return TargetBatch(tip=self.tip[index], offsets=self.offsets[index], mask=self.mask[index], stop=self.stop[index])


def cartesian_offsets(curve: SphericalCurve) -> np.ndarray:
    """Decoded points relative to the tip, in units of the step radius."""
    points = decode(curve).points
    return (points[1:] - points[0]) / curve.radius


def make_targets(curves: Sequence[SphericalCurve], max_segments: int, representation: str='spherical') -> TargetBatch:
    width = 2 if representation == 'spherical' else 3
    B = len(curves)
    tip = np.zeros((B, 3))
    offsets = np.zeros((B, max_segments, width))
    mask = np.zeros((B, max_segments))
    stop = np.zeros((B, max_segments))
    for i, curve in enumerate(curves):
        L = curve.length
        if L > max_segments:
            raise LengthExceedsM(f'target {i} has {L} segments, the model predicts at most {max_segments}')
        tip[i] = curve.tip
        offsets[i, :L] = curve.offsets if representation == 'spherical' else cartesian_offsets(curve)
        mask[i, :L] = 1.0
        if L > 0:
            stop[i, L - 1] = 1.0
    return TargetBatch(tip=tip, offsets=offsets, mask=mask, stop=stop)


def binary_cross_entropy(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return -(xlogy(labels, probs) + xlogy(1.0 - labels, 1.0 - probs))


def _as_batch(pred: PredictionOutput) -> PredictionOutput:
    if pred.batched:
        return pred
    logits = None if pred.stop_logits is None else pred.stop_logits[None]
    return PredictionOutput(tip=pred.tip[None], offsets=pred.offsets[None], stop_probs=pred.stop_probs[None], stop_logits=logits)


def total_loss(pred: PredictionOutput, targets: TargetBatch, weights: Optional[LossWeights]=None, tip_std: Optional[Sequence[float]]=None) -> Tuple[float, Dict[str, np.ndarray]]:
    """Batch-averaged loss and its gradients.

    The tip error is measured in units of tip_std per axis (mm when omitted).
    The offset term is averaged over each sample's valid positions. When the
    prediction carries stop logits the BCE is evaluated from them directly and
    the stop gradient is taken w.r.t. the logits; otherwise w.r.t. the probabilities.
    """
    weights = weights or LossWeights()
    single = not pred.batched
    pred = _as_batch(pred)
    if pred.offsets.shape != targets.offsets.shape:
        raise DimensionMismatch(f'predicted offsets {pred.offsets.shape} do not match targets {targets.offsets.shape}')
    B = len(targets)
    lengths = np.maximum(targets.lengths, 1.0)
    scale = np.ones(3) if tip_std is None else np.asarray(tip_std, dtype=float)
    d_tip = (pred.tip - targets.tip) / scale
    d_off = (pred.offsets - targets.offsets) * targets.mask[..., None]
    tip_term = np.sum(d_tip ** 2, axis=1)
    off_term = np.sum(d_off ** 2, axis=(1, 2)) / lengths
    if pred.stop_logits is not None:
        x = pred.stop_logits
        bce = np.logaddexp(0.0, x) - targets.stop * x
    else:
        bce = binary_cross_entropy(pred.stop_probs, targets.stop)
    stop_term = bce.sum(axis=1)
    per_sample = weights.tip * tip_term + weights.offset * off_term + weights.stop * stop_term
    loss = float(per_sample.mean())
    grads = {'tip': 2.0 * weights.tip * d_tip / (scale * B), 'offsets': 2.0 * weights.offset * d_off / (lengths[:, None, None] * B)}
    if pred.stop_logits is not None:
        grads['stop_logits'] = weights.stop * (pred.stop_probs - targets.stop) / B
    else:
        p = pred.stop_probs
        s = targets.stop
        pos = np.divide(s, p, out=np.zeros_like(p), where=s > 0)
        neg = np.divide(1.0 - s, 1.0 - p, out=np.zeros_like(p), where=s < 1)
        grads['stop_probs'] = weights.stop * (neg - pos) / B
    if single:
        grads = {k: v[0] for k, v in grads.items()}
    return (loss, grads)
