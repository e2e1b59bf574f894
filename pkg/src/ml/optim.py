# NAdam: Adam whose first-moment estimate looks one step ahead
#   m(t)  = b1 * m(t-1) + (1 - b1) * g
#   v(t)  = b2 * v(t-1) + (1 - b2) * g**2
#   m'(t) = b1 * m(t) / (1 - b1**(t+1)) + (1 - b1) * g / (1 - b1**t)
#   v'(t) = v(t) / (1 - b2**t)
#   theta(t) = theta(t-1) - lr * m'(t) / (sqrt(v'(t)) + eps)
import logging
from typing import Dict, Optional
import numpy as np
logger = logging.getLogger(__name__)


class NAdam:

    def __init__(self, params: Dict[str, np.ndarray], lr: float=1e-4, b1: float=0.9, b2: float=0.999, eps: float=1e-8):
        if not lr > 0:
            raise ValueError(f'learning rate must be positive, got {lr}')
        self.params = params
        self.lr = lr
        self.b1 = b1
        self.b2 = b2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: Dict[str, np.ndarray]):
        self.t += 1
        for name, p in self.params.items():
            g = grads[name]
            self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * g ** 2
            m_hat = self.b1 * self.m[name] / (1 - self.b1 ** (self.t + 1)) + (1 - self.b1) * g / (1 - self.b1 ** self.t)
            v_hat = self.v[name] / (1 - self.b2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class ReduceLROnPlateau:
    """Multiplies the optimizer's lr by `factor` once the monitored loss has
    not improved (relative threshold) for more than `patience` epochs."""

    def __init__(self, optimizer: NAdam, factor: float=0.1, patience: int=10, threshold: float=1e-4, min_lr: float=0.0):
        if not 0 < factor < 1:
            raise ValueError(f'factor must lie in (0, 1), got {factor}')
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.min_lr = min_lr
        self.best: Optional[float] = None
        self.bad_epochs = 0

    def step(self, metric: float) -> bool:
        if self.best is None or metric < self.best * (1 - self.threshold):
            self.best = metric
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs > self.patience:
            new_lr = max(self.optimizer.lr * self.factor, self.min_lr)
            logger.debug(f'Reducing learning rate {self.optimizer.lr:.3g} -> {new_lr:.3g}')
            self.optimizer.lr = new_lr
            self.bad_epochs = 0
            return True
        return False


def global_norm(grads: Dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum((np.sum(g ** 2) for g in grads.values()))))


def clip_by_global_norm(grads: Dict[str, np.ndarray], max_norm: float) -> Dict[str, np.ndarray]:
    norm = global_norm(grads)
    if max_norm <= 0 or norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}
