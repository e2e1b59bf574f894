import numpy as np
from scipy.special import softmax


class sigmoid:

    @staticmethod
    def function(x):
        # split by sign so large |x| never overflows exp
        out = np.empty_like(x, dtype=float)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        e = np.exp(x[~pos])
        out[~pos] = e / (1.0 + e)
        return out

    @staticmethod
    def derivative_from_output(s):
        return s * (1.0 - s)


class tanh:

    @staticmethod
    def function(x):
        return np.tanh(x)

    @staticmethod
    def derivative_from_output(t):
        return 1.0 - t ** 2


def orthogonal_init(shape, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal(shape)
    u, _, v = np.linalg.svd(a, full_matrices=False)
    return u if u.shape == tuple(shape) else v


def scaled_normal(shape, rng: np.random.Generator, fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) / np.sqrt(fan_in)


def patchify(frames: np.ndarray, patch: int) -> np.ndarray:
    """(..., S, S) frames -> (..., n_patches, patch*patch), patches in row-major order."""
    *lead, height, width = frames.shape
    rows = height // patch
    cols = width // patch
    x = frames.reshape(*lead, rows, patch, cols, patch)
    x = np.moveaxis(x, -3, -2)
    return x.reshape(*lead, rows * cols, patch * patch)


def spatial_softargmax(frames: np.ndarray, gain: float) -> np.ndarray:
    """(..., S, S) -> (..., 2) expected (x, y) in [-1, 1] under softmax(gain * intensity)."""
    *lead, height, width = frames.shape
    weights = softmax(gain * frames.reshape(*lead, height * width), axis=-1)
    xs = (np.arange(width) + 0.5) * (2.0 / width) - 1.0
    ys = (np.arange(height) + 0.5) * (2.0 / height) - 1.0
    return np.stack([weights @ np.tile(xs, height), weights @ np.repeat(ys, width)], axis=-1)
