"""Shape predictor: patch embedder, GRU core and tip/offset/stop heads.

Everything is plain numpy with hand-derived gradients. Vectors are rows:
z_t is (B, D), h_t is (B, H) and weights multiply from the right.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterator, List, Literal, Optional, Tuple, Union
import numpy as np
from pydantic import BaseModel, Field, model_validator
from src.curve_repr import SphericalCurve, decode
from src.errors import DimensionMismatch, DomainError, EmptySequence, ParseError, SchemaError
from src.geometry import Curve3D, drop_repeated_points
from src.ml.layers import orthogonal_init, patchify, scaled_normal, sigmoid, spatial_softargmax, tanh
logger = logging.getLogger(__name__)

GRU_GATES = ('z', 'r', 'c')


class ModelDims(BaseModel):
    frame_size: int = Field(64, ge=1)
    patch_size: int = Field(8, ge=1)
    feature_dim: int = Field(32, ge=1)
    hidden_dim: int = Field(32, ge=1)
    max_segments: int = Field(64, ge=1)
    representation: Literal['spherical', 'cartesian'] = 'spherical'
    radius: float = Field(2.0, gt=0, description='Step length r the offsets are decoded with (mm)')
    seq_len: int = Field(4, ge=1, description='Frames per input sequence the model was trained on')
    keypoint_gain: float = Field(20.0, gt=0, description='Softmax gain of the brightest-spot keypoint')
    tip_mean: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], description='Tip head output centre (mm)')
    tip_std: List[float] = Field(default_factory=lambda: [10.0, 10.0, 10.0], description='Tip head output unit per axis (mm)')

    @model_validator(mode='after')
    def check_patch(self):
        if self.frame_size % self.patch_size:
            raise ValueError(f'frame_size {self.frame_size} is not a multiple of patch_size {self.patch_size}')
        if len(self.tip_mean) != 3 or len(self.tip_std) != 3:
            raise ValueError('tip_mean and tip_std need three components')
        if min(self.tip_std) <= 0:
            raise ValueError(f'tip_std must be positive, got {self.tip_std}')
        return self

    @property
    def n_patches(self) -> int:
        return (self.frame_size // self.patch_size) ** 2

    @property
    def input_dim(self) -> int:
        """Pooled patch features plus the (x, y) keypoint."""
        return self.feature_dim + 2

    @property
    def offset_width(self) -> int:
        return 2 if self.representation == 'spherical' else 3


class ModelParams:

    def __init__(self, dims: ModelDims, arrays: Dict[str, np.ndarray]):
        self.dims = dims
        self.arrays = arrays

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def items(self):
        return self.arrays.items()

    def copy(self) -> 'ModelParams':
        return ModelParams(self.dims, {k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> Dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def to_dict(self) -> Dict[str, Any]:
        return {'dims': self.dims.model_dump(), 'arrays': {k: {'shape': list(v.shape), 'data': v.ravel().tolist()} for k, v in self.arrays.items()}}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ModelParams':
        dims = ModelDims(**data['dims'])
        arrays = {k: np.asarray(v['data'], dtype=float).reshape(v['shape']) for k, v in data['arrays'].items()}
        expected = init_params(dims, seed=0)
        for name, value in expected.items():
            if name not in arrays or arrays[name].shape != value.shape:
                raise SchemaError(f'checkpoint array {name!r} missing or has wrong shape')
        return cls(dims, arrays)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'ModelParams':
        try:
            with open(path, 'r') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f'invalid checkpoint JSON: {e}', context=str(path))
        return cls.from_dict(data)


def init_params(dims: ModelDims, seed: int=0) -> ModelParams:
    rng = np.random.default_rng(seed)
    P = dims.patch_size ** 2
    D = dims.feature_dim
    H = dims.hidden_dim
    M = dims.max_segments
    arrays = {'embed_W': scaled_normal((P, D), rng, P), 'embed_E': 0.1 * rng.standard_normal((dims.n_patches, D))}
    for gate in GRU_GATES:
        arrays[f'gru_W{gate}'] = scaled_normal((dims.input_dim, H), rng, dims.input_dim)
        arrays[f'gru_U{gate}'] = orthogonal_init((H, H), rng)
        arrays[f'gru_b{gate}'] = np.zeros(H)
    arrays['tip_W'] = scaled_normal((H, 3), rng, H)
    arrays['tip_b'] = np.zeros(3)
    arrays['off_W'] = 0.1 * scaled_normal((H, M * dims.offset_width), rng, H)
    arrays['off_b'] = np.zeros(M * dims.offset_width)
    arrays['stop_W'] = scaled_normal((H, M), rng, H)
    arrays['stop_b'] = np.zeros(M)
    return ModelParams(dims, arrays)


@dataclass
class PredictionOutput:
    tip: np.ndarray
    offsets: np.ndarray
    stop_probs: np.ndarray
    stop_logits: Optional[np.ndarray] = None

    @property
    def batched(self) -> bool:
        return self.tip.ndim == 2

    def sample(self, i: int) -> 'PredictionOutput':
        logits = None if self.stop_logits is None else self.stop_logits[i]
        return PredictionOutput(tip=self.tip[i], offsets=self.offsets[i], stop_probs=self.stop_probs[i], stop_logits=logits)


@dataclass
class ForwardCache:
    patches: np.ndarray
    activations: np.ndarray
    features: np.ndarray
    steps: List[Dict[str, np.ndarray]]
    hidden: np.ndarray


def _check_frames(params: ModelParams, frames: np.ndarray) -> np.ndarray:
    frames = np.asarray(frames, dtype=float)
    size = params.dims.frame_size
    if frames.shape[-2:] != (size, size) or frames.shape[-1] % params.dims.patch_size:
        raise DimensionMismatch(f'frames of shape {frames.shape[-2:]} do not match {size}x{size} with patch {params.dims.patch_size}')
    return frames


def embed_frames(params: ModelParams, frames: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(..., S, S) -> features (..., D + 2), plus patches and tanh activations for backprop.

    The last two features locate the brightest spot of the frame (the
    radiopaque tip marker) and carry no parameters.
    """
    frames = _check_frames(params, frames)
    patches = patchify(frames, params.dims.patch_size)
    activations = tanh.function(patches @ params['embed_W'] + params['embed_E'])
    keypoint = spatial_softargmax(frames, params.dims.keypoint_gain)
    return (np.concatenate([activations.mean(axis=-2), keypoint], axis=-1), patches, activations)


def embed_frame(params: ModelParams, frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame, dtype=float)
    if frame.ndim != 2:
        raise DimensionMismatch(f'expected a single 2D frame, got shape {frame.shape}')
    return embed_frames(params, frame)[0]


def _gru_forward(params: ModelParams, z: np.ndarray, h_prev: np.ndarray) -> Dict[str, np.ndarray]:
    u = sigmoid.function(z @ params['gru_Wz'] + h_prev @ params['gru_Uz'] + params['gru_bz'])
    r = sigmoid.function(z @ params['gru_Wr'] + h_prev @ params['gru_Ur'] + params['gru_br'])
    c = tanh.function(z @ params['gru_Wc'] + (r * h_prev) @ params['gru_Uc'] + params['gru_bc'])
    h = (1.0 - u) * h_prev + u * c
    return {'z': z, 'h_prev': h_prev, 'u': u, 'r': r, 'c': c, 'h': h}


def gru_step(params: ModelParams, z_t: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    z_t = np.asarray(z_t, dtype=float)
    h_prev = np.asarray(h_prev, dtype=float)
    D, H = params['gru_Wz'].shape
    if z_t.shape[-1] != D:
        raise DimensionMismatch(f'input has dimension {z_t.shape[-1]}, GRU expects {D}')
    if h_prev.shape[-1] != H:
        raise DimensionMismatch(f'hidden state has dimension {h_prev.shape[-1]}, GRU expects {H}')
    return _gru_forward(params, z_t, h_prev)['h']


def heads(params: ModelParams, h: np.ndarray) -> PredictionOutput:
    dims = params.dims
    tip = np.asarray(dims.tip_mean) + np.asarray(dims.tip_std) * (h @ params['tip_W'] + params['tip_b'])
    offsets = (h @ params['off_W'] + params['off_b']).reshape(*h.shape[:-1], dims.max_segments, dims.offset_width)
    logits = h @ params['stop_W'] + params['stop_b']
    return PredictionOutput(tip=tip, offsets=offsets, stop_probs=sigmoid.function(np.atleast_1d(logits)).reshape(logits.shape), stop_logits=logits)


def forward_batch(params: ModelParams, frames: np.ndarray) -> Tuple[PredictionOutput, ForwardCache]:
    """frames: (B, T, S, S)."""
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 4:
        raise DimensionMismatch(f'expected (batch, time, S, S) frames, got shape {frames.shape}')
    if frames.shape[1] == 0:
        raise EmptySequence('a frame sequence needs at least one frame')
    features, patches, activations = embed_frames(params, frames)
    h = np.zeros((frames.shape[0], params.dims.hidden_dim))
    steps = []
    for t in range(frames.shape[1]):
        step = _gru_forward(params, features[:, t], h)
        steps.append(step)
        h = step['h']
    return (heads(params, h), ForwardCache(patches=patches, activations=activations, features=features, steps=steps, hidden=h))


def forward(params: ModelParams, frames: np.ndarray) -> PredictionOutput:
    frames = np.asarray(frames, dtype=float)
    if frames.ndim == 3:
        if len(frames) == 0:
            raise EmptySequence('a frame sequence needs at least one frame')
        return forward_batch(params, frames[None])[0].sample(0)
    return forward_batch(params, frames)[0]


def backward(params: ModelParams, cache: ForwardCache, grad_tip: np.ndarray, grad_offsets: np.ndarray, grad_logits: np.ndarray) -> Dict[str, np.ndarray]:
    """Backpropagate head-output gradients through heads, GRU (in time) and embedder."""
    dims = params.dims
    grads = params.zeros_like()
    h = cache.hidden
    d_tip = np.asarray(dims.tip_std) * grad_tip
    d_off = grad_offsets.reshape(len(h), -1)
    grads['tip_W'] = h.T @ d_tip
    grads['tip_b'] = d_tip.sum(axis=0)
    grads['off_W'] = h.T @ d_off
    grads['off_b'] = d_off.sum(axis=0)
    grads['stop_W'] = h.T @ grad_logits
    grads['stop_b'] = grad_logits.sum(axis=0)
    dh = d_tip @ params['tip_W'].T + d_off @ params['off_W'].T + grad_logits @ params['stop_W'].T
    d_features = np.zeros_like(cache.features)
    for t in range(len(cache.steps) - 1, -1, -1):
        s = cache.steps[t]
        z, h_prev, u, r, c = (s['z'], s['h_prev'], s['u'], s['r'], s['c'])
        dc = dh * u
        du = dh * (c - h_prev)
        dh_prev = dh * (1.0 - u)
        dc_pre = dc * tanh.derivative_from_output(c)
        grads['gru_Wc'] += z.T @ dc_pre
        grads['gru_Uc'] += (r * h_prev).T @ dc_pre
        grads['gru_bc'] += dc_pre.sum(axis=0)
        d_rh = dc_pre @ params['gru_Uc'].T
        dr_pre = d_rh * h_prev * sigmoid.derivative_from_output(r)
        dh_prev += d_rh * r
        du_pre = du * sigmoid.derivative_from_output(u)
        grads['gru_Wr'] += z.T @ dr_pre
        grads['gru_Ur'] += h_prev.T @ dr_pre
        grads['gru_br'] += dr_pre.sum(axis=0)
        grads['gru_Wz'] += z.T @ du_pre
        grads['gru_Uz'] += h_prev.T @ du_pre
        grads['gru_bz'] += du_pre.sum(axis=0)
        d_features[:, t] = dc_pre @ params['gru_Wc'].T + dr_pre @ params['gru_Wr'].T + du_pre @ params['gru_Wz'].T
        dh = dh_prev + dr_pre @ params['gru_Ur'].T + du_pre @ params['gru_Uz'].T
    n_patches = cache.activations.shape[-2]
    d_pooled = d_features[..., :dims.feature_dim]
    d_pre = (d_pooled[:, :, None, :] / n_patches) * tanh.derivative_from_output(cache.activations)
    grads['embed_W'] = cache.patches.reshape(-1, cache.patches.shape[-1]).T @ d_pre.reshape(-1, d_pre.shape[-1])
    grads['embed_E'] = d_pre.sum(axis=(0, 1))
    return grads


def stop_length(stop_probs: np.ndarray, stop_threshold: float) -> int:
    hits = np.nonzero(stop_probs >= stop_threshold)[0]
    index = int(hits[0]) if len(hits) else int(np.argmax(stop_probs))
    return index + 1


def decode_prediction(out: PredictionOutput, r: float, stop_threshold: float=0.5, representation: str='spherical') -> Curve3D:
    if not 0.0 < stop_threshold < 1.0:
        raise DomainError(f'stop_threshold must lie in (0, 1), got {stop_threshold}')
    length = stop_length(np.asarray(out.stop_probs), stop_threshold)
    offsets = np.asarray(out.offsets)
    if representation == 'spherical':
        return decode(SphericalCurve(tip=out.tip, radius=r, offsets=offsets[:length, :2]))
    points = np.vstack([out.tip, out.tip + r * offsets[:length, :3]])
    points = drop_repeated_points(points)
    if len(points) < 2:
        # collapsed prediction: a single step along +z
        points = np.vstack([out.tip, out.tip + [0.0, 0.0, r]])
    return Curve3D(points)
