"""Tip plus cumulative spherical offsets representation of a 3D curve."""
import logging
from dataclasses import dataclass
from typing import Any, Dict
import numpy as np
from src.errors import DegenerateCurve, DomainError, NonFiniteInput, RadiusTooLarge
from src.geometry import ENDPOINT_TOL, Curve3D, angles_to_directions, as_vector, canonicalize_angles, directions_to_angles, resample_polyline, wrap_angle
logger = logging.getLogger(__name__)

DEFAULT_RADIUS_MM = 2.0


@dataclass(frozen=True)
class SphericalCurve:
    tip: np.ndarray
    radius: float
    offsets: np.ndarray

    def __post_init__(self):
        tip = as_vector(self.tip, 3, 'tip')
        offsets = np.asarray(self.offsets, dtype=float).reshape(-1, 2)
        if not self.radius > 0:
            raise DomainError(f'radius must be positive, got {self.radius}')
        if not np.all(np.isfinite(offsets)):
            raise NonFiniteInput('offsets contain non-finite values')
        object.__setattr__(self, 'tip', tip)
        object.__setattr__(self, 'radius', float(self.radius))
        object.__setattr__(self, 'offsets', offsets)

    @property
    def length(self) -> int:
        return len(self.offsets)

    @property
    def parameter_count(self) -> int:
        return 3 + 1 + 2 * self.length

    def absolute_angles(self):
        cumulative = np.cumsum(self.offsets, axis=0)
        return canonicalize_angles(cumulative[:, 0], cumulative[:, 1])

    def to_dict(self) -> Dict[str, Any]:
        return {'tip': self.tip.tolist(), 'r': self.radius, 'offsets': self.offsets.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SphericalCurve':
        return cls(tip=data['tip'], radius=data['r'], offsets=np.asarray(data['offsets'], dtype=float).reshape(-1, 2))


def full_step_samples(curve: Curve3D, radius: float) -> np.ndarray:
    """Arclength samples at step `radius`, without a trailing partial step."""
    if curve.length < radius - ENDPOINT_TOL:
        raise RadiusTooLarge(f'radius {radius} exceeds curve arclength {curve.length:.6g}')
    samples = resample_polyline(curve.points, radius)
    if np.linalg.norm(samples[1] - samples[0]) < radius - ENDPOINT_TOL:
        raise RadiusTooLarge(f'no point of the curve lies a full step of {radius} from the tip')
    if len(samples) > 2 and np.linalg.norm(samples[-1] - samples[-2]) < radius - ENDPOINT_TOL:
        samples = samples[:-1]
    return samples


def encode(curve: Curve3D, radius: float=DEFAULT_RADIUS_MM) -> SphericalCurve:
    if not isinstance(curve, Curve3D):
        curve = Curve3D(curve)
    if len(curve) < 2:
        raise DegenerateCurve('cannot encode a curve with fewer than 2 points')
    if not radius > 0:
        raise DomainError(f'radius must be positive, got {radius}')
    samples = full_step_samples(curve, radius)
    theta, phi = directions_to_angles(np.diff(samples, axis=0))
    d_theta = np.diff(np.concatenate([[0.0], theta]))
    d_phi = wrap_angle(np.diff(np.concatenate([[0.0], phi])))
    logger.debug(f'Encoded curve of length {curve.length:.3f} mm into {len(theta)} segment(s) at r={radius}')
    return SphericalCurve(tip=samples[0], radius=radius, offsets=np.column_stack([d_theta, d_phi]))


def decode(sc: SphericalCurve) -> Curve3D:
    if sc.length == 0:
        raise DegenerateCurve('a spherical curve with no offsets decodes to a single point')
    theta, phi = sc.absolute_angles()
    steps = sc.radius * angles_to_directions(theta, phi)
    points = np.vstack([sc.tip, sc.tip + np.cumsum(steps, axis=0)])
    return Curve3D(points)
