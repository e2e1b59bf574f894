"""Camera model, spherical/Cartesian conversions and arclength utilities.

Curves and polylines are piecewise linear between their vertices. Everything here
is a pure function over immutable values.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, List, NamedTuple, Optional, Tuple, Union
import numpy as np
from src.errors import DegenerateCurve, DeltaTooLarge, DomainError, InvariantError, NonFiniteInput, PointBehindCamera, ZeroVector
logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, List[float], Tuple[float, ...]]
VIEW_IDS = ('A', 'B')
ENDPOINT_TOL = 1e-9


def as_vector(values: ArrayLike, dim: int, name: str='vector') -> np.ndarray:
    vec = np.asarray(values, dtype=float).reshape(-1)
    if vec.shape != (dim,):
        raise DomainError(f'{name} must have {dim} components, got shape {vec.shape}')
    if not np.all(np.isfinite(vec)):
        raise NonFiniteInput(f'{name} has non-finite components: {vec}')
    return vec


def as_points(values: Any, dim: Optional[int]=None, name: str='points') -> np.ndarray:
    pts = np.asarray(values, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2 or (dim is not None and pts.shape[1] != dim):
        raise DomainError(f'{name} must be an (N, {dim}) array, got shape {pts.shape}')
    if not np.all(np.isfinite(pts)):
        raise NonFiniteInput(f'{name} contain non-finite values')
    return pts


def dehomogenize(h: np.ndarray) -> np.ndarray:
    return h[..., :-1] / h[..., -1:]


def homogenize(pts: np.ndarray) -> np.ndarray:
    return np.concatenate([pts, np.ones(pts.shape[:-1] + (1,))], axis=-1)


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


@dataclass(frozen=True)
class CameraParameters:
    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    P: Optional[np.ndarray] = None
    distortion: Optional[Any] = None
    image_size: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float).reshape(3, 3)
        R = np.asarray(self.R, dtype=float).reshape(3, 3)
        t = as_vector(self.t, 3, 't')
        if not np.allclose(np.tril(K, -1), 0.0, atol=1e-9) or np.any(np.diag(K) <= 0):
            raise DomainError(f'K must be upper-triangular with positive diagonal, got {K.tolist()}')
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or np.linalg.det(R) <= 0:
            raise DomainError('R must be a proper rotation (orthonormal, det +1)')
        P = K @ np.hstack([R, t[:, None]]) if self.P is None else np.asarray(self.P, dtype=float).reshape(3, 4)
        if np.linalg.matrix_rank(P) < 3:
            raise DomainError('P must have rank 3')
        object.__setattr__(self, 'K', K)
        object.__setattr__(self, 'R', R)
        object.__setattr__(self, 't', t)
        object.__setattr__(self, 'P', P)

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t

    def depth(self, points: np.ndarray) -> np.ndarray:
        return points @ self.R[2] + self.t[2]

    def ray_direction(self, pixel: np.ndarray) -> np.ndarray:
        d = self.R.T @ np.linalg.solve(self.K, np.append(pixel, 1.0))
        return d / np.linalg.norm(d)

    def scaled(self, factor: float) -> 'CameraParameters':
        S = np.diag([factor, factor, 1.0])
        size = None
        if self.image_size is not None:
            size = (int(round(self.image_size[0] * factor)), int(round(self.image_size[1] * factor)))
        return CameraParameters(K=S @ self.K, R=self.R, t=self.t, P=S @ self.P, image_size=size)


def project(camera: CameraParameters, p: ArrayLike) -> np.ndarray:
    point = as_vector(p, 3, 'point')
    depth = camera.depth(point)
    if depth <= 0:
        raise PointBehindCamera(f'point {point.tolist()} has depth {depth:.6g} <= 0')
    h = camera.P @ np.append(point, 1.0)
    return h[:2] / h[2]


def project_points(camera: CameraParameters, points: ArrayLike) -> np.ndarray:
    pts = as_points(points, 3)
    depth = camera.depth(pts)
    if np.any(depth <= 0):
        bad = int(np.argmax(depth <= 0))
        raise PointBehindCamera(f'point {bad} has depth {depth[bad]:.6g} <= 0')
    return dehomogenize(homogenize(pts) @ camera.P.T)


class SphericalPoint(NamedTuple):
    r: float
    theta: float
    phi: float


def spherical_to_cartesian(s: SphericalPoint) -> np.ndarray:
    r, theta, phi = (float(s[0]), float(s[1]), float(s[2]))
    if not all(np.isfinite([r, theta, phi])):
        raise NonFiniteInput(f'non-finite spherical point {tuple(s)}')
    if not 0.0 <= theta <= np.pi:
        raise DomainError(f'theta={theta} outside [0, pi]')
    if r < 0:
        raise DomainError(f'r={r} is negative')
    sin_theta = np.sin(theta)
    return np.array([r * sin_theta * np.cos(phi), r * sin_theta * np.sin(phi), r * np.cos(theta)])


def wrap_angle(phi: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    # maps into (-pi, pi]
    wrapped = np.pi - np.mod(np.pi - np.asarray(phi, dtype=float), 2 * np.pi)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


def cartesian_to_spherical(v: ArrayLike) -> SphericalPoint:
    vec = as_vector(v, 3, 'vector')
    r = float(np.linalg.norm(vec))
    if r == 0.0:
        raise ZeroVector('cannot convert the zero vector to spherical coordinates')
    rho = float(np.hypot(vec[0], vec[1]))
    theta = float(np.arctan2(rho, vec[2]))
    phi = 0.0 if rho == 0.0 else wrap_angle(np.arctan2(vec[1], vec[0]))
    return SphericalPoint(r, theta, phi)


def directions_to_angles(directions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    rho = np.hypot(directions[:, 0], directions[:, 1])
    theta = np.arctan2(rho, directions[:, 2])
    phi = np.where(rho == 0.0, 0.0, wrap_angle(np.arctan2(directions[:, 1], directions[:, 0])))
    return (theta, phi)


def canonicalize_angles(theta: np.ndarray, phi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    theta = np.mod(np.asarray(theta, dtype=float), 2 * np.pi)
    flip = theta > np.pi
    theta = np.where(flip, 2 * np.pi - theta, theta)
    phi = wrap_angle(np.where(flip, np.asarray(phi, dtype=float) + np.pi, phi))
    return (theta, phi)


def angles_to_directions(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    sin_theta = np.sin(theta)
    return np.stack([sin_theta * np.cos(phi), sin_theta * np.sin(phi), np.cos(theta)], axis=-1)


def segment_lengths(points: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.diff(points, axis=0), axis=1)


def cumulative_arclength(points: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(segment_lengths(points))])


def drop_repeated_points(points: np.ndarray, tol: float=1e-12) -> np.ndarray:
    if len(points) < 2:
        return points
    keep = np.concatenate([[True], segment_lengths(points) > tol])
    return points[keep]


@dataclass(frozen=True)
class Polyline2D:
    points: np.ndarray
    view_id: str = 'A'
    frame_index: int = 0

    def __post_init__(self):
        pts = as_points(self.points, 2, 'polyline points')
        if len(pts) < 2:
            raise DegenerateCurve(f'polyline needs at least 2 points, got {len(pts)}', context=f'frame {self.frame_index} view {self.view_id}')
        if np.any(segment_lengths(pts) == 0.0):
            raise InvariantError('polyline has identical consecutive points', context=f'frame {self.frame_index} view {self.view_id}')
        if self.view_id not in VIEW_IDS:
            raise DomainError(f'view_id must be one of {VIEW_IDS}, got {self.view_id!r}')
        object.__setattr__(self, 'points', pts)

    @property
    def length(self) -> float:
        return float(segment_lengths(self.points).sum())

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class Curve3D:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
            raise DegenerateCurve(f'a 3D curve needs at least 2 points of dimension 3, got shape {pts.shape}')
        if not np.all(np.isfinite(pts)):
            raise NonFiniteInput('curve contains non-finite coordinates')
        if np.any(segment_lengths(pts) <= 0.0):
            raise DegenerateCurve('cumulative arclength must be strictly increasing (repeated point)')
        object.__setattr__(self, 'points', pts)

    @property
    def arclength(self) -> np.ndarray:
        return cumulative_arclength(self.points)

    @property
    def length(self) -> float:
        return float(segment_lengths(self.points).sum())

    @property
    def tip(self) -> np.ndarray:
        return self.points[0]

    def __len__(self) -> int:
        return len(self.points)

    def resample(self, delta_u: float) -> 'Curve3D':
        return arclength_resample(self, delta_u)

    def transformed(self, R: np.ndarray, t: np.ndarray) -> 'Curve3D':
        return Curve3D(self.points @ np.asarray(R).T + np.asarray(t))


def _exit_parameter(a: np.ndarray, d: np.ndarray, center: np.ndarray, radius: float) -> float:
    # larger root of |a + s d - center| = radius, given |a - center| < radius
    w = a - center
    A = float(d @ d)
    B = float(d @ w)
    C = float(w @ w) - radius * radius
    disc = max(B * B - A * C, 0.0)
    root = np.sqrt(disc)
    if B >= 0:
        return -C / (B + root) if B + root > 0 else 0.0
    return (-B + root) / A


def resample_polyline(points: np.ndarray, delta: float) -> np.ndarray:
    """Walk a polyline in steps of exactly `delta` (Euclidean) from its first vertex.

    Each new sample is the first point further along the polyline whose distance
    from the previous sample equals `delta`. The last vertex is kept as a final,
    shorter step when it is not already reached.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        raise DegenerateCurve(f'cannot resample a polyline with {len(pts)} point(s)')
    if not delta > 0:
        raise DomainError(f'sampling step must be positive, got {delta}')
    total = float(segment_lengths(pts).sum())
    if total < delta - ENDPOINT_TOL:
        raise DeltaTooLarge(f'step {delta} exceeds polyline arclength {total:.6g}')
    samples = [pts[0]]
    current = pts[0]
    seg = 0
    start = pts[0]
    n_seg = len(pts) - 1
    while seg < n_seg:
        a = start
        b = pts[seg + 1]
        dist = np.linalg.norm(b - current)
        if abs(dist - delta) <= ENDPOINT_TOL:
            # vertex already sits one step away; keep it exactly
            current = b
            samples.append(current)
            seg += 1
            start = current
            continue
        if dist > delta:
            s = _exit_parameter(a, b - a, current, delta)
            current = a + s * (b - a)
            samples.append(current)
            start = current
            continue
        seg += 1
        start = pts[seg] if seg < n_seg else start
    end = pts[-1]
    if np.linalg.norm(end - samples[-1]) > ENDPOINT_TOL:
        samples.append(end)
    return np.array(samples)


def arclength_resample(c: Union[Curve3D, np.ndarray], delta_u: float) -> Curve3D:
    points = c.points if isinstance(c, Curve3D) else np.asarray(c, dtype=float)
    if points.ndim != 2 or len(points) < 2:
        raise DegenerateCurve(f'cannot resample a curve with {len(points)} point(s)')
    return Curve3D(resample_polyline(points, delta_u))


def point_to_polyline_distance(queries: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    a = polyline[:-1]
    d = np.diff(polyline, axis=0)
    dd = np.einsum('ij,ij->i', d, d)
    diff = queries[:, None, :] - a[None, :, :]
    s = np.clip(np.einsum('qsj,sj->qs', diff, d) / dd[None, :], 0.0, 1.0)
    closest = a[None, :, :] + s[..., None] * d[None, :, :]
    return np.linalg.norm(queries[:, None, :] - closest, axis=2).min(axis=1)


def rotation_matrix(axis: ArrayLike, angle: float) -> np.ndarray:
    k = as_vector(axis, 3, 'axis')
    k = k / np.linalg.norm(k)
    Kx = skew(k)
    return np.eye(3) + np.sin(angle) * Kx + (1 - np.cos(angle)) * (Kx @ Kx)
