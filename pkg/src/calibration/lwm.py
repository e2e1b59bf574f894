"""Local weighted mean (LWM) undistortion field.

Every control point carries a second-order bivariate polynomial fitted over its
n nearest neighbours, expressed in coordinates centred on the control point and
scaled by its influence radius. A query is the weighted blend of the local
polynomials whose support contains it.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, NamedTuple, Optional, Sequence, Tuple, Union
import numpy as np
from scipy.spatial import ConvexHull, cKDTree
from scipy.spatial import QhullError
from src.errors import DomainError, InsufficientPoints, OutsideSupport, RankDeficientNeighborhood
from src.geometry import Polyline2D, as_points, as_vector
logger = logging.getLogger(__name__)

N_COEFFS = 6
DEFAULT_NEIGHBORHOOD = 12


class Correspondence2D2D(NamedTuple):
    distorted: np.ndarray
    true_pos: np.ndarray


def quadratic_basis(uv: np.ndarray) -> np.ndarray:
    u = uv[:, 0]
    v = uv[:, 1]
    return np.column_stack([np.ones(len(uv)), u, v, u * v, u * u, v * v])


def split_correspondences(correspondences: Union[Sequence[Correspondence2D2D], Tuple[np.ndarray, np.ndarray]]) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(correspondences, tuple) and len(correspondences) == 2 and np.ndim(correspondences[0]) == 2:
        distorted, true_pos = correspondences
    else:
        distorted = [c[0] for c in correspondences]
        true_pos = [c[1] for c in correspondences]
    if len(distorted) == 0:
        return (np.zeros((0, 2)), np.zeros((0, 2)))
    return (as_points(distorted, 2, 'distorted points'), as_points(true_pos, 2, 'true points'))


@dataclass(frozen=True)
class LwmModel:
    centers: np.ndarray
    coeffs_x: np.ndarray
    coeffs_y: np.ndarray
    radii: np.ndarray
    neighborhood: int = DEFAULT_NEIGHBORHOOD

    def __post_init__(self):
        if len(self.centers) < self.neighborhood:
            raise InsufficientPoints(f'LWM model needs at least {self.neighborhood} control points, got {len(self.centers)}')
        if np.any(self.radii <= 0):
            raise DomainError('LWM influence radii must be positive')

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def tree(self) -> cKDTree:
        cached = self.__dict__.get('_tree')
        if cached is None:
            cached = cKDTree(self.centers)
            object.__setattr__(self, '_tree', cached)
        return cached

    def inside_hull(self, points: np.ndarray) -> np.ndarray:
        equations = self.__dict__.get('_hull_equations')
        if equations is None:
            try:
                equations = ConvexHull(self.centers).equations
            except QhullError:
                equations = np.zeros((0, 3))
            object.__setattr__(self, '_hull_equations', equations)
        if len(equations) == 0:
            lo = self.centers.min(axis=0)
            hi = self.centers.max(axis=0)
            return np.all((points >= lo) & (points <= hi), axis=1)
        return np.all(points @ equations[:, :2].T + equations[:, 2] <= 1e-9, axis=1)

    def to_dict(self) -> Dict[str, Any]:
        return {'neighborhood': self.neighborhood, 'centers': self.centers.tolist(), 'radii': self.radii.tolist(), 'coeffs_x': self.coeffs_x.tolist(), 'coeffs_y': self.coeffs_y.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'LwmModel':
        return cls(centers=np.asarray(data['centers'], dtype=float).reshape(-1, 2), coeffs_x=np.asarray(data['coeffs_x'], dtype=float).reshape(-1, N_COEFFS), coeffs_y=np.asarray(data['coeffs_y'], dtype=float).reshape(-1, N_COEFFS), radii=np.asarray(data['radii'], dtype=float).reshape(-1), neighborhood=int(data.get('neighborhood', DEFAULT_NEIGHBORHOOD)))


def fit_lwm(correspondences, neighborhood_n: int=DEFAULT_NEIGHBORHOOD) -> LwmModel:
    distorted, true_pos = split_correspondences(correspondences)
    if neighborhood_n < N_COEFFS:
        raise InsufficientPoints(f'neighbourhood size {neighborhood_n} is below the {N_COEFFS} coefficients of a quadratic')
    if len(distorted) < neighborhood_n:
        raise InsufficientPoints(f'{len(distorted)} correspondences for a neighbourhood of {neighborhood_n}')
    if len(np.unique(distorted, axis=0)) != len(distorted):
        raise DomainError('distorted control points must be distinct')
    tree = cKDTree(distorted)
    dists, idx = tree.query(distorted, k=neighborhood_n)
    radii = dists[:, -1].copy()
    coeffs_x = np.empty((len(distorted), N_COEFFS))
    coeffs_y = np.empty((len(distorted), N_COEFFS))
    for i, center in enumerate(distorted):
        if radii[i] <= 0:
            raise RankDeficientNeighborhood(f'control point {i} has a zero-radius neighbourhood')
        uv = (distorted[idx[i]] - center) / radii[i]
        basis = quadratic_basis(uv)
        solution, _, rank, _ = np.linalg.lstsq(basis, true_pos[idx[i]], rcond=None)
        if rank < N_COEFFS:
            raise RankDeficientNeighborhood(f'neighbourhood of control point {i} at {center.tolist()} has rank {rank}/{N_COEFFS}')
        coeffs_x[i] = solution[:, 0]
        coeffs_y[i] = solution[:, 1]
    logger.info(f'Fitted LWM field over {len(distorted)} control points (n={neighborhood_n}, mean radius {radii.mean():.2f} px)')
    return LwmModel(centers=distorted, coeffs_x=coeffs_x, coeffs_y=coeffs_y, radii=radii, neighborhood=neighborhood_n)


def undistort_points(model: LwmModel, points: np.ndarray) -> np.ndarray:
    pts = as_points(points, 2)
    outside = ~model.inside_hull(pts)
    if np.any(outside):
        logger.warning(f'{int(outside.sum())} of {len(pts)} point(s) lie outside the LWM control hull (extrapolating)')
    r_max = float(model.radii.max())
    result = np.empty_like(pts)
    for k, (p, candidates) in enumerate(zip(pts, model.tree.query_ball_point(pts, r_max))):
        candidates = np.asarray(sorted(candidates), dtype=int)
        if len(candidates) == 0:
            raise OutsideSupport(f'point {p.tolist()} lies outside every LWM influence radius')
        radii = model.radii[candidates]
        offsets = p - model.centers[candidates]
        weights = np.clip(1.0 - np.linalg.norm(offsets, axis=1) / radii, 0.0, None) ** 2
        total = weights.sum()
        if total <= 0.0:
            raise OutsideSupport(f'point {p.tolist()} lies outside every LWM influence radius')
        basis = quadratic_basis(offsets / radii[:, None])
        x = np.einsum('ij,ij->i', basis, model.coeffs_x[candidates])
        y = np.einsum('ij,ij->i', basis, model.coeffs_y[candidates])
        result[k] = (weights @ x / total, weights @ y / total)
    return result


def undistort_point(model: LwmModel, p) -> np.ndarray:
    return undistort_points(model, as_vector(p, 2, 'pixel')[None, :])[0]


def undistort_polyline(model: Optional[LwmModel], poly: Polyline2D) -> Polyline2D:
    if model is None:
        return poly
    return Polyline2D(undistort_points(model, poly.points), view_id=poly.view_id, frame_index=poly.frame_index)
