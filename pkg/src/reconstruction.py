"""Epipolar matching and triangulation of bi-planar guidewire annotations.

View A drives the arclength parameterization; every sample of its polyline is
paired with a crossing of its epipolar line and the view-B polyline. Multiple
crossings (loops) are resolved by a monotone dynamic-programming alignment.
"""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union
import numpy as np
from scipy.linalg import null_space
from scipy.ndimage import gaussian_filter1d
from src.calibration.lwm import undistort_polyline
from src.errors import BehindCamera, CoincidentCenters, DegenerateCurve, DomainError, EmptyCurve, IllConditioned, NonFiniteInput, NoOverlap
from src.geometry import CameraParameters, Curve3D, Polyline2D, arclength_resample, cumulative_arclength, drop_repeated_points, point_to_polyline_distance, project_points, skew
logger = logging.getLogger(__name__)

MIN_RAY_ANGLE_DEG = 0.1
VERTEX_ON_LINE_PX = 1e-7
ENDPOINT_SNAP_PX = 2.0


def fundamental_from_projections(P_A: np.ndarray, P_B: np.ndarray) -> np.ndarray:
    P_A = np.asarray(P_A, dtype=float).reshape(3, 4)
    P_B = np.asarray(P_B, dtype=float).reshape(3, 4)
    center_a = null_space(P_A)[:, 0]
    epipole_b = P_B @ center_a
    if np.linalg.norm(epipole_b) <= 1e-10 * np.linalg.norm(P_B):
        raise CoincidentCenters('camera centers of both views coincide')
    F = skew(epipole_b) @ P_B @ np.linalg.pinv(P_A)
    U, s, Vt = np.linalg.svd(F)
    s[2] = 0.0
    F = U @ np.diag(s) @ Vt
    return F / np.linalg.norm(F)


@dataclass(frozen=True)
class StereoRig:
    cam_a: CameraParameters
    cam_b: CameraParameters
    fundamental: np.ndarray

    @classmethod
    def from_cameras(cls, cam_a: CameraParameters, cam_b: CameraParameters) -> 'StereoRig':
        return cls(cam_a=cam_a, cam_b=cam_b, fundamental=fundamental_from_projections(cam_a.P, cam_b.P))

    def camera(self, view_id: str) -> CameraParameters:
        return self.cam_a if view_id == 'A' else self.cam_b

    def transformed(self, R: np.ndarray, t: np.ndarray) -> 'StereoRig':
        """Rig seeing the world moved by x -> R x + t."""
        cams = []
        for cam in (self.cam_a, self.cam_b):
            R_new = cam.R @ R.T
            t_new = cam.t - R_new @ t
            cams.append(CameraParameters(K=cam.K, R=R_new, t=t_new, distortion=cam.distortion, image_size=cam.image_size))
        return StereoRig.from_cameras(cams[0], cams[1])


@dataclass
class MatchResult:
    points_a: np.ndarray
    points_b: np.ndarray
    s_a: np.ndarray
    s_b: np.ndarray
    residuals: np.ndarray
    dropped: List[float] = field(default_factory=list)

    @property
    def pairs(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.points_a, self.points_b))

    def __len__(self) -> int:
        return len(self.points_a)


@dataclass
class ReprojectionProfile:
    per_index_error_a: np.ndarray
    per_index_error_b: np.ndarray

    def __len__(self) -> int:
        return len(self.per_index_error_a)

    @property
    def max_error(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(max(self.per_index_error_a.max(), self.per_index_error_b.max()))


def _driver_samples(points: np.ndarray, delta_u_px: float) -> Tuple[np.ndarray, np.ndarray]:
    arclength = cumulative_arclength(points)
    total = arclength[-1]
    s = np.union1d(np.arange(0.0, total, delta_u_px), arclength)
    keep = np.concatenate([[True], np.diff(s) > 1e-9])
    s = s[keep]
    samples = np.column_stack([np.interp(s, arclength, points[:, k]) for k in range(points.shape[1])])
    return (s, samples)


def _line_crossings(line: np.ndarray, points: np.ndarray, arclength: np.ndarray) -> List[Tuple[float, np.ndarray, float]]:
    """Candidates on a polyline for one epipolar line as (s_b, point, residual px)."""
    d = points @ line[:2] + line[2]
    candidates = []
    d0 = d[:-1]
    d1 = d[1:]
    crossing = np.nonzero(d0 * d1 <= 0.0)[0]
    for j in crossing:
        denom = d0[j] - d1[j]
        t = 0.0 if denom == 0.0 else d0[j] / denom
        point = points[j] + t * (points[j + 1] - points[j])
        candidates.append((arclength[j] + t * (arclength[j + 1] - arclength[j]), point, 0.0))
    for j in np.nonzero(np.abs(d) <= VERTEX_ON_LINE_PX)[0]:
        candidates.append((arclength[j], points[j], float(abs(d[j]))))
    for j in (0, len(points) - 1):
        if abs(d[j]) <= ENDPOINT_SNAP_PX:
            candidates.append((arclength[j], points[j], float(abs(d[j]))))
    candidates.sort(key=lambda c: (c[0], c[2]))
    unique = []
    for cand in candidates:
        if unique and abs(cand[0] - unique[-1][0]) <= 1e-9:
            continue
        unique.append(cand)
    return unique


def match_polylines(rig: StereoRig, poly_a: Polyline2D, poly_b: Polyline2D, delta_u_px: float=1.0) -> MatchResult:
    if not delta_u_px > 0:
        raise DomainError(f'delta_u_px must be positive, got {delta_u_px}')
    s_drivers, drivers = _driver_samples(poly_a.points, delta_u_px)
    arclength_b = cumulative_arclength(poly_b.points)
    ratio = arclength_b[-1] / poly_a.length
    skip_penalty = (10.0 * delta_u_px) ** 2
    lines = np.column_stack([drivers, np.ones(len(drivers))]) @ rig.fundamental.T
    lines /= np.maximum(np.linalg.norm(lines[:, :2], axis=1), 1e-300)[:, None]

    node_driver, node_sa, node_sb, node_res, node_pts = ([], [], [], [], [])
    for i, line in enumerate(lines):
        for s_b, point, residual in _line_crossings(line, poly_b.points, arclength_b):
            node_driver.append(i)
            node_sa.append(s_drivers[i])
            node_sb.append(s_b)
            node_res.append(residual)
            node_pts.append(point)
    if not node_driver:
        raise NoOverlap(f'no epipolar line of view A meets the view-B polyline', context=f'frame {poly_a.frame_index}')
    node_driver = np.asarray(node_driver)
    node_sa = np.asarray(node_sa)
    node_sb = np.asarray(node_sb)
    node_res = np.asarray(node_res)

    # drivers_before[m]: drivers that own candidates and come before node m's driver
    has_candidates = np.zeros(len(drivers), dtype=bool)
    has_candidates[node_driver] = True
    owners_before = np.concatenate([[0], np.cumsum(has_candidates)])
    drivers_before = owners_before[node_driver]
    total_owners = int(has_candidates.sum())

    n = len(node_driver)
    best = np.empty(n)
    parent = np.full(n, -1)
    for m in range(n):
        cost = skip_penalty * drivers_before[m]
        prev = np.nonzero((node_driver[:m] < node_driver[m]) & (node_sb[:m] < node_sb[m]))[0]
        if len(prev):
            skipped = drivers_before[m] - drivers_before[prev] - 1
            step = node_sb[m] - node_sb[prev] - ratio * (node_sa[m] - node_sa[prev])
            totals = best[prev] + step ** 2 + skip_penalty * skipped
            k = int(np.argmin(totals))
            if totals[k] < cost:
                cost = totals[k]
                parent[m] = prev[k]
        best[m] = cost + node_res[m] ** 2
    final = best + skip_penalty * (total_owners - drivers_before - 1)
    m = int(np.argmin(final))
    chain = []
    while m >= 0:
        chain.append(m)
        m = parent[m]
    chain = np.asarray(chain[::-1])

    matched = np.zeros(len(drivers), dtype=bool)
    matched[node_driver[chain]] = True
    dropped = [float(s) for s in s_drivers[~matched]]
    if dropped:
        logger.warning(f'frame {poly_a.frame_index}: {len(dropped)} of {len(drivers)} view-A sample(s) without an epipolar match were dropped')
    return MatchResult(points_a=drivers[node_driver[chain]], points_b=np.asarray(node_pts)[chain], s_a=node_sa[chain], s_b=node_sb[chain], residuals=node_res[chain], dropped=dropped)


def _triangulation_systems(P_a: np.ndarray, P_b: np.ndarray, x_a: np.ndarray, x_b: np.ndarray) -> np.ndarray:
    A = np.stack([x_a[:, :1] * P_a[2] - P_a[0], x_a[:, 1:2] * P_a[2] - P_a[1], x_b[:, :1] * P_b[2] - P_b[0], x_b[:, 1:2] * P_b[2] - P_b[1]], axis=1)
    return A / np.linalg.norm(A, axis=2, keepdims=True)


def triangulate_points(rig: StereoRig, x_a: np.ndarray, x_b: np.ndarray) -> np.ndarray:
    x_a = np.asarray(x_a, dtype=float).reshape(-1, 2)
    x_b = np.asarray(x_b, dtype=float).reshape(-1, 2)
    if not (np.all(np.isfinite(x_a)) and np.all(np.isfinite(x_b))):
        raise NonFiniteInput('pixel coordinates must be finite')
    if len(x_a) == 0:
        return np.zeros((0, 3))
    rays_a = np.linalg.solve(rig.cam_a.K, np.column_stack([x_a, np.ones(len(x_a))]).T).T @ rig.cam_a.R
    rays_b = np.linalg.solve(rig.cam_b.K, np.column_stack([x_b, np.ones(len(x_b))]).T).T @ rig.cam_b.R
    cosines = np.abs(np.einsum('ij,ij->i', rays_a, rays_b)) / (np.linalg.norm(rays_a, axis=1) * np.linalg.norm(rays_b, axis=1))
    angles = np.degrees(np.arccos(np.clip(cosines, 0.0, 1.0)))
    if np.any(angles < MIN_RAY_ANGLE_DEG):
        bad = int(np.argmin(angles))
        raise IllConditioned(f'viewing rays of pair {bad} are {angles[bad]:.4f} deg apart (< {MIN_RAY_ANGLE_DEG})')
    _, _, Vt = np.linalg.svd(_triangulation_systems(rig.cam_a.P, rig.cam_b.P, x_a, x_b))
    X = Vt[:, -1, :]
    if np.any(np.abs(X[:, 3]) < 1e-12 * np.linalg.norm(X[:, :3], axis=1)):
        raise IllConditioned('triangulated point lies at infinity')
    points = X[:, :3] / X[:, 3:]
    for name, cam in (('A', rig.cam_a), ('B', rig.cam_b)):
        depth = cam.depth(points)
        if np.any(depth <= 0):
            bad = int(np.argmin(depth))
            raise BehindCamera(f'triangulated point {bad} lies behind camera {name} (depth {depth[bad]:.4g})')
    return points


def triangulate(rig: StereoRig, x_a, x_b) -> np.ndarray:
    return triangulate_points(rig, np.asarray(x_a, dtype=float)[None, :], np.asarray(x_b, dtype=float)[None, :])[0]


def smooth_samples(points: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian smoothing along the sample index with odd-reflected ends."""
    if sigma <= 0 or len(points) < 3:
        return points
    pad = int(min(len(points) - 1, np.ceil(4 * sigma)))
    head = 2 * points[0] - points[pad:0:-1]
    tail = 2 * points[-1] - points[-2:-pad - 2:-1]
    extended = np.vstack([head, points, tail])
    smoothed = gaussian_filter1d(extended, sigma, axis=0, mode='nearest')
    return smoothed[pad:pad + len(points)]


def reconstruct_curve(rig: StereoRig, poly_a: Polyline2D, poly_b: Polyline2D, delta_u: float=2.0, delta_u_px: float=1.0, smoothing_sigma: float=0.0) -> Curve3D:
    if not delta_u > 0:
        raise DomainError(f'delta_u must be positive, got {delta_u}')
    poly_a = undistort_polyline(rig.cam_a.distortion, poly_a)
    poly_b = undistort_polyline(rig.cam_b.distortion, poly_b)
    match = match_polylines(rig, poly_a, poly_b, delta_u_px)
    points = triangulate_points(rig, match.points_a, match.points_b)
    points = drop_repeated_points(smooth_samples(points, smoothing_sigma))
    if len(points) < 2:
        raise DegenerateCurve(f'only {len(points)} distinct triangulated point(s)', context=f'frame {poly_a.frame_index}')
    curve = arclength_resample(points, delta_u)
    logger.debug(f'frame {poly_a.frame_index}: {len(match)} matched pairs -> {len(curve)} samples')
    return curve


def reprojection_profile(rig: StereoRig, curve: Union[Curve3D, np.ndarray], poly_a: Polyline2D, poly_b: Polyline2D) -> ReprojectionProfile:
    points = curve.points if isinstance(curve, Curve3D) else np.asarray(curve, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        raise EmptyCurve('cannot profile an empty curve')
    errors = []
    for cam, poly in ((rig.cam_a, poly_a), (rig.cam_b, poly_b)):
        poly = undistort_polyline(cam.distortion, poly)
        errors.append(point_to_polyline_distance(project_points(cam, points), poly.points))
    return ReprojectionProfile(per_index_error_a=errors[0], per_index_error_b=errors[1])


def summarize_profiles(profiles: Iterable[ReprojectionProfile]) -> Dict[str, np.ndarray]:
    profiles = list(profiles)
    width = max((len(p) for p in profiles), default=0)
    summary = {'index': np.arange(width), 'count': np.zeros(width, dtype=int)}
    for view in ('a', 'b'):
        table = np.full((len(profiles), width), np.nan)
        for row, profile in enumerate(profiles):
            values = getattr(profile, f'per_index_error_{view}')
            table[row, :len(values)] = values
        counts = np.sum(~np.isnan(table), axis=0)
        summary['count'] = counts
        with np.errstate(invalid='ignore'):
            summary[f'mean_{view}'] = np.where(counts > 0, np.nansum(table, axis=0) / np.maximum(counts, 1), 0.0)
            centered = np.where(np.isnan(table), 0.0, table - summary[f'mean_{view}'])
            summary[f'std_{view}'] = np.sqrt(np.sum(centered ** 2, axis=0) / np.maximum(counts, 1))
    return summary


def write_profile_csv(path: Union[str, Path], rows: Iterable[Tuple[int, ReprojectionProfile]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['frame', 'index', 'err_a_px', 'err_b_px'])
        for frame, profile in rows:
            for index, (ea, eb) in enumerate(zip(profile.per_index_error_a, profile.per_index_error_b)):
                writer.writerow([frame, index, f'{ea:.6f}', f'{eb:.6f}'])
    return path


def write_profile_summary_csv(path: Union[str, Path], summary: Dict[str, np.ndarray]) -> Path:
    path = Path(path)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['index', 'count', 'mean_a_px', 'std_a_px', 'mean_b_px', 'std_b_px'])
        for k in summary['index']:
            writer.writerow([int(k), int(summary['count'][k]), f"{summary['mean_a'][k]:.6f}", f"{summary['std_a'][k]:.6f}", f"{summary['mean_b'][k]:.6f}", f"{summary['std_b'][k]:.6f}"])
    return path
