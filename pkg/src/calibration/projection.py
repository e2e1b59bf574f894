"""Projection-matrix estimation for one fluoroscope view.

DLT on Hartley-normalized coordinates, seeded RANSAC around it, damped
Gauss-Newton refinement over the 11 free parameters of P and RQ decomposition
into intrinsics and extrinsics.
"""
import logging
from typing import Any, Dict, NamedTuple, Optional, Sequence, Tuple, Union
import numpy as np
from pydantic import BaseModel, Field
from scipy.linalg import null_space, rq
from src.calibration.lwm import LwmModel, fit_lwm, undistort_points
from src.errors import DegenerateConfiguration, DivergedError, GeometryError, InsufficientPoints, NoConsensus, SingularLeftBlock
from src.geometry import CameraParameters, as_points, homogenize
logger = logging.getLogger(__name__)

MIN_CORRESPONDENCES = 6
CONDITION_LIMIT = 1e12


class Correspondence3D2D(NamedTuple):
    world: np.ndarray
    image: np.ndarray


class RansacConfig(BaseModel):
    iterations: int = Field(1000, ge=1)
    inlier_threshold: float = Field(2.0, gt=0)
    min_sample: int = Field(MIN_CORRESPONDENCES, ge=MIN_CORRESPONDENCES)
    seed: int = 0


CorrespondenceInput = Union[Sequence[Correspondence3D2D], Tuple[np.ndarray, np.ndarray]]


def split_correspondences(correspondences: CorrespondenceInput) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(correspondences, tuple) and len(correspondences) == 2 and np.ndim(correspondences[0]) == 2:
        world, image = correspondences
    else:
        world = [c[0] for c in correspondences]
        image = [c[1] for c in correspondences]
    if len(world) == 0:
        return (np.zeros((0, 3)), np.zeros((0, 2)))
    world = as_points(world, 3, 'world points')
    image = as_points(image, 2, 'image points')
    if len(world) != len(image):
        raise InsufficientPoints(f'{len(world)} world points but {len(image)} image points')
    return (world, image)


def normalization_transform(points: np.ndarray) -> np.ndarray:
    dim = points.shape[1]
    centroid = points.mean(axis=0)
    mean_dist = np.linalg.norm(points - centroid, axis=1).mean()
    if mean_dist <= 0:
        raise DegenerateConfiguration('all points coincide')
    scale = np.sqrt(dim) / mean_dist
    T = np.eye(dim + 1)
    T[:dim, :dim] *= scale
    T[:dim, dim] = -scale * centroid
    return T


def normalize_projection(P: np.ndarray, world: Optional[np.ndarray]=None) -> np.ndarray:
    """Scale P so its third row's leading block has unit norm and the points sit at positive depth."""
    P = P / np.linalg.norm(P[2, :3])
    if world is not None and len(world):
        depth = homogenize(world) @ P[2]
        if np.median(depth) < 0:
            P = -P
    elif np.linalg.det(P[:, :3]) < 0:
        P = -P
    return P


def reprojection_errors(P: np.ndarray, world: np.ndarray, image: np.ndarray) -> np.ndarray:
    h = homogenize(world) @ P.T
    w = h[:, 2]
    errors = np.full(len(world), np.inf)
    front = w > 0
    errors[front] = np.linalg.norm(h[front, :2] / w[front, None] - image[front], axis=1)
    return errors


def rms_reprojection_error(P: np.ndarray, correspondences: CorrespondenceInput) -> float:
    world, image = split_correspondences(correspondences)
    return float(np.sqrt(np.mean(reprojection_errors(P, world, image) ** 2)))


def _dlt_arrays(world: np.ndarray, image: np.ndarray) -> np.ndarray:
    if len(world) < MIN_CORRESPONDENCES:
        raise InsufficientPoints(f'DLT needs at least {MIN_CORRESPONDENCES} correspondences, got {len(world)}')
    T3 = normalization_transform(world)
    T2 = normalization_transform(image)
    Xn = homogenize(world) @ T3.T
    xn = (homogenize(image) @ T2.T)[:, :2]
    n = len(world)
    A = np.zeros((2 * n, 12))
    A[0::2, 0:4] = Xn
    A[0::2, 8:12] = -xn[:, :1] * Xn
    A[1::2, 4:8] = Xn
    A[1::2, 8:12] = -xn[:, 1:2] * Xn
    _, s, Vt = np.linalg.svd(A)
    condition = s[0] / s[-2] if s[-2] > 0 else np.inf
    if condition > CONDITION_LIMIT:
        raise DegenerateConfiguration(f'DLT design matrix condition number {condition:.3g} exceeds {CONDITION_LIMIT:.0e} (coplanar points?)')
    P_norm = Vt[-1].reshape(3, 4)
    P = np.linalg.solve(T2, P_norm @ T3)
    return normalize_projection(P, world)


def dlt(correspondences: CorrespondenceInput) -> np.ndarray:
    world, image = split_correspondences(correspondences)
    return _dlt_arrays(world, image)


def ransac_projection(correspondences: CorrespondenceInput, cfg: Optional[RansacConfig]=None) -> Tuple[np.ndarray, np.ndarray]:
    cfg = cfg or RansacConfig()
    world, image = split_correspondences(correspondences)
    n = len(world)
    if n < cfg.min_sample:
        raise InsufficientPoints(f'RANSAC needs at least {cfg.min_sample} correspondences, got {n}')
    rng = np.random.default_rng(cfg.seed)
    best_count = 0
    best_mask = np.zeros(n, dtype=bool)
    for iteration in range(cfg.iterations):
        sample = rng.choice(n, size=cfg.min_sample, replace=False)
        try:
            P = _dlt_arrays(world[sample], image[sample])
        except GeometryError as e:
            logger.debug(f'RANSAC iteration {iteration}: degenerate sample ({e})')
            continue
        mask = reprojection_errors(P, world, image) < cfg.inlier_threshold
        count = int(mask.sum())
        logger.debug(f'RANSAC iteration {iteration}: {count} inliers')
        if count > best_count:
            best_count = count
            best_mask = mask
            if count == n:
                break
    if best_count < MIN_CORRESPONDENCES:
        raise NoConsensus(f'best RANSAC hypothesis has {best_count} inliers (< {MIN_CORRESPONDENCES}) after {cfg.iterations} iterations')
    P = _dlt_arrays(world[best_mask], image[best_mask])
    final_mask = reprojection_errors(P, world, image) < cfg.inlier_threshold
    if final_mask.sum() < MIN_CORRESPONDENCES:
        final_mask = best_mask
    logger.info(f'RANSAC kept {int(final_mask.sum())}/{n} inliers (threshold {cfg.inlier_threshold} px)')
    return (P, final_mask)


def _residuals_and_jacobian(p: np.ndarray, Xn: np.ndarray, xn: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    P = p.reshape(3, 4)
    h = Xn @ P.T
    w = h[:, 2:3]
    proj = h[:, :2] / w
    residuals = (proj - xn).reshape(-1)
    n = len(Xn)
    J = np.zeros((2 * n, 12))
    J[0::2, 0:4] = Xn / w
    J[1::2, 4:8] = Xn / w
    J[0::2, 8:12] = -proj[:, :1] * Xn / w
    J[1::2, 8:12] = -proj[:, 1:2] * Xn / w
    return (residuals, J)


def refine_projection(P0: np.ndarray, correspondences: CorrespondenceInput, max_iters: int=100, tol: float=1e-10) -> np.ndarray:
    P0 = np.asarray(P0, dtype=float).reshape(3, 4)
    if np.linalg.matrix_rank(P0) < 3:
        raise DegenerateConfiguration('initial projection matrix is rank deficient')
    world, image = split_correspondences(correspondences)
    if len(world) < MIN_CORRESPONDENCES:
        raise InsufficientPoints(f'refinement needs at least {MIN_CORRESPONDENCES} correspondences, got {len(world)}')
    T3 = normalization_transform(world)
    T2 = normalization_transform(image)
    Xn = homogenize(world) @ T3.T
    xn = (homogenize(image) @ T2.T)[:, :2]
    P_norm = T2 @ P0 @ np.linalg.inv(T3)
    p = (P_norm / np.linalg.norm(P_norm)).reshape(-1)
    residuals, J = _residuals_and_jacobian(p, Xn, xn)
    cost = float(residuals @ residuals)
    initial_cost = cost
    damping = 1e-3
    rejections = 0
    accepted = 0
    for iteration in range(max_iters):
        B = null_space(p[None, :])
        Jt = J @ B
        g = Jt.T @ residuals
        H = Jt.T @ Jt
        step = np.linalg.solve(H + damping * np.eye(H.shape[0]), -g)
        if np.linalg.norm(step) < tol:
            logger.debug(f'LM iteration {iteration}: step below tolerance, stopping')
            break
        candidate = p + B @ step
        candidate /= np.linalg.norm(candidate)
        cand_residuals, cand_J = _residuals_and_jacobian(candidate, Xn, xn)
        cand_cost = float(cand_residuals @ cand_residuals)
        if np.isfinite(cand_cost) and cand_cost < cost:
            logger.debug(f'LM iteration {iteration}: cost {cost:.6g} -> {cand_cost:.6g} (lambda {damping:.1e})')
            p, residuals, J, cost = (candidate, cand_residuals, cand_J, cand_cost)
            damping /= 10.0
            rejections = 0
            accepted += 1
            continue
        if np.isfinite(cand_cost) and cand_cost - cost <= 1e-12 * max(cost, 1e-300):
            logger.debug(f'LM iteration {iteration}: objective flat at {cost:.6g}, stopping')
            break
        damping *= 10.0
        rejections += 1
        if rejections >= 10:
            raise DivergedError(f'reprojection error increased for {rejections} consecutive damping escalations')
    if accepted == 0:
        return P0.copy()
    P = np.linalg.solve(T2, p.reshape(3, 4) @ T3)
    logger.info(f'LM refinement: {accepted} accepted step(s), normalized cost {initial_cost:.6g} -> {cost:.6g}')
    return normalize_projection(P, world)


def decompose_projection(P: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    P = np.asarray(P, dtype=float).reshape(3, 4)
    M = P[:, :3]
    det = np.linalg.det(M)
    if abs(det) <= 1e-12 * max(np.linalg.norm(M), 1e-300) ** 3:
        raise SingularLeftBlock(f'left 3x3 block of P is singular (det={det:.3g})')
    if det < 0:
        P = -P
        M = -M
    K, R = rq(M)
    D = np.diag(np.sign(np.diag(K)))
    K = K @ D
    R = D @ R
    t = np.linalg.solve(K, P[:, 3])
    K = K / K[2, 2]
    return (K, R, t)


def camera_from_projection(P: np.ndarray, distortion: Optional[LwmModel]=None, image_size: Optional[Tuple[int, int]]=None) -> CameraParameters:
    K, R, t = decompose_projection(P)
    P = normalize_projection(np.asarray(P, dtype=float).reshape(3, 4))
    return CameraParameters(K=K, R=R, t=t, P=P, distortion=distortion, image_size=image_size)


def calibrate_view(correspondences: CorrespondenceInput, ransac: Optional[RansacConfig]=None, grid_correspondences=None, neighborhood_n: int=12, refine: bool=True, image_size: Optional[Tuple[int, int]]=None) -> Tuple[CameraParameters, Dict[str, Any]]:
    """Full per-view chain: optional LWM fit, undistortion, RANSAC, refinement, decomposition."""
    world, image = split_correspondences(correspondences)
    model = None
    if grid_correspondences is not None:
        model = fit_lwm(grid_correspondences, neighborhood_n)
        image = undistort_points(model, image)
    P, inliers = ransac_projection((world, image), ransac)
    if refine:
        P = refine_projection(P, (world[inliers], image[inliers]))
    camera = camera_from_projection(P, distortion=model, image_size=image_size)
    rms = rms_reprojection_error(camera.P, (world[inliers], image[inliers]))
    report = {'rms_px': rms, 'inliers': int(inliers.sum()), 'total': len(world), 'inlier_mask': inliers.tolist()}
    logger.info(f'Calibrated view: RMS {rms:.4g} px over {report["inliers"]}/{report["total"]} inliers')
    return (camera, report)
