"""Synthetic bi-planar ground truth: camera rigs, guidewire-like curves, renders.

Curves are centripetal Catmull-Rom splines through a random walk of control
points, optionally carrying a planar loop, sampled at 1 mm. Frames are
anti-aliased 1-px strokes on black: a dim wire with a full-intensity
radiopaque marker over its distal end.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple, Union
import numpy as np
from pydantic import BaseModel, Field, model_validator
from src.curve_repr import SphericalCurve, encode
from src.errors import DegenerateAngle, OutOfBounds
from src.geometry import CameraParameters, Curve3D, Polyline2D, cumulative_arclength, point_to_polyline_distance, project_points, resample_polyline
from src.reconstruction import StereoRig
from src.schemas.annotation import AnnotationRecord, CameraBundle, Manifest, ManifestEntry
from src.schemas.validators import save_annotations, save_camera_bundle, save_curve, save_manifest, write_frame
logger = logging.getLogger(__name__)

DEFAULT_IMAGE_SIZE = 1024
DEFAULT_FRAME_SIZE = 64
WIRE_INTENSITY = 0.3
MARKER_PX = 2.5


class CurveGenParams(BaseModel):
    n_control: int = Field(8, ge=4)
    length_range: Tuple[float, float] = (100.0, 200.0)
    curvature_scale: float = Field(0.02, ge=0, description='Turning per mm of the control random walk (1/mm)')
    loop_probability: float = Field(0.2, ge=0, le=1)
    loop_radius: float = Field(8.0, gt=0)
    box_mm: float = Field(200.0, gt=0)
    sample_step: float = Field(1.0, gt=0)
    seed: int = 0

    @model_validator(mode='after')
    def check_length_range(self):
        lo, hi = self.length_range
        if not 0 < lo < hi:
            raise ValueError(f'length_range must satisfy 0 < min < max, got {self.length_range}')
        return self


class SynthConfig(BaseModel):
    curve: CurveGenParams = Field(default_factory=CurveGenParams)
    baseline_angle: float = Field(np.pi / 2, gt=0, lt=np.pi)
    distance_mm: float = Field(1000.0, gt=0)
    focal_px: float = Field(1000.0, gt=0)
    image_size: int = Field(DEFAULT_IMAGE_SIZE, ge=8)
    frame_size: int = Field(DEFAULT_FRAME_SIZE, ge=8)
    noise_px: float = Field(0.0, ge=0)
    annotation_step_mm: Optional[float] = Field(None, gt=0)
    start_fraction: float = Field(0.6, gt=0, le=1)
    guidewire_types: List[Literal['angled', 'straight']] = Field(default_factory=lambda: ['angled', 'straight'], min_length=1)


@dataclass
class SyntheticSample:
    truth: Curve3D
    poly_a: Polyline2D
    poly_b: Polyline2D
    frames_a: np.ndarray
    rig: StereoRig


@dataclass
class DeskSequence:
    frames: np.ndarray
    target: SphericalCurve
    truth: Curve3D


def look_at_camera(center: np.ndarray, focal_px: float, image_size: int) -> CameraParameters:
    z_axis = -center / np.linalg.norm(center)
    y_axis = np.array([0.0, 1.0, 0.0])
    y_axis = y_axis - (y_axis @ z_axis) * z_axis
    y_axis /= np.linalg.norm(y_axis)
    x_axis = np.cross(y_axis, z_axis)
    R = np.vstack([x_axis, y_axis, z_axis])
    K = np.array([[focal_px, 0.0, image_size / 2.0], [0.0, focal_px, image_size / 2.0], [0.0, 0.0, 1.0]])
    return CameraParameters(K=K, R=R, t=-R @ center, image_size=(image_size, image_size))


def make_camera_pair(baseline_angle: float=np.pi / 2, distance: float=1000.0, focal_px: float=1000.0, image_size: int=DEFAULT_IMAGE_SIZE) -> StereoRig:
    if not 0.0 < baseline_angle < np.pi:
        raise DegenerateAngle(f'baseline angle must lie strictly between 0 and pi, got {baseline_angle}')
    cams = []
    for beta in (-baseline_angle / 2, baseline_angle / 2):
        center = distance * np.array([np.sin(beta), 0.0, -np.cos(beta)])
        cams.append(look_at_camera(center, focal_px, image_size))
    return StereoRig.from_cameras(cams[0], cams[1])


def catmull_rom(control: np.ndarray, samples_per_mm: float=4.0) -> np.ndarray:
    """Centripetal Catmull-Rom chain through control[1:-1]."""
    pieces = []
    for i in range(len(control) - 3):
        P0, P1, P2, P3 = control[i:i + 4]
        t0 = 0.0
        t1 = t0 + np.linalg.norm(P1 - P0) ** 0.5
        t2 = t1 + np.linalg.norm(P2 - P1) ** 0.5
        t3 = t2 + np.linalg.norm(P3 - P2) ** 0.5
        res = max(8, int(np.ceil(np.linalg.norm(P2 - P1) * samples_per_mm)))
        t = np.linspace(t1, t2, res)[:, None]
        A1 = (t1 - t) / (t1 - t0) * P0 + (t - t0) / (t1 - t0) * P1
        A2 = (t2 - t) / (t2 - t1) * P1 + (t - t1) / (t2 - t1) * P2
        A3 = (t3 - t) / (t3 - t2) * P2 + (t - t2) / (t3 - t2) * P3
        B1 = (t2 - t) / (t2 - t0) * A1 + (t - t0) / (t2 - t0) * A2
        B2 = (t3 - t) / (t3 - t1) * A2 + (t - t1) / (t3 - t1) * A3
        C = (t2 - t) / (t2 - t1) * B1 + (t - t1) / (t2 - t1) * B2
        pieces.append(C if not pieces else C[1:])
    return np.vstack(pieces)


def truncate_polyline(points: np.ndarray, length: float) -> np.ndarray:
    arclength = cumulative_arclength(points)
    if length >= arclength[-1]:
        return points
    k = int(np.searchsorted(arclength, length, side='right'))
    t = (length - arclength[k - 1]) / (arclength[k] - arclength[k - 1])
    end = points[k - 1] + t * (points[k] - points[k - 1])
    kept = points[:k]
    if np.linalg.norm(end - kept[-1]) > 1e-9:
        kept = np.vstack([kept, end])
    return kept


def _random_walk(rng: np.random.Generator, n: int, step: float, curvature_scale: float, box_mm: float) -> np.ndarray:
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    points = [np.zeros(3)]
    turn = min(curvature_scale * step, np.pi / 2)
    half = box_mm / 2.0
    for _ in range(n - 1):
        # reflect off the walls of the box
        outside = np.abs(points[-1] + step * direction) > half
        direction = np.where(outside, -direction, direction)
        points.append(points[-1] + step * direction)
        kick = rng.normal(size=3)
        kick -= (kick @ direction) * direction
        norm = np.linalg.norm(kick)
        if norm > 0:
            angle = turn * rng.uniform(0.5, 1.0)
            direction = np.cos(angle) * direction + np.sin(angle) * kick / norm
            direction /= np.linalg.norm(direction)
    return np.array(points)


def insert_loop(points: np.ndarray, index: int, radius: float, pitch: float=0.3, lift: float=0.25, step: float=0.25) -> np.ndarray:
    """Splice a prolate-trochoid loop into a dense polyline at `index`.

    The loop is planar up to a small smooth lift along the plane normal
    (lift * radius in total) so the 3D curve does not pass through itself.
    """
    p = points[index]
    tangent = points[index + 1] - points[index - 1]
    tangent /= np.linalg.norm(tangent)
    # loop plane normal kept near horizontal so the loop faces the rig
    normal = np.cross([0.0, 1.0, 0.0], tangent)
    if np.linalg.norm(normal) < 1e-3:
        normal = np.cross([1.0, 0.0, 0.0], tangent)
    normal /= np.linalg.norm(normal)
    in_plane = np.cross(normal, tangent)
    a = pitch * radius
    b = radius
    n_loop = max(16, int(np.ceil(2 * np.pi * (a + b) / step)))
    psi = np.linspace(0.0, 2 * np.pi, n_loop)[:, None]
    rise = lift * radius
    loop = p + (a * psi + b * np.sin(psi)) * tangent + b * (1 - np.cos(psi)) * in_plane + rise * (psi - np.sin(psi)) / (2 * np.pi) * normal
    shift = 2 * np.pi * a * tangent + rise * normal
    return np.vstack([points[:index], loop, points[index + 1:] + shift])


def gen_curve(params: CurveGenParams) -> Curve3D:
    rng = np.random.default_rng(params.seed)
    lo, hi = params.length_range
    target = rng.uniform(lo, hi)
    step = 1.3 * target / (params.n_control - 3)
    control = _random_walk(rng, params.n_control, step, params.curvature_scale, params.box_mm)
    dense = catmull_rom(control)
    if rng.uniform() < params.loop_probability:
        arclength = cumulative_arclength(dense)
        index = int(np.searchsorted(arclength, rng.uniform(0.2, 0.35) * target))
        index = int(np.clip(index, 1, len(dense) - 2))
        dense = insert_loop(dense, index, params.loop_radius)
        logger.debug(f'seed {params.seed}: inserted loop at {arclength[index]:.1f} mm')
    sampled = resample_polyline(dense, params.sample_step)
    sampled = truncate_polyline(sampled, target)
    center = 0.5 * (sampled.min(axis=0) + sampled.max(axis=0))
    return Curve3D(sampled - center)


def gen_trajectory(path: Curve3D, n_frames: int, start_fraction: float=0.6) -> List[Curve3D]:
    """Advance a guidewire along a fixed path; each frame is tip-first."""
    proximal_first = path.points[::-1]
    total = path.length
    fractions = np.linspace(start_fraction, 1.0, n_frames) if n_frames > 1 else np.array([1.0])
    return [Curve3D(truncate_polyline(proximal_first, f * total)[::-1]) for f in fractions]


def project_polyline(camera: CameraParameters, points: np.ndarray, image_size: int, view_id: str, frame_index: int) -> Polyline2D:
    pixels = project_points(camera, points)
    if np.any(pixels < 0) or np.any(pixels > image_size):
        raise OutOfBounds(f'projection of frame {frame_index} leaves the {image_size}x{image_size} view {view_id}')
    return Polyline2D(pixels, view_id=view_id, frame_index=frame_index)


def render_frame(pixels: np.ndarray, frame_size: int, wire_intensity: float=1.0, marker_px: float=0.0) -> np.ndarray:
    """Tip-first pixel polyline -> frame; the distal marker_px of the wire is drawn at full intensity."""
    grid = (np.arange(frame_size) + 0.5)
    xx, yy = np.meshgrid(grid, grid)
    centers = np.column_stack([xx.ravel(), yy.ravel()])
    frame = wire_intensity * np.clip(1.0 - point_to_polyline_distance(centers, pixels), 0.0, 1.0)
    if marker_px > 0:
        marker = truncate_polyline(pixels, marker_px)
        frame = np.maximum(frame, np.clip(1.0 - point_to_polyline_distance(centers, marker), 0.0, 1.0))
    return frame.reshape(frame_size, frame_size)


def annotate(curve: Curve3D, camera: CameraParameters, image_size: int, view_id: str, frame_index: int, noise_px: float=0.0, annotation_step_mm: Optional[float]=None, rng: Optional[np.random.Generator]=None) -> Polyline2D:
    points = curve.points
    if annotation_step_mm is not None and curve.length >= annotation_step_mm:
        points = resample_polyline(points, annotation_step_mm)
    poly = project_polyline(camera, points, image_size, view_id, frame_index)
    if noise_px > 0:
        rng = rng or np.random.default_rng(0)
        noisy = poly.points + rng.normal(scale=noise_px, size=poly.points.shape)
        poly = Polyline2D(noisy, view_id=view_id, frame_index=frame_index)
    return poly


def render_sequence(trajectory: Sequence[Curve3D], rig: StereoRig, image_size: int=DEFAULT_IMAGE_SIZE, frame_size: int=DEFAULT_FRAME_SIZE, noise_px: float=0.0, seed: int=0, annotation_step_mm: Optional[float]=None, seq_len: int=4) -> List[SyntheticSample]:
    rng = np.random.default_rng(seed)
    frame_cam = rig.cam_a.scaled(frame_size / image_size)
    frames = []
    annotations = []
    for k, curve in enumerate(trajectory):
        poly_a = annotate(curve, rig.cam_a, image_size, 'A', k, noise_px, annotation_step_mm, rng)
        poly_b = annotate(curve, rig.cam_b, image_size, 'B', k, noise_px, annotation_step_mm, rng)
        frames.append(render_frame(project_points(frame_cam, curve.points), frame_size, WIRE_INTENSITY, MARKER_PX))
        annotations.append((poly_a, poly_b))
    samples = []
    for k, curve in enumerate(trajectory):
        window = [frames[max(j, 0)] for j in range(k - seq_len + 1, k + 1)]
        samples.append(SyntheticSample(truth=curve, poly_a=annotations[k][0], poly_b=annotations[k][1], frames_a=np.stack(window), rig=rig))
    logger.debug(f'Rendered {len(samples)} frame(s) at {frame_size}x{frame_size}')
    return samples


DESK_CURVE_PARAMS = CurveGenParams(n_control=5, length_range=(18.0, 30.0), curvature_scale=0.05, loop_probability=0.0, box_mm=60.0)


def make_desk_rig() -> StereoRig:
    return make_camera_pair(np.pi / 2, distance=300.0, focal_px=4000.0, image_size=DEFAULT_IMAGE_SIZE)


def make_desk_dataset(n_sequences: int, seq_len: int=4, frame_size: int=DEFAULT_FRAME_SIZE, radius: float=2.0, max_segments: int=16, seed: int=0, params: Optional[CurveGenParams]=None, jitter_mm: Tuple[float, float]=(10.0, 2.0)) -> List[DeskSequence]:
    """Short advancing guidewires seen by camera A of the desk rig.

    Each path is shifted by a random offset in camera A's image plane (up to
    jitter_mm[0]) and along its optical axis (up to jitter_mm[1]).
    """
    params = params or DESK_CURVE_PARAMS
    rig = make_desk_rig()
    frame_cam = rig.cam_a.scaled(frame_size / DEFAULT_IMAGE_SIZE)
    rng = np.random.default_rng(seed)
    dataset = []
    attempt = 0
    while len(dataset) < n_sequences:
        curve_seed = int(rng.integers(0, 2 ** 31 - 1))
        attempt += 1
        path = gen_curve(params.model_copy(update={'seed': curve_seed}))
        shift = rig.cam_a.R.T @ np.array([rng.uniform(-jitter_mm[0], jitter_mm[0]), rng.uniform(-jitter_mm[0], jitter_mm[0]), rng.uniform(-jitter_mm[1], jitter_mm[1])])
        path = Curve3D(path.points + shift)
        trajectory = gen_trajectory(path, seq_len)
        pixels = [project_points(frame_cam, c.points) for c in trajectory]
        if any((np.any(p < 0) or np.any(p > frame_size) for p in pixels)):
            logger.debug(f'desk sample {curve_seed} leaves the frame, redrawing')
            continue
        target = encode(trajectory[-1], radius)
        if target.length > max_segments:
            target = SphericalCurve(tip=target.tip, radius=radius, offsets=target.offsets[:max_segments])
        frames = np.stack([render_frame(p, frame_size, WIRE_INTENSITY, MARKER_PX) for p in pixels])
        dataset.append(DeskSequence(frames=frames, target=target, truth=trajectory[-1]))
    logger.info(f'Built desk dataset: {n_sequences} sequence(s) of {seq_len} frame(s) ({attempt} draw(s))')
    return dataset


def synthesize_video(cfg: SynthConfig, rig: StereoRig, n_frames: int, seed: int, max_attempts: int=100) -> List[SyntheticSample]:
    """One advancing-guidewire video; paths leaving either view are redrawn."""
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        curve_seed = int(rng.integers(0, 2 ** 31 - 1))
        path = gen_curve(cfg.curve.model_copy(update={'seed': curve_seed}))
        trajectory = gen_trajectory(path, n_frames, cfg.start_fraction)
        try:
            return render_sequence(trajectory, rig, cfg.image_size, cfg.frame_size, cfg.noise_px, curve_seed, cfg.annotation_step_mm, seq_len=1)
        except OutOfBounds as e:
            logger.debug(f'curve {curve_seed} rejected: {e}')
    raise OutOfBounds(f'no curve out of {max_attempts} draws fits the {cfg.image_size}x{cfg.image_size} views')


def write_synthetic_dump(out_dir: Union[str, Path], cfg: SynthConfig, n_videos: int, n_frames: int, seed: int=0) -> Path:
    """Write videos in the annotation schema plus view-A frames (PGM), ground truth and camera bundles.

    Layout: manifest.json, cameras/{A,B}.json and videos/<id>/{annotations.json,
    frames/A_<k>.pgm, truth/<k>.json}. Returns the manifest path.
    """
    out_dir = Path(out_dir)
    rig = make_camera_pair(cfg.baseline_angle, cfg.distance_mm, cfg.focal_px, cfg.image_size)
    for view_id in ('A', 'B'):
        save_camera_bundle(out_dir / 'cameras' / f'{view_id}.json', CameraBundle.from_camera(rig.camera(view_id), view_id))
    rng = np.random.default_rng(seed)
    entries = []
    for v in range(n_videos):
        video_id = f'video_{v:03d}'
        guidewire_type = cfg.guidewire_types[v % len(cfg.guidewire_types)]
        fluid = (v // len(cfg.guidewire_types)) % 2 == 0
        samples = synthesize_video(cfg, rig, n_frames, int(rng.integers(0, 2 ** 31 - 1)))
        video_dir = out_dir / 'videos' / video_id
        records = []
        for k, sample in enumerate(samples):
            for poly in (sample.poly_a, sample.poly_b):
                records.append(AnnotationRecord(frame_index=k, view_id=poly.view_id, polyline=poly.points, guidewire_type=guidewire_type, fluid=fluid))
            write_frame(video_dir / 'frames' / f'A_{k:04d}.pgm', sample.frames_a[-1])
            save_curve(video_dir / 'truth' / f'{k:04d}.json', k, sample.truth)
        save_annotations(video_dir / 'annotations.json', records, video_id=video_id, image_size=(cfg.image_size, cfg.image_size))
        entries.append(ManifestEntry(video_id=video_id, guidewire_type=guidewire_type, fluid=fluid, frame_count=len(samples), annotation_path=f'videos/{video_id}/annotations.json', camera_bundle_path='cameras'))
        logger.debug(f'{video_id}: {len(samples)} frame(s), {guidewire_type}, fluid={fluid}')
    manifest_path = save_manifest(out_dir / 'manifest.json', Manifest(videos=entries))
    logger.info(f'Wrote {n_videos} synthetic video(s) of {n_frames} frame(s) to {out_dir}')
    return manifest_path
