"""Shape-error metrics between a predicted and a ground-truth curve."""
import csv
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union
import numpy as np
from pydantic import BaseModel, Field
from scipy.spatial.distance import cdist
from src.errors import DegenerateCurve, DomainError, EmptyPolyline
from src.geometry import Curve3D, resample_polyline
logger = logging.getLogger(__name__)

METRIC_FIELDS = ['max_ed', 'mete', 'mers', 'frechet']
CSV_HEADER = ['frame', 'max_ed_mm', 'mete_mm', 'mers_mm', 'frechet_mm']

# Published real-data values, mean and standard deviation in mm.
REFERENCE_SHAPE_COMPARISON = {'cartesian': {'max_ed': (10.0, 4.64), 'mete': (6.93, 3.94), 'mers': (5.33, 2.73), 'frechet': (8.95, 4.37)}, 'spherical': {'max_ed': (6.88, 5.23), 'mete': (3.28, 2.59), 'mers': (4.54, 3.67), 'frechet': (6.7, 5.16)}}
# MERS here is reported without a unit and is not comparable to the mm values.
REFERENCE_VALIDATION = {'max_ed': (2.88, 0.64), 'mete': (1.527, 0.877), 'mers': (0.001, 0.0)}


class ShapeMetrics(BaseModel):
    max_ed: float = Field(..., ge=0, description='Maximum pointwise Euclidean distance (mm)')
    mete: float = Field(..., ge=0, description='Tip-sample distance (mm)')
    mers: float = Field(..., ge=0, description='Mean pointwise distance (mm)')
    frechet: float = Field(..., ge=0, description='Discrete Frechet distance (mm)')

    def as_row(self) -> List[float]:
        return [self.max_ed, self.mete, self.mers, self.frechet]


def frechet_distance(a: Union[np.ndarray, Sequence], b: Union[np.ndarray, Sequence]) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise EmptyPolyline('Frechet distance needs two nonempty polylines')
    dist = cdist(a.reshape(len(a), -1), b.reshape(len(b), -1))
    p, q = dist.shape
    table = np.empty((p, q))
    table[0, 0] = dist[0, 0]
    for i in range(1, p):
        table[i, 0] = max(table[i - 1, 0], dist[i, 0])
    for j in range(1, q):
        table[0, j] = max(table[0, j - 1], dist[0, j])
    for i in range(1, p):
        for j in range(1, q):
            table[i, j] = max(min(table[i - 1, j], table[i, j - 1], table[i - 1, j - 1]), dist[i, j])
    return float(table[-1, -1])


def aligned_samples(pred: Curve3D, truth: Curve3D, delta_u: float) -> Tuple[np.ndarray, np.ndarray]:
    if not delta_u > 0:
        raise DomainError(f'delta_u must be positive, got {delta_u}')
    pred_pts = pred.points if isinstance(pred, Curve3D) else np.asarray(pred, dtype=float)
    truth_pts = truth.points if isinstance(truth, Curve3D) else np.asarray(truth, dtype=float)
    if len(pred_pts) < 2 or len(truth_pts) < 2:
        raise DegenerateCurve('shape comparison needs curves with at least 2 points')
    a = resample_polyline(pred_pts, delta_u)
    b = resample_polyline(truth_pts, delta_u)
    n = min(len(a), len(b))
    return (a[:n], b[:n])


def compare_shapes(pred: Curve3D, truth: Curve3D, delta_u: float) -> ShapeMetrics:
    a, b = aligned_samples(pred, truth, delta_u)
    d = np.linalg.norm(a - b, axis=1)
    return ShapeMetrics(max_ed=float(d.max()), mete=float(d[0]), mers=float(d.mean()), frechet=frechet_distance(a, b))


def summarize_metrics(metrics: Iterable[ShapeMetrics]) -> Dict[str, Tuple[float, float]]:
    rows = np.array([m.as_row() for m in metrics], dtype=float).reshape(-1, len(METRIC_FIELDS))
    if len(rows) == 0:
        return {name: (0.0, 0.0) for name in METRIC_FIELDS}
    return {name: (float(rows[:, k].mean()), float(rows[:, k].std())) for k, name in enumerate(METRIC_FIELDS)}


def write_metrics_csv(path: Union[str, Path], rows: Iterable[Tuple[int, ShapeMetrics]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(CSV_HEADER)
        for frame, m in rows:
            writer.writerow([frame] + [f'{v:.6f}' for v in m.as_row()])
    return path


def read_metrics_csv(path: Union[str, Path]) -> List[Tuple[int, ShapeMetrics]]:
    rows = []
    with open(path, 'r', newline='') as f:
        for record in csv.DictReader(f):
            rows.append((int(record['frame']), ShapeMetrics(max_ed=float(record['max_ed_mm']), mete=float(record['mete_mm']), mers=float(record['mers_mm']), frechet=float(record['frechet_mm']))))
    return rows
