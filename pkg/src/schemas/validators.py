import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import numpy as np
from PIL import Image
from pydantic import BaseModel, ValidationError
from src.errors import InvariantError, ParseError, SchemaError
from src.geometry import Curve3D
from .annotation import AnnotationFile, AnnotationRecord, CameraBundle, CompositionTable, CorrespondenceFile, CurveRecord, FrameAnnotation, Manifest
logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
GUIDEWIRE_TYPES = ('angled', 'straight')
FLUID_ROWS = {True: 'w fluid', False: 'w/o fluid'}


class ValidationResult:

    def __init__(self, valid: bool, errors: List[str]=None, warnings: List[str]=None):
        self.valid = valid
        self.errors = errors or []
        self.warnings = warnings or []

    def __bool__(self):
        return self.valid

    def __str__(self):
        if self.valid:
            msg = 'Validation passed'
            if self.warnings:
                msg += f'\n  {len(self.warnings)} warnings:\n'
                msg += '\n'.join((f'  - {w}' for w in self.warnings))
            return msg
        msg = f'Validation failed with {len(self.errors)} errors:\n'
        msg += '\n'.join((f'  - {e}' for e in self.errors))
        if self.warnings:
            msg += f'\n  {len(self.warnings)} warnings:\n'
            msg += '\n'.join((f'  - {w}' for w in self.warnings))
        return msg


def flatten_errors(e: ValidationError) -> List[str]:
    errors = []
    for error in e.errors():
        field = ' -> '.join((str(x) for x in error['loc']))
        errors.append(f"{field}: {error['msg']}")
    return errors


def read_json(path: PathLike) -> Any:
    path = Path(path)
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except FileNotFoundError:
        raise ParseError(f'file not found: {path}')
    except json.JSONDecodeError as e:
        raise ParseError(f'invalid JSON in {path}: {e}')


def write_json(path: PathLike, data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=False)
        f.write('\n')
    return path


def _record_label(data: Any, loc: Sequence[Any]) -> Optional[str]:
    if len(loc) < 2 or loc[0] != 'frames' or not isinstance(loc[1], int):
        return None
    try:
        record = data['frames'][loc[1]]
        return f"record {loc[1]} (frame {record.get('frame', '?')}, view {record.get('view', '?')})"
    except (KeyError, IndexError, TypeError, AttributeError):
        return f'record {loc[1]}'


def parse_model(model: type, data: Any, source: str) -> BaseModel:
    if not isinstance(data, dict):
        raise SchemaError(f'{source}: expected a JSON object, got {type(data).__name__}')
    try:
        return model(**data)
    except ValidationError as e:
        labels = [_record_label(data, err['loc']) for err in e.errors()]
        named = next((label for label in labels if label), None)
        detail = '; '.join(flatten_errors(e))
        prefix = f'{source} {named}' if named else source
        raise SchemaError(f'{prefix}: {detail}', context=source)


def check_annotation_invariants(af: AnnotationFile, source: str='annotations') -> List[str]:
    """Invariant violations of a schema-valid annotation file, one message per record."""
    problems = []
    seen = set()
    for i, rec in enumerate(af.frames):
        name = f'record {i} (frame {rec.frame}, view {rec.view})'
        pts = np.asarray(rec.polyline, dtype=float).reshape(-1, 2)
        if len(pts) < 2:
            problems.append(f'{name}: polyline needs at least 2 points, got {len(pts)}')
        elif not np.all(np.isfinite(pts)):
            problems.append(f'{name}: polyline contains non-finite coordinates')
        elif np.any(np.all(np.diff(pts, axis=0) == 0.0, axis=1)):
            problems.append(f'{name}: polyline has identical consecutive points')
        if (rec.frame, rec.view) in seen:
            problems.append(f'{name}: duplicate frame/view pair')
        seen.add((rec.frame, rec.view))
    return problems


def validate_annotation_data(data: Dict[str, Any]) -> ValidationResult:
    try:
        af = AnnotationFile(**data)
    except ValidationError as e:
        return ValidationResult(valid=False, errors=flatten_errors(e))
    except Exception as e:
        return ValidationResult(valid=False, errors=[f'Unexpected error: {str(e)}'])
    problems = check_annotation_invariants(af)
    if problems:
        return ValidationResult(valid=False, errors=problems)
    warnings = []
    if not af.frames:
        warnings.append('No annotated frames')
    views = {rec.view for rec in af.frames}
    if af.frames and views != {'A', 'B'}:
        warnings.append(f'Only view(s) {sorted(views)} annotated')
    width, height = af.image_size
    for rec in af.frames:
        pts = np.asarray(rec.polyline, dtype=float).reshape(-1, 2)
        if len(pts) and (np.any(pts < 0) or np.any(pts[:, 0] > width) or np.any(pts[:, 1] > height)):
            warnings.append(f'frame {rec.frame} view {rec.view}: polyline leaves the {width}x{height} image')
    return ValidationResult(valid=True, warnings=warnings)


def load_annotation_file(path: PathLike) -> AnnotationFile:
    source = str(path)
    af = parse_model(AnnotationFile, read_json(path), source)
    problems = check_annotation_invariants(af, source)
    if problems:
        raise InvariantError(f'{source} {problems[0]}', context=source)
    return af


def records_from_file(af: AnnotationFile) -> List[AnnotationRecord]:
    records = [AnnotationRecord(frame_index=rec.frame, view_id=rec.view, polyline=np.asarray(rec.polyline, dtype=float).reshape(-1, 2), guidewire_type=af.guidewire_type, fluid=af.fluid) for rec in af.frames]
    return sorted(records, key=lambda r: (r.frame_index, r.view_id))


def load_annotations(path: PathLike) -> List[AnnotationRecord]:
    records = records_from_file(load_annotation_file(path))
    logger.debug(f'Loaded {len(records)} annotation record(s) from {path}')
    return records


def save_annotations(path: PathLike, records: Sequence[AnnotationRecord], video_id: str='video', image_size: Tuple[int, int]=(1024, 1024), guidewire_type: Optional[str]=None, fluid: Optional[bool]=None) -> Path:
    types = {r.guidewire_type for r in records}
    fluids = {r.fluid for r in records}
    if len(types) > 1 or len(fluids) > 1:
        raise InvariantError(f'records of one video must share guidewire type and fluid flag, got {sorted(types)} / {sorted(fluids)}')
    guidewire_type = guidewire_type or (types.pop() if types else 'angled')
    fluid = fluid if fluid is not None else (fluids.pop() if fluids else False)
    ordered = sorted(records, key=lambda r: (r.frame_index, r.view_id))
    frames = [FrameAnnotation(frame=r.frame_index, view=r.view_id, polyline=[tuple(p) for p in np.asarray(r.polyline, dtype=float).tolist()]) for r in ordered]
    af = AnnotationFile(schema=1, video_id=video_id, guidewire_type=guidewire_type, fluid=fluid, image_size=tuple(image_size), frames=frames)
    return write_json(path, af.model_dump(mode='json', by_alias=True))


def load_manifest(path: PathLike, check_paths: bool=True) -> Manifest:
    path = Path(path)
    manifest = parse_model(Manifest, read_json(path), str(path))
    if check_paths:
        root = path.parent
        for entry in manifest.videos:
            for ref in (entry.annotation_path, entry.camera_bundle_path):
                if not (root / ref).exists():
                    raise InvariantError(f'{path}: video {entry.video_id} references missing path {ref}', context=str(path))
    return manifest


def save_manifest(path: PathLike, manifest: Manifest) -> Path:
    return write_json(path, manifest.model_dump(mode='json', by_alias=True))


def manifest_stats(manifest: Manifest) -> CompositionTable:
    cells = {row: {t: 0 for t in GUIDEWIRE_TYPES} for row in FLUID_ROWS.values()}
    for entry in manifest.videos:
        cells[FLUID_ROWS[entry.fluid]][entry.guidewire_type] += entry.frame_count
    type_totals = {t: sum((cells[row][t] for row in cells)) for t in GUIDEWIRE_TYPES}
    fluid_totals = {row: sum(cells[row].values()) for row in cells}
    total = sum(type_totals.values())
    return CompositionTable(cells=cells, type_totals=type_totals, fluid_totals=fluid_totals, total=total, paired=total // 2, videos=len(manifest.videos))


def format_stats_table(table: CompositionTable) -> str:
    header = ['Sample Type', 'Angled', 'Straight', 'Total']
    rows = [[str(v) for v in row] for row in table.rows()]
    widths = [max(len(header[k]), *(len(r[k]) for r in rows)) for k in range(len(header))]
    line = '  '.join((h.ljust(widths[k]) if k == 0 else h.rjust(widths[k]) for k, h in enumerate(header)))
    out = [line, '-' * len(line)]
    for i, row in enumerate(rows):
        if i == len(rows) - 1:
            out.append('-' * len(line))
        out.append('  '.join((v.ljust(widths[k]) if k == 0 else v.rjust(widths[k]) for k, v in enumerate(row))))
    out.append(f'Paired with/without fluid: {table.paired}    Videos: {table.videos}')
    return '\n'.join(out)


def write_stats_csv(path: PathLike, table: CompositionTable) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ['sample_type,angled,straight,total'] + [','.join((str(v) for v in row)) for row in table.rows()]
    path.write_text('\n'.join(lines) + '\n')
    return path


def load_camera_bundle(path: PathLike) -> CameraBundle:
    return parse_model(CameraBundle, read_json(path), str(path))


def save_camera_bundle(path: PathLike, bundle: CameraBundle) -> Path:
    return write_json(path, bundle.model_dump(mode='json', exclude_none=True))


def load_correspondences(path: PathLike) -> CorrespondenceFile:
    return parse_model(CorrespondenceFile, read_json(path), str(path))


def save_correspondences(path: PathLike, data: CorrespondenceFile) -> Path:
    return write_json(path, data.model_dump(mode='json', exclude_none=True))


def save_curve(path: PathLike, frame: int, curve: Union[Curve3D, np.ndarray]) -> Path:
    points = curve.points if isinstance(curve, Curve3D) else np.asarray(curve, dtype=float)
    record = CurveRecord(frame=frame, points=[tuple(p) for p in points.tolist()])
    return write_json(path, record.model_dump(mode='json'))


def load_curve(path: PathLike) -> Tuple[int, Curve3D]:
    record = parse_model(CurveRecord, read_json(path), str(path))
    return (record.frame, Curve3D(np.asarray(record.points, dtype=float)))


def load_truth(directory: PathLike) -> Dict[int, Curve3D]:
    curves = {}
    for path in sorted(Path(directory).glob('*.json')):
        frame, curve = load_curve(path)
        curves[frame] = curve
    return curves


def write_frame(path: PathLike, frame: np.ndarray) -> Path:
    """8-bit binary PGM of a [0, 1] frame."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(pixels).save(path, format='PPM')
    return path


def read_frame(path: PathLike) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert('L'), dtype=float) / 255.0
    except FileNotFoundError:
        raise ParseError(f'file not found: {path}')


def export_json_schema(output_path: PathLike='docs/annotation_schema.json') -> Path:
    return write_json(output_path, AnnotationFile.model_json_schema(by_alias=True))
