from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Optional, Tuple
import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator
from src.geometry import CameraParameters, Polyline2D

SCHEMA_VERSION = 1
GuidewireType = Literal['angled', 'straight']
ViewId = Literal['A', 'B']


class FrameAnnotation(BaseModel):
    frame: int = Field(..., ge=0, description='Frame index within the video')
    view: ViewId = Field(..., description='Imaging plane the polyline was drawn on')
    polyline: List[Tuple[float, float]] = Field(..., description='Tip-first [x_px, y_px] vertices')

    class Config:
        json_schema_extra = {'example': {'frame': 0, 'view': 'A', 'polyline': [[512.0, 300.5], [514.2, 310.0], [520.0, 321.7]]}}


class AnnotationFile(BaseModel):
    schema_version: int = Field(SCHEMA_VERSION, alias='schema', description='Annotation schema version')
    video_id: str = Field(..., min_length=1)
    guidewire_type: GuidewireType = Field(..., description='angled (Radifocus-like) or straight (Nitrex-like)')
    fluid: bool = Field(..., description='Whether the sequence was recorded with simulated blood flow')
    image_size: Tuple[int, int] = Field((1024, 1024), description='Width and height of the annotated images (px)')
    frames: List[FrameAnnotation] = Field(default_factory=list)

    @field_validator('schema_version')
    @classmethod
    def check_version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f'unsupported schema version {v}, expected {SCHEMA_VERSION}')
        return v

    class Config:
        populate_by_name = True
        json_schema_extra = {'example': {'schema': 1, 'video_id': 'video_000', 'guidewire_type': 'angled', 'fluid': True, 'image_size': [1024, 1024], 'frames': [{'frame': 0, 'view': 'A', 'polyline': [[512.0, 300.5], [514.2, 310.0]]}]}}


@dataclass(frozen=True)
class AnnotationRecord:
    frame_index: int
    view_id: str
    polyline: np.ndarray
    guidewire_type: str
    fluid: bool

    def to_polyline(self) -> Polyline2D:
        return Polyline2D(self.polyline, view_id=self.view_id, frame_index=self.frame_index)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AnnotationRecord):
            return NotImplemented
        return (self.frame_index, self.view_id, self.guidewire_type, self.fluid) == (other.frame_index, other.view_id, other.guidewire_type, other.fluid) and np.array_equal(self.polyline, other.polyline)


class ManifestEntry(BaseModel):
    video_id: str = Field(..., min_length=1)
    guidewire_type: GuidewireType
    fluid: bool
    frame_count: int = Field(..., ge=0, description='Number of annotated samples in the video')
    annotation_path: str = Field(..., description='Annotation JSON, relative to the manifest')
    camera_bundle_path: str = Field(..., description='Directory holding A.json and B.json camera bundles, relative to the manifest')


class Manifest(BaseModel):
    schema_version: int = Field(SCHEMA_VERSION, alias='schema')
    videos: List[ManifestEntry] = Field(default_factory=list)

    @field_validator('videos')
    @classmethod
    def unique_ids(cls, v):
        seen = set()
        for entry in v:
            if entry.video_id in seen:
                raise ValueError(f'duplicate video_id {entry.video_id!r}')
            seen.add(entry.video_id)
        return v

    class Config:
        populate_by_name = True


class CameraBundle(BaseModel):
    view_id: ViewId
    K: List[float] = Field(..., min_length=9, max_length=9, description='Row-major intrinsics')
    R: List[float] = Field(..., min_length=9, max_length=9, description='Row-major rotation')
    t: List[float] = Field(..., min_length=3, max_length=3, description='Translation (mm)')
    P: List[float] = Field(..., min_length=12, max_length=12, description='Row-major projection matrix')
    lwm: Optional[Dict[str, Any]] = Field(None, description='Local weighted mean undistortion model')
    image_size: Optional[Tuple[int, int]] = None
    rms_px: Optional[float] = Field(None, ge=0, description='RMS reprojection error of the calibration (px)')

    @classmethod
    def from_camera(cls, camera: CameraParameters, view_id: str, rms_px: Optional[float]=None) -> 'CameraBundle':
        lwm = camera.distortion.to_dict() if camera.distortion is not None else None
        size = tuple(camera.image_size) if camera.image_size is not None else None
        return cls(view_id=view_id, K=camera.K.ravel().tolist(), R=camera.R.ravel().tolist(), t=camera.t.tolist(), P=camera.P.ravel().tolist(), lwm=lwm, image_size=size, rms_px=rms_px)

    def to_camera(self) -> CameraParameters:
        from src.calibration.lwm import LwmModel
        distortion = LwmModel.from_dict(self.lwm) if self.lwm else None
        return CameraParameters(K=np.reshape(self.K, (3, 3)), R=np.reshape(self.R, (3, 3)), t=np.asarray(self.t), P=np.reshape(self.P, (3, 4)), distortion=distortion, image_size=self.image_size)


class GridPoint(BaseModel):
    distorted: Tuple[float, float]
    true: Tuple[float, float]


class CorrespondenceFile(BaseModel):
    view_id: ViewId
    world: List[Tuple[float, float, float]] = Field(..., description='Calibration object points (mm)')
    image: List[Tuple[float, float]] = Field(..., description='Detected marker pixels, same order as world')
    grid: List[GridPoint] = Field(default_factory=list, description='Optional undistortion grid (distorted -> true pixels)')
    image_size: Optional[Tuple[int, int]] = None

    @model_validator(mode='after')
    def check_lengths(self):
        if len(self.world) != len(self.image):
            raise ValueError(f'world has {len(self.world)} points but image has {len(self.image)}')
        return self

    @property
    def correspondences(self) -> Tuple[np.ndarray, np.ndarray]:
        return (np.asarray(self.world, dtype=float).reshape(-1, 3), np.asarray(self.image, dtype=float).reshape(-1, 2))

    @property
    def grid_correspondences(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        if not self.grid:
            return None
        return (np.array([g.distorted for g in self.grid], dtype=float), np.array([g.true for g in self.grid], dtype=float))


class CurveRecord(BaseModel):
    frame: int = Field(..., ge=0)
    points: List[Tuple[float, float, float]] = Field(..., min_length=2, description='Tip-first 3D points (mm)')


class CompositionTable(BaseModel):
    cells: Dict[str, Dict[str, int]] = Field(..., description='fluid row -> guidewire type -> samples')
    type_totals: Dict[str, int]
    fluid_totals: Dict[str, int]
    total: int
    paired: int = Field(..., description='Paired with/without-fluid instances')
    videos: int = 0

    def rows(self) -> List[List[Any]]:
        out = []
        for fluid in ('w fluid', 'w/o fluid'):
            out.append([fluid, self.cells[fluid]['angled'], self.cells[fluid]['straight'], self.fluid_totals[fluid]])
        out.append(['Total', self.type_totals['angled'], self.type_totals['straight'], self.total])
        return out
