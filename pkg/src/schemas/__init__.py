from .annotation import AnnotationFile, AnnotationRecord, FrameAnnotation, Manifest, ManifestEntry, CameraBundle, CorrespondenceFile, GridPoint, CurveRecord, CompositionTable
from .chart_spec import ChartSpec, Series
from .validators import ValidationResult, flatten_errors, validate_annotation_data, load_annotation_file, load_annotations, save_annotations, load_manifest, save_manifest, manifest_stats, format_stats_table, write_stats_csv, load_camera_bundle, save_camera_bundle, load_correspondences, save_correspondences, save_curve, load_curve, load_truth, write_frame, read_frame, export_json_schema
__all__ = ['AnnotationFile', 'AnnotationRecord', 'FrameAnnotation', 'Manifest', 'ManifestEntry', 'CameraBundle', 'CorrespondenceFile', 'GridPoint', 'CurveRecord', 'CompositionTable', 'ChartSpec', 'Series', 'ValidationResult', 'flatten_errors', 'validate_annotation_data', 'load_annotation_file', 'load_annotations', 'save_annotations', 'load_manifest', 'save_manifest', 'manifest_stats', 'format_stats_table', 'write_stats_csv', 'load_camera_bundle', 'save_camera_bundle', 'load_correspondences', 'save_correspondences', 'save_curve', 'load_curve', 'load_truth', 'write_frame', 'read_frame', 'export_json_schema']
