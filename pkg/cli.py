import argparse
import json
import logging
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple
import numpy as np
from colorama import init, Fore, Style
from pydantic import ValidationError
sys.path.insert(0, os.path.dirname(__file__))
from src.config import Config, LOG_LEVELS
from src.errors import ConfigError, DomainError, GeometryError, InputError, WireReconError
init(autoreset=True)
logger = logging.getLogger('wirerecon.cli')

VIEWS = ['A', 'B']


def print_banner(title: str):
    print(f"\n{Fore.CYAN}{'=' * 70}\n{Fore.CYAN}  wirerecon {title}\n{Fore.CYAN}{'=' * 70}{Style.RESET_ALL}")


def print_success(message: str):
    print(f'{Fore.GREEN}{message}{Style.RESET_ALL}')


def print_warning(message: str):
    print(f'{Fore.YELLOW}{message}{Style.RESET_ALL}')


def print_error(message: str):
    print(f'{Fore.RED}Error: {message}{Style.RESET_ALL}', file=sys.stderr)


def package_versions() -> Dict[str, str]:
    import matplotlib
    import pydantic
    import scipy
    return {'python': platform.python_version(), 'numpy': np.__version__, 'scipy': scipy.__version__, 'pydantic': pydantic.VERSION, 'matplotlib': matplotlib.__version__}


def write_run_record(out_dir: Path, args: argparse.Namespace) -> Path:
    """Provenance sidecar: command, arguments, seed and package versions."""
    record = {'command': args.command, 'args': {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k not in ('func', 'command')}, 'seed': args.seed, 'versions': package_versions()}
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / 'run.json'
    with open(path, 'w') as f:
        json.dump(record, f, indent=2)
        f.write('\n')
    return path


def load_config_file(model: type, path: Optional[str]):
    from src.schemas.validators import parse_model, read_json
    if path is None:
        return model()
    return parse_model(model, read_json(path), path)


def output_path(args: argparse.Namespace, explicit: Optional[str]) -> Path:
    return Path(explicit) if explicit else Path(args.output_dir)


def cmd_calibrate(args: argparse.Namespace) -> int:
    from src.calibration import RansacConfig, calibrate_view
    from src.schemas import CameraBundle, load_correspondences, save_camera_bundle
    data = load_correspondences(args.correspondences)
    view_id = args.view or data.view_id
    ransac = RansacConfig(iterations=args.ransac_iterations, inlier_threshold=args.ransac_threshold, seed=args.seed)
    print_banner(f'calibrate view {view_id}')
    camera, report = calibrate_view(data.correspondences, ransac=ransac, grid_correspondences=data.grid_correspondences, neighborhood_n=args.lwm_neighborhood, refine=not args.no_refine, image_size=data.image_size)
    out = Path(args.out) if args.out else Path(args.output_dir) / f'cam_{view_id}.json'
    save_camera_bundle(out, CameraBundle.from_camera(camera, view_id, rms_px=report['rms_px']))
    write_run_record(out.parent, args)
    print_success(f"RMS reprojection error: {report['rms_px']:.6g} px ({report['inliers']}/{report['total']} inliers)")
    print(f'Camera bundle: {out}')
    return 0


def pair_frames(records) -> Tuple[Dict[int, Dict[str, Any]], List[int]]:
    frames: Dict[int, Dict[str, Any]] = {}
    for rec in records:
        frames.setdefault(rec.frame_index, {})[rec.view_id] = rec.to_polyline()
    paired = {k: v for k, v in frames.items() if set(v) == set(VIEWS)}
    unpaired = sorted((k for k in frames if k not in paired))
    return (paired, unpaired)


def cmd_reconstruct(args: argparse.Namespace) -> int:
    from src.generators import ChartGenerator
    from src.reconstruction import StereoRig, reconstruct_curve, reprojection_profile, summarize_profiles, write_profile_csv, write_profile_summary_csv
    from src.schemas import load_annotations, load_camera_bundle, save_curve
    if not args.delta_u > 0:
        raise DomainError(f'--delta-u must be positive, got {args.delta_u}')
    if not args.delta_u_px > 0:
        raise DomainError(f'--delta-u-px must be positive, got {args.delta_u_px}')
    if args.jobs < 1:
        raise DomainError(f'--jobs must be at least 1, got {args.jobs}')
    records = load_annotations(args.annotations)
    rig = StereoRig.from_cameras(load_camera_bundle(args.cam_a).to_camera(), load_camera_bundle(args.cam_b).to_camera())
    paired, unpaired = pair_frames(records)
    if not paired:
        raise GeometryError(f'no paired view: {args.annotations} has no frame annotated in both views')
    out_dir = output_path(args, args.out)
    print_banner(f'reconstruct {len(paired)} frame(s)')

    def run(frame: int):
        polys = paired[frame]
        try:
            curve = reconstruct_curve(rig, polys['A'], polys['B'], args.delta_u, args.delta_u_px, args.smoothing_sigma)
            return (frame, curve, reprojection_profile(rig, curve, polys['A'], polys['B']), None)
        except GeometryError as e:
            return (frame, None, None, e)
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(run, sorted(paired)))
    profiles = []
    failed = [(k, 'no paired view') for k in unpaired]
    for frame, curve, profile, error in results:
        if error is not None:
            failed.append((frame, f'{type(error).__name__}: {error}'))
            continue
        save_curve(out_dir / 'curves' / f'frame_{frame:04d}.json', frame, curve)
        profiles.append((frame, profile))
    write_profile_csv(out_dir / 'profile.csv', profiles)
    if profiles:
        summary = summarize_profiles([p for _, p in profiles])
        write_profile_summary_csv(out_dir / 'profile_summary.csv', summary)
        ChartGenerator().generate_profile_chart(summary, out_dir / 'profile.svg')
    write_run_record(out_dir, args)
    print_success(f'Reconstructed {len(profiles)} frame(s) into {out_dir}')
    if failed:
        for frame, reason in sorted(failed):
            print_warning(f'  frame {frame}: {reason}')
        print_error(f'{len(failed)} frame(s) failed: {[k for k, _ in sorted(failed)]}')
        return GeometryError.exit_code
    return 0


def training_config(args: argparse.Namespace):
    from src.ml import TrainingConfig
    cfg = load_config_file(TrainingConfig, args.config)
    update: Dict[str, Any] = {'seed': args.seed}
    for key in ('representation', 'max_epochs'):
        if getattr(args, key, None) is not None:
            update[key] = getattr(args, key)
    return TrainingConfig(**{**cfg.model_dump(), **update})


def manifest_in(data_dir: str) -> Path:
    path = Path(data_dir)
    return path if path.suffix == '.json' else path / 'manifest.json'


def cmd_train(args: argparse.Namespace) -> int:
    from src.generators import ChartGenerator
    from src.ml import train, write_log_csv
    from src.ml.dataset import load_sequences
    cfg = training_config(args)
    sequences = load_sequences(manifest_in(args.data), cfg.radius, cfg.max_segments, cfg.seq_len)
    out_dir = output_path(args, args.out)
    print_banner(f'train ({cfg.representation}) on {len(sequences)} sequence(s)')
    result = train(sequences, cfg)
    result.params.save(out_dir / 'model.json')
    write_log_csv(out_dir / 'training_log.csv', result.log)
    if result.log:
        ChartGenerator().generate_training_curve(result.log, out_dir / 'training_curve.svg')
    write_run_record(out_dir, args)
    print_success(f'Loss {result.initial_train_loss:.4f} -> {result.final_train_loss:.4f}; best epoch {result.best_epoch} of {len(result.log)}')
    print(f"Checkpoint: {out_dir / 'model.json'}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    from src.metrics import summarize_metrics, write_metrics_csv
    from src.ml import ModelParams, evaluate_model
    from src.ml.dataset import load_sequences
    params = ModelParams.load(args.model)
    representation = args.representation or params.dims.representation
    if representation != params.dims.representation:
        raise InputError(f'--representation {representation} does not match the {params.dims.representation} checkpoint {args.model}')
    seq_len = args.seq_len or params.dims.seq_len
    sequences = load_sequences(manifest_in(args.data), params.dims.radius, params.dims.max_segments, seq_len)
    out_dir = output_path(args, args.out)
    print_banner(f'eval ({representation}) on {len(sequences)} sequence(s)')
    metrics = evaluate_model(params, sequences, params.dims.radius, args.stop_threshold)
    path = write_metrics_csv(out_dir / f'metrics_{representation}.csv', list(enumerate(metrics)))
    write_run_record(out_dir, args)
    for name, (mean, std) in summarize_metrics(metrics).items():
        print(f'  {name:8s} {mean:8.3f} ± {std:.3f} mm')
    print_success(f'Metrics: {path}')
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    from src.synthetic import SynthConfig, write_synthetic_dump
    if args.videos < 1:
        raise DomainError(f'--videos must be at least 1, got {args.videos}')
    if args.frames < 1:
        raise DomainError(f'--frames must be at least 1, got {args.frames}')
    cfg = load_config_file(SynthConfig, args.params)
    out_dir = output_path(args, args.out)
    print_banner(f'synth {args.videos} video(s) x {args.frames} frame(s)')
    manifest = write_synthetic_dump(out_dir, cfg, args.videos, args.frames, seed=args.seed)
    write_run_record(out_dir, args)
    print_success(f'Manifest: {manifest}')
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    from src.schemas import format_stats_table, load_manifest, manifest_stats, write_stats_csv
    table = manifest_stats(load_manifest(args.manifest, check_paths=not args.no_check_paths))
    print_banner('dataset composition')
    print(format_stats_table(table))
    out_dir = Path(args.output_dir)
    write_stats_csv(out_dir / 'stats.csv', table)
    write_run_record(out_dir, args)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    from src.evaluation import METRIC_LABELS, RepresentationComparison
    from src.generators import ChartGenerator
    from src.metrics import METRIC_FIELDS, summarize_metrics
    comparison = RepresentationComparison.from_csv(args.cartesian, args.spherical)
    out_dir = output_path(args, args.out)
    print_banner('shape comparison (mm)')
    header = ['representation'] + [METRIC_LABELS[k] for k in METRIC_FIELDS]
    print('  '.join((h.ljust(24) if i == 0 else h.rjust(16) for i, h in enumerate(header))))
    for row in comparison.summary_table():
        print('  '.join((v.ljust(24) if i == 0 else v.rjust(16) for i, v in enumerate(row))))
    analysis_path, report_path = comparison.export_analysis(out_dir)
    ChartGenerator().generate_metric_comparison({'cartesian': summarize_metrics(comparison.control), 'spherical': summarize_metrics(comparison.treatment)}, out_dir / 'comparison.svg')
    write_run_record(out_dir, args)
    print_success(f'Report: {report_path}')
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='wirerecon', description='Bi-planar guidewire reconstruction and shape prediction.')
    parser.add_argument('--seed', type=int, default=Config.SEED)
    parser.add_argument('--output-dir', default=Config.OUTPUT_DIR)
    parser.add_argument('--log-level', choices=LOG_LEVELS, type=str.upper, default=None)
    sub = parser.add_subparsers(dest='command', required=True)
    p = sub.add_parser('calibrate', help='Estimate a view camera from 3D-2D correspondences')
    p.add_argument('--correspondences', required=True)
    p.add_argument('--view', choices=VIEWS, default=None)
    p.add_argument('--ransac-threshold', type=float, default=Config.RANSAC_THRESHOLD_PX)
    p.add_argument('--ransac-iterations', type=int, default=Config.RANSAC_ITERATIONS)
    p.add_argument('--lwm-neighborhood', type=int, default=Config.LWM_NEIGHBORHOOD)
    p.add_argument('--no-refine', action='store_true')
    p.add_argument('--out', default=None)
    p.set_defaults(func=cmd_calibrate)
    p = sub.add_parser('reconstruct', help='Triangulate 3D curves from paired annotations')
    p.add_argument('--annotations', required=True)
    p.add_argument('--cam-a', required=True)
    p.add_argument('--cam-b', required=True)
    p.add_argument('--delta-u', type=float, default=Config.DELTA_U_MM)
    p.add_argument('--delta-u-px', type=float, default=Config.DELTA_U_PX)
    p.add_argument('--smoothing-sigma', type=float, default=0.0)
    p.add_argument('--jobs', type=int, default=1)
    p.add_argument('--out', default=None)
    p.set_defaults(func=cmd_reconstruct)
    p = sub.add_parser('train', help='Train the shape predictor')
    p.add_argument('--data', required=True)
    p.add_argument('--config', default=None)
    p.add_argument('--representation', choices=['spherical', 'cartesian'], default=None)
    p.add_argument('--max-epochs', type=int, default=None)
    p.add_argument('--out', default=None)
    p.set_defaults(func=cmd_train)
    p = sub.add_parser('eval', help='Shape metrics of a trained model')
    p.add_argument('--model', required=True)
    p.add_argument('--data', required=True)
    p.add_argument('--representation', choices=['spherical', 'cartesian'], default=None)
    p.add_argument('--stop-threshold', type=float, default=Config.STOP_THRESHOLD)
    p.add_argument('--seq-len', type=int, default=None, help='Frames per sequence (default: the checkpoint value)')
    p.add_argument('--out', default=None)
    p.set_defaults(func=cmd_eval)
    p = sub.add_parser('synth', help='Write a synthetic dataset dump')
    p.add_argument('--params', default=None)
    p.add_argument('--videos', type=int, default=10)
    p.add_argument('--frames', type=int, default=20)
    p.add_argument('--out', default=None)
    p.set_defaults(func=cmd_synth)
    p = sub.add_parser('stats', help='Dataset composition table')
    p.add_argument('--manifest', required=True)
    p.add_argument('--no-check-paths', action='store_true')
    p.set_defaults(func=cmd_stats)
    p = sub.add_parser('compare', help='Cartesian vs spherical metric comparison')
    p.add_argument('--cartesian', required=True)
    p.add_argument('--spherical', required=True)
    p.add_argument('--out', default=None)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[List[str]]=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        Config.validate()
    except ConfigError as e:
        print_error(str(e))
        return e.exit_code
    Config.configure_logging(args.log_level)
    try:
        return args.func(args)
    except WireReconError as e:
        logger.error(f'{args.command} failed: {e}')
        print_error(str(e))
        return e.exit_code
    except ValidationError as e:
        print_error('; '.join((f"{' -> '.join((str(x) for x in err['loc']))}: {err['msg']}" for err in e.errors())))
        return InputError.exit_code
    except KeyboardInterrupt:
        return 130
    except Exception as e:
        logger.exception(f'{args.command} failed unexpectedly')
        print_error(str(e))
        return 1


if __name__ == '__main__':
    raise SystemExit(main())
