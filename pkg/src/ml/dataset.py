"""Training sequences: batching, deterministic splits and loading from a dataset dump."""
import logging
from pathlib import Path
from typing import Iterator, List, Sequence, Tuple, Union
import numpy as np
from src.curve_repr import SphericalCurve, encode
from src.errors import DimensionMismatch, EmptyDataset, RadiusTooLarge
from src.schemas.validators import load_manifest, load_truth, read_frame
from src.synthetic import DeskSequence
logger = logging.getLogger(__name__)


def stack_frames(samples: Sequence[DeskSequence]) -> np.ndarray:
    shapes = {s.frames.shape for s in samples}
    if len(shapes) != 1:
        raise DimensionMismatch(f'sequences have mixed frame shapes {sorted(shapes)}')
    return np.stack([s.frames for s in samples]).astype(float)


def split_dataset(samples: Sequence[DeskSequence], val_fraction: float, seed: int=0) -> Tuple[List[DeskSequence], List[DeskSequence]]:
    if not samples:
        raise EmptyDataset('dataset is empty')
    order = np.random.default_rng(seed).permutation(len(samples))
    n_val = int(round(val_fraction * len(samples)))
    if val_fraction > 0:
        n_val = min(max(n_val, 1), len(samples) - 1)
    train = [samples[i] for i in sorted(order[n_val:])]
    val = [samples[i] for i in sorted(order[:n_val])]
    if not train or (val_fraction > 0 and not val):
        raise EmptyDataset(f'cannot split {len(samples)} sequence(s) into nonempty train and validation sets')
    return (train, val)


def iterate_batches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        # sorted so gradient accumulation order is fixed within a batch
        yield np.sort(order[start:start + batch_size])


def truncate_target(target: SphericalCurve, max_segments: int) -> SphericalCurve:
    if target.length <= max_segments:
        return target
    return SphericalCurve(tip=target.tip, radius=target.radius, offsets=target.offsets[:max_segments])


def sequence_windows(frames: np.ndarray, seq_len: int) -> List[np.ndarray]:
    """Window k holds frames k-seq_len+1..k, padded by repeating frame 0."""
    return [np.stack([frames[max(j, 0)] for j in range(k - seq_len + 1, k + 1)]) for k in range(len(frames))]


def load_sequences(manifest_path: Union[str, Path], radius: float=2.0, max_segments: int=64, seq_len: int=4) -> List[DeskSequence]:
    """Build training sequences from a dump written by the `synth` command.

    Each video contributes one sequence per frame: view-A frames ending at that
    frame and the encoded ground-truth curve of that frame as target.
    """
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    root = manifest_path.parent
    sequences = []
    for entry in manifest.videos:
        video_dir = (root / entry.annotation_path).parent
        truth_dir = video_dir / 'truth'
        frame_dir = video_dir / 'frames'
        if not truth_dir.is_dir() or not frame_dir.is_dir():
            logger.warning(f'video {entry.video_id} has no truth/frames directory, skipping')
            continue
        truths = load_truth(truth_dir)
        frames = np.stack([read_frame(frame_dir / f'A_{k:04d}.pgm') for k in sorted(truths)])
        for window, k in zip(sequence_windows(frames, seq_len), sorted(truths)):
            try:
                target = truncate_target(encode(truths[k], radius), max_segments)
            except RadiusTooLarge:
                logger.warning(f'video {entry.video_id} frame {k} is shorter than one step of {radius} mm, skipping')
                continue
            sequences.append(DeskSequence(frames=window, target=target, truth=truths[k]))
    if not sequences:
        raise EmptyDataset(f'no training sequences found under {root}')
    logger.info(f'Loaded {len(sequences)} sequence(s) from {len(manifest.videos)} video(s)')
    return sequences
