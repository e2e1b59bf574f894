import unittest
import tempfile
import shutil
from pathlib import Path
import sys
import numpy as np
sys.path.insert(0, str(Path(__file__).parent.parent))
from src.errors import DegenerateAngle, OutOfBounds
from src.geometry import Curve3D, project_points
from src.schemas import load_annotations, load_manifest, load_truth, read_frame
from src.synthetic import CurveGenParams, SynthConfig, annotate, gen_curve, gen_trajectory, make_camera_pair, make_desk_dataset, render_frame, render_sequence, synthesize_video, write_synthetic_dump


def segments_intersect(points: np.ndarray) -> bool:
    a = points[:-1]
    d = np.diff(points, axis=0)
    n = len(d)
    for i in range(n - 2):
        j = np.arange(i + 2, n)
        denom = d[i, 0] * d[j, 1] - d[i, 1] * d[j, 0]
        w = a[j] - a[i]
        with np.errstate(divide='ignore', invalid='ignore'):
            s = (w[:, 0] * d[j, 1] - w[:, 1] * d[j, 0]) / denom
            t = (w[:, 0] * d[i, 1] - w[:, 1] * d[i, 0]) / denom
        if np.any((denom != 0) & (s > 0) & (s < 1) & (t > 0) & (t < 1)):
            return True
    return False


class TestCameraPair(unittest.TestCase):

    def test_geometry(self):
        rig = make_camera_pair(np.pi / 2, 1000.0, 1000.0)
        a = rig.cam_a.center
        b = rig.cam_b.center
        self.assertAlmostEqual(np.linalg.norm(a), 1000.0, places=6)
        self.assertAlmostEqual(float(a @ b), 0.0, places=6)
        self.assertEqual(np.linalg.matrix_rank(rig.fundamental, tol=1e-10), 2)

    def test_origin_projects_to_image_center(self):
        rig = make_camera_pair(image_size=1024)
        for cam in (rig.cam_a, rig.cam_b):
            np.testing.assert_allclose(project_points(cam, np.zeros((1, 3)))[0], [512.0, 512.0], atol=1e-09)

    def test_zero_angle(self):
        with self.assertRaises(DegenerateAngle):
            make_camera_pair(0.0)


class TestCurveGeneration(unittest.TestCase):

    def test_deterministic(self):
        params = CurveGenParams(seed=42)
        np.testing.assert_array_equal(gen_curve(params).points, gen_curve(params).points)

    def test_lengths_within_range(self):
        for seed in range(200):
            params = CurveGenParams(seed=seed, length_range=(50.0, 120.0))
            length = gen_curve(params).length
            self.assertGreaterEqual(length, 50.0 - 1e-06)
            self.assertLessEqual(length, 120.0 + 1e-06)

    def test_loops_cross_in_projection(self):
        rig = make_camera_pair()
        for seed in range(5):
            curve = gen_curve(CurveGenParams(seed=seed, loop_probability=1.0))
            crossed = [segments_intersect(project_points(cam, curve.points)) for cam in (rig.cam_a, rig.cam_b)]
            self.assertTrue(any(crossed), f'seed {seed}')

    def test_invalid_length_range(self):
        with self.assertRaises(ValueError):
            CurveGenParams(length_range=(20.0, 10.0))

    def test_trajectory_is_tip_first_and_growing(self):
        path = gen_curve(CurveGenParams(seed=1))
        frames = gen_trajectory(path, 5)
        lengths = [c.length for c in frames]
        self.assertTrue(all(np.diff(lengths) > 0))
        self.assertAlmostEqual(lengths[-1], path.length, places=6)
        for c in frames:
            np.testing.assert_allclose(c.points[-1], path.points[-1], atol=1e-09)


class TestRendering(unittest.TestCase):

    def test_vertical_stroke_stays_in_one_band(self):
        frame = render_frame(np.array([[32.3, 5.0], [32.3, 60.0]]), 64)
        columns = np.nonzero(frame.max(axis=0) > 0)[0]
        self.assertLessEqual(columns.max() - columns.min(), 1)
        self.assertTrue(np.all(frame <= 1.0))

    def test_marker_brightens_distal_end(self):
        frame = render_frame(np.array([[10.5, 10.5], [10.5, 40.5]]), 64, wire_intensity=0.3, marker_px=3.0)
        np.testing.assert_allclose(frame[10:14, 10], 1.0)
        self.assertAlmostEqual(frame[20, 10], 0.3)
        self.assertEqual(frame[20, 12], 0.0)
        self.assertEqual(np.unravel_index(np.argmax(frame), frame.shape), (10, 10))

    def test_noise_free_annotation_is_exact(self):
        rig = make_camera_pair()
        curve = gen_curve(CurveGenParams(seed=3))
        poly = annotate(curve, rig.cam_a, 1024, 'A', 0)
        self.assertLess(np.abs(poly.points - project_points(rig.cam_a, curve.points)).max(), 1e-12)

    def test_sequence_windows(self):
        rig = make_camera_pair()
        trajectory = gen_trajectory(gen_curve(CurveGenParams(seed=4)), 6)
        samples = render_sequence(trajectory, rig, frame_size=32, seq_len=3)
        self.assertEqual(len(samples), 6)
        self.assertEqual(samples[0].frames_a.shape, (3, 32, 32))
        np.testing.assert_array_equal(samples[0].frames_a[0], samples[0].frames_a[2])
        np.testing.assert_array_equal(samples[5].frames_a[1], samples[4].frames_a[2])

    def test_out_of_view(self):
        cfg = SynthConfig(image_size=8, frame_size=8)
        rig = make_camera_pair(image_size=8)
        with self.assertRaises(OutOfBounds):
            synthesize_video(cfg, rig, 3, seed=0, max_attempts=3)


class TestDeskDataset(unittest.TestCase):

    def test_shapes_and_targets(self):
        data = make_desk_dataset(6, seq_len=4, max_segments=16, seed=2)
        self.assertEqual(len(data), 6)
        for sample in data:
            self.assertEqual(sample.frames.shape, (4, 64, 64))
            self.assertGreater(sample.frames.max(), 0.0)
            self.assertLessEqual(sample.target.length, 16)
            np.testing.assert_allclose(sample.target.tip, sample.truth.tip, atol=1e-12)

    def test_deterministic(self):
        a = make_desk_dataset(3, seed=9)
        b = make_desk_dataset(3, seed=9)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.frames, y.frames)
            np.testing.assert_array_equal(x.target.offsets, y.target.offsets)


class TestSyntheticDump(unittest.TestCase):

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_layout(self):
        manifest_path = write_synthetic_dump(self.test_dir, SynthConfig(), n_videos=3, n_frames=4, seed=1)
        manifest = load_manifest(manifest_path)
        self.assertEqual([e.video_id for e in manifest.videos], ['video_000', 'video_001', 'video_002'])
        self.assertEqual([e.guidewire_type for e in manifest.videos], ['angled', 'straight', 'angled'])
        self.assertEqual([e.fluid for e in manifest.videos], [True, True, False])
        root = Path(self.test_dir)
        self.assertTrue((root / 'cameras' / 'A.json').exists())
        self.assertTrue((root / 'cameras' / 'B.json').exists())
        records = load_annotations(root / 'videos' / 'video_000' / 'annotations.json')
        self.assertEqual(len(records), 8)
        self.assertEqual([(r.frame_index, r.view_id) for r in records[:2]], [(0, 'A'), (0, 'B')])
        truth = load_truth(root / 'videos' / 'video_000' / 'truth')
        self.assertEqual(sorted(truth), [0, 1, 2, 3])
        self.assertIsInstance(truth[0], Curve3D)
        frame = read_frame(root / 'videos' / 'video_000' / 'frames' / 'A_0003.pgm')
        self.assertEqual(frame.shape, (64, 64))
        self.assertLessEqual(frame.max(), 1.0)

    def test_reproducible(self):
        first = write_synthetic_dump(Path(self.test_dir) / 'a', SynthConfig(), n_videos=2, n_frames=2, seed=5)
        second = write_synthetic_dump(Path(self.test_dir) / 'b', SynthConfig(), n_videos=2, n_frames=2, seed=5)
        for rel in ('manifest.json', 'videos/video_001/annotations.json', 'videos/video_001/truth/0001.json'):
            self.assertEqual((first.parent / rel).read_text(), (second.parent / rel).read_text())
if __name__ == '__main__':
    unittest.main()
