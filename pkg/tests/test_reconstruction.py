import unittest
import tempfile
import shutil
from pathlib import Path
import sys
import numpy as np
sys.path.insert(0, str(Path(__file__).parent.parent))
from src.errors import BehindCamera, CoincidentCenters, DomainError, NoOverlap
from src.geometry import Curve3D, Polyline2D, project, project_points, rotation_matrix
from src.metrics import compare_shapes
from src.reconstruction import ReprojectionProfile, StereoRig, match_polylines, reconstruct_curve, reprojection_profile, summarize_profiles, triangulate, triangulate_points, write_profile_csv, write_profile_summary_csv
from src.synthetic import CurveGenParams, annotate, gen_curve, make_camera_pair, make_desk_rig


def vertical_helix(radius: float=20.0, height: float=40.0, turns: float=2.0, n: int=400) -> Curve3D:
    t = np.linspace(0, 2 * np.pi * turns, n)
    return Curve3D(np.column_stack([radius * np.cos(t), np.linspace(-height / 2, height / 2, n), radius * np.sin(t)]))


def views(rig: StereoRig, curve: Curve3D):
    return (Polyline2D(project_points(rig.cam_a, curve.points), 'A'), Polyline2D(project_points(rig.cam_b, curve.points), 'B'))


class TestStereoRig(unittest.TestCase):

    def setUp(self):
        self.rig = make_camera_pair()
        self.world = np.random.default_rng(0).uniform(-100, 100, size=(100, 3))

    def epipolar_residuals(self, rig: StereoRig, world: np.ndarray) -> np.ndarray:
        x_a = np.column_stack([project_points(rig.cam_a, world), np.ones(len(world))])
        x_b = np.column_stack([project_points(rig.cam_b, world), np.ones(len(world))])
        return np.abs(np.einsum('ij,jk,ik->i', x_b, rig.fundamental, x_a))

    def test_epipolar_constraint(self):
        self.assertLess(self.epipolar_residuals(self.rig, self.world).max(), 1e-09)

    def test_fundamental_rank(self):
        self.assertEqual(np.linalg.matrix_rank(self.rig.fundamental, tol=1e-10), 2)

    def test_rigid_motion_invariance(self):
        R = rotation_matrix([1.0, 2.0, -0.5], 0.4)
        t = np.array([15.0, -5.0, 30.0])
        moved = self.rig.transformed(R, t)
        world = self.world @ R.T + t
        self.assertLess(self.epipolar_residuals(moved, world).max(), 1e-09)

    def test_coincident_centers(self):
        with self.assertRaises(CoincidentCenters):
            StereoRig.from_cameras(self.rig.cam_a, self.rig.cam_a)

    def test_camera_centers(self):
        a = self.rig.cam_a.center
        b = self.rig.cam_b.center
        self.assertAlmostEqual(np.linalg.norm(a), 1000.0, places=6)
        self.assertAlmostEqual(np.linalg.norm(b), 1000.0, places=6)
        self.assertAlmostEqual(np.degrees(np.arccos(a @ b / 1000000.0)), 90.0, places=6)


class TestMatching(unittest.TestCase):

    def setUp(self):
        self.rig = make_camera_pair()

    def test_pairs_share_a_world_point(self):
        poly_a, poly_b = views(self.rig, vertical_helix())
        match = match_polylines(self.rig, poly_a, poly_b, 1.0)
        self.assertGreater(len(match), 100)
        self.assertLess(match.residuals.max(), 1e-06)
        points = triangulate_points(self.rig, match.points_a, match.points_b)
        np.testing.assert_allclose(project_points(self.rig.cam_a, points), match.points_a, atol=1e-06)
        np.testing.assert_allclose(project_points(self.rig.cam_b, points), match.points_b, atol=1e-06)
        self.assertTrue(np.all(np.diff(match.s_b) > 0))

    def test_no_overlap(self):
        poly_a = Polyline2D(np.array([[400.0, 950.0], [420.0, 960.0]]), 'A')
        poly_b = Polyline2D(np.array([[400.0, 60.0], [420.0, 70.0]]), 'B')
        with self.assertRaises(NoOverlap):
            match_polylines(self.rig, poly_a, poly_b)

    def test_invalid_step(self):
        poly_a, poly_b = views(self.rig, vertical_helix())
        with self.assertRaises(DomainError):
            match_polylines(self.rig, poly_a, poly_b, 0.0)


class TestTriangulation(unittest.TestCase):

    def setUp(self):
        self.rig = make_camera_pair()

    def test_noise_free(self):
        X = np.array([10.0, 20.0, 30.0])
        np.testing.assert_allclose(triangulate(self.rig, project(self.rig.cam_a, X), project(self.rig.cam_b, X)), X, atol=1e-06)

    def test_noisy_median_error(self):
        rng = np.random.default_rng(7)
        errors = []
        for _ in range(1000):
            X = rng.uniform(-50, 50, size=3)
            x_a = project(self.rig.cam_a, X) + rng.normal(scale=0.5, size=2)
            x_b = project(self.rig.cam_b, X) + rng.normal(scale=0.5, size=2)
            errors.append(np.linalg.norm(triangulate(self.rig, x_a, x_b) - X))
        self.assertLess(np.median(errors), 1.0)

    def test_point_behind_camera_b(self):
        X = 2 * self.rig.cam_b.center
        h = self.rig.cam_b.P @ np.append(X, 1.0)
        with self.assertRaises(BehindCamera):
            triangulate(self.rig, project(self.rig.cam_a, X), h[:2] / h[2])


class TestReconstructCurve(unittest.TestCase):

    def test_helix_noise_free(self):
        rig = make_camera_pair()
        truth = vertical_helix()
        curve = reconstruct_curve(rig, *views(rig, truth), delta_u=2.0)
        self.assertLess(compare_shapes(curve, truth, 2.0).max_ed, 0.01)

    def test_straight_line_stays_collinear(self):
        rig = make_camera_pair()
        truth = Curve3D(np.linspace([-10.0, -30.0, -5.0], [12.0, 35.0, 8.0], 50))
        curve = reconstruct_curve(rig, *views(rig, truth), delta_u=2.0)
        direction = truth.points[-1] - truth.points[0]
        direction /= np.linalg.norm(direction)
        offsets = curve.points - truth.points[0]
        deviation = np.linalg.norm(offsets - np.outer(offsets @ direction, direction), axis=1)
        self.assertLess(deviation.max(), 1e-06)

    def test_generated_curves_noise_free(self):
        rig = make_camera_pair()
        failures = []
        for seed in range(100):
            # every fifth curve carries a loop
            truth = gen_curve(CurveGenParams(seed=seed, loop_probability=1.0 if seed % 5 == 0 else 0.0))
            curve = reconstruct_curve(rig, *views(rig, truth), delta_u=2.0)
            max_ed = compare_shapes(curve, truth, 2.0).max_ed
            if not max_ed < 0.001:
                failures.append((seed, max_ed))
        self.assertEqual(failures, [])

    def test_loop_follows_ordering_consistent_branch(self):
        rig = make_camera_pair()
        truth = gen_curve(CurveGenParams(seed=3, loop_probability=1.0))
        poly_a, poly_b = views(rig, truth)
        match = match_polylines(rig, poly_a, poly_b)
        self.assertTrue(np.all(np.diff(match.s_b) > 0))
        curve = reconstruct_curve(rig, poly_a, poly_b, delta_u=2.0)
        self.assertLess(compare_shapes(curve, truth, 2.0).max_ed, 0.001)

    def test_annotation_jitter_on_desk_rig(self):
        rig = make_desk_rig()
        truth = vertical_helix(radius=5.0, height=20.0)
        rng = np.random.default_rng(3)
        errors = []
        for k in range(20):
            poly_a = annotate(truth, rig.cam_a, 1024, 'A', k, noise_px=1.0, annotation_step_mm=1.0, rng=rng)
            poly_b = annotate(truth, rig.cam_b, 1024, 'B', k, noise_px=1.0, annotation_step_mm=1.0, rng=rng)
            curve = reconstruct_curve(rig, poly_a, poly_b, delta_u=1.0, delta_u_px=2.0, smoothing_sigma=2.0)
            errors.append(compare_shapes(curve, truth, 1.0).max_ed)
        self.assertLess(np.median(errors), 2.0)

    def test_invalid_spacing(self):
        rig = make_camera_pair()
        with self.assertRaises(DomainError):
            reconstruct_curve(rig, *views(rig, vertical_helix()), delta_u=0.0)


class TestReprojectionProfile(unittest.TestCase):

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.rig = make_camera_pair()
        self.truth = Curve3D(np.linspace([0.0, -20.0, 0.0], [0.0, 20.0, 0.0], 41))
        self.poly_a, self.poly_b = views(self.rig, self.truth)

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_noise_free_errors_vanish(self):
        curve = reconstruct_curve(self.rig, self.poly_a, self.poly_b, delta_u=2.0)
        profile = reprojection_profile(self.rig, curve, self.poly_a, self.poly_b)
        self.assertEqual(len(profile), len(curve))
        self.assertLess(profile.max_error, 1e-06)

    def test_lateral_shift_is_one_pixel(self):
        shifted = self.truth.points + self.rig.cam_a.R[0]
        profile = reprojection_profile(self.rig, shifted, self.poly_a, self.poly_b)
        np.testing.assert_allclose(profile.per_index_error_a, 1.0, atol=0.01)

    def test_summary_over_ragged_profiles(self):
        profiles = [ReprojectionProfile(np.array([1.0, 3.0]), np.array([0.0, 0.0])), ReprojectionProfile(np.array([3.0, 5.0, 7.0]), np.array([2.0, 2.0, 2.0]))]
        summary = summarize_profiles(profiles)
        np.testing.assert_array_equal(summary['count'], [2, 2, 1])
        np.testing.assert_allclose(summary['mean_a'], [2.0, 4.0, 7.0])
        np.testing.assert_allclose(summary['std_a'], [1.0, 1.0, 0.0])
        np.testing.assert_allclose(summary['mean_b'], [1.0, 1.0, 2.0])

    def test_csv_outputs(self):
        profile = ReprojectionProfile(np.array([0.5, 0.25]), np.array([0.125, 1.0]))
        path = write_profile_csv(Path(self.test_dir) / 'profile.csv', [(0, profile), (1, profile)])
        with open(path) as f:
            lines = f.read().splitlines()
        self.assertEqual(lines[0], 'frame,index,err_a_px,err_b_px')
        self.assertEqual(len(lines), 5)
        self.assertEqual(lines[2], '0,1,0.250000,1.000000')
        summary_path = write_profile_summary_csv(Path(self.test_dir) / 'summary.csv', summarize_profiles([profile]))
        with open(summary_path) as f:
            self.assertEqual(f.read().splitlines()[1], '0,1,0.500000,0.000000,0.125000,0.000000')
if __name__ == '__main__':
    unittest.main()
