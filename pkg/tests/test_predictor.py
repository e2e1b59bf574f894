import unittest
import math
import tempfile
import shutil
from pathlib import Path
import sys
import numpy as np
sys.path.insert(0, str(Path(__file__).parent.parent))
from src.curve_repr import SphericalCurve, encode
from src.errors import DimensionMismatch, DomainError, EmptySequence, LengthExceedsM, SchemaError
from src.geometry import arclength_resample
from src.ml import LossWeights, ModelDims, ModelParams, NAdam, PredictionOutput, ReduceLROnPlateau, backward, clip_by_global_norm, decode_prediction, embed_frame, forward, forward_batch, gru_step, init_params, make_targets, total_loss
from src.ml.layers import patchify, sigmoid, spatial_softargmax
from src.synthetic import CurveGenParams, gen_curve


def small_dims(representation: str='spherical') -> ModelDims:
    return ModelDims(frame_size=8, patch_size=4, feature_dim=5, hidden_dim=4, max_segments=3, representation=representation, keypoint_gain=4.0, tip_mean=[0.1, -0.2, 0.3], tip_std=[2.0, 1.5, 0.5])


def small_targets(representation: str='spherical'):
    curves = [SphericalCurve(tip=[0.5, -0.2, 0.1], radius=1.0, offsets=[[0.3, 0.1], [0.1, -0.2]]), SphericalCurve(tip=[-0.3, 0.4, 0.0], radius=1.0, offsets=[[0.2, 0.5]])]
    return make_targets(curves, 3, representation)


LOSS_WEIGHTS = LossWeights(tip=1.0, offset=2.0, stop=0.5)


def batch_loss(params: ModelParams, frames: np.ndarray, targets) -> float:
    out, _ = forward_batch(params, frames)
    return total_loss(out, targets, LOSS_WEIGHTS, params.dims.tip_std)[0]


class TestLayers(unittest.TestCase):

    def test_sigmoid_is_stable(self):
        out = sigmoid.function(np.array([-1000.0, 0.0, 1000.0]))
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0])

    def test_patch_order(self):
        frame = np.arange(16.0).reshape(4, 4)
        patches = patchify(frame, 2)
        np.testing.assert_array_equal(patches[0], [0, 1, 4, 5])
        np.testing.assert_array_equal(patches[1], [2, 3, 6, 7])
        np.testing.assert_array_equal(patches[3], [10, 11, 14, 15])

    def test_softargmax_finds_bright_pixel(self):
        frame = np.zeros((8, 8))
        frame[2, 5] = 1.0
        frame[6, 1] = 0.3
        x, y = spatial_softargmax(frame, 40.0)
        self.assertAlmostEqual(x, (5.5 / 8) * 2 - 1, places=3)
        self.assertAlmostEqual(y, (2.5 / 8) * 2 - 1, places=3)

    def test_softargmax_uniform_frame_is_centred(self):
        np.testing.assert_allclose(spatial_softargmax(np.full((2, 6, 6), 0.7), 10.0), np.zeros((2, 2)), atol=1e-12)


class TestForward(unittest.TestCase):

    def test_output_shapes(self):
        dims = ModelDims(max_segments=16)
        params = init_params(dims, seed=0)
        out = forward(params, np.zeros((4, 64, 64)))
        self.assertEqual(out.tip.shape, (3,))
        self.assertEqual(out.offsets.size, 32)
        self.assertEqual(out.stop_probs.shape, (16,))
        self.assertTrue(np.all((out.stop_probs > 0) & (out.stop_probs < 1)))

    def test_cartesian_offsets_width(self):
        params = init_params(small_dims('cartesian'), seed=0)
        out = forward(params, np.zeros((2, 8, 8)))
        self.assertEqual(out.offsets.shape, (3, 3))

    def test_zero_frame_zero_bias(self):
        params = init_params(ModelDims(), seed=1)
        params.arrays['embed_E'][:] = 0.0
        np.testing.assert_allclose(embed_frame(params, np.zeros((64, 64))), np.zeros(34), atol=1e-12)

    def test_frame_size_mismatch(self):
        params = init_params(ModelDims(), seed=1)
        with self.assertRaises(DimensionMismatch):
            embed_frame(params, np.zeros((63, 63)))

    def test_zero_gru(self):
        params = init_params(small_dims(), seed=0)
        for name in params:
            if name.startswith('gru_'):
                params.arrays[name][:] = 0.0
        h_prev = np.array([1.0, -2.0, 0.5, 4.0])
        np.testing.assert_allclose(gru_step(params, np.ones(7), h_prev), 0.5 * h_prev)

    def test_gru_dimension_mismatch(self):
        params = init_params(small_dims(), seed=0)
        with self.assertRaises(DimensionMismatch):
            gru_step(params, np.ones(6), np.zeros(4))

    def test_empty_sequence(self):
        params = init_params(small_dims(), seed=0)
        with self.assertRaises(EmptySequence):
            forward(params, np.zeros((0, 8, 8)))

    def test_batch_matches_single(self):
        params = init_params(small_dims(), seed=2)
        frames = np.random.default_rng(0).uniform(size=(3, 2, 8, 8))
        out, _ = forward_batch(params, frames)
        single = forward(params, frames[1])
        np.testing.assert_allclose(out.sample(1).tip, single.tip, atol=1e-12)
        np.testing.assert_allclose(out.sample(1).stop_probs, single.stop_probs, atol=1e-12)

    def test_frame_order_matters(self):
        params = init_params(small_dims(), seed=6)
        frames = np.random.default_rng(6).uniform(size=(4, 8, 8))
        ahead = forward(params, frames)
        reversed_order = forward(params, frames[::-1])
        difference = max(np.abs(ahead.tip - reversed_order.tip).max(), np.abs(ahead.offsets - reversed_order.offsets).max(), np.abs(ahead.stop_probs - reversed_order.stop_probs).max())
        self.assertGreater(difference, 1e-06)

    def test_keypoint_features_follow_the_marker(self):
        params = init_params(ModelDims(), seed=1)
        frame = np.zeros((64, 64))
        frame[10:20, 40] = 0.3
        frame[9, 40] = 1.0
        z = embed_frame(params, frame)
        np.testing.assert_allclose(z[-2:], [40.5 / 32 - 1, 9.5 / 32 - 1], atol=1e-3)


class TestGradients(unittest.TestCase):

    def perturbed_params(self, representation: str, draw: int):
        rng = np.random.default_rng(draw)
        params = init_params(small_dims(representation), seed=draw)
        for name in params:
            params.arrays[name] += 0.1 * rng.standard_normal(params[name].shape)
        return (params, rng)

    def check_gradients(self, representation: str):
        eps = 1e-05
        targets = small_targets(representation)
        for draw in range(20):
            params, rng = self.perturbed_params(representation, draw)
            frames = rng.uniform(size=(2, 3, 8, 8))
            out, cache = forward_batch(params, frames)
            _, head_grads = total_loss(out, targets, LOSS_WEIGHTS, params.dims.tip_std)
            grads = backward(params, cache, head_grads['tip'], head_grads['offsets'], head_grads['stop_logits'])
            for name in params:
                flat = params.arrays[name].reshape(-1)
                for k in rng.choice(flat.size, size=min(3, flat.size), replace=False):
                    original = flat[k]
                    flat[k] = original + eps
                    up = batch_loss(params, frames, targets)
                    flat[k] = original - eps
                    down = batch_loss(params, frames, targets)
                    flat[k] = original
                    numeric = (up - down) / (2 * eps)
                    analytic = grads[name].reshape(-1)[k]
                    self.assertAlmostEqual(analytic, numeric, delta=1e-06 + 1e-04 * abs(numeric), msg=f'draw {draw}: {name}[{k}]')

    def test_spherical(self):
        self.check_gradients('spherical')

    def test_cartesian(self):
        self.check_gradients('cartesian')

    def test_every_head_output(self):
        eps = 1e-05
        tip_std = [2.0, 1.5, 0.5]
        targets = small_targets()
        for draw in range(20):
            rng = np.random.default_rng(100 + draw)
            values = {'tip': rng.normal(size=targets.tip.shape), 'offsets': rng.normal(scale=0.5, size=targets.offsets.shape), 'stop_logits': rng.normal(size=targets.stop.shape)}

            def loss_of(v):
                pred = PredictionOutput(tip=v['tip'], offsets=v['offsets'], stop_probs=sigmoid.function(v['stop_logits']), stop_logits=v['stop_logits'])
                return total_loss(pred, targets, LOSS_WEIGHTS, tip_std)
            _, grads = loss_of(values)
            for name, array in values.items():
                flat = array.reshape(-1)
                for k in range(flat.size):
                    original = flat[k]
                    flat[k] = original + eps
                    up = loss_of(values)[0]
                    flat[k] = original - eps
                    down = loss_of(values)[0]
                    flat[k] = original
                    numeric = (up - down) / (2 * eps)
                    self.assertAlmostEqual(grads[name].reshape(-1)[k], numeric, delta=1e-07 + 1e-04 * abs(numeric), msg=f'draw {draw}: {name}[{k}]')

    def test_probability_form(self):
        eps = 1e-06
        targets = small_targets()
        probs = np.random.default_rng(9).uniform(0.1, 0.9, size=targets.stop.shape)
        pred = PredictionOutput(tip=targets.tip.copy(), offsets=targets.offsets.copy(), stop_probs=probs)
        _, grads = total_loss(pred, targets, LOSS_WEIGHTS)
        flat = probs.reshape(-1)
        for k in range(flat.size):
            original = flat[k]
            flat[k] = original + eps
            up = total_loss(pred, targets, LOSS_WEIGHTS)[0]
            flat[k] = original - eps
            down = total_loss(pred, targets, LOSS_WEIGHTS)[0]
            flat[k] = original
            self.assertAlmostEqual(grads['stop_probs'].reshape(-1)[k], (up - down) / (2 * eps), delta=1e-06)


class TestLoss(unittest.TestCase):

    def test_exact_match_is_zero(self):
        targets = small_targets()
        pred = PredictionOutput(tip=targets.tip.copy(), offsets=targets.offsets.copy(), stop_probs=targets.stop.copy())
        loss, grads = total_loss(pred, targets)
        self.assertEqual(loss, 0.0)
        self.assertFalse(np.any(grads['tip']))
        self.assertFalse(np.any(grads['offsets']))

    def test_zero_weights(self):
        params = init_params(small_dims(), seed=0)
        out, _ = forward_batch(params, np.ones((2, 2, 8, 8)))
        loss, _ = total_loss(out, small_targets(), LossWeights(tip=0.0, offset=0.0, stop=0.0))
        self.assertEqual(loss, 0.0)

    def test_padding_is_ignored(self):
        targets = small_targets()
        pred = PredictionOutput(tip=targets.tip.copy(), offsets=targets.offsets.copy(), stop_probs=targets.stop.copy())
        pred.offsets[1, 2] = [5.0, -5.0]
        self.assertEqual(total_loss(pred, targets)[0], 0.0)

    def test_tip_term(self):
        targets = small_targets()
        pred = PredictionOutput(tip=targets.tip + [1.0, 0.0, 0.0], offsets=targets.offsets.copy(), stop_probs=targets.stop.copy())
        self.assertAlmostEqual(total_loss(pred, targets, LossWeights(tip=3.0))[0], 3.0)

    def test_tip_term_in_spread_units(self):
        targets = small_targets()
        pred = PredictionOutput(tip=targets.tip + [1.0, 0.0, 3.0], offsets=targets.offsets.copy(), stop_probs=targets.stop.copy())
        self.assertAlmostEqual(total_loss(pred, targets, tip_std=[2.0, 1.0, 3.0])[0], 1.25)

    def test_bce_matches_direct_loop(self):
        targets = small_targets()
        probs = np.random.default_rng(11).uniform(0.05, 0.95, size=targets.stop.shape)
        expected = 0.0
        for i in range(len(targets)):
            for j in range(targets.stop.shape[1]):
                s = targets.stop[i, j]
                p = probs[i, j]
                expected += -s * math.log(p) - (1 - s) * math.log(1 - p)
        expected /= len(targets)
        weights = LossWeights(tip=0.0, offset=0.0, stop=1.0)
        pred = PredictionOutput(tip=targets.tip.copy(), offsets=targets.offsets.copy(), stop_probs=probs)
        self.assertAlmostEqual(total_loss(pred, targets, weights)[0], expected, places=12)
        logits = np.log(probs) - np.log1p(-probs)
        pred = PredictionOutput(tip=targets.tip.copy(), offsets=targets.offsets.copy(), stop_probs=probs, stop_logits=logits)
        self.assertAlmostEqual(total_loss(pred, targets, weights)[0], expected, places=10)

    def test_target_too_long(self):
        curve = SphericalCurve(tip=[0, 0, 0], radius=1.0, offsets=np.zeros((5, 2)))
        with self.assertRaises(LengthExceedsM):
            make_targets([curve], 4)

    def test_cartesian_targets_are_unit_steps(self):
        targets = small_targets('cartesian')
        first = targets.offsets[0, 0]
        self.assertAlmostEqual(float(np.linalg.norm(first)), 1.0)
        np.testing.assert_array_equal(targets.stop[0], [0, 1, 0])
        np.testing.assert_array_equal(targets.mask[1], [1, 0, 0])


class TestOptimizer(unittest.TestCase):

    def test_zero_gradient_keeps_params(self):
        params = {'w': np.array([1.0, -2.0, 3.0])}
        opt = NAdam(params, lr=0.1)
        opt.step({'w': np.zeros(3)})
        np.testing.assert_array_equal(params['w'], [1.0, -2.0, 3.0])

    def test_descends_quadratic(self):
        params = {'w': np.array([3.0, -4.0])}
        opt = NAdam(params, lr=0.1)
        for _ in range(300):
            opt.step({'w': 2 * params['w']})
        self.assertLess(np.linalg.norm(params['w']), 0.5)

    def test_plateau_patience(self):
        opt = NAdam({'w': np.zeros(1)}, lr=1.0)
        scheduler = ReduceLROnPlateau(opt, factor=0.5, patience=2)
        reductions = [scheduler.step(v) for v in [1.0, 1.0, 1.0, 1.0, 0.5, 0.5]]
        self.assertEqual(reductions, [False, False, False, True, False, False])
        self.assertEqual(opt.lr, 0.5)

    def test_clip(self):
        grads = {'a': np.array([3.0]), 'b': np.array([4.0])}
        clipped = clip_by_global_norm(grads, 1.0)
        np.testing.assert_allclose([clipped['a'][0], clipped['b'][0]], [0.6, 0.8])
        self.assertIs(clip_by_global_norm(grads, 10.0), grads)


class TestDecodePrediction(unittest.TestCase):

    def prediction(self, probs) -> PredictionOutput:
        M = len(probs)
        return PredictionOutput(tip=np.zeros(3), offsets=np.zeros((M, 2)), stop_probs=np.asarray(probs, dtype=float))

    def test_first_probability_over_threshold(self):
        curve = decode_prediction(self.prediction([0.1, 0.9, 0.95, 0.2]), 2.0)
        self.assertEqual(len(curve), 3)
        np.testing.assert_allclose(curve.points[-1], [0, 0, 4.0])

    def test_argmax_fallback(self):
        curve = decode_prediction(self.prediction([0.1, 0.2, 0.4, 0.3]), 1.0)
        self.assertEqual(len(curve), 4)

    def test_threshold_range(self):
        with self.assertRaises(DomainError):
            decode_prediction(self.prediction([0.5]), 1.0, stop_threshold=1.0)
        with self.assertRaises(DomainError):
            decode_prediction(self.prediction([0.5]), 1.0, stop_threshold=0.0)

    def test_round_trip_from_encoded_target(self):
        for seed in range(5):
            curve = gen_curve(CurveGenParams(seed=seed))
            target = encode(curve, 2.0)
            L = target.length
            offsets = np.zeros((L + 4, 2))
            offsets[:L] = target.offsets
            stop = np.zeros(L + 4)
            stop[L - 1] = 1.0
            decoded = decode_prediction(PredictionOutput(tip=target.tip, offsets=offsets, stop_probs=stop), 2.0)
            expected = arclength_resample(curve, 2.0).points[:L + 1]
            self.assertEqual(len(decoded), L + 1)
            np.testing.assert_allclose(decoded.points, expected, atol=1e-09)

    def test_cartesian(self):
        out = PredictionOutput(tip=np.ones(3), offsets=np.array([[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]]), stop_probs=np.array([0.0, 0.7, 0.9]))
        curve = decode_prediction(out, 2.0, representation='cartesian')
        np.testing.assert_allclose(curve.points, [[1, 1, 1], [3, 1, 1], [3, 3, 1]])

    def test_cartesian_collapsed(self):
        out = PredictionOutput(tip=np.zeros(3), offsets=np.zeros((2, 3)), stop_probs=np.array([0.9, 0.1]))
        curve = decode_prediction(out, 2.0, representation='cartesian')
        np.testing.assert_allclose(curve.points, [[0, 0, 0], [0, 0, 2]])


class TestCheckpoint(unittest.TestCase):

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_save_load(self):
        params = init_params(small_dims(), seed=8)
        loaded = ModelParams.load(params.save(Path(self.test_dir) / 'model.json'))
        self.assertEqual(loaded.dims, params.dims)
        for name in params:
            np.testing.assert_array_equal(loaded[name], params[name])

    def test_wrong_shape(self):
        data = init_params(small_dims(), seed=8).to_dict()
        data['arrays']['tip_b'] = {'shape': [4], 'data': [0.0] * 4}
        with self.assertRaises(SchemaError):
            ModelParams.from_dict(data)

    def test_seeded_init_is_deterministic(self):
        a = init_params(small_dims(), seed=5)
        b = init_params(small_dims(), seed=5)
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])
if __name__ == '__main__':
    unittest.main()
