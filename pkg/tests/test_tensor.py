import unittest

import numpy as np

from crackSeg.errors import ContractError, DimensionError
from crackSeg.services.gradcheck_suite import op_cases
from crackSeg.tensor import ops
from crackSeg.tensor.gradcheck import grad_check
from crackSeg.tensor.tensor import OpKind, Parameter, Tensor, backward, is_grad_enabled, no_grad


def leaf(values, requires_grad=True):
    return Tensor(np.asarray(values, dtype=np.float64), dtype=np.float64, requires_grad=requires_grad)


class TestTensor(unittest.TestCase):
    def test_dtypes(self):
        self.assertEqual(Tensor([1, 2]).dtype, np.float32)
        self.assertEqual(Tensor(np.zeros(2)).dtype, np.float64)
        with self.assertRaises(ContractError):
            Tensor([1, 2], dtype=np.int32)

    def test_op_outputs_are_read_only(self):
        out = ops.relu(leaf([1.0, -1.0]))
        with self.assertRaises(ValueError):
            out.data[0] = 5.0

    def test_parameter_trainable_flag(self):
        parameter = Parameter("w", np.ones(3))
        self.assertTrue(parameter.trainable)
        parameter.trainable = False
        self.assertFalse(parameter.requires_grad)

    def test_no_grad(self):
        x = leaf(np.ones((1, 1, 2, 2)))
        with no_grad():
            self.assertFalse(is_grad_enabled())
            out = ops.sum_all(x)
        self.assertTrue(is_grad_enabled())
        self.assertIsNone(out.node)


class TestBackward(unittest.TestCase):
    def test_sum_gradient_is_ones(self):
        x = leaf(np.arange(6.0).reshape(1, 1, 2, 3))
        backward(ops.sum_all(x))
        np.testing.assert_array_equal(x.grad, np.ones((1, 1, 2, 3)))

    def test_relu_gradient(self):
        x = leaf([[-1.0, 2.0]])
        backward(ops.sum_all(ops.relu(x)))
        np.testing.assert_array_equal(x.grad, [[0.0, 1.0]])

    def test_gradients_accumulate(self):
        x = leaf(np.ones((1, 1, 2, 2)))
        backward(ops.sum_all(x))
        backward(ops.sum_all(x))
        np.testing.assert_array_equal(x.grad, np.full((1, 1, 2, 2), 2.0))
        x.zero_grad()
        np.testing.assert_array_equal(x.grad, np.zeros((1, 1, 2, 2)))

    def test_shared_input_gradients_add(self):
        x = leaf(np.full((1, 2, 2, 2), 3.0))
        backward(ops.sum_all(ops.add(x, x)))
        np.testing.assert_array_equal(x.grad, np.full((1, 2, 2, 2), 2.0))

    def test_non_scalar_loss(self):
        with self.assertRaises(ContractError):
            backward(ops.relu(leaf([1.0, 2.0])))

    def test_detached_loss(self):
        with self.assertRaises(ContractError):
            backward(ops.sum_all(leaf([1.0, 2.0], requires_grad=False)))

    def test_tape_is_consumed(self):
        loss = ops.sum_all(ops.relu(leaf([[1.0, 2.0]])))
        backward(loss)
        with self.assertRaises(ContractError):
            backward(loss)


class TestConvolutions(unittest.TestCase):
    def test_identity_kernel(self):
        x = leaf(np.ones((1, 1, 3, 3)))
        out = ops.conv2d(x, leaf([[[[1.0]]]]))
        np.testing.assert_array_equal(out.data, x.data)

    def test_diagonal_kernel(self):
        x = leaf(np.arange(1.0, 10.0).reshape(1, 1, 3, 3))
        out = ops.conv2d(x, leaf([[[[1.0, 0.0], [0.0, 1.0]]]]))
        np.testing.assert_array_equal(out.data[0, 0], [[6.0, 8.0], [12.0, 14.0]])

    def test_zero_kernel(self):
        rng = np.random.default_rng(0)
        out = ops.conv2d(leaf(rng.standard_normal((2, 3, 5, 5))), leaf(np.zeros((4, 3, 3, 3))), padding=1)
        self.assertEqual(out.shape, (2, 4, 5, 5))
        np.testing.assert_array_equal(out.data, np.zeros((2, 4, 5, 5)))

    def test_conv_matches_direct_loop(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((1, 2, 7, 7))
        w = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        out = ops.conv2d(leaf(x), leaf(w), leaf(b), stride=2, padding=1).data
        padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        for o in range(3):
            for i in range(4):
                for j in range(4):
                    window = padded[0, :, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3]
                    self.assertAlmostEqual(out[0, o, i, j], float(np.sum(window * w[o]) + b[o]), places=10)

    def test_conv_errors(self):
        with self.assertRaises(DimensionError):
            ops.conv2d(leaf(np.ones((1, 2, 4, 4))), leaf(np.ones((1, 3, 3, 3))))
        with self.assertRaises(DimensionError):
            ops.conv2d(leaf(np.ones((1, 1, 2, 2))), leaf(np.ones((1, 1, 3, 3))))

    def test_transposed_single_pixel(self):
        out = ops.conv_transpose2d(leaf([[[[5.0]]]]), leaf(np.ones((1, 1, 2, 2))))
        np.testing.assert_array_equal(out.data, np.full((1, 1, 2, 2), 5.0))

    def test_transposed_single_tap_scatters(self):
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
        w = np.zeros((1, 1, 2, 2))
        w[0, 0, 1, 0] = 3.0
        out = ops.conv_transpose2d(leaf(x), leaf(w)).data[0, 0]
        expected = np.zeros((4, 4))
        expected[1::2, 0::2] = 3.0 * x[0, 0]
        np.testing.assert_array_equal(out, expected)

    def test_transposed_kernel_must_equal_stride(self):
        with self.assertRaises(DimensionError):
            ops.conv_transpose2d(leaf(np.ones((1, 1, 2, 2))), leaf(np.ones((1, 1, 3, 3))), stride=2)


class TestNormalizationAndActivations(unittest.TestCase):
    def setUp(self):
        self.running_mean = leaf(np.zeros(2), requires_grad=False)
        self.running_var = leaf(np.ones(2), requires_grad=False)

    def test_batch_norm_fixed_point(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((4, 2, 5, 5))
        x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)
        out = ops.batch_norm(leaf(x), leaf(np.ones(2)), leaf(np.zeros(2)), self.running_mean, self.running_var)
        np.testing.assert_allclose(out.data, x, rtol=1e-5, atol=1e-7)

    def test_batch_norm_zero_gamma(self):
        x = leaf(np.random.default_rng(0).standard_normal((2, 2, 3, 3)))
        out = ops.batch_norm(x, leaf(np.zeros(2)), leaf([1.5, -2.0]), self.running_mean, self.running_var)
        np.testing.assert_array_equal(out.data[:, 0], np.full((2, 3, 3), 1.5))
        np.testing.assert_array_equal(out.data[:, 1], np.full((2, 3, 3), -2.0))

    def test_batch_norm_running_stats(self):
        x = np.random.default_rng(2).standard_normal((2, 2, 3, 3)) + 4.0
        ops.batch_norm(leaf(x), leaf(np.ones(2)), leaf(np.zeros(2)), self.running_mean, self.running_var)
        np.testing.assert_allclose(self.running_mean.data, 0.1 * x.mean(axis=(0, 2, 3)))
        unbiased = x.var(axis=(0, 2, 3)) * 18 / 17
        np.testing.assert_allclose(self.running_var.data, 0.9 + 0.1 * unbiased)

    def test_batch_norm_frozen_stats(self):
        x = leaf(np.random.default_rng(3).standard_normal((2, 2, 3, 3)))
        ops.batch_norm(x, leaf(np.ones(2)), leaf(np.zeros(2)), self.running_mean, self.running_var, update_stats=False)
        np.testing.assert_array_equal(self.running_mean.data, np.zeros(2))
        np.testing.assert_array_equal(self.running_var.data, np.ones(2))

    def test_batch_norm_degenerate_statistics(self):
        with self.assertRaises(DimensionError):
            ops.batch_norm(
                leaf(np.ones((1, 2, 1, 1))), leaf(np.ones(2)), leaf(np.zeros(2)), self.running_mean, self.running_var
            )
        out = ops.batch_norm(
            leaf(np.ones((1, 2, 1, 1))),
            leaf(np.ones(2)),
            leaf(np.zeros(2)),
            self.running_mean,
            self.running_var,
            mode="eval",
        )
        self.assertEqual(out.shape, (1, 2, 1, 1))

    def test_relu_and_sigmoid(self):
        np.testing.assert_array_equal(ops.relu(leaf([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])
        x = leaf([0.0])
        out = ops.sigmoid(x)
        self.assertEqual(out.data[0], 0.5)
        backward(ops.sum_all(out))
        self.assertAlmostEqual(x.grad[0], 0.25)

    def test_sigmoid_stays_inside_unit_interval(self):
        out = ops.sigmoid(Tensor([-200.0, 200.0]))
        self.assertGreater(out.data[0], 0.0)
        self.assertLess(out.data[1], 1.0)


class TestPoolingAndShapes(unittest.TestCase):
    def test_max_pool(self):
        out = ops.max_pool2d(leaf([[[[1.0, 2.0], [3.0, 4.0]]]]), kernel=2, stride=2)
        np.testing.assert_array_equal(out.data, [[[[4.0]]]])

    def test_max_pool_tie_goes_to_first_element(self):
        x = leaf(np.ones((1, 1, 4, 4)))
        out = ops.max_pool2d(x, kernel=2, stride=2)
        np.testing.assert_array_equal(out.data, np.ones((1, 1, 2, 2)))
        backward(ops.sum_all(out))
        expected = np.zeros((4, 4))
        expected[0::2, 0::2] = 1.0
        np.testing.assert_array_equal(x.grad[0, 0], expected)

    def test_max_pool_matches_window_scan(self):
        x = np.random.default_rng(4).standard_normal((1, 2, 6, 6))
        out = ops.max_pool2d(leaf(x), kernel=3, stride=2, padding=1).data
        padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)), constant_values=-np.inf)
        for c in range(2):
            for i in range(3):
                for j in range(3):
                    self.assertEqual(out[0, c, i, j], padded[0, c, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3].max())

    def test_global_avg_pool_of_constant(self):
        out = ops.global_avg_pool(leaf(np.full((2, 3, 4, 4), 1.5)))
        np.testing.assert_array_equal(out.data, np.full((2, 3, 1, 1), 1.5))

    def test_concat_backward_splits(self):
        a, b = leaf(np.ones((1, 2, 4, 4))), leaf(np.ones((1, 3, 4, 4)))
        out = ops.concat_channels(a, b)
        self.assertEqual(out.shape, (1, 5, 4, 4))
        backward(ops.sum_all(out))
        np.testing.assert_array_equal(a.grad, np.ones((1, 2, 4, 4)))
        np.testing.assert_array_equal(b.grad, np.ones((1, 3, 4, 4)))

    def test_broadcast_mul(self):
        x = leaf(np.ones((2, 3, 4, 4)))
        gate = leaf(np.full((2, 1, 4, 4), 0.5))
        backward(ops.sum_all(ops.mul(x, gate)))
        np.testing.assert_array_equal(gate.grad, np.full((2, 1, 4, 4), 3.0))
        with self.assertRaises(DimensionError):
            ops.mul(x, leaf(np.ones((2, 3, 4, 1))))

    def test_add_shape_mismatch(self):
        with self.assertRaises(DimensionError):
            ops.add(leaf(np.ones((1, 1, 2, 2))), leaf(np.ones((1, 1, 2, 3))))


class TestGradCheck(unittest.TestCase):
    def test_linear_op_is_exact(self):
        x = leaf(np.random.default_rng(0).standard_normal((2, 3)))
        self.assertLess(grad_check(lambda a: ops.scale(a, 3.0), [x]), 1e-10)

    def test_conv2d_random(self):
        rng = np.random.default_rng(5)
        inputs = [leaf(rng.standard_normal((2, 3, 8, 8))), leaf(rng.standard_normal((4, 3, 3, 3)))]
        self.assertLess(grad_check(lambda a, w: ops.conv2d(a, w, padding=1), inputs), 1e-6)

    def test_batch_norm_random(self):
        rng = np.random.default_rng(6)
        running = (leaf(np.zeros(2), False), leaf(np.ones(2), False))
        inputs = [leaf(rng.standard_normal((2, 2, 4, 4))), leaf(rng.standard_normal(2)), leaf(rng.standard_normal(2))]
        self.assertLess(grad_check(lambda a, g, b: ops.batch_norm(a, g, b, *running), inputs), 1e-5)

    def test_every_op_kind(self):
        for seed in range(20):
            cases = op_cases(np.random.default_rng(seed))
            self.assertEqual(set(cases), set(OpKind))
            for kind, (fn, inputs) in cases.items():
                with self.subTest(op=kind.value, seed=seed):
                    self.assertLess(grad_check(fn, inputs, seed=seed), 1e-4)

    def test_requires_float64(self):
        with self.assertRaises(ContractError):
            grad_check(ops.relu, [Tensor(np.ones((1, 1, 2, 2), dtype=np.float32), requires_grad=True)])


if __name__ == "__main__":
    unittest.main()
