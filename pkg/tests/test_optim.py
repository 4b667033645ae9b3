import os
import tempfile
import unittest

import numpy as np

from crackSeg.errors import CheckpointError, ConfigError, ContractError
from crackSeg.models.configs import AdamWHyper, GroupScale, LayerGroup, OneCycleConfig, parse_config
from crackSeg.network.checkpoint import read_tensors, write_tensors
from crackSeg.optim.adamw import AdamW, adamw_step
from crackSeg.optim.schedule import group_lrs, lr_at, peak_iteration, zero_grads
from crackSeg.tensor.tensor import Parameter


def parameter(name, values, trainable=True):
    return Parameter(name, np.asarray(values, dtype=np.float64), dtype=np.float64, trainable=trainable)


def same_lr(lr):
    return {group: lr for group in LayerGroup}


class TestAdamW(unittest.TestCase):
    def test_single_step_by_hand(self):
        theta = parameter("w", [1.0])
        theta.grad = np.array([1.0])
        AdamW().step([theta], same_lr(0.1), {"w": LayerGroup.G3})
        expected = 0.99 - 0.1 / np.sqrt(1.0 + 1e-8)
        self.assertAlmostEqual(float(theta.data[0]), expected, delta=1e-9)

    def test_zero_gradient_only_decays(self):
        theta = parameter("w", [2.0, -4.0])
        optimizer = AdamW()
        for _ in range(5):
            theta.grad = np.zeros(2)
            optimizer.step([theta], same_lr(0.1), {"w": LayerGroup.G1})
        np.testing.assert_allclose(theta.data, np.array([2.0, -4.0]) * 0.99**5, rtol=1e-12)
        self.assertEqual(optimizer.t, 5)

    def test_matches_reference_loop(self):
        rng = np.random.default_rng(0)
        start = rng.standard_normal(6)
        grads = rng.standard_normal((10, 6))
        lr, beta1, beta2, eps, wd = 0.003, 0.9, 0.999, 1e-8, 0.01

        theta = parameter("w", start)
        optimizer = AdamW()
        for g in grads:
            theta.grad = g.copy()
            adamw_step([theta], optimizer, same_lr(lr), {"w": LayerGroup.G2})

        expected, m, v = start.copy(), np.zeros(6), np.zeros(6)
        for t, g in enumerate(grads, start=1):
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g * g
            m_hat, v_hat = m / (1 - beta1**t), v / (1 - beta2**t)
            expected = (1 - wd) * expected - lr * m_hat / np.sqrt(v_hat + eps)
        np.testing.assert_allclose(theta.data, expected, rtol=0, atol=1e-12)

    def test_group_learning_rates(self):
        a, b = parameter("a", [1.0]), parameter("b", [1.0])
        a.grad, b.grad = np.array([1.0]), np.array([1.0])
        hyper = AdamWHyper(weight_decay=0.0)
        AdamW(hyper).step([a, b], {LayerGroup.G1: 0.01, LayerGroup.G3: 0.1}, {"a": LayerGroup.G1, "b": LayerGroup.G3})
        self.assertAlmostEqual(float(a.data[0]), 0.99, places=6)
        self.assertAlmostEqual(float(b.data[0]), 0.9, places=6)

    def test_frozen_parameter_untouched(self):
        frozen = parameter("frozen", [3.0], trainable=False)
        live = parameter("live", [3.0])
        live.grad = np.array([1.0])
        optimizer = AdamW()
        optimizer.step([frozen, live], same_lr(0.1), {"frozen": LayerGroup.G1, "live": LayerGroup.G3})
        self.assertEqual(float(frozen.data[0]), 3.0)
        self.assertNotIn("frozen", optimizer.m)

    def test_missing_gradient(self):
        with self.assertRaisesRegex(ContractError, "w"):
            AdamW().step([parameter("w", [1.0])], same_lr(0.1), {"w": LayerGroup.G3})

    def test_decay_scaled_by_lr(self):
        theta = parameter("w", [1.0])
        theta.grad = np.zeros(1)
        AdamW(AdamWHyper(decay_scaled_by_lr=True)).step([theta], same_lr(0.1), {"w": LayerGroup.G3})
        self.assertAlmostEqual(float(theta.data[0]), 1.0 - 0.1 * 0.01, places=12)

    def test_state_round_trip(self):
        theta = parameter("w", [1.0, 2.0])
        optimizer = AdamW()
        for _ in range(3):
            theta.grad = np.array([0.5, -0.25])
            optimizer.step([theta], same_lr(0.01), {"w": LayerGroup.G3})
        tensors = optimizer.state_tensors(prefix="optim.")
        self.assertEqual(set(tensors), {"optim.t", "optim.t_high", "optim.w.m", "optim.w.v"})

        restored = AdamW()
        restored.load_state_tensors(tensors, prefix="optim.")
        self.assertEqual(restored.t, 3)
        np.testing.assert_array_equal(restored.m["w"], optimizer.m["w"])
        np.testing.assert_array_equal(restored.v["w"], optimizer.v["w"])

    def test_large_step_counter_survives_checkpoint(self):
        optimizer = AdamW()
        optimizer.t = 3 * 2**24 + 5
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "optim.ckpt")
            write_tensors(path, optimizer.state_tensors(prefix="optim."))
            stored = read_tensors(path)
        restored = AdamW()
        restored.load_state_tensors(stored, prefix="optim.")
        self.assertEqual(restored.t, 3 * 2**24 + 5)

    def test_missing_second_moment(self):
        tensors = {"optim.t": np.asarray(2.0), "optim.w.m": np.zeros(2)}
        restored = AdamW()
        with self.assertRaisesRegex(CheckpointError, "optim.w.v"):
            restored.load_state_tensors(tensors, prefix="optim.")
        self.assertEqual(restored.t, 0)
        self.assertEqual(restored.m, {})


class TestOneCycle(unittest.TestCase):
    def setUp(self):
        self.schedule = OneCycleConfig(lr_max=0.01, total_iterations=1000)

    def test_endpoints_and_peak(self):
        self.assertAlmostEqual(lr_at(0, self.schedule), 0.0005)
        self.assertAlmostEqual(lr_at(400, self.schedule), 0.01)
        self.assertAlmostEqual(lr_at(1000, self.schedule), 1e-5)

    def test_monotone_halves(self):
        rates = [lr_at(i, self.schedule) for i in range(1001)]
        peak = peak_iteration(self.schedule)
        self.assertTrue(all(a <= b for a, b in zip(rates[:peak], rates[1 : peak + 1])))
        self.assertTrue(all(a >= b for a, b in zip(rates[peak:], rates[peak + 1 :])))
        self.assertTrue(all(1e-5 - 1e-15 <= rate <= 0.01 + 1e-15 for rate in rates))

    def test_piecewise_linear(self):
        rates = np.array([lr_at(i, self.schedule) for i in range(1001)])
        second = rates[2:] - 2.0 * rates[1:-1] + rates[:-2]
        breakpoint_index = peak_iteration(self.schedule) - 1
        off_breakpoint = np.delete(second, breakpoint_index)
        np.testing.assert_allclose(off_breakpoint, 0.0, atol=1e-12)
        self.assertLess(second[breakpoint_index], -1e-6)

    def test_peak_rounds_half_up(self):
        self.assertEqual(peak_iteration(OneCycleConfig(lr_max=1.0, total_iterations=10)), 4)
        self.assertEqual(peak_iteration(OneCycleConfig(lr_max=1.0, total_iterations=5)), 2)

    def test_out_of_range(self):
        with self.assertRaises(ContractError):
            lr_at(-1, self.schedule)
        with self.assertRaises(ContractError):
            lr_at(1001, self.schedule)

    def test_single_iteration_cycle(self):
        schedule = OneCycleConfig(lr_max=0.1, total_iterations=1)
        self.assertAlmostEqual(lr_at(0, schedule), 0.1)
        self.assertAlmostEqual(lr_at(1, schedule), 1e-4)

    def test_invalid_cycle(self):
        with self.assertRaises(ConfigError):
            parse_config(OneCycleConfig, {"lr_max": 0.0, "total_iterations": 10})


class TestGroupRates(unittest.TestCase):
    def test_default_scales(self):
        rates = group_lrs(0.009)
        self.assertAlmostEqual(rates[LayerGroup.G1], 0.001)
        self.assertAlmostEqual(rates[LayerGroup.G2], 0.003)
        self.assertEqual(rates[LayerGroup.G3], 0.009)

    def test_zero_base(self):
        self.assertEqual(set(group_lrs(0.0).values()), {0.0})

    def test_custom_scale(self):
        rates = group_lrs(1.0, GroupScale(g1=0.5, g2=0.5, g3=2.0))
        self.assertEqual(rates, {LayerGroup.G1: 0.5, LayerGroup.G2: 0.5, LayerGroup.G3: 2.0})

    def test_zero_grads_skips_frozen(self):
        live, frozen = parameter("live", [1.0]), parameter("frozen", [1.0], trainable=False)
        live.grad, frozen.grad = np.array([2.0]), np.array([5.0])
        zero_grads([live, frozen])
        self.assertEqual(float(live.grad[0]), 0.0)
        self.assertEqual(float(frozen.grad[0]), 5.0)


if __name__ == "__main__":
    unittest.main()
