import unittest

import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from adatok._backend import (
    AttentionParams,
    attention_layer,
    attention_weights,
    conv2d,
    gradient_check,
    group_norm,
    upsample_nearest,
)
from adatok._layers import Conv2d, MiddleBlock
from adatok.types import ConfigurationError, ContractViolation, GradientCheckError


def random_attention(channels, generator, dtype=torch.float32):
    shapes = [(channels, channels) if name.endswith("weight") else (channels,)
              for name in AttentionParams._fields]
    return AttentionParams(*(torch.randn(shape, generator=generator, dtype=dtype)
                             for shape in shapes))


class TestConv2d(unittest.TestCase):
    def test_identity_kernel(self):
        x = torch.rand(3, 5, 5)
        weight = torch.eye(3).reshape(3, 3, 1, 1)
        self.assertTrue(torch.equal(conv2d(x, weight), x))

    def test_constant_field(self):
        x = torch.full((1, 6, 6), 0.5)
        out = conv2d(x, torch.ones(1, 1, 3, 3), padding=1)
        self.assertTrue(torch.allclose(out[0, 1:-1, 1:-1], torch.full((4, 4), 4.5)))
        self.assertAlmostEqual(float(out[0, 0, 0]), 2.0)

    def test_batched_rank_preserved(self):
        out = conv2d(torch.rand(2, 3, 8, 8), torch.rand(4, 3, 3, 3), stride=2, padding=1)
        self.assertEqual(tuple(out.shape), (2, 4, 4, 4))

    def test_matches_direct_summation(self):
        gen = torch.Generator().manual_seed(8)
        x = torch.randn(2, 5, 5, generator=gen, dtype=torch.float64)
        weight = torch.randn(3, 2, 3, 3, generator=gen, dtype=torch.float64)
        bias = torch.randn(3, generator=gen, dtype=torch.float64)
        for stride, padding in ((1, 0), (1, 1), (2, 1)):
            with self.subTest(stride=stride, padding=padding):
                padded = torch.zeros(2, 5 + 2 * padding, 5 + 2 * padding, dtype=torch.float64)
                padded[:, padding:padding + 5, padding:padding + 5] = x
                side = (5 + 2 * padding - 3) // stride + 1
                expected = torch.zeros(3, side, side, dtype=torch.float64)
                for o in range(3):
                    for i in range(side):
                        for j in range(side):
                            total = float(bias[o])
                            for c in range(2):
                                for u in range(3):
                                    for v in range(3):
                                        total += float(weight[o, c, u, v]) * float(
                                            padded[c, i * stride + u, j * stride + v])
                            expected[o, i, j] = total
                out = conv2d(x, weight, bias, stride=stride, padding=padding)
                self.assertTrue(torch.allclose(out, expected, atol=1e-6))

    def test_channel_mismatch(self):
        with self.assertRaises(ContractViolation) as ctx:
            conv2d(torch.rand(3, 4, 4), torch.rand(2, 4, 3, 3), padding=1)
        self.assertIn("channel", str(ctx.exception))

    def test_invalid_kernel(self):
        with self.assertRaises(ContractViolation):
            conv2d(torch.rand(1, 4, 4), torch.rand(1, 1, 2, 2))
        with self.assertRaises(ContractViolation):
            conv2d(torch.rand(1, 4, 4), torch.rand(1, 1, 3, 3), stride=3, padding=1)
        with self.assertRaises(ContractViolation):
            conv2d(torch.rand(1, 4, 4), torch.rand(1, 1, 3, 3), torch.rand(2), padding=1)


class TestGroupNorm(unittest.TestCase):
    def test_constant_input(self):
        out = group_norm(torch.full((4, 3, 3), 2.0), 2, torch.ones(4), torch.zeros(4))
        self.assertTrue(torch.equal(out, torch.zeros(4, 3, 3)))

    def test_zero_gamma(self):
        out = group_norm(torch.rand(4, 3, 3), 2, torch.zeros(4), torch.full((4,), 0.7))
        self.assertTrue(torch.allclose(out, torch.full((4, 3, 3), 0.7)))

    def test_group_statistics(self):
        gen = torch.Generator().manual_seed(2)
        x = 3.0 * torch.randn(2, 6, 5, 5, generator=gen, dtype=torch.float64) + 1.5
        out = group_norm(x, 3, torch.ones(6, dtype=torch.float64),
                         torch.zeros(6, dtype=torch.float64))
        groups = out.reshape(2, 3, -1)
        self.assertLess(float(groups.mean(dim=-1).abs().max()), 1e-5)
        variance = groups.var(dim=-1, unbiased=False)
        self.assertLess(float((variance - 1.0).abs().max()), 1e-3)

    def test_affine_per_channel(self):
        gen = torch.Generator().manual_seed(3)
        x = torch.randn(4, 3, 3, generator=gen, dtype=torch.float64)
        gamma = torch.tensor([1.0, 2.0, -1.0, 0.5], dtype=torch.float64)
        beta = torch.tensor([0.0, 1.0, 2.0, -3.0], dtype=torch.float64)
        ones, zeros = torch.ones(4, dtype=torch.float64), torch.zeros(4, dtype=torch.float64)
        plain = group_norm(x, 2, ones, zeros)
        expected = plain * gamma.view(4, 1, 1) + beta.view(4, 1, 1)
        self.assertTrue(torch.allclose(group_norm(x, 2, gamma, beta), expected))

    def test_groups_must_divide(self):
        with self.assertRaises(ConfigurationError):
            group_norm(torch.rand(6, 2, 2), 4, torch.ones(6), torch.zeros(6))


class TestUpsample(unittest.TestCase):
    def test_nearest(self):
        x = torch.tensor([[[1.0, 2.0], [3.0, 4.0]]])
        expected = torch.tensor([[[1.0, 1.0, 2.0, 2.0], [1.0, 1.0, 2.0, 2.0],
                                  [3.0, 3.0, 4.0, 4.0], [3.0, 3.0, 4.0, 4.0]]])
        self.assertTrue(torch.equal(upsample_nearest(x), expected))


class TestAttention(unittest.TestCase):
    def test_single_position(self):
        gen = torch.Generator().manual_seed(0)
        params = random_attention(3, gen)
        x = torch.randn(3, 1, 1, generator=gen)
        weights = attention_weights(x, params)
        self.assertTrue(torch.equal(weights, torch.ones(1, 1)))
        value = params.v_weight @ x.reshape(3) + params.v_bias
        expected = x.reshape(3) + params.out_weight @ value + params.out_bias
        self.assertTrue(torch.allclose(attention_layer(x, params).reshape(3), expected,
                                       atol=1e-6))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 1000))
    def test_rows_are_stochastic(self, height, width, seed):
        gen = torch.Generator().manual_seed(seed)
        params = random_attention(4, gen, torch.float64)
        x = torch.randn(4, height, width, generator=gen, dtype=torch.float64)
        weights = attention_weights(x, params)
        self.assertEqual(tuple(weights.shape), (height * width, height * width))
        self.assertTrue(torch.allclose(weights.sum(dim=-1),
                                       torch.ones(height * width, dtype=torch.float64)))
        self.assertTrue((weights >= 0).all())

    def test_any_spatial_size(self):
        block = MiddleBlock(8, 1, 4, generator=torch.Generator().manual_seed(1))
        for side in (1, 2, 5, 8):
            x = torch.rand(2, 8, side, side)
            self.assertEqual(block(x).shape, x.shape)

    def test_bad_params(self):
        params = random_attention(3, torch.Generator().manual_seed(0))
        with self.assertRaises(ContractViolation):
            attention_layer(torch.rand(4, 2, 2), params)


class TestGradientCheck(unittest.TestCase):
    def test_square(self):
        theta = torch.tensor([3.0], dtype=torch.float64, requires_grad=True)
        self.assertLess(gradient_check(lambda: (theta * theta).sum(), [theta]), 1e-9)

    def test_conv_l1(self):
        gen = torch.Generator().manual_seed(0)
        conv = Conv2d(1, 1, 3, generator=gen).double()
        x = torch.rand(1, 4, 4, generator=gen, dtype=torch.float64)
        target = torch.rand(1, 4, 4, generator=gen, dtype=torch.float64)
        error = gradient_check(lambda: (conv(x) - target).abs().mean(), conv.parameters())
        self.assertLess(error, 1e-3)

    def test_requires_float64(self):
        theta = torch.tensor([1.0], requires_grad=True)
        with self.assertRaises(ContractViolation):
            gradient_check(lambda: theta.sum(), [theta])

    def test_step_bounds(self):
        theta = torch.tensor([1.0], dtype=torch.float64, requires_grad=True)
        with self.assertRaises(ContractViolation):
            gradient_check(lambda: theta.sum(), [theta], h=1e-2)

    def test_non_finite_loss(self):
        theta = torch.tensor([0.0], dtype=torch.float64, requires_grad=True)
        with self.assertRaises(GradientCheckError):
            gradient_check(lambda: (theta / theta).sum(), [theta])
