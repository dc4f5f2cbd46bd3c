import math
import unittest

import numpy as np
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from adatok import ComplexityScore, ImageDescription, dct_complexity
from adatok._complexity import (
    PSNR_SENTINEL,
    encoded_size_complexity,
    heuristic_mock_score,
    label_caption,
    lpips_proxy,
    luma_quant_table,
    pixel_metrics,
    pyramid_distance,
)
from adatok._features import FeatureExtractor
from adatok.types import ContractViolation, ScoreRangeError


class TestDescriptions(unittest.TestCase):
    def test_empty_caption(self):
        for caption in ("", "   "):
            with self.subTest(caption=caption), self.assertRaises(ContractViolation):
                ImageDescription(caption)

    def test_json(self):
        desc = ImageDescription("a cat", has_faces=True)
        self.assertEqual(ImageDescription.from_json(desc.to_json()), desc)
        self.assertEqual(ImageDescription.from_json({"caption": "a cat"}),
                         ImageDescription("a cat"))

    def test_label_caption(self):
        self.assertEqual(label_caption("goldfish"), "this is an image of goldfish")

    def test_score_range(self):
        for value in (0, 10):
            with self.subTest(value=value), self.assertRaises(ScoreRangeError):
                ComplexityScore(value)

    def test_score_equality_ignores_metadata(self):
        self.assertEqual(ComplexityScore(3, source="backend", attempts=2), ComplexityScore(3))
        self.assertEqual(int(ComplexityScore(6)), 6)


class TestHeuristicScore(unittest.TestCase):
    def test_content_words(self):
        self.assertEqual(heuristic_mock_score(ImageDescription("a dog lying on the grass")).value,
                         2)

    def test_text_and_faces(self):
        caption = "a dog lying on the grass"
        self.assertEqual(heuristic_mock_score(ImageDescription(caption, has_text=True)).value, 4)
        self.assertEqual(heuristic_mock_score(
            ImageDescription(caption, has_text=True, has_faces=True)).value, 6)

    def test_base_capped(self):
        caption = " ".join("word{}".format(chr(ord("a") + i)) for i in range(20))
        self.assertEqual(heuristic_mock_score(ImageDescription(caption)).value, 5)
        self.assertEqual(heuristic_mock_score(
            ImageDescription(caption, has_text=True, has_faces=True)).value, 9)

    def test_repeated_words_count_once(self):
        self.assertEqual(heuristic_mock_score(ImageDescription("sky sky sky sky")).value, 1)

    @given(st.text(alphabet="abcdefgh xyz", min_size=1, max_size=80).filter(str.strip),
           st.booleans(), st.booleans())
    def test_always_in_range(self, caption, has_text, has_faces):
        score = heuristic_mock_score(ImageDescription(caption, has_text, has_faces))
        self.assertTrue(1 <= score.value <= 9)
        self.assertEqual(score, heuristic_mock_score(ImageDescription(caption, has_text,
                                                                      has_faces)))


class TestDctComplexity(unittest.TestCase):
    def test_quant_table(self):
        self.assertEqual(luma_quant_table(50)[0, 0], 16)
        self.assertEqual(luma_quant_table(75)[0, 0], 8)
        self.assertTrue((luma_quant_table(100) == 1).all())
        self.assertEqual(luma_quant_table(1).max(), 255)
        with self.assertRaises(ContractViolation):
            luma_quant_table(0)

    def test_black_blocks_keep_only_dc(self):
        self.assertEqual(dct_complexity(torch.zeros(3, 8, 8)), 1)
        self.assertEqual(dct_complexity(torch.zeros(3, 16, 16)), 4)

    def test_edge_padding(self):
        self.assertEqual(dct_complexity(torch.zeros(1, 9, 9)), 4)

    def test_constant_counts_one_dc_per_block(self):
        for value in (0.0, 0.5, 128 / 255, 0.501, 1.0):
            with self.subTest(value=value):
                self.assertEqual(dct_complexity(torch.full((3, 16, 16), value)), 4)

    def test_checkerboard_beats_constant(self):
        board = (torch.arange(16).view(16, 1) + torch.arange(16).view(1, 16)) % 2
        image = board.to(torch.float32).expand(3, 16, 16)
        self.assertGreater(dct_complexity(image), dct_complexity(torch.full((3, 16, 16), 0.5)))

    def test_matches_direct_block_transform(self):
        rng = np.random.default_rng(3)
        image = rng.random((3, 64, 64))
        luma = (0.299 * image[0] + 0.587 * image[1] + 0.114 * image[2]) * 255.0 - 128.0
        table = luma_quant_table(75)
        n = np.arange(8)
        scale = [math.sqrt(1 / 8)] + [math.sqrt(2 / 8)] * 7
        basis = [[np.outer(np.cos((2 * n + 1) * u * math.pi / 16),
                           np.cos((2 * n + 1) * v * math.pi / 16)) * scale[u] * scale[v]
                  for v in range(8)] for u in range(8)]
        expected = 0
        for by in range(0, 64, 8):
            for bx in range(0, 64, 8):
                block = luma[by:by + 8, bx:bx + 8]
                for u in range(8):
                    for v in range(8):
                        level = round(float((block * basis[u][v]).sum()) / table[u, v])
                        if u == 0 and v == 0 or level != 0:
                            expected += 1
        self.assertEqual(dct_complexity(torch.from_numpy(image), quality=75), expected)

    def test_monotone_in_quality(self):
        rng = np.random.default_rng(4)
        image = torch.from_numpy(rng.random((3, 32, 32)))
        counts = [dct_complexity(image, quality) for quality in (5, 25, 50, 75, 95, 100)]
        self.assertEqual(counts, sorted(counts))
        self.assertLess(counts[0], counts[-1])

    def test_noise_beats_flat(self):
        rng = np.random.default_rng(0)
        noise = torch.from_numpy(rng.random((3, 32, 32)).astype(np.float32))
        flat = torch.full((3, 32, 32), 0.3)
        self.assertGreater(dct_complexity(noise), dct_complexity(flat))

    def test_bad_shape(self):
        with self.assertRaises(ContractViolation):
            dct_complexity(torch.zeros(2, 8, 8))
        with self.assertRaises(ContractViolation):
            dct_complexity(torch.zeros(8, 8))

    def test_encoded_size_orders_noise_above_flat(self):
        rng = np.random.default_rng(1)
        noise = torch.from_numpy(rng.random((3, 32, 32)).astype(np.float32))
        flat = torch.full((3, 32, 32), 0.3)
        self.assertGreater(encoded_size_complexity(noise), encoded_size_complexity(flat))

    def test_encoded_size_custom_encoder(self):
        size = encoded_size_complexity(torch.zeros(3, 4, 4), lambda array: bytes(array.size))
        self.assertEqual(size, 48)


class TestPixelMetrics(unittest.TestCase):
    def test_identical(self):
        x = torch.rand(3, 8, 8)
        self.assertEqual(pixel_metrics(x, x), (0.0, PSNR_SENTINEL))

    def test_known_error(self):
        x = torch.zeros(1, 4, 4)
        metrics = pixel_metrics(x, x + 0.1)
        self.assertAlmostEqual(metrics.mse, 0.01, places=6)
        self.assertAlmostEqual(metrics.psnr, 20.0, places=4)

    def test_shape_mismatch(self):
        with self.assertRaises(ContractViolation):
            pixel_metrics(torch.zeros(3, 4, 4), torch.zeros(3, 4, 5))

    @settings(max_examples=25, deadline=None)
    @given(st.floats(min_value=1e-3, max_value=1.0))
    def test_psnr_matches_mse(self, delta):
        x = torch.zeros(1, 2, 2, dtype=torch.float64)
        metrics = pixel_metrics(x, x + delta)
        self.assertAlmostEqual(metrics.psnr, min(-10 * math.log10(delta * delta), 100.0),
                               places=6)


class TestPerceptualProxy(unittest.TestCase):
    def setUp(self):
        self.extractor = FeatureExtractor(3, (4, 8), seed=7)

    def test_zero_for_identical(self):
        x = torch.rand(1, 3, 16, 16)
        self.assertEqual(float(lpips_proxy(x, x, self.extractor)), 0.0)

    def test_positive_for_different(self):
        gen = torch.Generator().manual_seed(0)
        x = torch.rand(1, 3, 16, 16, generator=gen)
        y = torch.rand(1, 3, 16, 16, generator=gen)
        self.assertGreater(float(lpips_proxy(x, y, self.extractor)), 0.0)

    def test_scale_invariant_per_position(self):
        fx = [torch.rand(1, 4, 3, 3) + 0.1]
        self.assertAlmostEqual(float(pyramid_distance(fx, [2.0 * fx[0]])), 0.0, places=6)

    def test_shape_mismatch(self):
        with self.assertRaises(ContractViolation):
            lpips_proxy(torch.zeros(1, 3, 8, 8), torch.zeros(1, 3, 16, 16), self.extractor)
