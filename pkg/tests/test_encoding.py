import math

import numpy as np
import pytest

from ldpmean import (
    check_probability_vector,
    kclosest_probs,
    message_from_bytes,
    message_to_bytes,
    message_width,
)


class TestKClosestProbs:
    def test_worked_example(self):
        # M=4, k=1, eps=ln 2: top message gets 2/(2+3), others 1/5
        probs = kclosest_probs(np.array([0.9, 0.1, -0.3, -0.7]), 1, math.log(2.0))
        assert np.abs(probs - np.array([2 / 5, 1 / 5, 1 / 5, 1 / 5])).max() < 1e-15

    def test_sums_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            M = int(rng.integers(2, 60))
            k = float(rng.uniform(1.0, M - 1.0))
            eps = float(rng.uniform(0.05, 9.0))
            p = kclosest_probs(rng.standard_normal(M), k, eps)
            assert abs(p.sum() - 1.0) < 1e-12
            check_probability_vector(p, eps)

    def test_integer_k_ratio_exact(self):
        rng = np.random.default_rng(1)
        for k in (1, 2, 5):
            p = kclosest_probs(rng.standard_normal(9), k, 2.5)
            assert abs(p.max() / p.min() - math.exp(2.5)) < 1e-12

    def test_fractional_k_interpolates(self):
        eps = 1.0
        e = math.exp(eps)
        scores = np.array([3.0, 2.0, 1.0, 0.0])
        k = 1.5
        denom = k * e + 4 - k
        p = kclosest_probs(scores, k, eps)
        assert abs(p[0] - e / denom) < 1e-12
        assert abs(p[1] - (0.5 * (e - 1) + 1) / denom) < 1e-12
        assert abs(p[2] - 1 / denom) < 1e-12 and abs(p[3] - 1 / denom) < 1e-12
        assert abs(p.sum() - 1.0) < 1e-12

    def test_ties_break_toward_lower_index(self):
        p = kclosest_probs(np.array([1.0, 1.0, 1.0]), 1, 1.0)
        assert p[0] > p[1] == p[2]

    def test_k_range_enforced(self):
        scores = np.zeros(4)
        for bad in (0.5, 4.0, 3.5):
            with pytest.raises(ValueError):
                kclosest_probs(scores, bad, 1.0)
        with pytest.raises(ValueError):
            kclosest_probs(scores, 1, 0.0)

    def test_check_probability_vector_rejects(self):
        with pytest.raises(ValueError):
            check_probability_vector(np.array([0.7, 0.2]), 1.0)
        with pytest.raises(ValueError):
            check_probability_vector(np.array([0.9, 0.1]), 1.0)  # ratio 9 > e


class TestMessageBytes:
    @pytest.mark.parametrize("bits,width", [(1, 1), (8, 1), (9, 2), (16, 2), (17, 3)])
    def test_width(self, bits, width):
        assert message_width(bits) == width

    def test_round_trip_little_endian(self):
        buf = message_to_bytes(0x1A2, 12)
        assert buf == bytes([0xA2, 0x01])
        assert message_from_bytes(buf, 12) == 0x1A2

    def test_range_checks(self):
        with pytest.raises(ValueError):
            message_to_bytes(4, 2)
        with pytest.raises(ValueError):
            message_from_bytes(b"\x10", 3)
        with pytest.raises(ValueError):
            message_from_bytes(b"\x01\x00", 3)
