import numpy as np
import pytest

from q8llm import SamplerConfig, Xorshift64Star, sample
from q8llm.sampler import _nucleus, _pick, _softmax


class TestRng:
    def test_reproducible(self):
        a = Xorshift64Star(42)
        b = Xorshift64Star(42)
        assert [a.next_u64() for _ in range(5)] == [b.next_u64() for _ in range(5)]

    def test_uniform_range(self):
        rng = Xorshift64Star(7)
        draws = [rng.uniform() for _ in range(1000)]
        assert all(0.0 <= u < 1.0 for u in draws)
        assert 0.3 < np.mean(draws) < 0.7

    def test_zero_seed_escapes_fixed_point(self):
        rng = Xorshift64Star(0)
        assert rng.next_u64() != 0


class TestConfig:
    @pytest.mark.parametrize("top_p", [0.0, -0.1, 1.5])
    def test_bad_top_p(self, top_p):
        with pytest.raises(ValueError):
            SamplerConfig(top_p=top_p)

    def test_negative_temperature(self):
        with pytest.raises(ValueError):
            SamplerConfig(temperature=-1.0)


class TestSample:
    def test_greedy_argmax(self):
        logits = np.array([0.0, 5.0, 1.0], np.float32)
        cfg = SamplerConfig(temperature=0.0)
        assert sample(logits, cfg, Xorshift64Star(1)) == 1

    def test_greedy_tie_takes_lowest_index(self):
        logits = np.array([2.0, 5.0, 5.0], np.float32)
        cfg = SamplerConfig(temperature=0.0)
        assert sample(logits, cfg, Xorshift64Star(1)) == 1

    def test_inverse_cdf_hand_example(self):
        # uniform probs, u = 0.6 lands in the third bucket
        probs = np.full(4, 0.25)
        order, sp = _nucleus(probs, 1.0)
        assert _pick(order, sp, 0.6) == 2

    def test_top_p_prefix_rule(self):
        # 0.6 >= 0.5 already, so only token 0 survives
        logits = np.log(np.array([0.6, 0.3, 0.1]))
        cfg = SamplerConfig(temperature=1.0, top_p=0.5)
        rng = Xorshift64Star(99)
        assert all(sample(logits, cfg, rng) == 0 for _ in range(50))

    def test_deterministic_given_seed(self, rng):
        logits = rng.normal(size=32).astype(np.float32)
        cfg = SamplerConfig(temperature=0.9, top_p=0.8, rng_seed=1234)
        a = [sample(logits, cfg, Xorshift64Star(1234)) for _ in range(20)]
        b = [sample(logits, cfg, Xorshift64Star(1234)) for _ in range(20)]
        assert a == b

    def test_u_to_zero_gives_argmax_at_any_temperature(self, rng):
        logits = rng.normal(size=16).astype(np.float32)
        target = int(np.argmax(logits))
        for temp in (0.25, 1.0, 4.0):
            order, sp = _nucleus(_softmax(logits / temp), 1.0)
            assert _pick(order, sp, 1e-12) == target

    def test_matches_softmax_distribution(self):
        # chi-square over 1e5 draws on a 4-token distribution
        from scipy.stats import chisquare

        logits = np.array([0.5, -0.25, 1.5, 0.0], np.float32)
        probs = _softmax(logits)
        cfg = SamplerConfig(temperature=1.0, top_p=1.0)
        rng = Xorshift64Star(20240917)
        n = 100_000
        counts = np.zeros(4)
        for _ in range(n):
            counts[sample(logits, cfg, rng)] += 1
        result = chisquare(counts, probs * n)
        assert result.pvalue > 0.001
