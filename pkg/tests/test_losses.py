import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualhead_pd import numerics as nx
from dualhead_pd.losses import (
    ContrastiveConfig,
    bce_loss,
    contrastive_from_distances,
    contrastive_loss,
    mine_hard_pairs,
    total_loss,
)
from dualhead_pd.model import HeadOutput
from dualhead_pd.numerics import ConfigurationError


def brute_force(emb, labels):
    pos, neg = None, None
    for i, j in itertools.combinations(range(len(labels)), 2):
        d = float(np.linalg.norm(emb[i] - emb[j]))
        if labels[i] == labels[j] and (pos is None or d > pos[1]):
            pos = ((i, j), d)
        if labels[i] != labels[j] and (neg is None or d < neg[1]):
            neg = ((i, j), d)
    return pos, neg


def head(key, index, prob, emb):
    return HeadOutput(key, np.asarray(index), nx.Tensor(np.asarray(prob, float)), nx.Tensor(np.asarray(emb, float)), [])


batches = st.integers(2, 64).flatmap(
    lambda n: st.tuples(st.integers(0, 2**31 - 1), st.just(n), st.integers(1, 5))
)


class TestBce:
    @pytest.mark.parametrize("y", [0, 1])
    def test_half(self, y):
        assert bce_loss(0.5, y) == pytest.approx(np.log(2))

    def test_confident_correct(self):
        assert bce_loss(0.9, 1) == pytest.approx(0.10536, abs=1e-5)

    def test_limit_is_small(self):
        assert bce_loss(1.0, 1) < 1e-6 and bce_loss(0.0, 0) < 1e-6

    def test_clamped_extremes_finite(self):
        assert np.isfinite(bce_loss(0.0, 1)) and np.isfinite(bce_loss(1.0, 0))

    def test_tensor_mean(self):
        out = bce_loss(nx.Tensor(np.array([0.5, 0.9])), np.array([0, 1]))
        assert float(out.value) == pytest.approx((np.log(2) - np.log(0.9)) / 2)


class TestMining:
    def test_hand_example(self):
        pairs = mine_hard_pairs([0.0, 1.0, 0.9, 3.0], [0, 0, 1, 1])
        assert pairs.hardest_positive == (2, 3) and pairs.d_pos == pytest.approx(2.1)
        assert pairs.hardest_negative == (1, 2) and pairs.d_neg == pytest.approx(0.1)

    def test_single_label_has_no_negative(self):
        assert mine_hard_pairs([0.0, 1.0, 2.0], [1, 1, 1]).hardest_negative is None

    def test_two_distinct_labels(self):
        pairs = mine_hard_pairs([0.0, 1.0], [0, 1])
        assert pairs.hardest_positive is None and pairs.hardest_negative == (0, 1)

    @settings(max_examples=60, deadline=None)
    @given(batches)
    def test_matches_exhaustive_search(self, args):
        seed, n, d = args
        r = np.random.default_rng(seed)
        emb = r.standard_normal((n, d))
        labels = r.integers(0, 2, n)
        pairs = mine_hard_pairs(emb, labels)
        pos, neg = brute_force(emb, labels)
        assert pairs.hardest_positive == (pos[0] if pos else None)
        assert pairs.hardest_negative == (neg[0] if neg else None)
        if pos:
            assert pairs.d_pos == pytest.approx(pos[1])
        if neg:
            assert pairs.d_neg == pytest.approx(neg[1])


class TestContrastive:
    def test_arithmetic(self):
        assert contrastive_from_distances(0.5, 0.7) == pytest.approx(0.6)

    def test_within_margins_is_zero(self):
        assert contrastive_from_distances(0.1, 1.5) == 0.0

    def test_literal_form_goes_negative(self):
        cfg = ContrastiveConfig(hinge=False)
        assert contrastive_from_distances(0.1, 1.5, cfg) == pytest.approx(-0.1 - 0.5)

    def test_four_point_oracle(self, rng):
        emb, labels = rng.standard_normal((4, 3)), np.array([0, 1, 1, 0])
        pos, neg = brute_force(emb, labels)
        expected = max(0, pos[1] - 0.2) + max(0, 1.0 - neg[1])
        assert contrastive_loss(emb, labels) == pytest.approx(expected)
        assert float(contrastive_loss(nx.Tensor(emb), labels).value) == pytest.approx(expected)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(3, 12))
    def test_nonneg_and_zero_iff_within_margins(self, seed, n):
        r = np.random.default_rng(seed)
        emb = r.standard_normal((n, 2)) * r.uniform(0.05, 2)
        labels = np.array([0, 1] + list(r.integers(0, 2, n - 2)))
        pairs = mine_hard_pairs(emb, labels)
        value = contrastive_loss(emb, labels)
        assert value >= 0
        if pairs.hardest_positive is not None:
            inside = pairs.d_pos <= 0.2 and pairs.d_neg >= 1.0
            assert (value == 0) == inside

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(-50, 50))
    def test_translation_invariant(self, seed, shift):
        r = np.random.default_rng(seed)
        emb, labels = r.standard_normal((8, 3)), r.integers(0, 2, 8)
        assert contrastive_loss(emb + shift, labels) == pytest.approx(contrastive_loss(emb, labels), abs=1e-9)

    @pytest.mark.parametrize("kw", [dict(m_pos=1.0, m_neg=0.5), dict(m_pos=-0.1), dict(weight=-1)])
    def test_config_validation(self, kw):
        with pytest.raises(ConfigurationError):
            ContrastiveConfig(**kw)


class TestTotalLoss:
    def outputs(self):
        ddk = head("ddk", [0, 2, 3], [0.2, 0.7, 0.6], [[0.0, 0.0], [0.5, 0.0], [0.0, 2.0]])
        speech = head("speech", [1, 4], [0.4, 0.9], [[1.0, 1.0], [1.0, 1.3]])
        return [ddk, speech], np.array([0, 1, 1, 0, 1])

    def test_zero_weight_is_mean_bce(self):
        outs, labels = self.outputs()
        loss, _ = total_loss(outs, labels, ContrastiveConfig(weight=0.0))
        probs = np.array([0.2, 0.4, 0.7, 0.6, 0.9])
        assert float(loss.value) == pytest.approx(bce_loss(probs, labels))

    def test_mixed_batch_composition(self):
        outs, labels = self.outputs()
        loss, parts = total_loss(outs, labels)
        probs = np.array([0.2, 0.4, 0.7, 0.6, 0.9])
        expected = bce_loss(probs, labels)
        expected += contrastive_loss(outs[0].embedding.value, labels[[0, 2, 3]])
        expected += contrastive_loss(outs[1].embedding.value, labels[[1, 4]])
        assert float(loss.value) == pytest.approx(expected)
        assert parts["bce"] == pytest.approx(bce_loss(probs, labels))

    def test_perfect_separation_is_zero(self):
        emb = [[0.0], [0.0], [5.0], [5.0]]
        outs = [head("ddk", [0, 1, 2, 3], [1e-9, 1e-9, 1 - 1e-9, 1 - 1e-9], emb)]
        loss, _ = total_loss(outs, np.array([0, 0, 1, 1]))
        assert float(loss.value) < 1e-6

    def test_contrastive_switch(self):
        outs, labels = self.outputs()
        off, parts = total_loss(outs, labels, contrastive=False)
        assert parts["contrastive"] == 0.0
        assert float(off.value) == pytest.approx(parts["bce"])
