"""Similarity heads: hand-computed oracles, range/shape contracts, and
gradient checks against central finite differences."""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from siamfi.encoder import EncoderConfig
from siamfi.errors import DimensionError
from siamfi.similarity import (
    AttentionHead,
    CsiNet,
    attention_similarity,
    cosine_similarity,
    gaussian_similarity,
)


def identity_head(d, temperature=1.0):
    head = AttentionHead(d1=d, h=1, d2=d, temperature=temperature)
    with torch.no_grad():
        head.w_q.copy_(torch.eye(d)[None])
        head.w_k.copy_(torch.eye(d)[None])
        head.b_q.zero_()
        head.b_k.zero_()
    return head


class TestAttention:
    def test_identity_oracle(self):
        head = identity_head(2)
        q = torch.tensor([[1.0, 0.0]])
        with torch.no_grad():
            s = attention_similarity(q, q, head)
        assert float(s[0, 0]) == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-6)

    def test_zero_query_scores_half(self):
        head = AttentionHead(d1=4, h=2, d2=3)
        with torch.no_grad():
            head.b_q.zero_()
            head.b_k.zero_()
        s = attention_similarity(torch.zeros(2, 4), torch.randn(5, 4), head)
        torch.testing.assert_close(s, torch.full((2, 5), 0.5))

    def test_shape_contract(self):
        head = AttentionHead(d1=6, h=4, d2=8)
        s = attention_similarity(torch.randn(3, 6), torch.randn(5, 6), head)
        assert s.shape == (3, 5)

    def test_open_interval(self):
        torch.manual_seed(0)
        head = AttentionHead(d1=4, h=2, d2=4).double()
        q = torch.randn(10, 4, dtype=torch.float64) * 5
        s = attention_similarity(q, torch.randn(10, 4, dtype=torch.float64) * 5, head)
        assert bool((s > 0).all()) and bool((s < 1).all())

    def test_dimension_mismatch(self):
        head = AttentionHead(d1=4)
        with pytest.raises(DimensionError):
            attention_similarity(torch.randn(2, 5), torch.randn(2, 4), head)

    def test_no_cross_row_normalization(self):
        head = AttentionHead(d1=4, h=2, d2=4)
        q = torch.randn(4, 4)
        k = torch.randn(6, 4)
        full = attention_similarity(q, k, head)
        partial = attention_similarity(q[:2], k, head)
        torch.testing.assert_close(full[:2], partial)

    def test_temperature_scales_logit(self):
        q = torch.tensor([[1.0, 0.0]])
        with torch.no_grad():
            s1 = attention_similarity(q, q, identity_head(2, temperature=1.0))
            s2 = attention_similarity(q, q, identity_head(2, temperature=2.0))
        assert float(s2[0, 0]) == pytest.approx(1 / (1 + math.exp(-0.5)), abs=1e-6)
        assert float(s2[0, 0]) < float(s1[0, 0])


class TestGaussian:
    def test_identical_is_one(self):
        x = torch.randn(4, 8)
        torch.testing.assert_close(gaussian_similarity(x, x).diagonal(), torch.ones(4))

    def test_closed_form(self):
        q = torch.tensor([[1.0, 0.0]])
        k = torch.tensor([[0.0, 1.0]])
        assert float(gaussian_similarity(q, k)) == pytest.approx(math.exp(-1.0), abs=1e-6)

    def test_zero_collapse(self):
        q = torch.zeros(3, 5)
        torch.testing.assert_close(gaussian_similarity(q, q), torch.ones(3, 3))

    def test_monotone_in_distance(self):
        q = torch.zeros(1, 2)
        k = torch.tensor([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        s = gaussian_similarity(q, k)[0]
        assert s[0] > s[1] > s[2]


class TestCosine:
    def test_identities(self):
        v = torch.tensor([[1.0, 2.0]])
        assert float(cosine_similarity(v, v)) == pytest.approx(1.0)
        assert float(cosine_similarity(v, -v)) == pytest.approx(0.0, abs=1e-7)
        w = torch.tensor([[-2.0, 1.0]])
        assert float(cosine_similarity(v, w)) == pytest.approx(0.5)

    def test_zero_norm_row_scores_half(self):
        q = torch.zeros(1, 3)
        k = torch.randn(4, 3)
        torch.testing.assert_close(cosine_similarity(q, k), torch.full((1, 4), 0.5))

    @given(scale=st.floats(min_value=0.1, max_value=100.0))
    @settings(max_examples=25, deadline=None)
    def test_scale_invariance(self, scale):
        torch.manual_seed(0)
        q = torch.randn(3, 4, dtype=torch.float64)
        k = torch.randn(3, 4, dtype=torch.float64)
        torch.testing.assert_close(
            cosine_similarity(q, k), cosine_similarity(q * scale, k), atol=1e-9, rtol=1e-9
        )


class TestCsiNet:
    def net(self):
        torch.manual_seed(0)
        return CsiNet(EncoderConfig(variant="tiny-residual", d1=16), heads=2, head_dim=8).eval()

    def test_self_similarity_diagonal(self):
        net = self.net()
        x = torch.randn(4, 2, 8, 6)
        s = net(x, x, metric="gaussian")
        torch.testing.assert_close(s.diagonal(), torch.ones(4))

    def test_row_permutation_equivariance(self):
        net = self.net()
        q = torch.randn(4, 2, 8, 6)
        k = torch.randn(3, 2, 8, 6)
        perm = torch.tensor([2, 0, 3, 1])
        s = net(q, k, metric="attention")
        s_perm = net(q[perm], k, metric="attention")
        torch.testing.assert_close(s[perm], s_perm)

    def test_unknown_metric(self):
        net = self.net()
        x = torch.randn(2, 2, 8, 6)
        with pytest.raises(ValueError):
            net(x, x, metric="manhattan")

    def test_shared_twin_encoder(self):
        net = self.net()
        x = torch.randn(2, 2, 8, 6)
        torch.testing.assert_close(net.encode(x), net.encode(x))


def directional_check(f, inputs, n_directions=10, eps=1e-3, tol=1e-3):
    """Analytic directional derivatives vs central finite differences."""
    for x in inputs:
        x.requires_grad_(True)
        if x.grad is not None:
            x.grad = None
    loss = f()
    loss.backward()
    grads = [x.grad.clone() for x in inputs]
    rng = np.random.default_rng(0)
    for _ in range(n_directions):
        dirs = [torch.from_numpy(rng.standard_normal(tuple(x.shape))) for x in inputs]
        norm = torch.sqrt(sum(d.pow(2).sum() for d in dirs))
        dirs = [d / norm for d in dirs]
        with torch.no_grad():
            for x, d in zip(inputs, dirs):
                x += eps * d
            up = f()
            for x, d in zip(inputs, dirs):
                x -= 2 * eps * d
            down = f()
            for x, d in zip(inputs, dirs):
                x += eps * d
        fd = float((up - down) / (2 * eps))
        analytic = float(sum((g * d).sum() for g, d in zip(grads, dirs)))
        assert abs(fd - analytic) <= tol * max(1.0, abs(fd))


class TestGradients:
    def test_attention_gradients(self):
        torch.manual_seed(0)
        head = AttentionHead(d1=4, h=2, d2=3).double()
        q = torch.randn(3, 4, dtype=torch.float64)
        k = torch.randn(2, 4, dtype=torch.float64)
        params = [head.w_q, head.b_q, head.w_k, head.b_k]
        directional_check(lambda: attention_similarity(q, k, head).sum(), [q, k] + params)

    def test_gaussian_gradients(self):
        torch.manual_seed(1)
        q = torch.randn(3, 5, dtype=torch.float64)
        k = torch.randn(4, 5, dtype=torch.float64)
        directional_check(lambda: gaussian_similarity(q, k).sum(), [q, k])

    def test_cosine_gradients(self):
        torch.manual_seed(2)
        q = torch.randn(3, 5, dtype=torch.float64) + 0.5
        k = torch.randn(4, 5, dtype=torch.float64) + 0.5
        directional_check(lambda: cosine_similarity(q, k).sum(), [q, k])
