"""Reduced attention: the reduce step, scoring, equivalence to standard
multi-head attention, and the cost accounting."""

import math

import numpy as np
import pytest

from stagetime import engine
from stagetime.attention import ReducedAttention, TemporalReduce, attention, attention_macs
from stagetime.errors import ConfigError


def reference_mhsa(x, heads, wq, bq, wk, bk, wv, bv, wo, bo):
    """Standard multi-head self-attention, written directly in numpy.

    Deliberately independent of the engine: plain loops over heads.
    """
    length, c = x.shape
    d = c // heads
    q = x @ wq + bq
    k = x @ wk + bk
    v = x @ wv + bv
    ctx = np.zeros((length, c), dtype=x.dtype)
    for h in range(heads):
        sl = slice(h * d, (h + 1) * d)
        scores = q[:, sl] @ k[:, sl].T / math.sqrt(d)
        scores = scores - scores.max(axis=1, keepdims=True)
        w = np.exp(scores)
        w /= w.sum(axis=1, keepdims=True)
        ctx[:, sl] = w @ v[:, sl]
    return ctx @ wo + bo


class TestTemporalReduce:
    def test_halves_length(self):
        tr = TemporalReduce(8, 2, np.random.default_rng(0))
        out = tr(engine.Tensor(np.random.default_rng(1).standard_normal((1, 100, 8)).astype(np.float32)))
        assert out.shape == (1, 50, 8)

    def test_ragged_length_pads(self):
        tr = TemporalReduce(4, 2, np.random.default_rng(0))
        x = np.random.default_rng(2).standard_normal((1, 5, 4)).astype(np.float32)
        out = tr(engine.Tensor(x))
        assert out.shape == (1, 3, 4)

    def test_matches_group_concat_project_oracle(self):
        rng = np.random.default_rng(3)
        tr = TemporalReduce(4, 2, np.random.default_rng(0))
        x = rng.standard_normal((1, 5, 4)).astype(np.float32)
        out = tr(engine.Tensor(x)).data[0]

        xp = np.concatenate([x[0], np.zeros((1, 4), dtype=np.float32)])  # pad to 6
        w, b = tr.proj.w.data, tr.proj.b.data
        gamma, beta = tr.norm.gamma.data, tr.norm.beta.data
        for g in range(3):
            group = xp[2 * g : 2 * g + 2].reshape(-1)
            proj = group @ w + b
            mu, var = proj.mean(), proj.var()
            expected = (proj - mu) / np.sqrt(var + 1e-5) * gamma + beta
            np.testing.assert_allclose(out[g], expected, atol=1e-5)

    def test_reduction_one_still_projects(self):
        # training mode applies the projection and norm even at reduction 1
        tr = TemporalReduce(4, 1, np.random.default_rng(5))
        x = np.random.default_rng(6).standard_normal((1, 7, 4)).astype(np.float32)
        out = tr(engine.Tensor(x))
        assert out.shape == (1, 7, 4)
        assert not np.allclose(out.data, x)


class TestAttentionCore:
    def test_single_key_returns_its_value(self):
        q = engine.Tensor(np.random.default_rng(0).standard_normal((3, 4)).astype(np.float32))
        k = engine.Tensor(np.random.default_rng(1).standard_normal((1, 4)).astype(np.float32))
        v = engine.Tensor(np.random.default_rng(2).standard_normal((1, 4)).astype(np.float32))
        out, weights = attention(q, k, v)
        np.testing.assert_allclose(weights.data, np.ones((3, 1)), atol=1e-7)
        for row in out.data:
            np.testing.assert_allclose(row, v.data[0], atol=1e-6)

    def test_identical_keys_average_values(self):
        k = np.tile(np.random.default_rng(3).standard_normal((1, 4)), (2, 1)).astype(np.float32)
        v = np.random.default_rng(4).standard_normal((2, 4)).astype(np.float32)
        q = np.random.default_rng(5).standard_normal((3, 4)).astype(np.float32)
        out, weights = attention(engine.Tensor(q), engine.Tensor(k), engine.Tensor(v))
        np.testing.assert_allclose(weights.data, np.full((3, 2), 0.5), atol=1e-6)
        np.testing.assert_allclose(out.data, np.tile(v.mean(axis=0), (3, 1)), atol=1e-6)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(6)
        q = rng.standard_normal((4, 8))
        k = rng.standard_normal((5, 8))
        v = rng.standard_normal((5, 8))
        expected = np.zeros((4, 8))
        for i in range(4):
            scores = np.array([q[i] @ k[j] / math.sqrt(8) for j in range(5)])
            w = np.exp(scores - scores.max())
            w /= w.sum()
            expected[i] = sum(w[j] * v[j] for j in range(5))
        out, _ = attention(engine.Tensor(q, dtype=np.float64),
                           engine.Tensor(k, dtype=np.float64),
                           engine.Tensor(v, dtype=np.float64))
        np.testing.assert_allclose(out.data, expected, atol=1e-5)


class TestReducedAttention:
    def test_passthrough_equals_reference_mhsa(self):
        for seed in range(10):
            rng = np.random.default_rng(1000 + seed)
            layer = ReducedAttention(32, 4, 1, np.random.default_rng(seed), passthrough=True)
            x = rng.standard_normal((64, 32)).astype(np.float32)
            out = layer(engine.Tensor(x[None]))
            expected = reference_mhsa(
                x.astype(np.float64), 4,
                layer.wq.w.data.astype(np.float64), layer.wq.b.data.astype(np.float64),
                layer.wk.w.data.astype(np.float64), layer.wk.b.data.astype(np.float64),
                layer.wv.w.data.astype(np.float64), layer.wv.b.data.astype(np.float64),
                layer.wo.w.data.astype(np.float64), layer.wo.b.data.astype(np.float64),
            )
            assert np.abs(out.data[0] - expected).max() <= 1e-5

    @pytest.mark.parametrize("length", [1, 7, 64])
    @pytest.mark.parametrize("reduction", [1, 2, 4])
    def test_output_length_preserved(self, length, reduction):
        layer = ReducedAttention(16, 4, reduction, np.random.default_rng(0))
        x = engine.Tensor(np.random.default_rng(1).standard_normal((2, length, 16)).astype(np.float32))
        assert layer(x).shape == (2, length, 16)

    def test_attention_rows_sum_to_one(self):
        layer = ReducedAttention(16, 2, 2, np.random.default_rng(2))
        x = engine.Tensor(np.random.default_rng(3).standard_normal((1, 10, 16)).astype(np.float32))
        record = []
        layer(x, record=record)
        (weights,) = record
        assert weights.shape == (1, 2, 10, 5)
        np.testing.assert_allclose(weights.sum(axis=-1), np.ones((1, 2, 10)), atol=1e-6)

    def test_permutation_changes_output(self):
        layer = ReducedAttention(16, 2, 2, np.random.default_rng(4))
        rng = np.random.default_rng(5)
        x = rng.standard_normal((1, 12, 16)).astype(np.float32)
        perm = rng.permutation(12)
        out = layer(engine.Tensor(x)).data
        out_perm = layer(engine.Tensor(x[:, perm])).data
        assert np.abs(out_perm - out[:, perm]).max() > 1e-3

    def test_passthrough_requires_reduction_one(self):
        with pytest.raises(ConfigError):
            ReducedAttention(16, 2, 2, np.random.default_rng(0), passthrough=True)

    def test_channels_must_divide_heads(self):
        with pytest.raises(ConfigError):
            ReducedAttention(10, 3, 1, np.random.default_rng(0))


class TestMacAccounting:
    def test_unreduced_score_cost_is_quadratic(self):
        counts = attention_macs(64, 32, 4, 1)
        assert counts["scores"] == 64 * 64 * 32

    def test_single_position(self):
        counts = attention_macs(1, 16, 2, 1)
        assert counts["scores"] == 16

    def test_zero_length_rejected(self):
        with pytest.raises(ConfigError):
            attention_macs(0, 16, 2, 1)

    @pytest.mark.parametrize("length", [64, 128, 256])
    @pytest.mark.parametrize("reduction", [2, 4])
    def test_reduction_divides_score_context_cost_exactly(self, length, reduction):
        base = attention_macs(length, 32, 4, 1)
        red = attention_macs(length, 32, 4, reduction)
        assert red["scores"] + red["context"] == (base["scores"] + base["context"]) // reduction

    def test_instrumented_execution_matches_formula(self):
        layer = ReducedAttention(16, 2, 2, np.random.default_rng(7))
        x = engine.Tensor(np.random.default_rng(8).standard_normal((1, 12, 16)).astype(np.float32))
        with engine.mac_tally() as tally:
            layer(x)
        assert tally.total == attention_macs(12, 16, 2, 2)["total"]


class TestWeightExport:
    def test_npy_roundtrip(self, tmp_path):
        from stagetime.attention import save_attention_weights

        layer = ReducedAttention(8, 2, 2, np.random.default_rng(9))
        x = engine.Tensor(np.random.default_rng(10).standard_normal((1, 6, 8)).astype(np.float32))
        record = []
        layer(x, record=record)
        path = str(tmp_path / "weights.npy")
        save_attention_weights(path, record[0])
        loaded = np.load(path)
        np.testing.assert_array_equal(loaded, record[0])
