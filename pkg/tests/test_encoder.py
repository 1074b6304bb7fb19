"""Encoder blocks: positional encoding modes, residual gating, stages."""

import numpy as np
import pytest

from stagetime import engine
from stagetime.encoder import EncoderBlock, PosConfig, PositionalEncoding, Stage, sinusoid_table
from stagetime.errors import ConfigError
from stagetime.gradcheck import finite_difference_check
from stagetime.nn import Parameter
from stagetime.slicing import SliceConfig


def make_pos(mode, channels=8, kernel=3, max_len=64, seed=0):
    return PositionalEncoding(PosConfig(mode, kernel, max_len), channels, np.random.default_rng(seed))


class TestPositionalEncoding:
    def test_none_is_identity(self):
        pos = make_pos("none")
        x = engine.Tensor(np.random.default_rng(0).standard_normal((1, 5, 8)).astype(np.float32))
        assert pos(x) is x

    def test_contextual_zero_input_zero_output(self):
        pos = make_pos("contextual")
        x = engine.Tensor(np.zeros((1, 6, 8), dtype=np.float32))
        np.testing.assert_array_equal(pos(x).data, x.data)

    def test_contextual_interior_shift_equivariance(self):
        pos = make_pos("contextual", kernel=3)
        rng = np.random.default_rng(1)
        content = rng.standard_normal((1, 20, 8)).astype(np.float32)
        x = np.zeros((1, 24, 8), dtype=np.float32)
        x[:, 2:22] = content
        shifted = np.zeros_like(x)
        shifted[:, 3:23] = content
        out = pos(engine.Tensor(x)).data
        out_sh = pos(engine.Tensor(shifted)).data
        # interior positions: shifted output equals output shifted by one
        np.testing.assert_allclose(out_sh[:, 4:22], out[:, 3:21], atol=1e-5)

    def test_static_adds_sinusoid_table(self):
        pos = make_pos("static")
        x = np.zeros((2, 10, 8), dtype=np.float32)
        out = pos(engine.Tensor(x)).data
        expected = sinusoid_table(10, 8, np.float32)
        np.testing.assert_allclose(out[0], expected, atol=1e-6)
        np.testing.assert_allclose(out[1], expected, atol=1e-6)

    def test_learnable_adds_trainable_rows(self):
        pos = make_pos("learnable", max_len=16)
        x = np.zeros((1, 5, 8), dtype=np.float32)
        out = pos(engine.Tensor(x)).data
        np.testing.assert_allclose(out[0], pos.table.data[:5], atol=1e-7)

    def test_learnable_capacity_exceeded(self):
        pos = make_pos("learnable", max_len=4)
        with pytest.raises(ConfigError, match="capacity"):
            pos(engine.Tensor(np.zeros((1, 5, 8), dtype=np.float32)))

    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigError):
            PosConfig("contextual", kernel=4)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ConfigError):
            PosConfig("fourier")


class TestEncoderBlock:
    def make_block(self, channels=8, heads=2, reduction=2, seed=0):
        return EncoderBlock(channels, heads, reduction, 4, np.random.default_rng(seed))

    def test_identity_at_initialization_exact(self):
        block = self.make_block()
        x = np.random.default_rng(2).standard_normal((2, 9, 8)).astype(np.float32)
        out = block(engine.Tensor(x)).data
        assert (out == x).all()

    def test_stacked_blocks_identity_at_init(self):
        blocks = [self.make_block(seed=s) for s in range(4)]
        x = engine.Tensor(np.random.default_rng(3).standard_normal((1, 7, 8)).astype(np.float32))
        h = x
        for b in blocks:
            h = b(h)
        assert (h.data == x.data).all()

    def test_ffn_bias_only_path(self):
        block = self.make_block()
        bias = np.random.default_rng(4).standard_normal(8).astype(np.float32)
        block.alpha_attn.data = np.asarray(0.0, dtype=np.float32)
        block.alpha_ffn.data = np.asarray(1.0, dtype=np.float32)
        for lin in (block.ffn.lin1, block.ffn.lin2):
            lin.w.data = np.zeros_like(lin.w.data)
            lin.b.data = np.zeros_like(lin.b.data)
        block.ffn.lin2.b.data = bias
        x = np.random.default_rng(5).standard_normal((1, 6, 8)).astype(np.float32)
        out = block(engine.Tensor(x)).data
        np.testing.assert_allclose(out, x + bias, atol=1e-6)

    @pytest.mark.parametrize("length", [1, 33, 128])
    def test_shape_preserved(self, length):
        block = self.make_block()
        x = engine.Tensor(np.random.default_rng(6).standard_normal((1, length, 8)).astype(np.float32))
        assert block(x).shape == (1, length, 8)


class TestStage:
    def make_stage(self, in_channels=9, channels=64, layers=6, seed=0, mode="contextual"):
        return Stage(SliceConfig(2, 2, channels), in_channels, layers, 4, 2,
                     PosConfig(mode=mode), 4, np.random.default_rng(seed))

    def test_table_shape_chain(self):
        stage = self.make_stage()
        x = engine.Tensor(np.random.default_rng(7).standard_normal((1, 144, 9)).astype(np.float32))
        out = stage(x)
        assert out.shape == (1, 72, 64)

    def test_fresh_stage_equals_positional_of_partition(self):
        stage = self.make_stage(in_channels=3, channels=8, layers=2, seed=1)
        x = engine.Tensor(np.random.default_rng(8).standard_normal((1, 20, 3)).astype(np.float32))
        expected = stage.pos(stage.partition(x)).data
        np.testing.assert_array_equal(stage(x).data, expected)

    def test_gradients_through_two_blocks(self):
        with engine.default_dtype(np.float64):
            stage = Stage(SliceConfig(2, 2, 6), 2, 2, 2, 2, PosConfig(), 2,
                          np.random.default_rng(9))
            for name, p in stage.named_parameters():
                if "alpha" in name:
                    p.data = np.asarray(0.5)
            x = Parameter(np.random.default_rng(10).standard_normal((1, 10, 2)))

            def loss_fn():
                return engine.tsum(engine.mul(stage(x), stage(x)))

            named = [("x", x)] + list(stage.named_parameters())
            errors = finite_difference_check(loss_fn, named)
            assert max(errors.values()) < 1e-3

    def test_permutation_invariance_of_pooled_output_without_positions(self):
        # with mode=none and reduction 1, blocks are permutation-equivariant,
        # so mean-pooled features ignore token order
        stage = Stage(SliceConfig(2, 2, 8), 2, 2, 2, 1, PosConfig(mode="none"), 4,
                      np.random.default_rng(11))
        rng = np.random.default_rng(12)
        for name, p in stage.named_parameters():
            if "alpha" in name:
                p.data = np.asarray(rng.uniform(0.2, 0.8), dtype=np.float32)
        tokens = stage.partition(
            engine.Tensor(rng.standard_normal((1, 24, 2)).astype(np.float32)))
        perm = rng.permutation(12)
        permuted = engine.Tensor(tokens.data[:, perm])

        def run(tok):
            h = tok
            for b in stage.blocks:
                h = b(h)
            return engine.mean_axis(h, 1).data

        np.testing.assert_allclose(run(permuted), run(tokens), atol=1e-5)
