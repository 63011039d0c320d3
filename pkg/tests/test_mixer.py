import numpy as np
import pytest

from placemix.kernel import ShapeError, central_difference
from placemix.mixer import (
    AggregatorConfig,
    AggregatorModel,
    GridFactorizationError,
    MixerBlock,
    ProjectionHead,
    aggregate,
    aggregate_backward,
    depth_projection,
    flatten_maps,
    init_model,
    mixer_block_forward,
    mixer_stack_forward,
    row_projection,
    tokens_to_maps,
)


def make_model(grid, channels, depth, out_channels, out_rows, seed=0, dtype=np.float64,
               hidden_ratio=1, input_norm=False):
    cfg = AggregatorConfig(
        depth=depth, out_channels=out_channels, out_rows=out_rows,
        hidden_ratio=hidden_ratio, input_norm=input_norm,
    )
    return init_model(grid * grid, channels, cfg, seed=seed, dtype=dtype)


def relative_error(a, b):
    scale = max(abs(a), abs(b))
    if scale < 1e-7:
        return abs(a - b)  # treat as absolute near zero
    return abs(a - b) / scale


class TestTokensToMaps:
    def test_base_backbone_shape(self):
        # 224/14 = 16 patches per side -> 256 tokens; base embedding is 768
        tokens = np.zeros((256, 768), dtype=np.float32)
        maps = tokens_to_maps(tokens)
        assert maps.shape == (768, 16, 16)

    def test_smallest_square_layout(self):
        tokens = np.array(
            [[0.0, 10.0], [1.0, 11.0], [2.0, 12.0], [3.0, 13.0]], dtype=np.float32
        )
        maps = tokens_to_maps(tokens)
        assert maps.shape == (2, 2, 2)
        # maps[i][y][x] = tokens[y*w + x][i], row-major grid
        np.testing.assert_array_equal(maps[0], [[0.0, 1.0], [2.0, 3.0]])
        np.testing.assert_array_equal(maps[1], [[10.0, 11.0], [12.0, 13.0]])

    def test_non_square_token_count_rejected(self):
        with pytest.raises(GridFactorizationError, match="6"):
            tokens_to_maps(np.zeros((6, 2), dtype=np.float32))

    def test_flatten_is_token_transpose(self):
        rng = np.random.default_rng(0)
        tokens = rng.standard_normal((9, 5)).astype(np.float32)
        flat = flatten_maps(tokens_to_maps(tokens))
        np.testing.assert_array_equal(flat, tokens.T)


class TestMixerBlock:
    def test_zero_weights_residual_identity(self):
        rng = np.random.default_rng(1)
        f = rng.standard_normal((3, 4)).astype(np.float32)
        block = MixerBlock(w1=np.zeros((4, 4), np.float32), w2=np.zeros((4, 4), np.float32))
        np.testing.assert_array_equal(mixer_block_forward(f, block), f)

    def test_scalar_hand_computation(self):
        f = np.array([[2.0]])
        block = MixerBlock(w1=np.array([[1.0]]), w2=np.array([[1.0]]))
        np.testing.assert_array_equal(mixer_block_forward(f, block), [[4.0]])

    def test_matches_per_row_oracle(self):
        rng = np.random.default_rng(2)
        f = rng.standard_normal((3, 4))
        block = MixerBlock(w1=rng.standard_normal((4, 4)), w2=rng.standard_normal((4, 4)))
        # independent reference: loop row by row straight from the update rule
        expected = np.empty_like(f)
        for i in range(f.shape[0]):
            x = f[i]
            expected[i] = block.w2 @ np.maximum(block.w1 @ x, 0.0) + x
        np.testing.assert_allclose(mixer_block_forward(f, block), expected, rtol=1e-6)

    def test_dimension_mismatch(self):
        block = MixerBlock(w1=np.zeros((4, 4)), w2=np.zeros((4, 4)))
        with pytest.raises(ShapeError):
            mixer_block_forward(np.zeros((3, 5)), block)

    def test_hidden_ratio_widens_w1(self):
        rng = np.random.default_rng(3)
        f = rng.standard_normal((2, 4))
        block = MixerBlock(w1=rng.standard_normal((8, 4)), w2=rng.standard_normal((4, 8)))
        out = mixer_block_forward(f, block)
        assert out.shape == f.shape


class TestMixerStack:
    def test_empty_stack_is_identity(self):
        rng = np.random.default_rng(4)
        f = rng.standard_normal((5, 9)).astype(np.float32)
        np.testing.assert_array_equal(mixer_stack_forward(f, []), f)

    def test_singleton_equals_block(self):
        rng = np.random.default_rng(5)
        f = rng.standard_normal((3, 4))
        block = MixerBlock(w1=rng.standard_normal((4, 4)), w2=rng.standard_normal((4, 4)))
        np.testing.assert_array_equal(
            mixer_stack_forward(f, [block]), mixer_block_forward(f, block)
        )

    def test_two_blocks_equal_manual_composition(self):
        rng = np.random.default_rng(6)
        f = rng.standard_normal((3, 4))
        blocks = [
            MixerBlock(w1=rng.standard_normal((4, 4)), w2=rng.standard_normal((4, 4)))
            for _ in range(2)
        ]
        manual = mixer_block_forward(mixer_block_forward(f, blocks[0]), blocks[1])
        np.testing.assert_array_equal(mixer_stack_forward(f, blocks), manual)

    @pytest.mark.parametrize("depth", range(8))
    def test_isotropy_for_all_depths(self, depth):
        rng = np.random.default_rng(depth)
        f = rng.standard_normal((6, 4)).astype(np.float32)
        blocks = [
            MixerBlock(
                w1=rng.standard_normal((4, 4)).astype(np.float32),
                w2=rng.standard_normal((4, 4)).astype(np.float32),
            )
            for _ in range(depth)
        ]
        assert mixer_stack_forward(f, blocks).shape == f.shape


class TestProjections:
    def test_depth_projection_hand_arithmetic(self):
        z = np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 1.0]])
        w_depth = np.array([[1.0, 1.0]])
        np.testing.assert_array_equal(depth_projection(z, w_depth), [[1.0, 1.0, 3.0]])

    def test_depth_projection_identity(self):
        rng = np.random.default_rng(7)
        z = rng.standard_normal((4, 6))
        np.testing.assert_array_equal(depth_projection(z, np.eye(4)), z)

    def test_depth_projection_matches_matmul_oracle(self):
        rng = np.random.default_rng(8)
        z = rng.standard_normal((5, 7))
        w = rng.standard_normal((3, 5))
        expected = np.zeros((3, 7))
        for i in range(3):
            for j in range(7):
                for k in range(5):
                    expected[i, j] += w[i, k] * z[k, j]
        np.testing.assert_allclose(depth_projection(z, w), expected, rtol=1e-10)

    def test_row_projection_identity(self):
        zp = np.array([[1.0, 2.0]])
        w_row = np.eye(2)
        np.testing.assert_array_equal(row_projection(zp, w_row), [[1.0, 2.0]])

    def test_row_projection_row_sum(self):
        zp = np.array([[1.0, 1.0, 1.0]])
        w_row = np.array([[1.0, 1.0, 1.0]])
        np.testing.assert_array_equal(row_projection(zp, w_row), [[3.0]])

    def test_row_projection_matches_transpose_oracle(self):
        rng = np.random.default_rng(9)
        zp = rng.standard_normal((4, 6))
        w = rng.standard_normal((2, 6))
        expected = np.zeros((4, 2))
        for i in range(4):
            for j in range(2):
                for k in range(6):
                    expected[i, j] += w[j, k] * zp[i, k]
        np.testing.assert_allclose(row_projection(zp, w), expected, rtol=1e-10)

    def test_projection_shape_errors(self):
        with pytest.raises(ShapeError):
            depth_projection(np.zeros((4, 6)), np.zeros((3, 5)))
        with pytest.raises(ShapeError):
            row_projection(np.zeros((4, 6)), np.zeros((2, 5)))


class TestAggregate:
    def test_unit_norm(self):
        model = make_model(grid=2, channels=3, depth=2, out_channels=2, out_rows=2, seed=0)
        rng = np.random.default_rng(10)
        tokens = rng.standard_normal((4, 3))
        desc = aggregate(tokens, model)
        assert desc.shape == (4,)
        assert abs(np.linalg.norm(desc) - 1.0) < 1e-6

    def test_default_config_descriptor_length(self):
        cfg = AggregatorConfig()
        assert cfg.out_channels * cfg.out_rows == 4096
        model = init_model(4, 3, cfg, seed=0)
        assert model.descriptor_len == 4096

    def test_deterministic(self):
        model = make_model(grid=2, channels=3, depth=1, out_channels=2, out_rows=2, seed=1)
        rng = np.random.default_rng(11)
        tokens = rng.standard_normal((4, 3))
        first = aggregate(tokens, model)
        second = aggregate(tokens, model)
        np.testing.assert_array_equal(first, second)

    def test_scale_invariance_on_nonnegative_inputs(self):
        # with zero-weight mixers the stack is the identity and the head is
        # linear, so positive input scaling cancels in the normalization
        rng = np.random.default_rng(12)
        tokens = rng.uniform(0.1, 1.0, size=(4, 3))
        cfg = AggregatorConfig(depth=2, out_channels=2, out_rows=2)
        model = init_model(4, 3, cfg, seed=2, dtype=np.float64)
        for blk in model.blocks:
            blk.w1 = np.zeros_like(blk.w1)
            blk.w2 = np.zeros_like(blk.w2)
        model.head.w_depth = np.abs(model.head.w_depth)
        model.head.w_row = np.abs(model.head.w_row)
        base = aggregate(tokens, model)
        scaled = aggregate(3.7 * tokens, model)
        np.testing.assert_allclose(scaled, base, rtol=1e-9)

    def test_mismatched_model_rejected(self):
        model = make_model(grid=2, channels=3, depth=1, out_channels=2, out_rows=2)
        with pytest.raises(ShapeError):
            aggregate(np.zeros((9, 3)), model)  # 3x3 grid into a 2x2 model


def fd_param_check(model, tokens, grad_desc, rtol=1e-4):
    """Compare analytic parameter gradients against central differences."""
    analytic = aggregate_backward(tokens, model, grad_desc)
    params = model.parameters()
    for name, value in params.items():
        def scalar_loss(flat, name=name, value=value):
            saved = value.copy()
            value[...] = flat.reshape(value.shape)
            try:
                return float(np.dot(grad_desc, aggregate(tokens, model)))
            finally:
                value[...] = saved

        fd = central_difference(scalar_loss, value.reshape(-1).copy(), step=1e-6)
        fd = fd.reshape(value.shape)
        worst = 0.0
        for a, b in zip(analytic[name].reshape(-1), fd.reshape(-1)):
            worst = max(worst, relative_error(float(a), float(b)))
        assert worst < rtol, f"{name}: worst relative error {worst:.3e}"


class TestAggregateBackward:
    def test_zero_upstream_gradient(self):
        model = make_model(grid=2, channels=4, depth=2, out_channels=2, out_rows=2, seed=3)
        rng = np.random.default_rng(13)
        tokens = rng.standard_normal((4, 4))
        grads = aggregate_backward(tokens, model, np.zeros(4))
        for g in grads.values():
            np.testing.assert_array_equal(g, np.zeros_like(g))

    def test_matches_finite_differences_tiny_config(self):
        model = make_model(grid=2, channels=4, depth=2, out_channels=2, out_rows=2, seed=4)
        rng = np.random.default_rng(14)
        tokens = rng.standard_normal((4, 4))
        grad_desc = rng.standard_normal(4)
        fd_param_check(model, tokens, grad_desc)

    def test_matches_finite_differences_hidden_ratio(self):
        model = make_model(
            grid=2, channels=3, depth=1, out_channels=2, out_rows=2, seed=5, hidden_ratio=2
        )
        rng = np.random.default_rng(15)
        tokens = rng.standard_normal((4, 3))
        grad_desc = rng.standard_normal(4)
        fd_param_check(model, tokens, grad_desc)

    def test_matches_finite_differences_input_norm(self):
        model = make_model(
            grid=2, channels=3, depth=2, out_channels=2, out_rows=2, seed=6, input_norm=True
        )
        rng = np.random.default_rng(16)
        tokens = rng.standard_normal((4, 3))
        grad_desc = rng.standard_normal(4)
        fd_param_check(model, tokens, grad_desc)

    def test_zero_mixers_match_projections_only_model(self):
        # gradients flow through the residual path: a zero-weight stack must
        # give the same head gradients as a model without any blocks
        rng = np.random.default_rng(17)
        tokens = rng.standard_normal((4, 3))
        grad_desc = rng.standard_normal(4)

        deep = make_model(grid=2, channels=3, depth=2, out_channels=2, out_rows=2, seed=7)
        for blk in deep.blocks:
            blk.w1 = np.zeros_like(blk.w1)
            blk.w2 = np.zeros_like(blk.w2)
        shallow = AggregatorModel(
            channels=3, grid_h=2, grid_w=2, blocks=[],
            head=ProjectionHead(
                w_depth=deep.head.w_depth.copy(), w_row=deep.head.w_row.copy()
            ),
        )
        g_deep = aggregate_backward(tokens, deep, grad_desc)
        g_shallow = aggregate_backward(tokens, shallow, grad_desc)
        np.testing.assert_allclose(
            g_deep["head.w_depth"], g_shallow["head.w_depth"], rtol=1e-12
        )
        np.testing.assert_allclose(
            g_deep["head.w_row"], g_shallow["head.w_row"], rtol=1e-12
        )

    def test_bad_grad_length(self):
        model = make_model(grid=2, channels=3, depth=1, out_channels=2, out_rows=2)
        tokens = np.ones((4, 3))
        with pytest.raises(ShapeError):
            aggregate_backward(tokens, model, np.zeros(5))

    def test_all_zero_output_degenerate(self):
        from placemix.kernel import DegenerateVectorError

        model = make_model(grid=2, channels=3, depth=0, out_channels=2, out_rows=2)
        with pytest.raises(DegenerateVectorError):
            aggregate(np.zeros((4, 3)), model)
