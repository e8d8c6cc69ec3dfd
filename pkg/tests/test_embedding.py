import math

import numpy as np
import pytest
import torch

from viewsynth.embedding import (
    EmbeddingConfig,
    EmbeddingVariant,
    PoseEmbedding,
    PoseProjector,
    embed,
    encode_position,
    encode_position_torch,
    project,
    reshape_to_grid,
    reshape_to_grid_torch,
    tile_to_length_torch,
    upsample_nearest,
    upsample_nearest_torch,
)
from viewsynth.pose import Pose6D, PoseStats

from conftest import central_difference


def small_stats():
    return PoseStats(np.full(6, -0.1), np.full(6, 0.1))


# -- encode_position ---------------------------------------------------------


def test_encode_length_384_at_m32():
    out = encode_position(np.full(6, 0.3), m=32, sigma=16.0)
    assert out.shape == (384,)


def test_encode_zero_pose():
    out = encode_position(np.zeros(6), m=4, sigma=16.0)
    cos_entries = out[0::2]
    sin_entries = out[1::2]
    assert np.allclose(cos_entries, 1.0)
    assert np.allclose(sin_entries, 0.0)


def test_encode_half_matches_hand_values():
    # first component 0.5, m=2, sigma=16: j=0 -> cos(pi), sin(pi);
    # j=1 -> frequency 2*pi*4, phase 4*pi
    pbar = np.zeros(6)
    pbar[0] = 0.5
    out = encode_position(pbar, m=2, sigma=16.0)
    assert out[0] == pytest.approx(math.cos(math.pi), abs=1e-12)
    assert out[1] == pytest.approx(math.sin(math.pi), abs=1e-12)
    assert out[2] == pytest.approx(math.cos(2 * math.pi * 4 * 0.5), abs=1e-9)
    assert out[3] == pytest.approx(math.sin(2 * math.pi * 4 * 0.5), abs=1e-9)


def test_encode_matches_scalar_oracle():
    rng = np.random.default_rng(5)
    pbar = rng.uniform(0, 1, 6)
    m, sigma = 5, 12.0
    out = encode_position(pbar, m, sigma)
    expected = []
    for c in range(6):
        for j in range(m):
            w = 2 * math.pi * sigma ** (j / m)
            expected.append(math.cos(w * pbar[c]))
            expected.append(math.sin(w * pbar[c]))
    assert np.allclose(out, expected, atol=1e-12)


def test_encode_output_in_unit_interval():
    rng = np.random.default_rng(9)
    for _ in range(20):
        out = encode_position(rng.uniform(-3, 3, 6), m=8, sigma=30.0)
        assert np.all(out >= -1.0) and np.all(out <= 1.0)


def test_encode_validates_args():
    with pytest.raises(ValueError):
        encode_position(np.zeros(6), m=0, sigma=16.0)
    with pytest.raises(ValueError):
        encode_position(np.zeros(6), m=4, sigma=1.0)
    with pytest.raises(ValueError):
        encode_position(np.zeros(5), m=4, sigma=16.0)


# -- project ------------------------------------------------------------------


def test_project_identity_one_layer():
    d = 12
    lin = torch.nn.Linear(d, d)
    with torch.no_grad():
        lin.weight.copy_(torch.eye(d))
        lin.bias.zero_()
    x = np.random.default_rng(0).normal(size=d)
    out = project(x, lin.double())
    assert np.allclose(out, x, atol=1e-12)


def test_project_zero_weights_returns_bias():
    d = 8
    lin = torch.nn.Linear(d, 5)
    with torch.no_grad():
        lin.weight.zero_()
        lin.bias.copy_(torch.arange(5, dtype=torch.float32))
    out = project(np.ones(d), lin)
    assert np.allclose(out, np.arange(5), atol=1e-7)


def test_project_matches_dense_oracle():
    torch.manual_seed(42)
    mlp = PoseProjector(in_dim=24, d2=16).double()
    rng = np.random.default_rng(42)
    x = rng.normal(size=24)
    out = project(x, mlp)

    # hand-rolled forward pass
    h = x
    layers = [m for m in mlp.net if isinstance(m, torch.nn.Linear)]
    for i, lin in enumerate(layers):
        w = lin.weight.detach().numpy()
        b = lin.bias.detach().numpy()
        h = w @ h + b
        if i < len(layers) - 1:
            h = np.maximum(h, 0.0)
    assert np.allclose(out, h, rtol=1e-6)


def test_project_shape_mismatch():
    mlp = PoseProjector(in_dim=24, d2=16)
    with pytest.raises(ValueError, match="width"):
        project(np.zeros(10), mlp)


# -- reshape / upsample -------------------------------------------------------


def test_reshape_row_major():
    grid = reshape_to_grid(np.array([1.0, 2.0, 3.0, 4.0]), 2, 2)
    assert grid.shape == (2, 2, 1)
    assert np.array_equal(grid[:, :, 0], [[1, 2], [3, 4]])


def test_reshape_constant():
    grid = reshape_to_grid(np.full(6, 3.5), 2, 3)
    assert np.all(grid == 3.5)


def test_reshape_round_trip():
    rng = np.random.default_rng(1)
    v = rng.normal(size=35)
    grid = reshape_to_grid(v, 5, 7)
    assert np.array_equal(grid[:, :, 0].reshape(-1), v)


def test_reshape_length_mismatch():
    with pytest.raises(ValueError, match="reshape"):
        reshape_to_grid(np.zeros(5), 2, 3)


def test_upsample_identity():
    g = np.random.default_rng(0).normal(size=(3, 3, 1))
    assert np.array_equal(upsample_nearest(g, 1), g)


def test_upsample_blocks():
    g = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1)
    up = upsample_nearest(g, 2)
    assert up.shape == (4, 4, 1)
    assert np.array_equal(up[:2, :2, 0], np.ones((2, 2)))
    assert np.array_equal(up[:2, 2:, 0], np.full((2, 2), 2.0))
    assert np.array_equal(up[2:, :2, 0], np.full((2, 2), 3.0))
    assert np.array_equal(up[2:, 2:, 0], np.full((2, 2), 4.0))


def test_upsample_index_arithmetic_oracle():
    rng = np.random.default_rng(2)
    g = rng.normal(size=(8, 8, 1))
    up = upsample_nearest(g, 4)
    for r in range(32):
        for c in range(32):
            assert up[r, c, 0] == g[r // 4, c // 4, 0]


def test_upsample_invalid_factor():
    with pytest.raises(ValueError, match="integer"):
        upsample_nearest(np.zeros((2, 2, 1)), 0)


# -- config -------------------------------------------------------------------


def test_config_defaults_and_round_trip():
    cfg = EmbeddingConfig(height=256, width=256)
    assert (cfg.grid_h, cfg.grid_w) == (32, 32)
    assert cfg.d1 == 384
    assert cfg.d2 == 1024
    assert cfg.upsample_factor == 8
    again = EmbeddingConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()


def test_config_validation():
    with pytest.raises(ValueError, match="aspect"):
        EmbeddingConfig(height=256, width=512, grid_h=32, grid_w=32)
    with pytest.raises(ValueError, match="multiple"):
        EmbeddingConfig(height=250, width=250, grid_h=32, grid_w=32)
    with pytest.raises(ValueError, match="sigma"):
        EmbeddingConfig(height=64, width=64, sigma=0.5)


# -- embed (full pipeline) ----------------------------------------------------


def test_embed_full_output_shape_256():
    cfg = EmbeddingConfig(height=256, width=256)
    torch.manual_seed(0)
    mlp = PoseProjector(cfg.d1, cfg.d2)
    out = embed(Pose6D(0.05, 0, 0, 0, 0, 0), small_stats(), cfg, mlp)
    assert out.shape == (256, 256, 1)
    assert np.isfinite(out).all()


def test_embed_norm_only_at_p_min_is_zero_map():
    cfg = EmbeddingConfig(height=32, width=32, variant=EmbeddingVariant.NORM_ONLY)
    stats = small_stats()
    out = embed(Pose6D.from_array(stats.p_min), stats, cfg)
    assert out.shape == (32, 32, 1)
    assert np.all(out == 0.0)


def test_embed_matches_chained_stages_bitwise():
    cfg = EmbeddingConfig(height=64, width=64)
    stats = small_stats()
    torch.manual_seed(3)
    module = PoseEmbedding(cfg, stats)
    module.eval()
    pose = torch.tensor([[0.02, -0.05, 0.01, 0.0, 0.03, -0.01]])
    with torch.no_grad():
        full = module(pose)
        pbar = module.normalize(pose)
        enc = encode_position_torch(pbar, cfg.m, cfg.sigma)
        rho = module.mlp(enc)
        grid = reshape_to_grid_torch(rho, cfg.grid_h, cfg.grid_w)
        chained = upsample_nearest_torch(grid, cfg.upsample_factor)
    assert torch.equal(full, chained)


@pytest.mark.parametrize("variant", list(EmbeddingVariant))
def test_embed_shape_contract_all_variants(variant):
    cfg = EmbeddingConfig(height=32, width=32, variant=variant, m=4)
    torch.manual_seed(1)
    stats = small_stats()
    module = PoseEmbedding(cfg, stats)
    module.eval()
    with torch.no_grad():
        out = module(torch.tensor([[0.01, 0.02, -0.03, 0.0, 0.0, 0.0]]))
    assert out.shape == (1, 1, 32, 32)
    assert torch.isfinite(out).all()


def test_embed_deterministic():
    cfg = EmbeddingConfig(height=32, width=32)
    torch.manual_seed(2)
    module = PoseEmbedding(cfg, small_stats())
    module.eval()
    pose = torch.tensor([[0.05, 0.0, 0.0, 0.0, 0.0, 0.0]])
    with torch.no_grad():
        a = module(pose)
        b = module(pose)
    assert torch.equal(a, b)


def test_embed_sensitivity_full_variant():
    cfg = EmbeddingConfig(height=32, width=32)
    stats = small_stats()
    torch.manual_seed(4)
    module = PoseEmbedding(cfg, stats)
    module.eval()
    span = float(stats.span[0])
    with torch.no_grad():
        a = module(torch.tensor([[0.0, 0.0, 0.0, 0.0, 0.0, 0.0]]))
        b = module(torch.tensor([[span, 0.0, 0.0, 0.0, 0.0, 0.0]]))
    assert float((a - b).abs().max()) > 0.0


def test_tile_to_length_cycles():
    v = torch.tensor([[1.0, 2.0, 3.0]])
    out = tile_to_length_torch(v, 7)
    assert torch.equal(out, torch.tensor([[1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0]]))


def test_embed_gradient_matches_finite_differences():
    # 8x8 grid, upsample factor 1; gradients w.r.t. MLP parameters
    cfg = EmbeddingConfig(height=8, width=8, grid_h=8, grid_w=8, m=2)
    torch.manual_seed(5)
    module = PoseEmbedding(cfg, small_stats()).double()
    pose = torch.tensor([[0.04, -0.02, 0.0, 0.01, 0.0, -0.03]], dtype=torch.float64)
    probe = torch.from_numpy(np.random.default_rng(6).normal(size=(1, 1, 8, 8)))

    def f():
        return (module(pose) * probe).sum()

    worst = central_difference(f, list(module.parameters()), n_probes=5)
    assert worst < 1.0, f"gradient tolerance ratio {worst}"
