import math

import numpy as np
import pytest
import torch
from torch import nn

from viewsynth.data import Pose6D, SyntheticSceneSpec, build_scene, render_scene
from viewsynth.losses import (
    LossConfig,
    PerceptualWeightsUnavailable,
    VggFeatureExtractor,
    focal_frequency_loss,
    l1_loss,
    max_msssim_scales,
    ms_ssim_index,
    ms_ssim_loss,
    perceptual_loss,
    total_loss,
)

from conftest import grad_wrt_input


def random_pair(shape=(1, 3, 32, 32), seed=0, spread=0.2):
    rng = np.random.default_rng(seed)
    a = rng.random(shape)
    b = np.clip(a + spread * rng.standard_normal(shape), 0, 1)
    return torch.from_numpy(a), torch.from_numpy(b)


def textured_image(size=192, seed=0):
    scene = build_scene(SyntheticSceneSpec(seed=seed, height=size, width=size),
                        np.random.default_rng(seed))
    img = render_scene(scene, Pose6D(), size, size)
    return torch.from_numpy(img).double().permute(2, 0, 1).unsqueeze(0)


# -- L1 -----------------------------------------------------------------------


def test_l1_identical_zero():
    a, _ = random_pair()
    assert float(l1_loss(a, a)) == 0.0


def test_l1_constant_offset():
    a, _ = random_pair()
    assert float(l1_loss(a + 0.1, a)) == pytest.approx(0.1, abs=1e-7)


def test_l1_matches_scalar_loop_oracle():
    a, b = random_pair(shape=(2, 3, 5, 4), seed=3)
    total = 0.0
    n = 0
    for x, y in zip(a.numpy().flat, b.numpy().flat):
        total += abs(x - y)
        n += 1
    assert float(l1_loss(a, b)) == pytest.approx(total / n, abs=1e-7)


def test_l1_symmetry_and_shape_check():
    a, b = random_pair(seed=4)
    assert float(l1_loss(a, b)) == float(l1_loss(b, a))
    with pytest.raises(ValueError, match="mismatch"):
        l1_loss(a, b[..., :16])


# -- MS-SSIM ------------------------------------------------------------------


def test_msssim_loss_identical_zero():
    img = textured_image(96)
    assert float(ms_ssim_loss(img, img, scales=3)) == pytest.approx(0.0, abs=1e-6)


def test_msssim_inverted_image_loss_large():
    img = textured_image(192)
    assert float(ms_ssim_loss(1.0 - img, img, scales=5)) > 0.5


def test_msssim_loss_positive_and_below_one_plus_eps():
    a, b = random_pair(shape=(1, 3, 64, 64), seed=5)
    v = float(ms_ssim_index(a, b, scales=2))
    assert 0.0 <= v <= 1.0
    assert float(ms_ssim_loss(a, b, scales=2)) == pytest.approx(1.0 - v, abs=1e-12)


def test_msssim_scale_limit_error_names_max():
    a, b = random_pair(shape=(1, 1, 32, 32), seed=6)
    assert max_msssim_scales(32, 32) == 2
    with pytest.raises(ValueError, match="at most 2"):
        ms_ssim_loss(a, b, scales=5)


def test_msssim_gradient_matches_finite_differences():
    a, b = random_pair(shape=(1, 1, 32, 32), seed=7, spread=0.15)

    def f(x):
        return ms_ssim_loss(x, b, scales=2)

    worst = grad_wrt_input(f, a, max_entries=40)
    assert worst < 1.0, worst


# -- FFL ----------------------------------------------------------------------


def brute_force_ffl(pred: np.ndarray, target: np.ndarray, exponent: float) -> float:
    """Direct O(N^4) DFT evaluation, orthonormal scaling, per-channel max weight."""
    b, c, m, n = pred.shape
    total = 0.0
    for bi in range(b):
        for ci in range(c):
            fr = np.zeros((m, n), dtype=complex)
            ff = np.zeros((m, n), dtype=complex)
            for u in range(m):
                for v in range(n):
                    acc_r = 0.0j
                    acc_f = 0.0j
                    for x in range(m):
                        for y in range(n):
                            ph = np.exp(-2j * np.pi * (u * x / m + v * y / n))
                            acc_r += target[bi, ci, x, y] * ph
                            acc_f += pred[bi, ci, x, y] * ph
                    fr[u, v] = acc_r / math.sqrt(m * n)
                    ff[u, v] = acc_f / math.sqrt(m * n)
            d = np.abs(fr - ff)
            w = d ** exponent if exponent != 0 else np.ones_like(d)
            if w.max() > 0:
                w = w / w.max()
            total += float((w * d ** 2).mean())
    return total / (b * c)


def test_ffl_identical_zero():
    a, _ = random_pair()
    assert float(focal_frequency_loss(a, a)) == 0.0


def test_ffl_one_pixel_difference_matches_bruteforce():
    target = np.zeros((1, 1, 4, 4))
    target[0, 0, 1, 2] = 0.5
    pred = target.copy()
    pred[0, 0, 3, 0] += 1.0
    got = float(focal_frequency_loss(torch.from_numpy(pred), torch.from_numpy(target), 1.0))
    want = brute_force_ffl(pred, target, 1.0)
    assert got == pytest.approx(want, abs=1e-6)


def test_ffl_random_pairs_match_bruteforce():
    rng = np.random.default_rng(8)
    for exponent in (0.0, 1.0, 2.0):
        a = rng.random((1, 1, 4, 4))
        b = rng.random((1, 1, 4, 4))
        got = float(focal_frequency_loss(torch.from_numpy(a), torch.from_numpy(b), exponent))
        want = brute_force_ffl(a, b, exponent)
        assert got == pytest.approx(want, abs=1e-6), exponent


def test_ffl_exponent_zero_quadratic_scaling():
    a, b = random_pair(shape=(1, 3, 8, 8), seed=9)
    base = float(focal_frequency_loss(b + (a - b), b, exponent=0.0))
    doubled = float(focal_frequency_loss(b + 2 * (a - b), b, exponent=0.0))
    assert doubled == pytest.approx(4.0 * base, rel=1e-9)


def test_ffl_exponent_zero_symmetric():
    a, b = random_pair(shape=(2, 3, 8, 8), seed=10)
    ab = float(focal_frequency_loss(a, b, exponent=0.0))
    ba = float(focal_frequency_loss(b, a, exponent=0.0))
    assert ab == pytest.approx(ba, rel=1e-12)


def test_ffl_gradient_exponent_zero():
    a, b = random_pair(shape=(1, 1, 8, 8), seed=11)

    def f(x):
        return focal_frequency_loss(x, b, exponent=0.0)

    assert grad_wrt_input(f, a, max_entries=30) < 1.0


def test_ffl_gradient_frozen_weight_semantics():
    # the declared derivative treats w(u,v) as constant; finite differences of
    # the frozen-weight surrogate must match autograd of the real loss
    a, b = random_pair(shape=(1, 1, 8, 8), seed=12)
    with torch.no_grad():
        d = torch.fft.fft2(b, norm="ortho") - torch.fft.fft2(a, norm="ortho")
        w0 = d.abs()
        w0 = w0 / w0.amax(dim=(-2, -1), keepdim=True)

    x = a.clone().requires_grad_(True)
    focal_frequency_loss(x, b, exponent=1.0).backward()
    autograd_grad = x.grad.clone()

    def surrogate(x):
        diff = torch.fft.fft2(b, norm="ortho") - torch.fft.fft2(x, norm="ortho")
        return (w0 * (diff.real ** 2 + diff.imag ** 2)).mean()

    x2 = a.clone()
    flat = x2.view(-1)
    worst = 0.0
    h = 1e-6
    for i in range(0, flat.numel(), 3):
        orig = flat[i].item()
        flat[i] = orig + h
        hi = surrogate(x2).item()
        flat[i] = orig - h
        lo = surrogate(x2).item()
        flat[i] = orig
        fd = (hi - lo) / (2 * h)
        ad = autograd_grad.view(-1)[i].item()
        worst = max(worst, abs(fd - ad) / (1e-7 + 1e-3 * max(abs(fd), abs(ad))))
    assert worst < 1.0, worst


# -- perceptual ---------------------------------------------------------------


class ToyExtractor(nn.Module):
    def __init__(self, seed=0):
        super().__init__()
        torch.manual_seed(seed)
        self.c1 = nn.Conv2d(3, 4, 3, padding=1)
        self.c2 = nn.Conv2d(4, 8, 3, padding=1, stride=2)

    def forward(self, x):
        f1 = torch.relu(self.c1(x))
        f2 = torch.relu(self.c2(f1))
        return [f1, f2]


def test_perceptual_identical_zero():
    a, _ = random_pair(shape=(1, 3, 16, 16), seed=13)
    ext = ToyExtractor().double()
    assert float(perceptual_loss(a, a, ext).detach()) == 0.0


def test_perceptual_monotonic_in_corruption():
    img = textured_image(64, seed=1)
    rng = np.random.default_rng(14)
    near = img + torch.from_numpy(1e-4 * rng.standard_normal(tuple(img.shape)))
    unrelated = torch.from_numpy(rng.random(tuple(img.shape)))
    ext = ToyExtractor().double()
    assert float(perceptual_loss(near, img, ext).detach()) < float(
        perceptual_loss(unrelated, img, ext).detach()
    )


def test_perceptual_default_weight_inverse_to_elements():
    # doubling a layer's element count halves its weight: duplicating the
    # feature map must leave the loss contribution unchanged
    a, b = random_pair(shape=(1, 3, 8, 8), seed=15)

    class Single(nn.Module):
        def forward(self, x):
            return [x]

    class Doubled(nn.Module):
        def forward(self, x):
            return [torch.cat([x, x], dim=1)]

    v1 = float(perceptual_loss(a, b, Single()))
    v2 = float(perceptual_loss(a, b, Doubled()))
    assert v1 == pytest.approx(v2, rel=1e-12)
    assert v1 == pytest.approx(float((a - b).abs().mean()), rel=1e-12)


def test_perceptual_explicit_weights():
    a, b = random_pair(shape=(1, 3, 8, 8), seed=16)

    class Two(nn.Module):
        def forward(self, x):
            return [x, 2.0 * x]

    v = float(perceptual_loss(a, b, Two(), layer_weights=[1.0, 0.5]))
    want = float((a - b).abs().sum() + 0.5 * (2 * (a - b)).abs().sum())
    assert v == pytest.approx(want, rel=1e-9)


def test_vgg_extractor_requires_weights():
    try:
        ext = VggFeatureExtractor(["relu1_2"])
    except PerceptualWeightsUnavailable:
        return  # offline: the documented failure mode
    out = ext(torch.rand(1, 3, 32, 32))
    assert len(out) == 1


# -- total --------------------------------------------------------------------


def test_total_identical_all_zero():
    img = textured_image(64)
    cfg = LossConfig(msssim_scales=2)
    total, report = total_loss(img, img, cfg)
    assert float(total) == pytest.approx(0.0, abs=1e-9)
    for v in (report.l1, report.ms_ssim, report.ffl, report.perceptual):
        assert v == pytest.approx(0.0, abs=1e-9)


def test_total_degenerates_to_l1():
    a, b = random_pair(shape=(1, 3, 64, 64), seed=17)
    cfg = LossConfig(alpha=1.0, beta=0.0, msssim_scales=2)
    total, report = total_loss(a, b, cfg)
    assert float(total) == pytest.approx(float(l1_loss(a, b)), rel=1e-12)
    assert report.total == pytest.approx(report.l1, rel=1e-12)


def test_total_recombination_identity():
    a, b = random_pair(shape=(1, 3, 64, 64), seed=18)
    cfg = LossConfig(alpha=0.84, beta=1.0, msssim_scales=2)
    total, report = total_loss(a, b, cfg)
    recombined = (
        cfg.alpha * report.l1
        + (1 - cfg.alpha) * report.ms_ssim
        + cfg.beta * report.ffl
        + report.perceptual
    )
    assert report.total == pytest.approx(recombined, rel=1e-6)
    assert float(total) == pytest.approx(report.total, rel=1e-6)


def test_total_auto_reduces_scales_with_warning():
    a, b = random_pair(shape=(1, 3, 32, 32), seed=19)
    cfg = LossConfig(msssim_scales=5)
    with pytest.warns(UserWarning, match="reducing MS-SSIM scales"):
        total, _ = total_loss(a, b, cfg)
    assert math.isfinite(float(total))


def test_total_perceptual_requires_weights_or_extractor():
    a, b = random_pair(shape=(1, 3, 64, 64), seed=20)
    cfg = LossConfig(msssim_scales=2, perceptual_enabled=True)
    try:
        total, report = total_loss(a, b, cfg)
    except PerceptualWeightsUnavailable:
        pass  # offline: explicit, documented error
    else:
        assert report.perceptual > 0.0
    # injected extractor always works
    total, report = total_loss(a, b, cfg, perceptual_extractor=ToyExtractor().double())
    assert report.perceptual > 0.0
    assert report.total == pytest.approx(
        cfg.alpha * report.l1 + (1 - cfg.alpha) * report.ms_ssim
        + cfg.beta * report.ffl + report.perceptual,
        rel=1e-6,
    )


def test_loss_config_validation():
    with pytest.raises(ValueError, match="alpha"):
        LossConfig(alpha=1.5).validate()
    with pytest.raises(ValueError, match="beta"):
        LossConfig(beta=-1.0).validate()


def test_l1_gradient():
    a, b = random_pair(shape=(1, 1, 8, 8), seed=21)

    def f(x):
        return l1_loss(x, b)

    assert grad_wrt_input(f, a, max_entries=30) < 1.0


def test_losses_positive_iff_different():
    rng = np.random.default_rng(22)
    for _ in range(10):
        a = torch.from_numpy(rng.random((1, 1, 32, 32)))
        b = torch.from_numpy(rng.random((1, 1, 32, 32)))
        assert float(l1_loss(a, b)) > 0
        assert float(focal_frequency_loss(a, b)) > 0
        assert float(ms_ssim_loss(a, b, scales=2)) > 0
    a = torch.from_numpy(rng.random((1, 1, 32, 32)))
    assert float(l1_loss(a, a)) == 0.0
    assert float(focal_frequency_loss(a, a)) == 0.0
    assert abs(float(ms_ssim_loss(a, a, scales=2))) < 1e-6
