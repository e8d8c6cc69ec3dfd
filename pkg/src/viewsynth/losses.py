"""Differentiable training losses and their weighted combination.

total = alpha * L1 + (1 - alpha) * (1 - MS-SSIM) + beta * FFL + perceptual

All losses take (B, C, H, W) tensors (or unbatched (C, H, W)) with values
nominally in [0, 1]. The MS-SSIM core here is also the single source of
truth for the evaluation metrics in :mod:`viewsynth.metrics`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import torch
import torch.nn.functional as F
from torch import Tensor, nn

# Standard five-scale MS-SSIM weights (Wang et al. multi-scale formulation).
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


class PerceptualWeightsUnavailable(RuntimeError):
    """Raised when the pretrained feature network for the VGG loss is missing."""


@dataclass
class LossConfig:
    """Weights of the combined objective.

    ``alpha`` balances L1 against the MS-SSIM term; ``beta`` scales the focal
    frequency loss. The perceptual term is optional (desk-scale training runs
    without it so no pretrained download is required); when enabled its
    contribution is scaled by ``perceptual_weight`` (default 1, matching the
    unweighted term in the total-loss formula).
    """

    alpha: float = 0.84
    beta: float = 1.0
    ffl_exponent: float = 1.0
    msssim_scales: int = 5
    msssim_window: int = SSIM_WINDOW
    perceptual_enabled: bool = False
    perceptual_weight: float = 1.0
    # (layer id, weight) pairs; weight None means 1/elements-at-layer.
    perceptual_layers: tuple = (("relu1_2", None), ("relu2_2", None), ("relu3_4", None))

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        for name in ("beta", "ffl_exponent", "perceptual_weight"):
            v = float(getattr(self, name))
            if not (v >= 0.0 and v == v):
                raise ValueError(f"{name} must be finite and non-negative")
        if self.msssim_scales < 1:
            raise ValueError("msssim_scales must be >= 1")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "ffl_exponent": self.ffl_exponent,
            "msssim_scales": self.msssim_scales,
            "msssim_window": self.msssim_window,
            "perceptual_enabled": self.perceptual_enabled,
            "perceptual_weight": self.perceptual_weight,
            "perceptual_layers": [list(p) for p in self.perceptual_layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        d = dict(d)
        if "perceptual_layers" in d:
            d["perceptual_layers"] = tuple(tuple(p) for p in d["perceptual_layers"])
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class LossReport:
    """Per-component loss values for one step; ``total`` is their weighted sum."""

    l1: float
    ms_ssim: float
    ffl: float
    perceptual: float
    total: float

    def to_dict(self) -> dict:
        return {
            "l1": self.l1,
            "ms_ssim": self.ms_ssim,
            "ffl": self.ffl,
            "perceptual": self.perceptual,
            "total": self.total,
        }


def _as_batched(x: Tensor) -> Tensor:
    if x.ndim == 3:
        return x.unsqueeze(0)
    if x.ndim == 4:
        return x
    raise ValueError(f"expected (C,H,W) or (B,C,H,W), got shape {tuple(x.shape)}")


def _check_pair(pred: Tensor, target: Tensor) -> tuple[Tensor, Tensor]:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return _as_batched(pred), _as_batched(target)


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference."""
    pred, target = _check_pair(pred, target)
    return (pred - target).abs().mean()


# -- SSIM / MS-SSIM core ----------------------------------------------------


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA,
                    dtype=torch.float32) -> Tensor:
    coords = torch.arange(size, dtype=dtype) - (size - 1) / 2.0
    g = torch.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _gaussian_filter(x: Tensor, win: Tensor) -> Tensor:
    # Separable valid convolution per channel (borders cropped, as in the
    # original MATLAB implementation).
    c = x.shape[1]
    win = win.to(x.dtype).to(x.device)
    kh = win.view(1, 1, -1, 1).expand(c, 1, -1, 1)
    kw = win.view(1, 1, 1, -1).expand(c, 1, 1, -1)
    x = F.conv2d(x, kh, groups=c)
    return F.conv2d(x, kw, groups=c)


def ssim_and_contrast(
    pred: Tensor,
    target: Tensor,
    window: int = SSIM_WINDOW,
    data_range: float = 1.0,
) -> tuple[Tensor, Tensor]:
    """Per-channel mean SSIM and contrast-structure terms, shape (B, C)."""
    if min(pred.shape[-2:]) < window:
        raise ValueError(
            f"image {tuple(pred.shape[-2:])} smaller than SSIM window {window}"
        )
    win = gaussian_window(window, dtype=pred.dtype)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx = _gaussian_filter(pred, win)
    my = _gaussian_filter(target, win)
    mxx = _gaussian_filter(pred * pred, win)
    myy = _gaussian_filter(target * target, win)
    mxy = _gaussian_filter(pred * target, win)
    vx = mxx - mx * mx
    vy = myy - my * my
    cxy = mxy - mx * my
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    cs = (2 * cxy + c2) / (vx + vy + c2)
    return (lum * cs).mean(dim=(2, 3)), cs.mean(dim=(2, 3))


def max_msssim_scales(height: int, width: int, window: int = SSIM_WINDOW) -> int:
    """Largest scale count for which every downsampled level fits the window."""
    scales = 0
    side = min(height, width)
    while side >= window and scales < len(MSSSIM_WEIGHTS):
        scales += 1
        side //= 2
    return max(scales, 0)


def ms_ssim_index(
    pred: Tensor,
    target: Tensor,
    scales: int = 5,
    window: int = SSIM_WINDOW,
) -> Tensor:
    """Multi-scale SSIM similarity in [~0, 1] (1 iff identical).

    Standard formulation: contrast-structure terms at every scale (clamped at
    zero, as reference implementations do), luminance only at the coarsest,
    combined with the canonical five-scale weights; channels averaged last.
    """
    pred, target = _check_pair(pred, target)
    h, w = pred.shape[-2:]
    limit = max_msssim_scales(h, w, window)
    if scales > limit:
        raise ValueError(
            f"image {h}x{w} supports at most {limit} MS-SSIM scales "
            f"with window {window} (requested {scales})"
        )
    weights = torch.tensor(MSSSIM_WEIGHTS[:scales], dtype=pred.dtype, device=pred.device)
    weights = weights / weights.sum() if scales < len(MSSSIM_WEIGHTS) else weights
    terms = []
    x, y = pred, target
    for i in range(scales):
        s, cs = ssim_and_contrast(x, y, window)
        if i < scales - 1:
            terms.append(cs.clamp(min=0.0))
            x = F.avg_pool2d(x, 2)
            y = F.avg_pool2d(y, 2)
        else:
            terms.append(s.clamp(min=0.0))
    stack = torch.stack(terms)  # (scales, B, C)
    combined = torch.prod(stack ** weights.view(-1, 1, 1), dim=0)
    return combined.mean()


def ms_ssim_loss(
    pred: Tensor,
    target: Tensor,
    scales: int = 5,
    window: int = SSIM_WINDOW,
) -> Tensor:
    """1 - MS-SSIM."""
    return 1.0 - ms_ssim_index(pred, target, scales=scales, window=window)


# -- Focal frequency loss ---------------------------------------------------


def focal_frequency_loss(pred: Tensor, target: Tensor, exponent: float = 1.0) -> Tensor:
    """Spectral error weighted toward the hardest frequencies.

    Per channel: orthonormal 2-D DFT of both images, squared magnitude of the
    spectrum difference, weighted by w(u,v) = |difference|^exponent normalized
    by its per-channel maximum. The weight is treated as a constant during
    differentiation (no gradient flows through it). Result is the weighted
    mean over frequencies, channels and batch.
    """
    pred, target = _check_pair(pred, target)
    fp = torch.fft.fft2(pred, norm="ortho")
    ft = torch.fft.fft2(target, norm="ortho")
    diff = ft - fp
    power = diff.real ** 2 + diff.imag ** 2
    with torch.no_grad():
        mag = power.sqrt()
        w = mag ** exponent if exponent != 0 else torch.ones_like(mag)
        peak = w.amax(dim=(-2, -1), keepdim=True)
        w = torch.where(peak > 0, w / peak.clamp(min=torch.finfo(w.dtype).tiny), w)
    return (w * power).mean()


# -- Perceptual (pretrained-feature) loss ------------------------------------

# VGG-19 feature taps: layer id -> index into torchvision's features stack.
VGG19_LAYERS = {
    "relu1_2": 3,
    "relu2_2": 8,
    "relu3_4": 17,
    "relu4_4": 26,
    "relu5_4": 35,
}


class VggFeatureExtractor(nn.Module):
    """Frozen VGG-19 feature taps for the perceptual loss.

    Requires pretrained weights; raises :class:`PerceptualWeightsUnavailable`
    when they cannot be loaded (e.g. no network access), since random features
    defeat the purpose of perceptual supervision.
    """

    def __init__(self, layer_ids: Sequence[str]):
        super().__init__()
        unknown = [l for l in layer_ids if l not in VGG19_LAYERS]
        if unknown:
            raise ValueError(f"unknown VGG layer ids: {unknown}")
        try:
            from torchvision.models import VGG19_Weights, vgg19

            net = vgg19(weights=VGG19_Weights.IMAGENET1K_V1)
        except Exception as exc:  # noqa: BLE001 - any load failure means unavailable
            raise PerceptualWeightsUnavailable(
                "pretrained VGG-19 weights could not be loaded; the perceptual "
                "loss is optional, disable it or provide a feature extractor"
            ) from exc
        cut = max(VGG19_LAYERS[l] for l in layer_ids) + 1
        self.features = net.features[:cut].eval()
        for p in self.features.parameters():
            p.requires_grad_(False)
        self.layer_ids = list(layer_ids)
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))

    def forward(self, x: Tensor) -> list[Tensor]:
        x = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        taps = {VGG19_LAYERS[l]: l for l in self.layer_ids}
        out = []
        for i, layer in enumerate(self.features):
            x = layer(x)
            if i in taps:
                out.append(x)
        return out


def perceptual_loss(
    pred: Tensor,
    target: Tensor,
    extractor: nn.Module,
    layer_weights: Optional[Sequence[Optional[float]]] = None,
) -> Tensor:
    """Sum over feature layers of lambda_l * ||phi_l(pred) - phi_l(target)||_1.

    ``extractor`` returns a list of feature maps per input. Each layer weight
    defaults to 1 / (elements at that layer), i.e. the L1 norm becomes a mean.
    """
    pred, target = _check_pair(pred, target)
    fp = extractor(pred)
    ft = extractor(target)
    if layer_weights is None:
        layer_weights = [None] * len(fp)
    if len(layer_weights) != len(fp):
        raise ValueError("one weight per feature layer required")
    total = pred.new_zeros(())
    for a, b, lw in zip(fp, ft, layer_weights):
        lam = (1.0 / a.numel()) if lw is None else float(lw)
        total = total + lam * (a - b).abs().sum()
    return total


def total_loss(
    pred: Tensor,
    target: Tensor,
    cfg: LossConfig,
    perceptual_extractor: Optional[nn.Module] = None,
) -> tuple[Tensor, LossReport]:
    """Weighted combination of all enabled losses, plus a per-component report."""
    cfg.validate()
    pred_b, target_b = _check_pair(pred, target)
    h, w = pred_b.shape[-2:]

    scales = cfg.msssim_scales
    limit = max_msssim_scales(h, w, cfg.msssim_window)
    if limit < 1:
        raise ValueError(f"image {h}x{w} too small for MS-SSIM window {cfg.msssim_window}")
    if scales > limit:
        warnings.warn(
            f"reducing MS-SSIM scales from {scales} to {limit} for {h}x{w} inputs",
            stacklevel=2,
        )
        scales = limit

    l1 = l1_loss(pred_b, target_b)
    ms = ms_ssim_loss(pred_b, target_b, scales=scales, window=cfg.msssim_window)
    ffl = focal_frequency_loss(pred_b, target_b, exponent=cfg.ffl_exponent)

    perc = pred_b.new_zeros(())
    if cfg.perceptual_enabled:
        weights: Optional[list[Optional[float]]] = None
        if perceptual_extractor is None:
            perceptual_extractor = VggFeatureExtractor([l for l, _ in cfg.perceptual_layers])
            weights = [w for _, w in cfg.perceptual_layers]
        perc = cfg.perceptual_weight * perceptual_loss(
            pred_b, target_b, perceptual_extractor, weights
        )

    total = cfg.alpha * l1 + (1.0 - cfg.alpha) * ms + cfg.beta * ffl + perc
    report = LossReport(
        l1=float(l1.detach()),
        ms_ssim=float(ms.detach()),
        ffl=float(ffl.detach()),
        perceptual=float(perc.detach()),
        total=float(total.detach()),
    )
    return total, report
