"""The rendering network: dual encoders plus an upsampling decoder.

Encoder I is a frozen truncated image-classification backbone (texture/detail
prior) expanded from 256 to 512 channels. Encoder II consumes the image
stacked with the positional feature map, preserving spatial resolution before
two max-pooled stages bring it to the bottleneck. The decoder merges both
branches and upsamples back to image resolution with skip connections.

Both a full and a halved-width Lite configuration are provided; widths and
stage counts live in :class:`ModelConfig` so ablations stay comparable.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .embedding import EmbeddingConfig, PoseEmbedding
from .pose import Pose6D, PoseStats

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

# Encoder II downsampling: the last two conv stages are max-pooled by these
# factors so the bottleneck sits at H/8, matching Encoder I's output.
POOL_FACTORS = (4, 2)

FULL_ENC2_WIDTHS = (32, 64, 64, 128, 256)
FULL_DEC_WIDTHS = (256, 128, 64, 32)
LITE_ENC2_WIDTHS = (16, 32, 64, 128)
LITE_DEC_WIDTHS = (128, 64, 32, 16)


class ModelVariant(str, Enum):
    FULL = "full"
    LITE = "lite"


class Encoder1Kind(str, Enum):
    PRETRAINED_RESNET = "pretrained_resnet"
    NONE = "none"


@dataclass
class ModelConfig:
    """Architecture selection: variant, Encoder I presence, widths, resolution."""

    height: int = 256
    width: int = 256
    variant: ModelVariant = ModelVariant.FULL
    encoder1: Encoder1Kind = Encoder1Kind.PRETRAINED_RESNET
    embedding: Optional[EmbeddingConfig] = None
    enc2_widths: tuple[int, ...] = ()
    dec_widths: tuple[int, ...] = ()
    decoder_refine: Optional[bool] = None

    def __post_init__(self) -> None:
        self.variant = ModelVariant(self.variant)
        self.encoder1 = Encoder1Kind(self.encoder1)
        lite = self.variant == ModelVariant.LITE
        if not self.enc2_widths:
            self.enc2_widths = LITE_ENC2_WIDTHS if lite else FULL_ENC2_WIDTHS
        self.enc2_widths = tuple(self.enc2_widths)
        if not self.dec_widths:
            self.dec_widths = LITE_DEC_WIDTHS if lite else FULL_DEC_WIDTHS
        self.dec_widths = tuple(self.dec_widths)
        if self.decoder_refine is None:
            self.decoder_refine = not lite
        if self.embedding is None:
            self.embedding = EmbeddingConfig(height=self.height, width=self.width)
        self.validate()

    def validate(self) -> None:
        down = POOL_FACTORS[0] * POOL_FACTORS[1]
        if self.height % down or self.width % down:
            raise ValueError(f"resolution must be divisible by {down}")
        minimum = 32 if self.encoder1 == Encoder1Kind.PRETRAINED_RESNET else 16
        if self.height < minimum or self.width < minimum:
            raise ValueError(
                f"resolution {self.height}x{self.width} below the minimum "
                f"{minimum} for encoder1={self.encoder1.value}"
            )
        if len(self.enc2_widths) < 3:
            raise ValueError("encoder II needs at least three conv widths")
        if len(self.dec_widths) != 4:
            raise ValueError("decoder expects four widths (merge, up1, up2, head)")
        if (self.embedding.height, self.embedding.width) != (self.height, self.width):
            raise ValueError("embedding resolution must match model resolution")

    @property
    def d3(self) -> int:
        """Encoder II output channels."""
        return self.enc2_widths[-1]

    @property
    def n_skips(self) -> int:
        return 2

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "variant": self.variant.value,
            "encoder1": self.encoder1.value,
            "embedding": self.embedding.to_dict(),
            "enc2_widths": list(self.enc2_widths),
            "dec_widths": list(self.dec_widths),
            "decoder_refine": self.decoder_refine,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["embedding"] = EmbeddingConfig.from_dict(d["embedding"])
        d["enc2_widths"] = tuple(d["enc2_widths"])
        d["dec_widths"] = tuple(d["dec_widths"])
        return cls(**d)


@dataclass
class FeaturePack:
    """Intermediate features handed from the encoders to the decoder."""

    f1_prime: Optional[Tensor]  # (B, 512, H/8, W/8) or None without Encoder I
    f2: Tensor                  # (B, d3, H/8, W/8)
    skips: list[Tensor]         # [full-res skip, quarter-res skip]

    def validate(self) -> None:
        if self.f1_prime is not None and self.f1_prime.shape[-2:] != self.f2.shape[-2:]:
            raise ValueError(
                f"encoder outputs disagree spatially: {tuple(self.f1_prime.shape[-2:])} "
                f"vs {tuple(self.f2.shape[-2:])}"
            )
        if len(self.skips) != 2:
            raise ValueError(f"expected 2 skip maps, got {len(self.skips)}")


def _validate_image_range(img: Tensor) -> None:
    lo, hi = float(img.min()), float(img.max())
    if lo < -1e-4 or hi > 1.0 + 1e-4:
        raise ValueError(f"image values must lie in [0, 1], got range [{lo:.4f}, {hi:.4f}]")


# ---------------------------------------------------------------------------
# Encoder I
# ---------------------------------------------------------------------------


def _structured_backbone_init(backbone: nn.Module, seed: int = 1234) -> None:
    """Deterministic, information-preserving init for the truncated backbone.

    Used when pretrained weights cannot be downloaded: convolutions become
    blur/identity/replication maps with a little seeded noise, so the frozen
    features remain color-and-structure projections of the image rather than
    random noise. Batch norms are set to identity.
    """
    rng = np.random.default_rng(seed)

    def noise(shape, scale):
        return torch.from_numpy(rng.normal(0.0, scale, size=shape)).float()

    def set_identity_bn(bn: nn.BatchNorm2d) -> None:
        nn.init.ones_(bn.weight)
        nn.init.zeros_(bn.bias)
        bn.running_mean.zero_()
        bn.running_var.fill_(1.0)

    def gaussian2d(k, sigma):
        c = np.arange(k) - (k - 1) / 2.0
        g = np.exp(-(c ** 2) / (2 * sigma ** 2))
        g2 = np.outer(g, g)
        return torch.from_numpy(g2 / g2.sum()).float()

    def replication(out_ch, in_ch, scale):
        w = torch.zeros(out_ch, in_ch, 1, 1)
        for o in range(out_ch):
            w[o, o % in_ch, 0, 0] = scale
        return w + noise(w.shape, 0.02 * scale)

    def grouped_average(out_ch, in_ch, scale):
        w = torch.zeros(out_ch, in_ch, 1, 1)
        per = in_ch // out_ch
        for o in range(out_ch):
            for g in range(per):
                w[o, o + g * out_ch, 0, 0] = scale / per
        return w + noise(w.shape, 0.02 * scale)

    def dirac3(ch):
        w = torch.zeros(ch, ch, 3, 3)
        for c in range(ch):
            w[c, c, 1, 1] = 1.0
        return w + noise(w.shape, 0.02)

    with torch.no_grad():
        g = gaussian2d(7, 2.0)
        mix = torch.from_numpy(rng.normal(0.0, 1.0, size=(64, 3))).float()
        mix = mix / mix.abs().sum(dim=1, keepdim=True)
        backbone.conv1.weight.copy_(mix[:, :, None, None] * g[None, None])
        set_identity_bn(backbone.bn1)
        for i, block in enumerate(backbone.layer1):
            in_ch = block.conv1.weight.shape[1]
            mid = block.conv1.weight.shape[0]
            out_ch = block.conv3.weight.shape[0]
            if in_ch == mid:
                block.conv1.weight.copy_(replication(mid, in_ch, 1.0))
            else:
                block.conv1.weight.copy_(grouped_average(mid, in_ch, 1.0))
            block.conv2.weight.copy_(dirac3(mid))
            block.conv3.weight.copy_(replication(out_ch, mid, 0.5))
            for bn in (block.bn1, block.bn2, block.bn3):
                set_identity_bn(bn)
            if block.downsample is not None:
                block.downsample[0].weight.copy_(replication(out_ch, in_ch, 0.5))
                set_identity_bn(block.downsample[1])


def _build_trunk() -> nn.Module:
    """Stem + first residual stage of ResNet-152 (256 channels at H/4).

    Child names mirror torchvision's so the published state dict keys load
    directly onto the truncated module.
    """
    from collections import OrderedDict

    from torchvision.models.resnet import Bottleneck

    downsample = nn.Sequential(
        nn.Conv2d(64, 256, 1, stride=1, bias=False), nn.BatchNorm2d(256)
    )
    layer1 = nn.Sequential(
        Bottleneck(64, 64, downsample=downsample), Bottleneck(256, 64), Bottleneck(256, 64)
    )
    return nn.Sequential(
        OrderedDict(
            conv1=nn.Conv2d(3, 64, 7, stride=2, padding=3, bias=False),
            bn1=nn.BatchNorm2d(64),
            relu=nn.ReLU(inplace=True),
            maxpool=nn.MaxPool2d(3, stride=2, padding=1),
            layer1=layer1,
        )
    )


def _load_truncated_backbone(pretrained: str) -> tuple[nn.Module, str]:
    trunk = _build_trunk()
    if pretrained == "never":
        _structured_backbone_init(trunk)
        return trunk, "fallback_structured_init"

    custom = os.environ.get("VIEWSYNTH_BACKBONE")
    if custom:
        state = load_backbone_state(custom)
        trunk.load_state_dict({k: torch.from_numpy(v) for k, v in state.items()}, strict=True)
        return trunk, f"custom:{custom}"

    source = "fallback_structured_init"
    if os.environ.get("VIEWSYNTH_PRETRAINED", "1") != "0":
        try:
            from torchvision.models import ResNet152_Weights

            full = ResNet152_Weights.IMAGENET1K_V1.get_state_dict(progress=False)
            subset = {
                k: v
                for k, v in full.items()
                if k.startswith(("conv1.", "bn1.", "layer1."))
            }
            trunk.load_state_dict(subset, strict=True)
            source = "torchvision_imagenet"
        except Exception:
            warnings.warn(
                "pretrained backbone weights unavailable; using the deterministic "
                "structured fallback initialization",
                stacklevel=3,
            )
    if source == "fallback_structured_init":
        _structured_backbone_init(trunk)
    return trunk, source


def save_backbone_state(state: dict, path) -> None:
    """Persist trunk weights (e.g. from ``training.pretrain_backbone``)."""
    arrays = {
        k: (v.detach().cpu().numpy() if isinstance(v, torch.Tensor) else np.asarray(v))
        for k, v in state.items()
    }
    np.savez(path, **arrays)


def load_backbone_state(path) -> dict:
    with np.load(path, allow_pickle=False) as archive:
        return {k: archive[k] for k in archive.files}


class ImageEncoder(nn.Module):
    """Encoder I: frozen truncated backbone + trainable 256->512 expansion conv.

    Output is a (B, 512, H/8, W/8) feature map. The backbone stays in eval
    mode permanently; only the expansion convolution trains.
    """

    OUT_CHANNELS = 512
    MIN_SIDE = 32

    def __init__(self, pretrained: str = "auto"):
        super().__init__()
        self.backbone, self.source = _load_truncated_backbone(pretrained)
        self.backbone.eval()
        for p in self.backbone.parameters():
            p.requires_grad_(False)
        self.pool = nn.MaxPool2d(2)
        self.expand = nn.Conv2d(256, self.OUT_CHANNELS, kernel_size=3, padding=1)
        # quiet start for the auxiliary branch: the decoder begins by relying
        # on Encoder II and grows into these features where they help
        with torch.no_grad():
            self.expand.weight.mul_(0.1)
            self.expand.bias.zero_()
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))

    def train(self, mode: bool = True) -> "ImageEncoder":
        super().train(mode)
        self.backbone.eval()  # frozen running stats regardless of outer mode
        return self

    def set_backbone_state(self, state: dict, source: str = "custom") -> None:
        """Swap in externally pretrained trunk weights (stays frozen)."""
        tensors = {
            k: (v if isinstance(v, torch.Tensor) else torch.from_numpy(np.asarray(v)))
            for k, v in state.items()
        }
        self.backbone.load_state_dict(tensors, strict=True)
        self.source = source

    def forward(self, img: Tensor) -> Tensor:
        if min(img.shape[-2:]) < self.MIN_SIDE:
            raise ValueError(
                f"input {tuple(img.shape[-2:])} below backbone minimum {self.MIN_SIDE}"
            )
        _validate_image_range(img)
        x = (img - self.mean.to(img.dtype)) / self.std.to(img.dtype)
        with torch.no_grad():
            x = self.backbone(x)
        return self.expand(self.pool(x))


# ---------------------------------------------------------------------------
# Encoder II
# ---------------------------------------------------------------------------


class PositionAwareEncoder(nn.Module):
    """Encoder II: image + positional map -> bottleneck features and skips.

    All but the last two conv stages preserve spatial resolution; the last two
    are max-pooled (by 4 then 2) down to H/8. Skips are taken from the last
    full-resolution stage and the H/4 stage.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        widths = cfg.enc2_widths
        in_ch = 3 + cfg.embedding.channels
        full_res = []
        for w in widths[:-2]:
            full_res += [nn.Conv2d(in_ch, w, 3, padding=1), nn.ReLU(inplace=True)]
            in_ch = w
        self.full_res = nn.Sequential(*full_res)
        self.pool1 = nn.MaxPool2d(POOL_FACTORS[0])
        self.stage1 = nn.Sequential(
            nn.Conv2d(widths[-3], widths[-2], 3, padding=1), nn.ReLU(inplace=True)
        )
        self.pool2 = nn.MaxPool2d(POOL_FACTORS[1])
        self.stage2 = nn.Sequential(
            nn.Conv2d(widths[-2], widths[-1], 3, padding=1), nn.ReLU(inplace=True)
        )

    def forward(self, img: Tensor, emb: Tensor) -> tuple[Tensor, list[Tensor]]:
        if img.shape[-2:] != emb.shape[-2:]:
            raise ValueError(
                f"embedding map {tuple(emb.shape[-2:])} does not match image "
                f"{tuple(img.shape[-2:])}"
            )
        t = torch.cat([img, emb], dim=1)
        skip_full = self.full_res(t)
        skip_quarter = self.stage1(self.pool1(skip_full))
        f2 = self.stage2(self.pool2(skip_quarter))
        return f2, [skip_full, skip_quarter]


# ---------------------------------------------------------------------------
# Decoder
# ---------------------------------------------------------------------------


class ViewDecoder(nn.Module):
    """Merges both encoder branches and upsamples to an H x W x 3 view.

    Stages: 1x1 merge at H/8, two stride-2 transposed convs to H/2 (skip
    concatenated at H/4), an optional stride-1 transposed-conv refinement,
    bilinear x2 to H with the full-resolution skip, and a sigmoid head that
    smoothly clamps the output to [0, 1].
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        enc1_ch = ImageEncoder.OUT_CHANNELS if cfg.encoder1 != Encoder1Kind.NONE else 0
        d_merge, d_up1, d_up2, d_head = cfg.dec_widths
        skip_full_ch = cfg.enc2_widths[-3]
        skip_quarter_ch = cfg.enc2_widths[-2]
        self.merge = nn.Conv2d(enc1_ch + cfg.d3, d_merge, 1)
        self.up1 = nn.ConvTranspose2d(d_merge, d_up1, 4, stride=2, padding=1)
        self.up2 = nn.ConvTranspose2d(d_up1 + skip_quarter_ch, d_up2, 4, stride=2, padding=1)
        self.refine = (
            nn.ConvTranspose2d(d_up2, d_up2, 3, stride=1, padding=1)
            if cfg.decoder_refine
            else None
        )
        self.head = nn.Sequential(
            nn.Conv2d(d_up2 + skip_full_ch, d_head, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(d_head, 3, 3, padding=1),
        )
        self.expected_enc1_ch = enc1_ch

    def forward(self, pack: FeaturePack) -> Tensor:
        pack.validate()
        if (pack.f1_prime is not None) != (self.expected_enc1_ch > 0):
            raise ValueError("feature pack does not match the configured Encoder I")
        parts = [pack.f2] if pack.f1_prime is None else [pack.f1_prime, pack.f2]
        x = F.relu(self.merge(torch.cat(parts, dim=1)))
        x = F.relu(self.up1(x))
        x = torch.cat([x, pack.skips[1]], dim=1)
        x = F.relu(self.up2(x))
        if self.refine is not None:
            x = F.relu(self.refine(x))
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        x = torch.cat([x, pack.skips[0]], dim=1)
        return torch.sigmoid(self.head(x))


# ---------------------------------------------------------------------------
# Full network
# ---------------------------------------------------------------------------


class SynthesisNetwork(nn.Module):
    """End-to-end view synthesis: (source image, target pose) -> novel view."""

    def __init__(self, cfg: ModelConfig, stats: PoseStats, pretrained: str = "auto"):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.embedding = PoseEmbedding(cfg.embedding, stats)
        self.encoder1 = (
            ImageEncoder(pretrained=pretrained)
            if cfg.encoder1 == Encoder1Kind.PRETRAINED_RESNET
            else None
        )
        self.encoder2 = PositionAwareEncoder(cfg)
        self.decoder = ViewDecoder(cfg)

    @property
    def stats(self) -> PoseStats:
        return self.embedding.stats

    @property
    def backbone_source(self) -> str:
        return self.encoder1.source if self.encoder1 is not None else "none"

    def encode_image(self, img: Tensor) -> Optional[Tensor]:
        return self.encoder1(img) if self.encoder1 is not None else None

    def encode_position_aware(self, img: Tensor, emb: Tensor) -> tuple[Tensor, list[Tensor]]:
        _validate_image_range(img)
        return self.encoder2(img, emb)

    def features(self, img: Tensor, pose: Tensor) -> FeaturePack:
        emb = self.embedding(pose)
        f2, skips = self.encode_position_aware(img, emb)
        return FeaturePack(f1_prime=self.encode_image(img), f2=f2, skips=skips)

    def decode(self, pack: FeaturePack) -> Tensor:
        return self.decoder(pack)

    def forward(self, img: Tensor, pose: Tensor) -> Tensor:
        self._check_resolution(img.shape[-2], img.shape[-1])
        return self.decode(self.features(img, pose))

    def _check_resolution(self, h: int, w: int) -> None:
        if (h, w) != (self.cfg.height, self.cfg.width):
            raise ValueError(
                f"input resolution {h}x{w} does not match the model's expected "
                f"{self.cfg.height}x{self.cfg.width}"
            )

    def n_parameters(self, trainable_only: bool = False) -> int:
        return sum(
            p.numel() for p in self.parameters() if p.requires_grad or not trainable_only
        )

    def synthesize(self, image: np.ndarray, pose: Pose6D) -> np.ndarray:
        """Numpy-facing single-image inference (eval mode, deterministic)."""
        image = np.asarray(image, dtype=np.float32)
        if image.ndim != 3 or image.shape[2] != 3:
            raise ValueError("expected an H x W x 3 image")
        self._check_resolution(image.shape[0], image.shape[1])
        was_training = self.training
        self.eval()
        try:
            with torch.inference_mode():
                img = torch.from_numpy(image).permute(2, 0, 1).unsqueeze(0)
                p = torch.from_numpy(pose.as_array()).to(torch.float32).unsqueeze(0)
                out = self.forward(img, p)
        finally:
            self.train(was_training)
        return out.squeeze(0).permute(1, 2, 0).numpy()


def build_model(cfg: ModelConfig, stats: PoseStats, seed: int | None = None,
                pretrained: str = "auto") -> SynthesisNetwork:
    """Construct a network with optionally seeded parameter initialization."""
    if seed is not None:
        torch.manual_seed(seed)
    return SynthesisNetwork(cfg, stats, pretrained=pretrained)
