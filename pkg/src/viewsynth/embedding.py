"""Positional embedding: normalized pose -> H x W x 1 feature map.

Pipeline (full variant): sinusoidal frequency encoding of the normalized
pose, a small MLP reprojection to a d2-length vector, row-major reshape to
an h x w grid, and nearest-neighbor upsampling to the image resolution.
The five ablation variants select subsets of these stages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import torch
from torch import Tensor, nn

from .pose import POSE_DIM, NormalizedPose, Pose6D, PoseStats, normalize_pose


class EmbeddingVariant(str, Enum):
    MLP_ONLY = "mlp_only"            # raw pose -> MLP -> grid
    NORM_ONLY = "norm_only"          # normalized 6-vector, tiled
    NORM_POSENC = "norm_posenc"      # normalize -> frequency encode, tiled
    NORM_MLP = "norm_mlp"            # normalize -> MLP -> grid
    FULL = "full"                    # normalize -> encode -> MLP -> grid


# Hidden widths of the reprojection MLP; final layer is linear to d2.
MLP_HIDDEN = (512, 1024)


@dataclass
class EmbeddingConfig:
    """Geometry and variant of the positional embedding stage.

    ``grid_h * grid_w`` fixes the MLP output length d2; the grid is
    nearest-neighbor upsampled by the integer factor H/grid_h == W/grid_w.
    Default grid is H/8 x W/8 (32 x 32 at 256 x 256).
    """

    height: int = 256
    width: int = 256
    variant: EmbeddingVariant = EmbeddingVariant.FULL
    m: int = 32
    sigma: float = 16.0
    grid_h: int = 0
    grid_w: int = 0
    channels: int = 1

    def __post_init__(self) -> None:
        self.variant = EmbeddingVariant(self.variant)
        if self.grid_h == 0:
            self.grid_h = max(1, self.height // 8)
        if self.grid_w == 0:
            self.grid_w = max(1, self.width // 8)
        self.validate()

    def validate(self) -> None:
        if self.m < 1:
            raise ValueError("encoding depth m must be >= 1")
        if self.sigma <= 1:
            raise ValueError("sigma must be > 1")
        if self.channels != 1:
            raise ValueError("embedding map is single channel")
        if self.height % self.grid_h or self.width % self.grid_w:
            raise ValueError("image size must be an integer multiple of the grid")
        if self.height // self.grid_h != self.width // self.grid_w:
            raise ValueError(
                "grid aspect ratio must match the image aspect ratio "
                f"({self.grid_w}:{self.grid_h} vs {self.width}:{self.height})"
            )

    @property
    def d1(self) -> int:
        """Encoded-position length: 2 (sin+cos) * m frequencies * 6 components."""
        return 2 * self.m * POSE_DIM

    @property
    def d2(self) -> int:
        return self.grid_h * self.grid_w

    @property
    def upsample_factor(self) -> int:
        return self.height // self.grid_h

    @property
    def mlp_input_dim(self) -> Optional[int]:
        if self.variant == EmbeddingVariant.FULL:
            return self.d1
        if self.variant in (EmbeddingVariant.NORM_MLP, EmbeddingVariant.MLP_ONLY):
            return POSE_DIM
        return None

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "variant": self.variant.value,
            "m": self.m,
            "sigma": self.sigma,
            "grid_h": self.grid_h,
            "grid_w": self.grid_w,
            "channels": self.channels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingConfig":
        return cls(**d)


# ---------------------------------------------------------------------------
# Stage primitives. Torch versions operate on batched tensors and are the
# single implementation; the numpy functions below are one-pose conveniences
# used at the package boundary and in tests.
# ---------------------------------------------------------------------------


def frequency_ladder(m: int, sigma: float, dtype=torch.float32) -> Tensor:
    """Angular frequencies 2*pi*sigma^(j/m) for j in 0..m-1."""
    j = torch.arange(m, dtype=dtype)
    return 2.0 * math.pi * sigma ** (j / m)


def encode_position_torch(pbar: Tensor, m: int, sigma: float) -> Tensor:
    """Sinusoidal encoding of (B, 6) normalized poses -> (B, 2*m*6).

    Layout is component-major, frequency-minor, cos before sin:
    out[c*2m + 2j] = cos(w_j * p[c]), out[c*2m + 2j + 1] = sin(w_j * p[c]).
    """
    if pbar.ndim != 2 or pbar.shape[1] != POSE_DIM:
        raise ValueError(f"expected (B, {POSE_DIM}) input, got {tuple(pbar.shape)}")
    w = frequency_ladder(m, sigma, dtype=pbar.dtype).to(pbar.device)
    phase = pbar.unsqueeze(-1) * w  # (B, 6, m)
    enc = torch.stack([torch.cos(phase), torch.sin(phase)], dim=-1)  # (B, 6, m, 2)
    return enc.reshape(pbar.shape[0], 2 * m * POSE_DIM)


def reshape_to_grid_torch(rho: Tensor, h: int, w: int) -> Tensor:
    """Row-major inverse vectorization: (B, h*w) -> (B, 1, h, w)."""
    if rho.ndim != 2 or rho.shape[1] != h * w:
        raise ValueError(
            f"vector length {tuple(rho.shape)[-1]} does not match grid {h}x{w}"
        )
    return rho.reshape(rho.shape[0], 1, h, w)


def upsample_nearest_torch(grid: Tensor, alpha: int) -> Tensor:
    """Replicate each grid element into an alpha x alpha block."""
    if alpha < 1 or int(alpha) != alpha:
        raise ValueError(f"upsample factor must be a positive integer, got {alpha}")
    if alpha == 1:
        return grid
    return torch.nn.functional.interpolate(grid, scale_factor=int(alpha), mode="nearest")


def tile_to_length_torch(vec: Tensor, n: int) -> Tensor:
    """Cyclically tile (B, k) vectors to length n (variants without an MLP)."""
    idx = torch.arange(n, device=vec.device) % vec.shape[1]
    return vec[:, idx]


class PoseProjector(nn.Module):
    """The reprojection MLP: in -> 512 -> 1024 -> d2, ReLU hidden, linear out."""

    def __init__(self, in_dim: int, d2: int):
        super().__init__()
        dims = (in_dim, *MLP_HIDDEN)
        layers: list[nn.Module] = []
        for a, b in zip(dims[:-1], dims[1:]):
            layers += [nn.Linear(a, b), nn.ReLU(inplace=True)]
        layers.append(nn.Linear(dims[-1], d2))
        self.net = nn.Sequential(*layers)
        self.in_dim = in_dim
        self.d2 = d2

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ValueError(
                f"MLP expects input width {self.in_dim}, got {x.shape[-1]}"
            )
        return self.net(x)


class PoseEmbedding(nn.Module):
    """Maps raw (B, 6) poses to (B, 1, H, W) positional feature maps.

    Holds the normalization bounds as buffers so a trained model always
    normalizes exactly as it did in training. Forward is pure given frozen
    parameters; all five variants share this module.
    """

    def __init__(self, cfg: EmbeddingConfig, stats: PoseStats):
        super().__init__()
        self.cfg = cfg
        in_dim = cfg.mlp_input_dim
        self.mlp = PoseProjector(in_dim, cfg.d2) if in_dim is not None else None
        self.register_buffer("p_min", torch.zeros(POSE_DIM))
        self.register_buffer("p_span", torch.ones(POSE_DIM))
        self.set_stats(stats)

    def set_stats(self, stats: PoseStats) -> None:
        self._stats = stats
        span = stats.span
        self.p_min.copy_(torch.from_numpy(stats.p_min.copy()).to(self.p_min.dtype))
        self.p_span.copy_(
            torch.from_numpy(np.where(span == 0.0, 1.0, span)).to(self.p_span.dtype)
        )
        self._degenerate = torch.from_numpy(span == 0.0)

    @property
    def stats(self) -> PoseStats:
        return self._stats

    def normalize(self, pose: Tensor) -> Tensor:
        out = (pose - self.p_min.to(pose.dtype)) / self.p_span.to(pose.dtype)
        if bool(self._degenerate.any()):
            out = torch.where(self._degenerate.to(pose.device), torch.full_like(out, 0.5), out)
        return out

    def project_vector(self, pose: Tensor) -> Tensor:
        """Variant-dependent (B, 6) -> (B, d2) stage chain, pre-reshape."""
        cfg = self.cfg
        v = self.cfg.variant
        if v == EmbeddingVariant.MLP_ONLY:
            return self.mlp(pose)
        pbar = self.normalize(pose)
        if v == EmbeddingVariant.NORM_ONLY:
            return tile_to_length_torch(pbar, cfg.d2)
        if v == EmbeddingVariant.NORM_MLP:
            return self.mlp(pbar)
        enc = encode_position_torch(pbar, cfg.m, cfg.sigma)
        if v == EmbeddingVariant.NORM_POSENC:
            return tile_to_length_torch(enc, cfg.d2)
        return self.mlp(enc)  # FULL

    def forward(self, pose: Tensor) -> Tensor:
        cfg = self.cfg
        rho = self.project_vector(pose)
        grid = reshape_to_grid_torch(rho, cfg.grid_h, cfg.grid_w)
        return upsample_nearest_torch(grid, cfg.upsample_factor)


# ---------------------------------------------------------------------------
# One-pose numpy conveniences (the package-boundary forms of the stages).
# ---------------------------------------------------------------------------


def encode_position(pbar: NormalizedPose | np.ndarray, m: int, sigma: float) -> np.ndarray:
    """Encode one normalized pose to a length 2*m*6 vector in [-1, 1]."""
    if m < 1:
        raise ValueError("encoding depth m must be >= 1")
    if sigma <= 1:
        raise ValueError("sigma must be > 1")
    vals = pbar.values if isinstance(pbar, NormalizedPose) else np.asarray(pbar, dtype=np.float64)
    if vals.shape != (POSE_DIM,):
        raise ValueError("expected a 6-vector")
    if not np.isfinite(vals).all():
        raise ValueError("normalized pose must be finite")
    t = encode_position_torch(torch.from_numpy(vals.copy()).unsqueeze(0), m, sigma)
    return t.squeeze(0).numpy()


def project(enc: np.ndarray, mlp: nn.Module) -> np.ndarray:
    """Forward one encoded vector through a reprojection MLP."""
    enc = np.asarray(enc)
    x = torch.from_numpy(enc.copy()).unsqueeze(0)
    p = next(mlp.parameters())
    with torch.no_grad():
        out = mlp(x.to(p.dtype))
    return out.squeeze(0).numpy()


def reshape_to_grid(rho: np.ndarray, h: int, w: int) -> np.ndarray:
    """Row-major inverse vectorization of a d2-vector into an h x w x 1 grid."""
    rho = np.asarray(rho)
    if rho.size != h * w or rho.ndim != 1:
        raise ValueError(f"vector of length {rho.size} does not reshape to {h}x{w}")
    return rho.reshape(h, w, 1)


def upsample_nearest(grid: np.ndarray, alpha: int) -> np.ndarray:
    """Nearest-neighbor upsample an h x w x 1 grid by an integer factor."""
    if alpha < 1 or int(alpha) != alpha:
        raise ValueError(f"upsample factor must be a positive integer, got {alpha}")
    grid = np.asarray(grid)
    if grid.ndim != 3 or grid.shape[2] != 1:
        raise ValueError("expected an h x w x 1 grid")
    return np.repeat(np.repeat(grid, int(alpha), axis=0), int(alpha), axis=1)


def embed(
    pose: Pose6D,
    stats: PoseStats,
    cfg: EmbeddingConfig,
    mlp: Optional[nn.Module] = None,
) -> np.ndarray:
    """Full variant-dispatched pipeline for one pose -> H x W x 1 map.

    ``mlp`` is required for variants with a learned reprojection and must map
    width ``cfg.mlp_input_dim`` to ``cfg.d2``.
    """
    if cfg.mlp_input_dim is not None and mlp is None:
        raise ValueError(f"variant {cfg.variant.value} requires MLP parameters")
    module = PoseEmbedding(cfg, stats)
    if mlp is not None:
        module.mlp = mlp
    module.eval()
    with torch.no_grad():
        p = torch.from_numpy(pose.as_array()).to(torch.float32).unsqueeze(0)
        if mlp is not None:
            p = p.to(next(mlp.parameters()).dtype)
        out = module(p)
    return out.squeeze(0).permute(1, 2, 0).numpy()
