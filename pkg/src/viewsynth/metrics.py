"""Quality metrics and the evaluation-table protocol.

These are the non-differentiable, numpy-facing counterparts of the loss
module; SSIM/MS-SSIM reuse the same windowed core so the metric and the loss
can never drift apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol, Sequence

import numpy as np
import torch

from . import losses
from .pose import Pose6D

PSNR_INF = math.inf


class EvalProtocol(str, Enum):
    DIRECT = "direct"
    ROUND_TRIP = "round_trip"


class SynthesisModel(Protocol):
    """Anything that can synthesize a view; satisfied by SynthesisNetwork."""

    def synthesize(self, image: np.ndarray, pose: Pose6D) -> np.ndarray: ...


def _to_tensor(img: np.ndarray) -> torch.Tensor:
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ValueError(f"expected H x W [x C] image, got shape {img.shape}")
    return torch.from_numpy(np.ascontiguousarray(img, dtype=np.float64)).permute(2, 0, 1)


def _check_shapes(pred: np.ndarray, target: np.ndarray) -> None:
    if np.shape(pred) != np.shape(target):
        raise ValueError(f"shape mismatch: {np.shape(pred)} vs {np.shape(target)}")


def psnr(pred: np.ndarray, target: np.ndarray, peak: float = 1.0) -> float:
    """10 * log10(peak^2 / MSE); +inf sentinel for identical inputs."""
    _check_shapes(pred, target)
    if peak <= 0:
        raise ValueError("peak must be positive")
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(peak * peak / mse)


def ssim(pred: np.ndarray, target: np.ndarray) -> float:
    """Single-scale SSIM, 11x11 Gaussian window, K1=0.01 K2=0.03, range 1.0."""
    _check_shapes(pred, target)
    with torch.no_grad():
        s, _ = losses.ssim_and_contrast(
            _to_tensor(pred).unsqueeze(0), _to_tensor(target).unsqueeze(0)
        )
    return float(s.mean())


def ms_ssim(pred: np.ndarray, target: np.ndarray, scales: int = 5) -> float:
    """Multi-scale SSIM similarity; exactly 1 - losses.ms_ssim_loss."""
    _check_shapes(pred, target)
    with torch.no_grad():
        v = losses.ms_ssim_index(
            _to_tensor(pred).unsqueeze(0), _to_tensor(target).unsqueeze(0), scales=scales
        )
    return float(v)


@dataclass
class MetricsReport:
    """Per-dataset quality aggregates plus retained per-sample records.

    ``vifp``/``dists``/``lpips`` columns are reserved (always None here) so
    externally computed values can be merged for full table parity.
    """

    dataset_id: str
    resolution: tuple[int, int]
    protocol: str
    sample_count: int
    psnr: float
    ssim: float
    ms_ssim: float
    per_sample: list[dict] = field(default_factory=list)
    vifp: float | None = None
    dists: float | None = None
    lpips: float | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "resolution": list(self.resolution),
            "protocol": self.protocol,
            "sample_count": self.sample_count,
            "psnr": self.psnr,
            "ssim": self.ssim,
            "ms_ssim": self.ms_ssim,
            "vifp": self.vifp,
            "dists": self.dists,
            "lpips": self.lpips,
            "per_sample": self.per_sample,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        d["resolution"] = tuple(d["resolution"])
        return cls(**d)


def evaluate_table(
    model: SynthesisModel,
    samples: Sequence,
    protocol: EvalProtocol | str = EvalProtocol.DIRECT,
    dataset_id: str = "dataset",
    msssim_scales: int | None = None,
    pose_frame: str = "relative",
) -> MetricsReport:
    """Evaluate a model over a dataset of samples.

    DIRECT compares the synthesized target view against the ground-truth
    target image. ROUND_TRIP synthesizes at the target pose, then feeds that
    image back as input to synthesize the original location again and
    compares against the source image; the back-query pose is the negated
    offset for relative-frame datasets or the stored source pose for
    absolute-frame ones (``pose_frame="absolute"``).
    """
    protocol = EvalProtocol(protocol)
    if len(samples) == 0:
        raise ValueError("empty dataset")
    if pose_frame not in ("relative", "absolute"):
        raise ValueError(f"unknown pose frame {pose_frame!r}")
    h, w = samples[0].source_image.shape[:2]
    if msssim_scales is None:
        msssim_scales = min(5, losses.max_msssim_scales(h, w))
    records = []
    for i, s in enumerate(samples):
        if protocol == EvalProtocol.DIRECT:
            out = model.synthesize(s.source_image, s.target_pose)
            ref = s.target_image
        else:
            forward = model.synthesize(s.source_image, s.target_pose)
            back = s.source_pose if pose_frame == "absolute" else s.target_pose.negated()
            out = model.synthesize(forward, back)
            ref = s.source_image
        records.append(
            {
                "index": i,
                "psnr": psnr(out, ref),
                "ssim": ssim(out, ref),
                "ms_ssim": ms_ssim(out, ref, scales=msssim_scales),
            }
        )
    return MetricsReport(
        dataset_id=dataset_id,
        resolution=(h, w),
        protocol=protocol.value,
        sample_count=len(records),
        psnr=float(np.mean([r["psnr"] for r in records])),
        ssim=float(np.mean([r["ssim"] for r in records])),
        ms_ssim=float(np.mean([r["ms_ssim"] for r in records])),
        per_sample=records,
    )


def render_table(reports: Sequence[MetricsReport], label: str = "Dataset") -> str:
    """Aligned-text quality table, one row per report."""
    headers = [label, "Protocol", "N", "PSNR", "SSIM", "MS-SSIM"]
    rows = [
        [
            r.dataset_id,
            r.protocol,
            str(r.sample_count),
            f"{r.psnr:.4f}" if math.isfinite(r.psnr) else "inf",
            f"{r.ssim:.4f}",
            f"{r.ms_ssim:.4f}",
        ]
        for r in reports
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(headers)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*headers), fmt.format(*["-" * w for w in widths])]
    lines += [fmt.format(*row) for row in rows]
    return "\n".join(lines)
