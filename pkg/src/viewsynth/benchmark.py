"""Inference latency benchmark: seconds per frame and fps per resolution.

Times the pure synthesis path (positional embedding included, disk and wire
I/O excluded) over a fixed number of measured passes after warmup, mirroring
how per-view render times are usually reported.
"""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from .checkpoint import Checkpoint, model_from_checkpoint
from .pose import Pose6D
from .renderer import ModelConfig, SynthesisNetwork, build_model

MIN_REPEATS = 30
MIN_WARMUP = 5


@dataclass
class LatencyEntry:
    resolution: tuple[int, int]
    variant: str
    mean_s: Optional[float]
    fps: Optional[int]
    warmup: int
    measured: int
    device: str
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "resolution": list(self.resolution),
            "variant": self.variant,
            "mean_s": self.mean_s,
            "fps": self.fps,
            "warmup": self.warmup,
            "measured": self.measured,
            "device": self.device,
            "note": self.note,
        }


@dataclass
class LatencyReport:
    entries: list[LatencyEntry] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries]}

    def render_text(self) -> str:
        headers = ["Variant", "Resolution", "sec/frame", "fps", "Note"]
        rows = []
        for e in self.entries:
            rows.append(
                [
                    e.variant,
                    f"{e.resolution[0]}x{e.resolution[1]}",
                    f"{e.mean_s:.4f}" if e.mean_s is not None else "-",
                    str(e.fps) if e.fps is not None else "-",
                    e.note,
                ]
            )
        widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        lines = [fmt.format(*headers), fmt.format(*["-" * w for w in widths])]
        lines += [fmt.format(*r) for r in rows]
        return "\n".join(lines)


def _device_description() -> str:
    return f"{platform.machine()} cpu, {torch.get_num_threads()} torch thread(s)"


def config_at_resolution(cfg: ModelConfig, height: int, width: int) -> ModelConfig:
    """The same architecture re-instantiated for another resolution.

    The embedding grid keeps its default proportional scaling (H/8 x W/8).
    """
    d = cfg.to_dict()
    d["height"], d["width"] = height, width
    d["embedding"]["height"], d["embedding"]["width"] = height, width
    d["embedding"]["grid_h"], d["embedding"]["grid_w"] = 0, 0
    return ModelConfig.from_dict(d)


def time_synthesis(
    model: SynthesisNetwork,
    repeats: int = MIN_REPEATS,
    warmup: int = MIN_WARMUP,
    seed: int = 0,
) -> float:
    """Mean seconds per frame over ``repeats`` timed passes on a random input."""
    if repeats < MIN_REPEATS:
        raise ValueError(f"repeats must be >= {MIN_REPEATS}")
    if warmup < MIN_WARMUP:
        raise ValueError(f"warmup must be >= {MIN_WARMUP}")
    rng = np.random.default_rng(seed)
    img = rng.random((model.cfg.height, model.cfg.width, 3), dtype=np.float32)
    stats = model.stats
    pose = Pose6D.from_array(rng.uniform(stats.p_min, stats.p_max))
    for _ in range(warmup):
        model.synthesize(img, pose)
    t0 = time.perf_counter()
    for _ in range(repeats):
        model.synthesize(img, pose)
    return (time.perf_counter() - t0) / repeats


def benchmark_latency(
    ckpt: Checkpoint,
    resolutions: Sequence[int | tuple[int, int]],
    repeats: int = MIN_REPEATS,
    warmup: int = MIN_WARMUP,
    allow_rebuild: bool = False,
) -> LatencyReport:
    """One latency row per requested resolution.

    A checkpoint carries weights for a single resolution; other resolutions
    are skipped with a note unless ``allow_rebuild`` is set, in which case the
    same architecture is re-instantiated (untrained) at that size purely for
    timing, which does not change the arithmetic cost of a forward pass.
    """
    report = LatencyReport()
    device = _device_description()
    variant = ckpt.model_config.variant.value
    for res in resolutions:
        h, w = (res, res) if isinstance(res, int) else res
        note = ""
        if (h, w) == ckpt.resolution:
            model = model_from_checkpoint(ckpt)
        elif allow_rebuild:
            cfg = config_at_resolution(ckpt.model_config, h, w)
            model = build_model(cfg, ckpt.pose_stats, seed=0, pretrained="never")
            note = "untrained weights (rebuilt at this resolution)"
        else:
            report.entries.append(
                LatencyEntry(
                    resolution=(h, w),
                    variant=variant,
                    mean_s=None,
                    fps=None,
                    warmup=0,
                    measured=0,
                    device=device,
                    note=f"skipped: checkpoint resolution is "
                    f"{ckpt.resolution[0]}x{ckpt.resolution[1]}",
                )
            )
            continue
        mean_s = time_synthesis(model, repeats=repeats, warmup=warmup)
        report.entries.append(
            LatencyEntry(
                resolution=(h, w),
                variant=variant,
                mean_s=mean_s,
                fps=int(1.0 / mean_s),
                warmup=warmup,
                measured=repeats,
                device=device,
                note=note,
            )
        )
    return report
