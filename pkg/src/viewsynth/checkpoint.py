"""Checkpoint serialization: one archive holding configs, pose bounds and weights.

The archive is an ``.npz`` file (a zip of arrays) with a JSON header under
``__checkpoint__`` and every parameter/buffer of the network stored under its
state-dict name. Loading validates the format version and every array shape
against a model freshly built from the stored config, so a corrupt or
mismatched file fails before inference ever runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .pose import PoseStats
from .renderer import ModelConfig, SynthesisNetwork

FORMAT_VERSION = 1
_HEADER_KEY = "__checkpoint__"


@dataclass
class Checkpoint:
    """All state needed to reproduce inference: config, pose bounds, weights."""

    model_config: ModelConfig
    pose_stats: PoseStats
    params: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def resolution(self) -> tuple[int, int]:
        return self.model_config.height, self.model_config.width


def checkpoint_from_model(model: SynthesisNetwork, meta: dict | None = None) -> Checkpoint:
    params = {k: v.detach().cpu().numpy().copy() for k, v in model.state_dict().items()}
    meta = dict(meta or {})
    meta.setdefault("backbone_source", model.backbone_source)
    return Checkpoint(
        model_config=model.cfg,
        pose_stats=model.stats,
        params=params,
        meta=meta,
    )


def model_from_checkpoint(ckpt: Checkpoint) -> SynthesisNetwork:
    """Rebuild the network and load weights, validating names and shapes."""
    model = SynthesisNetwork(ckpt.model_config, ckpt.pose_stats, pretrained="never")
    expected = model.state_dict()
    missing = sorted(set(expected) - set(ckpt.params))
    extra = sorted(set(ckpt.params) - set(expected))
    if missing or extra:
        raise ValueError(
            f"checkpoint parameters do not match the config: missing={missing[:4]} "
            f"unexpected={extra[:4]}"
        )
    state = {}
    for name, ref in expected.items():
        arr = ckpt.params[name]
        if tuple(arr.shape) != tuple(ref.shape):
            raise ValueError(
                f"parameter {name!r} has shape {tuple(arr.shape)}, "
                f"config expects {tuple(ref.shape)}"
            )
        state[name] = torch.from_numpy(arr.copy()).to(ref.dtype)
    model.load_state_dict(state, strict=True)
    if "backbone_source" in ckpt.meta and model.encoder1 is not None:
        model.encoder1.source = ckpt.meta["backbone_source"]
    model.eval()
    return model


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": ckpt.model_config.to_dict(),
        "pose_stats": ckpt.pose_stats.to_dict(),
        "meta": ckpt.meta,
        "param_names": sorted(ckpt.params),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **{_HEADER_KEY: np.str_(json.dumps(header))}, **ckpt.params)
    # numpy appends .npz when missing; keep the caller's exact path
    written = path if path.suffix == ".npz" else path.with_name(path.name + ".npz")
    if written != path:
        written.replace(path)


def load_checkpoint(path: str | Path, validate: bool = True) -> Checkpoint:
    path = Path(path)
    with np.load(path, allow_pickle=False) as archive:
        if _HEADER_KEY not in archive:
            raise ValueError(f"{path} is not a viewsynth checkpoint")
        header = json.loads(str(archive[_HEADER_KEY]))
        version = header.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(
                f"checkpoint format version {version} is not supported "
                f"(expected {FORMAT_VERSION})"
            )
        params = {k: archive[k] for k in archive.files if k != _HEADER_KEY}
    ckpt = Checkpoint(
        model_config=ModelConfig.from_dict(header["model_config"]),
        pose_stats=PoseStats.from_dict(header["pose_stats"]),
        params=params,
        meta=header.get("meta", {}),
    )
    if validate:
        model_from_checkpoint(ckpt)  # raises with the offending parameter name
    return ckpt
