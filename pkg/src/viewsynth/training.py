"""Optimizer loop, learning-rate schedule, staged curriculum and ablations.

Training is deliberately serial and fully seeded: with a fixed seed two runs
of the same stage produce bitwise-identical checkpoints. The learning rate
follows a step schedule (multiplied by a decay factor every fixed number of
epochs); the curriculum chains stages over progressively wider-baseline
datasets, each stage initialized from the previous stage's checkpoint.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import torch
from torch import nn

from .checkpoint import Checkpoint, checkpoint_from_model, model_from_checkpoint
from .data import (
    Sample,
    SyntheticSceneSpec,
    dataset_fingerprint,
    dataset_pose_stats,
    generate_synthetic,
    lf_to_samples,
    make_synthetic_light_field,
)
from .embedding import EmbeddingVariant
from .losses import LossConfig, LossReport, total_loss
from .metrics import EvalProtocol, MetricsReport, evaluate_table
from .renderer import Encoder1Kind, ModelConfig, SynthesisNetwork, build_model


@dataclass
class StageSpec:
    """One curriculum stage: which dataset, for how long, at what base rate."""

    dataset_id: str
    epochs: int
    lr_override: Optional[float] = None

    def to_dict(self) -> dict:
        return {"dataset_id": self.dataset_id, "epochs": self.epochs, "lr_override": self.lr_override}

    @classmethod
    def from_dict(cls, d: dict) -> "StageSpec":
        return cls(**d)


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    batch_size: int = 8
    lr: float = 0.003
    lr_decay: float = 0.2
    lr_decay_interval: int = 30
    epochs: int = 10
    seed: int = 0
    stages: list[StageSpec] = field(default_factory=list)

    def validate(self) -> None:
        for name in ("batch_size", "lr", "lr_decay", "lr_decay_interval", "epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        self.loss.validate()

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "loss": self.loss.to_dict(),
            "batch_size": self.batch_size,
            "lr": self.lr,
            "lr_decay": self.lr_decay,
            "lr_decay_interval": self.lr_decay_interval,
            "epochs": self.epochs,
            "seed": self.seed,
            "stages": [s.to_dict() for s in self.stages],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["model"] = ModelConfig.from_dict(d["model"])
        if "loss" in d:
            d["loss"] = LossConfig.from_dict(d["loss"])
        if "stages" in d:
            d["stages"] = [StageSpec.from_dict(s) for s in d["stages"]]
        cfg = cls(**d)
        cfg.validate()
        return cfg


def paper_scale_config() -> TrainConfig:
    """The published-scale preset (cluster resources required, kept for provenance).

    Stage names record the original datasets the desk substitutes stand in for.
    """
    return TrainConfig(
        model=ModelConfig(height=256, width=256),
        batch_size=24,
        lr=0.003,
        lr_decay=0.2,
        lr_decay_interval=30,
        epochs=150,
        stages=[
            StageSpec("stage1_narrow_lf_lytro_substitute", 50),
            StageSpec("stage2_wider_lf_slfdb_substitute", 50, lr_override=0.0006),
            StageSpec("stage3_random_cube_blender_substitute", 50, lr_override=0.0006),
        ],
    )


@dataclass
class TrainLogRecord:
    stage: str
    epoch: int
    step: int
    losses: LossReport
    lr: float
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "epoch": self.epoch,
            "step": self.step,
            "lr": self.lr,
            "wall_time": self.wall_time,
            **self.losses.to_dict(),
        }


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite; carries the offending record."""

    def __init__(self, message: str, record: TrainLogRecord):
        super().__init__(message)
        self.record = record


def lr_at(epoch: int, cfg: TrainConfig, base_lr: Optional[float] = None) -> float:
    """Step schedule: base * decay^floor(epoch / interval)."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    base = cfg.lr if base_lr is None else base_lr
    return base * cfg.lr_decay ** (epoch // cfg.lr_decay_interval)


def _stack_samples(samples: Sequence[Sample]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    imgs = torch.from_numpy(np.stack([s.source_image for s in samples])).permute(0, 3, 1, 2)
    tgts = torch.from_numpy(np.stack([s.target_image for s in samples])).permute(0, 3, 1, 2)
    poses = torch.from_numpy(
        np.stack([s.target_pose.as_array() for s in samples]).astype(np.float32)
    )
    return imgs.contiguous(), tgts.contiguous(), poses


def train_stage(
    cfg: TrainConfig,
    samples: Sequence[Sample],
    init: Optional[Checkpoint] = None,
    stage: Optional[StageSpec] = None,
    on_record: Optional[Callable[[TrainLogRecord], None]] = None,
    pretrained: str = "auto",
) -> Checkpoint:
    """Run one optimization stage and return the resulting checkpoint.

    Pose normalization bounds are recomputed from this stage's dataset and
    embedded in the returned checkpoint. When ``init`` is given its model
    config must match ``cfg.model``; parameters are restored and training
    continues with the new dataset's bounds.
    """
    cfg.validate()
    if len(samples) == 0:
        raise ValueError("empty dataset")
    stage_name = stage.dataset_id if stage else "train"
    epochs = stage.epochs if stage else cfg.epochs
    base_lr = stage.lr_override if stage and stage.lr_override else cfg.lr

    torch.manual_seed(cfg.seed)
    stats = dataset_pose_stats(samples)
    if init is not None:
        if init.model_config.to_dict() != cfg.model.to_dict():
            raise ValueError("init checkpoint config does not match the training config")
        model = model_from_checkpoint(init)
        model.embedding.set_stats(stats)
    else:
        model = build_model(cfg.model, stats, pretrained=pretrained)
    model.train()

    imgs, tgts, poses = _stack_samples(samples)
    n = len(samples)
    opt = torch.optim.Adam(
        [p for p in model.parameters() if p.requires_grad], lr=base_lr
    )

    start = time.perf_counter()
    step = 0
    for epoch in range(epochs):
        lr = lr_at(epoch, cfg, base_lr)
        for group in opt.param_groups:
            group["lr"] = lr
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = torch.from_numpy(order[lo : lo + cfg.batch_size].copy())
            pred = model(imgs[idx], poses[idx])
            loss, report = total_loss(pred, tgts[idx], cfg.loss)
            record = TrainLogRecord(
                stage=stage_name,
                epoch=epoch,
                step=step,
                losses=report,
                lr=lr,
                wall_time=time.perf_counter() - start,
            )
            if not np.isfinite(report.total):
                raise TrainingDiverged(
                    f"non-finite loss at stage={stage_name} epoch={epoch} step={step}",
                    record,
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            if on_record is not None:
                on_record(record)
            step += 1

    return checkpoint_from_model(
        model,
        meta={
            "stage": stage_name,
            "seed": cfg.seed,
            "epochs": epochs,
            "steps": step,
            "base_lr": base_lr,
            "dataset_fingerprint": dataset_fingerprint(samples),
        },
    )


@dataclass
class CurriculumResult:
    stage_checkpoints: list[tuple[str, Checkpoint]]
    final: Checkpoint


def make_desk_datasets(
    seed: int = 0, height: int = 64, width: int = 64
) -> dict[str, list[Sample]]:
    """Desk-scale curriculum stages: narrow LF, doubled-baseline LF, random cube."""
    narrow = make_synthetic_light_field(seed, (5, 5), height=height, width=width, baseline=0.008)
    wide = make_synthetic_light_field(seed, (5, 5), height=height, width=width, baseline=0.016)
    cube = generate_synthetic(
        SyntheticSceneSpec(
            seed=seed, height=height, width=width, initial_positions=3, samples_per_position=12
        )
    )
    return {
        "lf_small": lf_to_samples(narrow),
        "lf_wide": lf_to_samples(wide),
        "synthetic_cube": cube,
    }


def run_curriculum(
    cfg: TrainConfig,
    datasets: Mapping[str, Sequence[Sample]],
    on_record: Optional[Callable[[TrainLogRecord], None]] = None,
    on_stage: Optional[Callable[[str, Checkpoint], None]] = None,
    pretrained: str = "auto",
) -> CurriculumResult:
    """Chain the configured stages, each initialized from the previous checkpoint.

    ``on_stage`` fires after every completed stage so partial progress can be
    persisted; an error mid-curriculum propagates after that callback has run
    for all completed stages.
    """
    cfg.validate()
    if not cfg.stages:
        raise ValueError("curriculum requires a non-empty stage list")
    missing = [s.dataset_id for s in cfg.stages if s.dataset_id not in datasets]
    if missing:
        raise ValueError(f"unresolvable stage datasets: {missing}")
    ckpt: Optional[Checkpoint] = None
    completed: list[tuple[str, Checkpoint]] = []
    for spec in cfg.stages:
        ckpt = train_stage(
            cfg,
            datasets[spec.dataset_id],
            init=ckpt,
            stage=spec,
            on_record=on_record,
            pretrained=pretrained,
        )
        completed.append((spec.dataset_id, ckpt))
        if on_stage is not None:
            on_stage(spec.dataset_id, ckpt)
    assert ckpt is not None
    return CurriculumResult(stage_checkpoints=completed, final=ckpt)


# ---------------------------------------------------------------------------
# Encoder-I backbone pretraining
# ---------------------------------------------------------------------------


def pretrain_backbone(
    images: Sequence[np.ndarray],
    epochs: int = 60,
    batch_size: int = 8,
    lr: float = 1e-3,
    seed: int = 0,
) -> dict[str, np.ndarray]:
    """Self-supervised appearance pretraining of the Encoder-I trunk.

    Trains the truncated backbone plus a throwaway upsampling head to
    reconstruct its input images from the stride-4 feature map, then returns
    the trunk weights alone. This is the offline stand-in for published
    classifier weights: the frozen trunk afterwards carries an appearance
    prior learned on data disjoint from any evaluation scene. Batch norms are
    kept in eval mode so the frozen statistics match later inference exactly.
    """
    from .renderer import IMAGENET_MEAN, IMAGENET_STD, _build_trunk

    if len(images) == 0:
        raise ValueError("no pretraining images")
    torch.manual_seed(seed)
    mean = torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
    std = torch.tensor(IMAGENET_STD).view(1, 3, 1, 1)
    trunk = _build_trunk()
    trunk.eval()  # BN uses (identity) running stats; affine params still learn
    head = nn.Sequential(
        nn.Conv2d(256, 64, 3, padding=1),
        nn.ReLU(inplace=True),
        nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False),
        nn.Conv2d(64, 32, 3, padding=1),
        nn.ReLU(inplace=True),
        nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False),
        nn.Conv2d(32, 3, 3, padding=1),
        nn.Sigmoid(),
    )
    data = torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2).contiguous()
    opt = torch.optim.Adam(list(trunk.parameters()) + list(head.parameters()), lr=lr)
    n = data.shape[0]
    for epoch in range(epochs):
        order = np.random.default_rng([seed, epoch]).permutation(n)
        for lo in range(0, n, batch_size):
            idx = torch.from_numpy(order[lo : lo + batch_size].copy())
            batch = data[idx]
            recon = head(trunk((batch - mean) / std))
            loss = (recon - batch).abs().mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
    return {k: v.detach().cpu().numpy().copy() for k, v in trunk.state_dict().items()}


# ---------------------------------------------------------------------------
# Ablations
# ---------------------------------------------------------------------------


class AblationAxis(str, Enum):
    EMBEDDING_VARIANTS = "embedding"
    ENCODER1 = "encoder1"


# Table row order mirrors the published ablations.
EMBEDDING_ABLATION_ORDER = (
    EmbeddingVariant.MLP_ONLY,
    EmbeddingVariant.NORM_ONLY,
    EmbeddingVariant.NORM_POSENC,
    EmbeddingVariant.NORM_MLP,
    EmbeddingVariant.FULL,
)
ENCODER1_ABLATION_ORDER = (Encoder1Kind.PRETRAINED_RESNET, Encoder1Kind.NONE)


@dataclass
class AblationRow:
    name: str
    report: Optional[MetricsReport]
    error: Optional[str] = None


@dataclass
class AblationTable:
    axis: str
    rows: list[AblationRow]
    meta: dict

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "meta": self.meta,
            "rows": [
                {
                    "name": r.name,
                    "report": r.report.to_dict() if r.report else None,
                    "error": r.error,
                }
                for r in self.rows
            ],
        }


def _config_with_variant(cfg: ModelConfig, axis: AblationAxis, value) -> ModelConfig:
    d = cfg.to_dict()
    if axis == AblationAxis.EMBEDDING_VARIANTS:
        d["embedding"]["variant"] = EmbeddingVariant(value).value
    else:
        d["encoder1"] = Encoder1Kind(value).value
    return ModelConfig.from_dict(d)


def run_ablation(
    cfg: TrainConfig,
    axis: AblationAxis | str,
    train_samples: Sequence[Sample],
    val_samples: Sequence[Sample],
    protocol: EvalProtocol = EvalProtocol.DIRECT,
    on_record: Optional[Callable[[TrainLogRecord], None]] = None,
    pretrained: str = "auto",
) -> AblationTable:
    """Train every variant along one axis under an identical budget and seed.

    Each row trains from scratch on the same data for the same epochs, then
    evaluates on the held-out set. A failing variant contributes an error row
    without stopping the others.
    """
    axis = AblationAxis(axis)
    values = (
        EMBEDDING_ABLATION_ORDER
        if axis == AblationAxis.EMBEDDING_VARIANTS
        else ENCODER1_ABLATION_ORDER
    )
    shared_meta = {
        "dataset_fingerprint": dataset_fingerprint(train_samples),
        "val_fingerprint": dataset_fingerprint(val_samples),
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "protocol": EvalProtocol(protocol).value,
    }
    rows: list[AblationRow] = []
    for value in values:
        name = value.value
        try:
            variant_cfg = TrainConfig.from_dict(
                {**cfg.to_dict(), "model": _config_with_variant(cfg.model, axis, value).to_dict()}
            )
            ckpt = train_stage(
                variant_cfg, train_samples, on_record=on_record, pretrained=pretrained
            )
            model = model_from_checkpoint(ckpt)
            report = evaluate_table(model, val_samples, protocol, dataset_id=name)
            report.meta.update(shared_meta, variant=name)
            rows.append(AblationRow(name=name, report=report))
        except Exception as exc:  # noqa: BLE001 - isolate per-variant failures
            warnings.warn(f"ablation variant {name} failed: {exc}", stacklevel=2)
            rows.append(AblationRow(name=name, report=None, error=str(exc)))
    return AblationTable(axis=axis.value, rows=rows, meta=shared_meta)
