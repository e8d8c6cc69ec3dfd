"""Position-aware view synthesis from a single image.

Core pipeline: a 6-DoF target pose is normalized, frequency-encoded and
reprojected into a positional feature map; a dual-encoder rendering network
conditions on that map plus the source image and decodes the novel view.
Training combines L1, MS-SSIM, focal frequency and (optionally) perceptual
losses over a staged curriculum. The package also ships evaluation metrics,
a latency benchmark, a checkpoint format, a CLI and a streaming HTTP service.
"""

from .pose import (
    Pose6D,
    PoseStats,
    NormalizedPose,
    compute_pose_stats,
    normalize_pose,
)
from .embedding import EmbeddingConfig, EmbeddingVariant, PoseEmbedding, embed
from .renderer import (
    Encoder1Kind,
    ModelConfig,
    ModelVariant,
    SynthesisNetwork,
    build_model,
)
from .losses import LossConfig, LossReport, total_loss
from .metrics import EvalProtocol, MetricsReport, evaluate_table, ms_ssim, psnr, ssim
from .data import (
    LightField,
    Sample,
    SyntheticSceneSpec,
    generate_synthetic,
    lf_to_samples,
    load_light_field,
)
from .checkpoint import (
    Checkpoint,
    checkpoint_from_model,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
)
from .training import (
    AblationAxis,
    StageSpec,
    TrainConfig,
    lr_at,
    run_ablation,
    run_curriculum,
    train_stage,
)
from .benchmark import LatencyReport, benchmark_latency

__version__ = "0.1.0"

__all__ = [
    "Pose6D",
    "PoseStats",
    "NormalizedPose",
    "compute_pose_stats",
    "normalize_pose",
    "EmbeddingConfig",
    "EmbeddingVariant",
    "PoseEmbedding",
    "embed",
    "Encoder1Kind",
    "ModelConfig",
    "ModelVariant",
    "SynthesisNetwork",
    "build_model",
    "LossConfig",
    "LossReport",
    "total_loss",
    "EvalProtocol",
    "MetricsReport",
    "evaluate_table",
    "ms_ssim",
    "psnr",
    "ssim",
    "LightField",
    "Sample",
    "SyntheticSceneSpec",
    "generate_synthetic",
    "lf_to_samples",
    "load_light_field",
    "Checkpoint",
    "checkpoint_from_model",
    "load_checkpoint",
    "model_from_checkpoint",
    "save_checkpoint",
    "AblationAxis",
    "StageSpec",
    "TrainConfig",
    "lr_at",
    "run_ablation",
    "run_curriculum",
    "train_stage",
    "LatencyReport",
    "benchmark_latency",
]
