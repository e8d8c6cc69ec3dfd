"""6-DoF camera poses and their normalization into the unit hypercube.

A pose is a raw 6-vector (x, y, z, yaw, pitch, roll): translation in scene
units, rotation in radians. Normalization maps each component into [0, 1]
using the componentwise min/max observed over a training set, so the same
bounds must travel with any trained model (they are stored in checkpoints).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

POSE_COMPONENTS = ("x", "y", "z", "yaw", "pitch", "roll")
POSE_DIM = 6


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Pose6D:
    """A 6-DoF camera pose: translation (meters) + yaw/pitch/roll (radians).

    Rotations are stored as given; no modular reduction is applied.
    """

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self) -> None:
        for name in POSE_COMPONENTS:
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"pose component {name!r} is not finite: {v!r}")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.x, self.y, self.z, self.yaw, self.pitch, self.roll],
            dtype=np.float64,
        )

    @classmethod
    def from_array(cls, a: Iterable[float]) -> "Pose6D":
        vals = [float(v) for v in a]
        if len(vals) != POSE_DIM:
            raise ValueError(f"expected {POSE_DIM} components, got {len(vals)}")
        return cls(*vals)

    def negated(self) -> "Pose6D":
        """Componentwise inverse offset, used by round-trip evaluation."""
        return Pose6D(*(-v for v in self.as_array()))

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in POSE_COMPONENTS}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose6D":
        return cls(**{name: float(d[name]) for name in POSE_COMPONENTS})


@dataclass(frozen=True)
class PoseStats:
    """Componentwise pose bounds over a training set (order: x,y,z,yaw,pitch,roll)."""

    p_min: np.ndarray
    p_max: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "p_min", _as_readonly(self.p_min))
        object.__setattr__(self, "p_max", _as_readonly(self.p_max))
        if self.p_min.shape != (POSE_DIM,) or self.p_max.shape != (POSE_DIM,):
            raise ValueError("pose stats must be 6-vectors")
        if not (np.isfinite(self.p_min).all() and np.isfinite(self.p_max).all()):
            raise ValueError("pose stats must be finite")
        if np.any(self.p_min > self.p_max):
            raise ValueError("p_min must be <= p_max componentwise")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PoseStats):
            return NotImplemented
        return bool(
            np.array_equal(self.p_min, other.p_min)
            and np.array_equal(self.p_max, other.p_max)
        )

    @property
    def span(self) -> np.ndarray:
        return self.p_max - self.p_min

    def contains(self, pose: Pose6D) -> bool:
        p = pose.as_array()
        return bool(np.all(p >= self.p_min) and np.all(p <= self.p_max))

    def center(self) -> Pose6D:
        return Pose6D.from_array((self.p_min + self.p_max) / 2.0)

    def to_dict(self) -> dict:
        return {"p_min": self.p_min.tolist(), "p_max": self.p_max.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PoseStats":
        return cls(np.asarray(d["p_min"]), np.asarray(d["p_max"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "PoseStats":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class NormalizedPose:
    """A pose mapped into [0,1]^6 by :func:`normalize_pose`.

    ``out_of_range`` flags inputs outside the stats bounds; such values are
    normalized by the same affine formula (leaving [0,1]) rather than being
    clamped, so mild extrapolation at inference stays usable.
    """

    values: np.ndarray
    out_of_range: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _as_readonly(self.values))
        if self.values.shape != (POSE_DIM,):
            raise ValueError("normalized pose must be a 6-vector")


def compute_pose_stats(poses: Sequence[Pose6D]) -> PoseStats:
    """Componentwise extrema over a non-empty pose sequence."""
    if len(poses) == 0:
        raise ValueError("no poses")
    arr = np.stack([p.as_array() for p in poses])
    return PoseStats(arr.min(axis=0), arr.max(axis=0))


def normalize_pose(pose: Pose6D, stats: PoseStats) -> NormalizedPose:
    """Affine map (p - p_min) / (p_max - p_min), componentwise.

    Degenerate components (zero span, e.g. a dataset with no roll variation)
    map to the constant 0.5 so downstream encodings stay well defined.
    """
    p = pose.as_array()
    span = stats.span
    degenerate = span == 0.0
    safe_span = np.where(degenerate, 1.0, span)
    out = (p - stats.p_min) / safe_span
    out[degenerate] = 0.5
    out_of_range = bool(np.any(out < 0.0) or np.any(out > 1.0))
    return NormalizedPose(out, out_of_range=out_of_range)
