"""Datasets: procedural synthetic scenes and light-field sub-aperture grids.

The synthetic generator stands in for large-scale render farms at desk
scale: a z-buffered pinhole rasterizer over textured fronto-parallel planes
gives geometrically exact ground truth for arbitrary 6-DoF target poses,
bitwise reproducible from a seed.

Light fields are N x M grids of sub-aperture views; the center view acts as
the synthesis input and every grid cell becomes a planar-translation target
(x = column offset, y = row offset, z = 0, rotations 0).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .pose import Pose6D, PoseStats, compute_pose_stats


@dataclass
class Sample:
    """One training/evaluation triplet: source view, relative target pose, target view."""

    source_image: np.ndarray  # H x W x 3 float32 in [0, 1]
    source_pose: Pose6D
    target_pose: Pose6D
    target_image: np.ndarray

    def __post_init__(self) -> None:
        for name in ("source_image", "target_image"):
            img = getattr(self, name)
            if img.ndim != 3 or img.shape[2] != 3:
                raise ValueError(f"{name} must be H x W x 3")
            if not np.isfinite(img).all():
                raise ValueError(f"{name} contains non-finite values")


# ---------------------------------------------------------------------------
# Procedural scene + pinhole renderer
# ---------------------------------------------------------------------------


@dataclass
class Plane:
    """Fronto-parallel textured rectangle at world depth z."""

    z: float
    center: tuple[float, float]
    half_size: tuple[float, float]
    base_color: np.ndarray              # (3,)
    grating_freq: np.ndarray            # (K,) cycles per scene unit
    grating_angle: np.ndarray           # (K,) radians
    grating_phase: np.ndarray           # (K,)
    grating_amp: np.ndarray             # (K, 3) per-channel amplitude

    def shade(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Analytic texture at world coordinates; smooth and band-limited."""
        u = x - self.center[0]
        v = y - self.center[1]
        acc = np.zeros(x.shape + (3,), dtype=np.float32)
        for k in range(len(self.grating_freq)):
            phase = 2.0 * math.pi * self.grating_freq[k] * (
                u * math.cos(self.grating_angle[k]) + v * math.sin(self.grating_angle[k])
            ) + self.grating_phase[k]
            acc += np.sin(phase)[..., None].astype(np.float32) * self.grating_amp[k]
        shade = 0.62 + acc / max(len(self.grating_freq), 1)
        return np.clip(self.base_color * shade, 0.0, 1.0).astype(np.float32)


@dataclass
class Scene:
    planes: list[Plane]   # any order; rendering z-buffers


def rotation_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Camera-to-world rotation: roll about +z after pitch about +x after yaw about +y."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    rz = np.array([[cr, -sr, 0], [sr, cr, 0], [0, 0, 1]])
    return rz @ rx @ ry


def focal_length(width: int, fov_deg: float) -> float:
    return 0.5 * width / math.tan(math.radians(fov_deg) / 2.0)


def render_scene(
    scene: Scene,
    pose: Pose6D,
    height: int,
    width: int,
    fov_deg: float = 55.0,
) -> np.ndarray:
    """Ray-cast the scene from a 6-DoF camera pose; exact per-pixel hits.

    The camera at the identity pose sits at the origin looking along +z.
    Returns an H x W x 3 float32 image in [0, 1].
    """
    f = focal_length(width, fov_deg)
    u = (np.arange(width, dtype=np.float64) + 0.5 - width / 2.0) / f
    v = (np.arange(height, dtype=np.float64) + 0.5 - height / 2.0) / f
    uu, vv = np.meshgrid(u, v)
    dirs_cam = np.stack([uu, vv, np.ones_like(uu)], axis=-1)  # (H, W, 3)
    rot = rotation_matrix(pose.yaw, pose.pitch, pose.roll)
    dirs = dirs_cam @ rot.T
    origin = np.array([pose.x, pose.y, pose.z])

    img = np.zeros((height, width, 3), dtype=np.float32)
    zbuf = np.full((height, width), np.inf)
    dz = dirs[..., 2]
    for plane in scene.planes:
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (plane.z - origin[2]) / dz
        hit = (t > 1e-6) & np.isfinite(t)
        if not hit.any():
            continue
        x = origin[0] + t * dirs[..., 0]
        y = origin[1] + t * dirs[..., 1]
        inside = (
            hit
            & (np.abs(x - plane.center[0]) <= plane.half_size[0])
            & (np.abs(y - plane.center[1]) <= plane.half_size[1])
            & (t < zbuf)
        )
        if not inside.any():
            continue
        img[inside] = plane.shade(x[inside], y[inside])
        zbuf[inside] = t[inside]
    return img


class PoseFrame(str, Enum):
    """Convention for the stored target pose of generated samples.

    RELATIVE: the target pose is the offset from the source camera (source
    pose is the identity). ABSOLUTE: poses are world coordinates; initial
    camera positions are spread laterally over ``position_spread`` scene
    units, so raw pose ranges vary the way multi-scene captures do and
    normalization actually has work to do.
    """

    RELATIVE = "relative"
    ABSOLUTE = "absolute"


@dataclass
class SyntheticSceneSpec:
    """Deterministic recipe for a procedural dataset.

    ``volume_edge`` is the edge length of the cubical camera volume the target
    offsets are drawn from (the 20 cm analog); source views sit at
    ``initial_positions`` random spots and each contributes
    ``samples_per_position`` target views.
    """

    seed: int = 0
    height: int = 64
    width: int = 64
    volume_edge: float = 0.2
    initial_positions: int = 4
    samples_per_position: int = 16
    object_count: int = 7
    texture_frequency: float = 1.5
    rotation_range: float = 0.08  # radians, per rotation component
    depth_range: tuple[float, float] = (2.0, 6.0)
    fov_deg: float = 55.0
    pose_frame: PoseFrame = PoseFrame.RELATIVE
    position_spread: float = 0.0  # lateral spread of initial positions (absolute mode)
    # translation of the world frame (absolute mode): stored coordinates are
    # camera positions plus this offset, the way arbitrary capture/scene
    # coordinate systems place cameras far from the origin
    pose_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        self.pose_frame = PoseFrame(self.pose_frame)
        self.pose_offset = tuple(float(v) for v in self.pose_offset)

    def validate(self) -> None:
        if self.volume_edge <= 0:
            raise ValueError("degenerate volume")
        if self.height < 16 or self.width < 16:
            raise ValueError("resolution too small")
        if self.initial_positions < 1 or self.samples_per_position < 1:
            raise ValueError("need at least one position and one sample")
        if self.object_count < 1:
            raise ValueError("need at least one object")
        if self.depth_range[0] <= 0 or self.depth_range[1] <= self.depth_range[0]:
            raise ValueError("invalid depth range")
        if self.position_spread < 0:
            raise ValueError("position spread must be >= 0")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "height": self.height,
            "width": self.width,
            "volume_edge": self.volume_edge,
            "initial_positions": self.initial_positions,
            "samples_per_position": self.samples_per_position,
            "object_count": self.object_count,
            "texture_frequency": self.texture_frequency,
            "rotation_range": self.rotation_range,
            "depth_range": list(self.depth_range),
            "fov_deg": self.fov_deg,
            "pose_frame": self.pose_frame.value,
            "position_spread": self.position_spread,
            "pose_offset": list(self.pose_offset),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSceneSpec":
        d = dict(d)
        if "depth_range" in d:
            d["depth_range"] = tuple(d["depth_range"])
        if "pose_offset" in d:
            d["pose_offset"] = tuple(d["pose_offset"])
        return cls(**d)


def build_scene(spec: SyntheticSceneSpec, rng: np.random.Generator) -> Scene:
    """Seeded scene: a far backdrop plus floating textured panels at mixed depths."""
    z_near, z_far = spec.depth_range
    tan_half = math.tan(math.radians(spec.fov_deg) / 2.0)
    planes: list[Plane] = []

    def make_plane(z: float, center, half_size) -> Plane:
        k = 3
        return Plane(
            z=z,
            center=tuple(center),
            half_size=tuple(half_size),
            base_color=rng.uniform(0.25, 0.95, size=3).astype(np.float32),
            grating_freq=rng.uniform(0.5, 1.6, size=k) * spec.texture_frequency / max(z_near, 1.0),
            grating_angle=rng.uniform(0, math.pi, size=k),
            grating_phase=rng.uniform(0, 2 * math.pi, size=k),
            grating_amp=rng.uniform(0.12, 0.38, size=(k, 3)).astype(np.float32),
        )

    backdrop_z = z_far * 1.4
    extent = backdrop_z * tan_half * 3.0 + spec.position_spread
    planes.append(make_plane(backdrop_z, (0.0, 0.0), (extent, extent)))
    # objects cover the union of viewing frusta over the camera spread
    lateral = spec.position_spread / 2.0
    for _ in range(spec.object_count):
        z = rng.uniform(z_near, z_far)
        view_half = z * tan_half
        center = rng.uniform(-0.6 * view_half - lateral, 0.6 * view_half + lateral, size=2)
        half = rng.uniform(0.15, 0.5, size=2) * view_half
        planes.append(make_plane(z, center, half))
    return Scene(planes)


def generate_synthetic(spec: SyntheticSceneSpec) -> list[Sample]:
    """Deterministic dataset of (source view, target pose, target view).

    Translations are uniform in the cubical volume around each initial
    position, rotations uniform in the configured range, and the ground-truth
    target image is rendered from the exact target pose, so supervision is
    geometrically consistent. The stored pose is the offset from the source
    (RELATIVE, default) or the world-frame camera pose (ABSOLUTE, with
    initial positions spread laterally over ``position_spread``).
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    scene = build_scene(spec, rng)
    half = spec.volume_edge / 2.0
    absolute = spec.pose_frame == PoseFrame.ABSOLUTE
    offset = np.asarray(spec.pose_offset) if absolute else np.zeros(3)
    samples: list[Sample] = []
    for _ in range(spec.initial_positions):
        if absolute and spec.position_spread > 0:
            lateral = rng.uniform(-spec.position_spread / 2, spec.position_spread / 2, size=2)
            base = np.array([lateral[0], lateral[1], 0.0])
        else:
            base = rng.uniform(-half, half, size=3)
        base_pose = Pose6D(*base, 0.0, 0.0, 0.0)
        src = render_scene(scene, base_pose, spec.height, spec.width, spec.fov_deg)
        for _ in range(spec.samples_per_position):
            delta_t = rng.uniform(-half, half, size=3)
            delta_r = (
                rng.uniform(-spec.rotation_range, spec.rotation_range, size=3)
                if spec.rotation_range > 0
                else np.zeros(3)
            )
            tgt_pose = Pose6D(*(base + delta_t), *delta_r)
            tgt = render_scene(scene, tgt_pose, spec.height, spec.width, spec.fov_deg)
            samples.append(
                Sample(
                    source_image=src,
                    source_pose=Pose6D(*(base + offset)) if absolute else Pose6D(),
                    target_pose=(
                        Pose6D(*(base + delta_t + offset), *delta_r)
                        if absolute
                        else Pose6D(*delta_t, *delta_r)
                    ),
                    target_image=tgt,
                )
            )
    return samples


def dataset_pose_stats(samples: Sequence[Sample]) -> PoseStats:
    """Pose bounds over all target poses of a dataset (what training normalizes by)."""
    if len(samples) == 0:
        raise ValueError("no poses")
    return compute_pose_stats([s.target_pose for s in samples])


def dataset_fingerprint(samples: Sequence[Sample]) -> str:
    """Stable content hash used to assert ablation fairness."""
    h = hashlib.sha256()
    for s in samples:
        h.update(np.ascontiguousarray(s.source_image).tobytes())
        h.update(np.ascontiguousarray(s.target_image).tobytes())
        h.update(s.target_pose.as_array().tobytes())
    return h.hexdigest()[:16]


def split_samples(
    samples: Sequence[Sample], val_fraction: float, seed: int = 0
) -> tuple[list[Sample], list[Sample]]:
    """Deterministic train/validation split."""
    n = len(samples)
    n_val = max(1, int(round(n * val_fraction)))
    idx = np.random.default_rng(seed).permutation(n)
    val = [samples[i] for i in idx[:n_val]]
    train = [samples[i] for i in idx[n_val:]]
    return train, val


# ---------------------------------------------------------------------------
# Light fields
# ---------------------------------------------------------------------------


class InputView(str, Enum):
    CENTER = "center"


@dataclass
class LightField:
    """Complete N x M sub-aperture grid of equally sized views."""

    views: np.ndarray  # (N, M, H, W, 3) float32
    baseline: float = 1.0

    def __post_init__(self) -> None:
        if self.views.ndim != 5 or self.views.shape[-1] != 3:
            raise ValueError("views must have shape (N, M, H, W, 3)")
        if self.baseline <= 0:
            raise ValueError("baseline must be positive")

    @property
    def grid(self) -> tuple[int, int]:
        return self.views.shape[0], self.views.shape[1]

    @property
    def resolution(self) -> tuple[int, int]:
        return self.views.shape[2], self.views.shape[3]


LF_VIEW_EXTENSIONS = ("png", "bmp", "tif", "tiff", "jpg", "jpeg")


def _view_name(row: int, col: int, ext: str = "png") -> str:
    return f"view_{row}_{col}.{ext}"


def _find_view(path: Path, row: int, col: int) -> Path | None:
    for ext in LF_VIEW_EXTENSIONS:
        p = path / _view_name(row, col, ext)
        if p.exists():
            return p
    return None


def load_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr


def save_image(img: np.ndarray, path: str | Path) -> None:
    arr = np.clip(np.asarray(img), 0.0, 1.0)
    Image.fromarray((arr * 255.0).round().astype(np.uint8)).save(path)


def load_light_field(path: str | Path, grid: tuple[int, int], baseline: float = 1.0) -> LightField:
    """Load a directory of ``view_{row}_{col}.<ext>`` files into a complete grid."""
    path = Path(path)
    n, m = grid
    rows = []
    for r in range(n):
        row_views = []
        for c in range(m):
            p = _find_view(path, r, c)
            if p is None:
                raise FileNotFoundError(
                    f"missing sub-aperture {r}_{c} (looked for "
                    f"{path / _view_name(r, c, '{' + ','.join(LF_VIEW_EXTENSIONS) + '}')})"
                )
            row_views.append(load_image(p))
        rows.append(np.stack(row_views))
    views = np.stack(rows)
    shapes = {v.shape for v in views.reshape(-1, *views.shape[2:])}
    if len(shapes) != 1:
        raise ValueError(f"sub-aperture views disagree in resolution: {shapes}")
    return LightField(views=views, baseline=baseline)


def save_light_field(lf: LightField, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    n, m = lf.grid
    for r in range(n):
        for c in range(m):
            save_image(lf.views[r, c], path / _view_name(r, c))


def lf_to_samples(lf: LightField, input_view: InputView | str = InputView.CENTER) -> list[Sample]:
    """One sample per grid cell, sourced from the center view.

    Target poses use the planar two-axis convention: x = column offset times
    the baseline, y = row offset times the baseline, z and rotations zero.
    """
    if InputView(input_view) != InputView.CENTER:
        raise ValueError(f"unsupported input view {input_view!r}")
    n, m = lf.grid
    if n % 2 == 0 or m % 2 == 0:
        raise ValueError(f"center input view requires odd grid dimensions, got {n}x{m}")
    cr, cc = n // 2, m // 2
    center = lf.views[cr, cc]
    samples = []
    for r in range(n):
        for c in range(m):
            pose = Pose6D(x=(c - cc) * lf.baseline, y=(r - cr) * lf.baseline)
            samples.append(
                Sample(
                    source_image=center,
                    source_pose=Pose6D(),
                    target_pose=pose,
                    target_image=lf.views[r, c],
                )
            )
    return samples


def make_synthetic_light_field(
    seed: int,
    grid: tuple[int, int] = (7, 7),
    height: int = 64,
    width: int = 64,
    baseline: float = 0.01,
    spec: SyntheticSceneSpec | None = None,
) -> LightField:
    """Render a synthetic light field: camera translated on a regular x/y grid."""
    if spec is None:
        spec = SyntheticSceneSpec(seed=seed, height=height, width=width)
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    scene = build_scene(spec, rng)
    n, m = grid
    cr, cc = (n - 1) / 2.0, (m - 1) / 2.0
    views = np.zeros((n, m, spec.height, spec.width, 3), dtype=np.float32)
    for r in range(n):
        for c in range(m):
            pose = Pose6D(x=(c - cc) * baseline, y=(r - cr) * baseline)
            views[r, c] = render_scene(scene, pose, spec.height, spec.width, spec.fov_deg)
    return LightField(views=views, baseline=baseline)


# ---------------------------------------------------------------------------
# Disk round trip for synthetic datasets (manifest + PNG pairs)
# ---------------------------------------------------------------------------


def save_samples(samples: Sequence[Sample], path: str | Path, meta: dict | None = None) -> None:
    """Materialize samples as PNG pairs plus a JSON manifest."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(samples):
        src_name = f"sample_{i:04d}_source.png"
        tgt_name = f"sample_{i:04d}_target.png"
        save_image(s.source_image, path / src_name)
        save_image(s.target_image, path / tgt_name)
        entries.append(
            {
                "source": src_name,
                "target": tgt_name,
                "source_pose": s.source_pose.to_dict(),
                "target_pose": s.target_pose.to_dict(),
            }
        )
    manifest = {
        "format": "viewsynth-samples-v1",
        "resolution": list(samples[0].source_image.shape[:2]) if samples else None,
        "samples": entries,
        "meta": meta or {},
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_samples(path: str | Path) -> list[Sample]:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("format") != "viewsynth-samples-v1":
        raise ValueError(f"unrecognized dataset manifest at {path}")
    samples = []
    for e in manifest["samples"]:
        samples.append(
            Sample(
                source_image=load_image(path / e["source"]),
                source_pose=Pose6D.from_dict(e["source_pose"]),
                target_pose=Pose6D.from_dict(e["target_pose"]),
                target_image=load_image(path / e["target"]),
            )
        )
    return samples
