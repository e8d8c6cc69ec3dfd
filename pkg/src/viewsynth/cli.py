"""Command-line interface: train / curriculum / evaluate / ablate / benchmark / serve / make-data.

Every subcommand accepts a JSON config via ``--config`` (or the
``VIEWSYNTH_CONFIG`` environment variable) plus targeted flag overrides.
Exit code 0 on success; any failure prints a one-line diagnostic to stderr
and returns nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import data as data_mod
from .benchmark import benchmark_latency
from .checkpoint import load_checkpoint, save_checkpoint
from .metrics import EvalProtocol, evaluate_table, render_table
from .training import (
    AblationAxis,
    TrainConfig,
    make_desk_datasets,
    run_ablation,
    run_curriculum,
    train_stage,
)


def _load_config(path: str | None) -> dict:
    path = path or os.environ.get("VIEWSYNTH_CONFIG")
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    return json.loads(p.read_text())


def _train_config(args, defaults: dict | None = None) -> TrainConfig:
    raw = _load_config(args.config)
    if defaults:
        raw = {**defaults, **raw}
    if "model" not in raw:
        raw["model"] = {
            "height": getattr(args, "height", None) or 64,
            "width": getattr(args, "width", None) or 64,
            "variant": getattr(args, "variant", None) or "lite",
        }
    for flag in ("epochs", "seed", "batch_size", "lr"):
        v = getattr(args, flag, None)
        if v is not None:
            raw[flag] = v
    for flag in ("height", "width", "variant"):
        v = getattr(args, flag, None)
        if v is not None:
            raw["model"][flag] = v
    return TrainConfig.from_dict(raw)


def _log_writer(path: str | None):
    if path is None:
        return None
    f = open(path, "a", encoding="utf-8")

    def write(record):
        f.write(json.dumps(record.to_dict()) + "\n")
        f.flush()

    return write


def _parse_res_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _cmd_make_data(args) -> int:
    out = Path(args.out)
    if args.kind == "synthetic":
        spec = data_mod.SyntheticSceneSpec(
            seed=args.seed,
            height=args.height,
            width=args.width,
            initial_positions=args.initial_positions,
            samples_per_position=args.samples_per_position,
            pose_frame=args.pose_frame,
            position_spread=args.position_spread,
        )
        samples = data_mod.generate_synthetic(spec)
        data_mod.save_samples(samples, out, meta={"spec": spec.to_dict()})
        print(f"wrote {len(samples)} samples to {out}")
    else:
        n, m = (int(v) for v in args.grid.split("x"))
        lf = data_mod.make_synthetic_light_field(
            args.seed, (n, m), height=args.height, width=args.width, baseline=args.baseline
        )
        data_mod.save_light_field(lf, out)
        print(f"wrote {n}x{m} light field to {out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _train_config(args)
    samples = data_mod.load_samples(args.data)
    ckpt = train_stage(cfg, samples, on_record=_log_writer(args.log))
    save_checkpoint(ckpt, args.out)
    print(f"trained {len(samples)} samples for {cfg.epochs} epochs -> {args.out}")
    return 0


def _cmd_curriculum(args) -> int:
    cfg = _train_config(args)
    if not cfg.stages:
        from .training import StageSpec

        cfg.stages = [
            StageSpec("lf_small", max(1, cfg.epochs // 3)),
            StageSpec("lf_wide", max(1, cfg.epochs // 3), lr_override=cfg.lr / 5),
            StageSpec("synthetic_cube", max(1, cfg.epochs // 3), lr_override=cfg.lr / 5),
        ]
    datasets = {}
    desk = None
    for spec in cfg.stages:
        root = Path(args.data_root) / spec.dataset_id if args.data_root else None
        if root is not None and root.exists():
            datasets[spec.dataset_id] = data_mod.load_samples(root)
        else:
            if desk is None:
                desk = make_desk_datasets(cfg.seed, cfg.model.height, cfg.model.width)
            if spec.dataset_id not in desk:
                raise ValueError(f"cannot resolve dataset {spec.dataset_id!r}")
            datasets[spec.dataset_id] = desk[spec.dataset_id]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def on_stage(name, ckpt):
        save_checkpoint(ckpt, out / f"stage_{name}.npz")
        print(f"stage {name} complete")

    result = run_curriculum(cfg, datasets, on_record=_log_writer(args.log), on_stage=on_stage)
    save_checkpoint(result.final, out / "final.npz")
    print(f"curriculum complete: {len(result.stage_checkpoints)} stages -> {out / 'final.npz'}")
    return 0


def _cmd_evaluate(args) -> int:
    from .checkpoint import model_from_checkpoint

    ckpt = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    samples = data_mod.load_samples(args.data)
    report = evaluate_table(
        model,
        samples,
        EvalProtocol(args.protocol),
        dataset_id=Path(args.data).name,
        pose_frame=args.pose_frame,
    )
    print(render_table([report]))
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2))
    return 0


def _cmd_ablate(args) -> int:
    cfg = _train_config(args)
    if args.data:
        samples = data_mod.load_samples(args.data)
    else:
        spec = data_mod.SyntheticSceneSpec(
            seed=cfg.seed, height=cfg.model.height, width=cfg.model.width
        )
        samples = data_mod.generate_synthetic(spec)
    train, val = data_mod.split_samples(samples, args.val_fraction, seed=cfg.seed)
    table = run_ablation(cfg, AblationAxis(args.axis), train, val)
    reports = [r.report for r in table.rows if r.report is not None]
    print(render_table(reports, label="Variant"))
    for row in table.rows:
        if row.error:
            print(f"variant {row.name} failed: {row.error}", file=sys.stderr)
    Path(args.out).write_text(json.dumps(table.to_dict(), indent=2))
    print(f"wrote {len(table.rows)}-row ablation table to {args.out}")
    return 0


def _cmd_benchmark(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    report = benchmark_latency(
        ckpt,
        _parse_res_list(args.resolutions),
        repeats=args.repeats,
        warmup=args.warmup,
        allow_rebuild=args.allow_rebuild,
    )
    print(report.render_text())
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2))
    return 0


def _cmd_serve(args) -> int:
    from .checkpoint import model_from_checkpoint
    from .service import serve

    ckpt = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    if args.frontend and not Path(args.frontend).exists():
        raise FileNotFoundError(f"frontend directory not found: {args.frontend}")
    print(f"serving {ckpt.model_config.variant.value} checkpoint on {args.host}:{args.port}")
    serve(model, host=args.host, port=args.port, frontend_dir=args.frontend)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viewsynth",
        description="Position-aware single-image view synthesis toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_train_flags(p):
        p.add_argument("--config", help="JSON config file (or VIEWSYNTH_CONFIG env var)")
        p.add_argument("--epochs", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--height", type=int)
        p.add_argument("--width", type=int)
        p.add_argument("--variant", choices=["full", "lite"])
        p.add_argument("--log", help="append JSONL training records here")

    p = sub.add_parser("make-data", help="generate a synthetic dataset or light field")
    p.add_argument("--kind", choices=["synthetic", "light-field"], default="synthetic")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--grid", default="7x7")
    p.add_argument("--baseline", type=float, default=0.01)
    p.add_argument("--initial-positions", dest="initial_positions", type=int, default=4)
    p.add_argument("--samples-per-position", dest="samples_per_position", type=int, default=16)
    p.add_argument("--pose-frame", dest="pose_frame", choices=["relative", "absolute"],
                   default="relative")
    p.add_argument("--position-spread", dest="position_spread", type=float, default=0.0)
    p.set_defaults(func=_cmd_make_data)

    p = sub.add_parser("train", help="train one stage on a sample directory")
    add_train_flags(p)
    p.add_argument("--data", required=True, help="sample directory (make-data output)")
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("curriculum", help="run the staged training curriculum")
    add_train_flags(p)
    p.add_argument("--data-root", help="directory holding one subdir per stage dataset id")
    p.add_argument("--out", required=True, help="output directory for stage checkpoints")
    p.set_defaults(func=_cmd_curriculum)

    p = sub.add_parser("evaluate", help="quality table for a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument(
        "--protocol", choices=[v.value for v in EvalProtocol], default="direct"
    )
    p.add_argument(
        "--pose-frame", dest="pose_frame", choices=["relative", "absolute"],
        default="relative", help="round-trip back-query convention"
    )
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="train and evaluate every variant along one axis")
    add_train_flags(p)
    p.add_argument("--axis", choices=[v.value for v in AblationAxis], required=True)
    p.add_argument("--data", help="sample directory; defaults to a seeded synthetic set")
    p.add_argument("--val-fraction", dest="val_fraction", type=float, default=0.25)
    p.add_argument("--out", required=True, help="write the table JSON here")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("benchmark", help="latency table over resolutions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--resolutions", default="256,512")
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--allow-rebuild", action="store_true",
                   help="time untrained rebuilds at non-checkpoint resolutions")
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("serve", help="serve a checkpoint over HTTP + WebSocket")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--frontend", help="serve this directory (e.g. frontend/) at /")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # noqa: BLE001 - single-line CLI diagnostic
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
