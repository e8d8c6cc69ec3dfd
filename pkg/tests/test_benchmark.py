import numpy as np
import pytest

from viewsynth.benchmark import (
    LatencyReport,
    benchmark_latency,
    config_at_resolution,
    time_synthesis,
)
from viewsynth.checkpoint import checkpoint_from_model
from viewsynth.pose import PoseStats
from viewsynth.renderer import build_model

from conftest import tiny_model_config


def tiny_ckpt(size=16):
    stats = PoseStats(np.full(6, -0.1), np.full(6, 0.1))
    model = build_model(tiny_model_config(size, size), stats, seed=0)
    return checkpoint_from_model(model), model


def test_minimum_repeats_and_warmup_enforced():
    _, model = tiny_ckpt()
    with pytest.raises(ValueError, match=">= 30"):
        time_synthesis(model, repeats=10)
    with pytest.raises(ValueError, match=">= 5"):
        time_synthesis(model, warmup=1)


def test_one_row_per_requested_resolution():
    ckpt, _ = tiny_ckpt()
    report = benchmark_latency(ckpt, [16, 32], repeats=30, warmup=5)
    assert len(report.entries) == 2
    timed = report.entries[0]
    skipped = report.entries[1]
    assert timed.mean_s is not None and timed.measured == 30 and timed.warmup == 5
    assert timed.fps == int(1.0 / timed.mean_s)
    assert skipped.mean_s is None and "skipped" in skipped.note
    text = report.render_text()
    assert "16x16" in text and "32x32" in text and "skipped" in text


def test_rebuild_allows_other_resolutions():
    ckpt, _ = tiny_ckpt()
    report = benchmark_latency(ckpt, [32], repeats=30, warmup=5, allow_rebuild=True)
    entry = report.entries[0]
    assert entry.mean_s is not None
    assert "untrained" in entry.note


def test_config_at_resolution_rescales_grid():
    ckpt, _ = tiny_ckpt()
    cfg = config_at_resolution(ckpt.model_config, 32, 32)
    assert (cfg.height, cfg.width) == (32, 32)
    assert (cfg.embedding.grid_h, cfg.embedding.grid_w) == (4, 4)


def test_consecutive_runs_agree():
    _, model = tiny_ckpt()
    a = time_synthesis(model, repeats=30, warmup=5)
    b = time_synthesis(model, repeats=30, warmup=5)
    assert abs(a - b) / max(a, b) < 0.25


def test_report_round_trip_dict():
    ckpt, _ = tiny_ckpt()
    report = benchmark_latency(ckpt, [16], repeats=30, warmup=5)
    d = report.to_dict()
    assert d["entries"][0]["resolution"] == [16, 16]
    assert d["entries"][0]["measured"] == 30
