"""Shared fixtures and finite-difference helpers."""

import os

# Keep unit tests deterministic and offline: never attempt a weight download.
os.environ.setdefault("VIEWSYNTH_PRETRAINED", "0")

import numpy as np
import pytest
import torch

from viewsynth.embedding import EmbeddingConfig
from viewsynth.pose import Pose6D, PoseStats
from viewsynth.renderer import ModelConfig


@pytest.fixture(scope="session")
def desk_stats() -> PoseStats:
    return PoseStats(np.array([-0.1] * 3 + [-0.05] * 3), np.array([0.1] * 3 + [0.05] * 3))


def micro_model_config(height: int = 32, width: int = 32) -> ModelConfig:
    """Smallest config that exercises every stage; used for gradient checks."""
    return ModelConfig(
        height=height,
        width=width,
        variant="lite",
        encoder1="none",
        embedding=EmbeddingConfig(
            height=height, width=width, m=2, grid_h=height // 8, grid_w=width // 8
        ),
        enc2_widths=(4, 6, 8),
        dec_widths=(8, 6, 4, 4),
        decoder_refine=False,
    )


def tiny_model_config(height: int = 16, width: int = 16, encoder1: str = "none") -> ModelConfig:
    """Fast config for training-loop tests."""
    return ModelConfig(
        height=height,
        width=width,
        variant="lite",
        encoder1=encoder1,
        embedding=EmbeddingConfig(height=height, width=width, m=4),
        enc2_widths=(8, 12, 16),
        dec_widths=(16, 12, 8, 8),
        decoder_refine=False,
    )


# Gradient-check tolerance: relative error < 1e-3 with a small absolute floor
# so near-zero entries don't inflate the ratio (torch.autograd.gradcheck
# semantics: |ad - fd| <= atol + rtol * |fd|).
GRAD_RTOL = 1e-3
GRAD_ATOL = 1e-7


def _grad_excess(ad: float, fd: float) -> float:
    return abs(ad - fd) / (GRAD_ATOL + GRAD_RTOL * max(abs(ad), abs(fd)))


def central_difference(f, params: list[torch.Tensor], n_probes: int = 6, h: float = 1e-5,
                       seed: int = 0):
    """Compare autograd gradients of scalar-valued ``f`` against central differences.

    Probes ``n_probes`` entries of every parameter tensor. Returns the worst
    tolerance ratio (< 1 means within rtol/atol). Parameters must be float64
    leaves with requires_grad set.
    """
    rng = np.random.default_rng(seed)
    for p in params:
        if p.grad is not None:
            p.grad = None
    value = f()
    value.backward()
    worst = 0.0
    for p in params:
        grad = p.grad
        assert grad is not None, "parameter did not receive a gradient"
        flat = p.data.view(-1)
        gflat = grad.view(-1)
        count = min(n_probes, flat.numel())
        for i in rng.choice(flat.numel(), size=count, replace=False):
            orig = flat[i].item()
            flat[i] = orig + h
            with torch.no_grad():
                hi = f().item()
            flat[i] = orig - h
            with torch.no_grad():
                lo = f().item()
            flat[i] = orig
            fd = (hi - lo) / (2 * h)
            worst = max(worst, _grad_excess(gflat[i].item(), fd))
    return worst


def grad_wrt_input(loss_fn, x: torch.Tensor, h: float = 1e-5, max_entries: int | None = None,
                   seed: int = 0) -> float:
    """Worst tolerance ratio between autograd and central differences w.r.t. ``x``."""
    x = x.clone().detach().requires_grad_(True)
    loss = loss_fn(x)
    loss.backward()
    grad = x.grad.clone()
    flat = x.data.view(-1)
    gflat = grad.view(-1)
    idx = np.arange(flat.numel())
    if max_entries is not None and max_entries < flat.numel():
        idx = np.random.default_rng(seed).choice(flat.numel(), size=max_entries, replace=False)
    worst = 0.0
    for i in idx:
        orig = flat[i].item()
        flat[i] = orig + h
        with torch.no_grad():
            hi = loss_fn(x).item()
        flat[i] = orig - h
        with torch.no_grad():
            lo = loss_fn(x).item()
        flat[i] = orig
        fd = (hi - lo) / (2 * h)
        worst = max(worst, _grad_excess(gflat[i].item(), fd))
    return worst
