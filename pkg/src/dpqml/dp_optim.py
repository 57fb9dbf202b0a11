"""Micro-batch clipping, Gaussian noise and RMSprop updates.

Non-private training is the degenerate configuration ``clip_S=inf``,
``noise_multiplier=0``, ``microbatch_size=batch``; it runs through exactly the
same code and therefore reproduces a plain RMSprop loop bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

CLIP_FUDGE = 1e-6


@dataclass(frozen=True)
class PrivacyConfig:
    clip_S: float = 1.0
    noise_multiplier: float = 1.0
    microbatch_size: int = 1
    delta: float = 1e-5

    def __post_init__(self):
        if not self.clip_S > 0:
            raise ValueError("clip bound must be positive")
        if self.noise_multiplier < 0:
            raise ValueError("noise multiplier must be non-negative")
        if self.noise_multiplier > 0 and math.isinf(self.clip_S):
            raise ValueError("noise needs a finite clip bound")
        if self.microbatch_size < 1:
            raise ValueError("microbatch size must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @classmethod
    def disabled(cls, batch_size: int) -> "PrivacyConfig":
        """Configuration under which the DP update is plain RMSprop."""
        return cls(clip_S=math.inf, noise_multiplier=0.0, microbatch_size=batch_size, delta=0.5)


@dataclass(frozen=True)
class OptimizerState:
    lr: float = 0.05
    alpha: float = 0.9
    momentum: float = 0.5
    eps: float = 1e-8
    sq_avg: np.ndarray | None = None
    momentum_buf: np.ndarray | None = None
    steps: int = 0


def clip_gradient(g, clip_S: float) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    norm = float(np.linalg.norm(g))
    return g * min(clip_S / (norm + CLIP_FUDGE), 1.0)


def accumulate_and_noise(
    clipped: Sequence[np.ndarray],
    cfg: PrivacyConfig,
    minibatch_n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sum clipped micro-batch gradients, add one Gaussian draw, rescale by m/n."""
    if len(clipped) == 0:
        raise ValueError("nothing to accumulate")
    total = np.sum(np.stack([np.asarray(c, dtype=np.float64) for c in clipped]), axis=0)
    if cfg.noise_multiplier > 0:
        total = total + rng.normal(0.0, cfg.noise_multiplier * cfg.clip_S, size=total.shape)
    return (cfg.microbatch_size / minibatch_n) * total


def rmsprop_step(state: OptimizerState, theta, g) -> tuple[np.ndarray, OptimizerState]:
    theta = np.asarray(theta, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if theta.shape != g.shape:
        raise ValueError(f"parameter shape {theta.shape} != gradient shape {g.shape}")
    sq_avg = g * g if state.sq_avg is None else state.sq_avg
    if sq_avg.shape != g.shape:
        raise ValueError("optimizer state does not match the parameter vector")
    buf = np.zeros_like(theta) if state.momentum_buf is None else state.momentum_buf

    sq_avg = state.alpha * sq_avg + (1.0 - state.alpha) * g * g
    buf = state.momentum * buf + g / (np.sqrt(sq_avg) + state.eps)
    theta = theta - state.lr * buf
    return theta, replace(state, sq_avg=sq_avg, momentum_buf=buf, steps=state.steps + 1)


def microbatch_grads(per_example: np.ndarray, microbatch_size: int) -> np.ndarray:
    """Mean gradient of each consecutive micro-batch, shape ``(n/m, P)``."""
    n = per_example.shape[0]
    if n % microbatch_size:
        raise ValueError(f"microbatch size {microbatch_size} does not divide batch of {n}")
    return per_example.reshape(n // microbatch_size, microbatch_size, -1).mean(axis=1)


GradFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def dp_minibatch_update(
    params,
    X,
    y,
    grad_fn: GradFn,
    cfg: PrivacyConfig,
    opt_state: OptimizerState,
    rng: np.random.Generator,
) -> tuple[np.ndarray, OptimizerState]:
    """One private mini-batch step.

    ``grad_fn(params, X, y)`` returns per-example loss gradients ``(n, P)``;
    they are averaged within each micro-batch, clipped, accumulated with a
    single noise draw and fed to RMSprop.
    """
    n = len(y)
    if n == 0:
        raise ValueError("empty mini-batch")
    per_example = grad_fn(params, X, y)
    clipped = [clip_gradient(g, cfg.clip_S) for g in microbatch_grads(per_example, cfg.microbatch_size)]
    g_eff = accumulate_and_noise(clipped, cfg, n, rng)
    return rmsprop_step(opt_state, params, g_eff)
