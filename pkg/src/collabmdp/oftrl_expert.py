"""Per-state optimistic FTRL with the entropy regularizer.

R(w) = -sum_a w(a) log w(a) is concave with -R 1-strongly convex in l1 on the
simplex, so argmax_w  score . w + R(w)/eps  is the softmax of eps * score.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Regularizer:
    n_actions: int
    kind: str = "entropy"

    def __post_init__(self):
        if self.kind != "entropy":
            raise ValueError(f"unsupported regularizer kind {self.kind!r}")
        if self.n_actions < 1:
            raise ValueError("n_actions must be >= 1")

    @property
    def delta_R(self) -> float:
        """sup R - inf R over the simplex."""
        return math.log(self.n_actions)

    def value(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(w > 0, w * np.log(w), 0.0)
        return -terms.sum(axis=-1)


def oftrl_argmax(score, epsilon: float, reg: Regularizer | None = None) -> np.ndarray:
    """Softmax of epsilon * score along the last axis (max-subtracted)."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    score = np.asarray(score, dtype=float)
    if not np.isfinite(score).all():
        raise ValueError("score must be finite")
    if reg is not None and score.shape[-1] != reg.n_actions:
        raise ValueError(f"score has {score.shape[-1]} actions, regularizer {reg.n_actions}")
    z = epsilon * score
    z = z - z.max(axis=-1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


def cold_start(reg: Regularizer, n_a1: int | None = None) -> np.ndarray:
    """argmax of R alone: the uniform distribution."""
    n = reg.n_actions if n_a1 is None else n_a1
    if n < 1:
        raise ValueError("n_a1 must be >= 1")
    return np.full(n, 1.0 / n)


def oftrl_objective(score, w, epsilon: float, reg: Regularizer) -> np.ndarray:
    """score . w + R(w) / epsilon."""
    return np.sum(np.asarray(score) * np.asarray(w), axis=-1) + reg.value(w) / epsilon
