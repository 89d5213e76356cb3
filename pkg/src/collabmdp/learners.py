"""Agent-1 learners: ExpRestart (periodic restarts) and ExpDRBias (averaged recency windows).

Both keep a ring buffer of the last Gamma Q tables.  At episode t the buffer holds
Q_{t-n}..Q_{t-1} with n = min(Gamma, t-1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bias_q import QTable
from .mdp_core import ConfigError, Policy
from .oftrl_expert import Regularizer, cold_start, oftrl_argmax

EXP_RESTART = "ExpRestart"
EXP_DRBIAS = "ExpDRBias"
ALGORITHMS = (EXP_RESTART, EXP_DRBIAS)


class MissingHistory(Exception):
    """A step needed a Q table the state does not hold."""


@dataclass(frozen=True)
class LearnerConfig:
    gamma: int
    epsilon: float | None = None
    algorithm: str = EXP_DRBIAS

    def __post_init__(self):
        if int(self.gamma) != self.gamma or self.gamma < 1:
            raise ConfigError(f"gamma must be a positive integer, got {self.gamma}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", self.gamma ** -0.25)
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")


@dataclass
class LearnerState:
    n_states: int
    n_a1: int
    gamma: int
    t: int = 1
    buf: np.ndarray = field(default=None, repr=False)
    count: int = 0  # Q tables observed so far, i.e. t - 1
    weights: np.ndarray | None = field(default=None, repr=False)  # w_{t,tau}, shape (Gamma, S, A1)

    def __post_init__(self):
        if self.buf is None:
            self.buf = np.zeros((self.gamma, self.n_states, self.n_a1))

    @property
    def n_held(self) -> int:
        return min(self.count, self.gamma)

    @property
    def q_window(self) -> np.ndarray:
        """Held Q tables, oldest first: Q_{t-n}, ..., Q_{t-1}."""
        n = self.n_held
        idx = (self.count - n + np.arange(n)) % self.gamma
        return self.buf[idx]

    @property
    def segment_start(self) -> int:
        return self.t - (self.t - 1) % self.gamma


def new_state(cfg: LearnerConfig, n_states: int, n_a1: int) -> LearnerState:
    return LearnerState(n_states, n_a1, cfg.gamma)


def observe(state: LearnerState, q_t) -> LearnerState:
    """Push Q_t (the table for the episode just played) and advance to t + 1."""
    q = q_t.q if isinstance(q_t, QTable) else np.asarray(q_t, dtype=float)
    if q.shape != (state.n_states, state.n_a1):
        raise ValueError(f"Q shape {q.shape} != ({state.n_states}, {state.n_a1})")
    state.buf[state.count % state.gamma] = q
    state.count += 1
    state.t += 1
    return state


def _check_history(state: LearnerState, cfg: LearnerConfig):
    if cfg.gamma != state.gamma:
        raise ConfigError(f"config gamma {cfg.gamma} != state gamma {state.gamma}")
    if state.count != state.t - 1:
        raise MissingHistory(f"episode {state.t} needs {state.t - 1} observed Q tables, have {state.count}")


def _uniform(state: LearnerState) -> np.ndarray:
    return np.tile(cold_start(Regularizer(state.n_a1)), (state.n_states, 1))


def exp_restart_step(state: LearnerState, cfg: LearnerConfig) -> Policy:
    """pi1_t: cold start at t = 1 mod Gamma, else OFTRL on the segment's Q sum plus Q_{t-1}."""
    _check_history(state, cfg)
    start = state.segment_start
    if state.t == start:
        return Policy(_uniform(state), 1)
    held = state.q_window[-(state.t - start):]
    score = held.sum(axis=0) + held[-1]
    return Policy(oftrl_argmax(score, cfg.epsilon), 1)


def drbias_weights(state: LearnerState, cfg: LearnerConfig) -> np.ndarray:
    """w_{t,tau} for tau = 1..Gamma as a (Gamma, S, A1) stack.

    Window tau sums Q_k for k = max(1, t - tau)..t-1; windows longer than the
    history all clip at k = 1 and coincide.
    """
    _check_history(state, cfg)
    if state.t == 1:
        return np.broadcast_to(_uniform(state), (cfg.gamma, state.n_states, state.n_a1)).copy()
    held = state.q_window
    n = held.shape[0]
    suffix = np.cumsum(held[::-1], axis=0)[::-1]  # suffix[j] = sum of held[j:]
    start = np.maximum(0, n - np.arange(1, cfg.gamma + 1))
    scores = suffix[start] + held[-1]
    return oftrl_argmax(scores, cfg.epsilon)


def exp_drbias_step(state: LearnerState, cfg: LearnerConfig) -> Policy:
    """pi1_t = (1/Gamma) sum_tau w_{t,tau}; stores the weights on the state."""
    w = drbias_weights(state, cfg)
    state.weights = w
    return Policy(w.mean(axis=0), 1)


def step(state: LearnerState, cfg: LearnerConfig) -> Policy:
    if cfg.algorithm == EXP_RESTART:
        return exp_restart_step(state, cfg)
    return exp_drbias_step(state, cfg)


def replay(q_history, cfg: LearnerConfig, keep_weights: bool = False):
    """Re-run a learner on logged Q tables Q_1..Q_T.

    Returns the (T, S, A1) policy stack and, if asked (ExpDRBias only), the
    (T, Gamma, S, A1) weight stack.
    """
    q_history = np.asarray(q_history, dtype=float)
    t_max, s, a = q_history.shape
    state = new_state(cfg, s, a)
    policies = np.empty_like(q_history)
    weights = np.empty((t_max, cfg.gamma, s, a)) if keep_weights else None
    for i in range(t_max):
        policies[i] = step(state, cfg).probs
        if keep_weights:
            weights[i] = state.weights
        observe(state, q_history[i])
    return policies, weights
