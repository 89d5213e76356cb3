"""Agent-2 policy generators with a measured per-episode change magnitude rho2."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bias_q import q_values
from .learners import EXP_DRBIAS, LearnerConfig, LearnerState, new_state, observe, step
from .mdp_core import ConfigError, Mdp, Policy, op_inf_norm, probs_of, swap_agents, validate_policy

KINDS = ("fixed", "drift", "mirror-learner", "segment-adversary")


class ScheduleExhausted(Exception):
    pass


@dataclass(frozen=True)
class OpponentSpec:
    """Parameters per kind.

    fixed: ``start``.  drift: ``start``, ``target``, ``alpha``, ``c``.
    mirror-learner: ``start`` (optional, uniform by default) and ``learner``.
    segment-adversary: ``start``, ``schedule``, ``segment_length``, ``cap``.
    """

    kind: str
    start: np.ndarray | None = None
    target: np.ndarray | None = None
    alpha: float = 1.0
    c: float = 1.0
    learner: LearnerConfig | None = None
    schedule: tuple = ()
    segment_length: int = 1
    cap: float = 2.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown opponent kind {self.kind!r}; expected one of {KINDS}")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if self.c <= 0 or self.cap <= 0:
            raise ConfigError("c and cap must be > 0")
        if self.kind == "drift" and (self.start is None or self.target is None):
            raise ConfigError("drift opponent needs start and target policies")
        if self.kind == "mirror-learner" and self.learner is None:
            raise ConfigError("mirror-learner opponent needs a learner config")
        if self.kind == "segment-adversary" and (not self.schedule or self.segment_length < 1):
            raise ConfigError("segment-adversary needs a nonempty schedule and segment_length >= 1")
        if self.kind in ("fixed", "segment-adversary") and self.start is None:
            raise ConfigError(f"{self.kind} opponent needs a start policy")


@dataclass
class OpponentState:
    policy: np.ndarray
    t: int = 1
    rho2_hat: float = 0.0
    mirror_mdp: Mdp | None = field(default=None, repr=False)
    mirror_state: LearnerState | None = field(default=None, repr=False)


def _check(mdp: Mdp, p) -> np.ndarray:
    pol = Policy(probs_of(p), 2)
    rep = validate_policy(pol, mdp.n_states, mdp.n_a2, tol=1e-9)
    if not rep.ok:
        raise ConfigError(f"opponent policy invalid: {rep}")
    return pol.probs


def init_opponent(spec: OpponentSpec, mdp: Mdp) -> OpponentState:
    """State holding pi2_1."""
    for p in ([spec.target] if spec.target is not None else []) + list(spec.schedule):
        _check(mdp, p)
    if spec.kind == "mirror-learner":
        cfg = spec.learner
        if cfg.algorithm != EXP_DRBIAS:
            raise ConfigError("mirror-learner runs ExpDRBias")
        mstate = new_state(cfg, mdp.n_states, mdp.n_a2)
        first = step(mstate, cfg).probs if spec.start is None else _check(mdp, spec.start)
        return OpponentState(first, mirror_mdp=swap_agents(mdp), mirror_state=mstate)
    return OpponentState(_check(mdp, spec.start))


def _clamped_move(current: np.ndarray, target: np.ndarray, cap: float) -> np.ndarray:
    """Straight-line step toward target with ||step||_inf <= cap."""
    delta = np.asarray(target) - current
    dist = op_inf_norm(delta)
    if dist <= cap:
        return np.array(target, dtype=float)
    return current + (cap / dist) * delta


def next_policy(state: OpponentState, spec: OpponentSpec, T: int, observed_pi1) -> Policy:
    """Advance the opponent from pi2_t to pi2_{t+1} after seeing pi1_t."""
    cur = state.policy
    if spec.kind == "fixed":
        new = cur
    elif spec.kind == "drift":
        new = _clamped_move(cur, spec.target, spec.c * T ** -spec.alpha)
    elif spec.kind == "segment-adversary":
        idx = state.t // spec.segment_length
        if idx >= len(spec.schedule):
            raise ScheduleExhausted(f"schedule of {len(spec.schedule)} entries exhausted at episode {state.t + 1}")
        new = _clamped_move(cur, spec.schedule[idx], spec.cap)
    else:
        # agent 2 learns from its own Q-values, computed with the roles swapped
        q2 = q_values(state.mirror_mdp, cur, probs_of(observed_pi1))
        observe(state.mirror_state, q2)
        new = step(state.mirror_state, spec.learner).probs
    state.rho2_hat = max(state.rho2_hat, op_inf_norm(new - cur))
    state.policy = new
    state.t += 1
    return Policy(new, 2)


def measured_rho2(policies) -> float:
    """max_t ||pi2_t - pi2_{t-1}||_inf over a (T, S, A) sequence."""
    seq = np.asarray([probs_of(p) for p in policies])
    if len(seq) < 2:
        raise ValueError("need at least two policies")
    return float(np.abs(np.diff(seq, axis=0)).sum(axis=2).max())
