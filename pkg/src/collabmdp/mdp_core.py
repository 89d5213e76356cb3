"""Two-agent MDP data model and the single-chain objects a policy pair induces.

Shapes: trans is (S, A1, A2, S'), reward is (S, A1, A2), a policy is (S, A).

Two matrix norms appear throughout and are kept apart by name:
``op_inf_norm`` is the max row l1 norm, ``max_norm`` is the max absolute entry.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BUILD_TOL = 1e-12
ARITH_TOL = 1e-9


class CollabError(Exception):
    """Base class for package errors."""


class ConfigError(CollabError):
    """Malformed input: bad shapes, bad JSON, violated invariants."""


class NumericFailure(CollabError):
    """A numeric routine could not meet its contract (non-mixing, singular solve)."""


@dataclass(frozen=True)
class Mdp:
    trans: np.ndarray
    reward: np.ndarray
    d1: np.ndarray

    def __post_init__(self):
        trans = np.array(self.trans, dtype=float)
        reward = np.array(self.reward, dtype=float)
        d1 = np.array(self.d1, dtype=float)
        if trans.ndim != 4 or trans.shape[0] != trans.shape[3]:
            raise ConfigError(f"trans must have shape (S, A1, A2, S), got {trans.shape}")
        if reward.shape != trans.shape[:3]:
            raise ConfigError(f"reward shape {reward.shape} does not match trans {trans.shape[:3]}")
        if d1.shape != (trans.shape[0],):
            raise ConfigError(f"d1 shape {d1.shape} does not match {trans.shape[0]} states")
        for name, arr in (("trans", trans), ("reward", reward), ("d1", d1)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_states(self) -> int:
        return self.trans.shape[0]

    @property
    def n_a1(self) -> int:
        return self.trans.shape[1]

    @property
    def n_a2(self) -> int:
        return self.trans.shape[2]

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_a1": self.n_a1,
            "n_a2": self.n_a2,
            "trans": self.trans.tolist(),
            "reward": self.reward.tolist(),
            "d1": self.d1.tolist(),
        }


@dataclass(frozen=True)
class Policy:
    """Row-stochastic (S, A) matrix owned by agent ``role`` (1 or 2)."""

    probs: np.ndarray
    role: int = 1

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 2:
            raise ConfigError(f"policy must be a matrix, got shape {probs.shape}")
        if self.role not in (1, 2):
            raise ConfigError(f"role must be 1 or 2, got {self.role}")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        return "ok" if self.ok else "; ".join(self.violations)


def probs_of(p) -> np.ndarray:
    return p.probs if isinstance(p, Policy) else np.asarray(p, dtype=float)


def op_inf_norm(m) -> float:
    """Operator infinity norm: max over rows of the row's l1 norm."""
    m = np.asarray(m, dtype=float)
    return float(np.abs(m).sum(axis=-1).max())


def max_norm(m) -> float:
    """Largest absolute entry."""
    return float(np.abs(np.asarray(m, dtype=float)).max())


def validate(mdp: Mdp, tol: float = BUILD_TOL) -> ValidationReport:
    rep = ValidationReport()
    neg = np.argwhere(mdp.trans < -tol)
    for idx in neg[:10]:
        rep.violations.append(f"negative transition probability at {tuple(int(i) for i in idx)}")
    sums = mdp.trans.sum(axis=3)
    for idx in np.argwhere(np.abs(sums - 1.0) > tol)[:10]:
        s, a1, a2 = (int(i) for i in idx)
        rep.violations.append(f"transition row (s={s}, a1={a1}, a2={a2}) sums to {sums[s, a1, a2]:.12g}")
    for idx in np.argwhere((mdp.reward < 0) | (mdp.reward > 1) | ~np.isfinite(mdp.reward))[:10]:
        s, a1, a2 = (int(i) for i in idx)
        rep.violations.append(f"reward out of [0,1] at (s={s}, a1={a1}, a2={a2}): {mdp.reward[s, a1, a2]}")
    if (mdp.d1 < -tol).any() or abs(mdp.d1.sum() - 1.0) > tol:
        rep.violations.append(f"d1 is not a distribution (sum {mdp.d1.sum():.12g})")
    return rep


def validate_policy(p: Policy, n_states: int, n_actions: int, tol: float = BUILD_TOL) -> ValidationReport:
    rep = ValidationReport()
    if p.probs.shape != (n_states, n_actions):
        rep.violations.append(f"policy shape {p.probs.shape} != ({n_states}, {n_actions})")
        return rep
    if (p.probs < -tol).any():
        rep.violations.append("policy has negative entries")
    for s in np.flatnonzero(np.abs(p.probs.sum(axis=1) - 1.0) > tol):
        rep.violations.append(f"policy row {s} sums to {p.probs[s].sum():.12g}")
    return rep


def checked_mdp(trans, reward, d1) -> Mdp:
    mdp = Mdp(trans, reward, d1)
    rep = validate(mdp)
    if not rep.ok:
        raise ConfigError(f"invalid MDP: {rep}")
    return mdp


def mdp_from_dict(data: dict) -> Mdp:
    try:
        mdp = checked_mdp(data["trans"], data["reward"], data["d1"])
    except KeyError as exc:
        raise ConfigError(f"MDP JSON missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"MDP JSON malformed: {exc}") from None
    declared = tuple(data.get(k) for k in ("n_states", "n_a1", "n_a2"))
    actual = (mdp.n_states, mdp.n_a1, mdp.n_a2)
    if any(d is not None and d != a for d, a in zip(declared, actual)):
        raise ConfigError(f"declared sizes {declared} disagree with arrays {actual}")
    return mdp


def load_mdp(path) -> Mdp:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read MDP file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"MDP file {path} is not JSON: {exc}") from None
    return mdp_from_dict(data)


def _check_dims(mdp: Mdp, p1=None, p2=None):
    if p1 is not None and probs_of(p1).shape != (mdp.n_states, mdp.n_a1):
        raise ConfigError(f"agent-1 policy shape {probs_of(p1).shape} != ({mdp.n_states}, {mdp.n_a1})")
    if p2 is not None and probs_of(p2).shape != (mdp.n_states, mdp.n_a2):
        raise ConfigError(f"agent-2 policy shape {probs_of(p2).shape} != ({mdp.n_states}, {mdp.n_a2})")


def induce_kernel(mdp: Mdp, p1, p2) -> np.ndarray:
    """P(s, s') = sum_{a1,a2} pi1(s,a1) pi2(s,a2) P(s,a1,a2,s')."""
    _check_dims(mdp, p1, p2)
    return np.einsum("sa,sb,sabn->sn", probs_of(p1), probs_of(p2), mdp.trans)


def induce_action_kernel(mdp: Mdp, p2) -> np.ndarray:
    """P_pi2(s, a1, s') = sum_{a2} pi2(s,a2) P(s,a1,a2,s')."""
    _check_dims(mdp, p2=p2)
    return np.einsum("sb,sabn->san", probs_of(p2), mdp.trans)


def induce_reward_matrix(mdp: Mdp, p2) -> np.ndarray:
    """r_t(s, a1) = sum_{a2} pi2(s,a2) r(s,a1,a2)."""
    _check_dims(mdp, p2=p2)
    return np.einsum("sb,sab->sa", probs_of(p2), mdp.reward)


def policy_reward(p1, r1) -> np.ndarray:
    """Row-wise dot product <pi1, r_t> as a vector over states."""
    return np.einsum("sa,sa->s", probs_of(p1), r1)


def swap_agents(mdp: Mdp) -> Mdp:
    """The same game seen from agent 2: action axes exchanged."""
    return Mdp(mdp.trans.transpose(0, 2, 1, 3), mdp.reward.transpose(0, 2, 1), mdp.d1)


def uniform_policy(n_states: int, n_actions: int, role: int = 1) -> Policy:
    return Policy(np.full((n_states, n_actions), 1.0 / n_actions), role)


def deterministic_policy(actions, n_actions: int, role: int = 1) -> Policy:
    actions = np.asarray(actions, dtype=int)
    return Policy(np.eye(n_actions)[actions], role)


def deterministic_stack(n_states: int, n_actions: int) -> np.ndarray:
    """All n_actions**n_states deterministic policies as a (K, S, A) array.

    Ordering is lexicographic in (a(s=0), a(s=1), ...), so index 0 is all-zeros.
    """
    grids = np.indices((n_actions,) * n_states).reshape(n_states, -1).T
    return np.eye(n_actions)[grids]
