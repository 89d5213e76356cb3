"""Average-reward Q-values: the bias function pinned by d . h = 0."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain_analysis import NonMixing, stationary_distribution
from .mdp_core import (
    Mdp,
    induce_action_kernel,
    induce_kernel,
    induce_reward_matrix,
    policy_reward,
    probs_of,
)

BELLMAN_TOL = 1e-8


@dataclass(frozen=True)
class QTable:
    q: np.ndarray  # (S, A1)
    eta: float
    d: np.ndarray  # stationary distribution of the pair
    p1: np.ndarray
    p2: np.ndarray
    bellman_residual: float

    @property
    def q_pi(self) -> np.ndarray:
        """Q^{pi1} for the policy the table was computed under."""
        return q_policy(self, self.p1)


def q_values(mdp: Mdp, p1, p2) -> QTable:
    """Solve h = <pi1,r> - eta 1 + P h with d.h = 0, then q = r - eta + P_{pi2}(s,a1) . h."""
    pi1, pi2 = probs_of(p1), probs_of(p2)
    kernel = induce_kernel(mdp, pi1, pi2)
    d = stationary_distribution(kernel).d
    r1 = induce_reward_matrix(mdp, pi2)
    rp = policy_reward(pi1, r1)
    eta = float(d @ rp)
    n = mdp.n_states
    a = np.vstack([np.eye(n) - kernel, d[None, :]])
    b = np.append(rp - eta, 0.0)
    h, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < n:
        raise NonMixing(f"bias system is rank deficient (rank {rank} < {n})")
    q = r1 - eta + induce_action_kernel(mdp, pi2) @ h
    resid = float(np.abs(q - r1 + eta - induce_action_kernel(mdp, pi2) @ policy_reward(pi1, q)).max())
    if resid > BELLMAN_TOL:
        raise NonMixing(f"Bellman residual {resid:.3g} exceeds {BELLMAN_TOL}")
    return QTable(q, eta, d, pi1, pi2, resid)


def q_policy(q, p) -> np.ndarray:
    """Row-wise expectation <pi, Q> as a vector over states."""
    table = q.q if isinstance(q, QTable) else np.asarray(q, dtype=float)
    pi = probs_of(p)
    if pi.shape != table.shape:
        raise ValueError(f"policy shape {pi.shape} does not match Q shape {table.shape}")
    return np.einsum("sa,sa->s", pi, table)
