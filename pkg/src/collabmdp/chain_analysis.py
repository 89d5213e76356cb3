"""Stationary distributions, the mixing constant, and average / finite-horizon reward."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mdp_core import (
    Mdp,
    NumericFailure,
    deterministic_policy,
    induce_kernel,
    induce_reward_matrix,
    policy_reward,
)

POWER_CAP = 1_000_000
POWER_TARGET = 1e-12
RESIDUAL_MAX = 1e-10
NON_MIXING_MARGIN = 1e-9
OMEGA_FLOOR = 1e-9


class NonMixing(NumericFailure):
    """The induced chain does not contract; ``pair`` holds an offending (pi1, pi2)."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


@dataclass(frozen=True)
class StationaryDist:
    d: np.ndarray
    residual: float


@dataclass(frozen=True)
class MixingEstimate:
    contraction: float
    omega: float
    certified_over: str

    @property
    def gap(self) -> float:
        """1 - e_hat, the denominator of every mixing-dependent bound."""
        return 1.0 - self.contraction


def _residual(d, kernel) -> float:
    return float(np.abs(d @ kernel - d).sum())


def _solve_stationary(kernel) -> np.ndarray:
    n = kernel.shape[0]
    a = np.vstack([kernel.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    d, *_ = np.linalg.lstsq(a, b, rcond=None)
    return d


def stationary_distribution(kernel) -> StationaryDist:
    """Fixed point of d -> dP.

    Power iteration on P, P^2, P^4, ... (each squaring doubles the effective
    iteration count, capped at ``POWER_CAP``); falls back to a least-squares
    solve of (P^T - I) d = 0 with a normalization row.
    """
    kernel = np.asarray(kernel, dtype=float)
    n = kernel.shape[0]
    d = np.full(n, 1.0 / n)
    pk = kernel
    steps = 1
    res = math.inf
    while steps <= POWER_CAP:
        d = d @ pk
        d /= d.sum()
        res = _residual(d, kernel)
        if res <= POWER_TARGET:
            break
        pk = pk @ pk
        steps *= 2
    if res > POWER_TARGET:
        d = _solve_stationary(kernel)
        res = _residual(d, kernel)
    if res > RESIDUAL_MAX or (d < -RESIDUAL_MAX).any():
        raise NonMixing(f"stationary distribution did not converge (residual {res:.3g})")
    d = np.clip(d, 0.0, None)
    d /= d.sum()
    return StationaryDist(d, _residual(d, kernel))


def stationary_batch(kernels) -> np.ndarray:
    """Stationary distributions of a (K, S, S) stack via one batched linear solve."""
    kernels = np.asarray(kernels, dtype=float)
    k, n, _ = kernels.shape
    a = np.swapaxes(kernels, 1, 2) - np.eye(n)
    a[:, -1, :] = 1.0
    b = np.zeros((k, n, 1))
    b[:, -1, 0] = 1.0
    try:
        d = np.linalg.solve(a, b)[..., 0]
    except np.linalg.LinAlgError:
        raise NonMixing("singular stationary system in batch") from None
    res = np.abs(np.einsum("ks,ksn->kn", d, kernels) - d).sum(axis=1)
    if (res > RESIDUAL_MAX).any() or (d < -RESIDUAL_MAX).any():
        raise NonMixing(f"batched stationary solve failed (max residual {res.max():.3g})")
    return d


def dobrushin(kernel) -> float:
    """delta(P) = 1/2 max_{i,j} ||P(i,.) - P(j,.)||_1."""
    kernel = np.asarray(kernel, dtype=float)
    diff = np.abs(kernel[:, None, :] - kernel[None, :, :]).sum(axis=2)
    return float(0.5 * diff.max())


def mixing_estimate(mdp: Mdp) -> MixingEstimate:
    """e_hat = max Dobrushin coefficient over deterministic joint policies.

    The Dobrushin coefficient of an induced kernel depends on two rows at a time,
    and each row i is fixed by the action pair chosen at state i alone. So the max
    over all |A1|^S |A2|^S deterministic pairs equals the max over state pairs
    i != j and action pairs at each, which this computes directly.
    """
    s, a1, a2 = mdp.n_states, mdp.n_a1, mdp.n_a2
    rows = mdp.trans.reshape(s, a1 * a2, s)
    dist = 0.5 * np.abs(rows[:, :, None, None, :] - rows[None, None, :, :, :]).sum(axis=-1)
    idx = np.arange(s)
    dist[idx, :, idx, :] = 0.0
    flat = int(np.argmax(dist))
    e_hat = float(dist.reshape(-1)[flat])
    described = f"all {a1 ** s * a2 ** s} deterministic joint policies (via state-pair reduction)"
    if e_hat >= 1.0 - NON_MIXING_MARGIN:
        i, x, j, y = np.unravel_index(flat, dist.shape)
        act1 = np.zeros(s, dtype=int)
        act2 = np.zeros(s, dtype=int)
        act1[i], act2[i] = divmod(int(x), a2)
        act1[j], act2[j] = divmod(int(y), a2)
        pair = (deterministic_policy(act1, a1, 1), deterministic_policy(act2, a2, 2))
        raise NonMixing(f"Dobrushin coefficient {e_hat:.12g} >= 1 - {NON_MIXING_MARGIN}", pair)
    omega = OMEGA_FLOOR if e_hat == 0.0 else -1.0 / math.log(e_hat)
    return MixingEstimate(e_hat, omega, described)


def stationary(mdp: Mdp, p1, p2) -> np.ndarray:
    return stationary_distribution(induce_kernel(mdp, p1, p2)).d


def average_reward(mdp: Mdp, p1, p2) -> float:
    """eta = d_{pi1,pi2} . <pi1, r_{pi2}>."""
    d = stationary(mdp, p1, p2)
    return float(d @ policy_reward(p1, induce_reward_matrix(mdp, p2)))


def _broadcast_pair(p1_stack, p2_stack):
    p1 = np.asarray(p1_stack, dtype=float)
    p2 = np.asarray(p2_stack, dtype=float)
    k = max(p1.shape[0], p2.shape[0])
    return np.broadcast_to(p1, (k,) + p1.shape[1:]), np.broadcast_to(p2, (k,) + p2.shape[1:])


def average_reward_batch(mdp: Mdp, p1_stack, p2_stack) -> np.ndarray:
    """eta for K policy pairs given as (K, S, A1) and (K, S, A2) stacks; a leading 1 broadcasts."""
    p1, p2 = _broadcast_pair(p1_stack, p2_stack)
    d = stationary_batch(np.einsum("ksa,ksb,sabn->ksn", p1, p2, mdp.trans))
    r = np.einsum("ksa,ksb,sab->ks", p1, p2, mdp.reward)
    return np.einsum("ks,ks->k", d, r)


def evolve_distribution(kernel, d_start, m: int) -> np.ndarray:
    """d_start . P^(m-1)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    d = np.asarray(d_start, dtype=float)
    for _ in range(m - 1):
        d = d @ kernel
    return d


def finite_return(mdp: Mdp, p1, p2, m_rounds: int) -> float:
    """V = (1/M) sum_{m=1..M} d_m . <pi1, r>, propagated exactly from d1."""
    if m_rounds < 1:
        raise ValueError("m_rounds must be >= 1")
    kernel = induce_kernel(mdp, p1, p2)
    rp = policy_reward(p1, induce_reward_matrix(mdp, p2))
    d = mdp.d1
    total = 0.0
    for _ in range(m_rounds):
        total += d @ rp
        d = d @ kernel
    return float(total / m_rounds)


def finite_return_batch(mdp: Mdp, p1_stack, p2_stack, m_rounds: int) -> np.ndarray:
    p1, p2 = _broadcast_pair(p1_stack, p2_stack)
    kernels = np.einsum("ksa,ksb,sabn->ksn", p1, p2, mdp.trans)
    r = np.einsum("ksa,ksb,sab->ks", p1, p2, mdp.reward)
    d = np.broadcast_to(mdp.d1, r.shape)
    total = np.zeros(r.shape[0])
    for _ in range(m_rounds):
        total += np.einsum("ks,ks->k", d, r)
        d = np.einsum("ks,ksn->kn", d, kernels)
    return total / m_rounds
