"""Seeded random instances and policies.

All randomness derives from one integer seed split by a (module, cell) counter,
so every consumer gets an independent, reproducible stream.
"""
from __future__ import annotations

import zlib

import numpy as np

from .mdp_core import Mdp

SMOOTHING = 0.1


def rng_for(seed: int, module: str, cell: int = 0) -> np.random.Generator:
    """Generator for stream (seed, module, cell); module names hash stably via CRC32."""
    key = zlib.crc32(module.encode())
    return np.random.default_rng(np.random.SeedSequence([int(seed), key, int(cell)]))


def random_mdp(rng: np.random.Generator, n_states: int, n_a1: int, n_a2: int,
               smoothing: float = SMOOTHING, state_only_reward: bool = False) -> Mdp:
    """Dirichlet(1) kernels mixed with weight ``smoothing`` toward uniform; rewards U[0,1]."""
    raw = rng.dirichlet(np.ones(n_states), size=(n_states, n_a1, n_a2))
    trans = (1.0 - smoothing) * raw + smoothing / n_states
    trans /= trans.sum(axis=-1, keepdims=True)
    if state_only_reward:
        reward = np.broadcast_to(rng.random(n_states)[:, None, None], (n_states, n_a1, n_a2)).copy()
    else:
        reward = rng.random((n_states, n_a1, n_a2))
    d1 = rng.dirichlet(np.ones(n_states))
    return Mdp(trans, reward, d1)


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> np.ndarray:
    return rng.dirichlet(np.ones(n_actions), size=n_states)


def random_deterministic(rng: np.random.Generator, n_states: int, n_actions: int) -> np.ndarray:
    return np.eye(n_actions)[rng.integers(0, n_actions, size=n_states)]


def battery(seed: int, n: int = 50, sizes=(2, 3, 4, 5), actions=(2, 3)):
    """The default verifier battery: n instances, |S| and |A| drawn per instance."""
    out = []
    for i in range(n):
        rng = rng_for(seed, "battery", i)
        s = int(rng.choice(sizes))
        a1, a2 = (int(x) for x in rng.choice(actions, size=2))
        out.append(random_mdp(rng, s, a1, a2))
    return out


__all__ = ["rng_for", "random_mdp", "random_policy", "random_deterministic", "battery"]
