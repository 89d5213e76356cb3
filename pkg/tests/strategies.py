import numpy as np
from hypothesis import strategies as st

from collabmdp.instances import random_mdp, random_policy


@st.composite
def instances(draw, max_states=4, max_actions=3, smoothing=0.1, state_only=False):
    """(mdp, rng) with the rng seeded from the drawn integer, for policy draws."""
    seed = draw(st.integers(0, 2**32 - 1))
    s = draw(st.integers(1, max_states))
    a1 = draw(st.integers(1, max_actions))
    a2 = draw(st.integers(1, max_actions))
    rng = np.random.default_rng(seed)
    return random_mdp(rng, s, a1, a2, smoothing, state_only), rng


def policies(rng, mdp, k=2):
    """k agent-1 and k agent-2 random policies."""
    return ([random_policy(rng, mdp.n_states, mdp.n_a1) for _ in range(k)],
            [random_policy(rng, mdp.n_states, mdp.n_a2) for _ in range(k)])
