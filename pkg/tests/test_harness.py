import math

import numpy as np
import pytest
from hypothesis import given

import oracles
from strategies import instances
from collabmdp.chain_analysis import average_reward
from collabmdp.harness import (
    PreconditionError,
    best_fixed_comparator,
    cumulative_regret,
    diameters,
    influence,
    kappa_bounds,
    kappa_factors,
    log_to_csv,
    opt_value,
    project_simplex_rows,
    regret,
    run,
    smoothness_certificate,
)
from collabmdp.instances import random_mdp, random_policy
from collabmdp.learners import EXP_RESTART, LearnerConfig
from collabmdp.mdp_core import ConfigError, Mdp, deterministic_stack, uniform_policy
from collabmdp.opponents import OpponentSpec


def bandit(r):
    r = np.asarray(r, dtype=float)
    if r.ndim == 1:
        r = r[:, None]
    return Mdp(np.ones((1,) + r.shape + (1,)), r[None], [1.0])


def fixed(mdp, p=None):
    return OpponentSpec("fixed", start=uniform_policy(mdp.n_states, mdp.n_a2, 2) if p is None else p)


def test_single_episode_cold_start():
    m = random_mdp(np.random.default_rng(0), 3, 2, 2)
    log = run(m, LearnerConfig(1, 0.5), fixed(m), T=1, M=10)
    assert log.T == 1 and np.allclose(log.pi1[0], 0.5)


def test_gamma_above_horizon_rejected():
    m = bandit([1, 0])
    with pytest.raises(ConfigError):
        run(m, LearnerConfig(5), fixed(m), T=3, M=1)


def test_bandit_follows_closed_form():
    gamma, eps, T = 4, 0.6, 20
    m = bandit([1, 0])
    log = run(m, LearnerConfig(gamma, eps), fixed(m), T=T, M=5)
    expected = [0.5] + [
        np.mean([1 / (1 + math.exp(-eps * (min(tau, t - 1) + 1))) for tau in range(1, gamma + 1)])
        for t in range(2, T + 1)
    ]
    assert np.allclose(log.eta, expected, atol=1e-12)
    assert (np.diff(log.eta) >= -1e-15).all()


def test_run_is_deterministic():
    m = random_mdp(np.random.default_rng(1), 3, 2, 2)
    rng = np.random.default_rng(2)
    spec = OpponentSpec("drift", start=random_policy(rng, 3, 2), target=random_policy(rng, 3, 2))
    a = run(m, LearnerConfig(3), spec, 15, 7)
    b = run(m, LearnerConfig(3), spec, 15, 7)
    comp = best_fixed_comparator(m, a.pi2)
    assert log_to_csv(a, comp) == log_to_csv(b, comp)


def test_logged_values_match_recomputation():
    rng = np.random.default_rng(3)
    m = random_mdp(rng, 3, 2, 2)
    spec = OpponentSpec("drift", start=random_policy(rng, 3, 2), target=random_policy(rng, 3, 2), alpha=0.5)
    log = run(m, LearnerConfig(2), spec, 8, 13)
    for t in range(8):
        assert log.eta[t] == pytest.approx(oracles.eta_eig(m.trans, m.reward, log.pi1[t], log.pi2[t]), abs=1e-10)
        assert log.V[t] == pytest.approx(
            oracles.finite_return_power(m.trans, m.reward, m.d1, log.pi1[t], log.pi2[t], 13), abs=1e-12)


def test_comparator_matches_policy_iteration():
    rng = np.random.default_rng(4)
    for _ in range(8):
        m = random_mdp(rng, 3, 3, 2)
        p2 = random_policy(rng, 3, 2)
        comp = best_fixed_comparator(m, [p2] * 5)
        act, gain = oracles.policy_iteration(m.trans, m.reward, p2)
        assert comp.value / 5 == pytest.approx(gain, abs=1e-9)
        assert np.array_equal(comp.policy.argmax(axis=1), act)


def test_comparator_examples():
    m = bandit([1, 0])
    comp = best_fixed_comparator(m, [uniform_policy(1, 1, 2)] * 6)
    assert np.allclose(comp.policy, [[1, 0]]) and comp.value == pytest.approx(6)
    one = random_mdp(np.random.default_rng(5), 2, 1, 2)
    comp = best_fixed_comparator(one, [uniform_policy(2, 2, 2)])
    assert np.allclose(comp.policy, 1.0)
    with pytest.raises(ValueError):
        best_fixed_comparator(m, [])


def test_regret_examples():
    m = bandit([1, 0])
    log = run(m, LearnerConfig(1, algorithm=EXP_RESTART), fixed(m), T=10, M=1)  # restarts every episode
    comp = best_fixed_comparator(m, log.pi2)
    rep = regret(log, comp)
    assert rep.regret == pytest.approx(5.0)
    assert cumulative_regret(log, comp)[-1] == pytest.approx(5.0)


def test_regret_zero_when_learner_plays_comparator():
    m = random_mdp(np.random.default_rng(6), 2, 2, 2)
    log = run(m, LearnerConfig(1), fixed(m), T=4, M=1)
    comp = best_fixed_comparator(m, log.pi2, candidates=[log.pi1[0]], refine=False)
    comp.policy, comp.per_episode, comp.value = log.pi1[0], log.eta.copy(), float(log.eta.sum())
    assert regret(log, comp).regret == 0.0


def test_regret_matches_loop_recomputation():
    rng = np.random.default_rng(7)
    m = random_mdp(rng, 2, 2, 2)
    spec = OpponentSpec("drift", start=random_policy(rng, 2, 2), target=random_policy(rng, 2, 2), alpha=0.3)
    log = run(m, LearnerConfig(2), spec, 10, 5)
    comp = best_fixed_comparator(m, log.pi2)
    naive = sum(oracles.eta_eig(m.trans, m.reward, comp.policy, log.pi2[t])
                - oracles.eta_eig(m.trans, m.reward, log.pi1[t], log.pi2[t]) for t in range(10))
    assert regret(log, comp).regret == pytest.approx(naive, abs=1e-9)
    # no deterministic agent-1 policy beats the comparator
    for p in deterministic_stack(2, 2):
        assert sum(average_reward(m, p, log.pi2[t]) for t in range(10)) <= comp.value + 1e-9


def test_opt_value_examples():
    rng = np.random.default_rng(8)
    m = random_mdp(rng, 2, 2, 2)
    c = Mdp(m.trans, np.full(m.reward.shape, 0.35), m.d1)
    assert opt_value(c, 20) == pytest.approx(0.35)
    r = rng.uniform(size=(3, 2))
    assert opt_value(bandit(r), 4) == pytest.approx(r.max())
    naive = max(oracles.finite_return_power(m.trans, m.reward, m.d1, p1, p2, 15)
                for p1 in oracles.deterministic_policies(2, 2) for p2 in oracles.deterministic_policies(2, 2))
    assert opt_value(m, 15) == pytest.approx(naive, abs=1e-12)


def test_influence_examples():
    rng = np.random.default_rng(9)
    base = random_mdp(rng, 3, 2, 1)
    indep = Mdp(np.repeat(base.trans, 3, axis=2), np.repeat(base.reward, 3, axis=2), base.d1)
    assert influence(indep, 2) == 0.0
    trans = np.zeros((2, 2, 2, 2))
    for b in range(2):
        trans[:, :, b, b] = 1.0
    assert influence(Mdp(trans, np.zeros((2, 2, 2)), [1, 0]), 2) == 1.0
    for _ in range(4):
        m = random_mdp(rng, 2, 2, 3)
        assert influence(m, 2) == pytest.approx(oracles.influence_enumeration(m.trans, 2), abs=1e-14)
        assert influence(m, 1) == pytest.approx(oracles.influence_enumeration(m.trans, 1), abs=1e-14)


def test_diameters():
    assert diameters(bandit([1.0])) == (0.0, 0.0)
    assert diameters(random_mdp(np.random.default_rng(10), 2, 2, 3)) == (2.0, 2.0)
    with pytest.raises(PreconditionError):
        diameters(bandit([1, 0]), policy_sets=[[]])


def test_smoothness_agent2_irrelevant():
    rng = np.random.default_rng(11)
    base = random_mdp(rng, 2, 2, 1)
    m = Mdp(np.repeat(base.trans, 2, axis=2), np.repeat(base.reward, 2, axis=2), base.d1)
    cert = smoothness_certificate(m)
    assert cert.lam == pytest.approx(1.0) and cert.mu == 0.0


def test_smoothness_constant_reward():
    m = random_mdp(np.random.default_rng(12), 2, 2, 2)
    cert = smoothness_certificate(Mdp(m.trans, np.full(m.reward.shape, 0.5), m.d1))
    assert cert.lam == pytest.approx(1.0) and cert.mu == 0.0


def test_smoothness_common_payoff_recomputation():
    m = bandit([[1, 0], [0, 0]])
    cert = smoothness_certificate(m)
    assert cert.eta_star == 1.0
    # recompute the constraints on every grid pair: lam eta* <= eta_{pi2}(pi1*) + mu eta(pi1, pi2)
    w = (0.0, 0.25, 0.5, 0.75, 1.0)
    worst = min(
        (cert.anchor_p1[0] @ np.array([[1, 0], [0, 0]]) @ np.array([b, 1 - b])) + cert.mu * a * b - cert.lam
        for a in w for b in w
    )
    assert worst >= -1e-12
    # pi2 on a2 = 1 makes every deviation worth 0, so no positive lam is certifiable
    assert cert.lam == 0.0 and cert.trivial


def test_smoothness_slacks_nonnegative():
    cert = smoothness_certificate(random_mdp(np.random.default_rng(13), 2, 2, 2))
    assert cert.min_slack_first >= -1e-12 and cert.min_slack_second >= -1e-12


def state_only(rng, n_states=3):
    m = random_mdp(rng, n_states, 2, 2)
    r = rng.uniform(size=n_states)
    return Mdp(m.trans, np.broadcast_to(r[:, None, None], m.reward.shape).copy(), m.d1)


def test_kappa_worked_example():
    lam, mu = kappa_bounds(2.0, 2.0, 2.0, 1.0)
    assert (lam, mu) == pytest.approx((1.5, 1.5))
    p1, p2, k = 2.0, 1.0, 2.0
    assert lam == pytest.approx(p1 * (2 * k - 1) / (2 * k * (p1 - p2)))


def test_kappa_limits():
    lam, mu = kappa_bounds(3.0, math.inf, 2.0, 0.5)
    assert lam == pytest.approx(2.0 / 1.5)
    lam, mu = kappa_bounds(3.0, 4.0, 1.0, 0.0)
    assert lam == pytest.approx(7 / 8) and mu == 0.0
    with pytest.raises(PreconditionError):
        kappa_bounds(0.5, 2.0, 2.0, 1.0)
    with pytest.raises(PreconditionError):
        kappa_bounds(2.0, 2.0, 1.0, 1.0)


def test_kappa_factors():
    rng = np.random.default_rng(14)
    m = state_only(rng)
    rep = kappa_factors(m, 0.1)
    assert rep.kappa1 > 0 and rep.kappa2 > 0
    with pytest.raises(PreconditionError):
        kappa_factors(random_mdp(rng, 2, 2, 2), 0.1)
    with pytest.raises(PreconditionError):
        kappa_factors(m, 2.0)
    base = random_mdp(rng, 2, 2, 1)
    indep = Mdp(np.repeat(base.trans, 2, axis=2), np.full((2, 2, 2), 0.3), base.d1)
    assert kappa_factors(indep, 0.3).kappa2 == math.inf


def test_simplex_projection():
    x = np.array([[0.2, 0.3, 0.5], [2.0, 0.0, 0.0], [-1.0, 0.5, 0.6]])
    p = project_simplex_rows(x)
    assert np.allclose(p[0], x[0]) and np.allclose(p[1], [1, 0, 0])
    assert np.allclose(p.sum(axis=1), 1) and (p >= 0).all()


def test_log_csv_shape():
    m = random_mdp(np.random.default_rng(15), 2, 2, 2)
    log = run(m, LearnerConfig(2), fixed(m), 5, 3)
    text = log_to_csv(log, best_fixed_comparator(m, log.pi2))
    lines = text.splitlines()
    assert lines[0].startswith("t,eta_learner") and len(lines) == 6 and "\r" not in text


@given(instances(max_states=3, max_actions=2))
def test_comparator_dominates_deterministic(inst):
    mdp, rng = inst
    seq = [random_policy(rng, mdp.n_states, mdp.n_a2) for _ in range(3)]
    comp = best_fixed_comparator(mdp, seq, refine=False)
    for p in oracles.deterministic_policies(mdp.n_states, mdp.n_a1):
        assert sum(oracles.eta_eig(mdp.trans, mdp.reward, p, q) for q in seq) <= comp.value + 1e-9
