import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given

from strategies import instances
from collabmdp import verifier
from collabmdp.bias_q import q_values
from collabmdp.chain_analysis import MixingEstimate, mixing_estimate
from collabmdp.harness import best_fixed_comparator, influence, run
from collabmdp.instances import random_mdp, random_policy
from collabmdp.learners import EXP_DRBIAS, EXP_RESTART, LearnerConfig
from collabmdp.mdp_core import Mdp
from collabmdp.opponents import OpponentSpec
from collabmdp.verifier import BoundCheck

MDP = random_mdp(np.random.default_rng(0), 3, 2, 2)
MIX = mixing_estimate(MDP)


def drift_log(alg, T=60, gamma=8, mdp=MDP, seed=1, eps=None):
    rng = np.random.default_rng(seed)
    spec = OpponentSpec("drift", start=random_policy(rng, mdp.n_states, mdp.n_a2),
                        target=random_policy(rng, mdp.n_states, mdp.n_a2), alpha=1.0)
    return run(mdp, LearnerConfig(gamma, eps, alg), spec, T, 50)


def test_boundcheck_semantics():
    assert BoundCheck("x", 1.0, 1.0 - 5e-9).passed
    assert not BoundCheck("x", 1.0, 1.0 - 2e-8).passed
    assert BoundCheck("x", 1.0, 1.0 + 5e-9, kind="eq").passed
    assert not BoundCheck("x", 1.0, 1.1, kind="eq").passed
    d = BoundCheck("x", 0.5, 1.0, context={"t": 3}).to_dict()
    assert d["slack"] == 0.5 and d["pass"] and d["context"] == {"t": 3}


def test_worst_picks_min_slack():
    c = verifier._worst("w", [0.1, 0.9, 0.3], [1.0, 1.0, 0.35])
    assert c.context == {"t": 3, "evaluated": 3} and c.lhs == 0.3
    assert verifier._worst("w", [], 1.0).context["evaluated"] == 0


def test_instance_checks_pass():
    checks = verifier.instance_checks(MDP, np.random.default_rng(2), n_pairs=3, M=40)
    bad = [c.to_dict() for c in checks if not c.passed]
    assert not bad


def test_detects_wrong_mixing_constant():
    fake = MixingEstimate(0.0, 1e-9, "injected")
    p1, p2 = random_policy(np.random.default_rng(3), 3, 2), random_policy(np.random.default_rng(4), 3, 2)
    checks = verifier.check_dist_convergence(MDP, p1, p2, fake, 5)
    assert not all(c.passed for c in checks)


def test_detects_perturbed_q(monkeypatch):
    real = q_values

    def shifted(mdp, p1, p2):
        qt = real(mdp, p1, p2)
        return dataclasses.replace(qt, q=qt.q + np.array([[0.0, 0.1]]))

    monkeypatch.setattr(verifier, "q_values", shifted)
    rng = np.random.default_rng(5)
    p1, p1b, p2 = random_policy(rng, 3, 2), random_policy(rng, 3, 2), random_policy(rng, 3, 2)
    assert not verifier.check_eta_q_identity(MDP, p1, p1b, p2).passed


def test_detects_tampered_returns():
    log = drift_log(EXP_DRBIAS)
    assert verifier.check_return_log(log, MIX).passed
    log.V = log.V - 1.0
    assert not verifier.check_return_log(log, MIX).passed


@pytest.mark.parametrize("alg", [EXP_DRBIAS, EXP_RESTART])
def test_run_checks_pass(alg):
    log = drift_log(alg)
    checks = verifier.run_checks(log, MIX, np.random.default_rng(6))
    names = {c.name for c in checks}
    assert {"rvu." + alg, "cumulative_drift", "smooth_value_bound"} <= names
    assert ("theorem1" if alg == EXP_DRBIAS else "theorem_restart") in names
    assert not [c.to_dict() for c in checks if not c.passed]


def test_rvu_detects_non_oftrl_plays():
    log = drift_log(EXP_RESTART, T=200, gamma=200)
    assert verifier.check_rvu(log).passed
    worst = np.eye(2)[log.q.argmin(axis=2)]
    log.pi1 = worst
    assert not verifier.check_rvu(log).passed


def test_weight_stability_detects_jumps():
    log = drift_log(EXP_RESTART, T=40, gamma=40, eps=0.01)
    assert verifier.weight_step_bound(0.01, MIX.gap) < 2
    assert all(c.passed for c in verifier.check_weight_stability(log, MIX))
    log.pi1 = np.eye(2)[np.arange(40) % 2][:, None, :].repeat(3, axis=1)
    assert not all(c.passed for c in verifier.check_weight_stability(log, MIX))


def test_theorem_detects_inflated_regret():
    log = drift_log(EXP_DRBIAS, T=100, gamma=10)
    log.learner = LearnerConfig(10, algorithm=EXP_DRBIAS)
    I2 = influence(MDP)
    comp = best_fixed_comparator(MDP, log.pi2)
    r = comp.value - log.eta.sum()
    assert verifier.check_theorem1(log, MIX, I2, r).passed
    assert not verifier.check_theorem1(log, MIX, I2, 1e12).passed


def test_rate_threshold_values():
    assert verifier.rate_threshold(1.0) == pytest.approx(1 - 3 / 7 + 0.1)
    assert verifier.rate_threshold(math.inf) == 0.35
    assert verifier.rate_threshold(10.0) == pytest.approx(0.35)


def test_check_rate():
    T = np.array([250, 500, 1000, 2000, 4000])
    assert verifier.fitted_slope(T, 3 * T ** 0.5) == pytest.approx(0.5)
    assert verifier.check_rate(T, 3 * T ** 0.5, 1.0).passed
    assert not verifier.check_rate(T, T ** 0.9, 1.0).passed
    assert not verifier.check_rate(T, np.r_[0.0, T[1:] ** 0.2], 1.0).passed


def test_qdiff_constant_ratio_formula():
    gap = 0.3
    for r1, r2, I2 in [(0.1, 0.0, 0.5), (0.0, 0.2, 1.0), (0.2, 0.2, 0.0)]:
        _, c_q = verifier.qdiff_constants(r1, r2, I2, gap)
        assert c_q / max(r1, r2) <= 18 / gap ** 2


def test_suite_small_and_errors():
    checks = verifier.run_suite(seed=3, n_instances=2, T=30, gamma=4, M=20, n_pairs=2)
    assert checks and all(c.passed for c in checks)
    assert "mirror_rho2" not in {c.name for c in checks}
    table = verifier.summarize(checks)
    assert sum(n for n, _, _ in table.values()) == len(checks)
    assert verifier.format_summary(checks).splitlines()[0].startswith("check")
    with pytest.raises(ValueError):
        verifier.run_suite(instances=[])


@given(instances(max_states=3, max_actions=2))
def test_instance_checks_hold_on_random_mdps(inst):
    mdp, rng = inst
    checks = verifier.instance_checks(mdp, rng, n_pairs=2, M=30, m_max=8)
    assert all(c.passed for c in checks), [c.to_dict() for c in checks if not c.passed]


@given(instances(max_states=3, max_actions=2, state_only=True))
def test_state_only_checks_hold(inst):
    mdp, rng = inst
    assert all(c.passed for c in verifier.state_only_checks(mdp, rng, n_pairs=3))
