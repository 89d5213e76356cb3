"""Named numeric checks of the framework's inequalities on concrete instances and logged runs.

Every check is a ``BoundCheck`` with pass iff rhs - lhs >= -1e-8 (inequalities) or
|lhs - rhs| <= 1e-8 (the eta-Q identity).  Checks that range over episodes are
evaluated on every episode and reported at their worst episode.

Notation: ``gap`` is 1 - e_hat; ``I2`` is agent 2's influence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import harness
from .bias_q import q_policy, q_values
from .chain_analysis import (
    MixingEstimate,
    average_reward,
    evolve_distribution,
    finite_return,
    mixing_estimate,
    stationary,
)
from .instances import battery, random_deterministic, random_policy, rng_for
from .learners import EXP_DRBIAS, EXP_RESTART, LearnerConfig, replay
from .mdp_core import (
    Mdp,
    induce_action_kernel,
    induce_kernel,
    induce_reward_matrix,
    max_norm,
    op_inf_norm,
    policy_reward,
    probs_of,
)
from .oftrl_expert import Regularizer
from .opponents import OpponentSpec

SLACK_TOL = 1e-8
EQ_TOL = 1e-8
TAIL_TARGET = 1e-10


@dataclass
class BoundCheck:
    name: str
    lhs: float
    rhs: float
    kind: str = "le"  # "le": lhs <= rhs; "eq": lhs == rhs
    context: dict = field(default_factory=dict)

    @property
    def slack(self) -> float:
        if self.kind == "eq":
            return -abs(self.lhs - self.rhs)
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        tol = EQ_TOL if self.kind == "eq" else SLACK_TOL
        return self.slack >= -tol

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "kind": self.kind,
                "slack": self.slack, "pass": self.passed, "context": self.context}


def _worst(name: str, lhs, rhs, context=None, index_name="t", offset=1) -> BoundCheck:
    """Worst-slack entry of elementwise lhs <= rhs."""
    lhs, rhs = np.atleast_1d(np.asarray(lhs, float)), np.atleast_1d(np.broadcast_to(rhs, np.shape(lhs)))
    ctx = dict(context or {})
    if lhs.size == 0:
        ctx["evaluated"] = 0
        return BoundCheck(name, 0.0, 0.0, context=ctx)
    i = int(np.argmin(rhs - lhs))
    ctx.update({index_name: i + offset, "evaluated": int(lhs.size)})
    return BoundCheck(name, float(lhs[i]), float(rhs[i]), context=ctx)


# ---------------------------------------------------------------- instance checks

def check_eta_q_identity(mdp: Mdp, p1, p1_alt, p2) -> BoundCheck:
    """eta(pi1) - eta(pi1_alt) = d_{pi1,pi2} . (Q^{pi1} - Q^{pi1_alt}), Q computed under pi1_alt."""
    qt = q_values(mdp, p1_alt, p2)
    d = stationary(mdp, p1, p2)
    lhs = average_reward(mdp, p1, p2) - qt.eta
    rhs = float(d @ (q_policy(qt, p1) - q_policy(qt, p1_alt)))
    return BoundCheck("eta_q_identity", lhs, rhs, kind="eq")


def check_q_bound(mdp: Mdp, p1, p2, mix: MixingEstimate) -> list[BoundCheck]:
    qt = q_values(mdp, p1, p2)
    return [
        BoundCheck("q_bound.max", max_norm(qt.q), 3.0 / mix.gap),
        BoundCheck("q_bound.policy", float(np.abs(qt.q_pi).max()), 2.0 / mix.gap),
    ]


def check_dist_convergence(mdp: Mdp, p1, p2, mix: MixingEstimate, m_max: int, d_start=None) -> list[BoundCheck]:
    """||d_m - d||_1 <= 2 e_hat^(m-1) for m = 1..m_max."""
    kernel = induce_kernel(mdp, p1, p2)
    d = stationary(mdp, p1, p2)
    cur = mdp.d1 if d_start is None else np.asarray(d_start, float)
    out = []
    for m in range(1, m_max + 1):
        out.append(BoundCheck("dist_convergence", float(np.abs(cur - d).sum()), 2.0 * mix.contraction ** (m - 1),
                              context={"m": m}))
        cur = cur @ kernel
    return out


def check_max_pol_rew(mdp: Mdp, p1, p2) -> BoundCheck:
    return BoundCheck("max_pol_rew", float(np.abs(policy_reward(p1, induce_reward_matrix(mdp, p2))).max()), 1.0)


def check_diff_pol_rew(mdp: Mdp, p1, p1_prev, p2, p2_prev) -> list[BoundCheck]:
    """The three consecutive-episode claims, with rho taken as the measured step."""
    r_t, r_prev = induce_reward_matrix(mdp, p2), induce_reward_matrix(mdp, p2_prev)
    step2 = op_inf_norm(probs_of(p2) - probs_of(p2_prev))
    step1 = op_inf_norm(probs_of(p1) - probs_of(p1_prev))
    return [
        BoundCheck("diff_pol_rew.reward", max_norm(r_t - r_prev), step2),
        BoundCheck("diff_pol_rew.agent2", float(np.abs(policy_reward(p1, r_t) - policy_reward(p1, r_prev)).max()),
                   step2),
        BoundCheck("diff_pol_rew.agent1",
                   float(np.abs(policy_reward(p1, r_prev) - policy_reward(p1_prev, r_prev)).max()), step1),
    ]


def check_diff_pol_rew_general(p, p_alt, m) -> BoundCheck:
    lhs = float(np.abs(policy_reward(p, m) - policy_reward(p_alt, m)).max())
    return BoundCheck("diff_pol_rew_general", lhs, 2.0 * max_norm(m))


def check_trans_bound(mdp: Mdp, p1, p1_alt, p2, p2_alt) -> list[BoundCheck]:
    k = induce_kernel(mdp, p1, p2)
    return [
        BoundCheck("trans_bound.agent2", op_inf_norm(k - induce_kernel(mdp, p1, p2_alt)),
                   op_inf_norm(probs_of(p2) - probs_of(p2_alt))),
        BoundCheck("trans_bound.agent1", op_inf_norm(k - induce_kernel(mdp, p1_alt, p2)),
                   op_inf_norm(probs_of(p1) - probs_of(p1_alt))),
    ]


def check_trans_bound_2(mdp: Mdp, p2, p2_alt) -> BoundCheck:
    """Per (s, a1): ||P_{pi2}(s,a1) - P_{pi2'}(s,a1)||_1 <= ||pi2(s) - pi2'(s)||_1."""
    lhs = np.abs(induce_action_kernel(mdp, p2) - induce_action_kernel(mdp, p2_alt)).sum(axis=2)
    rhs = np.abs(probs_of(p2) - probs_of(p2_alt)).sum(axis=1)[:, None] * np.ones_like(lhs)
    return _worst("trans_bound_2", lhs.ravel(), rhs.ravel(), index_name="s_a1", offset=0)


def check_influence_range(mdp: Mdp) -> list[BoundCheck]:
    out = []
    for agent in (1, 2):
        i = harness.influence(mdp, agent)
        out.append(BoundCheck(f"influence_range.I{agent}.upper", i, 1.0))
        out.append(BoundCheck(f"influence_range.I{agent}.lower", -i, 0.0))
    return out


def check_dist_bound_1(mdp: Mdp, p1, p1_alt, p2, p2_alt, mix: MixingEstimate) -> list[BoundCheck]:
    d = stationary(mdp, p1, p2)
    k = induce_kernel(mdp, p1, p2)
    d2 = stationary(mdp, p1, p2_alt)
    d1 = stationary(mdp, p1_alt, p2)
    return [
        BoundCheck("dist_bound_1.agent2", float(np.abs(d - d2).sum()),
                   op_inf_norm(k - induce_kernel(mdp, p1, p2_alt)) / mix.gap),
        BoundCheck("dist_bound_1.agent1", float(np.abs(d - d1).sum()),
                   op_inf_norm(k - induce_kernel(mdp, p1_alt, p2)) / mix.gap),
    ]


def check_return_bound(mdp: Mdp, p1, p2, M: int, mix: MixingEstimate) -> BoundCheck:
    """|V - eta| <= 2 / (M (1 - e_hat))."""
    return BoundCheck("return_bound", abs(finite_return(mdp, p1, p2, M) - average_reward(mdp, p1, p2)),
                      2.0 / (M * mix.gap))


def check_influence_smooth_bounds(mdp: Mdp, cert, pairs, mix: MixingEstimate) -> list[BoundCheck]:
    """The three state-only-reward claims comparing (pi1*, pi2*) with grid pairs (pi1, pi2)."""
    i1, i2 = harness.influence(mdp, 1), harness.influence(mdp, 2)
    dia1, dia2 = harness.diameters(mdp)
    e_anchor = average_reward(mdp, cert.anchor_p1, cert.anchor_p2)
    l1, l2, l3 = [], [], []
    for p1, p2 in pairs:
        e_dev = average_reward(mdp, cert.anchor_p1, p2)
        e_pair = average_reward(mdp, p1, p2)
        l1.append(abs(e_dev - e_anchor))
        l2.append(abs(e_dev - e_pair))
        l3.append(abs(e_anchor - e_pair))
    return [
        _worst("influence_smooth.agent2", l1, i2 * dia2 / mix.gap, index_name="pair", offset=0),
        _worst("influence_smooth.agent1", l2, i1 * dia1 / mix.gap, index_name="pair", offset=0),
        _worst("influence_smooth.joint", l3, (i1 * dia1 + i2 * dia2) / mix.gap, index_name="pair", offset=0),
    ]


def check_cumulative_drift(mdp: Mdp, p1_seq, pi2_seq, mix: MixingEstimate, I2: float,
                           d_start=None) -> list[BoundCheck]:
    """Cumulative drift of d_{t,m} - d_t between consecutive episodes, plus the second
    stationary-step claim, using per-step measured magnitudes.

    ``p1_seq`` is one policy (held fixed) or a sequence aligned with ``pi2_seq``.
    The series is truncated at M* with tail allowance 4 e^M* / (1 - e) on the rhs.
    """
    pi2 = np.asarray([probs_of(p) for p in pi2_seq])
    p1 = probs_of(p1_seq)
    pi1 = np.broadcast_to(p1, (len(pi2),) + p1.shape[-2:]) if p1.ndim == 2 else np.asarray(p1)
    e = mix.contraction
    if e == 0:
        m_star = 2
    else:
        m_star = int(min(100_000, max(2, math.ceil(math.log(TAIL_TARGET * mix.gap / 4) / math.log(e)))))
    tail = 4.0 * e ** m_star / mix.gap
    start = mdp.d1 if d_start is None else np.asarray(d_start, float)
    drift_l, drift_r, stat_l, stat_r = [], [], [], []
    prev = None
    for t in range(len(pi2)):
        kernel = induce_kernel(mdp, pi1[t], pi2[t])
        d = stationary(mdp, pi1[t], pi2[t])
        dev = np.empty((m_star, mdp.n_states))
        cur = start
        for m in range(m_star):
            dev[m] = cur - d
            cur = cur @ kernel
        if prev is not None:
            s1 = op_inf_norm(pi1[t] - pi1[t - 1])
            s2 = op_inf_norm(pi2[t] - pi2[t - 1])
            drift_l.append(float(np.abs(dev - prev[0]).sum()))
            drift_r.append(3.0 * (s1 + I2 * s2) / mix.gap ** 2 + tail)
            if s1 == 0.0:
                stat_l.append(float(np.abs(d - prev[1]).sum()))
                stat_r.append(I2 * s2 / mix.gap)
        prev = (dev, d)
    ctx = {"M_star": m_star, "tail": tail}
    return [
        _worst("cumulative_drift", drift_l, drift_r, ctx, offset=2),
        _worst("stat_dist_step.fixed_pi1", stat_l, stat_r, offset=2),
    ]


# ---------------------------------------------------------------- run checks

def check_return_log(log: harness.EpisodeLog, mix: MixingEstimate) -> BoundCheck:
    """V_t >= eta_t - 2/(M (1 - e_hat)) on every episode."""
    return _worst("return_lower_bound", log.eta - log.V, 2.0 / (log.M * mix.gap))


def check_stat_dist_step(log: harness.EpisodeLog, mix: MixingEstimate, I2: float) -> BoundCheck:
    lhs = np.abs(np.diff(log.d, axis=0)).sum(axis=1)
    rhs = (log.rho1_step[1:] + I2 * log.rho2_step[1:]) / mix.gap
    return _worst("stat_dist_step", lhs, rhs, offset=2)


def qdiff_constants(rho1, rho2, I2: float, gap: float):
    """(C_{Q^pi}, C_Q) for given change magnitudes."""
    c_qpi = 3.0 * (rho1 + I2 * rho2) / gap ** 2 + 2.0 * (rho1 + rho2) / gap
    c_q = c_qpi + (3.0 / gap + 1.0) * rho1 + 2.0 * rho2 + (rho1 + I2 * rho2) / gap
    return c_qpi, c_q


def check_qdiff_lemmas(log: harness.EpisodeLog, mix: MixingEstimate, I2: float) -> list[BoundCheck]:
    r1, r2 = log.rho1_step[1:], log.rho2_step[1:]
    c_qpi, c_q = qdiff_constants(r1, r2, I2, mix.gap)
    qpi = log.q_pi
    lhs_pi = np.abs(np.diff(qpi, axis=0)).max(axis=1)
    lhs_q = np.abs(np.diff(log.q, axis=0)).max(axis=(1, 2))
    return [_worst("qdiff_policy", lhs_pi, c_qpi, offset=2), _worst("qdiff_table", lhs_q, c_q, offset=2)]


def check_qdiff_constant(log: harness.EpisodeLog, mix: MixingEstimate, I2: float) -> BoundCheck:
    """C_Q / max(rho1, rho2) <= 18 / (1 - e_hat)^2 wherever the max is positive."""
    r1, r2 = log.rho1_step[1:], log.rho2_step[1:]
    m = np.maximum(r1, r2)
    keep = m > 0
    _, c_q = qdiff_constants(r1[keep], r2[keep], I2, mix.gap)
    return _worst("qdiff_constant_ratio", c_q / m[keep], 18.0 / mix.gap ** 2)


def weight_step_bound(epsilon: float, gap: float) -> float:
    return min(2.0, 9.0 * epsilon / gap)


def _segment_starts(T: int, gamma: int) -> np.ndarray:
    return (np.arange(1, T + 1) - 1) % gamma == 0


def check_weight_stability(log: harness.EpisodeLog, mix: MixingEstimate, weights=None) -> list[BoundCheck]:
    """Per-window weight steps and rho1 for ExpDRBias; within-segment steps for ExpRestart."""
    cfg = log.learner
    bound = weight_step_bound(cfg.epsilon, mix.gap)
    steps = log.rho1_step
    if cfg.algorithm == EXP_RESTART:
        inside = ~_segment_starts(log.T, cfg.gamma)
        inside[0] = False
        return [_worst("weight_stability.restart", steps[inside], bound)]
    if weights is None:
        _, weights = replay(log.q, cfg, keep_weights=True)
    if log.T > 1 and cfg.gamma > 1:
        diff = np.abs(weights[1:, 1:] - weights[:-1, :-1]).sum(axis=3).max(axis=(1, 2))
    else:
        diff = np.zeros(0)
    return [
        _worst("weight_stability.window", diff, bound, offset=2),
        BoundCheck("weight_stability.rho1", float(steps.max()), min(2.0, bound + 2.0 / cfg.gamma)),
    ]


def rvu_terms(q, w_diag, prev_w, q_prev, comparators):
    """Both sides of the per-state RVU inequality along one diagonal.

    q: (n, S, A) losses, w_diag: (n, S, A) plays, prev_w/q_prev: their predecessors,
    comparators: (K, S, A).  Returns lhs (K, S) and the comparator-free rhs pieces (S,).
    """
    gain = np.einsum("nsa,ksa->ks", q, comparators) - np.einsum("nsa,nsa->s", q, w_diag)[None]
    dq = (np.abs(q - q_prev).max(axis=2) ** 2).sum(axis=0)
    dw = (np.abs(w_diag - prev_w).sum(axis=2) ** 2).sum(axis=0)
    return gain, dq, dw


def check_rvu(log: harness.EpisodeLog, comparators=None, rng=None, n_random: int = 100,
              weights=None) -> BoundCheck:
    """Per-state RVU over every window diagonal (ExpDRBias) or segment (ExpRestart).

    Conventions at the start of the history: Q_0 = 0, and the predecessor of a play
    with no earlier play in its window sequence is the cold start (uniform).
    """
    cfg = log.learner
    eps = cfg.epsilon
    T, S, A = log.q.shape
    delta_r = Regularizer(A).delta_R
    if comparators is None:
        rng = rng or rng_for(0, "rvu")
        verts = np.broadcast_to(np.eye(A)[:, None, :], (A, S, A))
        comparators = np.concatenate([verts, rng.dirichlet(np.ones(A), size=(n_random, S))])
    comparators = np.asarray(comparators, dtype=float)
    uniform = np.full((S, A), 1.0 / A)
    q_pad = np.concatenate([np.zeros((1, S, A)), log.q])  # q_pad[u] = Q_u, Q_0 = 0
    worst = None

    def consider(gain, dq, dw, label):
        nonlocal worst
        rhs = delta_r / eps + eps * dq - dw / (4.0 * eps)
        slack = rhs[None, :] - gain
        k, s = np.unravel_index(int(np.argmin(slack)), slack.shape)
        cand = (float(slack[k, s]), float(gain[k, s]), float(rhs[s]), {"window": label, "state": int(s)})
        if worst is None or cand[0] < worst[0]:
            worst = cand

    if cfg.algorithm == EXP_DRBIAS:
        if weights is None:
            _, weights = replay(log.q, cfg, keep_weights=True)
        G = cfg.gamma
        for t in range(-G + 2, T + 1):
            taus = np.arange(max(1, 2 - t), min(G, T - t + 1) + 1)
            if taus.size == 0:
                continue
            u = t + taus - 1
            w = weights[u - 1, taus - 1]
            prev = np.empty_like(w)
            for j, (uu, tt) in enumerate(zip(u, taus)):
                prev[j] = uniform if (uu == 1 or tt == 1) else weights[uu - 2, tt - 2]
            consider(*rvu_terms(q_pad[u], w, prev, q_pad[u - 1], comparators), int(t))
    else:
        starts = np.flatnonzero(_segment_starts(T, cfg.gamma)) + 1
        for st in starts:
            u = np.arange(st, min(st + cfg.gamma, T + 1))
            w = log.pi1[u - 1]
            prev = np.concatenate([uniform[None], w[:-1]])
            q_prev = np.concatenate([np.zeros((1, S, A)), q_pad[u[:-1]]])
            consider(*rvu_terms(q_pad[u], w, prev, q_prev, comparators), int(st))
    slack, lhs, rhs, ctx = worst
    ctx["comparators"] = len(comparators)
    return BoundCheck(f"rvu.{cfg.algorithm}", lhs, rhs, context=ctx)


def theorem_k(rho1: float, rho2: float, epsilon: float) -> float:
    return max(rho1, rho2) / epsilon + 1e-12


def check_theorem1(log: harness.EpisodeLog, mix: MixingEstimate, I2: float, regret_value: float) -> BoundCheck:
    cfg = log.learner
    T, G = log.T, cfg.gamma
    rho1, rho2 = float(log.rho1_step.max()), float(log.rho2_step.max())
    k = theorem_k(rho1, rho2, cfg.epsilon)
    c_omega = 18.0 / mix.gap ** 2
    delta_r = Regularizer(log.mdp.n_a1).delta_R
    rhs = 2.0 * (delta_r + k ** 2 * c_omega ** 2) * T * G ** -0.75 + 6.0 * I2 * rho2 * T * G / mix.gap ** 2
    return BoundCheck("theorem1", regret_value, rhs, context={"k": k, "rho1": rho1, "rho2": rho2})


def check_theorem_restart(log: harness.EpisodeLog, mix: MixingEstimate, I2: float, regret_value: float) -> BoundCheck:
    cfg = log.learner
    T, G = log.T, cfg.gamma
    inside = ~_segment_starts(T, G)
    inside[0] = False
    rho1_seg = float(log.rho1_step[inside].max()) if inside.any() else 0.0
    rho2 = float(log.rho2_step.max())
    k = theorem_k(rho1_seg, rho2, cfg.epsilon)
    c_omega = 18.0 / mix.gap ** 2
    delta_r = Regularizer(log.mdp.n_a1).delta_R
    rhs = (delta_r + k ** 2 * c_omega ** 2) * T * G ** -0.75 + 3.0 * I2 * rho2 * T * G / mix.gap ** 2
    return BoundCheck("theorem_restart", regret_value, rhs, context={"k": k, "rho1_segment": rho1_seg, "rho2": rho2})


def check_value_bound(log: harness.EpisodeLog, cert, opt: float, regret_value: float, mix: MixingEstimate) -> BoundCheck:
    rhs = harness.value_lower_bound(cert.lam, cert.mu, opt, regret_value, log.T, log.M, mix.gap) - 1e-9
    return BoundCheck("smooth_value_bound", -float(log.V.mean()), -rhs,
                      context={"lam": cert.lam, "mu": cert.mu, "opt": opt, "V_bar": float(log.V.mean())})


def rate_threshold(alpha: float) -> float:
    if math.isinf(alpha):
        return 0.35
    return max(1.0 - 3.0 * alpha / 7.0, 0.25) + 0.1


def fitted_slope(horizons, regrets) -> float:
    x = np.log(np.asarray(horizons, float))
    y = np.log(np.asarray(regrets, float))
    return float(np.polyfit(x, y, 1)[0])


def check_rate(horizons, regrets, alpha: float) -> BoundCheck:
    """Log-log least-squares slope of regret against T versus the rate exponent + 0.1."""
    regrets = np.asarray(regrets, float)
    if (regrets <= 0).any():
        return BoundCheck("rate", math.inf, rate_threshold(alpha),
                          context={"error": "non-positive regret; slope undefined", "regrets": regrets.tolist()})
    return BoundCheck("rate", fitted_slope(horizons, regrets), rate_threshold(alpha),
                      context={"alpha": alpha, "T": list(map(int, horizons)), "regrets": regrets.tolist()})


# ---------------------------------------------------------------- suite

def instance_checks(mdp: Mdp, rng: np.random.Generator, n_pairs: int = 10, M: int = 100,
                    m_max: int = 20) -> list[BoundCheck]:
    mix = mixing_estimate(mdp)
    s, a1, a2 = mdp.n_states, mdp.n_a1, mdp.n_a2
    out = check_influence_range(mdp)
    for _ in range(n_pairs):
        p1, p1b = random_policy(rng, s, a1), random_policy(rng, s, a1)
        p2, p2b = random_policy(rng, s, a2), random_policy(rng, s, a2)
        out.append(check_eta_q_identity(mdp, p1b, p1, p2))
        out += check_q_bound(mdp, p1, p2, mix)
        out.append(check_max_pol_rew(mdp, p1, p2))
        out += check_diff_pol_rew(mdp, p1, p1b, p2, p2b)
        out.append(check_diff_pol_rew_general(p1, p1b, rng.normal(size=(s, a1))))
        out += check_trans_bound(mdp, p1, p1b, p2, p2b)
        out.append(check_trans_bound_2(mdp, p2, p2b))
        out += check_dist_bound_1(mdp, p1, p1b, p2, p2b, mix)
        out.append(check_return_bound(mdp, p1, p2, M, mix))
    p1, p2 = random_policy(rng, s, a1), random_policy(rng, s, a2)
    out += check_dist_convergence(mdp, p1, p2, mix, m_max)
    out += check_dist_convergence(mdp, p1, p2, mix, m_max, d_start=np.eye(s)[0])
    return out


def state_only_checks(mdp: Mdp, rng: np.random.Generator, n_pairs: int = 10) -> list[BoundCheck]:
    """Influence-smoothness bounds on a copy of ``mdp`` whose reward is averaged over actions."""
    r = np.broadcast_to(mdp.reward.mean(axis=(1, 2))[:, None, None], mdp.reward.shape)
    so = Mdp(mdp.trans, r, mdp.d1)
    cert = harness.smoothness_certificate(so)
    pairs = [(random_policy(rng, so.n_states, so.n_a1), random_policy(rng, so.n_states, so.n_a2))
             for _ in range(n_pairs)]
    return check_influence_smooth_bounds(so, cert, pairs, mixing_estimate(so))


def default_opponent(kind: str, mdp: Mdp, rng: np.random.Generator, gamma: int) -> OpponentSpec:
    s, a2 = mdp.n_states, mdp.n_a2
    if kind == "fixed":
        return OpponentSpec("fixed", start=random_policy(rng, s, a2))
    if kind == "drift":
        return OpponentSpec("drift", start=random_deterministic(rng, s, a2), target=random_deterministic(rng, s, a2),
                            alpha=1.0, c=1.0)
    if kind == "mirror-learner":
        return OpponentSpec("mirror-learner", learner=LearnerConfig(gamma))
    schedule = tuple(random_policy(rng, s, a2) for _ in range(8))
    return OpponentSpec("segment-adversary", start=random_policy(rng, s, a2), schedule=schedule,
                        segment_length=100, cap=0.05)


OPPONENT_CYCLE = ("drift", "fixed", "mirror-learner", "segment-adversary")


def run_checks(log: harness.EpisodeLog, mix: MixingEstimate, rng: np.random.Generator, opt: float | None = None,
               with_value_bound: bool = True, with_rvu: bool = True) -> list[BoundCheck]:
    """All run-level checks for one logged run."""
    mdp = log.mdp
    I2 = harness.influence(mdp, 2)
    weights = None
    if log.learner.algorithm == EXP_DRBIAS and (with_rvu or log.T * log.learner.gamma <= 200_000):
        _, weights = replay(log.q, log.learner, keep_weights=True)
    out = [
        check_return_log(log, mix),
        check_stat_dist_step(log, mix, I2),
        *check_qdiff_lemmas(log, mix, I2),
        check_qdiff_constant(log, mix, I2),
        *check_weight_stability(log, mix, weights),
        *check_cumulative_drift(mdp, log.pi1, log.pi2, mix, I2),
    ]
    if with_rvu:
        out.append(check_rvu(log, rng=rng, weights=weights))
    cert = None
    candidates = ()
    if with_value_bound:
        cert = harness.smoothness_certificate(mdp, extra_pairs=list(zip(log.pi1, log.pi2)))
        candidates = (cert.anchor_p1,)
    comp = harness.best_fixed_comparator(mdp, log.pi2, candidates=candidates)
    regret_value = comp.value - float(log.eta.sum())
    if log.learner.epsilon == log.learner.gamma ** -0.25:
        if log.learner.algorithm == EXP_DRBIAS:
            out.append(check_theorem1(log, mix, I2, regret_value))
        else:
            out.append(check_theorem_restart(log, mix, I2, regret_value))
    if with_value_bound and not cert.trivial:
        opt = harness.opt_value(mdp, log.M) if opt is None else opt
        out.append(check_value_bound(log, cert, opt, regret_value, mix))
    for c in out:
        c.context.setdefault("algorithm", log.learner.algorithm)
        c.context.setdefault("opponent", log.opponent_kind)
    return out


def run_suite(seed: int = 0, n_instances: int = 50, T: int = 500, gamma: int = 32, M: int = 100,
              n_pairs: int = 10, algorithms=(EXP_DRBIAS, EXP_RESTART), instances=None) -> list[BoundCheck]:
    """Instance checks over the battery, then every run check on logged runs of each algorithm."""
    mdps = battery(seed, n_instances) if instances is None else list(instances)
    if not mdps:
        raise ValueError("no instances to verify")
    out = []
    for i, mdp in enumerate(mdps):
        rng = rng_for(seed, "verifier", i)
        checks = instance_checks(mdp, rng, n_pairs=n_pairs, M=M)
        mix = mixing_estimate(mdp)
        opt = harness.opt_value(mdp, M)
        kind = OPPONENT_CYCLE[i % len(OPPONENT_CYCLE)]
        spec = default_opponent(kind, mdp, rng, gamma)
        for alg in algorithms:
            log = harness.run(mdp, LearnerConfig(gamma, algorithm=alg), spec, T, M, seed)
            checks += run_checks(log, mix, rng, opt=opt)
            if kind == "mirror-learner" and alg == EXP_DRBIAS:
                bound = min(2.0, weight_step_bound(spec.learner.epsilon, mix.gap) + 2.0 / spec.learner.gamma)
                checks.append(BoundCheck("mirror_rho2", float(log.rho2_step.max()), bound))
        checks += state_only_checks(mdp, rng)
        for c in checks:
            c.context.setdefault("instance", i)
        out += checks
    return out


def summarize(checks) -> dict:
    """name -> (count, failures, min slack)."""
    table = {}
    for c in checks:
        n, f, s = table.get(c.name, (0, 0, math.inf))
        table[c.name] = (n + 1, f + (not c.passed), min(s, c.slack))
    return table


def format_summary(checks) -> str:
    rows = summarize(checks)
    width = max(len(n) for n in rows) if rows else 4
    lines = [f"{'check':<{width}}  {'count':>6}  {'fail':>5}  {'min slack':>12}"]
    for name in sorted(rows):
        n, f, s = rows[name]
        lines.append(f"{name:<{width}}  {n:>6}  {f:>5}  {s:>12.4g}")
    return "\n".join(lines)
