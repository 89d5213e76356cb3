"""Episodic protocol, regret accounting, and the smoothness machinery."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .bias_q import q_values
from .chain_analysis import (
    MixingEstimate,
    average_reward_batch,
    finite_return,
    finite_return_batch,
    mixing_estimate,
)
from .learners import LearnerConfig, new_state, observe, step
from .mdp_core import (
    CollabError,
    ConfigError,
    Mdp,
    NumericFailure,
    deterministic_stack,
    probs_of,
)
from .opponents import OpponentSpec, init_opponent, next_policy

ENUM_CAP = 1_000_000
REFINE_ITERS = 200
REFINE_STEP = 0.05
FD_STEP = 1e-6
BATCH_PAIRS = 50_000
MIXTURE_WEIGHTS = (0.25, 0.5, 0.75)
GRID_CAP = 10_000
MU_GRID = np.concatenate([[0.0], np.logspace(-3, 3, 121)])
LOG_COLUMNS = ("t", "eta_learner", "eta_comparator_best", "cum_regret", "V_t", "rho1_step", "rho2_step", "q_maxnorm")


class DegenerateCertificate(NumericFailure):
    """eta* = 0: no smoothness certificate exists."""


class PreconditionError(CollabError):
    """An operation's documented precondition does not hold."""


@dataclass
class EpisodeLog:
    mdp: Mdp
    learner: LearnerConfig
    opponent_kind: str
    M: int
    seed: int
    pi1: np.ndarray  # (T, S, A1)
    pi2: np.ndarray  # (T, S, A2)
    eta: np.ndarray  # eta_t(pi1_t)
    V: np.ndarray
    q: np.ndarray  # (T, S, A1)
    d: np.ndarray  # (T, S) stationary distributions
    bellman: np.ndarray

    @property
    def T(self) -> int:
        return len(self.eta)

    @property
    def rho1_step(self) -> np.ndarray:
        return _steps(self.pi1)

    @property
    def rho2_step(self) -> np.ndarray:
        return _steps(self.pi2)

    @property
    def q_maxnorm(self) -> np.ndarray:
        return np.abs(self.q).max(axis=(1, 2))

    @property
    def q_pi(self) -> np.ndarray:
        """Q_t^{pi1_t} for every episode, shape (T, S)."""
        return np.einsum("tsa,tsa->ts", self.pi1, self.q)


def _steps(seq) -> np.ndarray:
    """||x_t - x_{t-1}||_inf per episode, 0 at t = 1."""
    out = np.zeros(len(seq))
    if len(seq) > 1:
        out[1:] = np.abs(np.diff(seq, axis=0)).sum(axis=2).max(axis=1)
    return out


def run(mdp: Mdp, learner_cfg: LearnerConfig, opp_spec: OpponentSpec, T: int, M: int, seed: int = 0) -> EpisodeLog:
    """Commit pi1_t, collect V_t exactly, observe pi2_t, compute Q_t, update.

    The protocol itself is deterministic; ``seed`` is recorded for provenance.
    """
    if T < 1 or M < 1:
        raise ConfigError(f"T and M must be >= 1 (got T={T}, M={M})")
    if learner_cfg.gamma > T:
        raise ConfigError(f"gamma {learner_cfg.gamma} exceeds horizon T={T}")
    s, a1, a2 = mdp.n_states, mdp.n_a1, mdp.n_a2
    state = new_state(learner_cfg, s, a1)
    opp = init_opponent(opp_spec, mdp)
    pi1 = np.empty((T, s, a1))
    pi2 = np.empty((T, s, a2))
    q = np.empty((T, s, a1))
    d = np.empty((T, s))
    eta, V, bell = np.empty(T), np.empty(T), np.empty(T)
    for i in range(T):
        p1 = step(state, learner_cfg)
        p2 = opp.policy
        V[i] = finite_return(mdp, p1, p2, M)
        qt = q_values(mdp, p1, p2)
        observe(state, qt)
        pi1[i], pi2[i], q[i], d[i] = p1.probs, p2, qt.q, qt.d
        eta[i], bell[i] = qt.eta, qt.bellman_residual
        if i + 1 < T:
            next_policy(opp, opp_spec, T, p1)
    return EpisodeLog(mdp, learner_cfg, opp_spec.kind, M, seed, pi1, pi2, eta, V, q, d, bell)


# ---------------------------------------------------------------- comparator

@dataclass
class Comparator:
    policy: np.ndarray
    value: float  # sum_t eta_t(pi1*)
    method: str
    per_episode: np.ndarray  # eta_t(pi1*)


class _SeqObjective:
    """sum_t eta_t(pi1) with repeated pi2_t collapsed to weighted unique rows."""

    def __init__(self, mdp: Mdp, pi2_seq):
        self.mdp = mdp
        seq = np.asarray([probs_of(p) for p in pi2_seq])
        flat = seq.reshape(len(seq), -1)
        uniq, inverse, counts = np.unique(flat, axis=0, return_inverse=True, return_counts=True)
        self.inverse = inverse.reshape(-1)
        self.unique = uniq.reshape((-1,) + seq.shape[1:])
        self.counts = counts.astype(float)

    def per_unique(self, p1_stack) -> np.ndarray:
        """eta for every (candidate, unique pi2) pair, shape (K, U)."""
        p1_stack = np.asarray(p1_stack, dtype=float)
        k, u = len(p1_stack), len(self.unique)
        out = np.empty((k, u))
        rows = max(1, BATCH_PAIRS // u)
        for lo in range(0, k, rows):
            block = p1_stack[lo:lo + rows]
            b = len(block)
            p1 = np.repeat(block, u, axis=0)
            p2 = np.tile(self.unique, (b, 1, 1))
            out[lo:lo + b] = average_reward_batch(self.mdp, p1, p2).reshape(b, u)
        return out

    def totals(self, p1_stack) -> np.ndarray:
        return self.per_unique(p1_stack) @ self.counts

    def per_episode(self, p1) -> np.ndarray:
        return self.per_unique(np.asarray(p1)[None])[0][self.inverse]


def project_simplex_rows(x) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex (sort-based)."""
    x = np.asarray(x, dtype=float)
    u = -np.sort(-x, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    k = np.arange(1, x.shape[-1] + 1)
    rho = np.count_nonzero(u - css / k > 0, axis=-1)
    theta = np.take_along_axis(css, (rho - 1)[..., None], axis=-1) / rho[..., None]
    return np.maximum(x - theta, 0.0)


def _refine(obj: _SeqObjective, start: np.ndarray, start_value: float):
    """Projected finite-difference ascent on the per-episode mean objective."""
    s, a = start.shape
    T = obj.counts.sum()
    pi, best, best_val = start.copy(), start.copy(), start_value
    cur_val = start_value
    for _ in range(REFINE_ITERS):
        probes = np.repeat(pi[None], s * a, axis=0)
        probes[np.arange(s * a), np.repeat(np.arange(s), a), np.tile(np.arange(a), s)] += FD_STEP
        probes /= probes.sum(axis=2, keepdims=True)
        vals = obj.totals(probes)
        grad = ((vals - cur_val) / FD_STEP / T).reshape(s, a)
        nxt = project_simplex_rows(pi + REFINE_STEP * grad)
        if np.abs(nxt - pi).max() < 1e-12:
            break
        pi = nxt
        cur_val = float(obj.totals(pi[None])[0])
        if cur_val > best_val:
            best, best_val = pi.copy(), cur_val
    return best, best_val


def best_fixed_comparator(mdp: Mdp, pi2_sequence, candidates=(), refine: bool = True) -> Comparator:
    """Best fixed agent-1 policy found: all deterministic policies, any extra
    candidates, then local refinement from the best of those.

    The value is a certified lower bound on the sup over stationary policies.
    """
    if len(pi2_sequence) == 0:
        raise ValueError("pi2 sequence is empty")
    n_det = mdp.n_a1 ** mdp.n_states
    if n_det > ENUM_CAP:
        raise PreconditionError(f"{n_det} deterministic policies exceed the enumeration cap {ENUM_CAP}")
    obj = _SeqObjective(mdp, pi2_sequence)
    pool = deterministic_stack(mdp.n_states, mdp.n_a1)
    if len(candidates):
        pool = np.concatenate([pool, np.asarray([probs_of(c) for c in candidates])])
    totals = obj.totals(pool)
    i = int(np.argmax(totals))
    best, best_val = pool[i], float(totals[i])
    method = "enumeration"
    if refine and mdp.n_a1 > 1:
        method = "enumeration+local-refine"
        best, best_val = _refine(obj, best, best_val)
    return Comparator(best, best_val, method, obj.per_episode(best))


# ---------------------------------------------------------------- reports

@dataclass
class RegretReport:
    comparator_policy: np.ndarray
    comparator_value: float
    learner_value: float
    regret: float
    method: str
    V_bar: float
    opt: float | None = None
    value_lower_bound: float | None = None

    def to_dict(self) -> dict:
        return {
            "comparator_policy": self.comparator_policy.tolist(),
            "comparator_value": self.comparator_value,
            "learner_value": self.learner_value,
            "regret": self.regret,
            "method": self.method,
            "V_bar": self.V_bar,
            "opt": self.opt,
            "value_lower_bound": self.value_lower_bound,
        }


def value_lower_bound(lam: float, mu: float, opt: float, regret_value: float, T: int, M: int, gap: float) -> float:
    """(lam/(1+mu)) Opt - R/((1+mu)T) - 2(1 + lam/(1+mu))/(M(1-e))."""
    ratio = lam / (1.0 + mu)
    return ratio * opt - regret_value / ((1.0 + mu) * T) - 2.0 * (1.0 + ratio) / (M * gap)


def regret(log: EpisodeLog, comparator: Comparator, certificate=None, opt: float | None = None,
           mixing: MixingEstimate | None = None) -> RegretReport:
    if len(comparator.per_episode) != log.T:
        raise ValueError("comparator and log lengths differ")
    learner_value = float(log.eta.sum())
    r = comparator.value - learner_value
    rep = RegretReport(comparator.policy, comparator.value, learner_value, r, comparator.method,
                       float(log.V.mean()), opt)
    if certificate is not None and opt is not None:
        mixing = mixing or mixing_estimate(log.mdp)
        rep.value_lower_bound = value_lower_bound(certificate.lam, certificate.mu, opt, r, log.T, log.M, mixing.gap)
    return rep


def cumulative_regret(log: EpisodeLog, comparator: Comparator) -> np.ndarray:
    return np.cumsum(comparator.per_episode - log.eta)


def log_to_csv(log: EpisodeLog, comparator: Comparator) -> str:
    """EpisodeLog as CSV text ('.' decimal, '\\n' line endings, header row)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    cum = cumulative_regret(log, comparator)
    cols = (log.eta, comparator.per_episode, cum, log.V, log.rho1_step, log.rho2_step, log.q_maxnorm)
    for i in range(log.T):
        w.writerow([i + 1] + [repr(float(c[i])) for c in cols])
    return buf.getvalue()


# ---------------------------------------------------------------- Opt, influence

def _joint_det_pairs(mdp: Mdp):
    k1 = mdp.n_a1 ** mdp.n_states
    k2 = mdp.n_a2 ** mdp.n_states
    if k1 * k2 > ENUM_CAP:
        raise PreconditionError(f"{k1 * k2} deterministic joint policies exceed the cap {ENUM_CAP}")
    return deterministic_stack(mdp.n_states, mdp.n_a1), deterministic_stack(mdp.n_states, mdp.n_a2)


def opt_value(mdp: Mdp, M: int) -> float:
    """max finite_return over deterministic stationary joint policies."""
    d1s, d2s = _joint_det_pairs(mdp)
    best = -math.inf
    rows = max(1, BATCH_PAIRS // len(d2s))
    for lo in range(0, len(d1s), rows):
        block = d1s[lo:lo + rows]
        p1 = np.repeat(block, len(d2s), axis=0)
        p2 = np.tile(d2s, (len(block), 1, 1))
        best = max(best, float(finite_return_batch(mdp, p1, p2, M).max()))
    return best


def influence(mdp: Mdp, which_agent: int = 2) -> float:
    """sup ||P_{pi1,pi2} - P_{pi1,pi2'}||_inf / ||pi2 - pi2'||_inf (I_2; I_1 with roles swapped).

    Equal to the max over deterministic triples: for two deterministic policies the
    denominator is 2 and the numerator is the largest single-state row change, so the
    ratio is max over (s, a_own, b, b') of 1/2 ||P(s, ., b, .) - P(s, ., b', .)||_1 with
    the other agent's action a_own fixed.  The same per-state bound caps every mixed
    triple, so this is also the exact sup.
    """
    if which_agent not in (1, 2):
        raise ValueError("which_agent must be 1 or 2")
    trans = mdp.trans if which_agent == 2 else mdp.trans.transpose(0, 2, 1, 3)
    if trans.shape[2] < 2:
        return 0.0
    diff = np.abs(trans[:, :, :, None, :] - trans[:, :, None, :, :]).sum(axis=-1)
    return float(min(1.0, 0.5 * diff.max()))


def diameters(mdp: Mdp, policy_sets=None) -> tuple[float, float]:
    """l1 diameters of the two full policy simplices."""
    if policy_sets is not None:
        raise PreconditionError("restricted policy sets are not supported")
    return (2.0 if mdp.n_a1 >= 2 else 0.0), (2.0 if mdp.n_a2 >= 2 else 0.0)


# ---------------------------------------------------------------- smoothness

@dataclass
class SmoothnessCertificate:
    lam: float
    mu: float
    anchor_p1: np.ndarray
    anchor_p2: np.ndarray
    eta_star: float
    grid: str
    n_pairs: int
    min_slack_first: float  # min over pairs of eta_{pi2}(pi1*) - lam eta* + mu eta_{pi2}(pi1)
    min_slack_second: float  # min over pairs of eta* - eta(pi1, pi2)
    diameters: tuple[float, float] = (2.0, 2.0)
    p1: float | None = None
    p2: float | None = None
    kappa1: float | None = None
    kappa2: float | None = None
    eta_hat: float | None = None

    @property
    def ratio(self) -> float:
        return self.lam / (1.0 + self.mu)

    @property
    def trivial(self) -> bool:
        return not self.lam > 0

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "lam", "mu", "eta_star", "grid", "n_pairs", "min_slack_first", "min_slack_second",
            "p1", "p2", "kappa1", "kappa2", "eta_hat")}
        out["anchor_p1"] = self.anchor_p1.tolist()
        out["anchor_p2"] = self.anchor_p2.tolist()
        out["diameters"] = list(self.diameters)
        out["ratio"] = self.ratio
        out["trivial"] = self.trivial
        return out


def policy_grid(n_states: int, n_actions: int, weights=MIXTURE_WEIGHTS) -> tuple[np.ndarray, int]:
    """Deterministic vertices followed by mixtures w*v_i + (1-w)*v_j, i < j."""
    verts = deterministic_stack(n_states, n_actions)
    n = len(verts)
    mixes = []
    for i in range(n):
        for j in range(i + 1, n):
            for w in weights:
                mixes.append(w * verts[i] + (1.0 - w) * verts[j])
    grid = np.concatenate([verts, np.asarray(mixes)]) if mixes else verts
    return grid, n


def _shell_pairs(n1: int, n2: int, skip_v1: int, skip_v2: int, budget: int):
    """Index pairs ordered by max(i, j), skipping the vertex-by-vertex block."""
    out = []
    for m in range(max(n1, n2)):
        cand = []
        if m < n1:
            cand += [(m, j) for j in range(min(m + 1, n2))]
        if m < n2:
            cand += [(i, m) for i in range(min(m, n1))]
        for i, j in cand:
            if i < skip_v1 and j < skip_v2:
                continue
            out.append((i, j))
            if len(out) >= budget:
                return out
    return out


def smoothness_certificate(mdp: Mdp, weights=MIXTURE_WEIGHTS, max_pairs: int = GRID_CAP,
                           extra_pairs=()) -> SmoothnessCertificate:
    """Largest lam/(1+mu) certified on a policy-pair grid.

    The grid holds every deterministic joint pair plus mixture pairs in order of
    grid index until ``max_pairs`` pairs in total.  ``extra_pairs`` (for example a
    run's logged pairs) join the grid.
    """
    g1, v1 = policy_grid(mdp.n_states, mdp.n_a1, weights)
    g2, v2 = policy_grid(mdp.n_states, mdp.n_a2, weights)
    if v1 * v2 > ENUM_CAP:
        raise PreconditionError(f"{v1 * v2} vertex pairs exceed the cap {ENUM_CAP}")
    vi, vj = np.divmod(np.arange(v1 * v2), v2)
    extra = _shell_pairs(len(g1), len(g2), v1, v2, max(0, max_pairs - v1 * v2))
    if extra:
        ei, ej = np.array(extra).T
        vi, vj = np.concatenate([vi, ei]), np.concatenate([vj, ej])
    P1, P2 = g1[vi], g2[vj]
    if len(extra_pairs):
        P1 = np.concatenate([P1, [probs_of(p) for p, _ in extra_pairs]])
        P2 = np.concatenate([P2, [probs_of(p) for _, p in extra_pairs]])
    eta = _eta_pairs(mdp, P1, P2)
    k = int(np.argmax(eta))
    eta_star = float(eta[k])
    if eta_star <= 0:
        raise DegenerateCertificate("eta* = 0 on the grid; no certificate")
    anchor1, anchor2 = P1[k], P2[k]
    dev = _eta_pairs(mdp, np.broadcast_to(anchor1, P1.shape), P2)  # eta_{pi2}(pi1*)
    lam_mu = np.min((dev[None, :] + MU_GRID[:, None] * eta[None, :]) / eta_star, axis=1)
    score = lam_mu / (1.0 + MU_GRID)
    best = int(np.argmax(score))
    lam, mu = float(lam_mu[best]), float(MU_GRID[best])
    slack1 = float(np.min(dev - lam * eta_star + mu * eta))
    slack2 = float(np.min(eta_star - eta))
    desc = (f"{v1}x{v2} deterministic pairs + {len(extra)} mixture pairs at weights {list(weights)}"
            f" + {len(extra_pairs)} extra pairs")
    return SmoothnessCertificate(lam, mu, anchor1.copy(), anchor2.copy(), eta_star, desc, len(eta),
                                 slack1, slack2, diameters(mdp))


def _eta_pairs(mdp, P1, P2) -> np.ndarray:
    out = np.empty(len(P1))
    for lo in range(0, len(P1), BATCH_PAIRS):
        out[lo:lo + BATCH_PAIRS] = average_reward_batch(mdp, P1[lo:lo + BATCH_PAIRS], P2[lo:lo + BATCH_PAIRS])
    return out


def state_only_reward(mdp: Mdp, tol: float = 1e-12) -> bool:
    r = mdp.reward.reshape(mdp.n_states, -1)
    return bool(np.all(np.abs(r - r[:, :1]) <= tol))


def kappa_bounds(kappa1: float, kappa2: float, p1: float, p2: float) -> tuple[float, float]:
    """(upper bound on lam, lower bound on mu) from the influence-based smoothness proposition."""
    if not p1 > p2 >= 0:
        raise PreconditionError(f"need p1 > p2 >= 0, got p1={p1}, p2={p2}")
    if not kappa2 >= kappa1 > 1:
        raise PreconditionError(f"need kappa2 >= kappa1 > 1, got {kappa1}, {kappa2}")
    frac2 = 1.0 if math.isinf(kappa2) else (2 * kappa2 - 1) / (2 * kappa2)
    frac1 = 1.0 if math.isinf(kappa1) else (2 * kappa1 - 1) / (2 * kappa1 - 2)
    return p1 / (p1 - p2) * frac2, p2 / (p1 - p2) * frac1


@dataclass
class KappaReport:
    kappa1: float
    kappa2: float
    eta_hat: float
    eta_star: float
    influence1: float
    influence2: float
    lam_max: float | None = None
    mu_min: float | None = None


def kappa_factors(mdp: Mdp, eta_hat: float, p1: float | None = None, p2: float | None = None,
                  mixing: MixingEstimate | None = None) -> KappaReport:
    """kappa_i = (1 - e_hat) eta_hat / (2 I_i Delta_i); +inf when I_i Delta_i = 0."""
    if not state_only_reward(mdp):
        raise PreconditionError("kappa factors need a state-only reward")
    d1s, d2s = _joint_det_pairs(mdp)
    eta_star = float(_eta_pairs(mdp, np.repeat(d1s, len(d2s), axis=0), np.tile(d2s, (len(d1s), 1, 1))).max())
    if eta_hat > eta_star + 1e-12:
        raise PreconditionError(f"eta_hat {eta_hat} exceeds eta* {eta_star}")
    mixing = mixing or mixing_estimate(mdp)
    i1, i2 = influence(mdp, 1), influence(mdp, 2)
    dia1, dia2 = diameters(mdp)

    def kappa(i, dia):
        denom = 2.0 * i * dia
        return math.inf if denom == 0 else mixing.gap * eta_hat / denom

    rep = KappaReport(kappa(i1, dia1), kappa(i2, dia2), eta_hat, eta_star, i1, i2)
    if p1 is not None and p2 is not None:
        rep.lam_max, rep.mu_min = kappa_bounds(rep.kappa1, rep.kappa2, p1, p2)
    return rep


__all__ = [
    "EpisodeLog", "run", "Comparator", "best_fixed_comparator", "RegretReport", "regret", "value_lower_bound",
    "cumulative_regret", "log_to_csv", "opt_value", "influence", "diameters", "SmoothnessCertificate",
    "smoothness_certificate", "policy_grid", "kappa_factors", "kappa_bounds", "KappaReport",
    "state_only_reward", "project_simplex_rows", "DegenerateCertificate", "PreconditionError",
]
