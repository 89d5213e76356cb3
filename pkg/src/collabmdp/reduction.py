"""Layered shortest-path rounds encoded as the two-agent MDP plus an agent-2 schedule.

State order: s0 = 0, s_{l,x} = 1 + 2(l-1) + x for l = 1..L, s_{L+1} = 2L + 1.
Agent-2 action order: a_a, a_{0,0}, a_{0,1}, a_{1,0}, a_{1,1}, a_{b,0..3}.

Path value: V = (1/(L+1)) * sum of the weights of all L+1 edges on the walk from
n0, so that eta is proportional to V (the first edge n0 -> n1 is rewarded by the
MDP like every other edge).
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chain_analysis import average_reward
from .mdp_core import ConfigError, Mdp, Policy, checked_mdp, op_inf_norm

A_STAY = 0
N_A2 = 9


def a_single(i: int, j: int) -> int:
    """a_{i,j}: move to successor i with reward j."""
    return 1 + 2 * i + j


def a_branch(r: int) -> int:
    """a_{b,r}: successor chosen by agent 1; r encodes the two edge weights."""
    return 5 + r


def state_index(L: int, layer: int, x: int = 0) -> int:
    if layer == 0:
        return 0
    if layer == L + 1:
        return 2 * L + 1
    return 1 + 2 * (layer - 1) + x


def _width(L: int, layer: int) -> int:
    return 1 if layer in (0, L + 1) else 2


@dataclass(frozen=True)
class LayeredGraphRound:
    """present[l, x, y] / weight[l, x, y]: edge from node (l, x) to node (l+1, y), l = 0..L."""

    L: int
    present: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        L = self.L
        if int(L) != L or L < 1:
            raise ConfigError(f"L must be a positive integer, got {L}")
        present = np.asarray(self.present, dtype=bool)
        weight = np.asarray(self.weight, dtype=int)
        if present.shape != (L + 1, 2, 2) or weight.shape != (L + 1, 2, 2):
            raise ConfigError(f"edge arrays must have shape {(L + 1, 2, 2)}")
        for l in range(L + 1):
            for x in range(2):
                for y in range(2):
                    if present[l, x, y] and (x >= _width(L, l) or y >= _width(L, l + 1)):
                        raise ConfigError(f"edge ({l},{x})->({l + 1},{y}) violates the layering")
            for x in range(_width(L, l)):
                if not present[l, x].any():
                    raise ConfigError(f"node ({l},{x}) has no outgoing edge")
        if not np.isin(weight[present], (0, 1)).all():
            raise ConfigError("edge weights must be 0 or 1")
        object.__setattr__(self, "present", present)
        object.__setattr__(self, "weight", np.where(present, weight, 0))

    @classmethod
    def from_dict(cls, data: dict) -> "LayeredGraphRound":
        try:
            L = int(data["L"])
            edges = data["edges"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"graph round needs 'L' and 'edges': {exc}") from None
        if len(edges) != L + 1:
            raise ConfigError(f"'edges' needs L+1 = {L + 1} layer lists, got {len(edges)}")
        present = np.zeros((L + 1, 2, 2), dtype=bool)
        weight = np.zeros((L + 1, 2, 2), dtype=int)
        for l, layer in enumerate(edges):
            for edge in layer:
                x, y, w = (int(v) for v in edge)
                if not (0 <= x < 2 and 0 <= y < 2):
                    raise ConfigError(f"edge {edge} in layer {l} has a bad endpoint")
                present[l, x, y] = True
                weight[l, x, y] = w
        return cls(L, present, weight)

    def to_dict(self) -> dict:
        edges = []
        for l in range(self.L + 1):
            edges.append([[x, y, int(self.weight[l, x, y])]
                          for x in range(2) for y in range(2) if self.present[l, x, y]])
        return {"L": self.L, "edges": edges}

    def successor(self, layer: int, x: int, choice: int) -> int:
        """Successor index taken from node (layer, x); a missing choice falls back to the existing edge."""
        if self.present[layer, x, choice]:
            return choice
        return int(np.flatnonzero(self.present[layer, x])[0])

    def walk(self, succ_map) -> list[tuple[int, int, int]]:
        """Edges (layer, x, y) visited from n0 under a successor map."""
        out, x = [], 0
        for l in range(self.L + 1):
            choice = 0 if l == self.L else int(succ_map[l][x])
            y = self.successor(l, x, choice)
            out.append((l, x, y))
            x = y
        return out

    def path_value(self, succ_map) -> float:
        return float(sum(self.weight[e] for e in self.walk(succ_map)) / (self.L + 1))


@dataclass(frozen=True)
class ReducedInstance:
    mdp: Mdp
    rho2: float
    pi2_schedule: tuple
    rounds: tuple

    def schedule_steps(self) -> np.ndarray:
        """Measured ||pi2_t - pi2_{t-1}||_inf for t = 2..T."""
        return np.array([op_inf_norm(b - a) for a, b in zip(self.pi2_schedule, self.pi2_schedule[1:])])


def build_mdp(L: int) -> Mdp:
    """The deterministic transition tensor and reward table for L layers; d1 = delta on s0."""
    if int(L) != L or L < 1:
        raise ConfigError(f"L must be >= 1, got {L}")
    n = 2 * L + 2
    trans = np.zeros((n, 2, N_A2, n))
    for layer in range(L + 1):
        for x in range(_width(L, layer)):
            s = state_index(L, layer, x)
            trans[s, :, A_STAY, s] = 1.0
            if layer == L:
                trans[s, :, 1:, state_index(L, L + 1)] = 1.0
                continue
            for j in range(2):
                trans[s, :, a_single(0, j), state_index(L, layer + 1, 0)] = 1.0
                trans[s, :, a_single(1, j), state_index(L, layer + 1, 1)] = 1.0
            for a1 in range(2):
                trans[s, a1, 5:, state_index(L, layer + 1, a1)] = 1.0
    trans[2 * L + 1, :, :, 0] = 1.0
    reward = np.zeros((n, 2, N_A2))
    reward[:, :, a_single(0, 1)] = 1.0
    reward[:, :, a_single(1, 1)] = 1.0
    reward[:, 0, a_branch(1)] = 1.0
    reward[:, 1, a_branch(2)] = 1.0
    reward[:, :, a_branch(3)] = 1.0
    d1 = np.zeros(n)
    d1[0] = 1.0
    return checked_mdp(trans, reward, d1)


def _rho_action(g: LayeredGraphRound, layer: int, x: int) -> int:
    """The agent-2 action carrying the rho2 mass at node (layer, x)."""
    if layer == g.L:
        return a_single(0, int(g.weight[layer, x, 0]))
    out = g.present[layer, x]
    if out.all():
        return a_branch(int(g.weight[layer, x, 0] + 2 * g.weight[layer, x, 1]))
    i = int(np.flatnonzero(out)[0])
    return a_single(i, int(g.weight[layer, x, i]))


def encode_round(g: LayeredGraphRound, rho2: float) -> Policy:
    """pi2_t: mass 1 - rho2 on a_a and rho2 on the encoding action at every non-terminal state."""
    if not 0 < rho2 <= 1:
        raise ConfigError(f"rho2 must lie in (0, 1], got {rho2}")
    probs = np.zeros((2 * g.L + 2, N_A2))
    for layer in range(g.L + 1):
        for x in range(_width(g.L, layer)):
            s = state_index(g.L, layer, x)
            probs[s, A_STAY] += 1.0 - rho2
            probs[s, _rho_action(g, layer, x)] += rho2
    probs[2 * g.L + 1, A_STAY] = 1.0
    return Policy(probs, 2)


def encode_path_policy(succ_map, L: int) -> Policy:
    """pi1 from a successor map: action 1 where the map picks index 1; zero at layer L and the terminal.

    ``succ_map[0][0]`` is n0's choice and ``succ_map[l][x]`` node (l, x)'s for l = 1..L-1.
    """
    if len(succ_map) < L:
        raise ConfigError(f"successor map needs {L} layers, got {len(succ_map)}")
    act = np.zeros(2 * L + 2, dtype=int)
    for layer in range(L):
        for x in range(_width(L, layer)):
            c = int(succ_map[layer][x])
            if c not in (0, 1):
                raise ConfigError(f"successor choice {c} at ({layer},{x}) is not 0 or 1")
            act[state_index(L, layer, x)] = c
    return Policy(np.eye(2)[act], 1)


def all_successor_maps(L: int):
    """Every successor map over layers 0..L-1."""
    slots = [(0, 0)] + [(l, x) for l in range(1, L) for x in range(2)]
    for bits in itertools.product((0, 1), repeat=len(slots)):
        m = [[0]] + [[0, 0] for _ in range(1, L)]
        for (l, x), b in zip(slots, bits):
            m[l][x] = b
        yield m


def reduce_rounds(rounds, rho2: float) -> ReducedInstance:
    rounds = tuple(rounds)
    if not rounds:
        raise ConfigError("no graph rounds given")
    L = rounds[0].L
    if any(g.L != L for g in rounds):
        raise ConfigError("all rounds must share the same layer count")
    schedule = tuple(encode_round(g, rho2).probs for g in rounds)
    return ReducedInstance(build_mdp(L), float(rho2), schedule, rounds)


def constructed_steps(inst: ReducedInstance) -> np.ndarray:
    """2 rho2 for consecutive rounds whose encoding action differs at some state, else 0."""
    out = []
    for a, b in zip(inst.rounds, inst.rounds[1:]):
        changed = any(_rho_action(a, l, x) != _rho_action(b, l, x)
                      for l in range(a.L + 1) for x in range(_width(a.L, l)))
        out.append(2.0 * inst.rho2 if changed else 0.0)
    return np.array(out)


@dataclass
class CorrespondenceReport:
    """Per round: eta and V for every successor map, the eta/V ratios where V > 0,
    their relative spread, and the largest eta among V = 0 maps."""

    rounds: list

    @property
    def max_spread(self) -> float:
        return max((r["ratio_spread"] for r in self.rounds), default=0.0)

    def to_dict(self) -> dict:
        return {"rounds": self.rounds, "max_spread": self.max_spread}


def check_correspondence(inst: ReducedInstance, paths=None) -> CorrespondenceReport:
    """eta of each encoded (pi1, pi2_t) against the path value V_t."""
    L = inst.mdp.n_states // 2 - 1
    paths = list(all_successor_maps(L)) if paths is None else list(paths)
    out = []
    for t, (g, p2) in enumerate(zip(inst.rounds, inst.pi2_schedule), start=1):
        etas, values = [], []
        for m in paths:
            etas.append(average_reward(inst.mdp, encode_path_policy(m, L), p2))
            values.append(g.path_value(m))
        etas, values = np.array(etas), np.array(values)
        pos = values > 0
        ratios = etas[pos] / values[pos]
        spread = float((ratios.max() - ratios.min()) / abs(ratios.mean())) if ratios.size else 0.0
        out.append({
            "round": t,
            "eta": etas.tolist(),
            "V": values.tolist(),
            "ratios": ratios.tolist(),
            "ratio_spread": spread,
            "max_eta_at_zero_V": float(etas[~pos].max()) if (~pos).any() else 0.0,
        })
    return CorrespondenceReport(out)


def random_round(rng: np.random.Generator, L: int, edge_prob: float = 0.6) -> LayeredGraphRound:
    """Random valid round: each allowed edge kept with edge_prob, at least one per node."""
    present = np.zeros((L + 1, 2, 2), dtype=bool)
    for l in range(L + 1):
        wy = _width(L, l + 1)
        for x in range(_width(L, l)):
            keep = rng.random(wy) < edge_prob
            if not keep.any():
                keep[rng.integers(wy)] = True
            present[l, x, :wy] = keep
    weight = rng.integers(0, 2, size=(L + 1, 2, 2))
    return LayeredGraphRound(L, present, weight)


def load_rounds(path) -> list[LayeredGraphRound]:
    """Graph-rounds JSON: {"schema": 1, "rounds": [{"L": .., "edges": [[[x, y, w], ..], ..]}, ..]}."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict) or data.get("schema") != 1 or not isinstance(data.get("rounds"), list):
        raise ConfigError(f"{path}: expected an object with schema 1 and a 'rounds' list")
    return [LayeredGraphRound.from_dict(r) for r in data["rounds"]]


def schedule_to_dict(inst: ReducedInstance) -> dict:
    return {"schema": 1, "rho2": inst.rho2, "pi2": [p.tolist() for p in inst.pi2_schedule]}
