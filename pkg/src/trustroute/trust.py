"""Regret, the fixed-step trust update, and repeated interactions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assign import SolverConfig
from .latency import FlowVector, edge_arrays
from .net import Network, PathSet
from .strategies import (
    DemandGroup,
    StrategyOutcome,
    complete_compliance,
    get_strategy,
    selfish_path,
    simulate_response,
)

DEFAULT_EPSILON = 0.25


def regret(chosen_latency: float, prior_best_latency: float) -> float:
    """Positive when the taken path was slower than the group's own pick."""
    return chosen_latency - prior_best_latency


def update_trust(alpha: float, regret_value: float, epsilon: float = DEFAULT_EPSILON) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    if regret_value < 0:
        return min(1.0, alpha + epsilon)
    if regret_value > 0:
        return max(0.0, alpha - epsilon)
    return alpha


REGRET_MODES = ("realized", "counterfactual")
# relative to the own-path latency; differences below this are solver noise
REGRET_TOL = 1e-9


def group_regret(outcome: StrategyOutcome, group: DemandGroup, mode: str = "realized") -> float:
    """Amount-weighted regret of ``group``.

    ``realized``: each piece the group drove is compared with the group's own
    preferred path, both at realised latencies. ``counterfactual``: the
    preferred path is priced on the flow that would have resulted had the
    group ignored the system and sent all of its demand there.
    """
    if mode not in REGRET_MODES:
        raise ValueError(f"unknown regret mode {mode!r}")
    flow = outcome.realized_flow
    pieces = outcome.choices.get(group.id)
    if not pieces or group.amount <= 0:
        return 0.0
    total = sum(a for _, a in pieces)
    if total <= 0:
        return 0.0
    lat = _latency_lookup(flow)
    own = selfish_path(group)
    if mode == "realized":
        best = lat(own)
    else:
        pos = {p: k for k, p in enumerate(flow.paths)}
        x = flow.path_array.copy()
        for p, a in pieces:
            x[pos[p]] -= a
        x[pos[own]] += total
        alt = FlowVector.from_path_flows(flow.network, flow.paths, np.maximum(x, 0.0))
        best = _latency_lookup(alt)(own)
    value = sum(a * regret(lat(p), best) for p, a in pieces) / total
    return 0.0 if abs(value) <= REGRET_TOL * abs(best) else value


def _latency_lookup(flow: FlowVector):
    edge_lat = edge_arrays(flow.network).latency(flow.edge_array)
    index = flow.network.edge_index()
    cache: dict = {}

    def lat(path):
        if path not in cache:
            cache[path] = float(sum(edge_lat[index[e]] for e in path.edges))
        return cache[path]

    return lat


@dataclass(frozen=True)
class TrustRecord:
    iteration: int
    group_id: int
    alpha_before: float
    alpha_after: float
    regret: float
    accepted: bool


@dataclass
class TrustState:
    alpha: dict[int, float]
    epsilon: float = DEFAULT_EPSILON
    history: list[TrustRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        for gid, a in self.alpha.items():
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"group {gid}: alpha {a} outside [0, 1]")

    def step(self, iteration: int, regrets: dict[int, float], accepted: dict[int, bool]) -> None:
        for gid in sorted(self.alpha):
            before = self.alpha[gid]
            after = update_trust(before, regrets[gid], self.epsilon)
            self.alpha[gid] = after
            self.history.append(TrustRecord(iteration, gid, before, after, regrets[gid], accepted[gid]))

    def series(self, group_id: int) -> list[float]:
        """Trust after each interaction."""
        return [r.alpha_after for r in self.history if r.group_id == group_id]

    def mean_series(self) -> np.ndarray:
        """Demand-unweighted mean trust after each interaction."""
        by_iter: dict[int, list[float]] = {}
        for r in self.history:
            by_iter.setdefault(r.iteration, []).append(r.alpha_after)
        return np.array([np.mean(by_iter[k]) for k in sorted(by_iter)])


def run_strategy(name: str, network: Network, paths: PathSet, groups: Sequence[DemandGroup], cfg: SolverConfig):
    if name.upper() == "CC":
        return complete_compliance(network, paths, groups, cfg)
    return get_strategy(name)(network, paths, groups, cfg)


def repeated_interaction(
    network: Network,
    paths: PathSet,
    groups: Sequence[DemandGroup],
    strategy: str,
    interactions: int,
    epsilon: float = DEFAULT_EPSILON,
    mode: str = "bernoulli",
    seed=0,
    cfg: SolverConfig = SolverConfig(),
    regret_mode: str = "realized",
) -> TrustState:
    """Recompute, respond, feel regret, update trust; ``interactions`` times."""
    if interactions < 1:
        raise ValueError("interactions must be >= 1")
    get_strategy(strategy) if strategy.upper() != "CC" else None
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.PCG64(seed))
    state = TrustState({g.id: g.alpha for g in groups}, epsilon)
    current = list(groups)
    for it in range(1, interactions + 1):
        profile = run_strategy(strategy, network, paths, current, cfg)
        outcome = simulate_response(profile, current, mode, rng)
        regrets = {g.id: group_regret(outcome, g, regret_mode) for g in current}
        state.step(it, regrets, outcome.accepted)
        current = [g.with_alpha(state.alpha[g.id]) for g in current]
    return state


def single_interaction_update(
    network: Network,
    paths: PathSet,
    groups: Sequence[DemandGroup],
    strategy: str,
    epsilon: float = DEFAULT_EPSILON,
    mode: str = "bernoulli",
    seed=0,
    cfg: SolverConfig = SolverConfig(),
) -> float:
    """Demand-weighted mean trust after one interaction."""
    state = repeated_interaction(network, paths, groups, strategy, 1, epsilon, mode, seed, cfg)
    total = sum(g.amount for g in groups)
    return sum(g.amount * state.alpha[g.id] for g in groups) / total
