"""Path-restricted Frank-Wolfe for system optimum and user equilibrium."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .latency import EdgeArrays, FlowVector, edge_arrays, incidence
from .net import Commodity, Network, NoPathError, Path, PathSet


class RoutingError(ValueError):
    """Demand cannot be routed on the supplied paths."""


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 500
    relative_gap_target: float = 1e-6
    line_search_tolerance: float = 1e-9

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (self.relative_gap_target > 0 and self.line_search_tolerance > 0):
            raise ValueError("tolerances must be > 0")


@dataclass(frozen=True)
class AssignmentResult:
    flows: FlowVector
    objective: float  # added system congestion over the background
    relative_gap: float
    iterations: int
    converged: bool
    history: tuple[float, ...] = field(default=(), repr=False)  # minimised objective per iterate


def line_search(derivative: Callable[[float], float], tolerance: float = 1e-9) -> float:
    """Bisection root of a nondecreasing derivative on [0, 1]."""
    if derivative(0.0) >= 0:
        return 0.0
    if derivative(1.0) <= 0:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if derivative(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class _Problem:
    """Compiled arrays for one (network, paths, demands, background) instance."""

    def __init__(
        self,
        network: Network,
        paths: PathSet,
        demands: Sequence[Commodity],
        background: FlowVector | None,
    ):
        if len(demands) != len(paths):
            raise RoutingError(f"{len(demands)} demands but paths for {len(paths)} commodities")
        self.network = network
        self.paths = paths.all_paths
        self.ea: EdgeArrays = edge_arrays(network)
        self.A = incidence(network, self.paths)
        self.offsets = paths.offsets() + [len(self.paths)]
        self.demand = np.array([c.demand for c in demands], dtype=float)
        for i, c in enumerate(demands):
            for p in paths[i]:
                if not p.edges:
                    raise RoutingError(f"empty path for commodity {i}")
            first = network.edge(paths[i][0].edges[0]).tail
            last = network.edge(paths[i][0].edges[-1]).head
            if (first, last) != (c.source, c.destination):
                raise RoutingError(f"paths for commodity {i} do not join {c.source}->{c.destination}")
        self.background = (
            np.zeros(len(network.edges)) if background is None else background.edge_array.astype(float)
        )
        # lexicographic rank of each path's edge sequence inside its commodity
        self.lex_rank = np.zeros(len(self.paths))
        for i in range(len(demands)):
            block = self.paths[self.offsets[i] : self.offsets[i + 1]]
            order = sorted(range(len(block)), key=lambda j: block[j].edges)
            for rank, j in enumerate(order):
                self.lex_rank[self.offsets[i] + j] = rank

    def aon(self, path_costs: np.ndarray) -> np.ndarray:
        y = np.zeros(len(self.paths))
        for i in range(len(self.demand)):
            a, b = self.offsets[i], self.offsets[i + 1]
            if self.demand[i] == 0:
                continue
            j = np.lexsort((self.lex_rank[a:b], path_costs[a:b]))[0]
            y[a + j] = self.demand[i]
        return y

    def min_cost_total(self, path_costs: np.ndarray) -> float:
        return float(
            sum(
                self.demand[i] * path_costs[self.offsets[i] : self.offsets[i + 1]].min()
                for i in range(len(self.demand))
                if self.demand[i] > 0
            )
        )


def _link_cost(kind: str, ea: EdgeArrays) -> Callable[[np.ndarray], np.ndarray]:
    return ea.marginal if kind == "cc" else ea.latency


def _objective(kind: str, ea: EdgeArrays, bg: np.ndarray, x: np.ndarray) -> float:
    if kind == "cc":
        return ea.congestion(bg + x) - ea.congestion(bg)
    return ea.beckmann(bg + x) - ea.beckmann(bg)


def relative_gap(
    flows: FlowVector,
    edge_costs: Mapping[int, float] | np.ndarray,
    demands: Sequence[Commodity],
    paths: PathSet,
) -> float:
    """(current cost - all-or-nothing cost) / all-or-nothing cost at fixed costs."""
    prob = _Problem(flows.network, paths, demands, None)
    if isinstance(edge_costs, Mapping):
        cost = np.array([edge_costs[e] for e in flows.network.edge_ids], dtype=float)
    else:
        cost = np.asarray(edge_costs, dtype=float)
    x = _align(flows, prob.paths)
    path_costs = prob.A.T @ cost
    return _gap(float(np.dot(x, path_costs)), prob.min_cost_total(path_costs))


def _gap(current: float, aon: float) -> float:
    if aon <= 0:
        return 0.0
    return max(0.0, (current - aon) / aon)


def _align(flows: FlowVector, paths: Sequence[Path]) -> np.ndarray:
    if flows.paths == tuple(paths):
        return flows.path_array
    lookup = flows.path_flows
    return np.array([lookup.get(p, 0.0) for p in paths])


def all_or_nothing(
    network: Network,
    paths: PathSet,
    demands: Sequence[Commodity],
    edge_costs: Mapping[int, float] | np.ndarray,
) -> FlowVector:
    """Load every commodity on its cheapest listed path."""
    prob = _Problem(network, paths, demands, None)
    if isinstance(edge_costs, Mapping):
        cost = np.array([edge_costs[e] for e in network.edge_ids], dtype=float)
    else:
        cost = np.asarray(edge_costs, dtype=float)
    if np.any(cost < 0):
        raise ValueError("edge costs must be nonnegative")
    return FlowVector.from_path_flows(network, prob.paths, prob.aon(prob.A.T @ cost))


def _solve(
    kind: str,
    network: Network,
    paths: PathSet,
    demands: Sequence[Commodity],
    cfg: SolverConfig,
    background: FlowVector | None,
) -> AssignmentResult:
    prob = _Problem(network, paths, demands, background)
    ea, A, bg = prob.ea, prob.A, prob.background
    cost_fn = _link_cost(kind, ea)

    x = prob.aon(A.T @ cost_fn(bg))
    e = A @ x
    history = [_objective(kind, ea, bg, e)]
    gap = math.inf
    it = 0
    while True:
        cost = cost_fn(bg + e)
        path_costs = A.T @ cost
        gap = _gap(float(np.dot(x, path_costs)), prob.min_cost_total(path_costs))
        if gap <= cfg.relative_gap_target or it >= cfg.max_iterations:
            break
        it += 1
        y = prob.aon(path_costs)
        d_edge = A @ y - e

        def deriv(s: float) -> float:
            return float(np.dot(cost_fn(bg + e + s * d_edge), d_edge))

        step = line_search(deriv, cfg.line_search_tolerance)
        if step == 0.0:
            # no descent along the AON direction; the gap can not shrink further
            break
        x = x + step * (y - x)
        e = A @ x
        history.append(_objective(kind, ea, bg, e))

    flows = FlowVector.from_path_flows(network, prob.paths, x)
    added = ea.congestion(bg + flows.edge_array) - ea.congestion(bg)
    return AssignmentResult(
        flows=flows,
        objective=float(added),
        relative_gap=float(gap),
        iterations=it,
        converged=bool(gap <= cfg.relative_gap_target),
        history=tuple(history),
    )


def solve_cc(
    network: Network,
    paths: PathSet,
    demands: Sequence[Commodity],
    cfg: SolverConfig = SolverConfig(),
    background: FlowVector | None = None,
) -> AssignmentResult:
    """System optimum over the listed paths (complete compliance)."""
    return _solve("cc", network, paths, demands, cfg, background)


def solve_ue(
    network: Network,
    paths: PathSet,
    demands: Sequence[Commodity],
    cfg: SolverConfig = SolverConfig(),
    background: FlowVector | None = None,
) -> AssignmentResult:
    """Wardrop equilibrium over the listed paths (Beckmann minimiser)."""
    return _solve("ue", network, paths, demands, cfg, background)


def check_wardrop(result: AssignmentResult, tol: float, used: float = 1e-6) -> bool:
    """Every used path within (1 + tol) of its commodity's cheapest path."""
    f = result.flows
    ea = edge_arrays(f.network)
    lat = incidence(f.network, f.paths).T @ ea.latency(f.edge_array)
    by_c: dict[int, list[int]] = {}
    for j, p in enumerate(f.paths):
        by_c.setdefault(p.commodity, []).append(j)
    for idx in by_c.values():
        best = min(lat[j] for j in idx)
        for j in idx:
            if f.path_array[j] > used and lat[j] > best * (1 + tol):
                return False
    return True


__all__ = [
    "AssignmentResult",
    "NoPathError",
    "RoutingError",
    "SolverConfig",
    "all_or_nothing",
    "check_wardrop",
    "line_search",
    "relative_gap",
    "solve_cc",
    "solve_ue",
]
