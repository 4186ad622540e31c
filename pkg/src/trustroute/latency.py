"""BPR latencies, congestion and the Beckmann potential.

Flows are carried as dense arrays aligned with ``network.edges`` and with an
explicit tuple of paths; the mapping views are built on demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .net import Edge, Network, Path

CHECK_DUALITY = True  # cross-check path and edge congestion sums


class FlowDomainError(ValueError):
    """Negative or otherwise invalid flow."""


def _int_power(x: float, n: int) -> float:
    out = 1.0
    while n:
        if n & 1:
            out *= x
        x *= x
        n >>= 1
    return out


def _ratio_power(ratio, beta: float):
    if float(beta).is_integer():
        return _int_power(ratio, int(beta))
    return ratio**beta


def edge_latency(edge: Edge, flow: float) -> float:
    """t_ff * (1 + lambda * (flow / c) ** beta)."""
    if flow < 0 or math.isnan(flow):
        raise FlowDomainError(f"negative flow {flow} on edge {edge.id}")
    return edge.free_flow_time * (1.0 + edge.lam * _ratio_power(flow / edge.capacity, edge.beta))


@dataclass(frozen=True)
class EdgeArrays:
    """Column view of a network's BPR parameters."""

    ids: tuple[int, ...]
    tff: np.ndarray
    cap: np.ndarray
    lam: np.ndarray
    beta: np.ndarray
    int_beta: int | None  # shared integer exponent, when there is one

    def ratio_power(self, x: np.ndarray) -> np.ndarray:
        r = x / self.cap
        if self.int_beta is not None:
            out = np.ones_like(r)
            base, n = r.copy(), self.int_beta
            while n:
                if n & 1:
                    out = out * base
                base = base * base
                n >>= 1
            return out
        return r**self.beta

    def latency(self, x: np.ndarray) -> np.ndarray:
        return self.tff * (1.0 + self.lam * self.ratio_power(x))

    def marginal(self, x: np.ndarray) -> np.ndarray:
        """d/dx [x * latency(x)]."""
        return self.tff * (1.0 + self.lam * (self.beta + 1.0) * self.ratio_power(x))

    def congestion(self, x: np.ndarray) -> float:
        return float(np.dot(x, self.latency(x)))

    def beckmann(self, x: np.ndarray) -> float:
        return float(np.sum(self.tff * (x + self.lam * x * self.ratio_power(x) / (self.beta + 1.0))))


@lru_cache(maxsize=64)
def edge_arrays(network: Network) -> EdgeArrays:
    betas = np.array([e.beta for e in network.edges], dtype=float)
    shared = None
    if len(betas) and np.all(betas == betas[0]) and float(betas[0]).is_integer():
        shared = int(betas[0])
    return EdgeArrays(
        ids=network.edge_ids,
        tff=np.array([e.free_flow_time for e in network.edges], dtype=float),
        cap=np.array([e.capacity for e in network.edges], dtype=float),
        lam=np.array([e.lam for e in network.edges], dtype=float),
        beta=betas,
        int_beta=shared,
    )


def incidence(network: Network, paths: Sequence[Path]) -> np.ndarray:
    """Edge-by-path 0/1 matrix (rows follow ``network.edges``)."""
    return _incidence(network, tuple(paths))


@lru_cache(maxsize=256)
def _incidence(network: Network, paths: tuple[Path, ...]) -> np.ndarray:
    index = network.edge_index()
    mat = np.zeros((len(network.edges), len(paths)))
    for j, p in enumerate(paths):
        for eid in p.edges:
            mat[index[eid], j] = 1.0
    mat.setflags(write=False)
    return mat


@dataclass(frozen=True, eq=False)
class FlowVector:
    """Path and edge flows on one network.

    ``edge_array`` always equals the incidence product of ``path_array``
    unless the vector was built from edge flows alone (``paths`` empty),
    which is how fixed background loads are represented.
    """

    network: Network
    paths: tuple[Path, ...]
    path_array: np.ndarray
    edge_array: np.ndarray

    def __post_init__(self) -> None:
        if self.path_array.shape != (len(self.paths),):
            raise ValueError("path_array does not match paths")
        if self.edge_array.shape != (len(self.network.edges),):
            raise ValueError("edge_array does not match network edges")
        if np.any(self.path_array < 0) or np.any(self.edge_array < 0):
            raise FlowDomainError("flows must be nonnegative")

    @classmethod
    def from_path_flows(
        cls, network: Network, paths: Sequence[Path], values: Sequence[float] | np.ndarray
    ) -> FlowVector:
        paths = tuple(paths)
        x = np.asarray(values, dtype=float).copy()
        # tiny negatives come from convex-combination rounding
        x[(x < 0) & (x > -1e-12)] = 0.0
        edge = incidence(network, paths) @ x if paths else np.zeros(len(network.edges))
        return cls(network, paths, x, edge)

    @classmethod
    def from_edge_flows(cls, network: Network, flows: Mapping[int, float]) -> FlowVector:
        index = network.edge_index()
        arr = np.zeros(len(network.edges))
        for eid, v in flows.items():
            arr[index[eid]] = v
        return cls(network, (), np.zeros(0), arr)

    @classmethod
    def zero(cls, network: Network, paths: Sequence[Path] = ()) -> FlowVector:
        paths = tuple(paths)
        return cls(network, paths, np.zeros(len(paths)), np.zeros(len(network.edges)))

    @property
    def path_flows(self) -> dict[Path, float]:
        return {p: float(v) for p, v in zip(self.paths, self.path_array)}

    @property
    def edge_flows(self) -> dict[int, float]:
        return {eid: float(v) for eid, v in zip(self.network.edge_ids, self.edge_array)}

    def flow_on(self, path: Path) -> float:
        return sum(v for p, v in zip(self.paths, self.path_array) if p == path)

    def plus_edges(self, other: FlowVector) -> FlowVector:
        """Same paths, edge loads raised by ``other``'s edge flows."""
        return FlowVector(self.network, self.paths, self.path_array, self.edge_array + other.edge_array)

    def commodity_totals(self, n_commodities: int) -> np.ndarray:
        out = np.zeros(n_commodities)
        for p, v in zip(self.paths, self.path_array):
            out[p.commodity] += v
        return out


def merge_flows(network: Network, parts: Sequence[FlowVector]) -> FlowVector:
    """Concatenate path blocks; duplicate paths are summed."""
    order: dict[Path, int] = {}
    vals: list[float] = []
    for part in parts:
        for p, v in zip(part.paths, part.path_array):
            if p in order:
                vals[order[p]] += float(v)
            else:
                order[p] = len(vals)
                vals.append(float(v))
    return FlowVector.from_path_flows(network, tuple(order), vals)


def path_latency(path: Path, flows: FlowVector) -> float:
    """Sum of edge latencies along ``path`` at the given edge flows."""
    index = flows.network.edge_index()
    total = 0.0
    for eid in path.edges:
        if eid not in index:
            raise KeyError(f"no flow recorded for edge {eid}")
        total += edge_latency(flows.network.edge(eid), float(flows.edge_array[index[eid]]))
    return total


def path_latencies(network: Network, paths: Sequence[Path], edge_flow: np.ndarray) -> np.ndarray:
    """Vectorised path latencies for an edge-flow array."""
    return incidence(network, paths).T @ edge_arrays(network).latency(edge_flow)


def total_congestion(flows: FlowVector) -> float:
    """Sum over paths of f_P * tau_P; cross-checked against the edge sum."""
    ea = edge_arrays(flows.network)
    edge_sum = ea.congestion(flows.edge_array)
    if flows.paths and CHECK_DUALITY:
        lat = incidence(flows.network, flows.paths).T @ ea.latency(flows.edge_array)
        path_sum = float(np.dot(flows.path_array, lat))
        if abs(path_sum - edge_sum) > 1e-9 * max(1.0, abs(edge_sum)):
            raise AssertionError(f"path/edge congestion mismatch: {path_sum} vs {edge_sum}")
    return edge_sum


def edge_congestion(flows: FlowVector) -> float:
    return edge_arrays(flows.network).congestion(flows.edge_array)


def path_congestion(flows: FlowVector) -> float:
    ea = edge_arrays(flows.network)
    lat = incidence(flows.network, flows.paths).T @ ea.latency(flows.edge_array)
    return float(np.dot(flows.path_array, lat))


def beckmann_potential(flows: FlowVector) -> float:
    if np.any(flows.edge_array < 0):
        raise FlowDomainError("negative edge flow")
    return edge_arrays(flows.network).beckmann(flows.edge_array)
