"""Demand groups, TASR, the baseline Stackelberg strategies and metrics.

All strategies share one output shape: a :class:`RecommendationProfile`
holding, per group, the list of (path, amount) pieces the group was told to
use. A group that is split across several paths still makes one accept or
reject decision; the pieces are bookkeeping.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .assign import SolverConfig, solve_cc, solve_ue
from .latency import FlowVector, edge_arrays, incidence, total_congestion
from .net import Commodity, Network, Path, PathSet

COMPLIANT_CUT = 0.5  # baselines treat alpha >= this as compliant
_SAT_TOL = 1e-8  # relative to demand; about ten times the solver's flow noise


class StrategyError(ValueError):
    pass


class InstanceTooLarge(StrategyError):
    pass


@dataclass(frozen=True, eq=False)
class DemandGroup:
    id: int
    amount: float
    alpha: float
    prior: Mapping[Path, float]
    commodity: int = 0
    parent: int | None = None  # set on bookkeeping sub-groups

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"group {self.id}: alpha {self.alpha} outside [0, 1]")
        if self.amount < 0:
            raise ValueError(f"group {self.id}: negative amount")
        if not self.prior:
            raise ValueError(f"group {self.id}: empty prior")

    def with_alpha(self, alpha: float) -> DemandGroup:
        return DemandGroup(self.id, self.amount, alpha, self.prior, self.commodity, self.parent)


@dataclass(frozen=True, eq=False)
class RecommendationProfile:
    recommendations: dict[int, Path]
    planned_flow: FlowVector
    assignments: dict[int, tuple[tuple[Path, float], ...]] = field(default_factory=dict)
    controlled: FlowVector | None = None  # the plan's compliant part
    reference: FlowVector | None = None  # the optimum it is restricted by
    strategy: str = ""


@dataclass(frozen=True, eq=False)
class StrategyOutcome:
    realized_flow: FlowVector
    congestion: float
    per_group_choice: dict[int, Path]
    accepted: dict[int, bool]
    choices: dict[int, tuple[tuple[Path, float], ...]] = field(default_factory=dict)


# --------------------------------------------------------------------------
# priors and selfish choice


def free_flow_prior(network: Network, paths: Sequence[Path]) -> dict[Path, float]:
    tff = {e.id: e.free_flow_time for e in network.edges}
    return {p: p.cost(tff) for p in paths}


def latency_prior(network: Network, paths: Sequence[Path], flows: FlowVector) -> dict[Path, float]:
    """Believed path costs equal to latencies under ``flows`` (e.g. a UE)."""
    lat = incidence(network, paths).T @ edge_arrays(network).latency(flows.edge_array)
    return {p: float(v) for p, v in zip(paths, lat)}


def ue_prior(
    network: Network, paths: PathSet, commodities: Sequence[Commodity], cfg: SolverConfig
) -> list[dict[Path, float]]:
    res = solve_ue(network, paths, commodities, cfg)
    return [latency_prior(network, paths[i], res.flows) for i in range(len(paths))]


def selfish_path(group: DemandGroup) -> Path:
    """Cheapest path under the group's own beliefs; earliest path on ties."""
    best, best_cost = None, math.inf
    for p, c in group.prior.items():
        if c < best_cost:
            best, best_cost = p, c
    assert best is not None
    return best


# --------------------------------------------------------------------------
# shared plumbing


def _endpoints(network: Network, path: Path) -> tuple[int, int]:
    return network.edge(path.edges[0]).tail, network.edge(path.edges[-1]).head


def commodity_demands(network: Network, paths: PathSet, groups: Iterable[DemandGroup]) -> list[Commodity]:
    totals = [0.0] * len(paths)
    for g in groups:
        totals[g.commodity] += g.amount
    out = []
    for i, block in enumerate(paths.by_commodity):
        s, d = _endpoints(network, block[0])
        out.append(Commodity(s, d, totals[i]))
    return out


def _solve_commodity(
    network: Network,
    paths: PathSet,
    i: int,
    demand: float,
    cfg: SolverConfig,
    background: FlowVector | None = None,
) -> np.ndarray:
    """CC path flows for commodity ``i`` alone, aligned with ``paths[i]``."""
    if demand <= 0:
        return np.zeros(len(paths[i]))
    s, d = _endpoints(network, paths[i][0])
    # repeated interactions re-plan the same instance; the solve is deterministic
    bg = None if background is None else tuple(background.edge_array.tolist())
    return np.array(_cached_cc(network, tuple(p.edges for p in paths[i]), s, d, demand, cfg, bg))


@lru_cache(maxsize=256)
def _cached_cc(network, block, s, d, demand, cfg, bg) -> tuple:
    single = PathSet((tuple(Path(e, 0) for e in block),))
    background = None if bg is None else FlowVector(network, (), np.zeros(0), np.array(bg))
    res = solve_cc(network, single, [Commodity(s, d, demand)], cfg, background)
    return tuple(res.flows.path_array.tolist())


def solve_reference(
    network: Network,
    paths: PathSet,
    demands: Sequence[float],
    cfg: SolverConfig,
) -> np.ndarray:
    """Joint CC path flows over ``paths.all_paths`` for the given demands."""
    if len(paths) == 1:
        return _solve_commodity(network, paths, 0, demands[0], cfg)
    comms = []
    for i, block in enumerate(paths.by_commodity):
        s, d = _endpoints(network, block[0])
        comms.append(Commodity(s, d, float(demands[i])))
    return solve_cc(network, paths, comms, cfg).flows.path_array.copy()


class _Ledger:
    """Accumulates planned and controlled path flows by global path index."""

    def __init__(self, network: Network, paths: PathSet):
        self.network = network
        self.paths = paths
        self.all = paths.all_paths
        self.offsets = paths.offsets()
        self.planned = np.zeros(len(self.all))
        self.controlled = np.zeros(len(self.all))
        self.recs: dict[int, Path] = {}
        self.pieces: dict[int, list[tuple[Path, float]]] = {}

    def gidx(self, commodity: int, local: int) -> int:
        return self.offsets[commodity] + local

    def local_index(self, path: Path) -> int:
        return self.paths[path.commodity].index(path)

    def add_piece(self, g: DemandGroup, path: Path, amount: float) -> None:
        if amount <= 0:
            return
        pieces = self.pieces.setdefault(g.id, [])
        if pieces and pieces[-1][0] == path:
            pieces[-1] = (path, pieces[-1][1] + amount)
        else:
            pieces.append((path, amount))
        self.recs.setdefault(g.id, path)

    def profile(self, name: str, reference: np.ndarray | None) -> RecommendationProfile:
        fv = lambda arr: FlowVector.from_path_flows(self.network, self.all, arr)  # noqa: E731
        return RecommendationProfile(
            recommendations=dict(self.recs),
            planned_flow=fv(self.planned),
            assignments={k: tuple(v) for k, v in self.pieces.items()},
            controlled=fv(self.controlled),
            reference=None if reference is None else fv(reference),
            strategy=name,
        )


# --------------------------------------------------------------------------
# TASR


LATENCY_TIE = 1e-6  # relative; solver noise must not decide between equal paths


def latency_order(lat: Sequence[float], idx: Iterable[int], descending: bool = False) -> list[int]:
    """Indices by latency; values within LATENCY_TIE count as equal and keep index order.

    Descending order reverses both latency and index, so ties go to the
    larger index.
    """
    sign = -1.0 if descending else 1.0
    ranked = sorted(idx, key=lambda j: (sign * lat[j], sign * j))
    out: list[int] = []
    k = 0
    while k < len(ranked):
        head = lat[ranked[k]]
        m = k
        while m < len(ranked) and abs(lat[ranked[m]] - head) <= LATENCY_TIE * max(abs(head), 1e-300):
            m += 1
        out += sorted(ranked[k:m], reverse=descending)
        k = m
    return out


def _sorted_by_latency(network: Network, block: Sequence[Path], fstar: np.ndarray, bg: np.ndarray) -> list[int]:
    lat = incidence(network, block).T @ edge_arrays(network).latency(bg + incidence(network, block) @ fstar)
    scale = max(float(fstar.sum()), 1.0)
    used = [j for j in range(len(block)) if fstar[j] > 1e-9 * scale]
    return latency_order(lat, used)


def _tasr_commodity(
    led: _Ledger,
    i: int,
    groups: Sequence[DemandGroup],
    cfg: SolverConfig,
    background: FlowVector | None,
) -> np.ndarray:
    network, paths = led.network, led.paths
    block = paths[i]
    total = sum(g.amount for g in groups)
    fstar = _solve_commodity(network, paths, i, total, cfg, background)
    bg = np.zeros(len(network.edges)) if background is None else background.edge_array
    order = _sorted_by_latency(network, block, fstar, bg)
    planned = np.zeros(len(block))
    controlled = np.zeros(len(block))
    tol = _SAT_TOL * max(total, 1.0)

    def first_open() -> int | None:
        for j in order:
            if planned[j] < fstar[j] - tol:
                return j
        return None

    ordered = sorted(groups, key=lambda g: (g.alpha, g.id))

    # noncompliant demand lands on its selfish path; the recommendation is
    # still recorded but consumes nothing
    for g in ordered:
        if g.alpha == 0.0:
            j = first_open()
            led.recs[g.id] = block[order[0] if j is None else j]
            planned[led.local_index(selfish_path(g))] += g.amount

    for g in ordered:
        if g.alpha == 0.0 or g.amount <= 0:
            continue
        sp = led.local_index(selfish_path(g))
        remaining = g.amount
        while remaining > tol:
            j = first_open()
            if j is None:
                # only rounding dust can be left here
                j = order[-1] if order else sp
                take = remaining
                planned[j] += take
                controlled[j] += take
            else:
                residual = fstar[j] - planned[j]
                if j == sp or g.alpha == 1.0:
                    take = min(remaining, residual)
                    planned[j] += take
                    controlled[j] += take
                else:
                    take = min(remaining, residual / g.alpha)
                    planned[j] += g.alpha * take
                    controlled[j] += g.alpha * take
                    planned[sp] += (1.0 - g.alpha) * take
            led.add_piece(g, block[j], take)
            remaining -= take
        if remaining > 0:
            led.add_piece(g, led.pieces[g.id][-1][0], remaining)

    a = led.offsets[i]
    led.planned[a : a + len(block)] += planned
    led.controlled[a : a + len(block)] += controlled
    return fstar


def tasr_single(
    network: Network,
    paths: PathSet,
    groups: Sequence[DemandGroup],
    cfg: SolverConfig = SolverConfig(),
    background: FlowVector | None = None,
) -> RecommendationProfile:
    """Greedy trust-aware recommendations for one commodity."""
    commodities = {g.commodity for g in groups}
    if len(commodities) > 1:
        raise StrategyError("tasr_single expects groups of one commodity")
    led = _Ledger(network, paths)
    ref = np.zeros(len(led.all))
    if groups:
        i = groups[0].commodity
        fstar = _tasr_commodity(led, i, groups, cfg, background)
        ref[led.offsets[i] : led.offsets[i] + len(paths[i])] = fstar
    return led.profile("TASR", ref)


def noncompliant_fraction(groups: Sequence[DemandGroup]) -> float:
    total = sum(g.amount for g in groups)
    if total <= 0:
        return 0.0
    return sum(g.amount for g in groups if g.alpha == 0.0) / total


def commodity_order(by_commodity: Mapping[int, Sequence[DemandGroup]]) -> list[int]:
    """Most noncompliant first, then larger demand, then lower index."""
    return sorted(
        by_commodity,
        key=lambda i: (-noncompliant_fraction(by_commodity[i]), -sum(g.amount for g in by_commodity[i]), i),
    )


def _by_commodity(groups: Iterable[DemandGroup]) -> dict[int, list[DemandGroup]]:
    out: dict[int, list[DemandGroup]] = {}
    for g in groups:
        out.setdefault(g.commodity, []).append(g)
    return out


def tasr_multi(
    network: Network,
    paths: PathSet,
    groups: Sequence[DemandGroup] | Mapping[int, Sequence[DemandGroup]],
    cfg: SolverConfig = SolverConfig(),
) -> RecommendationProfile:
    """Commodity-by-commodity TASR; earlier plans become background load."""
    by_c = dict(groups) if isinstance(groups, Mapping) else _by_commodity(groups)
    led = _Ledger(network, paths)
    ref = np.zeros(len(led.all))
    A_all = incidence(network, led.all)
    bg = np.zeros(len(network.edges))
    for i in commodity_order(by_c):
        before = led.planned.copy()
        background = FlowVector(network, (), np.zeros(0), bg.copy())
        fstar = _tasr_commodity(led, i, by_c[i], cfg, background)
        ref[led.offsets[i] : led.offsets[i] + len(paths[i])] = fstar
        bg = bg + A_all @ (led.planned - before)
    return led.profile("TASR", ref)


# --------------------------------------------------------------------------
# baselines


def _split_compliance(groups: Sequence[DemandGroup]) -> tuple[list[DemandGroup], list[DemandGroup]]:
    comp = [g for g in groups if g.alpha >= COMPLIANT_CUT]
    non = [g for g in groups if g.alpha < COMPLIANT_CUT]
    return comp, non


def _plan_noncompliant(led: _Ledger, non: Sequence[DemandGroup]) -> None:
    # no steering for these groups: the recommendation is their own choice
    for g in non:
        sp = selfish_path(g)
        led.recs[g.id] = sp
        if g.amount > 0:
            led.pieces[g.id] = [(sp, g.amount)]
        led.planned[led.gidx(g.commodity, led.local_index(sp))] += g.amount


def _proportional(led: _Ledger, comp: Sequence[DemandGroup], target: np.ndarray) -> None:
    """Spread each compliant group over paths in proportion to ``target``."""
    for g in sorted(comp, key=lambda g: g.id):
        a = led.offsets[g.commodity]
        block = led.paths[g.commodity]
        w = target[a : a + len(block)]
        s = float(w.sum())
        if s <= 0:
            w, s = np.eye(1, len(block)).ravel(), 1.0
        for j in range(len(block)):
            amt = g.amount * float(w[j]) / s
            if amt > 0:
                led.add_piece(g, block[j], amt)
                led.planned[a + j] += amt
                led.controlled[a + j] += amt


def _compliant_totals(paths: PathSet, groups: Sequence[DemandGroup]) -> tuple[np.ndarray, np.ndarray]:
    total = np.zeros(len(paths))
    comp = np.zeros(len(paths))
    for g in groups:
        total[g.commodity] += g.amount
        if g.alpha >= COMPLIANT_CUT:
            comp[g.commodity] += g.amount
    return total, comp


def llf(
    network: Network, paths: PathSet, groups: Sequence[DemandGroup], cfg: SolverConfig = SolverConfig()
) -> RecommendationProfile:
    """Largest latency first: compliant demand fills optimal paths from the slow end."""
    led = _Ledger(network, paths)
    total, _ = _compliant_totals(paths, groups)
    fstar = solve_reference(network, paths, total, cfg)
    comp, non = _split_compliance(groups)
    _plan_noncompliant(led, non)
    lat = incidence(network, led.all).T @ edge_arrays(network).latency(incidence(network, led.all) @ fstar)
    for c, members in sorted(_by_commodity(comp).items()):
        a = led.offsets[c]
        block = paths[c]
        scale = max(total[c], 1.0)
        order = latency_order(
            lat[a : a + len(block)],
            (j for j in range(len(block)) if fstar[a + j] > 1e-9 * scale),
            descending=True,
        )
        room = {j: fstar[a + j] for j in order}
        for g in sorted(members, key=lambda g: (-g.alpha, g.id)):
            remaining = g.amount
            for j in order:
                if remaining <= _SAT_TOL * scale:
                    break
                take = min(remaining, room[j])
                if take <= _SAT_TOL * scale:
                    continue
                room[j] -= take
                remaining -= take
                led.add_piece(g, block[j], take)
                led.planned[a + j] += take
                led.controlled[a + j] += take
            if remaining > 0:
                # rounding dust rides on the group's last piece
                p = led.pieces[g.id][-1][0] if g.id in led.pieces else block[order[-1]]
                j = led.local_index(p)
                led.add_piece(g, p, remaining)
                led.planned[a + j] += remaining
                led.controlled[a + j] += remaining
    return led.profile("LLF", fstar)


def scale(
    network: Network, paths: PathSet, groups: Sequence[DemandGroup], cfg: SolverConfig = SolverConfig()
) -> RecommendationProfile:
    """Compliant groups each take an equal slice of mu_hat * f_opt."""
    led = _Ledger(network, paths)
    total, _ = _compliant_totals(paths, groups)
    fstar = solve_reference(network, paths, total, cfg)
    comp, non = _split_compliance(groups)
    _plan_noncompliant(led, non)
    _proportional(led, comp, fstar)
    return led.profile("Scale", fstar)


def ascale_rho(mu_hat: float) -> float:
    return 1.0 + math.sqrt(max(0.0, 1.0 - mu_hat))


def ascale(
    network: Network, paths: PathSet, groups: Sequence[DemandGroup], cfg: SolverConfig = SolverConfig()
) -> RecommendationProfile:
    """Scale against the optimum of a demand inflated by rho = 1 + sqrt(1 - mu_hat).

    Inflated demands are rounded to integers (but never below the compliant
    demand); the compliant demand is then spread in proportion to that
    optimum, which keeps flow conservation.
    """
    led = _Ledger(network, paths)
    total, comp_tot = _compliant_totals(paths, groups)
    scaled = np.zeros(len(paths))
    for c in range(len(paths)):
        mu = comp_tot[c] / total[c] if total[c] > 0 else 0.0
        scaled[c] = float(round(ascale_rho(mu) * total[c])) if total[c] > 0 else 0.0
        # rounding may undercut tiny demands; never plan more than the reference carries
        scaled[c] = max(scaled[c], comp_tot[c])
    fref = solve_reference(network, paths, scaled, cfg)
    comp, non = _split_compliance(groups)
    _plan_noncompliant(led, non)
    _proportional(led, comp, fref)
    return led.profile("ASCALE", fref)


def aloof(
    network: Network, paths: PathSet, groups: Sequence[DemandGroup], cfg: SolverConfig = SolverConfig()
) -> RecommendationProfile:
    """Optimise the compliant demand alone, as if nobody else were on the road."""
    led = _Ledger(network, paths)
    _, comp_tot = _compliant_totals(paths, groups)
    fref = solve_reference(network, paths, comp_tot, cfg)
    comp, non = _split_compliance(groups)
    _plan_noncompliant(led, non)
    _proportional(led, comp, fref)
    return led.profile("Aloof", fref)


def complete_compliance(
    network: Network, paths: PathSet, groups: Sequence[DemandGroup], cfg: SolverConfig = SolverConfig()
) -> RecommendationProfile:
    """Everybody obeys: the plan is the joint optimum itself."""
    led = _Ledger(network, paths)
    total, _ = _compliant_totals(paths, groups)
    fstar = solve_reference(network, paths, total, cfg)
    _proportional(led, [g for g in groups], fstar)
    return led.profile("CC", fstar)


STRATEGIES: dict[str, Callable[..., RecommendationProfile]] = {
    "TASR": tasr_multi,
    "LLF": llf,
    "Scale": scale,
    "ASCALE": ascale,
    "Aloof": aloof,
}


def get_strategy(name: str) -> Callable[..., RecommendationProfile]:
    for key, fn in STRATEGIES.items():
        if key.lower() == name.lower():
            return fn
    raise StrategyError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGIES)} or CC")


# --------------------------------------------------------------------------
# response and evaluation


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def simulate_response(
    profile: RecommendationProfile,
    groups: Sequence[DemandGroup],
    mode: str = "bernoulli",
    rng_seed=0,
) -> StrategyOutcome:
    """Realise one round of accept/reject decisions.

    ``bernoulli``: one coin per group (drawn in group-id order, for every
    group, so streams stay aligned across strategies). ``expected``: the
    group splits alpha / (1 - alpha) between plan and selfish path.
    """
    if mode not in ("bernoulli", "expected"):
        raise ValueError(f"unknown response mode {mode!r}")
    network = profile.planned_flow.network
    all_paths = profile.planned_flow.paths
    pos = {p: k for k, p in enumerate(all_paths)}
    x = np.zeros(len(all_paths))
    rng = _rng(rng_seed)
    choice: dict[int, Path] = {}
    accepted: dict[int, bool] = {}
    pieces_out: dict[int, tuple[tuple[Path, float], ...]] = {}

    for g in sorted(groups, key=lambda g: g.id):
        u = rng.random() if mode == "bernoulli" else None
        sp = selfish_path(g)
        pieces = profile.assignments.get(g.id)
        if g.alpha > 0 and not pieces and g.amount > 0:
            raise StrategyError(f"group {g.id} (alpha={g.alpha}) has no recommendation")
        if g.alpha == 0 or g.amount <= 0 or not pieces:
            x[pos[sp]] += g.amount
            choice[g.id], accepted[g.id] = sp, False
            pieces_out[g.id] = ((sp, g.amount),)
            continue
        if mode == "bernoulli":
            ok = bool(u < g.alpha)
            if ok:
                for p, amt in pieces:
                    x[pos[p]] += amt
                pieces_out[g.id] = tuple(pieces)
                choice[g.id] = pieces[0][0]
            else:
                x[pos[sp]] += g.amount
                pieces_out[g.id] = ((sp, g.amount),)
                choice[g.id] = sp
            accepted[g.id] = ok
        else:
            merged: dict[Path, float] = {}
            for p, amt in pieces:
                x[pos[p]] += g.alpha * amt
                merged[p] = merged.get(p, 0.0) + g.alpha * amt
            x[pos[sp]] += (1.0 - g.alpha) * g.amount
            merged[sp] = merged.get(sp, 0.0) + (1.0 - g.alpha) * g.amount
            pieces_out[g.id] = tuple((p, a) for p, a in merged.items() if a > 0)
            choice[g.id] = pieces[0][0]
            accepted[g.id] = g.alpha >= COMPLIANT_CUT

    realized = FlowVector.from_path_flows(network, all_paths, x)
    return StrategyOutcome(
        realized_flow=realized,
        congestion=total_congestion(realized),
        per_group_choice=choice,
        accepted=accepted,
        choices=pieces_out,
    )


def outcome_from_flow(flow: FlowVector, groups: Sequence[DemandGroup]) -> StrategyOutcome:
    """Outcome record for a flow imposed directly (the complete-compliance row)."""
    return StrategyOutcome(
        realized_flow=flow,
        congestion=total_congestion(flow),
        per_group_choice={},
        accepted={g.id: True for g in groups},
    )


def efficiency_ratio(outcome: StrategyOutcome, cc_objective: float) -> float:
    if not cc_objective > 0:
        raise ValueError("cc_objective must be > 0")
    return outcome.congestion / cc_objective


def is_subflow(f1: FlowVector, f2: FlowVector, tol: float = 1e-9) -> bool:
    """True when every path flow of ``f1`` is at most that of ``f2``."""
    other = f2.path_flows
    for p, v in zip(f1.paths, f1.path_array):
        if v > other.get(p, 0.0) + tol:
            return False
    return True


def subgroups(profile: RecommendationProfile, groups: Sequence[DemandGroup]) -> list[DemandGroup]:
    """One group per (group, path) piece of ``profile``, numbered from 0.

    Groups with no pieces (noncompliant) pass through unchanged apart from
    renumbering.
    """
    out: list[DemandGroup] = []
    for g in sorted(groups, key=lambda g: g.id):
        pieces = profile.assignments.get(g.id) or ((selfish_path(g), g.amount),)
        for _, amt in pieces:
            out.append(DemandGroup(len(out), amt, g.alpha, g.prior, g.commodity, parent=g.id))
    return out


def exact_best_response(
    network: Network,
    paths: PathSet,
    groups: Sequence[DemandGroup],
    mode: str = "expected",
    limit: int = 10**6,
) -> RecommendationProfile:
    """Exhaustive search over one-path-per-group recommendation profiles."""
    if mode != "expected":
        raise ValueError("only expected-mode congestion is searchable")
    groups = sorted(groups, key=lambda g: g.id)
    choices = [paths[g.commodity] for g in groups]
    size = math.prod(len(c) for c in choices) if choices else 1
    if size > limit:
        raise InstanceTooLarge(f"{size} profiles exceeds the limit of {limit}")

    all_paths = paths.all_paths
    A = incidence(network, all_paths)
    ea = edge_arrays(network)
    offsets = paths.offsets()
    base = np.zeros(len(network.edges))
    contrib = []  # edge-flow column per (group, option)
    for g, opts in zip(groups, choices):
        sp = selfish_path(g)
        base += (1.0 - g.alpha) * g.amount * A[:, offsets[g.commodity] + opts.index(sp)]
        contrib.append([g.alpha * g.amount * A[:, offsets[g.commodity] + j] for j in range(len(opts))])

    best_cost, best_idx = math.inf, None
    for idx in itertools.product(*(range(len(c)) for c in choices)):
        e = base.copy()
        for k, j in enumerate(idx):
            e += contrib[k][j]
        c = ea.congestion(e)
        if best_idx is None or c < best_cost - 1e-12 * max(1.0, abs(best_cost)):
            best_cost, best_idx = c, idx

    led = _Ledger(network, paths)
    for g, opts, j in zip(groups, choices, best_idx or ()):
        p = opts[j]
        led.recs[g.id] = p
        if g.amount > 0:
            led.pieces[g.id] = [(p, g.amount)]
        a = offsets[g.commodity]
        sp = opts.index(selfish_path(g))
        led.planned[a + j] += g.alpha * g.amount
        led.planned[a + sp] += (1.0 - g.alpha) * g.amount
        led.controlled[a + j] += g.alpha * g.amount
    return led.profile("P1-exact", None)
