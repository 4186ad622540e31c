"""Experiment orchestration: demand protocol, sweeps, aggregation, output.

Random streams: every (base_seed, seed index, purpose) triple gets its own
PCG64 generator seeded through ``numpy.random.SeedSequence``. Purposes are
fixed small integers, so the same run reproduces on any platform with the
same numpy bit generator.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from importlib import resources
from pathlib import Path as FsPath
from typing import Any, Iterable, Sequence

import numpy as np

from .assign import SolverConfig, solve_cc
from .net import (
    DEFAULT_K_PATHS,
    Commodity,
    Network,
    NoPathError,
    Path,
    PathSet,
    enumerate_paths,
    load_network,
    load_trips,
)
from .strategies import (
    DemandGroup,
    StrategyOutcome,
    commodity_demands,
    efficiency_ratio,
    free_flow_prior,
    latency_prior,
    outcome_from_flow,
    simulate_response,
)
from .trust import REGRET_MODES, TrustState, group_regret, run_strategy, update_trust

PURPOSE_DEMAND = 1
PURPOSE_RESPONSE = 2
PURPOSE_TRUST = 3

DEFAULT_CLASSES: tuple[tuple[float, float], ...] = (
    (0.0, 1 / 6),
    (0.25, 2 / 9),
    (0.5, 2 / 9),
    (0.75, 2 / 9),
    (1.0, 1 / 6),
)
ALL_STRATEGIES = ("CC", "TASR", "LLF", "Scale", "ASCALE", "Aloof")


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


def data_path(name: str) -> str:
    """Filesystem path of a file shipped in ``trustroute/data``."""
    return str(resources.files("trustroute") / "data" / name)


def rng_for(base_seed: int, seed_index: int, purpose: int, *extra: int) -> np.random.Generator:
    ss = np.random.SeedSequence([base_seed, seed_index, purpose, *extra])
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class ExperimentConfig:
    network_path: str = ""
    trips_path: str | None = None
    commodities: Any = None  # list of [origin, destination] or "from-trips"
    delta: float = 5.0
    trust_classes: Sequence[Sequence[float]] = DEFAULT_CLASSES
    strategies: Sequence[str] = ALL_STRATEGIES
    seeds: int = 1
    base_seed: int = 0
    interactions: int = 1
    epsilon: float = 0.25
    response_mode: str = "bernoulli"
    regret_mode: str = "realized"
    prior: str = "free-flow"
    k_paths: int = DEFAULT_K_PATHS
    partitions_per_class: int = 4
    max_iterations: int = 500
    relative_gap_target: float = 1e-6
    line_search_tolerance: float = 1e-9
    timing: bool = False

    def validate(self) -> None:
        try:
            self._validate()
        except TypeError as exc:
            raise ConfigError(f"bad config value type: {exc}") from exc

    def _validate(self) -> None:
        if not self.network_path:
            raise ConfigError("network_path is required")
        if not self.delta > 0:
            raise ConfigError("delta must be > 0")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if self.interactions < 1:
            raise ConfigError("interactions must be >= 1")
        if not 0 < self.epsilon <= 1:
            raise ConfigError("epsilon must lie in (0, 1]")
        if self.response_mode not in ("bernoulli", "expected"):
            raise ConfigError(f"response_mode must be bernoulli or expected, got {self.response_mode!r}")
        if self.regret_mode not in REGRET_MODES:
            raise ConfigError(f"regret_mode must be one of {REGRET_MODES}")
        if self.prior not in ("free-flow", "ue"):
            raise ConfigError("prior must be 'free-flow' or 'ue'")
        if self.k_paths < 1:
            raise ConfigError("k_paths must be >= 1")
        if self.partitions_per_class < 1:
            raise ConfigError("partitions_per_class must be >= 1")
        if not self.trust_classes:
            raise ConfigError("trust_classes is empty")
        for entry in self.trust_classes:
            if len(entry) != 2 or not 0 <= entry[0] <= 1 or entry[1] < 0:
                raise ConfigError(f"bad trust class {entry!r}")
        share = sum(s for _, s in self.trust_classes)
        if abs(share - 1.0) > 1e-9:
            raise ConfigError(f"trust class shares sum to {share}, not 1")
        known = {s.lower() for s in ALL_STRATEGIES}
        for s in self.strategies:
            if s.lower() not in known:
                raise ConfigError(f"unknown strategy {s!r}")
        try:
            SolverConfig(self.max_iterations, self.relative_gap_target, self.line_search_tolerance)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(self.max_iterations, self.relative_gap_target, self.line_search_tolerance)

    @classmethod
    def from_dict(cls, raw: dict) -> ExperimentConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(raw) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            cfg = cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.trust_classes = tuple(tuple(float(v) for v in c) for c in cfg.trust_classes)
        cfg.strategies = tuple(cfg.strategies)
        return cfg

    @classmethod
    def from_json(cls, path: str) -> ExperimentConfig:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(raw)


# --------------------------------------------------------------------------
# instance loading


@dataclass(frozen=True)
class Instance:
    network: Network
    od_pairs: tuple[tuple[int, int], ...]
    candidate_paths: tuple[tuple[tuple[int, ...], ...], ...]  # edge sequences per OD pair

    @property
    def multi(self) -> bool:
        return len(self.od_pairs) > 1

    def path_set(self, pairs: Sequence[int]) -> PathSet:
        """PathSet over the chosen OD indices, renumbered 0..n-1."""
        return PathSet(
            tuple(tuple(Path(seq, i) for seq in self.candidate_paths[k]) for i, k in enumerate(pairs))
        )


@lru_cache(maxsize=8)
def _load_instance(network_path: str, trips_path: str | None, commodities: Any, k: int) -> Instance:
    try:
        network = load_network(network_path)
    except OSError as exc:
        raise DataError(f"cannot read network {network_path}: {exc}") from exc
    if commodities == "from-trips" or (commodities is None and trips_path):
        if not trips_path:
            raise ConfigError("commodities='from-trips' needs trips_path")
        try:
            trips = load_trips(trips_path)
        except OSError as exc:
            raise DataError(f"cannot read trips {trips_path}: {exc}") from exc
        pairs = tuple((c.source, c.destination) for c in trips)
    elif commodities is None:
        raise ConfigError("no commodities given (use a list of [origin, destination] or 'from-trips')")
    else:
        pairs = tuple((int(o), int(d)) for o, d in commodities)
    if not pairs:
        raise ConfigError("empty commodity list")
    cand = []
    for o, d in pairs:
        for node in (o, d):
            if node not in network.nodes:
                raise DataError(f"commodity node {node} is not in the network")
        try:
            found = enumerate_paths(network, Commodity(o, d, 0.0), k)
        except NoPathError as exc:
            raise DataError(str(exc)) from exc
        cand.append(tuple(p.edges for p in found))
    return Instance(network, pairs, tuple(cand))


def load_instance(cfg: ExperimentConfig) -> Instance:
    comm = cfg.commodities
    if isinstance(comm, list):
        comm = tuple(tuple(c) for c in comm)
    return _load_instance(cfg.network_path, cfg.trips_path, comm, cfg.k_paths)


# --------------------------------------------------------------------------
# demand protocol


def total_demand(cfg: ExperimentConfig, network: Network) -> float:
    if not cfg.delta > 0:
        raise ConfigError("delta must be > 0")
    return cfg.delta * len(network.edges)


def generate_demands(
    cfg: ExperimentConfig, instance: Instance, seed_index: int
) -> tuple[PathSet, list[DemandGroup], list[int]]:
    """Demand groups for one seed.

    Returns the PathSet over the commodities that received demand, the
    groups (commodity indices refer to that PathSet) and the OD indices
    those commodities came from.
    """
    network = instance.network
    r = total_demand(cfg, network)
    classes = list(cfg.trust_classes)
    if not instance.multi:
        paths = instance.path_set([0])
        prior = _prior(cfg, network, paths, [r])
        groups = [
            DemandGroup(i, r * share, float(alpha), prior[0], 0)
            for i, (alpha, share) in enumerate(classes)
            if share > 0
        ]
        return paths, groups, [0]

    rng = rng_for(cfg.base_seed, seed_index, PURPOSE_DEMAND)
    n = len(instance.od_pairs)
    raw: list[tuple[float, float, int]] = []  # (alpha, amount, od index)
    for alpha, share in classes:
        amount = r * share
        if amount <= 0:
            continue
        m = cfg.partitions_per_class
        cuts = np.sort(rng.random(m - 1)) if m > 1 else np.zeros(0)
        bounds = np.concatenate(([0.0], cuts, [1.0]))
        targets = rng.integers(0, n, size=m)
        for piece, od in zip(np.diff(bounds), targets):
            if piece > 0:
                raw.append((float(alpha), float(amount * piece), int(od)))
    active = sorted({od for _, _, od in raw})
    local = {od: i for i, od in enumerate(active)}
    paths = instance.path_set(active)
    per_c = [0.0] * len(active)
    for _, amt, od in raw:
        per_c[local[od]] += amt
    priors = _prior(cfg, network, paths, per_c)
    groups = [
        DemandGroup(i, amt, alpha, priors[local[od]], local[od]) for i, (alpha, amt, od) in enumerate(raw)
    ]
    return paths, groups, active


def _prior(cfg: ExperimentConfig, network: Network, paths: PathSet, demands: Sequence[float]):
    if cfg.prior == "free-flow":
        return [free_flow_prior(network, paths[i]) for i in range(len(paths))]
    from .assign import solve_ue

    comms = commodity_demands(network, paths, [])
    comms = [Commodity(c.source, c.destination, float(d)) for c, d in zip(comms, demands)]
    res = solve_ue(network, paths, comms, cfg.solver)
    return [latency_prior(network, paths[i], res.flows) for i in range(len(paths))]


# --------------------------------------------------------------------------
# running


@dataclass
class GroupRecord:
    group_id: int
    alpha_before: float
    alpha_after: float
    accepted: bool
    regret: float


@dataclass
class ResultRecord:
    strategy: str
    seed: int
    interaction: int
    congestion: float
    per_unit_travel_time: float
    efficiency_ratio: float
    runtime_seconds: float
    groups: list[GroupRecord] = field(default_factory=list)


@dataclass
class RunResult:
    records: list[ResultRecord]
    summary: dict
    converged: bool = True


def _cc(network: Network, paths: PathSet, groups: Sequence[DemandGroup], solver: SolverConfig):
    comms = commodity_demands(network, paths, groups)
    return solve_cc(network, paths, comms, solver)


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    """Every seed x strategy cell, in deterministic (seed, strategy) order."""
    cfg.validate()
    instance = load_instance(cfg)
    network = instance.network
    solver = cfg.solver
    records: list[ResultRecord] = []
    converged = True

    for seed in range(cfg.seeds):
        paths, groups, _ = generate_demands(cfg, instance, seed)
        r = sum(g.amount for g in groups)
        cc = _cc(network, paths, groups, solver)
        converged &= cc.converged
        if not cc.objective > 0:
            raise ConvergenceError(f"seed {seed}: complete-compliance objective is not positive")
        for name in cfg.strategies:
            try:
                records.extend(_run_cell(cfg, network, paths, groups, name, seed, cc, r))
            except (ValueError, ArithmeticError) as exc:
                raise type(exc)(f"seed {seed}, strategy {name}: {exc}") from exc

    summary = aggregate(records)
    summary["metadata"] = metadata(cfg, instance)
    return RunResult(records, summary, converged)


def _run_cell(cfg, network, paths, groups, name, seed, cc, r) -> list[ResultRecord]:
    out = []
    if name.upper() == "CC":
        t0 = time.perf_counter()
        outcome = outcome_from_flow(cc.flows, groups)
        dt = time.perf_counter() - t0
        recs = [
            GroupRecord(g.id, g.alpha, g.alpha, True, 0.0) for g in sorted(groups, key=lambda g: g.id)
        ]
        for it in range(1, cfg.interactions + 1):
            out.append(_record(name, seed, it, outcome, cc.objective, r, dt, recs))
        return out

    rng = rng_for(cfg.base_seed, seed, PURPOSE_RESPONSE)
    current = list(groups)
    for it in range(1, cfg.interactions + 1):
        t0 = time.perf_counter()
        profile = run_strategy(name, network, paths, current, cfg.solver)
        outcome = simulate_response(profile, current, cfg.response_mode, rng)
        dt = time.perf_counter() - t0
        recs = []
        nxt = []
        for g in sorted(current, key=lambda g: g.id):
            b = group_regret(outcome, g, cfg.regret_mode)
            a = update_trust(g.alpha, b, cfg.epsilon)
            recs.append(GroupRecord(g.id, g.alpha, a, outcome.accepted[g.id], b))
            nxt.append(g.with_alpha(a))
        out.append(_record(name, seed, it, outcome, cc.objective, r, dt, recs))
        current = nxt
    return out


def _record(name, seed, it, outcome: StrategyOutcome, cc_obj, r, dt, recs) -> ResultRecord:
    return ResultRecord(
        strategy=name,
        seed=seed,
        interaction=it,
        congestion=outcome.congestion,
        per_unit_travel_time=outcome.congestion / r,
        efficiency_ratio=efficiency_ratio(outcome, cc_obj),
        runtime_seconds=dt,
        groups=recs,
    )


def _mean_sd(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return mean, sd


def aggregate(records: Sequence[ResultRecord]) -> dict:
    """Per-strategy mean and sample SD; only the last interaction counts."""
    if not records:
        raise ValueError("no records to aggregate")
    last = max(r.interaction for r in records)
    by: dict[str, list[ResultRecord]] = {}
    for rec in records:
        if rec.interaction == last:
            by.setdefault(rec.strategy, []).append(rec)
    out: dict[str, Any] = {"strategies": {}}
    for name, recs in by.items():
        entry = {"n": len(recs)}
        for key in ("congestion", "per_unit_travel_time", "efficiency_ratio", "runtime_seconds"):
            m, s = _mean_sd([getattr(r, key) for r in recs])
            entry[key] = {"mean": m, "sd": s}
        alphas = [np.mean([g.alpha_after for g in r.groups]) for r in recs if r.groups]
        if alphas:
            m, s = _mean_sd(alphas)
            entry["mean_trust_after"] = {"mean": m, "sd": s}
        out["strategies"][name] = entry
    return out


def metadata(cfg: ExperimentConfig, instance: Instance) -> dict:
    return {
        "config": asdict(cfg),
        "edges": len(instance.network.edges),
        "total_demand": total_demand(cfg, instance.network),
        "od_pairs": len(instance.od_pairs),
        "share_rule": "alpha=0 and alpha=1 get 1/6 each; the partial classes split the remaining 2/3 equally",
        "multi_commodity_partition": (
            f"each trust class cut into {cfg.partitions_per_class} pieces at uniform random points; "
            "each piece sent to a uniformly random OD pair"
        ),
        "solver_stopping_rule": {
            "max_iterations": cfg.max_iterations,
            "relative_gap_target": cfg.relative_gap_target,
            "line_search_tolerance": cfg.line_search_tolerance,
        },
        "rng": "numpy PCG64 seeded by SeedSequence([base_seed, seed, purpose])",
    }


# --------------------------------------------------------------------------
# output


def _g(x: float) -> str:
    return format(float(x), ".6g")


BASE_COLUMNS = (
    "strategy",
    "seed",
    "interaction",
    "congestion",
    "per_unit_tt",
    "efficiency_ratio",
    "runtime_s",
)
GROUP_FIELDS = ("id", "alpha_before", "alpha_after", "accepted", "regret")


def csv_text(records: Sequence[ResultRecord], timing: bool = False) -> str:
    """Wide CSV. ``runtime_s`` stays empty unless ``timing`` is set so that
    reruns compare byte for byte."""
    if not records:
        raise ValueError("no records to write")
    width = max(len(r.groups) for r in records)
    header = list(BASE_COLUMNS)
    for k in range(width):
        header += [f"group{k}_{f}" for f in GROUP_FIELDS]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in records:
        row = [
            r.strategy,
            r.seed,
            r.interaction,
            _g(r.congestion),
            _g(r.per_unit_travel_time),
            _g(r.efficiency_ratio),
            _g(r.runtime_seconds) if timing else "",
        ]
        for g in r.groups:
            row += [g.group_id, _g(g.alpha_before), _g(g.alpha_after), int(g.accepted), _g(g.regret)]
        row += [""] * (len(header) - len(row))
        w.writerow(row)
    return buf.getvalue()


def emit_csv(records: Sequence[ResultRecord], path: str, timing: bool = False) -> None:
    text = csv_text(records, timing)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def trajectory_csv_text(records: Sequence[ResultRecord]) -> str:
    """Long format: one row per (seed, strategy, interaction, group)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "strategy", "interaction", "group_id", "alpha", "regret", "accepted"])
    for r in records:
        for g in r.groups:
            w.writerow([r.seed, r.strategy, r.interaction, g.group_id, _g(g.alpha_after), _g(g.regret), int(g.accepted)])
    return buf.getvalue()


def _round_floats(obj):
    if isinstance(obj, float):
        return float(_g(obj)) if math.isfinite(obj) else str(obj)
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def emit_summary_json(aggregates: dict, path: str) -> None:
    if not aggregates or not aggregates.get("strategies"):
        raise ValueError("empty aggregate")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_round_floats(aggregates), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_outputs(result: RunResult, out_dir: str, timing: bool = False, prefix: str = "results") -> dict[str, str]:
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "csv": str(out / f"{prefix}.csv"),
        "trajectory": str(out / f"{prefix}_trust.csv"),
        "summary": str(out / f"{prefix}_summary.json"),
    }
    emit_csv(result.records, files["csv"], timing)
    with open(files["trajectory"], "w", encoding="utf-8", newline="") as fh:
        fh.write(trajectory_csv_text(result.records))
    summary = result.summary
    if not timing:
        # wall-clock figures would break byte-identical reruns
        summary = {
            **summary,
            "strategies": {
                k: {f: v for f, v in e.items() if f != "runtime_seconds"}
                for k, e in summary["strategies"].items()
            },
        }
    emit_summary_json(summary, files["summary"])
    return files


# --------------------------------------------------------------------------
# trust simulation


def trust_simulation(cfg: ExperimentConfig, strategy: str) -> tuple[list[TrustState], np.ndarray]:
    """Repeated interactions for every seed; returns states and the mean
    (demand-weighted) trust after each interaction."""
    from .trust import repeated_interaction

    cfg.validate()
    instance = load_instance(cfg)
    states = []
    series = []
    for seed in range(cfg.seeds):
        paths, groups, _ = generate_demands(cfg, instance, seed)
        rng = rng_for(cfg.base_seed, seed, PURPOSE_TRUST)
        st = repeated_interaction(
            instance.network,
            paths,
            groups,
            strategy,
            cfg.interactions,
            cfg.epsilon,
            cfg.response_mode,
            rng,
            cfg.solver,
            cfg.regret_mode,
        )
        states.append(st)
        weights = {g.id: g.amount for g in groups}
        total = sum(weights.values())
        per_it: dict[int, float] = {}
        for rec in st.history:
            per_it[rec.iteration] = per_it.get(rec.iteration, 0.0) + weights[rec.group_id] * rec.alpha_after / total
        series.append([per_it[k] for k in sorted(per_it)])
    return states, np.mean(np.array(series), axis=0)


def first_passage(series: Iterable[float], level: float = 1.0, tol: float = 1e-12) -> int | None:
    """1-based interaction at which ``series`` first reaches ``level``."""
    for i, v in enumerate(series, start=1):
        if v >= level - tol:
            return i
    return None
