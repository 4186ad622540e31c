"""Network model, TNTP ingestion and path machinery.

Node ids are the integers used in the source files. Edge ids are 1-based
and follow the order of link records.
"""

from __future__ import annotations

import heapq
import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

DEFAULT_LAMBDA = 0.15
DEFAULT_BETA = 4.0
DEFAULT_K_PATHS = 16

_META_RE = re.compile(r"^<([^>]+)>\s*(.*)$")


class ParseError(ValueError):
    """Raised for malformed TNTP input; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class NoPathError(LookupError):
    """No path connects the requested origin and destination."""


@dataclass(frozen=True)
class Edge:
    id: int
    tail: int
    head: int
    free_flow_time: float
    capacity: float
    lam: float = DEFAULT_LAMBDA
    beta: float = DEFAULT_BETA
    # parsed for round-tripping only
    length: float = 0.0
    speed: float = 0.0
    toll: float = 0.0
    link_type: int = 1

    def __post_init__(self) -> None:
        if not self.free_flow_time > 0:
            raise ValueError(f"edge {self.id}: free_flow_time must be > 0")
        if not self.capacity > 0:
            raise ValueError(f"edge {self.id}: capacity must be > 0")
        if self.lam < 0:
            raise ValueError(f"edge {self.id}: lambda must be >= 0")
        if self.beta < 1:
            raise ValueError(f"edge {self.id}: beta must be >= 1")


@dataclass(frozen=True)
class Network:
    nodes: frozenset[int]
    edges: tuple[Edge, ...]
    metadata: tuple[tuple[str, str], ...] = ()
    adjacency: Mapping[int, tuple[int, ...]] = field(init=False, compare=False, repr=False)
    _by_id: Mapping[int, Edge] = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        adjacency: dict[int, list[int]] = {n: [] for n in self.nodes}
        by_id: dict[int, Edge] = {}
        for e in self.edges:
            if e.tail not in self.nodes or e.head not in self.nodes:
                raise ValueError(f"edge {e.id} has an endpoint outside the node set")
            if e.id in by_id:
                raise ValueError(f"duplicate edge id {e.id}")
            by_id[e.id] = e
            adjacency[e.tail].append(e.id)
        object.__setattr__(self, "adjacency", {n: tuple(v) for n, v in adjacency.items()})
        object.__setattr__(self, "_by_id", by_id)

    @classmethod
    def from_edges(cls, edges: Iterable[Edge], nodes: Iterable[int] = ()) -> Network:
        edges = tuple(edges)
        all_nodes = set(nodes)
        for e in edges:
            all_nodes.update((e.tail, e.head))
        return cls(frozenset(all_nodes), edges)

    def edge(self, edge_id: int) -> Edge:
        return self._by_id[edge_id]

    @property
    def edge_ids(self) -> tuple[int, ...]:
        return tuple(e.id for e in self.edges)

    def edge_index(self) -> dict[int, int]:
        """Map edge id to its position in ``edges``."""
        return {e.id: i for i, e in enumerate(self.edges)}

    def subnetwork(self, edge_ids: Iterable[int]) -> Network:
        keep = set(edge_ids)
        return Network.from_edges(e for e in self.edges if e.id in keep)


@dataclass(frozen=True)
class Commodity:
    source: int
    destination: int
    demand: float

    def __post_init__(self) -> None:
        if self.demand < 0:
            raise ValueError("commodity demand must be >= 0")
        if self.source == self.destination:
            raise ValueError("commodity source and destination must differ")


@dataclass(frozen=True)
class Path:
    edges: tuple[int, ...]
    commodity: int = 0

    def __len__(self) -> int:
        return len(self.edges)

    def nodes(self, network: Network) -> tuple[int, ...]:
        if not self.edges:
            return ()
        first = network.edge(self.edges[0])
        return (first.tail,) + tuple(network.edge(e).head for e in self.edges)

    def cost(self, edge_costs: Mapping[int, float]) -> float:
        return sum(edge_costs[e] for e in self.edges)


def check_path(network: Network, path: Path, source: int, destination: int) -> None:
    """Raise ``ValueError`` unless ``path`` is a simple source->destination walk."""
    if not path.edges:
        raise ValueError("empty path")
    nodes = [network.edge(path.edges[0]).tail]
    for eid in path.edges:
        e = network.edge(eid)
        if e.tail != nodes[-1]:
            raise ValueError(f"path is disconnected at edge {eid}")
        nodes.append(e.head)
    if nodes[0] != source or nodes[-1] != destination:
        raise ValueError("path endpoints do not match the commodity")
    if len(set(nodes)) != len(nodes):
        raise ValueError("path repeats a node")


@dataclass(frozen=True)
class PathSet:
    """Per-commodity candidate paths, each tuple ordered by free-flow time."""

    by_commodity: tuple[tuple[Path, ...], ...]

    def __post_init__(self) -> None:
        for i, paths in enumerate(self.by_commodity):
            if not paths:
                raise ValueError(f"commodity {i} has no paths")
            if len(set(p.edges for p in paths)) != len(paths):
                raise ValueError(f"commodity {i} has duplicate paths")
            if any(p.commodity != i for p in paths):
                raise ValueError(f"path tagged with wrong commodity in set {i}")

    def __getitem__(self, commodity: int) -> tuple[Path, ...]:
        return self.by_commodity[commodity]

    def __len__(self) -> int:
        return len(self.by_commodity)

    @property
    def all_paths(self) -> tuple[Path, ...]:
        return tuple(itertools.chain.from_iterable(self.by_commodity))

    def offsets(self) -> list[int]:
        """Start index of each commodity's block in ``all_paths``."""
        out, n = [], 0
        for paths in self.by_commodity:
            out.append(n)
            n += len(paths)
        return out


# --------------------------------------------------------------------------
# TNTP parsing


def _strip_comment(line: str) -> str:
    pos = line.find("~")
    return line if pos < 0 else line[:pos]


def _split_metadata(lines: Sequence[str]) -> tuple[list[tuple[str, str]], int]:
    meta: list[tuple[str, str]] = []
    for i, raw in enumerate(lines):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        m = _META_RE.match(line)
        if m is None:
            raise ParseError("expected <KEY> value metadata line before <END OF METADATA>", i + 1)
        key = m.group(1).strip().upper()
        if key == "END OF METADATA":
            return meta, i + 1
        meta.append((key, m.group(2).strip()))
    raise ParseError("missing <END OF METADATA>", len(lines) or 1)


def _meta_number(meta: Sequence[tuple[str, str]], key: str, lineno: int, kind=float):
    for k, v in meta:
        if k == key:
            try:
                return kind(float(v)) if kind is int else kind(v)
            except ValueError:
                raise ParseError(f"non-numeric value for <{key}>: {v!r}", lineno) from None
    return None


def _num(tok: str, lineno: int, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"non-numeric {what}: {tok!r}", lineno) from None


def parse_network(text: str) -> Network:
    """Parse a TNTP link file.

    Columns: init_node term_node capacity length free_flow_time b power
    speed toll link_type, each record terminated by ``;``. Missing or zero
    ``b``/``power`` fall back to 0.15 / 4.
    """
    lines = text.splitlines()
    meta, start = _split_metadata(lines)
    n_nodes = _meta_number(meta, "NUMBER OF NODES", 1, int)
    n_links = _meta_number(meta, "NUMBER OF LINKS", 1, int)

    edges: list[Edge] = []
    for lineno, raw in enumerate(lines[start:], start=start + 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if not line.endswith(";"):
            raise ParseError("link record is not terminated by ';'", lineno)
        toks = line[:-1].split()
        if len(toks) < 5:
            raise ParseError(f"link record has {len(toks)} fields, need at least 5", lineno)
        vals = [_num(t, lineno, "field") for t in toks]
        tail, head = vals[0], vals[1]
        if tail != int(tail) or head != int(head):
            raise ParseError("node ids must be integers", lineno)
        capacity, length, fft = vals[2], vals[3], vals[4]
        lam = vals[5] if len(vals) > 5 and vals[5] != 0 else DEFAULT_LAMBDA
        beta = vals[6] if len(vals) > 6 and vals[6] != 0 else DEFAULT_BETA
        if capacity <= 0:
            raise ParseError(f"capacity must be > 0, got {capacity}", lineno)
        if fft <= 0:
            raise ParseError(f"free_flow_time must be > 0, got {fft}", lineno)
        if lam < 0 or beta < 1:
            raise ParseError("BPR coefficients out of range (need b >= 0, power >= 1)", lineno)
        edges.append(
            Edge(
                id=len(edges) + 1,
                tail=int(tail),
                head=int(head),
                free_flow_time=fft,
                capacity=capacity,
                lam=lam,
                beta=beta,
                length=length,
                speed=vals[7] if len(vals) > 7 else 0.0,
                toll=vals[8] if len(vals) > 8 else 0.0,
                link_type=int(vals[9]) if len(vals) > 9 else 1,
            )
        )

    if n_links is not None and n_links != len(edges):
        raise ParseError(f"<NUMBER OF LINKS> says {n_links} but found {len(edges)} records", 1)
    nodes: set[int] = set()
    for e in edges:
        nodes.update((e.tail, e.head))
    if n_nodes is not None and len(nodes) != n_nodes:
        # isolated nodes are only expressible with the usual 1..n numbering
        numbered = set(range(1, n_nodes + 1))
        if not nodes <= numbered:
            raise ParseError(f"<NUMBER OF NODES> says {n_nodes} but links reference {len(nodes)}", 1)
        nodes = numbered
    try:
        return Network(frozenset(nodes), tuple(edges), tuple(meta))
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def _fmt(x: float) -> str:
    return repr(int(x)) if float(x).is_integer() else repr(float(x))


def serialize_network(network: Network) -> str:
    """Write ``network`` back out in TNTP link format."""
    meta = dict(network.metadata)
    meta["NUMBER OF NODES"] = str(len(network.nodes))
    meta["NUMBER OF LINKS"] = str(len(network.edges))
    out = [f"<{k}> {v}" for k, v in meta.items()]
    out += ["<END OF METADATA>", ""]
    out.append("~\tinit_node\tterm_node\tcapacity\tlength\tfree_flow_time\tb\tpower\tspeed\ttoll\tlink_type\t;")
    for e in network.edges:
        cols = (e.tail, e.head, e.capacity, e.length, e.free_flow_time, e.lam, e.beta,
                e.speed, e.toll, e.link_type)
        out.append("\t" + "\t".join(_fmt(c) for c in cols) + "\t;")
    return "\n".join(out) + "\n"


_ENTRY_RE = re.compile(r"^\s*(\S+)\s*:\s*(\S+)\s*$")


def parse_trips(text: str) -> list[Commodity]:
    """Parse a TNTP trips file into positive-demand commodities.

    The metadata block is optional here; if present it must be closed.
    """
    lines = text.splitlines()
    first = next((_strip_comment(l).strip() for l in lines if _strip_comment(l).strip()), "")
    if first.startswith("<"):
        meta, start = _split_metadata(lines)
    else:
        meta, start = [], 0
    total = _meta_number(meta, "TOTAL OD FLOW", 1)

    out: list[Commodity] = []
    origin: int | None = None
    seen = 0.0
    for lineno, raw in enumerate(lines[start:], start=start + 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.lower().startswith("origin"):
            toks = line.split()
            if len(toks) != 2:
                raise ParseError("malformed Origin line", lineno)
            origin = int(_num(toks[1], lineno, "origin id"))
            continue
        if origin is None:
            raise ParseError("destination entries before any Origin block", lineno)
        parts = line.split(";")
        if parts[-1].strip():
            raise ParseError("trip entry is not terminated by ';'", lineno)
        for part in parts[:-1]:
            m = _ENTRY_RE.match(part)
            if m is None:
                raise ParseError(f"malformed 'dest : flow' token {part.strip()!r}", lineno)
            dest = _num(m.group(1), lineno, "destination id")
            flow = _num(m.group(2), lineno, "flow")
            if dest != int(dest):
                raise ParseError("destination id must be an integer", lineno)
            if flow < 0:
                raise ParseError(f"negative flow {flow}", lineno)
            seen += flow
            if flow > 0 and int(dest) != origin:
                out.append(Commodity(origin, int(dest), flow))

    if total is not None and abs(seen - total) > 1e-6 * max(abs(total), 1.0):
        raise ParseError(f"<TOTAL OD FLOW> is {total} but entries sum to {seen}", 1)
    return out


def load_network(path) -> Network:
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


def load_trips(path) -> list[Commodity]:
    with open(path, encoding="utf-8") as fh:
        return parse_trips(fh.read())


# --------------------------------------------------------------------------
# Paths


def _dijkstra(
    network: Network,
    edge_costs: Mapping[int, float],
    s: int,
    d: int,
    banned_nodes: frozenset[int] | set[int] = frozenset(),
    banned_edges: frozenset[int] | set[int] = frozenset(),
) -> tuple[float, tuple[int, ...]] | None:
    # Labels compare (cost, edge sequence) so equal-cost ties resolve to the
    # lexicographically smallest edge-id sequence.
    best: dict[int, tuple[float, tuple[int, ...]]] = {s: (0.0, ())}
    heap: list[tuple[float, tuple[int, ...], int]] = [(0.0, (), s)]
    done: set[int] = set()
    while heap:
        cost, seq, node = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        if node == d:
            return cost, seq
        for eid in network.adjacency.get(node, ()):
            if eid in banned_edges:
                continue
            head = network.edge(eid).head
            if head in done or head in banned_nodes:
                continue
            c = edge_costs[eid]
            if c < 0:
                raise ValueError(f"negative cost on edge {eid}")
            label = (cost + c, seq + (eid,))
            if head not in best or label < best[head]:
                best[head] = label
                heapq.heappush(heap, (label[0], label[1], head))
    return None


def shortest_path(
    network: Network, edge_costs: Mapping[int, float], s: int, d: int, commodity: int = 0
) -> Path:
    """Minimum-cost simple path; ties go to the smallest edge-id sequence."""
    if s not in network.nodes or d not in network.nodes:
        raise NoPathError(f"node {s if s not in network.nodes else d} not in network")
    found = _dijkstra(network, edge_costs, s, d)
    if found is None:
        raise NoPathError(f"no path from {s} to {d}")
    return Path(found[1], commodity)


def free_flow_costs(network: Network) -> dict[int, float]:
    return {e.id: e.free_flow_time for e in network.edges}


def enumerate_paths(
    network: Network,
    commodity: Commodity,
    k: int = DEFAULT_K_PATHS,
    commodity_index: int = 0,
    edge_costs: Mapping[int, float] | None = None,
) -> tuple[Path, ...]:
    """The ``k`` cheapest simple paths (free-flow time by default), ascending.

    Deviation-based (Yen) search; ordering is by (cost, edge-id sequence).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    costs = free_flow_costs(network) if edge_costs is None else edge_costs
    s, d = commodity.source, commodity.destination
    first = shortest_path(network, costs, s, d, commodity_index)
    accepted: list[tuple[float, tuple[int, ...]]] = [(first.cost(costs), first.edges)]
    candidates: list[tuple[float, tuple[int, ...]]] = []
    queued: set[tuple[int, ...]] = {first.edges}

    while len(accepted) < k:
        _, last = accepted[-1]
        last_nodes = Path(last).nodes(network)
        for i in range(len(last)):
            spur = last_nodes[i]
            root = last[:i]
            banned_edges = {p[i] for _, p in accepted if p[:i] == root and len(p) > i}
            banned_nodes = set(last_nodes[:i])
            found = _dijkstra(network, costs, spur, d, banned_nodes, banned_edges)
            if found is None:
                continue
            seq = root + found[1]
            if seq in queued:
                continue
            queued.add(seq)
            heapq.heappush(candidates, (sum(costs[e] for e in seq), seq))
        if not candidates:
            break
        accepted.append(heapq.heappop(candidates))
    return tuple(Path(seq, commodity_index) for _, seq in accepted)


def build_path_set(
    network: Network, commodities: Sequence[Commodity], k: int = DEFAULT_K_PATHS
) -> PathSet:
    return PathSet(
        tuple(enumerate_paths(network, c, k, commodity_index=i) for i, c in enumerate(commodities))
    )
