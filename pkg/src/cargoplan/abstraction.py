"""Sparse abstract logistics graph over sites.

Each site gets one row of the sparse travel-time matrix, computed by a
Dijkstra search over the road network that stops once the K nearest other
sites are settled. Region-internal all-pairs costs are then derived from
the abstract graph alone, so later pipeline stages never touch the road
network again.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .netmodel import RoadNetwork


class UnreachablePairError(ValueError):
    def __init__(self, pairs: list[tuple[int, int]]):
        super().__init__(f"mutually unreachable site pairs: {pairs}")
        self.pairs = pairs


@dataclass
class AbstractGraph:
    site_ids: list[int]
    coords: dict[int, tuple[float, float]]
    # rows[src][dst] = (travel time h, path distance km)
    rows: dict[int, dict[int, tuple[float, float]]]
    neighbors_per_row: int
    _region_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_sites(self) -> int:
        return len(self.site_ids)

    def undirected_adjacency(self) -> dict[int, list[tuple[int, float, float]]]:
        """Union of stored entries in both directions: site -> [(other, t, d)]."""
        adj: dict[int, dict[int, tuple[float, float]]] = {s: {} for s in self.site_ids}
        for src, row in self.rows.items():
            for dst, (t, d) in row.items():
                for a, b in ((src, dst), (dst, src)):
                    prev = adj[a].get(b)
                    if prev is None or t < prev[0]:
                        adj[a][b] = (t, d)
        return {s: [(o, t, d) for o, (t, d) in sorted(nbrs.items())]
                for s, nbrs in adj.items()}


def dijkstra_times(network: RoadNetwork, source: int) -> tuple[np.ndarray, np.ndarray]:
    """Travel time (h) and path distance (km) from source to every node.

    Unreachable nodes get inf. Ties in time are settled by lower node id.
    """
    n = network.n
    times = np.full(n, np.inf)
    dists = np.full(n, np.inf)
    times[source] = 0.0
    dists[source] = 0.0
    pred = np.full(n, n, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    heap = [(0.0, source)]
    while heap:
        t, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, eidx in network.adjacency[u]:
            if done[v]:
                continue
            e = network.edges[eidx]
            nt = t + e.travel_time_h
            # time ties resolved toward the lower-id predecessor
            if nt < times[v] or (nt == times[v] and u < pred[v]):
                times[v] = nt
                dists[v] = dists[u] + e.length_km
                pred[v] = u
                heapq.heappush(heap, (nt, v))
    return times, dists


def spf_row(network: RoadNetwork, source: int, K: int) -> dict[int, tuple[float, float]]:
    """K nearest other sites from `source` by travel time, with (t, d) pairs.

    Dijkstra expands the frontier until K sites are settled or the component
    is exhausted; ties go to the lower node id.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if not network.locations[source].is_site:
        raise ValueError(f"source {source} is not a site")
    n = network.n
    times = np.full(n, np.inf)
    dists = np.full(n, np.inf)
    times[source] = 0.0
    dists[source] = 0.0
    pred = np.full(n, n, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    heap = [(0.0, source)]
    row: dict[int, tuple[float, float]] = {}
    while heap and len(row) < K:
        t, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u != source and network.locations[u].is_site:
            row[u] = (float(times[u]), float(dists[u]))
            if len(row) == K:
                break
        for v, eidx in network.adjacency[u]:
            if done[v]:
                continue
            e = network.edges[eidx]
            nt = t + e.travel_time_h
            if nt < times[v] or (nt == times[v] and u < pred[v]):
                times[v] = nt
                dists[v] = dists[u] + e.length_km
                pred[v] = u
                heapq.heappush(heap, (nt, v))
    return row


def build_abstract_graph(network: RoadNetwork, K: int = 10) -> AbstractGraph:
    """One spf_row per site, assembled into the sparse travel-time matrix."""
    site_ids = network.site_ids()
    if not site_ids:
        raise ValueError("network has no sites")
    rows = {s: spf_row(network, s, K) for s in site_ids}
    coords = {s: (network.locations[s].x, network.locations[s].y) for s in site_ids}
    return AbstractGraph(site_ids=site_ids, coords=coords, rows=rows, neighbors_per_row=K)


def region_cost_matrix(g: AbstractGraph, members: list[int]) -> tuple[np.ndarray, np.ndarray]:
    """All-pairs (time, distance) over `members`, routed through the abstract graph.

    Paths may pass through sites outside the region. Results are memoized
    per member set on the graph object.
    """
    if not members:
        raise ValueError("members must be nonempty")
    unknown = [m for m in members if m not in g.rows]
    if unknown:
        raise ValueError(f"unknown sites: {unknown}")
    key = tuple(members)
    cached = g._region_cache.get(key)
    if cached is not None:
        return cached

    adj = g.undirected_adjacency()
    m = len(members)
    T = np.zeros((m, m))
    D = np.zeros((m, m))
    bad: list[tuple[int, int]] = []
    for i, src in enumerate(members):
        t_map, d_map = _dijkstra_abstract(adj, src)
        for j, dst in enumerate(members):
            if dst == src:
                continue
            if dst not in t_map:
                if src < dst:
                    bad.append((src, dst))
                continue
            T[i, j] = t_map[dst]
            D[i, j] = d_map[dst]
    if bad:
        raise UnreachablePairError(bad)
    g._region_cache[key] = (T, D)
    return T, D


def _dijkstra_abstract(adj: dict[int, list[tuple[int, float, float]]],
                       source: int) -> tuple[dict[int, float], dict[int, float]]:
    t_map = {source: 0.0}
    d_map = {source: 0.0}
    pred: dict[int, int] = {}
    done: set[int] = set()
    heap = [(0.0, source)]
    while heap:
        t, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, et, ed in adj[u]:
            if v in done:
                continue
            nt = t + et
            prev = t_map.get(v, np.inf)
            if nt < prev or (nt == prev and u < pred.get(v, 1 << 60)):
                t_map[v] = nt
                d_map[v] = d_map[u] + ed
                pred[v] = u
                heapq.heappush(heap, (nt, v))
    return t_map, d_map


def serialize_abstract(g: AbstractGraph) -> str:
    """Documented sparse text format: header, site coordinates, then row entries."""
    lines = [f"H {g.neighbors_per_row} {g.n_sites}"]
    for s in g.site_ids:
        x, y = g.coords[s]
        lines.append(f"S {s} {x!r} {y!r}")
    for s in g.site_ids:
        for dst in sorted(g.rows[s]):
            t, d = g.rows[s][dst]
            lines.append(f"R {s} {dst} {t!r} {d!r}")
    return "\n".join(lines) + "\n"


def parse_abstract(content: str) -> AbstractGraph:
    K = 0
    site_ids: list[int] = []
    coords: dict[int, tuple[float, float]] = {}
    rows: dict[int, dict[int, tuple[float, float]]] = {}
    for raw in content.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "H":
            K = int(parts[1])
        elif parts[0] == "S":
            s = int(parts[1])
            site_ids.append(s)
            coords[s] = (float(parts[2]), float(parts[3]))
            rows.setdefault(s, {})
        elif parts[0] == "R":
            rows.setdefault(int(parts[1]), {})[int(parts[2])] = (float(parts[3]), float(parts[4]))
    return AbstractGraph(site_ids=site_ids, coords=coords, rows=rows, neighbors_per_row=K)
