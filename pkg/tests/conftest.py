import itertools

import numpy as np
import pytest

from cargoplan.netmodel import Location, RoadEdge, RoadNetwork
from cargoplan.vrp import VrpInstance


def make_network(coords, edges, sites=None):
    """coords: [(x, y)], edges: [(u, v, length, speed)], sites: ids (default all)."""
    sites = set(range(len(coords))) if sites is None else set(sites)
    locations = [Location(id=i, x=float(x), y=float(y), is_site=i in sites)
                 for i, (x, y) in enumerate(coords)]
    road_edges = [RoadEdge(u=u, v=v, length_km=float(l), speed_kmh=float(s))
                  for u, v, l, s in edges]
    return RoadNetwork(locations, road_edges)


def path_network(n, length=10.0, speed=50.0, sites=None):
    coords = [(i * length, 0.0) for i in range(n)]
    edges = [(i, i + 1, length, speed) for i in range(n - 1)]
    return make_network(coords, edges, sites)


def bellman_ford(network, source):
    """Independent shortest-path oracle over travel_time_h weights."""
    n = network.n
    dist = [np.inf] * n
    dist[source] = 0.0
    arcs = []
    for e in network.edges:
        arcs.append((e.u, e.v, e.travel_time_h))
        arcs.append((e.v, e.u, e.travel_time_h))
    for _ in range(n - 1):
        changed = False
        for u, v, w in arcs:
            if dist[u] + w < dist[v]:
                dist[v] = dist[u] + w
                changed = True
        if not changed:
            break
    return dist


def random_euclidean_instance(rng, n_customers, n_vehicles=1, box=50.0):
    m = n_customers + 1
    coords = rng.uniform(0, box, size=(m, 2))
    D = np.sqrt(((coords[:, None, :] - coords[None, :, :]) ** 2).sum(-1))
    return VrpInstance(site_ids=list(range(m)), coords=coords,
                       cost_t=D / 50.0, cost_d=D, depot=0, n_vehicles=n_vehicles)


def brute_force_single_route(inst):
    """Exhaustive optimum for a 1-vehicle instance; returns the best cost."""
    C = inst.cost
    depot = inst.depot
    best = np.inf
    for perm in itertools.permutations(inst.customers):
        seq = [depot, *perm, depot]
        cost = sum(C[a, b] for a, b in zip(seq[:-1], seq[1:]))
        best = min(best, cost)
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
