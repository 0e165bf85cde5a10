"""End-to-end plan construction and ad-hoc event handling.

Three stages: abstract the road network into the sparse site graph,
spectrally partition it into regions, then solve a depot-anchored VRP per
region. Events (new parcel, vehicle breakdown, border closed) trigger
localized re-optimization; regions outside the affected set are carried
over untouched.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import vrp
from .abstraction import (AbstractGraph, UnreachablePairError, build_abstract_graph,
                          dijkstra_times, region_cost_matrix)
from .netmodel import RoadNetwork
from .partition import PartitionResult, partition_graph, region_members
from .vrp import Solution, StopRule, VrpInstance


class PipelineError(RuntimeError):
    """Failure annotated with the pipeline stage it occurred in."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class UnreachableParcelError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineParams:
    knn: int = 10
    k_regions: int | None = None  # None: round(sqrt(n_sites/100)) clamped to [1, 50]
    root_seed: int = 0
    stop: StopRule = StopRule("seconds", 10.0)
    event_stop: StopRule = StopRule("seconds", 20.0)
    vehicles_per: int = 50
    objective: str = "distance"
    m_nodes: int = 10
    s_targets: int = 30

    def regions_for(self, n_sites: int) -> int:
        if self.k_regions is not None:
            return self.k_regions
        return min(max(1, round(math.sqrt(n_sites / 100))), 50, n_sites)


def derive_seed(root: int, *key: int) -> int:
    """Deterministic child seed: SeedSequence(root) spawned at the given key."""
    return int(np.random.SeedSequence(root, spawn_key=key).generate_state(1)[0])


@dataclass(frozen=True)
class AdHocEvent:
    kind: str  # "new_parcel" | "vehicle_breakdown" | "border_closed"
    x: float | None = None
    y: float | None = None
    region: int | None = None
    vehicle: int | None = None
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.kind == "new_parcel":
            if self.x is None or self.y is None:
                raise ValueError("new_parcel needs x and y")
        elif self.kind == "vehicle_breakdown":
            if self.region is None or self.vehicle is None:
                raise ValueError("vehicle_breakdown needs region and vehicle")
        elif self.kind == "border_closed":
            if not self.edges:
                raise ValueError("border_closed needs edges")
        else:
            raise ValueError(f"unknown event kind {self.kind!r}")

    @classmethod
    def from_record(cls, record: str | dict) -> "AdHocEvent":
        if isinstance(record, str):
            record = json.loads(record)
        rec = dict(record)
        if "edges" in rec:
            rec["edges"] = tuple(tuple(e) for e in rec["edges"])
        return cls(**rec)


@dataclass
class RegionPlan:
    region_id: int
    base_members: list[int]      # site ids from the partition
    extra_visits: list[int]      # road node ids added by new_parcel events
    depot: int                   # site id
    instance: VrpInstance
    solution: Solution


@dataclass
class GraphState:
    network: RoadNetwork
    abstract: AbstractGraph
    partition: PartitionResult
    params: PipelineParams
    event_counter: int = 0
    _cost_cache: dict = field(default_factory=dict, repr=False)


def _region_costs(state: GraphState, members: list[int]) -> tuple[np.ndarray, np.ndarray]:
    """Region cost matrices, with a road-network fallback.

    The K-nearest abstract graph can be disconnected across city clusters;
    a region spanning several components (notably the flat single-region
    baseline) then has pairs with no abstract path. Those matrices are
    computed from road-network shortest paths instead.
    """
    key = tuple(members)
    cached = state._cost_cache.get(key)
    if cached is not None:
        return cached
    try:
        T, D = region_cost_matrix(state.abstract, members)
    except UnreachablePairError:
        m = len(members)
        T = np.zeros((m, m))
        D = np.zeros((m, m))
        for i, src in enumerate(members):
            times, dists = dijkstra_times(state.network, src)
            for j, dst in enumerate(members):
                if i == j:
                    continue
                if not math.isfinite(times[dst]):
                    raise UnreachablePairError([(src, dst)])
                T[i, j] = times[dst]
                D[i, j] = dists[dst]
    state._cost_cache[key] = (T, D)
    return T, D


@dataclass
class DistributionPlan:
    region_plans: dict[int, RegionPlan]
    totals: dict
    provenance: dict
    state: GraphState = field(repr=False, default=None)


def select_depot(members: list[int], T: np.ndarray) -> int:
    """Medoid by travel time; ties go to the lowest site id."""
    if not members:
        raise ValueError("members must be nonempty")
    sums = T.sum(axis=1)
    best = min(range(len(members)), key=lambda i: (sums[i], members[i]))
    return members[best]


def _build_instance(state: GraphState, base_members: list[int], extra_visits: list[int],
                    depot: int, n_vehicles: int) -> VrpInstance:
    """Cost matrices over base sites (via the abstract graph) plus parcel visits
    (via road-network shortest paths from their snapped nodes)."""
    T, D = _region_costs(state, base_members)
    m = len(base_members) + len(extra_visits)
    Tm = np.zeros((m, m))
    Dm = np.zeros((m, m))
    nb = len(base_members)
    Tm[:nb, :nb] = T
    Dm[:nb, :nb] = D
    coords = np.zeros((m, 2))
    for i, s in enumerate(base_members):
        coords[i] = state.abstract.coords[s]
    all_nodes = base_members + extra_visits
    for j, node in enumerate(extra_visits, start=nb):
        times, dists = dijkstra_times(state.network, node)
        loc = state.network.locations[node]
        coords[j] = (loc.x, loc.y)
        for i, other in enumerate(all_nodes):
            if i == j:
                continue
            t, d = float(times[other]), float(dists[other])
            if not math.isfinite(t):
                raise UnreachableParcelError(
                    f"parcel node {node} cannot reach node {other}")
            Tm[i, j] = Tm[j, i] = t
            Dm[i, j] = Dm[j, i] = d
    return VrpInstance(site_ids=list(all_nodes), coords=coords, cost_t=Tm, cost_d=Dm,
                       depot=base_members.index(depot), n_vehicles=n_vehicles,
                       objective=state.params.objective)


def _solve_region(state: GraphState, region_id: int, base_members: list[int],
                  stop: StopRule | None = None) -> RegionPlan:
    p = state.params
    n_customers = max(0, len(base_members) - 1)
    n_vehicles = max(1, math.ceil(n_customers / p.vehicles_per))
    T, _ = _region_costs(state, base_members)
    depot = select_depot(base_members, T)
    inst = _build_instance(state, base_members, [], depot, n_vehicles)
    sol = vrp.solve(inst, stop or p.stop, derive_seed(p.root_seed, 1, region_id),
                    p.m_nodes, p.s_targets)
    return RegionPlan(region_id=region_id, base_members=list(base_members),
                      extra_visits=[], depot=depot, instance=inst, solution=sol)


def _totals(region_plans: dict[int, RegionPlan]) -> dict:
    per_region = {}
    total_d = total_t = 0.0
    for r, rp in sorted(region_plans.items()):
        d = vrp.solution_cost(rp.instance, rp.solution.routes, rp.instance.cost_d)
        t = vrp.solution_cost(rp.instance, rp.solution.routes, rp.instance.cost_t)
        per_region[str(r)] = {"distance_km": d, "time_h": t}
        total_d += d
        total_t += t
    return {"distance_km": total_d, "time_h": total_t, "per_region": per_region}


def run_pipeline(network: RoadNetwork, params: PipelineParams) -> DistributionPlan:
    """Abstract, partition, and solve each region independently."""
    timings = {}
    t0 = time.monotonic()
    try:
        abstract = build_abstract_graph(network, params.knn)
    except Exception as exc:
        raise PipelineError("abstraction", exc) from exc
    timings["abstraction_s"] = time.monotonic() - t0

    k = params.regions_for(abstract.n_sites)
    t0 = time.monotonic()
    try:
        part = partition_graph(abstract, k, derive_seed(params.root_seed, 0))
    except Exception as exc:
        raise PipelineError("partition", exc) from exc
    timings["partition_s"] = time.monotonic() - t0

    state = GraphState(network=network, abstract=abstract, partition=part, params=params)
    region_plans: dict[int, RegionPlan] = {}
    t0 = time.monotonic()
    try:
        for r, members in region_members(part).items():
            region_plans[r] = _solve_region(state, r, members)
    except Exception as exc:
        raise PipelineError("vrp", exc) from exc
    timings["vrp_s"] = time.monotonic() - t0
    timings["per_region_s"] = {str(r): rp.solution.wall_time_s
                               for r, rp in sorted(region_plans.items())}

    provenance = {
        "params": {
            "knn": params.knn, "k_regions": k, "root_seed": params.root_seed,
            "stop": [params.stop.mode, params.stop.window],
            "event_stop": [params.event_stop.mode, params.event_stop.window],
            "vehicles_per": params.vehicles_per, "objective": params.objective,
            "m_nodes": params.m_nodes, "s_targets": params.s_targets,
        },
        "seeds": {"partition": derive_seed(params.root_seed, 0),
                  "regions": {str(r): derive_seed(params.root_seed, 1, r)
                              for r in region_plans}},
        "isolated_singletons": part.isolated_singletons,
        "timings": timings,
    }
    return DistributionPlan(region_plans=region_plans, totals=_totals(region_plans),
                            provenance=provenance, state=state)


def run_flat(network: RoadNetwork, params: PipelineParams) -> DistributionPlan:
    """Baseline: one region covering the whole graph, no partitioning benefit."""
    return run_pipeline(network, replace(params, k_regions=1))


def handle_event(plan: DistributionPlan, event: AdHocEvent,
                 stop: StopRule | None = None) -> DistributionPlan:
    """Process one ad-hoc event by re-optimizing only the affected regions."""
    state = plan.state
    stop = stop or state.params.event_stop
    state.event_counter += 1
    seed_key = state.event_counter
    if event.kind == "new_parcel":
        new_plans = _handle_new_parcel(plan, state, event, stop, seed_key)
    elif event.kind == "vehicle_breakdown":
        new_plans = _handle_breakdown(plan, state, event, stop, seed_key)
    else:
        new_plans = _handle_border_closed(plan, state, event, stop, seed_key)
    new_plan = DistributionPlan(region_plans=new_plans, totals=_totals(new_plans),
                                provenance=dict(plan.provenance), state=state)
    return new_plan


def _snap_to_node(network: RoadNetwork, x: float, y: float) -> int:
    xy = np.array([[loc.x, loc.y] for loc in network.locations])
    return int(np.argmin(((xy - (x, y)) ** 2).sum(axis=1)))


def _handle_new_parcel(plan, state: GraphState, event: AdHocEvent,
                       stop: StopRule, seed_key: int) -> dict[int, RegionPlan]:
    node = _snap_to_node(state.network, event.x, event.y)
    times, _ = dijkstra_times(state.network, node)
    best_region, best_t = None, math.inf
    for r, rp in sorted(plan.region_plans.items()):
        t = float(times[rp.depot])
        if t < best_t:
            best_region, best_t = r, t
    if best_region is None or not math.isfinite(best_t):
        raise UnreachableParcelError(f"parcel at node {node} reaches no region depot")

    rp = plan.region_plans[best_region]
    inst = _build_instance(state, rp.base_members, rp.extra_visits + [node],
                           rp.depot, rp.instance.n_vehicles)
    new_cust = len(inst.site_ids) - 1
    routes = [list(r) for r in rp.solution.routes]
    _cheapest_insert(inst, routes, new_cust)
    sol = vrp.improve(inst, routes, stop,
                      derive_seed(state.params.root_seed, 2, seed_key, best_region),
                      state.params.m_nodes, state.params.s_targets)
    out = dict(plan.region_plans)
    out[best_region] = RegionPlan(region_id=best_region,
                                  base_members=list(rp.base_members),
                                  extra_visits=rp.extra_visits + [node],
                                  depot=rp.depot, instance=inst, solution=sol)
    return out


def _handle_breakdown(plan, state: GraphState, event: AdHocEvent,
                      stop: StopRule, seed_key: int) -> dict[int, RegionPlan]:
    if event.region not in plan.region_plans:
        raise ValueError(f"unknown region {event.region}")
    rp = plan.region_plans[event.region]
    if not (0 <= event.vehicle < rp.instance.n_vehicles):
        raise ValueError(f"unknown vehicle {event.vehicle} in region {event.region}")
    if rp.instance.n_vehicles == 1:
        raise ValueError(f"region {event.region} would have no surviving vehicles")
    routes = [list(r) for i, r in enumerate(rp.solution.routes) if i != event.vehicle]
    orphans = list(rp.solution.routes[event.vehicle])
    inst = replace(rp.instance, n_vehicles=rp.instance.n_vehicles - 1)
    for cust in orphans:
        _cheapest_insert(inst, routes, cust)
    sol = vrp.improve(inst, routes, stop,
                      derive_seed(state.params.root_seed, 2, seed_key, event.region),
                      state.params.m_nodes, state.params.s_targets)
    out = dict(plan.region_plans)
    out[event.region] = RegionPlan(region_id=event.region,
                                   base_members=list(rp.base_members),
                                   extra_visits=list(rp.extra_visits),
                                   depot=rp.depot, instance=inst, solution=sol)
    return out


def _handle_border_closed(plan, state: GraphState, event: AdHocEvent,
                          stop: StopRule, seed_key: int) -> dict[int, RegionPlan]:
    new_network = state.network.without_edges(set(event.edges))
    new_abstract = build_abstract_graph(new_network, state.params.knn)
    affected = [r for r, rp in sorted(plan.region_plans.items())
                if any(new_abstract.rows[s] != state.abstract.rows[s]
                       for s in rp.base_members)]
    state.network = new_network
    state.abstract = new_abstract
    out = dict(plan.region_plans)
    for r in affected:
        rp = plan.region_plans[r]
        inst = _build_instance(state, rp.base_members, rp.extra_visits,
                               rp.depot, rp.instance.n_vehicles)
        sol = vrp.improve(inst, [list(rt) for rt in rp.solution.routes], stop,
                          derive_seed(state.params.root_seed, 2, seed_key, r),
                          state.params.m_nodes, state.params.s_targets)
        out[r] = RegionPlan(region_id=r, base_members=list(rp.base_members),
                            extra_visits=list(rp.extra_visits), depot=rp.depot,
                            instance=inst, solution=sol)
    return out


def _cheapest_insert(inst: VrpInstance, routes: list[list[int]], cust: int) -> None:
    """Insert `cust` at the globally cheapest position across all routes."""
    C = inst.cost
    best = None
    for r_idx, r in enumerate(routes):
        seq = [inst.depot, *r, inst.depot]
        for pos in range(len(r) + 1):
            a, b = seq[pos], seq[pos + 1]
            delta = C[a, cust] + C[cust, b] - C[a, b]
            if best is None or delta < best[0] - 1e-15:
                best = (delta, r_idx, pos)
    if best is None:
        raise ValueError("no route to insert into")
    _, r_idx, pos = best
    routes[r_idx].insert(pos, cust)


def plan_to_dict(plan: DistributionPlan, include_timings: bool = True) -> dict:
    regions = {}
    for r, rp in sorted(plan.region_plans.items()):
        regions[str(r)] = {
            "depot": rp.depot,
            "members": rp.base_members,
            "extra_visits": rp.extra_visits,
            "n_vehicles": rp.instance.n_vehicles,
            "routes": [[rp.instance.site_ids[c] for c in route]
                       for route in rp.solution.routes],
            "iterations": rp.solution.iterations,
        }
    provenance = dict(plan.provenance)
    if not include_timings:
        provenance.pop("timings", None)
    return {"regions": regions, "totals": plan.totals, "provenance": provenance}


def plan_to_json(plan: DistributionPlan, include_timings: bool = True) -> str:
    return json.dumps(plan_to_dict(plan, include_timings), indent=2, sort_keys=True)


def plan_to_geojson(plan: DistributionPlan) -> str:
    """Routes as LineStrings and site assignments as Points, for map inspection."""
    features = []
    for r, rp in sorted(plan.region_plans.items()):
        for i, site in enumerate(rp.instance.site_ids):
            features.append({
                "type": "Feature",
                "geometry": {"type": "Point",
                             "coordinates": [rp.instance.coords[i, 0],
                                             rp.instance.coords[i, 1]]},
                "properties": {"site": site, "region": r,
                               "is_depot": i == rp.instance.depot},
            })
        depot_xy = rp.instance.coords[rp.instance.depot].tolist()
        for v, route in enumerate(rp.solution.routes):
            if not route:
                continue
            coords = [depot_xy] + [rp.instance.coords[c].tolist() for c in route] + [depot_xy]
            features.append({
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": coords},
                "properties": {"region": r, "vehicle": v},
            })
    return json.dumps({"type": "FeatureCollection", "features": features}, indent=2)


def coverage_ok(plan: DistributionPlan) -> bool:
    """Every abstract-graph site in exactly one region plan, every customer
    visit on exactly one route, parcels included."""
    seen_sites: list[int] = []
    for rp in plan.region_plans.values():
        seen_sites.extend(rp.base_members)
        counts: dict[int, int] = {}
        for route in rp.solution.routes:
            for c in route:
                counts[c] = counts.get(c, 0) + 1
        expected = {i: 1 for i in range(len(rp.instance.site_ids))
                    if i != rp.instance.depot}
        if counts != expected:
            return False
    return sorted(seen_sites) == sorted(plan.state.abstract.site_ids)
