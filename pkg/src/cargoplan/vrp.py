"""Per-region vehicle routing: cheapest insertion plus Tabu search.

Routes are closed tours anchored at the region depot. The only move is
relocate (take one customer, reinsert it after another node, possibly in a
different route); candidate moves are sampled, with target nodes drawn with
probability proportional to inverse Euclidean distance. No capacities.
"""
from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass, field

import numpy as np

EPS_KM = 1e-6  # floor for inverse-distance sampling weights


@dataclass(frozen=True)
class StopRule:
    """No-improvement stopping window: wall-clock seconds or iterations."""
    mode: str  # "seconds" | "iterations"
    window: float

    def __post_init__(self):
        if self.mode not in ("seconds", "iterations"):
            raise ValueError(f"unknown stop mode {self.mode!r}")
        if self.window <= 0:
            raise ValueError("window must be positive")


@dataclass
class VrpInstance:
    site_ids: list[int]      # member site ids; duplicates allowed for repeat visits
    coords: np.ndarray       # (m, 2) planar km
    cost_t: np.ndarray       # (m, m) travel time, hours
    cost_d: np.ndarray       # (m, m) path distance, km
    depot: int               # member index
    n_vehicles: int
    objective: str = "distance"

    def __post_init__(self):
        m = len(self.site_ids)
        if not (0 <= self.depot < m):
            raise ValueError("depot out of range")
        if self.n_vehicles < 1:
            raise ValueError("need at least one vehicle")
        if self.cost_t.shape != (m, m) or self.cost_d.shape != (m, m):
            raise ValueError("cost matrices must be square of side |members|")
        if self.objective not in ("distance", "time"):
            raise ValueError(f"unknown objective {self.objective!r}")

    @property
    def cost(self) -> np.ndarray:
        return self.cost_d if self.objective == "distance" else self.cost_t

    @property
    def customers(self) -> list[int]:
        return [i for i in range(len(self.site_ids)) if i != self.depot]


@dataclass
class Solution:
    routes: list[list[int]]  # customer member-indices per vehicle; depot implicit
    cost: float
    iterations: int = 0
    wall_time_s: float = 0.0


# A relocate target: ("cust", member index) places after that customer,
# ("depot", route index) places at the front of that route.
Target = tuple[str, int]


def route_cost(inst: VrpInstance, route: list[int], matrix: np.ndarray | None = None) -> float:
    if matrix is None:
        matrix = inst.cost
    if not route:
        return 0.0
    seq = [inst.depot, *route, inst.depot]
    return float(matrix[seq[:-1], seq[1:]].sum())


def solution_cost(inst: VrpInstance, routes: list[list[int]],
                  matrix: np.ndarray | None = None) -> float:
    return sum(route_cost(inst, r, matrix) for r in routes)


def initial_solution(inst: VrpInstance) -> Solution:
    """Cheapest insertion: repeatedly insert the globally cheapest customer.

    Ties break by lower customer index, then lower route index, then
    earlier position.
    """
    C = inst.cost
    routes: list[list[int]] = [[] for _ in range(inst.n_vehicles)]
    unrouted = np.array(sorted(inst.customers), dtype=np.intp)
    while unrouted.size:
        preds, succs, slots = [], [], []
        for r_idx, r in enumerate(routes):
            seq = [inst.depot, *r]
            for pos in range(len(r) + 1):
                preds.append(seq[pos])
                succs.append(seq[pos + 1] if pos < len(r) else inst.depot)
                slots.append((r_idx, pos))
        A = np.array(preds, dtype=np.intp)
        B = np.array(succs, dtype=np.intp)
        # delta[c, p]: cost increase of putting customer c into slot p
        delta = C[np.ix_(unrouted, A)] + C[B][:, unrouted].T - C[A, B][None, :]
        flat = int(np.argmin(delta))
        ci, pi = divmod(flat, len(slots))
        cust = int(unrouted[ci])
        r_idx, pos = slots[pi]
        routes[r_idx].insert(pos, cust)
        unrouted = np.delete(unrouted, ci)
    return Solution(routes=routes, cost=solution_cost(inst, routes))


@dataclass
class TabuState:
    inst: VrpInstance
    routes: list[list[int]]
    current_cost: float
    best: Solution
    tenure: int
    rng: np.random.Generator
    iteration: int = 0
    tabu: dict[int, int] = field(default_factory=dict)  # customer -> expiry iteration

    @classmethod
    def from_initial(cls, inst: VrpInstance, seed: int) -> "TabuState":
        init = initial_solution(inst)
        tenure = max(1, math.ceil(0.05 * len(inst.customers)))
        return cls(inst=inst, routes=[list(r) for r in init.routes],
                   current_cost=init.cost, best=copy.deepcopy(init),
                   tenure=tenure, rng=np.random.default_rng(seed))


def _locate(routes: list[list[int]], cust: int) -> tuple[int, int]:
    for r_idx, r in enumerate(routes):
        for pos, c in enumerate(r):
            if c == cust:
                return r_idx, pos
    raise ValueError(f"customer {cust} not routed")


def _adjacency_maps(inst: VrpInstance, routes: list[list[int]]):
    """pred/succ node per routed customer (depot index at route ends)."""
    d = inst.depot
    pred: dict[int, int] = {}
    succ: dict[int, int] = {}
    route_of: dict[int, int] = {}
    for r_idx, r in enumerate(routes):
        for pos, c in enumerate(r):
            pred[c] = r[pos - 1] if pos > 0 else d
            succ[c] = r[pos + 1] if pos + 1 < len(r) else d
            route_of[c] = r_idx
    return pred, succ, route_of


def move_delta(inst: VrpInstance, routes: list[list[int]], cust: int,
               target: Target, maps=None) -> float:
    """Exact cost change of relocating `cust` to `target`, old routes untouched."""
    if maps is None:
        maps = _adjacency_maps(inst, routes)
    pred, succ, route_of = maps
    d = inst.depot
    C = inst.cost
    p, s = pred[cust], succ[cust]
    kind, which = target
    if kind == "cust":
        j = which
        if j == p:
            return 0.0  # reinserting after own predecessor
        t = succ[j] if succ[j] != cust else s  # successor after removal
    else:
        r = which
        head = routes[r][0] if routes[r] else None
        if head == cust:
            return 0.0  # already at the front of that route
        j = d
        t = head if head is not None else d
        if route_of[cust] == r and head is None:
            t = d
    return (-(C[p, cust] + C[cust, s] - C[p, s])
            + (C[j, cust] + C[cust, t] - C[j, t]))


def apply_move(routes: list[list[int]], cust: int, target: Target) -> None:
    src_r, src_pos = _locate(routes, cust)
    routes[src_r].pop(src_pos)
    kind, which = target
    if kind == "cust":
        dst_r, dst_pos = _locate(routes, which)
        routes[dst_r].insert(dst_pos + 1, cust)
    else:
        routes[which].insert(0, cust)


def candidate_moves(state: TabuState, m_nodes: int = 10,
                    s_targets: int = 30) -> list[tuple[int, Target, float]]:
    """Sampled relocate moves with exact cost deltas.

    m_nodes customers are drawn uniformly without replacement; for each,
    s_targets distinct targets (other customers or route depot slots) are
    drawn with probability proportional to 1/max(d_euclid, eps).
    """
    if m_nodes < 1 or s_targets < 1:
        raise ValueError("m_nodes and s_targets must be >= 1")
    inst = state.inst
    customers = sorted(inst.customers)
    if not customers:
        return []
    rng = state.rng
    chosen = rng.choice(customers, size=min(m_nodes, len(customers)), replace=False)
    cust_arr = np.array(customers, dtype=np.intp)
    depot_xy = inst.coords[inst.depot]
    maps = _adjacency_maps(inst, state.routes)
    moves: list[tuple[int, Target, float]] = []
    for cust in sorted(int(c) for c in chosen):
        others = cust_arr[cust_arr != cust]
        cust_d = np.linalg.norm(inst.coords[others] - inst.coords[cust], axis=1)
        depot_d = float(np.linalg.norm(depot_xy - inst.coords[cust]))
        pool: list[Target] = [("cust", int(j)) for j in others]
        pool += [("depot", r) for r in range(inst.n_vehicles)]
        dists = np.concatenate([cust_d, np.full(inst.n_vehicles, depot_d)])
        weights = 1.0 / np.maximum(dists, EPS_KM)
        take = min(s_targets, len(pool))
        picks = rng.choice(len(pool), size=take, replace=False, p=weights / weights.sum())
        for p in sorted(int(i) for i in picks):
            target = pool[p]
            moves.append((cust, target,
                          move_delta(inst, state.routes, cust, target, maps)))
    return moves


def tabu_step(state: TabuState, m_nodes: int = 10, s_targets: int = 30) -> TabuState:
    """One Tabu iteration: best admissible sampled move, tabu list update.

    A tabu customer may still move if the move improves on the best known
    solution (aspiration). If nothing is admissible the iteration is a
    no-op that still advances the counter.
    """
    moves = candidate_moves(state, m_nodes, s_targets)
    best_move = None
    for cust, target, delta in moves:
        tabu_active = state.tabu.get(cust, -1) > state.iteration
        aspirates = state.current_cost + delta < state.best.cost - 1e-12
        if tabu_active and not aspirates:
            continue
        if best_move is None or delta < best_move[2]:
            best_move = (cust, target, delta)
    if best_move is not None:
        cust, target, delta = best_move
        apply_move(state.routes, cust, target)
        state.current_cost += delta
        state.tabu[cust] = state.iteration + state.tenure
        if state.current_cost < state.best.cost - 1e-12:
            state.best = Solution(routes=[list(r) for r in state.routes],
                                  cost=state.current_cost)
    state.iteration += 1
    return state


def solve(inst: VrpInstance, stop: StopRule, seed: int,
          m_nodes: int = 10, s_targets: int = 30) -> Solution:
    """Initial solution followed by Tabu search under a no-improvement window."""
    if not inst.customers:
        return Solution(routes=[[] for _ in range(inst.n_vehicles)], cost=0.0)
    return improve(inst, initial_solution(inst).routes, stop, seed, m_nodes, s_targets)


def improve(inst: VrpInstance, routes: list[list[int]], stop: StopRule, seed: int,
            m_nodes: int = 10, s_targets: int = 30) -> Solution:
    """Tabu search starting from the given feasible routes."""
    t0 = time.monotonic()
    if not inst.customers:
        return Solution(routes=[list(r) for r in routes], cost=0.0,
                        wall_time_s=time.monotonic() - t0)
    start = Solution(routes=[list(r) for r in routes],
                     cost=solution_cost(inst, routes))
    tenure = max(1, math.ceil(0.05 * len(inst.customers)))
    state = TabuState(inst=inst, routes=[list(r) for r in routes],
                      current_cost=start.cost, best=start, tenure=tenure,
                      rng=np.random.default_rng(seed))
    last_best = state.best.cost
    since_improve_iters = 0
    last_improve_time = time.monotonic()
    while True:
        if stop.mode == "iterations":
            if since_improve_iters >= stop.window:
                break
        elif time.monotonic() - last_improve_time >= stop.window:
            break
        tabu_step(state, m_nodes, s_targets)
        if state.best.cost < last_best - 1e-12:
            last_best = state.best.cost
            since_improve_iters = 0
            last_improve_time = time.monotonic()
        else:
            since_improve_iters += 1
    best = state.best
    best.iterations = state.iteration
    best.wall_time_s = time.monotonic() - t0
    return best


def serialize_solution(inst: VrpInstance, sol: Solution) -> str:
    """`V <vehicle> <site> ...` per route plus a `C cost iterations wall_s` summary."""
    lines = []
    for v, route in enumerate(sol.routes):
        sites = " ".join(str(inst.site_ids[c]) for c in route)
        lines.append(f"V {v} {sites}".rstrip())
    lines.append(f"C {sol.cost!r} {sol.iterations} {sol.wall_time_s:.3f}")
    return "\n".join(lines) + "\n"
