"""Synthetic benchmark instance generator.

Drop-off locations are sampled from isotropic Gaussians around uniformly
placed cluster centers ("cities"), connected by a Delaunay triangulation,
with 50 km/h intra-city and 90 km/h inter-city speed limits.

All randomness comes from numpy's PCG64 generator seeded from the config
seed, so instances are reproducible byte-for-byte.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError

from .netmodel import Location, RoadEdge, RoadNetwork

INTRA_CITY_SPEED_KMH = 50.0
INTER_CITY_SPEED_KMH = 90.0


@dataclass(frozen=True)
class GenConfig:
    n_locations: int
    n_clusters: int
    cluster_sigma_km: float = 3.0
    bbox_km: float = 100.0
    site_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_locations < 1:
            raise ValueError("n_locations must be positive")
        if not (1 <= self.n_clusters <= self.n_locations):
            raise ValueError("need 1 <= n_clusters <= n_locations")
        if self.cluster_sigma_km <= 0 or self.bbox_km <= 0:
            raise ValueError("sigma and bbox must be positive")
        if not (0 < self.site_fraction <= 1):
            raise ValueError("site_fraction must be in (0, 1]")


def generate_locations(cfg: GenConfig) -> list[tuple[Location, int]]:
    """Sample locations around uniformly drawn cluster centers.

    Returns (location, cluster_id) pairs; cluster_id is the generating
    center's index and is the ground truth for planted-partition tests.
    """
    rng = np.random.default_rng(cfg.seed)
    centers = rng.uniform(0.0, cfg.bbox_km, size=(cfg.n_clusters, 2))
    cluster_ids = rng.integers(0, cfg.n_clusters, size=cfg.n_locations)
    offsets = rng.normal(0.0, cfg.cluster_sigma_km, size=(cfg.n_locations, 2))
    points = centers[cluster_ids] + offsets
    return [
        (Location(id=i, x=float(points[i, 0]), y=float(points[i, 1])), int(cluster_ids[i]))
        for i in range(cfg.n_locations)
    ]


def triangulate(points: list[Location]) -> list[tuple[int, int]]:
    """Delaunay edge set over the points, as sorted (u, v) id pairs.

    Degenerate inputs fall back: fewer than 3 points give the trivial edge
    set, collinear points give the path along the line.
    """
    n = len(points)
    if n < 2:
        return []
    if n == 2:
        return [(points[0].id, points[1].id)]
    coords = np.array([[p.x, p.y] for p in points])
    try:
        tri = Delaunay(coords)
    except QhullError:
        return _collinear_path(points, coords)
    edges: set[tuple[int, int]] = set()
    for simplex in tri.simplices:
        for a in range(3):
            for b in range(a + 1, 3):
                i, j = points[simplex[a]].id, points[simplex[b]].id
                edges.add((min(i, j), max(i, j)))
    return sorted(edges)


def _collinear_path(points: list[Location], coords: np.ndarray) -> list[tuple[int, int]]:
    direction = coords[-1] - coords[0]
    order = np.argsort(coords @ direction, kind="stable")
    edges = []
    for a, b in zip(order[:-1], order[1:]):
        i, j = points[a].id, points[b].id
        edges.append((min(i, j), max(i, j)))
    return sorted(set(edges))


def build_instance(cfg: GenConfig) -> RoadNetwork:
    """Full synthetic road network: triangulated clusters with two-tier speeds."""
    located = generate_locations(cfg)
    cluster_of = {loc.id: cid for loc, cid in located}
    raw_points = [loc for loc, _ in located]

    n_sites = max(1, round(cfg.site_fraction * cfg.n_locations))
    site_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    site_ids = set(site_rng.choice(cfg.n_locations, size=n_sites, replace=False).tolist())
    locations = [
        Location(id=loc.id, x=loc.x, y=loc.y, is_site=loc.id in site_ids)
        for loc in raw_points
    ]

    edges = []
    for u, v in triangulate(raw_points):
        a, b = locations[u], locations[v]
        length = math.hypot(a.x - b.x, a.y - b.y)
        speed = INTRA_CITY_SPEED_KMH if cluster_of[u] == cluster_of[v] else INTER_CITY_SPEED_KMH
        edges.append(RoadEdge(u=u, v=v, length_km=length, speed_kmh=speed))
    return RoadNetwork(locations, edges)


def planted_labels(cfg: GenConfig) -> list[int]:
    """Ground-truth cluster id per location for the instance build_instance(cfg) yields."""
    return [cid for _, cid in generate_locations(cfg)]
