import itertools

import numpy as np
import pytest

from cargoplan.netmodel import Location, serialize_network
from cargoplan.synthgen import (GenConfig, build_instance, generate_locations,
                                triangulate)


def test_single_location():
    out = generate_locations(GenConfig(n_locations=1, n_clusters=1, seed=3))
    assert len(out) == 1
    loc, cid = out[0]
    assert loc.id == 0 and cid == 0


def test_generation_deterministic():
    cfg = GenConfig(n_locations=1000, n_clusters=10, seed=99)
    assert generate_locations(cfg) == generate_locations(cfg)


def test_within_cluster_std_matches_sigma():
    cfg = GenConfig(n_locations=1000, n_clusters=10, cluster_sigma_km=2.0,
                    bbox_km=100.0, seed=5)
    out = generate_locations(cfg)
    stds = []
    for c in range(10):
        pts = np.array([[loc.x, loc.y] for loc, cid in out if cid == c])
        stds.append(pts.std(axis=0, ddof=1).mean())
    assert 1.6 <= np.mean(stds) <= 2.4


def test_invalid_configs_rejected():
    with pytest.raises(ValueError):
        GenConfig(n_locations=2, n_clusters=3)
    with pytest.raises(ValueError):
        GenConfig(n_locations=5, n_clusters=2, site_fraction=0.0)
    with pytest.raises(ValueError):
        GenConfig(n_locations=5, n_clusters=2, cluster_sigma_km=-1)


def _pts(coords):
    return [Location(id=i, x=float(x), y=float(y)) for i, (x, y) in enumerate(coords)]


def test_triangle_three_points():
    edges = triangulate(_pts([(0, 0), (1, 0), (0, 1)]))
    assert edges == [(0, 1), (0, 2), (1, 2)]


def test_square_five_edges():
    edges = triangulate(_pts([(0, 0), (1, 0), (1, 1), (0, 1)]))
    assert len(edges) == 5


def test_degenerate_small_inputs():
    assert triangulate(_pts([(0, 0)])) == []
    assert triangulate(_pts([(0, 0), (1, 1)])) == [(0, 1)]


def test_collinear_fallback_is_path():
    edges = triangulate(_pts([(0, 0), (3, 0), (1, 0), (2, 0)]))
    assert edges == sorted([(0, 2), (2, 3), (1, 3)])


def _brute_force_delaunay(coords):
    """All triangle edges whose circumcircle is empty of other points."""
    n = len(coords)
    edges = set()
    for i, j, k in itertools.combinations(range(n), 3):
        ax, ay = coords[i]
        bx, by = coords[j]
        cx, cy = coords[k]
        d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
        if abs(d) < 1e-12:
            continue
        ux = ((ax**2 + ay**2) * (by - cy) + (bx**2 + by**2) * (cy - ay)
              + (cx**2 + cy**2) * (ay - by)) / d
        uy = ((ax**2 + ay**2) * (cx - bx) + (bx**2 + by**2) * (ax - cx)
              + (cx**2 + cy**2) * (bx - ax)) / d
        r2 = (ax - ux) ** 2 + (ay - uy) ** 2
        empty = all(
            (coords[m][0] - ux) ** 2 + (coords[m][1] - uy) ** 2 >= r2 * (1 - 1e-9)
            for m in range(n) if m not in (i, j, k))
        if empty:
            edges.update([(i, j), (i, k), (j, k)])
    return edges


def test_against_brute_force_circumcircle_oracle():
    rng = np.random.default_rng(17)
    coords = rng.uniform(0, 10, size=(30, 2))
    got = set(triangulate(_pts(coords)))
    assert got == _brute_force_delaunay(coords)


def test_edge_count_bound():
    rng = np.random.default_rng(4)
    coords = rng.uniform(0, 100, size=(200, 2))
    edges = triangulate(_pts(coords))
    assert len(edges) <= 3 * 200 - 6


def _euclidean_mst_edges(coords):
    n = len(coords)
    d = np.sqrt(((coords[:, None] - coords[None]) ** 2).sum(-1))
    in_tree = {0}
    edges = set()
    best = d[0].copy()
    link = np.zeros(n, dtype=int)
    while len(in_tree) < n:
        cand = min((i for i in range(n) if i not in in_tree), key=lambda i: best[i])
        edges.add((min(cand, link[cand]), max(cand, link[cand])))
        in_tree.add(cand)
        closer = d[cand] < best
        best[closer] = d[cand][closer]
        link[closer] = cand
    return edges


def test_delaunay_contains_mst():
    rng = np.random.default_rng(9)
    coords = rng.uniform(0, 100, size=(150, 2))
    delaunay = set(triangulate(_pts(coords)))
    assert _euclidean_mst_edges(coords) <= delaunay


def test_instance_speed_tiers():
    # two tight far-apart clusters: intra edges 50, cross edges 90
    cfg = GenConfig(n_locations=40, n_clusters=2, cluster_sigma_km=1.0,
                    bbox_km=500.0, seed=11)
    net = build_instance(cfg)
    labels = {loc.id: cid for loc, cid in generate_locations(cfg)}
    assert len(set(labels.values())) == 2
    for e in net.edges:
        expected = 50.0 if labels[e.u] == labels[e.v] else 90.0
        assert e.speed_kmh == expected


def test_all_speeds_are_50_or_90():
    net = build_instance(GenConfig(n_locations=200, n_clusters=5, seed=2))
    assert {e.speed_kmh for e in net.edges} <= {50.0, 90.0}


def test_instance_byte_identical_for_seed():
    cfg = GenConfig(n_locations=300, n_clusters=6, seed=123)
    assert serialize_network(build_instance(cfg)) == serialize_network(build_instance(cfg))


def test_edge_lengths_are_euclidean():
    net = build_instance(GenConfig(n_locations=50, n_clusters=3, seed=8))
    for e in net.edges:
        a, b = net.locations[e.u], net.locations[e.v]
        assert e.length_km == pytest.approx(np.hypot(a.x - b.x, a.y - b.y))


def test_site_fraction():
    net = build_instance(GenConfig(n_locations=100, n_clusters=3,
                                   site_fraction=0.25, seed=6))
    assert len(net.site_ids()) == 25
    tiny = build_instance(GenConfig(n_locations=10, n_clusters=2,
                                    site_fraction=0.01, seed=6))
    assert len(tiny.site_ids()) == 1


def test_large_instance_planarity_and_connectivity():
    net = build_instance(GenConfig(n_locations=10000, n_clusters=10, seed=1))
    assert len(net.edges) <= 3 * 10000 - 6
    parent = list(range(net.n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in net.edges:
        parent[find(e.u)] = find(e.v)
    assert len({find(i) for i in range(net.n)}) == 1
