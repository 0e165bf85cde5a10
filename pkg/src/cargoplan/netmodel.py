"""Geometric road-network model, its text file format, and validation.

Coordinates are planar kilometres; geographic input must be pre-projected.
Networks are undirected and immutable once built.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field


class NetworkFormatError(ValueError):
    """Malformed network file; carries the offending line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class NetworkValidationError(ValueError):
    """Structurally invalid network (dangling ids, bad speeds, ...)."""


@dataclass(frozen=True)
class Location:
    id: int
    x: float
    y: float
    is_site: bool = False


@dataclass(frozen=True)
class RoadEdge:
    u: int
    v: int
    length_km: float
    speed_kmh: float

    @property
    def travel_time_h(self) -> float:
        return self.length_km / self.speed_kmh


@dataclass
class RoadNetwork:
    locations: list[Location]
    edges: list[RoadEdge]
    adjacency: list[list[tuple[int, int]]] = field(default_factory=list)

    def __post_init__(self):
        if not self.adjacency:
            self.adjacency = build_adjacency(len(self.locations), self.edges)

    @property
    def n(self) -> int:
        return len(self.locations)

    def site_ids(self) -> list[int]:
        return [loc.id for loc in self.locations if loc.is_site]

    def without_edges(self, removed: set[tuple[int, int]]) -> "RoadNetwork":
        """Copy of the network with the given undirected edges deleted."""
        dead = {tuple(sorted(p)) for p in removed}
        kept = [e for e in self.edges if tuple(sorted((e.u, e.v))) not in dead]
        return RoadNetwork(self.locations, kept)


def build_adjacency(n: int, edges: list[RoadEdge]) -> list[list[tuple[int, int]]]:
    """Per-node list of (neighbor id, edge index); symmetric for undirected edges."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for idx, e in enumerate(edges):
        # out-of-range endpoints are reported by validate(), not here
        if 0 <= e.u < n and 0 <= e.v < n:
            adj[e.u].append((e.v, idx))
            adj[e.v].append((e.u, idx))
    return adj


def parse_network(content: bytes | str) -> RoadNetwork:
    """Parse the line-oriented network format.

    `N <id> <x> <y> <0|1>` declares a location, `E <from> <to> <length_km>
    <speed_kmh>` an undirected edge, `#` starts a comment.
    """
    if isinstance(content, bytes):
        content = content.decode("utf-8")
    locations: list[Location] = []
    edges: list[RoadEdge] = []
    for line_no, raw in enumerate(content.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "N":
                if len(parts) != 5:
                    raise NetworkFormatError("N record needs 4 fields", line_no)
                locations.append(Location(
                    id=int(parts[1]), x=float(parts[2]), y=float(parts[3]),
                    is_site=bool(int(parts[4])),
                ))
            elif tag == "E":
                if len(parts) != 5:
                    raise NetworkFormatError("E record needs 4 fields", line_no)
                edges.append(RoadEdge(
                    u=int(parts[1]), v=int(parts[2]),
                    length_km=float(parts[3]), speed_kmh=float(parts[4]),
                ))
            else:
                raise NetworkFormatError(f"unknown record tag {tag!r}", line_no)
        except NetworkFormatError:
            raise
        except ValueError as exc:
            raise NetworkFormatError(str(exc), line_no) from exc

    net = RoadNetwork(locations, edges)
    violations = validate(net)
    if violations:
        raise NetworkValidationError("; ".join(violations))
    return net


def serialize_network(net: RoadNetwork) -> str:
    """Inverse of parse_network. Floats use shortest round-trip repr (>= 6 sig digits)."""
    lines = []
    for loc in net.locations:
        lines.append(f"N {loc.id} {loc.x!r} {loc.y!r} {int(loc.is_site)}")
    for e in net.edges:
        lines.append(f"E {e.u} {e.v} {e.length_km!r} {e.speed_kmh!r}")
    return "\n".join(lines) + "\n"


def validate(net: RoadNetwork) -> list[str]:
    """Return invariant violations as human-readable strings; empty list means valid."""
    out: list[str] = []
    ids = [loc.id for loc in net.locations]
    if ids != list(range(len(ids))):
        out.append("location ids not contiguous from 0")
    for loc in net.locations:
        if not (math.isfinite(loc.x) and math.isfinite(loc.y)):
            out.append(f"location {loc.id}: non-finite coordinates")
    n = len(net.locations)
    seen_pairs: set[tuple[int, int]] = set()
    for i, e in enumerate(net.edges):
        if e.u == e.v:
            out.append(f"edge {i}: self-loop at {e.u}")
        for endpoint in (e.u, e.v):
            if not (0 <= endpoint < n):
                out.append(f"edge {i}: unknown location id {endpoint}")
        if e.length_km < 0 or not math.isfinite(e.length_km):
            out.append(f"edge {i} ({e.u},{e.v}): bad length {e.length_km}")
        if e.speed_kmh <= 0 or not math.isfinite(e.speed_kmh):
            out.append(f"edge {i} ({e.u},{e.v}): nonpositive speed {e.speed_kmh}")
        pair = tuple(sorted((e.u, e.v)))
        if pair in seen_pairs:
            out.append(f"edge {i}: duplicate undirected pair {pair}")
        seen_pairs.add(pair)
    return out
