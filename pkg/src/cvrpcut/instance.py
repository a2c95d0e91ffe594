"""CVRP instances: CVRPLIB parsing/serialization, random generation, fleet bound.

Vertex 0 is always the depot; vertices 1..n-1 are customers.  Edge costs are
nearest-integer Euclidean distances (the EUC_2D convention), which is the only
distance type supported here.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .errors import ParseError, UnsupportedFormatError, ValidationError


@dataclass(frozen=True)
class Instance:
    """A CVRP instance on the complete graph over depot + customers.

    :ivar name: instance label, used in reports and generated file names.
    :ivar coords: (x, y) per vertex, depot first.
    :ivar demands: integer demand per vertex; demands[0] is 0 by convention.
    :ivar capacity: vehicle capacity Q shared by all vehicles.
    """

    name: str
    coords: tuple[tuple[float, float], ...]
    demands: tuple[int, ...]
    capacity: int

    def __post_init__(self) -> None:
        if len(self.coords) != len(self.demands):
            raise ValidationError(
                f"{len(self.coords)} coordinates but {len(self.demands)} demands"
            )
        if len(self.coords) < 2:
            raise ValidationError("instance needs a depot and at least one customer")
        if self.capacity < 1:
            raise ValidationError(f"capacity must be positive, got {self.capacity}")
        if self.demands[0] != 0:
            raise ValidationError(f"depot demand must be 0, got {self.demands[0]}")
        for i, q in enumerate(self.demands):
            if i == 0:
                continue
            if q < 1:
                raise ValidationError(f"vertex {i} has non-positive demand {q}")
            if q > self.capacity:
                raise ValidationError(
                    f"vertex {i} demand {q} exceeds capacity {self.capacity}"
                )

    @property
    def n(self) -> int:
        """Number of vertices including the depot."""
        return len(self.coords)

    @property
    def customers(self) -> range:
        return range(1, self.n)

    @property
    def total_demand(self) -> int:
        return sum(self.demands)

    def edge_cost(self, i: int, j: int) -> int:
        """Nearest-integer Euclidean distance between vertices i and j."""
        (xi, yi), (xj, yj) = self.coords[i], self.coords[j]
        return int(math.sqrt((xi - xj) ** 2 + (yi - yj) ** 2) + 0.5)

    def edges(self):
        """All undirected edges (i, j) with i < j."""
        n = self.n
        for i in range(n):
            for j in range(i + 1, n):
                yield (i, j)


def fleet_bound(inst: Instance) -> int:
    """Minimum number of vehicles K = ceil(total demand / capacity).

    Computed in exact integer arithmetic, never through floating point.
    """
    return -(-inst.total_demand // inst.capacity)


def _split_keyword_line(line: str) -> tuple[str, str]:
    if ":" in line:
        key, _, value = line.partition(":")
        return key.strip(), value.strip()
    return line.strip(), ""


def parse_cvrplib(text: str) -> Instance:
    """Parse a CVRPLIB/TSPLIB instance with EUC_2D distances.

    The depot named in DEPOT_SECTION is re-indexed to vertex 0; customers keep
    their relative order.  Raises ParseError when a required section is
    missing, UnsupportedFormatError for non-EUC_2D distance types, and
    ValidationError when a demand exceeds the capacity.
    """
    header: dict[str, str] = {}
    coords: dict[int, tuple[float, float]] = {}
    demands: dict[int, int] = {}
    depot_ids: list[int] = []

    lines = [ln.strip() for ln in text.splitlines()]
    pos = 0
    section = None
    while pos < len(lines):
        line = lines[pos]
        pos += 1
        if not line:
            continue
        upper = line.upper()
        if upper.startswith("EOF"):
            break
        if upper.startswith("NODE_COORD_SECTION"):
            section = "coords"
            continue
        if upper.startswith("DEMAND_SECTION"):
            section = "demands"
            continue
        if upper.startswith("DEPOT_SECTION"):
            section = "depot"
            continue
        if section is None:
            key, value = _split_keyword_line(line)
            header[key.upper()] = value
            continue
        if section == "coords":
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(f"bad coordinate line: {line!r}")
            coords[int(parts[0])] = (float(parts[1]), float(parts[2]))
        elif section == "demands":
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"bad demand line: {line!r}")
            demands[int(parts[0])] = int(parts[1])
        elif section == "depot":
            node = int(line.split()[0])
            if node == -1:
                section = None
            else:
                depot_ids.append(node)

    for required in ("DIMENSION", "CAPACITY"):
        if required not in header:
            raise ParseError(f"missing {required} in header")
    weight_type = header.get("EDGE_WEIGHT_TYPE", "")
    if weight_type != "EUC_2D":
        raise UnsupportedFormatError(
            f"EDGE_WEIGHT_TYPE {weight_type or '<missing>'} not supported, need EUC_2D"
        )
    dimension = int(header["DIMENSION"])
    capacity = int(header["CAPACITY"])
    if not coords:
        raise ParseError("missing NODE_COORD_SECTION")
    if not demands:
        raise ParseError("missing DEMAND_SECTION")
    if not depot_ids:
        raise ParseError("missing DEPOT_SECTION")
    if len(coords) != dimension or len(demands) != dimension:
        raise ParseError(
            f"DIMENSION {dimension} but {len(coords)} coordinates, {len(demands)} demands"
        )
    if len(depot_ids) != 1:
        raise ParseError(f"expected exactly one depot, got {depot_ids}")

    depot = depot_ids[0]
    if depot not in coords:
        raise ParseError(f"depot node {depot} has no coordinates")
    if demands.get(depot, 0) != 0:
        raise ValidationError(f"depot node {depot} has non-zero demand")

    order = [depot] + [node for node in sorted(coords) if node != depot]
    name = header.get("NAME", "unnamed")
    return Instance(
        name=name,
        coords=tuple(coords[node] for node in order),
        demands=tuple(demands[node] for node in order),
        capacity=capacity,
    )


def _format_coord(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def serialize_cvrplib(inst: Instance) -> str:
    """Render an instance back to CVRPLIB text; parse(serialize(x)) == x."""
    out = [
        f"NAME : {inst.name}",
        "TYPE : CVRP",
        f"DIMENSION : {inst.n}",
        "EDGE_WEIGHT_TYPE : EUC_2D",
        f"CAPACITY : {inst.capacity}",
        "NODE_COORD_SECTION",
    ]
    for i, (x, y) in enumerate(inst.coords):
        out.append(f"{i + 1} {_format_coord(x)} {_format_coord(y)}")
    out.append("DEMAND_SECTION")
    for i, q in enumerate(inst.demands):
        out.append(f"{i + 1} {q}")
    out.extend(["DEPOT_SECTION", "1", "-1", "EOF", ""])
    return "\n".join(out)


@dataclass(frozen=True)
class GenerationProfile:
    """Knobs for random instance generation.

    Coordinates are uniform integers on [0, coord_span]^2, demands uniform
    integers on [demand_low, demand_high].  The capacity is sized so that a
    vehicle carries about route_size average-demand customers.
    """

    coord_span: int = 1000
    demand_low: int = 1
    demand_high: int = 100
    route_size: float = 5.0

    def capacity(self) -> int:
        mean_demand = (self.demand_low + self.demand_high) / 2.0
        return max(self.demand_high, int(round(self.route_size * mean_demand)))


def generate_random(
    n_customers: int, seed: int, profile: GenerationProfile | None = None
) -> Instance:
    """Generate a random instance; deterministic in (n_customers, seed, profile)."""
    if n_customers < 1:
        raise ValidationError(f"need at least one customer, got {n_customers}")
    profile = profile or GenerationProfile()
    rng = random.Random(seed)
    coords = tuple(
        (float(rng.randint(0, profile.coord_span)), float(rng.randint(0, profile.coord_span)))
        for _ in range(n_customers + 1)
    )
    demands = (0,) + tuple(
        rng.randint(profile.demand_low, profile.demand_high) for _ in range(n_customers)
    )
    return Instance(
        name=f"rand-n{n_customers + 1}-s{seed}",
        coords=coords,
        demands=demands,
        capacity=profile.capacity(),
    )
