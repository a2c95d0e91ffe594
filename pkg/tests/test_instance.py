import math

import pytest

from cvrpcut.errors import ParseError, UnsupportedFormatError, ValidationError
from cvrpcut.instance import (
    GenerationProfile,
    Instance,
    fleet_bound,
    generate_random,
    parse_cvrplib,
    serialize_cvrplib,
)

SAMPLE = """\
NAME : toy-5
COMMENT : hand built
TYPE : CVRP
DIMENSION : 5
EDGE_WEIGHT_TYPE : EUC_2D
CAPACITY : 30
NODE_COORD_SECTION
1 0 0
2 10 0
3 10 10
4 0 10
5 5 5
DEMAND_SECTION
1 0
2 10
3 20
4 15
5 5
DEPOT_SECTION
1
-1
EOF
"""


def test_parse_sample():
    inst = parse_cvrplib(SAMPLE)
    assert inst.name == "toy-5"
    assert inst.n == 5
    assert inst.capacity == 30
    assert inst.demands == (0, 10, 20, 15, 5)
    assert inst.coords[0] == (0.0, 0.0)
    assert inst.total_demand == 50


def test_parse_reorders_depot_to_front():
    # Same instance but the depot is node 3 in the file.
    text = SAMPLE.replace("DEPOT_SECTION\n1\n", "DEPOT_SECTION\n3\n")
    text = text.replace("1 0\n2 10\n3 20\n4 15\n5 5", "1 10\n2 10\n3 0\n4 15\n5 5")
    inst = parse_cvrplib(text)
    assert inst.demands[0] == 0
    assert inst.coords[0] == (10.0, 10.0)
    # Customers keep their relative file order.
    assert inst.demands == (0, 10, 10, 15, 5)


def test_euclidean_rounding_matches_nint():
    inst = parse_cvrplib(SAMPLE)
    for i in range(inst.n):
        for j in range(i + 1, inst.n):
            (xi, yi), (xj, yj) = inst.coords[i], inst.coords[j]
            exact = math.dist((xi, yi), (xj, yj))
            assert inst.edge_cost(i, j) == int(exact + 0.5)


def test_roundtrip_identity_on_generated_instances():
    for seed in range(20):
        inst = generate_random(4 + seed % 9, seed=seed)
        again = parse_cvrplib(serialize_cvrplib(inst))
        assert again == inst


def test_missing_section_errors_name_the_section():
    lines = SAMPLE.splitlines()
    start = lines.index("DEMAND_SECTION")
    no_demand = "\n".join(lines[:start] + lines[start + 6 :])
    with pytest.raises(ParseError, match="DEMAND_SECTION"):
        parse_cvrplib(no_demand)
    no_cap = "\n".join(
        ln for ln in SAMPLE.splitlines() if not ln.startswith("CAPACITY")
    )
    with pytest.raises(ParseError, match="CAPACITY"):
        parse_cvrplib(no_cap)


def test_non_euclidean_type_rejected():
    text = SAMPLE.replace("EUC_2D", "EXPLICIT")
    with pytest.raises(UnsupportedFormatError, match="EXPLICIT"):
        parse_cvrplib(text)


def test_demand_above_capacity_names_vertex():
    text = SAMPLE.replace("3 20", "3 31")
    with pytest.raises(ValidationError, match="capacity"):
        parse_cvrplib(text)


def test_fleet_bound_integer_arithmetic():
    # Huge demands would lose precision in floating point; ceil must be exact.
    inst = Instance(
        name="big",
        coords=((0, 0), (1, 0), (2, 0), (3, 0)),
        demands=(0, 10**15, 10**15, 1),
        capacity=10**15,
    )
    assert fleet_bound(inst) == 3


def test_fleet_bound_matches_published_aggregate():
    # 152 customers totalling 3068 at capacity 144 need ceil(3068/144) = 22
    # vehicles, the X-n153-k22 figure.
    demands = (0,) + (1,) * 130 + (134,) * 20 + (129,) * 2
    coords = tuple((float(i), 0.0) for i in range(153))
    inst = Instance(name="x-like", coords=coords, demands=demands, capacity=144)
    assert inst.total_demand == 3068
    assert fleet_bound(inst) == 22


def test_generation_is_deterministic_and_in_bounds():
    a = generate_random(30, seed=7)
    b = generate_random(30, seed=7)
    assert a == b
    c = generate_random(30, seed=8)
    assert c != a
    profile = GenerationProfile()
    for q in a.demands[1:]:
        assert profile.demand_low <= q <= profile.demand_high
    assert a.capacity >= max(a.demands)
    assert fleet_bound(a) >= 1


def test_generated_capacity_tracks_route_size():
    small = generate_random(10, seed=1, profile=GenerationProfile(route_size=3.0))
    large = generate_random(10, seed=1, profile=GenerationProfile(route_size=9.0))
    assert large.capacity > small.capacity
