import math
import random

import pytest

from cvrpcut.coarsen import (
    MIN_CUSTOMER_NODES,
    EdgePolicy,
    FileOracle,
    HeuristicOracle,
    SupportGraph,
    assign_and_uncoarsen,
    build_support,
    coarsen,
    contraction_prob,
    graph_signature,
    heuristic_oracle,
    select_edge,
    write_oracle_file,
)
from cvrpcut.errors import ParseError, ValidationError
from cvrpcut.instance import fleet_bound, generate_random
from cvrpcut.lp import solve_lp
from cvrpcut.relaxation import build_relaxation, solution_from_lp


class StubOracle:
    """Probability 1 on a planted vertex set, 0 elsewhere.

    Supernodes keep the smallest member id and merges never mix sides (the
    cross probability is zero), so membership of the representative id is
    well defined at every level.
    """

    def __init__(self, target):
        self.target = set(target)

    def evaluate(self, graph):
        return {v: 1.0 if v in self.target else 0.0 for v in graph.customers}


def two_cluster_graph():
    demands = {0: 0, **{v: 5 for v in range(1, 9)}}
    edges = {}
    for group in ({1, 2, 3, 4}, {5, 6, 7, 8}):
        for u in group:
            for v in group:
                if u < v:
                    edges[(u, v)] = 0.5
    edges[(0, 1)] = 1.0
    edges[(0, 5)] = 1.0
    edges[(4, 5)] = 0.25
    return SupportGraph(
        demands=demands,
        feature_m={v: 0.5 for v in demands},
        edges=edges,
        capacity=20,
        k_fleet=2,
        m=1,
    )


def lp_support(n_customers, seed, m=1):
    inst = generate_random(n_customers, seed=seed)
    lp, edges = build_relaxation(inst)
    sol = solve_lp(lp)
    frac = solution_from_lp(inst.n, edges, sol.x, float(sol.objective))
    return build_support(frac, inst, m), inst


def test_contraction_prob_arithmetic():
    assert contraction_prob(0.9, 0.8) == pytest.approx(0.74)
    assert contraction_prob(1.0, 0.0) == 0.0
    assert contraction_prob(0.0, 0.0) == 1.0
    assert contraction_prob(0.5, 0.123) == pytest.approx(0.5)
    assert contraction_prob(0.9, 0.8) == contraction_prob(0.8, 0.9)
    assert contraction_prob(0.9, 0.9, touches_depot=True) == 0.0


def test_support_graph_validation():
    with pytest.raises(ValidationError):
        SupportGraph(
            demands={1: 5},  # depot missing
            feature_m={1: 0.0},
            edges={},
            capacity=10,
            k_fleet=1,
            m=0,
        )
    with pytest.raises(ValidationError):
        SupportGraph(
            demands={0: 0, 1: 5, 2: 5},
            feature_m={0: 0.0, 1: 0.0, 2: 0.0},
            edges={(2, 1): 1.0},  # needs u < v
            capacity=10,
            k_fleet=1,
            m=0,
        )
    with pytest.raises(ValidationError):
        SupportGraph(
            demands={0: 0, 1: 5, 2: 5},
            feature_m={0: 0.0, 1: 0.0, 2: 0.0},
            edges={(1, 2): 0.0},  # zero weight edges must be absent
            capacity=10,
            k_fleet=1,
            m=0,
        )


def test_build_support_features_and_bounds():
    support, inst = lp_support(14, seed=9, m=2)
    k = fleet_bound(inst)
    assert k > 2
    assert support.k_fleet == k
    for v in support.vertices:
        assert support.feature(v) == (inst.demands[v] / inst.capacity, 2 / k)
    with pytest.raises(ValidationError):
        lp_support(14, seed=9, m=k)


def test_edge_policy_validation():
    EdgePolicy(variant="roulette")
    with pytest.raises(ValidationError):
        EdgePolicy(variant="uniform")
    with pytest.raises(ValidationError):
        EdgePolicy(variant="softmax", tau=0.0)
    with pytest.raises(ValidationError):
        EdgePolicy(variant="pi_greedy", pi_max=-1.0)


def test_select_edge_greedy_takes_max_with_lexicographic_ties():
    scored = [((3, 4), 0.6), ((1, 2), 0.9), ((1, 5), 0.9), ((2, 3), 0.1)]
    policy = EdgePolicy(variant="greedy")
    assert select_edge(scored, policy, random.Random(0)) == (1, 2)


def test_select_edge_ignores_non_positive_scores():
    policy = EdgePolicy(variant="greedy")
    assert select_edge([((1, 2), 0.0), ((2, 3), -1.0)], policy, random.Random(0)) is None
    assert select_edge([], policy, random.Random(0)) is None


def test_select_edge_is_input_order_invariant():
    scored = [((1, 2), 0.2), ((2, 3), 0.5), ((1, 3), 0.3)]
    shuffled = [scored[2], scored[0], scored[1]]
    for variant in ("greedy", "pi_greedy", "roulette", "softmax"):
        policy = EdgePolicy(variant=variant)
        a = select_edge(scored, policy, random.Random(42))
        b = select_edge(shuffled, policy, random.Random(42))
        assert a == b


def test_pi_greedy_with_vanishing_noise_matches_greedy():
    rng = random.Random(8)
    greedy = EdgePolicy(variant="greedy")
    nearly = EdgePolicy(variant="pi_greedy", pi_max=1e-12)
    for _ in range(200):
        scored = [
            ((u, u + rng.randint(1, 3)), round(rng.uniform(0.01, 1.0), 4))
            for u in rng.sample(range(1, 50), k=rng.randint(2, 8))
        ]
        want = select_edge(scored, greedy, random.Random(0))
        got = select_edge(scored, nearly, random.Random(rng.randint(0, 10**6)))
        assert got == want


def test_roulette_frequencies_follow_scores():
    scored = [((1, 2), 0.1), ((2, 3), 0.3), ((3, 4), 0.6)]
    policy = EdgePolicy(variant="roulette")
    rng = random.Random(123)
    counts = {e: 0 for e, _ in scored}
    draws = 20000
    for _ in range(draws):
        counts[select_edge(scored, policy, rng)] += 1
    for e, q in scored:
        assert abs(counts[e] / draws - q) < 0.02


def test_softmax_frequencies_follow_boltzmann_weights():
    scored = [((1, 2), 0.1), ((2, 3), 0.5), ((3, 4), 0.9)]
    tau = 0.25
    policy = EdgePolicy(variant="softmax", tau=tau)
    rng = random.Random(321)
    counts = {e: 0 for e, _ in scored}
    draws = 20000
    for _ in range(draws):
        counts[select_edge(scored, policy, rng)] += 1
    total = sum(math.exp(q / tau) for _, q in scored)
    for e, q in scored:
        assert abs(counts[e] / draws - math.exp(q / tau) / total) < 0.02


def test_coarsen_levels_shrink_geometrically():
    support, _ = lp_support(40, seed=2)
    history = coarsen(support, heuristic_oracle(), EdgePolicy(variant="greedy"))
    sizes = [len(level.vertices) for level in history.levels]
    assert sizes[0] == 41
    for prev, cur in zip(sizes, sizes[1:]):
        assert cur <= max(MIN_CUSTOMER_NODES + 1, math.floor(0.75 * prev))
    assert len(history.levels[-1].vertices) - 1 <= MIN_CUSTOMER_NODES
    assert len(history.probs_used) == history.depth


def test_coarsen_respects_custom_gamma():
    support, _ = lp_support(40, seed=2)
    history = coarsen(
        support, heuristic_oracle(), EdgePolicy(variant="greedy"), gamma=0.5
    )
    assert history.gamma == 0.5
    sizes = [len(level.vertices) for level in history.levels]
    for prev, cur in zip(sizes, sizes[1:]):
        assert cur <= max(MIN_CUSTOMER_NODES + 1, math.floor(0.5 * prev))
    with pytest.raises(ValidationError):
        coarsen(support, heuristic_oracle(), EdgePolicy(variant="greedy"), gamma=1.0)


def test_coarsen_levels_nest_and_cover():
    support, _ = lp_support(30, seed=6)
    history = coarsen(support, heuristic_oracle(), EdgePolicy(variant="greedy"))
    original = set(support.vertices)
    for level in history.levels:
        blocks = list(level.node_map.values())
        union = set().union(*blocks)
        assert union == original
        assert sum(len(b) for b in blocks) == len(original)
        assert set(level.node_map) == set(level.vertices)
        for rep, block in level.node_map.items():
            assert rep == min(block)
    for fine, coarse in zip(history.levels, history.levels[1:]):
        for block in fine.node_map.values():
            owners = [c for c in coarse.node_map.values() if block <= c]
            assert len(owners) == 1


def test_coarsen_conserves_demand_and_never_touches_depot():
    support, _ = lp_support(25, seed=13)
    history = coarsen(support, heuristic_oracle(), EdgePolicy(variant="roulette"))
    final = history.final_graph
    assert sum(final.demands.values()) == sum(support.demands.values())
    assert final.demands[0] == 0
    assert history.levels[-1].node_map[0] == frozenset({0})
    for rep, block in history.levels[-1].node_map.items():
        assert final.demands[rep] == sum(support.demands[v] for v in block)


def test_coarsen_merges_features_by_demand_weight():
    graph = two_cluster_graph()
    shifted = dict(graph.feature_m)
    shifted[2] = 0.9  # make one vertex stand out
    graph = SupportGraph(
        demands=dict(graph.demands),
        feature_m=shifted,
        edges=dict(graph.edges),
        capacity=graph.capacity,
        k_fleet=graph.k_fleet,
        m=graph.m,
    )
    history = coarsen(
        graph, StubOracle({1, 2, 3, 4}), EdgePolicy(variant="greedy")
    )
    final = history.final_graph
    rep = next(r for r, block in history.levels[-1].node_map.items() if 2 in block)
    block = history.levels[-1].node_map[rep]
    want = sum(graph.demands[v] * graph.feature_m[v] for v in block) / sum(
        graph.demands[v] for v in block
    )
    assert final.feature_m[rep] == pytest.approx(want)


def test_planted_set_survives_coarsening_and_assignment():
    graph = two_cluster_graph()
    target = {1, 2, 3, 4}
    history = coarsen(graph, StubOracle(target), EdgePolicy(variant="greedy"))
    assert assign_and_uncoarsen(history) == frozenset(target)


def test_assignment_empty_when_no_probability_clears_half():
    graph = two_cluster_graph()

    class Lukewarm:
        def evaluate(self, g):
            return {v: 0.3 for v in g.customers}

    history = coarsen(graph, Lukewarm(), EdgePolicy(variant="greedy"))
    assert assign_and_uncoarsen(history) == frozenset()


def test_with_feature_shift_copies():
    graph = two_cluster_graph()
    shifted = graph.with_feature_shift(1e-3)
    assert shifted.feature_m[3] == pytest.approx(graph.feature_m[3] + 1e-3)
    assert graph.feature_m[3] == 0.5
    assert shifted.edges == graph.edges


def test_heuristic_oracle_is_deterministic_and_bounded():
    support, _ = lp_support(20, seed=4)
    oracle = heuristic_oracle()
    a = oracle.evaluate(support)
    b = oracle.evaluate(support)
    assert a == b
    assert set(a) == set(support.customers)
    for p in a.values():
        assert 0.05 <= p <= 0.95
    marks = sorted(a.values())
    assert marks[-1] > 0.5 > marks[0]  # splits the graph into two camps


def test_graph_signature_tracks_content_not_ordering():
    graph = two_cluster_graph()
    reordered = SupportGraph(
        demands=dict(sorted(graph.demands.items(), reverse=True)),
        feature_m=dict(sorted(graph.feature_m.items(), reverse=True)),
        edges=dict(sorted(graph.edges.items(), reverse=True)),
        capacity=graph.capacity,
        k_fleet=graph.k_fleet,
        m=graph.m,
    )
    assert graph_signature(graph) == graph_signature(reordered)
    bumped = dict(graph.edges)
    bumped[(1, 2)] = 0.75
    changed = SupportGraph(
        demands=dict(graph.demands),
        feature_m=dict(graph.feature_m),
        edges=bumped,
        capacity=graph.capacity,
        k_fleet=graph.k_fleet,
        m=graph.m,
    )
    assert graph_signature(graph) != graph_signature(changed)


def test_file_oracle_lookup_and_fallback(tmp_path, caplog):
    graph = two_cluster_graph()
    probs = [0.9, 0.8, 0.7, 0.6, 0.1, 0.2, 0.3, 0.4]
    path = tmp_path / "oracle.jsonl"
    write_oracle_file(path, [(graph_signature(graph), probs)])
    oracle = FileOracle(path)
    got = oracle.evaluate(graph)
    assert got == dict(zip(graph.customers, probs))
    assert oracle.fallback_count == 0

    other, _ = lp_support(5, seed=1, m=0)
    with caplog.at_level("WARNING"):
        fallback = oracle.evaluate(other)
    assert oracle.fallback_count == 1
    assert set(fallback) == set(other.customers)
    assert any("falling back" in rec.message for rec in caplog.records)


def test_file_oracle_rejects_malformed_lines(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"signature": "abc"}\n')
    with pytest.raises(ParseError):
        FileOracle(path)
    path.write_text('{"signature": "abc", "p": ["x"]}\n')
    with pytest.raises(ParseError):
        FileOracle(path)


def test_file_oracle_length_mismatch_falls_back(tmp_path):
    graph = two_cluster_graph()
    path = tmp_path / "short.jsonl"
    write_oracle_file(path, [(graph_signature(graph), [0.5, 0.5])])
    oracle = FileOracle(path)
    got = oracle.evaluate(graph)
    assert oracle.fallback_count == 1
    assert set(got) == set(graph.customers)
