"""Stochastic coarsening of fractional support graphs.

A support graph keeps every vertex of the instance and only the edges with
positive fractional value.  Coarsening repeatedly predicts per-vertex
selection probabilities with an oracle, scores edges by the probability that
both endpoints land on the same side, and contracts chosen edges until the
vertex count falls to a gamma fraction.  The depot never contracts, so it
survives to the coarsest level.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from typing import Protocol

from .errors import ParseError, ValidationError
from .instance import Instance, fleet_bound
from .relaxation import FractionalSolution

log = logging.getLogger(__name__)

# Contraction stops once at most this many customer supernodes remain; with
# the depot that is a four-vertex graph, small enough for set assignment.
MIN_CUSTOMER_NODES = 3


@dataclass(frozen=True)
class SupportGraph:
    """Weighted support graph with per-vertex demand and oracle features.

    The first vertex feature is demand/capacity and is derived on demand; the
    second (the normalized separation index m/K) is stored so it can be
    perturbed independently of `m`.
    """

    demands: dict[int, int]
    feature_m: dict[int, float]
    edges: dict[tuple[int, int], float]
    capacity: int
    k_fleet: int
    m: int

    def __post_init__(self) -> None:
        if 0 not in self.demands:
            raise ValidationError("support graph must contain the depot vertex 0")
        for (u, v), w in self.edges.items():
            if u >= v or u not in self.demands or v not in self.demands:
                raise ValidationError(f"bad support edge ({u},{v})")
            if w <= 0:
                raise ValidationError(f"support edge ({u},{v}) has weight {w}")

    @property
    def vertices(self) -> tuple[int, ...]:
        return tuple(sorted(self.demands))

    @property
    def customers(self) -> tuple[int, ...]:
        return tuple(v for v in sorted(self.demands) if v != 0)

    def feature(self, v: int) -> tuple[float, float]:
        return (self.demands[v] / self.capacity, self.feature_m[v])

    def weighted_degree(self, v: int) -> float:
        return sum(w for (a, b), w in self.edges.items() if v in (a, b))

    def with_feature_shift(self, eps: float) -> "SupportGraph":
        """Copy with the second vertex feature shifted by eps everywhere."""
        return replace(
            self, feature_m={v: h + eps for v, h in self.feature_m.items()}
        )


def build_support(sol: FractionalSolution, inst: Instance, m: int) -> SupportGraph:
    """Support graph of a fractional point for separation index m."""
    k = fleet_bound(inst)
    if not 0 <= m < k:
        raise ValidationError(f"separation index m={m} outside 0..{k - 1}")
    h2 = m / k
    return SupportGraph(
        demands={v: inst.demands[v] for v in range(inst.n)},
        feature_m={v: h2 for v in range(inst.n)},
        edges=dict(sol.edges),
        capacity=inst.capacity,
        k_fleet=k,
        m=m,
    )


class ProbabilityOracle(Protocol):
    """Anything that maps a support graph to per-customer probabilities."""

    def evaluate(self, graph: SupportGraph) -> dict[int, float]: ...


def contraction_prob(p_i: float, p_j: float, touches_depot: bool = False) -> float:
    """Probability both endpoints fall on the same side of the cut.

    Depot edges never contract, so they score zero.
    """
    if touches_depot:
        return 0.0
    return p_i * p_j + (1.0 - p_i) * (1.0 - p_j)


@dataclass(frozen=True)
class EdgePolicy:
    """Edge selection rule for contraction.

    greedy       argmax q, lexicographic ties
    pi_greedy    argmax of q plus uniform noise on [0, pi_max]
    roulette     sample proportional to q
    softmax      sample proportional to exp(q / tau)
    """

    variant: str = "greedy"
    pi_max: float = 1e-3
    tau: float = 0.25

    def __post_init__(self) -> None:
        if self.variant not in ("greedy", "pi_greedy", "roulette", "softmax"):
            raise ValidationError(f"unknown edge policy {self.variant!r}")
        if self.pi_max <= 0 or self.tau <= 0:
            raise ValidationError("pi_max and tau must be positive")


def select_edge(scored, policy: EdgePolicy, rng: random.Random):
    """Pick one edge from (edge, q) pairs; None when no q is positive.

    Candidates are sorted by edge id first so the result depends only on the
    rng sequence, never on input ordering.
    """
    candidates = sorted((e, q) for e, q in scored if q > 0.0)
    if not candidates:
        return None
    if policy.variant == "greedy":
        return max(candidates, key=lambda eq: (eq[1], eq[0][0] * -1, eq[0][1] * -1))[0]
    if policy.variant == "pi_greedy":
        best, best_val = None, -math.inf
        for e, q in candidates:
            val = q + rng.uniform(0.0, policy.pi_max)
            if val > best_val:
                best, best_val = e, val
        return best
    if policy.variant == "roulette":
        total = sum(q for _, q in candidates)
        r = rng.random() * total
        acc = 0.0
        for e, q in candidates:
            acc += q
            if r < acc:
                return e
        return candidates[-1][0]
    # softmax; subtract the max exponent for numerical stability
    qmax = max(q for _, q in candidates)
    weights = [math.exp((q - qmax) / policy.tau) for _, q in candidates]
    total = sum(weights)
    r = rng.random() * total
    acc = 0.0
    for (e, _), w in zip(candidates, weights):
        acc += w
        if r < acc:
            return e
    return candidates[-1][0]


@dataclass(frozen=True)
class CoarseningLevel:
    """Snapshot after one gamma round: surviving vertices and the map from
    each supernode id to the original vertices it absorbed."""

    vertices: frozenset[int]
    node_map: dict[int, frozenset[int]]


@dataclass
class CoarseningHistory:
    """Level 0 is the original graph; each later level ends one gamma round.

    probs_used[t] holds the oracle output on level t's graph that drove the
    round producing level t+1.  final_probs is a fresh prediction on the
    coarsest graph and feeds set assignment.
    """

    levels: list[CoarseningLevel]
    probs_used: list[dict[int, float]]
    final_probs: dict[int, float]
    final_graph: SupportGraph
    gamma: float = 0.75

    @property
    def depth(self) -> int:
        return len(self.levels) - 1


class _Working:
    """Mutable contraction state; supernodes keep the smallest member id."""

    def __init__(self, graph: SupportGraph):
        self.demands = dict(graph.demands)
        self.h2 = dict(graph.feature_m)
        self.edges = dict(graph.edges)
        self.members = {v: frozenset((v,)) for v in graph.demands}
        self.graph_template = graph

    def n_vertices(self) -> int:
        return len(self.demands)

    def snapshot_graph(self) -> SupportGraph:
        return replace(
            self.graph_template,
            demands=dict(self.demands),
            feature_m=dict(self.h2),
            edges=dict(self.edges),
        )

    def snapshot_level(self) -> CoarseningLevel:
        return CoarseningLevel(
            vertices=frozenset(self.demands),
            node_map=dict(self.members),
        )

    def scored_edges(self, probs: dict[int, float]):
        for (u, v), _w in self.edges.items():
            if u == 0:
                continue
            yield (u, v), contraction_prob(probs[u], probs[v])

    def contract(self, u: int, v: int, probs: dict[int, float]) -> None:
        keep, drop = (u, v) if u < v else (v, u)
        dk, dd = self.demands[keep], self.demands[drop]
        total = dk + dd
        probs[keep] = (dk * probs[keep] + dd * probs[drop]) / total
        probs.pop(drop, None)
        self.h2[keep] = (dk * self.h2[keep] + dd * self.h2[drop]) / total
        self.demands[keep] = total
        del self.demands[drop], self.h2[drop]
        self.members[keep] = self.members[keep] | self.members[drop]
        del self.members[drop]
        merged: dict[tuple[int, int], float] = {}
        for (a, b), w in self.edges.items():
            if drop in (a, b):
                other = b if a == drop else a
                if other == keep:
                    continue
                e = (min(keep, other), max(keep, other))
                merged[e] = merged.get(e, 0.0) + w
            else:
                merged[(a, b)] = merged.get((a, b), 0.0) + w
        self.edges = merged


def coarsen(
    graph: SupportGraph,
    oracle: ProbabilityOracle,
    policy: EdgePolicy,
    gamma: float = 0.75,
    rng: random.Random | None = None,
) -> CoarseningHistory:
    """Run gamma rounds until at most MIN_CUSTOMER_NODES customer supernodes
    remain or every contraction probability is zero.

    Each round predicts probabilities once, then contracts one edge at a time
    down to floor(gamma * |V|) vertices; the floor keeps the per-level size
    under gamma^t * |V|, which the hierarchical search's work bound relies on.
    """
    if not 0.0 < gamma < 1.0:
        raise ValidationError(f"gamma must be in (0, 1), got {gamma}")
    rng = rng or random.Random(0)
    work = _Working(graph)
    levels = [work.snapshot_level()]
    probs_used: list[dict[int, float]] = []

    while True:
        n = work.n_vertices()
        if n - 1 <= MIN_CUSTOMER_NODES:
            break
        target = max(MIN_CUSTOMER_NODES + 1, math.floor(gamma * n))
        if target >= n:
            break
        probs = dict(oracle.evaluate(work.snapshot_graph()))
        probs.setdefault(0, 0.0)
        probs_used.append(dict(probs))
        contracted_any = False
        while work.n_vertices() > target:
            edge = select_edge(work.scored_edges(probs), policy, rng)
            if edge is None:
                break
            work.contract(edge[0], edge[1], probs)
            contracted_any = True
        if not contracted_any:
            probs_used.pop()
            break
        levels.append(work.snapshot_level())

    final_graph = work.snapshot_graph()
    final_probs = dict(oracle.evaluate(final_graph))
    final_probs.pop(0, None)
    return CoarseningHistory(
        levels=levels,
        probs_used=probs_used,
        final_probs=final_probs,
        final_graph=final_graph,
        gamma=gamma,
    )


def assign_and_uncoarsen(history: CoarseningHistory) -> frozenset[int]:
    """Select coarsest supernodes with probability >= 0.5 and expand them to
    original customers.  May be empty when nothing clears the threshold."""
    top = history.levels[-1].node_map
    chosen: set[int] = set()
    for u, p in history.final_probs.items():
        if u == 0:
            continue
        if p >= 0.5:
            chosen |= top[u]
    chosen.discard(0)
    return frozenset(chosen)


# ---------------------------------------------------------------------------
# Oracles


@dataclass(frozen=True)
class HeuristicOracle:
    """Deterministic stand-in for a learned probability model.

    Grows a set from the highest-demand customer by fractional connectivity
    until its demand exceeds m * capacity (m reconstructed from the second
    feature), then emits p_in inside and p_out outside, shaded by each
    vertex's normalized connectivity into the grown set.
    """

    p_in: float = 0.9
    p_out: float = 0.1
    blend: float = 0.05

    def evaluate(self, graph: SupportGraph) -> dict[int, float]:
        customers = list(graph.customers)
        if not customers:
            return {}
        h2_mean = sum(graph.feature_m[v] for v in customers) / len(customers)
        target = h2_mean * graph.k_fleet * graph.capacity

        adjacency: dict[int, dict[int, float]] = {v: {} for v in graph.demands}
        for (u, v), w in graph.edges.items():
            adjacency[u][v] = adjacency[u].get(v, 0.0) + w
            adjacency[v][u] = adjacency[v].get(u, 0.0) + w

        seed = max(customers, key=lambda v: (graph.demands[v], -v))
        grown = {seed}
        demand = graph.demands[seed]
        outside = set(customers)
        outside.discard(seed)
        # into[v] tracks v's connectivity to the grown set incrementally, so
        # one growth step costs degree(seed) instead of a rescan of the set
        into = {v: 0.0 for v in customers}
        for u, w in adjacency[seed].items():
            if u in into:
                into[u] += w
        while demand <= target and outside:
            best = max(outside, key=lambda v: (into[v], -v))
            grown.add(best)
            outside.discard(best)
            demand += graph.demands[best]
            for u, w in adjacency[best].items():
                if u in into:
                    into[u] += w

        probs = {}
        for v in customers:
            deg = sum(adjacency[v].values())
            conn = into[v] / deg if deg > 0 else 0.0
            base = self.p_in if v in grown else self.p_out
            p = base + self.blend * (2.0 * conn - 1.0)
            probs[v] = min(0.95, max(0.05, p))
        return probs


def heuristic_oracle(p_in: float = 0.9, p_out: float = 0.1) -> HeuristicOracle:
    return HeuristicOracle(p_in=p_in, p_out=p_out)


def graph_signature(graph: SupportGraph) -> str:
    """Stable content hash over demands, features and weighted edges."""
    payload = {
        "v": [[v, graph.demands[v], repr(graph.feature_m[v])] for v in graph.vertices],
        "e": [[u, v, repr(w)] for (u, v), w in sorted(graph.edges.items())],
        "q": graph.capacity,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def write_oracle_file(path, entries) -> None:
    """Write (signature, probability list) pairs as JSON lines."""
    with open(path, "w") as fh:
        for sig, probs in entries:
            fh.write(json.dumps({"signature": sig, "p": list(probs)}) + "\n")


class FileOracle:
    """Probability lookup from a JSON-lines file keyed by graph signature.

    Probability vectors align with the sorted customer ids of the graph they
    were recorded for.  Unknown graphs fall back to the heuristic oracle and
    are counted plus logged, so silent drift is visible.
    """

    def __init__(self, path, fallback: ProbabilityOracle | None = None):
        self.path = str(path)
        self.fallback = fallback or HeuristicOracle()
        self.fallback_count = 0
        self.table: dict[str, list[float]] = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                    sig, probs = row["signature"], row["p"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ParseError(f"{self.path}:{lineno}: bad oracle entry: {exc}")
                if not isinstance(probs, list) or not all(
                    isinstance(p, (int, float)) for p in probs
                ):
                    raise ParseError(f"{self.path}:{lineno}: p must be a number list")
                self.table[sig] = [float(p) for p in probs]

    def evaluate(self, graph: SupportGraph) -> dict[int, float]:
        sig = graph_signature(graph)
        stored = self.table.get(sig)
        customers = graph.customers
        if stored is not None and len(stored) == len(customers):
            return dict(zip(customers, stored))
        if stored is not None:
            log.warning(
                "oracle entry %s has %d probabilities for %d customers; falling back",
                sig[:12], len(stored), len(customers),
            )
        else:
            log.warning("no oracle entry for graph %s; falling back", sig[:12])
        self.fallback_count += 1
        return self.fallback.evaluate(graph)
