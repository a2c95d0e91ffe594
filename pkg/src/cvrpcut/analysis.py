"""Sensitivity and diversity metrics for probability oracles, plus the small
study runners that aggregate them into report dictionaries."""

from __future__ import annotations

import logging
import math
import random
from concurrent.futures import ThreadPoolExecutor

from .coarsen import (
    EdgePolicy,
    ProbabilityOracle,
    SupportGraph,
    assign_and_uncoarsen,
    build_support,
    coarsen,
    heuristic_oracle,
)
from .errors import ValidationError
from .instance import Instance, fleet_bound
from .lp import solve_lp
from .relaxation import build_relaxation, solution_from_lp

log = logging.getLogger(__name__)


def d1_partial(
    oracle: ProbabilityOracle, graph: SupportGraph, eps: float = 1e-3
) -> float:
    """Steepest finite-difference slope of the oracle in the shared feature.

    Shifts the second vertex feature of every vertex by eps and returns the
    largest per-customer |delta p| / eps.
    """
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    base = oracle.evaluate(graph)
    shifted = oracle.evaluate(graph.with_feature_shift(eps))
    worst = 0.0
    for v in graph.customers:
        worst = max(worst, abs(shifted[v] - base[v]) / eps)
    return worst


def d2_cosine(p_a, p_b) -> float:
    """Cosine similarity of two equal-length vectors."""
    a = list(p_a)
    b = list(p_b)
    if len(a) != len(b):
        raise ValidationError(f"length mismatch: {len(a)} vs {len(b)}")
    dot = sum(x * y for x, y in zip(a, b))
    norm_a = math.sqrt(sum(x * x for x in a))
    norm_b = math.sqrt(sum(y * y for y in b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValidationError("cosine similarity undefined for a zero vector")
    return dot / (norm_a * norm_b)


def d3_jaccard(set_a, set_b) -> float:
    """Jaccard coefficient; two empty sets count as identical."""
    a, b = set(set_a), set(set_b)
    if not a and not b:
        log.info("jaccard of two empty sets treated as 1.0")
        return 1.0
    return len(a & b) / len(a | b)


def _median(ordered: list[float]) -> float:
    n = len(ordered)
    mid = n // 2
    if n % 2:
        return float(ordered[mid])
    return (ordered[mid - 1] + ordered[mid]) / 2.0


def quartiles(values) -> dict[str, float]:
    """Five-number summary by sorting.

    Hinges follow the inclusive rule: for an odd count the middle element
    belongs to both halves.
    """
    data = sorted(float(v) for v in values)
    if not data:
        raise ValidationError("quartiles need at least one value")
    n = len(data)
    lower = data[: (n + 1) // 2]
    upper = data[n // 2 :]
    return {
        "min": data[0],
        "q1": _median(lower),
        "median": _median(data),
        "q3": _median(upper),
        "max": data[-1],
    }


def _root_point(inst: Instance):
    lp, edges = build_relaxation(inst)
    sol = solve_lp(lp)
    return solution_from_lp(inst.n, edges, sol.x, float(sol.objective))


def _greedy_subset(graph: SupportGraph, oracle: ProbabilityOracle) -> frozenset[int]:
    history = coarsen(graph, oracle, EdgePolicy(variant="greedy"))
    return assign_and_uncoarsen(history)


def _map_tasks(fn, args_list, jobs: int) -> list:
    if jobs <= 1:
        return [fn(args) for args in args_list]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, args_list))


def sensitivity_study(
    instances,
    oracle: ProbabilityOracle | None = None,
    eps: float = 1e-3,
    jobs: int = 1,
) -> dict:
    """Per-fleet-index oracle behaviour on each instance's root LP point.

    For every m: the finite-difference slope; against m+1: cosine similarity
    of the probability vectors and Jaccard similarity of the assigned
    subsets.  Rows come back sorted by (instance, m) no matter how the tasks
    were scheduled.
    """
    oracle = oracle if oracle is not None else heuristic_oracle()
    prepared = []
    for inst in instances:
        frac = _root_point(inst)
        for m in range(fleet_bound(inst)):
            prepared.append((inst, frac, m))

    def task(args):
        inst, frac, m = args
        graph = build_support(frac, inst, m)
        probs = oracle.evaluate(graph)
        vec = [probs[v] for v in graph.customers]
        subset = _greedy_subset(graph, oracle)
        return d1_partial(oracle, graph, eps), vec, subset

    outcomes = _map_tasks(task, prepared, jobs)
    rows = []
    by_instance: dict[str, list] = {}
    for (inst, _, m), (d1, vec, subset) in zip(prepared, outcomes):
        by_instance.setdefault(inst.name, []).append((m, d1, vec, subset, inst))
    d1_all: list[float] = []
    d2_all: list[float] = []
    d3_all: list[float] = []
    for name in sorted(by_instance):
        cells = sorted(by_instance[name])
        for idx, (m, d1, vec, subset, inst) in enumerate(cells):
            d2_next = None
            d3_next = None
            if idx + 1 < len(cells):
                _, _, next_vec, next_subset, _ = cells[idx + 1]
                d2_next = d2_cosine(vec, next_vec)
                d3_next = d3_jaccard(subset, next_subset)
                d2_all.append(d2_next)
                d3_all.append(d3_next)
            d1_all.append(d1)
            rows.append(
                {
                    "instance": name,
                    "n_customers": inst.n - 1,
                    "m": m,
                    "d1": d1,
                    "d2_next": d2_next,
                    "d3_next": d3_next,
                }
            )
    report = {"eps": eps, "rows": rows, "summary": {}}
    if d1_all:
        report["summary"]["d1"] = quartiles(d1_all)
    if d2_all:
        report["summary"]["d2"] = quartiles(d2_all)
    if d3_all:
        report["summary"]["d3"] = quartiles(d3_all)
    return report


def diversity_study(
    instances,
    oracle: ProbabilityOracle | None = None,
    policies=("greedy", "pi_greedy"),
    seeds=(0, 1),
    gamma: float = 0.75,
    pi_max: float = 1e-3,
    tau: float = 0.25,
    jobs: int = 1,
) -> dict:
    """Pairwise subset agreement across seeds, per policy and instance.

    Each (instance, policy, m, seed) cell runs the full coarsening pipeline
    with its own fresh generator, so any execution order gives the same
    subsets.  A deterministic policy shows mean Jaccard exactly 1.0.
    """
    seeds = tuple(seeds)
    if len(seeds) < 2:
        raise ValidationError("diversity needs at least two seeds per cell")
    oracle = oracle if oracle is not None else heuristic_oracle()
    prepared = []
    for inst in instances:
        frac = _root_point(inst)
        for policy in policies:
            edge_policy = EdgePolicy(variant=policy, pi_max=pi_max, tau=tau)
            for m in range(fleet_bound(inst)):
                for seed in seeds:
                    prepared.append((inst, frac, edge_policy, m, seed))

    def task(args):
        inst, frac, edge_policy, m, seed = args
        graph = build_support(frac, inst, m)
        history = coarsen(
            graph, oracle, edge_policy, gamma=gamma, rng=random.Random(seed)
        )
        return assign_and_uncoarsen(history)

    outcomes = _map_tasks(task, prepared, jobs)
    cells: dict[tuple[str, str], dict[int, list]] = {}
    meta: dict[str, int] = {}
    for (inst, _, edge_policy, m, _), subset in zip(prepared, outcomes):
        key = (inst.name, edge_policy.variant)
        cells.setdefault(key, {}).setdefault(m, []).append(subset)
        meta[inst.name] = inst.n - 1
    rows = []
    per_policy: dict[str, list[float]] = {}
    for (name, policy) in sorted(cells):
        values: list[float] = []
        for m in sorted(cells[(name, policy)]):
            subsets = cells[(name, policy)][m]
            for i in range(len(subsets)):
                for j in range(i + 1, len(subsets)):
                    values.append(d3_jaccard(subsets[i], subsets[j]))
        mean_d3 = sum(values) / len(values)
        rows.append(
            {
                "instance": name,
                "n_customers": meta[name],
                "policy": policy,
                "mean_d3": mean_d3,
                "pairs": len(values),
            }
        )
        per_policy.setdefault(policy, []).append(mean_d3)
    summary = {}
    for policy in sorted(per_policy):
        vals = per_policy[policy]
        summary[policy] = quartiles(vals)
        summary[policy]["mean"] = sum(vals) / len(vals)
    return {
        "seeds": list(seeds),
        "gamma": gamma,
        "rows": rows,
        "summary": summary,
    }
