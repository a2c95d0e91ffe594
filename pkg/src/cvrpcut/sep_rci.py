"""Rounded capacity inequality separation: exact MILP, coarsening, and the
hierarchical level walk over a coarsening history."""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from .coarsen import (
    CoarseningHistory,
    EdgePolicy,
    ProbabilityOracle,
    SupportGraph,
    assign_and_uncoarsen,
    coarsen,
)
from .errors import ValidationError
from .lp import LinearProgram, MipSpec, solve_mip
from .relaxation import boundary

VIOLATION_EPS = 1e-6


def rci_rhs(demand_sum: int, capacity: int) -> int:
    """Right-hand side 2 * ceil(demand / capacity), exact integer arithmetic."""
    if demand_sum < 0:
        raise ValidationError(f"negative demand sum {demand_sum}")
    return 2 * (-(-demand_sum // capacity))


@dataclass(frozen=True)
class RciCandidate:
    """A customer subset with its cut data at the separating point."""

    subset: frozenset[int]
    rhs: int
    lhs: float
    violation: float
    source: str
    m: int
    lifted: bool = False


def build_separation_mip(
    support: SupportGraph, m: int
) -> tuple[MipSpec, dict[int, int]]:
    """MILP whose optimum is z(m), the cheapest fractional boundary over
    customer sets with demand above m * capacity.

    One binary y per customer, one nonnegative w per support edge with
    w >= |y_i - y_j| enforced by a row pair, and a demand knapsack row.
    """
    customers = support.customers
    edges = sorted(support.edges)
    ny, ne = len(customers), len(edges)
    y_col = {v: k for k, v in enumerate(customers)}

    c = np.zeros(ny + ne)
    for k, e in enumerate(edges):
        c[ny + k] = support.edges[e]

    rows = np.zeros((2 * ne + 1, ny + ne))
    b = np.zeros(2 * ne + 1)
    senses = [">="] * (2 * ne + 1)
    for k, (u, v) in enumerate(edges):
        # w - y_u + y_v >= 0 and w + y_u - y_v >= 0; depot terms are fixed 0.
        rows[2 * k, ny + k] = 1.0
        rows[2 * k + 1, ny + k] = 1.0
        if u != 0:
            rows[2 * k, y_col[u]] = -1.0
            rows[2 * k + 1, y_col[u]] = 1.0
        if v != 0:
            rows[2 * k, y_col[v]] = 1.0
            rows[2 * k + 1, y_col[v]] = -1.0
    for v, k in y_col.items():
        rows[2 * ne, k] = float(support.demands[v])
    b[2 * ne] = float(m * support.capacity + 1)

    lower = np.zeros(ny + ne)
    upper = np.concatenate([np.ones(ny), np.full(ne, np.inf)])
    lp = LinearProgram(
        c=c, a=rows, senses=tuple(senses), b=b, lower=lower, upper=upper
    )
    return MipSpec(lp=lp, integer_vars=tuple(range(ny))), y_col


def _candidate_from_subset(
    support: SupportGraph, subset: frozenset[int], source: str, m: int
) -> RciCandidate:
    demand = sum(support.demands[v] for v in subset)
    rhs = rci_rhs(demand, support.capacity)
    lhs = boundary(support.edges, subset)
    return RciCandidate(
        subset=subset,
        rhs=rhs,
        lhs=lhs,
        violation=rhs - lhs,
        source=source,
        m=m,
        lifted=rhs > 2 * (m + 1) if source == "exact" else False,
    )


def exact_separation_value(
    support: SupportGraph, m: int
) -> tuple[float, frozenset[int]] | None:
    """Proven-optimal z(m) and its minimizing subset, or None when no subset
    reaches the demand threshold."""
    total = sum(support.demands.values())
    if total < m * support.capacity + 1:
        return None
    spec, y_col = build_separation_mip(support, m)
    sol = solve_mip(spec)
    if sol.status != "optimal":
        return None
    subset = frozenset(v for v, k in y_col.items() if sol.x[k] > 0.5)
    return float(sol.objective), subset


def exact_separate(
    support: SupportGraph,
    m: int,
    use_cutoff: bool = True,
    node_limit: int | None = None,
) -> RciCandidate | None:
    """Most violated capacity cut for index m, or None when z(m) reaches
    2(m+1).

    With use_cutoff the branch and bound prunes at 2(m+1), which cannot
    change the returned cut: optima at or above the cutoff produce no cut
    anyway, and optima below it are never pruned.

    A node_limit caps the tree deterministically.  When it bites, the best
    incumbent found so far is still a demand-feasible subset, so the cut it
    yields is valid; it is just no longer certified most violated.  With the
    default of None the search is exhaustive.
    """
    total = sum(support.demands.values())
    if total < m * support.capacity + 1:
        return None
    spec, y_col = build_separation_mip(support, m)
    cutoff = 2.0 * (m + 1) if use_cutoff else None
    sol = solve_mip(spec, incumbent_cutoff=cutoff, node_limit=node_limit)
    if sol.status not in ("optimal", "node-limit") or not np.isfinite(sol.objective):
        return None
    if sol.objective >= 2.0 * (m + 1) - VIOLATION_EPS:
        return None
    subset = frozenset(v for v, k in y_col.items() if sol.x[k] > 0.5)
    cand = _candidate_from_subset(support, subset, "exact", m)
    return cand


def coarsening_separate(
    support: SupportGraph,
    oracle: ProbabilityOracle,
    policy: EdgePolicy,
    gamma: float = 0.75,
    rng: random.Random | None = None,
) -> tuple[RciCandidate | None, CoarseningHistory]:
    """Coarsen, assign, and score the expanded set as a capacity cut.

    The candidate is returned even when not violated (callers inspect the
    violation), together with the history for the hierarchical walks.
    """
    history = coarsen(support, oracle, policy, gamma=gamma, rng=rng)
    subset = assign_and_uncoarsen(history)
    if not subset:
        return None, history
    return _candidate_from_subset(support, subset, "coarsen", m=support.m), history


@dataclass
class GraphChipStats:
    """Debug counters for the hierarchical walks."""

    checks: int = 0
    levels: int = 0


def graphchip_rci(
    support: SupportGraph,
    subset: frozenset[int],
    violation: float,
    history: CoarseningHistory,
    stats: GraphChipStats | None = None,
) -> list[RciCandidate]:
    """Walk the hierarchy from coarse to fine looking for violated capacity
    cuts among the supernodes inside the selected set.

    Skips the walk entirely when the expanded set is itself violated
    (strictly positive violation), and stops at the first level that yields
    any violated cut.  Total subset checks stay within
    gamma/(1-gamma) * |V| because level sizes decay geometrically.
    """
    if violation > 0.0:
        return []
    stats = stats if stats is not None else GraphChipStats()
    n0 = sum(1 for v in history.levels[0].vertices if v != 0)
    found: list[RciCandidate] = []
    checked = 0
    for t in range(history.depth, 0, -1):
        stats.levels += 1
        level = history.levels[t]
        for u in sorted(level.vertices):
            if u == 0 or u not in subset:
                continue
            checked += 1
            members = level.node_map[u]
            cand = _candidate_from_subset(support, members, "graphchip-rci", support.m)
            if cand.violation > VIOLATION_EPS:
                found.append(cand)
        if found:
            break
    stats.checks += checked
    # geometric level decay plus a small allowance for the clamped last level
    budget = history.gamma / (1.0 - history.gamma) * n0 + 8
    assert checked <= budget, "level walk exceeded its work bound"
    return found


def brute_force_rci(
    support: SupportGraph, m: int
) -> tuple[float, frozenset[int]] | None:
    """Reference z(m) by enumerating all customer subsets; refuses above 20
    customers."""
    customers = support.customers
    if len(customers) > 20:
        raise ValidationError(f"{len(customers)} customers is too many to enumerate")
    threshold = m * support.capacity + 1
    best = None
    best_set = None
    for mask in range(1, 1 << len(customers)):
        chosen = [customers[k] for k in range(len(customers)) if mask >> k & 1]
        if sum(support.demands[v] for v in chosen) < threshold:
            continue
        val = boundary(support.edges, set(chosen))
        if best is None or val < best - 1e-12 or (
            abs(val - best) <= 1e-12 and tuple(sorted(chosen)) < tuple(sorted(best_set))
        ):
            best = val
            best_set = frozenset(chosen)
    if best is None:
        return None
    return best, best_set
