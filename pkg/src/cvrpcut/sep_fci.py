"""Framed capacity inequalities: bin packing bounds on the partition demands
and the hierarchical search for violated frames."""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from itertools import accumulate

from .coarsen import MIN_CUSTOMER_NODES, CoarseningHistory, SupportGraph
from .errors import ValidationError
from .relaxation import boundary
from .sep_rci import VIOLATION_EPS, rci_rhs

BPP_EXACT_MAX_ITEMS = 25
SCREEN_MARGIN = 2.0


@dataclass(frozen=True)
class Partition:
    """A frame of customers split into disjoint member blocks."""

    frame: frozenset[int]
    members: tuple[frozenset[int], ...]
    member_demands: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.members) != len(self.member_demands):
            raise ValidationError("one demand per member required")
        seen: set[int] = set()
        for mem in self.members:
            if not mem or mem & seen:
                raise ValidationError("members must be non-empty and disjoint")
            seen |= mem
        if seen != set(self.frame):
            raise ValidationError("members must cover the frame exactly")

    def to_items(self, capacity: int) -> list[int]:
        return split_items(self.member_demands, capacity)


def split_items(demands, capacity: int) -> list[int]:
    """Bin packing items for the member demands.

    Demands above the capacity become floor(d / capacity) full items plus the
    remainder when nonzero, so every item fits in a bin.
    """
    items: list[int] = []
    for d in demands:
        if d <= 0:
            raise ValidationError(f"member demand must be positive, got {d}")
        if d > capacity:
            items.extend([capacity] * (d // capacity))
            if d % capacity:
                items.append(d % capacity)
        else:
            items.append(d)
    return items


@dataclass
class OpCounter:
    """Work counter so tests can pin the bound computations to n log n."""

    ops: int = 0


def l2_lower_bound(
    items, capacity: int, counter: OpCounter | None = None
) -> int:
    """Martello and Toth L2 bound via a threshold sweep.

    For each threshold a taken from zero and the item weights not above half
    the capacity, items split into large (> capacity - a), medium
    (> capacity / 2) and small (>= a) classes; larges and mediums need a bin
    each and smalls fill the medium slack.  All arithmetic is integer.
    """
    counter = counter if counter is not None else OpCounter()
    weights = sorted(items)
    n = len(weights)
    if n == 0:
        return 0
    if weights[0] <= 0 or weights[-1] > capacity:
        raise ValidationError("items must lie in [1, capacity]")
    log_n = max(1, n.bit_length())
    counter.ops += n * log_n
    prefix = [0, *accumulate(weights)]
    # indices below half_cut hold weights w with 2w <= capacity
    half_cut = bisect_right(weights, capacity // 2)
    thresholds = {0}
    thresholds.update(weights[:half_cut])
    best = 0
    for alpha in thresholds:
        counter.ops += 3 * log_n + 6
        big = n - bisect_right(weights, capacity - alpha)
        mid_lo = half_cut
        mid_hi = bisect_right(weights, capacity - alpha)
        n2 = mid_hi - mid_lo
        sum2 = prefix[mid_hi] - prefix[mid_lo]
        small_lo = bisect_left(weights, alpha)
        sum3 = prefix[half_cut] - prefix[small_lo]
        spare = n2 * capacity - sum2
        overflow = sum3 - spare
        bound = big + n2 + max(0, -(-overflow // capacity))
        if bound > best:
            best = bound
    return best


def ffd_upper_bound(items, capacity: int) -> int:
    """First fit decreasing bin count."""
    residuals: list[int] = []
    for w in sorted(items, reverse=True):
        if w <= 0 or w > capacity:
            raise ValidationError("items must lie in [1, capacity]")
        for k, r in enumerate(residuals):
            if r >= w:
                residuals[k] = r - w
                break
        else:
            residuals.append(capacity - w)
    return len(residuals)


class _NodeBudget(Exception):
    pass


def bpp_exact(items, capacity: int, node_limit: int | None = None) -> int | None:
    """Exact minimum bin count by depth first branch and bound.

    Returns None when node_limit runs out.  Refuses more than
    BPP_EXACT_MAX_ITEMS items; callers fall back to the L2 bound there.
    """
    weights = sorted(items, reverse=True)
    if not weights:
        return 0
    if len(weights) > BPP_EXACT_MAX_ITEMS:
        raise ValidationError(
            f"{len(weights)} items exceeds the exact packing limit"
        )
    best = ffd_upper_bound(weights, capacity)
    if l2_lower_bound(weights, capacity) == best:
        return best
    suffix = [0] * (len(weights) + 1)
    for k in range(len(weights) - 1, -1, -1):
        suffix[k] = suffix[k + 1] + weights[k]
    nodes = 0
    bins: list[int] = []

    def dfs(k: int) -> None:
        nonlocal best, nodes
        nodes += 1
        if node_limit is not None and nodes > node_limit:
            raise _NodeBudget
        if k == len(weights):
            best = min(best, len(bins))
            return
        slack = sum(bins)
        need = max(0, -(-(suffix[k] - slack) // capacity))
        if len(bins) + need >= best:
            return
        w = weights[k]
        tried: set[int] = set()
        for idx in range(len(bins)):
            r = bins[idx]
            if r >= w and r not in tried:
                tried.add(r)
                bins[idx] = r - w
                dfs(k + 1)
                bins[idx] = r
        if len(bins) + 1 < best:
            bins.append(capacity - w)
            dfs(k + 1)
            bins.pop()

    try:
        dfs(0)
    except _NodeBudget:
        return None
    return best


def fci_rhs(member_demands, capacity: int, r_value: int) -> int:
    """Right-hand side 2 r + 2 sum of per-member vehicle counts."""
    total = 2 * r_value
    for d in member_demands:
        total += rci_rhs(d, capacity)
    return total


def fci_lhs(edges, frame, members) -> float:
    """Frame boundary plus every member boundary at the fractional point."""
    total = boundary(edges, frame)
    for mem in members:
        total += boundary(edges, mem)
    return total


def fci_check(sol, cand: "FciCandidate") -> float:
    """Violation of the candidate at the point `sol`, recomputed from its
    edges.

    Positive means the point is cut off.  The members may leave part of the
    frame uncovered; uncovered customers simply contribute no member terms,
    which is how published aggregate figures quote the non-singleton core.
    """
    lhs = fci_lhs(sol.edges, cand.frame, cand.members)
    return cand.rhs - lhs


@dataclass(frozen=True)
class FciCandidate:
    """A framed capacity cut candidate with its packing certificate."""

    frame: frozenset[int]
    members: tuple[frozenset[int], ...]
    rhs: int
    lhs: float
    violation: float
    r_value: int
    r_tag: str
    level: int
    items: tuple[int, ...] = ()


@dataclass
class FciStats:
    """Counters for the hierarchical frame search."""

    levels: int = 0
    screened_out: int = 0
    refined: int = 0


def packing_bound(
    items, capacity: int, node_limit: int | None = 200_000
) -> tuple[int, str]:
    """Bin count for the items with an exactness tag.

    L2 is always computed; when it already meets first fit decreasing the
    value is exact.  Otherwise the exact search runs when the item count
    allows it, and a lower-bound tag marks the remaining cases.
    """
    lb = l2_lower_bound(items, capacity)
    ub = ffd_upper_bound(items, capacity)
    if lb == ub:
        return lb, "exact"
    if len(items) <= BPP_EXACT_MAX_ITEMS:
        exact = bpp_exact(items, capacity, node_limit=node_limit)
        if exact is not None:
            return exact, "exact"
    return lb, "lower-bound"


def graphchip_fci(
    support: SupportGraph,
    subset: frozenset[int],
    history: CoarseningHistory,
    node_limit: int | None = 200_000,
    stats: FciStats | None = None,
) -> list[FciCandidate]:
    """Frame search over every coarsening level.

    At each level the frame is the full customer set and the members are the
    supernodes inside the selected set plus singletons for the customers
    outside it.  Levels where some member already violates its capacity cut
    are skipped (the plain cut dominates there).  A cheap screen using the
    frame demand in place of the packing value discards partitions more than
    SCREEN_MARGIN below violation before any packing work happens.
    """
    stats = stats if stats is not None else FciStats()
    cap = support.capacity
    frame = frozenset(support.customers)
    frame_lhs = boundary(support.edges, frame)
    frame_demand = sum(support.demands[v] for v in frame)
    found: list[FciCandidate] = []
    walked = 0
    for t in range(history.depth, 0, -1):
        walked += 1
        stats.levels += 1
        level = history.levels[t]
        members: list[frozenset[int]] = []
        for u in sorted(level.vertices):
            if u == 0 or u not in subset:
                continue
            members.append(level.node_map[u])
        covered = set().union(*members) if members else set()
        members.extend(frozenset((v,)) for v in frame if v not in covered)
        members.sort(key=min)
        demands = tuple(
            sum(support.demands[v] for v in mem) for mem in members
        )
        lhs = frame_lhs
        member_rhs_sum = 0
        rci_violated = False
        for mem, d in zip(members, demands):
            mem_lhs = boundary(support.edges, mem)
            mem_rhs = rci_rhs(d, cap)
            if mem_rhs - mem_lhs > VIOLATION_EPS:
                rci_violated = True
                break
            lhs += mem_lhs
            member_rhs_sum += mem_rhs
        if rci_violated:
            continue
        screen_rhs = rci_rhs(frame_demand, cap) + member_rhs_sum
        if screen_rhs - lhs <= -SCREEN_MARGIN - 1e-9:
            stats.screened_out += 1
            continue
        stats.refined += 1
        items = split_items(demands, cap)
        r_value, r_tag = packing_bound(items, cap, node_limit=node_limit)
        rhs = fci_rhs(demands, cap, r_value)
        violation = rhs - lhs
        if violation > 0.0:
            found.append(
                FciCandidate(
                    frame=frame,
                    members=tuple(members),
                    rhs=rhs,
                    lhs=lhs,
                    violation=violation,
                    r_value=r_value,
                    r_tag=r_tag,
                    level=t,
                    items=tuple(items),
                )
            )
    n0 = len(frame)
    if n0 > MIN_CUSTOMER_NODES:
        # level count shrinks geometrically down to the terminal size
        cap_levels = math.ceil(
            math.log(MIN_CUSTOMER_NODES / n0) / math.log(history.gamma)
        ) + 1
        assert walked <= cap_levels, "too many partition levels"
    return found
