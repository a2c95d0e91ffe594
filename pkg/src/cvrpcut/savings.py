"""Parallel Clarke-Wright savings heuristic, used as the upper-bound fallback."""

from __future__ import annotations

from .instance import Instance


def clarke_wright(inst: Instance) -> tuple[float, list[list[int]]]:
    """Feasible route set by merging on sorted savings; returns (cost, routes).

    Every customer starts on its own round trip; merges join route ends while
    the combined load fits the capacity.  The result is always feasible, so
    its cost is a valid upper bound.
    """
    routes = {v: [v] for v in inst.customers}
    loads = {v: inst.demands[v] for v in inst.customers}
    route_of = {v: v for v in inst.customers}

    savings = []
    for i in inst.customers:
        for j in range(i + 1, inst.n):
            s = inst.edge_cost(0, i) + inst.edge_cost(0, j) - inst.edge_cost(i, j)
            savings.append((-s, i, j))
    savings.sort()

    for neg_s, i, j in savings:
        if neg_s > 0:
            break
        ri, rj = route_of[i], route_of[j]
        if ri == rj:
            continue
        if loads[ri] + loads[rj] > inst.capacity:
            continue
        a, b = routes[ri], routes[rj]
        # Only route ends may be joined.
        if a[-1] == i and b[0] == j:
            merged = a + b
        elif a[-1] == i and b[-1] == j:
            merged = a + b[::-1]
        elif a[0] == i and b[0] == j:
            merged = a[::-1] + b
        elif a[0] == i and b[-1] == j:
            merged = b + a
        else:
            continue
        routes[ri] = merged
        loads[ri] += loads[rj]
        del routes[rj], loads[rj]
        for v in merged:
            route_of[v] = ri

    out = sorted(routes.values())
    cost = 0.0
    for route in out:
        stops = [0] + route + [0]
        cost += sum(inst.edge_cost(u, v) for u, v in zip(stops, stops[1:]))
    return cost, out
