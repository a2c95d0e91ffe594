"""Two-index LP relaxation and the cut machinery layered on top of it.

The relaxation keeps one variable per undirected edge, fixes every customer
degree to two, and bounds depot edges by two (a value of two is a
single-customer round trip).  Capacity-style cuts are appended as >= rows and
never removed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError
from .instance import Instance
from .lp import LinearProgram

SUPPORT_EPS = 1e-9


def boundary(edges, subset) -> float:
    """Sum of edge values with exactly one endpoint in `subset`."""
    total = 0.0
    for (i, j), val in edges.items():
        if (i in subset) != (j in subset):
            total += val
    return total


@dataclass(frozen=True)
class FractionalSolution:
    """Sparse fractional point of the relaxation.

    Only edges above SUPPORT_EPS are stored.  `objective` is the LP value the
    point came from, when known.
    """

    n: int
    edges: dict[tuple[int, int], float]
    objective: float | None = None

    def __post_init__(self) -> None:
        for (i, j), val in self.edges.items():
            if not (0 <= i < j < self.n):
                raise ValidationError(f"edge ({i},{j}) out of range for n={self.n}")
            hi = 2.0 if i == 0 else 1.0
            if val < -1e-9 or val > hi + 1e-6:
                raise ValidationError(f"edge ({i},{j}) value {val} outside [0,{hi}]")

    def degree(self, v: int) -> float:
        return sum(val for (i, j), val in self.edges.items() if v in (i, j))


def edge_list(n: int) -> tuple[tuple[int, int], ...]:
    """Lexicographic undirected edge order used for LP columns."""
    return tuple((i, j) for i in range(n) for j in range(i + 1, n))


def solution_to_json_dict(sol: FractionalSolution) -> dict:
    """JSON form {n, edges: [[i, j, value], ...]} with edges sorted."""
    return {
        "n": sol.n,
        "edges": [[i, j, val] for (i, j), val in sorted(sol.edges.items())],
    }


def solution_from_json_dict(data) -> FractionalSolution:
    """Inverse of solution_to_json_dict; malformed input raises ParseError."""
    try:
        n = int(data["n"])
        rows = data["edges"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"solution JSON needs n and edges: {exc}") from exc
    edges: dict[tuple[int, int], float] = {}
    for row in rows:
        try:
            i, j, val = row
            edges[(int(i), int(j))] = float(val)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"bad solution edge row {row!r}") from exc
    return FractionalSolution(n=n, edges=edges)


def build_relaxation(inst: Instance) -> tuple[LinearProgram, tuple[tuple[int, int], ...]]:
    """Degree-only relaxation: min cost, customer degrees fixed to two.

    Capacity requirements are left to the cut loop entirely, so the initial
    optimum is a fractional two-matching that may ignore the depot.
    """
    edges = edge_list(inst.n)
    n_e = len(edges)
    c = np.array([inst.edge_cost(i, j) for i, j in edges], dtype=float)
    a = np.zeros((inst.n - 1, n_e))
    for col, (i, j) in enumerate(edges):
        if i > 0:
            a[i - 1, col] = 1.0
        if j > 0:
            a[j - 1, col] = 1.0
    b = np.full(inst.n - 1, 2.0)
    senses = ("==",) * (inst.n - 1)
    lower = np.zeros(n_e)
    upper = np.array([2.0 if i == 0 else 1.0 for i, j in edges])
    return LinearProgram(c=c, a=a, senses=senses, b=b, lower=lower, upper=upper), edges


def solution_from_lp(n: int, edges, x: np.ndarray, objective: float) -> FractionalSolution:
    vals = {}
    for col, e in enumerate(edges):
        v = float(x[col])
        if v > SUPPORT_EPS:
            vals[e] = min(v, 2.0 if e[0] == 0 else 1.0)
    return FractionalSolution(n=n, edges=vals, objective=objective)


@dataclass(frozen=True)
class Cut:
    """A rounded capacity cut (kind 'rci') or framed capacity cut ('fci').

    RCI: x(delta(subset)) >= rhs.  FCI: x(delta(frame)) plus the boundary of
    every partition member >= rhs.  `rhs` is always an even integer.
    """

    kind: str
    rhs: int
    subset: frozenset[int] | None = None
    frame: frozenset[int] | None = None
    members: tuple[frozenset[int], ...] | None = None

    def __post_init__(self) -> None:
        if self.kind == "rci":
            if not self.subset or 0 in self.subset:
                raise ValidationError("rci cut needs a non-empty depot-free subset")
        elif self.kind == "fci":
            if not self.members or self.frame is None:
                raise ValidationError("fci cut needs a frame and members")
            seen: set[int] = set()
            for mem in self.members:
                if not mem or (mem & seen):
                    raise ValidationError("fci members must be non-empty and disjoint")
                seen |= mem
            if seen != set(self.frame) or 0 in seen:
                raise ValidationError("fci members must partition the depot-free frame")
        else:
            raise ValidationError(f"unknown cut kind {self.kind!r}")
        if self.rhs % 2 != 0:
            raise ValidationError(f"cut rhs must be even, got {self.rhs}")

    def canonical_key(self) -> tuple:
        if self.kind == "rci":
            return ("rci", tuple(sorted(self.subset)))
        return ("fci", tuple(sorted(tuple(sorted(m)) for m in self.members)))


def cut_lhs(sol: FractionalSolution, cut: Cut) -> float:
    """Left-hand side of the cut at the given fractional point."""
    if cut.kind == "rci":
        return boundary(sol.edges, cut.subset)
    total = boundary(sol.edges, cut.frame)
    for mem in cut.members:
        total += boundary(sol.edges, mem)
    return total


def cut_row(cut: Cut, n: int, edges) -> np.ndarray:
    """Coefficient vector of the cut over the relaxation's edge columns.

    For FCI rows an edge is counted once per boundary it crosses (frame plus
    each member), so coefficients range over {0, 1, 2, 3}.
    """
    ei = np.fromiter((e[0] for e in edges), dtype=int, count=len(edges))
    ej = np.fromiter((e[1] for e in edges), dtype=int, count=len(edges))
    if cut.kind == "rci":
        inside = np.zeros(n, dtype=bool)
        inside[list(cut.subset)] = True
        return (inside[ei] != inside[ej]).astype(float)
    member_id = np.full(n, -1, dtype=int)
    for k, mem in enumerate(cut.members):
        member_id[list(mem)] = k
    in_frame = np.zeros(n, dtype=bool)
    in_frame[list(cut.frame)] = True
    coeff = (in_frame[ei] != in_frame[ej]).astype(float)
    differs = member_id[ei] != member_id[ej]
    coeff += np.where(in_frame[ei] & differs, 1.0, 0.0)
    coeff += np.where(in_frame[ej] & differs, 1.0, 0.0)
    return coeff


class CutPool:
    """Insertion-ordered cut collection with canonical-set deduplication.

    Cuts are never removed; duplicates are silently rejected.
    """

    def __init__(self) -> None:
        self.cuts: list[Cut] = []
        self._keys: set[tuple] = set()

    def __len__(self) -> int:
        return len(self.cuts)

    def __contains__(self, cut: Cut) -> bool:
        return cut.canonical_key() in self._keys

    def add(self, cut: Cut) -> bool:
        key = cut.canonical_key()
        if key in self._keys:
            return False
        self._keys.add(key)
        self.cuts.append(cut)
        return True


def add_cut(pool: CutPool, cut: Cut) -> bool:
    """Insert into the pool; False means the cut was already present."""
    return pool.add(cut)


def lp_with_cuts(
    base: LinearProgram, n: int, edges, cuts: list[Cut]
) -> LinearProgram:
    """Extend the relaxation with one >= row per pooled cut."""
    if not cuts:
        return base
    rows = np.vstack([base.a] + [cut_row(cut, n, edges)[None, :] for cut in cuts])
    senses = base.senses + (">=",) * len(cuts)
    b = np.concatenate([base.b, np.array([float(c.rhs) for c in cuts])])
    return LinearProgram(
        c=base.c, a=rows, senses=senses, b=b, lower=base.lower, upper=base.upper
    )
