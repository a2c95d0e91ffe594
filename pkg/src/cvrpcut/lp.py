"""Dense bounded-variable primal simplex and a small best-first branch and bound.

Everything here is deterministic: Dantzig pricing with lowest-index tie
breaks, a Bland fallback against cycling, and heap ordering with an explicit
sequence number.  Problems are desk scale (a few hundred rows), so the basis
inverse is kept densely and refreshed periodically.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SolverError, ValidationError

FEAS_TOL = 1e-7
ENTER_TOL = 1e-9
PIVOT_TOL = 1e-9
# Eligibility floor for pivot elements in the ratio tests.  A leaving row
# whose pivot entry is at roundoff scale makes the next basis near singular
# and destroys the inverse; such rows must be treated as non-blocking.
RATIO_TOL = 1e-7
DUAL_TOL = 1e-6
INT_TOL = 1e-6
REFACTOR_EVERY = 64


@dataclass
class LinearProgram:
    """min c.x subject to a.x (sense) b and lower <= x <= upper.

    Senses are '<=', '>=' or '=='.  Lower bounds must be finite; upper bounds
    may be +inf.  The row matrix is dense.
    """

    c: np.ndarray
    a: np.ndarray
    senses: tuple[str, ...]
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        n = self.c.shape[0]
        if self.a.ndim != 2 or self.a.shape[1] != n:
            raise ValidationError(f"row matrix shape {self.a.shape} does not match {n} columns")
        m = self.a.shape[0]
        if len(self.senses) != m or self.b.shape[0] != m:
            raise ValidationError("senses/rhs length does not match row count")
        for s in self.senses:
            if s not in ("<=", ">=", "=="):
                raise ValidationError(f"unknown row sense {s!r}")
        if self.lower.shape[0] != n or self.upper.shape[0] != n:
            raise ValidationError("bound vectors do not match column count")
        if not np.all(np.isfinite(self.lower)):
            raise ValidationError("all lower bounds must be finite")
        if np.any(self.lower > self.upper + 1e-12):
            raise ValidationError("crossed variable bounds")

    @property
    def n_cols(self) -> int:
        return self.c.shape[0]

    @property
    def n_rows(self) -> int:
        return self.a.shape[0]

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "LinearProgram":
        return LinearProgram(self.c, self.a, self.senses, self.b, lower, upper)


@dataclass(frozen=True)
class Basis:
    """Restart point for the simplex: basic columns of the standardized form
    (structurals, then slacks, then artificials) plus the nonbasic columns
    resting at their upper bound."""

    basic: tuple[int, ...]
    at_upper: frozenset[int]


@dataclass
class LpSolution:
    status: str  # 'optimal' | 'infeasible' | 'unbounded' | 'cutoff' | 'node-limit'
    objective: float
    x: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    basis: Basis | None
    pivots: int
    nodes: int = 0


class _Standardized:
    """Shifted equality form: A.z = b with 0 <= z <= span.

    Columns are [structurals | slacks | artificials].  Structurals are shifted
    by their lower bound, '>=' rows get a -1 slack, equality rows a slack
    fixed at zero, and every row gets an artificial for the phase-1 start.
    """

    def __init__(self, lp: LinearProgram):
        m, n = lp.n_rows, lp.n_cols
        self.m, self.n_struct = m, n
        self.lo_orig = lp.lower
        shifted_b = lp.b - lp.a @ lp.lower if m else np.zeros(0)

        slack_sign = np.array(
            [1.0 if s in ("<=", "==") else -1.0 for s in lp.senses], dtype=float
        )
        total = n + 2 * m
        a = np.zeros((m, total))
        if m:
            a[:, :n] = lp.a
            a[np.arange(m), n + np.arange(m)] = slack_sign
        self.a = a
        self.b = shifted_b

        span = np.full(total, np.inf)
        span[:n] = lp.upper - lp.lower
        for i, s in enumerate(lp.senses):
            if s == "==":
                span[n + i] = 0.0
        self.span = span
        self.cost = np.concatenate([lp.c, np.zeros(2 * m)])
        self.art_start = n + m

    def artificial_signs(self) -> None:
        """Orient artificial columns so the phase-1 start is feasible with all
        other columns at their lower bound (zero)."""
        m = self.m
        for i in range(m):
            sign = 1.0 if self.b[i] >= 0 else -1.0
            self.a[i, self.art_start + i] = sign


class _Simplex:
    def __init__(self, std: _Standardized):
        self.std = std
        self.pivots = 0
        total = std.a.shape[1]
        self.basic = np.zeros(std.m, dtype=np.intp)
        self.basic_mask = np.zeros(total, dtype=bool)
        self.at_upper = np.zeros(total, dtype=bool)
        self.binv = np.zeros((std.m, std.m))
        self.xb = np.zeros(std.m)

    def _refactor(self) -> bool:
        m = self.std.m
        if m == 0:
            self.binv = np.zeros((0, 0))
            return True
        bmat = self.std.a[:, self.basic]
        try:
            self.binv = np.linalg.inv(bmat)
        except np.linalg.LinAlgError:
            return False
        return True

    def _nonbasic_value(self, j: int) -> float:
        return self.std.span[j] if self.at_upper[j] else 0.0

    def _recompute_basics(self) -> None:
        m = self.std.m
        if m == 0:
            self.xb = np.zeros(0)
            return
        rhs = self.std.b.copy()
        if self.at_upper.any():
            rhs -= self.std.a[:, self.at_upper] @ self.std.span[self.at_upper]
        self.xb = self.binv @ rhs

    def start_cold(self) -> None:
        std = self.std
        std.artificial_signs()
        self.basic = np.arange(std.art_start, std.art_start + std.m, dtype=np.intp)
        self.basic_mask[:] = False
        self.basic_mask[self.basic] = True
        self.at_upper[:] = False
        self._refactor()
        self._recompute_basics()

    def load_warm(self, basis: Basis) -> bool:
        """Install a saved basis without judging feasibility.

        Artificial spans are pinned to zero here: a basic artificial that
        drifted positive must register as an infeasibility, never as a free
        column, or the solve would return a point violating its row.
        """
        std = self.std
        if len(basis.basic) != std.m:
            return False
        if any(j < 0 or j >= std.a.shape[1] for j in basis.basic):
            return False
        std.span[std.art_start:] = 0.0
        self.basic = np.array(basis.basic, dtype=np.intp)
        self.basic_mask[:] = False
        self.basic_mask[self.basic] = True
        self.at_upper[:] = False
        for j in basis.at_upper:
            if np.isfinite(std.span[j]) and not self.basic_mask[j]:
                self.at_upper[j] = True
        if not self._refactor():
            return False
        self._recompute_basics()
        return True

    def primal_infeasibility(self) -> float:
        if self.std.m == 0:
            return 0.0
        span_b = self.std.span[self.basic]
        lo = float(np.max(-self.xb, initial=0.0))
        over = self.xb - span_b
        hi = float(np.max(over[np.isfinite(span_b)], initial=0.0))
        return max(lo, hi)

    def dual_infeasibility(self, cost: np.ndarray) -> float:
        """Worst reduced-cost violation over movable nonbasic columns."""
        std = self.std
        if std.m == 0:
            return 0.0
        y = cost[self.basic] @ self.binv
        rc = cost - y @ std.a
        movable = ~self.basic_mask & (std.span > 0.0)
        lo_side = movable & ~self.at_upper
        hi_side = movable & self.at_upper
        worst = float(np.max(-rc[lo_side], initial=0.0))
        return max(worst, float(np.max(rc[hi_side], initial=0.0)))

    def _objective(self, cost: np.ndarray) -> float:
        val = float(cost[self.basic] @ self.xb) if self.std.m else 0.0
        if self.at_upper.any():
            val += float(cost[self.at_upper] @ self.std.span[self.at_upper])
        return val

    def run(self, cost: np.ndarray, allow_unbounded: bool) -> str:
        """Optimize the given cost over the current basis.  Returns 'optimal'
        or 'unbounded'."""
        std = self.std
        m = std.m
        stall_limit = 5 * (m + std.n_struct)
        stall = 0
        bland = False

        while True:
            if self.pivots and self.pivots % REFACTOR_EVERY == 0:
                self._refactor()
                self._recompute_basics()
                # The exact basic values of a healthy basis stay inside their
                # bounds; a real violation here means the inverse or the ratio
                # test let a near-singular basis through, and pivoting on is
                # a random walk.  Fail loudly instead.
                if self.primal_infeasibility() > 1e2 * FEAS_TOL:
                    raise SolverError(
                        "simplex lost primal feasibility; numerical breakdown"
                    )
            y = cost[self.basic] @ self.binv if m else np.zeros(0)
            rc = cost - (y @ std.a if m else 0.0)
            score = np.where(self.at_upper, rc, -rc)
            score[self.basic_mask] = -np.inf
            score[std.span <= 0.0] = -np.inf

            if bland:
                improving = score > ENTER_TOL
                if not improving.any():
                    return "optimal"
                entering = int(np.argmax(improving))
            else:
                entering = int(np.argmax(score))
                if score[entering] <= ENTER_TOL:
                    return "optimal"
            direction = -1.0 if self.at_upper[entering] else 1.0

            col = self.binv @ std.a[:, entering] if m else np.zeros(0)
            # Basic values move by -direction * t * col as the entering
            # variable moves by direction * t.
            t_first = std.span[entering]
            t_best = t_first
            leave_pos = -1
            leave_to_upper = False
            if m:
                delta = -direction * col
                span_b = std.span[self.basic]
                limits = np.full(m, np.inf)
                below = delta < -RATIO_TOL
                if below.any():
                    limits[below] = self.xb[below] / -delta[below]
                above = (delta > RATIO_TOL) & np.isfinite(span_b)
                if above.any():
                    limits[above] = (span_b[above] - self.xb[above]) / delta[above]
                cand = np.flatnonzero(limits < t_first + PIVOT_TOL)
                if cand.size:
                    # Among rows blocking within tolerance of the shortest
                    # step, take the largest pivot magnitude: small pivots
                    # poison the inverse.  Bland mode keeps the lowest basic
                    # index instead, which its termination argument needs.
                    t_min = limits[cand].min()
                    near = cand[limits[cand] <= t_min + PIVOT_TOL]
                    if bland:
                        pick = near[np.argmin(self.basic[near])]
                    else:
                        mag = np.abs(delta[near])
                        top = near[mag >= mag.max()]
                        pick = top[np.argmin(self.basic[top])]
                    t_best = float(limits[pick])
                    leave_pos = int(pick)
                    leave_to_upper = bool(above[pick])

            if not np.isfinite(t_best):
                if allow_unbounded:
                    return "unbounded"
                raise SolverError("phase-1 objective unbounded; inconsistent state")
            t = max(t_best, 0.0)

            if leave_pos < 0:
                # Bound flip: the entering column jumps to its other bound.
                self.xb -= direction * t * col
                self.at_upper[entering] = not self.at_upper[entering]
            else:
                leaving = int(self.basic[leave_pos])
                self.xb -= direction * t * col
                enter_val = self._nonbasic_value(entering) + direction * t
                self.basic[leave_pos] = entering
                self.basic_mask[leaving] = False
                self.basic_mask[entering] = True
                self.at_upper[entering] = False
                self.at_upper[leaving] = leave_to_upper
                self.xb[leave_pos] = enter_val
                # Eta update of the dense inverse.
                pivot_val = col[leave_pos]
                if abs(pivot_val) < PIVOT_TOL:
                    self._refactor()
                    self._recompute_basics()
                else:
                    row = self.binv[leave_pos, :] / pivot_val
                    self.binv -= np.outer(col, row)
                    self.binv[leave_pos, :] = row
                if leaving >= std.art_start:
                    std.span[leaving] = 0.0

            self.pivots += 1
            # The chosen column improves the objective by score * step, so a
            # vanishing product marks a degenerate pivot for cycle control.
            if score[entering] * t > 1e-12:
                bland = False
                stall = 0
            else:
                stall += 1
                if stall > stall_limit:
                    bland = True

    def run_dual(self, cost: np.ndarray, max_pivots: int) -> str:
        """Restore primal feasibility while keeping reduced costs optimal.

        Used on warm bases whose bounds were tightened: the basis stays dual
        feasible, so each out-of-bound basic is driven to its violated bound
        with one pivot.  Returns 'optimal' or 'fallback'; the caller treats
        'fallback' as a request for a cold solve, so a numerically doubtful
        row or an infeasible subproblem is never misjudged here.
        """
        std = self.std
        m = std.m
        if m == 0:
            return "optimal"
        for _ in range(max_pivots):
            span_b = std.span[self.basic]
            lo_gap = -self.xb
            hi_gap = np.where(np.isfinite(span_b), self.xb - span_b, -np.inf)
            viol = np.maximum(lo_gap, hi_gap)
            pos = int(np.argmax(viol))
            if viol[pos] <= FEAS_TOL:
                return "optimal"
            leaves_low = lo_gap[pos] >= hi_gap[pos]

            e_row = self.binv[pos, :] @ std.a
            y = cost[self.basic] @ self.binv
            rc = cost - y @ std.a
            movable = ~self.basic_mask & (std.span > 0.0)
            if leaves_low:
                # xb[pos] must rise: entering at lower needs a negative row
                # entry, entering at upper a positive one.
                ok = movable & (
                    (~self.at_upper & (e_row < -RATIO_TOL))
                    | (self.at_upper & (e_row > RATIO_TOL))
                )
            else:
                ok = movable & (
                    (~self.at_upper & (e_row > RATIO_TOL))
                    | (self.at_upper & (e_row < -RATIO_TOL))
                )
            if not ok.any():
                return "fallback"
            theta = np.full(std.a.shape[1], np.inf)
            theta[ok] = np.abs(rc[ok]) / np.abs(e_row[ok])
            entering = int(np.argmin(theta))

            col = self.binv @ std.a[:, entering]
            if abs(col[pos]) < RATIO_TOL:
                return "fallback"
            leaving = int(self.basic[pos])
            self.basic[pos] = entering
            self.basic_mask[leaving] = False
            self.basic_mask[entering] = True
            self.at_upper[entering] = False
            self.at_upper[leaving] = bool(
                not leaves_low
                and np.isfinite(std.span[leaving])
                and std.span[leaving] > 0.0
            )
            row = self.binv[pos, :] / col[pos]
            self.binv -= np.outer(col, row)
            self.binv[pos, :] = row
            if leaving >= std.art_start:
                std.span[leaving] = 0.0
            self.pivots += 1
            if self.pivots % REFACTOR_EVERY == 0 and not self._refactor():
                return "fallback"
            self._recompute_basics()
        return "fallback"

    def full_values(self) -> np.ndarray:
        z = np.zeros(self.std.a.shape[1])
        up = self.at_upper & np.isfinite(self.std.span)
        z[up] = self.std.span[up]
        z[self.basic] = self.xb
        return z


def solve_lp(lp: LinearProgram, warm_basis: Basis | None = None) -> LpSolution:
    """Two-phase bounded-variable primal simplex.

    A warm basis that is still primal feasible skips phase 1 entirely.  A
    warm basis that lost primal feasibility to a bound change but kept dual
    feasibility (the usual state after branching) is repaired by the dual
    simplex; anything else falls back to a cold phase-1 start.
    """
    std = _Standardized(lp)
    sx = _Simplex(std)

    warm_ok = False
    if warm_basis is not None and sx.load_warm(warm_basis):
        if sx.primal_infeasibility() <= FEAS_TOL:
            warm_ok = True
        elif sx.dual_infeasibility(std.cost) <= DUAL_TOL:
            cap = 2 * (std.m + std.n_struct) + 100
            warm_ok = sx.run_dual(std.cost, cap) == "optimal"
    if not warm_ok:
        # load_warm parks artificial spans; phase 1 needs them free again.
        std.span[std.art_start:] = np.inf
        sx.start_cold()
        phase1_cost = np.zeros(std.a.shape[1])
        phase1_cost[std.art_start:] = 1.0
        sx.run(phase1_cost, allow_unbounded=False)
        infeas = sx._objective(phase1_cost)
        if infeas > FEAS_TOL:
            return LpSolution(
                status="infeasible",
                objective=float("nan"),
                x=np.zeros(lp.n_cols),
                duals=np.zeros(lp.n_rows),
                reduced_costs=np.zeros(lp.n_cols),
                basis=None,
                pivots=sx.pivots,
            )
        std.span[std.art_start:] = 0.0

    status = sx.run(std.cost, allow_unbounded=True)
    if status == "unbounded":
        return LpSolution(
            status="unbounded",
            objective=float("-inf"),
            x=np.zeros(lp.n_cols),
            duals=np.zeros(lp.n_rows),
            reduced_costs=np.zeros(lp.n_cols),
            basis=None,
            pivots=sx.pivots,
        )

    sx._refactor()
    sx._recompute_basics()
    z = sx.full_values()
    x = z[: lp.n_cols] + lp.lower
    x = np.clip(x, lp.lower, lp.upper)
    y = std.cost[sx.basic] @ sx.binv if std.m else np.zeros(0)
    rc = lp.c - (y @ lp.a if std.m else 0.0)
    return LpSolution(
        status="optimal",
        objective=float(lp.c @ x),
        x=x,
        duals=np.asarray(y, dtype=float),
        reduced_costs=np.asarray(rc, dtype=float),
        basis=Basis(
            basic=tuple(int(j) for j in sx.basic),
            at_upper=frozenset(int(j) for j in np.flatnonzero(sx.at_upper)),
        ),
        pivots=sx.pivots,
    )


@dataclass
class MipSpec:
    """An LP plus the columns required to take integer values."""

    lp: LinearProgram
    integer_vars: tuple[int, ...]

    def __post_init__(self) -> None:
        for j in self.integer_vars:
            if j < 0 or j >= self.lp.n_cols:
                raise ValidationError(f"integer column {j} out of range")
            if not np.isfinite(self.lp.upper[j]):
                raise ValidationError(f"integer column {j} must be bounded")


def _fractional_branch_var(x: np.ndarray, integer_vars: tuple[int, ...]) -> int:
    """Most fractional integer column, lowest index on ties; -1 if integral."""
    best, best_frac = -1, INT_TOL
    for j in integer_vars:
        f = x[j] - np.floor(x[j])
        dist = min(f, 1.0 - f)
        if dist > best_frac + 1e-12:
            best, best_frac = j, dist
    return best


def solve_mip(
    mip: MipSpec,
    incumbent_cutoff: float | None = None,
    node_limit: int | None = None,
) -> LpSolution:
    """Best-first branch and bound with LP bounds and warm-started children.

    Nodes are ordered by parent LP bound, ties resolved toward the deeper
    node.  Branching picks the most fractional integer column.  With an
    incumbent cutoff, only solutions strictly below the cutoff are sought;
    if none exists the status is 'cutoff'.
    """
    root = solve_lp(mip.lp)
    if root.status in ("infeasible", "unbounded"):
        return root
    if not mip.integer_vars:
        return root

    best_obj = float("inf") if incumbent_cutoff is None else float(incumbent_cutoff)
    best: LpSolution | None = None
    total_pivots = root.pivots
    nodes_solved = 1
    seq = 0
    heap: list[tuple[float, int, int, LpSolution, np.ndarray, np.ndarray]] = []

    def push(sol: LpSolution, lower: np.ndarray, upper: np.ndarray, depth: int) -> None:
        nonlocal seq, best, best_obj
        if sol.status != "optimal":
            return
        if sol.objective >= best_obj - 1e-9:
            return
        j = _fractional_branch_var(sol.x, mip.integer_vars)
        if j < 0:
            best = sol
            best_obj = sol.objective
            return
        heapq.heappush(heap, (sol.objective, -depth, seq, sol, lower, upper))
        seq += 1

    push(root, mip.lp.lower.copy(), mip.lp.upper.copy(), 0)
    limited = False
    while heap:
        bound, neg_depth, _, sol, lower, upper = heapq.heappop(heap)
        if bound >= best_obj - 1e-9:
            continue
        if node_limit is not None and nodes_solved >= node_limit:
            limited = True
            break
        j = _fractional_branch_var(sol.x, mip.integer_vars)
        if j < 0:
            continue
        depth = -neg_depth
        down_upper = upper.copy()
        down_upper[j] = np.floor(sol.x[j])
        up_lower = lower.copy()
        up_lower[j] = np.ceil(sol.x[j])
        for child_lower, child_upper in ((lower, down_upper), (up_lower, upper)):
            if child_lower[j] > child_upper[j]:
                continue
            child_lp = mip.lp.with_bounds(child_lower, child_upper)
            child = solve_lp(child_lp, warm_basis=sol.basis)
            nodes_solved += 1
            total_pivots += child.pivots
            push(child, child_lower, child_upper, depth + 1)

    if best is None:
        status = "node-limit" if limited else (
            "cutoff" if incumbent_cutoff is not None else "infeasible"
        )
        return LpSolution(
            status=status,
            objective=float("nan"),
            x=np.zeros(mip.lp.n_cols),
            duals=np.zeros(mip.lp.n_rows),
            reduced_costs=np.zeros(mip.lp.n_cols),
            basis=None,
            pivots=total_pivots,
            nodes=nodes_solved,
        )
    out = replace(best, pivots=total_pivots, nodes=nodes_solved)
    if limited:
        out.status = "node-limit"
    return out
