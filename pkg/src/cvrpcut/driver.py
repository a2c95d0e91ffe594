"""Root node cutting loop: solve the degree relaxation, separate capacity
cuts for every fleet index in parallel, insert, repeat."""

from __future__ import annotations

import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

from .coarsen import (
    EdgePolicy,
    ProbabilityOracle,
    SupportGraph,
    build_support,
    heuristic_oracle,
)
from .errors import SolverError, ValidationError
from .instance import Instance, fleet_bound
from .lp import solve_lp
from .relaxation import (
    Cut,
    CutPool,
    FractionalSolution,
    build_relaxation,
    lp_with_cuts,
    solution_from_lp,
)
from .savings import clarke_wright
from .sep_fci import FciCandidate, graphchip_fci
from .sep_rci import (
    RciCandidate,
    coarsening_separate,
    exact_separate,
    graphchip_rci,
)

_MASK = (1 << 64) - 1

# Node budget for one exact-separation search inside the loop.  A capped
# search still returns its best incumbent, which is a demand-feasible subset
# and therefore a valid cut; only the certificate of maximal violation is
# given up.  The cap keeps a single pathological branch-and-bound tree from
# eating the whole wall-clock budget, which the loop checks between rounds.
EXACT_NODE_LIMIT = 800

STRATEGIES = ("exact", "coarsen", "coarsen+graphchip")
POLICIES = ("greedy", "pi_greedy", "roulette", "softmax")


def task_seed(base: int, iteration: int, m: int) -> int:
    """Stable 64-bit stream seed for one separation task.

    Mixes the run seed, iteration and fleet index through the splitmix64
    finalizer so neighbouring tasks get unrelated streams regardless of the
    thread that runs them.
    """
    x = (base * 0x9E3779B97F4A7C15 + iteration * 0xBF58476D1CE4E5B9 + m) & _MASK
    for _ in range(2):
        x = (x + 0x9E3779B97F4A7C15) & _MASK
        x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
        x ^= x >> 31
    return x


def gap_percent(upper: float, lower: float) -> float:
    """Relative gap (upper - lower) / upper in percent."""
    if upper <= 0:
        raise ValidationError(f"upper bound must be positive, got {upper}")
    return (upper - lower) / upper * 100.0


@dataclass(frozen=True)
class DriverConfig:
    """Knobs for the root loop.

    Framed cuts piggyback on coarsening histories, so `fci` requires the
    coarsen strategy.  `ub`, when given, replaces the savings heuristic as
    the gap reference.
    """

    strategy: str = "exact"
    policy: str = "greedy"
    gamma: float = 0.75
    seed: int = 0
    max_iterations: int = 50  # separation rounds; the LP is always solved once
    time_limit_s: float | None = None
    fci: bool = False
    fci_gate: float = 1.0
    insert_threshold: float = 1e-4
    ub: float | None = None
    jobs: int = 1
    pi_max: float = 1e-3
    tau: float = 0.25

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown strategy {self.strategy!r}")
        if self.policy not in POLICIES:
            raise ValidationError(f"unknown policy {self.policy!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ValidationError("gamma must lie strictly between 0 and 1")
        if self.max_iterations < 0:
            raise ValidationError("max_iterations must be non-negative")
        if self.jobs < 1:
            raise ValidationError("jobs must be at least 1")
        if self.insert_threshold <= 0:
            raise ValidationError("insert_threshold must be positive")
        if self.fci and self.strategy != "coarsen+graphchip":
            raise ValidationError(
                "framed cuts need the coarsen+graphchip strategy"
            )
        if self.ub is not None and self.ub <= 0:
            raise ValidationError("upper bound must be positive")
        if self.time_limit_s is not None and self.time_limit_s <= 0:
            raise ValidationError("time limit must be positive")

    def edge_policy(self) -> EdgePolicy:
        return EdgePolicy(variant=self.policy, pi_max=self.pi_max, tau=self.tau)


@dataclass
class RootResult:
    """Outcome of the root loop.

    `wall_time_s` is informational only and deliberately left out of
    `to_json_dict` so repeated runs serialize byte for byte.
    """

    instance: str
    n_customers: int
    capacity: int
    k_fleet: int
    status: str
    iterations: int
    lb_history: list[float]
    lower_bound: float
    upper_bound: float
    ub_source: str
    gap: float
    rci_count: int
    fci_count: int
    cut_log: list[dict] = field(default_factory=list)
    wall_time_s: float = 0.0
    config: DriverConfig | None = None

    def to_json_dict(self) -> dict:
        out = {
            "instance": self.instance,
            "n_customers": self.n_customers,
            "capacity": self.capacity,
            "k_fleet": self.k_fleet,
            "status": self.status,
            "iterations": self.iterations,
            "lb_history": self.lb_history,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "ub_source": self.ub_source,
            "gap_percent": self.gap,
            "cuts": {"rci": self.rci_count, "fci": self.fci_count},
        }
        if self.config is not None:
            echo = asdict(self.config)
            # worker count only changes scheduling, never the outcome
            echo.pop("jobs")
            out["config"] = echo
        return out


@dataclass
class _TaskOut:
    m: int
    rci: list[RciCandidate]
    max_violation: float
    subset: frozenset[int] = frozenset()
    history: object = None
    fci: list[FciCandidate] = field(default_factory=list)


def _separate_one(
    support: SupportGraph,
    cfg: DriverConfig,
    oracle: ProbabilityOracle,
    iteration: int,
    m: int,
) -> _TaskOut:
    """RCI work for one fleet index; framed cuts are gated and run later."""
    out = _TaskOut(m=m, rci=[], max_violation=float("-inf"))
    if cfg.strategy == "exact":
        cand = exact_separate(support, m, node_limit=EXACT_NODE_LIMIT)
        if cand is not None:
            out.rci.append(cand)
            out.max_violation = cand.violation
        return out
    rng = random.Random(task_seed(cfg.seed, iteration, m))
    cand, history = coarsening_separate(
        support, oracle, cfg.edge_policy(), gamma=cfg.gamma, rng=rng
    )
    out.history = history
    violation = cand.violation if cand is not None else float("-inf")
    if cand is not None:
        out.subset = cand.subset
        out.max_violation = cand.violation
        if cand.violation > 0:
            out.rci.append(cand)
    if cfg.strategy == "coarsen+graphchip":
        for walked in graphchip_rci(support, out.subset, violation, history):
            out.rci.append(walked)
            out.max_violation = max(out.max_violation, walked.violation)
    return out


def _log_entry(iteration: int, cand, kind: str) -> dict:
    entry = {
        "iteration": iteration,
        "kind": kind,
        "violation": cand.violation,
        "rhs": cand.rhs,
        "lhs": cand.lhs,
    }
    if kind == "rci":
        entry["m"] = cand.m
        entry["source"] = cand.source
        entry["vertices"] = sorted(cand.subset)
        entry["lifted"] = cand.lifted
    else:
        entry["source"] = "graphchip-fci"
        entry["level"] = cand.level
        entry["members"] = [sorted(mem) for mem in cand.members]
        entry["items"] = list(cand.items)
        entry["r_value"] = cand.r_value
        entry["r_tag"] = cand.r_tag
    return entry


def run_root(
    inst: Instance,
    cfg: DriverConfig | None = None,
    oracle: ProbabilityOracle | None = None,
) -> RootResult:
    """Run the cutting loop on the degree relaxation of `inst`.

    The relaxation is always solved at least once, so a zero-round config
    reports the pure LP value.  Every round re-solves the relaxation with the
    pooled cuts from scratch, separates all fleet indices (possibly across
    threads: task outputs depend only on the task seed, never on
    scheduling), then inserts the deduplicated candidates sorted by falling
    violation.  Stops when a round adds nothing, on the round cap, or on the
    time limit, which is checked between rounds only.
    """
    cfg = cfg if cfg is not None else DriverConfig()
    if oracle is None:
        oracle = heuristic_oracle()
    started = time.monotonic()
    base_lp, edges = build_relaxation(inst)
    k_fleet = fleet_bound(inst)
    pool = CutPool()
    lb_history: list[float] = []
    cut_log: list[dict] = []
    rci_count = 0
    fci_count = 0
    iterations = 0

    while True:
        lp = lp_with_cuts(base_lp, inst.n, edges, pool.cuts)
        sol_lp = solve_lp(lp)
        if sol_lp.status != "optimal":
            raise SolverError(
                f"relaxation with {len(pool)} cuts came back {sol_lp.status}"
            )
        lb_history.append(float(sol_lp.objective))
        if iterations >= cfg.max_iterations:
            status = "max-iterations"
            break
        if (
            cfg.time_limit_s is not None
            and time.monotonic() - started > cfg.time_limit_s
        ):
            status = "time-limit"
            break
        frac = solution_from_lp(inst.n, edges, sol_lp.x, float(sol_lp.objective))
        iteration = iterations
        iterations += 1

        supports, outs = _run_tasks(frac, inst, cfg, oracle, iteration, k_fleet)
        max_violation = max(
            (o.max_violation for o in outs), default=float("-inf")
        )
        if cfg.fci and max_violation < cfg.fci_gate:
            _run_fci(supports, outs, cfg)
        added = 0
        ranked: list[tuple] = []
        for out in outs:
            for cand in out.rci:
                if cand.violation <= cfg.insert_threshold:
                    continue
                cut = Cut(kind="rci", rhs=cand.rhs, subset=cand.subset)
                ranked.append((-cand.violation, cut.canonical_key(), cut, cand, "rci"))
            for cand in out.fci:
                if cand.violation <= cfg.insert_threshold:
                    continue
                cut = Cut(
                    kind="fci",
                    rhs=cand.rhs,
                    frame=cand.frame,
                    members=cand.members,
                )
                ranked.append((-cand.violation, cut.canonical_key(), cut, cand, "fci"))
        ranked.sort(key=lambda item: (item[0], item[1]))
        for _, _, cut, cand, kind in ranked:
            if not pool.add(cut):
                continue
            cut_log.append(_log_entry(iteration, cand, kind))
            if kind == "rci":
                rci_count += 1
            else:
                fci_count += 1
            added += 1
        if added == 0:
            status = "converged"
            break

    lower = lb_history[-1] if lb_history else float("nan")
    if cfg.ub is not None:
        upper, ub_source = float(cfg.ub), "user"
    else:
        upper, ub_source = float(clarke_wright(inst)[0]), "savings"
    return RootResult(
        instance=inst.name,
        n_customers=inst.n - 1,
        capacity=inst.capacity,
        k_fleet=k_fleet,
        status=status,
        iterations=iterations,
        lb_history=lb_history,
        lower_bound=lower,
        upper_bound=upper,
        ub_source=ub_source,
        gap=gap_percent(upper, lower),
        rci_count=rci_count,
        fci_count=fci_count,
        cut_log=cut_log,
        wall_time_s=time.monotonic() - started,
        config=cfg,
    )


def separate_point(
    inst: Instance,
    frac: FractionalSolution,
    cfg: DriverConfig | None = None,
    oracle: ProbabilityOracle | None = None,
) -> list[dict]:
    """One-shot separation of a given fractional point across all fleet
    indices, returning cut-log entries sorted by falling violation.

    Same candidate flow as one driver round: threshold filter, canonical
    deduplication, framed cuts only behind the violation gate.
    """
    if frac.n != inst.n:
        raise ValidationError(
            f"solution has {frac.n} vertices but instance has {inst.n}"
        )
    cfg = cfg if cfg is not None else DriverConfig()
    if oracle is None:
        oracle = heuristic_oracle()
    k_fleet = fleet_bound(inst)
    supports, outs = _run_tasks(frac, inst, cfg, oracle, 0, k_fleet)
    max_violation = max((o.max_violation for o in outs), default=float("-inf"))
    if cfg.fci and max_violation < cfg.fci_gate:
        _run_fci(supports, outs, cfg)
    seen: set[tuple] = set()
    ranked: list[tuple] = []
    for out in outs:
        for cand in out.rci:
            if cand.violation <= cfg.insert_threshold:
                continue
            cut = Cut(kind="rci", rhs=cand.rhs, subset=cand.subset)
            ranked.append((-cand.violation, cut.canonical_key(), cand, "rci"))
        for cand in out.fci:
            if cand.violation <= cfg.insert_threshold:
                continue
            cut = Cut(
                kind="fci", rhs=cand.rhs, frame=cand.frame, members=cand.members
            )
            ranked.append((-cand.violation, cut.canonical_key(), cand, "fci"))
    ranked.sort(key=lambda item: (item[0], item[1]))
    entries = []
    for _, key, cand, kind in ranked:
        if key in seen:
            continue
        seen.add(key)
        entries.append(_log_entry(0, cand, kind))
    return entries


def _run_tasks(
    frac: FractionalSolution,
    inst: Instance,
    cfg: DriverConfig,
    oracle: ProbabilityOracle,
    iteration: int,
    k_fleet: int,
) -> tuple[list[SupportGraph], list[_TaskOut]]:
    """One `_separate_one` per fleet index, results in index order."""
    supports = [build_support(frac, inst, m) for m in range(k_fleet)]

    def job(m: int) -> _TaskOut:
        return _separate_one(supports[m], cfg, oracle, iteration, m)

    if cfg.jobs == 1:
        return supports, [job(m) for m in range(k_fleet)]
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        return supports, list(pool.map(job, range(k_fleet)))


def _run_fci(
    supports: list[SupportGraph], outs: list[_TaskOut], cfg: DriverConfig
) -> None:
    """Frame walks over the histories the first phase produced."""

    def job(out: _TaskOut) -> list[FciCandidate]:
        if out.history is None:
            return []
        return graphchip_fci(supports[out.m], out.subset, out.history)

    if cfg.jobs == 1:
        results = [job(out) for out in outs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(job, outs))
    for out, cands in zip(outs, results):
        out.fci = cands
