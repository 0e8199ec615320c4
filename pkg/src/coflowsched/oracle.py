"""Ground truth for tiny instances and the batch ratio harness."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache

from .instance import CoflowInstance, FlowKey, as_fraction
from .lp import MAKESPAN, WCT, LpSolution
from .pipeline import RATIO_TOL, RunConfig, bound_for, run_pipeline
from .rounding import RANDOMIZED, Assignment
from .simulator import default_step, list_schedule, objective_values
from .timegrid import priority_stamp

MAX_FLOWS = 4
MAX_COFLOWS = 3
STATE_BUDGET = 200_000
SUPPORT_BUDGET = 10_000
TIE_ORDER_CAP = 720


class BudgetExceeded(RuntimeError):
    pass


def _maximal_actions(flows: list[FlowKey], live: list[int], m: int) -> list[tuple[tuple[int, int], ...]]:
    """Port-disjoint placements of live flows on cores that cannot be extended.

    Each action is a tuple of ``(flow index, core index)``; a flow runs on at
    most one core per quantum.
    """
    out = []
    choices = [range(-1, m)] * len(live)
    for combo in itertools.product(*choices):
        used = set()
        ok = True
        for g, c in zip(live, combo):
            if c < 0:
                continue
            f = flows[g]
            a, b = (c, "i", f.src), (c, "o", f.dst)
            if a in used or b in used:
                ok = False
                break
            used.add(a)
            used.add(b)
        if not ok:
            continue
        maximal = True
        for g, c in zip(live, combo):
            if c >= 0:
                continue
            f = flows[g]
            if any((q, "i", f.src) not in used and (q, "o", f.dst) not in used for q in range(m)):
                maximal = False
                break
        if maximal:
            out.append(tuple((g, c) for g, c in zip(live, combo) if c >= 0))
    return out


def brute_force_opt(inst: CoflowInstance, objective: str, time_quantum=None, budget: int = STATE_BUDGET) -> Fraction:
    """Optimal preemptive objective over schedules that switch only at quantum multiples.

    Flows may migrate between cores at quantum boundaries but never run on
    two cores at once.  A flow whose remainder is smaller than one quantum of
    work finishes part-way through that quantum.  Raises ``BudgetExceeded``
    when more than ``budget`` states would be explored.
    """
    if objective not in (WCT, MAKESPAN):
        raise ValueError(f"unknown objective {objective!r}")
    flows = list(inst.flows)
    if len(flows) > MAX_FLOWS or inst.n > MAX_COFLOWS:
        raise ValueError(f"instance too large for brute force ({len(flows)} flows, {inst.n} coflows)")
    q = default_step(inst) if time_quantum is None else as_fraction(time_quantum)
    for k in range(1, inst.n + 1):
        if (inst.release(k) / q).denominator != 1:
            raise ValueError(f"quantum {q} does not divide release of coflow {k}")
    for f in flows:
        for p in range(1, inst.m + 1):
            if (Fraction(inst.size(f)) / inst.speed(p) / q).denominator != 1:
                raise ValueError(f"quantum {q} does not divide d/s_{p} of flow {f}")

    # integer work units: one quantum on core p moves rate[p] units
    per_quantum = [inst.speed(p) * q for p in range(1, inst.m + 1)]
    unit = Fraction(1)
    for v in per_quantum:
        unit = _frac_gcd(unit, v)
    rate = [int(v / unit) for v in per_quantum]
    size0 = tuple(int(Fraction(inst.size(f)) / unit) for f in flows)
    rel = [int(inst.release(f.coflow) / q) for f in flows]
    horizon_rel = max(rel)
    coflow_of = [f.coflow for f in flows]
    weight = {k: inst.weight(k) for k in range(1, inst.n + 1)}
    m = inst.m
    states = 0

    @lru_cache(maxsize=None)
    def actions(live: tuple[int, ...]):
        return _maximal_actions(flows, list(live), m)

    @lru_cache(maxsize=None)
    def best(tick: int, rem: tuple[int, ...]) -> Fraction:
        """Objective contribution from ``tick`` on, counted from time zero."""
        nonlocal states
        states += 1
        if states > budget:
            raise BudgetExceeded(f"state budget {budget} exceeded")
        live = tuple(g for g, r in enumerate(rem) if r > 0 and rel[g] <= tick)
        if not live:
            nxt = min(rel[g] for g, r in enumerate(rem) if r > 0)
            return best(nxt, rem)
        result = None
        for act in actions(live):
            new = list(rem)
            done_at: dict[int, Fraction] = {}
            for g, c in act:
                if new[g] <= rate[c]:
                    done_at[g] = (tick + Fraction(new[g], rate[c])) * q
                    new[g] = 0
                else:
                    new[g] -= rate[c]
            new_t = tuple(new)
            cost = _step_cost(objective, done_at, new_t, coflow_of, weight)
            if any(r > 0 for r in new_t):
                cost = _combine(objective, cost, tail(tick + 1, new_t))
            if result is None or cost < result:
                result = cost
        return result

    def tail(tick: int, rem: tuple[int, ...]) -> Fraction:
        # once everything is released only the offset in time matters
        if tick <= horizon_rel:
            return best(tick, rem)
        base = best(horizon_rel, rem)
        shift = (tick - horizon_rel) * q
        if objective == MAKESPAN:
            return base + shift
        open_k = {coflow_of[g] for g, r in enumerate(rem) if r > 0}
        return base + shift * sum(weight[k] for k in open_k)

    return best(0, size0)


def _frac_gcd(a: Fraction, b: Fraction) -> Fraction:
    return Fraction(math.gcd(a.numerator * b.denominator, b.numerator * a.denominator), a.denominator * b.denominator)


def _step_cost(objective, done_at, rem, coflow_of, weight) -> Fraction:
    if objective == MAKESPAN:
        return max(done_at.values(), default=Fraction(0)) if not any(r > 0 for r in rem) else Fraction(0)
    cost = Fraction(0)
    closed: dict[int, Fraction] = {}
    for g, t in done_at.items():
        k = coflow_of[g]
        closed[k] = max(closed.get(k, t), t)
    for k, t in closed.items():
        if all(rem[g] == 0 for g in range(len(rem)) if coflow_of[g] == k):
            cost += weight[k] * t
    return cost


def _combine(objective, now_cost, later):
    return later if objective == MAKESPAN else now_cost + later


@dataclass
class Expectation:
    wct: float
    makespan: float
    outcomes: int


def _tie_orders(groups: list[list[FlowKey]]) -> int:
    return math.prod(math.factorial(len(g)) for g in groups)


def enumerate_randomized(sol: LpSolution, inst: CoflowInstance | None = None, exact: bool = True) -> Expectation:
    """Exact expectation of both objectives under randomized rounding.

    Every combination of per-flow outcomes is simulated, together with every
    relative order of flows that share a core and an interval stamp (the
    random tie-break makes those orders equally likely).
    """
    inst = inst or sol.inst
    grid = sol.grid
    flows = list(inst.flows)
    supports = [sorted(sol.probabilities(f).items()) for f in flows]
    if math.prod(len(s) for s in supports) > SUPPORT_BUDGET:
        raise BudgetExceeded(f"support product exceeds {SUPPORT_BUDGET}")
    wct_terms, mk_terms, outcomes = [], [], 0
    for combo in itertools.product(*supports):
        prob = math.prod(pr for _, pr in combo)
        if prob == 0:
            continue
        choice = {f: pair for f, (pair, _) in zip(flows, combo)}
        stamp = {f: priority_stamp(grid, pair[1]) for f, pair in choice.items()}
        groups: dict[tuple, list[FlowKey]] = {}
        for f, (p, l) in choice.items():
            groups.setdefault((p, l), []).append(f)
        tied = [g for g in groups.values() if len(g) > 1]
        n_orders = _tie_orders(tied)
        if n_orders > TIE_ORDER_CAP:
            raise BudgetExceeded(f"{n_orders} tie orders exceed the cap of {TIE_ORDER_CAP}")
        for perms in itertools.product(*(itertools.permutations(g) for g in tied)):
            tiebreak = {f: 0.0 for f in flows}
            for perm in perms:
                for pos, f in enumerate(perm):
                    tiebreak[f] = float(pos)
            a = Assignment(inst, choice, stamp, RANDOMIZED, tiebreak)
            obj = objective_values(list_schedule(inst, a, exact=exact), inst)
            w = prob / n_orders
            wct_terms.append(w * float(obj["wct"]))
            mk_terms.append(w * float(obj["makespan"]))
            outcomes += 1
    return Expectation(math.fsum(wct_terms), math.fsum(mk_terms), outcomes)


CSV_FIELDS = ("instance", "seed", "objective", "lp", "alg", "opt", "ratio", "bound", "pass", "ms")


@dataclass
class RatioReport:
    instance: str
    seed: int
    objective: str
    lp: float | None
    alg: float | None
    ratio: float | None
    bound: float
    passed: bool
    opt: float | None = None
    ms: float = 0.0
    error: str | None = None
    estimator: float | None = None
    max_greedy_excess: float | None = None

    def csv_row(self) -> dict:
        def fmt(x):
            return "" if x is None else repr(float(x))

        return {
            "instance": self.instance,
            "seed": self.seed,
            "objective": self.objective,
            "lp": fmt(self.lp),
            "alg": fmt(self.alg),
            "opt": fmt(self.opt),
            "ratio": fmt(self.ratio),
            "bound": fmt(self.bound),
            "pass": "true" if self.passed else "false",
            "ms": f"{self.ms:.1f}",
        }


@dataclass
class BatchSummary:
    reports: list[RatioReport]
    config: dict
    max_ratio: float = field(init=False)
    mean_ratio: float = field(init=False)
    failures: list[str] = field(init=False)

    def __post_init__(self):
        ratios = [r.ratio for r in self.reports if r.ratio is not None]
        self.max_ratio = max(ratios, default=math.nan)
        self.mean_ratio = math.fsum(ratios) / len(ratios) if ratios else math.nan
        self.failures = [r.instance for r in self.reports if not r.passed]

    def to_json(self) -> str:
        # wall-clock fields are left out so reruns produce identical files
        rows = []
        for r in self.reports:
            rec = asdict(r)
            rec.pop("ms")
            rows.append(rec)
        return json.dumps(
            {
                "config": self.config,
                "aggregate": {
                    "count": len(self.reports),
                    "max_ratio": self.max_ratio,
                    "mean_ratio": self.mean_ratio,
                    "failures": self.failures,
                },
                "reports": rows,
            },
            indent=2,
        ) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for r in self.reports:
            writer.writerow(r.csv_row())
        return buf.getvalue()


def ratio_one(name: str, inst: CoflowInstance, config: RunConfig, with_opt: bool = False) -> RatioReport:
    """Run the pipeline on one instance; failures are captured, not raised."""
    t0 = time.perf_counter()
    bound = bound_for(config.objective, config.epsilon, inst.has_releases)
    try:
        res = run_pipeline(inst, config)
    except Exception as exc:  # noqa: BLE001 - a batch must survive one bad instance
        return RatioReport(name, config.seed, config.objective, None, None, None, bound, False,
                           ms=(time.perf_counter() - t0) * 1e3, error=f"{type(exc).__name__}: {exc}")
    opt = None
    if with_opt:
        try:
            opt = float(brute_force_opt(inst, config.objective))
        except (BudgetExceeded, ValueError):
            opt = None
    est = res.estimator
    return RatioReport(
        name,
        config.seed,
        config.objective,
        res.lp_value,
        res.alg_value,
        res.ratio,
        bound,
        res.ratio <= bound + RATIO_TOL,
        opt,
        (time.perf_counter() - t0) * 1e3,
        estimator=None if est is None else est.final,
        max_greedy_excess=None if est is None else est.max_greedy_excess(),
    )


def _ratio_task(args):
    return ratio_one(*args)


def ratio_report(
    instances: list[tuple[str, CoflowInstance]],
    config: RunConfig,
    jobs: int = 1,
    with_opt: bool = False,
) -> BatchSummary:
    tasks = [(name, inst, config, with_opt) for name, inst in instances]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_ratio_task, tasks))
    else:
        reports = [_ratio_task(t) for t in tasks]
    return BatchSummary(reports, config.to_record())
