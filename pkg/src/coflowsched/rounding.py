"""Rounding an LP solution into one ``(core, interval)`` choice per flow.

Randomized rounding draws each flow's pair from its LP distribution
``s_p * y * |I_l| / d``.  The deterministic variants fix flows one at a time
(in the total flow order) to the pair minimising a pessimistic estimator of
the objective, the method of conditional expectations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .instance import CoflowInstance, FlowKey, as_fraction
from .lp import MAKESPAN, WCT, LpSolution
from .timegrid import eligible_intervals, priority_stamp

RANDOMIZED = "randomized"
DETERMINISTIC = "deterministic"
TIE_TOL = 1e-12


def eta_from_epsilon(epsilon, mode: str) -> Fraction:
    """Grid parameter giving the ``(k + epsilon)`` guarantees for ``mode``."""
    epsilon = as_fraction(epsilon)
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if mode == RANDOMIZED:
        return epsilon
    if mode == DETERMINISTIC:
        return epsilon / 2
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class Assignment:
    inst: CoflowInstance
    choice: dict[FlowKey, tuple[int, int]]
    stamp: dict[FlowKey, Fraction]
    mode: str
    tiebreak: dict[FlowKey, float] | None = None
    seed: int | None = None
    epsilon: Fraction | None = None
    eta: Fraction | None = None

    def __post_init__(self):
        self._rank = {f: n for n, f in enumerate(self.inst.flows)}
        missing = [f for f in self.inst.flows if f not in self.choice]
        if missing:
            raise ValueError(f"assignment misses flows {missing}")

    def priority(self, f: FlowKey) -> tuple:
        """List-scheduling key: stamp first, then the tie-break."""
        if self.tiebreak is not None:
            return (self.stamp[f], self.tiebreak[f], self._rank[f])
        return (self.stamp[f], self._rank[f])

    def core(self, f: FlowKey) -> int:
        return self.choice[f][0]

    def core_flows(self, p: int) -> list[FlowKey]:
        """The flows placed on core ``p``, in list-scheduling order."""
        return sorted((f for f, (q, _) in self.choice.items() if q == p), key=self.priority)

    def indicator(self, f: FlowKey, p: int, l: int) -> int:
        return int(self.choice[f] == (p, l))

    def to_record(self) -> dict:
        N = self.inst.N
        rec = {
            "mode": self.mode,
            "epsilon": None if self.epsilon is None else float(self.epsilon),
            "eta": None if self.eta is None else float(self.eta),
        }
        if self.seed is not None:
            rec["seed"] = self.seed
        flows = []
        for f in self.inst.flows:
            p, l = self.choice[f]
            row = {"i": f.src, "j": f.dst - N, "k": f.coflow, "p": p, "l": l, "t": _num(self.stamp[f])}
            if self.tiebreak is not None:
                row["u"] = self.tiebreak[f]
            flows.append(row)
        rec["flows"] = flows
        return rec

    @classmethod
    def from_record(cls, inst: CoflowInstance, rec: dict) -> "Assignment":
        N = inst.N
        choice, stamp, tiebreak = {}, {}, {}
        known = set(inst.flows)
        for row in rec["flows"]:
            f = FlowKey(row["i"], row["j"] + N, row["k"])
            if f not in known:
                raise ValueError(f"assignment names unknown flow ({row['i']},{row['j']},{row['k']})")
            if not 1 <= row["p"] <= inst.m:
                raise ValueError(f"flow {f}: core {row['p']} out of range")
            choice[f] = (row["p"], row["l"])
            stamp[f] = as_fraction(row["t"])
            if "u" in row:
                tiebreak[f] = float(row["u"])
        eps = rec.get("epsilon")
        eta = rec.get("eta")
        return cls(
            inst,
            choice,
            stamp,
            rec["mode"],
            tiebreak if rec["mode"] == RANDOMIZED else None,
            rec.get("seed"),
            None if eps is None else as_fraction(eps),
            None if eta is None else as_fraction(eta),
        )


def _num(x: Fraction):
    return int(x) if x.denominator == 1 else float(x)


def sample_assignment(sol: LpSolution, seed: int, epsilon=None) -> Assignment:
    """Draw every flow's pair independently from its LP distribution."""
    inst, grid = sol.inst, sol.grid
    rng = np.random.default_rng(seed)
    choice, stamp, tiebreak = {}, {}, {}
    for f in inst.flows:
        probs = sol.probabilities(f)
        keys = sorted(probs)
        cum = np.cumsum([probs[key] for key in keys])
        u = rng.random() * cum[-1]
        pick = keys[min(int(np.searchsorted(cum, u, side="right")), len(keys) - 1)]
        choice[f] = pick
        stamp[f] = priority_stamp(grid, pick[1])
        tiebreak[f] = float(rng.random())
    return Assignment(inst, choice, stamp, RANDOMIZED, tiebreak, seed, _opt(epsilon), grid.eta)


def _opt(x):
    return None if x is None else as_fraction(x)


class Estimator:
    """Pessimistic estimators of flow completion times under partial rounding.

    For a flow ``g`` placed (or hypothetically placed) at ``(p, l)`` the
    bound is ``nl(l) + d_g/s_p`` (with the ``l = 0`` start term dropped)
    plus, for every other flow sharing a port with ``g``:

    * if already fixed on core ``p``: its full transmission time ``d/s_p``
      when it sits in an earlier interval, or in the same interval but
      earlier in the flow order;
    * if still free: its LP transmission time on ``p`` over the earlier
      intervals, plus that of interval ``l`` when it precedes ``g``.

    A free flow's estimate is the probability-weighted mean of its bounds;
    a fixed flow's estimate is its bound at the fixed pair.
    """

    def __init__(self, sol: LpSolution, kind: str):
        if kind not in (WCT, MAKESPAN):
            raise ValueError(f"unknown objective {kind!r}")
        self.sol = sol
        self.kind = kind
        inst, grid = sol.inst, sol.grid
        self.inst, self.grid = inst, grid
        self.flows = list(inst.flows)
        F = len(self.flows)
        self.index = {f: n for n, f in enumerate(self.flows)}
        lengths = grid.lengths
        self.start = grid.notational_lefts.copy()
        self.start[0] = 0.0
        Y = np.asarray(sol.Y, dtype=float)
        self.busy = Y * lengths[None, None, :]  # LP transmission time per (flow, core, interval)
        self.busy_before = np.cumsum(self.busy, axis=2) - self.busy  # sum over t < l
        speeds = np.array([float(s) for s in inst.speeds])
        sizes = np.array([inst.size(f) for f in self.flows], dtype=float)
        self.tx = sizes[:, None] / speeds[None, :]  # d / s_p
        self.sharers = [
            [n for n, h in enumerate(self.flows) if n != g and (h.src == f.src or h.dst == f.dst)]
            for g, f in enumerate(self.flows)
        ]
        self.support = [sorted(sol.probabilities(f).items()) for f in self.flows]
        self.weights = np.array([float(inst.weight(f.coflow)) for f in self.flows])
        self.coflow_of = np.array([f.coflow for f in self.flows])
        self.members = {k: [n for n, f in enumerate(self.flows) if f.coflow == k] for k in range(1, inst.n + 1)}
        self.eligible = [set(eligible_intervals(grid, inst.release(f.coflow))) for f in self.flows]
        self.fixed: dict[int, tuple[int, int]] = {}
        self.values = np.array([self.flow_value(g) for g in range(F)])

    # -- per-flow bounds ------------------------------------------------
    def bound(self, g: int, p: int, l: int) -> float:
        """Completion bound of flow ``g`` at ``(p, l)`` given the fixed flows."""
        pi = p - 1
        total = self.start[l] + self.tx[g, pi]
        fixed = self.fixed
        for h in self.sharers[g]:
            pair = fixed.get(h)
            if pair is not None:
                ph, lh = pair
                if ph == p and (lh < l or (lh == l and h < g)):
                    total += self.tx[h, pi]
            else:
                total += self.busy_before[h, pi, l]
                if h < g:
                    total += self.busy[h, pi, l]
        return total

    def flow_value(self, g: int) -> float:
        pair = self.fixed.get(g)
        if pair is not None:
            return self.bound(g, *pair)
        return sum(prob * self.bound(g, p, l) for (p, l), prob in self.support[g])

    def total(self, values=None) -> float:
        v = self.values if values is None else values
        if self.kind == MAKESPAN:
            return float(v.max())
        return float(
            sum(float(self.inst.weight(k)) * v[idx].max() for k, idx in self.members.items())
        )

    # -- conditioning ---------------------------------------------------
    def affected(self, g: int) -> list[int]:
        return [g] + self.sharers[g]

    def child_value(self, g: int, p: int, l: int) -> float:
        """Objective estimate after additionally fixing ``g`` at ``(p, l)``."""
        if g in self.fixed:
            raise ValueError(f"flow {self.flows[g]} is already fixed")
        self.fixed[g] = (p, l)
        try:
            vals = self.values.copy()
            for h in self.affected(g):
                vals[h] = self.flow_value(h)
            return self.total(vals)
        finally:
            del self.fixed[g]

    def fix(self, g: int, p: int, l: int):
        if l not in self.eligible[g]:
            raise ValueError(f"interval {l} not eligible for flow {self.flows[g]}")
        self.fixed[g] = (p, l)
        for h in self.affected(g):
            self.values[h] = self.flow_value(h)


def _estimator(sol: LpSolution, kind: str, fixed: dict[FlowKey, tuple[int, int]]) -> Estimator:
    est = Estimator(sol, kind)
    for f, (p, l) in fixed.items():
        est.fix(est.index[f], p, l)
    return est


def estimator_D(sol: LpSolution, flow: FlowKey, p: int, l: int, fixed: dict[FlowKey, tuple[int, int]] | None = None) -> float:
    """Conditional completion bound of an unfixed ``flow`` placed at ``(p, l)``."""
    fixed = fixed or {}
    if flow in fixed:
        raise ValueError(f"flow {flow} is already fixed")
    est = _estimator(sol, WCT, fixed)
    g = est.index[flow]
    if l not in est.eligible[g]:
        raise ValueError(f"interval {l} not eligible for flow {flow}")
    return est.bound(g, p, l)


def estimator_E(sol: LpSolution, flow: FlowKey, fixed: dict[FlowKey, tuple[int, int]]) -> float:
    """Completion bound of a fixed ``flow`` at its fixed pair."""
    if flow not in fixed:
        raise ValueError(f"flow {flow} is not fixed")
    est = _estimator(sol, WCT, fixed)
    return est.bound(est.index[flow], *fixed[flow])


def cond_exp_total_wct(sol: LpSolution, fixed: dict[FlowKey, tuple[int, int]] | None = None) -> float:
    return _estimator(sol, WCT, fixed or {}).total()


def cond_exp_makespan(sol: LpSolution, fixed: dict[FlowKey, tuple[int, int]] | None = None) -> float:
    return _estimator(sol, MAKESPAN, fixed or {}).total()


@dataclass
class Step:
    flow: FlowKey
    children: dict[tuple[int, int], float]
    probabilities: dict[tuple[int, int], float]
    chosen: tuple[int, int]
    parent: float
    average: float

    @property
    def chosen_value(self) -> float:
        return self.children[self.chosen]

    def to_record(self, N: int) -> dict:
        f = self.flow
        return {
            "flow": [f.src, f.dst - N, f.coflow],
            "parent": self.parent,
            "average": self.average,
            "chosen": list(self.chosen),
            "chosen_value": self.chosen_value,
            "candidates": [
                {"p": p, "l": l, "prob": self.probabilities[(p, l)], "value": v}
                for (p, l), v in sorted(self.children.items())
            ],
        }


@dataclass
class EstimatorReport:
    kind: str
    initial: float
    steps: list[Step] = field(default_factory=list)

    @property
    def final(self) -> float:
        return self.steps[-1].chosen_value if self.steps else self.initial

    def max_greedy_excess(self) -> float:
        """Largest ``chosen - weighted average`` over all steps (should be <= 0)."""
        return max((s.chosen_value - s.average for s in self.steps), default=-math.inf)

    def to_jsonl(self, N: int) -> str:
        return "".join(json.dumps(s.to_record(N)) + "\n" for s in self.steps)


def _derandomize(sol: LpSolution, kind: str, epsilon=None) -> tuple[Assignment, EstimatorReport]:
    inst, grid = sol.inst, sol.grid
    est = Estimator(sol, kind)
    report = EstimatorReport(kind, est.total())
    parent = report.initial
    choice, stamp = {}, {}
    for g, f in enumerate(est.flows):
        probs = dict(est.support[g])
        children = {pair: est.child_value(g, *pair) for pair in sorted(probs)}
        low = min(children.values())
        chosen = min(pair for pair, v in children.items() if v <= low + TIE_TOL * max(1.0, abs(low)))
        average = sum(probs[pair] * v for pair, v in children.items())
        report.steps.append(Step(f, children, probs, chosen, parent, average))
        est.fix(g, *chosen)
        parent = children[chosen]
        choice[f] = chosen
        stamp[f] = priority_stamp(grid, chosen[1])
    assignment = Assignment(inst, choice, stamp, DETERMINISTIC, None, None, _opt(epsilon), grid.eta)
    return assignment, report


def derandomize_wct(sol: LpSolution, epsilon=None) -> tuple[Assignment, EstimatorReport]:
    return _derandomize(sol, WCT, epsilon)


def derandomize_makespan(sol: LpSolution, epsilon=None) -> tuple[Assignment, EstimatorReport]:
    return _derandomize(sol, MAKESPAN, epsilon)


def expected_completion_diagnostic(sol: LpSolution) -> dict[int, float]:
    """Per-coflow ``max_f sum_{p,l} prob * C(f, p, l)`` with nothing fixed.

    Unlike the decision estimators, the input-port and output-port
    competitor sums are taken separately, so a flow sharing both ports is
    counted twice.  Reported for inspection only.
    """
    est = Estimator(sol, WCT)
    flows = est.flows
    out: dict[int, float] = {}
    for g, f in enumerate(flows):
        val = 0.0
        for (p, l), prob in est.support[g]:
            pi = p - 1
            c = est.start[l] + est.tx[g, pi]
            for h in est.sharers[g]:
                h_f = flows[h]
                times = (h_f.src == f.src) + (h_f.dst == f.dst)
                c += times * (est.busy_before[h, pi, l] + (est.busy[h, pi, l] if h < g else 0.0))
            val += prob * c
        out[f.coflow] = max(out.get(f.coflow, 0.0), float(val))
    return out


def save_assignment(assignment: Assignment, path, extra: dict | None = None) -> None:
    rec = assignment.to_record()
    if extra:
        rec.update(extra)
    Path(path).write_text(json.dumps(rec, indent=2) + "\n", encoding="utf-8")


def load_assignment(inst: CoflowInstance, path) -> Assignment:
    return Assignment.from_record(inst, json.loads(Path(path).read_text(encoding="utf-8")))
