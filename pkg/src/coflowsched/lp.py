"""Interval-indexed LP relaxations for coflow scheduling on related cores.

Variables ``y[f, p, l]`` give the (time-normalised) rate at which flow ``f``
is sent on core ``p`` during interval ``I_l``; ``s_p * y * |I_l| / d_f`` is
then the fraction of the flow sent there.  Both objectives share the demand
and port-capacity rows; they differ only in the completion-time linking.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .instance import CoflowInstance, FlowKey, as_fraction, number_out, time_horizon
from .simplex import FEAS_TOL, SimplexError, simplex
from .timegrid import IntervalGrid, build_grid, eligible_intervals

log = logging.getLogger(__name__)

WCT = "wct"
MAKESPAN = "makespan"
EXACT_FALLBACK_MAX_ROWS = 400


class LpError(RuntimeError):
    pass


@dataclass(frozen=True)
class VarKey:
    flow: FlowKey
    core: int
    interval: int


@dataclass
class LpModel:
    kind: str
    inst: CoflowInstance
    grid: IntervalGrid
    var_keys: list[VarKey]
    aux_names: list[str]
    objective: list[Fraction]
    rows: list[list[tuple[int, Fraction]]]
    senses: list[str]
    rhs: list[Fraction]
    row_names: list[str]
    var_index: dict[VarKey, int] = field(repr=False, default_factory=dict)

    @property
    def n_y(self) -> int:
        return len(self.var_keys)

    @property
    def n_vars(self) -> int:
        return len(self.var_keys) + len(self.aux_names)

    def row_count(self, prefix: str) -> int:
        return sum(1 for name in self.row_names if name.startswith(prefix))


def f_coefficient(inst: CoflowInstance, flow: FlowKey, p: int, l: int, grid: IntervalGrid) -> Fraction:
    """Coefficient of ``y[f, p, l]`` in the LP completion time of ``f``."""
    d = inst.size(flow)
    return (inst.speed(p) / d * grid.notational_left(l) + Fraction(1, 2)) * grid.length(l)


def demand_coefficient(inst: CoflowInstance, flow: FlowKey, p: int, l: int, grid: IntervalGrid) -> Fraction:
    return inst.speed(p) * grid.length(l) / inst.size(flow)


def _build(inst: CoflowInstance, grid: IntervalGrid, kind: str) -> LpModel:
    if not inst.coflows or not inst.flows:
        raise LpError("instance has no coflows/flows")
    var_keys: list[VarKey] = []
    for f in inst.flows:
        for p in range(1, inst.m + 1):
            for l in eligible_intervals(grid, inst.release(f.coflow)):
                var_keys.append(VarKey(f, p, l))
    index = {v: c for c, v in enumerate(var_keys)}
    n_y = len(var_keys)
    if kind == WCT:
        aux = [f"C_{k}" for k in range(1, inst.n + 1)]
        objective = [Fraction(0)] * n_y + [inst.weight(k) for k in range(1, inst.n + 1)]
    else:
        aux = ["Cmax"]
        objective = [Fraction(0)] * n_y + [Fraction(1)]

    by_flow: dict[FlowKey, list[int]] = {f: [] for f in inst.flows}
    by_lane: dict[tuple[str, int, int, int], list[int]] = {}
    for c, v in enumerate(var_keys):
        by_flow[v.flow].append(c)
        by_lane.setdefault(("in", v.flow.src, v.core, v.interval), []).append(c)
        by_lane.setdefault(("out", v.flow.dst, v.core, v.interval), []).append(c)

    rows, senses, rhs, names = [], [], [], []
    N = inst.N
    for f in inst.flows:
        rows.append([(c, demand_coefficient(inst, f, var_keys[c].core, var_keys[c].interval, grid)) for c in by_flow[f]])
        senses.append("=")
        rhs.append(Fraction(1))
        names.append(f"demand_{f.src}_{f.dst - N}_{f.coflow}")
    for side, ports in (("in", inst.inputs), ("out", inst.outputs)):
        for port in ports:
            for p in range(1, inst.m + 1):
                for l in range(grid.count + 1):
                    cols = by_lane.get((side, port, p, l), [])
                    rows.append([(c, Fraction(1)) for c in cols])
                    senses.append("<=")
                    rhs.append(Fraction(1))
                    label = port if side == "in" else port - N
                    names.append(f"{side}_{label}_{p}_{l}")
    for f in inst.flows:
        aux_col = n_y + (f.coflow - 1 if kind == WCT else 0)
        row = [(c, f_coefficient(inst, f, var_keys[c].core, var_keys[c].interval, grid)) for c in by_flow[f]]
        row.append((aux_col, Fraction(-1)))
        rows.append(row)
        senses.append("<=")
        rhs.append(Fraction(0))
        names.append(f"link_{f.src}_{f.dst - N}_{f.coflow}")
    return LpModel(kind, inst, grid, var_keys, aux, objective, rows, senses, rhs, names, index)


def build_wct_lp(inst: CoflowInstance, grid: IntervalGrid) -> LpModel:
    return _build(inst, grid, WCT)


def build_makespan_lp(inst: CoflowInstance, grid: IntervalGrid) -> LpModel:
    return _build(inst, grid, MAKESPAN)


def build_lp(inst: CoflowInstance, grid: IntervalGrid, kind: str) -> LpModel:
    if kind not in (WCT, MAKESPAN):
        raise ValueError(f"unknown objective {kind!r}")
    return _build(inst, grid, kind)


@dataclass
class LpSolution:
    model: LpModel
    x: np.ndarray  # all variables, float or Fraction objects
    objective: float | Fraction
    exact: bool
    iterations: int
    # Y[flow_index, p-1, l]; zero for ineligible intervals
    Y: np.ndarray = field(repr=False)
    flow_index: dict[FlowKey, int] = field(repr=False)

    @property
    def inst(self) -> CoflowInstance:
        return self.model.inst

    @property
    def grid(self) -> IntervalGrid:
        return self.model.grid

    @property
    def y(self) -> dict[VarKey, float | Fraction]:
        return {v: self.x[c] for c, v in enumerate(self.model.var_keys)}

    def aux(self, name: str):
        return self.x[self.model.n_y + self.model.aux_names.index(name)]

    @property
    def lp_coflow(self) -> dict[int, float | Fraction]:
        if self.model.kind != WCT:
            raise LpError("coflow completion variables exist only in the WCT model")
        return {k: self.aux(f"C_{k}") for k in range(1, self.inst.n + 1)}

    @property
    def lp_makespan(self):
        if self.model.kind == MAKESPAN:
            return self.aux("Cmax")
        return max(self.lp_completion.values())

    @property
    def lp_completion(self) -> dict[FlowKey, float | Fraction]:
        """``C_ijk`` recomputed from ``y`` and the completion coefficients."""
        zero = Fraction(0) if self.exact else 0.0
        out = {f: zero for f in self.inst.flows}
        for c, v in enumerate(self.model.var_keys):
            coef = f_coefficient(self.inst, v.flow, v.core, v.interval, self.grid)
            out[v.flow] += (coef if self.exact else float(coef)) * self.x[c]
        return out

    def probabilities(self, flow: FlowKey) -> dict[tuple[int, int], float]:
        """Rounding distribution over ``(core, interval)`` for ``flow``.

        Tiny negative round-off is clipped and the mass renormalised.
        """
        inst, grid = self.inst, self.grid
        d = inst.size(flow)
        fi = self.flow_index[flow]
        probs = {}
        for p in range(1, inst.m + 1):
            s = float(inst.speed(p))
            for l in range(grid.count + 1):
                y = float(self.Y[fi, p - 1, l])
                if y > 0:
                    probs[(p, l)] = s * y * float(grid.length(l)) / d
        total = sum(probs.values())
        if total <= 0:
            raise LpError(f"flow {flow} has no probability mass")
        return {key: v / total for key, v in probs.items() if v / total > 1e-12}

    def to_record(self) -> dict:
        N = self.inst.N
        ys = []
        for c, v in enumerate(self.model.var_keys):
            val = float(self.x[c])
            if val != 0.0:
                f = v.flow
                ys.append({"i": f.src, "j": f.dst - N, "k": f.coflow, "p": v.core, "l": v.interval, "value": val})
        if self.model.kind == WCT:
            C = {str(k): float(v) for k, v in self.lp_coflow.items()}
        else:
            C = {"max": float(self.lp_makespan)}
        return {
            "objective": float(self.objective),
            "kind": self.model.kind,
            "eta": number_out(self.grid.eta),
            "y": ys,
            "C": C,
        }


@dataclass
class Audit:
    max_prob_sum_error: float
    max_capacity: float
    max_row_violation: float
    min_value: float

    @property
    def ok(self) -> bool:
        return (
            self.max_prob_sum_error <= FEAS_TOL
            and self.max_capacity <= 1 + FEAS_TOL
            and self.max_row_violation <= FEAS_TOL
            and self.min_value >= -FEAS_TOL
        )


def audit(model: LpModel, x) -> Audit:
    """Residuals of ``x`` against every row of ``model``."""
    xf = np.array([float(v) for v in x])
    prob_err = 0.0
    cap = 0.0
    viol = 0.0
    for row, sense, b, name in zip(model.rows, model.senses, model.rhs, model.row_names):
        lhs = sum(float(a) * xf[c] for c, a in row)
        b = float(b)
        if sense == "=":
            v = abs(lhs - b)
        elif sense == "<=":
            v = max(0.0, lhs - b)
        else:
            v = max(0.0, b - lhs)
        viol = max(viol, v)
        if name.startswith("demand_"):
            prob_err = max(prob_err, abs(lhs - 1.0))
        elif name.startswith(("in_", "out_")):
            cap = max(cap, lhs)
    return Audit(prob_err, cap, viol, float(xf.min()) if len(xf) else 0.0)


def solve(model: LpModel, exact: bool = False, max_iter: int | None = None) -> LpSolution:
    """Optimal basic solution of ``model`` via the built-in simplex.

    Float solves whose residuals exceed the feasibility tolerance are redone
    with exact rational pivoting when the model is small enough.
    """
    res = simplex(
        model.objective,
        model.rows,
        model.senses,
        model.rhs,
        exact=exact,
        max_iter=max_iter,
        crash=None if exact else greedy_crash(model),
    )
    x = res.x
    if not exact:
        a = audit(model, x)
        if not a.ok:
            if len(model.rows) > EXACT_FALLBACK_MAX_ROWS:
                raise LpError(f"float solve failed the feasibility audit ({a}); model too large for exact fallback")
            log.warning("float simplex failed audit (%s); falling back to exact pivoting", a)
            return solve(model, exact=True, max_iter=max_iter)
    return _solution(model, x, res.objective, exact, res.iterations)


def greedy_crash(model: LpModel) -> list[tuple[int, int]]:
    """Starting basis from a one-lane-per-flow packing.

    Each flow (in order) takes the lane ``(p, l)`` with the smallest
    completion contribution ``nl(l) + d / (2 s_p)`` that both its ports can
    still absorb; the completion variable of each coflow (or the makespan
    variable) becomes basic in the link row of its latest flow.  Returns an
    empty list when some flow does not fit, leaving phase I to do the work.
    """
    inst, grid = model.inst, model.grid
    used: dict[tuple, float] = {}
    pairs: list[tuple[int, int]] = []
    contrib: dict[FlowKey, float] = {}
    demand_row = {f: r for r, f in enumerate(inst.flows)}
    link_row = {f: len(model.rows) - len(inst.flows) + r for r, f in enumerate(inst.flows)}
    options: dict[FlowKey, list[tuple[float, int, VarKey]]] = {f: [] for f in inst.flows}
    for c, v in enumerate(model.var_keys):
        f = v.flow
        s, d = float(inst.speed(v.core)), inst.size(f)
        cost = float(grid.notational_left(v.interval)) + d / (2 * s)
        options[f].append((cost, c, v))
    for f in inst.flows:
        placed = False
        for cost, c, v in sorted(options[f]):
            need = 1.0 / float(demand_coefficient(inst, f, v.core, v.interval, grid))
            lanes = (("in", f.src, v.core, v.interval), ("out", f.dst, v.core, v.interval))
            if all(used.get(lane, 0.0) + need <= 1.0 - 1e-9 for lane in lanes):
                for lane in lanes:
                    used[lane] = used.get(lane, 0.0) + need
                pairs.append((demand_row[f], c))
                contrib[f] = cost
                placed = True
                break
        if not placed:
            return []
    groups: dict[int, list[FlowKey]] = {}
    for f in inst.flows:
        groups.setdefault(f.coflow if model.kind == WCT else 0, []).append(f)
    for key, flows in groups.items():
        last = max(flows, key=lambda f: contrib[f])
        aux_col = model.n_y + (key - 1 if model.kind == WCT else 0)
        pairs.append((link_row[last], aux_col))
    return pairs


def _solution(model: LpModel, x, objective, exact: bool, iterations: int) -> LpSolution:
    inst, grid = model.inst, model.grid
    flow_index = {f: n for n, f in enumerate(inst.flows)}
    Y = np.zeros((len(inst.flows), inst.m, grid.count + 1), dtype=object if exact else float)
    if exact:
        Y[...] = Fraction(0)
    for c, v in enumerate(model.var_keys):
        Y[flow_index[v.flow], v.core - 1, v.interval] = x[c]
    return LpSolution(model, x, objective, exact, iterations, Y, flow_index)


def solve_instance(inst: CoflowInstance, grid: IntervalGrid, kind: str, exact: bool = False) -> LpSolution:
    return solve(build_lp(inst, grid, kind), exact=exact)


def var_name(model: LpModel, c: int) -> str:
    if c < model.n_y:
        v = model.var_keys[c]
        f = v.flow
        return f"y_{f.src}_{f.dst - model.inst.N}_{f.coflow}_{v.core}_{v.interval}"
    return model.aux_names[c - model.n_y]


def _terms(model: LpModel, row) -> str:
    parts = []
    for c, a in row:
        a = float(a)
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {abs(a)!r} {var_name(model, c)}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def lp_text(model: LpModel) -> str:
    """The model in CPLEX LP format."""
    if model.n_vars == 0 or model.n_y == 0:
        raise LpError("model has no variables")
    lines = [f"\\ coflow interval-indexed LP ({model.kind})", "Minimize"]
    obj = [(c, a) for c, a in enumerate(model.objective) if a != 0]
    lines.append(f" obj: {_terms(model, obj)}")
    lines.append("Subject To")
    for row, sense, b, name in zip(model.rows, model.senses, model.rhs, model.row_names):
        if not row:
            continue  # an empty capacity row is vacuous
        lines.append(f" {name}: {_terms(model, row)} {sense} {float(b)!r}")
    lines.append("Bounds")
    for c in range(model.n_vars):
        lines.append(f" {var_name(model, c)} >= 0")
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_lp_text(model: LpModel, path) -> None:
    Path(path).write_text(lp_text(model), encoding="utf-8")


def dump_solution(sol: LpSolution, path, extra: dict | None = None) -> None:
    rec = sol.to_record()
    if extra:
        rec.update(extra)
    Path(path).write_text(json.dumps(rec, indent=2) + "\n", encoding="utf-8")


def load_solution(inst: CoflowInstance, path) -> LpSolution:
    """Rebuild an :class:`LpSolution` for ``inst`` from a dumped solution file."""
    rec = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        kind, eta, ys = rec["kind"], as_fraction(rec["eta"]), rec["y"]
    except KeyError as exc:
        raise ValueError(f"solution file lacks field {exc}") from None
    grid = build_grid(time_horizon(inst), eta)
    model = build_lp(inst, grid, kind)
    N = inst.N
    x = np.zeros(model.n_vars)
    for e in ys:
        key = VarKey(FlowKey(e["i"], e["j"] + N, e["k"]), e["p"], e["l"])
        if key not in model.var_index:
            raise ValueError(f"solution variable {key} does not belong to this instance's model")
        x[model.var_index[key]] = float(e["value"])
    if kind == WCT:
        for k in range(1, inst.n + 1):
            x[model.n_y + model.aux_names.index(f"C_{k}")] = float(rec["C"][str(k)])
    else:
        x[model.n_y + model.aux_names.index("Cmax")] = float(rec["C"]["max"])
    return _solution(model, x, float(rec["objective"]), False, 0)
