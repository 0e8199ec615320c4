"""End-to-end chain: grid, LP, rounding, simulation, ratio."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from . import __version__
from .instance import CoflowInstance, as_fraction, time_horizon
from .lp import MAKESPAN, WCT, LpSolution, audit, build_lp, solve
from .rounding import (
    DETERMINISTIC,
    RANDOMIZED,
    Assignment,
    EstimatorReport,
    derandomize_makespan,
    derandomize_wct,
    eta_from_epsilon,
    sample_assignment,
)
from .simulator import Schedule, list_schedule, objective_values
from .timegrid import IntervalGrid, build_grid

MODES = {"det": DETERMINISTIC, "rand": RANDOMIZED, DETERMINISTIC: DETERMINISTIC, RANDOMIZED: RANDOMIZED}
RATIO_TOL = 1e-9


@dataclass(frozen=True)
class RunConfig:
    objective: str = WCT
    mode: str = DETERMINISTIC
    epsilon: float = 1.0
    seed: int = 0
    arithmetic: str = "float"
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.objective not in (WCT, MAKESPAN):
            raise ValueError(f"objective must be wct or makespan, got {self.objective!r}")
        object.__setattr__(self, "mode", normalize_mode(self.mode))
        if self.arithmetic not in ("float", "exact"):
            raise ValueError(f"arithmetic must be float or exact, got {self.arithmetic!r}")
        if as_fraction(self.epsilon) <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def eta(self) -> Fraction:
        return eta_from_epsilon(self.epsilon, self.mode)

    @property
    def exact(self) -> bool:
        return self.arithmetic == "exact"

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["epsilon"] = float(as_fraction(self.epsilon))
        rec["eta"] = float(self.eta)
        rec["version"] = __version__
        return rec


def normalize_mode(mode: str) -> str:
    try:
        return MODES[mode]
    except KeyError:
        raise ValueError(f"mode must be det or rand, got {mode!r}") from None


def bound_for(objective: str, epsilon, has_releases: bool) -> float:
    """Guaranteed ratio: 2+eps without releases, 3+eps with releases (WCT)."""
    eps = float(as_fraction(epsilon))
    if objective == WCT and has_releases:
        return 3.0 + eps
    return 2.0 + eps


@dataclass
class PipelineResult:
    inst: CoflowInstance
    config: RunConfig
    grid: IntervalGrid
    solution: LpSolution
    assignment: Assignment
    schedule: Schedule
    estimator: EstimatorReport | None
    lp_value: float
    alg_value: float
    seconds: float

    @property
    def ratio(self) -> float:
        return self.alg_value / self.lp_value

    @property
    def bound(self) -> float:
        return bound_for(self.config.objective, self.config.epsilon, self.inst.has_releases)

    @property
    def passed(self) -> bool:
        return self.ratio <= self.bound + RATIO_TOL


def solve_lp(inst: CoflowInstance, config: RunConfig) -> tuple[IntervalGrid, LpSolution]:
    grid = build_grid(time_horizon(inst), config.eta)
    return grid, solve(build_lp(inst, grid, config.objective), exact=config.exact)


def round_solution(sol: LpSolution, config: RunConfig) -> tuple[Assignment, EstimatorReport | None]:
    if config.mode == RANDOMIZED:
        return sample_assignment(sol, config.seed, config.epsilon), None
    if config.objective == WCT:
        return derandomize_wct(sol, config.epsilon)
    return derandomize_makespan(sol, config.epsilon)


def lp_value(sol: LpSolution) -> float:
    return float(sol.objective)


def run_pipeline(inst: CoflowInstance, config: RunConfig) -> PipelineResult:
    t0 = time.perf_counter()
    grid, sol = solve_lp(inst, config)
    report = audit(sol.model, sol.x)
    if not report.ok:
        raise AssertionError(f"LP solution failed its audit: {report}")
    assignment, est = round_solution(sol, config)
    sched = list_schedule(inst, assignment, exact=config.exact)
    alg = float(objective_values(sched, inst)[config.objective])
    return PipelineResult(inst, config, grid, sol, assignment, sched, est, lp_value(sol), alg, time.perf_counter() - t0)
