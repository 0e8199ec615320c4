"""Coflow instances: data model, validation, random generation and JSON I/O.

Ports follow the usual switch indexing: input ports are ``1..N`` and output
ports are ``N+1..2N`` internally.  Instance files store destinations as
``1..N`` and the offset is applied on load/save.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, NamedTuple


class InstanceError(ValueError):
    """Raised when an instance record violates the model invariants."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class FlowKey(NamedTuple):
    src: int
    dst: int
    coflow: int

    def order(self) -> tuple[int, int, int]:
        """Sort key for the total order on flows: coflow, then dst, then src."""
        return (self.coflow, self.dst, self.src)

    def external(self, N: int) -> tuple[int, int, int]:
        return (self.src, self.dst - N, self.coflow)


def as_fraction(value: Any) -> Fraction:
    """Exact rational from an int, Fraction, decimal string or float."""
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a number: {value!r}") from exc
    raise TypeError(f"not a number: {value!r}")


def number_out(x: Fraction) -> int | str:
    """JSON encoding of an exact number: int when integral, else a string."""
    if x.denominator == 1:
        return int(x)
    return str(x)


@dataclass(frozen=True)
class Coflow:
    weight: Fraction
    release: Fraction
    # {(src, dst_internal): size}
    demands: dict[tuple[int, int], int]


@dataclass(frozen=True)
class CoflowInstance:
    N: int
    speeds: tuple[Fraction, ...]
    coflows: tuple[Coflow, ...]
    flows: tuple[FlowKey, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        flows = [
            FlowKey(i, j, k)
            for k, cf in enumerate(self.coflows, start=1)
            for (i, j), d in cf.demands.items()
            if d > 0
        ]
        flows.sort(key=FlowKey.order)
        object.__setattr__(self, "flows", tuple(flows))

    # sizes ------------------------------------------------------------
    @property
    def m(self) -> int:
        return len(self.speeds)

    @property
    def n(self) -> int:
        return len(self.coflows)

    @property
    def s_min(self) -> Fraction:
        return min(self.speeds)

    @property
    def s_max(self) -> Fraction:
        return max(self.speeds)

    def size(self, f: FlowKey) -> int:
        return self.coflows[f.coflow - 1].demands[(f.src, f.dst)]

    def release(self, k: int) -> Fraction:
        return self.coflows[k - 1].release

    def weight(self, k: int) -> Fraction:
        return self.coflows[k - 1].weight

    def speed(self, p: int) -> Fraction:
        return self.speeds[p - 1]

    @property
    def inputs(self) -> range:
        return range(1, self.N + 1)

    @property
    def outputs(self) -> range:
        return range(self.N + 1, 2 * self.N + 1)

    # flow set views ---------------------------------------------------
    def by_src(self, i: int) -> list[FlowKey]:
        return [f for f in self.flows if f.src == i]

    def by_dst(self, j: int) -> list[FlowKey]:
        return [f for f in self.flows if f.dst == j]

    def by_coflow(self, k: int) -> list[FlowKey]:
        return [f for f in self.flows if f.coflow == k]

    def port_sharers(self, f: FlowKey) -> list[FlowKey]:
        """Flows other than ``f`` that use its input or its output port."""
        return [g for g in self.flows if g != f and (g.src == f.src or g.dst == f.dst)]

    # aggregate loads --------------------------------------------------
    def input_load(self, i: int, k: int) -> int:
        return sum(d for (a, _), d in self.coflows[k - 1].demands.items() if a == i)

    def output_load(self, j: int, k: int) -> int:
        return sum(d for (_, b), d in self.coflows[k - 1].demands.items() if b == j)

    def max_input_load(self) -> int:
        return max(sum(self.input_load(i, k) for k in range(1, self.n + 1)) for i in self.inputs)

    def max_output_load(self) -> int:
        return max(sum(self.output_load(j, k) for k in range(1, self.n + 1)) for j in self.outputs)

    @property
    def has_releases(self) -> bool:
        return any(cf.release > 0 for cf in self.coflows)

    def with_zero_releases(self) -> "CoflowInstance":
        return CoflowInstance(
            self.N,
            self.speeds,
            tuple(Coflow(cf.weight, Fraction(0), dict(cf.demands)) for cf in self.coflows),
        )

    def scaled_weights(self, c) -> "CoflowInstance":
        c = as_fraction(c)
        return CoflowInstance(
            self.N,
            self.speeds,
            tuple(Coflow(cf.weight * c, cf.release, dict(cf.demands)) for cf in self.coflows),
        )

    # serialization ----------------------------------------------------
    def to_record(self) -> dict:
        return {
            "N": self.N,
            "cores": [{"speed": number_out(s)} for s in self.speeds],
            "coflows": [
                {
                    "weight": number_out(cf.weight),
                    "release": number_out(cf.release),
                    "flows": [
                        {"src": i, "dst": j - self.N, "size": d}
                        for (i, j), d in sorted(cf.demands.items(), key=lambda e: (e[0][1], e[0][0]))
                    ],
                }
                for cf in self.coflows
            ],
        }


def time_horizon(inst: CoflowInstance) -> Fraction:
    """Packing horizon: latest release plus both worst port loads at the slowest core, minus one."""
    max_r = max(cf.release for cf in inst.coflows)
    return max_r + Fraction(inst.max_input_load() + inst.max_output_load()) / inst.s_min - 1


_TOP_KEYS = {"N", "cores", "coflows"}
_CORE_KEYS = {"speed"}
_COFLOW_KEYS = {"weight", "release", "flows"}
_FLOW_KEYS = {"src", "dst", "size"}


def _check_keys(obj: Any, allowed: set[str], where: str, problems: list[str]) -> bool:
    if not isinstance(obj, dict):
        problems.append(f"{where}: expected an object")
        return False
    extra = sorted(set(obj) - allowed)
    if extra:
        problems.append(f"{where}: unknown field(s) {', '.join(extra)}")
    missing = sorted(allowed - set(obj))
    if missing:
        problems.append(f"{where}: missing field(s) {', '.join(missing)}")
        return False
    return True


def _num(value: Any, where: str, problems: list[str]) -> Fraction | None:
    try:
        return as_fraction(value)
    except (TypeError, ValueError) as exc:
        problems.append(f"{where}: {exc}")
        return None


def validate(raw: dict) -> CoflowInstance:
    """Turn a raw instance record (external dst indexing) into a CoflowInstance.

    Every violated invariant is collected and reported together in an
    :class:`InstanceError`.
    """
    problems: list[str] = []
    if not _check_keys(raw, _TOP_KEYS, "instance", problems):
        raise InstanceError(problems)

    N = raw["N"]
    if not isinstance(N, int) or isinstance(N, bool) or N < 1:
        problems.append(f"N must be a positive integer, got {N!r}")
        raise InstanceError(problems)

    speeds: list[Fraction] = []
    cores = raw["cores"]
    if not isinstance(cores, list) or not cores:
        problems.append("cores: need at least one core")
    else:
        for p, core in enumerate(cores, start=1):
            if not _check_keys(core, _CORE_KEYS, f"core {p}", problems):
                continue
            s = _num(core["speed"], f"core {p} speed", problems)
            if s is None:
                continue
            if s <= 0:
                problems.append(f"core {p}: speed must be positive, got {s}")
            speeds.append(s)

    coflows: list[Coflow] = []
    raw_coflows = raw["coflows"]
    if not isinstance(raw_coflows, list) or not raw_coflows:
        problems.append("coflows: need at least one coflow")
        raw_coflows = []
    pending: list[tuple[int, int, int, Fraction]] = []
    for k, rc in enumerate(raw_coflows, start=1):
        if not _check_keys(rc, _COFLOW_KEYS, f"coflow {k}", problems):
            continue
        w = _num(rc["weight"], f"coflow {k} weight", problems)
        r = _num(rc["release"], f"coflow {k} release", problems)
        if w is not None and w <= 0:
            problems.append(f"coflow {k}: weight must be positive, got {w}")
        if r is not None and r < 0:
            problems.append(f"coflow {k}: release must be nonnegative, got {r}")
        demands: dict[tuple[int, int], int] = {}
        if not isinstance(rc["flows"], list):
            problems.append(f"coflow {k}: flows must be a list")
            continue
        for n_f, rf in enumerate(rc["flows"], start=1):
            where = f"coflow {k} flow {n_f}"
            if not _check_keys(rf, _FLOW_KEYS, where, problems):
                continue
            i, j = rf["src"], rf["dst"]
            bad_port = False
            for name, v in (("src", i), ("dst", j)):
                if not isinstance(v, int) or isinstance(v, bool) or not 1 <= v <= N:
                    problems.append(f"{where}: {name} port {v!r} out of range 1..{N}")
                    bad_port = True
            d = _num(rf["size"], f"{where} size", problems)
            if bad_port or d is None:
                continue
            key = (i, j + N)
            if d.denominator != 1:
                problems.append(f"{where} ({i},{j},{k}): demand must be integer, got {d}")
                continue
            if d < 0:
                problems.append(f"{where} ({i},{j},{k}): demand must be nonnegative, got {d}")
                continue
            if key in demands:
                problems.append(f"{where} ({i},{j},{k}): duplicate flow")
                continue
            if d > 0:
                demands[key] = int(d)
                pending.append((i, j, k, d))
        if w is not None and r is not None:
            coflows.append(Coflow(w, r, demands))

    if speeds and all(s > 0 for s in speeds):
        s_max = max(speeds)
        for i, j, k, d in pending:
            if d / s_max < 1:
                problems.append(
                    f"flow ({i},{j},{k}): d/s_max = {float(d / s_max):g} < 1"
                )
    if raw_coflows and not pending:
        problems.append("instance has no positive flow")

    if problems:
        raise InstanceError(problems)
    return CoflowInstance(N, tuple(speeds), tuple(coflows))


def loads(text: str) -> CoflowInstance:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError([f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}"]) from exc
    return validate(raw)


def dumps(inst: CoflowInstance) -> str:
    return json.dumps(inst.to_record(), indent=2) + "\n"


def load(path) -> CoflowInstance:
    return loads(Path(path).read_text(encoding="utf-8"))


def save(inst: CoflowInstance, path) -> None:
    Path(path).write_text(dumps(inst), encoding="utf-8")


def _int_range(rng: Iterable, name: str) -> tuple[int, int]:
    lo, hi = rng
    if lo > hi:
        raise ValueError(f"{name}: empty range [{lo}, {hi}]")
    return int(lo), int(hi)


def generate_random(
    N: int,
    m: int,
    n: int,
    speed_set: Iterable,
    size_range: tuple[int, int],
    release_range: tuple[int, int] = (0, 0),
    weight_range: tuple[int, int] = (1, 1),
    seed: int = 0,
    density: float = 0.5,
    speeds: Iterable | None = None,
) -> CoflowInstance:
    """Random instance, a pure function of its arguments.

    Core speeds are drawn with replacement from ``speed_set``; every
    ``(src, dst)`` pair of a coflow carries a flow with probability
    ``density`` (at least one flow per coflow is forced).  Sizes, integer
    releases and integer weights are uniform over their inclusive ranges.
    Passing ``speeds`` fixes the cores instead of drawing them.
    """
    speed_set = sorted(as_fraction(s) for s in speed_set)
    if not speed_set or N < 1 or m < 1 or n < 1:
        raise ValueError("need N, m, n >= 1 and a nonempty speed set")
    if any(s <= 0 for s in speed_set):
        raise ValueError("speeds must be positive")
    size_lo, size_hi = _int_range(size_range, "size_range")
    rel_lo, rel_hi = _int_range(release_range, "release_range")
    w_lo, w_hi = _int_range(weight_range, "weight_range")
    top = speed_set[-1] if speeds is None else max(as_fraction(v) for v in speeds)
    if size_lo < top:
        raise ValueError(f"size_range minimum {size_lo} < max speed {top} (need d/s_max >= 1)")
    if rel_lo < 0 or w_lo <= 0:
        raise ValueError("releases must be >= 0 and weights > 0")
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")

    rng = random.Random(seed)
    if speeds is None:
        speeds = tuple(rng.choice(speed_set) for _ in range(m))
    else:
        speeds = tuple(as_fraction(v) for v in speeds)
        if len(speeds) != m or any(v <= 0 for v in speeds):
            raise ValueError("speeds must list m positive values")
    coflows = []
    pairs = [(i, j) for i in range(1, N + 1) for j in range(N + 1, 2 * N + 1)]
    for _ in range(n):
        chosen = [pq for pq in pairs if rng.random() < density]
        if not chosen:
            chosen = [rng.choice(pairs)]
        demands = {pq: rng.randint(size_lo, size_hi) for pq in chosen}
        coflows.append(
            Coflow(
                Fraction(rng.randint(w_lo, w_hi)),
                Fraction(rng.randint(rel_lo, rel_hi)),
                demands,
            )
        )
    return CoflowInstance(N, speeds, tuple(coflows))


def random_batch(
    count: int,
    seed: int = 0,
    max_ports: int = 4,
    max_cores: int = 3,
    max_coflows: int = 5,
    speed_set: Iterable = (1, 2, 3),
    size_factor: int = 10,
    release_max: int = 0,
    density: float = 0.5,
) -> list[tuple[str, CoflowInstance]]:
    """Seeded family of small instances with sizes in ``[s_max, size_factor * s_max]``.

    Shape (ports, cores, coflows) and core speeds are drawn per instance;
    ``release_max = 0`` gives zero releases.  Instance ``n`` of a batch is
    the same for every ``count``.
    """
    speed_set = sorted(int(s) for s in speed_set)
    out = []
    for idx in range(count):
        rng = random.Random(f"{seed}:{idx}")
        N = rng.randint(1, max_ports)
        m = rng.randint(1, max_cores)
        n = rng.randint(1, max_coflows)
        speeds = [rng.choice(speed_set) for _ in range(m)]
        top = max(speeds)
        inst = generate_random(
            N, m, n, speed_set, (top, size_factor * top), (0, release_max), (1, 5),
            seed=rng.randrange(2**31), density=density, speeds=speeds,
        )
        out.append((f"s{seed}-{idx:03d}", inst))
    return out
