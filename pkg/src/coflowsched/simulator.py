"""Preemptive list scheduling of an assignment on the parallel switch cores.

Each core runs its own event loop.  At every release or completion the
active set is rebuilt from scratch: released, unfinished flows are scanned in
priority order and a flow is switched on when neither its input nor its
output port is already claimed on that core.  Active flows drain at the core
speed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .instance import CoflowInstance, FlowKey, as_fraction
from .rounding import Assignment

TIME_TOL = 1e-9
ACTIONS = ("release", "start", "pause", "finish")
_ORDER = {"release": 0, "finish": 1, "pause": 2, "start": 3}


class ScheduleError(RuntimeError):
    """Internal consistency failure while simulating."""


@dataclass(frozen=True)
class TraceEvent:
    t: float | Fraction
    core: int
    flow: FlowKey
    action: str

    def to_record(self, N: int) -> dict:
        f = self.flow
        return {"t": _out(self.t), "core": self.core, "flow": [f.src, f.dst - N, f.coflow], "action": self.action}


@dataclass(frozen=True)
class Segment:
    core: int
    flow: FlowKey
    start: float | Fraction
    end: float | Fraction


@dataclass
class Schedule:
    completion: dict[FlowKey, float | Fraction]
    trace: list[TraceEvent]
    segments: list[Segment]
    exact: bool
    coflow_completion: dict[int, float | Fraction] = field(init=False)

    def __post_init__(self):
        self.coflow_completion = {}
        for f, c in self.completion.items():
            k = f.coflow
            if k not in self.coflow_completion or c > self.coflow_completion[k]:
                self.coflow_completion[k] = c

    @property
    def makespan(self):
        return max(self.coflow_completion.values())

    def summary(self, inst: CoflowInstance) -> dict:
        obj = objective_values(self, inst)
        return {
            "C": {str(k): _out(c) for k, c in sorted(self.coflow_completion.items())},
            "makespan": _out(obj["makespan"]),
            "wct": _out(obj["wct"]),
        }

    def trace_jsonl(self, N: int) -> str:
        return "".join(json.dumps(ev.to_record(N)) + "\n" for ev in self.trace)


def _out(x):
    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else float(x)
    return float(x)


def objective_values(schedule: Schedule, inst: CoflowInstance) -> dict:
    wct = sum(
        (inst.weight(k) if schedule.exact else float(inst.weight(k))) * c
        for k, c in schedule.coflow_completion.items()
    )
    return {"wct": wct, "makespan": schedule.makespan}


def _select(candidates: list[FlowKey]) -> list[FlowKey]:
    """First-fit in priority order: a flow goes live if both its ports are free."""
    used_in, used_out, chosen = set(), set(), []
    for f in candidates:
        if f.src not in used_in and f.dst not in used_out:
            used_in.add(f.src)
            used_out.add(f.dst)
            chosen.append(f)
    return chosen


def _check_cover(inst: CoflowInstance, assignment: Assignment):
    missing = [f for f in inst.flows if f not in assignment.choice]
    if missing:
        raise ValueError(f"assignment misses flows {missing}")


def list_schedule(inst: CoflowInstance, assignment: Assignment, exact: bool = False) -> Schedule:
    """Event-driven execution of ``assignment``; ``exact`` keeps all times rational."""
    _check_cover(inst, assignment)
    conv = as_fraction if exact else float
    tol = 0 if exact else TIME_TOL
    completion: dict[FlowKey, float | Fraction] = {}
    trace: list[tuple] = []
    segments: list[Segment] = []

    for p in range(1, inst.m + 1):
        order = assignment.core_flows(p)
        if not order:
            continue
        speed = conv(inst.speed(p))
        release = {f: conv(inst.release(f.coflow)) for f in order}
        remaining = {f: conv(inst.size(f)) for f in order}
        rank = {f: n for n, f in enumerate(order)}
        for f in order:
            trace.append((release[f], p, 0, rank[f], f, "release"))
        pending_releases = sorted(set(release.values()))
        now = pending_releases[0]
        active: list[FlowKey] = []
        open_seg: dict[FlowKey, object] = {}
        left = len(order)
        while left:
            ready = [f for f in order if remaining[f] > 0 and release[f] <= now + tol]
            chosen = _select(ready)
            chosen_set = set(chosen)
            for f in active:
                if f not in chosen_set:
                    trace.append((now, p, 2, rank[f], f, "pause"))
                    segments.append(Segment(p, f, open_seg.pop(f), now))
            for f in chosen:
                if f not in open_seg:
                    trace.append((now, p, 3, rank[f], f, "start"))
                    open_seg[f] = now
            active = chosen
            upcoming = [r for r in pending_releases if r > now + tol]
            if not active:
                if not upcoming:
                    raise ScheduleError(f"core {p}: unfinished flows but nothing can run at {now}")
                now = upcoming[0]
                continue
            step = min(remaining[f] / speed for f in active)
            t_next = now + step
            if upcoming and upcoming[0] < t_next - tol:
                t_next = upcoming[0]
            done = []
            for f in active:
                remaining[f] -= speed * (t_next - now)
                if remaining[f] < -tol * max(1.0, float(speed)):
                    raise ScheduleError(f"negative remaining size for {f}")
                if remaining[f] <= tol * max(1.0, float(speed)):
                    remaining[f] = conv(0)
                    done.append(f)
            now = t_next
            for f in done:
                completion[f] = now
                trace.append((now, p, 1, rank[f], f, "finish"))
                segments.append(Segment(p, f, open_seg.pop(f), now))
                left -= 1
            active = [f for f in active if f not in done]
        if open_seg:
            raise ScheduleError(f"core {p}: segments left open")

    # same instant: releases, finishes, pauses, starts; then core, then priority
    trace.sort(key=lambda e: (e[0], e[2], e[1], e[3]))
    events = [TraceEvent(t, p, f, a) for t, p, _, _, f, a in trace]
    segments.sort(key=lambda s: (s.core, s.start, s.end))
    return Schedule(completion, events, segments, exact)


def default_step(inst: CoflowInstance) -> Fraction:
    """Largest step dividing every release and every ``d / s_p``."""
    values = [inst.release(k) for k in range(1, inst.n + 1)]
    values += [Fraction(inst.size(f)) / inst.speed(p) for f in inst.flows for p in range(1, inst.m + 1)]
    num, den = 0, 1
    for v in values:
        v = as_fraction(v)
        num = math.gcd(num, v.numerator)
        den = den * v.denominator // math.gcd(den, v.denominator)
    return Fraction(num, den) if num else Fraction(1)


def reference_unit_step(inst: CoflowInstance, assignment: Assignment, step=None) -> Schedule:
    """Fixed-increment re-implementation of the list schedule, in exact integer ticks."""
    _check_cover(inst, assignment)
    step = default_step(inst) if step is None else as_fraction(step)
    if step <= 0:
        raise ValueError("step must be positive")
    for k in range(1, inst.n + 1):
        if (inst.release(k) / step).denominator != 1:
            raise ValueError(f"step {step} does not divide release {inst.release(k)} of coflow {k}")
    for f in inst.flows:
        for p in range(1, inst.m + 1):
            if (Fraction(inst.size(f)) / inst.speed(p) / step).denominator != 1:
                raise ValueError(f"step {step} does not divide d/s_{p} for flow {f}")

    completion: dict[FlowKey, Fraction] = {}
    trace: list[tuple] = []
    segments: list[Segment] = []
    for p in range(1, inst.m + 1):
        order = assignment.core_flows(p)
        if not order:
            continue
        ticks = {f: int(Fraction(inst.size(f)) / inst.speed(p) / step) for f in order}
        rel = {f: int(inst.release(f.coflow) / step) for f in order}
        rank = {f: n for n, f in enumerate(order)}
        for f in order:
            trace.append((rel[f], p, 0, rank[f], f, "release"))
        running: dict[FlowKey, int] = {}
        tick = min(rel.values())
        while ticks and any(v > 0 for v in ticks.values()):
            ready = [f for f in order if ticks[f] > 0 and rel[f] <= tick]
            chosen = _select(ready)
            if not chosen:
                tick = min(rel[f] for f in order if ticks[f] > 0 and rel[f] > tick)
                continue
            chosen_set = set(chosen)
            for f in list(running):
                if f not in chosen_set:
                    trace.append((tick, p, 2, rank[f], f, "pause"))
                    segments.append(Segment(p, f, running.pop(f) * step, tick * step))
            for f in chosen:
                if f not in running:
                    trace.append((tick, p, 3, rank[f], f, "start"))
                    running[f] = tick
            tick += 1
            for f in chosen:
                ticks[f] -= 1
                if ticks[f] == 0:
                    completion[f] = tick * step
                    trace.append((tick, p, 1, rank[f], f, "finish"))
                    segments.append(Segment(p, f, running.pop(f) * step, tick * step))
    trace.sort(key=lambda e: (e[0], e[2], e[1], e[3]))
    events = [TraceEvent(t * step, p, f, a) for t, p, _, _, f, a in trace]
    segments.sort(key=lambda s: (s.core, s.start, s.end))
    return Schedule(completion, events, segments, True)


@dataclass(frozen=True)
class Violation:
    kind: str
    t: float
    flow: FlowKey | None
    message: str

    def __str__(self):
        return f"[{self.kind}] t={self.t:g} flow={tuple(self.flow) if self.flow else '-'}: {self.message}"


def segments_from_trace(trace: list[TraceEvent]) -> tuple[list[Segment], list[Violation]]:
    """Pair start events with the following pause/finish of the same flow."""
    open_at: dict[FlowKey, tuple[int, object]] = {}
    segs, problems = [], []
    for ev in sorted(trace, key=lambda e: (e.t, _ORDER.get(e.action, 9))):
        if ev.action not in ACTIONS:
            problems.append(Violation("trace", float(ev.t), ev.flow, f"unknown action {ev.action!r}"))
        elif ev.action == "start":
            if ev.flow in open_at:
                problems.append(Violation("trace", float(ev.t), ev.flow, "started while already running"))
            else:
                open_at[ev.flow] = (ev.core, ev.t)
        elif ev.action in ("pause", "finish"):
            if ev.flow not in open_at:
                problems.append(Violation("trace", float(ev.t), ev.flow, f"{ev.action} without a start"))
                continue
            core, t0 = open_at.pop(ev.flow)
            if core != ev.core:
                problems.append(Violation("trace", float(ev.t), ev.flow, "flow migrated between cores"))
            segs.append(Segment(core, ev.flow, t0, ev.t))
    for f, (core, t0) in open_at.items():
        problems.append(Violation("trace", float(t0), f, "transmission never ends"))
    return segs, problems


def _load_trace_events(lines, N: int) -> list[TraceEvent]:
    events = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        i, j, k = rec["flow"]
        events.append(TraceEvent(float(rec["t"]), int(rec["core"]), FlowKey(i, j + N, k), rec["action"]))
    return events


def load_trace(path, N: int) -> list[TraceEvent]:
    return _load_trace_events(Path(path).read_text(encoding="utf-8").splitlines(), N)


def schedule_from_trace(trace: list[TraceEvent], exact: bool = False) -> Schedule:
    """Rebuild a schedule from trace events (float mode unless times are rational)."""
    completion = {ev.flow: ev.t for ev in trace if ev.action == "finish"}
    segs, _ = segments_from_trace(trace)
    return Schedule(completion, list(trace), segs, exact)


def validate_schedule(schedule: Schedule, inst: CoflowInstance, assignment: Assignment) -> list[Violation]:
    """Audit a schedule; an empty list means every check passed.

    The audit works from the trace alone (segments are rebuilt from the
    start/pause/finish events), so it can be run on a trace read from disk.
    """
    tol = 0 if schedule.exact else 1e-7
    segs, out = segments_from_trace(schedule.trace)
    known = set(inst.flows)
    finish = {}
    for ev in schedule.trace:
        if ev.flow not in known:
            out.append(Violation("trace", float(ev.t), ev.flow, "unknown flow"))
        elif ev.action == "finish":
            finish[ev.flow] = ev.t
    segs = [s for s in segs if s.flow in known]

    by_flow: dict[FlowKey, list[Segment]] = {}
    for s in segs:
        by_flow.setdefault(s.flow, []).append(s)
        r = inst.release(s.flow.coflow)
        if s.start < r - tol:
            out.append(Violation("release", float(s.start), s.flow, f"transmits before release {_out(r)}"))
        if s.end < s.start - tol:
            out.append(Violation("trace", float(s.start), s.flow, "segment ends before it starts"))
        p = assignment.core(s.flow)
        if s.core != p:
            out.append(Violation("core", float(s.start), s.flow, f"runs on core {s.core}, assigned {p}"))

    for f in inst.flows:
        if f not in finish:
            out.append(Violation("completion", 0.0, f, "flow never finishes"))
            continue
        speed = inst.speed(assignment.core(f))
        sent = sum(((s.end - s.start) * (speed if schedule.exact else float(speed)) for s in by_flow.get(f, [])), 0)
        d = inst.size(f)
        if abs(sent - d) > tol * max(1, d):
            out.append(Violation("rate", float(finish[f]), f, f"transmitted {_out(sent)} of {d} at rate {_out(speed)}"))
        last = max((s.end for s in by_flow.get(f, [])), default=None)
        if last is None or abs(last - finish[f]) > tol:
            out.append(Violation("completion", float(finish[f]), f, "finish time does not match last transmission"))
        c = schedule.completion.get(f)
        if c is not None and abs(c - finish[f]) > tol:
            out.append(Violation("completion", float(finish[f]), f, f"reported completion {_out(c)} differs from trace"))

    for p in range(1, inst.m + 1):
        core_segs = sorted((s for s in segs if s.core == p), key=lambda s: s.start)
        for a_i, a in enumerate(core_segs):
            for b in core_segs[a_i + 1:]:
                if b.start >= a.end - tol:
                    break
                if a.flow.src == b.flow.src or a.flow.dst == b.flow.dst:
                    if min(a.end, b.end) - max(a.start, b.start) > tol:
                        out.append(
                            Violation("exclusivity", float(max(a.start, b.start)), b.flow, f"shares a port with {tuple(a.flow)}")
                        )
        out.extend(_work_conservation(p, core_segs, inst, assignment, finish, tol))
    return sorted(out, key=lambda v: (v.t, v.kind))


def _work_conservation(p, core_segs, inst, assignment, finish, tol) -> list[Violation]:
    flows = assignment.core_flows(p)
    cuts = {s.start for s in core_segs} | {s.end for s in core_segs}
    cuts |= {inst.release(f.coflow) for f in flows}
    points = sorted(cuts)
    out = []
    for a, b in zip(points, points[1:]):
        if b - a <= tol:
            continue
        live = [s.flow for s in core_segs if s.start <= a + tol and s.end >= b - tol]
        busy_in = {f.src for f in live}
        busy_out = {f.dst for f in live}
        for f in flows:
            if f in live or inst.release(f.coflow) > a + tol or finish.get(f, math.inf) <= a + tol:
                continue
            if f.src not in busy_in and f.dst not in busy_out:
                out.append(Violation("work-conservation", float(a), f, "both ports idle while the flow waits"))
    return out


def save_schedule(schedule: Schedule, inst: CoflowInstance, trace_path, summary_path, extra: dict | None = None) -> None:
    Path(trace_path).write_text(schedule.trace_jsonl(inst.N), encoding="utf-8")
    summary = schedule.summary(inst)
    if extra:
        summary.update(extra)
    Path(summary_path).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
