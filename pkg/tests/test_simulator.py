import json
import random
from fractions import Fraction

import pytest
from conftest import shared_port, single_flow, solved
from hypothesis import given, settings
from hypothesis import strategies as st

from coflowsched.instance import CoflowInstance, generate_random, validate
from coflowsched.rounding import DETERMINISTIC, RANDOMIZED, Assignment, derandomize_wct
from coflowsched.simulator import (
    Schedule,
    TraceEvent,
    default_step,
    list_schedule,
    load_trace,
    objective_values,
    reference_unit_step,
    save_schedule,
    schedule_from_trace,
    validate_schedule,
)
from coflowsched.timegrid import build_grid, priority_stamp


def fixed_assignment(inst, pairs=None, tiebreak=None):
    pairs = pairs or {f: (1, 0) for f in inst.flows}
    mode = RANDOMIZED if tiebreak is not None else DETERMINISTIC
    return Assignment(inst, pairs, {f: Fraction(0) for f in inst.flows}, mode, tiebreak)


def random_assignment(inst, seed, randomized=False):
    rng = random.Random(seed)
    grid = build_grid(50, 1)
    choice = {f: (rng.randint(1, inst.m), rng.randint(0, 4)) for f in inst.flows}
    stamp = {f: priority_stamp(grid, l) for f, (_, l) in choice.items()}
    tiebreak = {f: rng.random() for f in inst.flows} if randomized else None
    return Assignment(inst, choice, stamp, RANDOMIZED if randomized else DETERMINISTIC, tiebreak)


def random_instance(seed, rmax=5):
    rng = random.Random(seed)
    return generate_random(rng.randint(1, 4), rng.randint(1, 3), rng.randint(1, 4), [1, 2, 3], (3, 12), (0, rmax), (1, 4), seed=seed)


def test_lone_flow():
    inst = validate(single_flow(size=3))
    s = list_schedule(inst, fixed_assignment(inst), exact=True)
    assert s.completion[inst.flows[0]] == 3 and s.makespan == 3


def test_shared_input_port_runs_in_order():
    inst = validate(shared_port())
    a, b = inst.flows
    s = list_schedule(inst, fixed_assignment(inst), exact=True)
    assert (s.completion[a], s.completion[b], s.coflow_completion[1]) == (2, 5, 5)
    ref = reference_unit_step(inst, fixed_assignment(inst), Fraction(1, 2))
    assert ref.completion == s.completion


def test_disjoint_ports_run_together():
    rec = {"N": 2, "cores": [{"speed": 2}],
           "coflows": [{"weight": 1, "release": 0, "flows": [{"src": 1, "dst": 1, "size": 4}, {"src": 2, "dst": 2, "size": 6}]}]}
    inst = validate(rec)
    s = list_schedule(inst, fixed_assignment(inst), exact=True)
    assert [s.completion[f] for f in inst.flows] == [2, 3]
    starts = [ev for ev in s.trace if ev.action == "start"]
    assert [ev.t for ev in starts] == [0, 0]


def test_higher_priority_release_preempts():
    rec = {"N": 1, "cores": [{"speed": 1}],
           "coflows": [{"weight": 1, "release": 0, "flows": [{"src": 1, "dst": 1, "size": 4}]},
                       {"weight": 1, "release": 1, "flows": [{"src": 1, "dst": 1, "size": 2}]}]}
    inst = validate(rec)
    low, high = inst.flows
    a = Assignment(inst, {low: (1, 2), high: (1, 0)}, {low: Fraction(2), high: Fraction(0)}, DETERMINISTIC)
    s = list_schedule(inst, a, exact=True)
    assert s.completion[high] == 3 and s.completion[low] == 6
    assert [(ev.t, ev.action) for ev in s.trace if ev.flow == low] == [(0, "release"), (0, "start"), (1, "pause"), (3, "start"), (6, "finish")]
    assert validate_schedule(s, inst, a) == []


def test_objective_values_single_flow(tiny_sol, tiny):
    a, _ = derandomize_wct(tiny_sol)
    obj = objective_values(list_schedule(tiny, a, exact=True), tiny)
    assert obj == {"wct": 2, "makespan": 2}


def test_doubling_weights_doubles_wct():
    inst = random_instance(3)
    a = random_assignment(inst, 3)
    s1 = objective_values(list_schedule(inst, a, exact=True), inst)
    inst2 = inst.scaled_weights(2)
    a2 = Assignment(inst2, a.choice, a.stamp, a.mode)
    s2 = objective_values(list_schedule(inst2, a2, exact=True), inst2)
    assert s2["wct"] == 2 * s1["wct"] and s2["makespan"] == s1["makespan"]


def test_missing_flow_rejected(tiny):
    a = fixed_assignment(tiny)
    a.choice.clear()
    with pytest.raises(ValueError):
        list_schedule(tiny, a)


def test_step_must_divide_data():
    inst = validate(shared_port())
    with pytest.raises(ValueError, match="does not divide"):
        reference_unit_step(inst, fixed_assignment(inst), Fraction(2, 3))
    assert default_step(inst) == 1


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**7), st.booleans())
def test_event_engine_equals_unit_step(seed, randomized):
    inst = random_instance(seed)
    a = random_assignment(inst, seed, randomized)
    ev = list_schedule(inst, a, exact=True)
    ref = reference_unit_step(inst, a)
    assert ev.completion == ref.completion
    assert [(e.t, e.core, e.flow, e.action) for e in ev.trace] == [(e.t, e.core, e.flow, e.action) for e in ref.trace]


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**7), st.booleans())
def test_schedules_pass_validation_and_bounds(seed, randomized):
    inst = random_instance(seed)
    a = random_assignment(inst, seed, randomized)
    s = list_schedule(inst, a, exact=True)
    assert validate_schedule(s, inst, a) == []
    fl = list_schedule(inst, a, exact=False)
    assert validate_schedule(fl, inst, a) == []
    for f in inst.flows:
        assert float(fl.completion[f]) == pytest.approx(float(s.completion[f]), abs=1e-9)
        r = inst.release(f.coflow)
        assert s.completion[f] >= r + min(inst.size(f) / inst.speed(p) for p in range(1, inst.m + 1))
        # a flow waits only for port sharers ahead of it on its own core
        p = a.core(f)
        ahead = [h for h in a.core_flows(p) if h != f and a.priority(h) < a.priority(f) and (h.src == f.src or h.dst == f.dst)]
        assert s.completion[f] <= r + (inst.size(f) + sum(inst.size(h) for h in ahead)) / inst.speed(p)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**7))
def test_busy_window_starts_by_release(seed):
    inst = random_instance(seed)
    a = random_assignment(inst, seed)
    s = list_schedule(inst, a, exact=True)
    for k in range(1, inst.n + 1):
        last = max(inst.by_coflow(k), key=lambda f: s.completion[f])
        p = a.core(last)
        busy = sorted(
            (seg.start, seg.end) for seg in s.segments
            if seg.core == p and (seg.flow.src == last.src or seg.flow.dst == last.dst)
        )
        # walk back from C_k over contiguous busy time on port i or j
        tau = s.completion[last]
        for start, end in sorted(busy, key=lambda x: -x[1]):
            if end >= tau and start < tau:
                tau = start
        assert tau <= inst.release(k)


@pytest.mark.parametrize("c", [Fraction(2), Fraction(1, 3)])
def test_speed_time_duality(c):
    inst = random_instance(12)
    a = random_assignment(inst, 12)
    scaled = CoflowInstance(
        inst.N,
        tuple(s * c for s in inst.speeds),
        tuple(type(cf)(cf.weight, cf.release / c, cf.demands) for cf in inst.coflows),
    )
    b = Assignment(scaled, a.choice, a.stamp, a.mode)
    s1 = list_schedule(inst, a, exact=True)
    s2 = list_schedule(scaled, b, exact=True)
    assert all(s2.completion[f] == s1.completion[f] / c for f in inst.flows)


def _two_flow_trace(inst, overlap):
    a, b = inst.flows
    second_start = 1 if overlap else 2
    events = [
        TraceEvent(0, 1, a, "release"), TraceEvent(0, 1, b, "release"),
        TraceEvent(0, 1, a, "start"), TraceEvent(2, 1, a, "finish"),
        TraceEvent(second_start, 1, b, "start"), TraceEvent(second_start + 3, 1, b, "finish"),
    ]
    return schedule_from_trace(events, exact=True)


def test_validation_flags_port_overlap():
    inst = validate(shared_port())
    problems = validate_schedule(_two_flow_trace(inst, overlap=True), inst, fixed_assignment(inst))
    assert any(p.kind == "exclusivity" and p.t == 1 for p in problems)
    assert validate_schedule(_two_flow_trace(inst, overlap=False), inst, fixed_assignment(inst)) == []


def test_validation_flags_idle_port():
    inst = validate(shared_port())
    a, b = inst.flows
    events = [
        TraceEvent(0, 1, a, "start"), TraceEvent(2, 1, a, "finish"),
        TraceEvent(3, 1, b, "start"), TraceEvent(6, 1, b, "finish"),
    ]
    problems = validate_schedule(schedule_from_trace(events, exact=True), inst, fixed_assignment(inst))
    kinds = {(p.kind, p.t, p.flow) for p in problems}
    assert ("work-conservation", 2, b) in kinds


def test_validation_flags_early_start_and_short_transfer():
    inst = validate(single_flow(release=2, size=4))
    f = inst.flows[0]
    events = [TraceEvent(1, 1, f, "start"), TraceEvent(4, 1, f, "finish")]
    kinds = {p.kind for p in validate_schedule(schedule_from_trace(events, exact=True), inst, fixed_assignment(inst))}
    assert {"release", "rate"} <= kinds


def test_trace_and_summary_files(tmp_path):
    inst = validate(shared_port())
    a = fixed_assignment(inst)
    s = list_schedule(inst, a, exact=True)
    save_schedule(s, inst, tmp_path / "t.jsonl", tmp_path / "s.json")
    lines = [json.loads(x) for x in (tmp_path / "t.jsonl").read_text().splitlines()]
    assert {"t": 2, "core": 1, "flow": [1, 1, 1], "action": "finish"} in lines
    assert json.loads((tmp_path / "s.json").read_text()) == {"C": {"1": 5}, "makespan": 5, "wct": 5}
    back = schedule_from_trace(load_trace(tmp_path / "t.jsonl", inst.N))
    assert validate_schedule(back, inst, a) == []
    assert isinstance(back, Schedule) and back.makespan == 5
