import dataclasses
from fractions import Fraction

import highspy
import numpy as np
import pytest
from conftest import shared_port, single_flow, solved
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from coflowsched.instance import FlowKey, generate_random, time_horizon, validate
from coflowsched.lp import (
    MAKESPAN,
    WCT,
    LpError,
    audit,
    build_lp,
    build_makespan_lp,
    build_wct_lp,
    dump_solution,
    export_lp_text,
    f_coefficient,
    lp_text,
    load_solution,
    solve,
)
from coflowsched.timegrid import build_grid

TWO_BY_TWO = {
    "N": 2,
    "cores": [{"speed": 1}, {"speed": 2}],
    "coflows": [{"weight": 1, "release": 0, "flows": [{"src": 1, "dst": 1, "size": 2}, {"src": 2, "dst": 2, "size": 4}]}],
}


def test_f_coefficient_examples():
    inst = validate({"N": 1, "cores": [{"speed": 2}], "coflows": [{"weight": 1, "release": 0, "flows": [{"src": 1, "dst": 1, "size": 4}]}]})
    f = inst.flows[0]
    assert f_coefficient(inst, f, 1, 2, build_grid(7, 1)) == 3
    tiny = validate(single_flow())
    assert f_coefficient(tiny, tiny.flows[0], 1, 0, build_grid(3, 1)) == Fraction(3, 4)
    same = validate(single_flow(size=2, speed=2))
    assert f_coefficient(same, same.flows[0], 1, 0, build_grid(3, 1)) == 1


def test_counts_two_by_two():
    inst = validate(TWO_BY_TWO)
    grid = build_grid(time_horizon(inst), 1)
    assert grid.L == 3
    model = build_wct_lp(inst, grid)
    assert model.n_y == 16 and model.n_vars == 17
    assert [model.row_count(p) for p in ("demand_", "in_", "out_", "link_")] == [2, 16, 16, 2]


def test_counts_single_flow():
    inst = validate(single_flow())
    grid = build_grid(time_horizon(inst), 1)
    for kind in (WCT, MAKESPAN):
        model = build_lp(inst, grid, kind)
        assert model.n_y == 3 and model.n_vars == 4
        assert [model.row_count(p) for p in ("demand_", "in_", "out_", "link_")] == [1, 3, 3, 1]
    assert build_makespan_lp(inst, grid).aux_names == ["Cmax"]


def test_late_release_leaves_only_last_interval():
    rec = single_flow(release=3, size=1)
    inst = validate(rec)
    grid = build_grid(7, 1)  # L = 3; notational lefts 1/2, 1, 2, 4
    model = build_wct_lp(inst, grid)
    assert {v.interval for v in model.var_keys} == {3}
    assert model.n_y == inst.m


@pytest.mark.parametrize("kind", [WCT, MAKESPAN])
def test_single_flow_optimum(kind, tiny):
    sol = solved(tiny, 1, kind)
    assert float(sol.objective) == pytest.approx(1.75, abs=1e-6)
    assert [float(v) for v in sol.Y[0, 0]] == pytest.approx([1, 1, 0])
    exact = solved(tiny, 1, kind, exact=True)
    assert exact.objective == Fraction(7, 4)


def test_resolve_is_deterministic():
    inst = generate_random(3, 2, 3, [1, 2], (2, 12), (0, 3), (1, 4), seed=11)
    a = solved(inst, Fraction(1, 2))
    b = solved(inst, Fraction(1, 2))
    assert a.objective == b.objective
    assert np.array_equal(a.x, b.x)


def test_wct_and_makespan_share_capacity_and_demand_rows():
    inst = generate_random(3, 2, 3, [1, 2], (2, 12), (0, 3), (1, 4), seed=3)
    grid = build_grid(time_horizon(inst), 1)
    w, mk = build_wct_lp(inst, grid), build_makespan_lp(inst, grid)
    for a, b, name in zip(w.rows, mk.rows, w.row_names):
        if not name.startswith("link_"):
            assert a == b


def _instances():
    return st.builds(
        lambda seed, rmax: generate_random(3, 2, 3, [1, 2, 3], (3, 15), (0, rmax), (1, 5), seed=seed),
        st.integers(0, 10**6),
        st.integers(0, 4),
    )


@settings(max_examples=25, deadline=None)
@given(_instances(), st.sampled_from([WCT, MAKESPAN]), st.sampled_from([Fraction(1, 2), Fraction(1)]))
def test_solution_audit_and_linking(inst, kind, eta):
    sol = solved(inst, eta, kind)
    rep = audit(sol.model, sol.x)
    assert rep.max_prob_sum_error <= 1e-7 and rep.max_capacity <= 1 + 1e-7 and rep.ok
    for f in inst.flows:
        assert sum(sol.probabilities(f).values()) == pytest.approx(1, abs=1e-9)
    comp = sol.lp_completion
    if kind == WCT:
        for k, ck in sol.lp_coflow.items():
            # w_k > 0 so the completion variable is tight at the latest flow
            assert max(comp[f] for f in inst.by_coflow(k)) == pytest.approx(float(ck), abs=1e-7)
    else:
        assert max(comp.values()) == pytest.approx(float(sol.lp_makespan), abs=1e-7)


@settings(max_examples=15, deadline=None)
@given(_instances(), st.sampled_from([WCT, MAKESPAN]))
def test_agrees_with_highs(inst, kind):
    sol = solved(inst, Fraction(1, 2), kind)
    m = sol.model
    A = np.zeros((len(m.rows), m.n_vars))
    for r, row in enumerate(m.rows):
        for c, a in row:
            A[r, c] = float(a)
    eq = [r for r, s in enumerate(m.senses) if s == "="]
    ub = [r for r, s in enumerate(m.senses) if s == "<="]
    b = np.array([float(v) for v in m.rhs])
    ref = linprog([float(v) for v in m.objective], A_ub=A[ub], b_ub=b[ub], A_eq=A[eq], b_eq=b[eq], method="highs")
    assert float(sol.objective) == pytest.approx(ref.fun, rel=1e-8)


def test_weight_scaling():
    inst = generate_random(3, 2, 3, [1, 2], (2, 12), (0, 3), (1, 4), seed=5)
    base = solved(inst, 1)
    scaled = solved(inst.scaled_weights(3), 1)
    assert float(scaled.objective) == pytest.approx(3 * float(base.objective), rel=1e-9)
    # the old optimum stays optimal: its y with the scaled weights reaches the same value
    w = [3 * float(inst.weight(k)) for k in range(1, inst.n + 1)]
    assert sum(wk * float(c) for wk, c in zip(w, base.lp_coflow.values())) == pytest.approx(float(scaled.objective), rel=1e-9)


def test_lp_export_roundtrip_with_highs(tmp_path, tiny):
    model = build_wct_lp(tiny, build_grid(time_horizon(tiny), 1))
    path = tmp_path / "tiny.lp"
    export_lp_text(model, path)
    text = path.read_text()
    assert "Minimize" in text and "C_1" in text and "y_1_1_1_1_0" in text
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(str(path))
    h.run()
    assert h.getInfo().objective_function_value == pytest.approx(1.75, abs=1e-6)


def test_export_roundtrip_random_instance(tmp_path):
    inst = generate_random(3, 2, 3, [1, 2, 3], (3, 15), (0, 4), (1, 5), seed=9)
    sol = solved(inst, Fraction(1, 2), MAKESPAN)
    path = tmp_path / "m.lp"
    export_lp_text(sol.model, path)
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(str(path))
    h.run()
    assert h.getInfo().objective_function_value == pytest.approx(float(sol.objective), rel=1e-8)


def test_export_without_variables_fails(tiny):
    model = build_wct_lp(tiny, build_grid(3, 1))
    empty = dataclasses.replace(model, var_keys=[], aux_names=[], objective=[], rows=[], senses=[], rhs=[], row_names=[])
    with pytest.raises(LpError, match="no variables"):
        lp_text(empty)


def test_solution_dump_roundtrip(tmp_path):
    inst = validate(shared_port())
    sol = solved(inst, 1)
    dump_solution(sol, tmp_path / "s.json")
    back = load_solution(inst, tmp_path / "s.json")
    assert float(back.objective) == pytest.approx(float(sol.objective))
    for f in inst.flows:
        assert back.probabilities(f) == pytest.approx(sol.probabilities(f))


def test_solution_for_other_instance_rejected(tmp_path, tiny):
    sol = solved(validate(shared_port()), 1)
    dump_solution(sol, tmp_path / "s.json")
    with pytest.raises(ValueError):
        load_solution(tiny, tmp_path / "s.json")


def test_probabilities_single_flow(tiny_sol, tiny):
    assert tiny_sol.probabilities(tiny.flows[0]) == pytest.approx({(1, 0): 0.5, (1, 1): 0.5})
    assert tiny_sol.probabilities(FlowKey(1, 2, 1)) == pytest.approx({(1, 0): 0.5, (1, 1): 0.5})
