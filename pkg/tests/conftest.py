import pytest

from coflowsched.instance import time_horizon, validate
from coflowsched.lp import build_lp, solve
from coflowsched.timegrid import build_grid


def single_flow(**over):
    rec = {
        "N": 1,
        "cores": [{"speed": over.pop("speed", 1)}],
        "coflows": [{"weight": over.pop("weight", 1), "release": over.pop("release", 0),
                     "flows": [{"src": 1, "dst": 1, "size": over.pop("size", 2)}]}],
    }
    assert not over
    return rec


def shared_port():
    """One coflow, flows (1,3,1) d=2 and (1,4,1) d=3 sharing input port 1."""
    return {
        "N": 2,
        "cores": [{"speed": 1}],
        "coflows": [{"weight": 1, "release": 0,
                     "flows": [{"src": 1, "dst": 1, "size": 2}, {"src": 1, "dst": 2, "size": 3}]}],
    }


def solved(inst, eta, kind="wct", exact=False):
    grid = build_grid(time_horizon(inst), eta)
    return solve(build_lp(inst, grid, kind), exact=exact)


@pytest.fixture
def tiny():
    return validate(single_flow())


@pytest.fixture
def tiny_sol(tiny):
    return solved(tiny, 1)
