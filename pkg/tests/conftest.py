"""Shared fixtures: the expensive acceptance-scale pipeline runs once."""

import pytest

from qpkam.config import RunConfig
from qpkam.report import run_reduce


def acceptance_config(eps=1e-3, k_max=8, floor=0.0):
    """Criterion-scale parameters: nu=2, golden omega, gamma=0.1, N0=4,
    j_max=32, l_max=12; the profile carries a phi-average component and a
    first-order multiplier perturbation so r_j has a clean O(eps) part."""
    return RunConfig.from_dict({
        "frequency": {"nu": 2, "L": 1.0, "gamma": 0.1},
        "problem": {
            "eps": eps,
            "a_modes": [[[1, 0], 1, 1.0, 0.0], [[0, 0], 1, 1.0, 0.0]],
            "q_terms": [{"kind": "j_tail", "amp": 1.0}],
        },
        "truncation": {"j_max": 32, "l_max": 12},
        "kam": {"N0": 4, "k_max": k_max, "floor": floor, "n_flow_steps": 12},
        "evolution": {"T": 10.0, "dt": 1e-3, "record_every": 100,
                      "u0_modes": [[1, 1.0, 0.0], [2, 0.5, 0.3]]},
        "seed": 0,
    })


@pytest.fixture(scope="session")
def reduce_run():
    """The shared full-scale reduction (criteria 2-6 read from it)."""
    import time

    t0 = time.time()
    res = run_reduce(acceptance_config())
    res.report["wall_seconds"] = time.time() - t0  # test-only, not persisted
    assert res.exit_code == 0, res.report
    return res


@pytest.fixture(scope="session")
def reduce_run_half_eps():
    res = run_reduce(acceptance_config(eps=5e-4, k_max=6, floor=1e-13))
    assert res.exit_code == 0, res.report
    return res
