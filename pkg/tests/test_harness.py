import json

import numpy as np
import pytest

from qpkam.cli import main as cli_main
from qpkam.config import RunConfig
from qpkam.errors import ConfigError
from qpkam.report import (EXIT_OK, EXIT_OMEGA_EXCLUDED, run_measure,
                          run_reduce, run_straighten)


def small_config_dict(**over):
    d = {
        "frequency": {"nu": 2, "L": 1.0, "gamma": 0.1},
        "problem": {"eps": 1e-3,
                    "a_modes": [[[1, 0], 1, 1.0, 0.0],
                                [[0, 0], 1, 1.0, 0.0]]},
        "truncation": {"j_max": 10, "l_max": 4},
        "kam": {"N0": 4, "k_max": 4, "n_flow_steps": 8},
        "seed": 3,
    }
    d.update(over)
    return d


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        RunConfig.from_dict(small_config_dict(bogus=1))
    bad = small_config_dict()
    bad["frequency"]["no_such_knob"] = 2
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_config_validates_values():
    bad = small_config_dict()
    bad["frequency"]["gamma"] = 1.5
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)
    bad2 = small_config_dict()
    bad2["frequency"]["tau"] = 7  # < 2 nu + 6
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad2)
    bad3 = small_config_dict()
    bad3["schema_version"] = 99
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad3)


def test_config_hash_deterministic():
    c1 = RunConfig.from_dict(small_config_dict())
    c2 = RunConfig.from_dict(small_config_dict())
    assert c1.config_hash() == c2.config_hash()
    c3 = RunConfig.from_dict(small_config_dict(seed=4))
    assert c3.config_hash() != c1.config_hash()


def test_empty_profile_reduce_is_trivial():
    d = small_config_dict()
    d["problem"]["a_modes"] = []
    cfg = RunConfig.from_dict(d)
    res = run_reduce(cfg)
    assert res.exit_code == EXIT_OK
    st = res.report["stages"]["straighten"]
    assert st["m"] == pytest.approx(1.0) and st["residual"] < 1e-12
    sp = res.artifacts["spectral"]
    assert np.max(np.abs(sp.r)) < 1e-12
    assert res.report["stages"]["kam"]["final_residual_interior"] < 1e-10


def test_cosine_profile_reports_m():
    d = small_config_dict()
    d["problem"] = {"eps": 0.1, "a_modes": [[[0, 0], 1, 1.0, 0.0]]}
    d["truncation"] = {"j_max": 16, "l_max": 2}
    cfg = RunConfig.from_dict(d)
    res = run_straighten(cfg)
    assert res.exit_code == EXIT_OK
    assert res.report["stages"]["straighten"]["m"] \
        == pytest.approx(np.sqrt(0.99), abs=1e-8)


def test_resonant_omega_dedicated_exit():
    d = small_config_dict()
    d["frequency"]["omega"] = [1.5, 1.5]
    d["problem"]["a_modes"] = [[[1, -1], 1, 1.0, 0.0]]
    cfg = RunConfig.from_dict(d)
    res = run_reduce(cfg)
    assert res.exit_code == EXIT_OMEGA_EXCLUDED


def test_reports_bit_identical(tmp_path):
    d = small_config_dict()
    cfgfile = tmp_path / "c.json"
    cfgfile.write_text(json.dumps(d))
    code1 = cli_main(["reduce", "--config", str(cfgfile),
                      "--out", str(tmp_path / "o1")])
    code2 = cli_main(["reduce", "--config", str(cfgfile),
                      "--out", str(tmp_path / "o2")])
    assert code1 == code2 == EXIT_OK
    r1 = (tmp_path / "o1" / "report.json").read_bytes()
    r2 = (tmp_path / "o2" / "report.json").read_bytes()
    assert r1 == r2
    assert (tmp_path / "o1" / "eigenvalues.csv").read_bytes() \
        == (tmp_path / "o2" / "eigenvalues.csv").read_bytes()


def test_cli_selfcheck_and_measure(tmp_path):
    code = cli_main(["selfcheck", "--out", str(tmp_path / "sc"), "--seed", "1"])
    assert code == EXIT_OK
    rep = json.loads((tmp_path / "sc" / "report.json").read_text())
    assert rep["stages"]["selfcheck"]["all_passed"]

    d = small_config_dict()
    d["measure"] = {"gammas": [0.05, 0.02], "ell_cut": 3, "j_cut": 12,
                    "n_slices": 16}
    cfg = RunConfig.from_dict(d)
    res = run_measure(cfg)
    assert res.exit_code == EXIT_OK
    rows = res.report["stages"]["measure"]["rows"]
    assert rows[0]["measure"] >= rows[1]["measure"]
    write_dir = tmp_path / "meas"
    from qpkam.report import write_outputs

    write_outputs(res, cfg, write_dir)
    lines = (write_dir / "measure.csv").read_text().strip().splitlines()
    assert lines[0] == "gamma,L,measure,measure_over_gamma,tail_bound"
    assert len(lines) == 3


def test_q_term_feeds_spectrum():
    d = small_config_dict()
    d["problem"]["q_terms"] = [{"kind": "j_tail", "amp": 1.0}]
    cfg = RunConfig.from_dict(d)
    res = run_reduce(cfg)
    assert res.exit_code == EXIT_OK
    sp = res.artifacts["spectral"]
    # X = J(1+a) - Q, so the multiplier shifts r_j by -eps j/(1+j^2)
    jj = np.arange(-sp.j_max, sp.j_max + 1)
    expected = -1e-3 * jj / (1.0 + jj.astype(float) ** 2)
    err = np.max(np.abs(sp.r - expected))
    assert err < 5e-5


def test_two_run_comparison_diagnostic():
    # Lipschitz-variation estimates are replaced by a two-run comparison:
    # nearby profiles give nearby (m, r)
    d1 = small_config_dict()
    d2 = small_config_dict()
    d2["problem"]["eps"] = 1.05e-3
    r1 = run_reduce(RunConfig.from_dict(d1))
    r2 = run_reduce(RunConfig.from_dict(d2))
    m1 = r1.report["stages"]["straighten"]["m"]
    m2 = r2.report["stages"]["straighten"]["m"]
    assert abs(m1 - m2) < 1e-3
    dr = np.max(np.abs(r1.artifacts["spectral"].r
                       - r2.artifacts["spectral"].r))
    assert dr < 1e-4


def test_run_evolve_small():
    d = small_config_dict()
    d["evolution"] = {"T": 0.2, "dt": 1e-3, "record_every": 50,
                      "u0_modes": [[1, 1.0, 0.0]]}
    from qpkam.report import run_evolve

    res = run_evolve(RunConfig.from_dict(d))
    assert res.exit_code == EXIT_OK
    ev = res.report["stages"]["evolve"]
    assert abs(ev["c_lower"]) < 0.05 and abs(ev["c_upper"]) < 0.05
    assert ev["reduced_vs_full_rel"] < 1e-4


def test_omega_grid_scan_threads():
    d = small_config_dict()
    d["frequency"]["preset"] = "grid"
    d["frequency"]["grid_points"] = 2
    d["threads"] = 2
    from qpkam.report import run_straighten as rs

    res = rs(RunConfig.from_dict(d))
    rows = res.report["stages"]["straighten_scan"]["rows"]
    assert len(rows) == 4  # 2^nu grid
    assert all(("m" in r) or ("failed" in r) for r in rows)
