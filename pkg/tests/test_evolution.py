import numpy as np
import pytest

from qpkam.errors import QpkamError, StageError
from qpkam.evolution import (evolve_full, evolve_reduced,
                             norm_stability_report)
from qpkam.fourier import TorusFunction
from qpkam.kam import SpectralData
from qpkam.operators import ToeplitzOperator
from qpkam.straightening import golden_omega
from qpkam.symbols import dispersion_omega


def test_free_evolution_multiplier():
    om = golden_omega(2, 1.0)
    a0 = TorusFunction.zeros(2, 1, 2)
    j_max = 8
    u0 = np.zeros(2 * j_max + 1, complex)
    u0[j_max + 1] = 1.0
    u0[j_max - 1] = 1.0
    traj = evolve_full(u0, a0, None, om, T=1.0, dt=1e-3, s_list=[2.0],
                       j_max=j_max, record_every=250)
    assert traj.states[-1][j_max + 1] == pytest.approx(np.exp(2.5j), abs=1e-12)
    lo, hi = norm_stability_report(traj, 2.0)
    assert abs(lo) < 1e-12 and abs(hi) < 1e-12


def test_energy_exactness_long_run():
    om = golden_omega(2, 1.0)
    a0 = TorusFunction.zeros(2, 1, 2)
    j_max = 6
    u0 = np.zeros(2 * j_max + 1, complex)
    u0[j_max + 2] = 0.3
    u0[j_max - 2] = 0.3
    traj = evolve_full(u0, a0, None, om, T=10.0, dt=1e-3, s_list=[3.0],
                       j_max=j_max, record_every=1000)
    drift = np.max(np.abs(traj.norms[3.0] / traj.norms[3.0][0] - 1.0))
    assert drift < 1e-12


def test_richardson_order_two():
    om = golden_omega(2, 1.0)
    a = TorusFunction.from_modes(2, 1, 2, [((1, 0), 1, 1e-2, 0.0)])
    j_max = 8
    u0 = np.zeros(2 * j_max + 1, complex)
    u0[j_max + 1] = 1.0
    u0[j_max - 1] = 1.0
    ref = evolve_full(u0, a, None, om, T=0.5, dt=1 / 3200, s_list=[2.0],
                      j_max=j_max, record_every=10 ** 9)
    errs = []
    for dt in (1 / 200, 1 / 400, 1 / 800):
        t = evolve_full(u0, a, None, om, T=0.5, dt=dt, s_list=[2.0],
                        j_max=j_max, record_every=10 ** 9)
        errs.append(np.max(np.abs(t.states[-1] - ref.states[-1])))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.25)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.3)


def test_reality_preserved_along_flow():
    om = golden_omega(2, 1.0)
    a = TorusFunction.from_modes(2, 1, 2, [((1, 0), 1, 1e-2, 0.3)])
    j_max = 6
    u0 = np.zeros(2 * j_max + 1, complex)
    u0[j_max + 1] = 0.5 - 0.2j
    u0[j_max - 1] = 0.5 + 0.2j
    traj = evolve_full(u0, a, None, om, T=1.0, dt=1e-3, s_list=[2.0],
                       j_max=j_max, record_every=500)
    final = traj.states[-1]
    assert np.max(np.abs(final - np.conj(final[::-1]))) < 1e-11


def test_cfl_guard():
    om = golden_omega(2, 1.0)
    a0 = TorusFunction.zeros(2, 1, 2)
    u0 = np.zeros(17, complex)
    u0[9] = 1.0
    with pytest.raises(StageError):
        evolve_full(u0, a0, None, om, T=1.0, dt=1.0, s_list=[2.0], j_max=8)


def test_reduced_trivial_phase_flow():
    om = golden_omega(2, 1.0)
    j_max = 6
    jj = np.arange(-j_max, j_max + 1)
    sp = SpectralData(m=1.0, r=np.zeros(2 * j_max + 1), j_max=j_max)
    I = ToeplitzOperator.identity(2, 2, j_max)
    u0 = np.zeros(2 * j_max + 1, complex)
    u0[j_max + 1] = 1.0
    u0[j_max - 1] = 1.0
    times = np.array([0.0, 0.7, 1.9])
    traj = evolve_reduced(u0, I, I, sp, om, times, [2.0])
    assert np.max(np.abs(traj.states[0] - u0)) < 1e-14
    expected = u0 * np.exp(1j * dispersion_omega(jj) * 1.9)
    assert np.max(np.abs(traj.states[-1] - expected)) < 1e-13


def test_stability_report_errors():
    om = golden_omega(2, 1.0)
    a0 = TorusFunction.zeros(2, 1, 2)
    u0 = np.zeros(13, complex)
    traj = evolve_full(u0, a0, None, om, T=0.01, dt=1e-3, s_list=[2.0],
                       j_max=6)
    with pytest.raises(QpkamError):
        norm_stability_report(traj, 2.0)
