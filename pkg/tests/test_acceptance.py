"""Acceptance criteria, one test per criterion, each printing a verdict line.

The expensive full-scale reduction (nu=2, eps=1e-3, golden omega, gamma=0.1,
N0=4, j_max=32, l_max=12) runs once in a session fixture and criteria 2-6
read from its report and trace.
"""

import time

import numpy as np

from qpkam.fourier import TorusFunction, sobolev_norm
from qpkam.operators import (ToeplitzOperator, apply_operator, compose,
                             omega_form)
from qpkam.straightening import golden_omega, straighten_iterate
from qpkam.util import random_real_function, rng_for

from conftest import acceptance_config


def verdict(n, ok, detail):
    print(f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {n}: {detail}"


def test_criterion_1_straightening_closed_form():
    eps = 0.1
    a = TorusFunction.from_modes(1, 2, 64, [((0,), 1, eps, 0.0)])
    t0 = time.time()
    st = straighten_iterate(a, golden_omega(1, 1.0), gamma=0.1, tau=8)
    wall = time.time() - t0
    err = abs(st.m - np.sqrt(0.99))
    verdict(1, err < 1e-8 and wall < 1.0,
            f"|m - sqrt(0.99)| = {err:.2e}, runtime {wall:.2f}s")


def test_criterion_2_homological_identity(reduce_run):
    steps = [s for s in reduce_run.artifacts["kam"].trace.steps
             if "hom_residual_majorant_s0" in s]
    worst = max(s["hom_residual_majorant_s0"] for s in steps)
    verdict(2, bool(steps) and worst <= 1e-12,
            f"worst majorant residual over {len(steps)} steps = {worst:.2e}")


def test_criterion_3_kam_convergence(reduce_run):
    trace = reduce_run.artifacts["kam"].trace
    offd = [(s["k"], s["offdiag_norm"]) for s in trace.steps
            if s.get("k", -1) >= 0 and np.isfinite(s["offdiag_norm"])]
    norms = [v for _, v in offd]
    monotone = all(b < a for a, b in zip(norms, norms[1:]) if a > 0)
    below_at = next((k for k, v in offd if v < 1e-10), None)
    slope = trace.decay_slope()
    a_exp = 6 * (2 * 2 + 6) + 4
    wall = reduce_run.report["wall_seconds"]
    detail = (f"norms {['%.1e' % v for v in norms]}, below 1e-10 at step "
              f"{below_at}, slope {slope:.1f} vs -a/2 = {-a_exp / 2}, "
              f"runtime {wall:.0f}s")
    verdict(3, monotone and below_at is not None and below_at <= 5
            and slope is not None and slope <= -a_exp / 2 and wall < 300,
            detail)


def test_criterion_4_spectral_structure(reduce_run, reduce_run_half_eps):
    sp1 = reduce_run.artifacts["spectral"]
    sp2 = reduce_run_half_eps.artifacts["spectral"]
    odd = max(sp1.oddness_defect(), sp2.oddness_defect())
    c1 = sp1.weighted_sup() / 1e-3
    c2 = sp2.weighted_sup() / 5e-4
    spread = abs(c1 - c2) / max(c1, c2)
    verdict(4, odd <= 1e-10 and spread <= 0.20,
            f"max|r_j + r_-j| = {odd:.2e}, sup<j>|r|/eps = "
            f"({c1:.3f}, {c2:.3f}), spread {100 * spread:.1f}%")


def test_criterion_5_end_to_end_residual(reduce_run):
    resid = reduce_run.report["stages"]["kam"]["final_residual_interior"]
    verdict(5, resid <= 1e-8, f"interior majorant residual = {resid:.2e}")


def test_criterion_6_symplecticity(reduce_run):
    arts = reduce_run.artifacts
    cfg = acceptance_config()
    tr = cfg.truncation
    rng = rng_for(42)
    worst = 0.0
    operators = [arts["regularized"].Psi, arts["kam"].Phi2, arts["Phi"]]
    for _ in range(32):
        u = random_real_function(2, 6, 16, rng, zero_mean_x=True,
                                 decay=4.0).embed(tr.l_max, tr.j_max)
        v = random_real_function(2, 6, 16, rng, zero_mean_x=True,
                                 decay=4.0).embed(tr.l_max, tr.j_max)
        base = omega_form(u, v)
        for op in operators:
            got = omega_form(apply_operator(op, u), apply_operator(op, v))
            worst = max(worst, abs(got - base))
    struct_reg = reduce_run.report["stages"]["regularize"]["structure"]
    step_defects = [s.get("structure_defect", 0.0)
                    for s in arts["kam"].trace.steps if "structure_defect" in s]
    worst_struct = max([struct_reg["hamiltonian_defect"]] + step_defects)
    verdict(6, worst <= 1e-8 and worst_struct <= 1e-9,
            f"max Omega defect over 32 pairs x 3 maps = {worst:.2e}, "
            f"max structure defect = {worst_struct:.2e}")


def test_criterion_7_composition_calculus():
    from qpkam.symbols import (compose_asymptotic, compose_exact,
                               function_symbol, multiplier_symbol, quantize,
                               _symbol_product)

    rng = rng_for(7)
    worst = 0.0
    for _ in range(20):
        a = function_symbol(random_real_function(1, 1, 2, rng), 12)
        b = function_symbol(random_real_function(1, 1, 2, rng), 12)
        ab = compose_exact(a, b)
        jop = 5
        prod = compose(quantize(a, jop + 2), quantize(b, jop + 2))
        diff = prod.entries[..., 2:-2, 2:-2] - quantize(ab, jop).entries
        worst = max(worst, float(np.max(np.abs(diff))))

    f = multiplier_symbol(
        lambda x: (1.0 + x.astype(float) ** 2) ** -0.5, -1.0, 1, 0, 1, 1024)
    g = function_symbol(
        random_real_function(1, 0, 1, rng, amplitude=0.7), 1024)
    base = _symbol_product(f, g)
    base.order = -1.0
    slopes = []
    for N in (1, 2, 3):
        _, rem = compose_asymptotic(base, base, N)
        xi = 2 ** np.arange(3, 11)
        vals = np.array([float(np.max(np.abs(rem._xi_slice(x)))) for x in xi])
        keep = vals > 1e-14
        slope = np.polyfit(np.log(xi[keep]), np.log(vals[keep]), 1)[0]
        slopes.append(float(slope))
    ok_slopes = all(abs(s - (-2.0 - N)) <= 0.3
                    for N, s in zip((1, 2, 3), slopes))
    verdict(7, worst <= 1e-12 and ok_slopes,
            f"20-pair exactness {worst:.2e}; remainder slopes "
            f"{[round(s, 2) for s in slopes]} vs (-3, -4, -5)")


def test_criterion_8_egorov_cross_validation():
    from qpkam.egorov import (build_A_tau, build_A_tau_inverse,
                              egorov_transport, op_from_egorov)
    from qpkam.symbols import AnalyticMultiplier, AnalyticSymbol

    nu, j_max, marg = 1, 24, 20
    beta = TorusFunction.from_modes(nu, 0, 4, [((0,), 1, 0.02, -np.pi / 2)])
    assert sobolev_norm(beta, 4.0) <= 0.05
    A = build_A_tau(beta, 1.0, j_max + marg)
    Ainv = build_A_tau_inverse(beta, 1.0, j_max + marg, band_extra=12)
    results = {}
    cases = {
        1: (AnalyticMultiplier.derivative_symbol(), 4,
            lambda j: 1j * j.astype(complex)),
        -1: (AnalyticMultiplier.odd_tail(5.0), 10,
             lambda j: 2j * j / (j.astype(float) ** 2 + 25.0)),
    }
    for order, (mult, rho, fj) in cases.items():
        w = AnalyticSymbol.from_multiplier(mult)
        es = egorov_transport(w, beta, rho=rho, j_max_op=j_max, n_t=24)
        Opq = op_from_egorov(es, j_max)
        W = ToeplitzOperator.diag_multiplier(nu, 0, j_max + marg, fj)
        conj = compose(compose(A, W), Ainv)
        c = conj.entries[(0,)][marg:-marg, marg:-marg]
        results[order] = float(
            np.max(np.abs(c - Opq.entries[(0,)])[2:-2, 2:-2]))
    ok = all(v <= 1e-8 for v in results.values())
    verdict(8, ok, f"in-band discrepancy: order +1 = {results[1]:.2e}, "
                   f"order -1 = {results[-1]:.2e}")


def test_criterion_9_evolution_stability(reduce_run):
    from qpkam.evolution import (evolve_full, evolve_reduced,
                                 norm_stability_report)

    cfg = acceptance_config()
    eps = cfg.problem.eps
    omega = cfg.frequency.omega_vector()
    tr, ev = cfg.truncation, cfg.evolution
    a = cfg.problem.a_function(cfg.frequency.nu, tr.l_max, tr.j_max)
    Q = cfg.problem.q_operator(cfg.frequency.nu, tr.l_max, tr.j_max)
    u0 = ev.u0_vector(tr.j_max)
    s = tr.s0 + 2.0
    n_steps = 10 ** 4
    T = n_steps * ev.dt
    traj = evolve_full(u0, a, Q, omega, T, ev.dt, [s], j_max=tr.j_max,
                       record_every=ev.record_every)
    lo, hi = norm_stability_report(traj, s)
    c_meas = max(abs(lo), abs(hi))
    red = evolve_reduced(u0, reduce_run.artifacts["Phi"],
                         reduce_run.artifacts["Phi_inv"],
                         reduce_run.artifacts["spectral"], omega,
                         traj.times, [s])
    rel = np.linalg.norm(traj.states - red.states, axis=-1) \
        / np.linalg.norm(traj.states, axis=-1)
    verdict(9, c_meas <= 10 * eps and float(np.max(rel)) <= 1e-6,
            f"c = {c_meas:.2e} vs 10*eps = {10 * eps:.0e}; "
            f"reduced-vs-full rel = {np.max(rel):.2e} over T = {T}")


def test_criterion_10_measure_scaling():
    from qpkam.measure import DModel, excluded_measure

    t0 = time.time()
    om = golden_omega(2, 1.0)
    rows = excluded_measure([0.1, 0.05, 0.025], om, DModel(m=1.0), 1.0, 2,
                            tau=10, ell_cut=6, j_cut=48, n_slices=64,
                            check_caps=True)
    wall = time.time() - t0
    ratios = [r.measure_over_gamma for r in rows]
    ms = [r.measure for r in rows]
    spread = (max(ratios) - min(ratios)) / max(ratios)
    slope = float(np.polyfit(np.log([r.gamma for r in rows]), np.log(ms), 1)[0])
    verdict(10, spread <= 0.25 and 0.9 <= slope <= 1.2 and wall < 600,
            f"measures {['%.4f' % m for m in ms]}, ratio spread "
            f"{100 * spread:.0f}%, slope {slope:.2f}, caps enforced, "
            f"runtime {wall:.0f}s")


def test_criterion_11_selfcheck_three_seeds():
    from qpkam.selfcheck import run_suite

    failures = []
    for seed in (0, 1, 2):
        for name, passed, detail in run_suite(seed=seed):
            if not passed:
                failures.append((seed, name, detail))
    verdict(11, not failures, f"3 seeds, failures: {failures or 'none'}")
