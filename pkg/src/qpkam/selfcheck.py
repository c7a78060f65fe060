"""Programmatic invariant suite: every module's oracle and property checks.

Each check returns (name, passed, detail); the suite is deterministic given
the seed and is shared by the CLI selfcheck command and the acceptance tests.
"""

from __future__ import annotations

import numpy as np

from .fourier import (TorusFunction, compose_diffeo, invert_diffeo,
                      lip_norm, pointwise_product, sobolev_norm)
from .operators import (ToeplitzOperator, apply_operator, compose,
                        m_sharp, majorant_norm, omega_form, structure_check)
from .symbols import (adjoint, compose_asymptotic, compose_exact,
                      function_symbol, j_symbol, moyal_commutator,
                      multiplier_symbol, quantize)
from .straightening import golden_omega, straighten_iterate
from .util import random_real_function, rng_for

CHECKS = []


def check(fn):
    CHECKS.append(fn)
    return fn


def run_suite(seed=0, names=None):
    results = []
    for fn in CHECKS:
        if names and fn.__name__ not in names:
            continue
        try:
            detail = fn(seed)
            results.append((fn.__name__, True, detail))
        except AssertionError as exc:
            results.append((fn.__name__, False, str(exc)))
    return results


# -- core function algebra -------------------------------------------------


@check
def reality_preserved(seed):
    rng = rng_for(seed)
    u = random_real_function(2, 3, 6, rng)
    v = random_real_function(2, 3, 6, rng)
    beta = random_real_function(2, 3, 6, rng, amplitude=0.02)
    worst = max(pointwise_product(u, v).reality_defect(),
                compose_diffeo(u, beta).reality_defect(),
                invert_diffeo(beta).reality_defect())
    assert worst < 1e-12, f"reality defect {worst:.2e}"
    return f"max defect {worst:.2e}"


@check
def product_tame_estimate(seed):
    # ||uv||_s <= C(s) (||u||_s ||v||_s0 + ||u||_s0 ||v||_s), C stable in seed
    s, s0 = 6.0, 4.0
    consts = []
    for k in range(3):
        rng = rng_for(seed + k)
        u = random_real_function(2, 4, 8, rng, decay=2.0)
        v = random_real_function(2, 4, 8, rng, decay=2.0)
        num = sobolev_norm(pointwise_product(u, v), s)
        den = (sobolev_norm(u, s) * sobolev_norm(v, s0)
               + sobolev_norm(u, s0) * sobolev_norm(v, s))
        consts.append(num / den)
    spread = (max(consts) - min(consts)) / max(consts)
    assert max(consts) < 10.0 and spread < 0.9, f"C = {consts}"
    return f"fitted C in [{min(consts):.3f}, {max(consts):.3f}]"


@check
def diffeo_roundtrip(seed):
    rng = rng_for(seed)
    u = random_real_function(1, 2, 6, rng, decay=3.0).embed(8, 24)
    beta = random_real_function(1, 2, 4, rng, amplitude=5e-3).embed(8, 24)
    bt = invert_diffeo(beta)
    back = compose_diffeo(compose_diffeo(u, beta), bt)
    err = float(np.max(np.abs(back.coeffs - u.coeffs)))
    assert err < 1e-9, f"roundtrip {err:.2e}"
    return f"roundtrip {err:.2e}"


@check
def sobolev_monotone(seed):
    rng = rng_for(seed)
    u = random_real_function(2, 3, 5, rng)
    norms = [sobolev_norm(u, s) for s in (0.0, 1.0, 2.5, 4.0)]
    assert all(a <= b + 1e-14 for a, b in zip(norms, norms[1:])), norms
    return "nondecreasing in s"


@check
def lip_family_norm(seed):
    u1 = TorusFunction.from_modes(1, 0, 2, [((0,), 1, 0.5, 0.0)])
    u2 = TorusFunction.from_modes(1, 0, 2, [((0,), 1, 1.0, 0.0)])
    val = lip_norm([(np.array([0.5]), u1), (np.array([1.0]), u2)],
                   gamma=0.5, s=1.0)
    # sup part: ||u2||_1 = sqrt(2)/2... amplitude 1 cos x: coeffs 1/2 each
    sup = sobolev_norm(u2, 1.0)
    lip = sobolev_norm(u2 - u1, 0.0) / 0.5
    assert abs(val - (sup + 0.5 * lip)) < 1e-14
    return f"value {val:.6f}"


# -- symbols -----------------------------------------------------------------


@check
def composition_exactness(seed):
    rng = rng_for(seed)
    worst = 0.0
    for k in range(5):
        a = function_symbol(random_real_function(1, 2, 2, rng), 12)
        b = function_symbol(random_real_function(1, 2, 2, rng), 12)
        ab = compose_exact(a, b)
        jop = 5
        QA = quantize(a, jop + 2)
        QB = quantize(b, jop + 2)
        prod = compose(QA, QB)
        diff = prod.entries[..., 2:-2, 2:-2] - quantize(ab, jop).entries
        worst = max(worst, float(np.max(np.abs(diff))))
    assert worst < 1e-12, f"exactness {worst:.2e}"
    return f"max {worst:.2e}"


@check
def expansion_consistency(seed):
    rng = rng_for(seed)
    a = function_symbol(random_real_function(1, 2, 2, rng), 16)
    b = function_symbol(random_real_function(1, 2, 2, rng), 16)
    exact = compose_exact(a, b)
    for N in (1, 2, 3, 4):
        exp_, rem = compose_asymptotic(a, b, N)
        from .symbols import _align

        e, s = _align(exact, exp_ + rem)
        W = min(e.window, s.window)
        sl = np.s_[..., e.xi_max - W:e.xi_max + W + 1]
        err = float(np.max(np.abs(e.coeffs[sl] - s.coeffs[sl])))
        assert err < 1e-12, f"N={N}: {err:.2e}"
    return "a#b = expansion + remainder, N <= 4"


@check
def remainder_decay_order(seed):
    # r_N of two order -1 multipliers decays like <xi>^(m+m'-N)
    nu, l_max = 1, 1
    f = multiplier_symbol(lambda x: 1.0 / (1.0 + x.astype(float) ** 2) ** 0.5,
                          -1.0, nu, l_max, 2, 64)
    rng = rng_for(seed)
    g_fun = random_real_function(nu, l_max, 2, rng, amplitude=0.5)
    g = function_symbol(g_fun, 64)
    from .symbols import _symbol_product

    a = _symbol_product(f, g)
    a.order = -1.0
    b = a.copy()
    for N in (1, 2, 3):
        _, rem = compose_asymptotic(a, b, N)
        xi = 2 ** np.arange(3, int(np.log2(rem.window)) + 1)
        vals = [float(np.max(np.abs(rem._xi_slice(x)))) for x in xi]
        keep = [(x, v) for x, v in zip(xi, vals) if v > 1e-14]
        assert len(keep) >= 3, "remainder underflow before fit"
        slope = np.polyfit(np.log([x for x, _ in keep]),
                           np.log([v for _, v in keep]), 1)[0]
        target = -2.0 - N
        assert abs(slope - target) < 0.45, f"N={N}: slope {slope:.2f}"
    return "decay exponents match m+m'-N"


@check
def adjoint_oracle(seed):
    rng = rng_for(seed)
    a = function_symbol(random_real_function(1, 2, 2, rng), 12)
    QA = quantize(a, 4)
    Qad = quantize(adjoint(a), 4)
    err = float(np.max(np.abs(Qad.entries - QA.dagger().entries)))
    assert err < 1e-12, f"adjoint {err:.2e}"
    return f"max {err:.2e}"


@check
def moyal_oracle(seed):
    rng = rng_for(seed)
    a = function_symbol(random_real_function(1, 1, 2, rng), 16)
    b = function_symbol(random_real_function(1, 1, 2, rng), 16)
    star, principal, r2 = moyal_commutator(a, b)
    jop = 4
    mat = compose(quantize(a, jop + 4), quantize(b, jop + 4)) \
        - compose(quantize(b, jop + 4), quantize(a, jop + 4))
    err = float(np.max(np.abs(mat.entries[..., 4:-4, 4:-4]
                              - quantize(star, jop).entries)))
    assert err < 1e-12, f"moyal {err:.2e}"
    return f"matrix commutator match {err:.2e}"


@check
def j_skew_adjoint(seed):
    J = quantize(j_symbol(1, 1, 2, 12), 8)
    err = float(np.max(np.abs(J.dagger().entries + J.entries)))
    assert err == 0.0, f"J skewness {err:.2e}"
    return "A* = -A exactly"


# -- operators ---------------------------------------------------------------


@check
def apply_dense_oracle(seed):
    rng = rng_for(seed)
    A = ToeplitzOperator.zeros(2, 2, 3)
    A.entries[:] = rng.standard_normal(A.entries.shape) \
        + 1j * rng.standard_normal(A.entries.shape)
    u = random_real_function(2, 2, 3, rng)
    lhs = apply_operator(A, u).coeffs.reshape(-1)
    rhs = A.dense() @ u.coeffs.reshape(-1)
    err = float(np.max(np.abs(lhs - rhs)))
    assert err < 1e-12, f"apply {err:.2e}"
    return f"max {err:.2e}"


@check
def majorant_ordering(seed):
    rng = rng_for(seed)
    A = ToeplitzOperator.zeros(2, 2, 3)
    A.entries[:] = rng.standard_normal(A.entries.shape)
    B = A.copy()
    B.entries = np.abs(B.entries) * (1.0 + rng.random(B.entries.shape))
    assert majorant_norm(A, 3.0) <= majorant_norm(B, 3.0) * (1 + 1e-10)
    return "entrywise |A| <= |B| implies norm ordering"


@check
def modulo_tame_subadditive(seed):
    rng = rng_for(seed)
    s0 = 4
    worst = 0.0
    for k in range(3):
        A = ToeplitzOperator.zeros(2, 2, 4)
        B = ToeplitzOperator.zeros(2, 2, 4)
        A.entries[:] = rng.standard_normal(A.entries.shape)
        B.entries[:] = rng.standard_normal(B.entries.shape)
        gap = m_sharp(A + B, s0) - m_sharp(A, s0) - m_sharp(B, s0)
        worst = max(worst, gap)
    assert worst < 1e-9, f"subadditivity gap {worst:.2e}"
    return "m#(A+B) <= m#(A) + m#(B)"


@check
def hamiltonian_flag_detects(seed):
    J = ToeplitzOperator.j_operator(2, 1, 4)
    assert structure_check(J)["is_hamiltonian"]
    bad = ToeplitzOperator.identity(2, 1, 4) * 1j
    assert not structure_check(bad)["is_real"]
    return "J Hamiltonian; iI flagged non-real"


# -- straightening ----------------------------------------------------------


@check
def straightening_quadrature_oracle(seed):
    eps = 0.1
    a = TorusFunction.from_modes(1, 1, 48, [((0,), 1, eps, 0.0)])
    st = straighten_iterate(a, golden_omega(1, 1.0), gamma=0.1, tau=8)
    err = abs(st.m - np.sqrt(1 - eps ** 2))
    assert err < 1e-10, f"m error {err:.2e}"
    assert st.residual < 1e-10
    # Newton-type convergence: residuals drop at least quadratically
    h = [x for x in st.history if x > 1e-14]
    for r0, r1 in zip(h, h[1:]):
        assert r1 < 1.5 * r0 ** 2 / h[0] * 10 or r1 < 1e-12, st.history
    return f"m = sqrt(0.99) +/- {err:.1e}; {st.iterations} sweeps"


@check
def straightening_linear_solve_exact(seed):
    rng = rng_for(seed)
    from .straightening import transport_homological_solve

    a = random_real_function(2, 2, 4, rng, amplitude=1e-2)
    a.coeffs[..., 4] = 0.0  # drop the j = 0 slab
    om = golden_omega(2, 1.0)
    beta = transport_homological_solve(a, om, 1.0, 0.05, 10)
    resid = beta.dphi_omega(om) - 1.0 * beta.dx()
    err = float(np.max(np.abs(resid.coeffs - a.coeffs)))
    assert err < 1e-13, f"linear solve {err:.2e}"
    assert beta.reality_defect() < 1e-14
    return f"substitution residual {err:.2e}"


@check
def straightening_m_shape(seed):
    # |m - 1| <= C ||a||_{s0} with stable C across small random a
    om = golden_omega(2, 1.0)
    cs = []
    for k in range(3):
        rng = rng_for(seed + k)
        a = random_real_function(2, 2, 3, rng, amplitude=2e-3, decay=4.0)
        st = straighten_iterate(a, om, gamma=0.1, tau=10)
        cs.append(abs(st.m - 1.0) / sobolev_norm(a, 4.0))
    assert max(cs) < 1.0, cs
    return f"fitted C range [{min(cs):.3f}, {max(cs):.3f}]"


# -- flow / conjugation ------------------------------------------------------


@check
def flow_symplectic_and_factorized(seed):
    from .egorov import build_A_tau, build_A_tau_inverse, flow_Psi

    rng = rng_for(seed)
    nu, l_max, j_max = 1, 6, 12
    beta = random_real_function(nu, 2, 4, rng, amplitude=2e-3).embed(6, 4)
    Psi, Psi_inv = flow_Psi(beta, 12, j_max)
    I = ToeplitzOperator.identity(nu, l_max, j_max)
    inv_def = (compose(Psi, Psi_inv) - I).restrict_interior(6, 3).max_abs()
    assert inv_def < 1e-9, f"inverse defect {inv_def:.2e}"
    worst = 0.0
    for _ in range(4):
        u = random_real_function(nu, 2, 5, rng, zero_mean_x=True,
                                 decay=4.0).embed(l_max, j_max)
        v = random_real_function(nu, 2, 5, rng, zero_mean_x=True,
                                 decay=4.0).embed(l_max, j_max)
        worst = max(worst, abs(
            omega_form(apply_operator(Psi, u), apply_operator(Psi, v))
            - omega_form(u, v)))
    assert worst < 1e-9, f"symplectic defect {worst:.2e}"
    A = build_A_tau(beta, 1.0, j_max)
    Ainv = build_A_tau_inverse(beta, 1.0, j_max)
    d = (compose(A, Ainv) - I).restrict_interior(6, 3).max_abs()
    assert d < 1e-9, f"A Ainv defect {d:.2e}"
    return f"sympl {worst:.1e}, A-inverse {d:.1e}"


@check
def kam_step_oracle(seed):
    from .egorov import build_generator_part
    from .kam import KamParams, kam_step
    from .symbols import dispersion_omega

    rng = rng_for(seed)
    nu, l_max, j_max = 2, 3, 10
    c = random_real_function(nu, 2, 2, rng, decay=6, amplitude=3e-4)
    one = TorusFunction.zeros(nu, 2, 2)
    P = (build_generator_part(c, j_max) * (-1.0)
         - ToeplitzOperator.j_operator(nu, 2, j_max)).zero_x_average_row_col()
    P = ToeplitzOperator(nu, 2, j_max, P.entries)
    # embed on the working lattice
    big = ToeplitzOperator.zeros(nu, l_max, j_max)
    big.entries[l_max - 2:l_max + 3, l_max - 2:l_max + 3] = P.entries
    P = big
    om = golden_omega(2, 1.0)
    jj = np.arange(-j_max, j_max + 1)
    d = -1.0 * dispersion_omega(jj)
    params = KamParams(nu=nu, gamma=0.1)
    dp, Pp, Q, Qi, info = kam_step(d, P, om, params, N=4)
    assert info["structure"]["hamiltonian_defect"] < 1e-9
    Df = ToeplitzOperator.zeros(nu, l_max, j_max)
    Df.entries[(l_max,) * nu][np.diag_indices(2 * j_max + 1)] = 1j * d
    M = Df + P
    lhs = compose(compose(Q, M, pad=2), Qi, pad=2) \
        + compose(Q, Qi.omega_dphi(om), pad=2)
    Dp = ToeplitzOperator.zeros(nu, l_max, j_max)
    Dp.entries[(l_max,) * nu][np.diag_indices(2 * j_max + 1)] = 1j * dp
    err = (lhs - (Dp + Pp)).restrict_interior(4, 1).max_abs()
    assert err < 1e-9, f"conjugation oracle {err:.2e}"
    return f"step-vs-conjugation {err:.2e}"


def run_and_print(seed=0):
    results = run_suite(seed)
    for name, passed, detail in results:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return all(p for _, p, _ in results)
