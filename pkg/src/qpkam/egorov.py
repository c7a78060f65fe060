"""Symplectic flow of the straightening, Egorov symbol transport, and the
assembly of the regularized operator omega.d_phi - m J + R.

The flow Psi solves d_tau Psi = (J o b(tau)) Psi with b = beta/(1+tau beta_x);
it factorizes as A^tau o C^tau where A^tau is the exact weighted composition
operator of the torus diffeomorphism and C^tau - I is one-smoothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import fft, fftn, next_fast_len

from .errors import DiffeomorphismError, StageError
from .fourier import TorusFunction, invert_diffeo
from .operators import (ToeplitzOperator, compose, majorant_norm,
                        smoothing_constants, structure_check)
from .symbols import (AnalyticSymbol, Symbol, compose_exact, function_symbol,
                      multiplier_symbol, quantize, dispersion_omega)

__all__ = [
    "build_A_tau",
    "build_A_tau_inverse",
    "flow_Psi",
    "FlowFactorization",
    "factorize_flow",
    "EgorovSymbols",
    "egorov_transport",
    "op_from_egorov",
    "OperatorBundle",
    "build_generator_part",
    "RegularizedOperator",
    "regularize",
]


# -- the exact diffeomorphism operator --------------------------------------


def _phi_grid_shape(nu, l_max, pad=2):
    return tuple(next_fast_len(pad * (2 * l_max + 1)) for _ in range(nu))


def build_A_tau(beta, tau, j_max_op, pad=2):
    """Operator h -> (1 + tau beta_x) h(phi, x + tau beta(phi, x)).

    Built column-by-column on the Fourier basis via collocation; returns a
    ToeplitzOperator on beta's phi lattice and |j| <= j_max_op.
    """
    nu, l_max = beta.nu, beta.l_max
    phi_shape = _phi_grid_shape(nu, l_max, pad)
    nx = next_fast_len(pad * (2 * max(beta.j_max, j_max_op) + 1))
    shape = phi_shape + (nx,)
    bv = beta.values(shape).real
    bx = beta.dx().values(shape).real
    if float(np.max(np.abs(tau * bx))) >= 1.0:
        raise DiffeomorphismError("sup|tau beta_x| >= 1")
    x = 2 * np.pi * np.arange(nx) / nx
    xs = x.reshape((1,) * nu + (-1,)) + tau * bv
    W = 1.0 + tau * bx

    n = 2 * j_max_op + 1
    cols = np.empty(shape + (n,), dtype=complex)
    E = np.exp(1j * xs)
    cur = np.exp(-1j * j_max_op * xs)
    for idx in range(n):
        cols[..., idx] = W * cur
        if idx < n - 1:
            cur = cur * E
    # FFT over (phi, x); read off row frequencies
    coeffs = fftn(cols, axes=tuple(range(nu + 1))) / np.prod(shape)
    entries = np.zeros((2 * l_max + 1,) * nu + (n, n), dtype=complex)
    lidx = [np.arange(-l_max, l_max + 1) % s for s in phi_shape]
    jj = np.arange(-j_max_op, j_max_op + 1)
    jidx = jj % nx
    grid = np.ix_(*lidx, jidx, np.arange(n))
    entries[...] = coeffs[grid]
    return ToeplitzOperator(nu, l_max, j_max_op, entries)


def build_A_tau_inverse(beta, tau, j_max_op, pad=2, band_extra=8):
    """(A^tau)^{-1} built from the inverse diffeomorphism (exact formula).

    The inverse beta~ has a wider Fourier band than beta; it is computed on a
    lattice enlarged by band_extra before assembling the operator.
    """
    wide = beta.embed(beta.l_max + (band_extra if beta.l_max > 0 else 0),
                      beta.j_max + band_extra)
    bt = invert_diffeo(wide * tau)
    return build_A_tau(bt, 1.0, j_max_op, pad=pad).crop_ell(beta.l_max)


# -- the symplectic flow ----------------------------------------------------


def _mult_matrices(bhat, j_max):
    """Batched multiplication-operator matrices M[p, q] = bhat[p - q]."""
    n = 2 * j_max + 1
    k_max = (bhat.shape[-1] - 1) // 2
    jj = np.arange(-j_max, j_max + 1)
    diff = jj[:, None] - jj[None, :]
    valid = np.abs(diff) <= k_max
    idx = np.where(valid, diff + k_max, 0)
    return bhat[:, idx] * valid


def _taylor_apply(G, X, tol=1e-16, max_terms=80, right=False):
    """X <- exp(G) X (or X exp(G) when right=True) for batched matrices.

    The number of terms is fixed in advance from the row-sum bound on G, so
    the loop runs without per-term norm scans.
    """
    gn = float(np.max(np.sum(np.abs(G), axis=-1)))
    if gn > 6.0:
        raise StageError("flow", "substep too large; raise n_steps")
    n_terms, bound = 1, gn
    while bound > tol and n_terms < max_terms:
        n_terms += 1
        bound *= gn / n_terms
    if bound > tol:
        raise StageError("flow", "Taylor step did not converge; raise n_steps")
    out = X.copy()
    term = X.copy()
    scratch = np.empty_like(X)
    for k in range(1, n_terms + 1):
        if right:
            np.matmul(term, G, out=scratch)
        else:
            np.matmul(G, term, out=scratch)
        scratch *= 1.0 / k
        term, scratch = scratch, term
        out += term
    return out


def _effective_phi_band(beta, j_max_op, l_max, tail_tol=1e-16):
    """Smallest phi-band whose exponential-harmonic tail is negligible.

    The generator J o b has phi-amplitude sigma ~ omega(j_max) * |beta_{l!=0}|;
    harmonics of the flow beyond band B carry <= sigma^B / B!.
    """
    if beta.nu == 0 or l_max == 0:
        return 0
    center = beta.coeffs[(beta.l_max,) * beta.nu]
    total = float(np.sum(np.abs(beta.coeffs))) - float(np.sum(np.abs(center)))
    sigma = abs(dispersion_omega(j_max_op)) * total
    band = 1
    fact = 1.0
    while band < l_max:
        fact *= band
        if sigma ** band / fact < tail_tol:
            return band
        band += 1
    return l_max


def flow_Psi(beta, n_steps, j_max_op, pad=1, band=None, return_inverse=True):
    """Time-one flow of d_tau u = (J o b(tau)) u, b = beta/(1+tau beta_x).

    Midpoint-exponential substeps on a phi-collocation grid; the generator is
    Hamiltonian so each factor is symplectic up to the series tolerance.  The
    phi grid covers only the flow's effective band (auto-detected unless
    `band` is given); harmonics beyond it are under the aliasing tolerance.
    Returns (Psi, Psi_inv) as ToeplitzOperators (Psi_inv None if not requested).
    """
    nu, l_max = beta.nu, beta.l_max
    if band is None:
        band = _effective_phi_band(beta, j_max_op, l_max)
    band = min(max(band, _min_band(beta)), l_max)
    phi_shape = tuple(next_fast_len(max(pad * (2 * band + 1), 2 * band + 1))
                      for _ in range(nu))
    nx = next_fast_len(2 * (2 * max(beta.j_max, j_max_op) + 1))
    shape = phi_shape + (nx,)
    bv = beta.values(shape).real
    bx = beta.dx().values(shape).real
    if float(np.max(np.abs(bx))) >= 1.0:
        raise DiffeomorphismError("sup|beta_x| >= 1")

    n = 2 * j_max_op + 1
    jj = np.arange(-j_max_op, j_max_op + 1)
    iom = 1j * dispersion_omega(jj)
    nflat = int(np.prod(phi_shape))
    Psi = np.broadcast_to(np.eye(n, dtype=complex), (nflat, n, n)).copy()
    Psi_inv = Psi.copy() if return_inverse else None

    h = 1.0 / n_steps
    for i in range(n_steps):
        tau = (i + 0.5) * h
        b = bv / (1.0 + tau * bx)
        bhat = fft(b, axis=-1) / nx
        k_keep = min(2 * j_max_op, nx // 2 - 1)
        centered = np.concatenate([bhat[..., -k_keep:], bhat[..., :k_keep + 1]],
                                  axis=-1).reshape(nflat, 2 * k_keep + 1)
        G = np.ascontiguousarray(
            (h * iom[None, :, None]) * _mult_matrices(centered, j_max_op))
        Psi = _taylor_apply(G, Psi)
        if return_inverse:
            Psi_inv = _taylor_apply(np.ascontiguousarray(-G), Psi_inv,
                                    right=True)
    Psi = Psi.reshape(phi_shape + (n, n))
    ops = []
    for arr in (Psi, Psi_inv.reshape(phi_shape + (n, n)) if return_inverse
                else None):
        if arr is None:
            ops.append(None)
            continue
        coeffs = fftn(arr, axes=tuple(range(nu))) / np.prod(phi_shape)
        ent = np.zeros((2 * l_max + 1,) * nu + (n, n), dtype=complex)
        bidx = [np.arange(-band, band + 1) % s for s in phi_shape]
        tgt = tuple(slice(l_max - band, l_max + band + 1) for _ in range(nu))
        ent[tgt] = coeffs[np.ix_(*bidx, np.arange(n), np.arange(n))]
        ops.append(ToeplitzOperator(nu, l_max, j_max_op, ent))
    return ops[0], ops[1]


def _min_band(beta):
    """Smallest band containing beta's own numerically nonzero phi content."""
    if beta.nu == 0:
        return 0
    mags = np.abs(beta.coeffs)
    scale = float(np.max(mags))
    if scale == 0.0:
        return 0
    rng = np.arange(-beta.l_max, beta.l_max + 1)
    band = 0
    for ax in range(beta.nu):
        other = tuple(i for i in range(beta.nu + 1) if i != ax)
        prof = np.max(mags, axis=other)
        nz = np.abs(rng[prof > 1e-15 * scale])
        band = max(band, int(np.max(nz)) if nz.size else 0)
    return band


# -- factorization diagnostics ----------------------------------------------


@dataclass
class FlowFactorization:
    A_tau: ToeplitzOperator
    Psi: ToeplitzOperator
    C: ToeplitzOperator
    theta: Symbol
    residual_smoothing: float
    c_minus_i_norm: float


def _theta_first_order(beta, xi_max):
    """First-order Theta correction: (3 i xi/(1+xi^2)) # B with
    B = integral_0^1 b(tau) d tau = beta log(1+beta_x)/beta_x (pointwise)."""
    shape = beta.grid_shape()
    bv = beta.values(shape).real
    bx = beta.dx().values(shape).real
    w = np.where(np.abs(bx) > 1e-12, bx, 1.0)
    ratio = np.where(np.abs(bx) > 1e-12, np.log1p(bx) / w,
                     1.0 - bx / 2.0 + bx ** 2 / 3.0)
    B = TorusFunction.from_values(bv * ratio, beta.nu, beta.l_max, beta.j_max)
    tail = multiplier_symbol(lambda xi: 3j * xi / (1.0 + xi.astype(float) ** 2),
                             -1.0, beta.nu, beta.l_max, beta.j_max, xi_max)
    return compose_exact(tail, function_symbol(B, xi_max))


def factorize_flow(Psi, beta, rho=3, pad=2):
    """Psi = A^1 o C with C = (A^1)^{-1} Psi; fits the order -1 correction.

    theta is the first-order in beta closed form; the residual C - I - Op(theta)
    is reported through a smoothing norm (majorant of <Dx>^{1/2}. <Dx>^{1/2}).
    """
    j_max_op = Psi.j_max
    A1_inv = build_A_tau_inverse(beta, 1.0, j_max_op, pad=pad)
    A1 = build_A_tau(beta, 1.0, j_max_op, pad=pad)
    C = compose(A1_inv, Psi)
    I = ToeplitzOperator.identity(Psi.nu, Psi.l_max, j_max_op)
    theta = _theta_first_order(beta, xi_max=j_max_op + beta.j_max)
    keep = max(2, j_max_op - 2 * beta.j_max - 2)
    resid = (C - I - quantize(theta, j_max_op)).restrict_interior(keep)
    smooth = majorant_norm(resid.dx_sandwich(0.5, 0.5), s=Psi.nu // 2 + 3)
    cmi = majorant_norm((C - I).restrict_interior(keep).dx_sandwich(0.5, 0.5),
                        s=Psi.nu // 2 + 3)
    return FlowFactorization(A_tau=A1, Psi=Psi, C=C, theta=theta,
                             residual_smoothing=smooth, c_minus_i_norm=cmi)


# -- Egorov transport --------------------------------------------------------


@dataclass
class EgorovSymbols:
    q_m: Symbol
    corrections: list  # Symbols of order m-1, ..., m-rho+1


def _cheb_nodes(n):
    return 0.5 * (1.0 - np.cos(np.pi * np.arange(n) / (n - 1)))


def _cheb_cumint(n):
    """Matrix mapping values at Chebyshev-Lobatto nodes on [0,1] to the values
    of the antiderivative (vanishing at 0) at the same nodes."""
    t = _cheb_nodes(n)
    M = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        ser = np.polynomial.chebyshev.Chebyshev.fit(2 * t - 1, e, deg=n - 1)
        integ = ser.integ()
        M[:, k] = 0.5 * (integ(2 * t - 1) - integ(-1.0))
    return M


def _trig_eval(chat, y, deriv=0):
    """Evaluate a centered x-Fourier series (and derivatives) at points y."""
    k_max = (chat.shape[-1] - 1) // 2
    ks = np.arange(-k_max, k_max + 1)
    weights = chat * (1j * ks) ** deriv
    E = np.exp(1j * y)
    acc = np.zeros(np.shape(y), dtype=complex)
    for idx in reversed(range(2 * k_max + 1)):
        acc = acc * E + weights[idx]
    return acc * np.exp(-1j * k_max * y)


def _invert_x_diffeo_at(bhat, t, z, newton_tol=1e-14, max_iter=60):
    """Solve x + t*beta(x) = z pointwise (beta given by coefficients bhat)."""
    x = z - t * _trig_eval(bhat, z).real
    for _ in range(max_iter):
        f = x + t * _trig_eval(bhat, x).real - z
        fp = 1.0 + t * _trig_eval(bhat, x, deriv=1).real
        dx = f / fp
        x = x - dx
        if np.max(np.abs(dx)) < newton_tol:
            return x
    raise DiffeomorphismError("characteristic inversion did not converge")


def egorov_transport(w, beta, rho, j_max_op=None, n_t=24, pad=4):
    """Transport of the symbol w by the flow of the weighted transport field.

    q_m is the exact change of variables along the explicit characteristics;
    the lower-order corrections solve their forced transport equations by
    spectral quadrature along the same characteristics.  `w` must provide
    exact xi-derivatives (AnalyticSymbol); a plain Symbol is interpolated.
    """
    if isinstance(w, Symbol):
        w = _interpolated_analytic(w)
    nu, l_max = beta.nu, beta.l_max
    if j_max_op is None:
        j_max_op = beta.j_max
    if rho < 3:
        raise ValueError("rho >= 3 required")
    K = rho - 1  # number of corrections
    xi_max = j_max_op
    xi = np.arange(-xi_max, xi_max + 1).astype(float)
    n_x = next_fast_len(pad * (2 * (j_max_op + beta.j_max) + 1))
    x = 2 * np.pi * np.arange(n_x) / n_x

    phi_shape = _phi_grid_shape(nu, l_max, pad=2)
    nphi = int(np.prod(phi_shape))
    bgrid = beta.values(phi_shape + (n_x,)).real

    t_nodes = _cheb_nodes(n_t)
    IM = _cheb_cumint(n_t)

    out_qm = np.empty((nphi, n_x, xi.size), dtype=complex)
    out_corr = [np.empty((nphi, n_x, xi.size), dtype=complex) for _ in range(K)]

    for p in range(nphi):
        bx_vals = bgrid.reshape(nphi, n_x)[p]
        bhat = fft(bx_vals) / n_x
        k_keep = min((n_x - 1) // 2, n_x // 2 - 1)
        bhat_c = np.concatenate([bhat[-k_keep:], bhat[:k_keep + 1]])
        if np.max(np.abs(_trig_eval(bhat_c, x, deriv=1).real)) >= 1.0:
            raise DiffeomorphismError("sup|beta_x| >= 1 on a phi slice")
        qm, corr = _egorov_slice(w, bhat_c, x, xi, K, t_nodes, IM)
        out_qm[p] = qm
        for k in range(K):
            out_corr[k][p] = corr[k]

    def to_symbol(vals, order):
        arr = vals.reshape(phi_shape + (n_x, xi.size))
        coeffs = fftn(fft(arr, axis=nu) / n_x, axes=tuple(range(nu))) / nphi
        sym = Symbol.zeros(order, nu, l_max, j_max_op + beta.j_max, xi_max)
        lidx = [np.arange(-l_max, l_max + 1) % s for s in phi_shape]
        jb = j_max_op + beta.j_max
        jidx = np.arange(-jb, jb + 1) % n_x
        grid = np.ix_(*lidx, jidx, np.arange(xi.size))
        sym.coeffs[...] = coeffs[grid]
        return sym

    q_m = to_symbol(out_qm, w.order)
    corrections = [to_symbol(out_corr[k], w.order - (k + 1)) for k in range(K)]
    return EgorovSymbols(q_m=q_m, corrections=corrections)


def _egorov_slice(w, bhat, x, xi, K, t_nodes, IM):
    """One phi slice of the transport; see module docstring for the scheme.

    Jets V_k^n(t) = d^n/d xi^n [q_{m-k}(t, characteristic(t))] evolve by
    d/dt V_k^n = n-jet of the forcing r_{m-k}; V_0 is constant in t.
    """
    n_t = t_nodes.size
    n_x, n_xi = x.size, xi.size

    # final-time characteristics: f(1,x) = x + beta, g(1,x) = 1/(1+beta_x)
    bx0 = _trig_eval(bhat, x).real
    bpx0 = _trig_eval(bhat, x, deriv=1).real
    f1 = x + bx0
    g1 = 1.0 / (1.0 + bpx0)

    # time-dependent transported points: ftil(t,x), gtil(t,x)
    ftil = np.empty((n_t, n_x))
    gtil = np.empty((n_t, n_x))
    for i, t in enumerate(t_nodes):
        ftil[i] = _invert_x_diffeo_at(bhat, t, f1)
        gtil[i] = (1.0 + t * _trig_eval(bhat, ftil[i], deriv=1).real) \
            / (1.0 + bpx0)

    need = [2 * (K - h) for h in range(K + 1)]  # jets required per level
    # V_0: constant in t
    jmax0 = need[0] + max(2, K + 1)
    V = [None] * (K + 1)
    V0 = np.empty((n_x, n_xi, jmax0 + 1), dtype=complex)
    eta1 = g1[:, None] * xi[None, :]
    for njet in range(jmax0 + 1):
        V0[..., njet] = (g1[:, None] ** njet) * w.eval(f1[:, None], eta1,
                                                       dxi=njet)
    V[0] = np.broadcast_to(V0, (n_t,) + V0.shape)

    # b(t, .) and y-derivatives at the transported points
    max_db = K + 2
    Bders = np.empty((n_t, max_db + 1, n_x), dtype=float)
    for i, t in enumerate(t_nodes):
        bvals = _trig_eval(bhat, x).real / (1.0 + t * _trig_eval(bhat, x,
                                                                 deriv=1).real)
        bh = fft(bvals) / n_x
        k_keep = (n_x - 1) // 2
        bh_c = np.concatenate([bh[-k_keep:], bh[:k_keep + 1]])
        for d in range(max_db + 1):
            Bders[i, d] = _trig_eval(bh_c, ftil[i], deriv=d).real

    eta = gtil[..., None] * xi[None, None, :]  # (t, x, xi)
    for k in range(1, K + 1):
        njets = need[k]
        F = np.zeros((n_t, n_x, n_xi, njets + 1), dtype=complex)
        for n in range(njets + 1):
            # -(1/i) b_yy (d_xi q_{m-k+1}) -> jet n
            F[..., n] += 1j * Bders[:, 2, :, None] \
                * gtil[..., None] ** (-1.0) * V[k - 1][..., 1 + n]
            for h in range(k):
                wexp = k - h + 1
                cw = 1.0 / ((1j ** wexp) * math.factorial(wexp))
                gw = gtil[..., None] ** (-float(wexp))
                lin = (1j * eta * Bders[:, wexp, :, None]
                       + Bders[:, wexp + 1, :, None])
                jet = V[h][..., wexp + n] * lin \
                    + n * V[h][..., wexp + n - 1] \
                    * (1j * gtil[..., None] * Bders[:, wexp, :, None])
                F[..., n] -= cw * gw * jet
        Vk = np.tensordot(IM, F, axes=(1, 0))
        V[k] = Vk

    q_m_final = V[0][0, ..., 0]
    corrections = [V[k][-1, ..., 0] for k in range(1, K + 1)]
    return q_m_final, corrections


def _interpolated_analytic(sym):
    """Wrap a grid Symbol as an evaluable symbol via spline interpolation.

    xi-derivatives come from the spline; accuracy is limited by the unit grid.
    Only meaningful for symbols smooth on the integer scale.
    """
    from scipy.interpolate import CubicSpline

    xi = np.arange(-sym.window, sym.window + 1)
    center = (sym.l_max,) * sym.nu

    class _Wrap:
        order = sym.order

        def eval(self, xvals, xivals, dxi=0):
            out = np.zeros(np.broadcast(xvals, xivals).shape, dtype=complex)
            for k in range(-sym.j_max, sym.j_max + 1):
                cs = CubicSpline(xi, sym.coeffs[center + (k + sym.j_max,)][
                    sym.xi_max - sym.window:sym.xi_max + sym.window + 1])
                out = out + np.exp(1j * k * np.asarray(xvals)) \
                    * cs(np.asarray(xivals).real, nu=dxi)
            return out

    return _Wrap()


def op_from_egorov(es, j_max_op):
    """Quantize q_m plus all corrections on |j| <= j_max_op."""
    out = quantize(es.q_m, j_max_op)
    for c in es.corrections:
        out = out + quantize(c, j_max_op)
    return out


# -- the regularized operator -----------------------------------------------


@dataclass
class OperatorBundle:
    """The operator omega.d_phi - J o (1 + a) + Q in Toplitz form."""
    a: TorusFunction
    Q: ToeplitzOperator = None

    def generator(self, j_max_op):
        """M_L with L = omega.d_phi + M_L, i.e. M_L = -J(1+a) + Q."""
        M = build_generator_part(self.a, j_max_op)
        if self.Q is not None:
            M = M + self.Q
        return M


def build_generator_part(a, j_max_op):
    """-J o (1 + a) as a ToeplitzOperator (row-scaled multiplication matrix)."""
    one = TorusFunction.zeros(a.nu, a.l_max, a.j_max)
    one._add_coeff((0,) * a.nu, 0, 1.0)
    mult = ToeplitzOperator.from_function(one + a, j_max_op)
    jj = np.arange(-j_max_op, j_max_op + 1)
    om = 1j * dispersion_omega(jj)
    mult.entries = -om[:, None] * mult.entries
    return mult


@dataclass
class RegularizedOperator:
    m: float
    R: ToeplitzOperator
    Psi: ToeplitzOperator
    Psi_inv: ToeplitzOperator
    straightening: object
    r_symbol: Symbol
    R_hat: ToeplitzOperator
    diagnostics: dict = field(default_factory=dict)


def conjugate_generator(M, Phi, Phi_inv, omega):
    """M' with omega.d_phi + M' = Phi (omega.d_phi + M) Phi^{-1}.

    M' = Phi (omega.d_phi Phi^{-1}) + Phi M Phi^{-1} in the Toplitz algebra.
    """
    return compose(Phi, Phi_inv.omega_dphi(omega)) + compose(compose(Phi, M),
                                                             Phi_inv)


def symbol_from_operator(A, x_band):
    """Exact symbol extraction a_hat(l, k; j') = A_{k+j'}^{j'}(l), |k| <= x_band."""
    sym = Symbol.zeros(0.0, A.nu, A.l_max, x_band, A.j_max)
    jj = np.arange(-A.j_max, A.j_max + 1)
    for k in range(-x_band, x_band + 1):
        for col, jp in enumerate(jj):
            row = k + jp
            if abs(row) <= A.j_max:
                sym.coeffs[..., k + x_band, col] = \
                    A.entries[..., row + A.j_max, col]
    return sym


def regularize(bundle, omega, straight, j_max_op, n_steps=32, rho=4,
               tol_transport=None, with_smoothing_table=False):
    """Conjugate L = omega.d_phi + M_L by the flow of the straightening.

    Returns m and R = L^+ - (omega.d_phi - m J), verifying that the transported
    transport coefficient is the constant m - 1 (within tol_transport) and
    reporting structure and smoothing diagnostics.
    """
    m = straight.m
    beta = straight.beta
    if tol_transport is None:
        tol_transport = 0.05 * bundle.a.sup_norm() + 1e-9
    Psi, Psi_inv = flow_Psi(beta, n_steps, j_max_op)
    inv_defect = majorant_norm(compose(Psi, Psi_inv)
                               - ToeplitzOperator.identity(Psi.nu, Psi.l_max,
                                                           j_max_op), 0.0)
    M_L = bundle.generator(j_max_op)
    M_plus = conjugate_generator(M_L, Psi, Psi_inv, omega)
    R = M_plus + ToeplitzOperator.j_operator(M_L.nu, M_L.l_max, j_max_op, m=m)
    R = R.zero_x_average_row_col()

    # transported-coefficient check: a transport leftover delta*d_x shows as
    # a xi-independent i*xi slope of R's symbol, while genuine order -1
    # content drifts like |r|/xi; the allowance is self-calibrated from the
    # observed symbol size at the probe frequency
    sym = symbol_from_operator(R, x_band=min(2 * bundle.a.j_max, j_max_op))
    x2 = max(4, (2 * j_max_op) // 3)
    x1 = max(2, x2 // 2)
    slope = float(np.max(np.abs(
        (sym._xi_slice(x2) - sym._xi_slice(x2 - 2)) / 2.0)))
    hi, lo = (float(np.max(np.abs(sym._xi_slice(x)))) for x in (x2, x1))
    # a symbol growing in xi is itself a transport leftover: no allowance
    allowance = 4.0 * hi / x2 if hi <= lo else 0.0
    if slope > max(tol_transport, allowance):
        raise StageError(
            "regularize",
            f"transported transport coefficient not constant: "
            f"i*xi-slope {slope:.3e} > {max(tol_transport, allowance):.1e} "
            f"(straightening mismatch)")

    struct = structure_check(M_plus)
    r_sym = symbol_from_operator(R, x_band=min(2 * bundle.a.j_max, j_max_op))
    r_sym.order = -1.0
    R_hat = R - quantize(r_sym, j_max_op)
    diagnostics = {
        "transport_slope": float(slope),
        "inverse_defect": float(inv_defect),
        "structure": struct,
        "order_minus_one_norm": float(
            majorant_norm(R.dx_sandwich(0.5, 0.5), 0.0)),
        "split_residual_norm": float(majorant_norm(R_hat, 0.0)),
    }
    if with_smoothing_table:
        diagnostics["smoothing"] = smoothing_constants(R, rho=rho,
                                                       b=max(0, rho - 2))
    return RegularizedOperator(m=m, R=R, Psi=Psi, Psi_inv=Psi_inv,
                               straightening=straight, r_symbol=r_sym,
                               R_hat=R_hat, diagnostics=diagnostics)
