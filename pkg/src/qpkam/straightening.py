"""Diophantine checks and the quasi-periodic transport straightening.

Finds the constant m and the torus diffeomorphism x -> x + beta~(phi, x) with
    omega . d_phi beta~ - (1 + a)(1 + beta~_x) = -m,
by a quasi-Newton iteration whose linearized steps invert the constant
coefficient transport operator omega . d_phi - m d_x on the lattice.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergenceError, SmallDivisorError
from .fourier import (TorusFunction, compose_diffeo, invert_diffeo,
                      pointwise_product)

__all__ = [
    "FrequencyConfig",
    "StraighteningResult",
    "diophantine_zeroth",
    "melnikov_first",
    "transport_homological_solve",
    "straighten_iterate",
    "golden_omega",
]


@dataclass
class FrequencyConfig:
    nu: int
    L: float
    gamma: float
    tau: float
    omega: np.ndarray

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        if not (0.0 < self.gamma < 1.0):
            raise ValueError(f"gamma = {self.gamma} outside (0,1)")
        if self.tau < 2 * self.nu + 6:
            raise ValueError(f"tau = {self.tau} < 2 nu + 6 = {2 * self.nu + 6}")
        if self.omega.shape != (self.nu,):
            raise ValueError("omega has wrong dimension")
        if np.any(self.omega < self.L) or np.any(self.omega > 2 * self.L):
            raise ValueError("omega outside the box [L, 2L]^nu")


@dataclass
class StraighteningResult:
    m: float
    beta: TorusFunction        # A^tau direction: id + beta inverts id + beta~
    beta_tilde: TorusFunction  # straightening diffeomorphism x -> x + beta~
    residual: float
    iterations: int
    history: list = field(default_factory=list)


def golden_omega(nu, L):
    """Deterministic strongly non-resonant frequency in [L, 2L]^nu.

    Components 1 + frac(sqrt(p)) over the first primes, scaled by L.
    """
    primes = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    vals = []
    for i in range(nu):
        r = np.sqrt(primes[i])
        vals.append(1.0 + (r - np.floor(r)))
    # the golden ratio fractional part leads for the first component
    vals[0] = 1.0 + 0.5 * (np.sqrt(5.0) - 1.0)
    return L * np.asarray(vals)


def _ell_iter(nu, ell_max):
    """All nonzero integer vectors with |l|_inf <= ell_max."""
    rng = range(-ell_max, ell_max + 1)
    for ell in itertools.product(rng, repeat=nu):
        if any(ell):
            yield np.asarray(ell)


def diophantine_zeroth(omega, gamma, ell_max):
    """|omega . l| >= 2 gamma <l>^{-nu} for all 0 < |l|_inf <= ell_max."""
    omega = np.asarray(omega, dtype=float)
    nu = omega.size
    if ell_max < 1:
        return True
    for ell in _ell_iter(nu, ell_max):
        bracket = max(1.0, np.sum(np.abs(ell)))
        if abs(float(omega @ ell)) < 2.0 * gamma / bracket ** nu:
            return False
    return True


def melnikov_first(omega, m, gamma, tau, ell_max, j_max=None):
    """First-order condition |omega . l - m j| >= 2 gamma <l>^{-tau}.

    Only |j| <= 4 |omega|_2 |l| / m can violate the bound (plus a unit margin),
    so the j scan is pruned accordingly; j_max optionally caps it.
    """
    omega = np.asarray(omega, dtype=float)
    nu = omega.size
    if m <= 0:
        raise ValueError("m must be positive")
    omega_norm = float(np.linalg.norm(omega))
    for ell in _ell_iter(nu, ell_max):
        bracket = max(1.0, np.sum(np.abs(ell)))
        floor = 2.0 * gamma / bracket ** tau
        dot = float(omega @ ell)
        j_bound = int(np.ceil(4.0 * omega_norm * np.sum(np.abs(ell)) / m)) + 1
        if j_max is not None:
            j_bound = min(j_bound, j_max)
        for j in range(-j_bound, j_bound + 1):
            if j == 0:
                continue
            if abs(dot - m * j) < floor:
                return False
    # l = 0: |m j| >= 2 gamma always holds for gamma < m/2
    return not (2.0 * gamma > m)


def transport_homological_solve(a, omega, m, gamma, tau, include_j0=False):
    """Solve omega . d_phi beta - m beta_x = a - <a> on the lattice.

    beta_hat(l, j) = a_hat(l, j) / (i (omega . l - m j)) for j != 0; the j = 0
    slab is dropped (its forcing sits in the solvability constant) unless
    include_j0 is set, in which case the l != 0, j = 0 modes are solved with
    divisor i omega . l.  Divisors under gamma <l>^{-tau} raise
    SmallDivisorError naming the mode.
    """
    omega = np.asarray(omega, dtype=float)
    nu, l_max, j_max = a.nu, a.l_max, a.j_max
    ells = np.indices((2 * l_max + 1,) * nu).reshape(nu, -1).T - l_max
    dots = ells @ omega
    l1 = np.abs(ells).sum(axis=1)
    bracket = np.maximum(1.0, l1)
    jrange = np.arange(-j_max, j_max + 1)

    div = dots[:, None] - m * jrange[None, :]
    floor = (gamma / bracket ** tau)[:, None] * np.ones_like(jrange, dtype=float)
    forcing = a.coeffs.reshape(len(ells), len(jrange)).copy()

    solve_mask = jrange[None, :] != 0
    if include_j0:
        solve_mask = solve_mask | ((l1[:, None] > 0) & (jrange[None, :] == 0))

    active = solve_mask & (np.abs(forcing) > 0)
    bad = active & (np.abs(div) < floor)
    if np.any(bad):
        k = np.argwhere(bad)[0]
        ell = tuple(int(e) for e in ells[k[0]])
        j = int(jrange[k[1]])
        raise SmallDivisorError(float(div[k[0], k[1]]), float(floor[k[0], k[1]]),
                                {"ell": ell, "j": j})

    out = np.zeros_like(forcing)
    out[active] = forcing[active] / (1j * div[active])
    beta = TorusFunction(nu, l_max, j_max,
                         out.reshape(a.coeffs.shape))
    beta.enforce_reality()
    return beta


def straighten_iterate(a, omega, gamma, tau, tol=1e-12, max_iter=30,
                       delta_star=0.3):
    """Quasi-Newton straightening of omega.d_phi - (1+a) d_x.

    Each sweep computes the current transported coefficient, absorbs its mean
    into m, solves the constant-coefficient transport equation for a corrector
    and composes it into the diffeomorphism.  Returns a StraighteningResult.
    """
    omega = np.asarray(omega, dtype=float)
    sup_a = a.sup_norm()
    if sup_a > delta_star:
        raise NonConvergenceError(
            f"sup|a| = {sup_a:.3f} above the contraction threshold {delta_star}",
            residual=sup_a)

    one = TorusFunction.zeros(a.nu, a.l_max, a.j_max)
    one._add_coeff((0,) * a.nu, 0, 1.0)

    beta_tilde = TorusFunction.zeros(a.nu, a.l_max, a.j_max)
    m = 1.0
    history = []
    residual = np.inf
    for it in range(max_iter):
        # c_n(phi, y) = [w.d_phi bt - (1+a)(1+bt_x)] composed with x = y + beta
        expr = beta_tilde.dphi_omega(omega) - pointwise_product(
            one + a, one + beta_tilde.dx())
        beta = invert_diffeo(beta_tilde) if it > 0 else (-1.0) * beta_tilde
        c = compose_diffeo(expr, beta)
        m = -float(c.mean().real)
        resid_fun = expr + m * one
        residual = resid_fun.sup_norm()
        history.append(residual)
        if residual <= tol:
            break
        g = c + m * one  # zero-mean forcing in straightened coordinates
        try:
            v = transport_homological_solve(g, omega, m, gamma, tau,
                                            include_j0=True)
        except SmallDivisorError:
            raise
        v = -1.0 * v
        beta_tilde = beta_tilde + compose_diffeo(v, beta_tilde)
        beta_tilde.enforce_reality()
    else:
        raise NonConvergenceError(
            f"straightening did not reach tol {tol} in {max_iter} sweeps",
            residual=residual, history=history)

    beta = invert_diffeo(beta_tilde)
    return StraighteningResult(m=m, beta=beta, beta_tilde=beta_tilde,
                               residual=residual, iterations=it + 1,
                               history=history)
