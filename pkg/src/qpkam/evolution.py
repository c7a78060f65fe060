"""Spectral time integration of d_t u = X(omega t) u and reduced dynamics.

X(phi) = J o (1 + a(phi, .)) - Q(phi) acts on the x-modes; the full evolution
uses exponential-midpoint steps with the frozen generator, the reduced one
evaluates u(t) = Phi^{-1}(omega t) diag(e^{i d_j t}) Phi(0) u0 by phase-slicing
the diagonalizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import QpkamError, StageError
from .symbols import dispersion_omega

__all__ = [
    "Trajectory",
    "frozen_generator",
    "evolve_full",
    "evolve_reduced",
    "norm_stability_report",
]


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray          # (n_times, 2 j_max + 1) x-Fourier coefficients
    norms: dict                 # s -> array of H^s(T) norms per snapshot
    j_max: int


def _x_sobolev_norms(states, j_max, s_list):
    jj = np.arange(-j_max, j_max + 1)
    out = {}
    for s in s_list:
        w = np.maximum(1.0, np.abs(jj)) ** s
        out[s] = np.sqrt(np.sum(np.abs(states) ** 2 * w ** 2, axis=-1))
    return out


def frozen_generator(a, Q, omega, t, j_max):
    """X(omega t) = J o (1 + a(omega t, .)) - Q(omega t) as an x-mode matrix."""
    nu = a.nu
    phi = (np.asarray(omega) * t) % (2 * np.pi)
    # a(omega t, x) Fourier coefficients in x: sum_l a_hat(l, k) e^{i l phi}
    phase = np.ones((2 * a.l_max + 1,) * nu, dtype=complex)
    rng = np.arange(-a.l_max, a.l_max + 1)
    for ax in range(nu):
        shape = [1] * nu
        shape[ax] = -1
        phase = phase * np.exp(1j * phi[ax] * rng).reshape(shape)
    ahat = np.tensordot(phase, a.coeffs, axes=(tuple(range(nu)),
                                               tuple(range(nu))))
    n = 2 * j_max + 1
    jj = np.arange(-j_max, j_max + 1)
    diff = jj[:, None] - jj[None, :]
    valid = np.abs(diff) <= a.j_max
    M = np.eye(n, dtype=complex) \
        + np.where(valid, ahat[np.where(valid, diff + a.j_max, 0)], 0.0)
    X = (1j * dispersion_omega(jj))[:, None] * M
    if Q is not None:
        X = X - Q.phase_slice(phi)
    return X


def _expm_apply(X, u, tol=1e-15, max_terms=80):
    term = u.copy()
    out = u.copy()
    for k in range(1, max_terms + 1):
        term = X @ term / k
        out += term
        if np.max(np.abs(term)) < tol * max(np.max(np.abs(out)), 1e-300):
            return out
    raise StageError("evolution", "generator Taylor did not converge; "
                                  "reduce dt")


def evolve_full(u0, a, Q, omega, T, dt, s_list, j_max=None, cfl_limit=2.5,
                record_every=1):
    """Exponential-midpoint integration of the x-truncated linear system.

    u0: centered complex array of x-coefficients (or TorusFunction-like with
    a .coeffs attribute of that shape).  Records H^s(T) norms per snapshot.
    """
    u = np.asarray(getattr(u0, "coeffs", u0), dtype=complex).copy()
    if j_max is None:
        j_max = (u.size - 1) // 2
    omega = np.asarray(omega, dtype=float)
    stiff = max(float(np.linalg.norm(omega)),
                abs(dispersion_omega(j_max)) * (1.0 + a.sup_norm()))
    if dt * stiff > cfl_limit:
        raise StageError(
            "evolution", f"dt={dt} too large: dt*max(|omega|, m*omega(j_max))"
                         f" = {dt * stiff:.2f} > {cfl_limit}")
    n_steps = int(round(T / dt))
    times = [0.0]
    states = [u.copy()]
    for i in range(n_steps):
        t_mid = (i + 0.5) * dt
        X = frozen_generator(a, Q, omega, t_mid, j_max)
        u = _expm_apply(dt * X, u)
        if (i + 1) % record_every == 0 or i == n_steps - 1:
            times.append((i + 1) * dt)
            states.append(u.copy())
    states = np.asarray(states)
    return Trajectory(times=np.asarray(times), states=states,
                      norms=_x_sobolev_norms(states, j_max, s_list),
                      j_max=j_max)


def evolve_reduced(u0, Phi, Phi_inv, spectral, omega, times, s_list):
    """u(t) = Phi^{-1}(omega t) diag(e^{i d_j t}) Phi(0) u0.

    Phi(phi) is evaluated by summing e^{i l phi} A_j^{j'}(l) over the stored
    l window (phase slicing).
    """
    u = np.asarray(getattr(u0, "coeffs", u0), dtype=complex)
    omega = np.asarray(omega, dtype=float)
    d = spectral.d
    j_max = spectral.j_max
    P0 = Phi.phase_slice(np.zeros_like(omega))
    v0 = P0 @ u
    states = []
    for t in times:
        vt = np.exp(1j * d * t) * v0
        Pinv_t = Phi_inv.phase_slice(omega * t)
        states.append(Pinv_t @ vt)
    states = np.asarray(states)
    return Trajectory(times=np.asarray(times, dtype=float), states=states,
                      norms=_x_sobolev_norms(states, j_max, s_list),
                      j_max=j_max)


def norm_stability_report(traj, s):
    """(c_lower, c_upper): min/max of ||u(t)||_s / ||u0||_s  - 1."""
    norms = traj.norms[s]
    if norms[0] == 0.0:
        raise QpkamError("norm stability undefined for u0 = 0")
    ratios = norms / norms[0]
    return float(np.min(ratios) - 1.0), float(np.max(ratios) - 1.0)
