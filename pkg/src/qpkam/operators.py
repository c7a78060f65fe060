"""Toplitz-in-time operators: action, algebra, majorant and tame diagnostics.

An operator A acting on functions of (phi, x) whose matrix elements depend on
the time-Fourier indices only through their difference is stored as
entries[l..., j, j'] = A_j^{j'}(l) on |l_i| <= l_max, |j|,|j'| <= j_max.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import fftn, ifftn, next_fast_len

from .errors import NonConvergenceError
from .fourier import TorusFunction, ell1_norms, sobolev_weights
from .symbols import dispersion_omega, xi_bracket

__all__ = [
    "ToeplitzOperator",
    "apply_operator",
    "compose",
    "majorant_norm",
    "modulo_tame_constant",
    "m_sharp",
    "smoothing_constants",
    "project_ell",
    "weight_dphi",
    "structure_check",
    "operator_to_csv",
    "omega_form",
    "toeplitz_expm",
]


@dataclass
class ToeplitzOperator:
    nu: int
    l_max: int
    j_max: int
    entries: np.ndarray  # (2 l_max+1,)*nu + (2 j_max+1, 2 j_max+1)
    is_real: bool = False
    is_hamiltonian: bool = False

    def __post_init__(self):
        n = 2 * self.j_max + 1
        expected = (2 * self.l_max + 1,) * self.nu + (n, n)
        if self.entries.shape != expected:
            raise ValueError(f"entry shape {self.entries.shape} != {expected}")

    # -- constructors ----------------------------------------------------

    @classmethod
    def zeros(cls, nu, l_max, j_max):
        n = 2 * j_max + 1
        shape = (2 * l_max + 1,) * nu + (n, n)
        return cls(nu, l_max, j_max, np.zeros(shape, dtype=complex))

    @classmethod
    def identity(cls, nu, l_max, j_max):
        A = cls.zeros(nu, l_max, j_max)
        idx = (l_max,) * nu
        A.entries[idx][np.diag_indices(2 * j_max + 1)] = 1.0
        return A

    @classmethod
    def diag_multiplier(cls, nu, l_max, j_max, f):
        """phi-independent Fourier multiplier diag(f(j))."""
        A = cls.zeros(nu, l_max, j_max)
        j = np.arange(-j_max, j_max + 1)
        idx = (l_max,) * nu
        A.entries[idx][np.diag_indices(2 * j_max + 1)] = f(j)
        return A

    @classmethod
    def j_operator(cls, nu, l_max, j_max, m=1.0):
        """m * J = m * diag(i omega(j))."""
        return cls.diag_multiplier(nu, l_max, j_max,
                                   lambda j: 1j * m * dispersion_omega(j))

    @classmethod
    def from_function(cls, u, j_max=None):
        """Multiplication operator: A_j^{j'}(l) = u_hat(l, j-j')."""
        if j_max is None:
            j_max = u.j_max
        A = cls.zeros(u.nu, u.l_max, j_max)
        jj = np.arange(-j_max, j_max + 1)
        for col, jp in enumerate(jj):
            k = jj - jp
            valid = np.abs(k) <= u.j_max
            rows = np.where(valid)[0]
            A.entries[..., rows, col] = u.coeffs[..., k[valid] + u.j_max]
        return A

    def copy(self):
        return ToeplitzOperator(self.nu, self.l_max, self.j_max,
                                self.entries.copy(), self.is_real,
                                self.is_hamiltonian)

    # -- algebra ----------------------------------------------------------

    def __add__(self, other):
        self._check(other)
        return ToeplitzOperator(self.nu, self.l_max, self.j_max,
                                self.entries + other.entries)

    def __sub__(self, other):
        self._check(other)
        return ToeplitzOperator(self.nu, self.l_max, self.j_max,
                                self.entries - other.entries)

    def __mul__(self, scalar):
        return ToeplitzOperator(self.nu, self.l_max, self.j_max,
                                self.entries * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def _check(self, other):
        if (self.nu, self.l_max, self.j_max) != (other.nu, other.l_max, other.j_max):
            raise ValueError("incompatible operator truncations")

    def dagger(self):
        """Conjugate transpose: (A*)_j^{j'}(l) = conj(A_{j'}^{j}(-l))."""
        rev = tuple([slice(None, None, -1)] * self.nu)
        ent = np.conj(np.swapaxes(self.entries[rev], -1, -2))
        return ToeplitzOperator(self.nu, self.l_max, self.j_max, ent)

    def omega_dphi(self, omega):
        """Entries of (omega . d_phi A): multiply A_j^{j'}(l) by i omega.l."""
        phase = _omega_dot_ell(self.nu, self.l_max, omega)
        return ToeplitzOperator(self.nu, self.l_max, self.j_max,
                                self.entries * (1j * phase)[..., None, None])

    def dphi_pow(self, bvec):
        """Entrywise (i l)^bvec per frequency axis (phi-derivatives)."""
        fac = np.ones((2 * self.l_max + 1,) * self.nu, dtype=complex)
        rng = np.arange(-self.l_max, self.l_max + 1)
        for ax, b in enumerate(bvec):
            shape = [1] * self.nu
            shape[ax] = -1
            fac = fac * (1j * rng.reshape(shape)) ** b
        return ToeplitzOperator(self.nu, self.l_max, self.j_max,
                                self.entries * fac[..., None, None])

    def commutator_dx(self):
        """[A, d_x]: entrywise i (j' - j) A_j^{j'}(l)."""
        j = np.arange(-self.j_max, self.j_max + 1)
        fac = 1j * (j[None, :] - j[:, None])
        return ToeplitzOperator(self.nu, self.l_max, self.j_max,
                                self.entries * fac)

    def dx_sandwich(self, m1, m2):
        """<D_x>^{m1} A <D_x>^{m2} with <j> = (1+j^2)^(1/2)."""
        j = np.arange(-self.j_max, self.j_max + 1)
        w1 = xi_bracket(j) ** m1
        w2 = xi_bracket(j) ** m2
        return ToeplitzOperator(self.nu, self.l_max, self.j_max,
                                self.entries * w1[:, None] * w2[None, :])

    def majorant(self):
        return ToeplitzOperator(self.nu, self.l_max, self.j_max,
                                np.abs(self.entries).astype(complex))

    def zero_x_average_row_col(self):
        """Project out the j=0 row and column (phase space has zero x-average)."""
        out = self.copy()
        out.entries[..., self.j_max, :] = 0.0
        out.entries[..., :, self.j_max] = 0.0
        return out

    def ell_zero_diagonal(self):
        """[A]: the l=0, j-diagonal part (a Fourier multiplier)."""
        idx = (self.l_max,) * self.nu
        return np.diagonal(self.entries[idx]).copy()

    def remove_ell_zero_diagonal(self):
        out = self.copy()
        idx = (self.l_max,) * self.nu
        n = 2 * self.j_max + 1
        out.entries[idx][np.diag_indices(n)] = 0.0
        return out

    def phase_slice(self, phi):
        """A(phi) as a (2 j_max+1)^2 matrix: sum_l e^{i l phi} A_j^{j'}(l)."""
        phase = np.ones((2 * self.l_max + 1,) * self.nu, dtype=complex)
        rng = np.arange(-self.l_max, self.l_max + 1)
        for ax in range(self.nu):
            shape = [1] * self.nu
            shape[ax] = -1
            phase = phase * np.exp(1j * phi[ax] * rng).reshape(shape)
        return np.tensordot(phase, self.entries, axes=(tuple(range(self.nu)),
                                                       tuple(range(self.nu))))

    def max_abs(self):
        return float(np.max(np.abs(self.entries)))

    def crop_ell(self, l_max):
        """Restrict the Toplitz window to |l_i| <= l_max."""
        if l_max == self.l_max:
            return self
        if l_max > self.l_max:
            raise ValueError("can only crop to a smaller window")
        sl = tuple(slice(self.l_max - l_max, self.l_max + l_max + 1)
                   for _ in range(self.nu))
        return ToeplitzOperator(self.nu, l_max, self.j_max,
                                self.entries[sl].copy())

    def restrict_interior(self, j_keep, ell_keep=None):
        """Zero all entries with |j| or |j'| beyond j_keep (and |l|_inf beyond
        ell_keep): edge-truncation effects are excluded from diagnostics."""
        out = self.copy()
        jj = np.abs(np.arange(-self.j_max, self.j_max + 1))
        mask = (jj[:, None] <= j_keep) & (jj[None, :] <= j_keep)
        out.entries = out.entries * mask
        if ell_keep is not None:
            rng = np.abs(np.arange(-self.l_max, self.l_max + 1))
            for ax in range(self.nu):
                shape = [1] * (self.nu + 2)
                shape[ax] = -1
                out.entries = out.entries * (rng <= ell_keep).reshape(shape)
        return out

    # -- dense oracle ------------------------------------------------------

    def dense(self):
        """Flattened dense matrix on the (l, j) lattice (test oracle).

        Row/column index order: (l_1, ..., l_nu, j) with centered ranges, C order.
        Entries for |l_row - l_col| > l_max are zero (Toplitz truncation).
        """
        L = 2 * self.l_max + 1
        n = 2 * self.j_max + 1
        ells = np.indices((L,) * self.nu).reshape(self.nu, -1).T - self.l_max
        nl = ells.shape[0]
        out = np.zeros((nl * n, nl * n), dtype=complex)
        for r, lr in enumerate(ells):
            for c, lc in enumerate(ells):
                d = lr - lc
                if np.all(np.abs(d) <= self.l_max):
                    idx = tuple(d + self.l_max)
                    out[r * n:(r + 1) * n, c * n:(c + 1) * n] = self.entries[idx]
        return out


def _omega_dot_ell(nu, l_max, omega):
    omega = np.asarray(omega, dtype=float)
    out = np.zeros((2 * l_max + 1,) * nu)
    rng = np.arange(-l_max, l_max + 1)
    for ax in range(nu):
        shape = [1] * nu
        shape[ax] = -1
        out = out + omega[ax] * rng.reshape(shape)
    return out


# -- action and composition -----------------------------------------------


def _lift_fft(arr, nu, pad, trailing):
    out = np.zeros(pad + trailing, dtype=complex)
    l_max = (arr.shape[0] - 1) // 2
    idx = [np.arange(-l_max, l_max + 1) % n for n in pad]
    grid = np.ix_(*idx, *[np.arange(s) for s in trailing])
    out[grid] = arr
    return fftn(out, axes=tuple(range(nu)), workers=-1)


def _crop_ifft(arr, nu, l_max):
    prod = ifftn(arr, axes=tuple(range(nu)), workers=-1)
    idx = [np.arange(-l_max, l_max + 1) % n for n in arr.shape[:nu]]
    grid = np.ix_(*idx, *[np.arange(s) for s in arr.shape[nu:]])
    return prod[grid]


def _fft_pad(nu, l_max, pad):
    """FFT grid for l-convolutions: pad=2 is exact for in-band results;
    pad=1 is the circular Galerkin closure (folded tails documented)."""
    if pad <= 1:
        return ((2 * l_max + 1,) * nu)
    return tuple(next_fast_len(2 * (2 * l_max + 1)) for _ in range(nu))


def apply_operator(A, u, pad=2):
    """(Au)_{l j} = sum_{l1+l2=l, j'} A_j^{j'}(l1) u_{l2 j'}, on the lattice."""
    if (A.nu, A.l_max, A.j_max) != (u.nu, u.l_max, u.j_max):
        raise ValueError("operator/function truncations differ")
    pad = _fft_pad(A.nu, A.l_max, pad)
    n = 2 * A.j_max + 1
    Af = _lift_fft(A.entries, A.nu, pad, (n, n))
    uf = _lift_fft(u.coeffs, u.nu, pad, (n,))
    vals = np.matmul(Af, uf[..., None])[..., 0]
    coeffs = _crop_ifft(vals, A.nu, A.l_max)
    return TorusFunction(u.nu, u.l_max, u.j_max, coeffs)


def compose(A, B, pad=2):
    """(AB)_j^{j'}(l) = sum_{j1, l1+l2=l} A_j^{j1}(l1) B_{j1}^{j'}(l2).

    Convolution in l is computed by FFT and projected back to |l| <= l_max
    (Galerkin closure).  pad=1 evaluates the convolution circularly on the
    stored window: exact up to folded spectral tails, for perturbative loops.
    """
    A._check(B)
    pad = _fft_pad(A.nu, A.l_max, pad)
    n = 2 * A.j_max + 1
    Af = _lift_fft(A.entries, A.nu, pad, (n, n))
    Bf = _lift_fft(B.entries, B.nu, pad, (n, n))
    Cf = np.matmul(Af, Bf)
    return ToeplitzOperator(A.nu, A.l_max, A.j_max, _crop_ifft(Cf, A.nu, A.l_max))


def toeplitz_expm(A, tol=1e-14, max_terms=60, pad=2):
    """exp(A) in the truncated Toplitz algebra, scaling and squaring.

    The series is truncated when the term's max-entry estimate falls under
    tol relative to A's scale; each squaring re-projects onto the Toplitz
    support.
    """
    scale = A.max_abs() * (2 * A.j_max + 1)  # crude norm proxy
    nsq = max(0, int(np.ceil(np.log2(max(scale, 1e-300) / 0.5))))
    nsq = min(nsq, 40)
    S = A * (0.5 ** nsq)
    out = ToeplitzOperator.identity(A.nu, A.l_max, A.j_max)
    term = ToeplitzOperator.identity(A.nu, A.l_max, A.j_max)
    floor = tol * min(1.0, max(A.max_abs(), 1e-300))
    for k in range(1, max_terms + 1):
        term = compose(term, S, pad=pad) * (1.0 / k)
        out = out + term
        if term.max_abs() < floor:
            break
    else:
        raise NonConvergenceError("exponential series did not settle",
                                  residual=term.max_abs())
    for _ in range(nsq):
        out = compose(out, out, pad=pad)
    return out


# -- norms and diagnostics --------------------------------------------------


def majorant_norm(A, s, tol=1e-11, max_iter=1000):
    """Operator norm of the entrywise-absolute-value matrix on H^s.

    Power iteration on B^T B where B = W |A| W^{-1} is the weighted majorant
    acting on coefficient vectors; deterministic all-ones start.  The
    operator's FFT is precomputed once; each iterate costs one small FFT pair.
    """
    scale = A.max_abs()
    if scale == 0.0:
        return 0.0
    w = sobolev_weights(A.nu, A.l_max, A.j_max, s)
    pad = _fft_pad(A.nu, A.l_max, 2)
    n = 2 * A.j_max + 1
    absE = np.abs(A.entries) / scale
    Af = _lift_fft(absE, A.nu, pad, (n, n))
    rev = tuple([slice(None, None, -1)] * A.nu)
    absET = np.abs(np.swapaxes(absE[rev], -1, -2))
    ATf = _lift_fft(absET, A.nu, pad, (n, n))
    axes = tuple(range(A.nu))

    def act(vec, Of):
        uf = _lift_fft(vec.astype(complex), A.nu, pad, (n,))
        out = np.matmul(Of, uf[..., None])[..., 0]
        return _crop_ifft(out, A.nu, A.l_max).real

    # Lanczos on B^T B (clustered top singular values converge slowly under
    # plain power iteration); falls back to power iteration if ARPACK stalls
    from scipy.sparse.linalg import LinearOperator, eigsh

    shape = w.shape

    def BtB(vec):
        v = vec.reshape(shape)
        Bv = act(v * (1.0 / w), Af) * w
        return (act(Bv * w, ATf) * (1.0 / w)).reshape(-1)

    Lop = LinearOperator((w.size, w.size), matvec=BtB, dtype=float)
    v0 = np.ones(w.size) / np.sqrt(w.size)
    try:
        vals = eigsh(Lop, k=1, which="LA", tol=1e-10, v0=v0,
                     maxiter=max_iter, return_eigenvectors=False)
        return float(np.sqrt(max(vals[0], 0.0))) * scale
    except Exception:
        pass
    v = v0.copy()
    lam = 0.0
    for it in range(max_iter):
        BtBv = BtB(v)
        new_lam = float(np.sqrt(max(np.dot(v, BtBv), 0.0)))
        nrm = np.linalg.norm(BtBv)
        if nrm == 0.0:
            return 0.0
        v = BtBv / nrm
        if it > 2 and abs(new_lam - lam) <= tol * max(new_lam, 1e-300):
            return new_lam * scale
        lam = new_lam
    raise NonConvergenceError("majorant power iteration did not converge",
                              residual=abs(new_lam - lam) * scale)


def weight_dphi(A, b):
    """<d_phi>^b A: multiply the l slab by <l>^b = max(1,|l|_1)^b."""
    l1 = np.maximum(1.0, ell1_norms(A.nu, A.l_max))
    return ToeplitzOperator(A.nu, A.l_max, A.j_max,
                            A.entries * (l1 ** b)[..., None, None])


def project_ell(A, K, complement=False):
    """Pi_K A: keep entries with |l|_1 <= K (or the complement)."""
    l1 = ell1_norms(A.nu, A.l_max)
    mask = l1 <= K
    if complement:
        mask = ~mask
    return ToeplitzOperator(A.nu, A.l_max, A.j_max,
                            A.entries * mask[..., None, None])


def _probe_family(A, s, s0, seed=1234, n_random=6):
    """Plane waves plus seeded random H^s-normalized functions."""
    from .util import random_real_function, rng_for

    probes = []
    key_modes = [((0,) * A.nu, 1), ((0,) * A.nu, max(1, A.j_max // 2)),
                 ((0,) * A.nu, A.j_max)]
    if A.l_max > 0:
        key_modes += [((1,) + (0,) * (A.nu - 1), 1),
                      ((A.l_max,) + (0,) * (A.nu - 1), max(1, A.j_max // 2))]
    for ell, j in key_modes:
        u = TorusFunction.zeros(A.nu, A.l_max, A.j_max)
        u._add_coeff(ell, j, 1.0)
        probes.append(u)
    rng = rng_for(seed)
    for _ in range(n_random):
        probes.append(random_real_function(A.nu, A.l_max, A.j_max, rng,
                                           decay=s0 + 1.0))
    return probes


def modulo_tame_constant(A, s, b0=0, s0=None, seed=1234):
    """Estimate the -1-modulo-tame constants of A at regularity s.

    Fits the smallest (c0, c1) with
        || <Dx>^(1/2) (<d_phi>^b0 A)_majorant <Dx>^(1/2) u ||_s
            <= c1 ||u||_s0 + c0 ||u||_s
    over a fixed probe family.  Returns (c0, c1, fit_residual).  At s == s0 the
    bound degenerates and (majorant_norm, 0, 0) is returned.
    """
    from .fourier import sobolev_norm

    if s0 is None:
        from .fourier import default_s0
        s0 = default_s0(A.nu)
    B = weight_dphi(A, b0).dx_sandwich(0.5, 0.5).majorant()
    if s <= s0:
        return majorant_norm(B, s0), 0.0, 0.0
    probes = _probe_family(A, s, s0, seed=seed)
    # normalize each probe to ||u||_s = 1: fit y' ~ c0 + c1 * (||u||_s0/||u||_s)
    aa, yy = [], []
    for u in probes:
        ns = sobolev_norm(u, s)
        if ns == 0.0:
            continue
        um = TorusFunction(A.nu, A.l_max, A.j_max,
                           np.abs(u.coeffs).astype(complex) / ns)
        aa.append(sobolev_norm(u, s0) / ns)
        yy.append(sobolev_norm(apply_operator(B, um), s))
    aa = np.asarray(aa)
    yy = np.asarray(yy)
    M = np.column_stack([np.ones_like(aa), aa])
    sol, *_ = np.linalg.lstsq(M, yy, rcond=None)
    c0, c1 = float(max(sol[0], 0.0)), float(max(sol[1], 0.0))
    pred = M @ np.array([c0, c1])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(pred > 0, yy / pred, np.inf if np.any(yy > 0) else 1.0)
    scale = float(max(1.0, np.min(ratio) if np.all(~np.isfinite(ratio)) else
                      np.max(ratio[np.isfinite(ratio)], initial=1.0)))
    c0, c1 = c0 * scale, c1 * scale
    resid = float(np.max(np.abs(M @ np.array([c0, c1]) - yy)) /
                  max(np.max(yy), 1e-300))
    return c0, c1, resid


def m_sharp(A, s0, b0=0):
    """Scalar -1-modulo-tame constant at the low regularity (majorant norm)."""
    B = weight_dphi(A, b0).dx_sandwich(0.5, 0.5)
    return majorant_norm(B, s0)


def _multi_indices(nu, total):
    if nu == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _multi_indices(nu - 1, total - head):
            yield (head,) + rest


def smoothing_constants(A, rho, b, s0=None, splits=3):
    """Numerical tame-constant table for the rho-smoothing class membership.

    For every |bvec| <= b and sampled (m1, m2) with m1+m2 = rho-|bvec| the
    majorant norm of <Dx>^{m1} d_phi^bvec A <Dx>^{m2} is estimated at s0, and
    likewise for the commutators [d_phi^bvec A, d_x] with m1+m2 = rho-|bvec|-1.
    Returns a dict with per-b aggregated constants, monotone in b.
    """
    if s0 is None:
        from .fourier import default_s0
        s0 = default_s0(A.nu)
    if b > rho - 2:
        raise ValueError(f"b = {b} exceeds rho - 2 = {rho - 2}")
    table = {}
    detail = {}
    running = 0.0
    for btot in range(b + 1):
        worst = 0.0
        for bvec in _multi_indices(A.nu, btot):
            D = A.dphi_pow(bvec)
            R = rho - btot
            for m1 in np.linspace(0.0, R, splits):
                m2 = R - m1
                val = majorant_norm(D.dx_sandwich(m1, m2), s0)
                detail[(s0, btot, round(float(m1), 3), "smooth")] = val
                worst = max(worst, val)
            C = D.commutator_dx()
            Rc = rho - btot - 1
            if Rc >= 0:
                for m1 in np.linspace(0.0, Rc, splits):
                    m2 = Rc - m1
                    val = majorant_norm(C.dx_sandwich(m1, m2), s0)
                    detail[(s0, btot, round(float(m1), 3), "commutator")] = val
                    worst = max(worst, val)
        running = max(running, worst)
        table[btot] = running
    return {"rho": rho, "s0": s0, "constants": table, "detail": detail}


def structure_check(A, tol=1e-9):
    """Reality and Hamiltonian structure defects; sets flags when under tol.

    Reality: conj(A_j^{j'}(l)) = A_{-j}^{-j'}(-l).
    Hamiltonian: A_j^{j'}(l) = -(omega(j)/omega(j')) A_{-j'}^{-j}(l) plus
    reality, on the zero-x-average phase space (j, j' != 0).
    """
    rev = tuple([slice(None, None, -1)] * A.nu)
    flipped = np.conj(A.entries[rev][..., ::-1, ::-1])
    reality = float(np.max(np.abs(A.entries - flipped)))

    j = np.arange(-A.j_max, A.j_max + 1)
    om = dispersion_omega(j)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(om[None, :] != 0, om[:, None] / om[None, :], 0.0)
    swapped = np.swapaxes(A.entries, -1, -2)[..., ::-1, ::-1]
    ham = A.entries + ratio * swapped
    mask = (om[:, None] != 0) & (om[None, :] != 0)
    ham_defect = float(np.max(np.abs(ham * mask)))
    j0 = float(max(np.max(np.abs(A.entries[..., A.j_max, :])),
                   np.max(np.abs(A.entries[..., :, A.j_max]))))
    report = {
        "reality_defect": reality,
        "hamiltonian_defect": max(ham_defect, reality),
        "j0_defect": j0,
        "scale": A.max_abs(),
    }
    A.is_real = reality <= tol * max(1.0, A.max_abs())
    A.is_hamiltonian = report["hamiltonian_defect"] <= tol * max(1.0, A.max_abs())
    report["is_real"] = A.is_real
    report["is_hamiltonian"] = A.is_hamiltonian
    return report


def operator_to_csv(A, path, tol=0.0):
    """Debug dump: rows (l_1..l_nu, j, j', re, im) for entries above tol."""
    import csv

    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"l{i+1}" for i in range(A.nu)] + ["j", "jp", "re", "im"])
        for idx in np.ndindex(A.entries.shape):
            c = A.entries[idx]
            if abs(c) <= tol:
                continue
            ell = [idx[i] - A.l_max for i in range(A.nu)]
            w.writerow(ell + [idx[-2] - A.j_max, idx[-1] - A.j_max,
                              c.real, c.imag])


def omega_form(u, v):
    """Symplectic pairing Omega(u, v) = sum_{l,j} (J^{-1}u)_{-l,-j} v_{l,j}.

    Defined on zero-x-average functions (the j = 0 slab is ignored).
    """
    j = np.arange(-u.j_max, u.j_max + 1)
    om = dispersion_omega(j)
    inv = np.zeros_like(om, dtype=complex)
    inv[om != 0] = 1.0 / (1j * om[om != 0])
    ju = u.coeffs * inv
    rev = tuple([slice(None, None, -1)] * (u.nu + 1))
    return complex(np.sum(ju[rev] * v.coeffs))
