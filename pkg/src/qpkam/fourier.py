"""Function algebra on the (nu+1)-torus in Fourier representation.

Functions u(phi, x) are stored as centered complex coefficient arrays on the
lattice |l_i| <= l_max, |j| <= j_max, with u(phi,x) = sum u_{lj} e^{i(l.phi + j x)}.
Real functions satisfy u_{-l,-j} = conj(u_{l,j}).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import fftn, ifftn, next_fast_len

from .errors import DegenerateFamilyError, DiffeomorphismError, NonConvergenceError

__all__ = [
    "TorusFunction",
    "to_csv",
    "from_csv",
    "sobolev_weights",
    "sobolev_norm",
    "lip_norm",
    "pointwise_product",
    "compose_diffeo",
    "invert_diffeo",
    "default_s0",
]


def default_s0(nu):
    """Low Sobolev threshold [nu/2] + 3 used by all tame estimates."""
    return nu // 2 + 3


def _centered_range(radius):
    return np.arange(-radius, radius + 1)


def _embed(coeffs, shape):
    """Place a centered coefficient array into an FFT-layout array of `shape`."""
    out = np.zeros(shape, dtype=complex)
    idx = []
    for ax, n in enumerate(shape):
        r = (coeffs.shape[ax] - 1) // 2
        idx.append(np.arange(-r, r + 1) % n)
    mesh = np.ix_(*idx)
    out[mesh] = coeffs
    return out


def _extract(arr, radii):
    """Pull the centered window with the given radii out of an FFT-layout array."""
    idx = []
    for ax, r in enumerate(radii):
        idx.append(np.arange(-r, r + 1) % arr.shape[ax])
    return arr[np.ix_(*idx)]


@dataclass
class TorusFunction:
    """Truncated Fourier series on T^nu x T.

    coeffs has shape (2*l_max+1,)*nu + (2*j_max+1,) with centered indices:
    coeffs[i_1, ..., i_nu, i_j] is the coefficient of e^{i(l.phi + j x)} with
    l_k = i_k - l_max and j = i_j - j_max.
    """

    nu: int
    l_max: int
    j_max: int
    coeffs: np.ndarray
    zero_mean_x: bool = False

    def __post_init__(self):
        expected = (2 * self.l_max + 1,) * self.nu + (2 * self.j_max + 1,)
        if self.coeffs.shape != expected:
            raise ValueError(f"coeff shape {self.coeffs.shape} != {expected}")
        if self.zero_mean_x:
            self.coeffs[..., self.j_max] = 0.0

    # -- constructors -------------------------------------------------

    @classmethod
    def zeros(cls, nu, l_max, j_max, zero_mean_x=False):
        shape = (2 * l_max + 1,) * nu + (2 * j_max + 1,)
        return cls(nu, l_max, j_max, np.zeros(shape, dtype=complex), zero_mean_x)

    @classmethod
    def from_modes(cls, nu, l_max, j_max, modes, zero_mean_x=False):
        """Real function from a list of (ell, j, amplitude, phase) entries.

        Each entry contributes amplitude * cos(ell.phi + j x + phase).
        """
        u = cls.zeros(nu, l_max, j_max, zero_mean_x)
        for ell, j, amp, phase in modes:
            ell = tuple(int(e) for e in np.atleast_1d(ell))
            if len(ell) != nu:
                raise ValueError(f"mode {ell} has wrong frequency dimension")
            c = 0.5 * amp * np.exp(1j * phase)
            u._add_coeff(ell, j, c)
            u._add_coeff(tuple(-e for e in ell), -j, np.conj(c))
        if zero_mean_x:
            u.coeffs[..., j_max] = 0.0
        return u

    def _add_coeff(self, ell, j, value):
        if any(abs(e) > self.l_max for e in ell) or abs(j) > self.j_max:
            raise ValueError(f"mode (l={ell}, j={j}) outside the lattice")
        idx = tuple(e + self.l_max for e in ell) + (j + self.j_max,)
        self.coeffs[idx] += value

    def copy(self):
        return TorusFunction(self.nu, self.l_max, self.j_max, self.coeffs.copy(),
                             self.zero_mean_x)

    def embed(self, l_max, j_max):
        """The same function on a larger lattice."""
        if l_max < self.l_max or j_max < self.j_max:
            raise ValueError("embedding lattice must not be smaller")
        out = TorusFunction.zeros(self.nu, l_max, j_max, self.zero_mean_x)
        sl = tuple(slice(l_max - self.l_max, l_max + self.l_max + 1)
                   for _ in range(self.nu))
        sl = sl + (slice(j_max - self.j_max, j_max + self.j_max + 1),)
        out.coeffs[sl] = self.coeffs
        return out

    # -- coefficient access --------------------------------------------

    def coeff(self, ell, j):
        ell = tuple(int(e) for e in np.atleast_1d(ell))
        idx = tuple(e + self.l_max for e in ell) + (j + self.j_max,)
        return self.coeffs[idx]

    def reality_defect(self):
        flipped = np.conj(self.coeffs[tuple([slice(None, None, -1)] * (self.nu + 1))])
        return float(np.max(np.abs(self.coeffs - flipped)))

    def enforce_reality(self):
        flipped = np.conj(self.coeffs[tuple([slice(None, None, -1)] * (self.nu + 1))])
        self.coeffs = 0.5 * (self.coeffs + flipped)
        return self

    # -- algebra ---------------------------------------------------------

    def __add__(self, other):
        self._check_compatible(other)
        return TorusFunction(self.nu, self.l_max, self.j_max,
                             self.coeffs + other.coeffs,
                             self.zero_mean_x and other.zero_mean_x)

    def __sub__(self, other):
        self._check_compatible(other)
        return TorusFunction(self.nu, self.l_max, self.j_max,
                             self.coeffs - other.coeffs,
                             self.zero_mean_x and other.zero_mean_x)

    def __mul__(self, scalar):
        return TorusFunction(self.nu, self.l_max, self.j_max,
                             self.coeffs * scalar, self.zero_mean_x)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def _check_compatible(self, other):
        if (self.nu, self.l_max, self.j_max) != (other.nu, other.l_max, other.j_max):
            raise ValueError("incompatible truncations")

    # -- derivatives -------------------------------------------------

    def dx(self):
        j = _centered_range(self.j_max)
        return TorusFunction(self.nu, self.l_max, self.j_max,
                             self.coeffs * (1j * j), self.zero_mean_x)

    def dphi_omega(self, omega):
        """Directional derivative omega . d/dphi."""
        omega = np.asarray(omega, dtype=float)
        phase = np.zeros(self.coeffs.shape[: self.nu])
        for ax in range(self.nu):
            shape = [1] * self.nu
            shape[ax] = -1
            phase = phase + omega[ax] * _centered_range(self.l_max).reshape(shape)
        return TorusFunction(self.nu, self.l_max, self.j_max,
                             self.coeffs * (1j * phase[..., None]),
                             self.zero_mean_x)

    def mean(self):
        """The (0,0) coefficient (average over the full torus)."""
        return complex(self.coeffs[(self.l_max,) * self.nu + (self.j_max,)])

    # -- grids ---------------------------------------------------------

    def grid_shape(self, pad=2):
        """Collocation grid: >= pad*(lattice size)+1 points per axis."""
        shape = []
        for ax in range(self.nu):
            shape.append(next_fast_len(pad * (2 * self.l_max + 1) + 1))
        shape.append(next_fast_len(pad * (2 * self.j_max + 1) + 1))
        return tuple(shape)

    def values(self, shape=None, pad=2):
        """Evaluate on the uniform collocation grid (2*pi*k/N per axis)."""
        if shape is None:
            shape = self.grid_shape(pad)
        arr = _embed(self.coeffs, shape)
        return ifftn(arr) * np.prod(shape)

    @classmethod
    def from_values(cls, vals, nu, l_max, j_max, zero_mean_x=False):
        coeffs = fftn(vals) / np.prod(vals.shape)
        return cls(nu, l_max, j_max, _extract(coeffs, (l_max,) * nu + (j_max,)),
                   zero_mean_x)

    def sup_norm(self, pad=2):
        return float(np.max(np.abs(self.values(pad=pad))))


# -- norms -------------------------------------------------------------


def ell1_norms(nu, l_max):
    """|l|_1 on the centered nu-dimensional lattice."""
    l1 = np.zeros((2 * l_max + 1,) * nu)
    for ax in range(nu):
        shape = [1] * nu
        shape[ax] = -1
        l1 = l1 + np.abs(_centered_range(l_max)).reshape(shape)
    return l1


def sobolev_weights(nu, l_max, j_max, s):
    """<l,j>^s = max(1, |l|_1, |j|)^s on the centered lattice."""
    l1 = ell1_norms(nu, l_max)
    j = np.abs(_centered_range(j_max))
    base = np.maximum(1.0, np.maximum(l1[..., None], j))
    return base ** s


def sobolev_norm(u, s):
    """H^s norm: (sum |u_lj|^2 <l,j>^{2s})^(1/2)."""
    w = sobolev_weights(u.nu, u.l_max, u.j_max, s)
    return float(np.sqrt(np.sum(np.abs(u.coeffs) ** 2 * w ** 2)))


def lip_norm(samples, gamma, s):
    """Weighted Lipschitz norm of a finite family {omega -> u(omega)}.

    sup-part at regularity s plus gamma times the worst difference quotient
    at regularity s-1.  Finite sampling under-approximates the continuum norm.
    """
    if len(samples) < 2:
        raise DegenerateFamilyError("need at least 2 omega samples")
    sup_part = max(sobolev_norm(u, s) for _, u in samples)
    lip_part = 0.0
    for i in range(len(samples)):
        for k in range(i + 1, len(samples)):
            w1, u1 = samples[i]
            w2, u2 = samples[k]
            dw = float(np.linalg.norm(np.asarray(w1, float) - np.asarray(w2, float)))
            if dw == 0.0:
                raise DegenerateFamilyError("omega samples must be pairwise distinct")
            lip_part = max(lip_part, sobolev_norm(u1 - u2, s - 1) / dw)
    return sup_part + gamma * lip_part


# -- products and composition -----------------------------------------


def pointwise_product(u, v):
    """Fourier coefficients of u*v, projected back to the common lattice."""
    u._check_compatible(v)
    shape = u.grid_shape()
    vals = u.values(shape) * v.values(shape)
    return TorusFunction.from_values(vals, u.nu, u.l_max, u.j_max)


def _phi_mode_values(u, phi_shape):
    """u_j(phi) on a phi grid: FFT only over the phi axes, j kept centered."""
    full = np.zeros(phi_shape + (2 * u.j_max + 1,), dtype=complex)
    idx = [np.arange(-u.l_max, u.l_max + 1) % n for n in phi_shape]
    full[np.ix_(*idx, np.arange(2 * u.j_max + 1))] = u.coeffs
    axes = tuple(range(u.nu))
    return ifftn(full, axes=axes) * np.prod(phi_shape)


def compose_diffeo(u, beta, tau=1.0, j_out=None):
    """Coefficients of (phi,x) -> u(phi, x + tau*beta(phi,x)).

    The truncated series of u is evaluated at the shifted collocation nodes and
    transformed back; the result is projected on u's lattice (or j_out).
    """
    u._check_compatible(beta)
    if j_out is None:
        j_out = u.j_max
    shape = u.grid_shape()
    phi_shape, nx = shape[:-1], shape[-1]

    bvals = beta.values(shape)
    bx = beta.dx().values(shape)
    contraction = float(np.max(np.abs(tau * bx.real)))
    if contraction >= 1.0:
        raise DiffeomorphismError(
            f"sup|tau*beta_x| = {contraction:.4f} >= 1: not a diffeomorphism")

    uj = _phi_mode_values(u, phi_shape)  # (phi..., j)
    x = 2 * np.pi * np.arange(nx) / nx
    xs = x.reshape((1,) * u.nu + (-1,)) + tau * bvals.real
    # Horner sum over j: sum_j u_j(phi) e^{i j xs}
    E = np.exp(1j * xs)
    acc = np.zeros(E.shape, dtype=complex)
    for k in reversed(range(2 * u.j_max + 1)):
        acc = acc * E + uj[..., k][..., None]
    vals = acc * np.exp(-1j * u.j_max * xs)
    return TorusFunction.from_values(vals, u.nu, u.l_max, j_out)


def invert_diffeo(beta, tol=1e-13, max_iter=200):
    """beta~ with (x + beta(phi,x)) + beta~(phi, x+beta(phi,x)) = x.

    Fixed point iteration beta~ <- -beta o (id + beta~); requires sup|beta_x|<1.
    """
    bx_sup = beta.dx().sup_norm()
    if bx_sup >= 1.0:
        raise DiffeomorphismError(f"sup|beta_x| = {bx_sup:.4f} >= 1")
    bt = -1.0 * beta
    step = np.inf
    for _ in range(max_iter):
        new = -1.0 * compose_diffeo(beta, bt)
        new.enforce_reality()
        step = float(np.max(np.abs(new.coeffs - bt.coeffs)))
        bt = new
        if step <= tol:
            return bt
    raise NonConvergenceError(
        f"diffeo inversion did not converge in {max_iter} iterations",
        residual=step)


def to_csv(u, path):
    """CSV rows (l_1..l_nu, j, re, im), one per stored coefficient."""
    import csv

    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"l{i+1}" for i in range(u.nu)] + ["j", "re", "im"])
        it = np.ndindex(u.coeffs.shape)
        for idx in it:
            c = u.coeffs[idx]
            if c == 0:
                continue
            ell = [idx[i] - u.l_max for i in range(u.nu)]
            w.writerow(ell + [idx[-1] - u.j_max, c.real, c.imag])


def from_csv(path, nu, l_max, j_max, zero_mean_x=False):
    import csv

    u = TorusFunction.zeros(nu, l_max, j_max, zero_mean_x)
    with open(path) as f:
        r = csv.reader(f)
        next(r)
        for row in r:
            ell = tuple(int(x) for x in row[:nu])
            j = int(row[nu])
            u._add_coeff(ell, j, float(row[nu + 1]) + 1j * float(row[nu + 2]))
    return u


def composition_residual(beta, beta_tilde):
    """sup over a dense grid of |beta~(phi, x+beta) + beta(phi, x)|."""
    shifted = compose_diffeo(beta_tilde, beta)
    return (shifted + beta).sup_norm()
