"""Pseudo-differential symbols on the circle with quasi-periodic time dependence.

A symbol a(phi, x, xi) of order m is stored through its Fourier coefficients in
(phi, x) on an integer xi window: coeffs[l..., k, xi] = a_hat(l, k; xi).  The
`window` field tracks the xi radius on which the entries are still valid after
compositions and xi-derivatives (margin accounting).
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np
from scipy.fft import fftn, ifftn, next_fast_len

from .errors import WindowError
from .fourier import TorusFunction, sobolev_weights

__all__ = [
    "Symbol",
    "xi_bracket",
    "dispersion_omega",
    "quantize",
    "compose_exact",
    "compose_asymptotic",
    "adjoint",
    "moyal_commutator",
    "symbol_norm",
    "multiplier_symbol",
    "function_symbol",
    "j_symbol",
    "lambda_symbol",
    "AnalyticMultiplier",
    "AnalyticSymbol",
]


def xi_bracket(xi):
    """Japanese bracket <xi> = (1 + xi^2)^(1/2)."""
    return np.sqrt(1.0 + np.asarray(xi, dtype=float) ** 2)


def dispersion_omega(j):
    """omega(j) = j (4 + j^2) / (1 + j^2), the dispersion of J."""
    j = np.asarray(j, dtype=float)
    return j * (4.0 + j ** 2) / (1.0 + j ** 2)


@dataclass
class Symbol:
    order: float
    nu: int
    l_max: int
    j_max: int          # x-frequency band of the coefficients
    xi_max: int         # stored xi radius
    coeffs: np.ndarray  # shape: (2 l_max+1,)*nu + (2 j_max+1, 2 xi_max+1)
    window: int = None  # valid xi radius; defaults to xi_max

    def __post_init__(self):
        if self.window is None:
            self.window = self.xi_max
        expected = (2 * self.l_max + 1,) * self.nu + (
            2 * self.j_max + 1, 2 * self.xi_max + 1)
        if self.coeffs.shape != expected:
            raise ValueError(f"coeff shape {self.coeffs.shape} != {expected}")

    @classmethod
    def zeros(cls, order, nu, l_max, j_max, xi_max):
        shape = (2 * l_max + 1,) * nu + (2 * j_max + 1, 2 * xi_max + 1)
        return cls(order, nu, l_max, j_max, xi_max, np.zeros(shape, dtype=complex))

    def copy(self):
        return Symbol(self.order, self.nu, self.l_max, self.j_max, self.xi_max,
                      self.coeffs.copy(), self.window)

    def decay_constant(self):
        """Smallest K with max_{l,k} |a_hat(l,k;xi)| <= K <xi>^order on the window."""
        xi = np.arange(-self.window, self.window + 1)
        sl = self._xi_slice(xi)
        flat = np.max(np.abs(sl), axis=tuple(range(self.nu + 1)))
        return float(np.max(flat / xi_bracket(xi) ** self.order))

    def _xi_index(self, xi):
        return np.asarray(xi) + self.xi_max

    def _xi_slice(self, xi):
        """Coefficient slab at the given integer xi values (last axis)."""
        return self.coeffs[..., self._xi_index(xi)]

    def trimmed(self, new_radius):
        """Restrict storage to |xi| <= new_radius."""
        if new_radius > self.xi_max:
            raise WindowError(new_radius, self.xi_max)
        sl = self.coeffs[..., self.xi_max - new_radius:self.xi_max + new_radius + 1]
        return Symbol(self.order, self.nu, self.l_max, self.j_max, new_radius,
                      sl.copy(), min(self.window, new_radius))

    def __add__(self, other):
        a, b = _align(self, other)
        out = a.copy()
        out.coeffs = a.coeffs + b.coeffs
        out.order = max(self.order, other.order)
        out.window = min(a.window, b.window)
        return out

    def __sub__(self, other):
        return self + (other * (-1.0))

    def __mul__(self, scalar):
        out = self.copy()
        out.coeffs = out.coeffs * scalar
        return out

    __rmul__ = __mul__

    def dxi(self):
        """Central finite difference in xi on the integer grid; shrinks the window."""
        if self.window < 1:
            raise WindowError(1, self.window)
        c = self.coeffs
        d = np.zeros_like(c)
        d[..., 1:-1] = 0.5 * (c[..., 2:] - c[..., :-2])
        out = Symbol(self.order - 1, self.nu, self.l_max, self.j_max, self.xi_max,
                     d, self.window - 1)
        return out

    def dx(self):
        k = np.arange(-self.j_max, self.j_max + 1)
        out = self.copy()
        out.coeffs = out.coeffs * (1j * k)[..., None]
        return out

    def at_xi(self, xi):
        """The (phi,x) function at a fixed integer xi, as a TorusFunction."""
        if abs(xi) > self.window:
            raise WindowError(abs(xi), self.window)
        return TorusFunction(self.nu, self.l_max, self.j_max,
                             self._xi_slice(xi).copy())


def _align(a, b):
    """Bring two symbols to a common lattice (max bands, min window)."""
    if a.nu != b.nu:
        raise ValueError("frequency dimensions differ")
    l_max = max(a.l_max, b.l_max)
    j_max = max(a.j_max, b.j_max)
    xi = min(a.xi_max, b.xi_max)

    def expand(s):
        out = Symbol.zeros(s.order, s.nu, l_max, j_max, xi)
        out.window = min(s.window, xi)
        src = s.trimmed(xi) if s.xi_max > xi else s
        sl = tuple(slice(l_max - s.l_max, l_max + s.l_max + 1) for _ in range(s.nu))
        sl = sl + (slice(j_max - s.j_max, j_max + s.j_max + 1), slice(None))
        out.coeffs[sl] = src.coeffs
        return out

    return expand(a), expand(b)


# -- constructors --------------------------------------------------------


def multiplier_symbol(f, order, nu, l_max, j_max, xi_max):
    """Fourier multiplier symbol a(xi) = f(xi) (no (phi,x) dependence)."""
    out = Symbol.zeros(order, nu, l_max, j_max, xi_max)
    xi = np.arange(-xi_max, xi_max + 1)
    out.coeffs[(l_max,) * nu + (j_max,)] = f(xi)
    return out


def function_symbol(u, xi_max):
    """Multiplication operator symbol a(phi,x) from a TorusFunction (order 0)."""
    out = Symbol.zeros(0.0, u.nu, u.l_max, u.j_max, xi_max)
    out.coeffs[...] = u.coeffs[..., None]
    return out


def j_symbol(nu, l_max, j_max, xi_max):
    """Symbol of J = d_x + 3 (1-d_xx)^{-1} d_x: i xi + 3 i xi/(1+xi^2)."""
    return multiplier_symbol(
        lambda xi: 1j * xi + 3j * xi / (1.0 + xi.astype(float) ** 2),
        1.0, nu, l_max, j_max, xi_max)


def lambda_symbol(nu, l_max, j_max, xi_max):
    """Symbol of (1 - d_xx)^{-1}: 1/(1+xi^2)."""
    return multiplier_symbol(lambda xi: 1.0 / (1.0 + xi.astype(float) ** 2),
                             -2.0, nu, l_max, j_max, xi_max)


# -- quantization ---------------------------------------------------------


def quantize(a, j_max_op):
    """Matrix A_j^{j'}(l) = a_hat(l, j - j'; j') on |j|,|j'| <= j_max_op.

    Entries whose x-frequency j-j' falls outside the symbol band are zero.
    """
    from .operators import ToeplitzOperator

    if j_max_op > a.window:
        raise WindowError(j_max_op, a.window)
    n = 2 * j_max_op + 1
    shape = (2 * a.l_max + 1,) * a.nu + (n, n)
    entries = np.zeros(shape, dtype=complex)
    jj = np.arange(-j_max_op, j_max_op + 1)
    for col, jp in enumerate(jj):
        k = jj - jp  # x-frequencies j - j'
        valid = np.abs(k) <= a.j_max
        rows = np.where(valid)[0]
        entries[..., rows, col] = a.coeffs[..., k[valid] + a.j_max, jp + a.xi_max]
    return ToeplitzOperator(a.nu, a.l_max, j_max_op, entries)


# -- calculus -------------------------------------------------------------


def _phi_convolve(a_arr, b_arr, nu, l_max):
    """Centered convolution over the first `nu` axes, projected to |l|<=l_max.

    Trailing axes are broadcast elementwise.
    """
    pad = tuple(next_fast_len(2 * (2 * l_max + 1)) for _ in range(nu))
    axes = tuple(range(nu))

    def lift(arr):
        full_shape = pad + arr.shape[nu:]
        out = np.zeros(full_shape, dtype=complex)
        idx = [np.arange(-l_max, l_max + 1) % n for n in pad]
        grid = np.ix_(*idx, *[np.arange(s) for s in arr.shape[nu:]])
        out[grid] = arr
        return fftn(out, axes=axes)

    prod = ifftn(lift(a_arr) * lift(b_arr), axes=axes)
    idx = [np.arange(-l_max, l_max + 1) % n for n in pad]
    grid = np.ix_(*idx, *[np.arange(s) for s in prod.shape[nu:]])
    return prod[grid]


def compose_exact(a, b):
    """Exact composition symbol a#b: quantize(a#b) = quantize(a) quantize(b).

    (a#b)_hat(l, k; xi) = sum_{l', j} a_hat(l-l', k-j; xi+j) b_hat(l', j; xi).
    The xi window shrinks by b.j_max.
    """
    a, b = _align(a, b)
    W = min(a.window - b.j_max, b.window)
    if W < 0:
        raise WindowError(b.j_max, a.window)
    j_out = a.j_max + b.j_max
    out = Symbol.zeros(a.order + b.order, a.nu, a.l_max, j_out, W)
    out.window = W
    xi = np.arange(-W, W + 1)
    for j in range(-b.j_max, b.j_max + 1):
        a_slab = a._xi_slice(xi + j)                    # (phi..., kA, xi)
        b_slab = b.coeffs[..., j + b.j_max, :][..., None, b.xi_max - W:b.xi_max + W + 1]
        term = _phi_convolve(a_slab, b_slab, a.nu, a.l_max)
        sl = slice(j + j_out - a.j_max, j + j_out + a.j_max + 1)
        out.coeffs[..., sl, :] += term
    return out


def compose_asymptotic(a, b, N):
    """Expansion a#_{<N} b = sum_{n<N} (1/(n! i^n)) d_xi^n a d_x^n b, plus remainder.

    Returns (expansion, r_N) with expansion + r_N = a#b identically on the
    shared window; r_N carries order a.order + b.order - N.
    """
    if N < 1:
        raise ValueError("N >= 1 required")
    a0, b0 = _align(a, b)
    if a0.window - max(N - 1, b0.j_max) < 0:
        raise WindowError(N, a0.window)
    exact = compose_exact(a, b)
    j_out = a0.j_max + b0.j_max
    expansion = Symbol.zeros(a.order + b.order, a0.nu, a0.l_max, j_out, a0.xi_max)
    expansion.window = a0.window
    da = a0
    db = b0
    for n in range(N):
        if n > 0:
            da = da.dxi()
            db = db.dx()
        coef = 1.0 / (math.factorial(n) * (1j ** n))
        term = _phi_convolve(
            da.coeffs[..., :, None, :], db.coeffs[..., None, :, :],
            a0.nu, a0.l_max)
        # term indexed by (phi..., kA, kB, xi): fold kA+kB into k
        folded = np.zeros(expansion.coeffs.shape, dtype=complex)
        nA = 2 * a0.j_max + 1
        for iA in range(nA):
            sl = slice(iA, iA + 2 * b0.j_max + 1)
            folded[..., sl, :] += term[..., iA, :, :]
        expansion.coeffs += coef * folded
        expansion.window = min(expansion.window, da.window)
    expansion.order = a.order + b.order
    exact_t, exp_t = _align(exact, expansion)
    remainder = exact_t - exp_t
    remainder.order = a.order + b.order - N
    return expansion, remainder


def adjoint(a):
    """L2-adjoint symbol: a*_hat(l, k; xi) = conj(a_hat(-l, -k; xi + k))."""
    W = a.window - a.j_max
    if W < 0:
        raise WindowError(a.j_max, a.window)
    out = Symbol.zeros(a.order, a.nu, a.l_max, a.j_max, W)
    out.window = W
    xi = np.arange(-W, W + 1)
    for k in range(-a.j_max, a.j_max + 1):
        src = a.coeffs[..., -k + a.j_max, :]
        sl = np.conj(src[..., xi + k + a.xi_max])
        rev = tuple([slice(None, None, -1)] * a.nu)
        out.coeffs[..., k + a.j_max, :] = sl[rev + (slice(None),)]
    return out


def moyal_commutator(a, b):
    """Commutator symbol a*b = a#b - b#a with principal part and remainder.

    Returns (star, principal, r2): principal = -i{a,b} and star = principal + r2,
    r2 of order a.order + b.order - 2.
    """
    ab = compose_exact(a, b)
    ba = compose_exact(b, a)
    star_t, ba_t = _align(ab, ba)
    star = star_t - ba_t
    star.order = a.order + b.order - 1

    a0, b0 = _align(a, b)
    pa = _symbol_product(a0.dxi(), b0.dx())
    pb = _symbol_product(a0.dx(), b0.dxi())
    principal = (pa - pb) * (-1j)
    principal.order = a.order + b.order - 1
    star_t2, principal_t = _align(star, principal)
    r2 = star_t2 - principal_t
    r2.order = a.order + b.order - 2
    return star, principal, r2


def _symbol_product(a, b):
    """Pointwise product in (phi, x) at each fixed xi."""
    a, b = _align(a, b)
    j_out = a.j_max + b.j_max
    out = Symbol.zeros(a.order + b.order, a.nu, a.l_max, j_out, a.xi_max)
    out.window = min(a.window, b.window)
    term = _phi_convolve(a.coeffs[..., :, None, :], b.coeffs[..., None, :, :],
                         a.nu, a.l_max)
    nA = 2 * a.j_max + 1
    for iA in range(nA):
        sl = slice(iA, iA + 2 * b.j_max + 1)
        out.coeffs[..., sl, :] += term[..., iA, :, :]
    return out


def symbol_norm(a, s, alpha=0):
    """max_{0<=beta<=alpha} sup_xi ||d_xi^beta a(.,.,xi)||_s <xi>^{-order+beta}.

    The sup runs over the valid integer window (shrunk by the differences).
    """
    if alpha > a.window:
        raise WindowError(alpha, a.window)
    w = sobolev_weights(a.nu, a.l_max, a.j_max, s)
    best = 0.0
    cur = a
    for beta in range(alpha + 1):
        if beta > 0:
            cur = cur.dxi()
        W = cur.window
        xi = np.arange(-W, W + 1)
        slab = cur._xi_slice(xi)
        norms = np.sqrt(np.sum(np.abs(slab) ** 2 * w[..., None] ** 2,
                               axis=tuple(range(a.nu + 1))))
        weight = xi_bracket(xi) ** (-a.order + beta)
        best = max(best, float(np.max(norms * weight)))
    return best


# -- analytic symbols (exact xi-derivatives, off-integer evaluation) -------


class AnalyticMultiplier:
    """f(xi) = polynomial + sum residues/(xi - poles), with exact derivatives."""

    def __init__(self, poly=(), poles=(), residues=(), order=0.0):
        self.poly = np.asarray(poly, dtype=complex)
        self.poles = np.asarray(poles, dtype=complex)
        self.residues = np.asarray(residues, dtype=complex)
        self.order = order

    def eval(self, xi, d=0):
        xi = np.asarray(xi, dtype=complex)
        out = np.zeros(xi.shape, dtype=complex)
        # polynomial part
        for n, c in enumerate(self.poly):
            if n - d >= 0:
                fact = math.factorial(n) / math.factorial(n - d)
                out = out + c * fact * xi ** (n - d)
        # pole part: d^d/dxi^d [r/(xi-c)] = r (-1)^d d! / (xi-c)^{d+1}
        for c, r in zip(self.poles, self.residues):
            out = out + r * (-1) ** d * math.factorial(d) / (xi - c) ** (d + 1)
        return out

    @classmethod
    def derivative_symbol(cls):
        """i xi (the symbol of d_x)."""
        return cls(poly=(0.0, 1j), order=1.0)

    @classmethod
    def j_dispersion(cls):
        """i xi + 3 i xi/(1+xi^2)."""
        return cls(poly=(0.0, 1j), poles=(1j, -1j),
                   residues=(1.5j, 1.5j), order=1.0)

    @classmethod
    def smoothing_tail(cls):
        """3 i xi / (1 + xi^2), the order -1 part of J."""
        return cls(poles=(1j, -1j), residues=(1.5j, 1.5j), order=-1.0)

    @classmethod
    def odd_tail(cls, pole_height):
        """i * 2 xi/(xi^2 + p^2): order -1, poles at +-i p (far for large p)."""
        p = float(pole_height)
        return cls(poles=(1j * p, -1j * p), residues=(1j, 1j), order=-1.0)


class AnalyticSymbol:
    """w(x, xi) = sum_m g_m(x) f_m(xi) with trig-polynomial g_m.

    g_m is given by a dict {k: coefficient} of x-Fourier modes; f_m is an
    AnalyticMultiplier.  Exact x- and xi-derivatives of any order.
    """

    def __init__(self, terms, order=None):
        # terms: list of (modes dict, AnalyticMultiplier)
        self.terms = [(dict(g), f) for g, f in terms]
        self.order = order if order is not None else max(
            f.order for _, f in self.terms)

    @classmethod
    def from_multiplier(cls, f):
        return cls([({0: 1.0}, f)], order=f.order)

    def eval(self, x, xi, dx=0, dxi=0):
        x = np.asarray(x, dtype=float)
        out = np.zeros(np.broadcast(x, np.asarray(xi)).shape, dtype=complex)
        for g, f in self.terms:
            gx = np.zeros(x.shape, dtype=complex)
            for k, c in g.items():
                gx += c * (1j * k) ** dx * np.exp(1j * k * x)
            out = out + gx * f.eval(xi, d=dxi)
        return out

    def to_symbol(self, nu, l_max, j_max, xi_max):
        """Sample on the integer lattice (phi-independent)."""
        out = Symbol.zeros(self.order, nu, l_max, j_max, xi_max)
        xi = np.arange(-xi_max, xi_max + 1)
        for g, f in self.terms:
            fx = f.eval(xi)
            for k, c in g.items():
                if abs(k) > j_max:
                    raise WindowError(abs(k), j_max)
                out.coeffs[(l_max,) * nu + (k + j_max,)] += c * fx
        return out
