"""Seeded random inputs and small shared helpers (probe families, tests)."""

import numpy as np

from .fourier import TorusFunction, sobolev_norm


def rng_for(seed):
    return np.random.default_rng(seed)


def random_real_function(nu, l_max, j_max, rng, decay=2.0, amplitude=1.0,
                         zero_mean_x=False):
    """Random real TorusFunction with <l,j>^-decay coefficient falloff."""
    shape = (2 * l_max + 1,) * nu + (2 * j_max + 1,)
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    u = TorusFunction(nu, l_max, j_max, raw, zero_mean_x=False)
    from .fourier import sobolev_weights

    w = sobolev_weights(nu, l_max, j_max, decay)
    u.coeffs = amplitude * u.coeffs / w
    u.enforce_reality()
    if zero_mean_x:
        u.coeffs[..., j_max] = 0.0
        u.zero_mean_x = True
    return u


def normalized(u, s):
    n = sobolev_norm(u, s)
    if n == 0:
        raise ValueError("cannot normalize the zero function")
    return u * (1.0 / n)
