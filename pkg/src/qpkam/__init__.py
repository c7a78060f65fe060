"""Reduction of quasi-periodically forced first-order operators on the circle.

Two-stage pipeline: a symplectic transport straightening that conjugates
omega.d_phi - J(1+a) + Q to omega.d_phi - m J + R with R one-smoothing, then a
KAM scheme that diagonalizes the remainder.  Companion modules verify the
spectral, dynamical and measure-theoretic behaviour at desk scale.
"""

__version__ = "0.1.0"
