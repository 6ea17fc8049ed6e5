"""Log-domain special functions and uniform quadrature.

Everything that multiplies many count-dependent factors (powers of
sin/cos, factorials, Poissonian weights) is carried as a logarithm and
only exponentiated after subtracting the maximum, so records with several
hundred detections neither underflow nor overflow.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on ``[lo, hi)`` (periodic) or ``[lo, hi]`` (closed)."""

    lo: float
    hi: float
    n: int
    periodic: bool = False

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"grid needs n >= 2 points, got {self.n}")
        if not self.hi > self.lo:
            raise ValueError(f"grid needs hi > lo, got [{self.lo}, {self.hi}]")

    @classmethod
    def phase(cls, n: int = 1024) -> "Grid1D":
        return cls(0.0, TWO_PI, n, periodic=True)

    @property
    def spacing(self) -> float:
        if self.periodic:
            return (self.hi - self.lo) / self.n
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def points(self) -> np.ndarray:
        return self.lo + self.spacing * np.arange(self.n)

    def quadrature_weights(self) -> np.ndarray:
        w = np.full(self.n, self.spacing)
        if not self.periodic:
            w[0] *= 0.5
            w[-1] *= 0.5
        return w

    def integrate(self, values) -> float:
        """Trapezoidal integral of sampled ``values`` (periodic rule if periodic)."""
        return float(np.dot(self.quadrature_weights(), np.asarray(values, dtype=float)))


def log_poissonian(n, mu: float):
    """ln of mu**n exp(-mu) / n!; vectorized over ``n``."""
    if not mu > 0:
        raise ValueError(f"Poissonian mean must be positive, got {mu}")
    n = np.asarray(n, dtype=float)
    out = n * np.log(mu) - mu - special.gammaln(n + 1.0)
    return float(out) if out.ndim == 0 else out


def log_thermal(n, nbar: float):
    """ln of nbar**n / (1 + nbar)**(n + 1); vectorized over ``n``."""
    if not nbar > 0:
        raise ValueError(f"thermal mean must be positive, got {nbar}")
    n = np.asarray(n, dtype=float)
    out = n * np.log(nbar) - (n + 1.0) * np.log1p(nbar)
    return float(out) if out.ndim == 0 else out


def log_phase_moment_integral(r, l):
    """ln of Gamma(r+1/2) Gamma(l+1/2) / (pi Gamma(r+l+1))."""
    r = np.asarray(r, dtype=float)
    l = np.asarray(l, dtype=float)
    out = (special.gammaln(r + 0.5) + special.gammaln(l + 0.5)
           - np.log(np.pi) - special.gammaln(r + l + 1.0))
    return float(out) if out.ndim == 0 else out


def phase_moment_integral(r, l):
    """Torus average of cos^{2r}(D/2) sin^{2l}(D/2), D the angle difference.

    Closed form Gamma(r+1/2) Gamma(l+1/2) / (pi Gamma(r+l+1)), evaluated
    through log-Gamma.
    """
    out = np.exp(log_phase_moment_integral(r, l))
    return float(out) if np.ndim(out) == 0 else out


def bessel_j0(x):
    return special.j0(x)


def periodic_quadrature(f, n: int) -> float:
    """Trapezoidal integral of ``f`` over one period ``[0, 2pi)`` with ``n`` nodes.

    Exact (to rounding) for trigonometric polynomials of degree below ``n``.
    ``f`` must accept a numpy array.
    """
    if n < 4:
        raise ValueError("periodic quadrature needs at least 4 nodes")
    x = TWO_PI * np.arange(n) / n
    return float(np.sum(f(x)) * TWO_PI / n)


def log_power(base, power):
    """``power * ln|base|`` with the convention 0 * ln 0 = 0 and ln 0 = -inf."""
    base = np.abs(np.asarray(base, dtype=float))
    if np.isscalar(power) and power == 0:
        return np.zeros_like(base)
    with np.errstate(divide="ignore"):
        return power * np.log(base)


def log_sincos_kernel(delta, l: int, r: int):
    """ln of sin^{2l}(delta/2) cos^{2r}(delta/2)."""
    half = 0.5 * np.asarray(delta, dtype=float)
    return log_power(np.sin(half), 2 * l) + log_power(np.cos(half), 2 * r)


def exp_normalized(logw, quad_weights=None) -> np.ndarray:
    """Exponentiate log-weights after max subtraction and normalize.

    With ``quad_weights`` the result integrates to one under those weights,
    otherwise it sums to one.
    """
    logw = np.asarray(logw, dtype=float)
    top = np.max(logw)
    if not np.isfinite(top):
        raise ValueError("all weights are zero")
    w = np.exp(logw - top)
    total = np.sum(w) if quad_weights is None else np.dot(quad_weights, w)
    return w / total


def wrap_angle(x):
    """Map angles to ``[-pi, pi)``."""
    return (np.asarray(x) + np.pi) % TWO_PI - np.pi
