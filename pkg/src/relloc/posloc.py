"""Relative-position localization of two particles on a real-space grid.

Only the diagonal of the relative-coordinate density is tracked: every
measurement kernel here multiplies it pointwise, followed by a
renormalization.  Separations are ``dr = y - x``.

Wavepacket convention: ``GaussianWavepacket(k, a, d)`` has position
density of standard deviation ``d / sqrt(2)``, so two independent packets
of spread ``d`` give ``dr`` a spread ``d``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ConfigError
from .numkernel import TWO_PI, Grid1D, bessel_j0, exp_normalized, log_power, log_sincos_kernel

FORWARD = "forward"
DEFLECT = "deflect"

DEFAULT_K = 5.0
DEFAULT_D = 0.2 * TWO_PI / DEFAULT_K


@dataclass(frozen=True)
class GaussianWavepacket:
    k: float
    a: float
    d: float

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError(f"spread must be positive, got {self.d}")

    @property
    def position_std(self) -> float:
        return self.d / np.sqrt(2.0)

    def density(self, x):
        s = self.position_std
        return np.exp(-0.5 * ((np.asarray(x) - self.a) / s) ** 2) / (s * np.sqrt(TWO_PI))


@dataclass(frozen=True)
class RelativePositionDensity:
    grid: Grid1D
    density: np.ndarray = field(repr=False)
    region: tuple = (None, None)

    @classmethod
    def from_log(cls, grid: Grid1D, logw, region=(None, None)) -> "RelativePositionDensity":
        logw = np.array(logw, dtype=float)
        lo, hi = region
        x = grid.points
        if lo is not None:
            logw[x < lo] = -np.inf
        if hi is not None:
            logw[x > hi] = -np.inf
        return cls(grid, exp_normalized(logw, grid.quadrature_weights()), tuple(region))

    @property
    def points(self) -> np.ndarray:
        return self.grid.points

    def total(self) -> float:
        return self.grid.integrate(self.density)

    def log_density(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.density)

    def times_log(self, log_kernel) -> "RelativePositionDensity":
        return RelativePositionDensity.from_log(self.grid, self.log_density() + log_kernel, self.region)

    def argmax(self) -> float:
        return float(self.points[np.argmax(self.density)])


@dataclass(frozen=True)
class ScatterRecord:
    F: int
    D: int
    k: float
    eps_angle: float = 0.0
    cumulative_kick: float = 0.0

    def __post_init__(self):
        if self.F < 0 or self.D < 0:
            raise ValueError("counts must be nonnegative")
        if not 0.0 <= self.eps_angle < np.pi:
            raise ValueError(f"observer half-angle must lie in [0, pi), got {self.eps_angle}")


def relative_grid(half_width: float, n: int = 4001) -> Grid1D:
    return Grid1D(-half_width, half_width, n)


def uniform_prior(grid: Grid1D, region=(None, None)) -> RelativePositionDensity:
    return RelativePositionDensity.from_log(grid, np.zeros(grid.n), region)


def thermal_prior(region: tuple, d: float, grid: Grid1D) -> RelativePositionDensity:
    """Separation density of two particles spread uniformly over ``region`` with spread ``d``.

    The triangle of two uniform centres convolved with a Gaussian of
    standard deviation ``d``, truncated to the grid.
    """
    lo, hi = region
    width = hi - lo
    if not d > 0:
        raise ConfigError(f"spread must be positive, got {d}")
    if width < 3.0 * d:
        raise ConfigError(f"region width {width} is narrower than 3 d = {3 * d}")
    s = grid.points

    def ramp(x):
        # Gaussian-smoothed max(x, 0)
        return x * special.ndtr(x / d) + d * np.exp(-0.5 * (x / d) ** 2) / np.sqrt(TWO_PI)

    dens = (ramp(s + width) - 2.0 * ramp(s) + ramp(s - width)) / width ** 2
    with np.errstate(divide="ignore"):
        return RelativePositionDensity.from_log(grid, np.log(np.clip(dens, 0.0, None)))


def com_rel_decompose(p1: GaussianWavepacket, p2: GaussianWavepacket):
    """Centre-of-mass and relative factors of a product of equal-spread packets."""
    if not np.isclose(p1.d, p2.d, rtol=1e-12, atol=0.0):
        raise ConfigError("centre-of-mass factorization needs equal spreads")
    s = p1.d / np.sqrt(2.0)
    com = GaussianWavepacket(p1.k + p2.k, 0.5 * (p1.a + p2.a), s)
    rel = GaussianWavepacket(p2.k - p1.k, 0.5 * (p2.a - p1.a), s)
    return com, rel


def localize_product(p1: GaussianWavepacket, p2: GaussianWavepacket, kernel, grid: Grid1D):
    """Apply a separation kernel ``kernel(x2 - x1)`` to the two-particle density on ``grid``^2.

    Returns the marginal densities of the centre of mass ``(x1 + x2)/2`` and
    of the relative coordinate ``(x2 - x1)/2``, each on ``grid``.
    """
    x = grid.points
    c, s = np.meshgrid(x, x, indexing="ij")
    # x1 = c - s, x2 = c + s; the Jacobian is constant
    joint = p1.density(c - s) * p2.density(c + s) * kernel(2.0 * s)
    com = joint.sum(axis=1)
    rel = joint.sum(axis=0)
    return com / grid.integrate(com), rel / grid.integrate(rel)


# --- rubber cavity -------------------------------------------------------------

def rubber_cavity_log_kernel(dr, l: int, r: int, k: float):
    return log_sincos_kernel(np.sqrt(2.0) * k * np.asarray(dr), l, r)


def rubber_cavity_localize(prior: RelativePositionDensity, record, k: float) -> RelativePositionDensity:
    """Multiply by sin^{2l}(sqrt2 k dr/2) cos^{2r}(sqrt2 k dr/2) and renormalize."""
    l, r = record
    if l == 0 and r == 0:
        return prior
    return prior.times_log(rubber_cavity_log_kernel(prior.points, l, r, k))


# --- scattering ------------------------------------------------------------------

def _full_angle_average(x) -> np.ndarray:
    """(1/2pi) int_0^{2pi} cos(x sin t) dt.

    512-node periodic rule while it resolves the integrand, J0 beyond
    (large kicks from multi-photon wavepackets).
    """
    x = np.asarray(x, dtype=float)
    if np.max(np.abs(x), initial=0.0) > 200.0:
        return bessel_j0(x)
    t = TWO_PI * np.arange(512) / 512
    return np.cos(np.multiply.outer(x, np.sin(t))).mean(axis=-1)


def _small_angle_integral(x, eps: float) -> np.ndarray:
    """(1/2pi) int_{-eps}^{eps} cos^2(x sin t / 2) dt by Gauss-Legendre."""
    x = np.asarray(x, dtype=float)
    if eps == 0.0:
        return np.zeros_like(x)
    order = 32 + int(np.ceil(np.max(np.abs(x), initial=0.0) * eps))
    nodes, weights = np.polynomial.legendre.leggauss(order)
    t = eps * nodes
    vals = np.cos(0.5 * np.outer(x.ravel(), np.sin(t))) ** 2
    return (vals @ (eps * weights) / TWO_PI).reshape(x.shape)


def scatter_kernels(dr, k: float, eps_angle: float):
    """(forward, deflect) weights at separations ``dr``; they sum to one pointwise."""
    if not 0.0 <= eps_angle < np.pi:
        raise ValueError(f"observer half-angle must lie in [0, pi), got {eps_angle}")
    x = k * np.asarray(dr, dtype=float)
    full_cos2 = 0.5 * (1.0 + _full_angle_average(x))
    small = _small_angle_integral(x, eps_angle)
    deflect = full_cos2 - small
    forward = (1.0 - full_cos2) + small
    return forward, deflect


def coarse_scatter_update(prior: RelativePositionDensity, outcome: str, k: float,
                          eps_angle: float = 0.0) -> RelativePositionDensity:
    forward, deflect = scatter_kernels(prior.points, k, eps_angle)
    if outcome == FORWARD:
        kern = forward
    elif outcome == DEFLECT:
        kern = deflect
    else:
        raise ValueError(f"outcome must be 'forward' or 'deflect', got {outcome!r}")
    return prior.times_log(log_power(np.clip(kern, 0.0, None), 1))


def scatter_record_density(prior: RelativePositionDensity, record: ScatterRecord) -> RelativePositionDensity:
    """Apply ``F`` forward and ``D`` deflection outcomes at once (the kernels commute)."""
    forward, deflect = scatter_kernels(prior.points, record.k, record.eps_angle)
    logk = log_power(np.clip(forward, 0, None), record.F) + log_power(np.clip(deflect, 0, None), record.D)
    return prior.times_log(logk)


def bessel_pattern(F: int, D: int, k: float, grid: Grid1D) -> RelativePositionDensity:
    """[1 - J0(k dr)]^F [1 + J0(k dr)]^D, normalized on ``grid``."""
    if F < 0 or D < 0:
        raise ValueError("counts must be nonnegative")
    if F + D == 0:
        raise ConfigError("no scattering events, nothing to update")
    j = bessel_j0(k * grid.points)
    return RelativePositionDensity.from_log(grid, log_power(1.0 - j, F) + log_power(1.0 + j, D))


def thermal_photon_weights(nbar: float, tail: float = 1e-8) -> np.ndarray:
    """Thermal photon-number weights nbar^n / (1 + nbar)^{n+1}, cut where the tail drops below ``tail``."""
    if not nbar > 0:
        raise ValueError(f"mean photon number must be positive, got {nbar}")
    q = nbar / (1.0 + nbar)
    n_max = int(np.ceil(np.log(tail) / np.log(q)))
    n = np.arange(n_max + 1)
    return (1.0 - q) * q ** n


def thermal_scatter_kernels(dr, k: float, eps_angle: float, nbar: float):
    """Kernels of one thermal wavepacket: single-photon kernels mixed over n with kick n k."""
    w = thermal_photon_weights(nbar)
    forward = np.zeros(np.shape(dr))
    deflect = np.zeros(np.shape(dr))
    for n, wn in enumerate(w):
        f, d = scatter_kernels(dr, n * k, eps_angle)
        forward += wn * f
        deflect += wn * d
    s = w.sum()
    return forward / s, deflect / s


def _outcomes(outcomes):
    for o in outcomes:
        if o not in (FORWARD, DEFLECT):
            raise ValueError(f"outcome must be 'forward' or 'deflect', got {o!r}")
    return list(outcomes)


def sample_scatter_outcomes(prior: RelativePositionDensity, n: int, k: float, eps_angle: float = 0.0,
                            seed=None, nbar: float | None = None) -> list:
    """Draw ``n`` outcomes sequentially from their predictive probabilities."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if nbar is None:
        forward, deflect = scatter_kernels(prior.points, k, eps_angle)
    else:
        forward, deflect = thermal_scatter_kernels(prior.points, k, eps_angle, nbar)
    dens = prior
    out = []
    for _ in range(n):
        pf = dens.grid.integrate(dens.density * forward)
        pd = dens.grid.integrate(dens.density * deflect)
        o = FORWARD if rng.random() * (pf + pd) < pf else DEFLECT
        out.append(o)
        dens = dens.times_log(log_power(np.clip(forward if o == FORWARD else deflect, 0, None), 1))
    return out


def thermal_light_scatter(prior: RelativePositionDensity, nbar: float, outcomes, k: float,
                          eps_angle: float = 0.0, seed=None) -> RelativePositionDensity:
    """Update by thermal-light wavepackets; ``outcomes`` is a sequence or a count to sample."""
    if isinstance(outcomes, (int, np.integer)):
        outcomes = sample_scatter_outcomes(prior, int(outcomes), k, eps_angle, seed, nbar)
    outcomes = _outcomes(outcomes)
    forward, deflect = thermal_scatter_kernels(prior.points, k, eps_angle, nbar)
    F = sum(o == FORWARD for o in outcomes)
    D = len(outcomes) - F
    if F + D == 0:
        return prior
    logk = log_power(np.clip(forward, 0, None), F) + log_power(np.clip(deflect, 0, None), D)
    return prior.times_log(logk)


def l1_distance(p: RelativePositionDensity, q: RelativePositionDensity) -> float:
    if p.grid != q.grid:
        raise ValueError("densities live on different grids")
    return p.grid.integrate(np.abs(p.density - q.density))
