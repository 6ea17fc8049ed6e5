"""Analytic relative-phase localization for two equal-amplitude modes.

After ``l`` counts at the left detector (Kraus operator a - e^{i tau} b)
and ``r`` counts at the right one (a + e^{i tau} b), the relative phase
``D = phi - theta`` of the two modes carries the weight

    sin^{2l}((D + tau)/2) cos^{2r}((D + tau)/2).

A phase-shifter setting ``tau`` therefore translates the kernel to
``D = -tau``; at ``tau = 0`` the peaks sit at ``+-D0`` with
``D0 = 2 arccos sqrt(r / (l + r))``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import NoPeakError
from .numkernel import (
    TWO_PI,
    Grid1D,
    exp_normalized,
    log_phase_moment_integral,
    log_poissonian,
    log_sincos_kernel,
    wrap_angle,
)


@dataclass(frozen=True)
class DetectionRecord:
    """Counts ``l`` (left) and ``r`` (right) taken at phase setting ``tau``."""

    l: int
    r: int
    tau: float = 0.0

    def __post_init__(self):
        if self.l < 0 or self.r < 0:
            raise ValueError(f"counts must be nonnegative, got l={self.l}, r={self.r}")
        object.__setattr__(self, "tau", float(self.tau) % TWO_PI)

    @property
    def total(self) -> int:
        return self.l + self.r


@dataclass(frozen=True)
class RelativePhaseDensity:
    """Probability density over the relative phase on a periodic grid."""

    grid: Grid1D
    weights: np.ndarray = field(repr=False)

    @classmethod
    def from_log(cls, grid: Grid1D, logw) -> "RelativePhaseDensity":
        return cls(grid, exp_normalized(logw, grid.quadrature_weights()))

    @classmethod
    def uniform(cls, grid: Grid1D) -> "RelativePhaseDensity":
        return cls(grid, np.full(grid.n, 1.0 / (grid.hi - grid.lo)))

    @property
    def points(self) -> np.ndarray:
        return self.grid.points

    def total(self) -> float:
        return self.grid.integrate(self.weights)

    def argmax(self) -> float:
        return float(self.points[np.argmax(self.weights)])

    def local_maxima(self, rel_height: float = 0.0) -> np.ndarray:
        """Grid locations of periodic local maxima at least ``rel_height`` of the top.

        Plateaus count once (strict rise on the left, non-strict fall on the right).
        """
        w = self.weights
        is_max = (w > np.roll(w, 1)) & (w >= np.roll(w, -1))
        is_max &= w >= rel_height * w.max()
        return self.points[is_max]

    def circular_std(self, center: float | None = None) -> float:
        """Root-mean-square angular distance from ``center`` (default: the argmax)."""
        c = self.argmax() if center is None else center
        d = wrap_angle(self.points - c)
        return float(np.sqrt(self.grid.integrate(self.weights * d * d)))

    def times(self, other: "RelativePhaseDensity") -> "RelativePhaseDensity":
        if other.grid != self.grid:
            raise ValueError("densities live on different grids")
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights) + np.log(other.weights)
        return RelativePhaseDensity.from_log(self.grid, logw)


@dataclass(frozen=True)
class LocalizationPeaks:
    delta0: float
    mirrored: bool
    gaussian_width: float

    def locations(self, tau: float = 0.0) -> np.ndarray:
        """Peak positions in [0, 2pi) for a record taken at setting ``tau``."""
        base = [self.delta0, -self.delta0] if self.mirrored else [self.delta0]
        return np.mod(np.array(base) - tau, TWO_PI)


@dataclass(frozen=True)
class CatStateDescriptor:
    """Fock expansion of the relative-phase-localized limit state.

    Amplitude ``m`` multiplies ``|2g - m, m>`` with ``g = |gamma|^2``.
    """

    gamma_mag: float
    delta0: float
    total_photons: int
    fock_amplitudes: np.ndarray = field(repr=False)

    def two_mode_amplitudes(self, cutoff: int | None = None) -> np.ndarray:
        c = self.total_photons if cutoff is None else cutoff
        if c < self.total_photons:
            raise ValueError("cutoff below the total photon number")
        out = np.zeros((c + 1, c + 1), dtype=complex)
        m = np.arange(self.total_photons + 1)
        out[self.total_photons - m, m] = self.fock_amplitudes
        return out

    def schmidt_rank(self, tol: float = 1e-12) -> int:
        s = np.linalg.svd(self.two_mode_amplitudes(), compute_uv=False)
        return int(np.sum(s > tol * s.max()))


def clr_log_kernel(delta, record: DetectionRecord):
    """ln of |C_{l,r}|^2 up to a constant, evaluated at arbitrary phases."""
    return log_sincos_kernel(np.asarray(delta) + record.tau, record.l, record.r)


def clr_density(record: DetectionRecord, grid: Grid1D) -> RelativePhaseDensity:
    if not grid.periodic:
        raise ValueError("relative-phase densities need a periodic grid")
    return RelativePhaseDensity.from_log(grid, clr_log_kernel(grid.points, record))


def product_density(records, grid: Grid1D) -> RelativePhaseDensity:
    """Normalized product of the kernels of several records (batches commute)."""
    logw = np.zeros(grid.n)
    for rec in records:
        logw = logw + clr_log_kernel(grid.points, rec)
    return RelativePhaseDensity.from_log(grid, logw)


def peak_phase(l: int, r: int) -> float:
    """2 arccos sqrt(r / (l + r)), in [0, pi]."""
    if l + r == 0:
        raise NoPeakError("no detections, no localization peak")
    return float(2.0 * np.arccos(np.sqrt(r / (l + r))))


def localization_peaks(record: DetectionRecord) -> LocalizationPeaks:
    """Peak location and asymptotic Gaussian width of |C_{l,r}|.

    The width is the standard deviation of the Gaussian approximating the
    amplitude |C|: sqrt(2/(l+r)) with counts at both ports, sqrt(4/n) when
    all ``n`` counts hit one port.
    """
    l, r = record.l, record.r
    d0 = peak_phase(l, r)
    if l == 0 or r == 0:
        return LocalizationPeaks(d0, False, float(np.sqrt(4.0 / (l + r))))
    return LocalizationPeaks(d0, True, float(np.sqrt(2.0 / (l + r))))


def _gaussian_approximant(u, l: int, r: int):
    """Unit-peak Gaussian approximation of |sin^l(u/2) cos^r(u/2)|, u in [0, 2pi)."""
    n = l + r
    if l == 0:
        return np.exp(-(r / 8.0) * wrap_angle(u) ** 2)
    if r == 0:
        return np.exp(-(l / 8.0) * (u - np.pi) ** 2)
    d0 = peak_phase(l, r)
    centre = np.where(u <= np.pi, d0, TWO_PI - d0)
    return np.exp(-(n / 4.0) * (u - centre) ** 2)


def gaussian_asymptote_error(record: DetectionRecord, grid: Grid1D) -> float:
    """Sup-norm gap between the unit-peak exact |C_{l,r}| and its Gaussian asymptote."""
    if record.total == 0:
        raise NoPeakError("no detections, no localization peak")
    u = np.mod(grid.points + record.tau, TWO_PI)
    exact_log = 0.5 * log_sincos_kernel(u, record.l, record.r)
    l, r = record.l, record.r
    # peak value sqrt(l^l r^r / (l+r)^(l+r)), with 0^0 = 1
    n = l + r
    peak_log = 0.5 * (special.xlogy(l, l) + special.xlogy(r, r) - n * np.log(n))
    exact = np.exp(exact_log - peak_log)
    return float(np.max(np.abs(exact - _gaussian_approximant(u, l, r))))


def _check_eps(eps: float):
    if not 0.0 < eps < 1.0:
        raise ValueError(f"leakage fraction must lie in (0, 1), got {eps}")


def log_plr_fock_approx(l, r, N: float, eps: float):
    _check_eps(eps)
    if not N >= 1:
        raise ValueError(f"mean occupancy must be >= 1, got {N}")
    l = np.asarray(l, dtype=float)
    r = np.asarray(r, dtype=float)
    total = l + r
    # Poissonian(total; 2 eps N) * multinomial * phase moment
    return (log_poissonian(total, 2.0 * eps * N)
            + special.gammaln(total + 1.0) - special.gammaln(l + 1.0) - special.gammaln(r + 1.0)
            + log_phase_moment_integral(r, l))


def plr_fock_approx(l, r, N: float, eps: float):
    """Record probability for equal Fock (approximate) or Poissonian (exact) inputs."""
    out = np.exp(log_plr_fock_approx(l, r, N, eps))
    return float(out) if np.ndim(out) == 0 else out


def plr_thermal(l, r, nbar: float, eps: float):
    """Exact record probability for two thermal modes: x^{l+r} / (1+x)^{l+r+2}, x = eps nbar."""
    _check_eps(eps)
    if not nbar > 0:
        raise ValueError(f"mean photon number must be positive, got {nbar}")
    x = eps * nbar
    total = np.asarray(l, dtype=float) + np.asarray(r, dtype=float)
    out = np.exp(total * np.log(x) - (total + 2.0) * np.log1p(x))
    return float(out) if np.ndim(out) == 0 else out


def total_count_cutoff(kind: str, eps: float, nbar: float, tail: float = 1e-12) -> int:
    """Largest total count l+r worth summing over.

    Mean plus 15 standard deviations of the total-count law, extended if
    needed until the neglected tail is below ``tail``.
    """
    _check_eps(eps)
    if kind in ("poissonian", "fock"):
        mu = 2.0 * eps * nbar
        cut = int(np.ceil(mu + 15.0 * np.sqrt(mu))) + 1
        def tail_mass(c):
            return special.pdtrc(c, mu)
    elif kind == "thermal":
        x = eps * nbar
        cut = int(np.ceil(2 * x + 15.0 * np.sqrt(2 * x * (1 + x)))) + 1
        q = x / (1.0 + x)
        def tail_mass(c):
            # sum_{k>c} (k+1) q^k (1-q)^2
            return q ** (c + 1) * (c + 2 - (c + 1) * q)
    else:
        raise ValueError(f"unknown ensemble kind {kind!r}")
    while tail_mass(cut) > tail:
        cut += max(1, cut // 4)
    return cut


def cat_descriptor(gamma_sq: int, delta0: float) -> CatStateDescriptor:
    """Fock amplitudes sqrt(Pi_{2g-m}(g) Pi_m(g)) e^{i m delta0}, normalized."""
    if int(gamma_sq) != gamma_sq or gamma_sq < 1:
        raise ValueError(f"|gamma|^2 must be a positive integer, got {gamma_sq}")
    g = int(gamma_sq)
    m = np.arange(2 * g + 1)
    log_mod = 0.5 * (log_poissonian(2 * g - m, g) + log_poissonian(m, g))
    mod = exp_normalized(2.0 * log_mod) ** 0.5
    amps = mod * np.exp(1j * m * delta0)
    return CatStateDescriptor(float(np.sqrt(g)), float(delta0), 2 * g, amps)


def relational_cat_amplitudes(gamma_sq: int, delta0: float) -> np.ndarray:
    """Fock amplitudes (index m) of the two-peak cat at relative phases +-delta0."""
    g = int(gamma_sq)
    plus = cat_descriptor(g, delta0).fock_amplitudes * np.exp(-1j * g * delta0)
    minus = cat_descriptor(g, -delta0).fock_amplitudes * np.exp(1j * g * delta0)
    amps = plus + minus
    return amps / np.linalg.norm(amps)
