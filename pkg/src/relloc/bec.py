"""Relative phase of two condensates probed by single-atom detections.

An atom found at ``x`` is annihilated by ``e^{ikx} b_k + e^{-ikx} b_{-k}``,
which up to a global phase is the right-port operator ``b_k + e^{i tau}
b_{-k}`` with ``tau = -2kx``.  Positions ``pi/k`` apart are equivalent, and
a position in the upper half of that cell equals one ``pi/2k`` lower with
the sign of the second term flipped (the left-port operator).  The
resulting fringe density is ``cos^2(kx - D/2)`` for relative phase ``D``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .focksim import LEFT, RIGHT, MixedEnsemble, _sample_fixed_total
from .numkernel import TWO_PI, Grid1D, log_sincos_kernel
from .phaseloc import DetectionRecord, RelativePhaseDensity, product_density


@dataclass(frozen=True)
class AtomDetectionEvent:
    x: float
    k: float
    reduced_tau: float
    port: str


@dataclass(frozen=True)
class TwoSettingRecord:
    """``M`` counts at each of the settings tau = 0 and tau = pi/2."""

    M: int
    l1: int
    r1: int
    l2: int
    r2: int

    def __post_init__(self):
        if min(self.l1, self.r1, self.l2, self.r2) < 0:
            raise ValueError("counts must be nonnegative")
        if self.l1 + self.r1 != self.M or self.l2 + self.r2 != self.M:
            raise ValueError("each setting must hold exactly M counts")

    def records(self) -> tuple[DetectionRecord, DetectionRecord]:
        return (DetectionRecord(self.l1, self.r1, 0.0), DetectionRecord(self.l2, self.r2, np.pi / 2))


def reduce_position(x: float, k: float) -> tuple[float, int]:
    """Equivalent position in ``[0, pi/2k)`` and the sign (+1 or -1) of the effective operator."""
    if not k > 0:
        raise ValueError(f"momentum must be positive, got {k}")
    cell = np.pi / k
    y = float(np.mod(x, cell))
    if y >= cell:  # rounding of mod for x just below a multiple of the cell
        y = 0.0
    half = 0.5 * cell
    if y < half:
        return y, 1
    return y - half, -1


def event_from_position(x: float, k: float) -> AtomDetectionEvent:
    y, sign = reduce_position(x, k)
    return AtomDetectionEvent(float(x), float(k), float(np.mod(-2.0 * k * y, TWO_PI)),
                              RIGHT if sign > 0 else LEFT)


def two_setting_density(record: TwoSettingRecord, grid: Grid1D) -> RelativePhaseDensity:
    return product_density(record.records(), grid)


def posterior_std(density: RelativePhaseDensity) -> float:
    """Standard deviation of the relative-phase density about its peak."""
    return density.circular_std()


def gaussian_width(density: RelativePhaseDensity) -> float:
    """Half-width at 1/e of the amplitude profile, i.e. twice the density's standard deviation."""
    return 2.0 * density.circular_std()


def has_unique_peak(density: RelativePhaseDensity, ratio: float = 0.5) -> bool:
    """True when every other local maximum is below ``ratio`` times the global one."""
    w = density.weights
    is_max = (w > np.roll(w, 1)) & (w >= np.roll(w, -1))
    heights = np.sort(w[is_max])[::-1]
    return len(heights) >= 1 and (len(heights) == 1 or heights[1] < ratio * heights[0])


def two_setting_probability(record: TwoSettingRecord, grid: Grid1D | None = None) -> float:
    """Exact probability of a two-setting record for Poissonian condensates.

    Conditioned on ``M`` counts at each setting, the record law is
    C(M, l1) C(M, l2) times the phase average of the two kernels, for any
    common mean atom number.
    """
    g = Grid1D.phase(max(1024, 8 * record.M + 8)) if grid is None else grid
    d = g.points
    logk = log_sincos_kernel(d, record.l1, record.r1) + log_sincos_kernel(d + np.pi / 2, record.l2, record.r2)
    avg = g.integrate(np.exp(logk)) / (g.hi - g.lo)
    M = record.M
    return float(special.comb(M, record.l1, exact=True) * special.comb(M, record.l2, exact=True) * avg)


@dataclass(frozen=True)
class LikelyEvents:
    M: int
    threshold: float
    records: list = field(repr=False)  # (TwoSettingRecord, probability)

    @property
    def mass(self) -> float:
        return float(sum(p for _, p in self.records))


def all_two_setting_records(M: int):
    for l1 in range(M + 1):
        for l2 in range(M + 1):
            yield TwoSettingRecord(M, l1, M - l1, l2, M - l2)


def likely_events(M: int, grid: Grid1D | None = None, check_peaks: bool = True) -> LikelyEvents:
    """Records more probable than 1/(M+1)^2, with their exact probabilities."""
    if M < 1:
        raise ValueError("need at least one detection per setting")
    g = Grid1D.phase(1024) if grid is None else grid
    threshold = 1.0 / (M + 1) ** 2
    kept = []
    for rec in all_two_setting_records(M):
        p = two_setting_probability(rec, g)
        if p > threshold:
            if check_peaks and not has_unique_peak(two_setting_density(rec, g)):
                raise AssertionError(f"likely record {rec} has no unique peak")
            kept.append((rec, p))
    return LikelyEvents(M, threshold, kept)


# --- fringe simulation -------------------------------------------------------

@dataclass(frozen=True)
class FringeFit:
    amplitude: float
    offset: float
    delta0: float
    visibility: float


def fit_fringes(x, k: float, periods: int = 2, bins: int = 32) -> FringeFit:
    """Least-squares fit of A cos^2(kx - D/2) + B to a fixed-bin histogram of ``x``.

    Positions are folded into ``[0, periods * pi/k)``; the visibility is
    ``A / (A + 2B)`` and is not clipped.
    """
    span = periods * np.pi / k
    counts, edges = np.histogram(np.mod(x, span), bins=bins, range=(0.0, span))
    centres = 0.5 * (edges[:-1] + edges[1:])
    design = np.column_stack([np.ones(bins), np.cos(2 * k * centres), np.sin(2 * k * centres)])
    (c0, c1, c2), *_ = np.linalg.lstsq(design, counts.astype(float), rcond=None)
    half_a = float(np.hypot(c1, c2))
    A = 2.0 * half_a
    B = float(c0) - half_a
    denom = A + 2.0 * B
    vis = A / denom if denom != 0 else float("nan")
    return FringeFit(A, B, float(np.mod(np.arctan2(c2, c1), TWO_PI)), float(vis))


def bootstrap_visibility(x, k: float, n_boot: int = 400, seed=None, periods: int = 2, bins: int = 32):
    """(2.5%, 97.5%) percentiles of the refitted visibility over bootstrap resamples of ``x``."""
    rng = np.random.default_rng(seed)
    x = np.asarray(x)
    vals = [fit_fringes(rng.choice(x, size=len(x)), k, periods, bins).visibility for _ in range(n_boot)]
    return tuple(np.nanpercentile(vals, [2.5, 97.5]))


@dataclass
class FringeRun:
    events: list
    widths: np.ndarray
    density: RelativePhaseDensity

    @property
    def positions(self) -> np.ndarray:
        return np.array([e.x for e in self.events])


def simulate_fringes(nbar: float, n_atoms: int, k: float, seed=None, periods: int = 2,
                     grid: Grid1D | None = None) -> FringeRun:
    """Detect ``n_atoms`` atoms one by one from two Poissonian condensates of mean ``nbar``.

    Each reduced position is uniform on ``[0, pi/2k)``; the port follows
    the exact branch norms of the current state, and the reported position
    is placed in a uniformly chosen cell among ``periods``.  ``widths[i]``
    is the posterior standard deviation after ``i + 1`` detections.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    g = Grid1D.phase(1024) if grid is None else grid
    ens = MixedEnsemble.poissonian(nbar)
    for _ in range(10_000):
        n, m = ens.sample_pair(rng)
        if n + m >= n_atoms:
            break
    else:
        raise ValueError(f"condensates rarely hold {n_atoms} atoms")
    total = n + m
    vec = np.zeros(total + 1, dtype=complex)
    vec[n] = 1.0
    half = 0.5 * np.pi / k
    logw = np.zeros(g.n)
    events, widths = [], []
    for _ in range(n_atoms):
        y = rng.uniform(0.0, half)
        tau = float(np.mod(-2.0 * k * y, TWO_PI))
        (ev,), vec, total, _ = _sample_fixed_total(vec, total, [tau], rng)
        cell = rng.integers(periods)
        x = y + (0.0 if ev.detector == RIGHT else half) + cell * 2 * half
        events.append(AtomDetectionEvent(float(x), float(k), tau, ev.detector))
        logw = logw + log_sincos_kernel(g.points + tau, int(ev.detector == LEFT), int(ev.detector == RIGHT))
        widths.append(posterior_std(RelativePhaseDensity.from_log(g, logw)))
    return FringeRun(events, np.array(widths), RelativePhaseDensity.from_log(g, logw))
