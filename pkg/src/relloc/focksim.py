"""Two-mode truncated-Fock quantum-trajectory engine.

Detection Kraus operators are ``K = (a -+ e^{i tau} b) / sqrt(2)`` (minus for
the left detector, plus for the right), so that ``K_L^+ K_L + K_R^+ K_R``
is the total number operator.  Leakage of a fraction ``eps`` of the light
without a count is the damping ``(1 - eps)^{(n + m)/2}``.

Every initial state used here is number-diagonal (Fock products,
Poissonian and thermal mixtures), so each sampled member ``|n, m>`` keeps a
definite total photon number along its trajectory.  The no-count evolution
is then a scalar, the number of counts after leaking ``eps`` is
Binomial(n + m, eps), and the detector labels follow from the Kraus branch
norms.  The fast paths below work on the anti-diagonal vector of a fixed
total instead of the dense ``(c+1) x (c+1)`` grid.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import CutoffOverflowError, NumericalValidationError
from .numkernel import TWO_PI, Grid1D, exp_normalized, log_poissonian, log_thermal
from .phaseloc import (
    DetectionRecord,
    LocalizationPeaks,
    RelativePhaseDensity,
    clr_log_kernel,
)

LEFT = "left"
RIGHT = "right"
_SIGN = {LEFT: -1.0, RIGHT: 1.0}

TAIL_TOLERANCE = 1e-10


@dataclass(frozen=True)
class JumpEvent:
    detector: str
    tau: float = 0.0

    def __post_init__(self):
        if self.detector not in _SIGN:
            raise ValueError(f"detector must be 'left' or 'right', got {self.detector!r}")
        object.__setattr__(self, "tau", float(self.tau) % TWO_PI)

    @property
    def sign(self) -> float:
        return _SIGN[self.detector]

    def as_record(self) -> DetectionRecord:
        return DetectionRecord(int(self.detector == LEFT), int(self.detector == RIGHT), self.tau)


@dataclass(frozen=True)
class ModeMoments:
    """<a^+a>, <b^+b> and <a^+b> of a normalized (possibly mixed) state."""

    na: float
    nb: float
    ab: complex

    def intensity(self, tau):
        """Mean count at the left port after shifting mode b by ``tau`` and a 50:50 mix."""
        tau = np.asarray(tau, dtype=float)
        return 0.5 * (self.na + self.nb + 2.0 * np.real(np.exp(1j * tau) * self.ab))


@dataclass
class TwoModeFockState:
    """Dense amplitudes ``amplitudes[n, m]`` for ``0 <= n, m <= cutoff``.

    ``norm_log`` accumulates ln of the squared norm removed by earlier
    renormalizations, so ``norm_log + ln ||amplitudes||^2`` is the log of
    the unnormalized branch weight.
    """

    cutoff: int
    amplitudes: np.ndarray = field(repr=False)
    norm_log: float = 0.0

    @classmethod
    def fock(cls, n: int, m: int, cutoff: int | None = None) -> "TwoModeFockState":
        c = max(n, m) if cutoff is None else cutoff
        if c < max(n, m):
            raise CutoffOverflowError(f"cutoff {c} below initial occupation ({n}, {m})")
        amps = np.zeros((c + 1, c + 1), dtype=complex)
        amps[n, m] = 1.0
        return cls(c, amps)

    @classmethod
    def from_fixed_total(cls, vec, total: int, cutoff: int, norm_log: float = 0.0):
        """Embed a fixed-total vector (index = occupation of mode a) in the dense grid."""
        amps = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
        n = np.arange(total + 1)
        ok = (n <= cutoff) & (total - n <= cutoff)
        if np.any(np.abs(np.asarray(vec)[~ok]) > 0):
            raise CutoffOverflowError("state has weight beyond the cutoff")
        amps[n[ok], total - n[ok]] = np.asarray(vec)[ok]
        return cls(cutoff, amps, norm_log)

    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def is_zero(self) -> bool:
        return self.norm_sq() == 0.0

    def normalized(self) -> "TwoModeFockState":
        nsq = self.norm_sq()
        if nsq == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return TwoModeFockState(self.cutoff, self.amplitudes / np.sqrt(nsq), self.norm_log + np.log(nsq))

    def log_weight(self) -> float:
        nsq = self.norm_sq()
        return self.norm_log + (np.log(nsq) if nsq > 0 else -np.inf)

    def totals(self) -> np.ndarray:
        """Total photon numbers carrying nonzero amplitude."""
        n, m = np.nonzero(self.amplitudes)
        return np.unique(n + m)

    def moments(self) -> ModeMoments:
        psi = self.amplitudes / np.sqrt(self.norm_sq())
        c = self.cutoff
        k = np.arange(c + 1)
        prob = np.abs(psi) ** 2
        na = float(np.sum(prob * k[:, None]))
        nb = float(np.sum(prob * k[None, :]))
        # <a^+ b> = sum conj(psi[n+1, m-1]) sqrt(n+1) sqrt(m) psi[n, m]
        ab = np.sum(np.conj(psi[1:, :-1]) * np.sqrt(k[1:, None]) * np.sqrt(k[None, 1:]) * psi[:-1, 1:])
        return ModeMoments(na, nb, complex(ab))

    def fixed_total_vector(self) -> tuple[int, np.ndarray]:
        totals = self.totals()
        if len(totals) != 1:
            raise ValueError("state has no definite total photon number")
        t = int(totals[0])
        n = np.arange(max(0, t - self.cutoff), min(t, self.cutoff) + 1)
        vec = np.zeros(t + 1, dtype=complex)
        vec[n] = self.amplitudes[n, t - n]
        return t, vec

    def phase_profile(self, grid: Grid1D) -> RelativePhaseDensity:
        """Relative-phase density of a state descending from ``|N>|N>``.

        Writes the state as an integral over coherent states of equal
        amplitude and returns the squared modulus of its relative-phase
        coefficient.  Requires a definite total photon number.
        """
        t, vec = self.fixed_total_vector()
        n = np.arange(t + 1)
        nz = vec != 0
        logmag = np.full(t + 1, -np.inf)
        logmag[nz] = np.log(np.abs(vec[nz])) + 0.5 * (special.gammaln(n[nz] + 1) + special.gammaln(t - n[nz] + 1))
        coef = np.zeros(t + 1, dtype=complex)
        coef[nz] = np.exp(logmag[nz] - logmag[nz].max()) * np.exp(1j * np.angle(vec[nz]))
        m = t - n
        f = np.exp(-1j * np.outer(grid.points, m)) @ coef
        with np.errstate(divide="ignore"):
            return RelativePhaseDensity.from_log(grid, 2.0 * np.log(np.abs(f)))


def lower_dense(amps: np.ndarray, sign: float, tau: float) -> np.ndarray:
    """(a + sign e^{i tau} b)/sqrt(2) on the last two axes of dense amplitudes."""
    c = amps.shape[-1] - 1
    k = np.sqrt(np.arange(1, c + 1))
    out = np.zeros_like(amps, dtype=complex)
    out[..., :-1, :] += k[:, None] * amps[..., 1:, :]
    out[..., :, :-1] += sign * np.exp(1j * tau) * k[None, :] * amps[..., :, 1:]
    return out / np.sqrt(2.0)


def lower_fixed(vec: np.ndarray, sign: float, tau: float) -> np.ndarray:
    """(a + sign e^{i tau} b)/sqrt(2) on fixed-total vectors (last axis, length T+1)."""
    t = vec.shape[-1] - 1
    j = np.arange(t)
    return (np.sqrt(j + 1.0) * vec[..., 1:] + sign * np.exp(1j * tau) * np.sqrt(t - j) * vec[..., :-1]) / np.sqrt(2.0)


def fixed_moments(vec: np.ndarray):
    """(na, nb, ab) of normalized fixed-total vectors along the last axis."""
    t = vec.shape[-1] - 1
    j = np.arange(t + 1)
    p = np.abs(vec) ** 2
    na = p @ j
    nb = p @ (t - j)
    ab = np.sum(np.conj(vec[..., 1:]) * np.sqrt(j[:-1] + 1.0) * np.sqrt(t - j[:-1]) * vec[..., :-1], axis=-1)
    return na, nb, ab


def apply_detection(state: TwoModeFockState, event: JumpEvent) -> TwoModeFockState:
    """Unnormalized post-detection state; its squared norm is the relative branch weight.

    A vanishing result (e.g. detection on vacuum) signals an impossible outcome.
    """
    return TwoModeFockState(state.cutoff, lower_dense(state.amplitudes, event.sign, event.tau), state.norm_log)


def apply_leakage(state: TwoModeFockState, eps: float) -> TwoModeFockState:
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"leakage fraction must lie in [0, 1), got {eps}")
    k = np.arange(state.cutoff + 1)
    damp = (1.0 - eps) ** (0.5 * (k[:, None] + k[None, :]))
    return TwoModeFockState(state.cutoff, state.amplitudes * damp, state.norm_log)


def detection_probabilities(state: TwoModeFockState, tau: float = 0.0) -> tuple[float, float]:
    """(p_left, p_right) for the next count at setting ``tau``."""
    wl = apply_detection(state, JumpEvent(LEFT, tau)).norm_sq()
    wr = apply_detection(state, JumpEvent(RIGHT, tau)).norm_sq()
    s = wl + wr
    if s == 0.0:
        return 0.0, 0.0
    return wl / s, wr / s


# --- two-photon Hong-Ou-Mandel check -------------------------------------

def two_detection_ratio_closed_form(N: int, M: int) -> float:
    num = N * N + M * M - N - M + 4 * N * M
    den = N * N + M * M - N - M
    return float("inf") if den == 0 else num / den


def two_detection_ratio_bruteforce(N: int, M: int) -> float:
    """P(same port) / P(other port) for the second count, from the four branches."""
    psi = TwoModeFockState.fock(N, M)
    w = {}
    for first in (LEFT, RIGHT):
        once = apply_detection(psi, JumpEvent(first))
        for second in (LEFT, RIGHT):
            w[first, second] = apply_detection(once, JumpEvent(second)).norm_sq()
    same = w[LEFT, LEFT] + w[RIGHT, RIGHT]
    other = w[LEFT, RIGHT] + w[RIGHT, LEFT]
    return float("inf") if other == 0.0 else same / other


def two_detection_ratio(N: int, M: int, rtol: float = 1e-12) -> float:
    """Closed-form same/other-port ratio, cross-checked against the branch enumeration."""
    if N < 0 or M < 0 or N + M < 2:
        raise ValueError("need at least two photons in total")
    closed = two_detection_ratio_closed_form(N, M)
    brute = two_detection_ratio_bruteforce(N, M)
    if np.isinf(closed) or np.isinf(brute):
        ok = np.isinf(closed) and np.isinf(brute)
    else:
        ok = abs(closed - brute) <= rtol * abs(closed)
    if not ok:
        raise NumericalValidationError(f"ratio mismatch for N={N}, M={M}: {closed} vs {brute}")
    return closed


# --- number-diagonal ensembles --------------------------------------------

def _truncated_pmf(log_pmf: Callable, mean: float, cutoff: int | None, tail_fn: Callable):
    if cutoff is None:
        c = int(np.ceil(mean + 5.0 * np.sqrt(mean)))
        while tail_fn(c) >= TAIL_TOLERANCE / 2:
            c += max(1, c // 8)
    else:
        c = int(cutoff)
        if tail_fn(c) >= TAIL_TOLERANCE / 2:
            raise CutoffOverflowError(f"cutoff {c} leaves tail mass {tail_fn(c):.3g} per mode")
    return exp_normalized(log_pmf(np.arange(c + 1)))


@dataclass(frozen=True)
class MixedEnsemble:
    """Product of number-diagonal single-mode states, truncated at ``cutoff``.

    ``pmf_a[n] * pmf_b[m]`` is the weight of the member ``|n, m>``.
    """

    kind: str
    pmf_a: np.ndarray = field(repr=False)
    pmf_b: np.ndarray = field(repr=False)
    mean: float = 0.0

    @property
    def cutoff(self) -> int:
        return max(len(self.pmf_a), len(self.pmf_b)) - 1

    @classmethod
    def fock(cls, N: int, M: int | None = None) -> "MixedEnsemble":
        M = N if M is None else M
        a = np.zeros(N + 1)
        a[N] = 1.0
        b = np.zeros(M + 1)
        b[M] = 1.0
        return cls("fock", a, b, float(N))

    @classmethod
    def poissonian(cls, nbar: float, cutoff: int | None = None) -> "MixedEnsemble":
        pmf = _truncated_pmf(lambda n: log_poissonian(n, nbar), nbar, cutoff,
                             lambda c: special.pdtrc(c, nbar))
        return cls("poissonian", pmf, pmf, float(nbar))

    @classmethod
    def thermal(cls, nbar: float, cutoff: int | None = None) -> "MixedEnsemble":
        q = nbar / (1.0 + nbar)
        pmf = _truncated_pmf(lambda n: log_thermal(n, nbar), nbar, cutoff, lambda c: q ** (c + 1))
        return cls("thermal", pmf, pmf, float(nbar))

    @property
    def members(self) -> list[tuple[float, tuple[int, int]]]:
        ia = np.flatnonzero(self.pmf_a)
        ib = np.flatnonzero(self.pmf_b)
        return [(float(self.pmf_a[n] * self.pmf_b[m]), (int(n), int(m))) for n in ia for m in ib]

    def total_weight(self) -> float:
        return float(self.pmf_a.sum() * self.pmf_b.sum())

    def sample_pair(self, rng: np.random.Generator) -> tuple[int, int]:
        n = int(rng.choice(len(self.pmf_a), p=self.pmf_a))
        m = int(rng.choice(len(self.pmf_b), p=self.pmf_b))
        return n, m

    def members_with_total(self, total: int):
        """Occupations of mode a and log-weights of the members with n + m = total."""
        ca, cb = len(self.pmf_a) - 1, len(self.pmf_b) - 1
        n = np.arange(max(0, total - cb), min(total, ca) + 1)
        with np.errstate(divide="ignore"):
            logw = np.log(self.pmf_a[n]) + np.log(self.pmf_b[total - n])
        keep = np.isfinite(logw)
        return n[keep], logw[keep]

    def density_matrix(self) -> np.ndarray:
        """Dense ``(c+1)^2 x (c+1)^2`` diagonal density operator (small cutoffs only)."""
        c = self.cutoff
        a = np.zeros(c + 1)
        a[: len(self.pmf_a)] = self.pmf_a
        b = np.zeros(c + 1)
        b[: len(self.pmf_b)] = self.pmf_b
        return np.diag(np.outer(a, b).ravel()).astype(complex)


# --- sampling -------------------------------------------------------------

def tau_sequence(policy, n_events: int, rng: np.random.Generator, tau: float = 0.0) -> np.ndarray:
    """Phase settings for ``n_events`` counts.

    ``fixed``: every count at ``tau``; ``random``: uniform on [0, 2pi) per
    count; ``two-setting``: first half at ``tau``, rest at ``tau + pi/2``.
    A sequence is taken verbatim.
    """
    if isinstance(policy, str):
        if policy == "fixed":
            return np.full(n_events, tau % TWO_PI)
        if policy == "random":
            return rng.uniform(0.0, TWO_PI, size=n_events)
        if policy == "two-setting":
            half = (n_events + 1) // 2
            return np.mod(np.r_[np.full(half, tau), np.full(n_events - half, tau + np.pi / 2)], TWO_PI)
        raise ValueError(f"unknown tau policy {policy!r}")
    taus = np.mod(np.asarray(policy, dtype=float), TWO_PI)
    if len(taus) < n_events:
        raise ValueError("explicit tau sequence shorter than the record")
    return taus[:n_events]


def _sample_fixed_total(vec, total, taus, rng):
    """Sequentially sample detector labels; returns events, final vector, log-weight gained."""
    events = []
    gained = 0.0
    for tau in taus:
        wl = lower_fixed(vec, -1.0, tau)
        wr = lower_fixed(vec, 1.0, tau)
        pl = float(np.vdot(wl, wl).real)
        pr = float(np.vdot(wr, wr).real)
        if pl + pr == 0.0:
            raise ValueError("no photons left to detect")
        if rng.random() * (pl + pr) < pl:
            det, vec, p = LEFT, wl, pl
        else:
            det, vec, p = RIGHT, wr, pr
        vec = vec / np.sqrt(p)
        gained += np.log(p)
        total -= 1
        events.append(JumpEvent(det, tau))
    return events, vec, total, gained


def sample_record(ensemble: MixedEnsemble, eps: float | None = None, n_events: int | None = None,
                  tau_policy="fixed", seed=None, tau: float = 0.0, dense: bool = True):
    """Sample one measurement record and the conditional post-measurement state.

    With ``eps`` the number of counts is Binomial(n + m, eps) for the sampled
    member; with ``n_events`` counting continues until that many photons are
    recorded (members holding fewer photons are redrawn).  Returns the list
    of events and the normalized conditional state (dense, or the pair
    ``(total, fixed-total vector)`` when ``dense`` is false).
    """
    if (eps is None) == (n_events is None):
        raise ValueError("give exactly one of eps or n_events")
    if eps is not None and not 0.0 <= eps < 1.0:
        raise ValueError(f"leakage fraction must lie in [0, 1), got {eps}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    for _ in range(10_000):
        n, m = ensemble.sample_pair(rng)
        total = n + m
        if n_events is None or total >= n_events:
            break
    else:
        raise CutoffOverflowError(f"ensemble rarely holds {n_events} photons")
    k = int(rng.binomial(total, eps)) if n_events is None else int(n_events)
    taus = tau_sequence(tau_policy, k, rng, tau)
    vec = np.zeros(total + 1, dtype=complex)
    vec[n] = 1.0
    events, vec, remaining, _ = _sample_fixed_total(vec, total, taus, rng)
    if not dense:
        return events, (remaining, vec)
    state = TwoModeFockState.from_fixed_total(vec, remaining, ensemble.cutoff)
    if eps:
        state = apply_leakage(state, eps).normalized()
    return events, state


def trajectory_rngs(seed, count: int) -> list[np.random.Generator]:
    """Independent per-trajectory generators derived from one master seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def _call(args):
    fn, i, child = args
    return fn(np.random.default_rng(child), i)


def run_trajectories(fn: Callable, count: int, seed, workers: int = 1) -> list:
    """Evaluate ``fn(rng, index)`` for ``count`` trajectories, results in index order.

    Each trajectory gets its own generator spawned from ``seed``, so the
    output does not depend on ``workers``.
    """
    children = np.random.SeedSequence(seed).spawn(count)
    jobs = [(fn, i, c) for i, c in enumerate(children)]
    if workers <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs, chunksize=max(1, count // (4 * workers))))


# --- exact branch enumeration ---------------------------------------------

@dataclass(frozen=True)
class RecordTable:
    """Exact record probabilities and conditional moments, indexed ``[l, r]``."""

    prob: np.ndarray
    na: np.ndarray
    nb: np.ndarray
    ab: np.ndarray
    max_total: int

    def moments(self, l: int, r: int) -> ModeMoments:
        return ModeMoments(float(self.na[l, r]), float(self.nb[l, r]), complex(self.ab[l, r]))

    def records(self):
        for l in range(self.max_total + 1):
            for r in range(self.max_total + 1 - l):
                yield l, r

    def total_count_pmf(self) -> np.ndarray:
        k = self.max_total
        out = np.zeros(k + 1)
        for l, r in self.records():
            out[l + r] += self.prob[l, r]
        return out


def _normalize_rows(v):
    nrm = np.sqrt(np.sum(np.abs(v) ** 2, axis=-1))
    with np.errstate(divide="ignore"):
        lognorm = 2.0 * np.log(nrm)
    safe = np.where(nrm > 0, nrm, 1.0)
    return v / safe[:, None], lognorm


class _Band:
    """Fixed-total vectors restricted to occupations ``n - K .. n`` of mode a.

    ``K`` lowerings of ``|n, T - n>`` never leave that window, so a member
    costs O(K) per operator instead of O(T).  Rows may have different totals.
    """

    def __init__(self, n: np.ndarray, total: np.ndarray, width: int):
        self.j = n[:, None] - width + np.arange(width + 1)[None, :]
        self.v = np.zeros(self.j.shape, dtype=complex)
        self.v[:, -1] = 1.0
        self.total = np.asarray(total, dtype=float)
        self.lognorm = np.zeros(len(n))
        self._a = np.sqrt(np.clip(self.j + 1.0, 0.0, None))

    def lowered(self, sign: float, tau: float) -> "_Band":
        out = object.__new__(_Band)
        shifted = np.zeros_like(self.v)
        shifted[:, :-1] = self.v[:, 1:]
        b = np.sqrt(np.clip(self.total[:, None] - self.j, 0.0, None))
        w = (self._a * shifted + sign * np.exp(1j * tau) * b * self.v) / np.sqrt(2.0)
        out.v, dl = _normalize_rows(w)
        out.j, out._a, out.total = self.j, self._a, self.total - 1.0
        out.lognorm = self.lognorm + dl
        return out

    def moments(self):
        j, t, v = self.j, self.total[:, None], self.v
        p = np.abs(v) ** 2
        na = np.sum(p * j, axis=1)
        nb = np.sum(p * (t - j), axis=1)
        coef = self._a[:, :-1] * np.sqrt(np.clip(t - j[:, :-1], 0.0, None))
        ab = np.sum(np.conj(v[:, 1:]) * coef * v[:, :-1], axis=1)
        return na, nb, ab


def _members(ensemble: MixedEnsemble, min_weight: float):
    ia = np.flatnonzero(ensemble.pmf_a)
    ib = np.flatnonzero(ensemble.pmf_b)
    n, m = (x.ravel() for x in np.meshgrid(ia, ib, indexing="ij"))
    logw = np.log(ensemble.pmf_a[n]) + np.log(ensemble.pmf_b[m])
    keep = logw > np.log(min_weight)
    return n[keep], (n + m)[keep], logw[keep]


def enumerate_records(ensemble: MixedEnsemble, eps: float, max_total: int, tau: float = 0.0,
                      min_weight: float = 1e-300) -> RecordTable:
    """All records with ``l + r <= max_total`` at fixed ``tau``, by exhaustive branch norms.

    P(l, r) = sum_members w * eps^k (1-eps)^{T-k} / (l! r!) * ||K_L^l K_R^r |n,m>||^2
    with k = l + r and T = n + m.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"leakage fraction must lie in (0, 1), got {eps}")
    K = int(max_total)
    shape = (K + 1, K + 1)
    prob = np.zeros(shape)
    na = np.zeros(shape)
    nb = np.zeros(shape)
    ab = np.zeros(shape, dtype=complex)
    lgam = special.gammaln(np.arange(K + 2) + 1.0)
    n, total, logw = _members(ensemble, min_weight)
    br = _Band(n, total, K)
    for r in range(K + 1):
        bl = br
        for l in range(K - r + 1):
            k = l + r
            with np.errstate(invalid="ignore"):
                p = np.exp(logw + k * np.log(eps) + (total - k) * np.log1p(-eps) - lgam[l] - lgam[r] + bl.lognorm)
            p = np.where(total >= k, p, 0.0)
            if np.any(p > 0):
                a_, b_, c_ = bl.moments()
                prob[l, r] = p.sum()
                na[l, r] = p @ a_
                nb[l, r] = p @ b_
                ab[l, r] = p @ c_
            if l < K - r:
                bl = bl.lowered(-1.0, tau)
        if r < K:
            br = br.lowered(1.0, tau)
    safe = np.where(prob > 0, prob, 1.0)
    return RecordTable(prob, na / safe, nb / safe, ab / safe, K)


def condition_on_events(ensemble: MixedEnsemble, eps: float, events: Sequence[JumpEvent],
                        min_weight: float = 1e-300) -> tuple[float, ModeMoments]:
    """Probability of an ordered event sequence and the conditional mode moments."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"leakage fraction must lie in (0, 1), got {eps}")
    k = len(events)
    n, total, logw = _members(ensemble, min_weight)
    band = _Band(n, total, k)
    for ev in events:
        band = band.lowered(ev.sign, ev.tau)
    with np.errstate(invalid="ignore"):
        p = np.exp(logw + k * np.log(eps) + (total - k) * np.log1p(-eps) - special.gammaln(k + 1) + band.lognorm)
    p = np.where(total >= k, p, 0.0)
    ptot = float(p.sum())
    if ptot == 0.0:
        return 0.0, ModeMoments(0.0, 0.0, 0j)
    a_, b_, c_ = band.moments()
    return ptot, ModeMoments(float(p @ a_ / ptot), float(p @ b_ / ptot), complex(p @ c_ / ptot))


# --- dense density-matrix route (validation oracle, small cutoffs) ----------

def kraus_matrix(cutoff: int, event: JumpEvent) -> np.ndarray:
    """Detection operator as a ``(c+1)^2`` square matrix on vec(|n, m>)."""
    c = cutoff
    a = np.diag(np.sqrt(np.arange(1, c + 1)), 1)
    eye = np.eye(c + 1)
    A = np.kron(a, eye)
    B = np.kron(eye, a)
    return (A + event.sign * np.exp(1j * event.tau) * B) / np.sqrt(2.0)


def leakage_matrix(cutoff: int, eps: float) -> np.ndarray:
    k = np.arange(cutoff + 1)
    return np.diag(((1.0 - eps) ** (0.5 * (k[:, None] + k[None, :]))).ravel())


def density_record_probability(ensemble: MixedEnsemble, eps: float, l: int, r: int, tau: float = 0.0):
    """P(l, r) and conditional moments by direct density-operator evolution."""
    c = ensemble.cutoff
    rho = ensemble.density_matrix()
    KL = kraus_matrix(c, JumpEvent(LEFT, tau))
    KR = kraus_matrix(c, JumpEvent(RIGHT, tau))
    op = leakage_matrix(c, eps) @ np.linalg.matrix_power(KL, l) @ np.linalg.matrix_power(KR, r)
    op *= np.sqrt(eps ** (l + r) / (special.factorial(l) * special.factorial(r)))
    out = op @ rho @ op.conj().T
    p = float(np.trace(out).real)
    a = np.diag(np.sqrt(np.arange(1, c + 1)), 1)
    eye = np.eye(c + 1)
    A = np.kron(a, eye)
    B = np.kron(eye, a)
    sigma = out / p
    na = float(np.trace(A.conj().T @ A @ sigma).real)
    nb = float(np.trace(B.conj().T @ B @ sigma).real)
    ab = complex(np.trace(A.conj().T @ B @ sigma))
    return p, ModeMoments(na, nb, ab)


# --- posterior densities and cat elimination ---------------------------------

def posterior_phase_density(kind: str, events: Sequence[JumpEvent], grid: Grid1D,
                            nbar: float | None = None, eps: float | None = None,
                            cutoff: int | None = None) -> RelativePhaseDensity:
    """Relative-phase density after ``events`` under a uniform phase prior.

    Fock (equal occupations) and Poissonian inputs give the product of the
    single-count kernels.  For thermal inputs the density is read off the
    intensity curve of the exact conditional state, p(D) ~ I(-D), which
    needs ``nbar`` and ``eps``.
    """
    if kind in ("fock", "poissonian"):
        logw = np.zeros(grid.n)
        for ev in events:
            logw = logw + clr_log_kernel(grid.points, ev.as_record())
        return RelativePhaseDensity.from_log(grid, logw)
    if kind == "thermal":
        if nbar is None or eps is None:
            raise ValueError("thermal posterior needs nbar and eps")
        ens = MixedEnsemble.thermal(nbar, cutoff)
        p, mom = condition_on_events(ens, eps, events)
        if p == 0.0:
            raise ValueError("record has zero probability")
        return RelativePhaseDensity(grid, exp_normalized(np.log(mom.intensity(-grid.points)),
                                                         grid.quadrature_weights()))
    raise ValueError(f"unknown ensemble kind {kind!r}")


@dataclass
class CatElimination:
    tau_shift: float
    events: list
    state: TwoModeFockState
    dominant_fraction: float


def cat_elimination(state: TwoModeFockState, peaks: LocalizationPeaks, n_extra: int, seed=None,
                    tau: float = 0.0) -> CatElimination:
    """Shift the phase setting by -delta0 and record ``n_extra`` further counts.

    ``dominant_fraction`` is the share of the extra counts at the busier
    detector (nan when ``n_extra`` is zero).
    """
    shifted = (tau - peaks.delta0) % TWO_PI
    if n_extra == 0:
        return CatElimination(shifted, [], state, float("nan"))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    total, vec = state.fixed_total_vector()
    vec = vec / np.linalg.norm(vec)
    events, vec, remaining, _ = _sample_fixed_total(vec, total, np.full(n_extra, shifted), rng)
    final = TwoModeFockState.from_fixed_total(vec, remaining, state.cutoff)
    n_right = sum(e.detector == RIGHT for e in events)
    frac = max(n_right, n_extra - n_right) / n_extra
    return CatElimination(shifted, events, final, frac)
