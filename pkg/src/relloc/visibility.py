"""Interference visibility of a two-mode state.

``I(tau)`` is the mean photon number at the left port of a 50:50 beam
splitter after mode b picks up the phase ``tau``, and
``V = (I_max - I_min) / (I_max + I_min)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedVisibilityError
from .focksim import MixedEnsemble, ModeMoments, TwoModeFockState
from .numkernel import Grid1D
from .phaseloc import plr_fock_approx, plr_thermal, total_count_cutoff


@dataclass(frozen=True)
class IntensityCurve:
    tau_grid: Grid1D
    intensity: np.ndarray = field(repr=False)


def _moments_of(state) -> ModeMoments:
    if isinstance(state, ModeMoments):
        return state
    if isinstance(state, TwoModeFockState):
        if state.is_zero():
            return ModeMoments(0.0, 0.0, 0j)
        return state.moments()
    if isinstance(state, MixedEnsemble):
        # number-diagonal members carry no coherence between the modes
        k_a = np.arange(len(state.pmf_a))
        k_b = np.arange(len(state.pmf_b))
        return ModeMoments(float(state.pmf_a @ k_a), float(state.pmf_b @ k_b), 0j)
    raise TypeError(f"cannot take an intensity curve of {type(state).__name__}")


def intensity_curve(state, tau_grid: Grid1D | None = None) -> IntensityCurve:
    """Left-port intensity ``(<a^+a> + <b^+b> + 2 Re(e^{i tau} <a^+b>)) / 2`` on ``tau_grid``."""
    grid = Grid1D.phase(512) if tau_grid is None else tau_grid
    mom = _moments_of(state)
    return IntensityCurve(grid, np.clip(mom.intensity(grid.points), 0.0, None))


def _refine(values, i: int) -> float:
    # vertex of the parabola through three neighbours on a periodic grid
    n = len(values)
    ym, y0, yp = values[(i - 1) % n], values[i], values[(i + 1) % n]
    den = ym - 2.0 * y0 + yp
    if den == 0.0:
        return float(y0)
    return float(y0 - 0.125 * (yp - ym) ** 2 / den)


def visibility_of(curve: IntensityCurve) -> float:
    I = np.asarray(curve.intensity, dtype=float)
    if not np.any(I > 0):
        raise UndefinedVisibilityError("intensity curve is identically zero")
    if curve.tau_grid.periodic:
        imax = max(_refine(I, int(np.argmax(I))), float(I.max()))
        imin = min(_refine(I, int(np.argmin(I))), float(I.min()))
    else:
        imax, imin = float(I.max()), float(I.min())
    imin = max(imin, 0.0)
    return float(np.clip((imax - imin) / (imax + imin), 0.0, 1.0))


def closed_form_visibility(kind: str, l: int, r: int) -> float:
    """|r - l| / (r + l + 1) for Poissonian inputs, |r - l| / (r + l + 2) for thermal ones."""
    if l < 0 or r < 0:
        raise ValueError("counts must be nonnegative")
    if kind == "poissonian":
        return abs(r - l) / (r + l + 1.0)
    if kind == "thermal":
        return abs(r - l) / (r + l + 2.0)
    raise ValueError(f"unknown ensemble kind {kind!r}")


def expected_visibility(kind: str, eps: float, nbar: float, cutoff: int | None = None) -> float:
    """Sum over records of P(l, r) V(l, r), truncated at total count ``cutoff``."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"leakage fraction must lie in (0, 1), got {eps}")
    K = total_count_cutoff(kind, eps, nbar, tail=1e-10) if cutoff is None else int(cutoff)
    l, r = np.meshgrid(np.arange(K + 1), np.arange(K + 1), indexing="ij")
    keep = l + r <= K
    l, r = l[keep], r[keep]
    if kind == "poissonian":
        p = plr_fock_approx(l, r, nbar, eps)
        v = np.abs(r - l) / (r + l + 1.0)
    elif kind == "thermal":
        p = plr_thermal(l, r, nbar, eps)
        v = np.abs(r - l) / (r + l + 2.0)
    else:
        raise ValueError(f"unknown ensemble kind {kind!r}")
    return float(np.dot(p, v))
