"""Acceptance criteria, one check per criterion at its stated tolerance.

Each ``criterion_*`` function returns ``(ok, detail)``.  Under pytest the
results are collected and printed as one line per criterion in the
terminal summary; ``python tests/test_acceptance.py`` prints the same lines.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from relloc import bec, cli, focksim as fs, phaseloc as pl, posloc as pp, visibility as vis
from relloc.numkernel import Grid1D, bessel_j0

RESULTS = {}


def criterion_01_two_detection_ratio():
    worst = 0.0
    for N in range(1, 11):
        for M in range(1, 11):
            brute = fs.two_detection_ratio_bruteforce(N, M)
            closed = fs.two_detection_ratio_closed_form(N, M)
            worst = max(worst, abs(brute - closed) / closed)
    after = fs.apply_detection(fs.TwoModeFockState.fock(1, 1), fs.JumpEvent(fs.RIGHT))
    p_same = fs.detection_probabilities(after)[1]
    ok = worst <= 1e-12 and p_same == 1.0
    return ok, f"max rel gap {worst:.2e}; N=M=1 same-port probability {p_same!r}"


def criterion_02_peak_law():
    g = Grid1D.phase(1024)
    worst = 0.0
    for n in range(1, 31):
        for l in range(n + 1):
            d = pl.clr_density(pl.DetectionRecord(l, n - l), g)
            d0 = pl.peak_phase(l, n - l)
            # the density is even in D, so the mirror peak at -D0 is equally valid
            gap = min(abs((d.argmax() - s * d0 + np.pi) % (2 * np.pi) - np.pi) for s in (1, -1))
            worst = max(worst, gap)
    d = pl.clr_density(pl.DetectionRecord(10, 5), g).argmax()
    spot = min(abs(d - 2 * np.arccos(1 / np.sqrt(3))), abs(d - (2 * np.pi - 2 * np.arccos(1 / np.sqrt(3)))))
    ok = worst <= g.spacing and spot <= g.spacing and abs(2 * np.arccos(1 / np.sqrt(3)) - 1.91) < 0.005
    return ok, f"max argmax gap {worst:.2e} (spacing {g.spacing:.2e}); (10,5) peak {d:.4f}"


def _fock20_error(eps):
    tab = fs.enumerate_records(fs.MixedEnsemble.fock(20), eps, 40)
    errs, weights = [], []
    for l, r in tab.records():
        p = tab.prob[l, r]
        if p > 0:
            errs.append(abs(pl.plr_fock_approx(l, r, 20, eps) - p) / p)
            weights.append(p)
    errs, weights = np.array(errs), np.array(weights)
    return float(errs @ weights / weights.sum()), float(errs.mean()), tab


def criterion_03_fock_record_law_accuracy():
    t0 = time.perf_counter()
    parts, ok = [], True
    for eps in (0.05, 0.1, 0.2):
        weighted, uniform, _ = _fock20_error(eps)
        ok &= 0.3 * eps <= weighted <= 1.2 * eps
        parts.append(f"eps={eps}: weighted {weighted / eps:.3f} eps (uniform {uniform / eps:.1e} eps)")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    return ok, "; ".join(parts) + f"; {elapsed:.1f} s"


def criterion_04_total_count_mode():
    _, _, tab = _fock20_error(0.2)
    mode = int(np.argmax(tab.total_count_pmf()))
    return abs(mode - 7) <= 1, f"most probable total count {mode}"


def criterion_05_visibility_oracle():
    tau = Grid1D.phase(512)
    worst, ok = {}, True
    for kind in ("poissonian", "thermal"):
        for nbar in (5.0, 10.0):
            ens = getattr(fs.MixedEnsemble, kind)(nbar)
            tab = fs.enumerate_records(ens, 0.2, 12)
            for l, r in tab.records():
                v = vis.visibility_of(vis.intensity_curve(tab.moments(l, r), tau))
                gap = abs(v - vis.closed_form_visibility(kind, l, r))
                worst[kind] = max(worst.get(kind, 0.0), gap)
    ok = max(worst.values()) <= 1e-6
    one_p = vis.visibility_of(vis.intensity_curve(
        fs.enumerate_records(fs.MixedEnsemble.poissonian(5.0), 0.2, 1).moments(0, 1), tau))
    one_t = vis.visibility_of(vis.intensity_curve(
        fs.enumerate_records(fs.MixedEnsemble.thermal(5.0), 0.2, 1).moments(0, 1), tau))
    ok &= abs(one_p - 0.5) <= 1e-6 and abs(one_t - 1 / 3) <= 1e-6
    return ok, (f"max gap poissonian {worst['poissonian']:.1e}, thermal {worst['thermal']:.1e}; "
                f"one count {one_p:.7f} / {one_t:.7f}")


def criterion_06_thermal_record_law():
    K = pl.total_count_cutoff("thermal", 0.1, 5.0, tail=1e-12)
    l, r = np.meshgrid(np.arange(K + 1), np.arange(K + 1), indexing="ij")
    keep = l + r <= K
    total = float(pl.plr_thermal(l[keep], r[keep], 5.0, 0.1).sum())
    tab = fs.enumerate_records(fs.MixedEnsemble.thermal(5.0), 0.1, 10)
    l, r = l[:11, :11], r[:11, :11]
    m = l + r <= 10
    gap = float(np.max(np.abs(tab.prob[:11, :11][m] - pl.plr_thermal(l[m], r[m], 5.0, 0.1))))
    return abs(total - 1) <= 1e-9 and gap <= 1e-8, f"sum-1 = {total - 1:.1e}; max gap {gap:.1e}"


def criterion_07_expected_visibility_curves():
    eps = np.linspace(0.01, 0.5, 50)
    ok, parts = True, []
    for nbar in (5.0, 15.0):
        p = np.array([vis.expected_visibility("poissonian", e, nbar) for e in eps])
        t = np.array([vis.expected_visibility("thermal", e, nbar) for e in eps])
        mono = bool(np.all(np.diff(p) > 0) and np.all(np.diff(t) > 0))
        dom = bool(np.all(p >= t))
        ok &= mono and dom
        parts.append(f"nbar={nbar:g}: monotone {mono}, dominates {dom}, V(0.5) {p[-1]:.3f}/{t[-1]:.3f}")
    return ok, "; ".join(parts)


def criterion_08_likely_event_mass():
    g = Grid1D.phase(1024)
    target = {3: 0.9, 8: 0.8, 15: 0.8}
    ok, parts = True, []
    for M, want in target.items():
        try:
            le = bec.likely_events(M, g, check_peaks=True)
        except AssertionError as exc:
            return False, str(exc)
        ok &= abs(le.mass - want) <= 0.05
        parts.append(f"M={M}: mass {le.mass:.4f} over {len(le.records)} records")
    return ok, "; ".join(parts) + "; all peaks unique"


def criterion_09_bec_localization_rate():
    g = Grid1D.phase(1024)
    ok, parts = True, []
    for M in (3, 8, 15):
        lo, hi = 0.8 * np.sqrt(2 / M), 1.2 * 2 / np.sqrt(M)
        widths = [bec.gaussian_width(bec.two_setting_density(rec, g)) for rec, _ in bec.likely_events(M, g).records]
        inside = all(lo <= w <= hi for w in widths)
        ok &= inside
        parts.append(f"M={M}: widths {min(widths):.3f}..{max(widths):.3f} in [{lo:.3f}, {hi:.3f}]")
    sharp, unstable = 0, 0
    for seed in range(100):
        run = bec.simulate_fringes(2000.0, 30, 1.0, seed=seed)
        sharp += run.widths[-1] < 0.4
        a, b = bec.bootstrap_visibility(run.positions, 1.0, n_boot=200, seed=seed)
        unstable += (b - a) / 2 > 0.2
    ok &= sharp >= 90 and unstable >= 90
    parts.append(f"30 atoms: std<0.4 in {sharp}/100, fit half-interval >0.2 in {unstable}/100")
    fits = [bec.fit_fringes(bec.simulate_fringes(2000.0, 1000, 1.0, seed=s).positions, 1.0).visibility
            for s in range(10)]
    ok &= min(fits) >= 0.9
    parts.append(f"1000 atoms: fitted V {min(fits):.3f}..{max(fits):.3f}")
    return ok, "; ".join(parts)


def criterion_10_scattering_patterns():
    k = 5.0
    g = pp.relative_grid(10 * 2 * np.pi / k, 4001)
    prior = pp.uniform_prior(g)
    j = bessel_j0(k * g.points)
    linf, l1 = 0.0, 0.0
    for F in range(6):
        D = 5 - F
        seq = prior
        for o in [pp.FORWARD] * F + [pp.DEFLECT] * D:
            seq = pp.coarse_scatter_update(seq, o, k, 0.0)
        ref = (1 - j) ** F * (1 + j) ** D
        ref = ref / g.integrate(ref)
        linf = max(linf, float(np.max(np.abs(seq.density - ref))))
        a = pp.scatter_record_density(prior, pp.ScatterRecord(F, D, k, 0.01))
        b = pp.scatter_record_density(prior, pp.ScatterRecord(F, D, k, 0.05))
        l1 = max(l1, pp.l1_distance(a, b))
    peak = pp.scatter_record_density(prior, pp.ScatterRecord(0, 5, k, 0.01)).argmax()
    ok = linf <= 1e-6 and l1 <= 0.02 and abs(peak) <= g.spacing / 2
    return ok, f"Bessel L-inf gap {linf:.1e}; eps 0.01 vs 0.05 max L1 {l1:.4f}; all-deflect peak at {peak:.1e}"


def criterion_11_rubber_cavity():
    k = 5.0
    period = np.pi * np.sqrt(2) / k
    per = Grid1D(0.0, period, 1024, periodic=True)
    ref_grid = Grid1D.phase(1024)
    gap = 0.0
    for l, r in [(0, 1), (0, 5), (0, 15), (3, 7), (10, 5)]:
        dens = pp.rubber_cavity_localize(pp.uniform_prior(per), (l, r), k)
        ref = pl.clr_density(pl.DetectionRecord(l, r), ref_grid).weights
        gap = max(gap, float(np.max(np.abs(dens.density / (np.sqrt(2) * k) - ref))))
    wide = pp.relative_grid(3 * 2 * np.pi / k, 4001)
    comb = pp.rubber_cavity_localize(pp.uniform_prior(wide), (0, 15), k).density
    peaks = np.flatnonzero((comb[1:-1] > comb[:-2]) & (comb[1:-1] >= comb[2:])) + 1
    measured = float(np.mean(np.diff(wide.points[peaks])))
    ok = gap <= 1e-8 and abs(measured - period) <= wide.spacing
    return ok, f"rescaled L-inf gap {gap:.1e}; period {measured:.5f} vs {period:.5f} (spacing {wide.spacing:.1e})"


SMALL_RUNS = {
    "fock-phase": ["--records", "1:0,5:0,15:0"],
    "poissonian-phase": [],
    "thermal-phase": [],
    "visibility-curves": ["--points", "10"],
    "bec-likely-events": ["--M", "3"],
    "bec-fringes": ["--events", "200"],
    "rubber-cavity": [],
    "scattering": ["--grid", "1001"],
    "thermal-scattering": ["--grid", "1001"],
}


def criterion_12_determinism(tmp_dir=None):
    import tempfile

    with tempfile.TemporaryDirectory(dir=tmp_dir) as d:
        same = []
        for name, extra in SMALL_RUNS.items():
            outs = []
            for i in range(2):
                path = Path(d) / f"{name}-{i}.csv"
                code = cli.main([name, *extra, "--seed", "2024", "--out", str(path)])
                if code != 0:
                    return False, f"{name} exited with {code}"
                outs.append(path.read_bytes())
            same.append(outs[0] == outs[1])
    return all(same), f"{sum(same)}/{len(same)} experiments byte-identical"


CRITERIA = [v for k, v in sorted(globals().items()) if k.startswith("criterion_")]


@pytest.mark.slow
@pytest.mark.parametrize("criterion", CRITERIA, ids=lambda f: f.__name__[len("criterion_"):])
def test_acceptance(criterion):
    ok, detail = criterion()
    ok = bool(ok)
    RESULTS[criterion.__name__] = (ok, detail)
    assert ok, detail


def format_line(name, ok, detail):
    label = name[len("criterion_"):]
    number, _, title = label.partition("_")
    return f"ACCEPTANCE {number} {title}: {'PASS' if ok else 'FAIL'} {detail}"


if __name__ == "__main__":
    failed = 0
    for fn in CRITERIA:
        ok, detail = fn()
        ok = bool(ok)
        failed += not ok
        print(format_line(fn.__name__, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
