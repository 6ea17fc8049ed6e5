import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relloc.errors import NoPeakError
from relloc.numkernel import TWO_PI, Grid1D, wrap_angle
from relloc.phaseloc import (
    DetectionRecord,
    cat_descriptor,
    clr_density,
    gaussian_asymptote_error,
    localization_peaks,
    peak_phase,
    plr_fock_approx,
    plr_thermal,
    product_density,
    relational_cat_amplitudes,
    total_count_cutoff,
)

GRID = Grid1D.phase(1024)
# continuum sup-norm gap for (l, r) = (50, 100), from a 30-digit scan with refinement
ASYMPTOTE_ORACLE_50_100 = 0.0105639306594381


def test_empty_record_is_uniform():
    d = clr_density(DetectionRecord(0, 0), GRID)
    assert np.allclose(d.weights, 1 / TWO_PI)


def test_single_left_count_peaks_at_pi():
    for n in (1, 5, 15):
        d = clr_density(DetectionRecord(n, 0), GRID)
        assert d.argmax() == pytest.approx(np.pi, abs=GRID.spacing)
        assert len(d.local_maxima(0.01)) == 1


def test_mixed_record_has_two_mirrored_peaks():
    d = clr_density(DetectionRecord(10, 5), GRID)
    peaks = d.local_maxima(0.5)
    assert len(peaks) == 2
    target = 2 * np.arccos(1 / np.sqrt(3))
    assert target == pytest.approx(1.91, abs=0.005)
    assert np.sort(peaks) == pytest.approx([target, TWO_PI - target], abs=GRID.spacing)


def test_density_needs_periodic_grid():
    with pytest.raises(ValueError):
        clr_density(DetectionRecord(1, 1), Grid1D(0, TWO_PI, 100))


def test_localization_peaks_examples():
    assert localization_peaks(DetectionRecord(0, 7)).delta0 == pytest.approx(0.0)
    assert localization_peaks(DetectionRecord(7, 0)).delta0 == pytest.approx(np.pi)
    assert localization_peaks(DetectionRecord(4, 4)).delta0 == pytest.approx(np.pi / 2)
    p = localization_peaks(DetectionRecord(10, 5))
    assert p.mirrored and p.delta0 == pytest.approx(2 * np.arccos(1 / np.sqrt(3)))
    assert p.gaussian_width == pytest.approx(np.sqrt(2 / 15))
    assert localization_peaks(DetectionRecord(0, 9)).gaussian_width == pytest.approx(np.sqrt(4 / 9))
    with pytest.raises(NoPeakError):
        peak_phase(0, 0)


def test_tau_translates_density():
    a = clr_density(DetectionRecord(3, 2, 0.0), GRID)
    shift = 64
    b = clr_density(DetectionRecord(3, 2, -shift * GRID.spacing), GRID)
    assert np.allclose(np.roll(a.weights, shift), b.weights, atol=1e-10)


@given(st.integers(0, 15), st.integers(0, 15), st.integers(0, 1023))
@settings(max_examples=60, deadline=None)
def test_density_normalized_and_swap_symmetry(l, r, itau):
    tau = itau * GRID.spacing
    d = clr_density(DetectionRecord(l, r, tau), GRID)
    assert d.total() == pytest.approx(1.0, abs=1e-12)
    # swapping l and r while moving tau by pi reproduces the same density
    s = clr_density(DetectionRecord(r, l, tau + np.pi), GRID)
    assert np.allclose(d.weights, s.weights, atol=1e-9 * d.weights.max())


def test_argmax_matches_peak_law_exhaustively():
    for n in range(1, 31):
        for l in range(n + 1):
            rec = DetectionRecord(l, n - l)
            d0 = localization_peaks(rec).delta0
            am = clr_density(rec, GRID).argmax()
            gap = min(abs(wrap_angle(am - d0)), abs(wrap_angle(am + d0)))
            assert gap <= GRID.spacing + 1e-12, (l, n - l)


def test_product_density_commutes():
    recs = [DetectionRecord(2, 3, 0.0), DetectionRecord(4, 1, np.pi / 2)]
    a = product_density(recs, GRID)
    b = product_density(recs[::-1], GRID)
    assert np.allclose(a.weights, b.weights)


def test_gaussian_asymptote_error():
    assert gaussian_asymptote_error(DetectionRecord(0, 1), GRID) > 0
    e = gaussian_asymptote_error(DetectionRecord(50, 100), GRID)
    assert e <= ASYMPTOTE_ORACLE_50_100 * (1 + 1e-9)
    assert e == pytest.approx(ASYMPTOTE_ORACLE_50_100, abs=1e-5)
    errs = [gaussian_asymptote_error(DetectionRecord(2 * s, s), GRID) for s in range(1, 51)]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


def test_plr_fock_approx_properties():
    N, eps = 20, 0.2
    K = int(np.ceil(20 * eps * N + 15 * np.sqrt(2 * eps * N)))
    assert total_count_cutoff("fock", eps, N) <= K
    l, r = np.meshgrid(np.arange(K + 1), np.arange(K + 1), indexing="ij")
    m = l + r <= K
    p = plr_fock_approx(l[m], r[m], N, eps)
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    tot = np.bincount((l + r)[m], weights=p)
    assert int(np.argmax(tot)) in (6, 7, 8)
    assert plr_fock_approx(3, 5, N, eps) == pytest.approx(plr_fock_approx(5, 3, N, eps), rel=1e-14)


@given(st.integers(0, 30), st.integers(0, 30))
def test_plr_fock_symmetric(l, r):
    assert plr_fock_approx(l, r, 12.0, 0.1) == pytest.approx(plr_fock_approx(r, l, 12.0, 0.1), rel=1e-13)


def test_plr_thermal_values():
    assert plr_thermal(0, 0, 10.0, 0.1) == pytest.approx(0.25, rel=1e-14)
    assert plr_thermal(3, 2, 5, 0.1) == plr_thermal(0, 5, 5, 0.1) == plr_thermal(5, 0, 5, 0.1)
    K = total_count_cutoff("thermal", 0.1, 5)
    l, r = np.meshgrid(np.arange(K + 1), np.arange(K + 1), indexing="ij")
    m = l + r <= K
    assert plr_thermal(l[m], r[m], 5, 0.1).sum() == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.1])
def test_record_laws_reject_bad_eps(bad):
    with pytest.raises(ValueError):
        plr_thermal(1, 1, 5, bad)
    with pytest.raises(ValueError):
        plr_fock_approx(1, 1, 5, bad)


def test_cat_descriptor():
    c = cat_descriptor(4, 0.0)
    assert np.sum(np.abs(c.fock_amplitudes) ** 2) == pytest.approx(1.0)
    assert c.schmidt_rank() == 2 * 4 + 1
    c2 = cat_descriptor(4, np.pi / 3)
    m = np.arange(9)
    assert np.allclose(np.abs(c.fock_amplitudes), np.abs(c2.fock_amplitudes))
    assert np.allclose(c2.fock_amplitudes, c.fock_amplitudes * np.exp(1j * m * np.pi / 3))
    with pytest.raises(ValueError):
        cat_descriptor(2.5, 0.0)


def test_relational_cat_is_normalized_and_real_symmetric():
    a = relational_cat_amplitudes(5, 1.0)
    assert np.linalg.norm(a) == pytest.approx(1.0)
    # the two branches are complex conjugates of each other up to reindexing
    assert np.allclose(a.imag, 0.0, atol=1e-12)
