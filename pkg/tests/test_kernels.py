import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from mixlab.kernels import (
    LittlewoodPaleyFamily,
    Mollifier,
    cutoff_profile,
    cutoff_profile_derivative,
    custom_kernel,
    cz_derived_kernels,
    cz_norm_estimate,
    log_averaged_kernel,
    log_laplacian,
    make_frequency_cutoff,
    make_gaussian_mollifier,
    make_lp_family,
    physical_kernel,
    reproduction_identity_check,
    rescale,
    write_cz_csv,
    write_symbol_csv,
)
from mixlab.spectral import ScalarField, TorusGrid, apply_multiplier

from conftest import band_limited, relerr

CUT = make_frequency_cutoff()
GAUSS = make_gaussian_mollifier()


@pytest.mark.parametrize("s,expected", [(0.0, 1.0), (0.7, 1.0), (1.0, 1.0), (1.5, 0.5), (2.0, 0.0), (2.3, 0.0)])
def test_cutoff_profile_values(s, expected):
    assert float(cutoff_profile(np.array(s))) == pytest.approx(expected, abs=1e-15)


def test_cutoff_profile_is_monotone_and_smooth():
    s = np.linspace(0, 3, 3001)
    v = cutoff_profile(s)
    assert np.all(np.diff(v) <= 0)
    # analytic derivative matches finite differences
    h = 1e-6
    mid = np.linspace(1.01, 1.99, 99)
    fd = (cutoff_profile(mid + h) - cutoff_profile(mid - h)) / (2 * h)
    assert np.allclose(cutoff_profile_derivative(mid), fd, atol=1e-7)


def test_mollifier_requires_unit_mass():
    with pytest.raises(ValueError):
        Mollifier("bad", lambda s: 2 * np.ones_like(s), lambda s: 0 * s)


@pytest.mark.parametrize("delta,s,expected", [(0.5, 1.9, 1.0), (2.0, 1.1, 0.0)])
def test_rescaled_cutoff(delta, s, expected):
    assert float(rescale(CUT, delta).radial(np.array(s))) == expected


@pytest.mark.parametrize("phi", [CUT, GAUSS])
def test_rescale_unit_is_identity(phi):
    s = np.linspace(0, 4, 41)
    assert np.array_equal(rescale(phi, 1.0).radial(s), phi(s))


@pytest.mark.parametrize("delta", [0.0, -1.0, math.inf])
def test_rescale_rejects_bad_delta(delta):
    with pytest.raises(ValueError):
        rescale(CUT, delta)


def test_log_average_at_origin():
    K = log_averaged_kernel(CUT, 1.0, math.e)
    assert float(K.radial(np.array(0.0))) == pytest.approx(1.0, rel=1e-14)


def test_log_average_flat_and_vanishing_regions():
    K = log_averaged_kernel(CUT, 0.01, 0.5)
    assert float(K.radial(np.array(2.0))) == pytest.approx(math.log(50), rel=1e-12)
    assert float(K.radial(np.array(200.0))) == 0.0


@pytest.mark.parametrize("phi", [CUT, GAUSS])
@pytest.mark.parametrize("s", [0.3, 1.7, 9.0, 45.0])
def test_log_average_matches_adaptive_quadrature(phi, s):
    d1, d2 = 1e-3, 0.2
    ref, _ = quad(lambda t: float(phi(np.array(math.exp(t) * s))), math.log(d1), math.log(d2),
                  epsabs=1e-13, epsrel=1e-13, limit=400)
    got = float(log_averaged_kernel(phi, d1, d2).radial(np.array(s)))
    assert got == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_log_average_rejects_reversed_range():
    with pytest.raises(ValueError):
        log_averaged_kernel(CUT, 1.0, 1.0)
    with pytest.raises(ValueError):
        log_averaged_kernel(CUT, 2.0, 1.0)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(0.1, 10.0), s=st.floats(0.01, 50.0))
def test_log_average_scaling(a, s):
    lhs = log_averaged_kernel(GAUSS, a * 0.01, a * 1.0).radial(np.array(s))
    rhs = log_averaged_kernel(GAUSS, 0.01, 1.0).radial(np.array(a * s))
    assert float(lhs) == pytest.approx(float(rhs), rel=1e-10, abs=1e-12)


def test_log_laplacian_symbol():
    s = np.array([0.0, 1.0, 3.0])
    assert np.allclose(log_laplacian().radial(s), np.log1p(s**2))


@pytest.mark.parametrize("ratio", [4.0, 2.0, 10.0])
def test_reproduction_identity_holds(ratio):
    g = TorusGrid(2, 64, 1.0)
    assert reproduction_identity_check(CUT, ratio * 0.01, 0.01, g)


def test_reproduction_identity_rejects():
    g = TorusGrid(2, 32)
    with pytest.raises(ValueError):
        reproduction_identity_check(CUT, 0.015, 0.01, g)
    with pytest.raises(ValueError):
        reproduction_identity_check(GAUSS, 4.0, 1.0, g)


def test_gaussian_kernel_is_positive():
    g = TorusGrid(2, 64, 8.0)
    k, _ = physical_kernel(rescale(GAUSS, 0.5), g)
    assert k.min() >= -1e-10 * k.max()


def test_multiplier_matches_physical_convolution():
    # Gaussian kernel phi_delta(x) = exp(-|x|^2 / (2 delta^2)) / (2 pi delta^2), periodised by direct summation
    g = TorusGrid(2, 32, 1.0)
    f = band_limited(g, 11, kmax=6)
    delta = 0.1
    x = g.axes[0]
    d = (x[:, None] - x[None, :] + 0.5) % 1.0 - 0.5
    ker1 = sum(np.exp(-((d + m) ** 2) / (2 * delta**2)) for m in (-1, 0, 1))
    k1 = ker1 / math.sqrt(2 * math.pi * delta**2)
    direct = k1 @ f.values @ k1.T * g.spacing**2
    spectral = rescale(GAUSS, delta).apply(f)
    assert relerr(spectral, direct) <= 1e-8


@pytest.mark.parametrize("phi", [GAUSS, CUT])
def test_cz_estimate_of_mollifier(phi):
    rep = cz_norm_estimate(rescale(phi, 1.0), TorusGrid(2, 128, 32.0))
    assert rep.sup_symbol == pytest.approx(1.0, abs=1e-14)
    assert all(np.isfinite([rep.sup_xd_K, rep.sup_xd1_gradK])) and rep.sup_xd_K > 0
    assert rep.estimate == max(rep.sup_xd_K, rep.sup_xd1_gradK, rep.sup_symbol)


def test_cz_estimate_of_zero_kernel():
    rep = cz_norm_estimate(custom_kernel(lambda k1, k2: 0.0 * (k1 + k2)), TorusGrid(2, 16))
    assert (rep.sup_xd_K, rep.sup_xd1_gradK, rep.sup_symbol) == (0.0, 0.0, 0.0)


def test_cz_estimate_rejects_log_laplacian():
    with pytest.raises(ValueError):
        cz_norm_estimate(log_laplacian(), TorusGrid(2, 16))


def test_derived_kernels_of_log_laplacian():
    ks = cz_derived_kernels(log_laplacian())
    k1 = np.array([0.0, 1.0, 2.0, -3.0])
    k2 = np.array([0.0, 2.0, -1.0, 0.5])
    for (i, j), K in ks.items():
        xi = (k1, k2)
        expected = -2 * xi[i] * xi[j] / (1 + k1**2 + k2**2)
        assert np.allclose(K.symbol(k1, k2), expected, atol=1e-15)
        assert K.symbol(np.array(0.0), np.array(0.0)) == 0.0


def test_derived_kernels_reject_custom():
    with pytest.raises(ValueError):
        cz_derived_kernels(custom_kernel(lambda k1, k2: k1))


def test_derived_symbol_sup_independent_of_range():
    s = np.geomspace(1e-3, 1e6, 20001)
    sups = []
    for d1, d2 in [(1e-3, 1.0), (1e-4, 10.0)]:
        K = cz_derived_kernels(log_averaged_kernel(CUT, d1, d2))[(0, 0)]
        sups.append(np.abs(K.symbol(s, 0 * s)).max())
    assert sups[1] == pytest.approx(sups[0], rel=0.05)


def test_lp_chi_values():
    fam = make_lp_family(-2, 6)
    assert float(fam.chi(np.array(1.0))) == 1.0
    assert np.all(fam.chi(np.linspace(0, 0.5, 11)) == 0.0)
    assert np.all(fam.chi(np.linspace(2.0, 5.0, 11)) == 0.0)
    assert np.all(fam.chi(np.linspace(0.51, 1.99, 50)) > 0)


def test_lp_partition_of_unity_on_grid():
    g = TorusGrid(2, 64, 1.0)
    fam = LittlewoodPaleyFamily.covering(g)
    s = g.wavenumber_modulus
    nz = s[s > 0]
    assert np.max(np.abs(fam.partition_sum(nz) - 1.0)) <= 1e-10


def test_lp_reconstruction():
    g = TorusGrid(2, 64, 1.0)
    f = band_limited(g, 12, kmax=20, mean=0.7)
    fam = LittlewoodPaleyFamily.covering(g)
    total = sum(fam.block(n).apply(f).values for n in fam.indices)
    assert relerr(total, f.values - f.mean()) <= 1e-8


def test_lp_rejects_empty_range():
    with pytest.raises(ValueError):
        make_lp_family(3, 2)


def test_symbol_and_cz_csv(tmp_path):
    write_symbol_csv(tmp_path / "s.csv", rescale(CUT, 1.0), [0.5, 1.5, 2.5])
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["abs_xi", "value"] and float(rows[2][1]) == pytest.approx(0.5)
    rep = cz_norm_estimate(rescale(GAUSS, 1.0), TorusGrid(2, 32, 16.0))
    write_cz_csv(tmp_path / "cz.csv", [rep, rep])
    rows = list(csv.DictReader(open(tmp_path / "cz.csv")))
    assert len(rows) == 2 and float(rows[0]["sup_symbol"]) == pytest.approx(1.0)
