import numpy as np
import pytest

from mixlab.config import ConfigError
from mixlab.experiments import (
    NAMED_DATA,
    named_data,
    run_experiment,
    smooth_corpus,
    spectral_saturation,
    von_mises,
)
from mixlab.spectral import TorusGrid, lp_norm

SMALL = {
    "stability_cascade": {"N": "64", "mode": "8", "forcing_mode": "10", "samples": "10", "amplitudes": "1,2"},
    "field_perturbation": {"N": "128", "count": "4", "samples": "10", "T": "0.5"},
    "vanishing_diffusion": {"N": "128", "count": "4", "samples": "10", "T": "0.5"},
    "regularity": {"N": "128", "amplitudes": "1,2", "samples": "20", "T": "0.2"},
    "mixing": {"N": "128", "N_coarse": "64", "T": "1.0", "sweep_amplitudes": "1"},
    "commutator_integral": {"count": "3"},
    "besov_decay": {"count": "2"},
    "counterexample_part1": {"N": "256", "delta_min": "0.02", "delta_max": "0.2", "count": "3"},
    "counterexample_part2": {"bands": "2,3", "nyquist_probe_N": "256"},
}


@pytest.fixture(scope="module", params=sorted(SMALL))
def small_report(request):
    return request.param, run_experiment(request.param, SMALL[request.param])


def test_small_configs_pass(small_report):
    name, rep = small_report
    assert rep.experiment == name
    assert rep.checks, "every experiment asserts something"
    assert rep.passed, [f"{c.name}: {c.detail}" for c in rep.failures()]


def test_fits_carry_config_digest(small_report):
    _, rep = small_report
    for fit in rep.fits:
        assert fit.digest == rep.config.digest and fit.n_points >= 2


def test_unknown_experiment_key():
    with pytest.raises(ConfigError, match="unknown keys"):
        run_experiment("regularity", {"amplitude": "1"})


def test_unknown_experiment_name():
    with pytest.raises(ConfigError, match="unknown experiment"):
        run_experiment("no_such_experiment", {})


def test_cascade_fit_is_reported():
    rep = run_experiment("stability_cascade", SMALL["stability_cascade"])
    assert rep.get("C_fit") >= 0
    assert any(f.name.startswith("cascade") for f in rep.fits)


def test_regularity_scaling_check_can_fail():
    rep = run_experiment("regularity", {**SMALL["regularity"], "scaling_tol": "0.0001"})
    assert not rep.check_named("linear_scaling_A2").passed


def test_part1_floor_check_can_fail():
    rep = run_experiment("counterexample_part1", {**SMALL["counterexample_part1"], "floor_fraction": "50"})
    assert not rep.passed


def test_part2_nyquist_probe_reports_admissible_n():
    rep = run_experiment("counterexample_part2", {"nyquist_probe_N": "4096"})
    assert "largest admissible n_max is 3" in str(rep.get("nyquist_probe"))
    assert rep.passed


@pytest.mark.parametrize("name", NAMED_DATA)
def test_named_data_are_resolved_at_128(name):
    f = named_data(name, TorusGrid(2, 128))
    assert lp_norm(f, 2.0) > 0
    assert spectral_saturation(f) <= 1e-10


def test_von_mises_peak():
    g = TorusGrid(2, 64)
    f = von_mises(g, center=(0.25, 0.5))
    i = np.unravel_index(np.argmax(f.values), g.shape)
    assert (i[0], i[1]) == (16, 32)


def test_smooth_corpus_seeded():
    g = TorusGrid(2, 64, 32.0)
    a, b = smooth_corpus(g, 2, seed=3), smooth_corpus(g, 2, seed=3)
    c = smooth_corpus(g, 2, seed=4)
    assert np.array_equal(a[1].values, b[1].values)
    assert not np.array_equal(a[1].values, c[1].values)
