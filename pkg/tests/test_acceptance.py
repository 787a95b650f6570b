"""Acceptance criteria 1-10; each test logs one PASS/FAIL line (see the terminal summary)."""

import math
import time

import numpy as np
import pytest

from mixlab.commutator import dl_commutator, integrated_commutator, shear_oracle
from mixlab.experiments import run_experiment, smooth_corpus
from mixlab.flows import FlowSpec, make_flow
from mixlab.kernels import (
    cz_derived_kernels,
    cz_norm_estimate,
    log_averaged_kernel,
    make_frequency_cutoff,
    make_gaussian_mollifier,
    make_lp_family,
)
from mixlab.report import write_report
from mixlab.spectral import ScalarField, TorusGrid, apply_spectral, lp_norm
from mixlab.transport import SolverConfig, admissible_dt, solve

from conftest import band_limited, record_criterion, relerr

pytestmark = pytest.mark.slow

GAUSS = make_gaussian_mollifier()


@pytest.fixture(scope="module")
def corpus():
    g = TorusGrid(2, 256, 32.0)
    return g, smooth_corpus(g, 20, seed=0)


def _checks(rep, prefixes):
    sel = [c for c in rep.checks if c.name.startswith(prefixes)]
    return sel, bool(sel) and all(c.passed for c in sel)


def test_criterion_01_oracle_equivalence(corpus):
    t0 = time.perf_counter()
    g, fields = corpus
    u = make_flow(FlowSpec("periodized_shear"), g)
    worst = 0.0
    for rho in fields:
        for d in np.geomspace(1e-3, 1.0, 7):
            worst = max(worst, relerr(dl_commutator(u, rho, GAUSS, d), shear_oracle(rho, GAUSS, d)))
    ok = record_criterion(1, "oracle equivalence", worst <= 1e-8,
                          f"worst relative error {worst:.2e} <= 1e-8 over 20 fields x 7 deltas in [1e-3, 1]",
                          time.perf_counter() - t0, 30)
    assert ok


def test_criterion_02_integral_identity(corpus):
    t0 = time.perf_counter()
    g, fields = corpus
    u = make_flow(FlowSpec("periodized_shear"), g)
    worst = 0.0
    for rho in fields:
        k = integrated_commutator(u, rho, GAUSS, 1e-2, 1.0)
        q = integrated_commutator(u, rho, GAUSS, 1e-2, 1.0, method="quadrature", tol=0.0)
        worst = max(worst, relerr(q, k))
    ok = record_criterion(2, "quadrature vs log-averaged kernel", worst <= 1e-6,
                          f"worst relative error {worst:.2e} <= 1e-6 over 20 fields, delta in [1e-2, 1]",
                          time.perf_counter() - t0, 60)
    assert ok


def test_criterion_03_range_independence():
    t0 = time.perf_counter()
    rep = run_experiment("commutator_integral")
    ok = record_criterion(3, "range independence", rep.passed,
                          f"4/2-decade ratio {rep.get('worst_plateau_ratio'):.4f} <= 1.5; "
                          f"naive integral growth {rep.get('naive_growth'):.3f}",
                          time.perf_counter() - t0, 300)
    assert ok, [f"{c.name}: {c.detail}" for c in rep.failures()]


def test_criterion_04_no_uniform_decay():
    t0 = time.perf_counter()
    rep = run_experiment("counterexample_part1")
    deltas = rep.tables["floor"].column("delta").astype(float)
    span = math.log10(deltas.max() / deltas.min())
    ok = record_criterion(4, "no uniform decay", rep.passed and span >= 2 - 1e-9,
                          f"{rep.check_named('no_uniform_decay').detail} (span {span:.2f} decades)",
                          time.perf_counter() - t0, 60)
    assert ok


def test_criterion_05_divergence():
    t0 = time.perf_counter()
    rep = run_experiment("counterexample_part2")
    sel, good = _checks(rep, ("lower_bound_n", "running_sum_grows_n"))
    names = {c.name for c in sel}
    complete = {f"lower_bound_n{n}" for n in (2, 3, 4)} | {"running_sum_grows_n3", "running_sum_grows_n4"} <= names
    ok = record_criterion(5, "per-band divergence", good and complete,
                          "; ".join(f"{c.name} {c.detail}" for c in sel), time.perf_counter() - t0, 300)
    assert ok


def test_criterion_06_cz_uniformity():
    t0 = time.perf_counter()
    phi = make_frequency_cutoff()
    lines, worst = [], 0.0
    # 1d: delta1 = 1e-4, delta2 up to 1, spacing <= delta1/8, period 64 delta2
    sweeps = {"1d": [(1, 1 << int(math.ceil(math.log2(512 * r))), 1e-4, r, 64.0) for r in (10, 100, 1000, 10000)],
              "2d": [(2, 2048, 1e-3, r, 16.0) for r in (10, 31.6, 100)]}
    for tag, runs in sweeps.items():
        est: dict = {}
        for dim, N, d1, ratio, pad in runs:
            g = TorusGrid(dim, N, pad * d1 * ratio)
            for ij, K in cz_derived_kernels(log_averaged_kernel(phi, d1, d1 * ratio), dim).items():
                est.setdefault(ij, []).append(cz_norm_estimate(K, g).estimate)
        for ij, v in est.items():
            var = max(v) / min(v) - 1
            worst = max(worst, var)
            lines.append(f"{tag} K'_{ij[0]}{ij[1]} {min(v):.3f}..{max(v):.3f}")
    ok = record_criterion(6, "CZ uniformity", worst <= 0.2,
                          f"largest variation {100 * worst:.1f}% <= 20% (" + ", ".join(lines) + "); "
                          "1d delta2/delta1 in 1e1..1e4, 2d in 1e1..1e2",
                          time.perf_counter() - t0, 60)
    assert ok


def test_criterion_07_mixing_floor():
    t0 = time.perf_counter()
    rep = run_experiment("mixing")
    sel, good = _checks(rep, ("floor_holds", "grid_refinement", "equal_ratio_data"))
    ok = record_criterion(7, "mixing floor", good, "; ".join(f"{c.name} {c.detail}" for c in sel),
                          time.perf_counter() - t0, 300)
    assert ok


def test_criterion_08_regularity_slope():
    t0 = time.perf_counter()
    rep = run_experiment("regularity")
    sel, good = _checks(rep, ("bound_holds", "linear_scaling"))
    ok = record_criterion(8, "regularity slope", good,
                          f"C_fit {rep.get('C_fit'):.4g}; " + "; ".join(f"{c.name} {c.detail}" for c in sel),
                          time.perf_counter() - t0, 180)
    assert ok


@pytest.mark.parametrize("name,key", [("field_perturbation", "skipped_eps"), ("vanishing_diffusion", "skipped_nu")])
def test_criterion_09_stability_envelopes(name, key):
    t0 = time.perf_counter()
    rep = run_experiment(name)
    params = rep.tables[name].column("parameter").astype(float)
    span = math.log10(params.max() / params.min())
    sel, good = _checks(rep, (f"{name}_monotone", f"{name}_fit_r2", f"{name}_solver_error_small"))
    ok = record_criterion(9, f"stability envelope ({name})", good and span >= 3 - 1e-9,
                          f"sweep spans {span:.2f} decades; " + "; ".join(f"{c.name} {c.detail}" for c in sel),
                          time.perf_counter() - t0, 600)
    assert ok


def test_criterion_10_infrastructure(tmp_path):
    t0 = time.perf_counter()
    results = {}
    g = TorusGrid(2, 64)
    f = band_limited(g, 1, kmax=10)
    spec_energy = float(np.sum(g.rfft_weights * np.abs(f.spectrum) ** 2)) * g.volume / g.size**2
    results["parseval"] = abs(lp_norm(f, 2.0) ** 2 / spec_energy - 1)
    k2 = np.broadcast_to(g.wavenumber_modulus**2, g.spectral_shape)
    s1, s2 = np.exp(-0.01 * k2), 1.0 / (1.0 + k2)
    results["composition"] = relerr(apply_spectral(apply_spectral(f, s1), s2), apply_spectral(f, s1 * s2))
    fam = make_lp_family(-2, 12)
    s = np.linspace(1.0, 2.0**12, 200001)
    results["lp_partition"] = float(np.abs(fam.partition_sum(s) - 1.0).max())
    big = TorusGrid(2, 256)
    x1, x2 = big.coords
    rho0 = ScalarField(big, np.broadcast_to(np.exp(2 * (np.cos(2 * np.pi * x1) + np.cos(2 * np.pi * x2) - 2)), big.shape))
    u = make_flow(FlowSpec("alternating_sine_shear", 1.0, 0.5), big)
    tj = solve(rho0, u, 1.0, SolverConfig(admissible_dt(u), track_p=(2.0, 4.0, 16.0), save_every=10**6))
    results["conservation"] = max(abs(tj.column(c)[-1] / tj.column(c)[0] - 1) for c in ("L2", "L4", "L16"))
    values = {"N": "256", "delta_min": "0.02", "delta_max": "0.2", "count": "3"}
    a = write_report(run_experiment("counterexample_part1", values), tmp_path / "a", timestamp="fixed")
    b = write_report(run_experiment("counterexample_part1", values), tmp_path / "b", timestamp="fixed")
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    identical = all((a / p).read_bytes() == (b / p).read_bytes() for p in files)
    limits = {"parseval": 1e-10, "composition": 1e-12, "lp_partition": 1e-10, "conservation": 1e-5}
    good = identical and all(results[k] <= v for k, v in limits.items())
    detail = ", ".join(f"{k} {results[k]:.1e} <= {limits[k]:g}" for k in limits)
    ok = record_criterion(10, "infrastructure invariants", good,
                          f"{detail}, rerun bit-identical over {len(files)} files: {identical}",
                          time.perf_counter() - t0, 60)
    assert ok
