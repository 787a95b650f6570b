"""Configuration-driven experiments with asserted checks and fitted constants."""

from __future__ import annotations

import math
from typing import Any, Callable, Mapping

import numpy as np

from .commutator import (
    CounterexampleSpec,
    band_contribution,
    band_contribution_envelope,
    band_epsilon,
    band_lower_bound,
    besov_commutator_integral,
    commutator_scan,
    counterexample_density,
    dl_commutator,
    kernel_commutator,
    log_delta_grid,
    min_window_norm,
    shear_decay_constant,
    shear_symbol,
    smooth_cutoff,
)
from .config import ConfigError, ExperimentConfig
from .flows import FlowSpec, make_flow
from .kernels import Mollifier, log_averaged_kernel, make_frequency_cutoff, make_gaussian_mollifier, rescale
from .norms import SobolevDualSpec, log_derivative_norm, mixing_ratio, mixing_scale, sobolev_dual_norm
from .parallel import map_ordered
from .report import ExperimentReport
from .spectral import ExponentTriple, ScalarField, TorusGrid, VelocityField, lp_norm
from .transport import SolverConfig, Trajectory, admissible_dt, grad_norm_accumulator, gradient_tensor_norm, solve

__all__ = [
    "EXPERIMENTS",
    "ALIASES",
    "run_experiment",
    "make_config",
    "von_mises",
    "named_data",
    "smooth_corpus",
    "spectral_saturation",
    "mollifier_by_name",
]


def mollifier_by_name(name: str) -> Mollifier:
    if name in ("gaussian", "gauss"):
        return make_gaussian_mollifier()
    if name in ("cutoff", "frequency_cutoff"):
        return make_frequency_cutoff()
    raise ConfigError(f"unknown mollifier {name!r} (expected gaussian or cutoff)")


def von_mises(grid: TorusGrid, center: tuple[float, float] = (0.3, 0.2), kappa: float = 4.0) -> ScalarField:
    """Periodic band-limited bump ``exp(kappa (cos + cos - 2))`` centred at ``center`` (in periods)."""
    lam = grid.period
    x1, x2 = grid.coords
    a, b = center
    arg = np.cos(2 * np.pi * (x1 / lam - a)) + np.cos(2 * np.pi * (x2 / lam - b)) - 2.0
    return ScalarField(grid, np.broadcast_to(np.exp(kappa * arg), grid.shape))


NAMED_DATA = ("sin_x1", "sin_x2", "cos_diag", "sin_2x1", "von_mises")


def named_data(name: str, grid: TorusGrid) -> ScalarField:
    lam = grid.period
    x1, x2 = grid.coords
    k = 2 * np.pi / lam
    table: dict[str, Callable[[], np.ndarray]] = {
        "sin_x1": lambda: np.sin(k * x1) + 0 * x2,
        "sin_x2": lambda: np.sin(k * x2) + 0 * x1,
        "cos_diag": lambda: np.cos(k * (x1 + x2)),
        "sin_2x1": lambda: np.sin(2 * k * x1) + 0 * x2,
    }
    if name == "von_mises":
        return von_mises(grid)
    if name not in table:
        raise ConfigError(f"unknown data {name!r}; expected one of {NAMED_DATA}")
    return ScalarField(grid, np.broadcast_to(table[name](), grid.shape))


def smooth_corpus(grid: TorusGrid, count: int, seed: int, width: float = 0.8, spacing: float = 1.25,
                  modes: int = 5) -> list[ScalarField]:
    """Seeded random trigonometric sums under a centred Gaussian envelope."""
    rng = np.random.default_rng(seed)
    c1, c2 = grid.centered_coords
    env = np.exp(-(c1**2 + c2**2) / (2 * width**2))
    half = modes // 2
    out = []
    for _ in range(count):
        amp = rng.normal(size=(modes, modes))
        phase = rng.uniform(0, 2 * np.pi, size=(modes, modes))
        v = np.zeros(grid.shape)
        for i in range(modes):
            for j in range(modes):
                v = v + amp[i, j] * np.cos(spacing * (i - half) * c1 + spacing * j * c2 + phase[i, j])
        out.append(ScalarField(grid, v * env))
    return out


def spectral_saturation(f: ScalarField, fraction: float = 2.0 / 3.0, shell: float = 0.9) -> float:
    """Relative amplitude in the outer shell ``[shell, 1]`` of the dealiased band."""
    g = f.grid
    inner = g.dealias_mask(fraction * shell)
    outer = g.dealias_mask(fraction)
    e = np.abs(f.spectrum) ** 2 * g.rfft_weights
    tot = float(e.sum())
    return 0.0 if tot == 0 else float(np.sqrt(e[outer & ~inner].sum() / tot))


def _triple(cfg: ExperimentConfig) -> ExponentTriple:
    try:
        return ExponentTriple(cfg["p"], cfg["q"], cfg["r"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _grid(cfg: ExperimentConfig, key: str = "N") -> TorusGrid:
    try:
        return TorusGrid(2, cfg[key], cfg["period"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _flow(kind: str, grid: TorusGrid, amplitude: float, switch_period: float = 0.5, wavenumber: int = 1) -> VelocityField:
    try:
        return make_flow(FlowSpec(kind, amplitude, switch_period, wavenumber), grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


# --------------------------------------------------------------------------- stability cascade

STABILITY_DEFAULTS = {
    "N": 128, "period": 1.0, "mode": 16, "delta0": 0.0, "amplitudes": (1.0, 2.0, 4.0),
    "switch_period": 0.5, "T": 1.0, "samples": 20, "kappas": (0.02, 0.05, 0.1),
    "forcing_amplitude": 0.5, "forcing_mode": 20, "p": 4.0, "q": 4.0, "r": 2.0,
}


# relative level below which content counts as invisible to a mollifier (roundoff at |xi| delta = 2)
VISIBLE_TOL = 1e-12


def _threshold_delta(f: ScalarField, phi: Mollifier, kappa: float, lo: float, hi: float, r: float,
                     per_decade: int = 16) -> float:
    """Largest ``delta`` in ``[lo, hi]`` where ``||f * phi_delta||_r`` still exceeds ``kappa``.

    Returns ``lo`` when the norm never exceeds ``kappa``. A log-grid scan locates the
    last crossing, then bisection in ``log delta`` refines it.
    """
    def norm(d: float) -> float:
        return lp_norm(rescale(phi, d).apply(f), r)

    count = max(2, int(math.ceil(per_decade * math.log10(hi / lo))) + 1)
    deltas = np.geomspace(lo, hi, count)
    above = [norm(float(d)) > kappa for d in deltas]
    if not any(above):
        return lo
    j = max(i for i, v in enumerate(above) if v)
    if j == count - 1:
        return hi
    a, b = math.log(deltas[j]), math.log(deltas[j + 1])
    for _ in range(40):
        m = 0.5 * (a + b)
        if norm(math.exp(m)) > kappa:
            a = m
        else:
            b = m
    return math.exp(a)


def run_stability_cascade(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    rep = ExperimentReport(cfg)
    grid = _grid(cfg)
    tr = _triple(cfg)
    phi = make_frequency_cutoff()
    k = 2 * np.pi * cfg["mode"] / grid.period
    _require(cfg["mode"] >= 1, "mode must be a positive integer")
    delta0 = cfg["delta0"] or 2.0 / k
    x1, x2 = grid.coords
    rho0 = ScalarField(grid, np.broadcast_to(np.cos(k * x1) + 0 * x2, grid.shape))
    low = lp_norm(rescale(phi, delta0).apply(rho0), tr.r)
    _require(low <= VISIBLE_TOL * lp_norm(rho0, tr.r), f"initial data has content visible at delta0={delta0:.4g} (||rho0*phi_delta0|| = {low:.3e})")
    kf = 2 * np.pi * cfg["forcing_mode"] / grid.period
    _require(delta0 * kf >= 2.0, "forcing mode is visible at delta0")
    norm0 = lp_norm(rho0, tr.r)
    kappas = [c * norm0 for c in cfg["kappas"]]
    ratio = mixing_ratio(rho0, tr)
    rep.value("delta0", delta0)
    rep.value("mixing_ratio", ratio)
    tab = rep.table("cascade", ["amplitude", "forced", "time", "accumulator", "kappa", "delta_star",
                                "log_delta_ratio", "scaled_accumulator"])

    def trajectory(amplitude: float, forced: bool) -> Trajectory:
        if amplitude == 0:
            u = _flow("zero", grid, 0.0)
            dt = cfg["T"] / cfg["samples"]
        else:
            u = _flow("alternating_sine_shear", grid, amplitude, cfg["switch_period"])
            dt = admissible_dt(u)
        forcing = None
        if forced:
            forcing = ScalarField(grid, np.broadcast_to(cfg["forcing_amplitude"] * np.sin(kf * x2) + 0 * x1, grid.shape))
        steps = max(1, int(math.ceil(cfg["T"] / dt)))
        every = max(1, steps // cfg["samples"])
        sc = SolverConfig(dt, forcing=forcing, save_every=every, grad_p=tr.p)
        return solve(rho0, u, cfg["T"], sc)

    runs = [(0.0, False)] + [(a, False) for a in cfg["amplitudes"]] + [(cfg["amplitudes"][0], True)]
    trajs = map_ordered(lambda ar: trajectory(*ar), runs, workers)
    stars: dict[tuple[float, bool], np.ndarray] = {}
    for (amp, forced), tj in zip(runs, trajs):
        grid_stars = []
        for t, X, f in zip(tj.times, tj.column("accumulator"), tj.states):
            row = []
            for kap in kappas:
                d = _threshold_delta(f, phi, kap, delta0, grid.period, tr.r)
                z = ratio * X / kap
                tab.add(amp, forced, t, X, kap, d, math.log(d / delta0), z)
                row.append(d)
            grid_stars.append(row)
        stars[(amp, forced)] = np.asarray(grid_stars)

    zero = stars[(0.0, False)]
    rep.check("zero_flow_no_transfer", bool(np.all(zero == delta0)), "delta* stays at delta0 without flow")
    mono = all(np.all(np.diff(s, axis=1) <= 1e-12 * s[:, 1:]) for s in stars.values())
    rep.check("kappa_monotone", mono, "delta* is nonincreasing in kappa at every time")

    amps = cfg["amplitudes"]
    mid = len(kappas) // 2
    free_rows = [r for r in tab.rows if r[0] in amps and not r[1]]
    y = np.array([r[6] for r in free_rows])
    z = np.array([r[7] for r in free_rows])
    pos = z > 0
    c_fit = float(np.max((y[pos] - math.log(4.0)) / z[pos], initial=0.0))
    rep.value("C_fit", c_fit)
    for amp in amps:
        sel = [r for r in free_rows if r[0] == amp and r[4] == kappas[mid]]
        fit = rep.fit(f"cascade_A{amp:g}", [r[3] for r in sel], [r[6] for r in sel], c_fit,
                      "log(delta*/delta0) <= log 4 + C ratio X / kappa")
        rep.check(f"cascade_slope_positive_A{amp:g}", fit.slope > 0, f"slope {fit.slope:.4g}")

    sine = ScalarField(grid, np.broadcast_to(np.sin(kf * x2) + 0 * x1, grid.shape))
    f_vis = lp_norm(rescale(phi, delta0).apply(sine), tr.r)
    rep.value("forcing_visible_norm", f_vis)
    rep.check("forcing_invisible", f_vis <= VISIBLE_TOL * lp_norm(sine, tr.r),
              "the bound's forcing term ||f*phi_delta0|| vanishes")
    K0 = rescale(phi, delta0)
    shift = max(abs(lp_norm(K0.apply(a), tr.r) - lp_norm(K0.apply(b), tr.r))
                for a, b in zip(trajs[-1].states, trajs[1].states))
    rep.value("forced_low_mode_shift", shift)
    rep.check("forcing_within_kappa", shift <= min(kappas),
              f"forced vs unforced ||rho*phi_delta0|| differ by {shift:.3e} <= kappa_min {min(kappas):.3e}")
    rep.figure("cascade", "scaled_accumulator", ["log_delta_ratio"], title="cascade thresholds")
    return rep


# --------------------------------------------------------------------------- mixing

MIXING_DEFAULTS = {
    "N": 256, "N_coarse": 128, "period": 1.0, "amplitude": 2.0, "switch_period": 0.5, "T": 2.0,
    "samples_per_switch": 4, "data": ("sin_x1", "cos_diag"), "delta": 0.0, "p": 4.0, "q": 4.0, "r": 2.0,
    "refine_tol": 0.2, "data_factor": 2.0, "sweep_amplitudes": (1.0, 4.0), "amplitude_tol": 0.5,
}


def run_mixing(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    rep = ExperimentReport(cfg)
    tr = _triple(cfg)
    _require(tr.r == 2.0, "the mixing experiment reports the exact H^-1 norm and needs r = 2")
    _require(len(cfg["data"]) >= 2, "mixing needs at least two initial data")
    phi = make_gaussian_mollifier()
    fine, coarse = _grid(cfg, "N"), _grid(cfg, "N_coarse")
    dual = SobolevDualSpec(2.0, cfg["period"], "exact_r2")
    amp0 = cfg["amplitude"]
    runs = [(cfg["data"][0], fine, amp0), (cfg["data"][0], coarse, amp0)] + [(d, fine, amp0) for d in cfg["data"][1:]]
    runs += [(cfg["data"][0], coarse, a) for a in cfg["sweep_amplitudes"]]
    ratios = [mixing_ratio(named_data(d, fine), tr) for d in cfg["data"]]
    rep.check("equal_mixing_ratio", max(ratios) - min(ratios) <= 1e-10 * max(ratios),
              "initial data share one mixing ratio " + ",".join(f"{r:.12g}" for r in ratios))

    def one(item):
        name, grid, amplitude = item
        rho0 = named_data(name, grid)
        _require(abs(rho0.mean()) <= 1e-12 * float(np.abs(rho0.values).max()), f"{name} is not mean-zero")
        scale = mixing_scale(rho0, phi, tr.r)
        delta = cfg["delta"] or scale
        if delta > scale * (1 + 1e-9):
            raise ConfigError(f"delta={delta:g} violates the not-yet-mixed hypothesis; largest admissible is {scale:.6g}")
        u = _flow("alternating_sine_shear", grid, amplitude, cfg["switch_period"])
        dt = admissible_dt(u)
        every = max(1, int(round(cfg["switch_period"] / dt / cfg["samples_per_switch"])))
        sc = SolverConfig(dt, save_every=every, track_p=(tr.r, tr.q), grad_p=tr.p)
        tj = solve(rho0, u, cfg["T"], sc, probes={"H": lambda f: sobolev_dual_norm(f, dual),
                                                   "saturation": spectral_saturation})
        return rho0, delta, tj

    results = map_ordered(one, runs, workers)
    tab = rep.table("mixing", ["data", "N", "amplitude", "time", "accumulator", "scaled_accumulator", "H", "log_H_ratio",
                               "saturation"])
    rates = []
    for (name, grid, amplitude), (rho0, delta, tj) in zip(runs, results):
        H = tj.column("H")
        ratio = mixing_ratio(rho0, tr)
        X = ratio * tj.column("accumulator")
        y = np.log(H / H[0])
        for t, a, x, h, yy, s in zip(tj.times, tj.column("accumulator"), X, H, y, tj.column("saturation")):
            tab.add(name, grid.points_per_axis, amplitude, t, a, x, h, yy, s)
        rate = float(-np.dot(X, y) / np.dot(X, X))
        floor = float(np.max(-y[1:] / X[1:]))
        tag = f"{name}_N{grid.points_per_axis}" + ("" if amplitude == amp0 else f"_A{amplitude:g}")
        rep.value(f"rate_{tag}", rate)
        rep.value(f"floor_constant_{tag}", floor)
        rep.value(f"delta_{tag}", delta)
        rep.value(f"max_saturation_{tag}", float(tj.column("saturation").max()))
        rep.fit(f"mixing_{tag}", X, y, rate, "log H(t)/H(0) >= -C ratio X(t)")
        rates.append((name, grid, rho0, delta, tj, rate, floor, amplitude))

    # calibration: datum 0 on the fine grid fixes A and C of the floor
    _, _, rho_c, delta_c, tj_c, _, floor_c, _ = rates[0]
    a_fit = tj_c.column("H")[0] / (delta_c * lp_norm(rho_c, tr.r))
    rep.value("A_fit", a_fit)
    rep.value("C_fit", floor_c)
    for name, grid, rho0, delta, tj, _, _, amplitude in rates[1:]:
        if amplitude != amp0:
            continue
        X = mixing_ratio(rho0, tr) * tj.column("accumulator")
        lhs = np.log(tj.column("H"))
        rhs = math.log(delta * a_fit * lp_norm(rho0, tr.r)) - floor_c * X
        rep.check(f"floor_holds_{name}_N{grid.points_per_axis}", bool(np.all(lhs >= rhs - 1e-12)),
                  f"min margin {float(np.min(lhs - rhs)):.4g}")
    r_fine, r_coarse = rates[0][5], rates[1][5]
    rel = abs(r_fine - r_coarse) / r_fine
    rep.value("refinement_rel_change", rel)
    rep.check("grid_refinement", rel <= cfg["refine_tol"], f"rates {r_coarse:.5g} -> {r_fine:.5g}")
    sweep = [r for r in rates if r[1] is coarse and r[0] == cfg["data"][0]]
    amp_spread = max(abs(r[5] / rates[1][5] - 1.0) for r in sweep)
    rep.value("amplitude_rate_spread", amp_spread)
    rep.check("amplitude_stable", amp_spread <= cfg["amplitude_tol"],
              "rates " + ",".join(f"A={r[7]:g}:{r[5]:.4g}" for r in sweep) + f" vs A={amp0:g}:{rates[1][5]:.4g}")
    fine_rates = [r[5] for r in rates if r[1] is fine]
    spread = max(fine_rates) / min(fine_rates)
    rep.value("data_rate_spread", spread)
    rep.check("equal_ratio_data", spread <= cfg["data_factor"], "rates " + ",".join(f"{r:.5g}" for r in fine_rates))

    # zero flow: H is constant
    rho0 = named_data(cfg["data"][0], coarse)
    tz = solve(rho0, _flow("zero", coarse, 0.0), 0.5, SolverConfig(0.1),
               probes={"H": lambda f: sobolev_dual_norm(f, dual)})
    hz = tz.column("H")
    rep.check("zero_flow_constant", float(np.max(np.abs(hz / hz[0] - 1))) <= 1e-12, "H^-1 unchanged without flow")
    rep.figure("mixing", "scaled_accumulator", ["log_H_ratio"], title="H^-1 decay")
    return rep


# --------------------------------------------------------------------------- stability envelopes

PERTURBATION_DEFAULTS = {
    "N": 128, "period": 1.0, "amplitude": 1.0, "switch_period": 0.5, "perturbation_amplitude": 0.15915494309189535,
    "T": 1.0, "eps_min": 1e-4, "eps_max": 1e-1, "count": 7, "delta": 0.05, "samples": 20,
    "p": 4.0, "q": 4.0, "r": 2.0,
}

DIFFUSION_DEFAULTS = {
    "N": 128, "period": 1.0, "amplitude": 1.0, "switch_period": 0.5, "T": 1.0,
    "nu_min": 1e-6, "nu_max": 1e-3, "count": 7, "delta": 0.05, "samples": 20,
    "p": 4.0, "q": 4.0, "r": 2.0,
}


def _sup_difference(a: Trajectory, b: Trajectory, K, r: float) -> float:
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise RuntimeError("trajectories are sampled at different times")
    return max(lp_norm(K.apply(x - y), r) for x, y in zip(a.states, b.states))


def _solver_error(a: Trajectory, b: Trajectory, K, r: float) -> float:
    """Sup of the mollified difference over snapshot times shared by both runs."""
    j = np.searchsorted(b.times, a.times)
    diffs = [lp_norm(K.apply(a.states[i] - b.states[k]), r) for i, k in enumerate(j)
             if k < len(b.times) and abs(b.times[k] - a.times[i]) <= 1e-12 * max(1.0, a.times[-1])]
    return max(diffs)


def _envelope_checks(rep: ExperimentReport, name: str, params: np.ndarray, D: np.ndarray, E: np.ndarray,
                     B: float, solver_err: float) -> None:
    tab = rep.table(name, ["parameter", "difference", "inverse_log", "envelope"])
    c_env = float(np.max(D / (B * E)))
    for p, d, e in zip(params, D, E):
        tab.add(p, d, e, c_env * B * e)
    fit = rep.fit(name, np.log(E), np.log(D), c_env, "difference <= C B / log(...)")
    rep.value(f"{name}_C_env", c_env)
    rep.value(f"{name}_fit_exponent", fit.slope)
    rep.value(f"{name}_solver_error", solver_err)
    rep.check(f"{name}_monotone", bool(np.all(np.diff(D) > 0)), "difference strictly increases with the perturbation")
    rep.check(f"{name}_fit_r2", fit.r_squared >= 0.9, f"R^2 = {fit.r_squared:.4f}")
    rep.check(f"{name}_decays_faster_than_envelope", fit.slope >= 1.0, f"log-log exponent {fit.slope:.3f}")
    rep.check(f"{name}_solver_error_small", solver_err <= 1e-2 * float(D.min()),
              f"halved-dt change {solver_err:.3e} vs smallest difference {float(D.min()):.3e}")
    rep.figure(name, "parameter", ["difference", "envelope"], loglog=True, title=name)


def run_field_perturbation(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    rep = ExperimentReport(cfg)
    grid = _grid(cfg)
    tr = _triple(cfg)
    phi = make_frequency_cutoff()
    K = rescale(phi, cfg["delta"])
    rho0 = von_mises(grid)
    u = _flow("alternating_sine_shear", grid, cfg["amplitude"], cfg["switch_period"])
    w = _flow("cellular", grid, cfg["perturbation_amplitude"])
    T = cfg["T"]
    eps = np.geomspace(cfg["eps_min"], cfg["eps_max"], cfg["count"])
    dt = min(admissible_dt(u + w.scaled(float(eps.max()))), admissible_dt(u))
    steps = int(math.ceil(T / dt - 1e-9))
    every = max(1, steps // cfg["samples"])
    sc = SolverConfig(dt, save_every=every, grad_p=tr.p, track_p=(tr.q,))
    grad_u = grad_norm_accumulator(u, tr.p, T)
    w_norm = lp_norm(ScalarField(grid, np.sqrt(sum(c * c for c in w.at(0)))), tr.p) * T

    base = solve(rho0, u, T, sc)
    half = solve(rho0, u, T, SolverConfig(dt / 2, save_every=2 * every, grad_p=tr.p))
    solver_err = _solver_error(base, half, K, tr.r)
    zero = solve(rho0, u + w.scaled(0.0), T, sc)
    rep.check("zero_perturbation", _sup_difference(base, zero, K, tr.r) == 0.0, "eps = 0 reproduces the flow")

    kept, skipped = [], []
    for e in eps:
        if e * w_norm <= cfg["delta"] * grad_u:
            kept.append(float(e))
        else:
            skipped.append(float(e))
    rep.value("skipped_eps", tuple(skipped) or "none")
    runs = map_ordered(lambda e: solve(rho0, u + w.scaled(e), T, sc), kept, workers)
    D = np.array([_sup_difference(base, tj, K, tr.r) for tj in runs])
    rho_bar_q = max(max(tj.column(f"L{tr.q:g}")) for tj in runs)
    E = np.array([1.0 / math.log(cfg["delta"] * grad_u / (e * w_norm)) for e in kept])
    rep.value("grad_u_L1Lp", grad_u)
    _envelope_checks(rep, "field_perturbation", np.array(kept), D, E, rho_bar_q * grad_u, solver_err)
    return rep


def run_vanishing_diffusion(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    rep = ExperimentReport(cfg)
    grid = _grid(cfg)
    tr = _triple(cfg)
    phi = make_frequency_cutoff()
    K = rescale(phi, cfg["delta"])
    rho0 = von_mises(grid)
    u = _flow("alternating_sine_shear", grid, cfg["amplitude"], cfg["switch_period"])
    T = cfg["T"]
    dt = admissible_dt(u)
    steps = int(math.ceil(T / dt - 1e-9))
    every = max(1, steps // cfg["samples"])
    grad_u = grad_norm_accumulator(u, tr.p, T)
    ratio = mixing_ratio(rho0, tr)

    def run(nu: float, h: float = dt, ev: int = every) -> Trajectory:
        return solve(rho0, u, T, SolverConfig(h, nu=nu, save_every=ev, grad_p=tr.p))

    base = run(0.0)
    half = run(0.0, dt / 2, 2 * every)
    solver_err = _solver_error(base, half, K, tr.r)
    rep.check("zero_diffusion", _sup_difference(base, run(0.0), K, tr.r) == 0.0, "nu = 0 reproduces the flow")
    nus = np.geomspace(cfg["nu_min"], cfg["nu_max"], cfg["count"])
    limit = cfg["delta"] ** 2 * ratio * grad_u
    kept = [float(n) for n in nus if n * T <= limit]
    rep.value("skipped_nu", tuple(float(n) for n in nus if n * T > limit) or "none")
    runs = map_ordered(run, kept, workers)
    D = np.array([_sup_difference(base, tj, K, tr.r) for tj in runs])
    E = np.array([1.0 / math.log(limit / (n * T)) for n in kept])
    rep.value("grad_u_L1Lp", grad_u)
    _envelope_checks(rep, "vanishing_diffusion", np.array(kept), D, E, lp_norm(rho0, tr.q) * grad_u, solver_err)
    return rep


# --------------------------------------------------------------------------- regularity

REGULARITY_DEFAULTS = {
    "N": 128, "period": 1.0, "flow": "cellular", "amplitudes": (1.0, 2.0, 4.0), "switch_period": 0.5,
    "T": 0.4, "samples": 80, "p": 4.0, "q": 4.0, "r": 2.0, "saturation_limit": 1e-2,
    "scaling_tol": 0.15,
}


def run_regularity(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    rep = ExperimentReport(cfg)
    grid = _grid(cfg)
    tr = _triple(cfg)
    rho0 = von_mises(grid)
    q_norm = lp_norm(rho0, tr.q)
    amps = cfg["amplitudes"]
    _require(len(amps) >= 2, "regularity needs at least two amplitudes")
    T, h = cfg["T"], cfg["T"] / cfg["samples"]

    def run(amp: float):
        u = _flow(cfg["flow"], grid, amp, cfg["switch_period"]) if amp > 0 else _flow("zero", grid, 0.0)
        dt = min(admissible_dt(u), h)
        every = max(1, int(math.ceil(h / dt - 1e-9)))
        dt = h / every
        tj = solve(rho0, u, T, SolverConfig(dt, save_every=every, grad_p=tr.p),
                   probes={"logd": lambda f: log_derivative_norm(f, tr.r), "saturation": spectral_saturation})
        return u, tj

    results = map_ordered(run, [0.0, *amps], workers)
    _, tz = results[0]
    lz = tz.column("logd")
    rep.check("zero_flow_constant", float(np.max(np.abs(lz - lz[0]))) <= 1e-12 * lz[0], "norm constant without flow")
    tab = rep.table("regularity", ["amplitude", "time", "log_derivative_norm", "slope", "rhs", "saturation"])
    stats = []
    for amp, (u, tj) in zip(amps, results[1:]):
        t = np.asarray(tj.times)
        L = tj.column("logd")
        sat = tj.column("saturation")
        bad = np.nonzero(sat > cfg["saturation_limit"])[0]
        stop = int(bad[0]) if bad.size else len(t)
        slopes = np.diff(L[:stop]) / np.diff(t[:stop])
        grads = np.array([gradient_tensor_norm(u, tr.p, 0.5 * (a + b)) for a, b in zip(t[:stop - 1], t[1:stop])])
        rhs = q_norm * grads
        for k in range(len(slopes)):
            tab.add(amp, t[k + 1], L[k + 1], slopes[k], rhs[k], sat[k + 1])
        rep.value(f"saturation_time_A{amp:g}", float(t[stop - 1]) if stop < len(t) else "none")
        _require(len(slopes) >= 2, f"amplitude {amp:g} saturates the spectrum before two steps were recorded")
        stats.append((amp, slopes, rhs))
        rep.value(f"max_slope_A{amp:g}", float(slopes.max()))
    amp0, s0, r0 = stats[0]
    c_fit = float(np.max(s0 / r0))
    rep.value("C_fit", c_fit)
    for amp, s, r in stats[1:]:
        margin = float(np.min(c_fit * r - s))
        rep.check(f"bound_holds_A{amp:g}", margin >= 0.0, f"min margin {margin:.4g}")
    for (a1, s1, _), (a2, s2, _) in zip(stats[:-1], stats[1:]):
        ratio = float(s2.max() / s1.max())
        expected = a2 / a1
        rep.value(f"slope_ratio_A{a2:g}_over_A{a1:g}", ratio)
        ok = abs(ratio / expected - 1.0) <= cfg["scaling_tol"]
        rep.check(f"linear_scaling_A{a2:g}", ok, f"max-slope ratio {ratio:.4f} for amplitude ratio {expected:g}")
    rep.figure("regularity", "time", ["slope", "rhs"], title="log-derivative growth")
    return rep


# --------------------------------------------------------------------------- commutator suite

COMMUTATOR_DEFAULTS = {
    "N": 256, "period": 32.0, "count": 20, "width": 0.8, "spacing": 1.25, "mollifier": "gaussian",
    "flows": ("periodized_shear", "cellular"), "cellular_amplitude": 5.092958178940651, "center": 0.0,
    "p": 4.0, "q": 4.0, "r": 2.0, "plateau_tol": 1.5,
    "ce_N": 1024, "ce_period": 4.0, "ce_n_max": 3, "ce_center": 0.011, "per_decade": 16, "growth_min": 1.1,
}


def _peak_delta(u: VelocityField, rho: ScalarField, phi: Mollifier, r: float) -> float:
    deltas = log_delta_grid(1e-3, 1e2, 8)
    norms = [lp_norm(dl_commutator(u, rho, phi, d), r) for d in deltas]
    return float(deltas[int(np.argmax(norms))])


def run_commutator_integral(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    rep = ExperimentReport(cfg)
    grid = _grid(cfg)
    tr = _triple(cfg)
    phi = mollifier_by_name(cfg["mollifier"])
    corpus = smooth_corpus(grid, cfg["count"], cfg.seed, cfg["width"], cfg["spacing"])
    tab = rep.table("plateau", ["flow", "datum", "narrow", "wide", "ratio", "normalised_wide"])
    worst = 0.0
    for kind in cfg["flows"]:
        amp = cfg["cellular_amplitude"] if kind == "cellular" else 1.0
        u = _flow(kind, grid, amp)
        center = cfg["center"] or _peak_delta(u, corpus[0], phi, tr.r)
        rep.value(f"center_{kind}", center)
        narrow = log_averaged_kernel(phi, center / 10, center * 10).on_grid(grid)
        wide = log_averaged_kernel(phi, center / 100, center * 100).on_grid(grid)
        gnorm = gradient_tensor_norm(u, tr.p)
        for i, rho in enumerate(corpus):
            a = lp_norm(kernel_commutator(u, rho, narrow), tr.r)
            b = lp_norm(kernel_commutator(u, rho, wide), tr.r)
            ratio = b / a
            worst = max(worst, ratio)
            tab.add(kind, i, a, b, ratio, b / (lp_norm(rho, tr.q) * gnorm))
    rep.value("worst_plateau_ratio", worst)
    rep.check("plateau", worst <= cfg["plateau_tol"], f"largest 4-decade / 2-decade ratio {worst:.4f}")

    # naive bound on the counterexample family
    ce_grid = TorusGrid(2, cfg["ce_N"], cfg["ce_period"])
    spec = CounterexampleSpec(n_max=cfg["ce_n_max"])
    try:
        rho, _ = counterexample_density(spec, ce_grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    u = _flow("periodized_shear", ce_grid, 1.0)
    cphi = make_frequency_cutoff()
    c = cfg["ce_center"]
    deltas = log_delta_grid(c / 100, c * 100, cfg["per_decade"])
    norms = np.asarray(map_ordered(lambda d: lp_norm(dl_commutator(u, rho, cphi, d), 1.0), list(deltas), workers))
    ce_tab = rep.table("naive_scan", ["delta", "norm_L1"])
    for d, n in zip(deltas, norms):
        ce_tab.add(d, n)
    logd = np.log(deltas)
    inner = (deltas >= c / 10 * (1 - 1e-12)) & (deltas <= c * 10 * (1 + 1e-12))
    naive_narrow = float(np.trapezoid(norms[inner], logd[inner]))
    naive_wide = float(np.trapezoid(norms, logd))
    growth = naive_wide / naive_narrow
    rep.value("naive_narrow", naive_narrow)
    rep.value("naive_wide", naive_wide)
    rep.value("naive_growth", growth)
    rep.check("naive_grows", growth >= cfg["growth_min"], f"naive integral grows by {growth:.4f}")
    rep.figure("naive_scan", "delta", ["norm_L1"], loglog=True, title="counterexample commutator norms")
    return rep


BESOV_DEFAULTS = {
    "N": 256, "period": 32.0, "count": 5, "width": 0.8, "spacing": 1.25, "mollifier": "gaussian",
    "flow": "cellular", "amplitude": 5.092958178940651, "p": 4.0, "q": 4.0, "r": 2.0,
    "center": 0.0, "per_decade": 16, "stability_tol": 0.1,
}


def run_besov_decay(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    rep = ExperimentReport(cfg)
    grid = _grid(cfg)
    tr = _triple(cfg)
    qi = max(tr.p, 2.0)
    phi = mollifier_by_name(cfg["mollifier"])
    corpus = smooth_corpus(grid, cfg["count"], cfg.seed, cfg["width"], cfg["spacing"])
    u = _flow(cfg["flow"], grid, cfg["amplitude"])
    center = cfg["center"] or _peak_delta(u, corpus[0], phi, tr.r)
    rep.value("center", center)
    tab = rep.table("besov", ["datum", "base", "doubled", "rel_change"])
    worst = 0.0
    for i, rho in enumerate(corpus):
        a = besov_commutator_integral(u, rho, phi, qi, (center / 10, center * 10), tr.r, cfg["per_decade"], workers=workers)
        b = besov_commutator_integral(u, rho, phi, qi, (center / 100, center * 100), tr.r, cfg["per_decade"], workers=workers)
        rel = abs(b - a) / a
        worst = max(worst, rel)
        tab.add(i, a, b, rel)
    rep.value("worst_rel_change", worst)
    rep.check("besov_integral_stable", worst <= cfg["stability_tol"], f"largest relative change {worst:.3e}")
    zero = besov_commutator_integral(_flow("zero", grid, 0.0), corpus[0], phi, qi, (center / 10, center * 10), tr.r)
    rep.check("zero_flow", zero == 0.0, "u = 0 gives 0")

    scan = commutator_scan(u, corpus[0], phi, log_delta_grid(1e-3, 1e-1, cfg["per_decade"]), tr, workers=workers)
    win = rep.table("window", ["window_low", "window_high", "min_norm"])
    for k in (0.5, 1.0, 1.5, 2.0):
        lo = 1e-1 * 10 ** (-k)
        win.add(lo, 1e-1, min_window_norm(scan, (lo, 1e-1)))
    m = min_window_norm(scan, (1e-3, 1e-1))
    rep.value("window_min", m)
    rep.value("small_delta_slope", scan.slope(1e-3, 1e-2))
    rep.check("window_min_at_smallest_delta", m <= scan.norms[0] and m == scan.norms.min(),
              "minimum over [1e-3, 1e-1] is attained at the smallest delta")
    sc = rep.table("scan", ["delta", "norm_r", "envelope_small", "envelope_large"])
    for row in zip(scan.deltas, scan.norms, scan.envelope_small, scan.envelope_large):
        sc.add(*row)
    rep.figure("scan", "delta", ["norm_r", "envelope_small"], loglog=True, title="commutator scan")
    return rep


# --------------------------------------------------------------------------- counterexamples

PART1_DEFAULTS = {
    "N": 2048, "period": 4.0, "xi_bar": (0.9, 1.2), "delta_min": 2e-3, "delta_max": 0.2, "count": 8,
    "mollifier": "cutoff", "floor_fraction": 0.5,
}


def run_counterexample_part1(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    rep = ExperimentReport(cfg)
    grid = _grid(cfg)
    phi = mollifier_by_name(cfg["mollifier"])
    xi = np.asarray(cfg["xi_bar"], dtype=float)
    _require(xi.shape == (2,), "xi_bar needs two components")
    k_hat = abs(float(shear_symbol(phi, 1.0, xi[0], xi[1])))
    _require(k_hat > 0, "K_hat(xi_bar) vanishes; pick another xi_bar")
    chi = smooth_cutoff(grid)
    ref = k_hat * lp_norm(chi, 1.0)
    u = _flow("periodized_shear", grid, 1.0)
    x1, x2 = grid.coords
    step = 2 * np.pi / grid.period
    limit = (2.0 / 3.0) * np.pi * grid.points_per_axis / grid.period
    deltas = np.geomspace(cfg["delta_min"], cfg["delta_max"], cfg["count"])

    def one(d: float) -> tuple[float, float]:
        w = np.round(xi / d / step) * step
        if np.abs(w).max() > limit:
            raise ConfigError(f"delta={d:g} needs wavenumber {np.abs(w).max():.4g} beyond the resolvable {limit:.4g}")
        rho = ScalarField(grid, np.cos(w[0] * x1 + w[1] * x2) * chi.values)
        return lp_norm(dl_commutator(u, rho, phi, d), 1.0), float(np.hypot(*w) * d)

    vals = map_ordered(one, list(deltas), workers)
    tab = rep.table("floor", ["delta", "norm_L1", "ratio_to_reference", "effective_modulus"])
    ratios = []
    for d, (n, s) in zip(deltas, vals):
        ratios.append(n / ref)
        tab.add(d, n, n / ref, s)
    floor = float(min(ratios))
    rep.value("K_hat_xi_bar", k_hat)
    rep.value("chi_L1", lp_norm(chi, 1.0))
    rep.value("measured_floor", floor)
    rep.check("no_uniform_decay", floor >= cfg["floor_fraction"],
              f"min ||R||_1 / (|K_hat| ||chi||_1) = {floor:.4f} over {deltas[0]:g}..{deltas[-1]:g}")
    rep.figure("floor", "delta", ["ratio_to_reference"], title="no uniform decay")
    return rep


PART2_DEFAULTS = {
    "period": 4.0, "xi_bar": (0.6, 0.8), "q": 1.0, "c1": 1.2, "c2": 1.8, "bands": (2, 3, 4),
    "max_direct_N": 2048, "envelope_N": 256, "nodes": 16, "growth_min": 0.2, "envelope_tol": 0.01,
    "nyquist_probe_N": 4096,
}


def _direct_size(spec: CounterexampleSpec, n: int, period: float) -> int:
    """Smallest power-of-two grid whose dealiased band holds term ``n`` and the cutoff's spread."""
    need = float(np.abs(spec.frequency(n)).max()) + 2 * np.pi * 8.0 / period * 5
    N = 8
    while (2.0 / 3.0) * np.pi * N / period < need:
        N *= 2
    return N


def run_counterexample_part2(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    rep = ExperimentReport(cfg)
    phi = make_frequency_cutoff()
    try:
        spec = CounterexampleSpec(tuple(cfg["xi_bar"]), cfg["q"], max(cfg["bands"]), cfg["c1"], cfg["c2"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    bands = sorted(cfg["bands"])
    _require(2 * spec.delta(bands[0]) * spec.c1 <= 1.0, "first band must satisfy 2 delta_n c1 <= 1")
    const = shear_decay_constant(phi)
    eps = band_epsilon(phi, spec)
    rep.value("C_tail", const)
    rep.value("epsilon", eps)
    env_grid = TorusGrid(2, cfg["envelope_N"], cfg["period"])
    tab = rep.table("bands", ["n", "method", "grid_N", "contribution", "envelope_estimate", "lower_bound", "running_sum"])
    total = 0.0
    previous = None
    for n in bands:
        N = _direct_size(spec, n, cfg["period"])
        env = band_contribution_envelope(spec, n, env_grid, phi, cfg["nodes"])
        if N <= cfg["max_direct_N"]:
            val = band_contribution(spec, n, TorusGrid(2, N, cfg["period"]), phi, cfg["nodes"], workers)
            method = "direct"
            rel = abs(env - val) / val
            rep.value(f"envelope_rel_error_n{n}", rel)
            rep.check(f"envelope_matches_direct_n{n}", rel <= cfg["envelope_tol"], f"relative gap {rel:.3e}")
        else:
            val, method, N = env, "envelope", cfg["envelope_N"]
        lb = band_lower_bound(phi, spec, n, const)
        total += val
        tab.add(n, method, N, val, env, lb, total)
        rep.check(f"lower_bound_n{n}", val >= lb, f"{val:.4g} >= {lb:.4g}")
        if previous is not None:
            growth = total / previous - 1.0
            rep.value(f"running_sum_growth_n{n}", growth)
            rep.check(f"running_sum_grows_n{n}", growth >= cfg["growth_min"], f"increase {100 * growth:.1f}%")
        previous = total
    try:
        counterexample_density(spec, TorusGrid(2, cfg["nyquist_probe_N"], cfg["period"]))
        rep.value("nyquist_probe", "accepted")
    except ValueError as exc:
        rep.value("nyquist_probe", str(exc))
    rep.figure("bands", "n", ["contribution", "running_sum"], title="band contributions")
    return rep


# --------------------------------------------------------------------------- suite

SUITE_PARTS = {
    "integral": ("commutator_integral", COMMUTATOR_DEFAULTS, run_commutator_integral),
    "besov": ("besov_decay", BESOV_DEFAULTS, run_besov_decay),
    "part1": ("counterexample_part1", PART1_DEFAULTS, run_counterexample_part1),
    "part2": ("counterexample_part2", PART2_DEFAULTS, run_counterexample_part2),
}
SUITE_DEFAULTS = {f"{tag}.{k}": v for tag, (_, d, _) in SUITE_PARTS.items() for k, v in d.items()}


def run_commutator_suite(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """All commutator experiments in one report; keys, checks and tables carry a part prefix."""
    rep = ExperimentReport(cfg)
    params = cfg.as_dict()
    for tag, (name, defaults, fn) in SUITE_PARTS.items():
        sub_cfg = ExperimentConfig.build(name, defaults, {k: params[f"{tag}.{k}"] for k in defaults}, cfg.seed)
        sub = fn(sub_cfg, workers)
        rep.values += [(f"{tag}.{k}", v) for k, v in sub.values]
        rep.checks += [type(c)(f"{tag}.{c.name}", c.passed, c.detail) for c in sub.checks]
        rep.fits += sub.fits
        rep.tables.update({f"{tag}_{k}": t for k, t in sub.tables.items()})
        rep.figures += [(f"{tag}_{t}", title, x, ys, ll) for t, title, x, ys, ll in sub.figures]
    return rep


# --------------------------------------------------------------------------- registry

EXPERIMENTS: dict[str, tuple[Mapping[str, Any], Callable[[ExperimentConfig, int], ExperimentReport]]] = {
    "stability_cascade": (STABILITY_DEFAULTS, run_stability_cascade),
    "mixing": (MIXING_DEFAULTS, run_mixing),
    "field_perturbation": (PERTURBATION_DEFAULTS, run_field_perturbation),
    "vanishing_diffusion": (DIFFUSION_DEFAULTS, run_vanishing_diffusion),
    "regularity": (REGULARITY_DEFAULTS, run_regularity),
    "commutator_integral": (COMMUTATOR_DEFAULTS, run_commutator_integral),
    "besov_decay": (BESOV_DEFAULTS, run_besov_decay),
    "counterexample_part1": (PART1_DEFAULTS, run_counterexample_part1),
    "counterexample_part2": (PART2_DEFAULTS, run_counterexample_part2),
    "commutator_suite": (SUITE_DEFAULTS, run_commutator_suite),
}

ALIASES = {name.replace("_", "-"): name for name in EXPERIMENTS}


def make_config(name: str, values: Mapping[str, Any] | None = None, seed: int = 0) -> ExperimentConfig:
    name = ALIASES.get(name, name)
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}")
    defaults, _ = EXPERIMENTS[name]
    return ExperimentConfig.build(name, defaults, dict(values or {}), seed)


def run_experiment(name: str, values: Mapping[str, Any] | None = None, seed: int = 0, workers: int = 1) -> ExperimentReport:
    """Validate the configuration, then run the experiment."""
    cfg = make_config(name, values, seed)
    _, fn = EXPERIMENTS[cfg.experiment]
    return fn(cfg, workers)
