"""Commutators of mollification with transport, their scans and integrals.

``R = u . (rho * grad K) - div((u rho) * K)``; with ``K = phi_delta`` this is
the DiPerna-Lions commutator ``R_delta``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .flows import FlowSpec, make_flow
from .kernels import KernelSpec, Mollifier, log_averaged_kernel, rescale
from .parallel import map_ordered
from .spectral import ExponentTriple, ScalarField, TorusGrid, VelocityField, lp_norm

__all__ = [
    "kernel_commutator",
    "dl_commutator",
    "integrated_commutator",
    "shear_symbol",
    "shear_oracle",
    "CommutatorScan",
    "commutator_scan",
    "log_delta_grid",
    "besov_commutator_integral",
    "min_window_norm",
    "CounterexampleSpec",
    "smooth_cutoff",
    "counterexample_density",
    "band_contribution",
    "band_contribution_envelope",
    "band_lower_bound",
    "band_epsilon",
    "shear_decay_constant",
]


def _components(u: VelocityField | Sequence[np.ndarray], t: float) -> tuple[np.ndarray, ...]:
    return u.at(t) if isinstance(u, VelocityField) else tuple(u)


def kernel_commutator(
    u: VelocityField,
    rho: ScalarField,
    K: KernelSpec | np.ndarray,
    t: float = 0.0,
    dealias_fraction: float = 2.0 / 3.0,
) -> ScalarField:
    """Commutator of transport by ``u`` with convolution by ``K`` (symbol or spec).

    Products are dealiased with the given fraction.
    """
    grid = rho.grid
    if isinstance(u, VelocityField) and not grid.compatible(u.grid):
        raise ValueError("velocity and scalar live on incompatible grids")
    comps = _components(u, t)
    if len(comps) != grid.dim:
        raise ValueError("velocity has the wrong number of components")
    sym = K.on_grid(grid) if isinstance(K, KernelSpec) else np.broadcast_to(K, grid.spectral_shape)
    mask = grid.dealias_mask(dealias_fraction) & ~grid.nyquist_mask
    ks = grid.wavenumbers
    smoothed = rho.spectrum * sym
    first = np.zeros(grid.shape)
    second = np.zeros(grid.spectral_shape, dtype=complex)
    for k, c in zip(ks, comps):
        first += c * grid.inverse(1j * k * smoothed * mask)
        second += 1j * k * grid.forward(c * rho.values) * mask * sym
    out = grid.forward(first) * mask - second
    return ScalarField.from_spectrum(grid, out)


def dl_commutator(u: VelocityField, rho: ScalarField, phi: Mollifier, delta: float, t: float = 0.0) -> ScalarField:
    """``R_delta = u . grad(rho * phi_delta) - div((u rho) * phi_delta)``."""
    return kernel_commutator(u, rho, rescale(phi, delta), t)


def _log_panels(d1: float, d2: float, per_decade: int, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights in ``log delta``."""
    a, b = math.log(d1), math.log(d2)
    panels = max(1, int(math.ceil(per_decade * (b - a) / math.log(10.0))))
    x, w = leggauss(nodes)
    edges = np.linspace(a, b, panels + 1)
    taus, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        taus.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * w)
    return np.exp(np.concatenate(taus)), np.concatenate(weights)


def integrated_commutator(
    u: VelocityField,
    rho: ScalarField,
    phi: Mollifier,
    delta1: float,
    delta2: float,
    method: str = "kernel",
    t: float = 0.0,
    panels_per_decade: int = 4,
    nodes_per_panel: int = 16,
    tol: float = 1e-10,
    max_panels_per_decade: int = 64,
) -> ScalarField:
    """``int_{delta1}^{delta2} R_delta d delta / delta``.

    method="kernel" uses the log-averaged kernel in a single commutator;
    method="quadrature" sums commutators at composite Gauss-Legendre nodes in
    ``log delta``, doubling the panel count until the relative L2 change is
    below ``tol`` (``tol=0`` keeps the initial panels).
    """
    if not (delta1 > 0 and delta2 > delta1):
        raise ValueError(f"need 0 < delta1 < delta2, got {delta1}, {delta2}")
    if method == "kernel":
        return kernel_commutator(u, rho, log_averaged_kernel(phi, delta1, delta2), t)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    def summed(per_decade: int) -> np.ndarray:
        deltas, weights = _log_panels(delta1, delta2, per_decade, nodes_per_panel)
        acc = np.zeros(rho.grid.shape)
        for d, w in zip(deltas, weights):
            acc += w * dl_commutator(u, rho, phi, d, t).values
        return acc

    # panels double until successive sums agree to ``tol`` in L2
    current = summed(panels_per_decade)
    per_decade = panels_per_decade
    while tol > 0 and per_decade < max_panels_per_decade:
        per_decade *= 2
        refined = summed(per_decade)
        scale = float(np.sqrt(np.mean(refined**2)))
        change = float(np.sqrt(np.mean((refined - current) ** 2)))
        current = refined
        if change <= tol * scale or scale == 0.0:
            break
    return ScalarField(rho.grid, current)


def shear_symbol(phi: Mollifier, delta: float, k1: np.ndarray, k2: np.ndarray) -> np.ndarray:
    """``K_hat(delta xi)`` with ``K_hat(xi) = -xi_1 d phi_hat / d xi_2``."""
    z1, z2 = delta * np.asarray(k1, dtype=float), delta * np.asarray(k2, dtype=float)
    s = np.sqrt(z1 * z1 + z2 * z2)
    safe = np.where(s > 0, s, 1.0)
    return np.where(s > 0, -z1 * z2 * phi.derivative(s) / safe, 0.0)


def shear_oracle(rho: ScalarField, phi: Mollifier, delta: float, support_tol: float = 1e-12) -> ScalarField:
    """Commutator of the linear shear ``(x2, 0)`` in closed form, ``rho * K_delta``.

    Only valid for data supported in ``|x| <= period / 4`` (torus-centred), where
    the periodised shear is exactly linear.
    """
    grid = rho.grid
    if grid.dim != 2:
        raise ValueError("the shear oracle is two-dimensional")
    r = np.sqrt(sum(c * c for c in grid.centered_coords))
    outside = np.broadcast_to(r > grid.period / 4.0, grid.shape)
    scale = float(np.abs(rho.values).max())
    leak = float(np.abs(rho.values[outside]).max()) if outside.any() else 0.0
    if scale > 0 and leak > support_tol * scale:
        raise ValueError(f"data not supported in |x| <= period/4 (relative leak {leak / scale:.2e})")
    k1, k2 = grid.wavenumbers
    sym = np.broadcast_to(shear_symbol(phi, delta, k1, k2), grid.spectral_shape)
    return ScalarField.from_spectrum(grid, rho.spectrum * sym)


def shear_decay_constant(phi: Mollifier, s_max: float = 50.0, samples: int = 200001) -> float:
    """``C`` with ``|K_hat(t xi)| <= C min(t, 1/t)`` for unit ``xi``.

    Uses ``sup |phi_hat'|`` and ``sup s^2 |phi_hat'(s)|`` sampled on ``[0, s_max]``.
    """
    s = np.linspace(0.0, s_max, samples)
    d = np.abs(phi.derivative(s))
    return float(max(d.max(), (s * s * d).max()))


@dataclass(frozen=True)
class CommutatorScan:
    """Norms ``||R_delta||_r`` on an increasing ``delta`` grid."""

    deltas: np.ndarray
    norms: np.ndarray
    r: float
    envelope_small: np.ndarray
    envelope_large: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        d = np.asarray(self.deltas, dtype=float)
        n = np.asarray(self.norms, dtype=float)
        if d.ndim != 1 or d.size == 0 or np.any(np.diff(d) <= 0):
            raise ValueError("delta grid must be non-empty and strictly increasing")
        if n.shape != d.shape or np.any(n < 0):
            raise ValueError("norms must be non-negative and match the delta grid")
        object.__setattr__(self, "deltas", d)
        object.__setattr__(self, "norms", n)
        object.__setattr__(self, "envelope_small", np.asarray(self.envelope_small, dtype=float))
        object.__setattr__(self, "envelope_large", np.asarray(self.envelope_large, dtype=float))

    def slope(self, lo: float, hi: float) -> float:
        """Least-squares log-log slope of the norms over ``[lo, hi]``."""
        sel = (self.deltas >= lo * (1 - 1e-12)) & (self.deltas <= hi * (1 + 1e-12))
        x, y = np.log(self.deltas[sel]), np.log(self.norms[sel])
        return float(np.polyfit(x, y, 1)[0])

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["delta", "norm_r", "envelope_small", "envelope_large"])
            for row in zip(self.deltas, self.norms, self.envelope_small, self.envelope_large):
                w.writerow([repr(float(v)) for v in row])


def log_delta_grid(lo: float, hi: float, per_decade: int = 16) -> np.ndarray:
    if not (0 < lo < hi):
        raise ValueError(f"need 0 < lo < hi, got {lo}, {hi}")
    count = max(2, int(round(per_decade * math.log10(hi / lo))) + 1)
    return np.geomspace(lo, hi, count)


def _hessian_norm(u: VelocityField, t: float, p: float) -> float:
    grid = u.grid
    total = np.zeros(grid.shape)
    for c in u.at(t):
        spec = grid.forward(c)
        for ka in grid.wavenumbers:
            for kb in grid.wavenumbers:
                total += grid.inverse(-ka * kb * spec) ** 2
    return lp_norm(ScalarField(grid, np.sqrt(total)), p)


def _velocity_norm(u: VelocityField, t: float, p: float) -> float:
    grid = u.grid
    mag = np.sqrt(sum(c * c for c in u.at(t)))
    return lp_norm(ScalarField(grid, mag), p)


def commutator_scan(
    u: VelocityField,
    rho: ScalarField,
    phi: Mollifier,
    deltas: Sequence[float],
    triple: ExponentTriple,
    t: float = 0.0,
    workers: int = 1,
    metadata: dict | None = None,
) -> CommutatorScan:
    """``||R_delta||_r`` at each delta, with the two reference envelopes.

    ``envelope_small = delta ||rho||_q ||grad^2 u||_p`` and
    ``envelope_large = ||rho||_q ||u||_p / delta`` (no constants).
    """
    deltas = np.asarray(deltas, dtype=float)
    norms = map_ordered(lambda d: lp_norm(dl_commutator(u, rho, phi, d, t), triple.r), list(deltas), workers)
    rq = lp_norm(rho, triple.q)
    small = deltas * rq * _hessian_norm(u, t, triple.p)
    large = rq * _velocity_norm(u, t, triple.p) / deltas
    meta = {"p": triple.p, "q": triple.q, "r": triple.r, "mollifier": phi.name}
    meta.update(metadata or {})
    return CommutatorScan(deltas, np.asarray(norms), triple.r, small, large, meta)


def besov_commutator_integral(
    u: VelocityField,
    rho: ScalarField,
    phi: Mollifier,
    q: float,
    delta_range: tuple[float, float],
    r: float,
    per_decade: int = 16,
    t: float = 0.0,
    workers: int = 1,
) -> float:
    """``(int ||R_delta||_r^q d delta / delta)^(1/q)`` by the trapezoid rule in ``log delta``."""
    lo, hi = delta_range
    if not (lo > 0 and hi > lo):
        raise ValueError(f"empty delta range {delta_range}")
    if per_decade < 16:
        raise ValueError("scan resolution must be at least 16 points per decade")
    deltas = log_delta_grid(lo, hi, per_decade)
    norms = np.asarray(map_ordered(lambda d: lp_norm(dl_commutator(u, rho, phi, d, t), r), list(deltas), workers))
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    val = trapezoid(norms**q, np.log(deltas))
    return float(val ** (1.0 / q))


def min_window_norm(scan: CommutatorScan, window: tuple[float, float]) -> float:
    """Smallest scanned norm with ``delta`` inside the closed window."""
    lo, hi = window
    if lo > hi:
        raise ValueError("window lower end exceeds upper end")
    tol = 1e-12
    sel = (scan.deltas >= lo * (1 - tol)) & (scan.deltas <= hi * (1 + tol))
    if not sel.any():
        raise ValueError(f"window {window} does not meet the scan range [{scan.deltas[0]:g}, {scan.deltas[-1]:g}]")
    return float(scan.norms[sel].min())


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def smooth_cutoff(grid: TorusGrid) -> ScalarField:
    """Bump equal to 1 on ``|x| <= 3 period/16`` and 0 outside ``|x| <= period/4``."""
    lam = grid.period
    r = np.sqrt(sum(c * c for c in grid.centered_coords))
    inner, outer = 3.0 * lam / 16.0, lam / 4.0
    return ScalarField(grid, np.broadcast_to(1.0 - _smoothstep((r - inner) / (outer - inner)), grid.shape))


@dataclass(frozen=True)
class CounterexampleSpec:
    """Lacunary sum ``sum_n a_n cos(delta_n^-1 xi_bar . x)`` times a cutoff.

    ``delta_n = 2^(-n^2)`` and ``a_n = n^(-1/q)``.
    """

    xi_bar: tuple[float, float] = (0.6, 0.8)
    q: float = 1.0
    n_max: int = 3
    c1: float = 1.2
    c2: float = 1.8
    use_cutoff: bool = True
    amplitudes: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        xb = np.asarray(self.xi_bar, dtype=float)
        if xb.shape != (2,) or abs(float(np.hypot(*xb)) - 1.0) > 1e-12:
            raise ValueError("xi_bar must be a unit 2-vector")
        if not 1.0 <= self.q < 2.0:
            raise ValueError(f"q must lie in [1, 2), got {self.q}")
        if self.n_max < 1:
            raise ValueError("n_max must be positive")
        if not (0 < self.c1 < self.c2 < 2 * self.c1):
            raise ValueError("need 0 < c1 < c2 < 2 c1")
        if self.amplitudes is not None and len(self.amplitudes) < self.n_max:
            raise ValueError("explicit amplitudes must cover n_max terms")

    @staticmethod
    def delta(n: int) -> float:
        return 2.0 ** (-(n * n))

    def amplitude(self, n: int) -> float:
        if self.amplitudes is not None:
            return float(self.amplitudes[n - 1])
        return float(n ** (-1.0 / self.q))

    def frequency(self, n: int) -> np.ndarray:
        return np.asarray(self.xi_bar) / self.delta(n)


def _nearest_mode(grid: TorusGrid, omega: np.ndarray) -> np.ndarray:
    step = 2.0 * np.pi / grid.period
    return np.round(np.asarray(omega) / step) * step


def counterexample_density(
    spec: CounterexampleSpec, grid: TorusGrid, band_fraction: float = 2.0 / 3.0
) -> tuple[ScalarField, list[tuple[float, float]]]:
    """Sampled density and the grid wavenumber used for each term.

    Raises when the highest frequency exceeds ``band_fraction`` of the Nyquist
    wavenumber on either axis, reporting the largest admissible ``n_max``.
    """
    if grid.dim != 2:
        raise ValueError("the counterexample lives in two dimensions")
    limit = band_fraction * np.pi * grid.points_per_axis / grid.period
    admissible = 0
    for n in range(1, spec.n_max + 1):
        if np.abs(_nearest_mode(grid, spec.frequency(n))).max() <= limit:
            admissible = n
        else:
            break
    if admissible < spec.n_max:
        raise ValueError(f"n_max={spec.n_max} exceeds the resolvable band; largest admissible n_max is {admissible}")
    x1, x2 = grid.coords
    vals = np.zeros(grid.shape)
    used = []
    for n in range(1, spec.n_max + 1):
        w = _nearest_mode(grid, spec.frequency(n))
        used.append((float(w[0]), float(w[1])))
        vals = vals + spec.amplitude(n) * np.cos(w[0] * x1 + w[1] * x2)
    if spec.use_cutoff:
        vals = vals * smooth_cutoff(grid).values
    return ScalarField(grid, vals), used


def band_epsilon(phi: Mollifier, spec: CounterexampleSpec, samples: int = 2001) -> float:
    """``inf_{s in [c1, c2]} |K_hat(s xi_bar)|``."""
    s = np.linspace(spec.c1, spec.c2, samples)
    k1, k2 = s * spec.xi_bar[0], s * spec.xi_bar[1]
    return float(np.abs(shear_symbol(phi, 1.0, k1, k2)).min())


def band_lower_bound(phi: Mollifier, spec: CounterexampleSpec, n: int, constant: float | None = None) -> float:
    """``(a_n^q eps^q / 2 - (C (c1 + 1/c2) 4^(1-n))^q) log(c2/c1)``."""
    c = shear_decay_constant(phi) if constant is None else constant
    eps = band_epsilon(phi, spec)
    q = spec.q
    tail = (c * (spec.c1 + 1.0 / spec.c2) * 4.0 ** (1 - n)) ** q
    return (0.5 * spec.amplitude(n) ** q * eps**q - tail) * math.log(spec.c2 / spec.c1)


def band_contribution(
    spec: CounterexampleSpec,
    n: int,
    grid: TorusGrid,
    phi: Mollifier,
    nodes: int = 16,
    workers: int = 1,
) -> float:
    """``int_{c1 delta_n}^{c2 delta_n} ||R_delta(u, rho)||_1^q d delta / delta`` computed directly.

    ``rho`` keeps the terms ``1..n`` (higher terms are invisible in this band for a
    frequency cutoff) and ``u`` is the periodised shear on ``grid``.
    """
    sub = CounterexampleSpec(spec.xi_bar, spec.q, n, spec.c1, spec.c2, spec.use_cutoff, spec.amplitudes)
    rho, _ = counterexample_density(sub, grid)
    u = make_flow(FlowSpec("periodized_shear"), grid)
    d_n = spec.delta(n)
    deltas, weights = _log_panels(spec.c1 * d_n, spec.c2 * d_n, 1, nodes)
    norms = map_ordered(lambda d: lp_norm(dl_commutator(u, rho, phi, d), 1.0), list(deltas), workers)
    return float(np.dot(weights, np.asarray(norms) ** spec.q))


def band_contribution_envelope(
    spec: CounterexampleSpec,
    n: int,
    grid: TorusGrid,
    phi: Mollifier,
    nodes: int = 16,
) -> float:
    """Band integral for a single term via its slowly varying envelope.

    With ``rho = a_n Re(exp(i w.x) chi)`` the shear commutator equals
    ``a_n Re(exp(i w.x) g)`` where ``g_hat(eta) = chi_hat(eta) K_hat(delta(w + eta))``.
    For ``|w|`` far above the bandwidth of ``g`` the phase equidistributes and
    ``||R||_1 = (2/pi) a_n ||g||_1`` up to an oscillatory remainder.
    """
    chi = smooth_cutoff(grid) if spec.use_cutoff else grid.field(lambda *x: np.ones(grid.shape))
    w = spec.frequency(n)
    k1, k2 = grid.wavenumbers
    full1 = np.fft.fftfreq(grid.points_per_axis, d=grid.period / (2 * np.pi * grid.points_per_axis))
    e1, e2 = np.meshgrid(full1, full1, indexing="ij", sparse=True)
    chi_hat = np.fft.fftn(chi.values)
    d_n = spec.delta(n)
    deltas, weights = _log_panels(spec.c1 * d_n, spec.c2 * d_n, 1, nodes)
    total = 0.0
    for d, wt in zip(deltas, weights):
        sym = shear_symbol(phi, d, w[0] + e1, w[1] + e2)
        g = np.fft.ifftn(chi_hat * sym)
        l1 = (2.0 / np.pi) * spec.amplitude(n) * float(np.abs(g).mean()) * grid.volume
        total += wt * l1**spec.q
    return total
