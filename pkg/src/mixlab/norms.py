"""Negative Sobolev, Besov and log-derivative norms."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .kernels import LittlewoodPaleyFamily, Mollifier, make_frequency_cutoff, rescale
from .spectral import ExponentTriple, ScalarField, apply_spectral, lp_norm

__all__ = [
    "SobolevDualSpec",
    "sobolev_dual_norm",
    "BesovSpec",
    "besov_norm",
    "besov_blocks",
    "log_derivative_norm",
    "mixing_ratio",
    "mixing_scale",
    "CoverageWarning",
]

MEAN_TOL = 1e-12


class CoverageWarning(UserWarning):
    """The Littlewood-Paley range misses part of the field's spectrum."""


@dataclass(frozen=True)
class SobolevDualSpec:
    """Dual norm of ``(1/L) ||phi||_{r'} + ||grad phi||_{r'}``.

    r : exponent of the primal norm.
    L : length scale (``None`` means the torus period, ``inf`` is allowed).
    mode : ``exact_r2`` (only r = 2) or ``surrogate`` (mollify-and-scale bound).
    per_decade : resolution of the surrogate's delta search.
    """

    r: float = 2.0
    L: float | None = None
    mode: str = "exact_r2"
    per_decade: int = 16

    def __post_init__(self) -> None:
        if self.mode not in ("exact_r2", "surrogate"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "exact_r2" and self.r != 2.0:
            raise ValueError("exact_r2 mode requires r = 2")
        if not self.r >= 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if self.L is not None and not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def label(self) -> str:
        return f"W^-1,{self.r:g} ({'exact' if self.mode == 'exact_r2' else 'surrogate'})"


def _check_mean(f: ScalarField) -> None:
    scale = max(float(np.abs(f.values).max()), 1e-300)
    if abs(f.mean()) > MEAN_TOL * scale:
        raise ValueError(f"L = inf needs mean-zero data (mean {f.mean():.3e})")


def sobolev_dual_norm(f: ScalarField, spec: SobolevDualSpec = SobolevDualSpec()) -> float:
    grid = f.grid
    L = grid.period if spec.L is None else float(spec.L)
    if math.isinf(L):
        _check_mean(f)
    if spec.mode == "exact_r2":
        k2 = np.broadcast_to(grid.wavenumber_modulus**2, grid.spectral_shape)
        if math.isinf(L):
            weight = np.where(k2 > 0, 1.0 / np.sqrt(np.where(k2 > 0, k2, 1.0)), 0.0)
        else:
            weight = 1.0 / np.sqrt(1.0 / L**2 + k2)
        return lp_norm(apply_spectral(f, weight), 2.0)
    return _surrogate(f, L, spec)


def _surrogate(f: ScalarField, L: float, spec: SobolevDualSpec, phi: Mollifier | None = None) -> float:
    """``min_delta (L ||f * phi_delta||_r + delta ||f||_r)`` over a log grid in ``(0, L]``."""
    grid = f.grid
    phi = make_frequency_cutoff() if phi is None else phi
    full = lp_norm(f, spec.r)
    if full == 0.0:
        return 0.0
    hi = L if math.isfinite(L) else grid.period
    lo = grid.spacing / 8.0
    count = max(2, int(math.ceil(spec.per_decade * math.log10(hi / lo))) + 1)
    best = math.inf
    for d in np.geomspace(lo, hi, count):
        low = lp_norm(rescale(phi, d).apply(f), spec.r)
        first = 0.0 if low <= 1e-14 * full else L * low
        best = min(best, first + d * full)
    return float(best)


@dataclass(frozen=True)
class BesovSpec:
    """Homogeneous Besov norm ``B^s_{p,q}``; ``family=None`` covers the grid."""

    s: float = 0.0
    p: float = 2.0
    q: float = 2.0
    family: LittlewoodPaleyFamily | None = None

    def __post_init__(self) -> None:
        if not (self.p >= 1 and self.q >= 1):
            raise ValueError("Besov exponents must be >= 1")


def besov_blocks(f: ScalarField, spec: BesovSpec) -> dict[int, float]:
    """``n -> ||psi_n * f||_p`` over the family's range."""
    grid = f.grid
    family = spec.family or LittlewoodPaleyFamily.covering(grid)
    coeffs = np.abs(f.spectrum)
    occupied = (coeffs > 1e-14 * max(float(coeffs.max()), 1e-300)) & (grid.wavenumber_modulus > 0)
    if occupied.any():
        s = np.broadcast_to(grid.wavenumber_modulus, grid.spectral_shape)[occupied]
        if not family.covers(float(s.min()), float(s.max())):
            warnings.warn(
                f"blocks {family.n_min}..{family.n_max} do not cover |xi| in [{s.min():.4g}, {s.max():.4g}]",
                CoverageWarning,
                stacklevel=3,
            )
    return {n: lp_norm(family.block(n).apply(f), spec.p) for n in family.indices}


def besov_norm(f: ScalarField, spec: BesovSpec = BesovSpec()) -> float:
    """``(sum_n (2^(n s) ||psi_n * f||_p)^q)^(1/q)``, or the max for ``q = inf``."""
    blocks = besov_blocks(f, spec)
    terms = np.array([2.0 ** (n * spec.s) * v for n, v in blocks.items()])
    if math.isinf(spec.q):
        return float(terms.max(initial=0.0))
    return float(np.sum(terms**spec.q) ** (1.0 / spec.q))


def log_derivative_norm(f: ScalarField, r: float) -> float:
    """``|| log(1 - Laplacian) f ||_r``."""
    grid = f.grid
    sym = np.broadcast_to(np.log1p(grid.wavenumber_modulus**2), grid.spectral_shape)
    return lp_norm(apply_spectral(f, sym), r)


def mixing_ratio(rho0: ScalarField, triple: ExponentTriple) -> float:
    """``||rho0||_q / ||rho0||_r``, invariant under transport by divergence-free flows."""
    den = lp_norm(rho0, triple.r)
    if den == 0.0:
        raise ValueError("mixing ratio of the zero field is undefined")
    return lp_norm(rho0, triple.q) / den


def mixing_scale(rho0: ScalarField, phi: Mollifier, r: float, per_decade: int = 32, iterations: int = 40) -> float:
    """Largest ``delta`` with ``||rho0 * phi_delta||_r >= ||rho0||_r / 2``.

    Scans a log grid from a tenth of the grid spacing to the period, then bisects
    in ``log delta`` between the last admissible and first rejected point.
    """
    grid = rho0.grid
    target = 0.5 * lp_norm(rho0, r)
    if target == 0.0:
        raise ValueError("mixing scale of the zero field is undefined")

    def ok(d: float) -> bool:
        return lp_norm(rescale(phi, d).apply(rho0), r) >= target

    lo, hi = grid.spacing / 10.0, grid.period
    count = int(math.ceil(per_decade * math.log10(hi / lo))) + 1
    deltas = np.geomspace(lo, hi, count)
    if not ok(float(deltas[0])):
        raise ValueError("data is already mixed at the grid scale")
    good = float(deltas[0])
    bad = None
    for d in deltas[1:]:
        if ok(float(d)):
            good = float(d)
        else:
            bad = float(d)
            break
    if bad is None:
        return good
    for _ in range(iterations):
        mid = math.sqrt(good * bad)
        if ok(mid):
            good = mid
        else:
            bad = mid
    return good
