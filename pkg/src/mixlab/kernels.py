"""Mollifiers, frequency cutoffs, averaged kernels and Calderón-Zygmund estimates.

Every kernel is described by its Fourier symbol. Radial kernels expose a
profile ``s -> K(s)`` of ``s = |xi|`` and its analytic derivative, which is
what the derived kernels ``K'_ij`` (symbol ``-xi_i dK/dxi_j``) are built from.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .parallel import map_ordered
from .spectral import ScalarField, TorusGrid

__all__ = [
    "Mollifier",
    "KernelSpec",
    "CzReport",
    "LittlewoodPaleyFamily",
    "make_frequency_cutoff",
    "make_gaussian_mollifier",
    "cutoff_profile",
    "cutoff_profile_derivative",
    "cutoff_complement",
    "annulus_profile",
    "rescale",
    "log_averaged_kernel",
    "log_laplacian",
    "custom_kernel",
    "reproduction_identity_check",
    "cz_norm_estimate",
    "cz_derived_kernels",
    "cz_sweep",
    "make_lp_family",
    "physical_kernel",
    "write_symbol_csv",
    "write_cz_csv",
]

Profile = Callable[[np.ndarray], np.ndarray]

QUAD_TOL = 1e-10
QUAD_START = 64
QUAD_MAX = 16384


def cutoff_profile(s: np.ndarray) -> np.ndarray:
    """Smooth step: 1 on ``[0, 1]``, 0 on ``[2, inf)``, ``g(2-s)/(g(2-s)+g(s-1))`` between.

    Here ``g(t) = exp(-1/t)`` for ``t > 0``.
    """
    s = np.asarray(s, dtype=float)
    shape = s.shape
    s = s.reshape(-1)
    out = (s <= 1.0).astype(float)
    mid = (s > 1.0) & (s < 2.0)
    if mid.any():
        t = s[mid]
        a = np.exp(-1.0 / (2.0 - t))
        b = np.exp(-1.0 / (t - 1.0))
        out[mid] = a / (a + b)
    return out.reshape(shape)


def cutoff_complement(s: np.ndarray) -> np.ndarray:
    """``1 - cutoff_profile(s)`` without cancellation near ``s = 1``."""
    s = np.asarray(s, dtype=float)
    shape = s.shape
    s = s.reshape(-1)
    out = (s >= 2.0).astype(float)
    mid = (s > 1.0) & (s < 2.0)
    if mid.any():
        t = s[mid]
        a = np.exp(-1.0 / (2.0 - t))
        b = np.exp(-1.0 / (t - 1.0))
        out[mid] = b / (a + b)
    return out.reshape(shape)


def annulus_profile(s: np.ndarray) -> np.ndarray:
    """``chi(s) = cutoff_profile(s) - cutoff_profile(2 s)``, evaluated without cancellation."""
    s = np.asarray(s, dtype=float)
    return np.where(s <= 1.0, cutoff_complement(2.0 * s), cutoff_profile(s))


def cutoff_profile_derivative(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    shape = s.shape
    s = s.reshape(-1)
    out = np.zeros(s.shape)
    mid = (s > 1.0) & (s < 2.0)
    if mid.any():
        t = s[mid]
        u, v = 2.0 - t, t - 1.0
        a, b = np.exp(-1.0 / u), np.exp(-1.0 / v)
        # (a' b - a b') / (a + b)^2 with a' = -a/u^2, b' = b/v^2
        out[mid] = -(a * b) * (1.0 / u**2 + 1.0 / v**2) / (a + b) ** 2
    return out.reshape(shape)


@dataclass(frozen=True)
class Mollifier:
    """Radial mollifier given by its Fourier profile ``phi_hat(|xi|)``."""

    name: str
    profile: Profile = field(repr=False)
    derivative: Profile = field(repr=False)
    is_frequency_cutoff: bool = False
    is_positive: bool = False

    def __post_init__(self) -> None:
        at0 = float(np.asarray(self.profile(np.array(0.0))))
        if abs(at0 - 1.0) > 1e-14:
            raise ValueError(f"mollifier profile must equal 1 at the origin, got {at0}")

    def __call__(self, s: np.ndarray) -> np.ndarray:
        return self.profile(s)


def make_frequency_cutoff() -> Mollifier:
    return Mollifier(
        "frequency_cutoff",
        cutoff_profile,
        cutoff_profile_derivative,
        is_frequency_cutoff=True,
        is_positive=False,
    )


def make_gaussian_mollifier() -> Mollifier:
    """Gaussian ``phi_hat(s) = exp(-s^2/2)``; its physical kernel is positive."""
    return Mollifier(
        "gaussian",
        lambda s: np.exp(-0.5 * np.asarray(s, dtype=float) ** 2),
        lambda s: -np.asarray(s, dtype=float) * np.exp(-0.5 * np.asarray(s, dtype=float) ** 2),
        is_frequency_cutoff=False,
        is_positive=True,
    )


def _modulus(ks: Sequence[np.ndarray]) -> np.ndarray:
    return np.sqrt(sum(np.asarray(k, dtype=float) ** 2 for k in ks))


def _log_average(phi: Mollifier, d1: float, d2: float, s: np.ndarray, nodes: int) -> np.ndarray:
    """``int_{d1}^{d2} phi(delta s) d delta / delta`` by Gauss-Legendre in ``log delta``."""
    x, w = leggauss(nodes)
    a, b = math.log(d1), math.log(d2)
    tau = 0.5 * (b - a) * x + 0.5 * (b + a)
    w = 0.5 * (b - a) * w
    deltas = np.exp(tau)
    out = np.empty(s.shape)
    flat_s = s.ravel()
    flat_out = out.ravel()
    chunk = max(1, 2_000_000 // nodes)
    for i in range(0, flat_s.size, chunk):
        block = flat_s[i : i + chunk]
        flat_out[i : i + chunk] = phi.profile(np.outer(block, deltas)) @ w
    return out


def _adaptive_log_average(phi: Mollifier, d1: float, d2: float, s: np.ndarray, start: int) -> tuple[np.ndarray, int]:
    n = start
    prev = _log_average(phi, d1, d2, s, n)
    while n < QUAD_MAX:
        n *= 2
        cur = _log_average(phi, d1, d2, s, n)
        scale = max(float(np.abs(cur).max()), 1e-300)
        if float(np.abs(cur - prev).max()) <= QUAD_TOL * scale:
            return cur, n
        prev = cur
    return prev, n


@dataclass(frozen=True)
class KernelSpec:
    """Fourier-side description of a convolution kernel.

    ``kind`` is one of ``mollifier_at_scale``, ``log_averaged``,
    ``log_laplacian``, ``lp_block``, ``derived`` or ``custom``.
    """

    kind: str
    mollifier: Mollifier | None = None
    delta: float | None = None
    delta1: float | None = None
    delta2: float | None = None
    block: int | None = None
    index: tuple[int, int] | None = None
    parent: "KernelSpec | None" = None
    custom: Callable[..., np.ndarray] | None = field(default=None, repr=False)
    nodes: int = QUAD_START

    _RADIAL = ("mollifier_at_scale", "log_averaged", "log_laplacian", "lp_block")

    @property
    def is_radial(self) -> bool:
        return self.kind in self._RADIAL

    @property
    def label(self) -> str:
        if self.kind == "mollifier_at_scale":
            return f"{self.mollifier.name}@{self.delta:g}"
        if self.kind == "log_averaged":
            return f"logavg[{self.mollifier.name},{self.delta1:g},{self.delta2:g}]"
        if self.kind == "lp_block":
            return f"lp_block[{self.block}]"
        if self.kind == "derived":
            i, j = self.index
            return f"d({self.parent.label})[{i},{j}]"
        return self.kind

    def radial(self, s: np.ndarray) -> np.ndarray:
        """Symbol as a function of ``|xi|``."""
        s = np.asarray(s, dtype=float)
        if self.kind == "mollifier_at_scale":
            return self.mollifier.profile(self.delta * s)
        if self.kind == "log_averaged":
            return self.log_average_values(s)[0]
        if self.kind == "log_laplacian":
            return np.log1p(s * s)
        if self.kind == "lp_block":
            return annulus_profile(s * 2.0 ** (-self.block))
        raise ValueError(f"kernel kind {self.kind!r} has no radial profile")

    def log_average_values(self, s: np.ndarray) -> tuple[np.ndarray, int]:
        """Adaptive quadrature of the averaged symbol; returns values and node count used."""
        s = np.asarray(s, dtype=float)
        uniq, inv = np.unique(s.ravel(), return_inverse=True)
        vals, n = _adaptive_log_average(self.mollifier, self.delta1, self.delta2, uniq, self.nodes)
        return vals[inv].reshape(s.shape), n

    def radial_derivative(self, s: np.ndarray) -> np.ndarray:
        """Analytic ``d/ds`` of the radial symbol."""
        s = np.asarray(s, dtype=float)
        if self.kind == "mollifier_at_scale":
            return self.delta * self.mollifier.derivative(self.delta * s)
        if self.kind == "log_averaged":
            # d/ds int phi(delta s) d delta/delta = (phi(d2 s) - phi(d1 s)) / s
            p = self.mollifier.profile
            safe = np.where(s > 0, s, 1.0)
            return np.where(s > 0, (p(self.delta2 * s) - p(self.delta1 * s)) / safe, 0.0)
        if self.kind == "log_laplacian":
            return 2.0 * s / (1.0 + s * s)
        if self.kind == "lp_block":
            c = 2.0 ** (-self.block)
            d = self.mollifier.derivative
            return c * (d(c * s) - 2.0 * d(2.0 * c * s))
        raise ValueError(f"kernel kind {self.kind!r} has no registered symbol derivative")

    def symbol(self, *ks: np.ndarray) -> np.ndarray:
        """Evaluate the symbol at angular wavenumbers ``ks``."""
        if self.kind == "custom":
            return np.asarray(self.custom(*ks))
        if self.kind == "derived":
            i, j = self.index
            s = _modulus(ks)
            safe = np.where(s > 0, s, 1.0)
            dk = self.parent.radial_derivative(s)
            return np.where(s > 0, -ks[i] * ks[j] * dk / safe, 0.0)
        return self.radial(_modulus(ks))

    def on_grid(self, grid: TorusGrid) -> np.ndarray:
        """Symbol sampled on the grid's spectral layout."""
        if self.is_radial:
            # radial symbols depend on |k|^2 only, which takes few distinct values
            k2 = sum(k.astype(np.int64) ** 2 for k in grid.integer_wavenumbers)
            k2 = np.broadcast_to(k2, grid.spectral_shape)
            uniq, inv = np.unique(k2, return_inverse=True)
            s = (2.0 * np.pi / grid.period) * np.sqrt(uniq.astype(float))
            return self.radial(s)[inv].reshape(grid.spectral_shape)
        return np.broadcast_to(self.symbol(*grid.wavenumbers), grid.spectral_shape)

    def apply(self, f: ScalarField) -> ScalarField:
        return ScalarField.from_spectrum(f.grid, f.spectrum * self.on_grid(f.grid))


def rescale(phi: Mollifier, delta: float) -> KernelSpec:
    """Kernel ``phi_delta`` with symbol ``phi_hat(delta |xi|)``."""
    if not (np.isfinite(delta) and delta > 0):
        raise ValueError(f"delta must be positive, got {delta}")
    return KernelSpec("mollifier_at_scale", mollifier=phi, delta=float(delta))


def log_averaged_kernel(phi: Mollifier, delta1: float, delta2: float, nodes: int = QUAD_START) -> KernelSpec:
    """Kernel ``int_{delta1}^{delta2} phi_delta d delta / delta``."""
    if not (delta1 > 0 and delta2 > 0):
        raise ValueError("delta1 and delta2 must be positive")
    if delta1 >= delta2:
        raise ValueError(f"need delta1 < delta2, got {delta1} >= {delta2}")
    return KernelSpec("log_averaged", mollifier=phi, delta1=float(delta1), delta2=float(delta2), nodes=nodes)


def log_laplacian() -> KernelSpec:
    """Multiplier ``log(1 + |xi|^2)``."""
    return KernelSpec("log_laplacian")


def custom_kernel(symbol: Callable[..., np.ndarray]) -> KernelSpec:
    return KernelSpec("custom", custom=symbol)


def reproduction_identity_check(phi: Mollifier, delta: float, delta_prime: float, grid: TorusGrid) -> bool:
    """Check ``phi_hat(delta' xi) phi_hat(delta xi) == phi_hat(delta xi)`` exactly on the grid."""
    if not phi.is_frequency_cutoff:
        raise ValueError("reproduction identity needs a frequency-cutoff mollifier")
    if not (delta > 0 and delta_prime > 0):
        raise ValueError("scales must be positive")
    if delta < 2.0 * delta_prime:
        raise ValueError(f"identity only claimed for delta >= 2 delta' (got {delta} < {2 * delta_prime})")
    s = grid.wavenumber_modulus
    left = phi.profile(delta_prime * s)
    right = phi.profile(delta * s)
    return bool(np.all(left * right == right))


@dataclass(frozen=True)
class CzReport:
    """Grid surrogates for the three Calderón-Zygmund bounds of a kernel."""

    sup_xd_K: float
    sup_xd1_gradK: float
    sup_symbol: float
    label: str = ""

    @property
    def estimate(self) -> float:
        return max(self.sup_xd_K, self.sup_xd1_gradK, self.sup_symbol)

    def as_row(self) -> dict[str, object]:
        return {
            "kernel": self.label,
            "sup_xd_K": self.sup_xd_K,
            "sup_xd1_gradK": self.sup_xd1_gradK,
            "sup_symbol": self.sup_symbol,
            "estimate": self.estimate,
        }


def physical_kernel(K: KernelSpec, grid: TorusGrid) -> tuple[np.ndarray, list[np.ndarray]]:
    """Periodised physical kernel and its gradient, sampled on the grid."""
    sym = np.asarray(K.on_grid(grid), dtype=complex)
    norm = grid.size / grid.volume
    kern = grid.inverse(sym) * norm
    keep = ~grid.nyquist_mask
    grads = [grid.inverse(1j * k * sym * keep) * norm for k in grid.wavenumbers]
    return kern, grads


def cz_norm_estimate(K: KernelSpec, grid: TorusGrid) -> CzReport:
    """Grid maxima of ``|x|^d |K|``, ``|x|^{d+1} |grad K|`` and ``|K_hat|``.

    Distances are torus distances to the origin; the origin cell is excluded.
    """
    if K.kind == "log_laplacian":
        raise ValueError("log_laplacian has no locally integrable kernel; estimate its derived kernels instead")
    sym = np.asarray(K.on_grid(grid))
    if not np.isfinite(sym).all():
        raise ValueError("kernel symbol is not finite on the grid")
    kern, grads = physical_kernel(K, grid)
    d = grid.dim
    r = np.sqrt(sum(c * c for c in grid.centered_coords))
    r = np.broadcast_to(r, grid.shape)
    away = r > 0
    gmod = np.sqrt(sum(g * g for g in grads))
    a = float(np.max(np.where(away, r**d * np.abs(kern), 0.0)))
    b = float(np.max(np.where(away, r ** (d + 1) * gmod, 0.0)))
    c = float(np.abs(sym).max())
    return CzReport(a, b, c, K.label)


def cz_derived_kernels(K: KernelSpec, dim: int = 2) -> dict[tuple[int, int], KernelSpec]:
    """Kernels ``K'_ij`` with symbol ``-xi_i dK_hat/dxi_j``, indexed by ``(i, j)``."""
    if not K.is_radial:
        raise ValueError(f"kernel kind {K.kind!r} has no registered symbol derivative")
    return {(i, j): KernelSpec("derived", index=(i, j), parent=K) for i in range(dim) for j in range(dim)}


def cz_sweep(kernels: Iterable[KernelSpec], grids: Iterable[TorusGrid], workers: int = 1) -> list[CzReport]:
    """Evaluate :func:`cz_norm_estimate` over paired kernels and grids."""
    pairs = list(zip(kernels, grids))
    return map_ordered(lambda kg: cz_norm_estimate(*kg), pairs, workers)


@dataclass(frozen=True)
class LittlewoodPaleyFamily:
    """Dyadic blocks ``psi_n`` with symbols ``chi(2^-n xi)``, ``chi(s) = phi(s) - phi(2s)``."""

    n_min: int
    n_max: int
    cutoff: Mollifier = field(default_factory=make_frequency_cutoff)

    def __post_init__(self) -> None:
        if self.n_max < self.n_min:
            raise ValueError("empty Littlewood-Paley range")
        if not self.cutoff.is_frequency_cutoff:
            raise ValueError("Littlewood-Paley blocks are built from a frequency cutoff")

    def chi(self, s: np.ndarray) -> np.ndarray:
        return annulus_profile(s)

    @property
    def indices(self) -> range:
        return range(self.n_min, self.n_max + 1)

    def block(self, n: int) -> KernelSpec:
        return KernelSpec("lp_block", mollifier=self.cutoff, block=int(n))

    def blocks(self) -> list[KernelSpec]:
        return [self.block(n) for n in self.indices]

    def partition_sum(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return sum(self.chi(s * 2.0 ** (-n)) for n in self.indices)

    def covers(self, s_min: float, s_max: float) -> bool:
        """True when the partition sums to one on ``[s_min, s_max]``."""
        return 2.0**self.n_min <= s_min and s_max <= 2.0**self.n_max

    @classmethod
    def covering(cls, grid: TorusGrid) -> "LittlewoodPaleyFamily":
        """Smallest range whose blocks sum to one at every nonzero grid wavenumber."""
        s = grid.wavenumber_modulus
        nz = s[s > 0]
        lo = int(math.floor(math.log2(nz.min())))
        hi = int(math.ceil(math.log2(nz.max())))
        return cls(lo, hi)


def make_lp_family(n_min: int, n_max: int) -> LittlewoodPaleyFamily:
    return LittlewoodPaleyFamily(int(n_min), int(n_max))


def write_symbol_csv(path: str | Path, K: KernelSpec, s: Sequence[float]) -> None:
    """Write ``(|xi|, value)`` rows for a radial kernel."""
    s = np.asarray(s, dtype=float)
    vals = K.radial(s)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["abs_xi", "value"])
        for a, b in zip(s, vals):
            w.writerow([repr(float(a)), repr(float(b))])


def write_cz_csv(path: str | Path, reports: Sequence[CzReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["kernel", "sup_xd_K", "sup_xd1_gradK", "sup_symbol", "estimate"])
        w.writeheader()
        for rep in reports:
            w.writerow(rep.as_row())
