"""Periodic torus grids, real fields, Fourier multipliers and quadrature norms.

Transform convention: the forward transform is unscaled and the inverse is
scaled by ``1 / N**d`` (the numpy default), using the real-to-complex layout
in which the last axis keeps only non-negative wavenumbers.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "TorusGrid",
    "ScalarField",
    "VelocityField",
    "ExponentTriple",
    "Symbol",
    "lp_norm",
    "apply_multiplier",
    "apply_spectral",
    "gradient",
    "divergence",
    "write_mixf",
    "read_mixf",
    "MIXF_MAGIC",
    "MIXF_VERSION",
]

Symbol = Callable[..., np.ndarray]

MIXF_MAGIC = b"MIXF"
MIXF_VERSION = 1
_HEADER = struct.Struct("<4sHHId")


def _check_exponent(p: float, lo: float, lo_open: bool, allow_inf: bool, name: str) -> float:
    p = float(p)
    if math.isnan(p):
        raise ValueError(f"{name} is NaN")
    if math.isinf(p):
        if not allow_inf:
            raise ValueError(f"{name} must be finite")
        return p
    if p < lo or (lo_open and p == lo):
        raise ValueError(f"{name}={p} outside admissible range")
    return p


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the torus ``[0, period)^dim``.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1 or 2.
    points_per_axis : int
        Power of two, at least 8.
    period : float
        Side length of the torus.
    """

    dim: int
    points_per_axis: int
    period: float = 1.0

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        n = int(self.points_per_axis)
        if n < 8 or n & (n - 1):
            raise ValueError(f"points_per_axis must be a power of two >= 8, got {self.points_per_axis}")
        if not (np.isfinite(self.period) and self.period > 0):
            raise ValueError(f"period must be positive and finite, got {self.period}")
        object.__setattr__(self, "points_per_axis", n)
        object.__setattr__(self, "period", float(self.period))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        n = self.points_per_axis
        return (n,) * (self.dim - 1) + (n // 2 + 1,)

    @property
    def spacing(self) -> float:
        return self.period / self.points_per_axis

    @property
    def volume(self) -> float:
        return self.period**self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        """1-D coordinate arrays ``period * j / N``."""
        x = self.period * np.arange(self.points_per_axis) / self.points_per_axis
        return (x,) * self.dim

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays (sparse meshgrid, ``ij`` indexing)."""
        return tuple(np.meshgrid(*self.axes, indexing="ij", sparse=True))

    @cached_property
    def centered_coords(self) -> tuple[np.ndarray, ...]:
        """Coordinates wrapped into ``[-period/2, period/2)``."""
        half = 0.5 * self.period
        return tuple(np.mod(c + half, self.period) - half for c in self.coords)

    @cached_property
    def integer_wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Integer mode indices in the real-to-complex layout, broadcastable."""
        n = self.points_per_axis
        full = np.fft.fftfreq(n, d=1.0 / n)
        half = np.fft.rfftfreq(n, d=1.0 / n)
        ks = [full] * (self.dim - 1) + [half]
        return tuple(np.meshgrid(*ks, indexing="ij", sparse=True))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Angular wavenumbers ``2 pi k / period``, broadcastable."""
        scale = 2.0 * np.pi / self.period
        return tuple(scale * k for k in self.integer_wavenumbers)

    @cached_property
    def wavenumber_modulus(self) -> np.ndarray:
        sq = sum(k * k for k in self.wavenumbers)
        return np.sqrt(np.broadcast_to(sq, self.spectral_shape))

    @cached_property
    def self_conjugate(self) -> np.ndarray:
        """Modes whose negative aliases back onto themselves (zero or Nyquist on every axis)."""
        n = self.points_per_axis
        mask = np.ones(self.spectral_shape, dtype=bool)
        for k in self.integer_wavenumbers:
            mask &= (k == 0) | (np.abs(k) == n // 2)
        return mask

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """Modes lying on the Nyquist index of at least one axis."""
        n = self.points_per_axis
        mask = np.zeros(self.spectral_shape, dtype=bool)
        for k in self.integer_wavenumbers:
            mask |= np.abs(k) == n // 2
        return mask

    @cached_property
    def rfft_weights(self) -> np.ndarray:
        """Multiplicity of each stored coefficient in the full spectrum."""
        n = self.points_per_axis
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        w[..., n // 2] = 1.0
        return w

    def dealias_mask(self, fraction: float = 2.0 / 3.0) -> np.ndarray:
        """Boolean mask keeping modes with ``|k_i| <= fraction * N / 2`` on every axis."""
        if not 0.0 < fraction <= 1.0:
            raise ValueError(f"dealias fraction must lie in (0, 1], got {fraction}")
        kmax = fraction * self.points_per_axis / 2.0
        mask = np.ones(self.spectral_shape, dtype=bool)
        for k in self.integer_wavenumbers:
            mask &= np.abs(k) <= kmax + 1e-9
        return mask

    def forward(self, values: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(values, axes=tuple(range(self.dim)))

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(coeffs, s=self.shape, axes=tuple(range(self.dim)))

    def zeros(self) -> "ScalarField":
        return ScalarField(self, np.zeros(self.shape))

    def field(self, fn: Callable[..., np.ndarray], centered: bool = False) -> "ScalarField":
        """Sample ``fn(*coords)`` on the grid."""
        xs = self.centered_coords if centered else self.coords
        vals = np.broadcast_to(np.asarray(fn(*xs), dtype=float), self.shape)
        return ScalarField(self, vals)

    def compatible(self, other: "TorusGrid") -> bool:
        return (
            self.dim == other.dim
            and self.points_per_axis == other.points_per_axis
            and math.isclose(self.period, other.period, rel_tol=1e-14)
        )


def _first_nonfinite(values: np.ndarray) -> tuple[int, ...] | None:
    bad = ~np.isfinite(values)
    if not bad.any():
        return None
    return tuple(int(i) for i in np.argwhere(bad)[0])


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real periodic field on a :class:`TorusGrid`.

    Values are stored read-only; spectral coefficients are computed once on
    first access.
    """

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_spectrum(cls, grid: TorusGrid, coeffs: np.ndarray) -> "ScalarField":
        out = cls(grid, grid.inverse(coeffs))
        c = np.array(coeffs, dtype=complex, copy=True)
        c.setflags(write=False)
        out.__dict__["spectrum"] = c
        return out

    @cached_property
    def spectrum(self) -> np.ndarray:
        c = self.grid.forward(self.values)
        c.setflags(write=False)
        return c

    def mean(self) -> float:
        return float(self.values.mean())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.values).all())

    def spectral_energy(self) -> float:
        """``sum |f_k|^2`` over the full spectrum, weighted to give the squared L2 norm."""
        g = self.grid
        w = g.rfft_weights * np.abs(self.spectrum) ** 2
        return float(w.sum() * g.volume / g.size**2)

    def _coerce(self, other: object) -> np.ndarray | float:
        if isinstance(other, ScalarField):
            if not self.grid.compatible(other.grid):
                raise ValueError("fields live on incompatible grids")
            return other.values
        return other  # type: ignore[return-value]

    def __add__(self, other: object) -> "ScalarField":
        return ScalarField(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other: object) -> "ScalarField":
        return ScalarField(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other: object) -> "ScalarField":
        return ScalarField(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other: object) -> "ScalarField":
        return ScalarField(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other: float) -> "ScalarField":
        return ScalarField(self.grid, self.values / other)

    def __neg__(self) -> "ScalarField":
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class VelocityField:
    """Divergence-free vector field, steady or piecewise constant in time.

    ``phases`` holds one tuple of ``dim`` component arrays per phase. With
    ``switch_period=None`` the field is steady (one phase). Otherwise phase
    ``floor(t / switch_period) mod len(phases)`` is active at time ``t``.
    """

    grid: TorusGrid
    phases: tuple[tuple[np.ndarray, ...], ...]
    switch_period: float | None = None
    label: str = "velocity"

    def __post_init__(self) -> None:
        phases = []
        for comps in self.phases:
            if len(comps) != self.grid.dim:
                raise ValueError(f"expected {self.grid.dim} components, got {len(comps)}")
            arrs = []
            for c in comps:
                a = np.array(np.broadcast_to(c, self.grid.shape), dtype=float)
                a.setflags(write=False)
                arrs.append(a)
            phases.append(tuple(arrs))
        if not phases:
            raise ValueError("velocity field needs at least one phase")
        if len(phases) > 1 and (self.switch_period is None or self.switch_period <= 0):
            raise ValueError("piecewise velocity fields need a positive switch_period")
        object.__setattr__(self, "phases", tuple(phases))

    @classmethod
    def steady(cls, grid: TorusGrid, components: Sequence[np.ndarray], label: str = "velocity") -> "VelocityField":
        return cls(grid, (tuple(components),), None, label)

    @property
    def is_steady(self) -> bool:
        return len(self.phases) == 1

    def phase_index(self, t: float) -> int:
        if self.is_steady:
            return 0
        return int(math.floor(t / self.switch_period + 1e-12)) % len(self.phases)

    def at(self, t: float = 0.0) -> tuple[np.ndarray, ...]:
        return self.phases[self.phase_index(t)]

    def switch_times(self, horizon: float) -> list[float]:
        """Phase boundaries strictly inside ``(0, horizon)``."""
        if self.is_steady:
            return []
        out = []
        k = 1
        while k * self.switch_period < horizon * (1 - 1e-12):
            out.append(k * self.switch_period)
            k += 1
        return out

    def max_speed(self) -> float:
        best = 0.0
        for comps in self.phases:
            speed = np.sqrt(sum(c * c for c in comps))
            best = max(best, float(speed.max()))
        return best

    def scaled(self, factor: float) -> "VelocityField":
        phases = tuple(tuple(factor * c for c in comps) for comps in self.phases)
        return VelocityField(self.grid, phases, self.switch_period, self.label)

    def __add__(self, other: "VelocityField") -> "VelocityField":
        if not self.grid.compatible(other.grid):
            raise ValueError("velocity fields live on incompatible grids")
        if other.is_steady:
            phases = tuple(tuple(a + b for a, b in zip(comps, other.phases[0])) for comps in self.phases)
            return VelocityField(self.grid, phases, self.switch_period, self.label)
        if self.is_steady:
            return other + self
        if len(self.phases) != len(other.phases) or not math.isclose(self.switch_period, other.switch_period):
            raise ValueError("cannot add piecewise fields with different protocols")
        phases = tuple(tuple(a + b for a, b in zip(ca, cb)) for ca, cb in zip(self.phases, other.phases))
        return VelocityField(self.grid, phases, self.switch_period, self.label)


@dataclass(frozen=True)
class ExponentTriple:
    """Hölder triple with ``1/r = 1/p + 1/q``; ``p, q`` in ``(1, inf]``, ``r`` in ``[1, inf)``."""

    p: float
    q: float
    r: float

    def __post_init__(self) -> None:
        p = _check_exponent(self.p, 1.0, True, True, "p")
        q = _check_exponent(self.q, 1.0, True, True, "q")
        r = _check_exponent(self.r, 1.0, False, False, "r")
        lhs = 1.0 / r
        rhs = (0.0 if math.isinf(p) else 1.0 / p) + (0.0 if math.isinf(q) else 1.0 / q)
        if abs(lhs - rhs) > 1e-12:
            raise ValueError(f"1/r = {lhs} but 1/p + 1/q = {rhs}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)

    @classmethod
    def from_pq(cls, p: float, q: float) -> "ExponentTriple":
        inv = (0.0 if math.isinf(p) else 1.0 / p) + (0.0 if math.isinf(q) else 1.0 / q)
        if inv <= 0:
            raise ValueError("p and q cannot both be infinite (r would be infinite)")
        return cls(p, q, 1.0 / inv)


def lp_norm(f: ScalarField, p: float) -> float:
    """Equal-weight quadrature of ``(integral |f|^p dx)^(1/p)``; max modulus for ``p = inf``."""
    bad = _first_nonfinite(f.values)
    if bad is not None:
        raise ValueError(f"non-finite value at index {bad}")
    p = float(p)
    if p < 1:
        raise ValueError(f"exponent must be >= 1, got {p}")
    a = np.abs(f.values)
    if math.isinf(p):
        return float(a.max())
    scale = float(a.max())
    if scale == 0.0:
        return 0.0
    # normalise first so large p does not overflow
    m = np.mean((a / scale) ** p)
    return scale * float((m * f.grid.volume) ** (1.0 / p))


def _evaluate_symbol(grid: TorusGrid, symbol: Symbol | np.ndarray | float, negate: bool = False) -> np.ndarray:
    if callable(symbol):
        ks = tuple(-k for k in grid.wavenumbers) if negate else grid.wavenumbers
        vals = symbol(*ks)
    else:
        vals = symbol
    return np.broadcast_to(np.asarray(vals), grid.spectral_shape)


def _resolve_symbol(grid: TorusGrid, symbol: Symbol | np.ndarray | float, check: bool = True) -> np.ndarray:
    s = _evaluate_symbol(grid, symbol)
    bad = _first_nonfinite(np.asarray(s))
    if bad is not None:
        raise ValueError(f"symbol is not finite at spectral index {bad}")
    if check and callable(symbol):
        sm = _evaluate_symbol(grid, symbol, negate=True)
        scale = max(float(np.abs(s).max()), 1e-300)
        err = np.abs(sm - np.conj(s))
        if err.max() > 1e-12 * scale:
            idx = tuple(int(i) for i in np.unravel_index(int(err.argmax()), err.shape))
            raise ValueError(f"symbol breaks conjugate symmetry at spectral index {idx}")
    if np.iscomplexobj(s):
        # self-conjugate (Nyquist) modes of a real field only carry the real part
        s = np.where(grid.nyquist_mask, s.real, s)
    return s


def apply_spectral(f: ScalarField, multiplier: np.ndarray) -> ScalarField:
    """Multiply spectral coefficients by a precomputed array (no checks)."""
    return ScalarField.from_spectrum(f.grid, f.spectrum * multiplier)


def apply_multiplier(f: ScalarField, symbol: Symbol | np.ndarray | float) -> ScalarField:
    """Apply the Fourier multiplier ``symbol`` to ``f``.

    Parameters
    ----------
    f : ScalarField
    symbol : callable or array
        Called as ``symbol(k_1, ..., k_d)`` with broadcastable angular
        wavenumber arrays, or given directly on the spectral grid.

    Raises
    ------
    ValueError
        If the symbol is not finite or violates ``symbol(-k) = conj(symbol(k))``.
    """
    s = _resolve_symbol(f.grid, symbol)
    return apply_spectral(f, s)


def gradient(f: ScalarField) -> list[ScalarField]:
    """Spectral gradient; Nyquist modes are dropped for the odd derivative."""
    g = f.grid
    keep = ~g.nyquist_mask
    return [ScalarField.from_spectrum(g, 1j * k * f.spectrum * keep) for k in g.wavenumbers]


def _divergence_values(grid: TorusGrid, comps: Sequence[np.ndarray]) -> ScalarField:
    keep = ~grid.nyquist_mask
    acc = np.zeros(grid.spectral_shape, dtype=complex)
    for k, c in zip(grid.wavenumbers, comps):
        acc += 1j * k * grid.forward(c)
    return ScalarField.from_spectrum(grid, acc * keep)


def divergence(v: VelocityField, t: float = 0.0) -> ScalarField:
    """Spectral divergence of ``v`` at time ``t``."""
    return _divergence_values(v.grid, v.at(t))


def write_mixf(path: str | Path, f: ScalarField) -> None:
    """Write ``f`` in the MIXF binary layout (little-endian, row-major f64)."""
    g = f.grid
    header = _HEADER.pack(MIXF_MAGIC, MIXF_VERSION, g.dim, g.points_per_axis, g.period)
    data = np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C")
    Path(path).write_bytes(header + data)


def read_mixf(path: str | Path) -> ScalarField:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated MIXF header")
    magic, version, dim, n, period = _HEADER.unpack_from(raw)
    if magic != MIXF_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != MIXF_VERSION:
        raise ValueError(f"{path}: unsupported MIXF version {version}")
    grid = TorusGrid(dim, n, period)
    expected = _HEADER.size + 8 * grid.size
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(grid.shape)
    return ScalarField(grid, vals)
