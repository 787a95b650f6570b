"""Divergence-free velocity fields on the torus."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import TorusGrid, VelocityField

__all__ = ["FlowSpec", "make_flow", "periodized_linear", "FLOW_KINDS"]

FLOW_KINDS = ("periodized_shear", "alternating_sine_shear", "cellular", "zero")


def _smoothstep(t: np.ndarray) -> np.ndarray:
    """C-infinity step from 0 (t <= 0) to 1 (t >= 1)."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def periodized_linear(x: np.ndarray, period: float) -> np.ndarray:
    """Periodic profile equal to ``x`` on ``|x| <= 3 period / 8``.

    ``x`` is taken in ``[-period/2, period/2)``. Outside the linear window the
    profile is blended smoothly into ``a sin(2 pi x / period)`` matched so
    the result is smooth and periodic.
    """
    lam = float(period)
    x = np.asarray(x, dtype=float)
    inner = 3.0 * lam / 8.0
    w = _smoothstep((np.abs(x) - inner) / (lam / 2.0 - inner))
    # sine with unit slope at the origin closes the sawtooth periodically
    close = (lam / (2.0 * np.pi)) * np.sin(2.0 * np.pi * x / lam)
    return (1.0 - w) * x + w * close


@dataclass(frozen=True)
class FlowSpec:
    """Velocity field description.

    kind : ``periodized_shear`` (``u = (s(x2), 0)``), ``alternating_sine_shear``,
        ``cellular`` or ``zero``.
    amplitude : overall scale ``A``.
    switch_period : phase length of the alternating protocol.
    wavenumber : integer mode of the sine and cellular flows.
    """

    kind: str
    amplitude: float = 1.0
    switch_period: float = 0.5
    wavenumber: int = 1

    def __post_init__(self) -> None:
        if self.kind not in FLOW_KINDS:
            raise ValueError(f"unknown flow kind {self.kind!r}; expected one of {FLOW_KINDS}")
        if not math.isfinite(self.amplitude) or self.amplitude < 0:
            raise ValueError(f"amplitude must be finite and non-negative, got {self.amplitude}")
        if not (math.isfinite(self.switch_period) and self.switch_period > 0):
            raise ValueError(f"switch_period must be positive, got {self.switch_period}")
        if int(self.wavenumber) < 1:
            raise ValueError("wavenumber must be a positive integer")


def make_flow(spec: FlowSpec, grid: TorusGrid) -> VelocityField:
    if grid.dim != 2:
        raise ValueError("flows are two-dimensional")
    lam = grid.period
    a = spec.amplitude
    k = 2.0 * np.pi * spec.wavenumber / lam
    x1, x2 = grid.coords
    zero = np.zeros(grid.shape)
    if spec.kind == "zero":
        return VelocityField.steady(grid, (zero, zero), label="zero")
    if spec.kind == "periodized_shear":
        _, c2 = grid.centered_coords
        u1 = a * np.broadcast_to(periodized_linear(c2, lam), grid.shape)
        return VelocityField.steady(grid, (u1, zero), label="periodized_shear")
    if spec.kind == "alternating_sine_shear":
        first = (np.broadcast_to(a * np.sin(k * x2), grid.shape), zero)
        second = (zero, np.broadcast_to(a * np.sin(k * x1), grid.shape))
        return VelocityField(grid, (first, second), spec.switch_period, "alternating_sine_shear")
    if spec.kind == "cellular":
        # psi = A sin(k x1) sin(k x2), u = (-d2 psi, d1 psi)
        u1 = -a * k * np.sin(k * x1) * np.cos(k * x2)
        u2 = a * k * np.cos(k * x1) * np.sin(k * x2)
        return VelocityField.steady(grid, (u1, u2), label="cellular")
    raise ValueError(f"unknown flow kind {spec.kind!r}")
