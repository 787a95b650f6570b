import numpy as np
import pytest

from mixlab.spectral import ScalarField, TorusGrid


def band_limited(grid: TorusGrid, seed: int, kmax: int = 4, mean: float = 0.0) -> ScalarField:
    """Random real field with integer modes ``|k_i| <= kmax`` only."""
    rng = np.random.default_rng(seed)
    coeffs = np.zeros(grid.spectral_shape, dtype=complex)
    ks = grid.integer_wavenumbers
    sel = np.ones(grid.spectral_shape, dtype=bool)
    for k in ks:
        sel &= np.abs(k) <= kmax
    coeffs[sel] = rng.normal(size=sel.sum()) + 1j * rng.normal(size=sel.sum())
    vals = grid.inverse(coeffs)
    vals = vals - vals.mean() + mean
    return ScalarField(grid, vals / np.abs(vals).max())


def relerr(a, b) -> float:
    a = np.asarray(getattr(a, "values", a))
    b = np.asarray(getattr(b, "values", b))
    scale = float(np.sqrt(np.mean(np.abs(b) ** 2)))
    return float(np.sqrt(np.mean(np.abs(a - b) ** 2))) / scale


@pytest.fixture
def grid2():
    return TorusGrid(2, 32, 1.0)


@pytest.fixture
def grid1():
    return TorusGrid(1, 64, 2.0)


ACCEPTANCE: list[str] = []


def record_criterion(number: int, title: str, passed: bool, detail: str, elapsed: float, limit: float) -> bool:
    """Log one acceptance line; the runtime limit is part of the verdict."""
    ok = bool(passed) and elapsed <= limit
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'} {title}: {detail} [{elapsed:.1f} s, limit {limit:g} s]"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
