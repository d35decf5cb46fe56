import numpy as np
import pytest

from egl import oracles
from egl.spectral import SpectralField


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spectral(n: int, rng: np.random.Generator, kmax: int | None = None) -> SpectralField:
    """Random real zero-mean field, optionally restricted to |n_i| <= kmax."""
    modes = oracles.random_hermitian(n, rng)
    if kmax is not None:
        modes = {k: v for k, v in modes.items() if max(abs(k[0]), abs(k[1])) <= kmax}
    return SpectralField(oracles.to_fft_array(n, modes))


_CRITERIA: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Print and remember one acceptance line; the summary is repeated at the end of the session."""
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    _CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
