"""Direct-summation oracles for the spectral operators.

Everything here is O(N^4) on purpose: no FFTs, just explicit exponential sums,
so the fast paths in :mod:`egl.spectral` can be checked against something
that shares none of their code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import TWO_PI


def lattice(n: int) -> np.ndarray:
    """Frequencies -N/2 .. N/2-1 in natural order."""
    return np.arange(-n // 2, n // 2)


def _basis(n: int, m: int | None = None) -> np.ndarray:
    """E[j, k] = exp(i * k * x_j) for x_j on an m-point grid."""
    m = n if m is None else m
    return _phases(m, lattice(n))


def _phases(m: int, ks: np.ndarray) -> np.ndarray:
    # reduce j*k modulo m in integers so the exponent stays in [0, 2pi)
    jk = np.outer(np.arange(m), ks) % m
    return np.exp(1j * TWO_PI * jk / m)


def random_hermitian(n: int, rng: np.random.Generator) -> dict:
    """Random zero-mean Hermitian coefficients as {(n1, n2): c} over the lattice.

    Scaled by 1/N so the synthesized field values stay O(1) at every N.
    """
    ks = lattice(n)
    raw = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / n
    coeffs = {}
    for a, n2 in enumerate(ks):
        for b, n1 in enumerate(ks):
            coeffs[(int(n1), int(n2))] = raw[a, b]
    out = {}
    for (n1, n2), c in coeffs.items():
        p1 = -n1 if -n1 >= -n // 2 and -n1 < n // 2 else n1
        p2 = -n2 if -n2 >= -n // 2 and -n2 < n // 2 else n2
        out[(n1, n2)] = 0.5 * (c + np.conj(coeffs[(p1, p2)]))
    out[(0, 0)] = 0.0
    return out


def to_fft_array(n: int, modes: dict) -> np.ndarray:
    c = np.zeros((n, n), dtype=complex)
    for (n1, n2), v in modes.items():
        c[n2 % n, n1 % n] = v
    return c


def synthesize(n: int, modes: dict, m: int | None = None) -> np.ndarray:
    """values[j, i] = sum_n c(n) exp(i(n1 x_i + n2 y_j)) by explicit double sum.

    With ``m != n`` the same polynomial is sampled on an m-point grid; each
    Nyquist coefficient is split evenly between -N/2 and +N/2 (a cosine).
    """
    m = n if m is None else m
    ks = lattice(n)
    index = {int(k): i for i, k in enumerate(ks)}
    c = np.zeros((n, n), dtype=complex)
    for (n1, n2), v in modes.items():
        c[index[n2], index[n1]] = v
    split = np.zeros((n + 1, n))
    split[1:n, 1:n] = np.eye(n - 1)
    split[0, 0] = split[n, 0] = 0.5
    c_ext = split @ c @ split.T
    e = _phases(m, np.append(ks, n // 2))
    return np.einsum("ja,ab,ib->ji", e, c_ext, e).real


def analyze(values: np.ndarray) -> dict:
    """c(n) = N^-2 sum_j f_j exp(-i n.x_j), explicit double sum."""
    n = values.shape[0]
    e = np.conj(_basis(n))
    c = np.einsum("ja,ji,ib->ab", e, values, e) / (n * n)
    ks = lattice(n)
    return {(int(ks[b]), int(ks[a])): c[a, b] for a in range(n) for b in range(n)}


def inverse_laplacian_modes(modes: dict, gamma: float) -> dict:
    out = {}
    for (n1, n2), v in modes.items():
        k2 = n1 * n1 + n2 * n2
        out[(n1, n2)] = 0.0 if k2 == 0 else v / k2 ** gamma
    return out


def velocity_direct(n: int, modes: dict, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """(zeta_y, -zeta_x) by explicit summation.

    A derivative along an axis drops that axis' Nyquist frequency, which has no
    real-valued derivative on the grid.
    """
    zeta = inverse_laplacian_modes(modes, gamma)
    h = -n // 2
    dy = {k: 1j * k[1] * v for k, v in zeta.items() if k[1] != h}
    dx = {k: -1j * k[0] * v for k, v in zeta.items() if k[0] != h}
    return synthesize(n, dy), synthesize(n, dx)


@dataclass(frozen=True)
class OracleResult:
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tol)


def run_suite(seed: int = 0, sizes=(8, 16), tol: float = 1e-12) -> list[OracleResult]:
    """Fast spectral paths against the direct sums above, plus the analytic cos x + cos y velocity."""
    from .characteristics import velocity_sample
    from .diagnostics import theta_star_spectral
    from .spectral import (
        GridField,
        SpectralField,
        grid_to_spectral,
        inverse_laplacian,
        refine_evaluate,
        spectral_to_grid,
        velocity_from_vorticity,
    )

    rng = np.random.default_rng(seed)
    out = []
    for n in sizes:
        modes = random_hermitian(n, rng)
        s = SpectralField(to_fft_array(n, modes))
        values = synthesize(n, modes)
        out.append(OracleResult(f"synthesis N={n}", float(np.abs(spectral_to_grid(s).values - values).max()), tol))
        fwd = to_fft_array(n, analyze(values))
        out.append(OracleResult(f"analysis N={n}", float(np.abs(grid_to_spectral(GridField(values)).coeffs - fwd).max()), tol))
        back = spectral_to_grid(grid_to_spectral(GridField(values))).values
        out.append(OracleResult(f"round trip N={n}", float(np.abs(back - values).max()), tol))
        for gamma in (0.5, 1.0, 1.5):
            ref = to_fft_array(n, inverse_laplacian_modes(modes, gamma))
            err = float(np.abs(inverse_laplacian(s, gamma).coeffs - ref).max())
            out.append(OracleResult(f"inverse laplacian gamma={gamma} N={n}", err, tol))
            u, v = velocity_from_vorticity(s, gamma)
            ud, vd = velocity_direct(n, modes, gamma)
            err = float(max(np.abs(u.values - ud).max(), np.abs(v.values - vd).max()))
            out.append(OracleResult(f"velocity gamma={gamma} N={n}", err, tol))
        for factor in (2, 4):
            ref = synthesize(n, modes, n * factor)
            err = float(np.abs(refine_evaluate(s, factor).values - ref).max())
            out.append(OracleResult(f"upsampling x{factor} N={n}", err, tol))
    pts = rng.uniform(0.0, TWO_PI, (200, 2))
    u = velocity_sample(theta_star_spectral(128), 1.0, pts)
    exact = np.column_stack([-np.sin(pts[:, 1]), np.sin(pts[:, 0])])
    out.append(OracleResult("interpolated velocity of cos x + cos y N=128", float(np.abs(u - exact).max()), 1e-6))
    return out
