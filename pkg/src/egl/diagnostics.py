"""Scalar measurements tracked along a run."""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields

import numpy as np

from .initial_data import group_images
from .spectral import (
    GridField,
    SpectralField,
    inverse_laplacian,
    refined_derivative,
    spectral_to_grid,
    wavenumbers,
)

CSV_COLUMNS = (
    "t",
    "grad_sup",
    "l2",
    "energy",
    "kn_invariant",
    "shell_energy",
    "even_residual",
    "rot4_residual",
    "psi_l2",
    "hessian_sup",
)

GRAD_REFINE = 4


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    grad_sup: float
    l2: float
    energy: float
    kn_invariant: float
    shell_energy: float
    even_residual: float
    rot4_residual: float
    psi_l2: float
    hessian_sup: float

    def row(self) -> tuple:
        return astuple(self)


assert tuple(f.name for f in fields(DiagnosticsRecord)) == CSV_COLUMNS


def theta_star_spectral(n: int) -> SpectralField:
    return SpectralField.from_modes(n, {(1, 0): 0.5, (0, 1): 0.5})


def grad_sup_norm(s: SpectralField, factor: int = GRAD_REFINE) -> float:
    """Largest Euclidean gradient length over the refined grid."""
    gx = refined_derivative(s, factor, (1, 0))
    gy = refined_derivative(s, factor, (0, 1))
    return float(np.sqrt(np.max(gx * gx + gy * gy)))


def lp_norm(f: GridField, p: float) -> float:
    """(int |f|^p)^(1/p) by the grid rule with cell weight (2pi/N)^2; p = inf gives max |f|."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    v = np.abs(f.values)
    if np.isinf(p):
        return float(v.max())
    cell = (2.0 * np.pi / f.n) ** 2
    vmax = v.max()
    if vmax == 0:
        return 0.0
    # factor out the max so large p does not overflow
    return float(vmax * (cell * np.sum((v / vmax) ** p)) ** (1.0 / p))


def _ksq(n: int) -> np.ndarray:
    k1, k2 = wavenumbers(n)
    return k1 * k1 + k2 * k2


def l2_norm(s: SpectralField) -> float:
    """||theta||_2 = 2pi * sqrt(sum |theta_hat|^2)."""
    return float(2.0 * np.pi * np.sqrt(np.sum(np.abs(s.coeffs) ** 2)))


def energy(s: SpectralField, gamma: float = 1.0) -> float:
    """int theta * zeta with zeta = Delta^-gamma theta."""
    ksq = _ksq(s.n)
    mask = ksq > 0
    w = np.zeros_like(ksq)
    w[mask] = ksq[mask] ** (-gamma)
    return float((2.0 * np.pi) ** 2 * np.sum(w * np.abs(s.coeffs) ** 2))


def kn_invariant(s: SpectralField, gamma: float = 1.0) -> float:
    """sum over |n|^2 > 1 of (1 - |n|^(-2 gamma)) |theta_hat|^2."""
    ksq = _ksq(s.n)
    outer = ksq > 1
    w = np.zeros_like(ksq)
    w[outer] = 1.0 - ksq[outer] ** (-gamma)
    return float(np.sum(w * np.abs(s.coeffs) ** 2))


def shell_energy(s: SpectralField) -> float:
    return float(np.sum(np.abs(s.coeffs[_ksq(s.n) == 1]) ** 2))


def outer_shell_sum(s: SpectralField) -> float:
    return float(np.sum(np.abs(s.coeffs[_ksq(s.n) > 1]) ** 2))


def symmetry_residual(f: GridField, kind: str) -> float:
    """||f - f o g||_inf / max(||f||_inf, 1e-14) for g the reflection or pi/2 rotation."""
    if kind not in ("even", "rot4"):
        raise ValueError(f"kind must be 'even' or 'rot4', got {kind!r}")
    v = f.values
    image = group_images(v, kind)[1]
    return float(np.abs(v - image).max() / max(float(np.abs(v).max()), 1e-14))


def hessian_sup_norm(psi: SpectralField, gamma: float = 1.0, factor: int = GRAD_REFINE) -> float:
    """Largest |second derivative| of Delta^-gamma psi in the (alpha, beta) directions.

    d/dalpha = d/dx + d/dy and d/dbeta = d/dy - d/dx in the frame at (pi, 0); the frame
    at (0, pi) is its pi/2 rotation, which permutes these entries up to sign, so the
    maximum is the same for every saddle.
    """
    z = inverse_laplacian(psi, gamma)
    zxx = refined_derivative(z, factor, (2, 0))
    zyy = refined_derivative(z, factor, (0, 2))
    zxy = refined_derivative(z, factor, (1, 1))
    a_aa = np.abs(zxx + 2 * zxy + zyy).max()
    a_ab = np.abs(zyy - zxx).max()
    a_bb = np.abs(zxx - 2 * zxy + zyy).max()
    return float(max(a_aa, a_ab, a_bb))


def measure(
    s: SpectralField,
    t: float,
    gamma: float = 1.0,
    grid: GridField | None = None,
    hessian: bool = True,
) -> DiagnosticsRecord:
    grid = grid if grid is not None else spectral_to_grid(s)
    psi = s - theta_star_spectral(s.n)
    return DiagnosticsRecord(
        t=float(t),
        grad_sup=grad_sup_norm(s),
        l2=l2_norm(s),
        energy=energy(s, gamma),
        kn_invariant=kn_invariant(s, gamma),
        shell_energy=shell_energy(s),
        even_residual=symmetry_residual(grid, "even"),
        rot4_residual=symmetry_residual(grid, "rot4") if s.n % 4 == 0 else float("nan"),
        psi_l2=l2_norm(psi),
        hessian_sup=hessian_sup_norm(psi, gamma) if hessian else float("nan"),
    )


def superlinear_metric(series) -> float:
    """Trapezoid integral of grad_sup over [0, T] divided by T^2, T the last time."""
    t, g = _unzip(series)
    if t.size < 2:
        raise ValueError("need at least two samples")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be increasing")
    big_t = t[-1]
    return float(np.trapezoid(g, t) / big_t**2)


def superlinear_trace(series) -> list[tuple[float, float]]:
    """The metric evaluated with T running over every sample after the first."""
    t, g = _unzip(series)
    out = []
    for k in range(1, t.size):
        if t[k] > 0:
            out.append((float(t[k]), float(np.trapezoid(g[: k + 1], t[: k + 1]) / t[k] ** 2)))
    return out


@dataclass(frozen=True)
class GrowthFit:
    rate: float
    prefactor: float
    r2: float
    samples: int


def growth_fit(series, window: tuple[float, float]) -> GrowthFit:
    """Least-squares line through (t, ln grad_sup) over the window; rate is the slope."""
    t, g = _unzip(series)
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    t, g = t[sel], g[sel]
    if t.size < 3:
        raise ValueError(f"need at least 3 samples in window {window}, found {t.size}")
    if np.any(g <= 0):
        raise ValueError("growth fit needs positive values")
    y = np.log(g)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return GrowthFit(float(slope), float(np.exp(intercept)), r2, int(t.size))


def _unzip(series) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(list(series), dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]
