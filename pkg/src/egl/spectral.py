"""Periodic fields on [0, 2pi)^2 and the spectral operators acting on them.

Coefficients are normalized as theta_hat(n) = (2pi)^-2 * int exp(-i n.z) theta(z) dz,
which on an N x N grid is ``fft2(values) / N**2``.  Arrays are indexed ``[iy, ix]``
so that the flat row-major layout has the x-index running fastest; the spectral
array is likewise ``[k2, k1]`` in numpy FFT order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * np.pi
REFINE_FACTORS = (1, 2, 4)


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def check_resolution(n: int) -> int:
    n = int(n)
    if not _is_power_of_two(n):
        raise ValueError(f"grid resolution must be a power of two, got {n}")
    if n < 8:
        raise ValueError(f"grid resolution must be at least 8, got {n}")
    return n


@dataclass(frozen=True)
class GridField:
    """Real samples at (2*pi*i/N, 2*pi*j/N); ``values[j, i]``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"expected a square 2-D array, got shape {v.shape}")
        check_resolution(v.shape[0])
        if not np.all(np.isfinite(v)):
            raise ValueError("grid field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients of a real zero-mean field, ``coeffs[k2, k1]``."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"expected a square 2-D array, got shape {c.shape}")
        check_resolution(c.shape[0])
        if not np.all(np.isfinite(c)):
            raise ValueError("spectral field contains non-finite coefficients")
        c[0, 0] = 0.0
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    def coeff(self, n1: int, n2: int) -> complex:
        """Coefficient of exp(i(n1 x + n2 y))."""
        n = self.n
        return complex(self.coeffs[n2 % n, n1 % n])

    @classmethod
    def zeros(cls, n: int) -> "SpectralField":
        return cls(np.zeros((n, n), dtype=complex))

    @classmethod
    def from_modes(cls, n: int, modes: dict) -> "SpectralField":
        """Build from ``{(n1, n2): c}``; conjugate partners are filled in."""
        c = np.zeros((n, n), dtype=complex)
        for (n1, n2), val in modes.items():
            c[n2 % n, n1 % n] = val
            c[-n2 % n, -n1 % n] = np.conj(val)
        return cls(c)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs - other.coeffs)

    def scale(self, a: float) -> "SpectralField":
        return SpectralField(self.coeffs * a)


@lru_cache(maxsize=16)
def wavenumbers(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer wavenumber grids (k1, k2) in FFT order, shaped like ``coeffs``."""
    k = sfft.fftfreq(n, 1.0 / n)
    k1, k2 = np.meshgrid(k, k)
    k1.setflags(write=False)
    k2.setflags(write=False)
    return k1, k2


@lru_cache(maxsize=16)
def _derivative_wavenumbers(n: int) -> tuple[np.ndarray, np.ndarray]:
    # The Nyquist index is its own conjugate partner; i*k there breaks realness.
    k1, k2 = wavenumbers(n)
    k1 = k1.copy()
    k2 = k2.copy()
    k1[:, n // 2] = 0.0
    k2[n // 2, :] = 0.0
    k1.setflags(write=False)
    k2.setflags(write=False)
    return k1, k2


def grid_points(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Coordinate arrays (X, Y) with ``X[j, i] = 2*pi*i/n``."""
    x = TWO_PI * np.arange(n) / n
    return np.meshgrid(x, x)


def hermitian_defect(c: np.ndarray) -> float:
    """max |c(-n) - conj(c(n))| over the lattice (FFT index arithmetic)."""
    n = c.shape[0]
    idx = (-np.arange(n)) % n
    partner = c[np.ix_(idx, idx)]
    return float(np.max(np.abs(partner - np.conj(c)))) if c.size else 0.0


def grid_to_spectral(f: GridField, mean_tol: float = 1e-10) -> SpectralField:
    """Forward transform. The mean must already be (numerically) zero."""
    n = f.n
    c = sfft.fft2(f.values) / (n * n)
    scale = max(1.0, float(np.max(np.abs(f.values))))
    if abs(c[0, 0]) > mean_tol * scale:
        raise ValueError(f"field mean {c[0, 0].real:.3e} exceeds tolerance {mean_tol:.1e}")
    return SpectralField(c)


def spectral_to_grid(s: SpectralField, herm_tol: float = 1e-10) -> GridField:
    n = s.n
    c = s.coeffs
    scale = max(1e-300, float(np.max(np.abs(c))))
    if hermitian_defect(c) > herm_tol * max(scale, 1.0):
        raise ValueError("coefficients violate Hermitian symmetry; field is not real")
    return GridField(sfft.ifft2(c).real * (n * n))


def inverse_laplacian(s: SpectralField, gamma: float = 1.0) -> SpectralField:
    """Multiply by |n|^(-2 gamma); the (positive) operator written Delta^-gamma."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return SpectralField(s.coeffs * _inv_lap_multiplier(s.n, float(gamma)))


@lru_cache(maxsize=32)
def _inv_lap_multiplier(n: int, gamma: float) -> np.ndarray:
    k1, k2 = wavenumbers(n)
    ksq = k1 * k1 + k2 * k2
    ksq[0, 0] = 1.0
    m = ksq ** (-gamma)
    m[0, 0] = 0.0
    m.setflags(write=False)
    return m


def _to_grid(c: np.ndarray) -> np.ndarray:
    # inputs here are Hermitian by construction, so the half spectrum suffices
    n = c.shape[0]
    return sfft.irfft2(c[:, : n // 2 + 1], s=(n, n)) * (n * n)


def gradient(s: SpectralField) -> tuple[GridField, GridField]:
    k1, k2 = _derivative_wavenumbers(s.n)
    c = s.coeffs
    return GridField(_to_grid(1j * k1 * c)), GridField(_to_grid(1j * k2 * c))


def velocity_from_vorticity(s: SpectralField, gamma: float = 1.0) -> tuple[GridField, GridField]:
    """(u, v) = (zeta_y, -zeta_x) with zeta = Delta^-gamma theta."""
    zeta = inverse_laplacian(s, gamma).coeffs
    k1, k2 = _derivative_wavenumbers(s.n)
    return GridField(_to_grid(1j * k2 * zeta)), GridField(_to_grid(-1j * k1 * zeta))


def shell_projectors(s: SpectralField) -> tuple[SpectralField, SpectralField]:
    """Split into the unit-sphere part (|n|^2 = 1) and the remainder."""
    k1, k2 = wavenumbers(s.n)
    unit = (k1 * k1 + k2 * k2) == 1
    c = s.coeffs
    return SpectralField(np.where(unit, c, 0)), SpectralField(np.where(unit, 0, c))


@lru_cache(maxsize=16)
def dealias_mask(n: int) -> np.ndarray:
    k1, k2 = wavenumbers(n)
    m = np.maximum(np.abs(k1), np.abs(k2)) <= n / 3.0
    m.setflags(write=False)
    return m


def dealias(s: SpectralField) -> SpectralField:
    """Two-thirds rule: drop modes with max(|n1|, |n2|) > N/3."""
    return SpectralField(np.where(dealias_mask(s.n), s.coeffs, 0))


def _pad_axis(c: np.ndarray, m: int, axis: int) -> np.ndarray:
    n = c.shape[axis]
    h = n // 2
    c = np.moveaxis(c, axis, 0)
    out = np.zeros((m,) + c.shape[1:], dtype=complex)
    out[:h] = c[:h]
    out[m - h + 1:] = c[h + 1:]
    # split the Nyquist coefficient between +N/2 and -N/2
    out[h] = 0.5 * c[h]
    out[m - h] += 0.5 * c[h]
    return np.moveaxis(out, 0, axis)


def zero_pad(c: np.ndarray, factor: int) -> np.ndarray:
    """Embed normalized coefficients in an (N*factor)^2 lattice."""
    if factor == 1:
        return c
    m = c.shape[0] * factor
    return _pad_axis(_pad_axis(c, m, 1), m, 0)


def refine_evaluate(s: SpectralField, factor: int) -> GridField:
    """Samples of the same trigonometric polynomial on a factor-times finer grid."""
    if factor not in REFINE_FACTORS:
        raise ValueError(f"refinement factor must be one of {REFINE_FACTORS}, got {factor}")
    if factor == 1:
        return spectral_to_grid(s)
    return GridField(_to_grid(zero_pad(s.coeffs, factor)))


def refined_derivative(s: SpectralField, factor: int, order: tuple[int, int]) -> np.ndarray:
    """d^a/dx^a d^b/dy^b of ``s`` sampled on the refined grid (raw array)."""
    if factor not in REFINE_FACTORS:
        raise ValueError(f"refinement factor must be one of {REFINE_FACTORS}, got {factor}")
    a, b = order
    k1, k2 = wavenumbers(s.n)
    d1, d2 = _derivative_wavenumbers(s.n)
    # odd powers use the Nyquist-free wavenumbers so the result stays real
    k1 = d1 if a % 2 else k1
    k2 = d2 if b % 2 else k2
    c = s.coeffs * (1j * k1) ** a * (1j * k2) ** b
    return _to_grid(zero_pad(c, factor))


def evaluate_at(s: SpectralField, x, y) -> np.ndarray:
    """Exact trigonometric sum at arbitrary points (slow; oracle use)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k1, k2 = wavenumbers(s.n)
    nz = np.nonzero(s.coeffs)
    c = s.coeffs[nz]
    kk1 = k1[nz]
    kk2 = k2[nz]
    flat_x = x.reshape(-1, 1)
    flat_y = y.reshape(-1, 1)
    phase = np.exp(1j * (flat_x * kk1 + flat_y * kk2))
    return (phase @ c).real.reshape(x.shape)


def spectral_field(f: GridField | SpectralField, mean_tol: float = 1e-10) -> SpectralField:
    return f if isinstance(f, SpectralField) else grid_to_spectral(f, mean_tol)
