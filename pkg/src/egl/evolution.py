"""Pseudo-spectral time stepping of theta_t = grad(theta) . grad_perp(zeta), zeta = Delta^-gamma theta.

The solver works on the half spectrum (rfft layout) internally; public
functions accept and return :class:`SpectralField` values.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .diagnostics import DiagnosticsRecord, measure
from .spectral import SpectralField, dealias, inverse_laplacian, refined_derivative

log = logging.getLogger(__name__)

CFL_NUMBER = 0.5
VELOCITY_FLOOR = 1e-8
GAMMA_RANGE = (0.5, 1.5)


class CFLViolation(ValueError):
    """Requested step exceeds the CFL bound."""


class BlowUp(FloatingPointError):
    """Non-finite coefficients appeared."""


@dataclass(frozen=True)
class SimState:
    t: float
    field: SpectralField
    gamma: float = 1.0
    dt: float | None = None


@dataclass(frozen=True)
class Checkpoint:
    t: float
    field: SpectralField
    diagnostics: DiagnosticsRecord | None


class Trajectory(list):
    """Checkpoints in time order, plus run metadata."""

    def __init__(self, checkpoints=(), blew_up: bool = False, snapshots=None, dt: float = 0.0):
        super().__init__(checkpoints)
        self.blew_up = blew_up
        self.snapshots = snapshots if snapshots is not None else []
        self.dt = dt


def check_gamma(gamma: float) -> float:
    lo, hi = GAMMA_RANGE
    if not lo <= gamma <= hi:
        raise ValueError(f"gamma must lie in [{lo}, {hi}], got {gamma}")
    return float(gamma)


# --- half-spectrum kernel ------------------------------------------------------


@dataclass(frozen=True)
class _Kernel:
    n: int
    gamma: float
    ik1: np.ndarray = field(repr=False)
    ik2: np.ndarray = field(repr=False)
    inv_lap: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)

    def to_half(self, s: SpectralField) -> np.ndarray:
        return np.array(s.coeffs[:, : self.n // 2 + 1])

    def to_full(self, c: np.ndarray) -> SpectralField:
        n = self.n
        full = np.empty((n, n), dtype=complex)
        full[:, : n // 2 + 1] = c
        rows = (-np.arange(n)) % n
        cols = n - np.arange(n // 2 + 1, n)
        full[:, n // 2 + 1 :] = np.conj(c[rows][:, cols])
        return SpectralField(full)

    def _grid(self, c: np.ndarray) -> np.ndarray:
        return sfft.irfft2(c, s=(self.n, self.n)) * (self.n * self.n)

    def rhs(self, c: np.ndarray) -> np.ndarray:
        zeta = c * self.inv_lap
        tx = self._grid(self.ik1 * c)
        ty = self._grid(self.ik2 * c)
        zx = self._grid(self.ik1 * zeta)
        zy = self._grid(self.ik2 * zeta)
        out = sfft.rfft2(tx * zy - ty * zx) / (self.n * self.n)
        out *= self.mask
        out[0, 0] = 0.0
        return out

    def rk4(self, c: np.ndarray, dt: float) -> np.ndarray:
        k1 = self.rhs(c)
        k2 = self.rhs(c + 0.5 * dt * k1)
        k3 = self.rhs(c + 0.5 * dt * k2)
        k4 = self.rhs(c + dt * k3)
        out = c + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[0, 0] = 0.0
        out[self.n // 2, :] = 0.0
        out[:, self.n // 2] = 0.0
        return out


@lru_cache(maxsize=8)
def _kernel(n: int, gamma: float) -> _Kernel:
    k1 = np.arange(n // 2 + 1, dtype=float)
    k2 = sfft.fftfreq(n, 1.0 / n)
    K1, K2 = np.meshgrid(k1, k2)
    ksq = K1**2 + K2**2
    ksq[0, 0] = 1.0
    inv = ksq ** (-gamma)
    inv[0, 0] = 0.0
    d1 = K1.copy()
    d1[:, n // 2] = 0.0
    d2 = K2.copy()
    d2[n // 2, :] = 0.0
    mask = (np.maximum(np.abs(K1), np.abs(K2)) <= n / 3.0).astype(float)
    return _Kernel(n, gamma, 1j * d1, 1j * d2, inv, mask)


# --- public operations ---------------------------------------------------------


def rhs(s: SpectralField, gamma: float = 1.0) -> SpectralField:
    """Dealiased pseudo-spectral theta_x zeta_y - theta_y zeta_x."""
    k = _kernel(s.n, float(gamma))
    return k.to_full(k.rhs(k.to_half(s)))


def max_velocity(s: SpectralField, gamma: float = 1.0, factor: int = 2) -> float:
    """Largest velocity component magnitude on the refined grid."""
    zeta = inverse_laplacian(s, gamma)
    u = refined_derivative(zeta, factor, (0, 1))
    v = refined_derivative(zeta, factor, (1, 0))
    return float(max(np.abs(u).max(), np.abs(v).max()))


def cfl_dt(state: SimState) -> float:
    dx = 2.0 * np.pi / state.field.n
    return CFL_NUMBER * dx / max(max_velocity(state.field, state.gamma), VELOCITY_FLOOR)


def step(state: SimState, dt: float) -> SimState:
    """One classical RK4 step; rejects steps above the CFL bound."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    bound = cfl_dt(state)
    if dt > bound * (1.0 + 1e-12):
        raise CFLViolation(f"dt={dt:.3e} exceeds CFL bound {bound:.3e}")
    k = _kernel(state.field.n, float(state.gamma))
    c = k.rk4(k.to_half(state.field), dt)
    if not np.all(np.isfinite(c)):
        raise BlowUp(f"non-finite coefficients at t={state.t + dt:.6g}")
    return SimState(state.t + dt, k.to_full(c), state.gamma, dt)


def _substeps(span: float, dt: float) -> int:
    return max(1, math.ceil(span / dt - 1e-9))


def run(
    initial: SimState,
    t_end: float,
    checkpoint_interval: float,
    dt: float | None = None,
    snapshot_interval: float | None = None,
    diagnostics: bool = True,
    hessian: bool = True,
    project: bool = True,
) -> Trajectory:
    """Advance to ``t_end`` emitting checkpoints every ``checkpoint_interval``.

    The initial field is projected onto the dealiased band first (``project``),
    so the discrete system conserves its quadratic invariants.  ``dt`` defaults
    to the CFL bound of the initial state; whenever a checkpoint finds the
    current step above the bound it is halved.  Optional dense snapshots every
    ``snapshot_interval`` feed the particle tracer.
    """
    if t_end <= initial.t:
        raise ValueError("t_end must exceed the initial time")
    if checkpoint_interval <= 0:
        raise ValueError("checkpoint_interval must be positive")
    gamma = check_gamma(initial.gamma)
    if gamma < 1.0:
        log.info("gamma=%g < 1: global existence of the solution is not known", gamma)
    field0 = dealias(initial.field) if project else initial.field
    kern = _kernel(field0.n, gamma)
    dt = dt if dt is not None else initial.dt
    if dt is None:
        dt = cfl_dt(SimState(initial.t, field0, gamma))

    seg = snapshot_interval or checkpoint_interval
    per_ckpt = checkpoint_interval / seg
    if abs(per_ckpt - round(per_ckpt)) > 1e-9 or round(per_ckpt) < 1:
        raise ValueError("checkpoint_interval must be a multiple of snapshot_interval")
    per_ckpt = int(round(per_ckpt))

    def emit(t: float, s: SpectralField) -> Checkpoint:
        rec = measure(s, t, gamma, hessian=hessian) if diagnostics else None
        return Checkpoint(t, s, rec)

    traj = Trajectory([emit(initial.t, field0)], snapshots=[(initial.t, field0)] if snapshot_interval else None)
    c = kern.to_half(field0)
    t0 = initial.t
    n_seg = max(1, math.ceil((t_end - t0) / seg - 1e-9))
    current = field0
    for k in range(1, n_seg + 1):
        t_next = min(t0 + k * seg, t_end)
        t_prev = min(t0 + (k - 1) * seg, t_end)
        span = t_next - t_prev
        m = _substeps(span, dt)
        h = span / m
        for _ in range(m):
            c = kern.rk4(c, h)
        if not np.all(np.isfinite(c)):
            log.error("blow-up between t=%g and t=%g", t_prev, t_next)
            traj.blew_up = True
            break
        current = kern.to_full(c)
        if snapshot_interval:
            traj.snapshots.append((t_next, current))
        if k % per_ckpt == 0 or k == n_seg:
            traj.append(emit(t_next, current))
            bound = cfl_dt(SimState(t_next, current, gamma))
            while dt > bound:
                dt *= 0.5
                log.warning("step halved to %.3e at t=%g (CFL bound %.3e)", dt, t_next, bound)
    traj.dt = dt
    return traj
