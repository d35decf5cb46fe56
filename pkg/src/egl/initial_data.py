"""Initial data: the cellular state cos x + cos y and its two perturbation families."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import exp1

from .spectral import TWO_PI, GridField, check_resolution, grid_points

SQRT2 = np.sqrt(2.0)


def wrap(d):
    """Displacement reduced to [-pi, pi)."""
    return (np.asarray(d, dtype=float) + np.pi) % TWO_PI - np.pi


@dataclass(frozen=True)
class SaddleFrame:
    """Hyperbolic point of cos x + cos y with rotated (xi, eta) and scaled (alpha, beta) axes.

    xi runs along the expanding direction and eta along the contracting one;
    alpha = xi / sqrt(2), beta = eta / sqrt(2).  At (pi, 0) the expanding direction
    is the diagonal (1, 1).  ``quarter_turns`` rotates that frame by multiples of
    pi/2 so that the frame at (0, pi), where the expanding direction is (1, -1),
    is the image of the one at (pi, 0) under the rotation symmetry.
    """

    center: tuple[float, float]
    quarter_turns: int = 0

    def _unrotate(self, dx, dy):
        for _ in range(self.quarter_turns % 4):
            dx, dy = dy, -dx
        return dx, dy

    def _rotate(self, dx, dy):
        for _ in range(self.quarter_turns % 4):
            dx, dy = -dy, dx
        return dx, dy

    def to_xi_eta(self, x, y, periodic: bool = True):
        dx = np.asarray(x, dtype=float) - self.center[0]
        dy = np.asarray(y, dtype=float) - self.center[1]
        if periodic:
            dx, dy = wrap(dx), wrap(dy)
        dx, dy = self._unrotate(dx, dy)
        return (dy + dx) / SQRT2, (dy - dx) / SQRT2

    def to_alpha_beta(self, x, y, periodic: bool = True):
        xi, eta = self.to_xi_eta(x, y, periodic)
        return xi / SQRT2, eta / SQRT2

    def from_xi_eta(self, xi, eta):
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        dx, dy = self._rotate((xi - eta) / SQRT2, (xi + eta) / SQRT2)
        return self.center[0] + dx, self.center[1] + dy

    def from_alpha_beta(self, alpha, beta):
        return self.from_xi_eta(SQRT2 * np.asarray(alpha), SQRT2 * np.asarray(beta))

    def derivative_weights(self) -> tuple[tuple[int, int], tuple[int, int]]:
        """(d/dalpha, d/dbeta) as integer combinations (a_x, a_y) of d/dx and d/dy."""
        ax, ay = self._rotate(1, 1)
        bx, by = self._rotate(-1, 1)
        return (ax, ay), (bx, by)


A1 = SaddleFrame((np.pi, 0.0))
A2 = SaddleFrame((0.0, np.pi), quarter_turns=1)


def saddle_points() -> list[SaddleFrame]:
    """The two saddle classes of a fundamental cell, D_j = pi*(j1, j2) with j1 != j2 mod 2."""
    return [A1, A2]


def is_saddle(x: float, y: float, tol: float = 1e-12) -> bool:
    j1, j2 = x / np.pi, y / np.pi
    r1, r2 = round(j1), round(j2)
    if abs(j1 - r1) > tol or abs(j2 - r2) > tol:
        return False
    return (r1 % 2) != (r2 % 2)


def bump(r):
    """exp(1 - 1/(1 - r^2)) on r < 1, zero beyond; bump(0) = 1."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1.0, 1.0, 0.0)
    mid = (t > 0.0) & (t < 1.0)
    a = np.exp(-1.0 / t[mid])
    b = np.exp(-1.0 / (1.0 - t[mid]))
    out[mid] = a / (a + b)
    return out


def cutoff(u, inner: float, outer: float):
    """1 for |u| <= inner, 0 for |u| >= outer, smooth and monotone between."""
    return 1.0 - smooth_step((np.abs(u) - inner) / (outer - inner))


def smooth_positive_part(u, width: float):
    """int_0^u exp(-width/v) dv: zero for u <= 0, convex, all derivatives vanish at 0."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    t = u[pos] / width
    out[pos] = width * (t * np.exp(-1.0 / t) - exp1(1.0 / t))
    return out


def stationary_theta_star(n: int) -> GridField:
    n = check_resolution(n)
    x, y = grid_points(n)
    return GridField(np.cos(x) + np.cos(y))


def theta_star_values(x, y):
    return np.cos(x) + np.cos(y)


# --- symmetry group actions on grid arrays -------------------------------------


def _reflect(v: np.ndarray) -> np.ndarray:
    """f(-x, -y) on the grid."""
    return np.roll(v[::-1, ::-1], 1, axis=(0, 1))


def _rotate(v: np.ndarray) -> np.ndarray:
    """f(-y, x) on the grid: out[j, i] = v[i, -j]."""
    n = v.shape[0]
    neg = (-np.arange(n)) % n
    return v[np.arange(n)[None, :], neg[:, None]]


def group_images(v: np.ndarray, group: str) -> list[np.ndarray]:
    if group == "even":
        return [v, _reflect(v)]
    if group in ("rot4", "both"):
        # the pi/2 rotations contain the reflection through the origin
        if v.shape[0] % 4:
            raise ValueError("rotation by pi/2 needs N divisible by 4")
        r1 = _rotate(v)
        r2 = _rotate(r1)
        return [v, r1, r2, _rotate(r2)]
    raise ValueError(f"unknown symmetry group {group!r}")


def symmetrize(f: GridField, group: str = "both") -> GridField:
    """Group average; summing sorted images makes the result exactly invariant."""
    stack = np.sort(np.stack(group_images(f.values, group)), axis=0)
    return GridField(stack.sum(axis=0) / stack.shape[0])


# --- Theorem 1 data -----------------------------------------------------------


@dataclass(frozen=True)
class Theorem1Params:
    delta: float = 0.05
    xi_half: float = 0.1
    seg_half: float = 0.08
    ell_a: float = 0.09
    f_max: float = 4.0
    f_min: float = -1.0
    blend_width: float = 0.1
    smoothing: float = 0.005

    @property
    def ell_b(self) -> float:
        return self.delta / 2.0

    def validate(self) -> None:
        if not 0.0 < self.delta <= 0.1:
            raise ValueError(f"delta must lie in (0, 0.1], got {self.delta}")
        if not self.seg_half < self.ell_a < self.xi_half:
            raise ValueError("need seg_half < ell_a < xi_half")
        if not 0.0 < self.blend_width <= 1.0 - self.ell_a / self.xi_half + 1e-12:
            raise ValueError("blend collar must not reach the f = 3 curve")


def rectangle_profile(xi, eta, p: Theorem1Params):
    """The profile f on the rectangle: max 4 on the segment, 3 on a convex curve, >= -1."""
    s = smooth_positive_part(np.abs(xi) - p.seg_half, p.smoothing)
    s_ref = smooth_positive_part(np.array(p.ell_a - p.seg_half), p.smoothing)
    d = (s / s_ref) ** 2 + (np.asarray(eta) / p.ell_b) ** 2
    # h(0) = 0, h(1) = 1/5, h -> 1: f = 4 - 5h spans (-1, 4]
    rate = -np.log(1.0 - (p.f_max - 3.0) / (p.f_max - p.f_min))
    h = 1.0 - np.exp(-rate * d)
    return p.f_max - (p.f_max - p.f_min) * h


def rectangle_weight(xi, eta, p: Theorem1Params):
    """Welding cutoff: 1 on the inner part of the rectangle, 0 outside it."""
    keep = 1.0 - p.blend_width
    return cutoff(xi, keep * p.xi_half, p.xi_half) * cutoff(eta, keep * p.delta, p.delta)


def _rectangle_deviation(x, y, p: Theorem1Params):
    xi, eta = A1.to_xi_eta(x, y)
    w = rectangle_weight(xi, eta, p)
    inside = w > 0
    out = np.zeros_like(w)
    out[inside] = w[inside] * (
        rectangle_profile(xi[inside], eta[inside], p) - theta_star_values(x[inside], y[inside])
    )
    return out


def theorem1_parts(n: int, p: Theorem1Params) -> tuple[np.ndarray, np.ndarray]:
    """(rectangle deviations, unit-amplitude bump at the origin) before the mean fix."""
    p.validate()
    x, y = grid_points(n)
    # the rotated rectangle at (0, pi) is the image of the one at (pi, 0)
    dev = _rectangle_deviation(x, y, p) + _rectangle_deviation(y, -x, p)
    r = np.hypot(wrap(x), wrap(y))
    return dev, bump(r / np.sqrt(p.delta))


def build_theorem1_data(n: int, p: Theorem1Params | None = None) -> GridField:
    p = p or Theorem1Params()
    n = check_resolution(n)
    if n % 4:
        raise ValueError("N must be divisible by 4")
    dev, phi = theorem1_parts(n, p)
    base = stationary_theta_star(n).values
    dev = symmetrize(GridField(dev)).values
    phi = symmetrize(GridField(phi)).values
    amp = dev.mean() / phi.mean()
    if amp <= 0:
        raise ValueError("mean correction would need a negative bump; data not constructible")
    theta = base + dev - amp * phi
    theta = theta - theta.mean()
    out = GridField(theta)
    _check_symmetric(out)
    return out


def _check_symmetric(f: GridField, tol: float = 1e-12) -> None:
    v = f.values
    scale = max(float(np.abs(v).max()), 1e-14)
    for img in group_images(v, "both")[1:]:
        if np.abs(img - v).max() > tol * scale:
            raise ValueError("symmetry enforcement failed")


# --- Theorem 2 data -----------------------------------------------------------


@dataclass(frozen=True)
class Theorem2Params:
    epsilon: float = 0.05
    compensator_radius: float = 0.5

    def validate(self) -> None:
        if not 0.0 < self.epsilon <= 0.1:
            raise ValueError(f"epsilon must lie in (0, 0.1], got {self.epsilon}")


def build_theorem2_data(n: int, p: Theorem2Params | None = None) -> GridField:
    """cos x + cos y plus eps*bump(|(alpha, beta)|/eps) at each saddle, mean fixed at 0."""
    p = p or Theorem2Params()
    p.validate()
    n = check_resolution(n)
    if n % 4:
        raise ValueError("N must be divisible by 4")
    x, y = grid_points(n)
    bumps = np.zeros_like(x)
    for frame in saddle_points():
        a, b = frame.to_alpha_beta(x, y)
        bumps += p.epsilon * bump(np.hypot(a, b) / p.epsilon)
    comp = bump(np.hypot(wrap(x), wrap(y)) / p.compensator_radius)
    bumps = symmetrize(GridField(bumps)).values
    comp = symmetrize(GridField(comp)).values
    amp = -bumps.mean() / comp.mean()
    theta = stationary_theta_star(n).values + bumps + amp * comp
    theta = theta - theta.mean()
    out = GridField(theta)
    _check_symmetric(out)
    return out


BUILDERS = {
    "theta-star": lambda n, **kw: stationary_theta_star(n),
    "thm1": lambda n, **kw: build_theorem1_data(n, Theorem1Params(**kw)),
    "thm2": lambda n, **kw: build_theorem2_data(n, Theorem2Params(**kw)),
}


def build(family: str, n: int, **params) -> GridField:
    try:
        builder = BUILDERS[family]
    except KeyError:
        raise ValueError(f"unknown data family {family!r}; expected one of {sorted(BUILDERS)}")
    return builder(n, **params)
