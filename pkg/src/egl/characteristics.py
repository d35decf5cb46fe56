"""Particles, curves and level sets carried by the flow.

Characteristics of theta_t = grad(theta) . u move with -u, i.e. for cos x + cos y
they solve x' = sin y, y' = -sin x.  ``velocity_sample`` returns u itself.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy import ndimage
from shapely.geometry import Point, Polygon, box
from skimage.measure import find_contours

from .diagnostics import theta_star_spectral
from .fieldio import write_csv
from .initial_data import SaddleFrame
from .spectral import (
    TWO_PI,
    GridField,
    SpectralField,
    evaluate_at,
    inverse_laplacian,
    refine_evaluate,
    refined_derivative,
    spectral_field,
)

VELOCITY_REFINE = 2
CONTOUR_REFINE = 4
# thin filaments need sub-cell resolution; marching squares runs on a spline resampling
CONTOUR_UPSAMPLE = 4
PIXEL_SUBDIVISION = 8


class ProviderGap(LookupError):
    """Requested time lies outside the stored snapshots."""


# --- off-grid velocity ---------------------------------------------------------


class VelocityInterpolator:
    """Cubic-spline interpolation of (zeta_y, -zeta_x) on a refined periodic grid."""

    def __init__(self, s: SpectralField, gamma: float = 1.0, factor: int = VELOCITY_REFINE):
        zeta = inverse_laplacian(s, gamma)
        u = refined_derivative(zeta, factor, (0, 1))
        v = -refined_derivative(zeta, factor, (1, 0))
        self.m = u.shape[0]
        self._cu = ndimage.spline_filter(u, order=3, mode="grid-wrap")
        self._cv = ndimage.spline_filter(v, order=3, mode="grid-wrap")

    def __call__(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        scale = self.m / TWO_PI
        coords = np.stack([(y * scale).ravel(), (x * scale).ravel()])
        kw = dict(order=3, mode="grid-wrap", prefilter=False)
        u = ndimage.map_coordinates(self._cu, coords, **kw).reshape(x.shape)
        v = ndimage.map_coordinates(self._cv, coords, **kw).reshape(x.shape)
        return u, v


def velocity_exact(s: SpectralField, gamma: float, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Direct trigonometric summation of u at arbitrary points (oracle mode)."""
    zeta = inverse_laplacian(s, gamma)
    from .spectral import _derivative_wavenumbers

    k1, k2 = _derivative_wavenumbers(s.n)
    zy = SpectralField(1j * k2 * zeta.coeffs)
    zx = SpectralField(1j * k1 * zeta.coeffs)
    return evaluate_at(zy, x, y), -evaluate_at(zx, x, y)


def velocity_sample(s: SpectralField, gamma: float, p, exact: bool = False) -> np.ndarray:
    """u = (zeta_y, -zeta_x) at point(s) ``p`` (shape (2,) or (M, 2))."""
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    if exact:
        u, v = velocity_exact(s, gamma, x, y)
    else:
        u, v = VelocityInterpolator(s, gamma)(x, y)
    return np.stack([u, v], axis=-1)


def perturbation_velocity_sup(s: SpectralField, gamma: float = 1.0) -> float:
    """max |g| where u = (-sin y, sin x) + (g1, g2); the part induced by theta - theta*."""
    psi = s - theta_star_spectral(s.n)
    zeta = inverse_laplacian(psi, gamma)
    g1 = refined_derivative(zeta, VELOCITY_REFINE, (0, 1))
    g2 = refined_derivative(zeta, VELOCITY_REFINE, (1, 0))
    return float(max(np.abs(g1).max(), np.abs(g2).max()))


class FieldProvider:
    """Time-indexed snapshots with cubic (four-point Lagrange) interpolation in time."""

    def __init__(self, snapshots, gamma: float = 1.0):
        snaps = sorted(snapshots, key=lambda ts: ts[0])
        if not snaps:
            raise ValueError("no snapshots")
        self.times = [float(t) for t, _ in snaps]
        self._fields = [s for _, s in snaps]
        self._interp: dict[int, VelocityInterpolator] = {}
        self.gamma = gamma

    @classmethod
    def steady(cls, s: SpectralField, gamma: float = 1.0) -> "FieldProvider":
        return cls([(0.0, s)], gamma)

    @property
    def is_steady(self) -> bool:
        return len(self.times) == 1

    def covers(self, t0: float, t1: float) -> bool:
        if self.is_steady:
            return True
        lo, hi = min(t0, t1), max(t0, t1)
        tol = 1e-9
        return lo >= self.times[0] - tol and hi <= self.times[-1] + tol

    def _at(self, i: int) -> VelocityInterpolator:
        if i not in self._interp:
            self._interp[i] = VelocityInterpolator(self._fields[i], self.gamma)
        return self._interp[i]

    def velocity(self, x, y, t: float):
        if self.is_steady:
            return self._at(0)(x, y)
        if not self.covers(t, t):
            raise ProviderGap(f"t={t} outside [{self.times[0]}, {self.times[-1]}]")
        n = len(self.times)
        k = min(4, n)
        pos = bisect.bisect_left(self.times, t)
        start = min(max(pos - k // 2, 0), n - k)
        idx = range(start, start + k)
        ts = [self.times[i] for i in idx]
        u = 0.0
        v = 0.0
        for a, i in enumerate(idx):
            w = 1.0
            for b, tb in enumerate(ts):
                if b != a:
                    w *= (t - tb) / (ts[a] - tb)
            if w == 0.0:
                continue
            ua, va = self._at(i)(x, y)
            u = u + w * ua
            v = v + w * va
        return u, v

    def characteristic(self, pts: np.ndarray, t: float) -> np.ndarray:
        u, v = self.velocity(pts[:, 0], pts[:, 1], t)
        return -np.stack([u, v], axis=-1)


def _rk4(pts: np.ndarray, t: float, h: float, provider: FieldProvider) -> np.ndarray:
    f = provider.characteristic
    k1 = f(pts, t)
    k2 = f(pts + 0.5 * h * k1, t + 0.5 * h)
    k3 = f(pts + 0.5 * h * k2, t + 0.5 * h)
    k4 = f(pts + h * k3, t + h)
    return pts + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def trace(points, t0: float, t1: float, provider: FieldProvider, dt: float = 1e-2, wrap: bool = True) -> np.ndarray:
    """Carry points along x' = -u(x, t) from t0 to t1 with RK4 (backward if t1 < t0)."""
    if not provider.covers(t0, t1):
        raise ProviderGap(f"provider does not cover [{t0}, {t1}]")
    pts = np.array(points, dtype=float).reshape(-1, 2)
    span = t1 - t0
    if span == 0:
        return pts
    m = max(1, int(np.ceil(abs(span) / dt - 1e-9)))
    h = span / m
    for k in range(m):
        pts = _rk4(pts, t0 + k * h, h, provider)
    return np.mod(pts, TWO_PI) if wrap else pts


# --- polylines -----------------------------------------------------------------


@dataclass(eq=False)
class Polyline:
    vertices: np.ndarray
    closed: bool = False
    max_seg: float = np.inf
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)

    def segments(self) -> np.ndarray:
        v = self.vertices
        if self.closed:
            return np.roll(v, -1, axis=0) - v
        return np.diff(v, axis=0)

    def length(self) -> float:
        return float(np.hypot(*self.segments().T).sum())

    def area(self) -> float:
        """Signed shoelace area (closed curves only)."""
        return shoelace_area(self.vertices)

    def refined(self, max_seg: float | None = None) -> "Polyline":
        """Split every segment longer than ``max_seg`` into equal pieces."""
        max_seg = self.max_seg if max_seg is None else max_seg
        v = self.vertices
        if not np.isfinite(max_seg) or len(v) < 2:
            return Polyline(v.copy(), self.closed, max_seg, dict(self.meta))
        seg = self.segments()
        pieces = np.maximum(1, np.ceil(np.hypot(*seg.T) / max_seg - 1e-12).astype(int))
        if np.all(pieces == 1):
            return Polyline(v.copy(), self.closed, max_seg, dict(self.meta))
        owner = np.repeat(np.arange(len(seg)), pieces)
        start = np.repeat(np.cumsum(pieces) - pieces, pieces)
        frac = (np.arange(owner.size) - start) / pieces[owner]
        out = v[owner] + frac[:, None] * seg[owner]
        if not self.closed:
            out = np.vstack([out, v[-1:]])
        return Polyline(out, self.closed, max_seg, dict(self.meta))


def shoelace_area(v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def point_in_polygon(p, v: np.ndarray) -> bool:
    """Even-odd ray casting."""
    x, y = float(p[0]), float(p[1])
    xs, ys = v[:, 0], v[:, 1]
    xn, yn = np.roll(xs, -1), np.roll(ys, -1)
    crosses = (ys > y) != (yn > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = xs + (y - ys) * (xn - xs) / (yn - ys)
    return bool(np.count_nonzero(crosses & (x < xint)) % 2)


def trace_polyline(
    poly: Polyline,
    t0: float,
    t1: float,
    provider: FieldProvider,
    dt: float = 1e-2,
    max_seg: float | None = None,
) -> Polyline:
    """Advect a curve, re-refining after every substep so stretched pieces stay resolved.

    Vertices are kept in unwrapped coordinates so the curve stays connected.
    """
    if not provider.covers(t0, t1):
        raise ProviderGap(f"provider does not cover [{t0}, {t1}]")
    max_seg = poly.max_seg if max_seg is None else max_seg
    cur = poly.refined(max_seg)
    span = t1 - t0
    m = max(1, int(np.ceil(abs(span) / dt - 1e-9)))
    h = span / m
    for k in range(m):
        cur = Polyline(_rk4(cur.vertices, t0 + k * h, h, provider), cur.closed, max_seg, cur.meta)
        cur = cur.refined()
    return cur


# --- level curves ----------------------------------------------------------------


def contour_polylines(values: np.ndarray, level: float, x0: float, y0: float, h: float) -> list[Polyline]:
    """Marching-squares contours of ``values[j, i]`` sampled at (x0 + i*h, y0 + j*h).

    Values outside the region of interest should already be set below ``level``;
    the array is padded with low values so every contour closes.
    """
    low = min(float(np.nanmin(values)), level) - 1.0
    padded = np.pad(np.nan_to_num(values, nan=low), 1, constant_values=low)
    out = []
    for c in find_contours(padded, level):
        xy = np.column_stack([x0 + (c[:, 1] - 1) * h, y0 + (c[:, 0] - 1) * h])
        closed = np.allclose(xy[0], xy[-1])
        if closed:
            xy = xy[:-1]
        if len(xy) >= 3:
            out.append(Polyline(xy, closed=closed))
    return out


def _as_spectral(f) -> SpectralField:
    return spectral_field(f)


def refined_patch(
    fine: np.ndarray,
    frame: SaddleFrame,
    window: tuple[float, float, float, float],
    margin: float,
    upsample: int = 1,
) -> tuple[np.ndarray, float, float, float]:
    """Samples covering an (alpha, beta) window: a cut of the refined periodic grid, or
    with ``upsample`` > 1 a cubic-spline resampling of it at spacing h / upsample."""
    m = fine.shape[0]
    h = TWO_PI / m
    a0, a1, b0, b1 = window
    corners = np.array([[a, b] for a in (a0, a1) for b in (b0, b1)])
    cx, cy = frame.from_alpha_beta(corners[:, 0], corners[:, 1])
    i0 = int(np.floor((cx.min() - margin) / h))
    i1 = int(np.ceil((cx.max() + margin) / h))
    j0 = int(np.floor((cy.min() - margin) / h))
    j1 = int(np.ceil((cy.max() + margin) / h))
    if upsample == 1:
        ii = np.arange(i0, i1 + 1) % m
        jj = np.arange(j0, j1 + 1) % m
        return fine[np.ix_(jj, ii)], i0 * h, j0 * h, h
    fi = i0 + np.arange((i1 - i0) * upsample + 1) / upsample
    fj = j0 + np.arange((j1 - j0) * upsample + 1) / upsample
    J, I = np.meshgrid(fj, fi, indexing="ij")
    vals = ndimage.map_coordinates(
        _spline_coeffs(fine), np.stack([J.ravel(), I.ravel()]), order=3, mode="grid-wrap", prefilter=False
    ).reshape(J.shape)
    return vals, i0 * h, j0 * h, h / upsample


def extract_level_curve(
    f,
    level: float,
    frame: SaddleFrame,
    window: tuple[float, float, float, float],
    factor: int = CONTOUR_REFINE,
) -> list[Polyline]:
    """Closed level curves of ``{f > level}`` within an (alpha, beta) window, in (alpha, beta).

    Pieces of the window edge close curves that leave the window.
    """
    s = _as_spectral(f)
    fine = refine_evaluate(s, factor).values
    return _window_contours(fine, level, frame, window)


def _window_contours(fine, level, frame, window, upsample: int = CONTOUR_UPSAMPLE) -> list[Polyline]:
    patch, x0, y0, h = refined_patch(fine, frame, window, 2 * TWO_PI / fine.shape[0], upsample)
    ny, nx = patch.shape
    xs = x0 + h * np.arange(nx)
    ys = y0 + h * np.arange(ny)
    X, Y = np.meshgrid(xs, ys)
    a, b = frame.to_alpha_beta(X, Y, periodic=False)
    a0, a1, b0, b1 = window
    outside = (a < a0) | (a > a1) | (b < b0) | (b > b1)
    patch = np.where(outside, -np.inf, patch)
    if not np.any(patch > level):
        return []
    finite_min = float(np.min(patch[np.isfinite(patch)]))
    patch = np.where(np.isfinite(patch), patch, min(finite_min, level) - 1.0)
    out = []
    for poly in contour_polylines(patch, level, x0, y0, h):
        if not poly.closed:
            continue
        al, be = frame.to_alpha_beta(poly.vertices[:, 0], poly.vertices[:, 1], periodic=False)
        out.append(Polyline(np.column_stack([al, be]), closed=True))
    return out


def write_polylines(path, polylines: list[Polyline], indices: list[int] | None = None) -> None:
    """CSV rows (n, vertex_index, alpha, beta)."""
    indices = indices if indices is not None else list(range(len(polylines)))
    rows = []
    for n, poly in zip(indices, polylines):
        for k, (a, b) in enumerate(poly.vertices):
            rows.append((n, k, a, b))
    write_csv(path, ("n", "vertex_index", "alpha", "beta"), rows)


# --- S_n accounting --------------------------------------------------------------


@dataclass
class SnRecord:
    n: int
    t: float
    area_Sn: float
    area_Sn2: float
    eps_box: float
    grad_sup: float = float("nan")
    area_pixel: float = float("nan")
    area_Sn2_pixel: float = float("nan")
    symmetry_mismatch: float = float("nan")
    symmetry_mismatch_pixel: float = float("nan")
    flags: list = field(default_factory=list)
    polygon: object = None

    CSV_HEADER = (
        "n",
        "area_Sn",
        "area_Sn2",
        "grad_sup",
        "flags",
        "t",
        "area_pixel",
        "area_Sn2_pixel",
        "symmetry_mismatch",
        "symmetry_mismatch_pixel",
    )

    def row(self) -> tuple:
        return (
            self.n,
            self.area_Sn,
            self.area_Sn2,
            self.grad_sup,
            "|".join(self.flags) or "ok",
            self.t,
            self.area_pixel,
            self.area_Sn2_pixel,
            self.symmetry_mismatch,
            self.symmetry_mismatch_pixel,
        )


def _largest(geom):
    if geom.is_empty:
        return geom
    if geom.geom_type == "Polygon":
        return geom
    polys = [g for g in getattr(geom, "geoms", []) if g.geom_type == "Polygon"]
    return max(polys, key=lambda g: g.area) if polys else Polygon()


def _component_with(geom, pt: Point):
    if geom.is_empty:
        return geom, False
    parts = [geom] if geom.geom_type == "Polygon" else [g for g in geom.geoms if g.geom_type == "Polygon"]
    hits = [g for g in parts if g.buffer(1e-12).contains(pt)]
    if hits:
        return max(hits, key=lambda g: g.area), len(hits) > 1
    return Polygon(), False


def polygon_area(poly: Polygon) -> float:
    """Shoelace area of a polygon with holes."""
    if poly.is_empty:
        return 0.0
    a = abs(shoelace_area(np.asarray(poly.exterior.coords)[:-1]))
    for ring in poly.interiors:
        a -= abs(shoelace_area(np.asarray(ring.coords)[:-1]))
    return a


def sn_region(
    fine: np.ndarray,
    frame: SaddleFrame,
    eps: float,
    level: float = 3.0,
    beta_half: float = 0.1,
) -> tuple[Polygon, list[str]]:
    """{theta > level} component around the frame centre, cut to |alpha| <= 3 eps, |beta| < beta_half."""
    flags: list[str] = []
    margin = 4.0 * TWO_PI / fine.shape[0]
    window = (-3 * eps - margin, 3 * eps + margin, -beta_half - margin, beta_half + margin)
    curves = _window_contours(fine, level, frame, window)
    if not curves:
        return Polygon(), ["no_level_curve"]
    origin = (0.0, 0.0)
    around = [c for c in curves if point_in_polygon(origin, c.vertices)]
    if not around:
        return Polygon(), ["center_outside"]
    if len(around) > 1:
        flags.append("ambiguous")
    outer = max(around, key=lambda c: abs(c.area()))
    ring = shapely.make_valid(Polygon(outer.vertices))
    # inner curves nested in the chosen one bound holes of {theta > level}
    for c in curves:
        if any(c is o for o in around):
            continue
        inner = Polygon(c.vertices)
        if inner.is_valid and ring.contains(inner.representative_point()):
            ring = ring.difference(inner) if _is_hole(fine, c, frame, level) else ring
    clipped = ring.intersection(box(-3 * eps, -beta_half, 3 * eps, beta_half))
    region, ambiguous = _component_with(clipped, Point(origin))
    if ambiguous:
        flags.append("ambiguous")
    if region.is_empty:
        flags.append("center_outside")
    return region, flags


def _is_hole(fine, curve: Polyline, frame: SaddleFrame, level: float) -> bool:
    # a nested curve bounds a hole when the field inside it is below the level
    p = Polygon(curve.vertices).representative_point()
    x, y = frame.from_alpha_beta(p.x, p.y)
    m = fine.shape[0]
    i = int(round(x / TWO_PI * m)) % m
    j = int(round(y / TWO_PI * m)) % m
    return bool(fine[j, i] < level)


def pixel_region(
    fine: np.ndarray,
    frame: SaddleFrame,
    eps: float,
    level: float = 3.0,
    beta_half: float = 0.1,
    subdivision: int = PIXEL_SUBDIVISION,
):
    """Indicator quadrature of the same set on a sub-grid centred on the frame centre.

    Returns (mask, pixel area in (alpha, beta) units, alpha, beta) or None when the
    centre is not in the set.
    """
    m = fine.shape[0]
    h = TWO_PI / m / subdivision
    half = 3 * eps + beta_half
    k = int(np.ceil(half / h))
    offs = h * np.arange(-k, k + 1)
    dx, dy = np.meshgrid(offs, offs)
    x = frame.center[0] + dx
    y = frame.center[1] + dy
    coeffs = _spline_coeffs(fine)
    scale = m / TWO_PI
    vals = ndimage.map_coordinates(
        coeffs, np.stack([(y * scale).ravel(), (x * scale).ravel()]), order=3, mode="grid-wrap", prefilter=False
    ).reshape(x.shape)
    a, b = frame.to_alpha_beta(x, y, periodic=False)
    inside = (vals > level) & (np.abs(a) <= 3 * eps) & (np.abs(b) < beta_half)
    labels, _ = ndimage.label(inside)
    centre = labels[k, k]
    if centre == 0:
        return None
    mask = labels == centre
    return mask, h * h / 2.0, a, b


_SPLINE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _spline_coeffs(fine: np.ndarray) -> np.ndarray:
    key = id(fine)
    hit = _SPLINE_CACHE.get(key)
    if hit is not None and hit[0] is fine:
        return hit[1]
    coeffs = ndimage.spline_filter(fine, order=3, mode="grid-wrap")
    _SPLINE_CACHE.clear()
    _SPLINE_CACHE[key] = (fine, coeffs)
    return coeffs


def sn_record(
    s: SpectralField,
    n: int,
    t: float,
    frame: SaddleFrame,
    eps: float,
    level: float = 3.0,
    beta_half: float = 0.1,
    grad_sup: float = float("nan"),
) -> SnRecord:
    fine = refine_evaluate(s, CONTOUR_REFINE).values
    region, flags = sn_region(fine, frame, eps, level, beta_half)
    rec = SnRecord(n=n, t=t, area_Sn=0.0, area_Sn2=0.0, eps_box=eps, grad_sup=grad_sup, flags=flags)
    if not region.is_empty:
        rec.area_Sn = polygon_area(region)
        inner = region.intersection(box(-2 * eps, -beta_half, 2 * eps, beta_half))
        inner_area = sum(polygon_area(g) for g in _polygons(inner))
        rec.area_Sn2 = max(rec.area_Sn - inner_area, 0.0)
        mirrored = shapely.affinity.scale(region, -1.0, -1.0, origin=(0.0, 0.0))
        diff = region.symmetric_difference(mirrored)
        rec.symmetry_mismatch = diff.area / rec.area_Sn if rec.area_Sn > 0 else float("nan")
        rec.polygon = region
    px = pixel_region(fine, frame, eps, level, beta_half)
    if px is None:
        rec.area_pixel = 0.0
        rec.area_Sn2_pixel = 0.0
    else:
        mask, cell, a, _ = px
        count = int(mask.sum())
        rec.area_pixel = count * cell
        rec.area_Sn2_pixel = int((mask & (np.abs(a) > 2 * eps)).sum()) * cell
        rec.symmetry_mismatch_pixel = int((mask ^ mask[::-1, ::-1]).sum()) / count
    return rec


def _polygons(geom):
    if geom.is_empty:
        return []
    if geom.geom_type == "Polygon":
        return [geom]
    return [g for g in getattr(geom, "geoms", []) if g.geom_type == "Polygon"]


def sn_accounting(
    checkpoints,
    frame: SaddleFrame,
    eps: float,
    level: float = 3.0,
    beta_half: float = 0.1,
    integer_times: bool = True,
) -> list[SnRecord]:
    """Area bookkeeping of the level-set region around a saddle at each checkpoint.

    With ``integer_times`` only checkpoints at t = 0, 1, 2, ... are used.
    """
    records = []
    for ck in checkpoints:
        t = float(ck.t)
        if integer_times and abs(t - round(t)) > 1e-9:
            continue
        g = ck.diagnostics.grad_sup if ck.diagnostics is not None else float("nan")
        records.append(sn_record(ck.field, int(round(t)), t, frame, eps, level, beta_half, g))
    return records


def write_sn_records(path, records: list[SnRecord]) -> None:
    write_csv(path, SnRecord.CSV_HEADER, (r.row() for r in records))


def as_grid(f) -> GridField:
    from .spectral import spectral_to_grid

    return f if isinstance(f, GridField) else spectral_to_grid(f)
