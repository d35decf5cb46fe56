"""Planar model systems near a hyperbolic point and the checks built on them.

Variants (alpha, beta are the scaled saddle coordinates):

- ``flow3``: a' = cos(b) sin(a) + mu1,          b' = -cos(a) sin(b) + mu2
- ``pot``:   a' = a (1 + f1) + f2 b,             b' = -b (1 + g1) + g2 a
- ``flow1``: a' = cos(b) sin(a) + a f1 + b f2,   b' = -cos(a) sin(b) + a g1 + b g2
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

from .characteristics import Polyline
from .fieldio import write_csv
from .initial_data import SaddleFrame
from .spectral import TWO_PI, SpectralField, inverse_laplacian, refined_derivative

MAX_DT = 1e-3
# height of the default starting segment; any neighbourhood of the origin works
DEFAULT_BETA0 = 0.25
LEG = 2.0 * math.log(2.0) / 3.0
VARIANTS = {"flow3": ("mu1", "mu2"), "pot": ("f1", "f2", "g1", "g2"), "flow1": ("f1", "f2", "g1", "g2")}

Perturbation = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


class PerturbationBoundError(ValueError):
    """A supplied perturbation exceeds its declared sup bound."""


# --- perturbations ---------------------------------------------------------------


def zero_perturbation(a, b, t):
    return np.zeros_like(np.asarray(a, dtype=float))


@dataclass(frozen=True)
class ConstantPerturbation:
    value: float

    def __call__(self, a, b, t):
        return np.full_like(np.asarray(a, dtype=float), self.value)


@dataclass(frozen=True)
class TrigPerturbation:
    """sum_k c_k cos(p_k a + q_k b + r_k t + phi_k), with sum |c_k| equal to ``bound``.

    The coefficient normalization makes sup |value| <= bound hold exactly.
    """

    amplitudes: np.ndarray
    freqs: np.ndarray
    phases: np.ndarray

    @classmethod
    def random(
        cls,
        bound: float,
        rng: np.random.Generator,
        terms: int = 6,
        spatial_freq: float = 20.0,
        time_freq: float = 3.0,
    ) -> "TrigPerturbation":
        amps = rng.normal(size=terms)
        amps *= bound / np.abs(amps).sum()
        freqs = np.column_stack(
            [
                rng.uniform(-spatial_freq, spatial_freq, terms),
                rng.uniform(-spatial_freq, spatial_freq, terms),
                rng.uniform(-time_freq, time_freq, terms),
            ]
        )
        return cls(amps, freqs, rng.uniform(0.0, TWO_PI, terms))

    @property
    def bound(self) -> float:
        return float(np.abs(self.amplitudes).sum())

    def __call__(self, a, b, t):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        p, q, r = self.freqs.T
        arg = a[..., None] * p + b[..., None] * q + (r * t + self.phases)
        return np.cos(arg) @ self.amplitudes


def random_perturbations(variant: str, bound: float, seed: int, draws: int) -> list[dict]:
    """Independent perturbation sets from a splittable seed; draw k is the same for any ``draws``."""
    names = VARIANTS[variant]
    out = []
    for child in np.random.SeedSequence(seed).spawn(draws):
        rng = np.random.default_rng(child)
        out.append({name: TrigPerturbation.random(bound, rng) for name in names})
    return out


# --- systems ----------------------------------------------------------------------


@dataclass
class PerturbedSaddleSystem:
    variant: str
    perturbations: dict = field(default_factory=dict)
    bound: float = 0.01

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {sorted(VARIANTS)}")
        names = VARIANTS[self.variant]
        unknown = set(self.perturbations) - set(names)
        if unknown:
            raise ValueError(f"variant {self.variant} has no perturbations {sorted(unknown)}")
        self.perturbations = {n: self.perturbations.get(n, zero_perturbation) for n in names}
        self._bank = self._trig_bank()

    def _trig_bank(self):
        # all-trigonometric (or zero) perturbations are evaluated with a single cos call
        fns = list(self.perturbations.values())
        if not all(isinstance(f, TrigPerturbation) or f is zero_perturbation for f in fns):
            return None
        trig = [(k, f) for k, f in enumerate(fns) if isinstance(f, TrigPerturbation)]
        if not trig:
            return None
        freqs = np.vstack([f.freqs for _, f in trig])
        phases = np.concatenate([f.phases for _, f in trig])
        amps = np.zeros((len(phases), len(fns)))
        row = 0
        for k, f in trig:
            amps[row : row + len(f.phases), k] = f.amplitudes
            row += len(f.phases)
        return freqs, phases, amps

    def evaluate(self, a, b, t) -> dict:
        if self._bank is None:
            return {n: fn(a, b, t) for n, fn in self.perturbations.items()}
        freqs, phases, amps = self._bank
        arg = a[..., None] * freqs[:, 0] + b[..., None] * freqs[:, 1] + (freqs[:, 2] * t + phases)
        vals = np.cos(arg) @ amps
        return {n: vals[..., k] for k, n in enumerate(self.perturbations)}

    def rhs(self, a: np.ndarray, b: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        p = self.evaluate(np.asarray(a, dtype=float), np.asarray(b, dtype=float), t)
        if self.variant == "flow3":
            return np.cos(b) * np.sin(a) + p["mu1"], -np.cos(a) * np.sin(b) + p["mu2"]
        if self.variant == "pot":
            return (
                a * (1.0 + p["f1"]) + p["f2"] * b,
                -b * (1.0 + p["g1"]) + p["g2"] * a,
            )
        return (
            np.cos(b) * np.sin(a) + a * p["f1"] + b * p["f2"],
            -np.cos(a) * np.sin(b) + a * p["g1"] + b * p["g2"],
        )

    def check_bounds(self, box: tuple[float, float, float, float], t_span: tuple[float, float], points: int = 41) -> float:
        """Spot-check every perturbation on a grid over box x time; returns the largest value seen."""
        a = np.linspace(box[0], box[1], points)
        b = np.linspace(box[2], box[3], points)
        A, B = np.meshgrid(a, b)
        worst = 0.0
        for t in np.linspace(t_span[0], t_span[1], 11):
            for name, fn in self.perturbations.items():
                v = float(np.max(np.abs(fn(A, B, t))))
                if v > self.bound * (1.0 + 1e-12):
                    raise PerturbationBoundError(f"|{name}| = {v:.3e} exceeds bound {self.bound:.3e} at t={t:g}")
                worst = max(worst, v)
        return worst


def _rk4_step(sys: PerturbedSaddleSystem, a, b, t, h):
    k1a, k1b = sys.rhs(a, b, t)
    k2a, k2b = sys.rhs(a + 0.5 * h * k1a, b + 0.5 * h * k1b, t + 0.5 * h)
    k3a, k3b = sys.rhs(a + 0.5 * h * k2a, b + 0.5 * h * k2b, t + 0.5 * h)
    k4a, k4b = sys.rhs(a + h * k3a, b + h * k3b, t + h)
    return (
        a + (h / 6.0) * (k1a + 2 * k2a + 2 * k3a + k4a),
        b + (h / 6.0) * (k1b + 2 * k2b + 2 * k3b + k4b),
    )


@dataclass
class SaddleTrajectory:
    """Sampled solutions: ``t`` has shape (K,), ``alpha`` and ``beta`` shape (K, M)."""

    t: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def write_csv(self, path, column: int = 0) -> None:
        rows = zip(self.t, self.alpha[:, column], self.beta[:, column])
        write_csv(path, ("t", "alpha", "beta"), rows)


def integrate_saddle(
    sys: PerturbedSaddleSystem,
    init,
    t_span: tuple[float, float],
    dt: float = MAX_DT,
    check_box: tuple[float, float, float, float] | None = None,
) -> SaddleTrajectory:
    """RK4 solution of the chosen variant for one or many initial points (rows of ``init``).

    Integration runs backward when t_span[1] < t_span[0]; |dt| must not exceed 1e-3.
    """
    if not 0 < dt <= MAX_DT * (1 + 1e-12):
        raise ValueError(f"dt must lie in (0, {MAX_DT}], got {dt}")
    init = np.asarray(init, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(init)):
        raise ValueError("initial data must be finite")
    t0, t1 = map(float, t_span)
    if check_box is not None:
        sys.check_bounds(check_box, (min(t0, t1), max(t0, t1)))
    steps = max(1, math.ceil(abs(t1 - t0) / dt - 1e-9))
    h = (t1 - t0) / steps
    ts = t0 + h * np.arange(steps + 1)
    ts[-1] = t1
    A = np.empty((steps + 1, init.shape[0]))
    B = np.empty_like(A)
    a, b = init[:, 0].copy(), init[:, 1].copy()
    A[0], B[0] = a, b
    for k in range(steps):
        a, b = _rk4_step(sys, a, b, ts[k], h)
        A[k + 1], B[k + 1] = a, b
    return SaddleTrajectory(ts, A, B)


def unperturbed_invariant(a, b):
    """sin(alpha) sin(beta), conserved by flow3 with zero perturbation."""
    return np.sin(a) * np.sin(b)


# --- trapping and escape at unit time ---------------------------------------------------


@dataclass
class LemmaReport:
    name: str
    passed: bool
    counts: dict
    margins: dict
    seeds: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def key_values(self) -> dict:
        kv = {"check": self.name, "pass": str(self.passed).lower()}
        kv.update({f"count.{k}": v for k, v in self.counts.items()})
        kv.update({f"margin.{k}": v for k, v in self.margins.items()})
        kv.update({f"seed.{k}": v for k, v in self.seeds.items()})
        return kv

    def text(self) -> str:
        lines = [f"{self.name}: {'PASS' if self.passed else 'FAIL'}"]
        lines += [f"  {k}: {v}" for k, v in self.counts.items()]
        lines += [f"  worst {k}: {v:.6g}" for k, v in self.margins.items()]
        lines += [f"  note: {n}" for n in self.notes]
        lines.append("")
        lines += [f"{k}={v}" for k, v in self.key_values().items()]
        return "\n".join(lines) + "\n"


def adversaries(eps: float, seed: int, random_draws: int = 5) -> dict[str, dict]:
    """Named perturbation sets for the trapping check, all bounded by 0.01 eps."""
    bound = 0.01 * eps
    out = {
        "zero": {},
        "plus_extreme": {"mu1": ConstantPerturbation(bound), "mu2": ConstantPerturbation(bound)},
        "minus_extreme": {"mu1": ConstantPerturbation(-bound), "mu2": ConstantPerturbation(-bound)},
    }
    for k, p in enumerate(random_perturbations("flow3", bound, seed, random_draws)):
        out[f"random{k}"] = p
    return out


def _sample_initial(eps: float, samples: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    trap = np.column_stack([rng.uniform(-3 * eps, 3 * eps, samples), rng.uniform(-0.1, 0.1, samples)])
    mag = rng.uniform(2 * eps, 3 * eps, samples)
    # open interval: nudge away from the endpoints
    mag = np.clip(mag, 2 * eps * (1 + 1e-9), 3 * eps * (1 - 1e-9))
    sign = rng.choice([-1.0, 1.0], samples)
    escape = np.column_stack([sign * mag, rng.uniform(-0.1, 0.1, samples) * (1 - 1e-9)])
    return trap, escape


def lemma_lll_check(
    eps: float = 0.01,
    samples: int = 1000,
    seed: int = 0,
    random_draws: int = 5,
    strategies: dict | None = None,
    dt: float = MAX_DT,
) -> LemmaReport:
    """Trapping (|beta(1)| < 0.1 from |alpha0| <= 3 eps) and escape (|alpha(1)| > 3 eps from
    2 eps < |alpha0| < 3 eps) under bounded perturbations, with the proof's analytic
    floor and ceiling checked along every trajectory."""
    if eps > 0.01:
        raise ValueError("eps must be at most 0.01")
    if samples < 100:
        raise ValueError("need at least 100 samples")
    seq = np.random.SeedSequence(seed)
    pts_seed, adv_seed = seq.spawn(2)
    trap, escape = _sample_initial(eps, samples, np.random.default_rng(pts_seed))
    strategies = strategies if strategies is not None else adversaries(
        eps, int(adv_seed.generate_state(1)[0]), random_draws
    )
    bound = 0.01 * eps
    g = math.exp(0.9)
    floor_const = bound * (g - 1.0) / 0.9
    counts = {"trajectories": 0, "trap_fail": 0, "escape_fail": 0, "floor_fail": 0, "ceiling_fail": 0, "floor_skipped": 0}
    margins = {"trap": np.inf, "escape": np.inf, "floor": np.inf, "ceiling": np.inf}
    for name, perts in strategies.items():
        sys = PerturbedSaddleSystem("flow3", perts, bound)
        sys.check_bounds((-0.2, 0.2, -0.2, 0.2), (0.0, 1.0))
        tr = integrate_saddle(sys, np.vstack([trap, escape]), (0.0, 1.0), dt)
        A, B = tr.alpha, tr.beta
        At, Bt = A[:, :samples], B[:, :samples]
        Ae, Be = A[:, samples:], B[:, samples:]
        counts["trajectories"] += 2 * samples

        trap_m = 0.1 - np.abs(Bt[-1])
        counts["trap_fail"] += int(np.sum(trap_m <= 0))
        margins["trap"] = min(margins["trap"], float(trap_m.min()))

        esc_m = np.abs(Ae[-1]) - 3 * eps
        counts["escape_fail"] += int(np.sum(esc_m <= 0))
        margins["escape"] = min(margins["escape"], float(esc_m.min()))

        # floor a(1) >= a0 e^0.9 - 0.01 eps (e^0.9 - 1)/0.9 while sign(a) is fixed and
        # the path stays in the box where cos(b) sin(a) >= 0.9 a holds
        s = np.sign(Ae[0])
        in_box = np.all((np.abs(Ae) <= 0.1) & (np.abs(Be) <= 0.1) & (s * Ae > 0), axis=0)
        floor = np.abs(Ae[0]) * g - floor_const
        fl_m = s * Ae[-1] - floor
        counts["floor_skipped"] += int(np.sum(~in_box))
        counts["floor_fail"] += int(np.sum(in_box & (fl_m < -1e-13)))
        if np.any(in_box):
            margins["floor"] = min(margins["floor"], float(fl_m[in_box].min()))

        ceil = 4 * eps * np.exp(tr.t)[:, None]
        ce_m = (ceil - np.abs(A)).min(axis=0)
        counts["ceiling_fail"] += int(np.sum(ce_m <= 0))
        margins["ceiling"] = min(margins["ceiling"], float(ce_m.min()))
    fails = counts["trap_fail"] + counts["escape_fail"] + counts["floor_fail"] + counts["ceiling_fail"]
    return LemmaReport(
        "trapping_escape",
        fails == 0,
        counts,
        margins,
        seeds={"seed": seed},
        notes=[f"strategies: {', '.join(strategies)}", f"eps={eps} samples={samples}"],
    )


# --- curve evolution towards a decaying trajectory --------------------------------------


def in_s1(a, b):
    return np.asarray(b) > 2 * np.abs(a)


def in_s2(a, b):
    return np.asarray(b) > np.abs(a)


def in_omega_plus(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return (a > 0) & (a <= b) & (b <= 2 * a)


def in_omega_minus(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return (a < 0) & (-a <= b) & (b <= -2 * a)


class ReclipError(RuntimeError):
    def __init__(self, message: str, curve: Polyline):
        super().__init__(message)
        self.curve = curve


@dataclass
class CurveEvolutionState:
    curve: Polyline
    n: int = 0
    leg: float = LEG
    t: float = 0.0
    endpoint_exit: list = field(default_factory=list)

    @property
    def sectors(self) -> dict:
        return {"S1": in_s1, "S2": in_s2, "Omega+": in_omega_plus, "Omega-": in_omega_minus}


def initial_segment(beta0: float = 1.0, max_seg: float = 1e-3) -> Polyline:
    """Horizontal segment beta = beta0 joining the two sides of S1."""
    half = beta0 / 2.0
    m = max(2, math.ceil(2 * half / max_seg) + 1)
    a = np.linspace(-half, half, m)
    return Polyline(np.column_stack([a, np.full(m, beta0)]), closed=False, max_seg=max_seg)


def _side_crossing(p, q):
    """Point where the segment p -> q meets the boundary line of S1 it crosses."""
    # boundary lines b = 2a (right) and b = -2a (left); solve along the segment
    best = None
    for s in (1.0, -1.0):
        fp = p[1] - 2 * s * p[0]
        fq = q[1] - 2 * s * q[0]
        if fp == fq or fp * fq > 0:
            continue
        lam = fp / (fp - fq)
        pt = p + lam * (q - p)
        if pt[1] >= 0 and (best is None or lam < best[0]):
            best = (lam, pt, s)
    return best


def reclip(curve: Polyline) -> Polyline:
    """Maximal arc inside S1 whose ends lie on opposite sides of S1.

    Ties go to the arc with the largest minimum beta.
    """
    v = curve.vertices
    inside = in_s1(v[:, 0], v[:, 1])
    runs = []
    k = 0
    while k < len(v):
        if not inside[k]:
            k += 1
            continue
        j = k
        while j + 1 < len(v) and inside[j + 1]:
            j += 1
        runs.append((k, j))
        k = j + 1
    candidates = []
    for i, j in runs:
        if i == 0 or j == len(v) - 1:
            continue
        left = _side_crossing(v[i], v[i - 1])
        right = _side_crossing(v[j], v[j + 1])
        if left is None or right is None or left[2] == right[2]:
            continue
        pts = np.vstack([left[1], v[i : j + 1], right[1]])
        if left[2] > 0:
            pts = pts[::-1]
        candidates.append(pts)
    if not candidates:
        raise ReclipError("no arc inside S1 joins its two sides", curve)
    best = max(candidates, key=lambda p: (p[:, 1].min(), len(p)))
    return Polyline(best, closed=False, max_seg=curve.max_seg)


def evolve_curve(
    state: CurveEvolutionState,
    sys: PerturbedSaddleSystem,
    dt: float = MAX_DT,
    refine: bool = True,
) -> CurveEvolutionState:
    """Carry the curve through one leg with refinement after each substep, then reclip to S1.

    Endpoint exits from Omega+ / Omega- during the leg are recorded (time of first exit,
    or None) rather than treated as errors.
    """
    if sys.variant != "pot":
        raise ValueError("curve evolution uses the 'pot' variant")
    if sys.bound >= 0.01 + 1e-15:
        raise ValueError("perturbation bound must be below 0.01")
    cur = state.curve.refined() if refine else state.curve
    steps = max(1, math.ceil(state.leg / dt - 1e-9))
    h = state.leg / steps
    exit_right = exit_left = None
    t = state.t
    for k in range(steps):
        a, b = _rk4_step(sys, cur.vertices[:, 0], cur.vertices[:, 1], t, h)
        t = state.t + (k + 1) * h
        # refinement keeps the end vertices, so they follow the endpoint trajectories
        left, right = (a[0], b[0]), (a[-1], b[-1])
        if exit_right is None and not in_omega_plus(*right):
            exit_right = t - state.t
        if exit_left is None and not in_omega_minus(*left):
            exit_left = t - state.t
        cur = Polyline(np.column_stack([a, b]), closed=False, max_seg=cur.max_seg)
        if refine:
            cur = cur.refined()
    new = reclip(cur)
    exits = state.endpoint_exit + [(state.n, exit_left, exit_right)]
    return CurveEvolutionState(new, state.n + 1, state.leg, state.t + state.leg, exits)


@dataclass
class DecayVerdict:
    passed: bool
    flags: list
    beta0: float
    trajectory: SaddleTrajectory | None
    worst_alpha_ratio: float = float("nan")
    worst_beta_ratio: float = float("nan")
    worst_pinch_ratio: float = float("nan")
    curves: list = field(default_factory=list)
    endpoint_exit: list = field(default_factory=list)

    def write_curves(self, path) -> None:
        rows = []
        for leg, poly in enumerate(self.curves):
            for k, (a, b) in enumerate(poly.vertices):
                rows.append((leg, k, a, b))
        write_csv(path, ("leg", "vertex", "alpha", "beta"), rows)


def _alpha_zero_points(poly: Polyline) -> np.ndarray:
    v = poly.vertices
    a = v[:, 0]
    pts = [v[k] for k in np.nonzero(a == 0)[0]]
    for k in np.nonzero(a[:-1] * a[1:] < 0)[0]:
        lam = a[k] / (a[k] - a[k + 1])
        pts.append(v[k] + lam * (v[k + 1] - v[k]))
    return np.array(pts).reshape(-1, 2)


def find_decaying_trajectory(
    sys: PerturbedSaddleSystem,
    n_legs: int = 10,
    gamma0: Polyline | None = None,
    dt: float = MAX_DT,
    keep_curves: bool = False,
    rel_tol: float = 1e-9,
) -> DecayVerdict:
    """Finite version of the compactness argument: evolve n_legs legs, take the alpha = 0
    point of the last curve, integrate back to t = 0, and check the decay bounds
    |alpha|, |beta| <= beta0 e^(-t/2) and beta0 e^(-2t) <= beta on [0, n_legs * leg]."""
    if n_legs < 5:
        raise ValueError("n_legs must be at least 5")
    gamma0 = gamma0 if gamma0 is not None else initial_segment(DEFAULT_BETA0)
    state = CurveEvolutionState(gamma0)
    curves = [gamma0] if keep_curves else []
    flags: list[str] = []
    try:
        for _ in range(n_legs):
            state = evolve_curve(state, sys, dt)
            if keep_curves:
                curves.append(state.curve)
    except ReclipError as exc:
        flags.append("reclip_failed")
        return DecayVerdict(False, flags, float("nan"), None, curves=curves + [exc.curve])
    zeros = _alpha_zero_points(state.curve)
    if len(zeros) == 0:
        return DecayVerdict(False, ["no_alpha_zero"], float("nan"), None, curves=curves, endpoint_exit=state.endpoint_exit)
    if len(zeros) > 1:
        flags.append("multiple_alpha_zero")
    end = zeros[np.argmax(zeros[:, 1])]
    t_end = state.t
    back = integrate_saddle(sys, end, (t_end, 0.0), dt)
    start = np.array([back.alpha[-1, 0], back.beta[-1, 0]])
    if not np.all(np.isfinite(start)) or np.abs(start).max() > 1e6:
        flags.append("backward_divergence")
        return DecayVerdict(False, flags, float("nan"), None, curves=curves, endpoint_exit=state.endpoint_exit)
    fwd = integrate_saddle(sys, start, (0.0, t_end), dt)
    beta0 = float(start[1])
    t = fwd.t
    a = fwd.alpha[:, 0]
    b = fwd.beta[:, 0]
    upper = beta0 * np.exp(-t / 2)
    lower = beta0 * np.exp(-2 * t)
    ra = float(np.max(np.abs(a) / upper))
    rb = float(np.max(np.abs(b) / upper))
    rp = float(np.min(b / lower))
    ok = beta0 > 0 and ra <= 1 + rel_tol and rb <= 1 + rel_tol and rp >= 1 - rel_tol
    return DecayVerdict(ok, flags, beta0, fwd, ra, rb, rp, curves, state.endpoint_exit)


def omega_plus_exit_time(sys: PerturbedSaddleSystem, alpha0: float = 0.1, t_max: float = 1.0, dt: float = MAX_DT) -> float:
    """First time the trajectory from (alpha0, 2 alpha0) leaves Omega+ (inf if it stays up to t_max)."""
    tr = integrate_saddle(sys, [alpha0, 2 * alpha0], (0.0, t_max), dt)
    inside = in_omega_plus(tr.alpha[:, 0], tr.beta[:, 0])
    out = np.nonzero(~inside)[0]
    return float(tr.t[out[0]]) if len(out) else math.inf


def pot_checks(
    n_legs: int = 10,
    draws: int = 20,
    bound: float = 0.009,
    seed: int = 0,
    dt: float = MAX_DT,
) -> tuple[LemmaReport, list[DecayVerdict]]:
    """Decaying-trajectory construction over random perturbation draws plus the exact zero case."""
    verdicts = []
    zero = find_decaying_trajectory(PerturbedSaddleSystem("pot", {}, bound), n_legs, dt=dt)
    exact_err = float("nan")
    if zero.trajectory is not None:
        tr = zero.trajectory
        exact_err = float(
            max(np.abs(tr.alpha[:, 0]).max(), np.abs(tr.beta[:, 0] - zero.beta0 * np.exp(-tr.t)).max())
        )
    for perts in random_perturbations("pot", bound, seed, draws):
        sys = PerturbedSaddleSystem("pot", perts, bound)
        sys.check_bounds((-1.0, 1.0, 0.0, 1.0), (0.0, n_legs * LEG))
        verdicts.append(find_decaying_trajectory(sys, n_legs, dt=dt))
    passed = [v.passed for v in verdicts]
    counts = {"draws": draws, "passed": sum(passed), "zero_case_pass": int(zero.passed)}
    margins = {
        "alpha_ratio": max(v.worst_alpha_ratio for v in verdicts) if verdicts else float("nan"),
        "beta_ratio": max(v.worst_beta_ratio for v in verdicts) if verdicts else float("nan"),
        "pinch_ratio": min(v.worst_pinch_ratio for v in verdicts) if verdicts else float("nan"),
        "zero_case_exact_error": exact_err,
    }
    ok = all(passed) and zero.passed and exact_err <= 1e-8
    exits = [e for v in verdicts for _, l, r in v.endpoint_exit for e in (l, r) if e is not None]
    notes = [f"n_legs={n_legs} bound={bound} leg={LEG:.6f}"]
    if exits:
        notes.append(f"earliest endpoint exit from Omega+/- within a leg: t={min(exits):.4f}")
    return LemmaReport("decaying_trajectory", ok, counts, margins, {"seed": seed}, notes), [zero] + verdicts


# --- summability demonstration ------------------------------------------------------------


def lemma3_partial_sums(a, n_max: int) -> list[tuple[int, float, float]]:
    """(N, N^-2 sum_{j<=N} 1/a_j, 1/(4 tau_N)) with tau_N = sum_{ceil(N/2) <= j <= N} a_j.

    ``a`` is a callable j -> a_j (j >= 1) or a sequence with a[0] = a_1.
    """
    if n_max < 1:
        raise ValueError("n_max must be positive")
    vals = [float(a(j)) if callable(a) else float(a[j - 1]) for j in range(1, n_max + 1)]
    if any(v <= 0 or not math.isfinite(v) for v in vals):
        raise ValueError("sequence terms must be positive and finite")
    out = []
    for n in range(1, n_max + 1):
        metric = math.fsum(1.0 / v for v in vals[:n]) / (n * n)
        tau = math.fsum(vals[math.ceil(n / 2) - 1 : n])
        out.append((n, metric, 1.0 / (4.0 * tau)))
    return out


def geometric_metric(n: int) -> float:
    """Closed form of the metric for a_j = 2^-j: (2^(N+1) - 2) / N^2."""
    return (2.0 ** (n + 1) - 2.0) / (n * n)


def uniform_minimizer(sigma: float, n: int) -> tuple[float, float]:
    """With x_j = sigma/n, sum 1/x_j and its lower bound n^2/sigma (equal)."""
    x = sigma / n
    return math.fsum([1.0 / x] * n), n * n / sigma


def lemma3_report(n_max: int = 20) -> LemmaReport:
    table = lemma3_partial_sums(lambda j: 2.0 ** (-j), n_max)
    err = max(abs(m - geometric_metric(n)) / geometric_metric(n) for n, m, _ in table)
    increasing = all(table[k + 1][1] > table[k][1] for k in range(1, len(table) - 1))
    s, lb = uniform_minimizer(1.0, 7)
    eq = abs(s - lb) / lb
    ok = err <= 1e-12 and eq <= 1e-12 and increasing
    return LemmaReport(
        "summability",
        ok,
        {"n_max": n_max, "increasing_from_2": int(increasing)},
        {"closed_form_rel_error": err, "equality_case_rel_error": eq},
        notes=[f"N={n} metric={m:.12g} tail_bound={tb:.12g}" for n, m, tb in table],
    )


# --- perturbations read off a simulation snapshot ----------------------------------------------


class SnapshotPerturbations:
    """f1, f2, g1, g2 of the flow1 form from Z = Delta^-gamma(theta - theta*) near a saddle.

    mu1 = -Z_beta / 2 and mu2 = Z_alpha / 2 vanish at the saddle, so by the mean-value
    form mu1 = -(Z_ab a + Z_bb b)/2, mu2 = (Z_aa a + Z_ab b)/2 with the Hessian taken
    at the midpoint (a/2, b/2); inside radius 1e-4 the Hessian at the centre is used.
    """

    CENTER_RADIUS = 1e-4

    def __init__(self, psi: SpectralField, frame: SaddleFrame, gamma: float = 1.0, factor: int = 2):
        z = inverse_laplacian(psi, gamma)
        zxx = refined_derivative(z, factor, (2, 0))
        zyy = refined_derivative(z, factor, (0, 2))
        zxy = refined_derivative(z, factor, (1, 1))
        (ax, ay), (bx, by) = frame.derivative_weights()

        def second(p, q):
            return p[0] * q[0] * zxx + (p[0] * q[1] + p[1] * q[0]) * zxy + p[1] * q[1] * zyy

        self.frame = frame
        self.m = zxx.shape[0]
        self._coef = {
            key: ndimage.spline_filter(second(p, q), order=3, mode="grid-wrap")
            for key, p, q in (("aa", (ax, ay), (ax, ay)), ("ab", (ax, ay), (bx, by)), ("bb", (bx, by), (bx, by)))
        }

    def hessian(self, a, b) -> dict:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        near = np.hypot(a, b) < self.CENTER_RADIUS
        a = np.where(near, 0.0, a / 2)
        b = np.where(near, 0.0, b / 2)
        x, y = self.frame.from_alpha_beta(a, b)
        scale = self.m / TWO_PI
        coords = np.stack([(np.ravel(y) * scale), (np.ravel(x) * scale)])
        return {
            k: ndimage.map_coordinates(c, coords, order=3, mode="grid-wrap", prefilter=False).reshape(a.shape)
            for k, c in self._coef.items()
        }

    def functions(self) -> dict:
        return {
            "f1": lambda a, b, t: -0.5 * self.hessian(a, b)["ab"],
            "f2": lambda a, b, t: -0.5 * self.hessian(a, b)["bb"],
            "g1": lambda a, b, t: 0.5 * self.hessian(a, b)["aa"],
            "g2": lambda a, b, t: 0.5 * self.hessian(a, b)["ab"],
        }


def flow1_from_snapshot(psi: SpectralField, frame: SaddleFrame, gamma: float = 1.0, bound: float = 0.01) -> PerturbedSaddleSystem:
    return PerturbedSaddleSystem("flow1", SnapshotPerturbations(psi, frame, gamma).functions(), bound)
