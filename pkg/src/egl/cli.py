"""egl command line: simulations, scenario reports, ODE checks, oracles and sweeps.

Exit codes: 0 success, 2 configuration error, 3 blow-up, 4 check failure.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import ode_lab
from .characteristics import perturbation_velocity_sup, sn_accounting, write_sn_records
from .config import ConfigError, RunConfig, load_config
from .evolution import SimState, run
from .fieldio import fmt, write_csv, write_field, write_pgm
from .initial_data import A1, A2, build
from .oracles import run_suite
from .spectral import grid_to_spectral, spectral_to_grid

log = logging.getLogger("egl")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_CHECK = 4

FRAMES = {"A1": A1, "A2": A2}


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run_directory(out: Path, cfg: RunConfig) -> Path:
    return Path(out) / f"{cfg.command}-{cfg.digest()[:16]}"


def write_manifest(rundir: Path, cfg: RunConfig, started: float, status: str, code: int, flags: list[str]) -> None:
    files = sorted(
        p for p in rundir.rglob("*") if p.is_file() and p.name not in ("manifest.txt", "checksums.txt")
    )
    with open(rundir / "checksums.txt", "w") as fh:
        for p in files:
            fh.write(f"{p.relative_to(rundir).as_posix()} {sha256_file(p)}\n")
    lines = [
        f"command={cfg.command}",
        f"code_version={code_version()}",
        f"input_hash={cfg.digest()}",
        f"start_time={time.strftime('%Y-%m-%dT%H:%M:%S', time.localtime(started))}",
        f"end_time={time.strftime('%Y-%m-%dT%H:%M:%S')}",
        f"status={status}",
        f"exit_code={code}",
        f"flags={';'.join(flags)}",
    ]
    lines += [f"config.{line}" for line in cfg.canonical().splitlines() if not line.startswith("command=")]
    (rundir / "manifest.txt").write_text("\n".join(lines) + "\n")


def verify_checksums(rundir: Path) -> list[str]:
    """Files whose digest no longer matches checksums.txt."""
    bad = []
    for line in (Path(rundir) / "checksums.txt").read_text().splitlines():
        name, digest = line.rsplit(" ", 1)
        if sha256_file(Path(rundir) / name) != digest:
            bad.append(name)
    return bad


def config_flags(cfg: RunConfig) -> list[str]:
    flags = []
    if cfg["sim.gamma"] < 1.0:
        flags.append("gamma<1: global existence unknown")
    if cfg["sim.prescale"] != 1.0:
        flags.append(f"prescaled by {cfg['sim.prescale']!r}: theta*s, t/s")
    return flags


def write_report(rundir: Path, title: str, lines: list[str], kv: dict) -> None:
    text = [title, ""] + lines + [""] + [f"{k}={fmt(v)}" for k, v in kv.items()]
    (rundir / "report.txt").write_text("\n".join(text) + "\n")


# --- simulation plumbing -------------------------------------------------------------


def initial_grid(cfg: RunConfig):
    family = cfg["data.family"]
    n = cfg["sim.N"]
    if family == "thm1":
        return build(family, n, delta=cfg["data.delta"], blend_width=cfg["data.blend_width"])
    if family == "thm2":
        return build(family, n, epsilon=cfg["data.epsilon"])
    return build(family, n)


def simulate_into(cfg: RunConfig, rundir: Path, checkpoint_interval: float | None = None):
    """Run the configured evolution; writes diagnostics.csv and snapshots. Returns the trajectory."""
    scale = cfg["sim.prescale"]
    grid = initial_grid(cfg)
    s0 = grid_to_spectral(grid).scale(scale)
    interval = (checkpoint_interval or cfg["sim.checkpoint_interval"]) / scale
    dt = None if cfg["sim.dt"] == "auto" else cfg["sim.dt"] / scale
    traj = run(
        SimState(0.0, s0, cfg["sim.gamma"]),
        cfg["sim.t_end"] / scale,
        interval,
        dt=dt,
        hessian=cfg["diag.hessian"],
    )
    write_csv(rundir / "diagnostics.csv", diag.CSV_COLUMNS, (c.diagnostics.row() for c in traj))
    if cfg["sim.snapshots"]:
        snap = rundir / "snapshots"
        snap.mkdir(exist_ok=True)
        for k, c in enumerate(traj):
            g = spectral_to_grid(c.field)
            write_field(snap / f"theta_{k:04d}.egl", g)
            write_pgm(snap / f"theta_{k:04d}.pgm", g)
    return traj


def grad_series(traj) -> list[tuple[float, float]]:
    return [(c.t, c.diagnostics.grad_sup) for c in traj]


# --- commands --------------------------------------------------------------------------


def drift(first: float, last: float) -> float:
    """Relative change, or the absolute change when the starting value is zero to rounding."""
    scale = abs(first)
    return abs(last - first) / scale if scale > 1e-14 else abs(last - first)


def cmd_simulate(cfg: RunConfig, rundir: Path) -> tuple[int, list[str]]:
    traj = simulate_into(cfg, rundir)
    first, last = traj[0].diagnostics, traj[-1].diagnostics
    kv = {
        "checkpoints": len(traj),
        "t_final": last.t,
        "dt": traj.dt,
        "blew_up": traj.blew_up,
        "l2_rel_drift": drift(first.l2, last.l2),
        "energy_rel_drift": drift(first.energy, last.energy),
        "kn_invariant_rel_drift": drift(first.kn_invariant, last.kn_invariant),
        "grad_sup_final": last.grad_sup,
    }
    write_report(rundir, "simulate", [f"family {cfg['data.family']}, N={cfg['sim.N']}, gamma={cfg['sim.gamma']}"], kv)
    if traj.blew_up:
        return EXIT_BLOWUP, ["blow-up"]
    return EXIT_OK, []


def _integer_interval(ci: float) -> float:
    k = 1.0 / ci
    if abs(k - round(k)) > 1e-9:
        raise ConfigError("theorem1 needs sim.checkpoint_interval dividing 1 (integer-time checkpoints)")
    return ci


def cmd_theorem1(cfg: RunConfig, rundir: Path) -> tuple[int, list[str]]:
    if cfg["sim.prescale"] != 1.0:
        raise ConfigError("theorem1 accounting needs unscaled time (sim.prescale = 1)")
    interval = _integer_interval(min(cfg["sim.checkpoint_interval"], 1.0))
    traj = simulate_into(cfg, rundir, interval)
    eps = cfg["tracer.epsilon"]
    frame = FRAMES[cfg["tracer.frame"]]
    records = sn_accounting(traj, frame, eps)
    write_sn_records(rundir / "sn_accounting.csv", records)
    rows = []
    for r in records:
        if r.polygon is not None:
            for k, (a, b) in enumerate(np.asarray(r.polygon.exterior.coords)[:-1]):
                rows.append((r.n, k, a, b))
    write_csv(rundir / "sn_polylines.csv", ("n", "vertex_index", "alpha", "beta"), rows)
    trace = diag.superlinear_trace(grad_series(traj))
    write_csv(rundir / "superlinear.csv", ("t", "metric"), trace)

    g_rows = [(c.t, perturbation_velocity_sup(c.field, cfg["sim.gamma"]), 0.001 * eps) for c in traj]
    write_csv(rundir / "g_sup.csv", ("t", "g_sup", "threshold"), g_rows)

    areas2 = [r.area_Sn2 for r in records if r.area_Sn2 > 0]
    if areas2:
        write_csv(rundir / "lemma3_crosscheck.csv", ("N", "metric", "tail_bound"), ode_lab.lemma3_partial_sums(areas2, len(areas2)))
    areas = [r.area_Sn for r in records]
    monotone = all(areas[k + 1] <= areas[k] * 1.02 + 1e-15 for k in range(len(areas) - 1))
    valid = [r for r in records if r.area_Sn > 0]
    agree = max((abs(r.area_pixel - r.area_Sn) / r.area_Sn for r in valid), default=float("nan"))
    sym = max((r.symmetry_mismatch for r in valid), default=float("nan"))
    gs = [g for _, g in grad_series(traj)]
    dips = [k for k in range(2, len(gs)) if gs[k] < 0.95 * max(gs[1:k])]
    kv = {
        "checkpoints": len(traj),
        "area_monotone_2pct": monotone,
        "area_agreement_max_rel": agree,
        "symmetry_mismatch_max": sym,
        "flagged_records": sum(1 for r in records if r.flags),
        "sum_area_Sn2": sum(r.area_Sn2 for r in records),
        "area_S0": areas[0] if areas else float("nan"),
        "superlinear_final": trace[-1][1] if trace else float("nan"),
        "grad_sup_dips_over_5pct": len(dips),
        "g_sup_max": max(g for _, g, _ in g_rows),
        "g_threshold": 0.001 * eps,
    }
    lines = [f"n={r.n} area_Sn={r.area_Sn:.6g} area_Sn2={r.area_Sn2:.6g} grad_sup={r.grad_sup:.6g} flags={'|'.join(r.flags) or 'ok'}" for r in records]
    lines.append("grad_sup series is reported, not asserted; g_sup is compared with 0.001*epsilon in g_sup.csv")
    write_report(rundir, "theorem1 level-set accounting", lines, kv)
    if traj.blew_up:
        return EXIT_BLOWUP, ["blow-up"]
    return EXIT_OK, [f"flagged checkpoints: {kv['flagged_records']}"] if kv["flagged_records"] else []


def theorem2_parameters(c: float, t_end: float) -> tuple[float, float]:
    """rho = 0.001 C^-1 e^(-T/2) and eps = 0.001 sqrt(rho C^-1)."""
    if c <= 0:
        raise ValueError("C must be positive")
    rho = 0.001 / c * math.exp(-t_end / 2.0)
    return rho, 0.001 * math.sqrt(rho / c)


def cmd_theorem2(cfg: RunConfig, rundir: Path) -> tuple[int, list[str]]:
    if not cfg["diag.hessian"]:
        raise ConfigError("theorem2 tracks hessian_sup; diag.hessian must be on")
    traj = simulate_into(cfg, rundir)
    series = grad_series(traj)
    scale = cfg["sim.prescale"]
    window = tuple(w / scale for w in cfg["thm2.window"])
    kv = {"t_end": traj[-1].t, "blew_up": traj.blew_up}
    try:
        fit = diag.growth_fit(series, window)
        kv.update(rate=fit.rate, prefactor=fit.prefactor, r2=fit.r2, fit_samples=fit.samples, rate_vs_half=fit.rate - 0.5)
    except ValueError as exc:
        kv["fit_error"] = str(exc)
    t_ref = 0.5 / scale
    ref = [g for t, g in series if abs(t - t_ref) < 1e-9]
    if ref:
        kv["grad_growth_factor_from_t0.5"] = series[-1][1] / ref[0]
    hs = [(c.t, c.diagnostics.hessian_sup) for c in traj]
    kv["hessian_sup_max"] = max(h for _, h in hs)
    kv["hessian_over_0.01"] = sum(1 for _, h in hs if h > 0.01)
    big_t = traj[-1].t
    kv["grad_sup_max"] = max(g for _, g in series)
    kv["exceeds_0.1exp(T/2)"] = kv["grad_sup_max"] > 0.1 * math.exp(big_t / 2.0)
    if cfg["thm2.C"] > 0:
        rho, eps = theorem2_parameters(cfg["thm2.C"], cfg["sim.t_end"])
        kv.update(helper_C=cfg["thm2.C"], helper_rho=rho, helper_epsilon=eps)
    lines = [f"t={t:.6g} grad_sup={g:.6g} hessian_sup={h:.6g}" for (t, g), (_, h) in zip(series, hs)]
    lines.append("growth is a scenario measurement at finite resolution; the theorem's epsilon depends on an unknown constant C")
    write_report(rundir, "theorem2 growth measurement", lines, kv)
    if traj.blew_up:
        return EXIT_BLOWUP, ["blow-up"]
    return EXIT_OK, []


def cmd_ode(cfg: RunConfig, rundir: Path) -> tuple[int, list[str]]:
    lemma = cfg["ode.lemma"]
    seed = cfg["run.seed"]
    reports = []
    if lemma in ("lll", "all"):
        reports.append(
            ode_lab.lemma_lll_check(cfg["ode.epsilon"], cfg["ode.samples"], seed, cfg["ode.random_draws"])
        )
    if lemma in ("pot", "all"):
        rep, verdicts = ode_lab.pot_checks(cfg["ode.n_legs"], cfg["ode.draws"], cfg["ode.bound"], seed)
        reports.append(rep)
        for k, v in enumerate(verdicts):
            if v.trajectory is not None:
                v.trajectory.write_csv(rundir / f"trajectory_{k:02d}.csv")
        zero = ode_lab.find_decaying_trajectory(
            ode_lab.PerturbedSaddleSystem("pot", {}, cfg["ode.bound"]), cfg["ode.n_legs"], keep_curves=True
        )
        zero.write_curves(rundir / "curves.csv")
    if lemma in ("three", "all"):
        rep = ode_lab.lemma3_report(cfg["ode.N_max"])
        reports.append(rep)
        table = ode_lab.lemma3_partial_sums(lambda j: 2.0 ** (-j), cfg["ode.N_max"])
        write_csv(rundir / "summability.csv", ("N", "metric", "tail_bound"), table)
    text = "\n".join(r.text() for r in reports)
    (rundir / "report.txt").write_text(text)
    failed = [r.name for r in reports if not r.passed]
    if failed:
        return EXIT_CHECK, [f"failed: {', '.join(failed)}"]
    return EXIT_OK, []


def cmd_oracle(cfg: RunConfig, rundir: Path) -> tuple[int, list[str]]:
    results = run_suite(cfg["run.seed"])
    write_csv(rundir / "oracle.csv", ("check", "error", "tolerance", "pass"), ((r.name, r.error, r.tol, r.passed) for r in results))
    lines = [f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.error:.3e} (tol {r.tol:.0e})" for r in results]
    failed = [r for r in results if not r.passed]
    write_report(rundir, "spectral oracle suite", lines, {"checks": len(results), "failed": len(failed)})
    return (EXIT_CHECK, ["oracle tolerance breach"]) if failed else (EXIT_OK, [])


def initial_measurements(cfg: RunConfig) -> dict:
    """Scaling quantities of the constructed (unprojected) initial data."""
    s = grid_to_spectral(initial_grid(cfg))
    psi = s - diag.theta_star_spectral(s.n)
    psi_l2 = diag.l2_norm(psi)
    shell_dev = abs(diag.shell_energy(s) - 1.0)
    out = {"psi0_l2": psi_l2, "shell_dev": shell_dev}
    if cfg["data.family"] == "thm1":
        root = math.sqrt(cfg["data.delta"])
        out.update(psi0_ratio=psi_l2 / root, shell_ratio=shell_dev / root)
    else:
        out.update(psi0_ratio=float("nan"), shell_ratio=float("nan"))
    return out


ROLLUP_COLUMNS = (
    "point",
    "N",
    "gamma",
    "delta",
    "epsilon",
    "status",
    "psi0_l2",
    "psi0_ratio",
    "shell_dev",
    "shell_ratio",
) + tuple(f"final_{c}" for c in diag.CSV_COLUMNS)


def _sweep_point(args) -> dict:
    k, cfg, pointdir = args
    pointdir = Path(pointdir)
    pointdir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    row = {"point": k, "N": cfg["sim.N"], "gamma": cfg["sim.gamma"], "delta": cfg["data.delta"], "epsilon": cfg["data.epsilon"]}
    flags = config_flags(cfg)
    try:
        row.update(initial_measurements(cfg))
        write_csv(pointdir / "initial.csv", tuple(k2 for k2 in row), [tuple(row.values())])
        if cfg["sweep.simulate"]:
            code, extra = cmd_simulate(cfg, pointdir)
            flags += extra
            last = diag.DiagnosticsRecord(*[float(x) for x in (pointdir / "diagnostics.csv").read_text().splitlines()[-1].split(",")])
            row.update({f"final_{c}": getattr(last, c) for c in diag.CSV_COLUMNS})
        else:
            code = EXIT_OK
        row["status"] = {EXIT_OK: "ok", EXIT_BLOWUP: "blow-up"}.get(code, f"exit{code}")
    except Exception as exc:  # per-point failures are isolated
        log.error("sweep point %d failed: %s", k, exc)
        row["status"] = f"error: {type(exc).__name__}: {exc}".replace(",", ";")
        code = EXIT_CHECK
    write_manifest(pointdir, cfg, started, row["status"], code, flags)
    return row


def sweep_workers(cfg: RunConfig) -> int:
    env = os.environ.get("EGL_WORKERS")
    if env:
        try:
            w = int(env)
        except ValueError:
            raise ConfigError(f"EGL_WORKERS must be an integer, got {env!r}") from None
        if w < 1:
            raise ConfigError("EGL_WORKERS must be at least 1")
        return w
    return cfg["sweep.workers"]


def cmd_sweep(cfg: RunConfig, rundir: Path) -> tuple[int, list[str]]:
    points = cfg.sweep_points()
    jobs = []
    for k, point in enumerate(points):
        pc = cfg.with_values(point, command="simulate")
        jobs.append((k, pc, rundir / f"point-{k:03d}-{pc.digest()[:12]}"))
    workers = sweep_workers(cfg)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    nan = float("nan")
    write_csv(rundir / "rollup.csv", ROLLUP_COLUMNS, ([r.get(c, nan) for c in ROLLUP_COLUMNS] for r in rows))
    kv = {"points": len(rows), "failed": sum(1 for r in rows if r["status"] != "ok")}
    for key in ("psi0_ratio", "shell_ratio"):
        vals = [r[key] for r in rows if key in r and np.isfinite(r[key]) and r[key] > 0]
        if vals:
            kv[f"{key}_min"] = min(vals)
            kv[f"{key}_max"] = max(vals)
            kv[f"{key}_spread"] = max(vals) / min(vals)
    lines = [f"point {r['point']}: {r['status']}" for r in rows]
    write_report(rundir, "parameter sweep", lines, kv)
    flags = sorted({f for _, pc, _ in jobs for f in config_flags(pc)})
    return (EXIT_CHECK if kv["failed"] else EXIT_OK), flags


COMMANDS = {
    "simulate": cmd_simulate,
    "theorem1": cmd_theorem1,
    "theorem2": cmd_theorem2,
    "ode": cmd_ode,
    "oracle": cmd_oracle,
    "sweep": cmd_sweep,
}


def execute(cfg: RunConfig, out: Path) -> tuple[int, Path]:
    rundir = run_directory(out, cfg)
    if (rundir / "manifest.txt").exists():
        log.info("identical configuration already run in %s; re-running", rundir)
    rundir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    flags = config_flags(cfg)
    code, extra = COMMANDS[cfg.command](cfg, rundir)
    flags += extra
    status = {EXIT_OK: "ok", EXIT_BLOWUP: "blow-up", EXIT_CHECK: "check-failed"}[code]
    write_manifest(rundir, cfg, started, status, code, flags)
    return code, rundir


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="egl", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, type=Path, help="key=value configuration file")
    p.add_argument("--out", type=Path, default=Path("runs"), help="parent directory for run outputs")
    p.add_argument("--seed", type=int, default=None, help="overrides run.seed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            cfg = cfg.with_values({"run.seed": args.seed})
        code, rundir = execute(cfg, args.out)
    except ConfigError as exc:
        print(f"egl: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(rundir)
    return code


if __name__ == "__main__":
    sys.exit(main())
