"""Command line driver.

    osmoflow --config run.cfg --mode simulate --out results/ --override tau=5e-4

The config file holds ``key = value`` lines; ``#`` starts a comment.
Physical parameters (kappa, sigma, beta, theta, r0) are converted to scaled
variables before any computation; outputs are in scaled variables and the
conversion factors are recorded in summary.json.

Exit codes: 0 success, 1 invalid configuration, 2 solver failure,
3 input/output failure.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .diagnostics import convexity_probe, evi_residual, trajectory_diagnostics
from .energy import energy_floor, equilibrium_radius, get_integrand, total_energy, validate_integrand
from .geometry import Variant
from .jko import ConvergenceError, JkoConfig, run_flow
from .output import write_diagnostics_csv, write_snapshots, write_summary, write_trajectory_csv
from .pde_oracle import OracleGrid, compare, solve_strong
from .profile import RadialDensity, quantiles_from_density, uniform_density, uniform_profile
from .scaling import PhysicalParams
from .state import MetricConfig, RadialState

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3
MODES = ("simulate", "oracle", "compare", "diagnose", "equilibrium", "sweep")
INITIAL = ("uniform", "equilibrium", "bump")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    mode: str = "simulate"
    n: int = 2
    integrand: str = "zlogz"
    variant: str = "surface_tension"
    kappa: float = 1.0
    sigma: float = 1.0
    beta: float = 1.0
    theta: float = 1.0
    M: int = 200
    tau: float = 1e-3
    horizon: float = 0.5
    initial: str = "uniform"
    r0: float = 1.0
    snapshot_every: int = 100
    J: int = 400
    oracle_dt: float = 1e-4
    opt_tol: float = 1e-10
    max_iters: int = 100
    probes: int = 20
    seed: int = 0
    sweep_key: str = "tau"
    sweep_values: str = ""
    sweep_mode: str = "simulate"

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.sweep_mode not in MODES or self.sweep_mode == "sweep":
            raise ConfigError("sweep_mode must be a non-sweep mode")
        if self.initial not in INITIAL:
            raise ConfigError(f"initial must be one of {INITIAL}")
        try:
            get_integrand(self.integrand)
            Variant.parse(self.variant)
            PhysicalParams(self.kappa, self.sigma, self.beta, self.theta, self.n)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for name in ("M", "J", "snapshot_every", "max_iters"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("tau", "horizon", "r0", "oracle_dt", "opt_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.probes < 0:
            raise ConfigError("probes must be >= 0")
        if self.tau > self.horizon:
            raise ConfigError("tau exceeds the horizon")
        return self


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def _assign(values: dict, key: str, raw: str):
    key = key.strip()
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    cast = _CASTS[_TYPES[key]]
    raw = raw.strip()
    try:
        if cast is int:
            v = float(raw)
            if v != int(v):
                raise ValueError
            values[key] = int(v)
        else:
            values[key] = cast(raw)
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for {key}") from None


def parse_config_text(text: str, overrides=(), base: dict | None = None) -> RunConfig:
    values = dict(base or {})
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = line.split("=", 1)
        _assign(values, key, raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        _assign(values, key, raw)
    return RunConfig(**values).validate()


@dataclass
class Setup:
    cfg: RunConfig
    params: PhysicalParams
    metric: MetricConfig
    f: object
    r0: float
    density: RadialDensity


def build(cfg: RunConfig) -> Setup:
    f = get_integrand(cfg.integrand)
    report = validate_integrand(f, cfg.n)
    if not report.ok:
        raise ConfigError(f"integrand {cfg.integrand} fails validation: {report.as_dict()}")
    params = PhysicalParams(cfg.kappa, cfg.sigma, cfg.beta, cfg.theta, cfg.n)
    metric = MetricConfig(cfg.n, params.scaled_kappa, Variant.parse(cfg.variant))
    if cfg.initial == "equilibrium":
        r0 = equilibrium_radius(f, cfg.n)
    else:
        r0 = params.length_factor * cfg.r0
    if cfg.initial == "bump":
        grid = np.linspace(0.0, r0, 801)
        vals = 1.0 + 0.5 * np.cos(np.pi * grid / r0)
        d = RadialDensity(grid, vals, cfg.n)
        density = RadialDensity(grid, vals / d.mass(), cfg.n)
    else:
        density = uniform_density(r0, cfg.n)
    return Setup(cfg, params, metric, f, r0, density)


def initial_state(s: Setup) -> RadialState:
    if s.cfg.initial == "bump":
        return RadialState(s.r0, quantiles_from_density(s.density, s.cfg.M))
    return RadialState(s.r0, uniform_profile(s.r0, s.cfg.M, s.cfg.n))


class SolverFailure(RuntimeError):
    pass


def _jko(s: Setup):
    jcfg = JkoConfig(s.cfg.tau, s.metric, s.cfg.M, s.cfg.opt_tol, s.cfg.max_iters)
    try:
        return run_flow(initial_state(s), s.f, jcfg, s.cfg.horizon)
    except (ConvergenceError, ValueError) as exc:
        raise SolverFailure(str(exc)) from None


def _oracle(s: Setup, times):
    grid = OracleGrid(J=s.cfg.J, dt=s.cfg.oracle_dt, quantile_cells=s.cfg.M)
    try:
        return solve_strong(s.density, s.r0, s.cfg.horizon, s.f, s.metric, grid, output_times=times)
    except ValueError as exc:
        raise SolverFailure(str(exc)) from None


def _base_summary(s: Setup) -> dict:
    cfg = s.cfg
    r_star = equilibrium_radius(s.f, cfg.n)
    return {
        "mode": cfg.mode,
        "config": {f.name: getattr(cfg, f.name) for f in fields(cfg)},
        "scaling": {
            "length_factor": s.params.length_factor,
            "time_factor": s.params.time_factor,
            "scaled_kappa": s.params.scaled_kappa,
        },
        "integrand_validation": validate_integrand(s.f, cfg.n).as_dict(),
        "equilibrium_radius": r_star,
        "equilibrium_energy": float(energy_floor(r_star, s.f, cfg.n)),
    }


def _trajectory_summary(traj, diag, horizon) -> dict:
    mask = (diag.times >= 0.01) & np.isfinite(diag.relative_residual)
    last = traj.states[-1]
    return {
        "method": traj.method,
        "status": traj.status,
        "steps": len(traj) - 1,
        "final": {"t": traj.times[-1], "r": last.r, "energy": traj.records[-1].energy.total, "slope": float(diag.slope[-1])},
        "max_relative_dissipation_residual": float(np.max(diag.relative_residual[mask])) if mask.any() else float("nan"),
        "invariants": dict(traj.checks),
    }


def _write_run(traj, out: Path, every: int) -> tuple:
    diag = trajectory_diagnostics(traj)
    write_trajectory_csv(traj, diag, out / "trajectory.csv")
    write_diagnostics_csv(diag, out / "diagnostics.csv")
    snaps = write_snapshots(traj, out, every)
    return diag, snaps


def run_mode(cfg: RunConfig, out: Path, jobs: int = 1) -> int:
    out.mkdir(parents=True, exist_ok=True)
    s = build(cfg)
    summary = _base_summary(s)
    status = EXIT_OK
    if cfg.mode == "equilibrium":
        pass
    elif cfg.mode == "sweep":
        summary["runs"] = _sweep(cfg, out, jobs)
        if any(r["exit_code"] != EXIT_OK for r in summary["runs"]):
            status = max(r["exit_code"] for r in summary["runs"])
    elif cfg.mode == "oracle":
        times = np.linspace(0.0, cfg.horizon, int(round(cfg.horizon / cfg.tau)) + 1)
        traj = _oracle(s, times)
        diag, snaps = _write_run(traj, out, cfg.snapshot_every)
        summary.update(_trajectory_summary(traj, diag, cfg.horizon))
        summary["snapshots"] = snaps
        status = EXIT_OK if traj.status == "ok" else EXIT_SOLVER
    else:
        traj = _jko(s)
        diag, snaps = _write_run(traj, out, cfg.snapshot_every)
        summary.update(_trajectory_summary(traj, diag, cfg.horizon))
        summary["snapshots"] = snaps
        if traj.status != "ok":
            status = EXIT_SOLVER
        elif cfg.mode == "compare":
            orc = _oracle(s, traj.times)
            if orc.status != "ok":
                status = EXIT_SOLVER
            else:
                rep = compare(traj, orc)
                summary["compare"] = {
                    "max_rho_distance": rep.max_distance,
                    "time_of_max": float(rep.times[int(np.argmax(rep.distances))]),
                    "oracle_mass_error": orc.checks["mass_error"],
                }
        elif cfg.mode == "diagnose":
            summary["diagnose"] = _diagnose(s, traj)
    summary["exit_code"] = status
    write_summary(summary, out / "summary.json")
    return status


def _diagnose(s: Setup, traj) -> dict:
    cfg = s.cfg
    rng = np.random.default_rng(cfg.seed)
    r_star = equilibrium_radius(s.f, cfg.n)
    probe = RadialState(r_star, uniform_profile(r_star, cfg.M, cfg.n))
    idx = range(1, len(traj) - 1)
    evi = max(evi_residual(traj, traj.times[k], probe, 0.0) for k in idx) if len(traj) > 2 else float("nan")
    worst = {"distance_defect": np.inf, "energy_defect": np.inf, "objective_defect": np.inf}
    for _ in range(cfg.probes):
        a, b, w = (traj.states[int(rng.integers(len(traj)))] for _ in range(3))
        rep = convexity_probe(a, b, w, s.f, s.metric, h=cfg.tau)
        for key in worst:
            worst[key] = min(worst[key], getattr(rep, key))
    return {"max_evi_residual_to_equilibrium": evi, "convexity": worst}


def _sweep(cfg: RunConfig, out: Path, jobs: int) -> list:
    values = [v.strip() for v in cfg.sweep_values.split(",") if v.strip()]
    if not values:
        raise ConfigError("sweep needs sweep_values")
    base = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    tasks = []
    for v in values:
        d = dict(base)
        d["mode"] = cfg.sweep_mode
        _assign(d, cfg.sweep_key, v)
        tasks.append((v, RunConfig(**d).validate()))

    def one(job):
        v, sub = job
        sub_out = out / f"{cfg.sweep_key}={v}"
        try:
            code = run_mode(sub, sub_out)
        except SolverFailure:
            code = EXIT_SOLVER
        return {"value": v, "out": str(sub_out.name), "exit_code": code}

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(one, tasks))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="osmoflow", description="Coupled membrane/solute gradient flow")
    ap.add_argument("--config", type=Path, help="key = value config file")
    ap.add_argument("--mode", help="one of " + ", ".join(MODES))
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args(argv)

    overrides = list(args.override)
    if args.mode:
        overrides.append(f"mode={args.mode}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    try:
        text = args.config.read_text() if args.config else ""
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config_text(text, overrides)
        return run_mode(cfg, args.out, args.jobs)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
