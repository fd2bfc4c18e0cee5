"""Batch orchestration: config -> certification / simulation / audit
pipelines -> JSON report, CSV traces and plots, with CLI-style exit codes."""

from __future__ import annotations

import datetime
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .badset import analyze_badset
from .certificate import (
    CertificateError,
    build_rate_functions,
    certify,
    certify_guas,
)
from .config import ConfigError, RunConfig, SamplerConfig, eta_strategy, load_config_file
from .expressions import ExpressionError
from .grids import GridError, GridSpec, default_box
from .systems import (
    AnnularRegion,
    SystemError_,
    builtin_system,
    candidate_from_expression,
    field_from_expressions,
)
from .trajectory import (
    IntegratorConfig,
    TrajectoryError,
    extract_X_eta,
    integrate_with_halt,
    tube_audit,
    verify_certificate,
)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_system(cfg: RunConfig):
    sys = cfg.system
    if sys.builtin is not None:
        try:
            return builtin_system(sys.builtin, sys.params or None)
        except (KeyError, ValueError) as exc:
            raise ConfigError("system.builtin", str(exc))
    try:
        f = field_from_expressions(sys.f, sys.dimension)
        v = candidate_from_expression(sys.V, sys.dimension)
    except ExpressionError as exc:
        raise ConfigError("system.f", str(exc))
    return f, v


def build_grid(cfg: RunConfig, v, c2):
    g = cfg.grid
    if g.box is not None:
        box = tuple((float(lo), float(hi)) for lo, hi in g.box)
    else:
        box = default_box(v, c2)
    return GridSpec(box, g.resolution, g.refinement)


def feature_size(f):
    radii = [r for _, r in f.kink_spheres]
    return min(radii) if radii else None


def sample_initial_conditions(v, dimension, sampler: SamplerConfig):
    """Seeded points on the level set V = level: random directions, radius
    solved by bisection along each ray."""
    rng = np.random.default_rng(sampler.seed)
    out = []
    for _ in range(sampler.count):
        u = rng.normal(size=dimension)
        u /= np.linalg.norm(u)
        lo, hi = 0.0, 1.0
        while v.evaluate(hi * u) < sampler.level:
            hi *= 2.0
            if hi > 1e9:
                raise GridError("cannot bracket the requested start level")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if v.evaluate(mid * u) < sampler.level:
                lo = mid
            else:
                hi = mid
        out.append(hi * u)
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isinf(x):
            return "+inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "n/a"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def write_report(report, path):
    payload = dict(report)
    payload["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_trajectory_csv(traj, path):
    n = traj.states.shape[1]
    header = ["t"] + [f"x{i+1}" for i in range(n)] + ["V", "Vdot", "in_omega_eta"]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        omega = (
            traj.in_omega_eta
            if traj.in_omega_eta is not None
            else np.zeros(len(traj.times), dtype=bool)
        )
        for i in range(len(traj.times)):
            row = [f"{traj.times[i]:.12g}"]
            row += [f"{x:.12g}" for x in traj.states[i]]
            row += [f"{traj.V_values[i]:.12g}", f"{traj.Vdot_values[i]:.12g}"]
            row.append("1" if omega[i] else "0")
            fh.write(",".join(row) + "\n")


def _max_workers():
    raw = os.environ.get("LYAPCERT_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


def run_certify(cfg: RunConfig):
    f, v = build_system(cfg)
    region = AnnularRegion(cfg.domain.c1, cfg.domain.c2)
    grid = build_grid(cfg, v, region.c2)
    cert = certify(f, v, region, cfg.rate_a, grid, eta_strategy(cfg))
    return f, v, region, grid, cert


def _integrator_config(cfg, cert, f):
    feat = feature_size(f)
    dt = cfg.integrator.dt
    if dt is None:
        dt = 1e-3
        if feat is not None and cert.constants.L0_sup > 0:
            dt = min(dt, feat / (10.0 * cert.constants.L0_sup))
    return IntegratorConfig(
        dt=dt,
        t_max=cfg.integrator.t_max,
        event_tolerance=cfg.integrator.event_tolerance,
        feature_size=feat,
        L0_sup=cert.constants.L0_sup,
    )


def run_simulate(cfg: RunConfig, f, v, region, cert):
    ics = cfg.initial_conditions
    if ics is None:
        ics = SamplerConfig(count=20, level=0.97 * region.c2, seed=cfg.mc_seed)
    if isinstance(ics, SamplerConfig):
        x0s = sample_initial_conditions(v, f.dimension, ics)
    else:
        x0s = [np.asarray(x, dtype=float) for x in ics]

    icfg = _integrator_config(cfg, cert, f)
    n = f.dimension
    h_eps = cert.h * cert.epsilon ** (1.0 / n) if cert.epsilon > 0 else 0.0
    levels = (region.c1, region.c2, region.c1 + h_eps, cert.attractor_level)
    rate = build_rate_functions(
        cert.constants, cert.alpha, cert.eta, cert.rate_a, region.c1, region.c2, cert.g
    )

    def one(x0):
        traj = integrate_with_halt(
            f, x0, icfg, v, a=cert.rate_a, eta=cert.eta,
            levels=levels, halt_level=region.c1 / 2.0,
        )
        extract_X_eta(traj, f, v, cert.rate_a, cert.eta)
        violations = verify_certificate(traj, cert, rate, f, v)
        return traj, violations

    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        results = list(pool.map(one, x0s))
    return results, rate


def run_audit(cfg, f, v, cert, results):
    audits = []
    for i, (traj, _) in enumerate(results):
        audits.append(
            {
                "trajectory": i,
                "intervals": tube_audit(traj, cert, f, v, seed=cfg.mc_seed + i),
            }
        )
    return audits


def run_guas(cfg: RunConfig):
    f, v = build_system(cfg)
    g = cfg.guas
    return certify_guas(
        f, v, cfg.rate_a,
        k0=g.k0, k1=g.k1, k2=g.k2,
        c_ladder=g.ladder, kappa=g.kappa, delta=g.delta,
        resolution=min(cfg.grid.resolution, 401),
    )


def execute(cfg: RunConfig, mode, out_dir=None, quiet=False):
    """Run one pipeline mode; returns (report dict, exit code)."""
    report = {"mode": mode}
    emit = (lambda *a: None) if quiet else print

    if mode not in ("certify", "guas", "simulate", "audit", "all"):
        raise ConfigError("<mode>", f"unknown mode {mode!r}")
    wants_domain = mode in ("certify", "simulate", "audit") or (
        mode == "all" and cfg.domain is not None
    )
    if wants_domain and cfg.domain is None:
        raise ConfigError("domain", f"mode {mode!r} requires a 'domain' block")
    if mode == "guas" and cfg.guas is None:
        raise ConfigError("guas", "mode 'guas' requires a 'guas' block")

    passing = True
    violations_total = 0

    if cfg.domain is not None and mode != "guas":
        f, v, region, grid, cert = run_certify(cfg)
        report["certificate"] = cert.to_dict()
        passing = passing and cert.verdict
        emit(f"certificate verdict: {'pass' if cert.verdict else 'fail'}")
        for w in cert.warnings:
            emit(f"warning: {w}")

        results = None
        if mode in ("simulate", "audit", "all") and cert.verdict:
            results, rate = run_simulate(cfg, f, v, region, cert)
            trajs = []
            for i, (traj, violations) in enumerate(results):
                violations_total += len(violations)
                trajs.append(
                    {
                        "initial_state": list(traj.states[0]),
                        "V0": float(traj.V_values[0]),
                        "T_exit": traj.T_exit,
                        "final_V": float(traj.V_values[-1]),
                        "interval_count": len(traj.X_eta_intervals),
                        "violations": violations,
                    }
                )
            report["trajectories"] = trajs
            report["violations_total"] = violations_total
            emit(f"simulated {len(results)} trajectories, "
                 f"{violations_total} violations")
            if out_dir is not None and cfg.outputs.csv_dir is not False:
                csv_dir = Path(out_dir) / (cfg.outputs.csv_dir or "traces")
                for i, (traj, _) in enumerate(results):
                    write_trajectory_csv(traj, csv_dir / f"trajectory_{i:03d}.csv")

        if mode in ("audit", "all") and results is not None:
            report["tube_audits"] = run_audit(cfg, f, v, cert, results)
            emit("tube audit complete")

        if out_dir is not None and mode in ("simulate", "audit", "all") and results:
            from . import plots

            plot_dir = Path(out_dir) / (cfg.outputs.plot_dir or "plots")
            rate_fns = build_rate_functions(
                cert.constants, cert.alpha, cert.eta, cert.rate_a,
                region.c1, region.c2, cert.g,
            )
            made = plots.emit_plots(
                cert, [r[0] for r in results], rate_fns, plot_dir, f, v
            )
            report["plots"] = [str(p) for p in made]

    if cfg.guas is not None and mode in ("guas", "all"):
        guas = run_guas(cfg)
        report["guas"] = guas.to_dict()
        passing = passing and guas.verdict
        emit(f"global verdict: {'pass' if guas.verdict else 'fail'}")

    code = EXIT_PASS if passing and violations_total == 0 else EXIT_FAIL
    report["exit_code"] = code
    return report, code


def run(config_path, mode, seed=None, out=None, quiet=False):
    """Front-door entry: returns the process exit code."""
    try:
        cfg = load_config_file(config_path)
        if seed is not None:
            cfg = cfg.model_copy(update={"mc_seed": int(seed)})
        out_dir = out or os.path.dirname(os.path.abspath(config_path))
        report, code = execute(cfg, mode, out_dir=out_dir, quiet=quiet)
    except ConfigError as exc:
        if not quiet:
            print(f"config error at {exc.field_path}: {exc}")
        return EXIT_CONFIG
    except CertificateError as exc:
        if not quiet:
            print(f"certification failed: {exc}")
        return EXIT_FAIL
    except (GridError, TrajectoryError, SystemError_, FloatingPointError) as exc:
        if not quiet:
            print(f"numerical failure: {exc}")
        return EXIT_NUMERICAL

    report_path = cfg.outputs.report_path or os.path.join(out_dir, f"report_{mode}.json")
    if not os.path.isabs(report_path):
        report_path = os.path.join(out_dir, report_path)
    write_report(report, report_path)
    if not quiet:
        print(f"report written to {report_path}")
    return code
