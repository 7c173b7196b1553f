"""Command-line interface: validate, sweep, divergence, relations, simulate.

Every command reads one scenario (a shipped preset name or a JSON path),
prints a human-readable summary, and writes schema-stable CSV tables plus a
JSON metadata document to the output directory.  Exit codes: 0 on success,
1 on parse/IO errors, 2 on assumption or hypothesis violations.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, matkit
from .analysis import (
    HypothesisError,
    asymptotic_fit,
    deviation_gap,
    divergence_test,
    relation_analysis,
    trace_bounds,
)
from .filtering import build_filter
from .model import deviations, validate_assumptions
from .scenario import Scenario, ScenarioError, load_scenario, preset_names
from .sim import monte_carlo_mse
from .solvers import SolverError, propagate, steady_state

__all__ = ["main"]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _write_meta(path: Path, scenario: Scenario, command: str, extra: dict) -> None:
    payload = {
        "tool": "dckf",
        "version": __version__,
        "command": command,
        "scenario": scenario.name,
        "scenario_hash": scenario.semantic_hash(),
    }
    payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_gamma_override(text: str) -> dict:
    try:
        if text.startswith("log:"):
            parts = text.split(":")
            if len(parts) not in (4, 5):
                raise ScenarioError("gamma override: expected log:<lo>:<hi>:<points>[:threshold]")
            spec = {
                "lo": float(parts[1]),
                "hi": float(parts[2]),
                "points": int(parts[3]),
                "scale": "threshold" if len(parts) == 5 and parts[4] == "threshold" else "absolute",
            }
            return {"log_range": spec}
        if "," in text:
            return {"list": [float(v) for v in text.split(",")]}
        return {"value": float(text)}
    except ValueError as exc:
        raise ScenarioError(f"bad gamma override {text!r}: {exc}") from exc


def _scenario_from_args(args) -> Scenario:
    scenario = load_scenario(args.scenario)
    if getattr(args, "gamma", None):
        scenario = replace(scenario, gamma_spec=_parse_gamma_override(args.gamma))
    return scenario


def _first_gamma(scenario: Scenario) -> float:
    return float(scenario.resolve_gammas()[0])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_validate(args, scenario: Scenario) -> int:
    ts, nm, topo = scenario.true_system, scenario.nominal, scenario.topology
    dev = deviations(ts, nm)
    if dev.state_matrix_exact:
        mismatch = np.zeros((ts.n * ts.sensor_count,) * 2)
    else:
        try:
            gamma = _first_gamma(scenario)
        except (ScenarioError, ValueError, SolverError, np.linalg.LinAlgError):
            gamma = 1.0
        try:
            mismatch = build_filter(nm, ts, topo, gamma).mismatch_diag
        except SolverError:
            # No computable gains: the deviation feedthrough is nonzero anyway.
            mismatch = matkit.kron(np.eye(ts.sensor_count), -dev.d_a)
    report = validate_assumptions(ts, nm, topo, mismatch)
    checks = [
        ("network connected", report.connected),
        ("nominal pair observable", report.observable),
        ("nominal noise pair controllable", report.controllable),
        (
            "mismatch feedthrough zero or true state matrix Hurwitz",
            report.mismatch_ok,
        ),
    ]
    for label, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {label}")
    out = _out_dir(args)
    _write_meta(
        out / f"{scenario.name}_validate_meta.json",
        scenario,
        "validate",
        {
            "connected": report.connected,
            "observable": report.observable,
            "controllable": report.controllable,
            "mismatch_zero": report.mismatch_zero,
            "true_a_hurwitz": report.true_a_hurwitz,
            "all_ok": report.all_ok,
            "failures": report.failures(),
        },
    )
    if report.all_ok:
        print("all assumptions hold")
        return 0
    for line in report.failures():
        print(f"violation: {line}", file=sys.stderr)
    return 2


SWEEP_HEADER = [
    "gamma",
    "gamma_threshold",
    "tr_nominal",
    "tr_error",
    "gap",
    "upper1",
    "upper2",
    "tr_nominal_floor",
    "mse",
    "status",
]


def cmd_sweep(args, scenario: Scenario) -> int:
    ts, nm, topo = scenario.true_system, scenario.nominal, scenario.topology
    dev = deviations(ts, nm)
    gammas = np.sort(scenario.resolve_gammas())
    base = build_filter(nm, ts, topo, float(gammas[-1]))
    if base.gamma_min is None:
        print("no consensus-gain threshold exists for this nominal model", file=sys.stderr)
        return 2
    threshold = base.gamma_min
    fit = asymptotic_fit(
        nm, topo, np.logspace(np.log10(2.0 * threshold), np.log10(200.0 * threshold), 20)
    )
    cfg = scenario.sim_config(args.trials, args.seed) if args.simulate else None

    rows = []
    for gamma in gammas:
        fr = base.with_gamma(float(gamma))
        tr_nominal = tr_error = gap = upper1 = upper2 = floor = float("nan")
        status = "ok"
        try:
            ss = steady_state(fr, ts, nm)
            rep = trace_bounds(fr, ss, dev)
            tr_nominal, tr_error, gap = rep.tr_nominal, rep.tr_error, rep.gap
            upper1 = rep.upper
            floor = rep.tr_nominal_floor
            g = float(gamma)
            plain_fit = math.sqrt(max(fit.a1 + fit.b1 / g + fit.c1 / g**2, 0.0))
            weighted_fit = math.sqrt(max(fit.a2 + fit.b2 / g + fit.c2 / g**2, 0.0))
            upper2 = tr_nominal + deviation_gap(fr, dev, plain_fit, weighted_fit)[0]
        except (HypothesisError, SolverError) as exc:
            status = "below_threshold" if gamma < fr.gamma_ref else f"failed: {exc}"
        mse = float("nan")
        if cfg is not None and status == "ok":
            mse = monte_carlo_mse(ts, fr, cfg).steady_mse
        rows.append(
            [float(gamma), threshold, tr_nominal, tr_error, gap, upper1, upper2, floor, mse, status]
        )

    out = _out_dir(args)
    _write_csv(out / f"{scenario.name}_sweep.csv", SWEEP_HEADER, rows)
    _write_meta(
        out / f"{scenario.name}_sweep_meta.json",
        scenario,
        "sweep",
        {
            "gamma_threshold": threshold,
            "gamma_count": int(gammas.size),
            "simulated": bool(args.simulate),
            "trials": cfg.trials if cfg else None,
            "seed": cfg.seed if cfg else None,
            "fit": {
                "a1": fit.a1, "b1": fit.b1, "c1": fit.c1,
                "a2": fit.a2, "b2": fit.b2, "c2": fit.c2,
                "residual": fit.fit_residual,
            },
        },
    )
    ok_rows = sum(1 for r in rows if r[-1] == "ok")
    print(f"sweep: {ok_rows}/{len(rows)} gains analyzed, threshold {threshold:.6g}")
    print(f"wrote {out / f'{scenario.name}_sweep.csv'}")
    return 0


DIVERGENCE_HEADER = ["time", "error_proj", "nominal_proj", "tr_error", "tr_nominal", "tr_error_rate"]


def cmd_divergence(args, scenario: Scenario) -> int:
    ts, nm, topo = scenario.true_system, scenario.nominal, scenario.topology
    gamma = _first_gamma(scenario)
    report = divergence_test(nm, ts, topo, gamma)
    if report.certificates:
        for cert in report.certificates:
            direction = np.array2string(cert.vector.real, precision=6)
            print(
                f"certificate: freq {cert.freq:.6g}, direction {direction}, "
                f"eigen residual {cert.aug_residual:.2e}, "
                f"diverges: {'yes' if cert.will_diverge else 'no'}"
                + (f", growth rate {cert.growth_rate:.6g}/time" if cert.will_diverge else "")
            )
    else:
        print("no divergence certificates; the nominal noise model excites every neutral mode")

    fr = build_filter(nm, ts, topo, gamma)
    grid = scenario.ode.grid()
    traj = propagate(fr, ts, nm, grid, dt=scenario.ode.dt, init=scenario.initial_state())
    rows = []
    proj_vec = None
    if report.certificates:
        e = report.certificates[0].vector
        proj_vec = np.kron(np.ones(ts.sensor_count), e.real)
        norm = np.linalg.norm(report.certificates[0].vector.imag)
        if norm > 1e-9:
            print("note: certificate is complex; projecting on its real part")
    for k, t in enumerate(grid):
        if proj_vec is not None:
            proj_e = float(proj_vec @ traj.error_cov[k] @ proj_vec)
            proj_u = float(proj_vec @ traj.nominal_cov[k] @ proj_vec)
        else:
            proj_e = proj_u = float("nan")
        rows.append(
            [
                float(t),
                proj_e,
                proj_u,
                float(np.trace(traj.error_cov[k])),
                float(np.trace(traj.nominal_cov[k])),
                float(traj.error_trace_rate[k]),
            ]
        )
    out = _out_dir(args)
    _write_csv(out / f"{scenario.name}_divergence.csv", DIVERGENCE_HEADER, rows)

    extra = {
        "gamma": gamma,
        "mismatch_zero": report.mismatch_zero,
        "certificates": [
            {
                "freq": c.freq,
                "vector_real": c.vector.real.tolist(),
                "vector_imag": c.vector.imag.tolist(),
                "aug_residual": c.aug_residual,
                "will_diverge": c.will_diverge,
                "growth_rate": c.growth_rate,
            }
            for c in report.certificates
        ],
    }
    if args.simulate:
        cfg = scenario.sim_config(args.trials, args.seed)
        series = monte_carlo_mse(ts, fr, cfg)
        _write_csv(
            out / f"{scenario.name}_divergence_mse.csv",
            ["time", "mse"],
            [[float(t), float(v)] for t, v in zip(series.time, series.mse)],
        )
        extra["trials"] = cfg.trials
        extra["seed"] = cfg.seed
        extra["overflow_trials"] = list(series.overflow_trials)
    _write_meta(out / f"{scenario.name}_divergence_meta.json", scenario, "divergence", extra)
    print(f"wrote {out / f'{scenario.name}_divergence.csv'}")
    return 0


RELATIONS_HEADER = ["time", "tr_nominal", "tr_error", "gap_min_eig", "gap_norm", "gap_norm_bound"]


def cmd_relations(args, scenario: Scenario) -> int:
    ts, nm, topo = scenario.true_system, scenario.nominal, scenario.topology
    dev = deviations(ts, nm)
    if not dev.state_matrix_exact:
        print(
            "relation analysis requires exact state and measurement matrices; "
            f"deviation norms are {dev.d_a_norm:.3g} (state) and "
            f"{max(dev.d_c_norms):.3g} (measurement)",
            file=sys.stderr,
        )
        return 2
    gamma = _first_gamma(scenario)
    fr = build_filter(nm, ts, topo, gamma)
    init = scenario.initial_state()
    grid = scenario.ode.grid()
    try:
        rel = relation_analysis(
            fr, dev, init.nominal_cov - init.error_cov, grid, dt=scenario.ode.dt
        )
    except HypothesisError as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return 2
    traj = propagate(fr, ts, nm, grid, dt=scenario.ode.dt, init=init)
    rows = [
        [
            float(t),
            float(np.trace(traj.nominal_cov[k])),
            float(np.trace(traj.error_cov[k])),
            float(rel.gap_min_eig[k]),
            float(rel.gap_norm[k]),
            float(rel.gap_norm_bound[k]),
        ]
        for k, t in enumerate(grid)
    ]
    out = _out_dir(args)
    _write_csv(out / f"{scenario.name}_relations.csv", RELATIONS_HEADER, rows)
    _write_meta(
        out / f"{scenario.name}_relations_meta.json",
        scenario,
        "relations",
        {
            "gamma": gamma,
            "drive_sign": rel.drive_sign,
            "ordering": rel.ordering,
            "log_norm_rate": rel.log_norm_rate,
        },
    )
    verdict = {
        "nominal_upper": "nominal index upper-bounds the error covariance",
        "nominal_lower": "nominal index lower-bounds the error covariance",
        "violated": "claimed ordering violated numerically",
        "inconclusive": "mismatch drive is indefinite; no ordering claimed",
    }[rel.ordering]
    print(f"mismatch drive sign: {rel.drive_sign}; {verdict}")
    print(f"wrote {out / f'{scenario.name}_relations.csv'}")
    return 0


def cmd_simulate(args, scenario: Scenario) -> int:
    ts, nm, topo = scenario.true_system, scenario.nominal, scenario.topology
    gamma = _first_gamma(scenario)
    fr = build_filter(nm, ts, topo, gamma)
    cfg = scenario.sim_config(args.trials, args.seed)
    series = monte_carlo_mse(ts, fr, cfg)
    traj = propagate(fr, ts, nm, series.time, dt=scenario.ode.dt, init=scenario.initial_state())
    n_sensors = ts.sensor_count
    rows = [
        [
            float(t),
            float(series.mse[k]),
            float(np.trace(traj.error_cov[k])) / n_sensors,
        ]
        for k, t in enumerate(series.time)
    ]
    out = _out_dir(args)
    _write_csv(out / f"{scenario.name}_simulate.csv", ["time", "mse", "tr_error_over_sensors"], rows)
    _write_meta(
        out / f"{scenario.name}_simulate_meta.json",
        scenario,
        "simulate",
        {
            "gamma": gamma,
            "trials": cfg.trials,
            "seed": cfg.seed,
            "dt": cfg.dt,
            "horizon": cfg.horizon,
            "steady_mse": series.steady_mse,
            "steady_se": series.steady_se,
            "overflow_trials": list(series.overflow_trials),
        },
    )
    print(
        f"steady MSE {series.steady_mse:.6g} (se {series.steady_se:.2g}) over "
        f"{series.trials_used} trials"
    )
    print(f"wrote {out / f'{scenario.name}_simulate.csv'}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dckf",
        description=(
            "Distributed continuous-time Kalman filtering under model mismatch: "
            "assumption checks, steady-state bounds, divergence certificates, "
            "index ordering, and Monte Carlo validation."
        ),
    )
    parser.add_argument("--version", action="version", version=f"dckf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sim_flag: bool = False):
        p.add_argument(
            "--scenario",
            required=True,
            help=f"scenario JSON path or preset name ({', '.join(preset_names())})",
        )
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--trials", type=int, default=None, help="override the trial count")
        p.add_argument("--gamma", default=None, help="override the gain spec: VALUE | v1,v2,... | log:lo:hi:n[:threshold]")
        if sim_flag:
            p.add_argument("--simulate", action="store_true", help="add Monte Carlo columns")

    p = sub.add_parser("validate", help="check the structural assumptions")
    common(p)
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("sweep", help="steady-state bounds over the gain grid")
    common(p, sim_flag=True)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("divergence", help="divergence certificates and projected variances")
    common(p, sim_flag=True)
    p.set_defaults(handler=cmd_divergence)

    p = sub.add_parser("relations", help="ordering of the nominal index vs the error covariance")
    common(p)
    p.set_defaults(handler=cmd_relations)

    p = sub.add_parser("simulate", help="Monte Carlo MSE next to the analytic curve")
    common(p)
    p.set_defaults(handler=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        scenario = _scenario_from_args(args)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.handler(args, scenario)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except HypothesisError as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return 2
    except (SolverError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
