"""Command-line interface.

Every subcommand writes a delimited table (CSV by default, or JSON) whose
first line records the version, seed and resolved parameters. ``--plot``
additionally renders a figure to the given image file.

Exit status: 0 on success, 1 on a domain error (for example no viable
cycle), 2 on a usage error.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .body import (MODEL_A, MODEL_B, REFERENCE_STATES, STATE_COMPONENTS, BodyParams,
                   ControlGains, ModelKind, load_config)
from .dynamics import IntegratorConfig, SimulationError, TRACE_COLUMNS, simulate
from .io import FORMATS, header, write_json, write_table


class UsageError(Exception):
    pass


def _models(value: str) -> list[ModelKind]:
    if value == "both":
        return [MODEL_A, MODEL_B]
    return [ModelKind.parse(value)]


def _common(sub: argparse.ArgumentParser, model_default: str = "both",
            both: bool = True, plot: bool = True) -> None:
    choices = ["a", "b", "both"] if both else ["a", "b"]
    sub.add_argument("--model", choices=choices, default=model_default)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--dt", type=float, default=None, help="integration step outside impacts (s)")
    sub.add_argument("--out", default="-", help="output file (default: standard output)")
    sub.add_argument("--format", choices=FORMATS, default="csv")
    sub.add_argument("--jobs", type=int, default=1, help="worker processes")
    sub.add_argument("--config", default=None, help="key = value file overriding parameters")
    if plot:
        sub.add_argument("--plot", default=None, help="also render a figure to this image file")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="headwalk", description=__doc__.splitlines()[0])
    sp = p.add_subparsers(dest="command", required=True)

    s = sp.add_parser("simulate", help="walk from the published pre-impact state")
    _common(s, "a", both=False, plot=False)
    s.add_argument("--steps", type=int, default=10)
    s.add_argument("--sigma", type=float, default=0.0, help="slope std per step (rad)")

    s = sp.add_parser("limit-cycle", help="locate the flat-ground limit cycle")
    _common(s, plot=False)
    s.add_argument("--samples", type=int, default=64, help="initial states")
    s.add_argument("--steps", type=int, default=500)

    s = sp.add_parser("traces", help="energy, power and swing-leg traces over one cycle")
    _common(s)

    s = sp.add_parser("mfpt", help="mean first passage time on rough ground")
    _common(s, "a", both=False, plot=False)
    s.add_argument("--sigma", type=float, default=0.01)
    s.add_argument("--samples", type=int, default=1000, help="episodes")
    s.add_argument("--step-cap", type=int, default=10**6)
    s.add_argument("--time-budget", type=float, default=None, help="seconds")

    s = sp.add_parser("mfpt-curve", help="MFPT over several slope deviations")
    _common(s, "a", both=False)
    s.add_argument("--sigmas", type=float, nargs="+", default=[0.01, 0.02, 0.03, 0.04, 0.05])
    s.add_argument("--samples", type=int, default=200, help="episodes per sigma")
    s.add_argument("--step-cap", type=int, default=10**6)

    lin = sp.add_parser("linear", help="linearised upper body on a cart")
    lsp = lin.add_subparsers(dest="linear_command", required=True)
    s = lsp.add_parser("bode", help="frequency response to cart acceleration")
    _common(s)
    s.add_argument("--output", choices=["head_angle", "hip_force"], default="head_angle")
    s.add_argument("--points", type=int, default=200)
    s.add_argument("--wmin", type=float, default=0.1)
    s.add_argument("--wmax", type=float, default=1000.0)
    s = lsp.add_parser("impulse", help="cart power after a velocity step")
    _common(s)
    s.add_argument("--v-pre", type=float, default=1.2)
    s.add_argument("--v-post", type=float, default=1.0)
    s.add_argument("--duration", type=float, default=2.0)
    s.add_argument("--points", type=int, default=2001)

    s = sp.add_parser("sweep", help="randomised gain sweep")
    _common(s)
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--promote", type=int, default=100, help="both-viable samples given MFPTs")
    s.add_argument("--episodes", type=int, default=200)
    s.add_argument("--sigma", type=float, default=0.03)
    s.add_argument("--step-budget", type=int, default=20000,
                   help="MFPT steps per sample and model")
    s.add_argument("--rederive-cycle", action="store_true",
                   help="start each sample from its own limit cycle")
    s.add_argument("--summary", default=None, help="JSON summary file")

    s = sp.add_parser("validate", help="run the invariant checks")
    _common(s, plot=False)
    return p


def _resolve(args):
    params, gains, integ = BodyParams(), ControlGains(), IntegratorConfig()
    if args.config:
        try:
            params, gains, integ = load_config(args.config, params, gains, integ)
        except (OSError, ValueError) as exc:
            raise UsageError(f"--config: {exc}") from None
    if args.dt is not None:
        if args.dt <= 0:
            raise UsageError("--dt must be positive")
        integ = replace(integ, dt_normal=args.dt, dt_impact=min(integ.dt_impact, args.dt))
    return params, gains, integ


def _meta(args, params, gains, integ, **extra):
    opts = {k: v for k, v in vars(args).items()
            if k not in ("command", "linear_command", "out", "format", "plot", "config")}
    return header(" ".join(filter(None, [args.command, getattr(args, "linear_command", None)])),
                  args.seed, {"options": opts, "body": asdict(params), "gains": asdict(gains),
                              "integrator": asdict(integ), **extra})


def cmd_simulate(args, params, gains, integ):
    model = ModelKind.parse(args.model)
    rng = np.random.default_rng(args.seed)
    slopes = rng.normal(0.0, args.sigma, args.steps) if args.sigma > 0 else np.zeros(args.steps)
    traj = simulate(REFERENCE_STATES[model], model, args.steps, slopes, params, gains, integ)
    cols, rows = traj.table()
    write_table(args.out, cols, rows, _meta(args, params, gains, integ, status=traj.status),
                args.format)
    if traj.status not in ("ok",):
        print(f"stopped after {traj.steps} steps: {traj.status}", file=sys.stderr)
    return 0


def cmd_limit_cycle(args, params, gains, integ):
    from .gait import find_limit_cycle

    if args.steps < 5 or args.samples < 1:
        raise UsageError("need --steps >= 5 and --samples >= 1")
    cols, values = ["component"], {}
    for m in _models(args.model):
        # average over the last fifth of the steps
        c = find_limit_cycle(m, params, gains, n_steps=args.steps,
                             record_from=args.steps * 4 // 5, integrator=integ,
                             n_initial=args.samples, seed=args.seed)
        cols.append(m.label)
        values[m] = c.fixed_state.as_array()
    rows = [[name, *(values[m][i] for m in values)] for i, name in enumerate(STATE_COMPONENTS)]
    write_table(args.out, cols, rows, _meta(args, params, gains, integ), args.format)
    return 0


def cmd_traces(args, params, gains, integ):
    from .gait import cycle_traces, find_limit_cycle

    cols = ("model", "pct_cycle", *TRACE_COLUMNS, "swing_angle", "swing_rate")
    rows, traces = [], {}
    for m in _models(args.model):
        c = find_limit_cycle(m, params, gains, integrator=integ, seed=args.seed)
        tr = cycle_traces(c, params=params, gains=gains, integrator=integ)
        traces[m.value] = tr
        for k in range(tr.t.size):
            phase = "impact" if tr.event[k] else ("swing", "impact", "takeoff")[tr.phase[k]]
            rows.append([m.label, tr.pct_cycle[k], tr.t[k], *tr.state[k], tr.energy[k],
                         tr.power[k], phase, tr.swing_angle[k], tr.swing_rate[k]])
        print(f"{m.label}: period {tr.period:.4f} s, power integral {tr.power_integral():.4f} J, "
              f"impulse {tr.impulse_energy:.4f} J, impact {tr.impact_energy:.4f} J",
              file=sys.stderr)
    write_table(args.out, cols, rows, _meta(args, params, gains, integ), args.format)
    if args.plot:
        from .plotting import plot_traces

        plot_traces(traces, args.plot)
    return 0


def _cycle_and_kernel(model, args, params, gains, integ):
    from .gait import LimitKernel, find_limit_cycle

    c = find_limit_cycle(model, params, gains, integrator=integ, seed=args.seed)
    return c, LimitKernel.from_cycle(c)


def cmd_mfpt(args, params, gains, integ):
    from .terrain import MfptReport, TerrainParams, estimate_mfpt

    model = ModelKind.parse(args.model)
    c, k = _cycle_and_kernel(model, args, params, gains, integ)
    rep = estimate_mfpt(model, c, k, TerrainParams(args.sigma, args.seed), args.samples,
                        params, gains, integ, args.step_cap, args.jobs, args.time_budget)
    write_table(args.out, MfptReport.CSV_COLUMNS, [rep.row()],
                _meta(args, params, gains, integ, capped=rep.capped,
                      budget_exhausted=rep.budget_exhausted), args.format)
    return 0


def cmd_mfpt_curve(args, params, gains, integ):
    from .terrain import MfptReport, mfpt_curve

    model = ModelKind.parse(args.model)
    reps = mfpt_curve(model, args.sigmas, args.samples, params, gains, integ, args.seed,
                      step_cap=args.step_cap, jobs=args.jobs)
    write_table(args.out, MfptReport.CSV_COLUMNS, [r.row() for r in reps],
                _meta(args, params, gains, integ), args.format)
    if args.plot:
        from .plotting import plot_mfpt_curve

        plot_mfpt_curve(reps, args.plot, model.label)
    return 0


def cmd_bode(args, params, gains, integ):
    from .linear import assemble, build, default_grid, frequency_response

    if args.wmin <= 0 or args.wmax <= args.wmin or args.points < 2:
        raise UsageError("need 0 < --wmin < --wmax and --points >= 2")
    w = default_grid(args.points, args.wmin, args.wmax)
    resp = {m: frequency_response(assemble(build(m, params, gains)), args.output, w)
            for m in _models(args.model)}
    cols = ["omega"]
    for m in resp:
        cols += [f"mag_db_{m.label}", f"phase_deg_{m.label}"]
    rows = [[w[i], *[v for m in resp for v in (resp[m].magnitude_db[i], resp[m].phase_deg[i])]]
            for i in range(w.size)]
    write_table(args.out, cols, rows, _meta(args, params, gains, integ), args.format)
    if args.plot:
        from .plotting import plot_bode

        plot_bode({m.value: r for m, r in resp.items()}, args.plot, args.output)
    return 0


def cmd_impulse(args, params, gains, integ):
    from .linear import assemble, build, impulse_power_response

    if args.duration <= 0 or args.points < 2:
        raise UsageError("need --duration > 0 and --points >= 2")
    resp = {m: impulse_power_response(assemble(build(m, params, gains)), args.v_pre,
                                      args.v_post, args.duration, args.points)
            for m in _models(args.model)}
    first = next(iter(resp.values()))
    cols = ["t", *[f"power_{m.label}" for m in resp]]
    rows = [[first.t[i], *[r.power[i] for r in resp.values()]] for i in range(first.t.size)]
    integrals = {f"integral_{m.label}": r.integral for m, r in resp.items()}
    write_table(args.out, cols, rows, _meta(args, params, gains, integ, **integrals),
                args.format, extra=integrals)
    for name, v in integrals.items():
        print(f"{name}: {v:.4f} J", file=sys.stderr)
    if args.plot:
        from .plotting import plot_impulse

        plot_impulse({m.value: r for m, r in resp.items()}, args.plot)
    return 0


def cmd_sweep(args, params, gains, integ):
    from .sweep import CSV_COLUMNS, SweepSetup, aggregate, baseline_starts, run_sweep

    if args.model != "both":
        raise UsageError("--model: the sweep compares both models; use --model both")
    starts = baseline_starts(params, gains, integ, args.seed)
    setup = SweepSetup(starts, params, integ, args.sigma, args.episodes, args.step_budget,
                       args.seed, gains, args.rederive_cycle)
    records = run_sweep(args.samples, args.promote, setup, args.jobs,
                        progress=lambda msg: print(msg, file=sys.stderr))
    summary = aggregate(records, seed=args.seed)
    meta = _meta(args, params, gains, integ)
    write_table(args.out, CSV_COLUMNS, [r.row() for r in records], meta, args.format,
                extra=summary)
    if args.summary:
        write_json(args.summary, {"summary": summary}, meta)
    if args.plot:
        from .plotting import plot_sweep

        plot_sweep(summary, args.plot)
    return 0


def cmd_validate(args, params, gains, integ):
    from .checks import CheckResult, run_checks

    results = run_checks(params, gains, integ)
    write_table(args.out, CheckResult.COLUMNS, [r.row() for r in results],
                _meta(args, params, gains, integ), args.format)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "limit-cycle": cmd_limit_cycle,
    "traces": cmd_traces,
    "mfpt": cmd_mfpt,
    "mfpt-curve": cmd_mfpt_curve,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        params, gains, integ = _resolve(args)
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        if args.command == "linear":
            fn = cmd_bode if args.linear_command == "bode" else cmd_impulse
        else:
            fn = COMMANDS[args.command]
        if getattr(args, "plot", None):
            Path(args.plot).parent.mkdir(parents=True, exist_ok=True)
        return fn(args, params, gains, integ)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"headwalk: error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"headwalk: {exc.reason}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"headwalk: error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
