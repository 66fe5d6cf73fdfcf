"""Command-line entry point ``penflow``.

Subcommands: ``run``, ``sweep-eps``, ``sweep-h``, ``sweep-delta``,
``verify-eos``, ``audit-chem`` and ``emit-plots``.  The exit status is 0
exactly when every asserted check passes; failures are also summarised as
one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as pio
from .chemistry import audit_network
from .diagnostics import convergence_study, energy_budget, run_scenario
from .scenario import CATALOG, ConfigError, load_config
from .thermo import verify_hypotheses

log = logging.getLogger("penflow")

# sweep defaults and pass conditions: (param, values, fixed overrides, {monitor: min slope}, min R^2)
SWEEPS = {
    "sweep-eps": ("penalty.eps", [1e-2, 1e-3, 1e-4, 1e-5], ["penalty.h=0.2"],
                  {"slip": 0.8}, 0.95),
    "sweep-h": ("penalty.h", [0.4, 0.2, 0.1, 0.05], ["penalty.eps=1e-4"],
                {"A1": 8.0, "A2": 0.05, "A3": 0.6, "A4": None, "A5": 0.3}, 0.9),
    "sweep-delta": ("penalty.delta", [1e-2, 1e-3, 1e-4, 1e-5], ["penalty.eps=1e-4"],
                    {"delta_energy": 0.9}, None),
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file (INI or JSON)")
    common.add_argument("--out-dir", default="penflow-out", help="output directory")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted override such as penalty.eps=1e-3 (repeatable)")
    common.add_argument("--threads", type=int, default=1, help="parallel sweep workers")
    common.add_argument("--seed", type=int, default=0,
                        help="reserved; only the chemistry audit samples randomly")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="penflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run one scenario with diagnostics")
    r.add_argument("scenario", nargs="?", help=f"catalog name ({', '.join(CATALOG)})")
    for name in SWEEPS:
        s = sub.add_parser(name, parents=[common], help=f"convergence sweep over {SWEEPS[name][0]}")
        s.add_argument("scenario", nargs="?", default=None)
        s.add_argument("--values", type=float, nargs="+", help="parameter values (at least four)")
    v = sub.add_parser("verify-eos", parents=[common], help="audit the constitutive hypotheses")
    v.add_argument("scenario", nargs="?", default=None)
    v.add_argument("--samples", type=int, default=25, help="grid points per axis")
    a = sub.add_parser("audit-chem", parents=[common], help="audit the production rates")
    a.add_argument("scenario", nargs="?", default=None)
    a.add_argument("--samples", type=int, default=10_000)
    e = sub.add_parser("emit-plots", parents=[common], help="CSV series to gnuplot columns")
    e.add_argument("csv", nargs="+")
    return p


def _scenario(args):
    src = args.config or getattr(args, "scenario", None) or "piston1d"
    return load_config(src, args.override)


def _fail(failures: list, command: str) -> int:
    sys.stderr.write(json.dumps({"command": command, "status": "fail", "failures": failures},
                                sort_keys=True) + "\n")
    return 1


def _line(name, ok, detail):
    print(f"{name:<34} {'PASS' if ok else 'FAIL':<5} {detail}")
    return ok


def cmd_run(args) -> int:
    sc = _scenario(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traj, rep = run_scenario(sc)
    c = rep.column
    final = traj.final
    checks = []
    mass = c("mass")
    drift = abs(mass[-1] - mass[0]) / mass[0] if mass[0] > 0 else 0.0
    checks.append(("mass drift", drift <= 1e-10, f"{drift:.3e} (<= 1e-10)"))
    ysum = float(np.max(c("Y_sum_err")))
    checks.append(("species sum", ysum <= 1e-12, f"{ysum:.3e} (<= 1e-12)"))
    clip = float(c("clip_mass_cum")[-1])
    checks.append(("clipped mass", clip <= 1e-10 * mass[0], f"{clip:.3e} (<= 1e-10 M)"))
    ratio = c("sigma_en_min") + 1e-10 * c("sigma_en_median")
    checks.append(("entropy production sign", bool(np.all(ratio >= 0)),
                   f"min sigma_en {float(np.min(c('sigma_en_min'))):.3e}"))
    if sc.config["initial"]["rho_out"] == 0 and sc.run_opts["cut_cell"] and not sc.domain.frozen:
        srho = float(np.max(c("solid_rho_max")))
        checks.append(("solid density", srho <= 1e-8, f"{srho:.3e} (<= 1e-8)"))
    if len(rep) > 1:
        b = energy_budget(rep, sc.params.eps)
        scale = max(abs(c("total_energy")[0]), 1.0)
        book = float(np.max(np.abs(b.bookkeeping)))
        checks.append(("energy bookkeeping", book <= 1e-10 * scale, f"{book:.3e}"))
        print(f"{'energy residual (max interval)':<34} info  {float(b.residual.max()):.3e}")

    stem = sc.name
    pio.write_series_csv(out / f"{stem}_series.csv", rep, sc.config, sc.hash, sc.name)
    if sc.run_opts["vtk"]:
        pio.write_vtk(out / f"{stem}_final.vtk", final, sc.grid, sc.config, sc.hash)
    pio.write_binary(out / f"{stem}_final.bin", final, sc.config, sc.hash)
    print(f"scenario {sc.name} config_hash {sc.hash} steps {len(traj.logs)} t={final.t:.6g}")
    ok = all(_line(n, o, d) for n, o, d in checks)
    (out / f"{stem}_summary.json").write_text(json.dumps(
        {"config_hash": sc.hash, "checks": [{"name": n, "pass": bool(o), "detail": d}
                                            for n, o, d in checks]}, indent=1, sort_keys=True))
    return 0 if ok else _fail([n for n, o, _ in checks if not o], "run")


def cmd_sweep(args) -> int:
    param, default_values, fixed, thresholds, r2_min = SWEEPS[args.command]
    src = args.config or args.scenario or "piston1d"
    sc = load_config(src, fixed + list(args.override))
    values = args.values or default_values
    res = convergence_study(sc, param, values, tuple(thresholds), workers=max(1, args.threads))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tag = args.command.replace("sweep-", "")
    (out / f"sweep_{tag}.csv").write_text(res.to_csv())
    (out / f"slopes_{tag}.csv").write_text(res.slope_table())
    print(res.to_csv(), end="")
    failures = []
    for mon, min_slope in thresholds.items():
        slope, r2 = res.fits[mon]
        if min_slope is None:
            print(f"{mon:<14} slope {slope:8.4f}  R2 {r2:.4f}  (reported)")
            continue
        ok = slope >= min_slope and res.monotone(mon) and (r2_min is None or r2 >= r2_min)
        _line(f"{mon} slope", ok, f"{slope:.4f} (>= {min_slope})  R2 {r2:.4f}"
              + (f" (>= {r2_min})" if r2_min else "") + f"  monotone={res.monotone(mon)}")
        if not ok:
            failures.append(mon)
    return 0 if not failures else _fail(failures, args.command)


def cmd_verify_eos(args) -> int:
    sc = _scenario(args)
    rep = verify_hypotheses(sc.eos, n=args.samples)
    print(rep)
    return 0 if rep.passed else _fail(rep.failures, "verify-eos")


def cmd_audit_chem(args) -> int:
    sc = _scenario(args)
    rep = audit_network(sc.network, sc.eos, n_samples=args.samples, seed=args.seed)
    print(rep)
    return 0 if rep.passed else _fail(rep.failures, "audit-chem")


def cmd_emit_plots(args) -> int:
    n = 0
    for path in args.csv:
        n += len(pio.emit_gnuplot(path, args.out_dir))
    print(f"wrote {n} files to {args.out_dir}")
    return 0


COMMANDS = {"run": cmd_run, "verify-eos": cmd_verify_eos, "audit-chem": cmd_audit_chem,
            "emit-plots": cmd_emit_plots, **{k: cmd_sweep for k in SWEEPS}}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        return _fail(exc.errors, args.command)


if __name__ == "__main__":
    sys.exit(main())
