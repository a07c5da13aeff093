"""Command-line entry point.

Exit status: 0 when every bound check passes, 2 when a check is violated (a
finding, not a crash), 1 on configuration or input errors.
"""

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .bounds import throughput_composition, throughput_identity
from .config import ENV_PREFIX, parse_config, parse_tau_grid
from .errors import BitResetError
from .report import write_csv, write_json

logger = logging.getLogger("bitreset")

EPILOG = f"""\
Configuration precedence: --config file < environment < flags.
Environment overrides use the prefix {ENV_PREFIX}, e.g. {ENV_PREFIX}MU=0.2 or
{ENV_PREFIX}TAU_GRID='[1, 10, 100]' (values are JSON-decoded).
Defaults: N=100, mu=0.1, beta=1, E_max=10, tau=100, eps_target=0.25,
tau grid logspace[0.1, 1000] (60 points), region-map tau_cap=5e4.
Exit status: 0 all checks pass, 2 bound violation, 1 error.
"""


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (default: out)")
    common.add_argument("--tau-grid", metavar="GRID", help="'lo:hi:num' log grid or comma list of durations")
    common.add_argument("--workers", type=int, help="worker processes for sweeps (default: CPU count)")
    common.add_argument("--seed", type=int, help="seed for randomized checks (default: 0)")
    common.add_argument("--N", type=int, help="number of lifts (default: 100)")
    common.add_argument("--mu", type=float, help="swap rate (default: 0.1)")
    common.add_argument("--beta", type=float, help="inverse temperature (default: 1)")
    common.add_argument("--E-max", dest="E_max", type=float, help="final energy of level 1 (default: 10)")
    common.add_argument("--tau", type=float, help="protocol duration for 'run' (default: 100)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="bitreset",
        description="Finite-time bit reset: simulations, thermodynamic accounting and bound checks.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="single constant-shifting reset")
    sp = sub.add_parser("sweep", parents=[common], help="duration sweep at fixed energy or fixed error")
    sp.add_argument("--mode", choices=["fixed-energy", "fixed-error"], help="default: from config, else fixed-energy")
    sp.add_argument("--eps", dest="eps_target", type=float, help="target error for fixed-error sweeps (default: 0.25)")
    rp = sub.add_parser("region-map", parents=[common], help="I/II/III classification of the (E_max, eps) plane")
    rp.add_argument("--tau-cap", dest="tau_cap", type=float, help="longest duration considered (default: 5e4)")
    sub.add_parser("continuum", parents=[common], help="double-well Fokker-Planck reset")
    sub.add_parser("throughput", parents=[common], help="throughput identity and bound")
    sub.add_parser("selftest", parents=[common], help="seeded invariant battery")
    return parser


def _overrides(args):
    keys = ("out", "workers", "seed", "N", "mu", "beta", "E_max", "tau", "eps_target", "tau_cap")
    out = {k: getattr(args, k, None) for k in keys}
    if args.tau_grid:
        out["tau_grid"] = parse_tau_grid(args.tau_grid)
    return out


def _workers(cfg):
    return cfg.workers if cfg.workers is not None else (os.cpu_count() or 1)


def _status(reports):
    bad = [(label, r) for label, rep in reports for r in rep.violations()]
    for label, r in bad:
        logger.error("bound violated at %s: %s lhs=%.17g rhs=%.17g", label, r.name, r.lhs, r.rhs)
    return 2 if bad else 0


# --------------------------------------------------------------------------
# commands


def cmd_run(cfg):
    from .experiments import run_constant_shifting

    run = run_constant_shifting(cfg.N, cfg.E_max, cfg.tau, cfg.mu, cfg.beta, p0=cfg.p0, require_hypotheses=True)
    cols = run.trace.to_columns()
    header = list(cols)
    rows = [[cols[h][i] for h in header] for i in range(len(run.trace.times))]
    write_csv(os.path.join(cfg.out, "trajectory.csv"), header, rows)
    write_json(
        os.path.join(cfg.out, "run.json"),
        {"config": cfg.to_dict(), "ledger": run.ledger.to_dict(), "bounds": run.report.to_dict()},
    )
    return _status([(f"tau={cfg.tau}", run.report)])


def cmd_sweep(cfg, mode):
    from .experiments import SweepSpec, run_fixed_energy_sweep, run_fixed_error_sweep, sweep_header

    taus = tuple(cfg.taus())
    if mode == "fixed-energy":
        spec = SweepSpec("fixed-energy", taus, cfg.N, cfg.mu, cfg.beta, E_max=cfg.E_max)
        points = run_fixed_energy_sweep(spec, _workers(cfg))
    else:
        spec = SweepSpec("fixed-error", taus, cfg.N, cfg.mu, cfg.beta, eps_target=cfg.eps_target, E_cap=cfg.E_cap)
        points = run_fixed_error_sweep(spec, _workers(cfg))
    write_csv(os.path.join(cfg.out, "sweep.csv"), sweep_header(), [p.row() for p in points])
    reports = [(f"tau={p.tau}", p.run.report) for p in points if p.run is not None]
    write_json(
        os.path.join(cfg.out, "sweep_reports.json"),
        {
            "config": cfg.to_dict(),
            "mode": mode,
            "points": [
                {"tau": p.tau, "status": p.status, "note": p.note, "bounds": p.run.report.to_dict() if p.run else None}
                for p in points
            ],
        },
    )
    return _status(reports)


def cmd_region_map(cfg):
    from .experiments import REGION_COLUMNS, region_map

    r = cfg.region
    E_grid = np.logspace(math.log10(r["E_min"]), math.log10(r["E_max"]), r["n_E"])
    eps_grid = np.logspace(math.log10(r["eps_min"]), math.log10(0.5), r["n_eps"] + 1)[:-1]
    rm = region_map(cfg.tau_cap, cfg.N, cfg.mu, cfg.beta, E_grid, eps_grid, _workers(cfg))
    write_csv(os.path.join(cfg.out, "region_map.csv"), REGION_COLUMNS, list(rm.rows()))
    labels, counts = np.unique(rm.labels, return_counts=True)
    write_json(
        os.path.join(cfg.out, "region_summary.json"),
        {
            "config": cfg.to_dict(),
            "counts": {str(k): int(v) for k, v in zip(labels, counts)},
            "boundary": [{"E_max": float(E), "eps": c} for E, c in zip(rm.E_grid, rm.boundary())],
        },
    )
    return 0


def cmd_continuum(cfg):
    from .continuum import PotentialProtocol, run_continuum_reset, write_snapshot_csv

    c = cfg.continuum
    if c["idle"]:
        proto = PotentialProtocol.idle(k=c["k"], a0=c["a0"], D=c["D"])
    else:
        proto = PotentialProtocol(k=c["k"], a0=c["a0"], a1=c["a1"], f1=c["f1"], D=c["D"])
    rows, results, reports = [], [], []
    for tau in c["taus"]:
        run = run_continuum_reset(proto, tau, cfg.beta, M=c["M"], dt=c["dt"], snapshot_times=c["snapshots"])
        L = run.ledger
        rows.append(
            {
                "tau": tau, "eps": run.trace.eps, "W": L.W, "W_qs": L.W_qs, "W_pn": L.W_pn,
                "Sigma": L.Sigma_rate, "Sigma_bit": float(run.trace.Sigma_bit[-1]), "D_eps": run.trace.D_eps,
                "mu_avg": run.trace.mu_avg, "penalty_residual": L.penalty_residual,
                "all_satisfied": run.report.all_satisfied,
            }
        )
        results.append(
            {"tau": tau, "ledger": L.to_dict(), "bounds": run.report.to_dict(), "diagnostics": run.diagnostics}
        )
        reports.append((f"tau={tau}", run.report))
        for snap in run.snapshots:
            write_snapshot_csv(os.path.join(cfg.out, f"snapshot_tau{tau:g}_t{snap['t']:.6g}.csv"), snap)
    write_csv(os.path.join(cfg.out, "continuum.csv"), list(rows[0]), rows)
    write_json(os.path.join(cfg.out, "continuum.json"), {"config": cfg.to_dict(), "runs": results})
    return _status(reports)


def cmd_throughput(cfg):
    t = cfg.throughput
    E_max = cfg.E_max
    beta = 1.0 / t["T"]
    terms = throughput_composition(t["n"], t["tau_sw"], t["T"], cfg.mu, t["eps"], E_max)
    lhs, rhs = throughput_identity(t["eps"], E_max, beta)
    write_json(
        os.path.join(cfg.out, "throughput.json"),
        {
            "config": cfg.to_dict(),
            "switch_rate": terms.B,
            "W_qs": terms.W_qs,
            "W_pn_min": terms.W_pn_min,
            "energy_per_switch": terms.E_bit,
            "power_bound": terms.power,
            "identity_lhs": lhs,
            "identity_rhs": rhs,
        },
    )
    return 0 if abs(lhs - rhs) <= 1e-10 else 2


def cmd_selftest(cfg):
    from .selftest import run_selftest

    results = run_selftest(cfg.seed)
    write_json(os.path.join(cfg.out, "selftest.json"), {"seed": cfg.seed, "results": results})
    for r in results:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['name']}: {r['detail']}")
    return 0 if all(r["passed"] for r in results) else 2


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config, _overrides(args))
        os.makedirs(cfg.out, exist_ok=True)
        cmd = args.command
        if cmd == "run":
            return cmd_run(cfg)
        if cmd == "sweep":
            mode = args.mode or {
                "fixed-error-sweep": "fixed-error",
            }.get(cfg.experiment, "fixed-energy")
            return cmd_sweep(cfg, mode)
        if cmd == "region-map":
            return cmd_region_map(cfg)
        if cmd == "continuum":
            return cmd_continuum(cfg)
        if cmd == "throughput":
            return cmd_throughput(cfg)
        return cmd_selftest(cfg)
    except (BitResetError, ValueError, OSError) as exc:
        print(f"bitreset: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
