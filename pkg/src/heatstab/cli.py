"""Command-line entry point: ``heatstab {spectrum,kernel,simulate,verify}``.

Exit status: 0 on success (blow-up counts as a result, not an error),
1 on configuration or numerical errors, 2 when verification items fail.
"""
import argparse
import json
import os
import sys

import numpy as np

from . import pipeline
from .config import load_config
from .errors import ConfigInvalid, HeatstabError
from .gains import write_kernel_csv
from .pde_sim import simulate
from .verify import decay_fit, report_json, run_suite, suite_passed

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2
FMT = "%.17g"


def _write_csv(path, header, columns):
    np.savetxt(path, np.column_stack(columns), fmt=FMT, delimiter=",",
               header=header, comments="")


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _tolist(a):
    return np.asarray(a, dtype=float).tolist()


def cmd_spectrum(cfg, out):
    system = pipeline.spectral_system(cfg)
    k = np.arange(system.n_pairs)
    _write_csv(os.path.join(out, "spectrum.csv"),
               "k,beta,delta,lambda_even,lambda_odd,C2,kappa",
               [k, system.beta, system.delta, system.lam[0::2], system.lam[1::2],
                system.C2, system.kappa])
    return EXIT_OK


def cmd_kernel(cfg, out):
    d = pipeline.design(cfg)
    g = d.gains
    write_kernel_csv(os.path.join(out, "kernel.csv"), g, cfg.M)
    _write_json(os.path.join(out, "gains.json"), {
        "N": d.N,
        "gammas": _tolist(g.gammas),
        "lambda_struct": _tolist(g.lambda_struct),
        "ell": _tolist(g.ell),
        "m": _tolist(g.m),
        "B": _tolist(g.Bk),
        "A": _tolist(g.A),
        "weights": _tolist(g.weights),
        "cond_sum_B": g.cond,
        "cond_mode_matrix": g.cond_modes,
    })
    return EXIT_OK


def cmd_simulate(cfg, out):
    controller = pipeline.design(cfg).gains if cfg.controller else None
    system = controller.system if controller else pipeline.spectral_system(cfg)
    traj = simulate(pipeline.problem(cfg, controller, system=system), cfg.backend)
    _write_csv(os.path.join(out, "trajectory.csv"), "t,l2norm", [traj.times, traj.l2norms])
    if cfg.snapshots:
        nt, nx = traj.snapshots.shape
        _write_csv(os.path.join(out, "snapshots.csv"), "t,x,y",
                   [np.repeat(traj.times, nx), np.tile(traj.x, nt), traj.snapshots.ravel()])
    report = decay_fit(traj, cfg.rho, tol=cfg.decay_tol).to_dict()
    report.update(blowup=traj.blowup, steps=traj.steps, backend=traj.backend,
                  closed_loop=controller is not None)
    _write_json(os.path.join(out, "decay_report.json"), report)
    print(f"verdict: {report['verdict']}  rate: {report['fitted_rate']}")
    return EXIT_OK


def cmd_verify(cfg, out):
    report = run_suite(cfg)
    with open(os.path.join(out, "suite_report.json"), "w", encoding="utf-8") as fh:
        fh.write(report_json(report))
    s = report["summary"]
    print(f"{s['passed']}/{s['items']} checks passed")
    return EXIT_OK if suite_passed(report) else EXIT_FAILED


COMMANDS = {"spectrum": cmd_spectrum, "kernel": cmd_kernel,
            "simulate": cmd_simulate, "verify": cmd_verify}


def build_parser():
    p = argparse.ArgumentParser(prog="heatstab", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", choices=sorted(COMMANDS),
                   help="defaults to the config's 'mode'")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides 'outputs')")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry; dotted keys, JSON values (repeatable)")
    p.add_argument("--seed", type=int, help="seed for random initial data and checks")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, args.seed)
        out = args.out or cfg.outputs
        os.makedirs(out, exist_ok=True)
        return COMMANDS[args.command or cfg.mode](cfg, out)
    except ConfigInvalid as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (HeatstabError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
