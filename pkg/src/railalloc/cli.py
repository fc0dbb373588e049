"""Command-line entry point: ``railalloc <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 solver non-certification.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import experiments as ex
from .errors import ConfigError, InvalidArgumentError, MaxIterationsError
from .geometry import write_scenario
from .radio import LinkBudget
from .sqp import capacity_problem, solve_sqp, write_trace_csv

EXIT_OK, EXIT_CONFIG, EXIT_UNCERTIFIED = 0, 2, 3

log = logging.getLogger("railalloc")


def _config(args) -> ex.ExperimentConfig:
    cfg = ex.load_config(args.config) if args.config else ex.ExperimentConfig()
    if getattr(args, "seeds", None):
        if args.seeds < 1:
            raise ConfigError("--seeds must be >= 1")
        cfg.seeds = list(range(args.seeds))
    return cfg


def _sweep(runner):
    def run(args):
        rows = runner(_config(args))
        ex.emit_csv(rows, args.out)
        bad = [r for r in rows if not r.certified]
        for r in bad:
            log.error("uncertified %s solution at %s=%g seed=%d", r.method, r.sweep_var,
                      r.value, r.seed)
        print(f"wrote {len(rows)} rows to {args.out}")
        return EXIT_UNCERTIFIED if bad else EXIT_OK
    return run


def _certify(args):
    records = ex.certify(args.devices, args.instances, args.seed, args.step)
    failed = 0
    for r in records:
        grid = "" if r.grid_gap_bps is None else \
            f" grid_gap={r.grid_gap_bps:.3e} bound={r.grid_bound_bps:.3e}"
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} instance={r.instance} sqp={r.sqp_bps:.9e} dual={r.dual_bps:.9e} "
              f"rel={r.rel_sqp_dual:.2e} kkt={r.kkt_residual:.2e}{grid}")
        failed += not r.passed
    print(f"{len(records) - failed}/{len(records)} instances certified")
    return EXIT_UNCERTIFIED if failed else EXIT_OK


def _solve(args):
    cfg = _config(args)
    params = cfg.radio_params(args.beta)
    w_hz = (args.bandwidth_mhz or cfg.bandwidth_mhz) * 1e6
    problem = capacity_problem(LinkBudget(cfg.scenario(args.seed), w_hz, params))
    try:
        rep = solve_sqp(problem, cfg.solver_config())
    except MaxIterationsError as exc:
        rep = exc.result
    if args.trace:
        write_trace_csv(rep, args.trace)
    np.set_printoptions(precision=6, suppress=False)
    print(f"capacity_bps={rep.objective_bps:.15g} iterations={rep.iterations} "
          f"kkt={rep.kkt.residuals.max:.3e} certified={rep.certified}")
    print("alpha=" + "[" + ", ".join(f"{a:.6g}" for a in rep.alpha) + "]")
    return EXIT_OK if rep.certified else EXIT_UNCERTIFIED


def _scenario(args):
    cfg = _config(args)
    write_scenario(cfg.scenario(args.seed), args.out)
    print(f"wrote scenario seed={args.seed} to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="railalloc",
                                description="Bandwidth allocation for mm-wave train-ground networks")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True, seeds=True):
        sp.add_argument("--config", help="INI-style configuration file (defaults if omitted)")
        if out:
            sp.add_argument("--out", required=True, help="output path")
        if seeds:
            sp.add_argument("--seeds", type=int, help="use seeds 0..N-1 instead of the config list")

    sp = sub.add_parser("sweep-bandwidth", help="capacity versus total bandwidth")
    common(sp)
    sp.set_defaults(func=_sweep(ex.run_bandwidth_sweep))

    sp = sub.add_parser("sweep-beta", help="capacity versus self-interference level")
    common(sp)
    sp.set_defaults(func=_sweep(ex.run_beta_sweep))

    sp = sub.add_parser("compare-solvers", help="SQP versus interior point on fresh scenarios")
    common(sp, seeds=False)
    sp.set_defaults(func=_sweep(ex.run_solver_comparison))

    sp = sub.add_parser("certify", help="cross-check SQP against the exact oracles")
    sp.add_argument("--devices", type=int, default=3)
    sp.add_argument("--instances", type=int, default=50)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--step", type=float, default=1e-3)
    sp.set_defaults(func=_certify)

    sp = sub.add_parser("solve", help="solve one scenario with SQP")
    common(sp, out=False, seeds=False)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--bandwidth-mhz", type=float)
    sp.add_argument("--trace", help="write the per-iteration trace CSV here")
    sp.set_defaults(func=_solve)

    sp = sub.add_parser("scenario", help="write a generated scenario file")
    common(sp, seeds=False)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=_scenario)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
