"""Command line front end.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .mesh import MeshError
from .observation import WEIGHT_KINDS, ObservationError
from .scenario import (
    ConfigError,
    load_scenario,
    packaged_scenario,
    run_benchmark,
    run_lcurve,
    run_mixcache,
    run_scenario,
)
from .solvers import ALGORITHMS

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 2, 3

log = logging.getLogger("helmloc")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH",
                        help="scenario INI file, or 'builtin:NAME' for a shipped scenario")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides the file)")
    common.add_argument("--level", type=int, metavar="N", help="solve grid level")
    common.add_argument("--alpha", type=float, metavar="X", help="regularization parameter")
    common.add_argument("--weight", choices=WEIGHT_KINDS)
    common.add_argument("--algo", choices=ALGORITHMS)
    common.add_argument("--seed", type=int, metavar="N", help="seed for noise and random sources")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="helmloc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("solve", parents=[common], help="single reconstruction with report")
    sub.add_parser("lcurve", parents=[common], help="L-curve over an alpha schedule")
    b = sub.add_parser("benchmark", parents=[common], help="random-source error statistics")
    b.add_argument("--draws", type=int, metavar="N", help="draws per source count")
    b.add_argument("--workers", type=int, metavar="N", help="parallel worker processes")
    sub.add_parser("mixcache", parents=[common], help="precompute the mixing matrix")
    return p


def _scenario(args):
    path = args.config
    if path.startswith("builtin:"):
        path = packaged_scenario(path.split(":", 1)[1])
    scn = load_scenario(path)
    over = {}
    if args.level is not None:
        over["level"] = args.level
    if args.alpha is not None:
        # an explicit alpha replaces any schedule for the solve verb
        over["alpha"] = args.alpha
        if args.verb == "solve":
            over["alphas"] = None
    if args.weight is not None:
        over["weight"] = args.weight
    if args.algo is not None:
        over["algorithm"] = args.algo
    if args.seed is not None:
        over["noise_seed"] = args.seed
        over["random_seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        over["workers"] = args.workers
    if getattr(args, "draws", None) is not None:
        over["random_draws"] = args.draws
    if args.out is not None:
        over["output_dir"] = args.out
    return replace(scn, **over).validate() if over else scn


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        scn = _scenario(args)
        if args.verb == "solve":
            res = run_scenario(scn)
            s = res.report["solve"]
            print(f"{s['termination']} after {s['iterations']} iterations, gap {s['gap']:.3e}, "
                  f"support {len(s['support_nodes'])} -> {res.out_dir}")
            ok = res.converged
        elif args.verb == "lcurve":
            res = run_lcurve(scn)
            idx = res.morozov_index
            where = f"alpha_{idx} = {res.rows[idx][1]:.4g}" if idx is not None else "none"
            print(f"{len(res.rows)} parameters, discrepancy crossing: {where}")
            ok = res.converged
        elif args.verb == "benchmark":
            res = run_benchmark(scn)
            for row in res.means:
                print(",".join(str(v) for v in row))
            ok = res.failed == 0
        else:
            path = run_mixcache(scn)
            print(f"mixing matrix written to {path}")
            ok = True
    except (ConfigError, MeshError, ObservationError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    return EXIT_OK if ok else EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
