"""Command line: ``run`` experiment suites, ``verify`` a cover certificate, ``list-bodies``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .bodies import BodyFileError, builtin_zoo, load_bodies
from .covering import CoverError, cover_body_for, read_certificate, verify_cover
from .geometry import DegenerateBodyError, GeometryError, UnsupportedVolumeError, exact_volume
from .suites import SUITES, ConfigError, ExperimentConfig, run_suite

EXIT_OK, EXIT_CONFIG, EXIT_ASSERT, EXIT_DEGENERATE = 0, 2, 3, 4

log = logging.getLogger("convexcover")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not (np.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError("must be positive and finite")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="convexcover", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run experiment suites and write CSV reports")
    run.add_argument("--bodies", type=Path, help="JSON-lines body file (default: built-in zoo)")
    run.add_argument("--suite", choices=SUITES + ("all",), default="all")
    run.add_argument("--seed", type=_seed, required=True)
    run.add_argument("--out", type=Path, required=True)
    run.add_argument("--n", type=_positive_int, default=20_000, help="Monte Carlo sample count")
    run.add_argument("--grid-h", type=_positive_float, help="density grid spacing")
    run.add_argument("--k-max", type=_positive_int, default=3)
    run.add_argument("--lambda", dest="lam", type=_positive_float, default=0.9,
                     help="homothety ratio for covers")
    run.add_argument("--delta", type=_positive_float, help="cover verification mesh pitch")
    run.add_argument("--budget", type=_positive_int, default=8000,
                     help="overlap evaluations for the symmetry search")

    ver = sub.add_parser("verify", help="re-check a cover certificate")
    ver.add_argument("certificate", type=Path)
    ver.add_argument("--bodies", type=Path, required=True)

    ls = sub.add_parser("list-bodies", help="list bodies with dimension and volume")
    ls.add_argument("--bodies", type=Path)
    ls.add_argument("--seed", type=_seed, help="seed for the random zoo bodies")
    return p


def cmd_run(args) -> int:
    cfg = ExperimentConfig(suite=args.suite, seed=args.seed, out=args.out,
                           bodies_path=args.bodies, n=args.n, grid_h=args.grid_h,
                           k_max=args.k_max, lam=args.lam, delta=args.delta,
                           symmetry_budget=args.budget)
    failures = run_suite(cfg)
    if failures:
        for f in failures:
            print(f"FAIL {f}", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def cmd_verify(args) -> int:
    if not args.certificate.is_file():
        raise ConfigError(f"certificate not found: {args.certificate}")
    cert = read_certificate(args.certificate)
    bodies = {nb.name: nb.body for nb in load_bodies(args.bodies)}
    if cert.name not in bodies:
        raise ConfigError(f"body {cert.name!r} not in {args.bodies}")
    K = bodies[cert.name]
    if K.dim != cert.dim:
        raise ConfigError("certificate dimension does not match the body")
    rep = verify_cover(K, cert.centers, cover_body_for(K, cert), cert.lam, cert.delta)
    status = "VERIFIED" if rep.covered else "NOT COVERED"
    print(f"{status} {cert.name}: count={cert.count} max_gauge={rep.max_gauge:.17g} "
          f"threshold={rep.threshold:.17g} mesh={rep.n_mesh}")
    if not rep.covered:
        w = rep.uncovered[0]
        print("witness " + " ".join(f"{x:.17g}" for x in w))
        return EXIT_ASSERT
    return EXIT_OK


def cmd_list(args) -> int:
    if args.bodies is not None:
        bodies = load_bodies(args.bodies)
    else:
        if args.seed is None:
            raise ConfigError("--seed is required for the built-in zoo")
        bodies = builtin_zoo(args.seed)
    for nb in bodies:
        try:
            vol = f"{exact_volume(nb.body):.17g}"
        except UnsupportedVolumeError:
            vol = "mc-only"
        print(f"{nb.name}\t{nb.spec.get('type', '?')}\td={nb.body.dim}\tvolume={vol}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "verify": cmd_verify, "list-bodies": cmd_list}[args.command]
    try:
        return handler(args)
    except (ConfigError, BodyFileError, CoverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateBodyError as exc:
        print(f"degenerate: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (GeometryError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
