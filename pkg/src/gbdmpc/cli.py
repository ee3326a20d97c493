"""Command-line entry point.

    gbdmpc run --config cfg.yaml --out outdir [--seed N] [--solver S]
               [--episodes N] [--steps N] [--save-store P] [--load-store P]

Without --config the packaged default configuration is used.
"""

import argparse
import sys
from importlib import resources

from .bench import SOLVERS, run_benchmark


def default_config_path():
    return resources.files("gbdmpc").joinpath("configs/default.yaml")


def build_parser():
    parser = argparse.ArgumentParser(prog="gbdmpc")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the benchmark suite")
    run.add_argument("--config", default=None, help="suite YAML (default: packaged)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--solver", choices=SOLVERS, default=None,
                     help="run a single solver instead of the suite list")
    run.add_argument("--episodes", type=int, default=None)
    run.add_argument("--steps", type=int, default=None)
    run.add_argument("--save-store", default=None, help="write the warm cut store here")
    run.add_argument("--load-store", default=None, help="seed the warm solver from this store")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "run":
        config = args.config
        if config is None:
            with resources.as_file(default_config_path()) as p:
                return run_benchmark(p, args.out, seed=args.seed, solver=args.solver,
                                     episodes=args.episodes, steps=args.steps,
                                     save_store=args.save_store,
                                     load_store=args.load_store)
        return run_benchmark(config, args.out, seed=args.seed, solver=args.solver,
                             episodes=args.episodes, steps=args.steps,
                             save_store=args.save_store, load_store=args.load_store)
    return 2


if __name__ == "__main__":
    sys.exit(main())
