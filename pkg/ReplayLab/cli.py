"""
Command-line entry point: ``replaylab <subcommand>``.

Exit codes: 0 success, 2 config or usage error, 3 protocol or runtime error
(a failed verification check included).
"""

import argparse
import json
import sys
from typing import List, Optional

from .ReplayLab import RUNS_DIR, ReplayLab
from .handler.config import METHOD_IDS
from .utility import BUG_TAG, InvalidArgumentError, ReplayLabError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROTOCOL = 3


def _run_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workers", type=int, default=1, help="Parallel episode workers (results do not depend on it)")
    common.add_argument("--log", action="store_true", help="Write replaylab.log in the run directory")
    return common


def _config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="Run config JSON file")
    parser.add_argument("--run-id", default=None, help="Run directory name (default: derived from the config hash)")
    parser.add_argument("--runs-dir", default=RUNS_DIR, help="Parent directory of run directories")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="replaylab", description="Replay suppression experiments on graph diffusion.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _run_options()

    gen = sub.add_parser("gen-graph", help="Generate a diffusion graph file")
    gen.add_argument("--nodes", type=int, default=50)
    gen.add_argument("--branching", type=float, default=0.24)
    gen.add_argument("--sens-frac", type=float, default=0.20)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    for name, help_text in (("train", "Train and freeze one method on one graph"),
                            ("rsd-eval", "Run the RSD episodes of a stored checkpoint")):
        cmd = sub.add_parser(name, parents=[common], help=help_text)
        _config_options(cmd)
        cmd.add_argument("--method", required=True, choices=METHOD_IDS)
        cmd.add_argument("--graph-seed", type=int, required=True)

    run = sub.add_parser("run", parents=[common], help="Train and evaluate every configured method")
    _config_options(run)

    sweep = sub.add_parser("sweep", parents=[common], help="RAPO over the (w_H, eta) grid")
    _config_options(sweep)

    report = sub.add_parser("report", parents=[common], help="Rebuild the CSV reports from stored records")
    report.add_argument("--run-dir", required=True)

    verify = sub.add_parser("verify", help="Run the verification suite")
    verify.add_argument("--trials", type=int, default=10_000)
    verify.add_argument("--episodes", type=int, default=100)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--json", action="store_true", help="Also print the reports as JSON")
    return parser


def _lab(args) -> ReplayLab:
    return ReplayLab.from_config_file(args.config, run_id=args.run_id, runs_dir=args.runs_dir,
                                      workers=args.workers, enable_log=args.log)


def dispatch(args) -> int:
    if args.command == "gen-graph":
        ReplayLab.generate_graph(args.nodes, args.branching, args.sens_frac, args.seed, args.out)
    elif args.command == "train":
        _lab(args).train(args.method, args.graph_seed)
    elif args.command == "rsd-eval":
        _lab(args).rsd_eval(args.method, args.graph_seed)
    elif args.command == "run":
        _lab(args).run()
    elif args.command == "sweep":
        _lab(args).sweep()
    elif args.command == "report":
        ReplayLab.open(args.run_dir, workers=args.workers, enable_log=args.log).report()
    elif args.command == "verify":
        reports = ReplayLab.verify(args.trials, args.episodes, args.seed)
        if args.json:
            print(json.dumps([r.to_json() for r in reports], indent=4))
        if not all(r.passed for r in reports):
            return EXIT_PROTOCOL
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args)
    except InvalidArgumentError as e:
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as e:
        print(f"{BUG_TAG} {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ReplayLabError as e:
        print(str(e), file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
