"""Command-line entry point: ``pausefeat <verb> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .corpus import ChatParseError
from .pipeline import ConfigError, DataError, Pipeline, load_config
from .seqmodel.search import SpecificityGateError

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

VERBS = {
    "synth": "write the synthetic corpus described by the config",
    "extract": "parse the corpus and build the C1/C2/C3/Utt subsets",
    "guide": "cross-validate subsequence models and pick the aggregate distances",
    "features": "build the transcript feature table",
    "classify": "cross-validate transcript classifiers on every feature set",
    "report": "render figures and collect the report tables",
    "run-all": "run every stage in order",
}


def parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.replace(" ", "").split(",") if s]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--seeds expects comma-separated integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("--seeds is empty")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config file, or a bundled profile name (default, desk)")
    common.add_argument("--seeds", type=parse_seeds, help="comma-separated seed list, e.g. 0,1,2,3")
    common.add_argument("--out", default="pausefeat-out", help="output directory (default: %(default)s)")
    common.add_argument("--group-by-source", dest="group", action="store_true", default=None,
                        help="keep all rows of one transcript/participant in the same fold (default)")
    common.add_argument("--no-group", dest="group", action="store_false", help="plain stratified folds")
    common.add_argument("--all-distances", action="store_true", default=None,
                        help="build aggregates for distances 1-3 regardless of the guide")
    common.add_argument("--skip-boundaries", action="store_true", default=None,
                        help="drop utterance boundary tokens before measuring distances")
    common.add_argument("--global-norm", action="store_true", default=None,
                        help="normalise subsequence features with statistics from all rows")
    common.add_argument("--split-sides", action="store_true", default=None,
                        help="separate aggregates for tokens before and after a pause")
    common.add_argument("--workers", type=int, help="parallel worker processes (0 = all cores)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="pausefeat", description="Pause-context features for transcript classification.")
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")
    for verb, help_text in VERBS.items():
        sub.add_parser(verb, parents=[common], help=help_text, description=help_text)
    return parser


def overrides_from(args: argparse.Namespace) -> dict:
    o: dict = {}
    if args.seeds is not None:
        o["seeds"] = args.seeds
    if args.workers is not None:
        o["workers"] = args.workers
    if args.group is not None:
        o.setdefault("subsequence", {})["group_by_source"] = args.group
        o.setdefault("transcript", {})["group_by_participant"] = args.group
    if args.global_norm:
        o.setdefault("subsequence", {})["global_norm"] = True
    if args.all_distances:
        o.setdefault("features", {})["all_distances"] = True
    if args.split_sides:
        o.setdefault("features", {})["split_sides"] = True
    if args.skip_boundaries:
        o.setdefault("subsets", {})["skip_boundaries"] = True
    return o


def _print_file(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def run(args: argparse.Namespace) -> int:
    config = load_config(args.config, overrides_from(args))
    pipe = Pipeline(config, args.out)
    verb = args.verb
    if verb == "synth":
        if not config.synthetic:
            raise ConfigError("synth needs corpus.source = 'synthetic'")
        files = pipe.synth()
        n = sum(1 for rel in files if rel.endswith(".cha"))
        print(f"wrote {n} transcripts to {pipe.out / 'synth'}")
    elif verb == "extract":
        _print_file(pipe.extract()["table1.csv"])
    elif verb == "guide":
        g = pipe.guidance()
        print(f"winner: {g['winner']}")
        print("distances: " + ",".join(str(d) for d in g["distances"]))
        for w in g["warnings"]:
            print(f"warning: {w}")
    elif verb == "features":
        pipe.features()
        counts = pipe.feature_table().column_counts()
        print(" ".join(f"{k}={v}" for k, v in counts.items()))
    elif verb == "classify":
        _print_file(pipe.classify()["table2.csv"])
    elif verb == "report":
        print(f"report written to {pipe.report()}")
    elif verb == "run-all":
        target = pipe.run_all()
        _print_file(pipe.classify()["table2.csv"])
        print(f"report written to {target}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ChatParseError, SpecificityGateError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
