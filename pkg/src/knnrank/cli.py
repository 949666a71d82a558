"""``knnrank`` command line.

Exit codes: 0 success, 2 configuration or validation error, 3 data error,
4 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path

from . import __version__
from .binio import FormatError, atomic_write_text
from .config import ConfigError, load_config
from .evaluation import EvaluationError
from .forward_index import EmptyCorpusError
from .knn.napp import ParameterError
from .pipeline import TrainingError
from .runner import COMMANDS, DataError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="knnrank", description="k-NN retrieval for QA answer ranking")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        c = sub.add_parser(name)
        c.add_argument("-c", "--config", help="YAML run configuration")
        c.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config key (repeatable)")
        c.add_argument("-v", "--verbose", action="store_true")
    g = sub.add_parser("generate", help="write a seeded synthetic QA corpus")
    g.add_argument("--pairs", type=int, default=5000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def _generate(args) -> str:
    from .synthetic import qa_corpus
    from .text import write_corpus
    if args.pairs < 10:
        raise ConfigError("--pairs: must be >= 10")
    pairs = qa_corpus(args.pairs, seed=args.seed)
    atomic_write_text(Path(args.out), write_corpus(pairs))
    return f"generate: pairs={len(pairs)} seed={args.seed} -> {args.out}"


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "generate":
            print(_generate(args))
        else:
            cfg = load_config(args.config, args.overrides)
            print(COMMANDS[args.command](cfg))
        return EXIT_OK
    except (ConfigError, ParameterError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError, EvaluationError, TrainingError, EmptyCorpusError,
            UnicodeDecodeError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        if args.verbose:
            traceback.print_exc()
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
