"""``longform-bench`` command line.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are validation errors, not I/O errors
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="longform-bench",
        description="Quality screening, IDS/ADS acoustic contrasts and predictive-coding "
        "predictability for long-form recording utterances.",
    )
    parser.add_argument("stage", choices=pipeline.STAGES, help="pipeline stage to run")
    parser.add_argument("--config", help="JSON run configuration (defaults: synthetic demo)")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = pipeline.load_config(args.config, seed=args.seed, out=args.out)
        result = pipeline.COMMANDS[args.stage](cfg)
    except OSError as exc:
        print(f"longform-bench {args.stage}: I/O error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError, KeyError) as exc:
        print(f"longform-bench {args.stage}: {exc}", file=sys.stderr)
        return 1
    if isinstance(result, dict):
        for key, value in result.items():
            print(f"{key}: {value}")
    elif result is not None:
        print(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
