"""Command line front end.

    sweepkit <command> --config run.json [--out DIR] [--seed N] [--verbose]

Commands run in pipeline order: gen-data, poison, train, sweep, defend, eval,
report. Exit status is 0 on success, 1 for invalid arguments or
configuration, 2 for missing or malformed files.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from ._kernels import BACKEND
from .errors import ConfigError, FormatError, InvalidArgument
from .pipeline import RunConfig, RunDir, model_dataset_label, sweep_text
from .tables import fmt_rate

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2

COMMANDS = ("gen-data", "poison", "train", "sweep", "defend", "eval", "report")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; that code is reserved for IO errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run config JSON")
    common.add_argument("--out", default="out", help="artifact directory (default: out)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")

    p = _Parser(prog="sweepkit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"sweepkit {__version__} ({BACKEND} kernels)")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    helps = {
        "gen-data": "build train/test/clean datasets",
        "poison": "poison the training set with the selected attack",
        "train": "train the infected model on the poisoned set",
        "sweep": "search fine-tuning and inference policies",
        "defend": "fine-tune with P_f and bind P_i",
        "eval": "measure ACC/ASR before and after the defense",
        "report": "render report.json as text tables",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def _run(args) -> None:
    cfg = RunConfig.load(args.config, args.seed)
    run = RunDir(cfg, args.out)
    cmd = args.command
    if cmd == "gen-data":
        sets = run.gen_data()
        for name, ds in sets.items():
            print(f"{name}: {len(ds)} images {ds.dims}, {ds.num_classes} classes")
    elif cmd == "poison":
        path = run.poison()
        print(f"wrote {path}")
    elif cmd == "train":
        _, rep = run.train()
        print(f"infected model: ACC {fmt_rate(rep['acc'])}  ASR {fmt_rate(rep['asr'])}")
    elif cmd == "sweep":
        doc = run.sweep()
        print(sweep_text(doc, model_dataset_label(cfg)))
    elif cmd == "defend":
        dm = run.defend()
        print("P_f: " + ", ".join(dm.pf.ids))
        print("P_i: " + ", ".join(dm.pi.ids))
    elif cmd == "eval":
        rep = run.evaluate()
        b, d = rep["baseline"], rep["defended"]
        print(f"baseline: ACC {fmt_rate(b['acc'])}  ASR {fmt_rate(b['asr'])}")
        print(f"defended: ACC {fmt_rate(d['acc'])}  ASR {fmt_rate(d['asr'])}")
    elif cmd == "report":
        print(run.report(), end="")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("sweepkit: error: a command is required", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except (InvalidArgument, ConfigError, ValueError) as exc:
        print(f"sweepkit: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FormatError, OSError) as exc:
        print(f"sweepkit: error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
