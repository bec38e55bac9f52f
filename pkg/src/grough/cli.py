"""Command line entry point: ``grough <verb> [--config FILE] [overrides]``.

Exit codes: 0 success, 1 usage or config error, 2 numerical failure,
3 acceptance failure.  Errors are also printed to stderr as one JSON record.
"""

from __future__ import annotations

import argparse
import json
import sys

from .io import FormatError
from .harness import VERBS, AcceptanceFailure, ConfigError, ExperimentConfig, run

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 1, 2, 3

# flag -> (config field, type)
_FLAGS = {
    "--sigma-low": ("sigma_low", float),
    "--sigma-high": ("sigma_high", float),
    "--control-levels": ("control_levels", int),
    "--dim": ("dim", int),
    "--T": ("T", float),
    "--n-steps": ("n_steps", int),
    "--alpha": ("alpha", float),
    "--theta": ("theta", float),
    "--seed": ("seed", int),
    "--n-paths": ("n_paths", int),
    "--kind": ("kind", str),
    "--output-dir": ("output_dir", str),
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _param(text: str) -> tuple[str, object]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="grough", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    for verb in VERBS:
        sp = sub.add_parser(verb)
        sp.add_argument("--config", help="JSON config file; flags override its fields")
        for flag, (dest, typ) in _FLAGS.items():
            sp.add_argument(flag, dest=dest, type=typ, default=None)
        sp.add_argument("--param", "-p", action="append", type=_param, default=[],
                        metavar="KEY=VALUE", help="verb parameter; VALUE is parsed as JSON if possible")
        sp.add_argument("--quiet", action="store_true", help="do not print the manifest")
    return p


def _config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    data: dict = {}
    if ns.config:
        data = ExperimentConfig.from_file(ns.config).__dict__.copy()
    data["verb"] = ns.verb
    for dest, _ in _FLAGS.values():
        v = getattr(ns, dest)
        if v is not None:
            data[dest] = v
    params = dict(data.get("params") or {})
    params.update(dict(ns.param))
    data["params"] = params
    return ExperimentConfig.from_mapping(data)


def _fail(code: int, kind: str, message: str, **extra) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code, **extra},
                     sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        cfg = _config_from_args(ns)
        manifest = run(cfg)
    except _UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except ConfigError as exc:
        return _fail(EXIT_USAGE, "config", str(exc), fields=exc.errors)
    except AcceptanceFailure as exc:
        return _fail(EXIT_ACCEPTANCE, "acceptance", str(exc), failed=exc.failed,
                     output_dir=exc.manifest.output_dir)
    except (FormatError, FileNotFoundError) as exc:
        return _fail(EXIT_USAGE, "input", str(exc))
    except (ValueError, ArithmeticError) as exc:
        return _fail(EXIT_NUMERICAL, type(exc).__name__, str(exc))
    if not ns.quiet:
        print(json.dumps(manifest.summary | {"config_hash": manifest.config_hash,
                                             "output_dir": manifest.output_dir},
                         sort_keys=True, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
