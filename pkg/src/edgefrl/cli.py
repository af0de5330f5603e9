"""Command-line entry point: ``edgefrl run|preset|summarize|validate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experiment.config import ConfigError, load_config
from .experiment.presets import PRESETS, preset
from .experiment.runner import RunError, run
from .experiment.summary import summarize

log = logging.getLogger("edgefrl")


def _fail(kind: str, message: str, **extra) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True) + "\n")
    return 1


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else Path("runs") / cfg.name
    art = run(cfg, out)
    print(json.dumps({"out": str(out), "summary": art.summary["metrics"]}, sort_keys=True))
    return 0


def _cmd_preset(args) -> int:
    cfgs = preset(args.name, args.seed)
    root = Path(args.out) if args.out else Path("runs") / args.name
    results = {}
    for cfg in cfgs:
        out = root / cfg.name if len(cfgs) > 1 else root
        art = run(cfg, out)
        results[cfg.name] = {"out": str(out), "summary": art.summary["metrics"]}
    print(json.dumps(results, sort_keys=True))
    return 0


def _cmd_summarize(args) -> int:
    print(json.dumps(summarize(args.csv, args.n_steps), sort_keys=True))
    return 0


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(json.dumps({"valid": True, "name": cfg.name}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgefrl", description="Edge video-analytics RL simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a YAML config")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default runs/<name>)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("preset", help=f"run a built-in scenario ({', '.join(PRESETS)})")
    p.add_argument("name")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_preset)

    p = sub.add_parser("summarize", help="recompute the summary of a metrics CSV")
    p.add_argument("csv")
    p.add_argument("--n-steps", type=int, default=10, help="decisions per episode")
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail("config", "invalid config", errors=exc.errors)
    except FileNotFoundError as exc:
        return _fail("not_found", str(exc))
    except KeyError as exc:
        return _fail("unknown", exc.args[0] if exc.args else str(exc))
    except RunError as exc:
        return _fail("run", str(exc), tick=exc.tick, agent_id=exc.agent_id)
    except ValueError as exc:
        return _fail("value", str(exc))


if __name__ == "__main__":
    sys.exit(main())
