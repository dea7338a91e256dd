"""Command-line entry: run experiments, presets, and the measurement lab.

Exit code 0 on success; on failure a one-line JSON error object goes to
stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .env import ConfigError
from .harness import (
    PRESET_NAMES,
    diagnostic_q,
    lemma1_spec,
    load_spec,
    preset,
    run_experiment,
)

DEFAULT_MU = 0.5


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lhb",
        description="Long-horizon sparse contextual bandit experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment spec file")
    p_run.add_argument("spec", type=Path)
    p_run.add_argument("--out", type=Path, default=Path("out"))
    p_run.add_argument("--workers", type=int, default=None)

    p_preset = sub.add_parser("preset", help="run a documented preset")
    p_preset.add_argument("name", choices=PRESET_NAMES)
    p_preset.add_argument("--out", type=Path, default=None)
    p_preset.add_argument("--workers", type=int, default=None)
    p_preset.add_argument("--spec-only", action="store_true",
                          help="print the spec JSON instead of running")

    p_rip = sub.add_parser("riplab", help="measurement-operator studies")
    p_rip.add_argument("study", choices=["fig2", "ripconst", "lemma1"])
    p_rip.add_argument("--out", type=Path, default=None)
    p_rip.add_argument("--workers", type=int, default=None)

    p_q = sub.add_parser("q-diagnostic",
                         help="prefix-mass diagnostic of a weight vector")
    p_q.add_argument("weights", type=Path,
                     help="JSON file: a list or an object with a 'w' entry")
    p_q.add_argument("--mu", type=float, default=DEFAULT_MU)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            spec = load_spec(args.spec)
            run_experiment(spec, args.out, workers=args.workers)
            print(f"wrote {args.out}")
        elif args.command == "preset":
            spec = preset(args.name)
            if args.spec_only:
                print(json.dumps(spec.to_dict(), sort_keys=True, indent=2))
                return 0
            out = args.out or Path("out") / args.name
            run_experiment(spec, out, workers=args.workers)
            print(f"wrote {out}")
        elif args.command == "riplab":
            spec = (lemma1_spec() if args.study == "lemma1"
                    else preset(args.study))
            out = args.out or Path("out") / args.study
            run_experiment(spec, out, workers=args.workers)
            print(f"wrote {out}")
        elif args.command == "q-diagnostic":
            data = json.loads(args.weights.read_text(encoding="utf-8"))
            w = data["w"] if isinstance(data, dict) else data
            q = diagnostic_q(w, args.mu)
            h = len(w)
            alpha = 0.0 if h <= 1 or q <= 1 else math.log(q) / math.log(h)
            print(json.dumps({"q": q, "alpha": alpha, "mu": args.mu,
                              "h": h}))
        return 0
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ConfigError):
            payload["field"] = exc.field
        print(json.dumps(payload), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
