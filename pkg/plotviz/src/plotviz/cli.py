"""CLI: render one plot spec JSON into its figure file."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .render import PlotSpec, PlotSpecError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lhb-plot",
        description="Render experiment CSV outputs into figures",
    )
    parser.add_argument("spec", type=Path, help="plot spec JSON file")
    args = parser.parse_args(argv)
    try:
        data = json.loads(args.spec.read_text(encoding="utf-8"))
        out = render(PlotSpec.from_dict(data))
        print(f"wrote {out}")
        return 0
    except (PlotSpecError, OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
