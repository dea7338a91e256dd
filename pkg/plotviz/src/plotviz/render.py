"""Render experiment CSV outputs into the standard figure layouts.

Reads the harness schemas bit-for-bit: regret aggregates (t,mean,stderr),
phase transitions (s,m,success_prob), weight prefixes (k,prefix_l2), and
restricted-isometry sweeps (m,delta_estimate). Rendering is read-only and
deterministic: the same inputs produce the same PNG bytes.
"""

from __future__ import annotations

import glob as globlib
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["PlotSpec", "PlotSpecError", "render", "build_figure"]

FIGURE_KINDS = ("regret", "phase_transition", "prefix_mass", "rip_constant")

# Okabe-Ito colorblind-safe cycle
PALETTE = ["#0072B2", "#D55E00", "#009E73", "#CC79A7",
           "#56B4E9", "#E69F00", "#000000", "#F0E442"]

SCHEMAS = {
    "regret": ["t", "mean", "stderr"],
    "phase_transition": ["s", "m", "success_prob"],
    "prefix_mass": ["k", "prefix_l2"],
    "rip_constant": ["m", "delta_estimate"],
}

AXIS_LABELS = {
    "regret": ("round t", "cumulative regret"),
    "phase_transition": ("measurements m", "success probability"),
    "prefix_mass": ("prefix length k", "prefix l2 mass"),
    "rip_constant": ("rows m", "estimated isometry defect"),
}


class PlotSpecError(ValueError):
    pass


@dataclass
class PlotSpec:
    input_glob: str
    figure_kind: str
    output_path: str
    labels: dict = field(default_factory=dict)
    title: str | None = None

    def __post_init__(self):
        if self.figure_kind not in FIGURE_KINDS:
            raise PlotSpecError(
                f"figure_kind must be one of {FIGURE_KINDS}, "
                f"got {self.figure_kind!r}"
            )

    @classmethod
    def from_dict(cls, data: dict) -> "PlotSpec":
        data = dict(data)
        known = {"input_glob", "figure_kind", "output_path", "labels",
                 "title"}
        unknown = set(data) - known
        if unknown:
            raise PlotSpecError(f"unknown field {sorted(unknown)[0]!r}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise PlotSpecError(str(exc)) from exc


def _read_table(path: Path, kind: str) -> dict[str, np.ndarray]:
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    if not lines:
        raise PlotSpecError(f"{path}: empty file")
    header = lines[0].split(",")
    expected = SCHEMAS[kind]
    for col in expected:
        if col not in header:
            raise PlotSpecError(f"{path}: missing column {col!r}")
    for col in header:
        if col not in expected:
            raise PlotSpecError(f"{path}: unexpected column {col!r}")
    raw = np.array([line.split(",") for line in lines[1:]], dtype=float)
    if raw.ndim != 2 or raw.shape[1] != len(header):
        raise PlotSpecError(f"{path}: ragged rows")
    return {col: raw[:, i] for i, col in enumerate(header)}


def _label_for(spec: PlotSpec, path: Path) -> str:
    stem = path.stem
    for suffix in ("_agg",):
        if stem.endswith(suffix):
            stem = stem[: -len(suffix)]
    return spec.labels.get(stem, spec.labels.get(path.stem, stem))


def build_figure(spec: PlotSpec):
    """Assemble the matplotlib figure for a spec; returns (figure, info).

    ``info`` reports the number of line and band artists, which the tests
    use to assert figure structure without decoding pixels.
    """
    paths = sorted(Path(p) for p in globlib.glob(spec.input_glob))
    if not paths:
        raise PlotSpecError(f"no files match {spec.input_glob!r}")
    missing = [p for p in paths if not p.is_file()]
    if missing:
        raise PlotSpecError(f"not a file: {missing[0]}")

    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=150)
    lines = bands = 0
    color_idx = 0

    def next_color():
        nonlocal color_idx
        color = PALETTE[color_idx % len(PALETTE)]
        color_idx += 1
        return color

    if spec.figure_kind == "regret":
        for path in paths:
            table = _read_table(path, "regret")
            color = next_color()
            ax.plot(table["t"], table["mean"], color=color,
                    label=_label_for(spec, path))
            ax.fill_between(table["t"], table["mean"] - table["stderr"],
                            table["mean"] + table["stderr"], color=color,
                            alpha=0.25, linewidth=0)
            lines += 1
            bands += 1
    elif spec.figure_kind == "phase_transition":
        for path in paths:
            table = _read_table(path, "phase_transition")
            prefix = _label_for(spec, path) if len(paths) > 1 else ""
            for s in np.unique(table["s"]):
                mask = table["s"] == s
                order = np.argsort(table["m"][mask])
                label = f"s={int(s)}" if not prefix \
                    else f"{prefix} s={int(s)}"
                ax.plot(table["m"][mask][order],
                        table["success_prob"][mask][order],
                        marker="o", color=next_color(), label=label)
                lines += 1
        ax.set_ylim(-0.02, 1.02)
    elif spec.figure_kind == "prefix_mass":
        for path in paths:
            table = _read_table(path, "prefix_mass")
            ax.plot(table["k"], table["prefix_l2"], color=next_color(),
                    label=_label_for(spec, path))
            lines += 1
    else:  # rip_constant
        for path in paths:
            table = _read_table(path, "rip_constant")
            order = np.argsort(table["m"])
            ax.plot(table["m"][order], table["delta_estimate"][order],
                    marker="s", color=next_color(),
                    label=_label_for(spec, path))
            lines += 1

    xlabel, ylabel = AXIS_LABELS[spec.figure_kind]
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(frameon=False, fontsize=9)
    ax.grid(alpha=0.25, linewidth=0.5)
    fig.tight_layout()
    return fig, {"lines": lines, "bands": bands, "files": len(paths)}


def render(spec: PlotSpec) -> Path:
    """Render a spec to its output path; returns the written path."""
    fig, _ = build_figure(spec)
    out = Path(spec.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        fig.savefig(out, format="png", metadata={"Software": "plotviz"})
    finally:
        plt.close(fig)
    return out
