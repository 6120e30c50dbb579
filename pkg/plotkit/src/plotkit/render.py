"""Figure rendering from isacdt experiment outputs.

Consumes only the documented interchange formats:

* ``metrics.csv`` — optional ``#``-prefixed metadata lines, one header row,
  RFC-4180 data rows.
* ``*.pgm`` — binary P5 grayscale occupancy maps (255 = occupied).

Four figure kinds are supported; each validates its input schema and fails
with a :class:`SchemaError` naming every missing column.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

KINDS = ("localization", "maps", "beam", "discovery")

_REQUIRED = {
    "localization": ("K", "rmse_single", "rmse_avg", "rmse_weighted"),
    "beam": ("N", "seed", "frame", "se_feedback", "se_sensing",
             "true_best_se"),
    "discovery": ("round", "frac_gossip", "frac_dt_gossip"),
}


class SchemaError(Exception):
    """Input file does not match the schema the figure kind expects."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple[str, ...]
    output: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"expected one of {', '.join(KINDS)}")
        if not self.inputs:
            raise ValueError("at least one input path is required")


def _parse_cell(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def read_metrics_csv(path: str | Path) -> dict[str, list]:
    """Read a metrics CSV into column lists, skipping ``#`` metadata lines."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh
                                      if not line.startswith("#")) if r]
    if not rows:
        raise SchemaError(f"{path}: empty metrics file")
    header = rows[0]
    table: dict[str, list] = {name: [] for name in header}
    for row in rows[1:]:
        if len(row) != len(header):
            raise SchemaError(f"{path}: row has {len(row)} cells, "
                              f"header has {len(header)}")
        for name, cell in zip(header, row):
            table[name].append(_parse_cell(cell))
    return table


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary (P5) PGM file into a 2D uint8/uint16 array."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise SchemaError(f"{path}: not a binary P5 PGM file")
    # header = magic, width, height, maxval as whitespace-separated tokens,
    # with optional '#' comment lines
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    try:
        pixels = np.frombuffer(data[pos:], dtype=dtype, count=width * height)
    except ValueError as exc:
        raise SchemaError(f"{path}: truncated pixel data") from exc
    return pixels.reshape(height, width)


def _require_columns(table: dict[str, list], kind: str, path: str) -> None:
    missing = [c for c in _REQUIRED[kind] if c not in table]
    if missing:
        raise SchemaError(f"{path}: missing column(s) for kind "
                          f"'{kind}': {', '.join(missing)}")


def _group_mean(keys: list, values: list) -> tuple[list, list]:
    """Mean of values per distinct key, keys returned sorted."""
    acc: dict = {}
    for k, v in zip(keys, values):
        acc.setdefault(k, []).append(v)
    ks = sorted(acc)
    return ks, [sum(acc[k]) / len(acc[k]) for k in ks]


def _render_localization(paths: tuple[str, ...], ax) -> None:
    table = read_metrics_csv(paths[0])
    _require_columns(table, "localization", paths[0])
    for col in ("rmse_single", "rmse_avg", "rmse_weighted"):
        ks, means = _group_mean(table["K"], table[col])
        ax.plot(ks, means, marker="o", label=col)
    ax.set_xlabel("K (cooperating base stations)")
    ax.set_ylabel("position RMSE [m]")
    ax.set_xscale("log", base=2)
    ax.set_xticks(sorted(set(table["K"])))
    ax.get_xaxis().set_major_formatter(plt.ScalarFormatter())
    ax.grid(True, alpha=0.3)
    ax.legend()


def _render_beam(paths: tuple[str, ...], fig) -> None:
    table = read_metrics_csv(paths[0])
    _require_columns(table, "beam", paths[0])
    n_values = sorted(set(table["N"]))
    axes = fig.subplots(1, len(n_values), sharey=True, squeeze=False)[0]
    for ax, n in zip(axes, n_values):
        idx = [i for i, v in enumerate(table["N"]) if v == n]
        frames = [table["frame"][i] for i in idx]
        for col in ("se_feedback", "se_sensing", "true_best_se"):
            fs, means = _group_mean(frames, [table[col][i] for i in idx])
            ax.plot(fs, means, label=col)
        ax.set_title(f"N = {n}")
        ax.set_xlabel("frame")
        ax.grid(True, alpha=0.3)
    axes[0].set_ylabel("spectral efficiency [bit/s/Hz]")
    axes[-1].legend()


def _render_discovery(paths: tuple[str, ...], ax) -> None:
    table = read_metrics_csv(paths[0])
    _require_columns(table, "discovery", paths[0])
    for col in ("frac_gossip", "frac_dt_gossip"):
        rounds, means = _group_mean(table["round"], table[col])
        ax.plot(rounds, means, marker=".", label=col)
    ax.set_xlabel("round")
    ax.set_ylabel("discovered neighbor fraction")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend()


def _render_maps(paths: tuple[str, ...], fig) -> None:
    axes = fig.subplots(1, len(paths), squeeze=False)[0]
    for ax, path in zip(axes, paths):
        img = read_pgm(path)
        # occupied cells are bright in the PGM; draw them dark on white
        ax.imshow(img, cmap="gray_r", origin="upper", interpolation="nearest")
        ax.set_title(Path(path).stem)
        ax.set_xlabel("cell x")
        ax.set_ylabel("cell y")


def render(spec: FigureSpec) -> str:
    """Render the figure described by spec and return the output path."""
    for path in spec.inputs:
        if not Path(path).is_file():
            raise FileNotFoundError(f"input not found: {path}")
    if spec.kind == "maps":
        fig = plt.figure(figsize=(5.0 * len(spec.inputs), 4.0))
        _render_maps(spec.inputs, fig)
    elif spec.kind == "beam":
        fig = plt.figure(figsize=(12.0, 4.0))
        _render_beam(spec.inputs, fig)
    else:
        fig = plt.figure(figsize=(6.0, 4.5))
        ax = fig.subplots()
        if spec.kind == "localization":
            _render_localization(spec.inputs, ax)
        else:
            _render_discovery(spec.inputs, ax)
    fig.tight_layout()
    try:
        fig.savefig(spec.output, dpi=120, metadata={"Software": "plotkit"})
    finally:
        plt.close(fig)
    return spec.output
