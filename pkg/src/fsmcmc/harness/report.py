"""Render sweep CSVs: fixed-width text tables plus figure files.

Figures land next to the delimited output (one per method, value against
dimension, log-log axes when the data allows).  matplotlib is imported
lazily inside the figure path so the library core stays import-light.
"""

from __future__ import annotations

import csv
from pathlib import Path

__all__ = ["render_table", "render_figures"]


def _read(csv_path) -> tuple[list[str], list[list[str]]]:
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader]
    return header, rows


def render_table(csv_path) -> str:
    """Fixed-width text table of the sweep CSV, one line per row."""
    header, rows = _read(csv_path)
    widths = [len(h) for h in header]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def render_figures(csv_path, outdir=None) -> list[Path]:
    """Plot value vs m per method; returns the written PNG paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    csv_path = Path(csv_path)
    outdir = Path(outdir) if outdir is not None else csv_path.parent
    outdir.mkdir(parents=True, exist_ok=True)
    header, rows = _read(csv_path)
    col = {name: i for i, name in enumerate(header)}

    series: dict[str, dict[str, tuple[list[float], list[float]]]] = {}
    for row in rows:
        value = row[col["value"]]
        if value in ("", "degenerate"):
            continue
        method = row[col["method"]]
        a = row[col["a"]]
        key = f"a={a}" if a else ""
        xs, ys = series.setdefault(method, {}).setdefault(key, ([], []))
        xs.append(float(row[col["m"]]))
        ys.append(float(value))

    written = []
    stem = csv_path.stem
    for method, groups in sorted(series.items()):
        if all(len(xs) < 2 for xs, _ in groups.values()):
            continue
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        loglog = all(
            min(xs) > 0 and min(ys) > 0 for xs, ys in groups.values() if xs
        )
        for key, (xs, ys) in sorted(groups.items()):
            order = sorted(range(len(xs)), key=lambda i: xs[i])
            xs = [xs[i] for i in order]
            ys = [ys[i] for i in order]
            ax.plot(xs, ys, marker="o", label=key or None)
        if loglog:
            ax.set_xscale("log", base=2)
            ax.set_yscale("log")
        ax.set_xlabel("m")
        ax.set_ylabel(method)
        ax.set_title(method)
        if any(key for key in groups):
            ax.legend(fontsize=8)
        fig.tight_layout()
        path = outdir / f"{stem}.{method}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
