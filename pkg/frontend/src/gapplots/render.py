"""Render campaign CSVs as static line charts: one series per process (or any
other column), mean final gap per x value with +-1 sample-std error bars.

Aggregation is always recomputed from the raw rows; rendering is a pure
function of the CSV bytes (fixed style, fixed DPI, no timestamps embedded).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["MissingColumn", "EmptyGroup", "FigureSpec", "read_rows",
           "aggregate", "render"]

Y_COLUMN = "final_gap"


class MissingColumn(ValueError):
    """A referenced column is not present in the CSV header."""


class EmptyGroup(ValueError):
    """No data rows survive grouping."""


@dataclass(frozen=True)
class FigureSpec:
    csv_paths: tuple
    x: str = "b_over_n"
    series: str = "process"
    title: str = ""
    output_path: str = "figure.png"


def read_rows(paths) -> list:
    rows = []
    for path in paths:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            header = reader.fieldnames or []
            if Y_COLUMN not in header:
                raise MissingColumn(f"{path}: no {Y_COLUMN!r} column")
            rows.extend(reader)
    return rows


def _x_value(row: dict, x: str):
    if x in row:
        return float(row[x])
    if x == "b_over_n":
        # Derived from the b and n columns of the campaign CSV.
        if "b" not in row or "n" not in row:
            raise MissingColumn("b_over_n needs both 'b' and 'n' columns")
        return float(row["b"]) / float(row["n"])
    raise MissingColumn(f"no column {x!r}")


def aggregate(rows, x: str, series: str) -> dict:
    """{series label: [(x, mean, sample_std), ...] sorted by x}.

    Series labels are taken verbatim from the CSV; there is no whitelist.
    """
    groups: dict = {}
    for row in rows:
        if series not in row:
            raise MissingColumn(f"no column {series!r}")
        key = (row[series], _x_value(row, x))
        groups.setdefault(key, []).append(float(row[Y_COLUMN]))
    if not groups:
        raise EmptyGroup("no data rows to aggregate")
    result: dict = {}
    for (label, xv), values in sorted(groups.items()):
        mean = sum(values) / len(values)
        if len(values) > 1:
            var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
            std = math.sqrt(var)
        else:
            std = 0.0
        result.setdefault(label, []).append((xv, mean, std))
    for points in result.values():
        points.sort()
    return result


def render(spec: FigureSpec) -> str:
    """Write one PNG per spec; returns the output path."""
    series_points = aggregate(read_rows(spec.csv_paths), spec.x, spec.series)
    fig, ax = plt.subplots(figsize=(8, 5), dpi=150)
    for label in sorted(series_points):
        points = series_points[label]
        xs = [p[0] for p in points]
        means = [p[1] for p in points]
        stds = [p[2] for p in points]
        ax.errorbar(xs, means, yerr=stds, marker="o", capsize=3, label=label)
    ax.set_xlabel(spec.x)
    ax.set_ylabel(f"mean {Y_COLUMN}")
    if spec.title:
        ax.set_title(spec.title)
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(spec.output_path, format="png",
                metadata={"Software": "gapplots"})
    plt.close(fig)
    return spec.output_path
