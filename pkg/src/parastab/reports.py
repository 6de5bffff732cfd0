"""CSV tables, run manifests and Riccati matrix export."""

import csv
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .fem import to_triplets


def fmt(value):
    """``%.17g`` for numbers, ``inf``/``nan`` spelled out, anything else via ``str``."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


@dataclass
class Table:
    columns: list
    rows: list


@dataclass
class Plot:
    series: list            # (label, t, values)
    log_y: bool = True
    title: str = ""
    ylabel: str = ""


@dataclass
class Report:
    """Everything an experiment produces, written by :func:`write_report`."""
    kind: str
    tables: dict = field(default_factory=dict)
    plots: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)   # unexpected simulation errors

    def add_table(self, name, columns, rows):
        self.tables[name] = Table(list(columns), [list(r) for r in rows])

    def add_plot(self, name, series, log_y=True, title="", ylabel=""):
        self.plots[name] = Plot(series, log_y, title, ylabel)


def trajectory_rows(traj, cost=None, coeffs=None, extra_cols=()):
    """Rows ``t, normH2, weighted_normH2, cost, c_1..c_M, extra...`` per time node."""
    n = len(traj.t)
    cost = np.full(n, np.nan) if cost is None else cost
    coeffs = np.zeros((0, n)) if coeffs is None else np.asarray(coeffs)
    rows = []
    for j in range(n):
        row = [traj.t[j], traj.normH2[j], traj.weighted_normH2[j], cost[j]]
        row.extend(coeffs[:, j])
        row.extend(col[j] for col in extra_cols)
        rows.append(row)
    return rows


def manifest_lines(kind, config):
    lines = [("experiment", kind),
             ("config_sha256", config.sha256() if config is not None else "none"),
             ("parastab_version", __version__),
             ("python_version", platform.python_version()),
             ("numpy_version", np.__version__),
             ("scipy_version", scipy.__version__)]
    return [f"{k}={v}" for k, v in lines]


def write_report(report, out_dir, config=None, svg=True):
    """Write tables, plots, ``summary.csv`` and ``manifest.txt`` into ``out_dir``."""
    from .svg import emit_svg

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, table in sorted(report.tables.items()):
        written.append(write_csv(out / f"{name}.csv", table.columns, table.rows))
    if report.summary:
        written.append(write_csv(out / "summary.csv", ["key", "value"],
                                 sorted(report.summary.items())))
    if svg:
        for name, plot in sorted(report.plots.items()):
            written.append(emit_svg(plot.series, out / f"{name}.svg", log_y=plot.log_y,
                                    title=plot.title, ylabel=plot.ylabel))
    lines = manifest_lines(report.kind, config)
    lines += [f"file={Path(p).name}" for p in written]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")
    return written


def export_triplets(path, A):
    """Write the nonzeros of ``A`` as 1-based ``row col value`` lines."""
    Path(path).write_text(to_triplets(A))
    return path
