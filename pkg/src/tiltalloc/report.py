"""Summary tables and plot-data files."""

import csv
import io
import os

import numpy as np

TABLE_COLUMNS = ("name", "crashed", "time_to_converge", "max_attitude_deviation",
                 "altitude_variation", "saturation_count")
TABLE_UNITS = ("", "", "s", "deg", "m", "")


def _cell(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return "nan" if not np.isfinite(v) else f"{v:.4f}"
    return str(v)


class SummaryTable:
    """One row per executed scenario, kept in the order given."""

    def __init__(self, summaries):
        self.summaries = list(summaries)

    def rows(self):
        return [[_cell(getattr(s, c)) for c in TABLE_COLUMNS] for s in self.summaries]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        w.writerows(self.rows())
        return buf.getvalue()

    def to_kv(self):
        out = []
        for s, row in zip(self.summaries, self.rows()):
            out.extend(f"{s.name}.{c} = {v}" for c, v in zip(TABLE_COLUMNS[1:], row[1:]))
        return "\n".join(out) + "\n"

    def to_text(self):
        head = [c + (f" [{u}]" if u else "") for c, u in zip(TABLE_COLUMNS, TABLE_UNITS)]
        rows = [head] + self.rows()
        widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
        lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows]
        return "\n".join(lines) + "\n"


def emit_plotdata(trace, channels, out_dir):
    """Write one ``<scenario>_<channel>.dat`` file of (t, value) per channel."""
    valid = [c for c in trace.columns if c != "phase"]
    unknown = [c for c in channels if c not in valid]
    if unknown:
        raise KeyError(f"unknown channel(s) {', '.join(unknown)}; valid: {', '.join(valid)}")
    os.makedirs(out_dir, exist_ok=True)
    t = trace.column("t")
    paths = []
    for ch in channels:
        path = os.path.join(out_dir, f"{trace.name}_{ch}.dat")
        np.savetxt(path, np.column_stack([t, trace.column(ch)]), fmt="%.17g")
        paths.append(path)
    return paths
