"""Comparison tables (aligned text and CSV) and the published-results reference renderer."""

from __future__ import annotations

import csv
import io
import json
from importlib import resources
from typing import Sequence

DAGGER = "†"
DASH = "—"
REFERENCE_FILE = "reference_values.json"


def fmt(value: float | None, decimals: int = 4) -> str:
    """Format like ``.480``: fixed decimals, no leading zero."""
    if value is None:
        return "-"
    text = f"{value:.{decimals}f}"
    if text.startswith("0."):
        return text[1:]
    if text.startswith("-0."):
        return "-" + text[2:]
    return text


def align(rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for row in rows:
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def comparison_table(variants, labels, aggregates, significant, baseline, decimals=4) -> str:
    """Rows are variants, columns are measures.

    ``significant[variant][measure]`` marks a cell with a dagger; the last
    column shows the dash for the baseline and the count of significant cells otherwise.
    """
    rows = [["Variant", *labels.values(), f"Sig. vs {baseline}"]]
    for name in variants:
        cells = [name]
        hits = 0
        for measure in labels:
            mark = ""
            if name != baseline and significant.get(name, {}).get(measure):
                mark = DAGGER
                hits += 1
            cells.append(fmt(aggregates[name][measure], decimals) + mark)
        cells.append(DASH if name == baseline else f"{hits}/{len(labels)}")
        rows.append(cells)
    return align(rows)


def comparison_csv(variants, labels, aggregates, p_values, significant, baseline) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["variant"]
    for measure in labels:
        header += [measure, f"{measure}_p_holm_sig", f"{measure}_p"]
    writer.writerow(header)
    for name in variants:
        row = [name]
        for measure in labels:
            row.append(repr(aggregates[name][measure]))
            if name == baseline:
                row += [DASH, ""]
            else:
                row += [str(bool(significant[name][measure])).lower(), repr(p_values[name][measure])]
        writer.writerow(row)
    return buf.getvalue()


def rows_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


# published results -------------------------------------------------------------

def load_reference_values() -> dict:
    text = resources.files("qrw.data").joinpath(REFERENCE_FILE).read_text(encoding="utf-8")
    return json.loads(text)


def render_reference_table(table: str, datasets: Sequence[str] | None = None, values: dict | None = None) -> str:
    """Render a stored results table in the published 3-decimal style.

    Only for documentation and side-by-side reading; these numbers are never
    used as test expectations for this toolkit's own runs.
    """
    values = values or load_reference_values()
    spec = values[table]
    datasets = list(datasets or spec["datasets"])
    header = ["Model", "Name"]
    for ds in datasets:
        header += [f"{ds} {col}" for col in spec["datasets"][ds]]
    rows = [header]
    for row in spec["rows"]:
        cells = [row.get("model") or "", row["name"]]
        for ds in datasets:
            for cell in row[ds]:
                if cell is None:
                    cells.append("-")
                else:
                    value, sig = cell
                    cells.append(fmt(value, 3) + (DAGGER if sig else ""))
        rows.append(cells)
    return align(rows)
