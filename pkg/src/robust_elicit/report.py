"""Metrics CSV (de)serialization, per-strategy summaries and static SVG charts."""
import csv
import io
import math
import re
from collections import defaultdict
from xml.sax.saxutils import escape

import numpy as np

from .experiments import FIELD_NAMES, MetricRow

_INT_FIELDS = {"repetition"}
_FLOAT_FIELDS = {"r", "r_val", "snr_or_mu", "value"}


def _fmt(name, value):
    if name in _FLOAT_FIELDS:
        return format(float(value), ".17g")
    return str(value)


def metrics_csv_text(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FIELD_NAMES)
    for row in sorted(rows):
        writer.writerow([_fmt(name, getattr(row, name)) for name in FIELD_NAMES])
    return buf.getvalue()


def write_metrics_csv(rows, path):
    text = metrics_csv_text(rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
    return path


def read_metrics_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != FIELD_NAMES:
            raise ValueError(f"{path}: header must be {','.join(FIELD_NAMES)}")
        rows = []
        for line in reader:
            if not line:
                continue
            vals = {}
            for name, text in zip(FIELD_NAMES, line):
                if name in _INT_FIELDS:
                    vals[name] = int(text)
                elif name in _FLOAT_FIELDS:
                    vals[name] = float(text)
                else:
                    vals[name] = text
            rows.append(MetricRow(**vals))
    return rows


# ----------------------------------------------------------------------------
# derived fields used for grouping and chart axes

_HOLDOUT = re.compile(r"holdout-n(\d+)$")


def field_value(row, name):
    if name == "n":
        m = _HOLDOUT.match(row.cv_scheme)
        return float(m.group(1)) if m else math.nan
    if name == "family":
        s = row.strategy.split(">")[-1]
        return s.split(":")[0].replace("_trimmed", "")
    if name == "prefix":
        return row.strategy.split(">")[0] if ">" in row.strategy else ""
    return getattr(row, name)


SUMMARY_KEYS = ("scenario_id", "task", "contam_scheme", "estimator", "strategy", "cv_scheme", "r", "r_val",
                "snr_or_mu", "metric_name")


def summarize(rows):
    """Mean and count of ``value`` per key (all MetricRow keys but repetition)."""
    groups = defaultdict(list)
    for row in rows:
        groups[tuple(getattr(row, k) for k in SUMMARY_KEYS)].append(row.value)
    out = []
    for key in sorted(groups):
        vals = np.asarray(groups[key], dtype=float)
        out.append(dict(zip(SUMMARY_KEYS, key), mean=float(np.mean(vals)), count=int(vals.size)))
    return out


def write_summary_csv(summary, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_KEYS + ("mean", "count"))
        for rec in summary:
            writer.writerow([_fmt(k, rec[k]) for k in SUMMARY_KEYS] + [format(rec["mean"], ".17g"), rec["count"]])


# ----------------------------------------------------------------------------
# SVG

_PALETTE = ("#000000", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
            "#7f7f7f", "#17becf")
_PANEL_W, _PANEL_H = 360, 240
_MARGIN = dict(left=60, right=20, top=36, bottom=44)


def _num(v):
    return format(v, ".4g")


def _series(rows, x, y, series):
    acc = defaultdict(lambda: defaultdict(list))
    for row in rows:
        xv = field_value(row, x)
        yv = field_value(row, y)
        if isinstance(xv, float) and math.isnan(xv):
            continue
        acc[str(field_value(row, series))][float(xv)].append(float(yv))
    return {name: sorted((xv, float(np.mean(ys))) for xv, ys in pts.items()) for name, pts in acc.items()}


def render_chart(rows, x="r", y="value", facets=(), series="strategy", title=None, log_x=False):
    """Faceted line chart as an SVG string: one panel per facet combination,
    one polyline per ``series`` value, y averaged over repetitions."""
    rows = list(rows)
    if not rows:
        raise ValueError("cannot chart an empty row set")
    panels = defaultdict(list)
    for row in rows:
        panels[tuple(str(field_value(row, f)) for f in facets)].append(row)
    keys = sorted(panels)
    data = {k: _series(panels[k], x, y, series) for k in keys}
    names = sorted({s for d in data.values() for s in d})
    colour = {s: _PALETTE[i % len(_PALETTE)] for i, s in enumerate(names)}

    ncol = min(3, len(keys))
    nrow = math.ceil(len(keys) / ncol)
    legend_h = 18 * len(names) + 10
    width = ncol * _PANEL_W
    height = nrow * _PANEL_H + legend_h + (24 if title else 0)
    top0 = 24 if title else 0
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{width / 2}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>')

    def tx(v):
        return math.log10(v) if log_x and v > 0 else v

    for pi, key in enumerate(keys):
        ox = (pi % ncol) * _PANEL_W
        oy = top0 + (pi // ncol) * _PANEL_H
        pts = [pt for s in data[key].values() for pt in s]
        xs = [tx(p[0]) for p in pts]
        ys = [p[1] for p in pts if math.isfinite(p[1])]
        x0, x1 = min(xs), max(xs)
        y0, y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        left, right = ox + _MARGIN["left"], ox + _PANEL_W - _MARGIN["right"]
        top, bottom = oy + _MARGIN["top"], oy + _PANEL_H - _MARGIN["bottom"]

        def sx(v):
            return left + (tx(v) - x0) / (x1 - x0) * (right - left)

        def sy(v):
            return bottom - (v - y0) / (y1 - y0) * (bottom - top)

        label = ", ".join(f"{f}={k}" for f, k in zip(facets, key)) if facets else ""
        out.append(f'<text x="{(left + right) / 2}" y="{oy + 20}" text-anchor="middle">{escape(label)}</text>')
        out.append(f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" '
                   f'fill="none" stroke="#888"/>')
        for frac in (0.0, 0.5, 1.0):
            yv = y0 + frac * (y1 - y0)
            out.append(f'<text x="{left - 4}" y="{sy(yv) + 4:.1f}" text-anchor="end">{_num(yv)}</text>')
        for xv in sorted({p[0] for p in pts}):
            out.append(f'<text x="{sx(xv):.1f}" y="{bottom + 14}" text-anchor="middle">{_num(xv)}</text>')
        out.append(f'<text x="{(left + right) / 2}" y="{bottom + 32}" text-anchor="middle">{escape(x)}</text>')
        out.append(f'<text x="{ox + 14}" y="{(top + bottom) / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 {ox + 14} {(top + bottom) / 2})">{escape(y)}</text>')
        for name in names:
            line = [(sx(a), sy(b)) for a, b in data[key].get(name, []) if math.isfinite(b)]
            if not line:
                continue
            coords = " ".join(f"{a:.1f},{b:.1f}" for a, b in line)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{colour[name]}" stroke-width="1.5"/>')
            for a, b in line:
                out.append(f'<circle cx="{a:.1f}" cy="{b:.1f}" r="2.5" fill="{colour[name]}"/>')

    ly = top0 + nrow * _PANEL_H + 8
    for i, name in enumerate(names):
        yy = ly + 18 * i
        out.append(f'<line x1="12" y1="{yy + 6}" x2="36" y2="{yy + 6}" stroke="{colour[name]}" stroke-width="2"/>')
        out.append(f'<text x="42" y="{yy + 10}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_chart(rows, path, **kwargs):
    svg = render_chart(rows, **kwargs)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return path


def chart_plan(rows):
    """Default charts for a metrics file: one per (scenario, metric)."""
    plan = []
    by_metric = defaultdict(list)
    for row in rows:
        by_metric[(row.scenario_id, row.metric_name)].append(row)
    for (scenario, metric), group in sorted(by_metric.items()):
        if metric == "avg_test_loss" or metric == "flip_rate":
            spec = dict(x="n", facets=("snr_or_mu", "strategy") if scenario.startswith("e0") else ("strategy",),
                        series="estimator", log_x=True)
        elif metric == "hard_ranking_error":
            spec = dict(x="r", facets=("cv_scheme", "prefix", "family"), series="strategy")
        else:
            spec = dict(x="r", facets=("r_val",), series="strategy")
        plan.append((f"{scenario}_{metric}", group, spec))
    return plan
