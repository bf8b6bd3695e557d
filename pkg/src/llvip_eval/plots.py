"""Self-contained SVG line charts, one 800x500 panel per metric."""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape, quoteattr

from .errors import EmptySeries

PANEL_W, PANEL_H = 800, 500
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 30, 50, 60
# first two match the usual blue/orange pairing for two compared runs
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


@dataclass
class Line:
    name: str
    xs: list[float]
    ys: list[float]


@dataclass
class Panel:
    title: str
    xlabel: str
    ylabel: str
    lines: list[Line]


def _num(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _label(v: float) -> str:
    return f"{v:.4g}"


def nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9)
    ticks = []
    k = start
    while k * step <= hi + step * 1e-9:
        ticks.append(round(k * step, 12))
        k += 1
    return ticks


def _extent(values, pad_degenerate=1.0):
    lo, hi = min(values), max(values)
    if lo == hi:
        d = abs(lo) * 0.1 or pad_degenerate
        return lo - d, hi + d
    return lo, hi


def render_panel(panel: Panel, y_offset: int = 0) -> str:
    if not panel.lines or not any(line.xs for line in panel.lines):
        raise EmptySeries(f"panel {panel.title!r} has no data")
    xs = [x for line in panel.lines for x in line.xs]
    ys = [y for line in panel.lines for y in line.ys]
    x0, x1 = _extent(xs)
    y0, y1 = _extent(ys, pad_degenerate=0.5)
    pw = PANEL_W - MARGIN_L - MARGIN_R
    ph = PANEL_H - MARGIN_T - MARGIN_B

    def sx(x):
        return MARGIN_L + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MARGIN_T + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg x="0" y="{y_offset}" width="{PANEL_W}" height="{PANEL_H}" '
           f'viewBox="0 0 {PANEL_W} {PANEL_H}" class="panel" data-metric={quoteattr(panel.title)}>',
           f'<rect x="0" y="0" width="{PANEL_W}" height="{PANEL_H}" fill="white"/>',
           f'<text x="{PANEL_W // 2}" y="28" text-anchor="middle" font-size="18">{escape(panel.title)}</text>']
    base_y = MARGIN_T + ph
    out.append(f'<line x1="{MARGIN_L}" y1="{base_y}" x2="{MARGIN_L + pw}" y2="{base_y}" stroke="black"/>')
    out.append(f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{base_y}" stroke="black"/>')
    for t in nice_ticks(x0, x1):
        x = _num(sx(t))
        out.append(f'<line x1="{x}" y1="{base_y}" x2="{x}" y2="{base_y + 5}" stroke="black"/>')
        out.append(f'<text x="{x}" y="{base_y + 20}" text-anchor="middle" font-size="12">{_label(t)}</text>')
    for t in nice_ticks(y0, y1):
        y = _num(sy(t))
        out.append(f'<line x1="{MARGIN_L - 5}" y1="{y}" x2="{MARGIN_L + pw}" y2="{y}" stroke="#dddddd"/>')
        out.append(f'<text x="{MARGIN_L - 8}" y="{y}" text-anchor="end" dominant-baseline="middle" '
                   f'font-size="12">{_label(t)}</text>')
    out.append(f'<text x="{MARGIN_L + pw // 2}" y="{PANEL_H - 15}" text-anchor="middle" '
               f'font-size="14" class="xlabel">{escape(panel.xlabel)}</text>')
    out.append(f'<text x="18" y="{MARGIN_T + ph // 2}" text-anchor="middle" font-size="14" class="ylabel" '
               f'transform="rotate(-90 18 {MARGIN_T + ph // 2})">{escape(panel.ylabel)}</text>')
    for k, line in enumerate(panel.lines):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{_num(sx(x))},{_num(sy(y))}" for x, y in zip(line.xs, line.ys))
        out.append(f'<g class="series" data-run={quoteattr(line.name)}>')
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        if len(line.xs) == 1:
            out.append(f'<circle cx="{_num(sx(line.xs[0]))}" cy="{_num(sy(line.ys[0]))}" r="3" fill="{color}"/>')
        out.append("</g>")
        ly = MARGIN_T + 10 + 18 * k
        lx = MARGIN_L + pw - 160
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly}" dominant-baseline="middle" font-size="12" class="legend">'
                   f'{escape(line.name)}</text>')
    out.append("</svg>")
    return "\n".join(out)


def render_svg(panels: list[Panel]) -> str:
    """Stack panels vertically in one SVG document."""
    if not panels:
        raise EmptySeries("nothing to plot")
    height = PANEL_H * len(panels)
    body = [render_panel(p, PANEL_H * k) for k, p in enumerate(panels)]
    return ("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W}" height="{height}" '
            f'viewBox="0 0 {PANEL_W} {height}">\n' + "\n".join(body) + "\n</svg>\n")


def series_panels(series) -> list[Panel]:
    """One panel per metric name (first-seen order) with one line per run."""
    metrics = []
    for s in series:
        for m in s.metrics():
            if m not in metrics:
                metrics.append(m)
    panels = []
    for m in metrics:
        lines = []
        for s in series:
            xs, ys = s.metric(m)
            if xs:
                lines.append(Line(s.run_name, xs, ys))
        panels.append(Panel(m, "epoch", m, lines))
    return panels


def pr_panels(result) -> list[Panel]:
    """Precision/recall panels, one per class, one line per IoU threshold."""
    from .report import threshold_key

    panels = []
    for c, per_t in result.pr_curves.items():
        lines = [Line(f"IoU {threshold_key(t)}", cv.recall, cv.precision) for t, cv in per_t.items() if len(cv)]
        if not lines:
            lines = [Line("no detections", [0.0], [0.0])]
        panels.append(Panel(f"PR curve: {c}", "recall", "precision", lines))
    return panels
