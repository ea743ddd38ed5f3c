"""Self-contained SVG relevance plots.

One vertical bar per feature spans [lower, upper], normalised by the L1
norm of the baseline model; a dashed line marks the maxrel threshold.
LUPI reports get a second panel for the privileged block.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

COLORS = {"strong": "#1b7837", "weak": "#762a83", "irrelevant": "#9e9e9e"}
PANEL_W, PANEL_H = 560, 300
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 56, 16, 36, 72


def _f(v: float) -> str:
    return f"{v:.2f}"


def _panel(block: dict, title: str, y0: float) -> list[str]:
    feats = block["features"]
    factor = 1.0
    if not block.get("normalized") and block.get("norm"):
        factor = 1.0 / block["norm"]
    uppers = [(r["upper"] or 0.0) * factor for r in feats]
    thr = block["thresholds"]["upper_maxrel"] * (1.0 if block.get("normalized") else factor)
    top = max(uppers + [thr, 1e-12]) * 1.1
    plot_w = PANEL_W - MARGIN_L - MARGIN_R
    plot_h = PANEL_H - MARGIN_T - MARGIN_B
    x0, base = MARGIN_L, y0 + MARGIN_T + plot_h

    def y(v):
        return base - plot_h * max(0.0, v) / top

    out = [f'<g class="panel">',
           f'<text x="{_f(PANEL_W / 2)}" y="{_f(y0 + 20)}" text-anchor="middle" '
           f'font-size="14">{escape(title)}</text>',
           f'<line x1="{x0}" y1="{_f(y0 + MARGIN_T)}" x2="{x0}" y2="{_f(base)}" stroke="black"/>',
           f'<line x1="{x0}" y1="{_f(base)}" x2="{x0 + plot_w}" y2="{_f(base)}" stroke="black"/>']
    for k in range(5):
        v = top * k / 4
        out.append(f'<text x="{x0 - 4}" y="{_f(y(v) + 4)}" text-anchor="end" font-size="10">'
                   f'{v:.2f}</text>')
    n = max(1, len(feats))
    slot = plot_w / n
    bar_w = max(2.0, slot * 0.5)
    for k, r in enumerate(feats):
        cx = x0 + slot * (k + 0.5)
        lo = (r["lower"] or 0.0) * factor
        hi = (r["upper"] or 0.0) * factor
        color = COLORS.get(r["class"].lower(), "#000000")
        height = max(y(lo) - y(hi), 1.0)
        out.append(f'<rect class="bar" x="{_f(cx - bar_w / 2)}" y="{_f(y(hi))}" width="{_f(bar_w)}" '
                   f'height="{_f(height)}" fill="{color}"><title>{escape(r["name"])}: '
                   f'[{lo:.4g}, {hi:.4g}] {r["class"]}</title></rect>')
        out.append(f'<text x="{_f(cx)}" y="{_f(base + 12)}" font-size="10" text-anchor="end" '
                   f'transform="rotate(-60 {_f(cx)} {_f(base + 12)})">{escape(r["name"])}</text>')
    out.append(f'<line class="threshold" x1="{x0}" y1="{_f(y(thr))}" x2="{x0 + plot_w}" '
               f'y2="{_f(y(thr))}" stroke="#d7301f" stroke-dasharray="6,4"/>')
    out.append("</g>")
    return out


def render_svg(report) -> str:
    """SVG text for a :class:`~ordfri.experiment.Report` (or its JSON dict)."""
    blocks = report["blocks"] if isinstance(report, dict) else report.blocks
    if not blocks or not any(b["features"] for b in blocks.values()):
        raise ValueError("report has no intervals to plot")
    order = [b for b in ("regular", "privileged") if b in blocks]
    titles = {"regular": "Regular features", "privileged": "Privileged features"}
    if len(order) == 1:
        titles["regular"] = "Feature relevance"
    height = PANEL_H * len(order)
    parts = ['<?xml version="1.0" encoding="UTF-8"?>',
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W}" height="{height}" '
             f'viewBox="0 0 {PANEL_W} {height}" font-family="sans-serif">',
             f'<rect width="{PANEL_W}" height="{height}" fill="white"/>']
    for k, name in enumerate(order):
        parts += _panel(blocks[name], titles[name], k * PANEL_H)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plot(report, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.write_text(render_svg(report))
    except OSError as exc:
        raise OSError(f"cannot write plot to {path}: {exc.strerror or exc}") from exc
    return path
