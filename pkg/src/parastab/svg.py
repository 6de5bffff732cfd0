"""Static SVG line plots: polylines, axes with ticks and a legend."""

from xml.sax.saxutils import escape

import numpy as np

from .errors import NonPositiveLogValue

WIDTH, HEIGHT = 640, 400
MARGIN = (70, 20, 30, 50)  # left, right, top, bottom
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
          "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _ticks(lo, hi, count=5):
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, count))


def _fmt(v):
    return f"{v:.3g}"


def render_svg(series, log_y=False, title="", xlabel="t", ylabel=""):
    """SVG text for ``series``, a list of ``(label, t, values)``."""
    if not series:
        raise ValueError("nothing to plot")
    prepared = []
    for label, t, y in series:
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        if t.shape != y.shape or t.size == 0:
            raise ValueError(f"series {label!r}: t and values must be nonempty and equal length")
        keep = np.isfinite(y)
        if log_y:
            if np.any(y[keep] <= 0):
                raise NonPositiveLogValue(label)
            y = np.log10(y)
        prepared.append((label, t[keep], y[keep]))
    xs = np.concatenate([p[1] for p in prepared])
    ys = np.concatenate([p[2] for p in prepared])
    x0, x1 = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
    y0, y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    left, right, top, bottom = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle">{escape(title)}</text>')
    out.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    for x in _ticks(x0, x1):
        out.append(f'<line x1="{px(x):.2f}" y1="{top + ph}" x2="{px(x):.2f}" y2="{top + ph + 4}" '
                   'stroke="black"/>')
        out.append(f'<text x="{px(x):.2f}" y="{top + ph + 16}" text-anchor="middle">{_fmt(x)}</text>')
    for y in _ticks(y0, y1):
        label = f"1e{_fmt(y)}" if log_y else _fmt(y)
        out.append(f'<line x1="{left - 4}" y1="{py(y):.2f}" x2="{left}" y2="{py(y):.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{py(y) + 4:.2f}" text-anchor="end">{escape(label)}</text>')
    if xlabel:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle">'
                   f'{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    for idx, (label, t, y) in enumerate(prepared):
        color = COLORS[idx % len(COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(t, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 12 + 14 * idx
        out.append(f'<g class="legend"><line x1="{left + pw - 120}" y1="{ly}" x2="{left + pw - 100}" '
                   f'y2="{ly}" stroke="{color}" stroke-width="2"/>'
                   f'<text x="{left + pw - 95}" y="{ly + 4}">{escape(str(label))}</text></g>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(series, path, log_y=False, **kwargs):
    """Write :func:`render_svg` output to ``path``."""
    text = render_svg(series, log_y=log_y, **kwargs)
    with open(path, "w") as fh:
        fh.write(text)
    return path

