"""Small deterministic SVG line plots (polylines with ticked axes)."""

import math
from pathlib import Path

from .errors import InvalidInputError

WIDTH, HEIGHT = 640, 400
MARGIN = (70, 20, 30, 50)  # left, right, top, bottom
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _num(v):
    return format(v, ".6g")


def nice_ticks(lo, hi, n=5):
    """Round tick positions covering ``[lo, hi]``."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise InvalidInputError("axis limits must be finite")
    if hi <= lo:
        pad = abs(lo) * 1e-3 or 1.0
        lo, hi = lo - pad, hi + pad
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step - 1e-9)
    last = math.floor(hi / step + 1e-9)
    return [k * step for k in range(first, last + 1)], lo, hi


def line_plot(path, series, title="", xlabel="", ylabel="", log_y=False):
    """Write ``series`` (label -> (x, y)) as an SVG line chart."""
    if not series:
        raise InvalidInputError("nothing to plot")
    pts = {}
    for label, (xs, ys) in series.items():
        xs, ys = [float(v) for v in xs], [float(v) for v in ys]
        if len(xs) != len(ys) or not xs:
            raise InvalidInputError(f"series {label!r} has mismatched or empty data")
        if log_y:
            if min(ys) <= 0:
                raise InvalidInputError("log axis needs positive values")
            ys = [math.log10(v) for v in ys]
        pts[label] = (xs, ys)
    xlo = min(min(x) for x, _ in pts.values())
    xhi = max(max(x) for x, _ in pts.values())
    ylo = min(min(y) for _, y in pts.values())
    yhi = max(max(y) for _, y in pts.values())
    xt, xlo, xhi = nice_ticks(xlo, xhi)
    yt, ylo, yhi = nice_ticks(ylo, yhi)
    left, right, top, bottom = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom

    def sx(v):
        return left + (v - xlo) / (xhi - xlo) * pw

    def sy(v):
        return top + ph - (v - ylo) / (yhi - ylo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for v in xt:
        x = _num(sx(v))
        out.append(f'<line x1="{x}" y1="{top + ph}" x2="{x}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x}" y="{top + ph + 18}" text-anchor="middle" font-size="11">{_num(v)}</text>')
    for v in yt:
        y = _num(sy(v))
        label = _num(10**v) if log_y else _num(v)
        out.append(f'<line x1="{left - 5}" y1="{y}" x2="{left}" y2="{y}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{y}" text-anchor="end" font-size="11">{label}</text>')
    out.append(
        f'<text x="{left + pw / 2}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">{xlabel}</text>'
    )
    out.append(
        f'<text x="14" y="{top + ph / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {top + ph / 2})">{ylabel}</text>'
    )
    for k, (label, (xs, ys)) in enumerate(pts.items()):
        color = COLORS[k % len(COLORS)]
        coords = " ".join(f"{_num(sx(x))},{_num(sy(y))}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        out.append(
            f'<text x="{left + pw - 5}" y="{top + 15 + 14 * k}" text-anchor="end" '
            f'font-size="11" fill="{color}">{label}</text>'
        )
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path
