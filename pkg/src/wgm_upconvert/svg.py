"""Minimal static SVG plots: x-y curves and triangle field maps."""

import math
from xml.sax.saxutils import escape

import numpy as np

_W, _H = 640, 420
_M = dict(left=70, right=20, top=30, bottom=50)
_COLORS = ("#1f5fa8", "#c0392b", "#2e8b57", "#8e44ad", "#d68910")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def _fmt(v):
    return f"{v:.4g}"


class _Frame:
    def __init__(self, xlim, ylim, logy=False):
        self.x0, self.x1 = xlim
        self.logy = logy
        y0, y1 = ylim
        if logy:
            y0, y1 = math.log10(y0), math.log10(y1)
        self.y0, self.y1 = y0, y1
        self.pw = _W - _M["left"] - _M["right"]
        self.ph = _H - _M["top"] - _M["bottom"]

    def px(self, x):
        return _M["left"] + (x - self.x0) / (self.x1 - self.x0 or 1) * self.pw

    def py(self, y):
        if self.logy:
            y = math.log10(max(y, 10**self.y0))
        return _M["top"] + self.ph - (y - self.y0) / (self.y1 - self.y0 or 1) * self.ph


def _axes(frame, xlabel, ylabel, title):
    out = [
        f'<rect x="{_M["left"]}" y="{_M["top"]}" width="{frame.pw}" height="{frame.ph}" '
        'fill="none" stroke="#333"/>'
    ]
    for t in _ticks(frame.x0, frame.x1):
        x = frame.px(t)
        out.append(f'<line x1="{x:.2f}" y1="{_M["top"] + frame.ph}" x2="{x:.2f}" y2="{_M["top"] + frame.ph + 5}" stroke="#333"/>')
        out.append(f'<text x="{x:.2f}" y="{_M["top"] + frame.ph + 18}" font-size="11" text-anchor="middle">{_fmt(t)}</text>')
    if frame.logy:
        yt = [10.0**k for k in range(math.ceil(frame.y0), math.floor(frame.y1) + 1)]
    else:
        yt = _ticks(frame.y0, frame.y1)
    for t in yt:
        y = frame.py(t)
        out.append(f'<line x1="{_M["left"] - 5}" y1="{y:.2f}" x2="{_M["left"]}" y2="{y:.2f}" stroke="#333"/>')
        out.append(f'<text x="{_M["left"] - 8}" y="{y + 4:.2f}" font-size="11" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{_M["left"] + frame.pw / 2}" y="{_H - 10}" font-size="13" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{_M["top"] + frame.ph / 2}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 16 {_M["top"] + frame.ph / 2})">{escape(ylabel)}</text>'
    )
    if title:
        out.append(f'<text x="{_W / 2}" y="18" font-size="14" text-anchor="middle">{escape(title)}</text>')
    return out


def _doc(body):
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">\n'
        '<rect width="100%" height="100%" fill="white"/>\n' + "\n".join(body) + "\n</svg>\n"
    )


def line_plot(series, xlabel="", ylabel="", title="", logy=False, path=None):
    """Plot ``series``: list of ``(label, x, y, style)`` with style ``"line"`` or ``"marker"``."""
    xs = np.concatenate([np.asarray(s[1], float) for s in series])
    ys = np.concatenate([np.asarray(s[2], float) for s in series])
    ok = np.isfinite(xs) & np.isfinite(ys) & ((ys > 0) if logy else True)
    xs, ys = xs[ok], ys[ok]
    xpad = 0.05 * (np.ptp(xs) or 1.0)
    if logy:
        ylim = (10 ** math.floor(math.log10(ys.min())), 10 ** math.ceil(math.log10(ys.max())))
    else:
        ypad = 0.08 * (np.ptp(ys) or abs(ys.max()) or 1.0)
        ylim = (ys.min() - ypad, ys.max() + ypad)
    fr = _Frame((xs.min() - xpad, xs.max() + xpad), ylim, logy)
    body = _axes(fr, xlabel, ylabel, title)
    for k, s in enumerate(series):
        label, x, y = s[:3]
        style = s[3] if len(s) > 3 else "line"
        color = _COLORS[k % len(_COLORS)]
        pts = [(fr.px(a), fr.py(b)) for a, b in zip(x, y) if np.isfinite(a) and np.isfinite(b)]
        if style == "marker":
            body += [f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3.5" fill="{color}"/>' for a, b in pts]
        else:
            d = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
            body.append(f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="1.8"/>')
        body.append(
            f'<text x="{_W - _M["right"] - 8}" y="{_M["top"] + 16 + 15 * k}" font-size="12" '
            f'text-anchor="end" fill="{color}">{escape(label)}</text>'
        )
    text = _doc(body)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _colormap(t):
    """Perceptually ordered blue-to-yellow ramp for t in [0, 1]."""
    stops = np.array([[0.05, 0.03, 0.3], [0.2, 0.4, 0.75], [0.2, 0.7, 0.6], [0.95, 0.9, 0.2]])
    t = np.clip(t, 0, 1) * (len(stops) - 1)
    i = np.minimum(t.astype(int), len(stops) - 2)
    f = (t - i)[..., None]
    rgb = stops[i] * (1 - f) + stops[i + 1] * f
    return ["#%02x%02x%02x" % tuple(int(255 * c) for c in row) for row in rgb]


def field_map(nodes, triangles, values, title="", log_scale=True, decades=5, path=None, outline=None):
    """Filled triangle map of per-node ``values`` (magnitudes) over the (r, z) plane in mm."""
    v = np.abs(np.asarray(values, float))
    cell = v[triangles].mean(axis=1)
    vmax = cell.max() or 1.0
    if log_scale:
        t = (np.log10(np.maximum(cell / vmax, 10.0**-decades)) + decades) / decades
    else:
        t = cell / vmax
    r, z = nodes[:, 0] * 1e3, nodes[:, 1] * 1e3
    fr = _Frame((r.min(), r.max()), (z.min(), z.max()))
    body = []
    for tri, color in zip(triangles, _colormap(t)):
        d = " ".join(f"{fr.px(r[i]):.2f},{fr.py(z[i]):.2f}" for i in tri)
        body.append(f'<polygon points="{d}" fill="{color}" stroke="{color}" stroke-width="0.3"/>')
    if outline is not None:
        d = " ".join(f"{fr.px(a * 1e3):.2f},{fr.py(b * 1e3):.2f}" for a, b in outline)
        body.append(f'<polygon points="{d}" fill="none" stroke="white" stroke-width="1"/>')
    body += _axes(fr, "r (mm)", "z (mm)", title + (f" (log, {decades} decades)" if log_scale else ""))
    text = _doc(body)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
