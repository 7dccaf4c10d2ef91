"""Minimal SVG writers: line charts and front overlays, no plotting dependency."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class Panel:
    """One axes box inside a figure; maps data coordinates to pixels."""

    def __init__(self, x, y, w, h, xlim, ylim, title="", xlabel="", ylabel="", logx=False, logy=False):
        self.box = (x, y, w, h)
        self.logx, self.logy = logx, logy
        self.xlim = tuple(self._tx(v) for v in xlim)
        self.ylim = tuple(self._ty(v) for v in ylim)
        if self.xlim[1] == self.xlim[0]:
            self.xlim = (self.xlim[0] - 1, self.xlim[1] + 1)
        if self.ylim[1] == self.ylim[0]:
            self.ylim = (self.ylim[0] - 1, self.ylim[1] + 1)
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.items = []

    def _tx(self, v):
        return math.log10(v) if self.logx else v

    def _ty(self, v):
        return math.log10(v) if self.logy else v

    def px(self, xv, yv):
        x, y, w, h = self.box
        u = (self._tx(xv) - self.xlim[0]) / (self.xlim[1] - self.xlim[0])
        v = (self._ty(yv) - self.ylim[0]) / (self.ylim[1] - self.ylim[0])
        return x + u * w, y + (1 - v) * h

    def line(self, xs, ys, color=PALETTE[0], width=1.5, dash=None, label=None):
        pts = [self.px(a, b) for a, b in zip(xs, ys) if _finite(a, b, self.logx, self.logy)]
        if len(pts) < 2:
            return
        d = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<polyline fill="none" stroke="{color}" stroke-width="{width}"{extra} points="{d}"/>')
        if label:
            self.items.append(("legend", label, color))

    def band(self, xs, lo, hi, color=PALETTE[0], opacity=0.2):
        top = [self.px(a, b) for a, b in zip(xs, hi)]
        bot = [self.px(a, b) for a, b in zip(xs, lo)][::-1]
        d = " ".join(f"{a:.2f},{b:.2f}" for a, b in top + bot)
        self.items.append(f'<polygon fill="{color}" fill-opacity="{opacity}" stroke="none" points="{d}"/>')

    def circle(self, cx, cy, r_data, color="#555"):
        x0, y0 = self.px(cx, cy)
        x1, _ = self.px(cx + r_data, cy)
        self.items.append(f'<circle cx="{x0:.2f}" cy="{y0:.2f}" r="{abs(x1 - x0):.2f}" '
                          f'fill="none" stroke="{color}" stroke-dasharray="4,3"/>')

    def points(self, xs, ys, color=PALETTE[1], r=2.5):
        for a, b in zip(xs, ys):
            if _finite(a, b, self.logx, self.logy):
                x, y = self.px(a, b)
                self.items.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{color}"/>')

    def render(self):
        x, y, w, h = self.box
        out = [f'<rect x="{x}" y="{y}" width="{w}" height="{h}" fill="white" stroke="#333"/>']
        out.append(f'<text x="{x + w / 2}" y="{y - 8}" text-anchor="middle" font-size="13">{escape(self.title)}</text>')
        out.append(f'<text x="{x + w / 2}" y="{y + h + 32}" text-anchor="middle" font-size="11">{escape(self.xlabel)}</text>')
        out.append(f'<text x="{x - 42}" y="{y + h / 2}" text-anchor="middle" font-size="11" '
                   f'transform="rotate(-90 {x - 42} {y + h / 2})">{escape(self.ylabel)}</text>')
        for i, (lo, hi, axis) in enumerate(((self.xlim[0], self.xlim[1], "x"), (self.ylim[0], self.ylim[1], "y"))):
            for j in range(5):
                v = lo + (hi - lo) * j / 4
                label = 10**v if (self.logx if axis == "x" else self.logy) else v
                if axis == "x":
                    px = x + w * j / 4
                    out.append(f'<text x="{px:.1f}" y="{y + h + 15}" text-anchor="middle" font-size="9">{label:.3g}</text>')
                else:
                    py = y + h - h * j / 4
                    out.append(f'<text x="{x - 4}" y="{py + 3:.1f}" text-anchor="end" font-size="9">{label:.3g}</text>')
        legend = [it for it in self.items if isinstance(it, tuple)]
        out.append(f'<g clip-path="none">')
        out.extend(it for it in self.items if isinstance(it, str))
        out.append("</g>")
        for k, (_, label, color) in enumerate(legend):
            ly = y + 14 + 14 * k
            out.append(f'<line x1="{x + 8}" y1="{ly}" x2="{x + 24}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{x + 28}" y="{ly + 4}" font-size="10">{escape(label)}</text>')
        return "\n".join(out)


def _finite(a, b, logx, logy):
    if not (math.isfinite(a) and math.isfinite(b)):
        return False
    return (a > 0 or not logx) and (b > 0 or not logy)


def figure(panels, width, height):
    body = "\n".join(p.render() for p in panels)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif">\n'
            f'<rect width="100%" height="100%" fill="#fafafa"/>\n{body}\n</svg>\n')


def _limits(*arrays, pad=0.05):
    vals = [float(v) for arr in arrays for v in arr if math.isfinite(float(v))]
    if not vals:
        return (0.0, 1.0)
    lo, hi = min(vals), max(vals)
    span = hi - lo or max(abs(hi), 1.0)
    return lo - pad * span, hi + pad * span


def dashboard_svg(fits, residual_rows, title="trapping fit"):
    """Front intercept vs fitted planes over time, and residual against eta (log-log)."""
    left = Panel(70, 40, 420, 300, (0, 1), (0, 1), title, "t", "x_n")
    if fits:
        f0 = fits[0]
        ts = list(f0.times)
        bands = []
        for i, fit in enumerate(fits):
            w = fit.eta ** (1 + fit.beta)
            bands += [fit.b_tilde - w, fit.b_tilde + w]
        left = Panel(70, 40, 420, 300, _limits(ts), _limits(f0.b, *bands), title, "t", "x_n")
        left.line(ts, f0.b, color="#000", width=2, label="front b(t) = s(0,t)")
        for i, fit in enumerate(fits):
            w = fit.eta ** (1 + fit.beta)
            col = PALETTE[i % len(PALETTE)]
            left.band(fit.times, fit.b_tilde - w, fit.b_tilde + w, color=col, opacity=0.15)
            left.line(fit.times, fit.b_tilde, color=col, dash="5,3", label=f"b~ (eta={fit.eta:g})")
    etas = [r["eta"] for r in residual_rows if r.get("residual") is not None]
    res = [max(r["residual"], 1e-12) for r in residual_rows if r.get("residual") is not None]
    if etas:
        lo, hi = min(etas), max(etas)
        rlo, rhi = min(res + [1.0]), max(res + [1.0])
        right = Panel(570, 40, 300, 300, (lo / 1.3, hi * 1.3), (rlo / 2, rhi * 2), "residual vs eta",
                      "eta", "residual / eta^(1+beta)", logx=True, logy=True)
        right.line([lo / 1.3, hi * 1.3], [1.0, 1.0], color="#888", dash="3,3", label="bound 1")
        right.line(etas, res, color=PALETTE[1], label="measured")
        right.points(etas, res)
        return figure([left, right], 920, 390)
    return figure([left], 540, 390)


def overlay_svg(front, level, center, radius, eps=None, nu=None, offset=0.0, fit=None, fit_level=None):
    """One time slice: the front curve (n = 2), the flatness ball and strip, fitted planes."""
    xp = front.coords()[..., 0]
    s = front.heights[level]
    c = list(center)
    pane = Panel(60, 40, 400, 400, (c[0] - radius * 1.1, c[0] + radius * 1.1),
                 (c[1] - radius * 1.1, c[1] + radius * 1.1),
                 f"t = {front.times[level]:.4g}", "x1", "x2")
    pane.circle(c[0], c[1], radius)
    if eps is not None and nu is not None:
        # strip {|<x - c, nu> - offset| <= eps * radius}, drawn along its direction
        tx, ty = nu[1], -nu[0]
        ts = [-radius, radius]
        for sgn in (-1, 1):
            d = offset + sgn * eps * radius
            pane.line([c[0] + d * nu[0] + t * tx for t in ts], [c[1] + d * nu[1] + t * ty for t in ts],
                      color="#999", dash="2,2")
    if fit is not None and fit_level is not None:
        w = fit.eta ** (1 + fit.beta)
        bt = fit.b_tilde[fit_level]
        xs = [c[0] - radius, c[0] + radius]
        pane.band(xs, [bt - w] * 2, [bt + w] * 2, color=PALETTE[2], opacity=0.25)
    pane.line(xp, s, color=PALETTE[0], width=2, label="front")
    return figure([pane], 500, 500)
