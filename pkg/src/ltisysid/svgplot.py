"""Minimal deterministic SVG plots: loss curves and eigenvalue traces.

Output depends only on the input numbers, so identical runs produce
byte-identical files.
"""

import math

import numpy as np

__all__ = ["eigen_plane_svg", "loss_curve_svg", "side_by_side_svg"]

W, H = 480, 360
PAD_L, PAD_R, PAD_T, PAD_B = 64, 16, 32, 44


def _f(x):
    return f"{x:.2f}"


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _nice_ticks(lo, hi, count=5):
    if not hi > lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _tick_label(v):
    return f"{v:.4g}"


class _Frame:
    def __init__(self, xlim, ylim, title, xlabel, ylabel, width=W, height=H):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        self.w, self.h = width, height
        self.parts = [
            f'<text x="{_f(width / 2)}" y="20" text-anchor="middle" font-size="14">{_esc(title)}</text>',
            f'<text x="{_f(width / 2)}" y="{height - 8}" text-anchor="middle" font-size="12">{_esc(xlabel)}</text>',
            f'<text x="14" y="{_f(height / 2)}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 14 {_f(height / 2)})">{_esc(ylabel)}</text>',
            f'<rect x="{PAD_L}" y="{PAD_T}" width="{width - PAD_L - PAD_R}" height="{height - PAD_T - PAD_B}" '
            'fill="none" stroke="black"/>',
        ]

    def px(self, x):
        return PAD_L + (x - self.x0) / (self.x1 - self.x0) * (self.w - PAD_L - PAD_R)

    def py(self, y):
        return self.h - PAD_B - (y - self.y0) / (self.y1 - self.y0) * (self.h - PAD_T - PAD_B)

    def axes(self, xticks, yticks, ylabels=None):
        for v in xticks:
            x = self.px(v)
            self.parts.append(
                f'<line x1="{_f(x)}" y1="{self.h - PAD_B}" x2="{_f(x)}" y2="{self.h - PAD_B + 4}" stroke="black"/>'
                f'<text x="{_f(x)}" y="{self.h - PAD_B + 16}" text-anchor="middle" font-size="10">'
                f"{_tick_label(v)}</text>"
            )
        for i, v in enumerate(yticks):
            y = self.py(v)
            label = ylabels[i] if ylabels else _tick_label(v)
            self.parts.append(
                f'<line x1="{PAD_L - 4}" y1="{_f(y)}" x2="{PAD_L}" y2="{_f(y)}" stroke="black"/>'
                f'<text x="{PAD_L - 6}" y="{_f(y + 3)}" text-anchor="end" font-size="10">{_esc(label)}</text>'
            )

    def body(self):
        return "\n".join(self.parts)


def _document(inner, width=W, height=H):
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        '<rect width="100%" height="100%" fill="white"/>\n'
        f"{inner}\n</svg>\n"
    )


def _loss_frame(losses, title):
    losses = np.asarray(losses, dtype=float)
    it = np.arange(len(losses))
    ok = np.isfinite(losses) & (losses > 0)
    logs = np.log10(losses[ok]) if ok.any() else np.array([0.0])
    lo, hi = float(np.floor(logs.min())), float(np.ceil(logs.max()))
    if hi <= lo:
        hi = lo + 1
    fr = _Frame((0, max(len(losses) - 1, 1)), (lo, hi), title, "iteration", "training loss (log10)")
    step = max(1, int(math.ceil((hi - lo) / 6)))
    yt = [lo + k * step for k in range(int((hi - lo) // step) + 1)]
    fr.axes(_nice_ticks(0, max(len(losses) - 1, 1)), yt, [f"1e{int(v)}" for v in yt])
    # subsample long curves to at most ~1000 vertices
    idx = np.flatnonzero(ok)
    if len(idx) > 1000:
        idx = idx[np.unique(np.linspace(0, len(idx) - 1, 1000).astype(int))]
    if len(idx):
        pts = " ".join(f"{_f(fr.px(it[i]))},{_f(fr.py(math.log10(losses[i])))}" for i in idx)
        fr.parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f5fbf" stroke-width="1.5"/>')
    return fr


def loss_curve_svg(losses, title="Training loss"):
    """Semilog plot of a loss curve; non-finite or non-positive points are skipped."""
    return _document(_loss_frame(losses, title).body())


def _eigen_frame(trace, true_eigs, title, max_points=400):
    trace = np.asarray(trace, dtype=complex)
    if trace.ndim == 1:
        trace = trace[:, None]
    true_eigs = np.asarray(true_eigs if true_eigs is not None else [], dtype=complex)
    finite = trace[np.isfinite(trace)]
    pts = np.concatenate([finite, true_eigs, [1 + 0j, -1 + 0j, 1j, -1j]])
    r = float(np.max(np.abs(pts))) * 1.1
    r = min(r, 10.0)
    fr = _Frame((-r, r), (-r, r), title, "Re", "Im", width=H + PAD_L - PAD_B, height=H)
    ticks = _nice_ticks(-r, r, 4)
    fr.axes(ticks, ticks)
    cx, cy = fr.px(0), fr.py(0)
    rad = fr.px(1) - fr.px(0)
    fr.parts.append(
        f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(rad)}" fill="none" stroke="#888" stroke-dasharray="4 3"/>'
    )
    iters = trace.shape[0]
    rows = np.unique(np.linspace(0, iters - 1, min(iters, max_points)).astype(int)) if iters else []
    for i in rows:
        opacity = 0.1 + 0.9 * (i + 1) / iters
        for z in trace[i]:
            if not np.isfinite(z) or abs(z) > r:
                continue
            fr.parts.append(
                f'<circle cx="{_f(fr.px(z.real))}" cy="{_f(fr.py(z.imag))}" r="2.5" fill="#1a9641" '
                f'fill-opacity="{opacity:.3f}"/>'
            )
    for z in true_eigs:
        fr.parts.append(_star(fr.px(z.real), fr.py(z.imag)))
    return fr


def _star(x, y, outer=7.0, inner=3.0):
    pts = []
    for k in range(10):
        ang = -math.pi / 2 + k * math.pi / 5
        rr = outer if k % 2 == 0 else inner
        pts.append(f"{_f(x + rr * math.cos(ang))},{_f(y + rr * math.sin(ang))}")
    return f'<polygon points="{" ".join(pts)}" fill="red" stroke="darkred" stroke-width="0.5"/>'


def eigen_plane_svg(trace, true_eigs=None, title="Eigenvalues during training"):
    """Complex-plane scatter of an eigenvalue trace.

    Parameters
    ----------
    trace : (iters, n) complex ndarray
        Eigenvalues per iteration; later iterations are drawn more opaque.
    true_eigs : (n,) complex array_like, optional
        Drawn as red stars.  The unit circle is drawn dashed.
    """
    return _document(_eigen_frame(trace, true_eigs, title).body(), width=H + PAD_L - PAD_B, height=H)


def side_by_side_svg(panels):
    """Place several already-rendered plots next to each other.

    ``panels`` is a list of ``("loss", losses, title)`` or
    ``("eigen", trace, true_eigs, title)`` tuples.
    """
    frames = []
    for p in panels:
        if p[0] == "loss":
            frames.append(_loss_frame(p[1], p[2]))
        elif p[0] == "eigen":
            frames.append(_eigen_frame(p[1], p[2], p[3]))
        else:
            raise ValueError(f"unknown panel kind {p[0]!r}")
    x, inner = 0, []
    for fr in frames:
        inner.append(f'<g transform="translate({x} 0)">\n{fr.body()}\n</g>')
        x += fr.w
    height = max(fr.h for fr in frames) if frames else H
    return _document("\n".join(inner), width=x, height=height)
