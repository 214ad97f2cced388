"""CSV series, hand-emitted SVG line plots, and verdict tables.

Deterministic by construction: fixed float formatting, no timestamps, no
third-party plotting.  Rerunning a campaign with the same seed reproduces
byte-identical files.
"""

from dataclasses import dataclass

import numpy as np


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    if len(rows) == 0:
        raise ValueError("refusing to write an empty CSV")
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    return path


@dataclass
class Verdict:
    """One pass/fail check against a quantitative target."""
    name: str
    target: float
    measured: float
    tolerance: float
    passed: bool
    note: str = ""

    @staticmethod
    def two_sided(name, target, measured, tolerance, note=""):
        return Verdict(name, target, measured, tolerance,
                       bool(abs(measured - target) <= tolerance), note)

    @staticmethod
    def lower_bound(name, bound, measured, note=""):
        return Verdict(name, bound, measured, 0.0, bool(measured > bound), note)

    @staticmethod
    def upper_bound(name, bound, measured, note=""):
        return Verdict(name, bound, measured, 0.0, bool(measured < bound), note)


def format_verdicts(verdicts):
    short = lambda x: format(float(x), ".6g")
    lines = [f"{'verdict':<28} {'target':>12} {'measured':>12} {'tol':>10} {'status':>7}  note"]
    for v in verdicts:
        lines.append(f"{v.name:<28} {short(v.target):>12} {short(v.measured):>12} "
                     f"{short(v.tolerance):>10} {'PASS' if v.passed else 'FAIL':>7}  {v.note}")
    return "\n".join(lines) + "\n"


def write_verdicts(path, verdicts):
    with open(path, "w") as fh:
        fh.write(format_verdicts(verdicts))
    csvpath = str(path) + ".csv"
    write_csv(csvpath, ["name", "target", "measured", "tolerance", "passed", "note"],
              [[v.name, v.target, v.measured, v.tolerance, int(v.passed), v.note] for v in verdicts])
    return path


# --- minimal SVG line plots -----------------------------------------------------

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 30, 50
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"]


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = np.linspace(lo, hi, n)
    return raw


def _map(vals, lo, hi, out_lo, out_hi):
    vals = np.asarray(vals, float)
    span = hi - lo if hi > lo else 1.0
    return out_lo + (vals - lo) / span * (out_hi - out_lo)


def svg_line_plot(path, series, xlabel="", ylabel="", logx=False, logy=False,
                  fit_line=None, annotation=""):
    """Write a self-contained SVG line plot.

    series: dict name -> (x, y).  fit_line: optional (x, y, label) overlay,
    drawn dashed and annotated.  Log axes transform the data; tick labels show
    the original values.
    """
    if not series:
        raise ValueError("refusing to plot an empty series dict")

    def tx(x):
        x = np.asarray(x, float)
        return np.log10(x) if logx else x

    def ty(y):
        y = np.asarray(y, float)
        return np.log10(y) if logy else y

    xs = np.concatenate([tx(x) for x, _ in series.values()])
    ys = np.concatenate([ty(y) for _, y in series.values()])
    if fit_line is not None:
        xs = np.concatenate([xs, tx(fit_line[0])])
        ys = np.concatenate([ys, ty(fit_line[1])])
    xlo, xhi = float(np.min(xs)), float(np.max(xs))
    ylo, yhi = float(np.min(ys)), float(np.max(ys))
    if yhi - ylo < 1e-12:
        ylo, yhi = ylo - 1.0, yhi + 1.0

    px = lambda x: _map(tx(x), xlo, xhi, _ML, _W - _MR)
    py = lambda y: _map(ty(y), ylo, yhi, _H - _MB, _MT)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
             f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="11">',
             f'<rect width="{_W}" height="{_H}" fill="white"/>',
             f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" height="{_H - _MT - _MB}" '
             'fill="none" stroke="black"/>']
    for t in _ticks(xlo, xhi):
        X = _map(t, xlo, xhi, _ML, _W - _MR)
        label = f"{10 ** t:.3g}" if logx else f"{t:.3g}"
        parts.append(f'<line x1="{X:.1f}" y1="{_H - _MB}" x2="{X:.1f}" y2="{_H - _MB + 5}" stroke="black"/>')
        parts.append(f'<text x="{X:.1f}" y="{_H - _MB + 18}" text-anchor="middle">{label}</text>')
    for t in _ticks(ylo, yhi):
        Y = _map(t, ylo, yhi, _H - _MB, _MT)
        label = f"{10 ** t:.3g}" if logy else f"{t:.3g}"
        parts.append(f'<line x1="{_ML - 5}" y1="{Y:.1f}" x2="{_ML}" y2="{Y:.1f}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{Y + 4:.1f}" text-anchor="end">{label}</text>')
    parts.append(f'<text x="{(_ML + _W - _MR) / 2}" y="{_H - 12}" text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="16" y="{(_MT + _H - _MB) / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {(_MT + _H - _MB) / 2})">{ylabel}</text>')

    for i, (name, (x, y)) in enumerate(series.items()):
        X, Y = px(np.asarray(x)), py(np.asarray(y))
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(X, Y))
        color = _COLORS[i % len(_COLORS)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{_W - _MR - 6}" y="{_MT + 16 + 14 * i}" text-anchor="end" '
                     f'fill="{color}">{name}</text>')

    if fit_line is not None:
        fx, fy, flabel = fit_line
        X, Y = px(np.asarray(fx)), py(np.asarray(fy))
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(X, Y))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="black" '
                     'stroke-width="1.2" stroke-dasharray="6,4"/>')
        parts.append(f'<text x="{_ML + 10}" y="{_MT + 16}">{flabel}</text>')
    if annotation:
        parts.append(f'<text x="{_ML + 10}" y="{_MT + 32}">{annotation}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
    return path
