"""Self-contained SVG phase portraits.

No plotting dependency: trajectories become polylines, the unsafe set
{h < 0} is shaded by per-row pixel runs on a sign grid, and its boundary is
stroked with marching-squares segments from the same grid. Everything is
written with fixed formatting so identical inputs give identical bytes.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError

CANVAS = 720
MARGIN = 56
GRID = 256  # sign-grid cells per axis for the {h<0} shading

PALETTE = (
    "#2464b4", "#c0392b", "#1f8a4c", "#8e44ad",
    "#d4880c", "#16808c", "#7f4f24", "#555fd0",
)

# Marching-squares lookup: corner mask (1=BL, 2=BR, 4=TR, 8=TL, bit set when
# h < 0) to crossed edge pairs. Edges: 0 bottom, 1 right, 2 top, 3 left.
_SEGMENTS = {
    0: (), 15: (),
    1: ((3, 0),), 14: ((3, 0),),
    2: ((0, 1),), 13: ((0, 1),),
    3: ((3, 1),), 12: ((3, 1),),
    4: ((1, 2),), 11: ((1, 2),),
    6: ((0, 2),), 9: ((0, 2),),
    7: ((3, 2),), 8: ((3, 2),),
    5: ((3, 0), (1, 2)),
    10: ((3, 2), (0, 1)),
}


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Frame:
    """Box-to-pixel transform with the usual upward x2 axis."""

    def __init__(self, box):
        (self.x_lo, self.x_hi), (self.y_lo, self.y_hi) = box
        self.span = CANVAS - 2 * MARGIN

    def px(self, x: float) -> float:
        return MARGIN + (x - self.x_lo) / (self.x_hi - self.x_lo) * self.span

    def py(self, y: float) -> float:
        return MARGIN + (self.y_hi - y) / (self.y_hi - self.y_lo) * self.span


def _shading(parts: list[str], frame: _Frame, h_grid, xs, ys) -> None:
    """Fill {h<0} as merged per-row runs, then stroke the h=0 contour."""
    neg = h_grid < 0.0
    half_x = 0.5 * (xs[1] - xs[0])
    half_y = 0.5 * (ys[1] - ys[0])
    rects: list[str] = []
    for j in range(len(ys)):
        row = neg[:, j]
        i = 0
        while i < row.size:
            if not row[i]:
                i += 1
                continue
            k = i
            while k + 1 < row.size and row[k + 1]:
                k += 1
            x0 = frame.px(max(frame.x_lo, xs[i] - half_x))
            x1 = frame.px(min(frame.x_hi, xs[k] + half_x))
            y0 = frame.py(min(frame.y_hi, ys[j] + half_y))
            y1 = frame.py(max(frame.y_lo, ys[j] - half_y))
            rects.append(
                f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(x1 - x0)}"'
                f' height="{_fmt(y1 - y0)}"/>'
            )
            i = k + 1
    if rects:
        parts.append('<g fill="#f5d4d4" stroke="none">')
        parts.extend(rects)
        parts.append("</g>")

    segments: list[str] = []
    for i in range(len(xs) - 1):
        for j in range(len(ys) - 1):
            mask = (
                (1 if neg[i, j] else 0)
                | (2 if neg[i + 1, j] else 0)
                | (4 if neg[i + 1, j + 1] else 0)
                | (8 if neg[i, j + 1] else 0)
            )
            for e0, e1 in _SEGMENTS[mask]:
                pts = []
                for edge in (e0, e1):
                    if edge == 0:
                        a, b = (i, j), (i + 1, j)
                    elif edge == 1:
                        a, b = (i + 1, j), (i + 1, j + 1)
                    elif edge == 2:
                        a, b = (i, j + 1), (i + 1, j + 1)
                    else:
                        a, b = (i, j), (i, j + 1)
                    va, vb = h_grid[a], h_grid[b]
                    t = 0.5 if va == vb else va / (va - vb)
                    pts.append((
                        xs[a[0]] + t * (xs[b[0]] - xs[a[0]]),
                        ys[a[1]] + t * (ys[b[1]] - ys[a[1]]),
                    ))
                segments.append(
                    f'<line x1="{_fmt(frame.px(pts[0][0]))}" y1="{_fmt(frame.py(pts[0][1]))}"'
                    f' x2="{_fmt(frame.px(pts[1][0]))}" y2="{_fmt(frame.py(pts[1][1]))}"/>'
                )
    if segments:
        parts.append('<g stroke="#b2452f" stroke-width="1.4" fill="none">')
        parts.extend(segments)
        parts.append("</g>")


def _decimate(states, cap: int = 1200):
    if states.shape[0] <= cap:
        return states
    idx = np.unique(np.round(np.linspace(0, states.shape[0] - 1, cap)).astype(int))
    return states[idx]


def phase_portrait(path, scenario, trajectories, equilibria=(), title: str = "") -> None:
    """Write a planar portrait of trajectories over the shaded unsafe set."""
    if scenario.model.n != 2:
        raise ConfigurationError("phase portraits need a planar state")
    frame = _Frame(scenario.box)
    h_of = scenario.certs.cbf.value

    xs = np.linspace(frame.x_lo, frame.x_hi, GRID + 1)
    ys = np.linspace(frame.y_lo, frame.y_hi, GRID + 1)
    h_grid = np.empty((xs.size, ys.size))
    for i, xv in enumerate(xs):
        for j, yv in enumerate(ys):
            h_grid[i, j] = float(h_of(np.array([xv, yv])))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{CANVAS}"'
        f' viewBox="0 0 {CANVAS} {CANVAS}">',
        f'<rect width="{CANVAS}" height="{CANVAS}" fill="#ffffff"/>',
    ]
    _shading(parts, frame, h_grid, xs, ys)

    # Zero axes, frame, labels.
    axis = '<g stroke="#c8c8c8" stroke-width="1" stroke-dasharray="4 4" fill="none">'
    lines = []
    if frame.x_lo < 0 < frame.x_hi:
        x0 = _fmt(frame.px(0.0))
        lines.append(f'<line x1="{x0}" y1="{MARGIN}" x2="{x0}" y2="{CANVAS - MARGIN}"/>')
    if frame.y_lo < 0 < frame.y_hi:
        y0 = _fmt(frame.py(0.0))
        lines.append(f'<line x1="{MARGIN}" y1="{y0}" x2="{CANVAS - MARGIN}" y2="{y0}"/>')
    if lines:
        parts.append(axis)
        parts.extend(lines)
        parts.append("</g>")
    parts.append(
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{frame.span}" height="{frame.span}"'
        f' fill="none" stroke="#333333" stroke-width="1.5"/>'
    )

    for k, traj in enumerate(trajectories):
        if traj.states.shape[0] == 0:
            continue
        color = PALETTE[k % len(PALETTE)]
        pts = _decimate(traj.states)
        coords = " ".join(
            f"{_fmt(frame.px(px))},{_fmt(frame.py(py))}" for px, py in pts
        )
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.6"/>'
        )
        sx, sy = frame.px(pts[0][0]), frame.py(pts[0][1])
        ex, ey = frame.px(pts[-1][0]), frame.py(pts[-1][1])
        parts.append(
            f'<rect x="{_fmt(sx - 3)}" y="{_fmt(sy - 3)}" width="6" height="6"'
            f' fill="none" stroke="{color}" stroke-width="1.3"/>'
        )
        parts.append(f'<circle cx="{_fmt(ex)}" cy="{_fmt(ey)}" r="3" fill="{color}"/>')

    for rep in equilibria:
        cx, cy = frame.px(rep.location[0]), frame.py(rep.location[1])
        kind = rep.kind.value
        if kind == "Origin":
            parts.append(
                f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="4.5" fill="#1a1a1a"'
                f' stroke="#ffffff" stroke-width="1.2"/>'
            )
        elif kind == "Interior":
            parts.append(
                f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="4" fill="#1a1a1a"/>'
            )
        else:
            parts.append(
                f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="4.5" fill="#ffffff"'
                f' stroke="#1a1a1a" stroke-width="1.6"/>'
            )

    label = '<g font-family="Helvetica, Arial, sans-serif" font-size="13" fill="#333333">'
    parts.append(label)
    if title:
        parts.append(
            f'<text x="{MARGIN}" y="{MARGIN - 16}" font-size="15">{title}</text>'
        )
    parts.append(
        f'<text x="{_fmt(CANVAS / 2)}" y="{CANVAS - 14}" text-anchor="middle">x1</text>'
    )
    parts.append(
        f'<text x="16" y="{_fmt(CANVAS / 2)}" text-anchor="middle"'
        f' transform="rotate(-90 16 {_fmt(CANVAS / 2)})">x2</text>'
    )
    for val, px, py, anchor in (
        (frame.x_lo, frame.px(frame.x_lo), CANVAS - MARGIN + 18, "middle"),
        (frame.x_hi, frame.px(frame.x_hi), CANVAS - MARGIN + 18, "middle"),
        (frame.y_lo, MARGIN - 8, frame.py(frame.y_lo) + 4, "end"),
        (frame.y_hi, MARGIN - 8, frame.py(frame.y_hi) + 4, "end"),
    ):
        parts.append(
            f'<text x="{_fmt(px)}" y="{_fmt(py)}" text-anchor="{anchor}">{val:g}</text>'
        )
    parts.append("</g>")
    parts.append("</svg>")

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
