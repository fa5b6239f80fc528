"""Deterministic SVG rendering of phase portraits.

Output depends only on the inputs: coordinates are printed with a fixed
number of decimals and elements are emitted in input order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence
from xml.sax.saxutils import escape, quoteattr

from .model import PwlCurve, SingularKind, SingularPoint, SystemParams

__all__ = ["View", "auto_view", "render_portrait"]

Point = tuple[float, float]

_CYCLE_COLOURS = {"Stable": "#1f5fbf", "Unstable": "#c0392b", "SemiStable": "#d68910"}
_STABLE_KINDS = {SingularKind.StableFocus, SingularKind.StableNode, SingularKind.SewedFocusStable}
_UNSTABLE_KINDS = {
    SingularKind.UnstableFocus,
    SingularKind.UnstableNode,
    SingularKind.SewedFocusUnstable,
    SingularKind.EquilibriumSegment,
}


@dataclass(frozen=True)
class View:
    x0: float
    x1: float
    y0: float
    y1: float
    width: int = 720
    height: int = 540

    def px(self, p: Point) -> tuple[float, float]:
        u = (p[0] - self.x0) / (self.x1 - self.x0) * self.width
        v = (self.y1 - p[1]) / (self.y1 - self.y0) * self.height
        return u, v

    def inside(self, p: Point) -> bool:
        return self.x0 <= p[0] <= self.x1 and self.y0 <= p[1] <= self.y1


def auto_view(curve: PwlCurve, points: Iterable[Point] = (), pad: float = 0.25, **size) -> View:
    """Box around the corners and the given points, padded on every side."""
    xs = [c[0] for c in curve.corners]
    ys = [c[1] for c in curve.corners]
    for x, y in points:
        if math.isfinite(x) and math.isfinite(y):
            xs.append(x)
            ys.append(y)
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    span = max(x1 - x0, y1 - y0, curve.scale)
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    half = span * (0.5 + pad)
    return View(cx - half, cx + half, cy - half, cy + half, **size)


def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _clip_segments(view: View, pts: Sequence[Point], min_px: float = 0.5) -> list[list[tuple[float, float]]]:
    """Pixel polylines of the visible stretches, thinned to ``min_px`` spacing."""
    out: list[list[tuple[float, float]]] = []
    cur: list[tuple[float, float]] = []
    for p in pts:
        if not view.inside(p):
            if len(cur) > 1:
                out.append(cur)
            cur = []
            continue
        q = view.px(p)
        if cur and math.hypot(q[0] - cur[-1][0], q[1] - cur[-1][1]) < min_px:
            continue
        cur.append(q)
    if len(cur) > 1:
        out.append(cur)
    return out


def _polyline(seg, cls: str, extra: str = "") -> str:
    pts = " ".join(f"{_f(u)},{_f(v)}" for u, v in seg)
    return f'<polyline class="{cls}" points="{pts}"{extra}/>'


def _line(view: View, a: Point, b: Point, cls: str) -> str:
    (u0, v0), (u1, v1) = view.px(a), view.px(b)
    return f'<line class="{cls}" x1="{_f(u0)}" y1="{_f(v0)}" x2="{_f(u1)}" y2="{_f(v1)}"/>'


def _phi_points(curve: PwlCurve, view: View) -> list[Point]:
    xs = [view.x0 + (view.x1 - view.x0) * i / 256 for i in range(257)]
    xs = sorted(set(xs) | {c[0] for c in curve.corners if view.x0 < c[0] < view.x1})
    return [(x, curve.phi(x)) for x in xs]


def _marker(view: View, sp: SingularPoint) -> str:
    if sp.kind is SingularKind.Saddle or sp.kind is SingularKind.SewedSaddleNode:
        fill = "#ffffff"
    elif sp.kind in _STABLE_KINDS:
        fill = "#1f5fbf"
    elif sp.kind in _UNSTABLE_KINDS:
        fill = "#c0392b"
    else:
        fill = "#7d3c98"
    title = f"<title>{escape(sp.kind.value)} at ({sp.location[0]:.6g}, {sp.location[1]:.6g})</title>"
    u, v = view.px(sp.location)
    return (
        f'<circle class="singular" data-kind={quoteattr(sp.kind.value)} cx="{_f(u)}" cy="{_f(v)}" r="4" '
        f'fill="{fill}">{title}</circle>'
    )


def render_portrait(
    curve: PwlCurve,
    params: SystemParams,
    trajectories: Sequence[Sequence[Point]],
    cycles: Sequence[tuple[str, Sequence[Point]]] = (),
    singular: Sequence[SingularPoint] = (),
    view: View | None = None,
) -> str:
    """SVG document with isoclines, sewing lines, trajectories, cycles and equilibria.

    ``cycles`` holds ``(stability, closed point list)`` pairs.
    """
    if view is None:
        pts = [sp.location for sp in singular]
        for _, c in cycles:
            pts.extend(c)
        view = auto_view(curve, pts)
    a, b = params.alpha, params.beta
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{view.width}" height="{view.height}" '
        f'viewBox="0 0 {view.width} {view.height}">',
        f"<title>phase portrait alpha={a!r} beta={b!r}</title>",
        "<style>"
        ".sewing{stroke:#bbbbbb;stroke-dasharray:4 4;stroke-width:1}"
        ".phi{stroke:#222222;stroke-width:2;fill:none}"
        ".zero{stroke:#27ae60;stroke-width:1.5;fill:none}"
        ".traj{stroke:#888888;stroke-width:0.8;fill:none}"
        ".cycle{stroke-width:2.5;fill:none}"
        ".segment{stroke:#c0392b;stroke-width:4}"
        "</style>",
        f'<rect x="0" y="0" width="{view.width}" height="{view.height}" fill="#ffffff"/>',
        '<g id="sewing-lines">',
    ]
    for x, _ in curve.corners:
        out.append(_line(view, (x, view.y0), (x, view.y1), "sewing"))
    out.append("</g>")

    out.append('<g id="isoclines">')
    # both lines are sampled densely so that clipping keeps the visible part
    for seg in _clip_segments(view, _phi_points(curve, view), min_px=0.0):
        out.append(_polyline(seg, "phi"))
    xs = [view.x0 + (view.x1 - view.x0) * i / 256 for i in range(257)]
    for seg in _clip_segments(view, [(x, b - a * x) for x in xs]):
        out.append(_polyline(seg, "zero"))
    out.append("</g>")

    out.append('<g id="trajectories">')
    for i, traj in enumerate(trajectories):
        for seg in _clip_segments(view, traj):
            out.append(_polyline(seg, "traj", f' data-seed="{i}"'))
    out.append("</g>")

    out.append('<g id="cycles">')
    for stability, pts in cycles:
        colour = _CYCLE_COLOURS.get(stability, "#000000")
        for seg in _clip_segments(view, pts):
            out.append(_polyline(seg, "cycle", f' data-stability={quoteattr(stability)} stroke="{colour}"'))
    out.append("</g>")

    out.append('<g id="singular-points">')
    for sp in singular:
        if sp.segment_extent is not None:
            xa, xb = sp.segment_extent
            out.append(_line(view, (xa, curve.phi(xa)), (xb, curve.phi(xb)), "segment"))
        out.append(_marker(view, sp))
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
