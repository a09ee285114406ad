"""Planar measures as weighted carrier collections with exact transforms.

Carrier kinds:
  - area cell: axis-aligned square, unit density w.r.t. area (mass side^2);
  - segment: endpoints a, b with window density cos^2(pi t) along arclength,
    t in [-1/2, 1/2] (mass |b-a|/2) — the window keeps the transform bounded
    with a principal-value extension on the carrier itself;
  - arc: circular arc, unit density w.r.t. arclength (mass r*(t1-t0)); its
    transform jumps across the arc, so querying on the arc is an error.

Weights multiply the unit-density carrier.  Positive measures allow only
nonnegative weights on cells and segments (arcs jump, which would break the
continuity the downstream solvers rely on).
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import GeometryError

_GL_CACHE = {}


def gauss_legendre(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


@dataclass
class CellGroup:
    side: float
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray  # complex

    def centers(self):
        return (self.x + self.side / 2) + 1j * (self.y + self.side / 2)


def _seg_rho(t):
    c = np.cos(np.pi * t)
    return c * c


class PlanarMeasure:
    def __init__(self, cells=None, segments=None, arcs=None, positive=True):
        self.cells = []
        for g in cells or []:
            side = float(g.side)
            if side <= 0:
                raise GeometryError("cell side must be positive")
            self.cells.append(CellGroup(side, np.asarray(g.x, dtype=float),
                                        np.asarray(g.y, dtype=float),
                                        np.asarray(g.w, dtype=complex)))
        self.segments = []
        for a, b, w in segments or []:
            if abs(b - a) <= 0:
                raise GeometryError("degenerate segment (atoms are not a carrier kind)")
            self.segments.append((complex(a), complex(b), complex(w)))
        self.arcs = []
        for c, r, t0, t1, w in arcs or []:
            if r <= 0 or t1 <= t0:
                raise GeometryError("degenerate arc")
            self.arcs.append((complex(c), float(r), float(t0), float(t1), complex(w)))
        self.positive = positive
        if positive:
            if self.arcs:
                raise GeometryError(
                    "positive measures admit only continuous-transform carriers "
                    "(cells and windowed segments)")
            for g in self.cells:
                if (g.w.imag != 0).any() or (g.w.real < 0).any():
                    raise GeometryError("positive measure with non-positive cell weight")
            for _, _, w in self.segments:
                if w.imag != 0 or w.real < 0:
                    raise GeometryError("positive measure with non-positive segment weight")

    # -- construction helpers ------------------------------------------------

    @classmethod
    def from_cells(cls, side, x, y, w, positive=True):
        return cls(cells=[CellGroup(side, x, y, w)], positive=positive)

    @classmethod
    def empty(cls):
        return cls()

    def copy(self):
        return PlanarMeasure(
            cells=[CellGroup(g.side, g.x.copy(), g.y.copy(), g.w.copy())
                   for g in self.cells],
            segments=list(self.segments),
            arcs=list(self.arcs),
            positive=self.positive,
        )

    def scaled_by(self, factor):
        """Same geometry, weights multiplied by a scalar."""
        out = self.copy()
        if self.positive and (complex(factor).imag != 0 or complex(factor).real < 0):
            out.positive = False
        for g in out.cells:
            g.w = g.w * factor
        out.segments = [(a, b, w * factor) for a, b, w in out.segments]
        out.arcs = [(c, r, t0, t1, w * factor) for c, r, t0, t1, w in out.arcs]
        return out

    def __add__(self, other):
        return PlanarMeasure(
            cells=self.cells + other.cells,
            segments=self.segments + other.segments,
            arcs=self.arcs + other.arcs,
            positive=self.positive and other.positive,
        )

    def pushforward_scale(self, t, origin=0j):
        """Image measure under z -> origin + t*(z - origin), t real > 0.

        Mass is preserved (weights rescale against the carrier unit mass).
        """
        if t <= 0:
            raise GeometryError("scale factor must be positive")
        o = complex(origin)
        cells = [CellGroup(g.side * t,
                           o.real + t * (g.x - o.real),
                           o.imag + t * (g.y - o.imag),
                           g.w / t ** 2) for g in self.cells]
        segs = [(o + t * (a - o), o + t * (b - o), w / t)
                for a, b, w in self.segments]
        arcs = [(o + t * (c - o), r * t, t0, t1, w / t)
                for c, r, t0, t1, w in self.arcs]
        return PlanarMeasure(cells=cells, segments=segs, arcs=arcs,
                             positive=self.positive)

    def translated(self, dz):
        dz = complex(dz)
        cells = [CellGroup(g.side, g.x + dz.real, g.y + dz.imag, g.w.copy())
                 for g in self.cells]
        segs = [(a + dz, b + dz, w) for a, b, w in self.segments]
        arcs = [(c + dz, r, t0, t1, w) for c, r, t0, t1, w in self.arcs]
        return PlanarMeasure(cells=cells, segments=segs, arcs=arcs,
                             positive=self.positive)

    def restricted(self, predicate):
        """Keep carriers whose representative point satisfies predicate
        (cell centers; segment midpoints; arc midpoints)."""
        cells = []
        for g in self.cells:
            keep = np.asarray([bool(predicate(z)) for z in g.centers()])
            if keep.any():
                cells.append(CellGroup(g.side, g.x[keep], g.y[keep], g.w[keep]))
        segs = [(a, b, w) for a, b, w in self.segments
                if predicate((a + b) / 2)]
        arcs = [(c, r, t0, t1, w) for c, r, t0, t1, w in self.arcs
                if predicate(c + r * np.exp(1j * (t0 + t1) / 2))]
        return PlanarMeasure(cells=cells, segments=segs, arcs=arcs,
                             positive=self.positive)

    def consolidated(self, drop_tol=0.0):
        """Merge identical cells (summing weights) and drop negligible ones."""
        groups = {}
        for g in self.cells:
            acc = groups.setdefault(g.side, {})
            for x, y, w in zip(g.x, g.y, g.w):
                key = (x, y)
                acc[key] = acc.get(key, 0j) + w
        cells = []
        for side in sorted(groups):
            items = sorted(groups[side].items())
            x = np.array([k[0] for k, _ in items])
            y = np.array([k[1] for k, _ in items])
            w = np.array([v for _, v in items], dtype=complex)
            if drop_tol > 0 and len(w):
                keep = np.abs(w) > drop_tol * max(np.abs(w).max(), 1e-300)
                x, y, w = x[keep], y[keep], w[keep]
            if len(w):
                cells.append(CellGroup(side, x, y, w))
        return PlanarMeasure(cells=cells, segments=self.segments,
                             arcs=self.arcs, positive=self.positive)

    # -- bookkeeping ----------------------------------------------------------

    def carrier_count(self):
        return sum(len(g.w) for g in self.cells) + len(self.segments) + len(self.arcs)

    def total_mass(self):
        m = 0j
        for g in self.cells:
            m += g.w.sum() * g.side ** 2
        for a, b, w in self.segments:
            m += w * abs(b - a) / 2
        for c, r, t0, t1, w in self.arcs:
            m += w * r * (t1 - t0)
        return m.real if self.positive else m

    def variation(self):
        m = 0.0
        for g in self.cells:
            m += np.abs(g.w).sum() * g.side ** 2
        for a, b, w in self.segments:
            m += abs(w) * abs(b - a) / 2
        for c, r, t0, t1, w in self.arcs:
            m += abs(w) * r * (t1 - t0)
        return m

    def support_points(self):
        """Representative support points (cell centers, segment/arc nodes)."""
        pts = [g.centers() for g in self.cells]
        for a, b, _ in self.segments:
            t = np.linspace(-0.5, 0.5, 17)
            pts.append((a + b) / 2 + t * (b - a))
        for c, r, t0, t1, _ in self.arcs:
            t = np.linspace(t0, t1, 17)
            pts.append(c + r * np.exp(1j * t))
        if not pts:
            return np.zeros(0, dtype=complex)
        return np.concatenate(pts)

    def bbox(self):
        pts = self.support_points()
        if pts.size == 0:
            return (0.0, 0.0, 0.0, 0.0)
        pad = max((g.side for g in self.cells), default=0.0)
        return (pts.real.min() - pad, pts.imag.min() - pad,
                pts.real.max() + pad, pts.imag.max() + pad)

    # -- evaluation -----------------------------------------------------------

    def transform(self, z, gl_order=24):
        """C(mu)(z) = integral of 1/(w-z), principal value on segment
        carriers, continuous extension on cells; error on arcs."""
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape, dtype=complex)
        flat = z.ravel()
        acc = out.ravel()
        for g in self.cells:
            acc += kernels.cell_apply(g.x, g.y, g.side, flat, g.w)
        gx, gw = gauss_legendre(gl_order)
        for a, b, w in self.segments:
            acc += w * kernels.segment_transform(a, b, 1.0, flat, gx, gw)
        for c, r, t0, t1, w in self.arcs:
            acc += w * arc_transform(c, r, t0, t1, flat)
        return out if out.shape else complex(acc[0])

    def segment_boundary_values(self, t_grid, gl_order=24):
        """One-sided transform limits on each segment carrier.

        Returns a list (one entry per segment) of (points, left, right):
        boundary values of the FULL measure's transform approaching from the
        left/right of the oriented segment.  Collinear overlapping carriers
        all contribute to the jump at a shared point; summing each carrier's
        density with its own orientation factor 1/tau_c reduces (for carriers
        on one line) to  left = pv + i*pi*(sum_c w_c rho_c(x)) / tau.
        """
        out = []
        t_grid = np.asarray(t_grid, dtype=float)
        for a, b, w in self.segments:
            ell = abs(b - a)
            tau = (b - a) / ell
            pts = (a + b) / 2 + t_grid * (b - a)
            pv = self.transform(pts, gl_order=gl_order)
            dens = self.segment_density(pts)
            jump = 1j * np.pi * dens / tau
            out.append((pts, pv + jump, pv - jump))
        return out

    def segment_density(self, pts, tol=1e-12):
        """Total weighted line density of all segment carriers at ``pts``.

        For each query point, sums  w_c * rho_c  over every segment carrier
        whose line passes through the point (within ``tol``, relative to the
        carrier length) with the point inside the carrier's window.  Points
        off every carrier get density zero.
        """
        pts = np.asarray(pts, dtype=complex)
        dens = np.zeros(pts.shape, dtype=complex)
        for a, b, w in self.segments:
            ell = abs(b - a)
            loc = (pts - (a + b) / 2) / (b - a)
            on_line = np.abs(loc.imag) * ell <= tol * max(ell, 1.0)
            inside = (loc.real >= -0.5) & (loc.real <= 0.5) & on_line
            if np.any(inside):
                dens[inside] += w * _seg_rho(loc.real[inside])
        return dens

    # -- quadrature -----------------------------------------------------------

    def quadrature(self, cell_order=6, line_order=24):
        """Nodes and weights so that  integral f dmu  ~=  sum f(p) * qw."""
        pts, wts = [], []
        gx, gw = gauss_legendre(cell_order)
        half = 0.5 * (gx + 1.0)           # nodes in [0, 1]
        hw = 0.5 * gw
        for g in self.cells:
            s = g.side
            nx = half * s
            PX, PY = np.meshgrid(nx, nx)
            WW = np.outer(hw * s, hw * s)
            for x, y, w in zip(g.x, g.y, g.w):
                pts.append(((x + PX) + 1j * (y + PY)).ravel())
                wts.append((w * WW).ravel())
        lx, lw = gauss_legendre(line_order)
        t = 0.5 * lx                      # [-1/2, 1/2]
        tw = 0.5 * lw
        for a, b, w in self.segments:
            ell = abs(b - a)
            pts.append((a + b) / 2 + t * (b - a))
            wts.append(w * ell * tw * _seg_rho(t))
        for c, r, t0, t1, w in self.arcs:
            th = (t0 + t1) / 2 + (t1 - t0) / 2 * lx
            pts.append(c + r * np.exp(1j * th))
            wts.append(w * r * (t1 - t0) / 2 * lw * np.ones_like(th))
        if not pts:
            return np.zeros(0, dtype=complex), np.zeros(0, dtype=complex)
        return np.concatenate(pts), np.concatenate(wts)

    def ball_mass(self, center, radius, depth=7):
        """mu(closed B(center, radius)) for positive measures."""
        c = complex(center)
        total = 0.0
        for g in self.cells:
            for x, y, w in zip(g.x, g.y, g.w):
                total += w.real * _cell_ball_area(x, y, g.side, c, radius, depth)
        for a, b, w in self.segments:
            for lo, hi in _segment_ball_clip(a, b, c, radius):
                total += w.real * abs(b - a) * (_seg_cdf(hi) - _seg_cdf(lo))
        for cc, r, t0, t1, w in self.arcs:
            for lo, hi in _arc_ball_clip(cc, r, t0, t1, c, radius):
                total += w.real * r * (hi - lo)
        return total

    # -- serialization ---------------------------------------------------------

    def to_table_lines(self):
        lines = ["# capflow-measure v1"]
        for g in self.cells:
            for x, y, w in zip(g.x, g.y, g.w):
                lines.append(f"cell {x!r} {y!r} {g.side!r} {w.real!r} {w.imag!r}")
        for a, b, w in self.segments:
            lines.append(f"seg {a.real!r} {a.imag!r} {b.real!r} {b.imag!r} "
                         f"{w.real!r} {w.imag!r}")
        for c, r, t0, t1, w in self.arcs:
            lines.append(f"arc {c.real!r} {c.imag!r} {r!r} {t0!r} {t1!r} "
                         f"{w.real!r} {w.imag!r}")
        return lines

    @classmethod
    def from_table_lines(cls, lines, positive=None):
        by_side = {}
        segs, arcs = [], []
        saw_complex = False
        saw_negative = False
        for ln in lines:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            parts = ln.split()
            kind, vals = parts[0], [float(v) for v in parts[1:]]
            if kind == "cell":
                x, y, s, wr, wi = vals
                by_side.setdefault(s, []).append((x, y, complex(wr, wi)))
                saw_complex |= wi != 0
                saw_negative |= wr < 0
            elif kind == "seg":
                ax, ay, bx, by, wr, wi = vals
                segs.append((complex(ax, ay), complex(bx, by), complex(wr, wi)))
                saw_complex |= wi != 0
                saw_negative |= wr < 0
            elif kind == "arc":
                cx, cy, r, t0, t1, wr, wi = vals
                arcs.append((complex(cx, cy), r, t0, t1, complex(wr, wi)))
                saw_complex = True
            else:
                raise GeometryError(f"unknown carrier kind {kind!r} in measure table")
        cells = []
        for s in sorted(by_side):
            rows = by_side[s]
            cells.append(CellGroup(
                s,
                np.array([r[0] for r in rows]),
                np.array([r[1] for r in rows]),
                np.array([r[2] for r in rows], dtype=complex)))
        if positive is None:
            positive = not (saw_complex or saw_negative or arcs)
        return cls(cells=cells, segments=segs, arcs=arcs, positive=positive)


# ---------------------------------------------------------------------------
# arc transform: exact up to log-branch tracking along the arc

def arc_transform(c, r, t0, t1, z, on_arc_tol=1e-12):
    """Transform of unit arclength density on the arc; errors on the arc
    itself (the value jumps there)."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape, dtype=complex)
    flat = z.ravel()
    res = out.ravel()
    for idx, zz in enumerate(flat):
        res[idx] = _arc_scalar(c, r, t0, t1, zz, on_arc_tol)
    return out if out.shape else complex(res[0])


def _arc_dist(c, r, t0, t1, z):
    d = z - c
    rho = abs(d)
    if rho == 0:
        return r
    ang = np.angle(d)
    # shift ang into [t0, t0 + 2pi)
    k = np.floor((ang - t0) / (2 * np.pi))
    ang -= 2 * np.pi * k
    if ang <= t1:
        return abs(rho - r)
    e0 = c + r * np.exp(1j * t0)
    e1 = c + r * np.exp(1j * t1)
    return min(abs(z - e0), abs(z - e1))


def _arc_scalar(c, r, t0, t1, z, on_arc_tol):
    dist = _arc_dist(c, r, t0, t1, z)
    if dist <= on_arc_tol * r:
        raise GeometryError("jump discontinuity: arc transform queried on the arc")
    if z == c:
        return 1j * (np.exp(-1j * t1) - np.exp(-1j * t0))
    # integral r dtheta / (c + r e^{i theta} - z); log branch tracked by
    # subdividing so each step's argument moves by well under pi
    steps = int(min(max(8, np.ceil(4 * r * (t1 - t0) / dist)), 4096))
    th = np.linspace(t0, t1, steps + 1)
    w = c + r * np.exp(1j * th) - z
    dlog = np.log(w[1:] / w[:-1]).sum()
    return (r / (1j * (c - z))) * (1j * (t1 - t0) - dlog)


# ---------------------------------------------------------------------------
# ball-intersection helpers for growth reports / truncation

def _cell_ball_area(x, y, s, c, radius, depth):
    # quadtree area of cell ∩ ball
    r2 = radius * radius
    def rec(x0, y0, side, d):
        # distances of nearest/farthest point of the square to c
        nx = min(max(c.real, x0), x0 + side)
        ny = min(max(c.imag, y0), y0 + side)
        near2 = (nx - c.real) ** 2 + (ny - c.imag) ** 2
        fx = x0 + side if abs(x0 + side - c.real) > abs(x0 - c.real) else x0
        fy = y0 + side if abs(y0 + side - c.imag) > abs(y0 - c.imag) else y0
        far2 = (fx - c.real) ** 2 + (fy - c.imag) ** 2
        if near2 > r2:
            return 0.0
        if far2 <= r2:
            return side * side
        if d == 0:
            cx, cy = x0 + side / 2, y0 + side / 2
            inside = (cx - c.real) ** 2 + (cy - c.imag) ** 2 <= r2
            return side * side if inside else 0.0
        hs = side / 2
        return (rec(x0, y0, hs, d - 1) + rec(x0 + hs, y0, hs, d - 1) +
                rec(x0, y0 + hs, hs, d - 1) + rec(x0 + hs, y0 + hs, hs, d - 1))
    return rec(x, y, s, depth)


def _seg_cdf(t):
    # integral of cos^2(pi u) from -1/2 to t
    return (t + 0.5) / 2 + np.sin(2 * np.pi * t) / (4 * np.pi)


def _segment_ball_clip(a, b, c, radius):
    """Sub-intervals of t in [-1/2, 1/2] where |a + (t+1/2)(b-a) - c| <= r,
    in the centered parameter (midpoint at t=0)."""
    ell = abs(b - a)
    mid = (a + b) / 2
    tau = (b - a) / ell
    # point p(t) = mid + t*ell*tau; |p - c|^2 = ell^2 t^2 + 2 ell t Re(conj(tau)(mid-c)) + |mid-c|^2
    g = (mid - c)
    B = 2 * ell * (np.conj(tau) * g).real
    A = ell * ell
    C0 = abs(g) ** 2 - radius ** 2
    disc = B * B - 4 * A * C0
    if disc <= 0:
        return []
    rt = np.sqrt(disc)
    lo, hi = (-B - rt) / (2 * A), (-B + rt) / (2 * A)
    lo, hi = max(lo, -0.5), min(hi, 0.5)
    if lo >= hi:
        return []
    return [(lo, hi)]


def _arc_ball_clip(cc, r, t0, t1, c, radius):
    """Angle sub-intervals of [t0, t1] with |cc + r e^{i t} - c| <= radius."""
    d = c - cc
    rho = abs(d)
    # |r e^{it} - d|^2 = r^2 + rho^2 - 2 r rho cos(t - arg d) <= radius^2
    if rho == 0:
        return [(t0, t1)] if r <= radius else []
    x = (r * r + rho * rho - radius * radius) / (2 * r * rho)
    if x <= -1:
        return [(t0, t1)]
    if x >= 1:
        return []
    half = np.arccos(x)
    base = np.angle(d)
    out = []
    # the window [base - half, base + half] may meet [t0, t1] modulo 2 pi
    for k in range(int(np.floor((t0 - base - half) / (2 * np.pi))) - 1,
                   int(np.ceil((t1 - base + half) / (2 * np.pi))) + 2):
        lo = base - half + 2 * np.pi * k
        hi = base + half + 2 * np.pi * k
        a, b = max(lo, t0), min(hi, t1)
        if a < b:
            out.append((a, b))
    return out


# ---------------------------------------------------------------------------
# complex moments of cell measures (boundary reduction, exact for polynomials)

def cell_complex_moments(measure, center, scale, kmax, edge_order=None):
    """m_a = integral ((w - center)/scale)^a dmu(w), a = 0..kmax, over the
    cell carriers (segments/arcs unsupported: the construction measures that
    need moments are cell-only)."""
    if measure.segments or measure.arcs:
        raise GeometryError("complex moments implemented for cell measures only")
    if edge_order is None:
        edge_order = kmax // 2 + 4
    gx, gw = gauss_legendre(edge_order)
    m = np.zeros(kmax + 1, dtype=complex)
    for g in measure.cells:
        s = g.side
        corners_rel = np.array([0, s, s + 1j * s, 1j * s])
        for x, y, w in zip(g.x, g.y, g.w):
            c0 = complex(x, y)
            # area integral of f = (1/2i) contour integral of conj(w) f(w) dw
            for k in range(4):
                a = c0 + corners_rel[k]
                b = c0 + corners_rel[(k + 1) % 4]
                mid = (a + b) / 2
                hwid = (b - a) / 2
                wpts = mid + hwid * gx
                zeta = (wpts - center) / scale
                # accumulate all powers at the edge nodes
                pw = np.ones_like(zeta)
                base = gw * np.conj(wpts) * hwid / 2j
                for aa in range(kmax + 1):
                    m[aa] += w * np.sum(base * pw)
                    pw = pw * zeta
    return m
