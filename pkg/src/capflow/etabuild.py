"""Construction of a bounded-transform carrier measure with certified
difference-quotient divisions.

Given a raster model of a compact plane set, this module:

* plants a fixture in every complement hole and every interior
  component: a deep reference point, a ball around it, a vertical
  reference line through it, and (in holes) a Cantor-product block of
  positive-area cells the measure is allowed to charge
  (``build_fixtures``);
* assembles the charged set from declared fine-boundary cells plus the
  blocks, minus a safety collar around every fixture (``assemble_E``);
* for each dyadic scale 2^-n, runs a certified capacity program on
  every dyadic square's slice of the charged set and averages the
  resulting unit-transform measures (``level_measure``);
* sums the level measures with recursively damped weights so the total
  transform stays bounded by one, fits polynomial handles to the
  reciprocal kernels 1/(w - u_k) at division points on the fixtures
  (one shared stable basis on offset convex contours), and certifies
  every handle field against an independently evaluated difference
  quotient of the total transform (``run_construction``);
* re-checks the structural promises on a finished artifact
  (``check_assumptions``) and round-trips artifacts to disk
  (``save_artifact`` / ``load_artifact``).

Every certificate is a lower bound from the capacity module's cutting
LP, and every residual check compares a node-quadrature route against
the closed-form transform route — never a quantity against itself.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, cKDTree
from scipy.spatial import QhullError

from . import capacity as capmod
from .carriers import PlanarMeasure
from .errors import GeometryError, InvariantError, SolverError
from .geometry import (CompactSetModel, build_set, fat_cantor_intervals,
                       modulus_of_continuity)

_EIGHT = np.ones((3, 3), dtype=bool)
_FOUR = ndimage.generate_binary_structure(2, 1)

LP_DEFAULTS = dict(angles=12, tolerance=2e-3, max_rounds=5,
                   max_carriers=200, tau_factor=1e-4)


def _axes(model):
    ny, nx = model.mask.shape
    xs = model.x0 + (np.arange(nx) + 0.5) * model.h
    ys = model.y0 + (np.arange(ny) + 0.5) * model.h
    return xs, ys


# ---------------------------------------------------------------------------
# small computational geometry helpers


def _pt_seg(p, a, b):
    d = b - a
    L2 = (d * d.conjugate()).real
    if L2 == 0.0:
        return abs(p - a)
    t = ((p - a) * d.conjugate()).real / L2
    t = min(1.0, max(0.0, t))
    return abs(p - (a + t * d))


def _seg_seg(a1, b1, a2, b2):
    def cr(o, p, q):
        return (np.conj(p - o) * (q - o)).imag

    d1 = cr(a2, b2, a1)
    d2 = cr(a2, b2, b1)
    d3 = cr(a1, b1, a2)
    d4 = cr(a1, b1, b2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return 0.0
    return min(_pt_seg(a1, a2, b2), _pt_seg(b1, a2, b2),
               _pt_seg(a2, a1, b1), _pt_seg(b2, a1, b1))


def _poly_dist(P, verts):
    """Distance from points to a convex ccw polygon (0 inside)."""
    P = np.asarray(P, dtype=complex)
    flat = P.ravel()
    inside = np.ones(flat.shape, dtype=bool)
    dmin = np.full(flat.shape, np.inf)
    nv = len(verts)
    for i in range(nv):
        a = verts[i]
        b = verts[(i + 1) % nv]
        d = b - a
        inside &= (np.conj(d) * (flat - a)).imag >= -1e-15
        L2 = (d * d.conjugate()).real
        t = np.clip(((flat - a) * d.conjugate()).real / L2, 0.0, 1.0)
        dmin = np.minimum(dmin, np.abs(flat - (a + t * d)))
    out = np.where(inside, 0.0, dmin)
    return out.reshape(P.shape) if P.shape else float(out[0])


def _hull_of_cells(ox, oy, side):
    """CCW convex hull vertices of a union of axis-aligned cells."""
    x = np.concatenate([ox, ox + side, ox, ox + side])
    y = np.concatenate([oy, oy, oy + side, oy + side])
    pts = np.c_[x, y]
    try:
        hull = ConvexHull(pts)
        v = pts[hull.vertices]
        return v[:, 0] + 1j * v[:, 1]
    except QhullError:
        lox, hix = x.min(), x.max()
        loy, hiy = y.min(), y.max()
        return np.array([lox + 1j * loy, hix + 1j * loy,
                         hix + 1j * hiy, lox + 1j * hiy])


def _offset_contour(verts, pad, target=240):
    """Samples of the outward offset of a convex ccw polygon: shifted
    edges plus vertex arcs, roughly ``target`` points total."""
    nv = len(verts)
    per = float(np.abs(np.roll(verts, -1) - verts).sum()) + 2 * math.pi * pad
    step = per / max(target, 8)
    out = []
    for i in range(nv):
        a = verts[i]
        b = verts[(i + 1) % nv]
        c = verts[(i + 2) % nv]
        d = b - a
        L = abs(d)
        if L == 0:
            continue
        nrm = -1j * d / L
        m = max(2, int(math.ceil(L / step)))
        ts = (np.arange(m) + 0.5) / m
        out.append(a + ts * d + pad * nrm)
        d2 = c - b
        if abs(d2) == 0:
            continue
        n2 = -1j * d2 / abs(d2)
        a1 = np.angle(nrm)
        ext = (np.angle(n2) - a1) % (2 * math.pi)
        if ext > 1e-12:
            ma = max(1, int(math.ceil(ext * pad / step)))
            th = a1 + (np.arange(1, ma + 1) / (ma + 1)) * ext
            out.append(b + pad * np.exp(1j * th))
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# fixtures


@dataclass
class LineFixture:
    """A reference line + ball planted in one complement hole or one
    interior component, and (for holes) the Cantor block of chargeable
    cells placed near the hole's rim."""
    kind: str                 # "hole" | "interior"
    component: int
    lam: complex              # deep reference point (ball center, on the line)
    delta: float              # ball radius
    line_x: float
    line_lo: float
    line_hi: float            # full vertical extent of the line (model bounds)
    chord_lo: float
    chord_hi: float           # portion of the line inside the component
    h: float
    block_center: complex = 0j
    block_delta: float = 0.0
    block_x: np.ndarray = None   # cell origins of the charged block
    block_y: np.ndarray = None
    block_side: float = 0.0      # side of one block cell (a 4h unit)
    block_cells_across: int = 0  # block extent in grid cells
    block_depth: int = 0
    notes: tuple = ()

    def distance_to_points(self, P):
        """Distance from points to this fixture's line-union-ball."""
        P = np.asarray(P, dtype=complex)
        dx = np.abs(P.real - self.line_x)
        below = np.clip(self.line_lo - P.imag, 0.0, None)
        above = np.clip(P.imag - self.line_hi, 0.0, None)
        dline = np.hypot(dx, below + above)
        dball = np.clip(np.abs(P - self.lam) - self.delta, 0.0, None)
        return np.minimum(dline, dball)

    def distance_to_polygon(self, verts):
        a = self.line_x + 1j * self.line_lo
        b = self.line_x + 1j * self.line_hi
        nv = len(verts)
        dline = min(_seg_seg(a, b, verts[i], verts[(i + 1) % nv])
                    for i in range(nv))
        dball = max(0.0, float(_poly_dist(np.array([self.lam]), verts)[0])
                    - self.delta)
        return min(dline, dball)

    def block_area(self):
        if self.block_x is None:
            return 0.0
        return len(self.block_x) * self.block_side ** 2


def _deep_point(cmask, xs, ys):
    edt = ndimage.distance_transform_edt(cmask)
    jr, ir = np.unravel_index(int(np.argmax(edt)), edt.shape)
    return edt, jr, ir


def _chord(cmask, jr, ir, ys):
    col = cmask[:, ir]
    lo = jr
    while lo - 1 >= 0 and col[lo - 1]:
        lo -= 1
    hi = jr
    while hi + 1 < col.size and col[hi + 1]:
        hi += 1
    return ys[lo], ys[hi]


def build_fixtures(model, rho=0.75, depth=4, min_radius_cells=8):
    """Plant one fixture per complement hole and per interior component.

    Returns (fixtures, warnings).  Components whose inscribed radius is
    below ``min_radius_cells`` grid cells are skipped with a warning.
    Hole fixtures get a Cantor-product block of chargeable cells placed
    off the reference point; if no placement clears every fixture line
    the ball radius is halved once before giving up.
    """
    h = model.h
    xs, ys = _axes(model)
    x0b, y0b, x1b, y1b = model.bounds()
    comps = [("hole", m, model.complement_labels == m)
             for m in range(1, model.n_holes + 1)]
    comps += [("interior", m, model.interior_labels == m)
              for m in range(1, model.n_interior + 1)]

    fixtures, warnings, stash = [], [], {}
    used_cols = []
    for kind, m, cmask in comps:
        edt, jr, ir = _deep_point(cmask, xs, ys)
        # nudge the column if it would collide with an existing line
        best = None
        for off in (0, 8, -8, 16, -16, 24, -24):
            ic = ir + off
            if not (0 <= ic < cmask.shape[1]) or not cmask[jr, ic]:
                continue
            if any(abs(xs[ic] - c) < 6 * h for c in used_cols):
                continue
            best = ic
            break
        if best is None:
            warnings.append(f"{kind} component {m}: no collision-free line "
                            "column; skipped")
            continue
        ir = best
        R = (float(edt[jr, ir]) - 1.5) * h
        if R < min_radius_cells * h:
            warnings.append(
                f"{kind} component {m} too small for a fixture (inscribed "
                f"radius {R / h:.1f} cells < {min_radius_cells}); skipped")
            continue
        delta = min(0.275 * R, (R - 3 * h) / 2)
        if delta < 2 * h:
            warnings.append(f"{kind} component {m}: ball radius below two "
                            "cells; skipped")
            continue
        lam = complex(xs[ir], ys[jr])
        clo, chi = _chord(cmask, jr, ir, ys)
        fx = LineFixture(kind=kind, component=m, lam=lam, delta=delta,
                         line_x=float(xs[ir]), line_lo=y0b, line_hi=y1b,
                         chord_lo=clo, chord_hi=chi, h=h)
        fixtures.append(fx)
        used_cols.append(float(xs[ir]))
        stash[id(fx)] = (cmask, edt, R)

    # second pass: charged blocks in holes, clear of every fixture line
    for fx in fixtures:
        if fx.kind != "hole":
            continue
        cmask, edt, R = stash[id(fx)]
        placed, notes = _place_block(model, fx, fixtures, cmask, edt, R,
                                     rho, depth)
        if placed is None:
            # retry with a halved ball before giving up
            fx.delta = fx.delta / 2
            placed, notes2 = _place_block(model, fx, fixtures, cmask, edt, R,
                                          rho, depth)
            notes = notes + ("ball radius halved for block placement",) + notes2
            if placed is None:
                raise GeometryError(
                    f"could not place a charged block in hole "
                    f"{fx.component} at this resolution")
        fx.block_center, fx.block_delta, fx.block_x, fx.block_y, \
            fx.block_side, fx.block_cells_across, fx.block_depth = placed
        fx.notes = tuple(notes)
    return fixtures, warnings


def _cantor_units(length, ratio):
    """Member indices of a 1-D end-blocks-kept pattern on ``length``
    units: each stage keeps two end intervals (about ratio/2 of the
    length each) with at least one unit of gap, recursing until pieces
    are at most two units — so every member unit borders a gap."""
    if length <= 2:
        return list(range(length))
    keep = int(round(length * ratio / 2))
    keep = max(1, min(keep, (length - 1) // 2))
    child = _cantor_units(keep, ratio)
    return child + [length - keep + i for i in child]


def _place_block(model, fx, fixtures, cmask, edt, R, rho, depth):
    """Scan candidate centers for the hole's charged block.

    The block is a two-dimensional product of ``_cantor_units`` patterns
    in units of side 4h, snapped to the absolute 4h lattice: every unit
    cell borders a gap (so no charged subset can enclose an uncharged
    pocket) and no dyadic square with spacing >= 4h can straddle a unit.
    Returns (center, radius, cell origins x, y, cell side, cells across,
    recursion depth) or None, plus notes.
    """
    h = model.h
    h4 = 4 * h
    xs, ys = _axes(model)
    notes = []
    ny, nx = cmask.shape
    best = None
    for t_frac in (0.775, 0.7, 0.85):
        for theta in np.linspace(0.0, 2 * math.pi, 16, endpoint=False):
            c = fx.lam + t_frac * R * np.exp(1j * theta)
            ic = int(round((c.real - model.x0) / h - 0.5))
            jc = int(round((c.imag - model.y0) / h - 0.5))
            if not (0 <= ic < nx and 0 <= jc < ny) or not cmask[jc, ic]:
                continue
            c = complex(xs[ic], ys[jc])
            clear = (float(edt[jc, ic]) - 1.5) * h
            d1 = 0.425 * min(clear, abs(c - fx.lam) - 2 * fx.delta)
            if d1 < 2 * h4:
                continue
            s_k = 0.88 * math.sqrt(2.0) * d1
            # every fixture line must clear the block (allowing for unit
            # rounding and lattice snap) by at least d1
            margin = min(abs(c.real - other.line_x) - (s_k / 2 + 3 * h)
                         for other in fixtures)
            if margin < max(3 * h, d1):
                continue
            if best is None or d1 > best[1]:
                best = (c, d1)
    if best is None:
        return None, tuple(notes)
    c, d1 = best
    s_k = 0.88 * math.sqrt(2.0) * d1
    n_units = max(3, int(round(s_k / h4)))
    shrink = 1.0
    for _ in range(4):
        units = int(round(n_units * shrink))
        if units < 3:
            break
        side_len = units * h4
        ax = round((c.real - side_len / 2) / h4) * h4
        ay = round((c.imag - side_len / 2) / h4) * h4
        ox_i = int(round((ax - model.x0) / h))
        oy_i = int(round((ay - model.y0) / h))
        members = _cantor_units(units, rho)
        mem1 = np.zeros(units, dtype=bool)
        mem1[members] = True
        mem2 = np.outer(mem1, mem1)
        padded = np.pad(mem2, 1)
        if (mem2 & padded[:-2, 1:-1] & padded[2:, 1:-1]
                & padded[1:-1, :-2] & padded[1:-1, 2:]).any():
            raise InvariantError("block unit without a bordering gap")
        block_px = np.kron(mem2, np.ones((4, 4), dtype=bool))
        i0, i1 = ox_i, ox_i + 4 * units
        j0, j1 = oy_i, oy_i + 4 * units
        if (0 <= i0 and i1 <= nx and 0 <= j0 and j1 <= ny
                and cmask[j0:j1, i0:i1][block_px].all()):
            dball = d1 * shrink
            if _block_connectivity(cmask, c, dball, ox_i, oy_i, block_px,
                                   model):
                UX, UY = np.meshgrid(members, members)
                bx = ax + UX.ravel() * h4
                by = ay + UY.ravel() * h4
                return ((c, dball, bx, by, h4, 4 * units,
                         len(_cantor_stages(units, rho))), tuple(notes))
        shrink *= 0.85
        notes.append("block shrunk to stay inside its hole")
    return None, tuple(notes)


def _cantor_stages(units, ratio):
    """Lengths of the recursion stages behind ``_cantor_units``."""
    out = []
    length = units
    while length > 2:
        out.append(length)
        keep = int(round(length * ratio / 2))
        length = max(1, min(keep, (length - 1) // 2))
    return out or [units]


def _block_connectivity(cmask, c, d1, ox_i, oy_i, block_px, model):
    """The ball around the block minus the block cells must stay one
    connected region."""
    h = model.h
    xs, ys = _axes(model)
    n_px = block_px.shape[0]
    pad = int(math.ceil(d1 / h)) + 2
    i0 = max(0, ox_i - pad)
    i1 = min(cmask.shape[1], ox_i + n_px + pad)
    j0 = max(0, oy_i - pad)
    j1 = min(cmask.shape[0], oy_i + n_px + pad)
    X, Y = np.meshgrid(xs[i0:i1], ys[j0:j1])
    ball = ((X - c.real) ** 2 + (Y - c.imag) ** 2) <= d1 * d1
    ball &= cmask[j0:j1, i0:i1]
    region = ball.copy()
    region[oy_i - j0:oy_i - j0 + n_px, ox_i - i0:ox_i - i0 + n_px] &= \
        ~block_px
    _, ncomp = ndimage.label(region, structure=_FOUR)
    return ncomp == 1


# ---------------------------------------------------------------------------
# charged set


def assemble_E(model, fixtures, collar=1, probe_level=3, lp=None):
    """The charged target cells: declared fine-boundary cells (minus a
    ``collar``-cell dilation of every fixture line and ball) plus the
    fixtures' charged block cells, which avoid the fixtures by
    construction.  Returns ((sides, x, y) arrays, report)."""
    h = model.h
    xs, ys = _axes(model)
    E = model.inner_boundary_mask.copy()
    if fixtures and E.any():
        L = np.zeros_like(E)
        X, Y = np.meshgrid(xs, ys)
        for fx in fixtures:
            ic = int(round((fx.line_x - model.x0) / h - 0.5))
            L[:, ic] = True
            L |= ((X - fx.lam.real) ** 2 + (Y - fx.lam.imag) ** 2) \
                <= (fx.delta + 0.6 * h) ** 2
        L = ndimage.binary_dilation(L, structure=_EIGHT, iterations=collar)
        E &= ~L
    sides, ex, ey = [], [], []
    ox, oy = model.cell_origins(E)
    if ox.size:
        sides.append(np.full(ox.size, h))
        ex.append(ox)
        ey.append(oy)
    for fx in fixtures:
        if fx.block_x is None:
            continue
        sides.append(np.full(fx.block_x.size, fx.block_side))
        ex.append(fx.block_x)
        ey.append(fx.block_y)
    if not sides:
        raise GeometryError(
            "nothing to charge: the assembled target set is empty at this "
            "resolution")
    cells = (np.concatenate(sides), np.concatenate(ex), np.concatenate(ey))
    # retention probe: removing the collar must not wipe out the declared
    # fine boundary's capacity where both exist
    report = {"n_cells": int(cells[0].size), "collar": collar}
    inner = model.inner_boundary_mask
    if inner.any() and fixtures:
        lpo = {**LP_DEFAULTS, **(lp or {})}
        delta = 2.0 ** -probe_level
        cx = model.cell_centers(inner)
        ratios = []
        for lam in cx[:: max(1, cx.size // 3)][:3]:
            for mask, _name in ((E, "kept"), (inner, "declared")):
                ox, oy = model.cell_origins(mask)
                sel = (np.abs(ox + h / 2 - lam.real) <= delta) & \
                      (np.abs(oy + h / 2 - lam.imag) <= delta)
                if not sel.any():
                    ratios.append(0.0)
                    continue
                prob = capmod._coarsened_problem(
                    h, ox[sel], oy[sel], lpo["max_carriers"],
                    lpo["angles"], lpo["tolerance"],
                    max_rounds=lpo["max_rounds"])
                ratios.append(capmod.capacity_lower_bound(prob).certified)
        pairs = [(ratios[2 * q], ratios[2 * q + 1])
                 for q in range(len(ratios) // 2) if ratios[2 * q + 1] > 0]
        report["retention"] = min((k / d for k, d in pairs), default=None)
    else:
        report["retention"] = None
        report["retention_reason"] = ("no declared fine boundary"
                                      if not inner.any()
                                      else "no fixtures to collar away")
    return cells, report


# ---------------------------------------------------------------------------
# division points


@dataclass
class DivisionPoint:
    k: int
    fixture: int
    role: str            # "limit" | "seq" | "line"
    point: complex


def enumerate_division_points(fixtures, seq_len=4, line_points=2):
    """Division points on the fixtures, round-robin across fixtures:
    the deep point itself (limit), a dyadic sequence descending to it
    inside the ball, and dyadic-height points on the line chord outside
    the ball."""
    per_fixture = []
    for fx in fixtures:
        pts = [("limit", fx.lam)]
        for t in range(1, seq_len + 1):
            pts.append(("seq", fx.lam + 1j * fx.delta * 2.0 ** -t))
        h = fx.h
        cands = []
        room_hi = fx.chord_hi - (fx.lam.imag + fx.delta)
        room_lo = (fx.lam.imag - fx.delta) - fx.chord_lo
        for frac in (0.5, 0.25, 0.75):
            if room_hi > 6 * h:
                cands.append(fx.lam.imag + fx.delta + frac * room_hi)
            if room_lo > 6 * h:
                cands.append(fx.lam.imag - fx.delta - frac * room_lo)
        for y in cands[:line_points]:
            pts.append(("line", complex(fx.line_x, y)))
        per_fixture.append(pts)
    out = []
    k = 0
    for r in range(max((len(p) for p in per_fixture), default=0)):
        for fi, pts in enumerate(per_fixture):
            if r < len(pts):
                role, z = pts[r]
                out.append(DivisionPoint(k=k, fixture=fi, role=role,
                                         point=complex(z)))
                k += 1
    return out


# ---------------------------------------------------------------------------
# level measures


@dataclass
class LevelRecord:
    n: int
    delta: float
    M: int
    n_candidates: int
    n_dropped: int
    n_weak: int
    mass: float
    measure: PlanarMeasure
    squares: list = field(default_factory=list)
    B: float = 0.0
    A: float = 0.0
    a: float = 0.0
    d_exact: float = 0.0
    eps_target: float = 0.0
    degree: int = 0
    worst_fit: float = 0.0


def level_measure(model, E_cells, n, lp=None, cache=None,
                  keep_square_records=True):
    """Average of per-square certified unit-transform measures at dyadic
    scale 2^-n: every square whose doubled concentric square meets the
    charged set gets a capacity run on that slice; squares whose run
    does not converge are dropped (and counted), squares below the
    positivity floor tau are not charged.  ``E_cells`` is a
    (sides, x, y) triple of square charged cells."""
    h = model.h
    delta = 2.0 ** -n
    sides, ox, oy = E_cells
    if delta < 4 * h:
        raise GeometryError(
            f"level spacing {delta} is below four grid cells at h={h}; "
            "refine the grid or lower the level count")
    if delta < 2 * float(sides.max()):
        raise GeometryError(
            f"level spacing {delta} is below twice the largest charged "
            f"cell ({float(sides.max())}); lower the level count")
    lpo = {**LP_DEFAULTS, **(lp or {})}
    cache = {} if cache is None else cache
    cx = ox + sides / 2
    cy = oy + sides / 2
    buckets = {}
    for idx in range(cx.size):
        x, y = cx[idx], cy[idx]
        i0 = int(math.ceil(x / delta - 1.5))
        i1 = int(math.floor(x / delta + 0.5))
        j0 = int(math.ceil(y / delta - 1.5))
        j1 = int(math.floor(y / delta + 0.5))
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                buckets.setdefault((i, j), []).append(idx)
    kept, squares = [], []
    n_drop = n_weak = 0
    tau = lpo["tau_factor"] * delta
    for (i, j), ids in sorted(buckets.items()):
        ids = np.asarray(ids)
        key = np.sort(ids).tobytes()
        cert = cache.get(key)
        if cert is None:
            # cells of different scales never share one solver run: each
            # scale group is certified on its own and the heavier
            # certificate represents the square (still an admissible
            # competitor supported inside the slice)
            for s0 in np.unique(sides[ids]):
                sub = ids[sides[ids] == s0]
                prob = capmod._coarsened_problem(
                    float(s0), ox[sub], oy[sub], lpo["max_carriers"],
                    lpo["angles"], lpo["tolerance"],
                    max_rounds=lpo["max_rounds"])
                cand = capmod.capacity_lower_bound(prob)
                if cert is None or \
                        (cand.flag == "converged", cand.certified) > \
                        (cert.flag == "converged", cert.certified):
                    cert = cand
            cache[key] = cert
        rec = {"i": i, "j": j, "n_cells": int(ids.size),
               "certified": cert.certified,
               "mass": float(cert.measure.total_mass()),
               "flag": cert.flag, "kept": False}
        if cert.flag != "converged":
            n_drop += 1
        elif cert.certified > tau:
            rec["kept"] = True
            kept.append(cert.measure)
        else:
            n_weak += 1
        if keep_square_records:
            squares.append(rec)
    if not kept:
        return LevelRecord(n=n, delta=delta, M=0, n_candidates=len(buckets),
                           n_dropped=n_drop, n_weak=n_weak, mass=0.0,
                           measure=PlanarMeasure.empty(), squares=squares)
    total = kept[0]
    for m in kept[1:]:
        total = total + m
    eta_n = total.scaled_by(1.0 / len(kept)).consolidated()
    return LevelRecord(n=n, delta=delta, M=len(kept),
                       n_candidates=len(buckets), n_dropped=n_drop,
                       n_weak=n_weak, mass=float(eta_n.total_mass()),
                       measure=eta_n, squares=squares)


# ---------------------------------------------------------------------------
# polynomial basis (orthogonalized on the fit contours)


def _arnoldi_build(s, degree):
    """Degree-graded basis orthonormalized on the sample set by the
    Arnoldi recurrence; returns (matrix of columns, recurrence table)."""
    M = s.size
    cols = [np.ones(M, dtype=complex)]
    H = np.zeros((degree + 1, degree), dtype=complex)
    for k in range(degree):
        v = s * cols[k]
        for j in range(k + 1):
            H[j, k] = np.vdot(cols[j], v) / M
            v = v - H[j, k] * cols[j]
        hn = float(np.linalg.norm(v)) / math.sqrt(M)
        H[k + 1, k] = hn
        if hn == 0.0:
            raise SolverError("degenerate contour sample set for the "
                              "polynomial basis")
        cols.append(v / hn)
    return np.column_stack(cols), H


def _arnoldi_eval(H, z, degree=None):
    """Evaluate the basis columns at new points from the recurrence."""
    z = np.asarray(z, dtype=complex).ravel()
    d = H.shape[1] if degree is None else degree
    cols = [np.ones(z.size, dtype=complex)]
    for k in range(d):
        v = z * cols[k]
        for j in range(k + 1):
            v = v - H[j, k] * cols[j]
        cols.append(v / H[k + 1, k])
    return np.column_stack(cols)


@dataclass
class PolyRecord:
    k: int
    level: int
    degree: int
    coeffs: np.ndarray
    fit_error: float
    target: float


# ---------------------------------------------------------------------------
# artifact


@dataclass
class DivisionCertificate:
    k: int
    fixture: int
    role: str
    point: complex
    levels: list
    residuals: list
    inner_bounds: list
    bounds: list
    passed: bool
    route: str


@dataclass
class EtaArtifact:
    spec: dict
    h: float
    n_max: int
    fixtures: list
    warnings: list
    upoints: list
    levels: list
    pad: float
    d_conv: float
    eta: PlanarMeasure
    eta_mass: float
    sup_norm: float
    weights: list
    polys: dict               # (k, level) -> PolyRecord
    basis_H: np.ndarray
    residual_rows: list
    division_certs: list
    limit_reports: list
    modulus_deltas: list
    modulus_omegas: list
    retention: dict
    flags: list
    timings: dict

    def quotient_handle(self, k, level):
        """Callable z -> C(p eta)(z): the fitted polynomial-handle route
        for the difference quotient at division point k."""
        rec = self.polys[(k, level)]
        nodes, wts = self.eta.quadrature(cell_order=5)
        pv = _arnoldi_eval(self.basis_H, nodes, rec.degree) @ rec.coeffs
        pw = wts * pv

        def handle(z):
            z = np.asarray(z, dtype=complex)
            ker = 1.0 / (nodes[None, :] - z.ravel()[:, None])
            out = ker @ pw
            return out.reshape(z.shape) if z.shape else complex(out[0])

        return handle

    def weight_csv_lines(self):
        lines = ["n,delta,M,candidates,dropped,weak,mass,B,A,a,d_exact,"
                 "eps_target,degree,worst_fit"]
        for rec in self.levels:
            lines.append(",".join(_rep(v) for v in (
                rec.n, rec.delta, rec.M, rec.n_candidates, rec.n_dropped,
                rec.n_weak, rec.mass, rec.B, rec.A, rec.a, rec.d_exact,
                rec.eps_target, rec.degree, rec.worst_fit)))
        return lines

    def residual_csv_lines(self):
        lines = ["k,level,role,u_re,u_im,fit_error,eps_target,grid_sup,"
                 "inner_bound,bound,passed"]
        for row in self.residual_rows:
            lines.append(",".join(_rep(v) for v in row))
        return lines

    def square_csv_lines(self):
        lines = ["n,i,j,n_cells,certified,mass,flag,kept"]
        for rec in self.levels:
            for sq in rec.squares:
                lines.append(",".join(_rep(v) for v in (
                    rec.n, sq["i"], sq["j"], sq["n_cells"], sq["certified"],
                    sq["mass"], sq["flag"], sq["kept"])))
        return lines


# ---------------------------------------------------------------------------
# main construction


def _cluster_cells(model, E_cells):
    """Group charged cells into spatial clusters: hole cells by their
    hole, remaining cells by connected components after a generous
    dilation.  Returns (x, y, side) array triples."""
    h = model.h
    sides, ex, ey = E_cells
    ii = np.clip(((ex + sides / 2 - model.x0) / h).astype(int), 0,
                 model.mask.shape[1] - 1)
    jj = np.clip(((ey + sides / 2 - model.y0) / h).astype(int), 0,
                 model.mask.shape[0] - 1)
    labs = model.complement_labels[jj, ii]
    clusters = {}
    rest = labs <= 0
    for m in np.unique(labs[labs > 0]):
        sel = labs == m
        clusters[("hole", int(m))] = (ex[sel], ey[sel], sides[sel])
    if rest.any():
        mask = np.zeros(model.mask.shape, dtype=bool)
        mask[jj[rest], ii[rest]] = True
        grown = ndimage.binary_dilation(mask, structure=_EIGHT, iterations=3)
        lab2, ncomp = ndimage.label(grown, structure=_EIGHT)
        for q in range(1, ncomp + 1):
            sel = rest & (lab2[jj, ii] == q)
            if sel.any():
                clusters[("inner", q)] = (ex[sel], ey[sel], sides[sel])
    return list(clusters.values())


def _fixture_probe_points(fixtures, per_line=30, per_rim=12):
    pts = []
    for fx in fixtures:
        ys_line = np.linspace(fx.line_lo, fx.line_hi, per_line)
        pts.append(fx.line_x + 1j * ys_line)
        th = np.linspace(0.0, 2 * math.pi, per_rim, endpoint=False)
        pts.append(fx.lam + fx.delta * np.exp(1j * th))
        pts.append(np.array([fx.lam]))
    if not pts:
        return np.zeros(0, dtype=complex)
    return np.concatenate(pts)


def _carrier_corners(measure):
    pts = []
    for g in measure.cells:
        pts.append(g.x + 1j * g.y)
        pts.append((g.x + g.side) + 1j * g.y)
        pts.append(g.x + 1j * (g.y + g.side))
        pts.append((g.x + g.side) + 1j * (g.y + g.side))
    if not pts:
        return np.zeros(0, dtype=complex)
    return np.concatenate(pts)


def run_construction(source, h=None, n_max=6, rho=0.75, depth=4,
                     seq_len=4, line_points=2, lp=None, rng=None,
                     fit_degree_cap=200, fit_degree_step=6,
                     residual_tol=1e-3, keep_square_records=True,
                     progress=None):
    """Build the full measure artifact on a raster model (or a raw set
    spec plus grid step ``h``): fixtures, charged set, level measures,
    damped weights, polynomial handles, and residual certification.

    Raises SolverError naming the failing division point and level if
    any certified residual exceeds its ladder bound.
    """
    t_all = time.perf_counter()
    timings = {}
    model = source if isinstance(source, CompactSetModel) \
        else build_set(source, h)
    h = model.h
    rng = np.random.default_rng(7) if rng is None else rng
    say = progress if progress is not None else (lambda msg: None)

    t0 = time.perf_counter()
    fixtures, warnings = build_fixtures(model, rho=rho, depth=depth)
    E_cells, retention = assemble_E(model, fixtures, lp=lp)
    upoints = enumerate_division_points(fixtures, seq_len=seq_len,
                                        line_points=line_points)
    timings["fixtures"] = time.perf_counter() - t0
    say(f"fixtures: {len(fixtures)} placed, charged set "
        f"{E_cells[0].size} cells, {len(upoints)} division points")

    clusters = _cluster_cells(model, E_cells)
    hulls = [_hull_of_cells(cox, coy, cs) for cox, coy, cs in clusters]
    flags = []

    if fixtures:
        d_conv = min(fx.distance_to_polygon(v)
                     for fx in fixtures for v in hulls)
        if d_conv <= 4 * h:
            raise GeometryError(
                f"fixture-to-charged-set clearance {d_conv:.2e} is below "
                "four cells; the handle contours have no room")
        pad = d_conv / 2
        contour_fit = np.concatenate([_offset_contour(v, pad, 240)
                                      for v in hulls])
        contour_chk = np.concatenate([_offset_contour(v, pad / 2, 200)
                                      for v in hulls])
        U = np.array([p.point for p in upoints])
        for u in U:
            du = min(float(_poly_dist(np.array([u]), v)[0]) for v in hulls)
            if du < 2 * pad * (1 - 1e-9):
                raise InvariantError(
                    "division point inside the handle contour region")
        F_targets = 1.0 / (contour_fit[:, None] - U[None, :])
        lam_probe = _fixture_probe_points(fixtures)
    else:
        d_conv = math.inf
        pad = None
        contour_fit = contour_chk = np.zeros(0, dtype=complex)
        U = np.zeros(0, dtype=complex)
        F_targets = np.zeros((0, 0), dtype=complex)
        lam_probe = np.zeros(0, dtype=complex)
        flags.append("no-fixtures: ladder and handles skipped")

    lp_cache = {}
    levels = []
    xi = PlanarMeasure.empty()
    xi_mass = 0.0
    polys = {}
    basis_H = None
    basis_Q = None
    degree = 0
    committed = []      # (k, level) keys in commit order

    for n in range(1, n_max + 1):
        t0 = time.perf_counter()
        rec = level_measure(model, E_cells, n, lp=lp, cache=lp_cache,
                            keep_square_records=keep_square_records)
        if rec.M == 0:
            raise SolverError(
                f"level {n}: no dyadic square held a certified positive "
                "capacity bound on the charged set")
        eta_n = rec.measure
        nodes_n, wts_n = eta_n.quadrature(cell_order=5)
        timings[f"level{n}_lp"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        if fixtures:
            # B_n: carrier-mass potential plus difference-quotient sup over
            # the fixtures, closed-form transform route
            C_chk = eta_n.transform(contour_chk)
            sup_chk = float(np.abs(C_chk).max())
            C_lam = eta_n.transform(lam_probe)
            near = np.abs(1.0 / (nodes_n[None, :] - lam_probe[:, None])) \
                @ np.abs(wts_n)
            with np.errstate(divide="ignore", invalid="ignore"):
                Q = (C_chk[None, :] - C_lam[:, None]) / \
                    (contour_chk[None, :] - lam_probe[:, None])
            Q = np.where(np.isfinite(Q), Q, 0.0)
            dist_in = np.array([
                max(min(float(_poly_dist(np.array([lm]), v)[0])
                        for v in hulls) - pad / 2, pad / 2)
                for lm in lam_probe])
            inner_cap = (1.02 + np.abs(C_lam)) / dist_in
            B_n = float((near + np.maximum(np.abs(Q).max(axis=1),
                                           inner_cap)).max())
            # A_n: worst committed handle defect against this level measure
            A_n = 0.0
            if committed:
                W_nodes = _arnoldi_eval(basis_H, nodes_n, degree)
                Cmat = np.zeros((len(committed), degree + 1), dtype=complex)
                fit_eps = np.empty(len(committed))
                Uc = np.empty(len(committed), dtype=complex)
                for r, key in enumerate(committed):
                    pr = polys[key]
                    Cmat[r, :pr.degree + 1] = pr.coeffs
                    fit_eps[r] = pr.fit_error
                    Uc[r] = next(p.point for p in upoints if p.k == key[0])
                pv = Cmat @ W_nodes.T
                gv = pv - 1.0 / (nodes_n[None, :] - Uc[:, None])
                fields = (gv * wts_n[None, :]) @ \
                    (1.0 / (nodes_n[:, None] - contour_chk[None, :]))
                contour_sup = np.abs(fields).max(axis=1)
                inner_sup = fit_eps * (sup_chk + 1.02) + \
                    2 * fit_eps * rec.mass / pad
                A_n = float(np.maximum(contour_sup, inner_sup).max())
        else:
            B_n = 0.0
            A_n = 0.0
        a_candidates = [2.0 ** -n]
        if B_n > 0:
            a_candidates.append(1.0 / (2.0 ** n * B_n))
        if A_n > 0:
            a_candidates.append(1.0 / (2.0 ** n * A_n))
        a_n = min(a_candidates)
        if n == 1:
            a_n = min(0.5, a_n if B_n > 0 else 0.5)
        xi = (xi + eta_n.scaled_by(a_n)).consolidated()
        xi_mass += a_n * rec.mass
        rec.B, rec.A, rec.a = B_n, A_n, a_n

        if fixtures:
            corners = _carrier_corners(xi)
            rec.d_exact = float(min(fx.distance_to_points(corners).min()
                                    for fx in fixtures))
            # fit this level's handles for every division point
            eps_n = 2.0 ** -n / (2 * xi_mass / pad + 1.0)
            deg = max(degree, 6)
            while True:
                if basis_H is None or deg > degree:
                    basis_Q, basis_H = _arnoldi_build(contour_fit, deg)
                    degree = deg
                sol, *_ = np.linalg.lstsq(basis_Q, F_targets, rcond=None)
                errs = np.abs(basis_Q @ sol - F_targets).max(axis=0)
                if float(errs.max()) <= eps_n:
                    break
                if deg >= fit_degree_cap:
                    raise SolverError(
                        "Runge target unreachable at resolution "
                        f"(degree {deg}, worst fit {errs.max():.3e} > "
                        f"{eps_n:.3e} at level {n})")
                deg = min(fit_degree_cap, deg + fit_degree_step)
            for p in upoints:
                polys[(p.k, n)] = PolyRecord(
                    k=p.k, level=n, degree=degree,
                    coeffs=sol[:, p.k].copy(),
                    fit_error=float(errs[p.k]), target=eps_n)
                committed.append((p.k, n))
            rec.eps_target = eps_n
            rec.degree = degree
            rec.worst_fit = float(errs.max())
        timings[f"level{n}_weights"] = time.perf_counter() - t0
        levels.append(rec)
        say(f"level {n}: M={rec.M} squares (dropped {rec.n_dropped}, "
            f"weak {rec.n_weak}), mass {rec.mass:.3e}, B={rec.B:.3g}, "
            f"A={rec.A:.3g}, a={rec.a:.3e}, degree {rec.degree}")

    eta = xi.consolidated()
    # carrier soundness: nothing lands in the unbounded complement
    # component or in the interior
    ii = np.concatenate([np.round((g.x - model.x0) / h).astype(int) +
                         int(round(g.side / h)) // 2 for g in eta.cells])
    jj = np.concatenate([np.round((g.y - model.y0) / h).astype(int) +
                         int(round(g.side / h)) // 2 for g in eta.cells])
    labs = model.complement_labels[jj, ii]
    if (labs == 0).any():
        raise InvariantError("carrier landed in the unbounded complement")
    if model.interior_mask[jj, ii].any():
        raise InvariantError("carrier landed in the interior")

    t0 = time.perf_counter()
    sup_norm = capmod.measure_sup_norm(eta)
    if sup_norm > 1.0 + 1e-6:
        flags.append(f"sup-exceeds-one: {sup_norm!r}")
    bx0, by0, bx1, by1 = eta.bbox()
    mod = modulus_of_continuity(
        eta.transform, (bx0 - 0.1, by0 - 0.1, bx1 + 0.1, by1 + 0.1),
        [32 * h, 16 * h, 8 * h], rng, n_pairs=2000,
        handle_id="eta-transform")
    timings["supnorm"] = time.perf_counter() - t0
    say(f"final measure: {eta.carrier_count()} carriers, mass "
        f"{float(eta.total_mass()):.3e}, sup|C| = {sup_norm:.6f}")

    residual_rows, certs, limit_reports = [], [], []
    if fixtures:
        t0 = time.perf_counter()
        residual_rows, certs, limit_reports = _division_residuals(
            model, eta, upoints, fixtures, polys, basis_H, degree, hulls,
            pad, contour_chk, rng, residual_tol)
        timings["residuals"] = time.perf_counter() - t0
        worst = max((r[7] for r in residual_rows), default=0.0)
        say(f"division residuals: {len(residual_rows)} pairs, worst "
            f"grid sup {worst:.3e}")

    timings["total"] = time.perf_counter() - t_all
    return EtaArtifact(
        spec=model.spec, h=h, n_max=n_max, fixtures=fixtures,
        warnings=warnings, upoints=upoints, levels=levels,
        pad=pad if pad is not None else 0.0,
        d_conv=d_conv if math.isfinite(d_conv) else 0.0,
        eta=eta, eta_mass=float(eta.total_mass()), sup_norm=sup_norm,
        weights=[rec.a for rec in levels], polys=polys,
        basis_H=basis_H if basis_H is not None
        else np.zeros((1, 0), dtype=complex),
        residual_rows=residual_rows, division_certs=certs,
        limit_reports=limit_reports,
        modulus_deltas=mod.deltas, modulus_omegas=mod.omegas,
        retention=retention, flags=flags, timings=timings)


def _division_residuals(model, eta, upoints, fixtures, polys, H, degree,
                        hulls, pad, contour_chk, rng, tol):
    """Certify every (division point, level) handle: node-quadrature
    field of the handle measure against the closed-form difference
    quotient of the total transform, sup over a validation grid that
    dominates the whole plane by the maximum principle.  Raises
    SolverError naming the first failing pair."""
    h = model.h
    extra = []
    centers = model.cell_centers()
    hull_ctr = [v.mean() for v in hulls]
    hull_rad = [float(np.abs(v - c).max()) for v, c in zip(hulls, hull_ctr)]
    for c, r in zip(hull_ctr, hull_rad):
        near = centers[np.abs(centers - c) <= r + 0.15]
        if near.size > 700:
            near = near[rng.choice(near.size, 700, replace=False)]
        extra.append(near)
    if centers.size:
        take = min(800, centers.size)
        extra.append(centers[rng.choice(centers.size, take, replace=False)])
    extra = np.unique(np.concatenate(extra)) if extra \
        else np.zeros(0, dtype=complex)
    # keep the quadrature route accurate on the spot checks: drop extra
    # points hugging a carrier (the offset contour, which anchors the
    # maximum principle, is never filtered — its clearance is structural)
    if extra.size:
        carrier_pts = np.concatenate([g.centers() for g in eta.cells])
        max_side = max(g.side for g in eta.cells)
        tree = cKDTree(np.c_[carrier_pts.real, carrier_pts.imag])
        dmin, _ = tree.query(np.c_[extra.real, extra.imag])
        extra = extra[dmin >= 4 * max_side]
    grid = np.unique(np.concatenate([contour_chk, extra]))

    nodes, wts = eta.quadrature(cell_order=5)
    Cg = eta.transform(grid)
    U = np.array([p.point for p in upoints])
    Cu = eta.transform(U)
    with np.errstate(divide="ignore", invalid="ignore"):
        Qmat = (Cg[None, :] - Cu[:, None]) / (grid[None, :] - U[:, None])
    Qmat = np.where(np.isfinite(Qmat), Qmat, 0.0)

    pairs = sorted(polys.keys())
    W_nodes = _arnoldi_eval(H, nodes, degree)
    Cmat = np.zeros((len(pairs), degree + 1), dtype=complex)
    for r, key in enumerate(pairs):
        pr = polys[key]
        Cmat[r, :pr.degree + 1] = pr.coeffs
    PV = (Cmat @ W_nodes.T) * wts[None, :]
    sup_eta = 1.02  # per-square certificates are unit-normalized
    mass = float(eta.total_mass())

    res = np.zeros((len(pairs), grid.size))
    chunk = 256
    krow = np.array([key[0] for key in pairs])
    for lo in range(0, grid.size, chunk):
        seg = grid[lo:lo + chunk]
        ker = 1.0 / (nodes[:, None] - seg[None, :])
        fields = PV @ ker
        res[:, lo:lo + chunk] = np.abs(fields - Qmat[krow, lo:lo + chunk])
    grid_sup = res.max(axis=1)

    rows = []
    by_k = {}
    for r, (k, l) in enumerate(pairs):
        pr = polys[(k, l)]
        p = upoints[k]
        inner = pr.fit_error * sup_eta + 2 * pr.fit_error * mass / pad
        bound = 2.0 ** (1 - l)
        passed = bool(grid_sup[r] <= bound + tol)
        rows.append((k, l, p.role, p.point.real, p.point.imag,
                     pr.fit_error, pr.target, float(grid_sup[r]),
                     float(inner), bound, passed))
        by_k.setdefault(k, []).append((l, float(grid_sup[r]), float(inner),
                                       bound, passed))
        if not passed:
            raise SolverError(
                f"division residual {grid_sup[r]:.3e} exceeds its bound "
                f"{bound + tol:.3e} at division point {k} "
                f"(role {p.role}), level {l}; artifact rejected")
    certs = []
    for p in upoints:
        data = sorted(by_k.get(p.k, []))
        certs.append(DivisionCertificate(
            k=p.k, fixture=p.fixture, role=p.role, point=p.point,
            levels=[d[0] for d in data],
            residuals=[d[1] for d in data],
            inner_bounds=[d[2] for d in data],
            bounds=[d[3] for d in data],
            passed=all(d[4] for d in data),
            route="polynomial-handle"))
    # limit reports: the difference quotients along each fixture's dyadic
    # sequence converge to the deep point's quotient (Cauchy check over the
    # nearest points)
    limit_reports = []
    for fi, fx in enumerate(fixtures):
        lim = [p for p in upoints if p.fixture == fi and p.role == "limit"]
        seq = sorted((p for p in upoints
                      if p.fixture == fi and p.role == "seq"),
                     key=lambda p: -abs(p.point - fx.lam))
        if not lim or len(seq) < 2:
            continue
        qlim = Qmat[lim[0].k]
        diffs = [float(np.abs(Qmat[p.k] - qlim).max()) for p in seq]
        ok = all(diffs[t + 1] <= 1.05 * diffs[t]
                 for t in range(len(diffs) - 1)) \
            and diffs[-1] <= 0.6 * diffs[0] + 1e-12
        limit_reports.append({"fixture": fi, "diffs": diffs, "passed": ok})
    return rows, certs, limit_reports


# ---------------------------------------------------------------------------
# assumption checks


def check_assumptions(artifact, model=None, c_points=None, c_deltas=None,
                      c_samples=4, lp=None, eq17_probes=2, rng=None):
    """Structural checks on a finished artifact.

    A: every interior component holds a fixture ball of positive pixel
       area with at least one certified division point in it.
    B: every hole is charged; the hole minus the carriers stays
       connected; the charged part is riddled with gaps (bounded
       uncharged-distance inside every block); the dyadic division
       sequence converges.
    C: at sampled declared fine-boundary points (or caller-supplied
       probe points), the certified capacity of the fixture-and-hole
       material in shrinking balls stays proportional to the radius;
       vacuously passes, flagged, when no such points exist.
    Eq ratio probes: small-ball comparability of the three capacity
       quantities at boundary points, report-only.
    """
    if model is None:
        if artifact.spec is None:
            raise GeometryError("need the raster model (or a spec on the "
                                "artifact) to check assumptions")
        model = build_set(artifact.spec, artifact.h)
    h = model.h
    rng = np.random.default_rng(11) if rng is None else rng
    lpo = {**LP_DEFAULTS, **(lp or {})}
    eta = artifact.eta
    xs, ys = _axes(model)

    carrier_px = np.zeros_like(model.mask)
    for g in eta.cells:
        m = int(round(g.side / h))
        i0 = np.round((g.x - model.x0) / h).astype(int)
        j0 = np.round((g.y - model.y0) / h).astype(int)
        for di in range(m):
            for dj in range(m):
                carrier_px[j0 + dj, i0 + di] = True

    # --- A: interior contact ------------------------------------------------
    a_items = []
    for m in range(1, model.n_interior + 1):
        fi = next((i for i, fx in enumerate(artifact.fixtures)
                   if fx.kind == "interior" and fx.component == m), None)
        if fi is None:
            a_items.append({"component": m, "passed": False,
                            "reason": "no fixture placed"})
            continue
        fx = artifact.fixtures[fi]
        X, Y = np.meshgrid(xs, ys)
        ball = ((X - fx.lam.real) ** 2 + (Y - fx.lam.imag) ** 2) \
            <= fx.delta ** 2
        area_px = int((ball & (model.interior_labels == m)).sum())
        certs = [c for c in artifact.division_certs
                 if c.fixture == fi and c.passed]
        a_items.append({"component": m, "ball_area": area_px * h * h,
                        "certified_points": len(certs),
                        "passed": area_px > 0 and len(certs) > 0})
    a_pass = all(item["passed"] for item in a_items) if a_items else True
    a_report = {"items": a_items, "passed": a_pass,
                "vacuous": not a_items}

    # --- B: hole contact ----------------------------------------------------
    b_items = []
    seq_by_fixture = {r["fixture"]: r for r in artifact.limit_reports}
    for m in range(1, model.n_holes + 1):
        hole = model.complement_labels == m
        charged = carrier_px & hole
        item = {"component": m, "charged_cells": int(charged.sum())}
        if not charged.any():
            item.update(passed=False, reason="hole never charged")
            b_items.append(item)
            continue
        _, ncomp = ndimage.label(hole & ~charged, structure=_FOUR)
        item["complement_components"] = int(ncomp)
        gap = float(ndimage.distance_transform_edt(charged).max())
        fi = next((i for i, fx in enumerate(artifact.fixtures)
                   if fx.kind == "hole" and fx.component == m), None)
        across = artifact.fixtures[fi].block_cells_across if fi is not None \
            else 0
        item["max_solid_radius_cells"] = gap
        # a solid run of two block units (eight grid cells) is the widest
        # uninterrupted charge the layout permits
        item["gap_bound_cells"] = max(4.0, across / 4.0)
        seq_ok = True
        if fi is not None and fi in seq_by_fixture:
            item["sequence_diffs"] = seq_by_fixture[fi]["diffs"]
            seq_ok = seq_by_fixture[fi]["passed"]
        item["passed"] = bool(ncomp == 1 and gap <= item["gap_bound_cells"]
                              and seq_ok)
        b_items.append(item)
    b_pass = all(item["passed"] for item in b_items) if b_items else True
    b_report = {"items": b_items, "passed": b_pass,
                "vacuous": not b_items}

    # --- C: fine-boundary capacity floor -------------------------------------
    target = np.zeros_like(model.mask)
    target |= model.complement_labels > 0
    X, Y = np.meshgrid(xs, ys)
    for fx in artifact.fixtures:
        ic = int(round((fx.line_x - model.x0) / h - 0.5))
        target[:, ic] = True
        target |= ((X - fx.lam.real) ** 2 + (Y - fx.lam.imag) ** 2) \
            <= fx.delta ** 2
    if c_points is None:
        inner = model.cell_centers(model.inner_boundary_mask)
        if inner.size:
            step = max(1, inner.size // c_samples)
            c_points = list(inner[::step][:c_samples])
        else:
            c_points = []
    if c_deltas is None:
        c_deltas = [16 * h, 32 * h, 64 * h]
    tx, ty = model.cell_origins(target)
    c_items = []
    for lam in c_points:
        lam = complex(lam)
        per = {"point": lam, "ratios": []}
        for dl in c_deltas:
            sel = np.abs((tx + h / 2 - lam.real) +
                         1j * (ty + h / 2 - lam.imag)) <= dl
            if not sel.any():
                per["ratios"].append(0.0)
                continue
            prob = capmod._coarsened_problem(
                h, tx[sel], ty[sel], 120, lpo["angles"], lpo["tolerance"],
                max_rounds=lpo["max_rounds"])
            cert = capmod.capacity_lower_bound(prob)
            per["ratios"].append(cert.certified / dl)
        per["floor"] = min(per["ratios"]) if per["ratios"] else 0.0
        c_items.append(per)
    if c_items:
        c_floor = min(item["floor"] for item in c_items)
        c_report = {"items": c_items, "floor": c_floor,
                    "passed": c_floor > 0.0, "vacuous": False}
    else:
        c_report = {"items": [], "floor": math.inf, "passed": True,
                    "vacuous": True,
                    "reason": "no declared fine-boundary points"}

    # --- small-ball comparability probes (report only) -----------------------
    probes = []
    if eq17_probes and eta.cells:
        eta_px = _pixel_split(eta, h)
        bcells = model.cell_centers(model.boundary_mask)
        if bcells.size:
            step = max(1, bcells.size // eq17_probes)
            for lam in bcells[::step][:eq17_probes]:
                probes.append(capmod.comparability_probe(
                    model, eta_px, complex(lam), 32 * h, k=3.0,
                    angles=lpo["angles"], tolerance=lpo["tolerance"],
                    max_carriers=140))

    return {"A": a_report, "B": b_report, "C": c_report,
            "eq_ratio_probes": probes,
            "all_pass": a_pass and b_pass and c_report["passed"]}


def _pixel_split(measure, h):
    """Rewrite a cell measure on sides {h, 2h, 4h, ...} as the identical
    measure on side-h cells (uniform densities split exactly)."""
    xs, ys, ws = [], [], []
    for g in measure.cells:
        m = int(round(g.side / h))
        if m == 1:
            xs.append(g.x)
            ys.append(g.y)
            ws.append(g.w.real)
            continue
        off = np.arange(m) * h
        OX, OY = np.meshgrid(off, off)
        for x, y, w in zip(g.x, g.y, g.w):
            xs.append(x + OX.ravel())
            ys.append(y + OY.ravel())
            ws.append(np.full(m * m, w.real))
    return PlanarMeasure.from_cells(h, np.concatenate(xs),
                                    np.concatenate(ys),
                                    np.concatenate(ws))


# ---------------------------------------------------------------------------
# persistence


def _rep(v):
    """repr for CSV fields; unwraps numpy scalars so the text is the
    plain shortest round-trip float form."""
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    return repr(v)


def _c2l(z):
    z = complex(z)
    return [z.real, z.imag]


def save_artifact(artifact, path):
    """Write a construction artifact to a directory: manifest, fixture
    table, division points, carrier tables (total and per level),
    per-square certificates, polynomial handles, and residual ledger."""
    os.makedirs(path, exist_ok=True)
    man = {
        "h": artifact.h, "n_max": artifact.n_max, "spec": artifact.spec,
        "pad": artifact.pad, "d_conv": artifact.d_conv,
        "eta_mass": artifact.eta_mass, "sup_norm": artifact.sup_norm,
        "weights": artifact.weights, "flags": artifact.flags,
        "warnings": artifact.warnings,
        "modulus_deltas": artifact.modulus_deltas,
        "modulus_omegas": artifact.modulus_omegas,
        "retention": artifact.retention,
        "levels": [{
            "n": r.n, "delta": r.delta, "M": r.M,
            "candidates": r.n_candidates, "dropped": r.n_dropped,
            "weak": r.n_weak, "mass": r.mass, "B": r.B, "A": r.A,
            "a": r.a, "d_exact": r.d_exact, "eps_target": r.eps_target,
            "degree": r.degree, "worst_fit": r.worst_fit,
        } for r in artifact.levels],
        "limit_reports": artifact.limit_reports,
    }
    with open(os.path.join(path, "manifest.json"), "w") as f:
        json.dump(man, f, indent=1, sort_keys=True)
    # wall-clock data is volatile by nature, so it lives outside the
    # deterministic manifest
    with open(os.path.join(path, "timings.json"), "w") as f:
        json.dump(artifact.timings, f, indent=1, sort_keys=True)
    fx_rows = []
    for fx in artifact.fixtures:
        fx_rows.append({
            "kind": fx.kind, "component": fx.component, "lam": _c2l(fx.lam),
            "delta": fx.delta, "line_x": fx.line_x,
            "line_lo": fx.line_lo, "line_hi": fx.line_hi,
            "chord_lo": fx.chord_lo, "chord_hi": fx.chord_hi, "h": fx.h,
            "block_center": _c2l(fx.block_center),
            "block_delta": fx.block_delta,
            "block_x": list(map(float, fx.block_x))
            if fx.block_x is not None else None,
            "block_y": list(map(float, fx.block_y))
            if fx.block_y is not None else None,
            "block_side": fx.block_side,
            "block_cells_across": fx.block_cells_across,
            "block_depth": fx.block_depth, "notes": list(fx.notes)})
    with open(os.path.join(path, "fixtures.json"), "w") as f:
        json.dump(fx_rows, f, indent=1, sort_keys=True)
    with open(os.path.join(path, "upoints.csv"), "w") as f:
        f.write("k,fixture,role,re,im\n")
        for p in artifact.upoints:
            f.write(f"{p.k},{p.fixture},{p.role},{p.point.real!r},"
                    f"{p.point.imag!r}\n")
    _write_cells_csv(os.path.join(path, "eta_cells.csv"), artifact.eta)
    for rec in artifact.levels:
        _write_cells_csv(os.path.join(path, f"level_{rec.n}_cells.csv"),
                         rec.measure)
    with open(os.path.join(path, "squares.csv"), "w") as f:
        f.write("\n".join(artifact.square_csv_lines()) + "\n")
    with open(os.path.join(path, "weights.csv"), "w") as f:
        f.write("\n".join(artifact.weight_csv_lines()) + "\n")
    with open(os.path.join(path, "residuals.csv"), "w") as f:
        f.write("\n".join(artifact.residual_csv_lines()) + "\n")
    pol = {
        "H": [[_c2l(v) for v in row] for row in artifact.basis_H],
        "records": [{
            "k": pr.k, "level": pr.level, "degree": pr.degree,
            "fit_error": pr.fit_error, "target": pr.target,
            "coeffs": [_c2l(v) for v in pr.coeffs],
        } for _, pr in sorted(artifact.polys.items())],
    }
    with open(os.path.join(path, "polys.json"), "w") as f:
        json.dump(pol, f, sort_keys=True)


def _write_cells_csv(fname, measure):
    with open(fname, "w") as f:
        f.write("side,x,y,w\n")
        for g in measure.cells:
            for x, y, w in zip(g.x, g.y, g.w):
                f.write(f"{_rep(g.side)},{_rep(x)},{_rep(y)},"
                        f"{_rep(w.real)}\n")


def _read_cells_csv(fname):
    groups = {}
    with open(fname) as f:
        next(f)
        for line in f:
            s, x, y, w = line.strip().split(",")
            groups.setdefault(float(s), []).append(
                (float(x), float(y), float(w)))
    total = None
    for side in sorted(groups):
        rows = np.asarray(groups[side])
        m = PlanarMeasure.from_cells(side, rows[:, 0], rows[:, 1],
                                     rows[:, 2])
        total = m if total is None else total + m
    return total if total is not None else PlanarMeasure.empty()


def load_artifact(path):
    """Rebuild an artifact from ``save_artifact`` output (square records
    are left in CSV form; everything the checks need is restored)."""
    with open(os.path.join(path, "manifest.json")) as f:
        man = json.load(f)
    timings = {}
    tpath = os.path.join(path, "timings.json")
    if os.path.exists(tpath):
        with open(tpath) as f:
            timings = json.load(f)
    with open(os.path.join(path, "fixtures.json")) as f:
        fx_rows = json.load(f)
    fixtures = []
    for r in fx_rows:
        fixtures.append(LineFixture(
            kind=r["kind"], component=r["component"],
            lam=complex(*r["lam"]), delta=r["delta"], line_x=r["line_x"],
            line_lo=r["line_lo"], line_hi=r["line_hi"],
            chord_lo=r["chord_lo"], chord_hi=r["chord_hi"], h=r["h"],
            block_center=complex(*r["block_center"]),
            block_delta=r["block_delta"],
            block_x=np.asarray(r["block_x"]) if r["block_x"] else None,
            block_y=np.asarray(r["block_y"]) if r["block_y"] else None,
            block_side=r.get("block_side", 0.0),
            block_cells_across=r["block_cells_across"],
            block_depth=r["block_depth"], notes=tuple(r["notes"])))
    upoints = []
    with open(os.path.join(path, "upoints.csv")) as f:
        next(f)
        for line in f:
            k, fi, role, re_, im_ = line.strip().split(",")
            upoints.append(DivisionPoint(k=int(k), fixture=int(fi),
                                         role=role,
                                         point=complex(float(re_),
                                                       float(im_))))
    eta = _read_cells_csv(os.path.join(path, "eta_cells.csv"))
    levels = []
    for lr in man["levels"]:
        meas = _read_cells_csv(
            os.path.join(path, f"level_{lr['n']}_cells.csv"))
        levels.append(LevelRecord(
            n=lr["n"], delta=lr["delta"], M=lr["M"],
            n_candidates=lr["candidates"], n_dropped=lr["dropped"],
            n_weak=lr["weak"], mass=lr["mass"], measure=meas,
            B=lr["B"], A=lr["A"], a=lr["a"], d_exact=lr["d_exact"],
            eps_target=lr["eps_target"], degree=lr["degree"],
            worst_fit=lr["worst_fit"]))
    with open(os.path.join(path, "polys.json")) as f:
        pol = json.load(f)
    H = np.array([[complex(*v) for v in row] for row in pol["H"]],
                 dtype=complex) if pol["H"] else np.zeros((1, 0), complex)
    polys = {}
    for r in pol["records"]:
        polys[(r["k"], r["level"])] = PolyRecord(
            k=r["k"], level=r["level"], degree=r["degree"],
            coeffs=np.array([complex(*v) for v in r["coeffs"]]),
            fit_error=r["fit_error"], target=r["target"])
    residual_rows = []
    with open(os.path.join(path, "residuals.csv")) as f:
        next(f)
        for line in f:
            k, l, role, ure, uim, fe, tg, gs, ib, bd, ps = \
                line.strip().split(",")
            residual_rows.append((int(k), int(l), role, float(ure),
                                  float(uim), float(fe), float(tg),
                                  float(gs), float(ib), float(bd),
                                  ps == "True"))
    by_k = {}
    for row in residual_rows:
        by_k.setdefault(row[0], []).append(row)
    certs = []
    for p in upoints:
        data = sorted(by_k.get(p.k, []), key=lambda r: r[1])
        certs.append(DivisionCertificate(
            k=p.k, fixture=p.fixture, role=p.role, point=p.point,
            levels=[r[1] for r in data], residuals=[r[7] for r in data],
            inner_bounds=[r[8] for r in data], bounds=[r[9] for r in data],
            passed=all(r[10] for r in data), route="polynomial-handle"))
    return EtaArtifact(
        spec=man["spec"], h=man["h"], n_max=man["n_max"],
        fixtures=fixtures, warnings=man["warnings"], upoints=upoints,
        levels=levels, pad=man["pad"], d_conv=man["d_conv"], eta=eta,
        eta_mass=man["eta_mass"], sup_norm=man["sup_norm"],
        weights=man["weights"], polys=polys, basis_H=H,
        residual_rows=residual_rows, division_certs=certs,
        limit_reports=man["limit_reports"],
        modulus_deltas=man["modulus_deltas"],
        modulus_omegas=man["modulus_omegas"],
        retention=man["retention"], flags=man["flags"],
        timings=timings)
