"""Localization pieces, Laurent matching, and the coefficient-matching
approximation scheme.

A field F continuous on the plane and vanishing at infinity is split over a
dyadic frame into pieces

    f_ij(lam) = (1/pi) integral (F(z) - F(lam))/(z - lam) dbar(phi_ij)(z) dA

each analytic wherever F is and outside the double square of (i, j), with
F = sum f_ij.  Using the Pompeiu identity phi(lam) = -(1/pi) integral
dbar(phi)/(z - lam) dA the piece splits as

    f_ij(lam) = C(nu_ij)(lam) + F(lam) phi_ij(lam),
    nu_ij = (1/pi) F dbar(phi_ij) dA,

so a piece is represented by quadrature nodes and coefficients of the fixed
complex measure nu_ij: evaluable at arbitrary points, with the Laurent
coefficients at infinity available exactly from node moments.

Each piece is then replaced by a scaled building block (a transform of a
certified measure carried by the complement of the target set, or by a
restriction of a reference measure) matching its residue c1, and complete
groups of squares along a row get a two-block correction matching the next
coefficient c2 without disturbing c1.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .carriers import PlanarMeasure
from .errors import GeometryError, SolverError
from .geometry import DyadicFrame, modulus_of_continuity, window, window_deriv
from . import capacity as _cap

__all__ = [
    "LocalPiece", "BuildingBlock", "GroupCorrection", "SchemeReport",
    "localize", "laurent_coeffs", "measure_c1c2", "make_blocks",
    "group_rows", "run_scheme",
]


# ---------------------------------------------------------------------------
# frame quadrature: panels aligned with the window breakpoints


def _axis_panels(frame, lo_cell, hi_cell, order):
    """Gauss-Legendre nodes/weights on [lo_cell, hi_cell+1] cells, with three
    panels per cell split at the window transition breakpoints."""
    d = frame.delta
    s = frame.s
    gx, gw = np.polynomial.legendre.leggauss(order)
    # every window transition hits a cell at offsets s and 1-s from the cell
    # start, so windows restrict to polynomials on each panel
    offs = np.array([0.0, s, 1.0 - s, 1.0])
    nodes, wts = [], []
    for c in range(lo_cell, hi_cell + 1):
        for p in range(3):
            a = (c + offs[p]) * d
            b = (c + offs[p + 1]) * d
            if b <= a:
                continue
            nodes.append((a + b) / 2 + (b - a) / 2 * gx)
            wts.append((b - a) / 2 * gw)
    return np.concatenate(nodes), np.concatenate(wts)


def _window_tables(frame, axis_nodes, idx_lo, idx_hi):
    """W_i and W_i' / delta at the axis nodes for i in [idx_lo, idx_hi]."""
    d = frame.delta
    n = idx_hi - idx_lo + 1
    W = np.empty((n, axis_nodes.size))
    D = np.empty((n, axis_nodes.size))
    for r, i in enumerate(range(idx_lo, idx_hi + 1)):
        t = axis_nodes / d - (i + 0.5)
        W[r] = window(t, frame.s)
        D[r] = window_deriv(t, frame.s) / d
    return W, D


# ---------------------------------------------------------------------------
# local pieces


@dataclass
class LocalPiece:
    """One localized piece: discrete-measure representation plus the F*phi
    near-field term."""
    i: int
    j: int
    center: complex
    nodes: np.ndarray          # quadrature nodes carrying nu_ij
    coeffs: np.ndarray         # nu weights: w_q F(z_q) dbar(phi)(z_q) / pi
    coeffs0: np.ndarray        # the same without the F factor
    c1: complex                # (1/2 pi i) contour integral = -sum(coeffs)
    c2: complex                # next coefficient about `center`
    sup_estimate: float
    _F: object = field(repr=False, default=None)

    def evaluate(self, z):
        """Evaluate through the subtracted form

            f(lam) = sum_q w_q (F(z_q) - F(lam)) dbar(phi)(z_q)/pi / (z_q-lam)

        whose integrand is analytic in z wherever F is analytic near lam, so
        accuracy does not degrade next to the piece's own node ring (the
        F(lam)*phi(lam) near-field term is folded in through the discrete
        Pompeiu identity sum coeffs0/(z_q-lam) ~= -phi(lam))."""
        z = np.asarray(z, dtype=complex)
        flat = z.ravel()
        Fz = np.asarray(self._F(flat), dtype=complex)
        out = np.empty(flat.shape, dtype=complex)
        block = max(1, int(2e6 / max(self.nodes.size, 1)))
        for lo in range(0, flat.size, block):
            seg = flat[lo:lo + block]
            with np.errstate(divide="ignore", invalid="ignore"):
                kern = 1.0 / (self.nodes[None, :] - seg[:, None])
                out[lo:lo + block] = kern @ self.coeffs \
                    - Fz[lo:lo + block] * (kern @ self.coeffs0)
        # a query landing exactly on a quadrature node (dyadic grids can
        # collide) gets nudged off it; the true value there is finite
        bad = ~np.isfinite(out)
        if np.any(bad):
            eps = 1e-7 * float(np.max(np.abs(self.nodes - self.center))) * (1 + 1j)
            out[bad] = self.evaluate(flat[bad] + eps)
        return out.reshape(z.shape)


def localize(F, frame, order=5, drop_tol=1e-10, hint=None):
    """Split F over the frame.  Returns (pieces, stats).

    F must accept complex arrays.  Squares are screened by the exact moment
    identities: a square where F is analytic on the closed double square has
    every piece coefficient equal to zero, so |c1| + |c2|/delta below
    drop_tol * scale drops the square (drop_tol=None keeps everything).
    ``hint``, a bounds tuple (x0, y0, x1, y1), restricts the computation to
    squares whose double square meets it — the caller asserts F is analytic
    elsewhere.
    """
    d = frame.delta
    i0, i1 = frame.i_range
    j0, j1 = frame.j_range
    if hint is not None:
        hx0, hy0, hx1, hy1 = hint
        i0 = max(i0, int(math.floor(hx0 / d)) - 1)
        i1 = min(i1, int(math.ceil(hx1 / d)) + 1)
        j0 = max(j0, int(math.floor(hy0 / d)) - 1)
        j1 = min(j1, int(math.ceil(hy1 / d)) + 1)
        if i1 < i0 or j1 < j0:
            return [], {"n_squares": 0, "n_kept": 0, "n_dropped": 0}
    xn, xw = _axis_panels(frame, i0 - 1, i1 + 1, order)
    yn, yw = _axis_panels(frame, j0 - 1, j1 + 1, order)
    Z = xn[None, :] + 1j * yn[:, None]
    Fg = np.asarray(F(Z), dtype=complex)            # (ny, nx)
    scale = max(1.0, float(np.abs(Fg).max()))

    Wx, Dx = _window_tables(frame, xn, i0, i1)
    Wy, Dy = _window_tables(frame, yn, j0, j1)
    Wxw, Dxw = Wx * xw, Dx * xw
    Wyw, Dyw = Wy * yw, Dy * yw

    def contract(field_grid):
        # sum_q w F dbar(phi_ij) = (1/2)[sum wF Wj(y)Wi'(x) + i sum wF Wi(x)Wj'(y)]
        A1 = Dxw @ field_grid.T @ Wyw.T       # (n_i, n_j)
        A2 = Wxw @ field_grid.T @ Dyw.T
        return 0.5 * (A1 + 1j * A2)

    S0 = contract(Fg)
    S1 = contract(Fg * Z)
    C1 = -S0 / np.pi                          # c1 per square (n_i, n_j)
    ii = np.arange(i0, i1 + 1)
    jj = np.arange(j0, j1 + 1)
    centers = ((ii[:, None] + 0.5) * d + 1j * (jj[None, :] + 0.5) * d)
    C2 = -S1 / np.pi - centers * C1

    if drop_tol is None:
        keep = np.ones(C1.shape, dtype=bool)
    else:
        keep = (np.abs(C1) > drop_tol * scale) | \
               (np.abs(C2) > drop_tol * scale * 4 * d)
        # expand by one ring of squares: the summed kept pieces cancel
        # exactly at interior quadrature nodes, leaving only the outermost
        # transition ring, which the dilation pushes safely into the region
        # where F is analytic
        keep = ndimage.binary_dilation(keep, structure=np.ones((3, 3),
                                                               dtype=bool))
    pieces = []
    n_kept = int(keep.sum())
    # per-square node extraction: the window support spans panel blocks
    # [3(i-1-i0+1+? ) ...] — locate by node coordinates
    for a, b in zip(*np.nonzero(keep)):
        i, j = int(ii[a]), int(jj[b])
        xm = (xn > (i - 0.5) * d) & (xn < (i + 1.5) * d)
        ym = (yn > (j - 0.5) * d) & (yn < (j + 1.5) * d)
        xi = np.nonzero(xm)[0]
        yi = np.nonzero(ym)[0]
        tx = xn[xi] / d - (i + 0.5)
        ty = yn[yi] / d - (j + 0.5)
        wx_ = window(tx, frame.s)
        dx_ = window_deriv(tx, frame.s) / d
        wy_ = window(ty, frame.s)
        dy_ = window_deriv(ty, frame.s) / d
        dphi = 0.5 * (dx_[None, :] * wy_[:, None] +
                      1j * wx_[None, :] * dy_[:, None])
        live = dphi != 0.0
        WW = (xw[xi][None, :] * yw[yi][:, None])[live]
        sub = Fg[np.ix_(yi, xi)][live]
        nodes = (xn[xi][None, :] + 1j * yn[yi][:, None] +
                 np.zeros_like(dphi))[live]
        coeffs0 = WW * dphi[live] / np.pi
        coeffs = coeffs0 * sub
        osc = float(np.abs(sub - sub.mean()).max()) if sub.size else 0.0
        pieces.append(LocalPiece(
            i=i, j=j, center=complex(centers[a, b]),
            nodes=nodes.astype(complex), coeffs=coeffs, coeffs0=coeffs0,
            c1=complex(C1[a, b]), c2=complex(C2[a, b]),
            sup_estimate=8.0 * osc, _F=F))
    stats = {"n_squares": int(C1.size), "n_kept": n_kept,
             "n_dropped": int(C1.size - n_kept), "scale": scale,
             "c1_dropped_abs": float(np.abs(C1[~keep]).sum())}
    return pieces, stats


def laurent_coeffs(g, center, radius, n=256):
    """First two coefficients of g about ``center`` at infinity:
    g(z) = c1/(z-a) + c2/(z-a)^2 + O(3), via trapezoid contour integrals on
    |z - a| = radius (g must be analytic on and outside the contour)."""
    th = 2 * np.pi * np.arange(n) / n
    e = np.exp(1j * th)
    vals = np.asarray(g(center + radius * e), dtype=complex)
    c1 = radius / n * np.sum(vals * e)
    c2 = radius ** 2 / n * np.sum(vals * e * e)
    return complex(c1), complex(c2)


def measure_c1c2(measure, center):
    """Exact Laurent data of a carrier measure's transform: c1 = -mass,
    c2 = -integral (w - center) dmu."""
    c1 = -measure.total_mass()
    m1 = 0j
    for g in measure.cells:
        s = g.side
        ctr = g.x + s / 2 + 1j * (g.y + s / 2)
        m1 += (g.w * s * s * (ctr - center)).sum()
    for a, b, w in measure.segments:
        ell = abs(b - a)
        m1 += w * (ell / 2) * ((a + b) / 2 - center)
    for c, r, t0, t1, w in measure.arcs:
        m1 += w * r * ((t1 - t0) * (c - center) -
                       1j * r * (np.exp(1j * t1) - np.exp(1j * t0)))
    return complex(c1), complex(-m1)


# ---------------------------------------------------------------------------
# building blocks


@dataclass
class BuildingBlock:
    i: int
    j: int
    measure: PlanarMeasure
    c1: complex
    c2: complex                 # about the square center
    sup_cert: float
    provenance: str
    flag: str = "ok"

    def evaluate(self, z):
        return self.measure.transform(z)


def _mask_prefix(model):
    """2-D prefix sums of the set bitmap, for O(1) rectangle K-pixel counts."""
    P = np.zeros((model.mask.shape[0] + 1, model.mask.shape[1] + 1),
                 dtype=np.int64)
    P[1:, 1:] = np.cumsum(np.cumsum(model.mask.astype(np.int64), axis=0),
                          axis=1)
    return P


def _rect_counts(P, ix0, ix1, iy0, iy1):
    ny, nx = P.shape[0] - 1, P.shape[1] - 1
    ix0 = np.clip(ix0, 0, nx)
    ix1 = np.clip(ix1, 0, nx)
    iy0 = np.clip(iy0, 0, ny)
    iy1 = np.clip(iy1, 0, ny)
    return (P[iy1, ix1] - P[iy0, ix1] - P[iy1, ix0] + P[iy0, ix0])


def _relative_complement_cells(model, prefix, center, radius, pitch):
    """Lower-left offsets (relative to ``center``) of the global-lattice
    cells of pitch ``pitch`` that lie inside B(center, radius) and contain no
    pixel of the set.  The center is a lattice corner, so the offsets repeat
    under square translation and the kept-pattern bytes key a capacity
    cache; cells of different blocks land on the shared lattice and merge in
    consolidation."""
    m = int(math.ceil(radius / pitch))
    px, py = np.meshgrid(np.arange(-m, m), np.arange(-m, m), indexing="ij")
    px = px.ravel()
    py = py.ravel()
    cx = (px + 0.5) * pitch
    cy = (py + 0.5) * pitch
    inside_ball = cx * cx + cy * cy <= radius * radius
    # K-pixel count under each candidate cell (exact w.r.t. the bitmap)
    X0 = center.real + px * pitch
    Y0 = center.imag + py * pitch
    ix0 = np.round((X0 - model.x0) / model.h).astype(int)
    iy0 = np.round((Y0 - model.y0) / model.h).astype(int)
    n_pix = max(1, int(round(pitch / model.h)))
    hits = _rect_counts(prefix, ix0, ix0 + n_pix, iy0, iy0 + n_pix)
    keep = inside_ball & (hits == 0)
    key = keep.tobytes()
    return key, px[keep] * pitch, py[keep] * pitch


def make_blocks(frame, squares, source, k=3, angles=16, tolerance=2e-3,
                max_rounds=6, _cache=None):
    """One certified building block per requested square (i, j).

    source: ("complement", CompactSetModel) — block transforms a capacity
    certificate measure on B(s_ij, k*sqrt(2)*delta) minus the set (analytic
    on the set, rational-approximable there); or ("measure", PlanarMeasure)
    — block transforms the reference measure restricted to the double
    square, normalized to certified sup <= 1.  Squares providing no mass or
    capacity are omitted from the result.
    """
    mode, payload = source
    d = frame.delta
    out = {}
    cache = {} if _cache is None else _cache
    prefix = None
    for (i, j) in squares:
        s_ij = frame.center(i, j)
        if mode == "complement":
            if prefix is None:
                prefix = _mask_prefix(payload)
            radius = k * math.sqrt(2.0) * d
            pitch = d / 2
            # the lattice corner nearest the square center anchors the block,
            # so every block's cells land on the one global lattice
            key, rx, ry = _relative_complement_cells(
                payload, prefix, s_ij, radius, pitch)
            if rx.size == 0:
                continue
            if key in cache:
                rel_measure, flag = cache[key]
            else:
                prob = _cap.problem_from_cells(pitch, rx, ry, angles=angles,
                                               tolerance=tolerance,
                                               max_rounds=max_rounds)
                cert = _cap.capacity_lower_bound(prob)
                rel_measure, flag = cert.measure, cert.flag
                cache[key] = (rel_measure, flag)
            if rel_measure.carrier_count() == 0:
                continue
            measure = rel_measure.translated(s_ij)
            provenance = "complement-capacity"
        elif mode == "measure":
            box = (s_ij.real - d, s_ij.imag - d, s_ij.real + d, s_ij.imag + d)
            sub = payload.restricted(
                lambda z: box[0] <= z.real <= box[2]
                and box[1] <= z.imag <= box[3])
            if sub.carrier_count() == 0 or abs(sub.total_mass()) == 0:
                continue
            sup = _cap.measure_sup_norm(sub)
            measure = sub.scaled_by(1.0 / max(1.0, sup))
            flag = "ok"
            provenance = "reference-restriction"
        else:
            raise GeometryError(f"unknown block source {mode!r}")
        c1, c2 = measure_c1c2(measure, s_ij)
        if abs(c1) == 0:
            continue
        out[(i, j)] = BuildingBlock(
            i=i, j=j, measure=measure, c1=c1, c2=c2,
            sup_cert=1.0, provenance=provenance, flag=flag)
    return out


# ---------------------------------------------------------------------------
# complete groups and the 2x2 correction


@dataclass
class GroupCorrection:
    row_i: int                  # rows run over the second index at fixed i
    members: list               # the group's j values
    center: complex
    complete: bool
    c2_target: complex = 0j
    pair: tuple = None          # ((i, j1), (i, j2)) chosen blocks
    betas: tuple = None
    c1_residual: float = 0.0
    c2_residual: float = 0.0
    flag: str = "ok"


def _shift_c2(c1, c2, old_center, new_center):
    # g = c1/(z-a) + c2(a)/(z-a)^2 + ...; about a': c2(a') = c2(a) + c1 (a-a')
    return c2 + c1 * (old_center - new_center)


def group_rows(pieces, blocks, frame, theta=0.25):
    """Partition each row's matched squares into complete groups (two
    sub-blocks of summed block mass >= theta*delta separated by >= delta)
    plus at most one unmatched remainder per row, and solve the 2x2
    coefficient system for each complete group.  A row is the set of squares
    sharing the first index i; groups run along the second index.
    """
    d = frame.delta
    by_square = {(p.i, p.j): p for p in pieces}
    rows = {}
    for (i, j) in sorted(by_square):
        rows.setdefault(i, []).append(j)

    def solve_group(i, cur, sub1, sub2, complete):
        weights = [abs(blocks[(i, j)].c1) if (i, j) in blocks else 0.0
                   for j in cur]
        tot = sum(weights)
        if tot > 0:
            s_I = sum(w * frame.center(i, j)
                      for w, j in zip(weights, cur)) / tot
        else:
            s_I = frame.center(i, cur[len(cur) // 2])
        corr = GroupCorrection(row_i=i, members=list(cur), center=s_I,
                               complete=complete)
        if not complete:
            corr.flag = "incomplete"
            return corr
        # group residual c2: sum over squares of c2(f - ratio*block),
        # shifted to the group center s_I
        c2g = 0j
        for j in cur:
            p = by_square[(i, j)]
            c2g += _shift_c2(p.c1, p.c2, p.center, s_I)
            blk = blocks.get((i, j))
            if blk is not None and abs(blk.c1) > 0:
                ratio = p.c1 / blk.c1
                c2g -= ratio * _shift_c2(blk.c1, blk.c2,
                                         frame.center(i, j), s_I)
        corr.c2_target = complex(c2g)

        # candidate block pairs: largest |c1| first in each sub-block
        def ranked(sub):
            have = [j for j in sub if (i, j) in blocks]
            return sorted(have, key=lambda j: -abs(blocks[(i, j)].c1))
        for j1 in ranked(sub1)[:3]:
            for j2 in ranked(sub2)[:3]:
                b1, b2 = blocks[(i, j1)], blocks[(i, j2)]
                c2b1 = _shift_c2(b1.c1, b1.c2, frame.center(i, j1), s_I)
                c2b2 = _shift_c2(b2.c1, b2.c2, frame.center(i, j2), s_I)
                det = b1.c1 * c2b2 - b2.c1 * c2b1
                scale = (abs(b1.c1) * abs(c2b2) +
                         abs(b2.c1) * abs(c2b1) + 1e-300)
                if abs(det) < 1e-9 * scale:
                    continue
                beta2 = b1.c1 * c2g / det
                beta1 = -b2.c1 * beta2 / b1.c1
                corr.pair = ((i, j1), (i, j2))
                corr.betas = (complex(beta1), complex(beta2))
                corr.c1_residual = abs(beta1 * b1.c1 + beta2 * b2.c1)
                corr.c2_residual = abs(beta1 * c2b1 + beta2 * c2b2 - c2g)
                return corr
        corr.complete = False
        corr.flag = "degraded-singular"
        return corr

    corrections = []
    for i, cols in rows.items():
        cols = sorted(cols)
        groups = []
        cur, sub1, sub2, gap_ok = [], [], [], False
        a1 = a2 = 0.0
        for j in cols:
            alpha = abs(blocks[(i, j)].c1) if (i, j) in blocks else 0.0
            cur.append(j)
            if a1 < theta * d:
                sub1.append(j)
                a1 += alpha
                continue
            if not gap_ok:
                # demand a full spacer square between the sub-blocks
                if j >= sub1[-1] + 2:
                    gap_ok = True
                else:
                    continue
            sub2.append(j)
            a2 += alpha
            if a2 >= theta * d:
                groups.append((cur, sub1, sub2, True))
                cur, sub1, sub2, gap_ok = [], [], [], False
                a1 = a2 = 0.0
        if cur:
            # absorb the row remainder into the row's last complete group,
            # so its c2 is matched too; only a row with no complete group
            # keeps an unmatched (incomplete) remainder
            if groups:
                pc, ps1, ps2, _ = groups[-1]
                groups[-1] = (pc + cur, ps1, ps2, True)
            else:
                groups.append((cur, sub1, sub2, False))
        for cur, sub1, sub2, complete in groups:
            corrections.append(solve_group(i, cur, sub1, sub2, complete))
    return corrections


# ---------------------------------------------------------------------------
# the scheme driver


@dataclass
class SchemeReport:
    deltas: list
    errors: list                # sup |F - f_delta| on the validation grid
    recon_errors: list          # sup |F - sum of pieces| spot check
    omegas: list                # measured modulus of continuity at delta
    ratios: list                # errors[t] / errors[t+1]
    aggregate_bounds: list      # tail-sum error envelope per delta
    n_pieces: list
    n_dropped: list
    n_groups: list
    n_complete: list
    tail_scatter: list          # per-delta max of |g_ij| / tail envelope
    premise_max: list           # per-delta max |c1| / (omega * cap)
    aborted: bool = False
    abort_reason: str = ""

    def csv_lines(self):
        hdr = ("delta,error,recon_error,omega,aggregate_bound,n_pieces,"
               "n_dropped,n_groups,n_complete,tail_scatter,premise_max")
        lines = [hdr]
        for t in zip(self.deltas, self.errors, self.recon_errors,
                     self.omegas, self.aggregate_bounds, self.n_pieces,
                     self.n_dropped, self.n_groups, self.n_complete,
                     self.tail_scatter, self.premise_max):
            lines.append(",".join(repr(v) if isinstance(v, float) else str(v)
                                  for v in t))
        return lines


def _model_grid(model, delta):
    """Points of the target set on a grid strictly finer than delta/4."""
    stride = max(1, int(math.ceil(delta / (4 * model.h))) - 1)
    if stride * model.h >= delta / 4:
        raise GeometryError(
            "validation model resolution too coarse for a grid finer than "
            f"delta/4 (h={model.h}, delta={delta})")
    ys, xs = np.nonzero(model.mask)
    sel = (xs % stride == 0) & (ys % stride == 0)
    x0 = model.x0 + model.h / 2
    y0 = model.y0 + model.h / 2
    return (x0 + xs[sel] * model.h) + 1j * (y0 + ys[sel] * model.h)


def run_scheme(F, source, deltas, approx_domain, frame_bounds, hint=None,
               k=3, theta=0.25, order=5, drop_tol=1e-10,
               premise_mode="abort", premise_c=25.0, rng=None,
               validation_cap=700000, block_opts=None):
    """Run the coefficient-matching ladder and report per-delta sup errors.

    F: vectorized field handle, continuous, vanishing at infinity.
    source: block source as in make_blocks.
    approx_domain: CompactSetModel on which the error is measured.
    frame_bounds: (x0, y0, x1, y1) region the frame must cover (all of F's
    non-analyticity plus the domain).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    rep = SchemeReport(deltas=[], errors=[], recon_errors=[], omegas=[],
                       ratios=[], aggregate_bounds=[], n_pieces=[],
                       n_dropped=[], n_groups=[], n_complete=[],
                       tail_scatter=[], premise_max=[])
    cache = {}
    for delta in deltas:
        n_level = int(round(-math.log2(delta)))
        if abs(2.0 ** (-n_level) - delta) > 1e-12 * delta:
            raise GeometryError("ladder deltas must be dyadic")
        frame = DyadicFrame.covering(frame_bounds, n_level)
        om = modulus_of_continuity(
            F, frame_bounds, [delta], rng, n_pairs=2000).omegas[0]
        pieces, stats = localize(F, frame, order=order, drop_tol=drop_tol,
                                 hint=hint)
        blocks = make_blocks(frame, [(p.i, p.j) for p in pieces], source,
                             k=k, _cache=cache, **(block_opts or {}))
        # residue premise: a matched piece must not carry more c1 than the
        # local capacity supports for a member of the class
        scale = stats.get("scale", 1.0)
        floor = 10 * (drop_tol or 1e-10) * scale
        pmax = 0.0
        for p in pieces:
            cap = 2 * abs(blocks[(p.i, p.j)].c1) if (p.i, p.j) in blocks \
                else 0.0
            if abs(p.c1) <= floor:
                continue
            if cap == 0.0 or abs(p.c1) > premise_c * om * cap:
                msg = (f"F not in class for this source: square "
                       f"({p.i},{p.j}) carries residue {abs(p.c1):.3e} "
                       f"against capacity {cap:.3e} at omega {om:.3e}")
                if premise_mode == "abort":
                    raise SolverError(msg)
                rep.aborted = True
                rep.abort_reason = msg
            if cap > 0:
                pmax = max(pmax, abs(p.c1) / (om * cap))
        corrections = group_rows(pieces, blocks, frame, theta=theta)

        # assemble f_delta's generating measure; blocks share one lattice,
        # so consolidation collapses the sum to few distinct cells
        total = PlanarMeasure.empty()
        ratios = {}
        for p in pieces:
            blk = blocks.get((p.i, p.j))
            if blk is None or abs(blk.c1) == 0:
                continue
            ratio = p.c1 / blk.c1
            ratios[(p.i, p.j)] = ratio
            total = total + blk.measure.scaled_by(ratio)
        for corr in corrections:
            if corr.complete and corr.pair is not None:
                (i1, j1), (i2, j2) = corr.pair
                b1, b2 = blocks[(i1, j1)], blocks[(i2, j2)]
                total = total + b1.measure.scaled_by(corr.betas[0])
                total = total + b2.measure.scaled_by(corr.betas[1])
        total = total.consolidated()

        # validation: sup error on the domain, grid strictly finer than
        # delta/4
        pts = _model_grid(approx_domain, delta)
        if pts.size > validation_cap:
            sel = rng.choice(pts.size, validation_cap, replace=False)
            pts = pts[sel]
        Fv = np.asarray(F(pts), dtype=complex)
        approx = total.transform(pts) if total.carrier_count() else \
            np.zeros_like(Fv)
        err = float(np.abs(Fv - approx).max())

        # reconstruction spot check on a reduced set: domain subsample plus
        # a ring around each kept square
        m = min(pts.size, 1500)
        sub = pts[rng.choice(pts.size, m, replace=False)] if pts.size else pts
        ring = []
        for p in pieces[:400]:
            ang = np.exp(2j * np.pi * np.arange(6) / 6)
            ring.append(p.center + 1.6 * delta * ang)
        rpts = np.concatenate([sub] + ring) if ring else sub
        recon = np.zeros(rpts.shape, dtype=complex)
        for p in pieces:
            recon += p.evaluate(rpts)
        recon_err = float(np.abs(np.asarray(F(rpts), dtype=complex)
                                 - recon).max()) if rpts.size else 0.0

        # tail-sum aggregate: max over a coarse domain sample of
        # omega * sum_ij (delta*alpha_ij/d_ij^2 + delta^3/d_ij^3)
        zz = pts[:: max(1, pts.size // 400)]
        agg = 0.0
        if len(pieces) and zz.size:
            cen = np.array([p.center for p in pieces])
            alp = np.array([abs(blocks[(p.i, p.j)].c1)
                            if (p.i, p.j) in blocks else 0.0
                            for p in pieces])
            dist = np.maximum(np.abs(zz[:, None] - cen[None, :]), delta)
            agg = float(om * (delta * alp[None, :] / dist ** 2 +
                              delta ** 3 / dist ** 3).sum(axis=1).max())

        # tail-envelope scatter: |g_ij| against omega*(delta*alpha/r^2 +
        # delta^3/r^3) on sample rings
        scat = 0.0
        for p in pieces[:120]:
            blk = blocks.get((p.i, p.j))
            if blk is None:
                continue
            alpha = abs(blk.c1)
            ratio = ratios.get((p.i, p.j), 0j)
            for rr in (4 * delta, 8 * delta):
                ang = p.center + rr * np.exp(2j * np.pi * np.arange(8) / 8)
                g = p.evaluate(ang) - ratio * blk.evaluate(ang)
                env = om * (delta * alpha / rr ** 2 + delta ** 3 / rr ** 3)
                if env > 0:
                    scat = max(scat, float(np.abs(g).max() / env))

        rep.deltas.append(delta)
        rep.errors.append(err)
        rep.recon_errors.append(recon_err)
        rep.omegas.append(float(om))
        rep.aggregate_bounds.append(agg)
        rep.n_pieces.append(len(pieces))
        rep.n_dropped.append(stats["n_dropped"])
        rep.n_groups.append(len(corrections))
        rep.n_complete.append(sum(1 for c in corrections if c.complete))
        rep.tail_scatter.append(scat)
        rep.premise_max.append(pmax)
    rep.ratios = [rep.errors[t] / rep.errors[t + 1]
                  if rep.errors[t + 1] > 0 else float("inf")
                  for t in range(len(rep.errors) - 1)]
    return rep
