"""Operations on measure transforms: truncation, distributional residuals,
curvature sums, duality pairings, growth statistics.

Sign convention used throughout: for a compactly supported C^1 test
function psi,

    integral  C(mu) * dbar(psi) dA  =  pi * integral psi dmu,

so `dbar_residual` returns (area integral) - pi * (measure integral); a
correct evaluator drives it to quadrature level.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .carriers import (PlanarMeasure, gauss_legendre, _segment_ball_clip,
                       _arc_ball_clip, _seg_cdf, _seg_rho, arc_transform)
from .errors import GeometryError, SolverError

# ---------------------------------------------------------------------------
# plain evaluation


def cauchy_transform(measure, z, gl_order=24):
    """C(mu)(z); principal value on segment carriers, continuous extension
    on cell carriers, error when queried on an arc carrier."""
    return measure.transform(z, gl_order=gl_order)


# ---------------------------------------------------------------------------
# truncated / maximal transform


def truncated_transform(measure, z, eps, resolve=2e-3, gl_order=16):
    """C_eps(mu)(z): the transform with the closed ball B(z, eps) removed
    from the integration domain.

    Cells crossing the ball boundary are resolved by quadtree subdivision
    down to leaves of side <= resolve * eps (boundary leaves assigned by
    center membership): absolute error ~ 2*pi*resolve*eps per unit density.
    Segment and arc carriers are clipped exactly.
    """
    if eps <= 0:
        raise GeometryError("truncation radius must be positive")
    zz = complex(z)
    total = 0j
    for g in measure.cells:
        for x, y, w in zip(g.x, g.y, g.w):
            total += w * _cell_truncated(x, y, g.side, zz, eps, resolve)
    gx, gw = gauss_legendre(gl_order)
    for a, b, w in measure.segments:
        total += w * _segment_truncated(a, b, zz, eps, gx, gw)
    for c, r, t0, t1, w in measure.arcs:
        total += w * _arc_truncated(c, r, t0, t1, zz, eps)
    return total


def _cell_truncated(x0, y0, s, z, eps, resolve):
    leaf_target = max(resolve * eps, s * 2.0 ** -14)
    eps2 = eps * eps

    def rec(x, y, side):
        nx = min(max(z.real, x), x + side)
        ny = min(max(z.imag, y), y + side)
        near2 = (nx - z.real) ** 2 + (ny - z.imag) ** 2
        if near2 > eps2:                      # fully outside the ball: keep
            return kernels.cell_transform(x, y, side, z)
        fx = x + side if abs(x + side - z.real) > abs(x - z.real) else x
        fy = y + side if abs(y + side - z.imag) > abs(y - z.imag) else y
        far2 = (fx - z.real) ** 2 + (fy - z.imag) ** 2
        if far2 <= eps2:                      # fully removed
            return 0j
        if side <= leaf_target:
            cx, cy = x + side / 2, y + side / 2
            inside = (cx - z.real) ** 2 + (cy - z.imag) ** 2 <= eps2
            return 0j if inside else kernels.cell_transform(x, y, side, z)
        h = side / 2
        return (rec(x, y, h) + rec(x + h, y, h) +
                rec(x, y + h, h) + rec(x + h, y + h, h))

    return rec(x0, y0, s)


def _segment_truncated(a, b, z, eps, gx, gw):
    ell = abs(b - a)
    tau = (b - a) / ell
    mid = (a + b) / 2
    u = (z - mid) / (ell * tau)               # z in segment coordinates
    removed = _segment_ball_clip(a, b, z, eps)
    kept = _interval_complement(removed, -0.5, 0.5)
    total = 0j
    for lo, hi in kept:
        total += _line_integral_graded(u, lo, hi, gx, gw)
    return total / tau


def _interval_complement(removed, lo, hi):
    kept = []
    cur = lo
    for a, b in sorted(removed):
        if a > cur:
            kept.append((cur, a))
        cur = max(cur, b)
    if cur < hi:
        kept.append((cur, hi))
    return kept


def _line_integral_graded(u, lo, hi, gx, gw):
    """integral over [lo, hi] of cos^2(pi t)/(t - u) dt with u off the open
    interval (possibly just off an endpoint): panels geometrically graded
    toward both endpoints."""
    L = hi - lo
    if L <= 0:
        return 0j
    # breakpoints graded from both ends (8 dyadic layers each)
    fr = np.concatenate(([0.0], 2.0 ** -np.arange(9, 0, -1),
                         1 - 2.0 ** -np.arange(1, 10), [1.0]))
    fr = np.unique(fr)
    pts = lo + fr * L
    total = 0j
    for p0, p1 in zip(pts[:-1], pts[1:]):
        m = (p0 + p1) / 2
        h = (p1 - p0) / 2
        t = m + h * gx
        total += h * np.sum(gw * _seg_rho(t) / (t - u))
    return total


def _arc_truncated(c, r, t0, t1, z, eps):
    removed = _arc_ball_clip(c, r, t0, t1, z, eps)
    kept = _interval_complement(removed, t0, t1)
    total = 0j
    for lo, hi in kept:
        if hi - lo > 1e-15:
            total += arc_transform(c, r, lo, hi, z, on_arc_tol=0.0)
    return total


def maximal_transform(measure, z, eps_grid, resolve=2e-3):
    """sup over the eps grid of |C_eps(mu)(z)|; returns (values, best_eps)
    arrays matching z."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    vals = np.zeros(z.shape)
    best = np.zeros(z.shape)
    for i, zz in enumerate(z.ravel()):
        vmax, emax = -1.0, 0.0
        for eps in eps_grid:
            v = abs(truncated_transform(measure, zz, eps, resolve=resolve))
            if v > vmax:
                vmax, emax = v, eps
        vals.ravel()[i] = vmax
        best.ravel()[i] = emax
    return vals, best


# ---------------------------------------------------------------------------
# adaptive panel quadrature over a rectangle (batched evaluations)


@dataclass
class AreaIntegralReport:
    value: complex
    error_estimate: float
    n_evaluations: int
    n_panels: int
    converged: bool


def adaptive_area_integral(f, region, tol, order=8, max_depth=7, base=8,
                           x_breaks=(), y_breaks=()):
    """integral of f over the rectangle, by tensor Gauss panels with
    error-driven quadtree refinement.  f maps a flat complex array to
    complex values; panel error is estimated against a lower-order rule."""
    xmin, ymin, xmax, ymax = region
    if not (xmax > xmin and ymax > ymin):
        raise GeometryError("empty integration region")
    xs = _edges(xmin, xmax, base, x_breaks)
    ys = _edges(ymin, ymax, base, y_breaks)
    panels = [(xs[i], ys[j], xs[i + 1], ys[j + 1])
              for i in range(len(xs) - 1) for j in range(len(ys) - 1)]
    ghx, ghw = gauss_legendre(order)
    glx, glw = gauss_legendre(max(order - 3, 2))
    value = 0j
    err_acc = 0.0
    n_eval = 0
    n_panels = 0
    for depth in range(max_depth + 1):
        if not panels:
            break
        # batched evaluation of the high and low rules on every panel
        hi_pts, hi_wts = _panel_points(panels, ghx, ghw)
        lo_pts, lo_wts = _panel_points(panels, glx, glw)
        fh = np.asarray(f(hi_pts.ravel()), dtype=complex).reshape(hi_pts.shape)
        fl = np.asarray(f(lo_pts.ravel()), dtype=complex).reshape(lo_pts.shape)
        n_eval += hi_pts.size + lo_pts.size
        val_hi = (fh * hi_wts).sum(axis=1)
        val_lo = (fl * lo_wts).sum(axis=1)
        err = np.abs(val_hi - val_lo)
        if depth == max_depth:
            value += val_hi.sum()
            err_acc += err.sum()
            n_panels += len(panels)
            panels = []
            break
        share = tol / (2.0 * len(panels))
        refine = err > share
        value += val_hi[~refine].sum()
        err_acc += err[~refine].sum()
        n_panels += int((~refine).sum())
        nxt = []
        for idx in np.nonzero(refine)[0]:
            x0, y0, x1, y1 = panels[idx]
            xm, ym = (x0 + x1) / 2, (y0 + y1) / 2
            nxt += [(x0, y0, xm, ym), (xm, y0, x1, ym),
                    (x0, ym, xm, y1), (xm, ym, x1, y1)]
        panels = nxt
    return AreaIntegralReport(value=value, error_estimate=err_acc,
                              n_evaluations=n_eval, n_panels=n_panels,
                              converged=err_acc <= tol)


def _edges(lo, hi, base, breaks):
    ed = set(np.linspace(lo, hi, base + 1))
    br = sorted(b for b in breaks if lo < b < hi)
    if len(br) > 40:                       # thin: adaptivity catches the rest
        br = br[::int(np.ceil(len(br) / 40))]
    ed.update(br)
    return np.array(sorted(ed))


def _panel_points(panels, gx, gw):
    P = np.asarray(panels)                  # (n, 4)
    hx = (P[:, 2] - P[:, 0]) / 2
    hy = (P[:, 3] - P[:, 1]) / 2
    cx = (P[:, 2] + P[:, 0]) / 2
    cy = (P[:, 3] + P[:, 1]) / 2
    X = cx[:, None, None] + hx[:, None, None] * gx[None, :, None]
    Y = cy[:, None, None] + hy[:, None, None] * gx[None, None, :]
    W = (hx * hy)[:, None, None] * np.outer(gw, gw)[None, :, :]
    pts = (X + 1j * Y).reshape(len(panels), -1)
    return pts, W.reshape(len(panels), -1)


# ---------------------------------------------------------------------------
# compactly supported C^1 tensor bumps (test functions for the residuals)


@dataclass
class TensorBump:
    """psi(z) = W((x-cx)/rx) * W((y-cy)/ry): C^1, plateau value 1 on the
    inner rectangle with half-widths (1 - transition) * r, supported on the
    closed rectangle with half-widths r."""
    center: complex
    rx: float
    ry: float
    transition: float = 0.375

    def _w(self, t):
        u = np.clip((1.0 - np.abs(t)) / self.transition, 0.0, 1.0)
        return u * u * (3.0 - 2.0 * u)

    def _dw(self, t):
        u = (1.0 - np.abs(t)) / self.transition
        inband = (u > 0.0) & (u < 1.0)
        u = np.clip(u, 0.0, 1.0)
        return np.where(inband, -np.sign(t) * 6.0 * u * (1.0 - u)
                        / self.transition, 0.0)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return (self._w((z.real - self.center.real) / self.rx)
                * self._w((z.imag - self.center.imag) / self.ry))

    def dbar(self, z):
        z = np.asarray(z, dtype=complex)
        tx = (z.real - self.center.real) / self.rx
        ty = (z.imag - self.center.imag) / self.ry
        px = self._dw(tx) * self._w(ty) / self.rx
        py = self._w(tx) * self._dw(ty) / self.ry
        return 0.5 * (px + 1j * py)

    @property
    def region(self):
        return (self.center.real - self.rx, self.center.imag - self.ry,
                self.center.real + self.rx, self.center.imag + self.ry)

    @property
    def plateau(self):
        return ((1 - self.transition) * self.rx,
                (1 - self.transition) * self.ry)

    @classmethod
    def covering(cls, measure, margin=1.25, transition=0.375):
        """A bump whose plateau covers the measure's bounding box."""
        x0, y0, x1, y1 = measure.bbox()
        cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
        hx = max((x1 - x0) / 2, 1e-6) * margin
        hy = max((y1 - y0) / 2, 1e-6) * margin
        return cls(center=complex(cx, cy), rx=hx / (1 - transition),
                   ry=hy / (1 - transition), transition=transition)


# ---------------------------------------------------------------------------
# distributional residuals


@dataclass
class DbarReport:
    residual: complex
    area_integral: complex
    measure_integral: complex
    quadrature_error: float
    n_evaluations: int
    converged: bool


def dbar_residual(measure, psi, dbar_psi=None, region=None, tol=None,
                  order=8, max_depth=7, base=8, gl_order=24):
    """integral C(mu) dbar(psi) dA  -  pi * integral psi dmu.

    psi may be a TensorBump (dbar_psi/region inferred) or a vectorized
    callable with dbar_psi and region supplied.  Raises SolverError when the
    area quadrature cannot certify the requested tolerance.
    """
    if dbar_psi is None:
        if not isinstance(psi, TensorBump):
            raise SolverError("dbar_psi required for a generic test function")
        dbar_psi = psi.dbar
        region = psi.region if region is None else region
    if region is None:
        raise GeometryError("integration region required")
    if tol is None:
        tol = 1e-8 * max(measure.variation(), 1e-12)
    xb, yb = [], []
    for g in measure.cells:
        xb += list(np.unique(np.concatenate([g.x, g.x + g.side])))
        yb += list(np.unique(np.concatenate([g.y, g.y + g.side])))
    for a, b, _ in measure.segments:
        xb += [a.real, b.real]
        yb += [a.imag, b.imag]
    for c, r, t0, t1, _ in measure.arcs:
        xb += [c.real - r, c.real + r]
        yb += [c.imag - r, c.imag + r]

    def f(z):
        return measure.transform(z, gl_order=gl_order) * dbar_psi(z)

    rep = adaptive_area_integral(f, region, tol, order=order,
                                 max_depth=max_depth, base=base,
                                 x_breaks=xb, y_breaks=yb)
    pts, qw = measure.quadrature(cell_order=12, line_order=2 * gl_order)
    m_int = np.sum(qw * np.asarray(psi(pts), dtype=complex))
    residual = rep.value - np.pi * m_int
    return DbarReport(residual=residual, area_integral=rep.value,
                      measure_integral=m_int,
                      quadrature_error=rep.error_estimate,
                      n_evaluations=rep.n_evaluations,
                      converged=rep.converged)


def product_rule_residual(mu1, mu2, psi, region=None, tol=None, order=8,
                          max_depth=7, base=8, gl_order=24):
    """Residual of the two-measure product identity

        integral C(mu1) C(mu2) dbar(psi) dA
            = pi * [ integral psi C(mu1) dmu2 + integral psi C(mu2) dmu1 ].

    Supports of mu1 and mu2 should be disjoint (the pairing integrals then
    evaluate transforms off their own carriers)."""
    if not isinstance(psi, TensorBump):
        raise SolverError("product-rule probe takes a TensorBump")
    region = psi.region if region is None else region
    if tol is None:
        tol = 1e-8 * max(mu1.variation() * mu2.variation(), 1e-12)
    xb, yb = [], []
    for mu in (mu1, mu2):
        for g in mu.cells:
            xb += list(np.unique(np.concatenate([g.x, g.x + g.side])))
            yb += list(np.unique(np.concatenate([g.y, g.y + g.side])))
        for a, b, _ in mu.segments:
            xb += [a.real, b.real]
            yb += [a.imag, b.imag]

    def f(z):
        return (mu1.transform(z, gl_order=gl_order)
                * mu2.transform(z, gl_order=gl_order) * psi.dbar(z))

    rep = adaptive_area_integral(f, region, tol, order=order,
                                 max_depth=max_depth, base=base,
                                 x_breaks=xb, y_breaks=yb)
    p2, w2 = mu2.quadrature(cell_order=12, line_order=2 * gl_order)
    p1, w1 = mu1.quadrature(cell_order=12, line_order=2 * gl_order)
    pair = (np.sum(w2 * psi(p2) * mu1.transform(p2, gl_order=gl_order))
            + np.sum(w1 * psi(p1) * mu2.transform(p1, gl_order=gl_order)))
    return DbarReport(residual=rep.value - np.pi * pair,
                      area_integral=rep.value, measure_integral=pair,
                      quadrature_error=rep.error_estimate,
                      n_evaluations=rep.n_evaluations,
                      converged=rep.converged)


# ---------------------------------------------------------------------------
# curvature


@dataclass
class CurvatureReport:
    total: float
    points: np.ndarray
    weights: np.ndarray
    pointwise: np.ndarray
    n_points: int
    subsampled: bool


def menger_curvature(measure, cap=2000, seed=0, cell_order=1, line_order=16):
    """Triple-sum squared curvature of a positive measure, discretized at
    carrier quadrature nodes; if the node count exceeds the cap, nodes are
    resampled proportionally to mass with equal per-sample weights
    (mass-preserving, deterministic for a fixed seed)."""
    if not measure.positive:
        raise GeometryError("curvature sums are defined for positive measures")
    pts, qw = measure.quadrature(cell_order=cell_order, line_order=line_order)
    w = qw.real
    keep = w > 0
    pts, w = pts[keep], w[keep]
    subsampled = False
    if pts.size > cap:
        rng = np.random.default_rng(seed)
        p = w / w.sum()
        idx = rng.choice(pts.size, size=cap, replace=True, p=p)
        pts = pts[idx]
        w = np.full(cap, w.sum() / cap)
        subsampled = True
    total, pointwise = kernels.menger_c2_pointwise(pts, w)
    return CurvatureReport(total=float(total), points=pts, weights=w,
                           pointwise=pointwise, n_points=pts.size,
                           subsampled=subsampled)


# ---------------------------------------------------------------------------
# duality pairing


@dataclass
class DualityReport:
    lhs: complex
    rhs: complex
    residual: complex
    converged: bool


def duality_pairing(mu, nu, cell_order=12, line_order=32):
    """(integral C(mu) dnu, integral C(nu) dmu): antisymmetric by Fubini,
    so lhs + rhs is the reported residual.  Supports must be disjoint."""
    def pair(a, b, co, lo):
        p, w = b.quadrature(cell_order=co, line_order=lo)
        return np.sum(w * a.transform(p))

    lhs = pair(mu, nu, cell_order, line_order)
    rhs = pair(nu, mu, cell_order, line_order)
    lhs2 = pair(mu, nu, cell_order + 4, line_order + 16)
    rhs2 = pair(nu, mu, cell_order + 4, line_order + 16)
    conv = (abs(lhs - lhs2) + abs(rhs - rhs2)
            <= 1e-9 * max(abs(lhs) + abs(rhs), 1e-12) + 1e-13)
    return DualityReport(lhs=lhs2, rhs=rhs2, residual=lhs2 + rhs2,
                         converged=conv)


# ---------------------------------------------------------------------------
# growth statistics


@dataclass
class GrowthReport:
    centers: np.ndarray
    radii: np.ndarray
    ratios: np.ndarray          # (n_centers, n_radii): mu(B(c, r)) / r
    sup_ratio: float
    linear_growth_ok: bool      # sup mu(B)/r bounded by the stated constant
    linear_constant: float
    density_at_min_radius: float


def growth_report(measure, radii, centers=None, linear_constant=1.0,
                  tol=1e-9, max_centers=64, depth=8):
    """Ball-mass growth table mu(B(c, r))/r over centers on the support."""
    if not measure.positive:
        raise GeometryError("growth statistics are defined for positive measures")
    radii = np.asarray(sorted(radii), dtype=float)
    if centers is None:
        pts = measure.support_points()
        if pts.size > max_centers:
            stride = int(np.ceil(pts.size / max_centers))
            pts = pts[::stride]
        centers = pts
    centers = np.asarray(centers, dtype=complex)
    ratios = np.empty((centers.size, radii.size))
    for i, c in enumerate(centers):
        for j, r in enumerate(radii):
            ratios[i, j] = measure.ball_mass(c, r, depth=depth) / r
    sup = float(ratios.max()) if ratios.size else 0.0
    return GrowthReport(centers=centers, radii=radii, ratios=ratios,
                        sup_ratio=sup,
                        linear_growth_ok=sup <= linear_constant + tol,
                        linear_constant=linear_constant,
                        density_at_min_radius=float(ratios[:, 0].max())
                        if ratios.size else 0.0)
