"""Certified lower bounds for analytic-capacity-type quantities.

The solver maximizes the mass of a positive measure built from a carrier
dictionary subject to |C(measure)| <= 1, linearized over m half-planes
(Re(e^{-i theta_j} C) <= 1) at a growing collocation set (cutting planes).
The LP answer is then *certified*: the optimal measure's transform is scanned
on a fine grid near the support, a coarse far shell, and (for segment
carriers) both one-sided boundary limits; dividing by the measured maximum M
turns the objective into a genuine lower bound up to grid-gap error.

For the continuous variant, cell dictionaries qualify as-is (their transforms
are continuous); segment dictionaries additionally cap the total transverse
jump 2*pi*(density) pointwise by a budget that shrinks with the window length
(sqrt(L)), so the certified bound for sets that are *only* a segment is
forced toward zero as the resolution is refined.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import kernels
from .carriers import PlanarMeasure, CellGroup, gauss_legendre, _seg_rho
from .errors import GeometryError, SolverError
from .geometry import modulus_of_continuity, ModulusReport


# ---------------------------------------------------------------------------
# carrier dictionaries


class CellDictionary:
    """Candidate carriers: equal-side area cells inside the target set."""

    def __init__(self, side, x, y):
        self.side = float(side)
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.x.size == 0:
            raise GeometryError("empty carrier dictionary")

    @property
    def n(self):
        return self.x.size

    @property
    def masses(self):
        return np.full(self.n, self.side ** 2)

    def matrix(self, z):
        return kernels.cell_matrix(self.x, self.y, self.side, np.asarray(z, complex))

    def measure(self, w):
        keep = w > 0
        if not keep.any():
            return PlanarMeasure.empty()
        return PlanarMeasure(cells=[CellGroup(self.side, self.x[keep],
                                              self.y[keep],
                                              w[keep].astype(complex))])

    def centers(self):
        return (self.x + self.side / 2) + 1j * (self.y + self.side / 2)

    def initial_collocation(self):
        c = self.centers()
        if c.size > 160:
            c = c[::int(np.ceil(c.size / 160))]
        pts = [c]
        # ring of off-support points one and two cell layers out
        for r_off in (self.side, 2 * self.side):
            pts.append(_bbox_ring(c, self.side, r_off, 64))
        pts.append(_far_shell(c, 1.0, 32))
        return np.concatenate(pts)

    def scan_points(self, spacing_factor=1.0):
        c = self.centers()
        x0, x1 = c.real.min(), c.real.max()
        y0, y1 = c.imag.min(), c.imag.max()
        pad = 3 * self.side
        sp = self.side * spacing_factor
        xs = np.arange(x0 - pad, x1 + pad + sp, sp)
        ys = np.arange(y0 - pad, y1 + pad + sp, sp)
        X, Y = np.meshgrid(xs, ys)
        grid = (X + 1j * Y).ravel()
        return np.concatenate([grid, _far_shell(c, 1.0, 128),
                               _far_shell(c, 2.5, 64)])

    def side_rows(self):
        return None

    def jump_matrix(self):
        return None


class SegmentDictionary:
    """Candidate carriers: cos^2-windowed sub-segments of one straight
    segment [a, b], of common window length L, centers spaced L/2 (adjacent
    windows sum to a flat density where they overlap)."""

    def __init__(self, a, b, window_length):
        self.a = complex(a)
        self.b = complex(b)
        self.ell = abs(self.b - self.a)
        if self.ell <= 0:
            raise GeometryError("degenerate segment")
        self.tau = (self.b - self.a) / self.ell
        L = float(window_length)
        n = int(round(2 * self.ell / L)) - 1
        if n < 1:
            raise GeometryError("window length exceeds the segment")
        self.L = 2 * self.ell / (n + 1)
        self.n_win = n
        # window centers in arclength x measured from a
        self.centers_x = self.L / 2 + np.arange(n) * (self.L / 2)
        self._gx, self._gw = gauss_legendre(24)
        # cache for the standard-window on-line profile: every window shares
        # one shape, so the PV value at local coordinate u is computed once
        self._pv_cache = {}

    @property
    def n(self):
        return self.n_win

    @property
    def masses(self):
        return np.full(self.n_win, self.L / 2)

    def _endpoints(self, j):
        xa = self.centers_x[j] - self.L / 2
        xb = self.centers_x[j] + self.L / 2
        return self.a + xa * self.tau, self.a + xb * self.tau

    def matrix(self, z):
        z = np.asarray(z, complex)
        out = np.empty((z.size, self.n_win), dtype=complex)
        for j in range(self.n_win):
            sa, sb = self._endpoints(j)
            out[:, j] = kernels.segment_transform(sa, sb, 1.0, z,
                                                  self._gx, self._gw)
        return out

    def measure(self, w):
        keep = w > 0
        segs = []
        for j in np.nonzero(keep)[0]:
            sa, sb = self._endpoints(j)
            segs.append((sa, sb, complex(w[j])))
        if not segs:
            return PlanarMeasure.empty()
        return PlanarMeasure(segments=segs)

    def density_rows(self, x_grid):
        """Arclength density of each carrier at global positions x (measured
        from endpoint a): rho_j(x) = cos^2(pi (x - c_j)/L) inside window j."""
        X = np.asarray(x_grid, dtype=float)[:, None]
        T = (X - self.centers_x[None, :]) / self.L
        inside = np.abs(T) < 0.5
        return np.where(inside, np.cos(np.pi * T) ** 2, 0.0)

    def _profile(self, u):
        """Standard-window transform S(u) at real local coordinates ``u``.

        Every window is a translate of one shape, so the on-line principal
        value depends only on u = (x - center)/L.  Values are memoized on
        u rounded to 1e-12, which collapses equispaced grids to a handful
        of distinct local coordinates.
        """
        u = np.asarray(u, dtype=float)
        key = np.round(u, 12)
        uniq, inv = np.unique(key, return_inverse=True)
        missing = [k for k in uniq if k not in self._pv_cache]
        if missing:
            vals = kernels.segment_transform(
                complex(-0.5), complex(0.5), 1.0,
                np.asarray(missing, dtype=complex), self._gx, self._gw)
            for k, v in zip(missing, np.atleast_1d(vals)):
                self._pv_cache[k] = v
        table = np.array([self._pv_cache[k] for k in uniq], dtype=complex)
        return table[inv].reshape(u.shape)

    def line_matrix(self, x_grid):
        """Principal-value transform matrix at on-line arclength positions."""
        X = np.asarray(x_grid, dtype=float)[:, None]
        U = (X - self.centers_x[None, :]) / self.L
        return self._profile(U) / self.tau

    def side_rows(self, n_t=256):
        """Complex LP rows for the one-sided boundary limits: PV +- i pi rho/tau
        at a grid of on-segment positions.  The grid step divides the window
        spacing L/2, so local coordinates repeat and the profile cache turns
        the whole matrix into a lookup."""
        n_per = max(1, int(round(n_t * (self.L / 2) / self.ell)))
        dx = (self.L / 2) / n_per
        m = int(round((self.ell - self.L / 2) / dx)) + 1
        x = self.L / 4 + dx * np.arange(m)
        pv = self.line_matrix(x)
        dens = self.density_rows(x)
        jump = 1j * np.pi * dens / self.tau
        rows = np.concatenate([pv + jump, pv - jump], axis=0)
        labels = [("side+", xi) for xi in x] + [("side-", xi) for xi in x]
        return rows, labels

    def initial_collocation(self):
        x = np.linspace(0, self.ell, 49)
        pts = []
        for d in (self.L / 2, 2 * self.L, self.ell / 8):
            off = 1j * self.tau * d
            pts += [self.a + x * self.tau + off, self.a + x * self.tau - off]
        # beyond the endpoints along the line
        ext = np.linspace(self.L / 4, self.ell / 2, 9)
        pts += [self.a - ext * self.tau, self.b + ext * self.tau]
        sup = np.concatenate(pts)
        return np.concatenate([sup, _far_shell(sup, 1.0, 32)])

    def scan_points(self, spacing_factor=1.0):
        n_along = int(257 / spacing_factor)
        x = np.linspace(0, self.ell, n_along)
        pts = []
        for d in (self.L / 4, self.L / 2, self.L, 4 * self.L, self.ell / 4):
            off = 1j * self.tau * d
            pts += [self.a + x * self.tau + off, self.a + x * self.tau - off]
        ext = np.linspace(self.L / 8, self.ell, 33)
        pts += [self.a - ext * self.tau, self.b + ext * self.tau]
        sup = np.concatenate(pts)
        return np.concatenate([sup, _far_shell(sup, 1.0, 128)])

    def jump_matrix(self, n_t=512):
        """Rows bounding the total transverse jump: 2 pi sum_j w_j rho_j(x)."""
        x = np.linspace(0, self.ell, n_t)
        return 2 * np.pi * self.density_rows(x)


def _bbox_ring(pts, side, offset, n):
    x0, x1 = pts.real.min() - offset, pts.real.max() + offset
    y0, y1 = pts.imag.min() - offset, pts.imag.max() + offset
    per_side = max(n // 4, 2)
    xs = np.linspace(x0, x1, per_side)
    ys = np.linspace(y0, y1, per_side)
    return np.concatenate([xs + 1j * y0, xs + 1j * y1,
                           1j * ys + x0, 1j * ys + x1])


def _far_shell(pts, factor, n):
    c = pts.mean()
    rad = np.abs(pts - c).max()
    R = (1.5 + factor) * max(rad, 1e-9)
    th = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return c + R * np.exp(1j * th)


# ---------------------------------------------------------------------------
# problems and certificates


@dataclass
class CapacityProblem:
    dictionary: object
    angles: int = 16
    tolerance: float = 1e-3
    max_rounds: int = 8
    max_added_per_round: int = 80
    caps: np.ndarray = None          # per-carrier upper bounds (restricted mode)
    jump_budget: float = None        # alpha mode with segment carriers


@dataclass
class CapacityCertificate:
    mode: str
    certified: float
    lp_objective: float
    sup_norm: float
    measure: PlanarMeasure
    iterations: list
    flag: str
    angles: int
    tolerance: float
    modulus: ModulusReport = None
    extras: dict = field(default_factory=dict)

    def iteration_csv_lines(self):
        lines = ["round,n_rows,objective,max_scan_value,n_added"]
        for it in self.iterations:
            lines.append("%d,%d,%r,%r,%d" % (it["round"], it["n_rows"],
                                             it["objective"],
                                             it["max_scan"], it["n_added"]))
        return lines


def problem_from_model(model, max_carriers=520, angles=16, tolerance=1e-3,
                       max_rounds=8):
    """Cell dictionary for a raster compact set: pixel cells, coarsened by
    factor-2 block merging (fully covered blocks only, so carriers stay
    inside the set) until the carrier count fits the LP budget."""
    side = model.h
    mask = model.mask.copy()
    ox, oy = model.x0, model.y0
    while mask.sum() > max_carriers:
        ny, nx = mask.shape
        ny2, nx2 = ny // 2, nx // 2
        blocks = mask[:ny2 * 2, :nx2 * 2].reshape(ny2, 2, nx2, 2)
        mask = blocks.all(axis=(1, 3))
        side *= 2
        if mask.sum() == 0:
            raise GeometryError("resolution too coarse: carrier coarsening "
                                "emptied the set")
    jj, ii = np.nonzero(mask)
    x = ox + ii * side
    y = oy + jj * side
    return CapacityProblem(dictionary=CellDictionary(side, x, y),
                           angles=angles, tolerance=tolerance,
                           max_rounds=max_rounds)


def problem_from_cells(side, x, y, angles=16, tolerance=1e-3, max_rounds=8):
    return CapacityProblem(dictionary=CellDictionary(side, x, y),
                           angles=angles, tolerance=tolerance,
                           max_rounds=max_rounds)


def problem_from_segment(a, b, window_length, angles=16, tolerance=1e-3,
                         max_rounds=8):
    return CapacityProblem(dictionary=SegmentDictionary(a, b, window_length),
                           angles=angles, tolerance=tolerance,
                           max_rounds=max_rounds)


# ---------------------------------------------------------------------------
# LP core


def _solve_lp(masses, A, b, caps=None, jump_rows=None, jump_budget=None):
    if jump_rows is not None:
        A = np.concatenate([A, jump_rows], axis=0)
        b = np.concatenate([b, np.full(jump_rows.shape[0], jump_budget)])
    if caps is None:
        bounds = (0, None)
    else:
        bounds = [(0.0, float(c)) for c in caps]
    res = linprog(c=-masses, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    if not res.success:
        raise SolverError(f"LP failed: {res.message}")
    slack = res.slack[:A.shape[0] - (0 if jump_rows is None
                                     else jump_rows.shape[0])]
    return np.maximum(res.x, 0.0), -res.fun, slack


def _angle_rows(crows, angle_indices, m):
    """Real LP rows Re(e^{-i theta_j} crow) for each (complex row, angle)."""
    crows = np.atleast_2d(crows)
    th = 2 * np.pi * np.asarray(angle_indices) / m
    return (np.cos(th)[:, None] * crows.real
            + np.sin(th)[:, None] * crows.imag)


def _nearest_angles(value, m, spread=1):
    """Angle indices whose half-plane is most binding for this value."""
    j = int(round(np.angle(value) / (2 * np.pi / m))) % m
    return [(j + d) % m for d in range(-spread, spread + 1)]


def _run_cutting_loop(problem, row_cap=3500):
    """Exchange method: a small working set of half-plane rows, grown at
    scan violations (three angles around the violation's phase) and pruned
    by slack when it exceeds the row cap."""
    D = problem.dictionary
    m = problem.angles
    masses = D.masses
    colloc = D.initial_collocation()
    init_c = D.matrix(colloc)
    side = D.side_rows(n_t=64) if isinstance(D, SegmentDictionary) else None
    if side is not None:
        srows = side[0]
        if srows.shape[0] > 256:         # keep the warm start small
            srows = srows[::int(np.ceil(srows.shape[0] / 256))]
        init_c = np.concatenate([init_c, srows], axis=0)
    # initial rows: four coarse angles everywhere; refinement is scan-driven
    A = np.concatenate([_angle_rows(init_c, [j] * init_c.shape[0], m)
                        for j in (0, m // 4, m // 2, 3 * m // 4)], axis=0)
    ages = np.zeros(A.shape[0], dtype=int)
    jump_rows = None
    if problem.jump_budget is not None and isinstance(D, SegmentDictionary):
        jump_rows = D.jump_matrix()
    iterations = []
    w = None
    obj = 0.0
    flag = "unconverged"
    scan_pts = D.scan_points(spacing_factor=0.5)
    scan_m = D.matrix(scan_pts)
    scan_side = (D.side_rows(n_t=1024)
                 if isinstance(D, SegmentDictionary) else None)
    # the m-angle half-planes bound |C| only by 1/cos(pi/m); points at or
    # under that level are as constrained as the LP can make them, so the
    # cut threshold includes the linearization factor (the post-hoc
    # normalization pays it back)
    threshold = 1.0 / math.cos(math.pi / m) + problem.tolerance
    for rnd in range(problem.max_rounds):
        if A.shape[0] > row_cap and rnd > 0:
            # prune loosest rows, keeping anything added in the last round
            order = np.argsort(slack)[::-1]
            drop = [i for i in order if ages[i] < rnd - 1][:A.shape[0] - row_cap]
            keep = np.ones(A.shape[0], dtype=bool)
            keep[drop] = False
            A, ages = A[keep], ages[keep]
        b = np.ones(A.shape[0])
        w, obj, slack = _solve_lp(masses, A, b, caps=problem.caps,
                                  jump_rows=jump_rows,
                                  jump_budget=problem.jump_budget)
        cand_vals = []
        cand_rows = []
        vals = scan_m @ w
        av = np.abs(vals)
        for idx in np.argsort(av)[::-1][:problem.max_added_per_round]:
            if av[idx] <= threshold:
                break
            cand_vals.append(av[idx])
            cand_rows.append((scan_m[idx], vals[idx]))
        side_max = 0.0
        if scan_side is not None:
            sv = scan_side[0] @ w
            asv = np.abs(sv)
            side_max = float(asv.max()) if asv.size else 0.0
            for idx in np.argsort(asv)[::-1][:problem.max_added_per_round]:
                if asv[idx] <= threshold:
                    break
                cand_vals.append(asv[idx])
                cand_rows.append((scan_side[0][idx], sv[idx]))
        max_scan = float(max(av.max() if av.size else 0.0, side_max))
        iterations.append({"round": rnd, "n_rows": A.shape[0],
                           "objective": float(obj),
                           "max_scan": max_scan,
                           "n_added": len(cand_rows)})
        if max_scan <= threshold:
            flag = "converged"
            break
        if not cand_rows:
            break
        new_real = []
        for crow, val in cand_rows:
            ang = _nearest_angles(val, m)
            new_real.append(_angle_rows(crow, ang, m))
        new_real = np.concatenate(new_real, axis=0)
        A = np.concatenate([A, new_real], axis=0)
        ages = np.concatenate([ages, np.full(new_real.shape[0], rnd)])
    return w, obj, iterations, flag


def _segment_side_values(dictionary, w, n_per=16):
    """One-sided boundary values of the weighted dictionary combination on a
    dense on-line grid (n_per points per half window-spacing, commensurate
    with the window layout so profile values repeat).  The jump at a point
    sums the density of EVERY window covering it, which matters because
    adjacent windows overlap."""
    dx = (dictionary.L / 2) / n_per
    m = int(round(dictionary.ell / dx)) + 1
    x = dx * np.arange(m)
    pv = dictionary.line_matrix(x) @ w
    dens = dictionary.density_rows(x) @ w
    jump = 1j * np.pi * dens / dictionary.tau
    return pv + jump, pv - jump


def _certify_sup(measure, dictionary, tolerance, w=None):
    """Measured sup |C(measure)|: fine near grid at half the carrier scale,
    far shells, and (segments) dense one-sided boundary limits."""
    if measure.carrier_count() == 0:
        return 1.0, {}
    vals = []
    if isinstance(dictionary, CellDictionary):
        pts = dictionary.scan_points(spacing_factor=0.25)
        vals.append(np.abs(measure.transform(pts)))
    else:
        pts = dictionary.scan_points(spacing_factor=0.5)
        # exclude points falling exactly on the carrier line: the one-sided
        # rows below account for the boundary values
        tau = dictionary.tau
        distline = np.abs(((pts - dictionary.a) / tau).imag)
        along = ((pts - dictionary.a) / tau).real
        on_line = (distline < 1e-12) & (along > -1e-12) \
            & (along < dictionary.ell + 1e-12)
        vals.append(np.abs(measure.transform(pts[~on_line])))
        left, right = _segment_side_values(dictionary, w, n_per=16)
        vals.append(np.abs(left))
        vals.append(np.abs(right))
    M = float(max(v.max() for v in vals if v.size))
    return M, {"n_scan": int(sum(v.size for v in vals))}


def measure_sup_norm(measure, spacing_factor=0.25, max_points=300000):
    """Measured sup |C(measure)| for an arbitrary carrier measure.

    The transform is analytic off the support (including at infinity), so
    the sup over the plane is attained in boundary values at the support:
    scan a near grid at a fraction of the finest carrier scale, both
    one-sided limits on every segment carrier, plus bbox rings and far
    shells as a cross-check.  The grid is offset by an irrational-ish
    fraction of the step so nodes never land exactly on arc carriers.
    """
    if measure.carrier_count() == 0:
        return 0.0
    scales = [g.side for g in measure.cells]
    scales += [abs(b - a) / 8 for a, b, _ in measure.segments]
    scales += [r * (t1 - t0) / 8 for _, r, t0, t1, _ in measure.arcs]
    h = min(scales)
    x0, y0, x1, y1 = measure.bbox()
    pad = 4 * h
    x0, y0, x1, y1 = x0 - pad, y0 - pad, x1 + pad, y1 + pad
    step = spacing_factor * h
    n_est = ((x1 - x0) / step + 1) * ((y1 - y0) / step + 1)
    if n_est > max_points:
        step *= math.sqrt(n_est / max_points)
    xs = np.arange(x0 + 0.2371 * step, x1, step)
    ys = np.arange(y0 + 0.1713 * step, y1, step)
    grid = (xs[None, :] + 1j * ys[:, None]).ravel()
    vals = [np.abs(measure.transform(grid))]
    if measure.segments:
        t = np.linspace(-0.5, 0.5, 129)
        for pts, left, right in measure.segment_boundary_values(t):
            vals.append(np.abs(left))
            vals.append(np.abs(right))
    pts = measure.support_points()
    vals.append(np.abs(measure.transform(_bbox_ring(pts, h, 2 * pad, 256))))
    vals.append(np.abs(measure.transform(_far_shell(pts, 1.0, 128))))
    vals.append(np.abs(measure.transform(_far_shell(pts, 4.0, 64))))
    return float(max(v.max() for v in vals if v.size))


def capacity_lower_bound(problem):
    """Certified lower bound for the sup-norm-1 capacity of the carrier
    dictionary's target set."""
    D = problem.dictionary
    w, obj, iterations, flag = _run_cutting_loop(problem)
    eta = D.measure(w)
    if eta.carrier_count() == 0:
        return CapacityCertificate(mode="gamma", certified=0.0,
                                   lp_objective=0.0, sup_norm=1.0,
                                   measure=eta, iterations=iterations,
                                   flag="empty", angles=problem.angles,
                                   tolerance=problem.tolerance)
    M, extras = _certify_sup(eta, D, problem.tolerance, w=w)
    # Capped densities and jump-budgeted measures cannot be scaled up past
    # their cap, so when M < 1 the certified value stays at the raw mass.
    scale_up_allowed = problem.caps is None and problem.jump_budget is None
    divisor = M if scale_up_allowed else max(M, 1.0)
    certified = float(eta.total_mass()) / divisor
    return CapacityCertificate(
        mode="gamma" if problem.caps is None else "restricted",
        certified=certified, lp_objective=float(obj), sup_norm=M,
        measure=eta.scaled_by(1.0 / divisor), iterations=iterations,
        flag=flag, angles=problem.angles, tolerance=problem.tolerance,
        extras=extras)


def alpha_lower_bound(problem, jump_budget=None, modulus_deltas=None,
                      rng=None):
    """Continuous-variant lower bound: cell dictionaries pass through (cell
    transforms are continuous); segment dictionaries get a pointwise cap on
    the transverse jump of the density, with budget sqrt(window length) by
    default, so pure-segment sets are forced toward zero as windows shrink.
    The certificate records a measured modulus of continuity near the
    support."""
    D = problem.dictionary
    if isinstance(D, SegmentDictionary):
        problem.jump_budget = (math.sqrt(D.L) if jump_budget is None
                               else float(jump_budget))
    cert = capacity_lower_bound(problem)
    cert.mode = "alpha"
    if cert.measure.carrier_count() > 0:
        if isinstance(D, CellDictionary):
            c = D.centers()
            region = (c.real.min() - 2 * D.side, c.imag.min() - 2 * D.side,
                      c.real.max() + 2 * D.side, c.imag.max() + 2 * D.side)
            scale = D.side
        else:
            pts = np.array([D.a, D.b])
            pad = 0.25 * D.ell
            region = (pts.real.min() - pad, pts.imag.min() - pad,
                      pts.real.max() + pad, pts.imag.max() + pad)
            scale = D.L
        deltas = (modulus_deltas if modulus_deltas is not None
                  else [scale / 4, scale / 2, scale])
        rng = np.random.default_rng(0) if rng is None else rng

        if isinstance(D, SegmentDictionary):
            tau, a0, ell = D.tau, D.a, D.ell

            def off_carrier(z):
                u = (z - a0) / tau
                return not (abs(u.imag) < 1e-9 and -1e-9 < u.real < ell + 1e-9)
        else:
            def off_carrier(z):
                return True

        mu = cert.measure

        def f(z):
            z = np.asarray(z, complex)
            return mu.transform(z)

        cert.modulus = modulus_of_continuity(f, region, deltas, rng,
                                             n_pairs=600,
                                             point_filter=off_carrier)
    return cert


def restricted_capacity(reference, region_predicate, angles=16,
                        tolerance=1e-3, max_rounds=8):
    """Lower bound for the capacity computed over densities 0 <= f <= 1
    against a fixed reference cell measure, restricted to carriers inside
    the target region.  The certificate normalizes by max(M, 1): densities
    cannot be scaled up past the cap."""
    if reference.segments or reference.arcs:
        raise GeometryError("restricted capacity expects a cell reference measure")
    sides = {}
    for g in reference.cells:
        acc = sides.setdefault(g.side, [[], [], []])
        c = g.centers()
        keep = np.asarray([bool(region_predicate(zz)) for zz in c])
        acc[0].append(g.x[keep])
        acc[1].append(g.y[keep])
        acc[2].append(g.w[keep].real)
    groups = [(s, np.concatenate(v[0]), np.concatenate(v[1]),
               np.concatenate(v[2])) for s, v in sides.items()
              if sum(len(a) for a in v[0])]
    total = sum(len(g[1]) for g in groups)
    if total == 0:
        return CapacityCertificate(mode="restricted", certified=0.0,
                                   lp_objective=0.0, sup_norm=1.0,
                                   measure=PlanarMeasure.empty(),
                                   iterations=[], flag="no-mass-in-region",
                                   angles=angles, tolerance=tolerance)
    if len(groups) != 1:
        raise GeometryError("restricted capacity expects a single cell side")
    s, x, y, caps = groups[0]
    problem = CapacityProblem(dictionary=CellDictionary(s, x, y),
                              angles=angles, tolerance=tolerance,
                              max_rounds=max_rounds, caps=caps)
    return capacity_lower_bound(problem)


# ---------------------------------------------------------------------------
# probes


def alpha_area_floor(area):
    """Continuous-capacity floor implied by area: a set of area A admits the
    uniform competitor chi_E/(2 sqrt(pi A)), so the bound sqrt(A/(4 pi))."""
    return math.sqrt(area / (4 * math.pi))


@dataclass
class ComparabilityReport:
    lam: complex
    delta: float
    k: float
    lhs: float
    mid: float
    rhs: float
    ratio: float
    flags: tuple


def comparability_probe(model, eta, lam, delta, k=3.0, angles=16,
                        tolerance=1e-3, max_carriers=260):
    """Ratio  alpha(B(lam, delta) \\ interior) /
    [ restricted(B(lam, k delta)) + gamma(B(lam, k delta) \\ set) ]."""
    lam = complex(lam)
    h = model.h
    ny, nx = model.mask.shape
    xs = model.x0 + (np.arange(nx) + 0.5) * h
    ys = model.y0 + (np.arange(ny) + 0.5) * h
    X, Y = np.meshgrid(xs, ys)
    C = (X + 1j * Y).ravel()

    inside_small = (np.abs(C - lam) <= delta)
    lhs_mask = inside_small & ~model.interior_mask.ravel()
    flags = []
    if not lhs_mask.any():
        lhs = 0.0
        flags.append("lhs-empty")
    else:
        jj = np.nonzero(lhs_mask)[0]
        x = C.real[jj] - h / 2
        y = C.imag[jj] - h / 2
        prob = _coarsened_problem(h, x, y, max_carriers, angles, tolerance)
        lhs_cert = alpha_lower_bound(prob)
        lhs = lhs_cert.certified
        if lhs_cert.flag != "converged":
            flags.append("lhs-" + lhs_cert.flag)

    mid_cert = restricted_capacity(eta, lambda z: abs(z - lam) <= k * delta,
                                   angles=angles, tolerance=tolerance)
    mid = mid_cert.certified
    if mid_cert.flag not in ("converged", "no-mass-in-region"):
        flags.append("mid-" + mid_cert.flag)

    rhs_mask = (np.abs(C - lam) <= k * delta) & ~model.mask.ravel()
    if not rhs_mask.any():
        rhs = 0.0
        flags.append("rhs-empty")
    else:
        jj = np.nonzero(rhs_mask)[0]
        x = C.real[jj] - h / 2
        y = C.imag[jj] - h / 2
        prob = _coarsened_problem(h, x, y, max_carriers, angles, tolerance)
        rhs_cert = capacity_lower_bound(prob)
        rhs = rhs_cert.certified
        if rhs_cert.flag != "converged":
            flags.append("rhs-" + rhs_cert.flag)

    denom = mid + rhs
    ratio = 0.0 if lhs == 0 else (math.inf if denom == 0 else lhs / denom)
    return ComparabilityReport(lam=lam, delta=delta, k=k, lhs=lhs, mid=mid,
                               rhs=rhs, ratio=ratio, flags=tuple(flags))


def _coarsened_problem(h, x, y, max_carriers, angles, tolerance,
                       max_rounds=8):
    side = h
    while x.size > max_carriers:
        # merge 2x2 sibling blocks fully present; sibling pairing must floor
        # the integer cell index (round() would tie-break half-integers to
        # the even neighbor and group non-siblings, letting a merged carrier
        # stick out of the target set)
        ix = np.round(x / side).astype(np.int64) >> 1
        iy = np.round(y / side).astype(np.int64) >> 1
        key = {}
        for bx, by in zip(ix, iy):
            key[(bx, by)] = key.get((bx, by), 0) + 1
        blocks = [k for k, cnt in key.items() if cnt == 4]
        if not blocks:
            break
        x = np.array([2 * bx * side for bx, _ in blocks])
        y = np.array([2 * by * side for _, by in blocks])
        side *= 2
    if x.size == 0:
        raise GeometryError("resolution too coarse for a capacity run")
    return CapacityProblem(dictionary=CellDictionary(side, x, y),
                           angles=angles, tolerance=tolerance,
                           max_rounds=max_rounds)


def semiadditivity_probe(problem_union, problem_1, problem_2):
    """gamma(E1 union E2) / (gamma(E1) + gamma(E2)) with all three certified
    by the solver; diagnostic ratio."""
    cu = capacity_lower_bound(problem_union)
    c1 = capacity_lower_bound(problem_1)
    c2 = capacity_lower_bound(problem_2)
    denom = c1.certified + c2.certified
    ratio = math.inf if denom == 0 else cu.certified / denom
    return {"union": cu, "part1": c1, "part2": c2, "ratio": ratio}
