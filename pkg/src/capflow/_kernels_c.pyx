# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled evaluation kernels.

Mirrors the signatures of the NumPy module exactly; `kernels.py` selects
whichever backend imports.  Scalar complex arithmetic is done in C, which
pays off most on the per-point graded-panel path (principal values near or
on a segment carrier) and on dense cell matrices.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, cos, fabs, log, sqrt, M_PI

cnp.import_array()

BACKEND = "compiled"

FAR_FIELD_SIDES = 6.0

cdef double _CORNER_TOL = 1e-12
cdef double _CORNER_NUDGE = 1e-9
cdef double _NEAR_GUARD = 0.1
cdef int _N_FIXED_PANELS = 8


cdef inline double complex _clog(double complex v) noexcept nogil:
    # complex log with the branch on the negative real axis forced to +i*pi
    # (numpy gives -i*pi for a -0.0 imaginary part; carrier evaluation wants
    # the interior limit on both edge orientations)
    cdef double re = v.real
    cdef double im = v.imag
    if im == 0.0 and re < 0.0:
        return log(-re) + 1j * M_PI
    return log(sqrt(re * re + im * im)) + 1j * atan2(im, re)


cdef double complex _cell_closed(double x0, double y0, double s,
                                 double complex z) noexcept nogil:
    cdef double complex c0 = x0 + 1j * y0
    cdef double complex[4] corners
    cdef double complex a, b, e, tau, alpha, beta, ratio, L, total, ctr, step
    cdef double zre0 = z.real
    cdef double zim0 = z.imag
    cdef int k
    corners[0] = c0
    corners[1] = c0 + s
    corners[2] = c0 + s + 1j * s
    corners[3] = c0 + 1j * s
    ctr = c0 + (s / 2) * (1 + 1j)
    for k in range(4):
        a = z - corners[k]
        if sqrt(a.real * a.real + a.imag * a.imag) <= _CORNER_TOL * s:
            step = ctr - corners[k]
            z = corners[k] + (_CORNER_NUDGE * s /
                              sqrt(step.real * step.real +
                                   step.imag * step.imag)) * step
            break
    total = 0
    for k in range(4):
        a = corners[k]
        b = corners[(k + 1) % 4]
        e = b - a
        tau = e / sqrt(e.real * e.real + e.imag * e.imag)
        alpha = (tau.real - 1j * tau.imag) / tau
        beta = (a.real - 1j * a.imag) - alpha * a
        ratio = (b - z) / (a - z)
        L = _clog(ratio)
        total = total + alpha * e + (alpha * z + beta) * L
    total = total / 2j
    # 'inside' uses the original point; the conjugate term uses the (possibly
    # corner-nudged) point, matching the NumPy batch path
    if x0 <= zre0 <= x0 + s and y0 <= zim0 <= y0 + s:
        total = total - M_PI * (z.real - 1j * z.imag)
    return total


cdef inline double complex _cell_far(double x0, double y0, double s,
                                     double complex z) noexcept nogil:
    cdef double complex u = z - (x0 + s / 2 + 1j * (y0 + s / 2))
    cdef double m0 = s * s
    cdef double m4 = -(s * s * s * s * s * s) / 60.0
    cdef double m8 = (m0 * m0 * m0 * m0 * m0) / 720.0
    cdef double complex iu = 1.0 / u
    cdef double complex iu2 = iu * iu
    cdef double complex iu4 = iu2 * iu2
    return -(m0 * iu + m4 * iu4 * iu + m8 * iu4 * iu4 * iu)


def cell_transform(double x0, double y0, double s, z):
    """Cauchy transform of unit-density Lebesgue measure on the square
    [x0, x0+s] x [y0, y0+s], evaluated at scalar z.  Mass = s^2; apply
    weights outside."""
    cdef double complex zc = complex(z)
    cdef double dx = zc.real - (x0 + s / 2)
    cdef double dy = zc.imag - (y0 + s / 2)
    if dx * dx + dy * dy > (FAR_FIELD_SIDES * s) ** 2:
        return complex(_cell_far(x0, y0, s, zc))
    return complex(_cell_closed(x0, y0, s, zc))


def cell_matrix(cx, cy, double s, z):
    """Transforms of n unit-density cells at m points -> (m, n) complex.

    cx, cy: cell lower-left corners (n,); s: common side; z: points (m,).
    """
    cdef cnp.ndarray[double, ndim=1] cxa = \
        np.ascontiguousarray(cx, dtype=np.float64).ravel()
    cdef cnp.ndarray[double, ndim=1] cya = \
        np.ascontiguousarray(cy, dtype=np.float64).ravel()
    cdef cnp.ndarray[double complex, ndim=1] za = \
        np.ascontiguousarray(z, dtype=np.complex128).ravel()
    cdef Py_ssize_t m = za.shape[0]
    cdef Py_ssize_t n = cxa.shape[0]
    cdef cnp.ndarray[double complex, ndim=2] out = \
        np.empty((m, n), dtype=np.complex128)
    cdef Py_ssize_t i, j
    cdef double far2 = (FAR_FIELD_SIDES * s) ** 2
    cdef double x0, y0, dx, dy
    cdef double complex zi
    with nogil:
        for i in range(m):
            zi = za[i]
            for j in range(n):
                x0 = cxa[j]
                y0 = cya[j]
                dx = zi.real - (x0 + s / 2)
                dy = zi.imag - (y0 + s / 2)
                if dx * dx + dy * dy > far2:
                    out[i, j] = _cell_far(x0, y0, s, zi)
                else:
                    out[i, j] = _cell_closed(x0, y0, s, zi)
    return out


def cell_apply(cx, cy, double s, z, w):
    """sum_j w_j * (transform of cell j) at points z, memory O(m + n)."""
    cdef cnp.ndarray[double, ndim=1] cxa = \
        np.ascontiguousarray(cx, dtype=np.float64).ravel()
    cdef cnp.ndarray[double, ndim=1] cya = \
        np.ascontiguousarray(cy, dtype=np.float64).ravel()
    cdef cnp.ndarray[double complex, ndim=1] wa = \
        np.ascontiguousarray(w, dtype=np.complex128).ravel()
    za_in = np.asarray(z, dtype=np.complex128)
    cdef cnp.ndarray[double complex, ndim=1] za = \
        np.ascontiguousarray(za_in).ravel()
    cdef Py_ssize_t m = za.shape[0]
    cdef Py_ssize_t n = cxa.shape[0]
    cdef cnp.ndarray[double complex, ndim=1] out = \
        np.zeros(m, dtype=np.complex128)
    cdef Py_ssize_t i, j
    cdef double far2 = (FAR_FIELD_SIDES * s) ** 2
    cdef double x0, y0, dx, dy
    cdef double complex zi, acc
    with nogil:
        for i in range(m):
            zi = za[i]
            acc = 0
            for j in range(n):
                x0 = cxa[j]
                y0 = cya[j]
                dx = zi.real - (x0 + s / 2)
                dy = zi.imag - (y0 + s / 2)
                if dx * dx + dy * dy > far2:
                    acc = acc + wa[j] * _cell_far(x0, y0, s, zi)
                else:
                    acc = acc + wa[j] * _cell_closed(x0, y0, s, zi)
            out[i] = acc
    return out.reshape(za_in.shape)


def menger_c2_pointwise(z, w):
    """Squared-curvature triple sum against point masses.

    Returns (total, per_point); per_point[i] sums w_j w_k 4 cross^2 /
    (d_ij^2 d_jk^2 d_ik^2) over ordered pairs (j, k) of distinct indices
    != i.  Coincident points are skipped.  Direct j<k loop, O(1) extra
    memory."""
    cdef cnp.ndarray[double complex, ndim=1] za = \
        np.ascontiguousarray(z, dtype=np.complex128).ravel()
    cdef cnp.ndarray[double, ndim=1] wa = \
        np.ascontiguousarray(w, dtype=np.float64).ravel()
    cdef Py_ssize_t n = za.shape[0]
    cdef cnp.ndarray[double, ndim=1] pt = np.zeros(n, dtype=np.float64)
    if n < 3:
        return 0.0, pt
    cdef cnp.ndarray[double, ndim=1] X = np.ascontiguousarray(za.real)
    cdef cnp.ndarray[double, ndim=1] Y = np.ascontiguousarray(za.imag)
    cdef Py_ssize_t i, j, k
    cdef double acc, dxj, dyj, d2ij, aj, dxk, dyk, d2ik
    cdef double ex, ey, d2jk, cross, total
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(n):
                if j == i:
                    continue
                dxj = X[j] - X[i]
                dyj = Y[j] - Y[i]
                d2ij = dxj * dxj + dyj * dyj
                if d2ij == 0.0:
                    continue
                aj = wa[j] / d2ij
                for k in range(j + 1, n):
                    if k == i:
                        continue
                    dxk = X[k] - X[i]
                    dyk = Y[k] - Y[i]
                    d2ik = dxk * dxk + dyk * dyk
                    ex = X[j] - X[k]
                    ey = Y[j] - Y[k]
                    d2jk = ex * ex + ey * ey
                    if d2ik == 0.0 or d2jk == 0.0:
                        continue
                    cross = dxj * dyk - dyj * dxk
                    # ordered pairs (j,k) and (k,j) contribute equally
                    acc += 8.0 * aj * wa[k] * cross * cross / (d2ik * d2jk)
            pt[i] = acc
        total = 0.0
        for i in range(n):
            total += wa[i] * pt[i]
    return float(total), pt


def menger_c2(z, w):
    """Total squared-curvature triple sum (see menger_c2_pointwise)."""
    total, _ = menger_c2_pointwise(z, w)
    return total


cdef double complex _seg_profile_c(double complex u, double[::1] gx,
                                   double[::1] gw) noexcept nogil:
    # S(u) = int_{-1/2}^{1/2} cos^2(pi t)/(t-u) dt via singularity
    # subtraction at the foot point plus geometrically graded panels
    cdef double xs = u.real
    if xs < -0.5:
        xs = -0.5
    elif xs > 0.5:
        xs = 0.5
    cdef double cxs = cos(M_PI * xs)
    cdef double rxs = cxs * cxs
    cdef double d = fabs(u.imag)
    if d < 1e-9:
        d = 1e-9
    cdef double complex total = 0
    cdef Py_ssize_t ng = gx.shape[0]
    cdef double lo, hi, t_edge, step, take, mid, hw, tq, ct
    cdef double side_sign, lim
    cdef Py_ssize_t q, sweep
    cdef double complex panel
    for sweep in range(2):
        side_sign = 1.0 if sweep == 0 else -1.0
        lim = 0.5 * side_sign
        t_edge = xs
        step = d
        while (lim - t_edge) * side_sign > 1e-15:
            take = step
            if take > fabs(lim - t_edge):
                take = fabs(lim - t_edge)
            lo = t_edge
            hi = t_edge + side_sign * take
            t_edge = hi
            step *= 2.0
            mid = (lo + hi) / 2
            hw = take / 2          # ascending panel regardless of sweep
            panel = 0
            for q in range(ng):
                tq = mid + hw * gx[q]
                ct = cos(M_PI * tq)
                panel = panel + gw[q] * (ct * ct - rxs) / (tq - u)
            total = total + hw * panel
    cdef double complex q_num = 0.5 - u
    cdef double complex q_den = -0.5 - u
    if (q_num.real == 0.0 and q_num.imag == 0.0) or \
            (q_den.real == 0.0 and q_den.imag == 0.0):
        # on a window endpoint the density (hence rxs) vanishes; the lam
        # term's limit is zero
        return total
    cdef double complex lam
    if fabs(u.imag) < 1e-14 and -0.5 < u.real < 0.5:
        lam = log((0.5 - u.real) / (0.5 + u.real))
    else:
        lam = _clog(q_num / q_den)
    return total + rxs * lam


def segment_transform(a, b, double halfwidth_scale, z, gl_nodes, gl_weights):
    """Transform of the cos^2-windowed line measure on segment [a, b].

    Density along the segment (arclength parameter t in [-1/2, 1/2] after
    rescaling) is cos^2(pi*t); total mass = |b-a|/2.  On-segment points get
    the principal value; near points use graded panels, far points a fixed
    uniform panel rule.
    """
    cdef double complex ac = complex(a)
    cdef double complex bc = complex(b)
    za_in = np.asarray(z, dtype=np.complex128)
    cdef cnp.ndarray[double complex, ndim=1] za = \
        np.ascontiguousarray(za_in).ravel()
    cdef double[::1] gx = np.ascontiguousarray(gl_nodes, dtype=np.float64)
    cdef double[::1] gw = np.ascontiguousarray(gl_weights, dtype=np.float64)
    cdef double complex diff = bc - ac
    cdef double ell = sqrt(diff.real * diff.real + diff.imag * diff.imag)
    cdef double complex tau = diff / ell
    cdef double complex mid = (ac + bc) / 2
    cdef Py_ssize_t m = za.shape[0]
    cdef cnp.ndarray[double complex, ndim=1] out = \
        np.empty(m, dtype=np.complex128)
    # fixed uniform panels for the far zone, with the cos^2 weight baked in
    cdef Py_ssize_t ng = gx.shape[0]
    cdef Py_ssize_t nn = _N_FIXED_PANELS * ng
    cdef cnp.ndarray[double, ndim=1] nodes = np.empty(nn, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] wts = np.empty(nn, dtype=np.float64)
    cdef double half = 0.5 / _N_FIXED_PANELS
    cdef double pmid, cn
    cdef Py_ssize_t p, q, i
    for p in range(_N_FIXED_PANELS):
        pmid = -0.5 + (2 * p + 1) * half
        for q in range(ng):
            nodes[p * ng + q] = pmid + half * gx[q]
            cn = cos(M_PI * nodes[p * ng + q])
            wts[p * ng + q] = half * gw[q] * cn * cn
    cdef double complex u, acc
    with nogil:
        for i in range(m):
            u = (za[i] - mid) / (ell * tau)
            if fabs(u.imag) < _NEAR_GUARD and fabs(u.real) < 0.6:
                out[i] = _seg_profile_c(u, gx, gw)
            else:
                acc = 0
                for q in range(nn):
                    acc = acc + wts[q] / (nodes[q] - u)
                out[i] = acc
            out[i] = out[i] / tau
    return out.reshape(za_in.shape)
