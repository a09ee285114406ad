"""Pure-NumPy evaluation kernels.

Everything here is a hot loop: given carrier geometry and a batch of
evaluation points, produce transform values.  The compiled extension
(`_kernels_c`) mirrors these signatures exactly; `kernels.py` picks one at
import time.
"""
import numpy as np

BACKEND = "python"

# Beyond this many side lengths from the cell center the multipole tail is
# below 1e-13 relative, so the closed form (which loses digits to log
# cancellation out there) is swapped for the series.
FAR_FIELD_SIDES = 6.0

_CORNER_TOL = 1e-12
_CORNER_NUDGE = 1e-9


def _cell_closed_scalar(x0, y0, s, z):
    # ccw edge sum of alpha*(b-a) + (alpha*z+beta)*Log((b-z)/(a-z)), /2i,
    # minus pi*conj(z) for z in the closed cell.  Log branch on the negative
    # real axis is forced to +i*pi so that on-edge values equal the interior
    # limit regardless of the sign of a 0.0 imaginary part.
    c0 = complex(x0, y0)
    corners = (c0, c0 + s, c0 + s + 1j * s, c0 + 1j * s)
    # evaluation exactly at a corner: the edge sum has log(0); take the
    # continuity limit by a tiny diagonal step toward the cell center
    for c in corners:
        if abs(z - c) <= _CORNER_TOL * s:
            ctr = c0 + (s / 2) * (1 + 1j)
            step = ctr - c
            z = c + (_CORNER_NUDGE * s / abs(step)) * step
            break
    total = 0j
    for k in range(4):
        a = corners[k]
        b = corners[(k + 1) % 4]
        e = b - a
        tau = e / abs(e)
        alpha = np.conj(tau) / tau
        beta = np.conj(a) - alpha * a
        ratio = (b - z) / (a - z)
        L = np.log(ratio)
        if ratio.imag == 0.0 and ratio.real < 0.0:
            L = complex(L.real, np.pi)
        total += alpha * e + (alpha * z + beta) * L
    val = total / 2j
    if x0 <= z.real <= x0 + s and y0 <= z.imag <= y0 + s:
        val -= np.pi * np.conj(z)
    return val


def _cell_far_scalar(x0, y0, s, z):
    u = z - complex(x0 + s / 2, y0 + s / 2)
    m0 = s * s
    m4 = -(s ** 6) / 60.0
    m8 = (s ** 10) / 720.0
    iu = 1.0 / u
    iu2 = iu * iu
    iu4 = iu2 * iu2
    return -(m0 * iu + m4 * iu4 * iu + m8 * iu4 * iu4 * iu)


def cell_transform(x0, y0, s, z):
    """Cauchy transform of unit-density Lebesgue measure on the square
    [x0, x0+s] x [y0, y0+s], evaluated at scalar z.  Mass = s^2; apply
    weights outside."""
    zc = complex(z)
    dx = zc.real - (x0 + s / 2)
    dy = zc.imag - (y0 + s / 2)
    if dx * dx + dy * dy > (FAR_FIELD_SIDES * s) ** 2:
        return _cell_far_scalar(x0, y0, s, zc)
    return _cell_closed_scalar(x0, y0, s, zc)


def cell_matrix(cx, cy, s, z):
    """Transforms of n unit-density cells at m points -> (m, n) complex.

    cx, cy: cell lower-left corners (n,); s: common side; z: points (m,).
    Vectorized over points per cell; far points use the multipole tail.
    """
    cx = np.asarray(cx, dtype=float)
    cy = np.asarray(cy, dtype=float)
    z = np.asarray(z, dtype=complex)
    m, n = z.size, cx.size
    out = np.empty((m, n), dtype=complex)
    zre, zim = z.real, z.imag
    m0 = s * s
    m4 = -(s ** 6) / 60.0
    m8 = (s ** 10) / 720.0
    far2 = (FAR_FIELD_SIDES * s) ** 2
    for j in range(n):
        x0, y0 = cx[j], cy[j]
        ctr = complex(x0 + s / 2, y0 + s / 2)
        du = z - ctr
        far = (du.real ** 2 + du.imag ** 2) > far2
        near = ~far
        if far.any():
            iu = 1.0 / du[far]
            iu2 = iu * iu
            iu4 = iu2 * iu2
            out[far, j] = -(m0 * iu + m4 * iu4 * iu + m8 * iu4 * iu4 * iu)
        if near.any():
            out[near, j] = _cell_near_batch(x0, y0, s, z[near], zre[near], zim[near])
    return out


def _cell_near_batch(x0, y0, s, z, zre, zim):
    c0 = complex(x0, y0)
    corners = (c0, c0 + s, c0 + s + 1j * s, c0 + 1j * s)
    z = z.copy()
    ctr = c0 + (s / 2) * (1 + 1j)
    for c in corners:
        hit = np.abs(z - c) <= _CORNER_TOL * s
        if hit.any():
            step = ctr - c
            z[hit] = c + (_CORNER_NUDGE * s / abs(step)) * step
    total = np.zeros_like(z)
    for k in range(4):
        a = corners[k]
        b = corners[(k + 1) % 4]
        e = b - a
        tau = e / abs(e)
        alpha = np.conj(tau) / tau
        beta = np.conj(a) - alpha * a
        ratio = (b - z) / (a - z)
        L = np.log(ratio)
        onaxis = (ratio.imag == 0.0) & (ratio.real < 0.0)
        if onaxis.any():
            L = np.where(onaxis, L.real + 1j * np.pi, L)
        total += alpha * e + (alpha * z + beta) * L
    val = total / 2j
    inside = (zre >= x0) & (zre <= x0 + s) & (zim >= y0) & (zim <= y0 + s)
    # z may have been nudged off a corner; 'inside' uses the original point,
    # consistent with the closed-cell convention
    val[inside] -= np.pi * np.conj(z[inside])
    return val


def cell_apply(cx, cy, s, z, w):
    """sum_j w_j * (transform of cell j) at points z, without materializing
    the (m, n) matrix; memory O(m + n)."""
    cx = np.asarray(cx, dtype=float)
    cy = np.asarray(cy, dtype=float)
    w = np.asarray(w, dtype=complex)
    z = np.asarray(z, dtype=complex)
    out = np.zeros(z.shape, dtype=complex)
    zre, zim = z.real, z.imag
    m0 = s * s
    m4 = -(s ** 6) / 60.0
    m8 = (s ** 10) / 720.0
    far2 = (FAR_FIELD_SIDES * s) ** 2
    for j in range(cx.size):
        x0, y0 = cx[j], cy[j]
        ctr = complex(x0 + s / 2, y0 + s / 2)
        du = z - ctr
        far = (du.real ** 2 + du.imag ** 2) > far2
        near = ~far
        if far.any():
            iu = 1.0 / du[far]
            iu2 = iu * iu
            iu4 = iu2 * iu2
            out[far] += w[j] * (-(m0 * iu + m4 * iu4 * iu + m8 * iu4 * iu4 * iu))
        if near.any():
            out[near] += w[j] * _cell_near_batch(x0, y0, s, z[near],
                                                 zre[near], zim[near])
    return out


def menger_c2_pointwise(z, w):
    """Squared-curvature triple sum against point masses.

    z: points (n,) complex; w: nonnegative masses (n,).  Returns
    (total, per_point) where per_point[i] = sum over ordered pairs (j, k)
    of distinct indices != i of  w_j w_k 4 cross^2 / (d_ij^2 d_jk^2 d_ik^2)
    and total = sum_i w_i per_point[i] (each unordered triple of distinct
    points contributes 6 times, once per ordering).  Coincident points are
    skipped.  Vectorized in blocks: O(n^2) memory, O(n^3) flops via matmul.
    """
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=float)
    n = z.size
    if n < 3:
        return 0.0, np.zeros(n)
    X, Y = z.real.astype(float), z.imag.astype(float)
    dx = X[:, None] - X[None, :]
    dy = Y[:, None] - Y[None, :]
    D2 = dx * dx + dy * dy
    M = np.where(D2 > 0.0, 1.0 / np.where(D2 == 0.0, 1.0, D2), 0.0)
    pt = np.empty(n)
    block = 64
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        AX = dx[lo:hi] * (-1.0)      # X_j - X_i for i in block: -(X_i - X_j)
        AY = dy[lo:hi] * (-1.0)
        A = w[None, :] * M[lo:hi]    # w_j / d_ij^2 (0 at j = i or coincident)
        U1 = A * AX * AX
        U2 = A * AY * AY
        U3 = A * AX * AY
        V2 = U2 @ M
        V3 = U3 @ M
        # cross^2 expands to ax_j^2 ay_k^2 + ay_j^2 ax_k^2 - 2 (ax ay)_j (ax ay)_k
        pt[lo:hi] = 4.0 * (2.0 * (U1 * V2).sum(axis=1)
                           - 2.0 * (U3 * V3).sum(axis=1))
    return float(w @ pt), pt


def menger_c2(z, w):
    """Total squared-curvature triple sum (see menger_c2_pointwise)."""
    total, _ = menger_c2_pointwise(z, w)
    return total


_NEAR_GUARD = 0.1
_N_FIXED_PANELS = 8


def segment_transform(a, b, halfwidth_scale, z, gl_nodes, gl_weights):
    """Transform of the cos^2-windowed line measure on segment [a, b].

    Density along the segment (arclength parameter t in [-1/2, 1/2] after
    rescaling) is cos^2(pi*t); total mass = |b-a|/2.  On-segment points get
    the principal value.  gl_nodes/gl_weights: Gauss-Legendre rule on [-1,1]
    shared across panels.

    Points far from the carrier (in window coordinates) are evaluated by a
    fixed uniform panel rule, vectorized; points in the near zone fall back
    to a per-point scheme with panels geometrically graded toward the foot
    of the evaluation point (principal value when exactly on the carrier).
    """
    a = complex(a)
    b = complex(b)
    z = np.asarray(z, dtype=complex)
    ell = abs(b - a)
    tau = (b - a) / ell
    mid = (a + b) / 2
    u = (z - mid) / (ell * tau)
    out = np.empty_like(u, dtype=complex)
    flat = u.ravel()
    res = out.ravel()
    near = (np.abs(flat.imag) < _NEAR_GUARD) & (np.abs(flat.real) < 0.6)
    far = ~near
    if far.any():
        edges = np.linspace(-0.5, 0.5, _N_FIXED_PANELS + 1)
        half = (edges[1] - edges[0]) / 2
        mids = (edges[:-1] + edges[1:]) / 2
        nodes = (mids[:, None] + half * gl_nodes[None, :]).ravel()
        c = np.cos(np.pi * nodes)
        wts = (half * np.broadcast_to(gl_weights, (len(mids), len(gl_nodes)))
               ).ravel() * c * c
        uf = flat[far]
        acc = np.zeros(uf.size, dtype=complex)
        block = 8192
        for lo in range(0, uf.size, block):
            ub = uf[lo:lo + block]
            acc[lo:lo + block] = (wts[None, :] /
                                  (nodes[None, :] - ub[:, None])).sum(axis=1)
        res[far] = acc
    for idx in np.nonzero(near)[0]:
        res[idx] = _seg_profile(flat[idx], gl_nodes, gl_weights)
    return out / tau


def _seg_profile(u, gx, gw):
    # S(u) = int_{-1/2}^{1/2} cos^2(pi t)/(t-u) dt via singularity
    # subtraction at the foot point plus geometrically graded panels
    xs = min(max(u.real, -0.5), 0.5)
    cxs = np.cos(np.pi * xs)
    rxs = cxs * cxs
    d = max(abs(u.imag), 1e-9)
    edges = [xs]
    for side, lim in ((1.0, 0.5), (-1.0, -0.5)):
        t = xs
        step = d
        grown = []
        while (lim - t) * side > 1e-15:
            t2 = t + side * min(step, abs(lim - t))
            grown.append(t2)
            t = t2
            step *= 2.0
        if side > 0:
            edges = edges + grown
        else:
            edges = grown[::-1] + edges
    total = 0j
    for p in range(len(edges) - 1):
        lo, hi = edges[p], edges[p + 1]
        mid = (lo + hi) / 2
        hw = (hi - lo) / 2
        t = mid + hw * gx
        ct = np.cos(np.pi * t)
        total += hw * np.sum(gw * (ct * ct - rxs) / (t - u))
    q_num = 0.5 - u
    q_den = -0.5 - u
    if q_num == 0 or q_den == 0:
        # Query sits exactly on a window endpoint, where the density (and
        # hence the subtraction constant rxs) vanishes; the lam term's limit
        # is zero, so skip it rather than evaluate log(0).
        return total
    if abs(u.imag) < 1e-14 and -0.5 < u.real < 0.5:
        lam = complex(np.log((0.5 - u.real) / (0.5 + u.real)), 0.0)
    else:
        lam = np.log(q_num / q_den)
    return total + rxs * lam
