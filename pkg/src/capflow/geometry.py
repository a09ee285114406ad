"""Pixel geometry: compact-set models, component labels, dyadic frames,
and the smooth partition of unity.

Conventions.  A set model is a boolean bitmap on a square cell grid of pitch
h; cell (i, j) covers [x0 + i*h, x0 + (i+1)*h] x [y0 + j*h, y0 + (j+1)*h] and
is filled iff its center lies in the described set.  Components of the
complement use 4-connectivity, boundary adjacency uses 8-connectivity
(diagonal leaks are a flood-fill hazard, not a boundary hazard).
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import GeometryError

# tensor-window transition half-width, in grid units; at 3/8 the measured
# sup|dbar phi|*delta equals 1.0 exactly (frozen regression constant)
DEFAULT_TRANSITION = 0.375

_FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass
class CompactSetModel:
    h: float
    x0: float
    y0: float
    mask: np.ndarray              # bool (ny, nx): True = K cell
    complement_labels: np.ndarray  # int: 0 unbounded component, 1.. holes, -1 on K
    interior_mask: np.ndarray
    boundary_mask: np.ndarray
    interior_labels: np.ndarray    # int: 1.. interior components, 0 elsewhere
    inner_boundary_mask: np.ndarray
    n_holes: int
    n_interior: int
    declared_inner: bool = False
    spec: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.mask.shape

    def cell_centers(self, mask=None):
        """Complex centers of the True cells of `mask` (default: K cells)."""
        m = self.mask if mask is None else mask
        jj, ii = np.nonzero(m)
        return (self.x0 + (ii + 0.5) * self.h) + 1j * (self.y0 + (jj + 0.5) * self.h)

    def cell_origins(self, mask=None):
        m = self.mask if mask is None else mask
        jj, ii = np.nonzero(m)
        return self.x0 + ii * self.h, self.y0 + jj * self.h

    def hole_mask(self, m):
        if not 1 <= m <= self.n_holes:
            raise GeometryError(f"no hole U_{m}")
        return self.complement_labels == m

    def bounds(self):
        ny, nx = self.mask.shape
        return (self.x0, self.y0, self.x0 + nx * self.h, self.y0 + ny * self.h)

    def contains_point(self, z):
        i = int(np.floor((z.real - self.x0) / self.h))
        j = int(np.floor((z.imag - self.y0) / self.h))
        ny, nx = self.mask.shape
        if 0 <= i < nx and 0 <= j < ny:
            return bool(self.mask[j, i])
        return False


def _raster(spec, xs, ys):
    """Membership of the grid of cell centers (xs row, ys column) in the set."""
    X, Y = np.meshgrid(xs, ys)
    kind = spec["kind"]
    if kind == "disk":
        cx, cy = spec["center"]
        return (X - cx) ** 2 + (Y - cy) ** 2 <= spec["r"] ** 2
    if kind == "square":
        cx, cy = spec["center"]
        half = spec["side"] / 2.0
        return (np.abs(X - cx) <= half) & (np.abs(Y - cy) <= half)
    if kind == "annulus":
        cx, cy = spec["center"]
        r2 = (X - cx) ** 2 + (Y - cy) ** 2
        return (r2 >= spec["r1"] ** 2) & (r2 <= spec["r2"] ** 2)
    if kind == "swiss_cheese":
        cx, cy = spec["center"]
        half = spec["side"] / 2.0
        out = (np.abs(X - cx) <= half) & (np.abs(Y - cy) <= half)
        for hole in spec["holes"]:
            hx, hy = hole["center"]
            out &= (X - hx) ** 2 + (Y - hy) ** 2 >= hole["r"] ** 2
        return out
    if kind == "fat_cantor":
        return _fat_cantor_mask(spec, xs, ys)
    if kind == "union":
        out = np.zeros_like(X, dtype=bool)
        for part in spec["parts"]:
            out |= _raster(part, xs, ys)
        return out
    if kind == "difference":
        out = _raster(spec["parts"][0], xs, ys)
        for part in spec["parts"][1:]:
            out &= ~_raster(part, xs, ys)
        return out
    raise GeometryError(f"unknown set kind {kind!r}")


def fat_cantor_intervals(n_cells, depth, ratio):
    """Integer sub-intervals (start, length) of a fat-Cantor construction on
    n_cells cells: each stage keeps two end blocks of ~ratio/2 of the parent,
    removing a middle gap of at least one cell.  Stops splitting when a block
    would drop below 2 cells, so the result always has positive measure."""
    intervals = [(0, n_cells)]
    for _ in range(depth):
        nxt = []
        for start, length in intervals:
            keep = int(round(length * ratio / 2.0))
            if keep < 1 or 2 * keep >= length:
                nxt.append((start, length))
                continue
            nxt.append((start, keep))
            nxt.append((start + length - keep, keep))
        if nxt == intervals:
            break
        intervals = nxt
    return intervals


def _fat_cantor_mask(spec, xs, ys):
    cx, cy = spec["center"]
    hw = spec["halfwidth"]
    depth = spec.get("depth", 4)
    ratio = spec.get("ratio", 0.75)
    h = xs[1] - xs[0] if len(xs) > 1 else 1.0
    n = max(int(round(2 * hw / h)), 1)
    ivs = fat_cantor_intervals(n, depth, ratio)
    # one axis membership per coordinate, product set
    def axis_member(c, lo):
        idx = np.floor((c - lo) / h).astype(int)
        member = np.zeros(c.shape, dtype=bool)
        for start, length in ivs:
            member |= (idx >= start) & (idx < start + length)
        member &= (c >= lo) & (c <= lo + n * h)
        return member

    mx = axis_member(np.asarray(xs), cx - hw)
    my = axis_member(np.asarray(ys), cy - hw)
    return np.outer(my, mx)


def _spec_bounds(spec):
    kind = spec["kind"]
    if kind == "disk":
        cx, cy = spec["center"]
        r = spec["r"]
        return cx - r, cy - r, cx + r, cy + r
    if kind in ("square", "swiss_cheese"):
        cx, cy = spec["center"]
        half = spec["side"] / 2.0
        return cx - half, cy - half, cx + half, cy + half
    if kind == "annulus":
        cx, cy = spec["center"]
        r = spec["r2"]
        return cx - r, cy - r, cx + r, cy + r
    if kind == "fat_cantor":
        cx, cy = spec["center"]
        hw = spec["halfwidth"]
        return cx - hw, cy - hw, cx + hw, cy + hw
    if kind in ("union", "difference"):
        bs = [_spec_bounds(p) for p in spec["parts"]]
        if kind == "difference":
            bs = bs[:1]
        return (min(b[0] for b in bs), min(b[1] for b in bs),
                max(b[2] for b in bs), max(b[3] for b in bs))
    raise GeometryError(f"unknown set kind {kind!r}")


def _validate(spec, h):
    kind = spec["kind"]
    if kind == "disk" and spec["r"] < 2 * h:
        raise GeometryError("resolution too coarse for disk radius")
    if kind == "annulus":
        if not spec["r1"] < spec["r2"]:
            raise GeometryError("annulus requires r1 < r2")
        if spec["r2"] - spec["r1"] < 2 * h or spec["r1"] < 2 * h:
            raise GeometryError("resolution too coarse for annulus width")
    if kind == "square" and spec["side"] < 2 * h:
        raise GeometryError("resolution too coarse for square side")
    if kind == "swiss_cheese":
        if spec["side"] < 2 * h:
            raise GeometryError("resolution too coarse for base square")
        cx, cy = spec["center"]
        half = spec["side"] / 2.0
        holes = spec["holes"]
        for a in holes:
            if a["r"] < 2 * h:
                raise GeometryError("resolution too coarse for a removed disk")
            ax, ay = a["center"]
            if (abs(ax - cx) + a["r"] > half) or (abs(ay - cy) + a["r"] > half):
                raise GeometryError("removed disk not inside the base square")
        for i, a in enumerate(holes):
            for b in holes[i + 1:]:
                d = np.hypot(a["center"][0] - b["center"][0],
                             a["center"][1] - b["center"][1])
                if d < a["r"] + b["r"]:
                    raise GeometryError("removed disks overlap")
    if kind == "fat_cantor" and spec["halfwidth"] < 4 * h:
        raise GeometryError("resolution too coarse for fat-Cantor block")
    if kind in ("union", "difference"):
        for part in spec["parts"]:
            _validate(part, h)


def build_set(spec, h, pad_cells=4):
    """Rasterize a set description into a labeled CompactSetModel."""
    if h <= 0:
        raise GeometryError("resolution must be positive")
    _validate(spec, h)
    bx0, by0, bx1, by1 = _spec_bounds(spec)
    # snap origin to the h-grid so dyadic frames and bitmaps stay aligned
    x0 = (np.floor(bx0 / h) - pad_cells) * h
    y0 = (np.floor(by0 / h) - pad_cells) * h
    nx = int(np.ceil((bx1 - x0) / h)) + pad_cells
    ny = int(np.ceil((by1 - y0) / h)) + pad_cells
    xs = x0 + (np.arange(nx) + 0.5) * h
    ys = y0 + (np.arange(ny) + 0.5) * h
    mask = _raster(spec, xs, ys)
    if not mask.any():
        raise GeometryError("resolution too coarse: empty bitmap")

    comp = ~mask
    comp_labels, n_comp = ndimage.label(comp, structure=_FOUR)
    # unbounded component: touches the frame (guaranteed by padding)
    frame_labels = set(comp_labels[0, :]) | set(comp_labels[-1, :]) | \
        set(comp_labels[:, 0]) | set(comp_labels[:, -1])
    frame_labels.discard(0)
    if len(frame_labels) != 1:
        raise GeometryError("outer complement region is not connected")
    u0 = frame_labels.pop()

    # relabel: 0 = U_0, 1..n = holes ordered by (row, col) of first cell
    out_labels = np.full(mask.shape, -1, dtype=int)
    out_labels[comp_labels == u0] = 0
    holes = [lab for lab in range(1, n_comp + 1) if lab != u0]
    order = []
    for lab in holes:
        jj, ii = np.nonzero(comp_labels == lab)
        order.append((jj.min(), ii[jj == jj.min()].min(), lab))
    order.sort()
    for m, (_, _, lab) in enumerate(order, start=1):
        out_labels[comp_labels == lab] = m

    # boundary: K cells 8-adjacent to the complement
    comp_dil = ndimage.binary_dilation(comp, structure=_EIGHT)
    boundary = mask & comp_dil
    interior = mask & ~boundary
    interior_labels, n_int = ndimage.label(interior, structure=_FOUR)

    # inner boundary: boundary cells 8-adjacent to no resolved complement
    # cell.  Every complement component of a finite bitmap is resolved, so
    # this is empty unless the constructor declares an accumulation locus
    # (the fat-Cantor model stands for a limit set whose gaps shrink below
    # any pixel size).
    declared = spec["kind"] == "fat_cantor"
    if declared:
        inner = boundary.copy()
    else:
        inner = np.zeros_like(mask)

    return CompactSetModel(
        h=h, x0=x0, y0=y0, mask=mask,
        complement_labels=out_labels,
        interior_mask=interior, boundary_mask=boundary,
        interior_labels=interior_labels,
        inner_boundary_mask=inner,
        n_holes=len(order), n_interior=n_int,
        declared_inner=declared, spec=spec,
    )


def write_pgm(model, path):
    """Portable graymap of the labeled bitmap for visual inspection."""
    ny, nx = model.mask.shape
    img = np.full((ny, nx), 255, dtype=np.uint8)
    img[model.mask] = 0
    img[model.boundary_mask] = 80
    img[model.inner_boundary_mask] = 40
    img[(model.complement_labels > 0)] = 180
    with open(path, "wb") as fh:
        fh.write(f"P5 {nx} {ny} 255\n".encode())
        fh.write(img[::-1].tobytes())


# ---------------------------------------------------------------------------
# smooth partition of unity

def window(t, s=DEFAULT_TRANSITION):
    """1-D unit-grid window: 1 on the plateau |t| <= 1/2 - s, smoothstep down
    to 0 at |t| = 1/2 + s.  Integer translates sum to 1 exactly because the
    transition profile S satisfies S(u) + S(1-u) = 1."""
    t = np.asarray(t, dtype=float)
    u = np.clip((0.5 + s - np.abs(t)) / (2 * s), 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def window_deriv(t, s=DEFAULT_TRANSITION):
    t = np.asarray(t, dtype=float)
    u = (0.5 + s - np.abs(t)) / (2 * s)
    inside = (u > 0.0) & (u < 1.0)
    du = 6.0 * u * (1.0 - u)
    return np.where(inside, -np.sign(t) * du / (2 * s), 0.0)


@dataclass
class DyadicFrame:
    """Level-n grid of squares S_ij of side delta = 2^-n with centers
    ((i+1/2)delta, (j+1/2)delta) and the tensor-window partition of unity."""
    n: int
    i_range: tuple   # [i_min, i_max] inclusive
    j_range: tuple
    s: float = DEFAULT_TRANSITION

    @property
    def delta(self):
        return 2.0 ** (-self.n)

    @classmethod
    def covering(cls, bounds, n, s=DEFAULT_TRANSITION, margin=1):
        x0, y0, x1, y1 = bounds
        d = 2.0 ** (-n)
        return cls(
            n=n,
            i_range=(int(np.floor(x0 / d)) - margin, int(np.ceil(x1 / d)) + margin),
            j_range=(int(np.floor(y0 / d)) - margin, int(np.ceil(y1 / d)) + margin),
            s=s,
        )

    def center(self, i, j):
        d = self.delta
        return (i + 0.5) * d + 1j * (j + 0.5) * d

    def indices(self):
        for i in range(self.i_range[0], self.i_range[1] + 1):
            for j in range(self.j_range[0], self.j_range[1] + 1):
                yield (i, j)

    def phi(self, i, j, z):
        """Window value phi_ij at complex points z."""
        z = np.asarray(z, dtype=complex)
        d = self.delta
        return window(z.real / d - (i + 0.5), self.s) * \
            window(z.imag / d - (j + 0.5), self.s)

    def dbar_phi(self, i, j, z):
        """Analytic (d/dx + i d/dy)/2 of phi_ij at z."""
        z = np.asarray(z, dtype=complex)
        d = self.delta
        tx = z.real / d - (i + 0.5)
        ty = z.imag / d - (j + 0.5)
        wx = window(tx, self.s)
        wy = window(ty, self.s)
        dwx = window_deriv(tx, self.s) / d
        dwy = window_deriv(ty, self.s) / d
        return 0.5 * (dwx * wy + 1j * wx * dwy)


def partition_of_unity(frame, z):
    """All squares whose double square contains z, with phi and dbar phi.

    Returns a list of ((i, j), phi, dbar_phi); the phi values sum to 1.
    """
    z = complex(z)
    d = frame.delta
    out = []
    i0 = int(np.floor(z.real / d - 0.5))
    j0 = int(np.floor(z.imag / d - 0.5))
    for i in range(i0 - 1, i0 + 2):
        for j in range(j0 - 1, j0 + 2):
            p = float(frame.phi(i, j, z))
            dp = complex(frame.dbar_phi(i, j, z))
            if p != 0.0 or dp != 0.0:
                out.append(((i, j), p, dp))
    return out


# ---------------------------------------------------------------------------
# modulus of continuity

@dataclass
class ModulusReport:
    handle_id: str
    deltas: list
    omegas: list


def modulus_of_continuity(f, region, deltas, rng, n_pairs=4000,
                          handle_id="f", point_filter=None):
    """omega(f, delta) = sup |f(p) - f(q)| over sampled pairs with
    |p - q| <= delta.

    One master pool of pairs at log-spaced separations serves every delta,
    so the report is monotone by construction.  point_filter, when given,
    drops pairs with either endpoint at an excluded location (e.g. on a
    carrier where f is only defined by one-sided limits).
    """
    x0, y0, x1, y1 = region
    if x1 <= x0 or y1 <= y0:
        raise GeometryError("empty region")
    deltas = sorted(deltas, reverse=True)
    dmax = deltas[0]
    p = (x0 + (x1 - x0) * rng.random(n_pairs)) + \
        1j * (y0 + (y1 - y0) * rng.random(n_pairs))
    # separations cover [dmin/4, dmax] log-uniformly
    dmin = deltas[-1]
    r = np.exp(rng.uniform(np.log(dmin / 4), np.log(dmax), n_pairs))
    theta = rng.uniform(0, 2 * np.pi, n_pairs)
    q = p + r * np.exp(1j * theta)
    q = np.clip(q.real, x0, x1) + 1j * np.clip(q.imag, y0, y1)
    if point_filter is not None:
        ok = np.asarray([point_filter(pp) and point_filter(qq)
                         for pp, qq in zip(p, q)])
        p, q = p[ok], q[ok]
    sep = np.abs(p - q)
    fp = np.asarray(f(p))
    fq = np.asarray(f(q))
    diff = np.abs(fp - fq)
    omegas = []
    for d in deltas:
        sel = sep <= d
        omegas.append(float(diff[sel].max()) if sel.any() else 0.0)
    return ModulusReport(handle_id=handle_id,
                         deltas=list(deltas), omegas=omegas)
