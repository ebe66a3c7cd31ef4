"""Uniform tensor grids, node-sampled fields, box domains and discrete calculus.

All fields in this package live on a :class:`Grid3`: an axis-aligned uniform
lattice with isotropic spacing.  Scalar fields are stored as ``(nx, ny, nz)``
arrays, vector fields as ``(nx, ny, nz, 3)`` with components ordered x, y, z.
Differential operators use second-order central stencils in the interior and
one-sided second-order stencils on the outermost layer, so every operator maps
node data to node data on the same grid.  Exact algebraic transposes of the
derivative stencils are provided for use in adjoint-based optimisation.

Integrals over a box domain are midpoint Riemann sums with weight ``h**3`` per
inside node; boundary integrals use face-area weights with trapezoid tapering
along the tangential directions (so the weights of each box face sum to its
exact geometric area).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Grid3",
    "ScalarField",
    "VectorField",
    "DomainMask",
    "deriv",
    "deriv_transpose",
    "discrete_grad",
    "discrete_div",
    "discrete_curl",
    "grad_values",
    "div_values",
    "curl_values",
    "curl_transpose_values",
    "grad_transpose_values",
    "integrate",
    "mean_value",
    "lp_norm",
    "hcurl_norm",
    "holder_norm_points",
    "holder_boundary_norm",
    "subgrid_offset",
    "embed",
    "restrict",
    "trilinear_indices",
    "trilinear_sample",
]


@dataclass(frozen=True)
class Grid3:
    """Axis-aligned uniform grid with isotropic spacing.

    Parameters
    ----------
    dims : tuple of int
        Node counts ``(nx, ny, nz)``, each at least 4 so that the one-sided
        second-order stencils fit.
    origin : tuple of float
        Position of node ``(0, 0, 0)``.
    spacing : float
        Node spacing ``h``, identical along all axes.
    """

    dims: tuple[int, int, int]
    origin: tuple[float, float, float]
    spacing: float

    def __post_init__(self) -> None:
        dims = tuple(int(n) for n in self.dims)
        origin = tuple(float(c) for c in self.origin)
        if len(dims) != 3 or len(origin) != 3:
            raise ValueError("dims and origin must have length 3")
        if any(n < 4 for n in dims):
            raise ValueError(f"each grid dimension must be >= 4, got {dims}")
        if not (float(self.spacing) > 0.0) or not np.isfinite(self.spacing):
            raise ValueError(f"spacing must be positive and finite, got {self.spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def n_nodes(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @cached_property
    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """1-D node coordinate arrays along x, y and z."""
        return tuple(
            self.origin[d] + self.spacing * np.arange(self.dims[d]) for d in range(3)
        )

    @cached_property
    def coords(self) -> np.ndarray:
        """Node positions as an ``(nx, ny, nz, 3)`` array."""
        x, y, z = np.meshgrid(*self.axes, indexing="ij")
        out = np.stack([x, y, z], axis=-1)
        out.setflags(write=False)
        return out

    @property
    def extent(self) -> tuple[tuple[float, float], ...]:
        """Physical ``(min, max)`` per axis."""
        return tuple(
            (self.origin[d], self.origin[d] + self.spacing * (self.dims[d] - 1))
            for d in range(3)
        )

    @property
    def diameter(self) -> float:
        spans = [self.spacing * (n - 1) for n in self.dims]
        return float(np.sqrt(sum(s * s for s in spans)))

    def refine(self) -> "Grid3":
        """Grid with spacing halved; every coarse node is a fine node."""
        return Grid3(
            tuple(2 * (n - 1) + 1 for n in self.dims), self.origin, self.spacing / 2.0
        )

    def position(self, idx) -> np.ndarray:
        """Physical position(s) of integer node index/indices ``(..., 3)``."""
        idx = np.asarray(idx, dtype=float)
        return np.asarray(self.origin) + self.spacing * idx

    def __eq__(self, other) -> bool:
        if not isinstance(other, Grid3):
            return NotImplemented
        return (
            self.dims == other.dims
            and np.allclose(self.origin, other.origin, rtol=0.0, atol=1e-12 * self.spacing)
            and abs(self.spacing - other.spacing) <= 1e-12 * self.spacing
        )

    def __hash__(self) -> int:  # frozen dataclass with custom __eq__
        return hash((self.dims, self.origin, self.spacing))


def _check_values(grid: Grid3, values: np.ndarray, ncomp: int | None) -> np.ndarray:
    expected = grid.dims if ncomp is None else grid.dims + (ncomp,)
    arr = np.array(values, dtype=np.float64, order="C", copy=True)
    if arr.shape != expected:
        raise ValueError(f"field shape {arr.shape} does not match grid {expected}")
    if not np.isfinite(arr).all():
        raise ValueError("field contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarField:
    """Scalar node samples on a :class:`Grid3`.  Values are copied and frozen."""

    grid: Grid3
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _check_values(self.grid, self.values, None))


@dataclass(frozen=True)
class VectorField:
    """Vector node samples ``(nx, ny, nz, 3)`` on a :class:`Grid3`."""

    grid: Grid3
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _check_values(self.grid, self.values, 3))

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values**2, axis=-1))


class DomainMask:
    """Axis-aligned box of grid nodes with boundary-face bookkeeping.

    The box is given by inclusive node-index bounds ``ilo``/``ihi``.  Boundary
    faces are node-centred area patches: every node on the box shell appears
    once per exposed face together with the outward unit normal, the sample
    point shifted ``h/2`` along the normal, and a trapezoid-tapered area
    weight.  The weights of each box face sum to its exact geometric area.
    """

    def __init__(self, grid: Grid3, ilo=(0, 0, 0), ihi=None):
        if ihi is None:
            ihi = tuple(n - 1 for n in grid.dims)
        ilo = tuple(int(i) for i in ilo)
        ihi = tuple(int(i) for i in ihi)
        for d in range(3):
            if not (0 <= ilo[d] < ihi[d] <= grid.dims[d] - 1):
                raise ValueError(
                    f"box bounds {ilo}..{ihi} invalid for grid dims {grid.dims}"
                )
            if ihi[d] - ilo[d] < 1:
                raise ValueError("box must span at least 2 nodes per axis")
        self.grid = grid
        self.ilo = ilo
        self.ihi = ihi

    @classmethod
    def from_box(cls, grid: Grid3, lo, hi) -> "DomainMask":
        """Box from physical corner positions, snapped to the nearest nodes."""
        h = grid.spacing
        ilo, ihi = [], []
        for d in range(3):
            i0 = int(round((lo[d] - grid.origin[d]) / h))
            i1 = int(round((hi[d] - grid.origin[d]) / h))
            ilo.append(max(0, i0))
            ihi.append(min(grid.dims[d] - 1, i1))
        return cls(grid, tuple(ilo), tuple(ihi))

    @property
    def is_full(self) -> bool:
        return self.ilo == (0, 0, 0) and self.ihi == tuple(n - 1 for n in self.grid.dims)

    @property
    def box_slices(self) -> tuple[slice, slice, slice]:
        return tuple(slice(self.ilo[d], self.ihi[d] + 1) for d in range(3))

    @cached_property
    def inside(self) -> np.ndarray:
        m = np.zeros(self.grid.dims, dtype=bool)
        m[self.box_slices] = True
        m.setflags(write=False)
        return m

    @property
    def n_inside(self) -> int:
        return int(np.prod([self.ihi[d] - self.ilo[d] + 1 for d in range(3)]))

    @property
    def volume(self) -> float:
        """Quadrature volume ``h**3 * n_inside`` (midpoint-sum convention)."""
        return self.grid.spacing**3 * self.n_inside

    def interior(self, depth: int = 1) -> np.ndarray:
        """Boolean mask of box nodes at least ``depth`` layers from the shell."""
        m = np.zeros(self.grid.dims, dtype=bool)
        sl = tuple(slice(self.ilo[d] + depth, self.ihi[d] + 1 - depth) for d in range(3))
        if all(s.start < s.stop for s in sl):
            m[sl] = True
        return m

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        """Integer indices ``(M, 3)`` of shell nodes, each exactly once."""
        shell = self.inside & ~self.interior(1)
        return np.argwhere(shell)

    @cached_property
    def boundary_faces(self) -> dict[str, np.ndarray]:
        """Boundary face samples.

        Returns a dict with arrays ``index`` (M, 3) int node indices,
        ``normal`` (M, 3), ``weight`` (M,) area weights, and ``center``
        (M, 3) sample positions (node shifted h/2 along the normal).
        """
        h = self.grid.spacing
        idx_list, nrm_list, wgt_list = [], [], []
        for d in range(3):
            t1, t2 = [a for a in range(3) if a != d]
            r1 = np.arange(self.ilo[t1], self.ihi[t1] + 1)
            r2 = np.arange(self.ilo[t2], self.ihi[t2] + 1)
            w1 = np.ones(r1.size)
            w1[0] = w1[-1] = 0.5
            w2 = np.ones(r2.size)
            w2[0] = w2[-1] = 0.5
            ww = (w1[:, None] * w2[None, :]).ravel() * h * h
            g1, g2 = np.meshgrid(r1, r2, indexing="ij")
            for side, face_i in ((-1.0, self.ilo[d]), (1.0, self.ihi[d])):
                idx = np.empty((r1.size * r2.size, 3), dtype=int)
                idx[:, d] = face_i
                idx[:, t1] = g1.ravel()
                idx[:, t2] = g2.ravel()
                nrm = np.zeros((idx.shape[0], 3))
                nrm[:, d] = side
                idx_list.append(idx)
                nrm_list.append(nrm)
                wgt_list.append(ww)
        index = np.concatenate(idx_list)
        normal = np.concatenate(nrm_list)
        weight = np.concatenate(wgt_list)
        center = self.grid.position(index) + 0.5 * h * normal
        return {"index": index, "normal": normal, "weight": weight, "center": center}

    @property
    def area(self) -> float:
        """Exact geometric area of the box boundary."""
        return float(np.sum(self.boundary_faces["weight"]))


# ---------------------------------------------------------------------------
# stencils


def deriv(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Second-order derivative along ``axis``: central inside, one-sided at ends."""
    return np.gradient(values, h, axis=axis, edge_order=2)


def deriv_transpose(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Exact algebraic transpose of :func:`deriv` (plain, unweighted)."""
    g = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    out = np.zeros_like(g)
    out[0] += -1.5 * g[0]
    out[1] += 2.0 * g[0]
    out[2] += -0.5 * g[0]
    out[:-2] += -0.5 * g[1:-1]
    out[2:] += 0.5 * g[1:-1]
    out[-1] += 1.5 * g[-1]
    out[-2] += -2.0 * g[-1]
    out[-3] += 0.5 * g[-1]
    out /= h
    return np.moveaxis(out, 0, axis)


def grad_values(values: np.ndarray, h: float) -> np.ndarray:
    return np.stack([deriv(values, d, h) for d in range(3)], axis=-1)


def div_values(values: np.ndarray, h: float) -> np.ndarray:
    return sum(deriv(values[..., d], d, h) for d in range(3))


def curl_values(values: np.ndarray, h: float) -> np.ndarray:
    dx = lambda a, d: deriv(a, d, h)  # noqa: E731
    cx = dx(values[..., 2], 1) - dx(values[..., 1], 2)
    cy = dx(values[..., 0], 2) - dx(values[..., 2], 0)
    cz = dx(values[..., 1], 0) - dx(values[..., 0], 1)
    return np.stack([cx, cy, cz], axis=-1)


def curl_transpose_values(values: np.ndarray, h: float) -> np.ndarray:
    """Exact transpose of :func:`curl_values` in the plain dot product."""
    dt = lambda a, d: deriv_transpose(a, d, h)  # noqa: E731
    tx = dt(values[..., 1], 2) - dt(values[..., 2], 1)
    ty = dt(values[..., 2], 0) - dt(values[..., 0], 2)
    tz = dt(values[..., 0], 1) - dt(values[..., 1], 0)
    return np.stack([tx, ty, tz], axis=-1)


def grad_transpose_values(values: np.ndarray, h: float) -> np.ndarray:
    """Exact transpose of :func:`grad_values`: maps vector to scalar data."""
    return sum(deriv_transpose(values[..., d], d, h) for d in range(3))


def discrete_grad(f: ScalarField) -> VectorField:
    """Gradient of a scalar field (second-order stencils)."""
    return VectorField(f.grid, grad_values(f.values, f.grid.spacing))


def discrete_div(F: VectorField) -> ScalarField:
    """Divergence of a vector field (second-order stencils)."""
    return ScalarField(F.grid, div_values(F.values, F.grid.spacing))


def discrete_curl(F: VectorField) -> VectorField:
    """Curl of a vector field (second-order stencils).

    The 1-D stencils along different axes commute, so the curl of
    :func:`discrete_grad` output vanishes identically (to rounding).
    """
    return VectorField(F.grid, curl_values(F.values, F.grid.spacing))


# ---------------------------------------------------------------------------
# integrals and norms


def trapezoid_box_weights(dims) -> np.ndarray:
    """Separable trapezoid weights for node sums over a box of ``dims`` nodes.

    Integrands that are smooth up to the box faces but cut off there carry an
    ``O(h)`` bias under uniform node sums: the vertex-centred boundary layer
    is over-counted by half a cell.  Halving the face rows (quartering edges,
    eighth-ing corners) restores second order.  An axis with a single node
    keeps weight one.
    """
    w1 = []
    for n in dims:
        wd = np.ones(int(n))
        if n > 1:
            wd[0] = wd[-1] = 0.5
        w1.append(wd)
    return w1[0][:, None, None] * w1[1][None, :, None] * w1[2][None, None, :]


def _values_and_mask(field, mask: DomainMask | None):
    values = field.values if isinstance(field, (ScalarField, VectorField)) else np.asarray(field)
    if mask is None:
        return values, None
    return values, mask.inside


def integrate(field, mask: DomainMask) -> float | np.ndarray:
    """Midpoint integral over the box: ``h**3`` per inside node (per component)."""
    values, inside = _values_and_mask(field, mask)
    h3 = mask.grid.spacing**3
    if values.ndim == 4:
        return h3 * values[inside].sum(axis=0)
    return float(h3 * values[inside].sum())


def mean_value(field, mask: DomainMask):
    """Average over inside nodes."""
    values, inside = _values_and_mask(field, mask)
    if values.ndim == 4:
        return values[inside].mean(axis=0)
    return float(values[inside].mean())


def lp_norm(field, mask: DomainMask, p: float = 2.0) -> float:
    """``L^p(Omega)`` norm; vector fields use the pointwise Euclidean magnitude.

    ``p = numpy.inf`` gives the max-magnitude norm (no volume weight).
    """
    values, inside = _values_and_mask(field, mask)
    if values.ndim == 4:
        mag = np.sqrt(np.sum(values**2, axis=-1))
    else:
        mag = np.abs(values)
    mag = mag[inside]
    if np.isinf(p):
        return float(mag.max(initial=0.0))
    h3 = mask.grid.spacing**3
    return float((h3 * np.sum(mag**p)) ** (1.0 / p))


def hcurl_norm(F: VectorField, mask: DomainMask) -> float:
    """``H(curl)`` norm as the sum ``||F||_L2 + ||curl F||_L2`` over the box."""
    curl = curl_values(F.values, F.grid.spacing)
    return lp_norm(F, mask, 2.0) + lp_norm(curl, mask, 2.0)


# ---------------------------------------------------------------------------
# Hoelder boundary norm


_HOLDER_MAX_NODES = 4096


def holder_norm_points(
    points: np.ndarray,
    values: np.ndarray,
    alpha: float,
    max_nodes: int = _HOLDER_MAX_NODES,
    seed: int = 0,
) -> float:
    """Discrete ``C^{0,alpha}`` norm of point samples: sup plus Hoelder quotient.

    The sup runs over all samples.  The seminorm uses every pair when the
    sample count is at most ``max_nodes``; otherwise a deterministic
    stratified subsample of ``max_nodes`` points (one per contiguous stratum,
    fixed seed) is used, giving ``max_nodes**2`` pairs.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float).ravel()
    n = values.size
    if points.shape != (n, 3):
        raise ValueError("points must have shape (n, 3) matching values")
    sup = float(np.max(np.abs(values), initial=0.0))
    if n < 2:
        return sup
    if n > max_nodes:
        rng = np.random.default_rng(seed)
        strata = np.array_split(np.arange(n), max_nodes)
        pick = np.array([s[rng.integers(s.size)] for s in strata])
        points, values = points[pick], values[pick]
        n = max_nodes
    semi = 0.0
    block = max(1, int(2**22 // max(n, 1)))
    for start in range(0, n, block):
        p = points[start : start + block]
        v = values[start : start + block]
        dist = np.sqrt(np.sum((p[:, None, :] - points[None, :, :]) ** 2, axis=-1))
        dval = np.abs(v[:, None] - values[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(dist > 0.0, dval / dist**alpha, 0.0)
        semi = max(semi, float(q.max(initial=0.0)))
    return sup + semi


def holder_boundary_norm(f: ScalarField, alpha: float, mask: DomainMask) -> float:
    """``C^{0,alpha}`` norm of a scalar field sampled at the box shell nodes."""
    idx = mask.boundary_nodes
    pts = mask.grid.position(idx)
    vals = f.values[idx[:, 0], idx[:, 1], idx[:, 2]]
    return holder_norm_points(pts, vals, alpha)


# ---------------------------------------------------------------------------
# grid embedding


def subgrid_offset(big: Grid3, small: Grid3) -> tuple[int, int, int]:
    """Integer node offset of ``small`` inside ``big``; raises if misaligned."""
    if abs(big.spacing - small.spacing) > 1e-12 * big.spacing:
        raise ValueError("grids have different spacing")
    off = []
    for d in range(3):
        s = (small.origin[d] - big.origin[d]) / big.spacing
        k = int(round(s))
        if abs(s - k) > 1e-9:
            raise ValueError(f"grid origins misaligned along axis {d}")
        if k < 0 or k + small.dims[d] > big.dims[d]:
            raise ValueError("small grid does not fit inside big grid")
        off.append(k)
    return tuple(off)


def embed(field, big: Grid3):
    """Zero-extend a field from its grid onto an aligned enclosing grid."""
    off = subgrid_offset(big, field.grid)
    sl = tuple(slice(off[d], off[d] + field.grid.dims[d]) for d in range(3))
    if isinstance(field, VectorField):
        out = np.zeros(big.dims + (3,))
        out[sl] = field.values
        return VectorField(big, out)
    out = np.zeros(big.dims)
    out[sl] = field.values
    return ScalarField(big, out)


def restrict(field, small: Grid3):
    """Restrict a field to an aligned contained grid."""
    off = subgrid_offset(field.grid, small)
    sl = tuple(slice(off[d], off[d] + small.dims[d]) for d in range(3))
    if isinstance(field, VectorField):
        return VectorField(small, field.values[sl])
    return ScalarField(small, field.values[sl])


# ---------------------------------------------------------------------------
# trilinear interpolation


def trilinear_indices(grid: Grid3, points: np.ndarray):
    """Trilinear interpolation stencil for arbitrary points.

    Returns ``(corner (M, 8) int64 flat C-order node indices, weight (M, 8))``.
    Points outside the grid hull get all-zero weights (fields are treated as
    zero outside), which keeps forward/adjoint operator pairs built from these
    arrays exact transposes of each other.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    h = grid.spacing
    nx, ny, nz = grid.dims
    t = (pts - np.asarray(grid.origin)) / h
    eps = 1e-9
    valid = np.all((t > -eps) & (t < np.asarray(grid.dims) - 1 + eps), axis=1)
    t = np.clip(t, 0.0, np.asarray(grid.dims, dtype=float) - 1.0)
    base = np.minimum(t.astype(np.int64), np.asarray(grid.dims) - 2)
    frac = t - base
    sx, sy, sz = ny * nz, nz, 1
    flat0 = base[:, 0] * sx + base[:, 1] * sy + base[:, 2] * sz
    corner = np.empty((pts.shape[0], 8), dtype=np.int64)
    weight = np.empty((pts.shape[0], 8))
    k = 0
    for dx in (0, 1):
        wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
        for dy in (0, 1):
            wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
            for dz in (0, 1):
                wz = frac[:, 2] if dz else 1.0 - frac[:, 2]
                corner[:, k] = flat0 + dx * sx + dy * sy + dz * sz
                weight[:, k] = wx * wy * wz
                k += 1
    weight[~valid] = 0.0
    corner[~valid] = 0
    return corner, weight


def trilinear_sample(values: np.ndarray, grid: Grid3, points: np.ndarray) -> np.ndarray:
    """Trilinear samples of node data at arbitrary points (zero outside)."""
    corner, weight = trilinear_indices(grid, points)
    vals = np.asarray(values)
    if vals.ndim == 4:
        flat = vals.reshape(-1, vals.shape[-1])
        return np.einsum("mc,mcd->md", weight, flat[corner])
    flat = vals.reshape(-1)
    return np.sum(weight * flat[corner], axis=1)
