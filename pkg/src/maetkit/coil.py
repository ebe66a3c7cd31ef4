"""Planar coils and their coupling kernels.

A coil is a flat current loop spanning a disk or a planar polygon.  Its
coupling to currents in the sample is carried by two vector fields evaluated
by surface quadrature over the coil span ``D`` with unit normal ``n``:

* the flux kernel  ``C(x) = -(mu/4pi) int_D (y - x) x n / |y - x|^3 dS(y)``,
* its curl        ``G(x) = -(mu/4pi) int_D [ 3((y-x).n)/|y-x|^5 (y-x)
  - n/|y-x|^3 ] dS(y)``,

which for points away from the coil plane satisfies ``G = curl C``.  For a
planar coil the normal is constant, so both kernels also admit a factored
form in which the normal is pulled out of the integral; the two forms use the
same quadrature nodes and agree to rounding.

Disk quadrature is a Gauss-Legendre radial rule times a uniform angular rule
(exact total weight ``pi r^2``); polygons are fan-triangulated and each
triangle is refined into congruent subtriangles with an edge-midpoint rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .grid import DomainMask, Grid3, VectorField, curl_values, lp_norm

__all__ = [
    "Coil",
    "CoilFields",
    "make_disk_coil",
    "make_polygon_coil",
    "flux_kernel",
    "kernel_curl",
    "coil_fields",
    "check_curl_identity",
    "distance_to_coil",
    "sup_distance_to_coil",
    "biot_savart_B",
    "disk_axis_kernel_curl",
]


@dataclass(frozen=True)
class Coil:
    """A planar coil with a frozen surface quadrature.

    Attributes
    ----------
    kind : str
        ``"disk"`` or ``"polygon"``.
    center : ndarray (3,)
        Disk center, or polygon centroid.
    normal : ndarray (3,)
        Unit normal of the coil plane (orientation of the winding).
    radius : float
        Disk radius; for polygons the max vertex distance from the centroid.
    mu : float
        Coupling constant multiplying both kernels.
    nodes : ndarray (Q, 3)
        Quadrature nodes on the coil span.
    weights : ndarray (Q,)
        Quadrature weights; they sum to the span area.
    vertices : ndarray (V, 3) or None
        Polygon vertices (None for disks).
    """

    kind: str
    center: np.ndarray
    normal: np.ndarray
    radius: float
    mu: float
    nodes: np.ndarray
    weights: np.ndarray
    vertices: np.ndarray | None = None

    def __post_init__(self) -> None:
        for name in ("center", "normal", "nodes", "weights"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-12:
            raise ConfigError("coil normal must be a unit vector")

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    @property
    def plane_offset(self) -> float:
        """Signed offset ``a`` of the coil plane: ``y . n = a`` on the plane."""
        return float(self.center @ self.normal)


def _plane_frame(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    pick = np.argmin(np.abs(n))
    e1 = np.zeros(3)
    e1[pick] = 1.0
    e1 = e1 - (e1 @ n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return e1, e2


def make_disk_coil(
    center,
    normal,
    radius: float,
    mu: float = 1.0,
    n_radial: int = 64,
    n_angular: int = 64,
) -> Coil:
    """Disk coil with a Gauss-Legendre (radial) x uniform (angular) quadrature.

    The radial rule integrates the area Jacobian exactly, so the weights sum
    to ``pi r^2`` up to rounding.
    """
    if radius <= 0:
        raise ConfigError(f"disk radius must be positive, got {radius}")
    if n_radial < 1 or n_angular < 4:
        raise ConfigError("need n_radial >= 1 and n_angular >= 4")
    center = np.asarray(center, dtype=float)
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    e1, e2 = _plane_frame(n)
    xg, wg = np.polynomial.legendre.leggauss(n_radial)
    rho = 0.5 * radius * (xg + 1.0)
    wr = 0.5 * radius * wg * rho
    theta = 2.0 * np.pi * np.arange(n_angular) / n_angular
    wt = 2.0 * np.pi / n_angular
    ct, st = np.cos(theta), np.sin(theta)
    nodes = (
        center[None, None, :]
        + rho[:, None, None] * (ct[None, :, None] * e1 + st[None, :, None] * e2)
    ).reshape(-1, 3)
    weights = np.broadcast_to(wr[:, None] * wt, (n_radial, n_angular)).reshape(-1)
    return Coil("disk", center, n, float(radius), float(mu), nodes, weights.copy())


def make_polygon_coil(vertices, mu: float = 1.0, subdivisions: int = 4) -> Coil:
    """Planar polygon coil; quadrature by fan triangulation and refinement.

    Each fan triangle is split into ``4**subdivisions`` congruent subtriangles
    carrying a 3-point edge-midpoint rule (exact for quadratics).  Vertices
    must be coplanar; the winding orientation fixes the normal.
    """
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[0] < 3 or verts.shape[1] != 3:
        raise ConfigError("polygon needs at least 3 vertices of dimension 3")
    # Newell normal; also validates planarity below.
    nrm = np.zeros(3)
    for i in range(verts.shape[0]):
        a, b = verts[i], verts[(i + 1) % verts.shape[0]]
        nrm += np.cross(a, b)
    norm = np.linalg.norm(nrm)
    if norm == 0.0:
        raise ConfigError("degenerate polygon")
    n = nrm / norm
    centroid = verts.mean(axis=0)
    span = float(np.max(np.linalg.norm(verts - centroid, axis=1)))
    off = (verts - centroid) @ n
    if np.max(np.abs(off)) > 1e-9 * max(span, 1.0):
        raise ConfigError("polygon vertices are not coplanar")

    nodes_list, w_list = [], []
    nv = verts.shape[0]
    for i in range(nv):
        tris = [(centroid, verts[i], verts[(i + 1) % nv])]
        for _ in range(subdivisions):
            nxt = []
            for a, b, c in tris:
                ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
                nxt += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
            tris = nxt
        for a, b, c in tris:
            area = 0.5 * np.linalg.norm(np.cross(b - a, c - a))
            for m in (0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)):
                nodes_list.append(m)
                w_list.append(area / 3.0)
    nodes = np.array(nodes_list)
    weights = np.array(w_list)
    return Coil("polygon", centroid, n, span, float(mu), nodes, weights, verts.copy())


def _kernel_sums(coil: Coil, points: np.ndarray, want_r5: bool):
    """Accumulate ``sum w (y-x)/r^3``, ``sum w/r^3`` and optionally the r^-5
    analogues, blocking over quadrature nodes to bound memory."""
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, 3)
    npts = flat.shape[0]
    s3v = np.zeros((npts, 3))
    s3 = np.zeros(npts)
    s5v = np.zeros((npts, 3)) if want_r5 else None
    block = max(1, int(4_000_000 // max(npts, 1)))
    for start in range(0, coil.nodes.shape[0], block):
        y = coil.nodes[start : start + block]
        w = coil.weights[start : start + block]
        diff = y[:, None, :] - flat[None, :, :]  # (B, n, 3)
        r2 = np.einsum("bnd,bnd->bn", diff, diff)
        inv_r3 = r2 ** (-1.5)
        s3 += w @ inv_r3
        s3v += np.einsum("b,bn,bnd->nd", w, inv_r3, diff)
        if want_r5:
            inv_r5 = inv_r3 / r2
            s5v += np.einsum("b,bn,bnd->nd", w, inv_r5, diff)
    return s3v, s3, s5v


def flux_kernel(coil: Coil, points, general_form: bool = False) -> np.ndarray:
    """Flux kernel ``C`` at the given points (shape ``(..., 3)``).

    ``general_form=True`` evaluates the unreduced surface integral with the
    normal inside the cross product; the default pulls the constant normal out
    of the integral.  Both use identical nodes and agree to rounding.
    """
    pts = np.asarray(points, dtype=float)
    factor = -coil.mu / (4.0 * np.pi)
    if general_form:
        flat = pts.reshape(-1, 3)
        out = np.zeros_like(flat)
        block = max(1, int(4_000_000 // max(flat.shape[0], 1)))
        for start in range(0, coil.nodes.shape[0], block):
            y = coil.nodes[start : start + block]
            w = coil.weights[start : start + block]
            diff = y[:, None, :] - flat[None, :, :]
            r2 = np.einsum("bnd,bnd->bn", diff, diff)
            inv_r3 = r2 ** (-1.5)
            cross = np.cross(diff, coil.normal[None, None, :])
            out += np.einsum("b,bn,bnd->nd", w, inv_r3, cross)
        return factor * out.reshape(pts.shape)
    s3v, _, _ = _kernel_sums(coil, pts, want_r5=False)
    out = factor * np.cross(s3v, coil.normal[None, :])
    return out.reshape(pts.shape)


def kernel_curl(coil: Coil, points, general_form: bool = False) -> np.ndarray:
    """Curl ``G`` of the flux kernel at the given points (shape ``(..., 3)``).

    The default uses the planar reduction in which ``(y - x) . n`` is the
    constant signed plane distance; ``general_form=True`` keeps the dot
    product inside the quadrature sum.
    """
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, 3)
    factor = -coil.mu / (4.0 * np.pi)
    if general_form:
        out = np.zeros_like(flat)
        block = max(1, int(4_000_000 // max(flat.shape[0], 1)))
        for start in range(0, coil.nodes.shape[0], block):
            y = coil.nodes[start : start + block]
            w = coil.weights[start : start + block]
            diff = y[:, None, :] - flat[None, :, :]
            r2 = np.einsum("bnd,bnd->bn", diff, diff)
            inv_r3 = r2 ** (-1.5)
            dn = diff @ coil.normal
            out += 3.0 * np.einsum("b,bn,bnd->nd", w, dn * inv_r3 / r2, diff)
            out -= (w @ inv_r3)[:, None] * coil.normal[None, :]
        return factor * out.reshape(pts.shape)
    s3v, s3, s5v = _kernel_sums(coil, pts, want_r5=True)
    sdist = coil.plane_offset - flat @ coil.normal
    out = factor * (3.0 * sdist[:, None] * s5v - s3[:, None] * coil.normal[None, :])
    return out.reshape(pts.shape)


def distance_to_coil(coil: Coil, points) -> np.ndarray:
    """Euclidean distance from points to the coil span.

    Exact for disks; for polygons the distance to the quadrature node cloud
    (adequate for the clearance checks it backs).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if coil.kind == "disk":
        rel = pts - coil.center
        s = rel @ coil.normal
        inplane = rel - s[:, None] * coil.normal[None, :]
        rho = np.linalg.norm(inplane, axis=1)
        out = np.where(
            rho <= coil.radius,
            np.abs(s),
            np.sqrt(s**2 + (rho - coil.radius) ** 2),
        )
        return out
    d = np.full(pts.shape[0], np.inf)
    block = 256
    for start in range(0, coil.nodes.shape[0], block):
        y = coil.nodes[start : start + block]
        dist = np.linalg.norm(pts[:, None, :] - y[None, :, :], axis=-1)
        d = np.minimum(d, dist.min(axis=1))
    return d


def sup_distance_to_coil(coil: Coil, points) -> np.ndarray:
    """Supremum of ``|y - x|`` over the coil span for each point ``x``.

    Exact for disks (farthest rim point); for polygons the max over vertices.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if coil.kind == "disk":
        rel = pts - coil.center
        s = rel @ coil.normal
        inplane = rel - s[:, None] * coil.normal[None, :]
        rho = np.linalg.norm(inplane, axis=1)
        return np.sqrt(s**2 + (rho + coil.radius) ** 2)
    dist = np.linalg.norm(pts[:, None, :] - coil.vertices[None, :, :], axis=-1)
    return dist.max(axis=1)


def disk_axis_kernel_curl(radius: float, dist: float, mu: float = 1.0) -> float:
    """Closed-form ``|G|`` on the axis of a disk coil at plane distance ``dist``."""
    return mu * radius**2 / (2.0 * (dist**2 + radius**2) ** 1.5)


@dataclass(frozen=True)
class CoilFields:
    """Flux kernel and its curl sampled on a grid, with provenance."""

    coil: Coil
    kernel: VectorField
    kernel_curl: VectorField

    @property
    def grid(self) -> Grid3:
        return self.kernel.grid

    def scaled(self, beta: float) -> "CoilFields":
        """Fields of the same coil driven ``beta`` times stronger."""
        coil = Coil(
            self.coil.kind,
            self.coil.center,
            self.coil.normal,
            self.coil.radius,
            self.coil.mu * beta,
            self.coil.nodes,
            self.coil.weights,
            self.coil.vertices,
        )
        return CoilFields(
            coil,
            VectorField(self.grid, beta * self.kernel.values),
            VectorField(self.grid, beta * self.kernel_curl.values),
        )


def coil_fields(coil: Coil, grid: Grid3, min_clearance: float | None = None) -> CoilFields:
    """Evaluate both kernels on all grid nodes.

    ``min_clearance`` (default ``2h``) is the required distance between the
    grid and the coil span; violation raises :class:`ConfigError` since the
    kernels are singular on the coil.
    """
    if min_clearance is None:
        min_clearance = 2.0 * grid.spacing
    pts = grid.coords.reshape(-1, 3)
    dmin = distance_to_coil(coil, pts).min()
    if dmin < min_clearance:
        raise ConfigError(
            f"coil span is {dmin:.3g} from the grid; need clearance >= {min_clearance:.3g}"
        )
    C = flux_kernel(coil, grid.coords)
    G = kernel_curl(coil, grid.coords)
    return CoilFields(coil, VectorField(grid, C), VectorField(grid, G))


def check_curl_identity(fields: CoilFields, mask: DomainMask | None = None) -> dict:
    """Residual of ``curl C - G`` over interior nodes of the box.

    Returns relative L2 and max-abs numbers; the identity holds analytically
    off the coil plane, so the residual measures stencil plus quadrature
    error and should shrink at second order.
    """
    grid = fields.grid
    if mask is None:
        mask = DomainMask(grid)
    curl = curl_values(fields.kernel.values, grid.spacing)
    resid = curl - fields.kernel_curl.values
    interior = mask.interior(1)
    rnorm = np.sqrt(np.sum(resid[interior] ** 2, axis=-1))
    gnorm = np.sqrt(np.sum(fields.kernel_curl.values[interior] ** 2, axis=-1))
    denom = np.sqrt(np.sum(gnorm**2))
    return {
        "rel_l2": float(np.sqrt(np.sum(rnorm**2)) / denom) if denom > 0 else 0.0,
        "max_abs": float(rnorm.max(initial=0.0)),
        "max_ref": float(gnorm.max(initial=0.0)),
    }


def biot_savart_B(J: VectorField, mask: DomainMask, points, mu: float = 1.0) -> np.ndarray:
    """Magnetic field of a volume current by direct singular-kernel quadrature.

    ``B(p) = (mu/4pi) sum_x h^3 J(x) x (p - x)/|p - x|^3`` over inside nodes.
    Observation points must keep a ``2h`` clearance from the box.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    grid = J.grid
    h = grid.spacing
    lo = np.array([grid.origin[d] + h * mask.ilo[d] for d in range(3)])
    hi = np.array([grid.origin[d] + h * mask.ihi[d] for d in range(3)])
    gap = np.maximum(np.maximum(lo - pts, pts - hi), 0.0)
    box_dist = np.linalg.norm(gap, axis=1)
    if np.any(box_dist < 2.0 * h):
        raise ConfigError("observation points must be >= 2h outside the current box")
    inside = mask.inside
    src = grid.coords[inside]
    jj = J.values[inside]
    out = np.zeros_like(pts)
    block = max(1, int(2_000_000 // max(pts.shape[0], 1)))
    for start in range(0, src.shape[0], block):
        x = src[start : start + block]
        j = jj[start : start + block]
        diff = pts[None, :, :] - x[:, None, :]
        inv_r3 = np.einsum("bnd,bnd->bn", diff, diff) ** (-1.5)
        out += np.einsum("bn,bnd->nd", inv_r3, np.cross(j[:, None, :], diff))
    return mu / (4.0 * np.pi) * h**3 * out
