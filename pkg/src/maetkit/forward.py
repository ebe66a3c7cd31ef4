"""Forward model: adjoint currents, mollified sources and emf synthesis.

For a conductivity ``sigma`` and a coil with flux kernel ``C``, the adjoint
current is ``J = sigma (C - grad w)`` where ``w`` solves the Neumann problem
of :mod:`maetkit.elliptic` with data ``C``; it is divergence-free with no
normal outflow.  A spherical pressure pulse fired from center ``y`` with
sound speed ``c`` induces the emf

    m(t; y) = (B0/rho) . int_Omega J x grad p_eps(x, t; y) dx,

where ``p_eps`` is the spherical pressure wave launched by the mollified
point impulse ``partial_t p(x, 0) = g_eps(x - y)`` (3-D Gaussian), namely

    p_eps(x, t; y) = delta_eps(|x - y| - c t) / (4 pi c |x - y|)

up to an incoming-image term that is negligible once ``c t`` and ``|x - y|``
exceed a few ``eps``.  Because this pulse is exactly the 3-D mollification
of the sharp shell ``delta(|x - y| - c t)/(4 pi c^2 t)``, the measurement
identity ``m(t; y) = t * (spherical mean of the mollified transform source
at radius c t)`` holds exactly, not just to first order in ``eps``; the
sharp-shell profile with the ``1/(c t)`` normalisation would instead agree
only to ``O(eps/(c t))``.  The transform source is

    W = rho-scaled distribution  J x nu delta_boundary + curl J,

realised on a padded grid as the convolution ``W_eps = grad g_eps *x J``
(cross-product convolution), i.e. the curl of the mollified, zero-extended
current.  Both emf routes are implemented; their agreement is a standing
test.  A third, physically independent route solves the time-domain
potential equation per pulse position/time and integrates against the flux
kernel; it backs the reciprocity acceptance check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft
from scipy.integrate import lebedev_rule

from .coil import CoilFields
from .elliptic import Conductivity, PotentialSolution, solve_neumann
from .errors import ConfigError
from .fieldio import read_traces_csv, write_traces_csv
from .grid import (
    DomainMask,
    Grid3,
    ScalarField,
    VectorField,
    curl_values,
    div_values,
    lp_norm,
    trapezoid_box_weights,
    trilinear_sample,
)

__all__ = [
    "PhysicsParams",
    "CurrentField",
    "SourceDistribution",
    "MeasurementSet",
    "adjoint_current",
    "mollified_source",
    "gaussian_delta",
    "gaussian_delta_prime",
    "pulse_gradient_radial",
    "sphere_quadrature",
    "spherical_means",
    "sphere_centers",
    "measurement_times",
    "synthesize_emf",
    "synthesize_emf_means",
    "synthesize_emf_direct",
    "padded_grid",
]


@dataclass(frozen=True)
class PhysicsParams:
    """Static physics of an experiment.

    ``b0_list`` holds the background-field vectors used for measurement
    (scaled basis vectors by default); ``pulse_width`` is the Gaussian
    mollification width of the pressure pulse.
    """

    b0_list: tuple
    rho: float
    sound_speed: float
    pulse_width: float

    def __post_init__(self) -> None:
        b0s = tuple(np.asarray(b, dtype=float) for b in self.b0_list)
        if not b0s:
            raise ConfigError("need at least one B0 direction")
        for b in b0s:
            b.setflags(write=False)
            if b.shape != (3,) or np.linalg.norm(b) == 0.0:
                raise ConfigError("B0 vectors must be nonzero 3-vectors")
        object.__setattr__(self, "b0_list", b0s)
        for name in ("rho", "sound_speed", "pulse_width"):
            if not float(getattr(self, name)) > 0.0:
                raise ConfigError(f"{name} must be positive")


@dataclass(frozen=True)
class CurrentField:
    """Adjoint current with conservation diagnostics.

    ``net_boundary_flux`` is the solver-consistent total outflow (edge-current
    network of the weak form; zero up to the solver residual).
    ``nodal_boundary_flux`` is the face-quadrature sum of the nodal samples
    ``J . nu``, a second-order-accurate resampling that decays like ``h**2``.
    """

    J: VectorField
    curl: VectorField
    grad_w: VectorField
    mask: DomainMask
    div_residual: float
    net_boundary_flux: float
    nodal_boundary_flux: float
    solve_iterations: int
    solve_residual: float


def adjoint_current(
    sigma: Conductivity,
    fields: CoilFields,
    mask: DomainMask | None = None,
    tol: float = 1e-10,
) -> CurrentField:
    """Divergence-free adjoint current ``J = sigma (C - grad w)``.

    The potential ``w`` solves the weak Neumann problem with data ``C``;
    curl and divergence diagnostics use box-local stencils.
    """
    grid = fields.grid
    if sigma.sigma.grid != grid:
        raise ConfigError("sigma and coil fields live on different grids")
    if mask is None:
        mask = DomainMask(grid)
    sol = solve_neumann(sigma, fields.kernel, mask, tol=tol)
    box = mask.box_slices
    h = grid.spacing
    sig_box = sigma.sigma.values[box]
    J_box = sig_box[..., None] * (
        fields.kernel.values[box + (slice(None),)] - sol.grad.values[box + (slice(None),)]
    )
    J_full = np.zeros(grid.dims + (3,))
    J_full[box + (slice(None),)] = J_box
    curl_full = np.zeros(grid.dims + (3,))
    curl_full[box + (slice(None),)] = curl_values(J_box, h)
    div_box = div_values(J_box, h)
    interior = div_box[1:-1, 1:-1, 1:-1]
    div_residual = float(np.sqrt(h**3 * np.sum(interior**2)))
    faces = mask.boundary_faces
    idx = faces["index"]
    jn = np.einsum(
        "md,md->m", J_full[idx[:, 0], idx[:, 1], idx[:, 2]], faces["normal"]
    )
    nodal_flux = float(np.sum(jn * faces["weight"]))
    return CurrentField(
        J=VectorField(grid, J_full),
        curl=VectorField(grid, curl_full),
        grad_w=sol.grad,
        mask=mask,
        div_residual=div_residual,
        net_boundary_flux=sol.net_boundary_outflow,
        nodal_boundary_flux=nodal_flux,
        solve_iterations=sol.iterations,
        solve_residual=sol.residual,
    )


# ---------------------------------------------------------------------------
# mollified transform source


def gaussian_delta(s: np.ndarray, eps: float) -> np.ndarray:
    """1-D Gaussian approximation of the delta: unit mass, width ``eps``.

    ``delta_eps(s) = exp(-s^2/eps^2) / (eps sqrt(pi))`` — the width parameter
    is the 1/e half-width (standard deviation ``eps/sqrt(2)``).
    """
    return np.exp(-(s**2) / eps**2) / (np.sqrt(np.pi) * eps)


def gaussian_delta_prime(s: np.ndarray, eps: float) -> np.ndarray:
    """Derivative of :func:`gaussian_delta`."""
    return -2.0 * s / eps**2 * gaussian_delta(s, eps)


def pulse_gradient_radial(d, t, c: float, eps: float) -> np.ndarray:
    """Radial derivative of the mollified pulse at distance ``d``, time ``t``.

    The pulse is ``p_eps = delta_eps(d - c t) / (4 pi c d)``; the spatial
    gradient is this value times the unit vector away from the pulse center.
    ``d`` and ``t`` broadcast together.
    """
    s = d - c * t
    return (gaussian_delta_prime(s, eps) - gaussian_delta(s, eps) / d) / (
        4.0 * np.pi * c * d
    )


def _check_centers_clear(mask: DomainMask, centers: np.ndarray, eps: float) -> None:
    grid = mask.grid
    h = grid.spacing
    lo = np.array([grid.origin[d] + h * mask.ilo[d] for d in range(3)])
    hi = np.array([grid.origin[d] + h * mask.ihi[d] for d in range(3)])
    gap = np.maximum(np.maximum(lo - centers, centers - hi), 0.0)
    dmin = np.linalg.norm(gap, axis=1).min()
    if dmin < 5.0 * eps:
        raise ConfigError(
            f"pulse centers must stay at least 5 eps = {5 * eps:g} away from "
            f"the domain (closest is {dmin:g})"
        )


def _trapezoid_weights(mask: DomainMask) -> np.ndarray:
    """Trapezoid node weights over the mask's box (see grid module notes)."""
    return trapezoid_box_weights(mask.ihi - mask.ilo + 1)


def padded_grid(grid: Grid3, margin: float) -> tuple[Grid3, DomainMask]:
    """Enclosing grid with at least ``margin`` of clearance on every side.

    Returns the padded grid and the mask of the original box inside it.
    """
    h = grid.spacing
    m = int(np.ceil(margin / h - 1e-9))
    big = Grid3(
        tuple(n + 2 * m for n in grid.dims),
        tuple(grid.origin[d] - m * h for d in range(3)),
        h,
    )
    mask = DomainMask(big, (m, m, m), tuple(m + n - 1 for n in grid.dims))
    return big, mask


@dataclass(frozen=True)
class SourceDistribution:
    """Mollified transform source on a padded grid.

    One vector component per background-field axis: ``W_i`` is ``rho`` times
    the transform source seen with ``B0 = e_i``.  ``source_box`` marks the
    original domain inside the padded grid; ``support_leak`` is the fraction
    of ``|W|`` mass on the outermost padded layer (flagged when above 1%).
    """

    W: VectorField
    epsilon: float
    source_box: DomainMask
    total_integral: np.ndarray = field(default=None)
    support_leak: float = 0.0

    @property
    def grid(self) -> Grid3:
        return self.W.grid


def mollified_source(
    current: CurrentField | VectorField,
    epsilon: float,
    margin: float | None = None,
    kernel_radius_sigmas: float = 8.0,
) -> SourceDistribution:
    """Mollified source ``W_eps = grad g_eps *x J`` on a padded grid.

    This is the curl of the Gaussian-mollified zero-extension of ``J``: it
    carries both the interior ``curl J`` and the boundary sheet ``J x nu``.
    The cross-product convolution is evaluated by FFT with a kernel truncated
    at ``kernel_radius_sigmas * epsilon`` (relative tail below 1e-13 at the
    default).
    """
    J = current.J if isinstance(current, CurrentField) else current
    grid = J.grid
    h = grid.spacing
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    if margin is None:
        margin = 3.0 * epsilon
    big, source_box = padded_grid(grid, margin)
    m = source_box.ilo[0]
    rk = int(np.ceil(kernel_radius_sigmas * epsilon / h))
    off = h * np.arange(-rk, rk + 1)
    ox, oy, oz = np.meshgrid(off, off, off, indexing="ij")
    r2 = ox**2 + oy**2 + oz**2
    g = np.exp(-r2 / epsilon**2) / (np.pi**1.5 * epsilon**3)
    grad_g = [
        -2.0 * ox / epsilon**2 * g,
        -2.0 * oy / epsilon**2 * g,
        -2.0 * oz / epsilon**2 * g,
    ]

    P = big.dims
    shape = [scipy.fft.next_fast_len(P[d] + 2 * rk) for d in range(3)]
    # Zero-extension with the jump rows half-weighted: a node sitting on the
    # support boundary carries the midpoint of the two sides, which keeps the
    # convolution second-order and matches the trapezoid trace quadrature.
    wts = _trapezoid_weights(source_box)
    J_hat = []
    for comp in range(3):
        emb = np.zeros(P)
        emb[source_box.box_slices] = J.values[..., comp] * wts
        J_hat.append(scipy.fft.rfftn(emb, s=shape))
    K_hat = [scipy.fft.rfftn(k, s=shape) for k in grad_g]

    # W_i = sum_{jk} eps_{ijk} (d_j g) * J_k, times the h^3 quadrature weight.
    pairs = [(1, 2), (2, 0), (0, 1)]
    W = np.empty(P + (3,))
    sl = tuple(slice(rk, rk + P[d]) for d in range(3))
    for i, (j, k) in enumerate(pairs):
        conv = scipy.fft.irfftn(K_hat[j] * J_hat[k] - K_hat[k] * J_hat[j], s=shape)
        W[..., i] = h**3 * conv[sl]

    h3 = h**3
    total = h3 * W.reshape(-1, 3).sum(axis=0)
    mag = np.sqrt(np.sum(W**2, axis=-1))
    shell = mag.sum() - mag[1:-1, 1:-1, 1:-1].sum()
    leak = float(shell / mag.sum()) if mag.sum() > 0 else 0.0
    return SourceDistribution(
        W=VectorField(big, W),
        epsilon=epsilon,
        source_box=source_box,
        total_integral=total,
        support_leak=leak,
    )


# ---------------------------------------------------------------------------
# spherical means and measurement geometry


def sphere_quadrature(degree: int = 41) -> tuple[np.ndarray, np.ndarray]:
    """Unit-sphere quadrature directions and weights (weights sum to 4 pi).

    The default degree-41 Lebedev rule has 590 nodes.
    """
    pts, w = lebedev_rule(degree)
    return np.ascontiguousarray(pts.T), w


def spherical_means(
    f: ScalarField, centers: np.ndarray, radii: np.ndarray, degree: int = 41
) -> np.ndarray:
    """Means of ``f`` over spheres: one row per center, one column per radius.

    Sphere points are sampled by trilinear interpolation, zero outside the
    grid hull.
    """
    dirs, w = sphere_quadrature(degree)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    out = np.empty((centers.shape[0], radii.size))
    for k, y in enumerate(centers):
        pts = y[None, None, :] + radii[:, None, None] * dirs[None, :, :]
        vals = trilinear_sample(f.values, f.grid, pts.reshape(-1, 3))
        out[k] = vals.reshape(radii.size, dirs.shape[0]) @ w / (4.0 * np.pi)
    return out


def sphere_centers(count: int, center, radius: float) -> np.ndarray:
    """Deterministic near-uniform points on a sphere (golden-spiral lattice)."""
    i = np.arange(count)
    z = 1.0 - (2.0 * i + 1.0) / count
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    s = np.sqrt(1.0 - z**2)
    dirs = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
    return np.asarray(center, dtype=float)[None, :] + radius * dirs


def measurement_times(
    mask: DomainMask, centers: np.ndarray, sound_speed: float, epsilon: float, count: int
) -> np.ndarray:
    """Shared time axis whose radii sweep the whole box from every center.

    Radii span ``[min dist(center, box) - 3 eps, max dist(center, box corner)
    + 3 eps]`` (clipped positive), so every pulse both enters and fully
    crosses the domain.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    grid = mask.grid
    h = grid.spacing
    lo = np.array([grid.origin[d] + h * mask.ilo[d] for d in range(3)])
    hi = np.array([grid.origin[d] + h * mask.ihi[d] for d in range(3)])
    gap = np.maximum(np.maximum(lo - centers, centers - hi), 0.0)
    dmin = np.linalg.norm(gap, axis=1).min()
    corners = np.array([[lo[0], hi[0]], [lo[1], hi[1]], [lo[2], hi[2]]])
    cpts = np.array(np.meshgrid(*corners, indexing="ij")).reshape(3, -1).T
    dmax = np.linalg.norm(centers[:, None, :] - cpts[None, :, :], axis=-1).max()
    r0 = max(dmin - 3.0 * epsilon, 0.25 * epsilon)
    r1 = dmax + 3.0 * epsilon
    return np.linspace(r0, r1, count) / sound_speed


@dataclass(frozen=True)
class MeasurementSet:
    """emf traces for one background-field direction.

    ``values[k, j]`` is the emf for pulse center ``centers[k]`` at time
    ``times[j]``; all centers share the time axis.
    """

    centers: np.ndarray
    times: np.ndarray
    values: np.ndarray
    b0: np.ndarray
    rho: float
    sound_speed: float
    epsilon: float

    def __post_init__(self) -> None:
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        b0 = np.asarray(self.b0, dtype=float)
        if np.any(times <= 0.0) or np.any(np.diff(times) <= 0.0):
            raise ConfigError("times must be positive and strictly increasing")
        if values.shape != (centers.shape[0], times.size):
            raise ConfigError("trace array shape does not match centers x times")
        if not np.isfinite(values).all():
            raise ConfigError("traces contain non-finite values")
        for name, arr in (("centers", centers), ("times", times), ("values", values), ("b0", b0)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def radii(self) -> np.ndarray:
        return self.sound_speed * self.times

    def coverage_gap(self, mask: DomainMask) -> float:
        """How far (in units of eps) the swept radii fall short of the box span."""
        grid = mask.grid
        h = grid.spacing
        lo = np.array([grid.origin[d] + h * mask.ilo[d] for d in range(3)])
        hi = np.array([grid.origin[d] + h * mask.ihi[d] for d in range(3)])
        gap = np.maximum(np.maximum(lo - self.centers, self.centers - hi), 0.0)
        dmin = np.linalg.norm(gap, axis=1).min()
        corners = np.array(
            np.meshgrid(*[[lo[d], hi[d]] for d in range(3)], indexing="ij")
        ).reshape(3, -1).T
        dmax = np.linalg.norm(self.centers[:, None, :] - corners[None, :, :], axis=-1).max()
        short = max(self.radii[0] - max(dmin - 3 * self.epsilon, 0.0), 0.0) + max(
            dmax + 3 * self.epsilon - self.radii[-1], 0.0
        )
        return short / self.epsilon

    def save_csv(self, path) -> None:
        write_traces_csv(path, self.centers, self.times, self.values)

    @classmethod
    def load_csv(cls, path, b0, rho, sound_speed, epsilon) -> "MeasurementSet":
        centers, times, values = read_traces_csv(path)
        return cls(centers, times, values, np.asarray(b0, float), rho, sound_speed, epsilon)


def synthesize_emf(
    current: CurrentField | VectorField,
    mask: DomainMask,
    params: PhysicsParams,
    b0,
    centers,
    times,
) -> MeasurementSet:
    """emf traces via the pulse-gradient quadrature (adjoint route).

    Evaluates ``(b0/rho) . sum_x h^3 J(x) x grad p_eps(x, t; y)`` over inside
    nodes for every pulse center and time.
    """
    J = current.J if isinstance(current, CurrentField) else current
    grid = J.grid
    b0 = np.asarray(b0, dtype=float)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    times = np.asarray(times, dtype=float)
    eps, c, rho = params.pulse_width, params.sound_speed, params.rho
    _check_centers_clear(mask, centers, eps)
    inside = mask.inside
    X = grid.coords[inside]
    Jv = J.values[inside]
    wts = _trapezoid_weights(mask).ravel()
    h3 = grid.spacing**3
    values = np.empty((centers.shape[0], times.size))
    tchunk = max(1, int(8_000_000 // max(X.shape[0], 1)))
    for k, y in enumerate(centers):
        rel = X - y
        d = np.linalg.norm(rel, axis=1)
        u = rel / d[:, None]
        s = wts * (np.cross(Jv, u) @ b0)
        for j0 in range(0, times.size, tchunk):
            t = times[j0 : j0 + tchunk]
            q = pulse_gradient_radial(d[:, None], t[None, :], c, eps)
            values[k, j0 : j0 + tchunk] = (h3 / rho) * (s @ q)
    return MeasurementSet(centers, times, values, b0, rho, c, eps)


def synthesize_emf_means(
    source: SourceDistribution,
    params: PhysicsParams,
    b0,
    centers,
    times,
    degree: int = 41,
) -> MeasurementSet:
    """emf traces via spherical means of the mollified transform source.

    ``m(t) = t * mean_{|z|=1} f(y + c t z)`` with ``f = (b0 . W)/rho``; this
    is the (4 pi)-normalised surface integral form of the measurement
    identity.
    """
    b0 = np.asarray(b0, dtype=float)
    times = np.asarray(times, dtype=float)
    f = ScalarField(source.grid, source.W.values @ (b0 / params.rho))
    means = spherical_means(f, centers, params.sound_speed * times, degree=degree)
    values = means * times[None, :]
    return MeasurementSet(
        np.atleast_2d(np.asarray(centers, float)),
        times,
        values,
        b0,
        params.rho,
        params.sound_speed,
        params.pulse_width,
    )


def synthesize_emf_direct(
    sigma: Conductivity,
    fields: CoilFields,
    mask: DomainMask,
    params: PhysicsParams,
    b0,
    centers,
    times,
    tol: float = 1e-8,
) -> MeasurementSet:
    """emf traces via the time-domain potential route (direct route).

    For each pulse position and time, solves the Neumann problem for the
    electric potential driven by ``(grad p_eps / rho) x B0`` and integrates
    the resulting current against the flux kernel.  One elliptic solve per
    trace sample: this is the expensive, physically independent route used
    for reciprocity checks.
    """
    grid = fields.grid
    b0 = np.asarray(b0, dtype=float)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    times = np.asarray(times, dtype=float)
    eps, c, rho = params.pulse_width, params.sound_speed, params.rho
    _check_centers_clear(mask, centers, eps)
    box = mask.box_slices
    X = grid.coords[box + (slice(None),)]
    sig_box = sigma.sigma.values[box]
    C_box = fields.kernel.values[box + (slice(None),)]
    wts = _trapezoid_weights(mask)
    h3 = grid.spacing**3
    values = np.empty((centers.shape[0], times.size))
    for k, y in enumerate(centers):
        rel = X - y
        d = np.sqrt(np.sum(rel**2, axis=-1))
        u = rel / d[..., None]
        warm = None
        for j, t in enumerate(times):
            gp = pulse_gradient_radial(d, t, c, eps)[..., None] * u
            F_box = np.cross(gp / rho, b0[None, None, None, :])
            F_full = np.zeros(grid.dims + (3,))
            F_full[box + (slice(None),)] = F_box
            sol = solve_neumann(sigma, VectorField(grid, F_full), mask, tol=tol, x0=warm)
            warm = sol.w.values[box].copy()
            integrand = sig_box[..., None] * (F_box - sol.grad.values[box + (slice(None),)])
            values[k, j] = h3 * np.einsum("ijk,ijkd,ijkd->", wts, integrand, C_box)
    return MeasurementSet(centers, times, values, b0, rho, c, eps)
