"""Stage 1: recover the transform source from emf traces.

The traces satisfy ``m(t; y) = t * (spherical mean of f at radius c t)``
with ``f`` the (mollified) transform source for one background-field
direction.  Dividing by ``t`` turns the inverse problem into inverting the
spherical-mean transform.  Instead of the closed-form inversion formulas of
the literature, this module applies CGLS with a Tikhonov term to the exact
discretization (Lebedev rule + trilinear sampling), whose adjoint is the
transposed gather stencil — exact to rounding.

Per background-field direction ``B0 = beta e_i`` the recovered scalar is
``fhat``; ``combine_b0`` assembles ``W_i = rho fhat / beta`` into a
:class:`~maetkit.forward.SourceDistribution`, optionally completing a third
component from two via the divergence-free constraint.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import irfftn, next_fast_len, rfftn
from scipy.integrate import cumulative_trapezoid
from scipy.spatial.transform import Rotation

from .errors import ConfigError, ConvergenceError
from .forward import (
    MeasurementSet,
    SourceDistribution,
    sphere_centers,
    sphere_quadrature,
)
from .grid import (
    DomainMask,
    Grid3,
    ScalarField,
    VectorField,
    deriv,
    trapezoid_box_weights,
    trilinear_indices,
)

__all__ = [
    "TransducerGeometry",
    "InverseSourceConfig",
    "SphericalMeanOperator",
    "cgls",
    "invert_source",
    "combine_b0",
    "complete_third_component",
]


@dataclass(frozen=True)
class TransducerGeometry:
    """Placement rule for pulse centers: a sphere or a plane patch.

    ``sphere``: centers on the sphere of given ``center``/``radius`` (golden
    spiral).  ``plane``: a square lattice on the plane ``x . normal =
    offset``, centred at ``center`` with the given ``halfwidth``.
    """

    kind: str
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.0
    normal: tuple = (0.0, 0.0, 1.0)
    offset: float = 0.0
    halfwidth: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("sphere", "plane"):
            raise ConfigError(f"unknown transducer geometry {self.kind!r}")

    def centers(self, count: int) -> np.ndarray:
        if self.kind == "sphere":
            return sphere_centers(count, self.center, self.radius)
        n = np.asarray(self.normal, dtype=float)
        n = n / np.linalg.norm(n)
        a = np.array([1.0, 0.0, 0.0])
        if abs(n[0]) > 0.9:
            a = np.array([0.0, 1.0, 0.0])
        e1 = np.cross(n, a)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n, e1)
        k = int(np.ceil(np.sqrt(count)))
        u = np.linspace(-self.halfwidth, self.halfwidth, k)
        uu, vv = np.meshgrid(u, u, indexing="ij")
        base = np.asarray(self.center, dtype=float)
        anchor = base + (self.offset - base @ n) * n
        pts = anchor[None, :] + uu.reshape(-1, 1) * e1 + vv.reshape(-1, 1) * e2
        return pts[:count]


@dataclass(frozen=True)
class InverseSourceConfig:
    """Regularization and solver knobs for the stage-1 least squares."""

    tikhonov_alpha: float = 1e-6
    max_iter: int = 150
    tol: float = 1e-9
    degree: int = 95
    geometry: TransducerGeometry | None = None

    def __post_init__(self) -> None:
        if self.tikhonov_alpha < 0:
            raise ConfigError("tikhonov_alpha must be >= 0")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be positive")


class SphericalMeanOperator:
    """Discrete spherical-mean transform with an exact transpose.

    Maps a grid scalar to its means over spheres ``(center_k, radius_j)``;
    the sphere samples are trilinear gathers (zero outside the grid hull),
    so the adjoint is the same stencil scattered.  Stencils are cached
    (int32 corners, float32 weights) — both directions use the identical
    cached values, which keeps the operator pair exactly transposed.

    With ``epsilon`` set, the operator is the mean of the Gaussian-mollified
    scalar: ``f -> means of (g_eps * f)``.  That matches the physical traces
    (a pulse of width ``eps`` measures the mollified source) and makes the
    rows smooth blobs rather than thin shells, so the least-squares
    reconstruction lives in a smooth function space.  The smoothing matrix
    is symmetric, hence the pair stays transposed.

    Each (center, radius) pair uses the quadrature rule in a deterministic
    random orientation.  A shared orientation would place every sample along
    the same direction set, and the rule points are far sparser than the
    mollification width on outer shells — the union of samples would leave
    systematic angular gaps that the least-squares solution cannot see.
    Rotating the frame per sphere keeps each row an exact rule of the same
    degree while the sample union tiles shells quasi-uniformly.
    """

    def __init__(
        self,
        grid: Grid3,
        centers: np.ndarray,
        radii: np.ndarray,
        degree: int = 95,
        epsilon: float | None = None,
        kernel_radius_sigmas: float = 8.0,
        orientation_seed: int = 0x5EED,
    ) -> None:
        self.grid = grid
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float))
        self.radii = np.atleast_1d(np.asarray(radii, dtype=float))
        if np.any(self.radii <= 0):
            raise ConfigError("sphere radii must be positive")
        dirs, w = sphere_quadrature(degree)
        self.dirs = dirs
        self.mean_weights = w / (4.0 * np.pi)
        self.n_centers = self.centers.shape[0]
        self.n_radii = self.radii.size
        self.n_dirs = dirs.shape[0]
        self.n_nodes = int(np.prod(grid.dims))
        # Only samples inside the grid hull are stored (outside ones carry
        # zero weight); rows are assembled through per-sample sphere ids.
        # On outer shells most of the sphere misses the grid, so the
        # compression is what makes high quadrature degrees affordable.
        rng = np.random.default_rng(orientation_seed)
        corners, weights, dot_w, sphere_of = [], [], [], []
        shell_ids = np.repeat(np.arange(self.n_radii), self.n_dirs)
        for k, y in enumerate(self.centers):
            frames = Rotation.random(self.n_radii, rng=rng).as_matrix()
            pts = np.einsum("rij,qj->rqi", frames, dirs)
            pts *= self.radii[:, None, None]
            pts += y
            corner, weight = trilinear_indices(grid, pts.reshape(-1, 3))
            keep = np.any(weight != 0.0, axis=1)
            corners.append(corner[keep].astype(np.int32))
            weights.append(weight[keep].astype(np.float32))
            dot_w.append(np.tile(self.mean_weights, self.n_radii)[keep])
            sphere_of.append((k * self.n_radii + shell_ids[keep]).astype(np.int32))
        self._corner = np.concatenate(corners)
        self._weight = np.concatenate(weights)
        self._dot_w = np.concatenate(dot_w)
        self._sphere_of = np.concatenate(sphere_of)
        self.epsilon = None if epsilon is None else float(epsilon)
        if self.epsilon is not None:
            if self.epsilon <= 0:
                raise ConfigError("epsilon must be positive")
            h = grid.spacing
            reach = [
                min(n - 1, int(np.ceil(kernel_radius_sigmas * self.epsilon / h)))
                for n in grid.dims
            ]
            ax = [
                np.exp(-((np.arange(-r, r + 1) * h) ** 2) / self.epsilon**2)
                / (np.sqrt(np.pi) * self.epsilon)
                for r in reach
            ]
            shape = [next_fast_len(n + r) for n, r in zip(grid.dims, reach)]
            kern = np.zeros(shape)
            sl = tuple(np.arange(-r, r + 1) for r in reach)
            kern[np.ix_(*sl)] = h**3 * (
                ax[0][:, None, None] * ax[1][None, :, None] * ax[2][None, None, :]
            )
            self._fft_shape = tuple(shape)
            self._ghat = rfftn(kern)

    def _smooth(self, f: np.ndarray) -> np.ndarray:
        """Gaussian mollification on the grid (zero extension outside)."""
        n = self.grid.dims
        conv = irfftn(rfftn(f, s=self._fft_shape) * self._ghat, s=self._fft_shape)
        return conv[: n[0], : n[1], : n[2]]

    @property
    def shape(self) -> tuple:
        return (self.n_centers * self.n_radii, self.n_nodes)

    def matvec(self, f: np.ndarray) -> np.ndarray:
        """Means array of shape (n_centers, n_radii) for grid values ``f``."""
        f = np.asarray(f, dtype=float).reshape(self.grid.dims)
        if self.epsilon is not None:
            f = self._smooth(f)
        flat = f.reshape(-1)
        vals = np.einsum(
            "ms,ms->m", flat[self._corner], self._weight, dtype=np.float64
        )
        out = np.bincount(
            self._sphere_of,
            weights=vals * self._dot_w,
            minlength=self.n_centers * self.n_radii,
        )
        return out.reshape(self.n_centers, self.n_radii)

    def rmatvec(self, means: np.ndarray) -> np.ndarray:
        """Transpose applied to a means-shaped array; returns grid values."""
        g = np.asarray(means, dtype=float).reshape(-1)
        coef = g[self._sphere_of] * self._dot_w
        acc = np.bincount(
            self._corner.reshape(-1),
            weights=(coef[:, None] * self._weight).reshape(-1),
            minlength=self.n_nodes,
        )
        out = acc.reshape(self.grid.dims)
        if self.epsilon is not None:
            out = self._smooth(out)
        return out


def cgls(
    matvec,
    rmatvec,
    b: np.ndarray,
    shape: tuple,
    alpha: float = 0.0,
    max_iter: int = 100,
    tol: float = 1e-9,
    x0: np.ndarray | None = None,
):
    """CGLS for ``min ||A x - b||^2 + alpha ||x||^2``.

    Returns ``(x, info)`` where ``info['objective']`` is the (monotone)
    augmented objective per iteration and ``info['normal_residual']`` the
    normal-equation residual norms.  Stops when the normal residual falls
    below ``tol`` times its initial value.
    """
    b = np.asarray(b, dtype=float).reshape(-1)
    x = np.zeros(shape[1]) if x0 is None else np.asarray(x0, dtype=float).copy()
    r = b - matvec(x).reshape(-1)
    s = rmatvec(r).reshape(-1) - alpha * x
    p = s.copy()
    gamma = float(s @ s)
    gamma0 = gamma
    objective = [float(r @ r + alpha * (x @ x))]
    normal_residual = [np.sqrt(gamma)]
    n_iter = 0
    for it in range(max_iter):
        if gamma <= tol**2 * gamma0 or gamma == 0.0:
            break
        q = matvec(p).reshape(-1)
        denom = float(q @ q + alpha * (p @ p))
        if denom == 0.0:
            break
        step = gamma / denom
        x += step * p
        r -= step * q
        s = rmatvec(r).reshape(-1) - alpha * x
        gamma_new = float(s @ s)
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
        objective.append(float(r @ r + alpha * (x @ x)))
        normal_residual.append(np.sqrt(gamma))
        n_iter = it + 1
    info = {
        "iterations": n_iter,
        "objective": np.array(objective),
        "normal_residual": np.array(normal_residual),
        "converged": gamma <= tol**2 * gamma0,
    }
    return x, info


def invert_source(
    meas: MeasurementSet,
    grid: Grid3,
    config: InverseSourceConfig | None = None,
    operator: SphericalMeanOperator | None = None,
):
    """Recover the scalar source for one background direction from traces.

    Solves ``min ||K f - m/t||^2 + alpha ||f||^2`` over grid scalars, where
    ``K`` is the discrete spherical-mean transform at the trace sampling
    ``(centers, c times)``.  Pass ``operator`` to reuse cached stencils
    across several right-hand sides (the sampling must match).
    """
    config = config or InverseSourceConfig()
    if operator is None:
        operator = SphericalMeanOperator(
            grid, meas.centers, meas.radii, degree=config.degree,
            epsilon=meas.epsilon,
        )
    else:
        if operator.grid != grid or operator.n_centers != meas.centers.shape[0]:
            raise ConfigError("cached operator does not match measurement sampling")
        if operator.epsilon != meas.epsilon:
            raise ConfigError("cached operator pulse width does not match traces")
    n_data = operator.shape[0]
    if n_data < 0.5 * operator.shape[1]:
        warnings.warn(
            f"severely underdetermined sampling: {n_data} traces for "
            f"{operator.shape[1]} unknowns",
            stacklevel=2,
        )
    data = meas.values / meas.times[None, :]
    x, info = cgls(
        operator.matvec,
        operator.rmatvec,
        data,
        operator.shape,
        alpha=config.tikhonov_alpha,
        max_iter=config.max_iter,
        tol=config.tol,
    )
    return ScalarField(grid, x.reshape(grid.dims)), info


def combine_b0(
    fhats,
    b0_list,
    rho: float,
    epsilon: float,
    source_box: DomainMask | None = None,
    two_direction: bool = False,
) -> SourceDistribution:
    """Assemble per-direction scalars into the vector source distribution.

    For ``B0 = beta e_i`` the component is ``W_i = rho fhat / beta``.  With
    ``two_direction`` the third component is integrated from ``div W = 0``
    (components must be the first two axes).
    """
    fhats = list(fhats)
    b0s = [np.asarray(b, dtype=float) for b in b0_list]
    if len(fhats) != len(b0s) or len(fhats) not in (2, 3):
        raise ConfigError("need two or three (fhat, B0) pairs")
    grid = fhats[0].grid
    W = np.zeros(grid.dims + (3,))
    for fhat, b0 in zip(fhats, b0s):
        if fhat.grid != grid:
            raise ConfigError("source components recovered on different grids")
        axis = int(np.argmax(np.abs(b0)))
        beta = b0[axis]
        if not np.allclose(b0, beta * np.eye(3)[axis], atol=1e-12 * abs(beta)):
            raise ConfigError("combine_b0 expects axis-aligned B0 directions")
        W[..., axis] = rho / beta * fhat.values
    if two_direction:
        if len(fhats) != 2:
            raise ConfigError("two_direction mode needs exactly two components")
        axes = sorted(int(np.argmax(np.abs(b))) for b in b0s)
        if axes != [0, 1]:
            raise ConfigError("two_direction mode expects B0 along x and y")
        W[..., 2] = complete_third_component(
            ScalarField(grid, W[..., 0]), ScalarField(grid, W[..., 1])
        ).values
    elif len(fhats) == 2:
        raise ConfigError("two components given without two_direction=True")
    if source_box is None:
        source_box = DomainMask(grid)
    Wf = VectorField(grid, W)
    h3 = grid.spacing**3
    total = h3 * W.reshape(-1, 3).sum(axis=0)
    return SourceDistribution(
        W=Wf, epsilon=epsilon, source_box=source_box, total_integral=total
    )


def complete_third_component(W1: ScalarField, W2: ScalarField) -> ScalarField:
    """Third source component from the first two via ``div W = 0``.

    Integrates ``d W3/dz = -(d W1/dx + d W2/dy)`` from the bottom grid face,
    where the padded source vanishes.
    """
    if W1.grid != W2.grid:
        raise ConfigError("component grids differ")
    grid = W1.grid
    h = grid.spacing
    rhs = -(deriv(W1.values, 0, h) + deriv(W2.values, 1, h))
    w3 = np.concatenate(
        [
            np.zeros(grid.dims[:2] + (1,)),
            cumulative_trapezoid(rhs, dx=h, axis=2),
        ],
        axis=2,
    )
    return ScalarField(grid, w3)
