"""Stage 3: resistivity from internal current data.

Inside the object the current and the coil field satisfy
``curl(r J) = G`` with ``r = 1/sigma`` the resistivity, so ``r`` is the
minimizer of ``1/2 ||curl(r J) - G||^2`` over the admissible box
``[lam, 1/lam]``.  The least squares is solved by projected gradient
descent with Barzilai-Borwein steps and an Armijo backtracking line search;
the gradient uses the exact algebraic transposes of the curl and gradient
stencils, so it passes finite-difference checks to rounding.  An optional
``alpha/2 ||grad r||^2`` Tikhonov term stabilizes noisy data.

Identifiability is local: where ``|J|`` is small the data say nothing about
``r`` (the equation rows vanish), which the active mask and the
per-node rank report make explicit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .grid import (
    ScalarField,
    VectorField,
    curl_transpose_values,
    curl_values,
    deriv,
    grad_transpose_values,
    grad_values,
)

__all__ = [
    "ResistivityEstimate",
    "objective",
    "gradient",
    "recover_resistivity",
    "overdetermination_report",
    "fuse_estimates",
]


def _check_pair(J: VectorField, G: VectorField) -> None:
    if J.grid != G.grid:
        raise ConfigError("current and coil-curl fields live on different grids")


def objective(
    r: np.ndarray, J: VectorField, G: VectorField, alpha: float = 0.0
) -> float:
    """``1/2 ||curl(r J) - G||^2 + alpha/2 ||grad r||^2`` in L2 over the box."""
    _check_pair(J, G)
    h = J.grid.spacing
    resid = curl_values(r[..., None] * J.values, h) - G.values
    val = 0.5 * h**3 * float(np.sum(resid**2))
    if alpha > 0.0:
        g = grad_values(r, h)
        val += 0.5 * alpha * h**3 * float(np.sum(g**2))
    return val


def gradient(
    r: np.ndarray, J: VectorField, G: VectorField, alpha: float = 0.0
) -> np.ndarray:
    """Exact discrete gradient of :func:`objective` with respect to ``r``."""
    _check_pair(J, G)
    h = J.grid.spacing
    resid = curl_values(r[..., None] * J.values, h) - G.values
    ct = curl_transpose_values(resid, h)
    out = np.einsum("...d,...d->...", J.values, ct)
    if alpha > 0.0:
        out = out + alpha * grad_transpose_values(grad_values(r, h), h)
    return h**3 * out


def _normal_diagonal(J: VectorField, alpha: float) -> np.ndarray:
    """Diagonal of the Gauss-Newton normal matrix of :func:`objective`.

    Column ``x`` of ``r -> curl(r J)`` only touches the stencil neighbours
    of ``x``, and the two derivative terms of each curl component act along
    different axes, so their columns never overlap except through the
    one-sided self-coefficients on boundary faces.  That makes the squared
    column norms (hence the diagonal) available in closed form from the 1-D
    derivative matrix of each axis.
    """
    grid = J.grid
    h = grid.spacing
    col_sq = []
    self_coef = []
    for axis, n in enumerate(grid.dims):
        mat = deriv(np.eye(n), 0, h)
        sq = (mat**2).sum(axis=0)
        sc = np.diag(mat).copy()
        shape = [1, 1, 1]
        shape[axis] = n
        col_sq.append(sq.reshape(shape))
        self_coef.append(sc.reshape(shape))
    Jv = J.values
    diag = np.zeros(grid.dims)
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        diag += Jv[..., k] ** 2 * col_sq[j] + Jv[..., j] ** 2 * col_sq[k]
        diag -= 2.0 * Jv[..., j] * Jv[..., k] * self_coef[j] * self_coef[k]
    if alpha > 0.0:
        diag += alpha * (col_sq[0] + col_sq[1] + col_sq[2])
    diag *= h**3
    top = float(diag.max(initial=0.0))
    if top <= 0.0:
        return np.ones(grid.dims)
    return np.maximum(diag, 1e-12 * top)


@dataclass(frozen=True)
class ResistivityEstimate:
    """Recovered resistivity with optimizer provenance.

    ``active_mask`` marks nodes where ``|J|`` is at least a tenth of its
    median — the region where the data constrain ``r``; outside it the
    value is regularization-determined and should not be trusted.
    """

    r: ScalarField
    sigma: ScalarField
    objective_history: np.ndarray
    active_mask: np.ndarray
    converged: bool
    iterations: int
    projected_gradient: float

    def __post_init__(self) -> None:
        hist = np.asarray(self.objective_history, dtype=float)
        hist.setflags(write=False)
        object.__setattr__(self, "objective_history", hist)
        am = np.asarray(self.active_mask, dtype=bool)
        am.setflags(write=False)
        object.__setattr__(self, "active_mask", am)


def active_region(J: VectorField, fraction: float = 0.1) -> np.ndarray:
    """Nodes where ``|J|`` is at least ``fraction`` times its median."""
    mag = np.sqrt(np.sum(J.values**2, axis=-1))
    return mag >= fraction * np.median(mag)


def recover_resistivity(
    J: VectorField,
    G: VectorField,
    lam: float,
    alpha: float = 0.0,
    iter_cap: int = 500,
    tol: float = 1e-8,
    r0: np.ndarray | None = None,
) -> ResistivityEstimate:
    """Projected BB gradient descent for ``r`` within ``[lam, 1/lam]``.

    The descent direction is Jacobi-preconditioned by the exact diagonal of
    the normal matrix (see :func:`_normal_diagonal`); without it the spread
    of ``|J|`` over the box makes plain gradient steps stall.  The diagonal
    scaling keeps the box projection a componentwise clip.  Stops when the
    projected-gradient norm falls below ``tol`` times its initial value, or
    at ``iter_cap`` (best iterate returned, flagged unconverged).  A
    backtracking stall after the projected gradient has dropped below
    ``sqrt(eps)`` of its start also counts as converged: at that point the
    remaining per-step reduction is below float rounding on the objective.
    The objective history is non-increasing by construction.
    """
    _check_pair(J, G)
    if not 0.0 < lam < 1.0:
        raise ConfigError("lam must be in (0, 1)")
    lo, hi = lam, 1.0 / lam
    grid = J.grid
    r = np.full(grid.dims, 1.0) if r0 is None else np.clip(np.asarray(r0, float), lo, hi)
    g = gradient(r, J, G, alpha)
    obj = objective(r, J, G, alpha)
    history = [obj]

    def pg_norm(rr, gg):
        return float(np.linalg.norm(rr - np.clip(rr - gg, lo, hi)))

    pg0 = pg_norm(r, g)
    if pg0 == 0.0:
        return ResistivityEstimate(
            ScalarField(grid, r),
            ScalarField(grid, 1.0 / r),
            np.array(history),
            active_region(J),
            True,
            0,
            0.0,
        )
    precond = _normal_diagonal(J, alpha)
    step = 1.0
    r_prev = None
    g_prev = None
    pg = pg0
    converged = False
    it = 0
    for it in range(1, iter_cap + 1):
        if r_prev is not None:
            s = (r - r_prev).ravel()
            y = (g - g_prev).ravel()
            sy = float(s @ y)
            if sy > 0:
                step = float(s @ (precond.ravel() * s)) / sy
            step = min(max(step, 1e-12), 1e12)
        direction = g / precond
        accepted = False
        tau = step
        for _ in range(40):
            cand = np.clip(r - tau * direction, lo, hi)
            decrease = float(np.sum(g * (r - cand)))
            cand_obj = objective(cand, J, G, alpha)
            if cand_obj <= obj - 1e-4 * decrease or decrease == 0.0:
                accepted = True
                break
            tau *= 0.5
        if not accepted or decrease == 0.0:
            # Backtracking ran out of representable descent (the Armijo
            # margin rounds away once the per-step reduction drops below
            # float noise on the objective).  Count that as convergence
            # when the projected gradient has already fallen far below
            # its starting value; an early stall stays a failure.
            if pg <= np.sqrt(np.finfo(float).eps) * pg0:
                converged = True
            break
        r_prev, g_prev = r, g
        r, obj = cand, cand_obj
        history.append(obj)
        g = gradient(r, J, G, alpha)
        pg = pg_norm(r, g)
        if pg <= tol * pg0:
            converged = True
            break
    return ResistivityEstimate(
        ScalarField(grid, r),
        ScalarField(grid, 1.0 / r),
        np.array(history),
        active_region(J),
        converged,
        it,
        pg,
    )


def overdetermination_report(J: VectorField, G: VectorField | None = None) -> dict:
    """Pointwise identifiability of ``curl(r J) = G`` in ``(r, grad r)``.

    Expanding ``curl(r J) = r curl J + grad r x J``, each node carries a
    3x4 system ``[curl J | -[J]_x] (r; grad r)``; its singular values
    measure how many of the three equations actually constrain the four
    local unknowns.  Reports the informative fraction (full-rank rows and
    ``|J|`` above threshold) and summary statistics.
    """
    h = J.grid.spacing
    Jv = J.values
    cJ = curl_values(Jv, h)
    N = int(np.prod(J.grid.dims))
    A = np.zeros((N, 3, 4))
    A[:, :, 0] = cJ.reshape(-1, 3)
    Jf = Jv.reshape(-1, 3)
    # -[J]_x columns: (grad r) x J componentwise in (d1 r, d2 r, d3 r)
    A[:, 0, 2] = Jf[:, 2]
    A[:, 0, 3] = -Jf[:, 1]
    A[:, 1, 1] = -Jf[:, 2]
    A[:, 1, 3] = Jf[:, 0]
    A[:, 2, 1] = Jf[:, 1]
    A[:, 2, 2] = -Jf[:, 0]
    sv = np.linalg.svd(A, compute_uv=False)
    jmag = np.sqrt(np.sum(Jf**2, axis=1))
    scale = np.median(jmag)
    active = jmag >= 0.1 * scale
    full_rank = sv[:, 2] >= 1e-10 * max(sv[:, 0].max(), 1e-300)
    report = {
        "singular_values": sv.reshape(J.grid.dims + (3,)),
        "j_magnitude": jmag.reshape(J.grid.dims),
        "informative_fraction": float(np.mean(full_rank & active)),
        "degenerate_fraction": float(np.mean(~active)),
        "min_singular_median": float(np.median(sv[active, 2])) if active.any() else 0.0,
    }
    if G is not None:
        _check_pair(J, G)
        resid = curl_values(Jv, h) - G.values
        report["unit_r_residual"] = float(
            np.sqrt(np.sum(resid**2) / max(np.sum(G.values**2), 1e-300))
        )
    return report


def fuse_estimates(estimates, currents) -> ScalarField:
    """Combine per-coil estimates, weighting each by its ``|J|^2``.

    Nodes where every coil's current vanishes keep the unweighted average.
    """
    estimates = list(estimates)
    currents = list(currents)
    if len(estimates) != len(currents) or not estimates:
        raise ConfigError("need matching, nonempty estimate/current lists")
    grid = estimates[0].sigma.grid
    num = np.zeros(grid.dims)
    den = np.zeros(grid.dims)
    plain = np.zeros(grid.dims)
    for est, cur in zip(estimates, currents):
        if est.sigma.grid != grid or cur.grid != grid:
            raise ConfigError("estimates on mismatched grids")
        w = np.sum(cur.values**2, axis=-1)
        num += w * est.sigma.values
        den += w
        plain += est.sigma.values / len(estimates)
    out = np.where(den > 0, num / np.maximum(den, 1e-300), plain)
    return ScalarField(grid, out)
