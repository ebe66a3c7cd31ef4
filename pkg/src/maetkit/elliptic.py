"""Variable-coefficient Neumann problems on box domains.

Solves the weak form of ``div(sigma grad w) = div(sigma F)`` in a box with the
natural boundary condition ``sigma dw/dnu = sigma F . nu``:

    find mean-zero w with  int sigma grad w . grad phi = int sigma F . grad phi
    for all phi.

The discretisation is an edge-based stiffness form: every lattice edge inside
the box carries the harmonic mean of the endpoint conductivities, a trapezoid
taper in the two transverse directions and the edge difference quotient.  The
right-hand side applies the same edge quadrature to ``sigma F . grad phi``
(never differentiating ``sigma F``), so the discrete system is symmetric
positive semidefinite with the constants as kernel, the load vector sums to
zero structurally, and gradient data ``F = grad f*`` with ``f*`` at most
quadratic per coordinate is reproduced exactly.

The solver is conjugate gradients on the mean-zero subspace with a Jacobi
preconditioner, matrix-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ConvergenceError
from .grid import (
    DomainMask,
    ScalarField,
    VectorField,
    grad_values,
    lp_norm,
)

__all__ = [
    "Conductivity",
    "PotentialSolution",
    "solve_neumann",
    "energy_check",
]


@dataclass(frozen=True)
class Conductivity:
    """An admissible conductivity: ``lam <= sigma <= 1/lam`` with a W1inf bound.

    Parameters
    ----------
    sigma : ScalarField
        Node samples of the conductivity.
    lam : float
        Contrast parameter in (0, 1]; admissibility means ``sigma`` lies in
        ``[lam, 1/lam]`` on the domain.
    w1_bound : float, optional
        Bound on the discrete ``W^{1,inf}`` norm ``max(sup|sigma|,
        sup|grad sigma|)``.  Computed (and then asserted) if omitted.
    mask : DomainMask, optional
        Box over which admissibility is enforced; the full grid by default.
    """

    sigma: ScalarField
    lam: float
    w1_bound: float | None = None
    mask: DomainMask | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.lam <= 1.0:
            raise ConfigError(f"contrast parameter lam must be in (0, 1], got {self.lam}")
        mask = self.mask if self.mask is not None else DomainMask(self.sigma.grid)
        object.__setattr__(self, "mask", mask)
        vals = self.sigma.values[mask.inside]
        lo, hi = float(vals.min()), float(vals.max())
        if lo < self.lam - 1e-12 or hi > 1.0 / self.lam + 1e-12:
            raise ConfigError(
                f"sigma range [{lo:.6g}, {hi:.6g}] violates [{self.lam:.6g}, {1.0/self.lam:.6g}]"
            )
        grad = grad_values(self.sigma.values, self.sigma.grid.spacing)
        w1 = max(
            float(np.abs(vals).max()),
            float(np.sqrt(np.sum(grad[mask.inside] ** 2, axis=-1)).max()),
        )
        if self.w1_bound is None:
            object.__setattr__(self, "w1_bound", w1)
        elif w1 > self.w1_bound * (1.0 + 1e-12):
            raise ConfigError(
                f"discrete W1,inf norm {w1:.6g} exceeds declared bound {self.w1_bound:.6g}"
            )


@dataclass(frozen=True)
class PotentialSolution:
    """Solution of a Neumann solve.

    ``w`` is mean-zero over the box; ``grad`` uses box-local one-sided
    stencils at the box shell.  ``imbalance`` is the per-node discrete
    residual ``b - A w`` of the weak form (the Kirchhoff imbalance of the
    solver's edge-current network), on the box subarray.
    """

    w: ScalarField
    grad: VectorField
    residual: float
    iterations: int
    mask: DomainMask
    imbalance: np.ndarray

    @property
    def net_boundary_outflow(self) -> float:
        """Solver-consistent net current leaving the box.

        Interior edge currents cancel in the shell sum, so this equals the
        (tiny) accumulated weak-form residual on the shell nodes.
        """
        box = self.imbalance
        interior = box[1:-1, 1:-1, 1:-1]
        return float(abs(box.sum() - interior.sum()))


class _EdgeStiffness:
    """Edge-coefficient assembly and matrix-free operations on the box."""

    def __init__(self, sig_box: np.ndarray, h: float):
        self.h = h
        self.shape = sig_box.shape
        self.coeff: list[np.ndarray] = []
        diag = np.zeros(self.shape)
        for d in range(3):
            lo = tuple(slice(0, -1) if a == d else slice(None) for a in range(3))
            hi = tuple(slice(1, None) if a == d else slice(None) for a in range(3))
            sa, sb = sig_box[lo], sig_box[hi]
            sig_e = 2.0 * sa * sb / (sa + sb)
            taper = np.ones(sig_e.shape)
            for t in range(3):
                if t == d:
                    continue
                edge_sl = [slice(None)] * 3
                edge_sl[t] = 0
                taper[tuple(edge_sl)] *= 0.5
                edge_sl[t] = -1
                taper[tuple(edge_sl)] *= 0.5
            c = sig_e * taper * h
            self.coeff.append(c)
            diag[lo] += c
            diag[hi] += c
        self.diag = diag

    def matvec(self, w: np.ndarray) -> np.ndarray:
        out = np.zeros_like(w)
        for d, c in enumerate(self.coeff):
            lo = tuple(slice(0, -1) if a == d else slice(None) for a in range(3))
            hi = tuple(slice(1, None) if a == d else slice(None) for a in range(3))
            f = c * (w[hi] - w[lo])
            out[hi] += f
            out[lo] -= f
        return out

    def rhs(self, F_box: np.ndarray) -> np.ndarray:
        b = np.zeros(self.shape)
        for d, c in enumerate(self.coeff):
            lo = tuple(slice(0, -1) if a == d else slice(None) for a in range(3))
            hi = tuple(slice(1, None) if a == d else slice(None) for a in range(3))
            fbar = 0.5 * (F_box[lo + (d,)] + F_box[hi + (d,)])
            g = (c * self.h) * fbar
            b[hi] += g
            b[lo] -= g
        return b


def _as_sigma_field(sigma) -> ScalarField:
    if isinstance(sigma, Conductivity):
        return sigma.sigma
    if isinstance(sigma, ScalarField):
        return sigma
    raise TypeError("sigma must be a Conductivity or ScalarField")


def solve_neumann(
    sigma,
    F: VectorField,
    mask: DomainMask | None = None,
    tol: float = 1e-10,
    max_iter: int | None = None,
    x0: np.ndarray | None = None,
) -> PotentialSolution:
    """Solve the weak Neumann problem for the potential of ``sigma F``.

    Parameters
    ----------
    sigma : Conductivity or ScalarField
        Coefficient field (must be strictly positive).
    F : VectorField
        Source vector field; the data enters only through ``sigma F``.
    mask : DomainMask, optional
        Box domain; the full grid by default.
    tol : float
        Relative residual target ``||b - A w|| / ||b||``.
    max_iter : int, optional
        Iteration cap; defaults to ``1000 * N**(1/3)`` for ``N`` box nodes.
    x0 : ndarray, optional
        Warm-start values on the box subarray.

    Returns
    -------
    PotentialSolution
        Mean-zero potential, its gradient, and solver diagnostics.

    Raises
    ------
    ConvergenceError
        If the iteration cap is reached before the tolerance.
    """
    sig = _as_sigma_field(sigma)
    grid = sig.grid
    if F.grid != grid:
        raise ConfigError("sigma and F live on different grids")
    if mask is None:
        mask = DomainMask(grid)
    h = grid.spacing
    box = mask.box_slices
    sig_box = sig.values[box]
    if sig_box.min() <= 0.0:
        raise ConfigError("sigma must be strictly positive on the domain")
    op = _EdgeStiffness(sig_box, h)
    b = op.rhs(F.values[box + (slice(None),)])
    b -= b.mean()
    n = b.size
    if max_iter is None:
        max_iter = int(1000 * round(n ** (1.0 / 3.0)))

    inv_diag = 1.0 / op.diag
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        w = np.zeros(op.shape)
        iters, rnorm = 0, 0.0
    else:
        w = np.zeros(op.shape) if x0 is None else np.array(x0, dtype=float)
        w -= w.mean()
        r = b - op.matvec(w)
        z = inv_diag * r
        z -= z.mean()
        p = z.copy()
        rz = float(np.dot(r.ravel(), z.ravel()))
        rnorm = float(np.linalg.norm(r))
        iters = 0
        while rnorm / bnorm > tol:
            if iters >= max_iter:
                raise ConvergenceError(
                    f"Neumann solve: residual {rnorm / bnorm:.3e} after {iters} iterations"
                )
            q = op.matvec(p)
            alpha = rz / float(np.dot(p.ravel(), q.ravel()))
            w += alpha * p
            r -= alpha * q
            rnorm = float(np.linalg.norm(r))
            z = inv_diag * r
            z -= z.mean()
            rz_new = float(np.dot(r.ravel(), z.ravel()))
            p = z + (rz_new / rz) * p
            rz = rz_new
            iters += 1
        w -= w.mean()

    imbalance = b - op.matvec(w)
    grad_box = grad_values(w, h)
    w_full = np.zeros(grid.dims)
    w_full[box] = w
    grad_full = np.zeros(grid.dims + (3,))
    grad_full[box + (slice(None),)] = grad_box
    return PotentialSolution(
        w=ScalarField(grid, w_full),
        grad=VectorField(grid, grad_full),
        residual=rnorm / bnorm if bnorm > 0 else 0.0,
        iterations=iters,
        mask=mask,
        imbalance=imbalance,
    )


def energy_check(sol: PotentialSolution, sigma, F: VectorField, lam: float | None = None) -> dict:
    """Gradient energy bound diagnostics for a Neumann solution.

    Returns the L2 norms of ``grad w`` and ``F`` over the box and the bound
    ratio ``||grad w|| / (lam**-2 ||F||)``, which the weak form keeps at or
    below one up to quadrature slack.
    """
    if lam is None:
        lam = sigma.lam if isinstance(sigma, Conductivity) else 1.0
    mask = sol.mask
    lhs = lp_norm(sol.grad, mask, 2.0)
    fnorm = lp_norm(F, mask, 2.0)
    bound = fnorm / lam**2
    return {
        "grad_norm": lhs,
        "data_norm": fnorm,
        "bound": bound,
        "ratio": lhs / bound if bound > 0 else 0.0,
    }
