"""Empirical evaluation of the stability theory behind the inversion.

The recovery of ``sigma`` on a subregion rests on a chain of measurable
quantities: a nonzero constraint ``|C| >= c`` on the subregion, smallness of
``grad sigma . C`` in ``L^q`` (``q = 3/(1-alpha)``) together with the Hoelder
norm of ``C . nu`` on the boundary, a resulting pointwise lower bound
``|J| >= lam c / 2``, and a weighted estimate

    int |sigma1 - sigma2| |J1|^2 dx <= const ||C||_L2 ||J1 - J2||_Hcurl

whose empirical constant this module tracks across phantom families.  The
analytic constants are not computable from the theory; everything here
reports the two sides and their ratio instead.

A truncated-box half-space mode places a planar coil below the ``z = 0``
face, where ``C . nu`` vanishes identically on the parallel faces and the
stability constant carries an ``R^(5/2)`` geometry factor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .coil import CoilFields, coil_fields, flux_kernel, make_disk_coil
from .elliptic import Conductivity
from .errors import ConfigError
from .forward import adjoint_current
from .grid import (
    DomainMask,
    Grid3,
    ScalarField,
    curl_values,
    holder_norm_points,
    lp_norm,
)

__all__ = [
    "StabilityReport",
    "nonzero_constraint",
    "smallness_quantities",
    "lower_bound_check",
    "weighted_estimate",
    "stability_ratio",
    "half_space_setup",
    "evaluate_stability",
]


@dataclass(frozen=True)
class StabilityReport:
    """Measured stability quantities for one configuration."""

    c_constraint: float
    min_j: float
    lambda_c_half: float
    smallness_lq: float
    smallness_holder: float
    weighted_lhs: float
    weighted_rhs: float
    empirical_cs: float
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in (
            "c_constraint",
            "min_j",
            "lambda_c_half",
            "smallness_lq",
            "smallness_holder",
            "weighted_lhs",
            "weighted_rhs",
            "empirical_cs",
        ):
            if float(getattr(self, name)) < 0.0:
                raise ConfigError(f"{name} must be nonnegative")

    def to_json(self) -> str:
        payload = {k: getattr(self, k) for k in self.__dataclass_fields__}
        return json.dumps(payload, indent=2, sort_keys=True)


def _mask_min_magnitude(field_values: np.ndarray, mask: DomainMask) -> float:
    sl = mask.box_slices
    mag = np.sqrt(np.sum(field_values[sl + (slice(None),)] ** 2, axis=-1))
    return float(mag.min())


def nonzero_constraint(fields: CoilFields, omega_p: DomainMask) -> float:
    """``min |C|`` over the subregion — the constant ``c`` of the theory."""
    return _mask_min_magnitude(fields.kernel.values, omega_p)


def smallness_quantities(
    sigma: Conductivity,
    fields: CoilFields,
    mask: DomainMask,
    alpha: float = 0.5,
) -> tuple:
    """Interior and boundary smallness terms of the lower-bound condition.

    Returns ``(lq, hoelder)``: the ``L^q`` norm of ``grad sigma . C`` over
    the box with ``q = 3/(1-alpha)``, and the discrete ``C^{0,alpha}`` norm
    of ``C . nu`` sampled at boundary face centers (coil kernel evaluated
    directly at the off-node face centers).
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError("Hoelder exponent must be in (0, 1)")
    q = 3.0 / (1.0 - alpha)
    grid = fields.grid
    h = grid.spacing
    grad_sig = np.gradient(sigma.sigma.values, h, edge_order=2)
    dots = (
        grad_sig[0] * fields.kernel.values[..., 0]
        + grad_sig[1] * fields.kernel.values[..., 1]
        + grad_sig[2] * fields.kernel.values[..., 2]
    )
    lq = lp_norm(ScalarField(grid, dots), mask, p=q)
    faces = mask.boundary_faces
    cvals = flux_kernel(fields.coil, faces["center"])
    cn = np.einsum("md,md->m", cvals, faces["normal"])
    hoelder = holder_norm_points(faces["center"], cn, alpha)
    return lq, hoelder


def lower_bound_check(
    sigma: Conductivity,
    fields: CoilFields,
    mask: DomainMask,
    omega_p: DomainMask,
    tol: float = 1e-10,
) -> dict:
    """Check ``|J| >= lam c / 2`` on the subregion and the proof's gradient bound.

    Returns the measured ``min |J|``, the ``lam c / 2`` threshold, the sup of
    ``|grad w|`` against ``c / 2``, and pass flags.  The condition is
    sufficient, not necessary: a failed flag is information, not an error.
    """
    current = adjoint_current(sigma, fields, mask, tol=tol)
    c = nonzero_constraint(fields, omega_p)
    lam = sigma.lam
    min_j = _mask_min_magnitude(current.J.values, omega_p)
    sl = mask.box_slices
    sup_grad_w = float(
        np.sqrt(np.sum(current.grad_w.values[sl + (slice(None),)] ** 2, axis=-1)).max()
    )
    return {
        "c_constraint": c,
        "min_j": min_j,
        "lambda_c_half": 0.5 * lam * c,
        "bound_holds": bool(min_j >= 0.5 * lam * c),
        "sup_grad_w": sup_grad_w,
        "grad_w_below_c_half": bool(sup_grad_w <= 0.5 * c),
        "iterations": current.solve_iterations,
    }


def _hcurl_box(values: np.ndarray, mask: DomainMask, h: float) -> float:
    sl = mask.box_slices
    sub = values[sl + (slice(None),)]
    c = curl_values(sub, h)
    l2 = np.sqrt(h**3 * np.sum(sub**2))
    cl2 = np.sqrt(h**3 * np.sum(c**2))
    return float(l2 + cl2)


def weighted_estimate(
    sigma1: Conductivity,
    sigma2: Conductivity,
    fields: CoilFields,
    mask: DomainMask,
    tol: float = 1e-10,
) -> dict:
    """Both sides of the weighted estimate and their empirical ratio.

    ``lhs = int |sigma1 - sigma2| |J1|^2``; ``rhs_core = ||C||_L2(box) *
    ||J1 - J2||_Hcurl(box)``.  The unknown analytic constant is
    ``ratio = lhs / rhs_core``, which must stay bounded across families.
    """
    grid = fields.grid
    h = grid.spacing
    J1 = adjoint_current(sigma1, fields, mask, tol=tol)
    J2 = adjoint_current(sigma2, fields, mask, tol=tol)
    sl = mask.box_slices
    diff = np.abs(sigma1.sigma.values - sigma2.sigma.values)[sl]
    j1sq = np.sum(J1.J.values[sl + (slice(None),)] ** 2, axis=-1)
    lhs = float(h**3 * np.sum(diff * j1sq))
    c_l2 = lp_norm(fields.kernel, mask, p=2)
    dj = _hcurl_box(J1.J.values - J2.J.values, mask, h)
    rhs_core = c_l2 * dj
    return {
        "lhs": lhs,
        "rhs_core": rhs_core,
        "c_l2": c_l2,
        "dj_hcurl": dj,
        "ratio": lhs / rhs_core if rhs_core > 0 else 0.0,
        "degenerate": rhs_core == 0.0,
    }


def stability_ratio(
    sigma1: Conductivity,
    sigma2: Conductivity,
    fields: CoilFields,
    mask: DomainMask,
    omega_p: DomainMask,
    R: float | None = None,
    tol: float = 1e-10,
) -> dict:
    """Empirical stability constant ``||d sigma||_L1(sub) / (||C|| ||dJ||)``.

    With ``R`` given (half-space mode: radius of the inhomogeneity region)
    also reports the ``R^(5/2)``-normalized constant of the truncated
    half-space estimate.
    """
    grid = fields.grid
    h = grid.spacing
    J1 = adjoint_current(sigma1, fields, mask, tol=tol)
    J2 = adjoint_current(sigma2, fields, mask, tol=tol)
    slp = omega_p.box_slices
    num = float(h**3 * np.sum(np.abs(sigma1.sigma.values - sigma2.sigma.values)[slp]))
    c_l2 = lp_norm(fields.kernel, mask, p=2)
    dj = _hcurl_box(J1.J.values - J2.J.values, mask, h)
    den = c_l2 * dj
    out = {
        "numerator_l1": num,
        "c_l2": c_l2,
        "dj_hcurl": dj,
        "empirical_cs": num / den if den > 0 else 0.0,
        "degenerate": den == 0.0,
    }
    if R is not None:
        r_factor = R**2.5
        out["r_factor"] = r_factor
        out["empirical_cs_halfspace"] = num / (r_factor * dj) if dj > 0 else 0.0
    return out


def half_space_setup(
    R: float,
    depth: float,
    coil_standoff: float,
    coil_radius: float,
    n: int,
    mu: float = 1.0,
) -> tuple:
    """Truncated half-space: box ``[-R, R]^2 x [0, depth]``, coil below.

    The disk coil sits in the plane ``z = -coil_standoff`` with normal
    ``e_z``, so ``C . nu`` vanishes identically on the two z-faces; the side
    faces carry the (reported) truncation residue.  Returns ``(grid, mask,
    fields)``.  ``n`` is the node count along x and y; z is matched to the
    same spacing.
    """
    if coil_standoff <= 0 or depth <= 0 or R <= 0:
        raise ConfigError("half-space dimensions must be positive")
    h = 2.0 * R / (n - 1)
    nz = max(int(round(depth / h)) + 1, 4)
    grid = Grid3((n, n, nz), (-R, -R, 0.0), h)
    coil = make_disk_coil(
        center=(0.0, 0.0, -coil_standoff),
        normal=(0.0, 0.0, 1.0),
        radius=coil_radius,
        mu=mu,
    )
    fields = coil_fields(coil, grid)
    return grid, DomainMask(grid), fields


def evaluate_stability(
    sigma1: Conductivity,
    sigma2: Conductivity,
    fields: CoilFields,
    mask: DomainMask,
    omega_p: DomainMask,
    alpha: float = 0.5,
    tol: float = 1e-10,
) -> StabilityReport:
    """Assemble the full report for one phantom pair."""
    c = nonzero_constraint(fields, omega_p)
    lq, hoelder = smallness_quantities(sigma1, fields, mask, alpha=alpha)
    bound = lower_bound_check(sigma1, fields, mask, omega_p, tol=tol)
    west = weighted_estimate(sigma1, sigma2, fields, mask, tol=tol)
    srat = stability_ratio(sigma1, sigma2, fields, mask, omega_p, tol=tol)
    return StabilityReport(
        c_constraint=c,
        min_j=bound["min_j"],
        lambda_c_half=bound["lambda_c_half"],
        smallness_lq=lq,
        smallness_holder=hoelder,
        weighted_lhs=west["lhs"],
        weighted_rhs=west["rhs_core"],
        empirical_cs=srat["empirical_cs"],
        params={
            "alpha": alpha,
            "q": 3.0 / (1.0 - alpha),
            "lambda": sigma1.lam,
            "bound_holds": bound["bound_holds"],
            "sup_grad_w": bound["sup_grad_w"],
        },
    )
