"""Conductivity phantoms: members of the admissible class.

Admissible conductivities sit in ``[lam, 1/lam]`` with a Lipschitz bound
``Lam`` on the gradient; :func:`validate_sigma` enforces both on the grid
(discrete gradient, max norm) and every generator here is built to pass it
for sane parameters.  Gaussian widths follow the package convention: the
``width`` parameter is the 1/e half-width, ``exp(-|x-c|^2 / width^2)``.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .grid import Grid3, ScalarField, grad_values

__all__ = [
    "constant_sigma",
    "gaussian_bumps_sigma",
    "layered_sigma",
    "random_bumps",
    "make_sigma",
    "validate_sigma",
    "bump_family",
]


def constant_sigma(grid: Grid3, value: float = 1.0) -> ScalarField:
    """Uniform conductivity."""
    if value <= 0:
        raise ConfigError("conductivity must be positive")
    return ScalarField(grid, np.full(grid.dims, float(value)))


def gaussian_bumps_sigma(
    grid: Grid3, bumps, base: float = 1.0
) -> ScalarField:
    """Baseline plus isotropic Gaussian bumps.

    ``bumps`` is an iterable of ``(center, width, amplitude)`` triples;
    amplitudes may be negative (inclusions less conductive than the
    background).
    """
    X = grid.coords
    values = np.full(grid.dims, float(base))
    for center, width, amplitude in bumps:
        c = np.asarray(center, dtype=float)
        if width <= 0:
            raise ConfigError("bump width must be positive")
        r2 = np.sum((X - c) ** 2, axis=-1)
        values += float(amplitude) * np.exp(-r2 / float(width) ** 2)
    return ScalarField(grid, values)


def layered_sigma(
    grid: Grid3,
    boundaries,
    values,
    axis: int = 2,
    transition: float | None = None,
) -> ScalarField:
    """Stack of layers along ``axis`` with smooth tanh transitions.

    ``values`` has one more entry than ``boundaries``.  ``transition``
    defaults to two grid spacings — sharp enough to look like layers,
    smooth enough to keep the Lipschitz bound meaningful.
    """
    boundaries = list(boundaries)
    values = [float(v) for v in values]
    if len(values) != len(boundaries) + 1:
        raise ConfigError("need one more layer value than boundaries")
    if sorted(boundaries) != boundaries:
        raise ConfigError("layer boundaries must be increasing")
    if transition is None:
        transition = 2.0 * grid.spacing
    x = grid.coords[..., axis]
    out = np.full(grid.dims, values[0])
    for b, (low, high) in zip(boundaries, zip(values, values[1:])):
        out += (high - low) * 0.5 * (1.0 + np.tanh((x - b) / transition))
    return ScalarField(grid, out)


def random_bumps(
    grid: Grid3,
    count: int,
    seed: int,
    amplitude: tuple = (0.1, 0.4),
    width: tuple = (0.08, 0.2),
    margin: float = 0.15,
) -> list:
    """Deterministic pseudo-random bump list for phantom families.

    Centers stay ``margin`` (in box-extent units) away from the boundary so
    the contrast is interior.  The same seed reproduces the same list
    bit-exactly.
    """
    rng = np.random.default_rng(seed)
    lo = np.asarray(grid.origin)
    hi = lo + (np.asarray(grid.dims) - 1) * grid.spacing
    span = hi - lo
    bumps = []
    for _ in range(count):
        c = lo + span * (margin + (1 - 2 * margin) * rng.random(3))
        w = rng.uniform(*width)
        a = rng.uniform(*amplitude) * rng.choice((-1.0, 1.0))
        bumps.append((tuple(c), float(w), float(a)))
    return bumps


def make_sigma(grid: Grid3, spec: dict) -> ScalarField:
    """Build a conductivity from a config-style phantom spec.

    ``spec['kind']`` is one of ``constant``, ``gaussian-bumps``,
    ``layered``.  Gaussian bumps come either as an explicit ``bumps`` list
    or as ``count`` + ``seed`` for a reproducible random family.
    """
    kind = spec.get("kind")
    if kind == "constant":
        return constant_sigma(grid, spec.get("value", 1.0))
    if kind == "gaussian-bumps":
        if "bumps" in spec:
            bumps = [(b["center"], b["width"], b["amplitude"]) for b in spec["bumps"]]
        elif "count" in spec:
            bumps = random_bumps(grid, int(spec["count"]), int(spec.get("seed", 0)))
        else:
            raise ConfigError("gaussian-bumps spec needs 'bumps' or 'count'")
        return gaussian_bumps_sigma(grid, bumps, base=spec.get("base", 1.0))
    if kind == "layered":
        return layered_sigma(
            grid,
            spec["boundaries"],
            spec["values"],
            axis=int(spec.get("axis", 2)),
            transition=spec.get("transition"),
        )
    raise ConfigError(f"unknown phantom kind {kind!r}")


def validate_sigma(sigma: ScalarField, lam: float, Lam: float | None = None) -> dict:
    """Check membership in the admissible class; raise ConfigError if outside.

    Returns ``{'min', 'max', 'lipschitz'}`` (the discrete sup of ``|grad
    sigma|``).  ``Lam=None`` skips the Lipschitz bound.
    """
    if not 0.0 < lam < 1.0:
        raise ConfigError("lam must be in (0, 1)")
    v = sigma.values
    smin, smax = float(v.min()), float(v.max())
    g = grad_values(v, sigma.grid.spacing)
    lip = float(np.sqrt(np.sum(g**2, axis=-1)).max())
    if smin < lam - 1e-12 or smax > 1.0 / lam + 1e-12:
        raise ConfigError(
            f"sigma range [{smin:.4g}, {smax:.4g}] leaves [{lam:.4g}, {1/lam:.4g}]"
        )
    if Lam is not None and lip > Lam:
        raise ConfigError(f"sigma Lipschitz bound {lip:.4g} exceeds {Lam:.4g}")
    return {"min": smin, "max": smax, "lipschitz": lip}


def bump_family(grid: Grid3, count: int = 10, seed: int = 7, base: float = 1.0) -> list:
    """A reproducible family of single-bump conductivities.

    Used for the stability diagnostics: amplitudes spread over a fixed
    range, centers drawn deterministically.  Returns a list of
    ``ScalarField``.
    """
    rng = np.random.default_rng(seed)
    lo = np.asarray(grid.origin)
    hi = lo + (np.asarray(grid.dims) - 1) * grid.spacing
    span = hi - lo
    fields = []
    amps = np.linspace(0.05, 0.3, count)
    for a in amps:
        c = lo + span * (0.3 + 0.4 * rng.random(3))
        w = rng.uniform(0.1, 0.18)
        fields.append(gaussian_bumps_sigma(grid, [(tuple(c), w, float(a))], base=base))
    return fields
