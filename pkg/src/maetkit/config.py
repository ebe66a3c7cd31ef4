"""Experiment configuration: JSON schema, validation, canonical hashing.

A config is a plain JSON document with the sections ``grid``, ``coils``,
``physics``, ``phantom``, ``measurement``, ``inversion``, ``stability`` and
a top-level ``seed``.  Missing keys are filled from :func:`default_config`;
unknown keys are rejected so typos fail loudly instead of being ignored.

:func:`config_hash` hashes the *canonical* form (defaults applied, keys
sorted), so two files that mean the same experiment hash identically.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .acoustic_inverse import TransducerGeometry
from .coil import Coil, make_disk_coil, make_polygon_coil
from .errors import ConfigError
from .fieldio import read_mfld
from .forward import PhysicsParams
from .grid import DomainMask, Grid3, ScalarField
from .phantoms import make_sigma, validate_sigma


def default_config() -> dict:
    """Canonical default experiment: one bump in a unit box, disk coil."""
    return {
        "grid": {
            "shape": [32, 32, 32],
            "box": [[-0.5, -0.5, -0.5], [0.5, 0.5, 0.5]],
        },
        "coils": [
            {
                "kind": "disk",
                "center": [0.0, 0.0, 1.4],
                "normal": [0.0, 0.0, 1.0],
                "radius": 1.2,
                "mu": 1.0,
                "n_radial": 48,
                "n_angular": 64,
            }
        ],
        "physics": {
            "b0_strength": 1.0,
            "b0_axes": [0, 1, 2],
            "rho": 1.0,
            "sound_speed": 1.0,
        },
        "phantom": {
            "kind": "gaussian-bumps",
            "base": 1.0,
            "bumps": [
                {"center": [0.12, -0.08, 0.05], "width": 0.22, "amplitude": 0.35}
            ],
        },
        "measurement": {
            "geometry": {"kind": "sphere", "center": [0.0, 0.0, 0.0], "radius": 1.6},
            "n_centers": 48,
            "n_times": 72,
            "epsilon_cells": 2.0,
            "epsilon": None,
        },
        "inversion": {
            "source_alpha": 1e-6,
            "source_iters": 250,
            "source_tol": 1e-9,
            "degree": 95,
            "two_direction": False,
            "sigma_alpha": 1e-8,
            "sigma_iters": 1200,
            "sigma_tol": 1e-9,
        },
        "stability": {
            "interior_margin_cells": 4,
            "alpha": 0.5,
            "lam": 0.25,
            "Lam": 4.0,
        },
        "seed": 1234,
    }


def _merge_defaults(user: dict, defaults: dict, path: str = "") -> dict:
    """Defaults filled in recursively; unknown keys rejected."""
    out = copy.deepcopy(defaults)
    for key, val in user.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(defaults[key], dict) and key not in ("geometry", "phantom"):
            if not isinstance(val, dict):
                raise ConfigError(f"{where} must be an object")
            out[key] = _merge_defaults(val, defaults[key], where)
        else:
            out[key] = copy.deepcopy(val)
    return out


def canonicalize(raw: dict) -> dict:
    """Apply defaults and return the full canonical dict."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return _merge_defaults(raw, default_config())


def config_hash(canonical: dict) -> str:
    """sha256 over the canonical JSON (sorted keys, tight separators)."""
    blob = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _vec3(value, name: str) -> tuple:
    arr = np.asarray(value, dtype=float)
    _require(arr.shape == (3,) and np.isfinite(arr).all(), f"{name} must be a finite 3-vector")
    return tuple(float(v) for v in arr)


@dataclass
class ExperimentConfig:
    """Resolved experiment: validated objects plus the canonical dict.

    Build with :func:`load_config` or :func:`config_from_dict`.  The phantom
    is *not* rendered here (it needs only the grid, but rendering is the
    ``phantom`` stage's job); :meth:`build_sigma` does it on demand and
    checks the admissibility bounds.
    """

    raw: dict
    grid: Grid3
    coils: list
    physics: PhysicsParams
    geometry: TransducerGeometry
    n_centers: int
    n_times: int
    epsilon: float
    inversion: dict
    stability: dict
    seed: int
    hash: str = field(default="")

    def __post_init__(self) -> None:
        if not self.hash:
            self.hash = config_hash(self.raw)

    # -- derived pieces -----------------------------------------------------

    def b0_vectors(self) -> list:
        """Background-field vectors actually used for measurement."""
        strength = float(self.raw["physics"]["b0_strength"])
        axes = self.raw["physics"]["b0_axes"]
        return [strength * np.eye(3)[int(a)] for a in axes]

    def build_sigma(self) -> ScalarField:
        """Render the phantom and enforce the admissibility bounds."""
        sigma = make_sigma(self.grid, self.raw["phantom"])
        validate_sigma(sigma, self.stability["lam"], self.stability["Lam"])
        return sigma

    def interior_mask(self) -> DomainMask:
        """The trusted interior subdomain used for reporting errors."""
        m = int(self.stability["interior_margin_cells"])
        dims = self.grid.dims
        _require(
            2 * m < min(dims) - 2, f"interior margin {m} leaves no interior in {dims}"
        )
        return DomainMask(
            self.grid, (m, m, m), tuple(n - 1 - m for n in dims)
        )


def _build_grid(spec: dict) -> Grid3:
    shape = spec["shape"]
    box = spec["box"]
    _require(
        isinstance(shape, (list, tuple)) and len(shape) == 3,
        "grid.shape must be three node counts",
    )
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    _require(lo.shape == (3,) and hi.shape == (3,), "grid.box must be [[lo],[hi]]")
    _require(bool(np.all(hi > lo)), "grid.box must have positive extent")
    dims = tuple(int(n) for n in shape)
    spans = hi - lo
    h = spans[0] / (dims[0] - 1)
    for d in (1, 2):
        hd = spans[d] / (dims[d] - 1)
        _require(
            abs(hd - h) <= 1e-9 * h,
            f"grid spacing must be isotropic; axis {d} gives {hd!r} vs {h!r}",
        )
    return Grid3(dims, tuple(lo), float(h))


def _build_coil(spec: dict, index: int) -> Coil:
    kind = spec.get("kind", "disk")
    mu = float(spec.get("mu", 1.0))
    if kind == "disk":
        return make_disk_coil(
            _vec3(spec["center"], f"coils[{index}].center"),
            _vec3(spec["normal"], f"coils[{index}].normal"),
            float(spec["radius"]),
            mu=mu,
            n_radial=int(spec.get("n_radial", 48)),
            n_angular=int(spec.get("n_angular", 64)),
        )
    if kind == "polygon":
        verts = np.asarray(spec["vertices"], dtype=float)
        return make_polygon_coil(verts, mu=mu, subdivisions=int(spec.get("subdivisions", 4)))
    raise ConfigError(f"coils[{index}].kind must be 'disk' or 'polygon', got {kind!r}")


def _build_geometry(spec: dict) -> TransducerGeometry:
    kind = spec.get("kind")
    if kind == "sphere":
        return TransducerGeometry(
            "sphere",
            center=_vec3(spec.get("center", (0.0, 0.0, 0.0)), "measurement.geometry.center"),
            radius=float(spec["radius"]),
        )
    if kind == "plane":
        return TransducerGeometry(
            "plane",
            center=_vec3(spec.get("center", (0.0, 0.0, 0.0)), "measurement.geometry.center"),
            normal=_vec3(spec.get("normal", (0.0, 0.0, 1.0)), "measurement.geometry.normal"),
            offset=float(spec.get("offset", 0.0)),
            halfwidth=float(spec.get("halfwidth", 1.0)),
        )
    raise ConfigError(f"measurement.geometry.kind must be 'sphere' or 'plane', got {kind!r}")


def config_from_dict(raw: dict, base_dir: str | os.PathLike = ".") -> ExperimentConfig:
    """Validate a config dict and resolve it into usable objects.

    ``base_dir`` anchors relative paths referenced by the config (file
    phantoms); referenced files must exist.
    """
    canonical = canonicalize(raw)
    grid = _build_grid(canonical["grid"])
    coils = [_build_coil(c, i) for i, c in enumerate(canonical["coils"])]
    _require(len(coils) >= 1, "need at least one coil")

    phys = canonical["physics"]
    strength = float(phys["b0_strength"])
    _require(strength >= 0.0, "physics.b0_strength must be >= 0")
    axes = phys["b0_axes"]
    _require(
        isinstance(axes, list) and len(axes) in (2, 3) and sorted(set(axes)) == sorted(axes)
        and all(int(a) in (0, 1, 2) for a in axes),
        "physics.b0_axes must be 2 or 3 distinct axis indices",
    )

    meas = canonical["measurement"]
    eps = meas.get("epsilon")
    if eps is None:
        eps = float(meas["epsilon_cells"]) * grid.spacing
    else:
        eps = float(eps)
    _require(eps > 0.0, "pulse width must be positive")
    canonical["measurement"]["epsilon"] = eps
    geometry = _build_geometry(meas["geometry"])
    n_centers = int(meas["n_centers"])
    n_times = int(meas["n_times"])
    _require(n_centers >= 1 and n_times >= 2, "need n_centers >= 1 and n_times >= 2")

    inv = canonical["inversion"]
    for key in ("source_alpha", "sigma_alpha"):
        _require(float(inv[key]) >= 0.0, f"inversion.{key} must be >= 0")
    for key in ("source_iters", "sigma_iters"):
        _require(int(inv[key]) >= 1, f"inversion.{key} must be >= 1")

    stab = canonical["stability"]
    lam, Lam = float(stab["lam"]), float(stab["Lam"])
    _require(0.0 < lam < 1.0, "stability.lam must be in (0, 1)")
    _require(Lam > 0.0, "stability.Lam must be positive")
    _require(0.0 < float(stab["alpha"]) <= 1.0, "stability.alpha must be in (0, 1]")

    phantom = canonical["phantom"]
    if phantom.get("kind") == "file":
        path = os.path.join(base_dir, phantom["path"])
        _require(os.path.exists(path), f"phantom file {path!r} does not exist")
        phantom["path"] = os.path.abspath(path)

    # PhysicsParams wants nonzero B0 vectors; keep unit axes there and apply
    # the (possibly zero) strength in b0_vectors() at synthesis time.
    params = PhysicsParams(
        b0_list=tuple(np.eye(3)[int(a)] for a in axes),
        rho=float(phys["rho"]),
        sound_speed=float(phys["sound_speed"]),
        pulse_width=eps,
    )
    return ExperimentConfig(
        raw=canonical,
        grid=grid,
        coils=coils,
        physics=params,
        geometry=geometry,
        n_centers=n_centers,
        n_times=n_times,
        epsilon=eps,
        inversion=dict(inv),
        stability=dict(stab),
        seed=int(canonical["seed"]),
    )


def load_config(
    path: str | os.PathLike | None, seed: int | None = None
) -> ExperimentConfig:
    """Load and validate a JSON config file (``None`` -> built-in defaults).

    ``seed`` overrides the file's seed; the override is part of the
    canonical dict, so it changes the config hash.
    """
    if path is None:
        raw = {}
        base = "."
    else:
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path}: invalid JSON ({exc})") from exc
        base = os.path.dirname(os.path.abspath(path))
    if seed is not None:
        raw = dict(raw)
        raw["seed"] = int(seed)
    return config_from_dict(raw, base_dir=base)


def render_phantom(cfg: ExperimentConfig) -> ScalarField:
    """Phantom field for the config, honoring ``kind: file`` references."""
    phantom = cfg.raw["phantom"]
    if phantom.get("kind") == "file":
        field_ = read_mfld(phantom["path"])
        if not isinstance(field_, ScalarField):
            raise ConfigError("phantom file must hold a scalar field")
        if field_.grid != cfg.grid:
            raise ConfigError("phantom file grid does not match config grid")
        validate_sigma(field_, cfg.stability["lam"], cfg.stability["Lam"])
        return field_
    return cfg.build_sigma()
