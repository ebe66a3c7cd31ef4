"""Shared fixtures: small grids, a disk coil, and cached expensive solves.

Session-scoped fixtures hold the handful of genuinely expensive objects
(coil field tables, elliptic solves) so the cheap unit tests stay fast.
"""

import numpy as np
import pytest

from maetkit.coil import CoilFields, coil_fields, make_disk_coil
from maetkit.elliptic import Conductivity
from maetkit.forward import PhysicsParams, adjoint_current
from maetkit.grid import DomainMask, Grid3, ScalarField


def unit_grid(n: int) -> Grid3:
    """n^3 nodes on the centred unit box [-0.5, 0.5]^3."""
    return Grid3((n, n, n), (-0.5, -0.5, -0.5), 1.0 / (n - 1))


def bump_sigma(grid: Grid3, amplitude: float = 0.35, width: float = 0.22) -> ScalarField:
    """The standard single-bump phantom used across the suite."""
    X = grid.coords
    c = np.array([0.12, -0.08, 0.05])
    values = 1.0 + amplitude * np.exp(-np.sum((X - c) ** 2, axis=-1) / width**2)
    return ScalarField(grid, values)


@pytest.fixture(scope="session")
def grid16() -> Grid3:
    return unit_grid(16)


@pytest.fixture(scope="session")
def grid24() -> Grid3:
    return unit_grid(24)


@pytest.fixture(scope="session")
def grid32() -> Grid3:
    return unit_grid(32)


@pytest.fixture(scope="session")
def disk_coil():
    return make_disk_coil((0.0, 0.0, 1.4), (0.0, 0.0, 1.0), 1.2, n_radial=48, n_angular=64)


@pytest.fixture(scope="session")
def fields24(disk_coil, grid24) -> CoilFields:
    return coil_fields(disk_coil, grid24)


@pytest.fixture(scope="session")
def fields32(disk_coil, grid32) -> CoilFields:
    return coil_fields(disk_coil, grid32)


@pytest.fixture(scope="session")
def physics() -> PhysicsParams:
    return PhysicsParams(
        b0_list=(np.eye(3)[0],), rho=1.0, sound_speed=1.0, pulse_width=2.0 / 31.0
    )


@pytest.fixture(scope="session")
def current24(fields24, grid24):
    """Adjoint current for the bump phantom on the 24^3 grid."""
    cond = Conductivity(bump_sigma(grid24), 0.25)
    return cond, adjoint_current(cond, fields24, tol=1e-11)


@pytest.fixture(scope="session")
def current32(fields32, grid32):
    """Adjoint current for the bump phantom on the 32^3 grid."""
    cond = Conductivity(bump_sigma(grid32), 0.25)
    return cond, adjoint_current(cond, fields32, tol=1e-11)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20260814)


@pytest.fixture()
def full_mask24(grid24) -> DomainMask:
    return DomainMask(grid24)
