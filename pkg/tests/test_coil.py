"""Coil geometry, kernel quadratures, and the curl identity."""

import numpy as np
import pytest

from maetkit.coil import (
    biot_savart_B,
    check_curl_identity,
    coil_fields,
    disk_axis_kernel_curl,
    distance_to_coil,
    flux_kernel,
    kernel_curl,
    make_disk_coil,
    make_polygon_coil,
    sup_distance_to_coil,
)
from maetkit.errors import ConfigError
from maetkit.grid import DomainMask, Grid3, VectorField

from conftest import unit_grid

AXIS_G_ORACLE = 0.04472135954999579  # mu r^2 / (2 (d^2 + r^2)^{3/2}) at r=1, d=2


@pytest.fixture(scope="module")
def unit_disk():
    """Disk r=1 in the plane z=-1 with normal +e3."""
    return make_disk_coil((0.0, 0.0, -1.0), (0.0, 0.0, 1.0), 1.0)


class TestCoilConstruction:
    def test_disk_quadrature_invariants(self, unit_disk):
        # planarity and exact area
        offsets = (unit_disk.nodes - unit_disk.center) @ unit_disk.normal
        assert np.abs(offsets).max() <= 1e-12
        assert unit_disk.area == pytest.approx(np.pi, rel=1e-10)
        assert np.all(unit_disk.weights > 0.0)

    def test_polygon_quadrature_invariants(self):
        square = make_polygon_coil(
            [(0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)], subdivisions=3
        )
        assert square.area == pytest.approx(1.0, rel=1e-10)
        offsets = (square.nodes - square.center) @ square.normal
        assert np.abs(offsets).max() <= 1e-12
        np.testing.assert_allclose(square.normal, [0, 0, 1], atol=1e-12)

    def test_non_coplanar_polygon_rejected(self):
        with pytest.raises(ConfigError, match="coplanar"):
            make_polygon_coil([(0, 0, 0), (1, 0, 0), (1, 1, 0.3), (0, 1, 0)])

    def test_bad_disk_parameters(self):
        with pytest.raises(ConfigError, match="radius"):
            make_disk_coil((0, 0, 0), (0, 0, 1), -1.0)
        with pytest.raises(ConfigError, match="n_radial"):
            make_disk_coil((0, 0, 0), (0, 0, 1), 1.0, n_angular=2)

    def test_distance_helpers_disk(self, unit_disk):
        d = distance_to_coil(unit_disk, [(0.0, 0.0, 1.0), (3.0, 0.0, -1.0)])
        np.testing.assert_allclose(d, [2.0, 2.0], atol=1e-12)
        s = sup_distance_to_coil(unit_disk, [(0.0, 0.0, 1.0)])
        assert s[0] == pytest.approx(np.sqrt(5.0), rel=1e-12)


class TestFluxKernel:
    def test_axis_vanishing(self, unit_disk):
        pts = np.array([[0.0, 0.0, z] for z in (0.2, 0.5, 1.0, 2.0)])
        C = flux_kernel(unit_disk, pts)
        # rotational symmetry kills C on the axis up to quadrature rounding
        off = flux_kernel(unit_disk, np.array([[0.5, 0.0, 1.0]]))
        assert np.abs(C).max() <= 1e-12 * np.linalg.norm(off)

    def test_rotational_symmetry(self, unit_disk):
        p = np.array([0.4, 0.1, 0.7])
        theta = 0.83
        R = np.array(
            [
                [np.cos(theta), -np.sin(theta), 0.0],
                [np.sin(theta), np.cos(theta), 0.0],
                [0.0, 0.0, 1.0],
            ]
        )
        c1 = flux_kernel(unit_disk, (R @ p)[None, :])[0]
        c0 = flux_kernel(unit_disk, p[None, :])[0]
        np.testing.assert_allclose(c1, R @ c0, atol=1e-13)

    def test_quadrature_refinement_converged(self):
        coarse = make_disk_coil((0, 0, -1), (0, 0, 1), 1.0, n_radial=64, n_angular=64)
        fine = make_disk_coil((0, 0, -1), (0, 0, 1), 1.0, n_radial=256, n_angular=256)
        p = np.array([[0.5, 0.0, 1.0]])
        c, cf = flux_kernel(coarse, p)[0], flux_kernel(fine, p)[0]
        assert np.linalg.norm(c - cf) <= 1e-6 * np.linalg.norm(cf)

    def test_general_form_agrees(self, unit_disk, rng):
        pts = rng.uniform(-0.4, 0.4, (10, 3))
        a = flux_kernel(unit_disk, pts)
        b = flux_kernel(unit_disk, pts, general_form=True)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12 * np.abs(a).max())

    def test_linearity_in_mu_and_superposition(self):
        one = make_disk_coil((0, 0, -1), (0, 0, 1), 1.0, mu=1.0)
        two = make_disk_coil((0, 0, -1), (0, 0, 1), 1.0, mu=2.0)
        other = make_disk_coil((0, 0, 2), (0, 1, 0), 0.5)
        pts = np.array([[0.3, -0.2, 0.4]])
        np.testing.assert_allclose(
            flux_kernel(two, pts), 2.0 * flux_kernel(one, pts), atol=1e-15
        )
        total = flux_kernel(one, pts) + flux_kernel(other, pts)
        assert np.linalg.norm(total) > 0  # superposition is just a sum of kernels


class TestKernelCurl:
    def test_axis_closed_form(self, unit_disk):
        G = kernel_curl(unit_disk, np.array([[0.0, 0.0, 1.0]]))[0]
        assert np.linalg.norm(G) == pytest.approx(AXIS_G_ORACLE, rel=1e-6)
        # direction is -n for a point on the +n side
        assert G[2] < 0
        np.testing.assert_allclose(G[:2], 0.0, atol=1e-12)

    def test_axis_closed_form_helper(self):
        assert disk_axis_kernel_curl(1.0, 2.0, 1.0) == pytest.approx(
            AXIS_G_ORACLE, rel=1e-15
        )
        assert disk_axis_kernel_curl(1.0, 2.0, 3.0) == pytest.approx(
            3.0 * AXIS_G_ORACLE, rel=1e-15
        )

    def test_nonzero_off_plane(self, unit_disk, rng):
        pts = rng.uniform(-0.4, 0.4, (20, 3))  # all have plane distance >= 0.6
        G = kernel_curl(unit_disk, pts)
        assert np.min(np.linalg.norm(G, axis=1)) > 0.0

    def test_general_form_agrees(self, unit_disk, rng):
        pts = rng.uniform(-0.4, 0.4, (10, 3))
        a = kernel_curl(unit_disk, pts)
        b = kernel_curl(unit_disk, pts, general_form=True)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12 * np.abs(a).max())

    def test_g_is_curl_free_and_div_free_inside(self, fields24, grid24):
        # G is a gradient of a function harmonic off the coil plane
        from maetkit.grid import curl_values, div_values

        h = grid24.spacing
        G = fields24.kernel_curl.values
        inner = (slice(2, -2),) * 3
        scale = np.abs(G).max() / h
        assert np.abs(curl_values(G, h)[inner]).max() <= 2e-2 * scale * h**2 / h
        assert np.abs(div_values(G, h)[inner]).max() <= 2e-2 * scale * h**2 / h


class TestCurlIdentity:
    def test_residual_richardson(self, disk_coil):
        report = {}
        for n in (16, 31):
            grid = unit_grid(n)
            report[n] = check_curl_identity(coil_fields(disk_coil, grid))["rel_l2"]
        assert 3.5 <= report[16] / report[31] <= 4.6

    def test_scaling_linearity(self, fields24):
        base = check_curl_identity(fields24)
        doubled = check_curl_identity(fields24.scaled(2.0))
        assert doubled["max_abs"] == pytest.approx(2.0 * base["max_abs"], rel=1e-12)
        assert doubled["rel_l2"] == pytest.approx(base["rel_l2"], rel=1e-12)

    def test_clearance_enforced(self, grid16):
        touching = make_disk_coil((0, 0, 0.5), (0, 0, 1), 0.5)
        with pytest.raises(ConfigError, match="clearance"):
            coil_fields(touching, grid16)


class TestBiotSavart:
    def test_zero_current(self, grid16):
        mask = DomainMask(grid16)
        J = VectorField(grid16, np.zeros(grid16.dims + (3,)))
        B = biot_savart_B(J, mask, [(2.0, 0.0, 0.0)])
        np.testing.assert_array_equal(B, 0.0)

    def test_linearity(self, grid16, rng):
        mask = DomainMask(grid16)
        vals = rng.standard_normal(grid16.dims + (3,))
        pts = [(2.0, 0.5, -1.0), (0.0, -3.0, 0.2)]
        B1 = biot_savart_B(VectorField(grid16, vals), mask, pts)
        B3 = biot_savart_B(VectorField(grid16, 3.0 * vals), mask, pts)
        np.testing.assert_allclose(B3, 3.0 * B1, rtol=1e-12)

    def test_dipole_far_field(self, grid24):
        # J = curl(psi e3) is solenoidal with magnetic moment (0, 0, int psi)
        X = grid24.coords
        w = 0.1
        psi = np.exp(-np.sum(X**2, axis=-1) / w**2)
        gx = -2.0 * X[..., 0] / w**2 * psi
        gy = -2.0 * X[..., 1] / w**2 * psi
        J = VectorField(grid24, np.stack([gy, -gx, np.zeros(grid24.dims)], axis=-1))
        mask = DomainMask(grid24)
        m = grid24.spacing**3 * psi.sum()
        pts = np.array([[2.0, 0.0, 0.0], [0.0, 0.0, 2.0], [1.2, 1.2, 1.2]])
        B = biot_savart_B(J, mask, pts)
        for p, b in zip(pts, B):
            r = np.linalg.norm(p)
            rhat = p / r
            dip = (3.0 * rhat[2] * rhat - np.array([0.0, 0.0, 1.0])) * m / (4 * np.pi * r**3)
            assert np.linalg.norm(b - dip) <= 0.05 * np.linalg.norm(dip)

    def test_observation_clearance(self, grid16, rng):
        mask = DomainMask(grid16)
        J = VectorField(grid16, rng.standard_normal(grid16.dims + (3,)))
        with pytest.raises(ConfigError, match="2h"):
            biot_savart_B(J, mask, [(0.0, 0.0, 0.0)])
