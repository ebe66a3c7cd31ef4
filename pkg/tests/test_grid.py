"""Grids, discrete calculus, norms, interpolation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maetkit.grid import (
    DomainMask,
    Grid3,
    ScalarField,
    VectorField,
    curl_transpose_values,
    curl_values,
    deriv,
    deriv_transpose,
    discrete_curl,
    discrete_div,
    discrete_grad,
    embed,
    grad_transpose_values,
    grad_values,
    hcurl_norm,
    holder_boundary_norm,
    holder_norm_points,
    integrate,
    lp_norm,
    mean_value,
    restrict,
    subgrid_offset,
    trilinear_sample,
)

from conftest import unit_grid


def centered_cell_grid(n: int) -> Grid3:
    """n^3 cell-centre nodes of the unit box: node sums are midpoint rules."""
    h = 1.0 / n
    return Grid3((n, n, n), (-0.5 + h / 2,) * 3, h)


# ---------------------------------------------------------------------------
# Grid3 basics


class TestGrid3:
    def test_too_small_dims_rejected(self):
        with pytest.raises(ValueError, match=">= 4"):
            Grid3((3, 8, 8), (0, 0, 0), 0.1)

    @pytest.mark.parametrize("h", [0.0, -1.0, np.nan])
    def test_bad_spacing_rejected(self, h):
        with pytest.raises(ValueError, match="spacing"):
            Grid3((4, 4, 4), (0, 0, 0), h)

    def test_index_position_bijection(self, grid16):
        p = grid16.position((3, 0, 15))
        np.testing.assert_allclose(p, [-0.5 + 3 / 15, -0.5, 0.5], atol=1e-14)
        assert grid16.coords.shape == (16, 16, 16, 3)
        np.testing.assert_array_equal(grid16.coords[3, 0, 15], p)

    def test_extent_and_refine(self, grid16):
        assert grid16.extent == ((-0.5, 0.5),) * 3
        fine = grid16.refine()
        assert fine.dims == (31, 31, 31)
        assert fine.extent == grid16.extent
        # every coarse node is a fine node
        np.testing.assert_allclose(fine.axes[0][::2], grid16.axes[0], atol=1e-14)

    def test_field_shape_and_finite_checks(self, grid16):
        with pytest.raises(ValueError, match="shape"):
            ScalarField(grid16, np.zeros((16, 16, 15)))
        bad = np.zeros(grid16.dims)
        bad[0, 0, 0] = np.inf
        with pytest.raises(ValueError, match="finite"):
            ScalarField(grid16, bad)
        with pytest.raises(ValueError, match="shape"):
            VectorField(grid16, np.zeros(grid16.dims))

    def test_fields_are_immutable(self, grid16):
        f = ScalarField(grid16, np.zeros(grid16.dims))
        with pytest.raises(ValueError):
            f.values[0, 0, 0] = 1.0


# ---------------------------------------------------------------------------
# differential operators


class TestOperators:
    def test_grad_constant_is_zero(self, grid16):
        g = discrete_grad(ScalarField(grid16, np.full(grid16.dims, 3.7)))
        np.testing.assert_allclose(g.values, 0.0, atol=1e-13)

    def test_grad_linear_exact(self, grid16):
        f = ScalarField(grid16, grid16.coords[..., 0])
        g = discrete_grad(f)
        np.testing.assert_allclose(g.values[..., 0], 1.0, atol=1e-12)
        np.testing.assert_allclose(g.values[..., 1:], 0.0, atol=1e-12)

    def test_grad_richardson_order_two(self):
        errs = []
        for n in (17, 33):
            grid = Grid3((n, n, n), (0, 0, 0), 1.0 / (n - 1))
            x = grid.coords[..., 0]
            g = grad_values(np.sin(np.pi * x), grid.spacing)
            errs.append(np.abs(g[..., 0] - np.pi * np.cos(np.pi * x)).max())
        ratio = errs[0] / errs[1]
        assert 3.3 <= ratio <= 4.7

    def test_div_constant_and_linear(self, grid16):
        F = VectorField(grid16, np.broadcast_to([1.0, -2.0, 0.5], grid16.dims + (3,)).copy())
        np.testing.assert_allclose(discrete_div(F).values, 0.0, atol=1e-13)
        d = discrete_div(VectorField(grid16, grid16.coords.copy()))
        np.testing.assert_allclose(d.values, 3.0, atol=1e-11)

    def test_div_component_independence(self, grid16):
        vals = np.zeros(grid16.dims + (3,))
        vals[..., 0] = np.sin(np.pi * grid16.coords[..., 1])
        d = discrete_div(VectorField(grid16, vals))
        np.testing.assert_allclose(d.values, 0.0, atol=1e-12)

    def test_curl_of_gradient_vanishes(self, grid16):
        X = grid16.coords
        f = ScalarField(grid16, X[..., 0] * X[..., 1] * X[..., 2])
        c = discrete_curl(discrete_grad(f))
        np.testing.assert_allclose(c.values, 0.0, atol=1e-11)

    def test_curl_linear_exact(self, grid16):
        X = grid16.coords
        vals = np.stack([-X[..., 1], X[..., 0], np.zeros(grid16.dims)], axis=-1)
        c = discrete_curl(VectorField(grid16, vals))
        np.testing.assert_allclose(c.values[..., 2], 2.0, atol=1e-11)
        np.testing.assert_allclose(c.values[..., :2], 0.0, atol=1e-12)

    def test_curl_richardson_order_two(self):
        errs = []
        for n in (17, 33):
            grid = Grid3((n, n, n), (0, 0, 0), 1.0 / (n - 1))
            x = grid.coords[..., 0]
            vals = np.zeros(grid.dims + (3,))
            vals[..., 1] = np.sin(np.pi * x)
            c = curl_values(vals, grid.spacing)
            errs.append(np.abs(c[..., 2] - np.pi * np.cos(np.pi * x)).max())
        assert 3.3 <= errs[0] / errs[1] <= 4.7

    def test_div_of_curl_vanishes(self, grid16, rng):
        # the 1-D stencils along different axes commute, so div(curl F) is
        # zero to rounding for arbitrary data, not just smooth fields
        F = VectorField(grid16, rng.standard_normal(grid16.dims + (3,)))
        d = discrete_div(discrete_curl(F))
        scale = np.abs(F.values).max() / grid16.spacing ** 2
        assert np.abs(d.values).max() <= 1e-13 * scale

    def test_operator_linearity(self, grid16, rng):
        a = rng.standard_normal(grid16.dims)
        b = rng.standard_normal(grid16.dims)
        h = grid16.spacing
        lhs = grad_values(2.0 * a + 3.0 * b, h)
        rhs = 2.0 * grad_values(a, h) + 3.0 * grad_values(b, h)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestTransposes:
    """The hand-rolled stencil transposes are exact algebraic adjoints."""

    @given(axis=st.integers(0, 2), seed=st.integers(0, 2**31))
    @settings(max_examples=20, deadline=None)
    def test_deriv_transpose_adjoint(self, axis, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((6, 5, 7))
        b = rng.standard_normal((6, 5, 7))
        h = 0.37
        lhs = np.sum(deriv(a, axis, h) * b)
        rhs = np.sum(a * deriv_transpose(b, axis, h))
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)

    def test_curl_transpose_adjoint(self, rng):
        F = rng.standard_normal((6, 7, 5, 3))
        G = rng.standard_normal((6, 7, 5, 3))
        h = 0.21
        lhs = np.sum(curl_values(F, h) * G)
        rhs = np.sum(F * curl_transpose_values(G, h))
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)

    def test_grad_transpose_adjoint(self, rng):
        f = rng.standard_normal((6, 7, 5))
        G = rng.standard_normal((6, 7, 5, 3))
        h = 0.44
        lhs = np.sum(grad_values(f, h) * G)
        rhs = np.sum(f * grad_transpose_values(G, h))
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


# ---------------------------------------------------------------------------
# integrals and norms


class TestNorms:
    def test_constant_field_l1_l2(self):
        grid = centered_cell_grid(20)
        mask = DomainMask(grid)
        f = ScalarField(grid, np.ones(grid.dims))
        assert integrate(f, mask) == pytest.approx(1.0, abs=1e-12)
        assert lp_norm(f, mask, 1.0) == pytest.approx(1.0, abs=1e-12)
        assert lp_norm(f, mask, 2.0) ** 2 == pytest.approx(1.0, abs=1e-12)
        assert mean_value(f, mask) == pytest.approx(1.0)

    def test_constant_vector_hcurl(self):
        grid = centered_cell_grid(16)
        mask = DomainMask(grid)
        c = np.array([3.0, 0.0, 4.0])
        F = VectorField(grid, np.broadcast_to(c, grid.dims + (3,)).copy())
        assert hcurl_norm(F, mask) == pytest.approx(5.0, rel=1e-10)

    def test_linear_field_l2_oracle(self):
        # integral of x^2 over [0,1]^3 is 1/3; midpoint rule error <= h^2
        for n in (10, 20):
            h = 1.0 / n
            grid = Grid3((n, n, n), (h / 2, h / 2, h / 2), h)
            mask = DomainMask(grid)
            f = ScalarField(grid, grid.coords[..., 0])
            err = abs(lp_norm(f, mask, 2.0) ** 2 - 1.0 / 3.0)
            assert err <= grid.spacing**2

    def test_vector_mask_volume_inflation(self, grid16):
        # vertex-centred grids inflate the node-sum box by one cell layer
        mask = DomainMask(grid16)
        f = ScalarField(grid16, np.ones(grid16.dims))
        assert integrate(f, mask) == pytest.approx(1.0, rel=3.5 * grid16.spacing)

    def test_lq_and_linf(self, grid16, rng):
        mask = DomainMask(grid16)
        vals = rng.standard_normal(grid16.dims)
        f = ScalarField(grid16, vals)
        assert lp_norm(f, mask, np.inf) == pytest.approx(np.abs(vals).max())
        h3 = grid16.spacing**3
        assert lp_norm(f, mask, 4.0) == pytest.approx((h3 * np.sum(vals**4)) ** 0.25)

    def test_norm_of_abs_equals_norm(self, grid16, rng):
        mask = DomainMask(grid16)
        vals = rng.standard_normal(grid16.dims)
        for p in (1.0, 2.0, 4.0, np.inf):
            assert lp_norm(ScalarField(grid16, vals), mask, p) == pytest.approx(
                lp_norm(ScalarField(grid16, np.abs(vals)), mask, p)
            )

    def test_subbox_mask(self, grid16):
        mask = DomainMask(grid16, (4, 4, 4), (11, 11, 11))
        f = ScalarField(grid16, np.ones(grid16.dims))
        assert integrate(f, mask) == pytest.approx(mask.volume)
        assert mask.n_inside == 8**3


class TestDomainMask:
    def test_boundary_faces_area(self, grid16):
        mask = DomainMask(grid16)
        assert mask.area == pytest.approx(6.0, rel=1e-12)
        sub = DomainMask(grid16, (2, 2, 2), (12, 12, 12))
        side = 10 * grid16.spacing
        assert sub.area == pytest.approx(6.0 * side**2, rel=1e-12)

    def test_boundary_face_normals(self, grid16):
        faces = DomainMask(grid16).boundary_faces
        nrm = faces["normal"]
        # every normal is a signed unit coordinate vector
        assert np.all(np.abs(nrm).sum(axis=1) == 1.0)
        # outward: the sample centres sit outside the node hull
        assert faces["center"][:, 0].min() == pytest.approx(-0.5 - grid16.spacing / 2)

    def test_boundary_nodes_unique_and_shell(self, grid16):
        mask = DomainMask(grid16, (1, 1, 1), (14, 14, 14))
        nodes = mask.boundary_nodes
        assert len(np.unique(nodes, axis=0)) == nodes.shape[0]
        n = 14  # 14 nodes per axis in the box
        assert nodes.shape[0] == n**3 - (n - 2) ** 3

    def test_invalid_boxes_rejected(self, grid16):
        with pytest.raises(ValueError):
            DomainMask(grid16, (0, 0, 0), (16, 15, 15))
        with pytest.raises(ValueError):
            DomainMask(grid16, (5, 0, 0), (5, 15, 15))

    def test_interior_depth(self, grid16):
        mask = DomainMask(grid16)
        inner = mask.interior(3)
        assert inner.sum() == 10**3
        assert not inner[2, 8, 8] and inner[3, 8, 8]


# ---------------------------------------------------------------------------
# Hoelder boundary norm


class TestHolder:
    def test_zero_and_constant(self, grid16):
        mask = DomainMask(grid16)
        z = ScalarField(grid16, np.zeros(grid16.dims))
        assert holder_boundary_norm(z, 0.5, mask) == 0.0
        c = ScalarField(grid16, np.full(grid16.dims, 5.0))
        assert holder_boundary_norm(c, 0.5, mask) == pytest.approx(5.0)

    def test_linear_profile_oracle(self, grid16):
        # f = x1 on the unit-box shell: seminorm 1 on pure-x face pairs,
        # sup 0.5, so the norm is 1.5 (all-pairs scan, below the subsample cap)
        mask = DomainMask(grid16)
        assert mask.boundary_nodes.shape[0] <= 4096
        f = ScalarField(grid16, grid16.coords[..., 0])
        assert holder_boundary_norm(f, 0.5, mask) == pytest.approx(1.5, rel=1e-12)

    def test_alpha_validation(self):
        pts = np.zeros((2, 3))
        with pytest.raises(ValueError, match="alpha"):
            holder_norm_points(pts, np.array([0.0, 1.0]), 1.0)

    def test_subsample_deterministic_and_bounded(self, rng):
        pts = rng.standard_normal((6000, 3))
        vals = rng.standard_normal(6000)
        a = holder_norm_points(pts, vals, 0.5, max_nodes=512)
        b = holder_norm_points(pts, vals, 0.5, max_nodes=512)
        full = holder_norm_points(pts, vals, 0.5, max_nodes=6000)
        assert a == b
        assert a <= full + 1e-12


# ---------------------------------------------------------------------------
# embedding and interpolation


class TestEmbedRestrict:
    def test_round_trip(self, grid16, rng):
        big = Grid3((24, 24, 24), (-0.5 - 4 * grid16.spacing,) * 3, grid16.spacing)
        f = ScalarField(grid16, rng.standard_normal(grid16.dims))
        emb = embed(f, big)
        assert subgrid_offset(big, grid16) == (4, 4, 4)
        back = restrict(emb, grid16)
        np.testing.assert_array_equal(back.values, f.values)
        assert emb.values.sum() == pytest.approx(f.values.sum())

    def test_vector_round_trip(self, grid16, rng):
        big = Grid3((20, 20, 20), (-0.5 - 2 * grid16.spacing,) * 3, grid16.spacing)
        F = VectorField(grid16, rng.standard_normal(grid16.dims + (3,)))
        np.testing.assert_array_equal(restrict(embed(F, big), grid16).values, F.values)

    def test_misaligned_rejected(self, grid16):
        shifted = Grid3((20, 20, 20), (-0.5 + 0.4 * grid16.spacing,) * 3, grid16.spacing)
        with pytest.raises(ValueError, match="misaligned"):
            subgrid_offset(shifted, grid16)
        other = Grid3((20, 20, 20), (-0.5,) * 3, grid16.spacing * 1.5)
        with pytest.raises(ValueError, match="spacing"):
            subgrid_offset(other, grid16)


class TestTrilinear:
    def test_exact_on_trilinear_functions(self, grid16, rng):
        X = grid16.coords
        vals = 2.0 + 3.0 * X[..., 0] - X[..., 1] + 0.5 * X[..., 2]
        pts = rng.uniform(-0.45, 0.45, size=(40, 3))
        out = trilinear_sample(vals, grid16, pts)
        expect = 2.0 + 3.0 * pts[:, 0] - pts[:, 1] + 0.5 * pts[:, 2]
        np.testing.assert_allclose(out, expect, atol=1e-12)

    def test_zero_outside_hull(self, grid16):
        vals = np.ones(grid16.dims)
        pts = np.array([[0.7, 0.0, 0.0], [0.0, -1.0, 0.0], [0.51, 0.51, 0.51]])
        np.testing.assert_array_equal(trilinear_sample(vals, grid16, pts), 0.0)

    def test_node_values_reproduced(self, grid16, rng):
        vals = rng.standard_normal(grid16.dims)
        pts = grid16.coords[5, 7, 3][None, :]
        assert trilinear_sample(vals, grid16, pts)[0] == pytest.approx(vals[5, 7, 3])

    def test_vector_sampling(self, grid16, rng):
        vals = rng.standard_normal(grid16.dims + (3,))
        pts = grid16.coords[2, 3, 4][None, :]
        np.testing.assert_allclose(
            trilinear_sample(vals, grid16, pts)[0], vals[2, 3, 4], atol=1e-12
        )
