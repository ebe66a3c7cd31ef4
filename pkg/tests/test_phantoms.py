"""Conductivity phantom generators and admissibility checks."""

import numpy as np
import pytest

from maetkit.errors import ConfigError
from maetkit.phantoms import (
    bump_family,
    constant_sigma,
    gaussian_bumps_sigma,
    layered_sigma,
    make_sigma,
    random_bumps,
    validate_sigma,
)


class TestGenerators:
    def test_constant(self, grid16):
        s = constant_sigma(grid16, 2.5)
        assert np.all(s.values == 2.5)
        with pytest.raises(ConfigError):
            constant_sigma(grid16, 0.0)

    def test_gaussian_bump_formula(self, grid16):
        c = (0.1, -0.2, 0.0)
        s = gaussian_bumps_sigma(grid16, [(c, 0.3, 0.4)], base=1.2)
        X = grid16.coords
        expect = 1.2 + 0.4 * np.exp(-np.sum((X - np.array(c)) ** 2, axis=-1) / 0.09)
        np.testing.assert_allclose(s.values, expect, atol=1e-14)

    def test_negative_amplitude_allowed(self, grid16):
        s = gaussian_bumps_sigma(grid16, [((0, 0, 0), 0.2, -0.5)], base=1.0)
        assert s.values.min() == pytest.approx(0.5, abs=0.05)

    def test_bad_width_rejected(self, grid16):
        with pytest.raises(ConfigError, match="width"):
            gaussian_bumps_sigma(grid16, [((0, 0, 0), 0.0, 0.1)])

    def test_layered_limits(self, grid16):
        s = layered_sigma(grid16, [0.0], [1.0, 2.0], axis=2, transition=0.05)
        assert s.values[:, :, 0] == pytest.approx(1.0, abs=1e-6)
        assert s.values[:, :, -1] == pytest.approx(2.0, abs=1e-6)
        mid = s.values[:, :, grid16.dims[2] // 2]
        assert 1.2 < mid.mean() < 1.8

    def test_layered_validation(self, grid16):
        with pytest.raises(ConfigError, match="more layer value"):
            layered_sigma(grid16, [0.0, 0.2], [1.0, 2.0])
        with pytest.raises(ConfigError, match="increasing"):
            layered_sigma(grid16, [0.2, 0.0], [1.0, 2.0, 3.0])

    def test_random_bumps_deterministic_and_interior(self, grid16):
        a = random_bumps(grid16, 5, seed=11)
        b = random_bumps(grid16, 5, seed=11)
        assert a == b
        for center, width, amp in a:
            assert all(-0.36 <= c <= 0.36 for c in center)
            assert 0.08 <= width <= 0.2
            assert 0.1 <= abs(amp) <= 0.4


class TestMakeSigma:
    def test_dispatch(self, grid16):
        s = make_sigma(grid16, {"kind": "constant", "value": 1.5})
        assert np.all(s.values == 1.5)
        s = make_sigma(
            grid16,
            {
                "kind": "gaussian-bumps",
                "base": 1.0,
                "bumps": [{"center": [0, 0, 0], "width": 0.2, "amplitude": 0.3}],
            },
        )
        assert s.values.max() == pytest.approx(1.3, abs=0.03)  # node offset from centre
        s = make_sigma(grid16, {"kind": "layered", "boundaries": [0.0], "values": [1, 2]})
        assert s.values[:, :, -1].mean() == pytest.approx(2.0, abs=1e-3)

    def test_random_family_spec(self, grid16):
        s1 = make_sigma(grid16, {"kind": "gaussian-bumps", "count": 3, "seed": 4})
        s2 = make_sigma(grid16, {"kind": "gaussian-bumps", "count": 3, "seed": 4})
        np.testing.assert_array_equal(s1.values, s2.values)

    def test_unknown_kind_rejected(self, grid16):
        with pytest.raises(ConfigError, match="unknown phantom kind"):
            make_sigma(grid16, {"kind": "voronoi"})
        with pytest.raises(ConfigError, match="needs"):
            make_sigma(grid16, {"kind": "gaussian-bumps"})


class TestValidate:
    def test_inside_class(self, grid16):
        s = gaussian_bumps_sigma(grid16, [((0, 0, 0), 0.25, 0.4)], base=1.0)
        report = validate_sigma(s, 0.25, Lam=4.0)
        assert report["min"] >= 0.25 and report["max"] <= 4.0
        assert report["lipschitz"] > 0.0

    def test_range_violation(self, grid16):
        s = constant_sigma(grid16, 5.0)
        with pytest.raises(ConfigError, match="leaves"):
            validate_sigma(s, 0.25)

    def test_lipschitz_violation(self, grid16):
        s = gaussian_bumps_sigma(grid16, [((0, 0, 0), 0.1, 0.9)], base=1.0)
        with pytest.raises(ConfigError, match="Lipschitz"):
            validate_sigma(s, 0.25, Lam=1.0)

    def test_bad_lam_rejected(self, grid16):
        s = constant_sigma(grid16, 1.0)
        with pytest.raises(ConfigError, match="lam"):
            validate_sigma(s, 1.5)


class TestBumpFamily:
    def test_family_is_admissible_and_reproducible(self, grid16):
        fam = bump_family(grid16, count=10, seed=7)
        assert len(fam) == 10
        for s in fam:
            validate_sigma(s, 0.25, Lam=4.0)
        fam2 = bump_family(grid16, count=10, seed=7)
        np.testing.assert_array_equal(fam[3].values, fam2[3].values)

    def test_amplitudes_spread(self, grid16):
        fam = bump_family(grid16, count=5, seed=7)
        maxima = sorted(s.values.max() for s in fam)
        assert maxima[0] < 1.1 and maxima[-1] > 1.25
