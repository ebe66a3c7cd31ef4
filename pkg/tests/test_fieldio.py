"""MFLD v1 container, VTK export, trace CSV."""

import numpy as np
import pytest

from maetkit.fieldio import (
    read_mfld,
    read_traces_csv,
    write_mfld,
    write_traces_csv,
    write_vtk,
)
from maetkit.grid import Grid3, ScalarField, VectorField


@pytest.fixture()
def small_grid():
    return Grid3((5, 4, 6), (-0.25, 0.0, 1.5), 0.125)


class TestMfld:
    def test_scalar_round_trip_bit_exact(self, small_grid, rng, tmp_path):
        f = ScalarField(small_grid, rng.standard_normal(small_grid.dims))
        p1, p2 = tmp_path / "a.mfld", tmp_path / "b.mfld"
        write_mfld(p1, f)
        back = read_mfld(p1)
        assert isinstance(back, ScalarField)
        assert back.grid == small_grid
        np.testing.assert_array_equal(back.values, f.values)
        write_mfld(p2, back)
        assert p1.read_bytes() == p2.read_bytes()

    def test_vector_round_trip_bit_exact(self, small_grid, rng, tmp_path):
        F = VectorField(small_grid, rng.standard_normal(small_grid.dims + (3,)))
        p = tmp_path / "v.mfld"
        write_mfld(p, F)
        back = read_mfld(p)
        assert isinstance(back, VectorField)
        np.testing.assert_array_equal(back.values, F.values)

    def test_header_contract(self, small_grid, tmp_path):
        p = tmp_path / "h.mfld"
        write_mfld(p, ScalarField(small_grid, np.zeros(small_grid.dims)))
        head = p.read_bytes().split(b"\n\n")[0].decode("ascii").splitlines()
        assert head[0] == "MFLD 1"
        assert head[1] == "kind scalar"
        assert head[2] == "dims 5 4 6"
        assert head[3].startswith("origin -0.25 0.0 1.5")
        assert head[4] == "spacing 0.125"
        assert head[5] == "data little-endian f64"

    def test_payload_is_x_fastest(self, small_grid, tmp_path):
        vals = np.zeros(small_grid.dims)
        nx, ny, nz = small_grid.dims
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    vals[i, j, k] = i + 10.0 * j + 100.0 * k
        p = tmp_path / "order.mfld"
        write_mfld(p, ScalarField(small_grid, vals))
        blob = p.read_bytes()
        raw = np.frombuffer(blob[blob.find(b"\n\n") + 2 :], dtype="<f8")
        # x index varies fastest: first nx entries walk i at j=k=0
        np.testing.assert_array_equal(raw[:nx], np.arange(nx, dtype=float))
        assert raw[nx] == 10.0  # then j increments

    def test_vector_payload_interleaves_components(self, small_grid, tmp_path):
        vals = np.zeros(small_grid.dims + (3,))
        vals[..., 0] = 1.0
        vals[..., 1] = 2.0
        vals[..., 2] = 3.0
        vals[1, 0, 0] = (7.0, 8.0, 9.0)
        p = tmp_path / "vec.mfld"
        write_mfld(p, VectorField(small_grid, vals))
        blob = p.read_bytes()
        raw = np.frombuffer(blob[blob.find(b"\n\n") + 2 :], dtype="<f8")
        np.testing.assert_array_equal(raw[:6], [1.0, 2.0, 3.0, 7.0, 8.0, 9.0])

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "bad.mfld"
        p.write_bytes(b"MFLD 2\nkind scalar\n\n")
        with pytest.raises(ValueError, match="not an MFLD"):
            read_mfld(p)

    def test_truncated_payload_rejected(self, small_grid, tmp_path):
        p = tmp_path / "t.mfld"
        write_mfld(p, ScalarField(small_grid, np.zeros(small_grid.dims)))
        blob = p.read_bytes()
        p.write_bytes(blob[:-16])
        with pytest.raises(ValueError, match="payload"):
            read_mfld(p)

    def test_missing_terminator_rejected(self, tmp_path):
        p = tmp_path / "m.mfld"
        p.write_bytes(b"MFLD 1\nkind scalar\n")
        with pytest.raises(ValueError, match="terminator"):
            read_mfld(p)


class TestVtk:
    def test_scalar_export_structure(self, small_grid, rng, tmp_path):
        f = ScalarField(small_grid, rng.standard_normal(small_grid.dims))
        p = tmp_path / "f.vtk"
        write_vtk(p, f, name="sigma")
        lines = p.read_text().splitlines()
        assert lines[0].startswith("# vtk DataFile")
        assert "DATASET STRUCTURED_POINTS" in lines
        assert "DIMENSIONS 5 4 6" in lines
        assert f"POINT_DATA {small_grid.n_nodes}" in lines
        assert "SCALARS sigma double 1" in lines
        data_start = lines.index("LOOKUP_TABLE default") + 1
        assert float(lines[data_start]) == pytest.approx(f.values[0, 0, 0], rel=1e-8)

    def test_vector_export_structure(self, small_grid, tmp_path):
        F = VectorField(small_grid, np.ones(small_grid.dims + (3,)))
        p = tmp_path / "v.vtk"
        write_vtk(p, F)
        text = p.read_text()
        assert "VECTORS field double" in text
        assert text.count("\n") == 9 + small_grid.n_nodes


class TestTracesCsv:
    def test_round_trip(self, rng, tmp_path):
        centers = rng.standard_normal((4, 3))
        times = np.linspace(0.5, 2.0, 7)
        values = rng.standard_normal((4, 7))
        p = tmp_path / "traces.csv"
        write_traces_csv(p, centers, times, values)
        c2, t2, v2 = read_traces_csv(p)
        np.testing.assert_array_equal(c2, centers)
        np.testing.assert_array_equal(t2, times)
        np.testing.assert_array_equal(v2, values)

    def test_header_line(self, tmp_path):
        p = tmp_path / "traces.csv"
        write_traces_csv(p, np.zeros((1, 3)), np.array([1.0]), np.zeros((1, 1)))
        assert p.read_text().splitlines()[0] == "# center_x,center_y,center_z,t,m"

    def test_shape_mismatch_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="does not match"):
            write_traces_csv(
                tmp_path / "x.csv", np.zeros((2, 3)), np.array([1.0]), np.zeros((1, 1))
            )

    def test_ragged_time_axis_rejected(self, tmp_path):
        p = tmp_path / "ragged.csv"
        p.write_text(
            "# center_x,center_y,center_z,t,m\n"
            "0,0,0,1.0,0.5\n"
            "0,0,0,2.0,0.25\n"
            "1,0,0,1.5,0.125\n"
        )
        with pytest.raises(ValueError, match="time axis"):
            read_traces_csv(p)

    def test_wrong_column_count_rejected(self, tmp_path):
        p = tmp_path / "cols.csv"
        p.write_text("1,2,3,4\n")
        with pytest.raises(ValueError, match="5 columns"):
            read_traces_csv(p)
