import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varns.fieldio import FieldFormatError, read_field, read_raw, write_field
from varns.grid import FieldDataError, Grid, SpaceTimeField, TimeGrid

from conftest import random_field


class TestRoundTrip:
    def test_bitwise(self, tmp_path, rng):
        g, t = Grid(16, 8, 3.0, 5.5), TimeGrid(4, 0.7)
        u = random_field(rng, g, t)
        write_field(tmp_path / "u.stf", u)
        back = read_field(tmp_path / "u.stf")
        assert np.array_equal(back.data, u.data)
        assert back.grid == g and back.time == t

    @settings(max_examples=10, deadline=None)
    @given(st.sampled_from([8, 16, 32]), st.integers(4, 12), st.floats(0.1, 10.0))
    def test_header_values_survive(self, tmp_path_factory, n, m, T):
        path = tmp_path_factory.mktemp("f") / "u.stf"
        g, t = Grid(n, n), TimeGrid(m, T)
        write_field(path, np.zeros((m + 1, 2, n, n)), g, t)
        data, g2, t2 = read_raw(path)
        assert g2 == g and t2.t_final == T and data.shape == (m + 1, 2, n, n)

    def test_layout(self, tmp_path):
        g, t = Grid(8, 8), TimeGrid(4)
        data = np.arange(5 * 2 * 64, dtype=float).reshape(5, 2, 8, 8)
        write_field(tmp_path / "u.stf", data, g, t)
        blob = (tmp_path / "u.stf").read_bytes()
        head, payload = blob.split(b"\n", 2)[:2], blob.split(b"\n", 2)[2]
        assert head[0] == b"STFIELD 1"
        assert np.array_equal(np.frombuffer(payload, "<f8"), data.ravel())


class TestErrors:
    def test_bad_magic(self, tmp_path):
        (tmp_path / "x").write_bytes(b"NOPE\n8 8 4 1 1 1\n")
        with pytest.raises(FieldFormatError):
            read_raw(tmp_path / "x")

    @pytest.mark.parametrize("header", [b"8 8 4 1 1", b"8 8 four 1 1 1", b"7 8 4 1 1 1"])
    def test_bad_header(self, tmp_path, header):
        (tmp_path / "x").write_bytes(b"STFIELD 1\n" + header + b"\n")
        with pytest.raises(FieldFormatError):
            read_raw(tmp_path / "x")

    def test_truncated_payload(self, tmp_path):
        (tmp_path / "x").write_bytes(b"STFIELD 1\n8 8 4 1.0 1.0 1.0\n" + b"\0" * 64)
        with pytest.raises(FieldFormatError):
            read_raw(tmp_path / "x")

    def test_shape_mismatch_on_write(self, tmp_path):
        with pytest.raises(FieldFormatError):
            write_field(tmp_path / "x", np.zeros((3, 2, 8, 8)), Grid(8, 8), TimeGrid(4))

    def test_inadmissible_content(self, tmp_path):
        g, t = Grid(8, 8), TimeGrid(4)
        data = np.ones((5, 2, 8, 8))
        write_field(tmp_path / "x", data, g, t)
        with pytest.raises(FieldDataError):
            read_field(tmp_path / "x")
        assert read_field(tmp_path / "x", validate=False).data.shape == data.shape
