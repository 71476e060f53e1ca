import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from shmm import io
from shmm.fields import Grid2D, GridField2D
from shmm.tensor import DiffTensor2

from strategies import spd_tensors, spectral_fields


class TestRoundTrips:
    @given(st.integers(2, 9), st.integers(2, 9), st.integers(0, 2**31))
    def test_grid_field(self, nx, ny, seed):
        rng = np.random.default_rng(seed)
        g = Grid2D(nx, ny, 1 / nx, 0.3 / ny, (0.1, -0.2))
        f = GridField2D(g, rng.standard_normal((nx, ny)))
        back = io.grid_field_from_csv(io.grid_field_to_csv(f))
        assert back.grid == g
        np.testing.assert_array_equal(back.values, f.values)

    def test_grid_field_layout(self):
        g = Grid2D.unit_periodic(3, 2)
        f = GridField2D(g, np.arange(6.0).reshape(3, 2))
        lines = io.grid_field_to_csv(f).splitlines()
        assert lines[0].startswith("# 3,2,")
        # rows run over x2, columns over x1
        assert lines[1] == "0.0,2.0,4.0"
        assert len(lines) == 3

    @given(spectral_fields())
    def test_spectral(self, s):
        text = io.spectral_to_csv(s)
        back = io.spectral_from_csv(text)
        np.testing.assert_array_equal(back.coeffs, s.coeffs)
        rows = [tuple(map(int, ln.split(",")[:2])) for ln in text.splitlines()[2:]]
        assert rows == sorted(rows)

    @given(spd_tensors())
    def test_tensor(self, t):
        assert io.tensor_from_csv(io.tensor_to_csv(t)) == t

    def test_profile(self):
        x = np.linspace(0, 1, 11)
        u = np.exp(-x) / 3
        bx, bu = io.profile_from_csv(io.profile_to_csv(x, u))
        np.testing.assert_array_equal(bx, x)
        np.testing.assert_array_equal(bu, u)

    def test_files(self, tmp_path):
        t = DiffTensor2(1.5, 0.0, 1.0)
        g = Grid2D.unit_periodic(4)
        f = GridField2D(g, np.ones((4, 4)))
        io.write_grid_field(tmp_path / "f.csv", f)
        assert io.read_grid_field(tmp_path / "f.csv").values.sum() == 16
        (tmp_path / "t.csv").write_text(io.tensor_to_csv(t))
        assert io.tensor_from_csv((tmp_path / "t.csv").read_text()) == t
