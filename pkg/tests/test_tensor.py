import numpy as np
import pytest
from hypothesis import given

from shmm.tensor import DiffTensor2, NotSPDError

from strategies import spd_tensors


class TestDiffTensor2:
    def test_iso_and_diag(self):
        assert DiffTensor2.iso(2.0) == DiffTensor2(2.0, 0.0, 2.0)
        assert DiffTensor2.diag(3, 1).matrix().tolist() == [[3, 0], [0, 1]]

    def test_from_matrix_symmetrizes(self):
        t = DiffTensor2.from_matrix(np.array([[2.0, 0.3], [0.1, 1.0]]))
        assert t.k12 == pytest.approx(0.2)

    def test_spd(self):
        assert DiffTensor2(1, 0.5, 1).is_spd()
        assert not DiffTensor2(1, 1.0, 1).is_spd()
        assert not DiffTensor2(-1, 0, 1).is_spd()
        with pytest.raises(NotSPDError, match="base"):
            DiffTensor2(1, 2, 1).check_spd("base")

    def test_arithmetic(self):
        a, b = DiffTensor2(2, 0.1, 3), DiffTensor2(1, 0.0, 1)
        assert (a - b) == DiffTensor2(1, 0.1, 2)
        assert (a + b - b) == a
        assert a.max_abs_diff(b) == pytest.approx(2.0)

    def test_rel_diag_errors(self):
        e = DiffTensor2(1.1, 0, 2.0).rel_diag_errors(DiffTensor2(1.0, 0, 2.5))
        assert e == pytest.approx((0.1, 0.2))

    @given(spd_tensors())
    def test_csv_round_trip(self, t):
        assert DiffTensor2.from_csv(t.to_csv()) == t

    @given(spd_tensors())
    def test_eigvals_positive(self, t):
        assert np.all(t.eigvals() > 0)
