import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shmm import io
from shmm.cell import (
    MicroSolveConfig,
    MicroSolveError,
    OracleConvergenceError,
    assemble_operator,
    cell_problem_oracle,
    hmm_effdiff,
    stable_dt,
    stream_operator_norm,
)
from shmm import kernels
from shmm.fields import FaceCoefficients, Grid2D, GridField2D, SpectralField2D, from_spectral
from shmm.flowgen import gen_cellular
from shmm.tensor import DiffTensor2, NotSPDError

from strategies import spd_tensors, spectral_fields

I = DiffTensor2.iso(1.0)
SHEAR = SpectralField2D.from_modes({(0, 1): -0.5j})  # sin(2 pi x2)
CELL = gen_cellular([(1.0, 1, 1)])
DIRECT = MicroSolveConfig(method="direct")


def on_torus(s, n):
    return from_spectral(s, Grid2D.unit_periodic(n))


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [{"quasi_stat_tol": 0.0}, {"method": "newton"}, {"n_micro": 2}, {"dt_factor": 1.5}]
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            MicroSolveConfig(**kw)

    def test_operator_norm(self):
        # [[1, -p], [p, 1]] has singular values sqrt(1 + p^2)
        assert stream_operator_norm(I, np.array([0.0, 2.0])) == pytest.approx(np.sqrt(5.0))
        assert stream_operator_norm(DiffTensor2.diag(3, 1), np.zeros(3)) == pytest.approx(3.0)

    def test_stable_dt(self):
        g = Grid2D.unit_periodic(10)
        assert stable_dt(I, np.zeros(3), g, 0.2) == pytest.approx(0.2 * 0.01 / 4)


class TestHMM:
    @pytest.mark.parametrize("method", ["evolve", "direct"])
    def test_zero_flow_returns_base(self, method):
        base = DiffTensor2.diag(2.5, 0.7)
        res = hmm_effdiff(on_torus(SpectralField2D.zeros(1), 16), base, MicroSolveConfig(method=method))
        assert res.tensor.max_abs_diff(base) < 1e-12
        assert res.asymmetry < 1e-14

    def test_shear_refines_to_closed_form(self):
        errs = [abs(hmm_effdiff(on_torus(SHEAR, n), I, DIRECT).tensor.k11 - 1.5) for n in (16, 32, 64)]
        assert errs[2] < errs[1] < errs[0]
        assert errs[2] / 1.5 < 0.005

    def test_shear_evolve(self):
        res = hmm_effdiff(on_torus(SHEAR, 64), I)
        assert res.tensor.k11 == pytest.approx(1.5, rel=0.005)
        assert res.tensor.k22 == pytest.approx(1.0, abs=1e-8)
        assert res.residual < 1e-8 and res.steps_taken > 0

    def test_cellular_matches_oracle(self):
        ref = cell_problem_oracle(CELL, I, n=128)
        res = hmm_effdiff(on_torus(CELL, 64), I)
        assert max(res.tensor.rel_diag_errors(ref)) < 0.01
        assert res.asymmetry < 1e-6

    def test_evolve_and_direct_agree(self):
        a = hmm_effdiff(on_torus(CELL, 32), I).tensor
        b = hmm_effdiff(on_torus(CELL, 32), I, DIRECT).tensor
        assert a.max_abs_diff(b) < 1e-8

    def test_grid_convergence_second_order(self):
        ref = cell_problem_oracle(CELL, I, n=512)
        errs = [abs(hmm_effdiff(on_torus(CELL, n), I, DIRECT).tensor.k11 - ref.k11) for n in (32, 64, 128)]
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders > 1.8) and np.all(orders < 2.2)

    def test_local_window(self):
        # phi_c(5x) on one period window equals phi_c(x) on the torus, rescaled by 1/5
        from shmm.flowgen import Rect, restrict_to_domain

        r = Rect((0.4, 0.4), (0.2, 0.2))
        local = restrict_to_domain(gen_cellular([(1.0, 5, 5)]), r, r.grid(32))
        a = hmm_effdiff(local, I, DIRECT).tensor
        b = hmm_effdiff(on_torus(CELL.scaled(1.0), 32), I, DIRECT).tensor
        assert a.max_abs_diff(b) < 1e-10

    def test_max_steps_error_carries_residual(self):
        with pytest.raises(MicroSolveError) as exc:
            hmm_effdiff(on_torus(CELL, 16), I, MicroSolveConfig(max_steps=10))
        assert exc.value.steps == 10 and exc.value.residual > 1e-8

    def test_rejects_nonzero_mean(self):
        g = Grid2D.unit_periodic(8)
        with pytest.raises(ValueError, match="mean zero"):
            hmm_effdiff(GridField2D(g, np.full(g.shape, 0.1)), I)

    def test_rejects_unstable_dt(self):
        with pytest.raises(ValueError, match="stability"):
            hmm_effdiff(on_torus(CELL, 16), I, MicroSolveConfig(dt_micro=1.0))

    def test_rejects_non_spd_base(self):
        with pytest.raises(NotSPDError):
            hmm_effdiff(on_torus(CELL, 8), DiffTensor2(1, 2, 1))

    def test_rejects_dirichlet_grid(self):
        g = Grid2D(8, 8, 1 / 7, 1 / 8, bc_x1="dirichlet")
        with pytest.raises(ValueError, match="periodic"):
            hmm_effdiff(GridField2D(g, np.zeros((8, 8))), I)

    def test_dump(self, tmp_path):
        hmm_effdiff(on_torus(CELL, 16), I, MicroSolveConfig(method="direct", dump_dir=str(tmp_path)))
        w = io.read_grid_field(tmp_path / "w_G1.csv")
        assert w.grid.nx == 16 and abs(w.mean()) < 1e-12

    @settings(max_examples=15)
    @given(spectral_fields(kmax_max=3), spd_tensors(lo=0.5, hi=2.0))
    def test_enhancement(self, s, base):
        res = hmm_effdiff(on_torus(s, 16), base, DIRECT)
        lam = base.eigvals().min()
        assert res.tensor.eigvals().min() >= lam * (1 - 1e-10)


class TestOperator:
    def test_matches_kernel(self, rng):
        g = Grid2D.unit_periodic(12)
        psi = on_torus(CELL, 12).values
        A = FaceCoefficients.from_nodes(g, 1.2, 0.1, 0.8, skew=psi)
        L = assemble_operator(A, g)
        w = rng.standard_normal(g.shape)
        ref = kernels.flux_divergence(w, A.a11, A.a12, A.a21, A.a22, g.hx, g.hy, 0.0, 0.0, True, True)
        np.testing.assert_allclose((L @ w.ravel()).reshape(g.shape), ref, atol=1e-10)


class TestOracle:
    def test_zero(self):
        base = DiffTensor2(1.3, 0.2, 0.9)
        assert cell_problem_oracle(SpectralField2D.zeros(2), base) == base

    def test_shear(self):
        k = cell_problem_oracle(SHEAR, I, n=128)
        assert k.k11 == pytest.approx(1.5, abs=1e-3)
        assert k.k22 == pytest.approx(1.0, abs=1e-3)

    def test_shear_anisotropic_base(self):
        # closed form with kappa_2 = 0.5: 1 + (1/2) / 0.5
        k = cell_problem_oracle(SHEAR, DiffTensor2.diag(1.0, 0.5), n=64)
        assert k.k11 == pytest.approx(2.0, abs=1e-9)

    def test_small_amplitude_theory(self):
        # weak cellular flow: K - 1 ~ <psi^2> * const, checked by scaling
        a = cell_problem_oracle(CELL.scaled(0.01), I, n=32).k11 - 1
        b = cell_problem_oracle(CELL.scaled(0.02), I, n=32).k11 - 1
        assert b / a == pytest.approx(4.0, rel=1e-3)

    def test_convergence_error_has_history(self):
        with pytest.raises(OracleConvergenceError) as exc:
            cell_problem_oracle(CELL.scaled(5.0), I, n=32, tol=1e-30)
        assert len(exc.value.history) > 0

    def test_rejects_undersampled(self):
        with pytest.raises(ValueError):
            cell_problem_oracle(gen_cellular([(1, 20, 20)]), I, n=32)

    def test_dump(self, tmp_path):
        cell_problem_oracle(CELL, I, n=16, dump_dir=str(tmp_path))
        assert (tmp_path / "chi1.csv").exists() and (tmp_path / "chi2.csv").exists()

    @settings(max_examples=10)
    @given(spectral_fields(kmax_max=3))
    def test_enhancement_and_agreement(self, s):
        # at least 40 points per wavelength on the finite-difference side
        o = cell_problem_oracle(s, I, n=32)
        assert o.eigvals().min() >= 1 - 1e-10
        h = hmm_effdiff(on_torus(s, 128), I, DIRECT).tensor
        assert h.max_abs_diff(o) / o.eigvals().max() < 0.01
