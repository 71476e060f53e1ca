import numpy as np
import pytest

from shmm.cell import MicroSolveConfig, hmm_effdiff
from shmm.core import (
    AssemblyError,
    AssemblyStats,
    EffDiffField,
    SHMMConfig,
    Work,
    assemble_macro_diffusivity,
    build_hierarchy,
    effdiff_recursive,
    effdiff_two_level,
    shmm_effdiff,
)
from shmm.fields import Grid2D, SpectralField2D
from shmm.flowgen import decompose, gen_cellular, restrict_to_domain
from shmm.tensor import DiffTensor2

I = DiffTensor2.iso(1.0)
DIRECT = MicroSolveConfig(method="direct")
FAST = SHMMConfig(points_per_level=32, micro=DIRECT)
TWO_SCALE = gen_cellular([(1 / 3, 5, 5), (1 / 3, 25, 25)])
OFF_DIAG = gen_cellular([(0.2, 5, 5), (0.2, 5, 45), (0.2, 45, 5), (0.2, 50, 50)])


def test_hierarchy_shapes():
    h = build_hierarchy(0.1, (0.3, 0.7), alpha=5, n_levels=3, points_per_level=64)
    sides = [d.rect.side[0] for d in h.levels]
    np.testing.assert_allclose(sides, [0.2, 0.04, 0.008], rtol=1e-14)
    np.testing.assert_allclose([d.spacing for d in h.levels], np.array(sides) / 64, rtol=1e-14)
    assert all(d.rect.center == pytest.approx((0.3, 0.7)) for d in h.levels)
    assert h.depth == 3 and h.total_points() == 3 * 64 * 64
    with pytest.raises(ValueError):
        build_hierarchy(0.1, (0, 0), 5, 0, 64)


@pytest.mark.parametrize("kw", [{"net_mode": "other"}, {"depth": 0}])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        SHMMConfig(**kw)


def test_zero_flow_returns_base():
    base = DiffTensor2(1.4, 0.1, 0.8)
    h = build_hierarchy(0.1, (0.0, 0.0), 5, 2, 16)
    # zero flow has nothing to decompose; a single level suffices
    k = shmm_effdiff(SpectralField2D.zeros(30), base, build_hierarchy(0.1, (0, 0), 5, 1, 16), FAST)
    assert k.max_abs_diff(base) < 1e-12
    k = effdiff_two_level(decompose(SpectralField2D.zeros(30), 5, 1), base, h, FAST)
    assert k.max_abs_diff(base) < 1e-12


def test_recursive_equals_two_level_bitwise():
    h = build_hierarchy(0.1, (0.1, 0.1), 5, 2, 32)
    d = decompose(OFF_DIAG, 5, 1)
    w1, w2 = Work(), Work()
    a = effdiff_two_level(d, I, h, FAST, w1)
    b = effdiff_recursive(d, I, h, FAST, w2)
    assert a == b
    assert [t for t, _ in w1.steps] == [t for t, _ in w2.steps]


def test_diagonal_only_flow_composes_two_micro_solves():
    # no off-diagonal blocks: K_off is the base and K*_net is K*
    h = build_hierarchy(0.1, (0.0, 0.0), 5, 2, 32)
    k = shmm_effdiff(TWO_SCALE, I, h, FAST)
    d = decompose(TWO_SCALE, 5, 1).levels[0]
    loc = lambda s, dom: restrict_to_domain(s, dom.rect, dom.grid(), min_points_per_wavelength=4)
    k_fine = hmm_effdiff(loc(d.psi22, h.levels[1]), I, DIRECT).tensor
    k_ref = hmm_effdiff(loc(d.psi11, h.levels[0]), k_fine, DIRECT).tensor
    assert k.max_abs_diff(k_ref) < 1e-12


def test_fine_shear_gives_closed_form():
    # psi = A sin(2 pi 25 x2): K11 = 1 + A^2 / 2 exactly
    a = 1 / 3
    psi = SpectralField2D.from_modes({(0, 25): -0.5j * a})
    k = shmm_effdiff(psi, I, build_hierarchy(0.1, (0.1, 0.1), 5, 2, 32), FAST)
    assert k.k11 == pytest.approx(1 + a * a / 2, abs=1e-10)
    assert k.k22 == pytest.approx(1.0, abs=1e-10)


def test_net_mode_kappa_matches_base_for_isotropic_base():
    h = build_hierarchy(0.1, (0.1, 0.1), 5, 2, 32)
    a = shmm_effdiff(OFF_DIAG, DiffTensor2.iso(2.0), h, FAST)
    b = shmm_effdiff(OFF_DIAG, DiffTensor2.iso(2.0), h, SHMMConfig(points_per_level=32, micro=DIRECT, net_mode="kappa", kappa=2.0))
    assert a == b


def test_recursive_three_levels():
    psi = gen_cellular([(0.2, 5, 5), (0.2, 25, 25), (0.2, 125, 125)])
    cfg = SHMMConfig(depth=3, points_per_level=32, micro=DIRECT)
    h = build_hierarchy(0.1, (0.0, 0.0), 5, 3, 32)
    work = Work()
    k = shmm_effdiff(psi, I, h, cfg, work)
    assert work.hmm_calls == 3 and work.grid_points == 3 * 32 * 32
    assert k.eigvals().min() > 1.0
    with pytest.raises(ValueError):
        effdiff_recursive(decompose(psi, 5, 2), I, build_hierarchy(0.1, (0, 0), 5, 2, 32), cfg)


def test_hierarchy_too_coarse_is_reported():
    # |k| = 50 on a 0.04 window with 6 points: 3 points per wavelength
    h = build_hierarchy(0.1, (0.0, 0.0), 5, 2, 6)
    with pytest.raises(ValueError, match="too coarse"):
        shmm_effdiff(OFF_DIAG, I, h, FAST)


class TestAssemble:
    def test_zero_flow_everywhere(self):
        g = Grid2D.unit_periodic(4)
        f = assemble_macro_diffusivity(SpectralField2D.zeros(30), g, I, FAST)
        assert f.computed.all()
        np.testing.assert_allclose(f.tensors, np.broadcast_to([1.0, 0.0, 1.0], (4, 4, 3)), atol=1e-12)
        assert f.spread() < 1e-12

    def test_subset_and_stats(self):
        g = Grid2D.unit_periodic(10)
        stats = AssemblyStats()
        f = assemble_macro_diffusivity(TWO_SCALE, g, I, FAST, points=[(1, 0), (0, 0)], stats=stats)
        assert f.computed.sum() == 2 and f.computed[0, 0] and f.computed[1, 0]
        assert stats.hmm_calls == 4 and stats.grid_points == 4 * 32 * 32
        assert set(stats.per_point) == {(0, 0), (1, 0)}

    def test_csv_round_trip(self):
        g = Grid2D.unit_periodic(10)
        f = assemble_macro_diffusivity(TWO_SCALE, g, I, FAST, points=[(0, 0), (3, 7)])
        back = EffDiffField.from_csv(f.to_csv(), g)
        assert np.array_equal(back.tensors, f.tensors) and np.array_equal(back.computed, f.computed)

    def test_failure_keeps_partial_results(self):
        g = Grid2D.unit_periodic(10)
        cfg = SHMMConfig(points_per_level=32, micro=MicroSolveConfig(max_steps=2))
        with pytest.raises(AssemblyError) as exc:
            assemble_macro_diffusivity(TWO_SCALE, g, I, cfg, points=[(0, 0)])
        assert (0, 0) in exc.value.failures and not exc.value.partial.computed.any()

    def test_rejects_partial_macro_grid(self):
        with pytest.raises(ValueError):
            assemble_macro_diffusivity(TWO_SCALE, Grid2D(4, 4, 0.1, 0.1), I, FAST)

    def test_work_is_linear_in_depth(self):
        g = Grid2D.unit_periodic(10)
        psi = gen_cellular([(0.2, 5, 5), (0.2, 25, 25), (0.2, 125, 125)])
        counts = []
        for depth in (1, 2, 3):
            stats = AssemblyStats()
            assemble_macro_diffusivity(
                psi if depth > 1 else gen_cellular([(0.2, 5, 5)]), g, I,
                SHMMConfig(depth=depth, points_per_level=32, micro=DIRECT), points=[(0, 0)], stats=stats,
            )
            counts.append(stats.grid_points)
        assert counts == [32 * 32 * d for d in (1, 2, 3)]

    def test_two_scale_spread_on_full_macro_grid(self):
        # the effective tensor should be nearly uniform across an 8x8 macro grid
        g = Grid2D.unit_periodic(8)
        f = assemble_macro_diffusivity(TWO_SCALE, g, I, SHMMConfig(micro=DIRECT))
        assert f.computed.all()
        assert f.spread() <= 0.01
