"""Seamless multiscale composition over a hierarchy of shrinking local domains.

At a macro point the stream function is split by wavenumber; each level's
high-high block is homogenized on a domain (and grid spacing) ``alpha`` times
smaller than the previous one, and its effective tensor becomes the base
diffusivity for the coarser blocks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from shmm.cell import MicroSolveConfig, hmm_effdiff
from shmm.fields import Grid2D, SpectralField2D
from shmm.flowgen import DecompositionSet, Level, Rect, decompose, restrict_to_domain
from shmm.shear import offdiag_effdiff, offdiag_sum
from shmm.tensor import DiffTensor2, NotSPDError

MIN_POINTS_PER_WAVELENGTH = 4.0


@dataclass(frozen=True)
class LocalDomain:
    rect: Rect
    spacing: float
    n: int

    def grid(self) -> Grid2D:
        return self.rect.grid(self.n)


@dataclass(frozen=True)
class LevelHierarchy:
    center: tuple[float, float]
    alpha: int
    levels: tuple[LocalDomain, ...]

    @property
    def depth(self) -> int:
        return len(self.levels)

    def total_points(self) -> int:
        return sum(d.n * d.n for d in self.levels)


def build_hierarchy(
    macro_spacing: float,
    center: tuple[float, float],
    alpha: int,
    n_levels: int,
    points_per_level: int,
) -> LevelHierarchy:
    """Level 1 is the macro cell ``center +- macro_spacing``; each further level
    shrinks side and spacing by ``alpha``."""
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    levels = []
    for ell in range(n_levels):
        side = 2.0 * macro_spacing / alpha**ell
        levels.append(LocalDomain(Rect.centered(center, side), side / points_per_level, points_per_level))
    return LevelHierarchy((float(center[0]), float(center[1])), int(alpha), tuple(levels))


@dataclass(frozen=True)
class SHMMConfig:
    """``depth`` counts local-domain levels; the decomposition has ``depth - 1`` levels."""

    alpha: int = 5
    depth: int = 2
    points_per_level: int = 64
    micro: MicroSolveConfig = field(default_factory=MicroSolveConfig)
    net_mode: Literal["base", "kappa"] = "base"
    kappa: float | None = None
    subtract_mean: bool = True

    def __post_init__(self) -> None:
        if self.net_mode not in ("base", "kappa"):
            raise ValueError(f"net_mode must be 'base' or 'kappa', got {self.net_mode!r}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")


@dataclass
class Work:
    """Grid points touched by micro-solves, and the intermediate tensors."""

    grid_points: int = 0
    hmm_calls: int = 0
    steps: list[tuple[str, DiffTensor2]] = field(default_factory=list)


def _hmm(psi: SpectralField2D, base: DiffTensor2, dom: LocalDomain, cfg: SHMMConfig, work: Work, tag: str):
    local = restrict_to_domain(
        psi, dom.rect, dom.grid(), cfg.subtract_mean, min_points_per_wavelength=MIN_POINTS_PER_WAVELENGTH
    )
    res = hmm_effdiff(local, base, cfg.micro)
    work.grid_points += res.grid_points
    work.hmm_calls += 1
    work.steps.append((tag, res.tensor))
    return res.tensor


def _offdiag(lev: Level, base: DiffTensor2, dom: LocalDomain, alpha_t: int) -> DiffTensor2:
    K12 = offdiag_effdiff(lev.psi12, "psi12", base, dom.rect, dom.spacing, alpha_t)
    K21 = offdiag_effdiff(lev.psi21, "psi21", base, dom.rect, dom.spacing, alpha_t)
    return offdiag_sum(K12, K21, base)


def _net(k_star: DiffTensor2, k_off: DiffTensor2, base: DiffTensor2, cfg: SHMMConfig, where: str) -> DiffTensor2:
    add = base if cfg.net_mode == "base" else DiffTensor2.iso(cfg.kappa if cfg.kappa is not None else base.k11)
    net = k_star - k_off + add
    if not net.is_spd():
        raise NotSPDError(f"{where}: net fine-scale tensor K* - K_off + base is not positive definite: {net}")
    return net


def effdiff_two_level(
    decomp: DecompositionSet,
    base: DiffTensor2,
    hier: LevelHierarchy,
    cfg: SHMMConfig = SHMMConfig(),
    work: Work | None = None,
) -> DiffTensor2:
    """Two-level composition for a single decomposition level.

    1. ``K_off``: shear formulas for psi12/psi21 on the level-1 lines.
    2. ``K*``: micro-solve of psi22 on level 2 with base ``K_off``.
    3. ``K*_net = K* - K_off + base``.
    4. Off-diagonal shears again on top of ``K*_net``, then a micro-solve of
       psi11 on level 1 with that base.
    """
    if decomp.depth != 1:
        raise ValueError(f"two-level composition needs a single decomposition level, got {decomp.depth}")
    if hier.depth < 2:
        raise ValueError("two-level composition needs two local domains")
    work = work if work is not None else Work()
    lev = decomp.levels[0]
    d1, d2 = hier.levels[0], hier.levels[1]
    k_off = _offdiag(lev, base, d1, lev.threshold)
    work.steps.append(("K_off[1]", k_off))
    k_star = _hmm(lev.psi22, k_off, d2, cfg, work, "K*[2]")
    k_net = _net(k_star, k_off, base, cfg, "level 1 step 3")
    work.steps.append(("K*_net[1]", k_net))
    folded = _offdiag(lev, k_net, d1, lev.threshold)
    work.steps.append(("K_fold[1]", folded))
    return _hmm(lev.psi11, folded, d1, cfg, work, "K[1]")


def effdiff_recursive(
    decomp: DecompositionSet,
    base: DiffTensor2,
    hier: LevelHierarchy,
    cfg: SHMMConfig = SHMMConfig(),
    work: Work | None = None,
) -> DiffTensor2:
    """Composition over any number of decomposition levels, finest first."""
    if hier.depth < decomp.depth + 1:
        raise ValueError(f"hierarchy depth {hier.depth} < decomposition depth {decomp.depth} + 1")
    work = work if work is not None else Work()

    def level(ell: int, b: DiffTensor2) -> DiffTensor2:
        lev = decomp.levels[ell]
        dom = hier.levels[ell]
        k_off = _offdiag(lev, b, dom, lev.threshold)
        work.steps.append((f"K_off[{ell + 1}]", k_off))
        if ell + 1 < decomp.depth:
            k_star = level(ell + 1, k_off)
        else:
            k_star = _hmm(lev.psi22, k_off, hier.levels[ell + 1], cfg, work, f"K*[{ell + 2}]")
        k_net = _net(k_star, k_off, b, cfg, f"level {ell + 1} step 3")
        work.steps.append((f"K*_net[{ell + 1}]", k_net))
        folded = _offdiag(lev, k_net, dom, lev.threshold)
        work.steps.append((f"K_fold[{ell + 1}]", folded))
        return _hmm(lev.psi11, folded, dom, cfg, work, f"K[{ell + 1}]")

    return level(0, base)


def shmm_effdiff(
    psi: SpectralField2D,
    base: DiffTensor2,
    hier: LevelHierarchy,
    cfg: SHMMConfig = SHMMConfig(),
    work: Work | None = None,
) -> DiffTensor2:
    """Effective tensor at one macro point: decompose, then compose over ``hier``."""
    work = work if work is not None else Work()
    if hier.depth == 1:
        return _hmm(psi, base, hier.levels[0], cfg, work, "K[1]")
    decomp = decompose(psi, hier.alpha, hier.depth - 1)
    return effdiff_recursive(decomp, base, hier, cfg, work)


@dataclass(frozen=True)
class EffDiffField:
    """One tensor per macro point, ``tensors[i, j] = (k11, k12, k22)``."""

    macro_grid: Grid2D
    tensors: np.ndarray
    computed: np.ndarray

    def tensor(self, i: int, j: int) -> DiffTensor2:
        return DiffTensor2(*(float(v) for v in self.tensors[i, j]))

    def mean(self) -> DiffTensor2:
        t = self.tensors[self.computed]
        return DiffTensor2(*(float(v) for v in t.mean(axis=0)))

    def spread(self) -> float:
        """Largest relative pairwise difference of diagonal entries."""
        t = self.tensors[self.computed]
        out = 0.0
        for c in (0, 2):
            out = max(out, float((t[:, c].max() - t[:, c].min()) / t[:, c].min()))
        return out

    def to_csv(self) -> str:
        g = self.macro_grid
        lines = ["i,j,x1,x2,k11,k12,k22"]
        for i in range(g.nx):
            for j in range(g.ny):
                if self.computed[i, j]:
                    k = self.tensors[i, j]
                    lines.append(
                        f"{i},{j},{g.x1[i]!r},{g.x2[j]!r},{float(k[0])!r},{float(k[1])!r},{float(k[2])!r}"
                    )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, macro_grid: Grid2D) -> EffDiffField:
        t = np.zeros(macro_grid.shape + (3,))
        done = np.zeros(macro_grid.shape, dtype=bool)
        for ln in text.strip().splitlines()[1:]:
            parts = ln.split(",")
            i, j = int(parts[0]), int(parts[1])
            t[i, j] = [float(v) for v in parts[4:7]]
            done[i, j] = True
        return cls(macro_grid, t, done)


class AssemblyError(RuntimeError):
    def __init__(self, msg: str, partial: EffDiffField, failures: dict[tuple[int, int], str]):
        super().__init__(msg)
        self.partial = partial
        self.failures = failures


@dataclass
class AssemblyStats:
    grid_points: int = 0
    hmm_calls: int = 0
    wall_time: float = 0.0
    per_point: dict[tuple[int, int], float] = field(default_factory=dict)


def assemble_macro_diffusivity(
    psi: SpectralField2D,
    macro_grid: Grid2D,
    base: DiffTensor2,
    cfg: SHMMConfig = SHMMConfig(),
    points: list[tuple[int, int]] | None = None,
    stats: AssemblyStats | None = None,
) -> EffDiffField:
    """Run the hierarchy at every macro point (or the listed ``points``).

    Points are processed in index order so results do not depend on scheduling.
    """
    if not macro_grid.covers_unit_torus():
        raise ValueError("macro grid must cover the unit square")
    stats = stats if stats is not None else AssemblyStats()
    spacing = macro_grid.hx
    todo = sorted(points) if points is not None else [(i, j) for i in range(macro_grid.nx) for j in range(macro_grid.ny)]
    decomp = decompose(psi, cfg.alpha, cfg.depth - 1) if cfg.depth > 1 else None
    tensors = np.zeros(macro_grid.shape + (3,))
    done = np.zeros(macro_grid.shape, dtype=bool)
    failures: dict[tuple[int, int], str] = {}
    t_all = time.perf_counter()
    for i, j in todo:
        t0 = time.perf_counter()
        center = (macro_grid.x1[i], macro_grid.x2[j])
        hier = build_hierarchy(spacing, center, cfg.alpha, cfg.depth, cfg.points_per_level)
        work = Work()
        try:
            if decomp is None:
                k = _hmm(psi, base, hier.levels[0], cfg, work, "K[1]")
            else:
                k = effdiff_recursive(decomp, base, hier, cfg, work)
        except (RuntimeError, ValueError) as exc:
            failures[(i, j)] = f"{type(exc).__name__}: {exc}"
            continue
        tensors[i, j] = k.as_tuple()
        done[i, j] = True
        stats.grid_points += work.grid_points
        stats.hmm_calls += work.hmm_calls
        stats.per_point[(i, j)] = time.perf_counter() - t0
    stats.wall_time += time.perf_counter() - t_all
    out = EffDiffField(macro_grid, tensors, done)
    if failures:
        raise AssemblyError(f"{len(failures)} macro point(s) failed: {sorted(failures)}", out, failures)
    return out
