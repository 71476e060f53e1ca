"""Closed-form homogenization of shear flows and of layered diffusivities.

All line integrals of ``psi**2`` are means over one full period of uniformly
sampled, band-limited profiles, which equals the Parseval sum exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np

from shmm.fields import SpectralField2D
from shmm.flowgen import Rect
from shmm.tensor import DiffTensor2, NotSPDError

log = logging.getLogger(__name__)

MEAN_TOL = 1e-10
ORTHO_TOL = 1e-10


def _check_profile(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("profile must be a non-empty 1D array")
    m = float(np.mean(p))
    if abs(m) > MEAN_TOL:
        raise ValueError(f"shear profile is not mean zero (mean={m:.3e})")
    return p


def _note_offdiag(base: DiffTensor2) -> None:
    if base.k12 != 0.0:
        log.debug("shear enhancement on non-diagonal base, carrying |k12|=%.3e", abs(base.k12))


def shear_k11(profile: np.ndarray, base: DiffTensor2) -> DiffTensor2:
    """Effective tensor of the shear ``v = (v1(x2), 0)`` with stream profile ``psi(x2)``."""
    p = _check_profile(profile)
    _note_offdiag(base)
    return DiffTensor2(base.k11 + float(np.mean(p * p)) / base.k22, base.k12, base.k22)


def shear_k22(profile: np.ndarray, base: DiffTensor2) -> DiffTensor2:
    """Effective tensor of the shear ``v = (0, v2(x1))`` with stream profile ``psi(x1)``."""
    p = _check_profile(profile)
    _note_offdiag(base)
    return DiffTensor2(base.k11, base.k12, base.k22 + float(np.mean(p * p)) / base.k11)


@dataclass(frozen=True)
class ProfileDiffusivity:
    """Diffusivity samples varying along ``axis`` (the layering direction)."""

    samples: tuple[DiffTensor2, ...]
    axis: Literal["x1", "x2"]
    spacing: float = 1.0

    def __post_init__(self) -> None:
        if self.axis not in ("x1", "x2"):
            raise ValueError(f"axis must be 'x1' or 'x2', got {self.axis!r}")
        if not self.samples:
            raise ValueError("empty diffusivity profile")
        object.__setattr__(self, "samples", tuple(self.samples))

    def rows(self) -> list[str]:
        return [f"{i},{s.to_csv()}" for i, s in enumerate(self.samples)]


def layered_average(profile: ProfileDiffusivity) -> DiffTensor2:
    """Laminate average: harmonic along the layering axis, arithmetic across it."""
    for i, s in enumerate(profile.samples):
        if not s.is_spd():
            raise NotSPDError(f"profile sample {i} is not positive definite: {s}")
    k11 = np.array([s.k11 for s in profile.samples])
    k12 = np.array([s.k12 for s in profile.samples])
    k22 = np.array([s.k22 for s in profile.samples])
    harm = lambda a: 1.0 / float(np.mean(1.0 / a))  # noqa: E731
    if profile.axis == "x1":
        return DiffTensor2(harm(k11), float(np.mean(k12)), float(np.mean(k22)))
    return DiffTensor2(float(np.mean(k11)), float(np.mean(k12)), harm(k22))


def _line_profiles(component: SpectralField2D, positions: np.ndarray, along: int) -> np.ndarray:
    """Samples of ``component`` on full-period lines.

    ``along=1``: rows are x2-profiles at ``x1 = positions``; ``along=0``: x1-profiles
    at ``x2 = positions``. ``2*Kmax+2`` samples per period make the mean of the
    square equal to the Parseval sum.
    """
    n = 2 * component.kmax + 2
    t = np.arange(n) / n
    if along == 1:
        return component.evaluate(positions, t)
    return component.evaluate(t, positions).T


def _check_pattern(component: SpectralField2D, tag: str, alpha: int | None) -> None:
    k1, k2 = component.wavenumbers()
    nz = component.coeffs != 0
    a1, a2 = np.abs(k1[nz]), np.abs(k2[nz])
    if tag == "psi12":
        ok = np.all(a2 > a1) if alpha is None else np.all((a1 <= alpha) & (a2 > alpha))
    else:
        ok = np.all(a1 > a2) if alpha is None else np.all((a2 <= alpha) & (a1 > alpha))
    if not ok:
        raise ValueError(f"component does not have the {tag} support pattern")


def line_positions(domain: Rect, spacing: float, axis: int) -> np.ndarray:
    n = max(1, int(round(domain.side[axis] / spacing)))
    return domain.lower[axis] + spacing * np.arange(n)


def offdiag_effdiff(
    component: SpectralField2D,
    tag: Literal["psi12", "psi21"],
    base: DiffTensor2,
    domain: Rect,
    coarse_spacing: float,
    alpha: int | None = None,
) -> DiffTensor2:
    """Shear formula on every coarse line of ``domain``, then laminate averaging.

    ``psi12`` varies fast in x2: each vertical line gets the x2-shear enhancement
    of ``k11`` and the lines are averaged as layers stacked along x1. ``psi21``
    is the mirror image.
    """
    if tag not in ("psi12", "psi21"):
        raise ValueError(f"tag must be 'psi12' or 'psi21', got {tag!r}")
    if component.is_zero():
        return base
    _check_pattern(component, tag, alpha)
    if tag == "psi12":
        pos = line_positions(domain, coarse_spacing, 0)
        lines = _line_profiles(component, pos, along=1)
        samples = [shear_k11(p, base) for p in lines]
        prof = ProfileDiffusivity(tuple(samples), "x1", coarse_spacing)
    else:
        pos = line_positions(domain, coarse_spacing, 1)
        lines = _line_profiles(component, pos, along=0)
        samples = [shear_k22(p, base) for p in lines]
        prof = ProfileDiffusivity(tuple(samples), "x2", coarse_spacing)
    return layered_average(prof)


def offdiag_sum(K12: DiffTensor2, K21: DiffTensor2, base: DiffTensor2) -> DiffTensor2:
    """Combine the two off-diagonal results, removing the doubly counted base."""
    return (K12 + K21 - base).check_spd("off-diagonal sum")


def iterated_shear(
    psi1: np.ndarray,
    psi2: np.ndarray,
    base: DiffTensor2,
    direction: Literal["x1", "x2"] = "x2",
) -> tuple[DiffTensor2, DiffTensor2]:
    """Direct ``K[psi1+psi2, base]`` and iterated ``K[psi1, K[psi2, base]]``.

    ``direction`` is the coordinate the profiles depend on.
    """
    p1, p2 = _check_profile(psi1), _check_profile(psi2)
    if p1.shape != p2.shape:
        raise ValueError("profiles must share a grid")
    ip = float(np.mean(p1 * p2))
    if abs(ip) > ORTHO_TOL:
        raise ValueError(f"profiles are not L2-orthogonal (inner product {ip:.3e})")
    op = shear_k11 if direction == "x2" else shear_k22
    return op(p1 + p2, base), op(p1, op(p2, base))
