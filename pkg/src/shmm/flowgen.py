"""Stream-function generators and the per-axis Fourier scale decomposition."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from shmm.fields import Grid2D, GridField2D, SpectralField2D

VARIANTS = ("cellular-sum", "random-shear", "continuous-spectrum", "zero")


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[lower, lower + side)``."""

    lower: tuple[float, float]
    side: tuple[float, float]

    @classmethod
    def centered(cls, center: tuple[float, float], side: float | tuple[float, float]) -> Rect:
        sx, sy = (side, side) if np.isscalar(side) else side
        return cls((center[0] - sx / 2, center[1] - sy / 2), (float(sx), float(sy)))

    @property
    def center(self) -> tuple[float, float]:
        return (self.lower[0] + self.side[0] / 2, self.lower[1] + self.side[1] / 2)

    def grid(self, n: int | tuple[int, int]) -> Grid2D:
        return Grid2D.box(self.lower, self.side, n)


# --- generators ---------------------------------------------------------------


def gen_cellular(components: list[tuple[float, int, int]]) -> SpectralField2D:
    """Sum of ``amp * sin(2 pi m1 x1) sin(2 pi m2 x2)`` terms."""
    modes: dict[tuple[int, int], complex] = {}
    for amp, m1, m2 in components:
        m1, m2 = int(m1), int(m2)
        if m1 < 1 or m2 < 1:
            raise ValueError(f"cellular wavenumbers must be >= 1, got ({m1}, {m2})")
        # product of sines: -a/4 on (m1, m2), +a/4 on (m1, -m2); partners added by from_modes
        modes[(m1, m2)] = modes.get((m1, m2), 0) - amp / 4
        modes[(m1, -m2)] = modes.get((m1, -m2), 0) + amp / 4
    if not modes:
        return SpectralField2D.zeros(0)
    return SpectralField2D.from_modes(modes)


def _normalize(c: np.ndarray, energy: float) -> np.ndarray:
    e = np.sum(np.abs(c) ** 2)
    return c * np.sqrt(energy / e) if e > 0 else c


def gen_random_shear(kmax: int, seed: int, energy: float = 2.0, direction: str = "x2") -> SpectralField2D:
    """Random shear stream function depending on one coordinate only.

    ``direction="x2"`` gives ``psi(x2)`` and the shear ``v = (v1(x2), 0)``.
    Magnitudes are uniform on ``[0, 1]``, phases uniform, and the result is
    scaled so that the mean of ``psi**2`` equals ``energy``.
    """
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    if direction not in ("x1", "x2"):
        raise ValueError(f"direction must be 'x1' or 'x2', got {direction!r}")
    rng = np.random.default_rng(seed)
    mag = rng.uniform(0.0, 1.0, size=kmax)
    phase = rng.uniform(0.0, 2 * np.pi, size=kmax)
    c = np.zeros((2 * kmax + 1, 2 * kmax + 1), dtype=complex)
    for k, (m, p) in enumerate(zip(mag, phase), start=1):
        a = m * np.exp(1j * p)
        if direction == "x2":
            c[kmax, kmax + k] = a
            c[kmax, kmax - k] = np.conj(a)
        else:
            c[kmax + k, kmax] = a
            c[kmax - k, kmax] = np.conj(a)
    return SpectralField2D(_normalize(c, energy))


def gen_continuous_spectrum(kmax: int, decay: float, seed: int, energy: float = 2.0) -> SpectralField2D:
    """Random-phase field with ``|c_k| ~ |k|**(-decay)`` for ``1 <= max(|k1|,|k2|) <= kmax``."""
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    if decay <= 0:
        raise ValueError("decay must be positive")
    rng = np.random.default_rng(seed)
    c = np.zeros((2 * kmax + 1, 2 * kmax + 1), dtype=complex)
    # one phase per conjugate pair, drawn in a fixed wavevector order
    for k1 in range(0, kmax + 1):
        for k2 in range(-kmax, kmax + 1):
            if k1 == 0 and k2 <= 0:
                continue
            p = rng.uniform(0.0, 2 * np.pi)
            a = (k1 * k1 + k2 * k2) ** (-decay / 2) * np.exp(1j * p)
            c[kmax + k1, kmax + k2] = a
            c[kmax - k1, kmax - k2] = np.conj(a)
    return SpectralField2D(_normalize(c, energy))


@dataclass(frozen=True)
class StreamSpec:
    variant: str = "cellular-sum"
    components: tuple[tuple[float, int, int], ...] = ()
    kmax: int = 50
    decay: float = 3.0
    energy: float = 2.0
    direction: str = "x2"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown stream variant {self.variant!r}; expected one of {VARIANTS}")
        object.__setattr__(self, "components", tuple(tuple(c) for c in self.components))

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> StreamSpec:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown stream keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        return {
            "variant": self.variant,
            "components": [list(c) for c in self.components],
            "kmax": self.kmax,
            "decay": self.decay,
            "energy": self.energy,
            "direction": self.direction,
            "seed": self.seed,
        }


def generate(spec: StreamSpec) -> SpectralField2D:
    if spec.variant == "cellular-sum":
        return gen_cellular(list(spec.components))
    if spec.variant == "random-shear":
        return gen_random_shear(spec.kmax, spec.seed, spec.energy, spec.direction)
    if spec.variant == "continuous-spectrum":
        return gen_continuous_spectrum(spec.kmax, spec.decay, spec.seed, spec.energy)
    return SpectralField2D.zeros(1)


# --- decomposition -------------------------------------------------------------


@dataclass(frozen=True)
class Level:
    """The four blocks of one decomposition level at per-axis ``threshold``."""

    threshold: int
    psi11: SpectralField2D
    psi12: SpectralField2D
    psi21: SpectralField2D
    psi22: SpectralField2D

    def components(self) -> dict[str, SpectralField2D]:
        return {"psi11": self.psi11, "psi12": self.psi12, "psi21": self.psi21, "psi22": self.psi22}


@dataclass(frozen=True)
class DecompositionSet:
    """Nested decomposition; ``levels[l].psi22`` is split again by ``levels[l+1]``."""

    alpha: int
    levels: tuple[Level, ...] = field(default_factory=tuple)

    @property
    def depth(self) -> int:
        return len(self.levels)

    def terminal_components(self) -> list[SpectralField2D]:
        out = []
        for lev in self.levels:
            out += [lev.psi11, lev.psi12, lev.psi21]
        out.append(self.levels[-1].psi22)
        return out

    def reconstruct(self) -> SpectralField2D:
        comps = self.terminal_components()
        total = comps[0]
        for c in comps[1:]:
            total = total + c
        return total


def _split(psi: SpectralField2D, t: int) -> Level:
    k1, k2 = psi.wavenumbers()
    lo1, lo2 = np.abs(k1) <= t, np.abs(k2) <= t
    c = psi.coeffs

    def part(mask: np.ndarray) -> SpectralField2D:
        return SpectralField2D(np.where(mask, c, 0))

    return Level(t, part(lo1 & lo2), part(lo1 & ~lo2), part(~lo1 & lo2), part(~lo1 & ~lo2))


def decompose(psi: SpectralField2D, alpha: int, max_levels: int) -> DecompositionSet:
    """Split ``psi`` by per-axis wavenumber against ``alpha**level``.

    The high-high block is split again while it still has modes beyond the
    next threshold and ``max_levels`` allows.
    """
    if int(alpha) != alpha or alpha < 2:
        raise ValueError(f"alpha must be an integer >= 2, got {alpha}")
    if max_levels < 1:
        raise ValueError("max_levels must be >= 1")
    alpha = int(alpha)
    levels = []
    rest = psi
    for level in range(1, max_levels + 1):
        lev = _split(rest, alpha**level)
        levels.append(lev)
        e1, e2 = lev.psi22.support_extent()
        if max(e1, e2) <= alpha ** (level + 1):
            break
        rest = lev.psi22
    return DecompositionSet(alpha, tuple(levels))


def restrict_to_domain(
    s: SpectralField2D,
    domain: Rect,
    g: Grid2D,
    subtract_mean: bool = True,
    min_points_per_wavelength: float = 2.0,
) -> GridField2D:
    """Evaluate the global Fourier sum on a local grid covering ``domain``."""
    if not g.periodic:
        raise ValueError("local grids are periodic")
    if not (np.allclose(g.origin, domain.lower, atol=1e-12) and np.allclose(g.extent, domain.side, atol=1e-12)):
        raise ValueError(f"grid (origin={g.origin}, extent={g.extent}) does not cover {domain}")
    e1, e2 = s.support_extent()
    for k, h, ax in ((e1, g.hx, "x1"), (e2, g.hy, "x2")):
        if k and 1.0 / (k * h) < min_points_per_wavelength:
            raise ValueError(
                f"grid too coarse in {ax}: {1.0 / (k * h):.2f} points per wavelength for |k|={k}, "
                f"need {min_points_per_wavelength}"
            )
    vals = s.evaluate(g.x1, g.x2)
    if subtract_mean:
        vals = vals - vals.mean()
    return GridField2D(g, vals)
