"""Uniform grids, real-space and spectral fields, and discrete operators.

Conventions
-----------
* The global domain is the unit square ``[0, 1]^2``.
* Grid values are stored with ``indexing="ij"``: ``values[i1, i2]`` sits at
  ``(x1_0 + i1*hx, x2_0 + i2*hy)``.
* Spectral mode ``k = (k1, k2)`` stands for ``exp(2*pi*i*(k1*x1 + k2*x2))``.
  Coefficients are stored densely in a ``(2K+1, 2K+1)`` array with
  ``coeffs[k1 + K, k2 + K]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from shmm import kernels

BC = Literal["periodic", "dirichlet"]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Grid2D:
    """Uniform rectangular grid.

    For a periodic direction the extent is ``n*h`` (no duplicated endpoint).
    For a Dirichlet direction the first and last points lie on the boundary,
    so the extent is ``(n-1)*h``.
    """

    nx: int
    ny: int
    hx: float
    hy: float
    origin: tuple[float, float] = (0.0, 0.0)
    bc_x1: BC = "periodic"
    bc_x2: BC = "periodic"

    def __post_init__(self) -> None:
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"grid needs at least 2 points per axis, got {self.nx}x{self.ny}")
        if not (self.hx > 0 and self.hy > 0):
            raise ValueError("grid spacing must be positive")
        for bc in (self.bc_x1, self.bc_x2):
            if bc not in ("periodic", "dirichlet"):
                raise ValueError(f"unknown boundary tag {bc!r}")

    @classmethod
    def unit_periodic(cls, nx: int, ny: int | None = None) -> Grid2D:
        ny = nx if ny is None else ny
        return cls(nx, ny, 1.0 / nx, 1.0 / ny)

    @classmethod
    def box(
        cls,
        lower: tuple[float, float],
        side: tuple[float, float],
        n: int | tuple[int, int],
    ) -> Grid2D:
        """Periodic grid covering ``[lower, lower + side)``."""
        nx, ny = (n, n) if np.isscalar(n) else n
        return cls(nx, ny, side[0] / nx, side[1] / ny, (float(lower[0]), float(lower[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def periodic(self) -> bool:
        return self.bc_x1 == "periodic" and self.bc_x2 == "periodic"

    @property
    def extent(self) -> tuple[float, float]:
        ex = self.nx * self.hx if self.bc_x1 == "periodic" else (self.nx - 1) * self.hx
        ey = self.ny * self.hy if self.bc_x2 == "periodic" else (self.ny - 1) * self.hy
        return (ex, ey)

    @property
    def x1(self) -> np.ndarray:
        return self.origin[0] + self.hx * np.arange(self.nx)

    @property
    def x2(self) -> np.ndarray:
        return self.origin[1] + self.hy * np.arange(self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def covers_unit_torus(self) -> bool:
        ex, ey = self.extent
        return self.periodic and abs(ex - 1.0) < 1e-12 and abs(ey - 1.0) < 1e-12


@dataclass(frozen=True)
class GridField2D:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite values")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def mean(self) -> float:
        return float(np.mean(self.values))


@dataclass(frozen=True)
class SpectralField2D:
    """Complex Fourier coefficients of a real field on the unit torus."""

    coeffs: np.ndarray
    kmax: int = field(init=False)

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] % 2 != 1:
            raise ValueError("coefficient array must be square with odd side 2*Kmax+1")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "kmax", (c.shape[0] - 1) // 2)

    @classmethod
    def zeros(cls, kmax: int) -> SpectralField2D:
        return cls(np.zeros((2 * kmax + 1, 2 * kmax + 1), dtype=complex))

    @classmethod
    def from_modes(cls, modes: dict[tuple[int, int], complex], kmax: int | None = None) -> SpectralField2D:
        """Build from a ``{(k1, k2): coeff}`` mapping; conjugate partners are added."""
        if kmax is None:
            kmax = max((max(abs(a), abs(b)) for a, b in modes), default=0)
        c = np.zeros((2 * kmax + 1, 2 * kmax + 1), dtype=complex)
        for (k1, k2), v in modes.items():
            c[k1 + kmax, k2 + kmax] += v
            if (k1, k2) != (0, 0):
                c[-k1 + kmax, -k2 + kmax] += np.conj(v)
            else:
                c[kmax, kmax] = np.real(c[kmax, kmax])
        return cls(c)

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        k = np.arange(-self.kmax, self.kmax + 1)
        return np.meshgrid(k, k, indexing="ij")

    def coeff(self, k1: int, k2: int) -> complex:
        if max(abs(k1), abs(k2)) > self.kmax:
            return 0j
        return complex(self.coeffs[k1 + self.kmax, k2 + self.kmax])

    def hermitian_error(self) -> float:
        return float(np.max(np.abs(self.coeffs - np.conj(self.coeffs[::-1, ::-1]))))

    def energy(self) -> float:
        """Mean square of the field, ``sum |c_k|^2``."""
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def support_extent(self) -> tuple[int, int]:
        """Largest ``|k1|`` and ``|k2|`` carrying a nonzero coefficient."""
        k1, k2 = self.wavenumbers()
        nz = self.coeffs != 0
        if not nz.any():
            return (0, 0)
        return (int(np.max(np.abs(k1[nz]))), int(np.max(np.abs(k2[nz]))))

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def resized(self, kmax: int) -> SpectralField2D:
        """Zero-pad or truncate to a new ``Kmax``."""
        out = np.zeros((2 * kmax + 1, 2 * kmax + 1), dtype=complex)
        m = min(kmax, self.kmax)
        out[kmax - m : kmax + m + 1, kmax - m : kmax + m + 1] = self.coeffs[
            self.kmax - m : self.kmax + m + 1, self.kmax - m : self.kmax + m + 1
        ]
        return SpectralField2D(out)

    def __add__(self, other: SpectralField2D) -> SpectralField2D:
        k = max(self.kmax, other.kmax)
        return SpectralField2D(self.resized(k).coeffs + other.resized(k).coeffs)

    def scaled(self, a: float) -> SpectralField2D:
        return SpectralField2D(a * self.coeffs)

    def evaluate(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        """Evaluate the Fourier sum on the tensor grid ``x1 x x2`` (no aliasing)."""
        k = np.arange(-self.kmax, self.kmax + 1)
        e1 = np.exp(TWO_PI * 1j * np.outer(np.asarray(x1, float), k))
        e2 = np.exp(TWO_PI * 1j * np.outer(np.asarray(x2, float), k))
        return np.real(e1 @ self.coeffs @ e2.T)


@dataclass(frozen=True)
class VectorField2D:
    v1: GridField2D
    v2: GridField2D

    def __post_init__(self) -> None:
        if self.v1.grid != self.v2.grid:
            raise ValueError("velocity components live on different grids")

    @property
    def grid(self) -> Grid2D:
        return self.v1.grid


def _check_torus(g: Grid2D) -> None:
    if not g.periodic:
        raise ValueError("spectral transforms need a grid periodic in both directions")
    if not g.covers_unit_torus():
        raise ValueError(f"spectral transforms need a grid spanning the unit torus, extent={g.extent}")


def to_spectral(f: GridField2D, kmax: int | None = None) -> SpectralField2D:
    """Fourier coefficients of a periodic grid field, truncated at ``kmax``."""
    g = f.grid
    _check_torus(g)
    if kmax is None:
        kmax = (min(g.nx, g.ny) - 2) // 2
    if g.nx < 2 * kmax + 2 or g.ny < 2 * kmax + 2:
        raise ValueError(f"grid {g.nx}x{g.ny} undersamples Kmax={kmax} (need n >= 2*Kmax+2)")
    fh = np.fft.fft2(f.values) / (g.nx * g.ny)
    k = np.arange(-kmax, kmax + 1)
    c = fh[np.ix_(k % g.nx, k % g.ny)]
    # grid origin shifts every mode by a phase
    o1, o2 = g.origin
    if o1 or o2:
        c = c * np.exp(-TWO_PI * 1j * (np.add.outer(k * o1, k * o2)))
    return SpectralField2D(c)


def from_spectral(s: SpectralField2D, g: Grid2D) -> GridField2D:
    _check_torus(g)
    if g.nx < 2 * s.kmax + 2 or g.ny < 2 * s.kmax + 2:
        raise ValueError(f"grid {g.nx}x{g.ny} undersamples Kmax={s.kmax} (need n >= 2*Kmax+2)")
    k = np.arange(-s.kmax, s.kmax + 1)
    c = s.coeffs
    o1, o2 = g.origin
    if o1 or o2:
        c = c * np.exp(TWO_PI * 1j * (np.add.outer(k * o1, k * o2)))
    fh = np.zeros((g.nx, g.ny), dtype=complex)
    fh[np.ix_(k % g.nx, k % g.ny)] = c
    return GridField2D(g, np.real(np.fft.ifft2(fh)) * (g.nx * g.ny))


def spectral_derivative(s: SpectralField2D, axis: int) -> SpectralField2D:
    k1, k2 = s.wavenumbers()
    k = k1 if axis == 0 else k2
    return SpectralField2D(TWO_PI * 1j * k * s.coeffs)


def velocity_from_stream(psi: SpectralField2D, g: Grid2D) -> VectorField2D:
    """Incompressible velocity ``v = (-d psi/dx2, d psi/dx1)``, differentiated spectrally.

    Works on any grid: on the unit torus through the inverse FFT, otherwise by
    direct evaluation of the Fourier sum.
    """
    d1 = spectral_derivative(psi, 0)
    d2 = spectral_derivative(psi, 1)
    if g.covers_unit_torus() and g.nx >= 2 * psi.kmax + 2 and g.ny >= 2 * psi.kmax + 2:
        v1 = -from_spectral(d2, g).values
        v2 = from_spectral(d1, g).values
    else:
        v1 = -d2.evaluate(g.x1, g.x2)
        v2 = d1.evaluate(g.x1, g.x2)
    return VectorField2D(GridField2D(g, v1), GridField2D(g, v2))


def spectral_divergence(v: VectorField2D) -> GridField2D:
    """Divergence of a velocity field on the unit torus, differentiated spectrally."""
    g = v.grid
    _check_torus(g)
    k1 = np.fft.fftfreq(g.nx, 1.0 / g.nx)[:, None]
    k2 = np.fft.fftfreq(g.ny, 1.0 / g.ny)[None, :]
    d = TWO_PI * 1j * (k1 * np.fft.fft2(v.v1.values) + k2 * np.fft.fft2(v.v2.values))
    return GridField2D(g, np.real(np.fft.ifft2(d)))


# --- finite differences ------------------------------------------------------


def _shift(f: np.ndarray, g: Grid2D, axis: int, step: int) -> np.ndarray:
    """``f`` shifted so entry ``i`` holds ``f[i + step]``; Dirichlet ends are held."""
    periodic = (g.bc_x1 if axis == 0 else g.bc_x2) == "periodic"
    if periodic:
        return np.roll(f, -step, axis=axis)
    out = np.roll(f, -step, axis=axis)
    idx = [slice(None), slice(None)]
    idx[axis] = -1 if step > 0 else 0
    out[tuple(idx)] = f[tuple(idx)]
    return out


def _check_same_grid(*fields: GridField2D) -> Grid2D:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise ValueError("fields live on different grids")
    return g


def gradient(f: GridField2D) -> tuple[GridField2D, GridField2D]:
    """Second-order centered gradient. On Dirichlet boundary rows the one-sided
    values are meaningless and set to zero."""
    g = f.grid
    u = f.values
    d1 = (_shift(u, g, 0, 1) - _shift(u, g, 0, -1)) / (2 * g.hx)
    d2 = (_shift(u, g, 1, 1) - _shift(u, g, 1, -1)) / (2 * g.hy)
    if g.bc_x1 == "dirichlet":
        d1[[0, -1], :] = 0.0
        d2[[0, -1], :] = 0.0
    if g.bc_x2 == "dirichlet":
        d1[:, [0, -1]] = 0.0
        d2[:, [0, -1]] = 0.0
    return GridField2D(g, d1), GridField2D(g, d2)


def divergence(v: VectorField2D) -> GridField2D:
    g = v.grid
    a, b = v.v1.values, v.v2.values
    d = (_shift(a, g, 0, 1) - _shift(a, g, 0, -1)) / (2 * g.hx) + (
        _shift(b, g, 1, 1) - _shift(b, g, 1, -1)
    ) / (2 * g.hy)
    if g.bc_x1 == "dirichlet":
        d[[0, -1], :] = 0.0
    if g.bc_x2 == "dirichlet":
        d[:, [0, -1]] = 0.0
    return GridField2D(g, d)


@dataclass(frozen=True)
class FaceCoefficients:
    """Tensor coefficients sampled on cell faces.

    ``a11``/``a12`` live on x1-faces ``(i+1/2, j)`` and ``a21``/``a22`` on
    x2-faces ``(i, j+1/2)``; each array has the grid shape and entry ``[i, j]``
    is the face just above node ``(i, j)``.
    """

    a11: np.ndarray
    a12: np.ndarray
    a21: np.ndarray
    a22: np.ndarray

    @classmethod
    def constant(cls, k11: float, k12: float, k22: float, shape: tuple[int, int]) -> FaceCoefficients:
        return cls(
            np.full(shape, float(k11)),
            np.full(shape, float(k12)),
            np.full(shape, float(k12)),
            np.full(shape, float(k22)),
        )

    @classmethod
    def from_nodes(
        cls,
        g: Grid2D,
        k11: np.ndarray,
        k12: np.ndarray,
        k22: np.ndarray,
        skew: np.ndarray | None = None,
    ) -> FaceCoefficients:
        """Average nodal coefficients onto faces.

        ``skew`` adds the antisymmetric part ``skew * [[0, -1], [1, 0]]``.
        """
        shape = g.shape
        k11, k12, k22 = (np.broadcast_to(np.asarray(a, float), shape) for a in (k11, k12, k22))
        f1 = lambda a: 0.5 * (a + _shift(a, g, 0, 1))  # noqa: E731
        f2 = lambda a: 0.5 * (a + _shift(a, g, 1, 1))  # noqa: E731
        a12 = f1(k12)
        a21 = f2(k12)
        if skew is not None:
            s = np.broadcast_to(np.asarray(skew, float), shape)
            a12 = a12 - f1(s)
            a21 = a21 + f2(s)
        return cls(f1(k11), a12, a21, f2(k22))


def div_tensor_grad(K: FaceCoefficients | tuple[float, float, float], f: GridField2D) -> GridField2D:
    """Conservative ``div(K grad f)`` with fluxes on cell faces.

    The cross-derivative at a face averages the centered differences of the two
    adjacent nodes, so the operator is symmetric whenever ``K`` is. Dirichlet
    boundary rows are returned as zero (their values are pinned data).
    """
    g = f.grid
    if not isinstance(K, FaceCoefficients):
        K = FaceCoefficients.constant(*K, g.shape)
    out = kernels.flux_divergence(
        np.ascontiguousarray(f.values),
        K.a11,
        K.a12,
        K.a21,
        K.a22,
        g.hx,
        g.hy,
        0.0,
        0.0,
        g.bc_x1 == "periodic",
        g.bc_x2 == "periodic",
    )
    return GridField2D(g, out)
