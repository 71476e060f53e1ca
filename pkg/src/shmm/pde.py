"""Direct simulation of the advection-diffusion equation and the homogenized solver.

Both integrate with Heun's second-order Runge-Kutta on a node grid that is
Dirichlet in x1 (boundary nodes hold ``u = 1`` at ``x1 = 0`` and ``u = 0`` at
``x1 = 1``) and periodic in x2. The DNS advects with face-normal velocities
built from corner values of the stream function, so the discrete velocity is
exactly divergence-free and the conservative flux form equals the
skew-symmetric average of conservative and advective forms.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.integrate import trapezoid

from shmm import kernels
from shmm.core import EffDiffField
from shmm.fields import FaceCoefficients, Grid2D, GridField2D, SpectralField2D
from shmm.tensor import DiffTensor2

log = logging.getLogger(__name__)


class CFLError(ValueError):
    """Time step or grid violates the explicit stability/positivity bounds."""


class NonFiniteError(RuntimeError):
    def __init__(self, msg: str, step: int):
        super().__init__(msg)
        self.step = step


def dns_grid(n: int, bc_x1: Literal["dirichlet", "periodic"] = "dirichlet") -> Grid2D:
    """``n x n`` grid on the unit square; with Dirichlet x1 both walls are nodes."""
    if bc_x1 == "dirichlet":
        return Grid2D(n, n, 1.0 / (n - 1), 1.0 / n, (0.0, 0.0), "dirichlet", "periodic")
    return Grid2D.unit_periodic(n)


@dataclass(frozen=True)
class SolveSetup:
    """Boundary/initial data and stepping for one solve.

    ``dt`` is rounded down so that a whole number of steps reaches ``t_end``;
    ``dt=None`` picks 80% of the explicit bound.
    """

    grid: Grid2D
    t_end: float = 0.1
    dt: float | None = None
    u_left: float = 1.0
    u_right: float = 0.0
    ic: Literal["step"] = "step"
    min_points_per_wavelength: float = 10.0

    def __post_init__(self) -> None:
        if self.grid.bc_x2 != "periodic":
            raise ValueError("solver grids are periodic in x2")
        if self.ic != "step":
            raise ValueError(f"unknown initial condition {self.ic!r}")


@dataclass
class RunSummary:
    steps: int = 0
    dt: float = 0.0
    wall_time: float = 0.0
    cfl_diffusive: float = 0.0
    cell_peclet: float = 0.0
    u_min: float = np.inf
    u_max: float = -np.inf
    mass_drift_per_step: float = 0.0
    notes: list[str] = field(default_factory=list)

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "steps": self.steps,
            "dt": self.dt,
            "cfl_diffusive": self.cfl_diffusive,
            "cell_peclet": self.cell_peclet,
            "u_min": self.u_min,
            "u_max": self.u_max,
            "mass_drift_per_step": self.mass_drift_per_step,
            "notes": list(self.notes),
        }
        if timing:
            d["wall_time_s"] = self.wall_time
        return d


def initial_condition(setup: SolveSetup) -> np.ndarray:
    g = setup.grid
    x1, _ = g.mesh()
    u = np.where(x1 <= 0.5, setup.u_left, setup.u_right).astype(float)
    if g.bc_x1 == "dirichlet":
        u[0, :] = setup.u_left
        u[-1, :] = setup.u_right
    return u


def face_velocities(psi: SpectralField2D, g: Grid2D) -> tuple[np.ndarray, np.ndarray]:
    """Face-averaged normal velocities from stream-function corner values.

    ``U[i, j]`` is ``v1`` on the x1-face ``(i+1/2, j)``, ``V[i, j]`` is ``v2`` on
    the x2-face ``(i, j+1/2)``.
    """
    xc1 = g.origin[0] + g.hx * (np.arange(g.nx + 1) - 0.5)
    xc2 = g.origin[1] + g.hy * (np.arange(g.ny) + 0.5)
    # corner[r, j] = psi(x1_{r-1/2}, x2_{j+1/2})
    corner = psi.evaluate(xc1, xc2)
    U = -(corner[1:, :] - np.roll(corner[1:, :], 1, axis=1)) / g.hy
    V = (corner[1:, :] - corner[:-1, :]) / g.hx
    return np.ascontiguousarray(U), np.ascontiguousarray(V)


def _diffusive_number(dt: float, kmax: float, g: Grid2D) -> float:
    return dt * 2.0 * kmax * (1.0 / g.hx**2 + 1.0 / g.hy**2)


def _auto_dt(t_end: float, kmax: float, g: Grid2D) -> float:
    bound = 1.0 / (2.0 * kmax * (1.0 / g.hx**2 + 1.0 / g.hy**2))
    n = int(np.ceil(t_end / (0.8 * bound)))
    return t_end / n


def _heun(u, rhs, dt, n_steps, setup, summary, check_mass):
    mass0 = float(u.sum())
    umin, umax = float(u.min()), float(u.max())
    drift = 0.0
    for step in range(1, n_steps + 1):
        k1 = rhs(u)
        u1 = u + dt * k1
        k2 = rhs(u1)
        u = u + 0.5 * dt * (k1 + k2)
        lo, hi = float(u.min()), float(u.max())
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise NonFiniteError(f"non-finite solution at step {step}", step)
        umin, umax = min(umin, lo), max(umax, hi)
        if check_mass:
            m = float(u.sum())
            drift = max(drift, abs(m - mass0) / max(abs(mass0), 1.0))
            mass0 = m
    summary.u_min, summary.u_max = umin, umax
    summary.mass_drift_per_step = drift
    return u


def _steps(setup: SolveSetup, kmax: float) -> tuple[float, int]:
    g = setup.grid
    if setup.dt is None:
        dt = _auto_dt(setup.t_end, kmax, g)
    else:
        # shrink dt slightly so a whole number of steps lands on t_end
        dt = setup.t_end / int(np.ceil(setup.t_end / setup.dt - 1e-9))
    n = int(round(setup.t_end / dt))
    nu = _diffusive_number(dt, kmax, g)
    if nu > 1.0 + 1e-12:
        raise CFLError(f"diffusive number {nu:.3f} > 1 (dt={dt:.3e} too large for this grid)")
    return dt, n


def dns_solve(
    psi: SpectralField2D,
    kappa: float,
    setup: SolveSetup,
    summary: RunSummary | None = None,
) -> GridField2D:
    """Integrate ``du/dt + v.grad u = kappa lap u`` up to ``setup.t_end``."""
    summary = summary if summary is not None else RunSummary()
    g = setup.grid
    periodic_x1 = g.bc_x1 == "periodic"
    e1, e2 = psi.support_extent()
    for k, h, ax in ((e1, g.hx, "x1"), (e2, g.hy, "x2")):
        if k and 1.0 / (k * h) < setup.min_points_per_wavelength:
            msg = (
                f"DNS grid has {1.0 / (k * h):.1f} points per wavelength in {ax} "
                f"(|k|={k}), below {setup.min_points_per_wavelength}"
            )
            log.warning(msg)
            summary.notes.append(msg)
    dt, n = _steps(setup, kappa)
    U, V = face_velocities(psi, g)
    vmax = max(float(np.max(np.abs(U))), float(np.max(np.abs(V))))
    pe = vmax * max(g.hx, g.hy) / kappa
    if pe > 2.0:
        raise CFLError(f"cell Peclet number {pe:.2f} > 2: grid too coarse for the flow")
    summary.dt, summary.steps = dt, n
    summary.cfl_diffusive = _diffusive_number(dt, kappa, g)
    summary.cell_peclet = pe

    def rhs(u):
        return kernels.advdiff_rhs(u, U, V, kappa, g.hx, g.hy, periodic_x1, True)

    t0 = time.perf_counter()
    u = _heun(initial_condition(setup), rhs, dt, n, setup, summary, periodic_x1)
    summary.wall_time = time.perf_counter() - t0
    return GridField2D(g, u)


def _interp_periodic(field_vals: np.ndarray, mg: Grid2D, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Bilinear periodic interpolation of macro-point values onto ``x1 x x2``."""
    s1 = (x1 - mg.origin[0]) / mg.hx
    s2 = (x2 - mg.origin[1]) / mg.hy
    i0 = np.floor(s1).astype(int)
    j0 = np.floor(s2).astype(int)
    t1 = (s1 - i0)[:, None]
    t2 = (s2 - j0)[None, :]
    i0, i1 = i0 % mg.nx, (i0 + 1) % mg.nx
    j0, j1 = j0 % mg.ny, (j0 + 1) % mg.ny
    f = field_vals
    return (
        (1 - t1) * (1 - t2) * f[np.ix_(i0, j0)]
        + t1 * (1 - t2) * f[np.ix_(i1, j0)]
        + (1 - t1) * t2 * f[np.ix_(i0, j1)]
        + t1 * t2 * f[np.ix_(i1, j1)]
    )


def macro_coefficients(K: EffDiffField | DiffTensor2, g: Grid2D) -> tuple[FaceCoefficients, float]:
    if isinstance(K, DiffTensor2):
        K.check_spd("macro diffusivity")
        return FaceCoefficients.constant(K.k11, K.k12, K.k22, g.shape), float(np.max(K.eigvals()))
    if not K.computed.all():
        raise ValueError("macro diffusivity field has uncomputed points")
    comps = [_interp_periodic(K.tensors[..., c], K.macro_grid, g.x1, g.x2) for c in range(3)]
    lam = 0.5 * (comps[0] + comps[2]) + np.sqrt(0.25 * (comps[0] - comps[2]) ** 2 + comps[1] ** 2)
    lam_min = 0.5 * (comps[0] + comps[2]) - np.sqrt(0.25 * (comps[0] - comps[2]) ** 2 + comps[1] ** 2)
    if np.any(lam_min <= 0):
        raise ValueError("macro diffusivity is not positive definite everywhere")
    return FaceCoefficients.from_nodes(g, *comps), float(np.max(lam))


def macro_solve(
    K: EffDiffField | DiffTensor2,
    setup: SolveSetup,
    summary: RunSummary | None = None,
) -> GridField2D:
    """Integrate ``dU/dt = div(K grad U)`` with the DNS boundary and initial data."""
    summary = summary if summary is not None else RunSummary()
    g = setup.grid
    A, lam = macro_coefficients(K, g)
    coeffs = tuple(np.ascontiguousarray(a) for a in (A.a11, A.a12, A.a21, A.a22))
    dt, n = _steps(setup, lam)
    summary.dt, summary.steps = dt, n
    summary.cfl_diffusive = _diffusive_number(dt, lam, g)
    periodic_x1 = g.bc_x1 == "periodic"

    def rhs(u):
        return kernels.flux_divergence(u, *coeffs, g.hx, g.hy, 0.0, 0.0, periodic_x1, True)

    t0 = time.perf_counter()
    u = _heun(initial_condition(setup), rhs, dt, n, setup, summary, periodic_x1)
    summary.wall_time = time.perf_counter() - t0
    return GridField2D(g, u)


# --- profiles -------------------------------------------------------------------


def midline_profile(u: GridField2D, x2: float = 0.5, average: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Row of ``u`` nearest ``x2`` (or the x2-average) as ``(x1, u)``."""
    g = u.grid
    if average:
        return g.x1.copy(), u.values.mean(axis=1)
    j = int(np.argmin(np.abs(g.x2 - x2)))
    return g.x1.copy(), u.values[:, j].copy()


def profile_metrics(
    a: tuple[np.ndarray, np.ndarray], b: tuple[np.ndarray, np.ndarray]
) -> tuple[float, float]:
    """Relative L2 difference of ``a`` against reference ``b``, and max deviation.

    ``b`` is linearly resampled onto ``a``'s abscissae over the common range.
    """
    xa, ua = a
    xb, ub = b
    lo, hi = max(xa.min(), xb.min()), min(xa.max(), xb.max())
    m = (xa >= lo - 1e-12) & (xa <= hi + 1e-12)
    ref = np.interp(xa[m], xb, ub)
    diff = ua[m] - ref
    nrm = float(np.linalg.norm(ref))
    l2 = float(np.linalg.norm(diff)) / nrm if nrm > 0 else float(np.linalg.norm(diff))
    return l2, float(np.max(np.abs(diff))) if diff.size else 0.0


def mixing_width(profile: tuple[np.ndarray, np.ndarray]) -> float:
    x, u = profile
    return float(trapezoid(u * (1.0 - u), x))
