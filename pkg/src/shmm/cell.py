"""Numerical homogenization on a periodic local domain.

``hmm_effdiff`` runs the constrained micro-simulation: the fluctuation
``w = u - G.x`` of a solution with imposed mean gradient ``G`` is evolved to a
quasi-stationary state under ``dw/dt = div(A (G + grad w))`` with
``A = K + psi J``, ``J = [[0, -1], [1, 0]]``, and the average flux is read off.
Two orthogonal gradients give the flux map column by column.

``cell_problem_oracle`` solves the classical periodic cell problem with a
Fourier pseudo-spectral discretization, independently of the stencil code.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, gmres, splu

from shmm import kernels
from shmm.fields import FaceCoefficients, Grid2D, GridField2D, SpectralField2D, velocity_from_stream
from shmm.tensor import DiffTensor2, NotSPDError

log = logging.getLogger(__name__)


class MicroSolveError(RuntimeError):
    """Micro-simulation stopped before reaching quasi-stationarity."""

    def __init__(self, msg: str, residual: float, steps: int):
        super().__init__(msg)
        self.residual = residual
        self.steps = steps


class OracleConvergenceError(RuntimeError):
    def __init__(self, msg: str, history: list[float]):
        super().__init__(msg)
        self.history = history


@dataclass(frozen=True)
class MicroSolveConfig:
    """Micro-solver settings.

    ``dt_micro=None`` selects ``dt_factor * h**2 / (4 * max|A|)``. ``method``
    picks forward-Euler relaxation (``"evolve"``) or a sparse direct solve of
    the stationary problem (``"direct"``).
    """

    n_micro: int = 64
    dt_micro: float | None = None
    dt_factor: float = 0.2
    quasi_stat_tol: float = 1e-8
    max_steps: int = 5_000_000
    method: Literal["evolve", "direct"] = "evolve"
    dump_dir: str | None = None

    def __post_init__(self) -> None:
        if self.quasi_stat_tol <= 0:
            raise ValueError("quasi_stat_tol must be positive")
        if self.method not in ("evolve", "direct"):
            raise ValueError(f"unknown micro method {self.method!r}")
        if self.n_micro < 4:
            raise ValueError("n_micro must be >= 4")
        if not 0 < self.dt_factor <= 1:
            raise ValueError("dt_factor must lie in (0, 1]")


@dataclass(frozen=True)
class EffDiffResult:
    tensor: DiffTensor2
    residual: float
    steps_taken: int
    asymmetry: float
    flux_map: np.ndarray
    grid_points: int


def stream_operator_norm(K: DiffTensor2, psi: np.ndarray) -> float:
    """Largest pointwise spectral norm of ``K + psi J``."""
    a, b, c = K.k11, K.k12, K.k22
    p = np.asarray(psi, float)
    # entries [[a, b - p], [b + p, c]]
    t = a * a + c * c + (b - p) ** 2 + (b + p) ** 2
    d = a * c - (b * b - p * p)
    s2 = 0.5 * (t + np.sqrt(np.maximum(t * t - 4 * d * d, 0.0)))
    return float(np.sqrt(np.max(s2)))


def stable_dt(K: DiffTensor2, psi: np.ndarray, g: Grid2D, factor: float = 0.2) -> float:
    h = min(g.hx, g.hy)
    return factor * h * h / (4.0 * stream_operator_norm(K, psi))


def assemble_operator(A: FaceCoefficients, g: Grid2D) -> sp.csr_matrix:
    """Sparse matrix of ``w -> div(A grad w)`` on a doubly periodic grid.

    Same stencil as ``kernels.flux_divergence``.
    """
    n1, n2 = g.shape
    I, J = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    ip, im = (I + 1) % n1, (I - 1) % n1
    jp, jm = (J + 1) % n2, (J - 1) % n2
    r1, r2 = 1.0 / g.hx, 1.0 / g.hy
    q1, q2 = 0.25 / g.hx, 0.25 / g.hy
    idx = lambda a, b: (a * n2 + b).ravel()  # noqa: E731
    row = idx(I, J)
    rows, cols, vals = [], [], []

    def add(ci, cj, v):
        rows.append(row)
        cols.append(idx(ci, cj))
        vals.append(np.broadcast_to(v, I.shape).ravel())

    a11, a12, a21, a22 = A.a11, A.a12, A.a21, A.a22
    # +Fe/h1
    e11, e12 = a11 * r1 * r1, a12 * q2 * r1
    add(ip, J, e11), add(I, J, -e11)
    add(I, jp, e12), add(ip, jp, e12), add(I, jm, -e12), add(ip, jm, -e12)
    # -Fw/h1
    w11, w12 = a11[im, J] * r1 * r1, a12[im, J] * q2 * r1
    add(I, J, -w11), add(im, J, w11)
    add(im, jp, -w12), add(I, jp, -w12), add(im, jm, w12), add(I, jm, w12)
    # +Fn/h2
    n21, n22 = a21 * q1 * r2, a22 * r2 * r2
    add(ip, J, n21), add(ip, jp, n21), add(im, J, -n21), add(im, jp, -n21)
    add(I, jp, n22), add(I, J, -n22)
    # -Fs/h2
    s21, s22 = a21[I, jm] * q1 * r2, a22[I, jm] * r2 * r2
    add(ip, jm, -s21), add(ip, J, -s21), add(im, jm, s21), add(im, J, s21)
    add(I, J, -s22), add(I, jm, s22)
    m = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n1 * n2, n1 * n2)
    )
    return m.tocsr()


def _dump(path_dir: str | None, name: str, f: GridField2D) -> None:
    if path_dir is None:
        return
    from shmm.io import write_grid_field

    os.makedirs(path_dir, exist_ok=True)
    write_grid_field(os.path.join(path_dir, name), f)


def hmm_effdiff(psi_local: GridField2D, base: DiffTensor2, cfg: MicroSolveConfig = MicroSolveConfig()) -> EffDiffResult:
    """Effective tensor of ``psi_local`` on its periodic local domain, on top of ``base``."""
    g = psi_local.grid
    if not g.periodic:
        raise ValueError("local micro-domains are periodic")
    psi = np.ascontiguousarray(psi_local.values)
    scale = max(1.0, float(np.max(np.abs(psi))))
    if abs(psi.mean()) > 1e-10 * scale:
        raise ValueError(f"local stream function is not mean zero (mean={psi.mean():.3e})")
    base.check_spd("base diffusivity")

    A = FaceCoefficients.from_nodes(g, base.k11, base.k12, base.k22, skew=psi)
    coeffs = tuple(np.ascontiguousarray(a) for a in (A.a11, A.a12, A.a21, A.a22))
    flux = np.zeros((2, 2))
    residual = 0.0
    steps = 0

    if cfg.method == "direct":
        L = assemble_operator(A, g)
        L = L.tolil()
        L[0, :] = 0.0
        L[0, 0] = 1.0
        lu = splu(L.tocsc())

    for col, G in enumerate(((1.0, 0.0), (0.0, 1.0))):
        w = np.zeros(g.shape)
        if cfg.method == "evolve":
            dt = cfg.dt_micro if cfg.dt_micro is not None else stable_dt(base, psi, g, cfg.dt_factor)
            limit = stable_dt(base, psi, g, 1.0)
            if dt > limit:
                raise ValueError(f"dt_micro={dt:.3e} exceeds the explicit stability bound {limit:.3e}")
            n, res = kernels.micro_relax(w, *coeffs, g.hx, g.hy, G[0], G[1], dt, cfg.quasi_stat_tol, cfg.max_steps)
            if res >= cfg.quasi_stat_tol:
                raise MicroSolveError(
                    f"no quasi-stationary state after {n} steps (residual {res:.3e})", res, n
                )
            steps += int(n)
            residual = max(residual, float(res))
        else:
            src = kernels.flux_divergence(w, *coeffs, g.hx, g.hy, G[0], G[1], True, True)
            rhs = -src.ravel()
            rhs[0] = 0.0
            w = lu.solve(rhs).reshape(g.shape)
            w -= w.mean()
            res = kernels.flux_divergence(w, *coeffs, g.hx, g.hy, G[0], G[1], True, True)
            residual = max(residual, float(np.max(np.abs(res))))
            steps += 1
        _dump(cfg.dump_dir, f"w_G{col + 1}.csv", GridField2D(g, w))
        flux[:, col] = kernels.flux_average(w, *coeffs, g.hx, g.hy, G[0], G[1])

    tensor = DiffTensor2.from_matrix(flux)
    if not tensor.is_spd():
        raise NotSPDError(f"assembled micro tensor is not positive definite: {tensor}")
    return EffDiffResult(
        tensor=tensor,
        residual=residual,
        steps_taken=steps,
        asymmetry=float(abs(flux[0, 1] - flux[1, 0])),
        flux_map=flux,
        grid_points=g.nx * g.ny,
    )


def cell_problem_oracle(
    psi: SpectralField2D,
    base: DiffTensor2,
    n: int = 256,
    tol: float = 1e-10,
    dump_dir: str | None = None,
) -> DiffTensor2:
    """Effective tensor from the periodic cell problem on the unit torus.

    Solves ``-div(K grad chi_i) - v.grad chi_i = v_i`` for zero-mean ``chi_i``
    with preconditioned GMRES, then returns ``K + sym(<v (x) chi>)``.
    """
    base.check_spd("base diffusivity")
    if psi.is_zero():
        return base
    if n < 2 * psi.kmax + 2:
        raise ValueError(f"oracle grid n={n} undersamples Kmax={psi.kmax}")
    g = Grid2D.unit_periodic(n)
    v = velocity_from_stream(psi, g)
    v1, v2 = v.v1.values, v.v2.values
    k = np.fft.fftfreq(n, 1.0 / n)
    k1, k2 = k[:, None], k[None, :]
    d1, d2 = 2j * np.pi * k1, 2j * np.pi * k2
    symbol = 4 * np.pi**2 * (base.k11 * k1**2 + 2 * base.k12 * k1 * k2 + base.k22 * k2**2)
    inv = np.zeros_like(symbol)
    inv[symbol > 0] = 1.0 / symbol[symbol > 0]

    def matvec(x):
        c = x.reshape(n, n)
        ch = np.fft.fft2(c)
        # v.grad chi = div(v chi) for divergence-free v
        adv = np.fft.ifft2(d1 * np.fft.fft2(v1 * c) + d2 * np.fft.fft2(v2 * c)).real
        return (np.fft.ifft2(symbol * ch).real - adv).ravel()

    def precond(x):
        return np.fft.ifft2(inv * np.fft.fft2(x.reshape(n, n))).real.ravel()

    N = n * n
    A = LinearOperator((N, N), matvec=matvec, dtype=float)
    M = LinearOperator((N, N), matvec=precond, dtype=float)
    chis = []
    for i, vi in enumerate((v1, v2)):
        history: list[float] = []
        b = vi.ravel()
        if not np.any(b):
            # no velocity in this direction: the corrector vanishes
            chis.append(np.zeros((n, n)))
            continue
        x, info = gmres(
            A, b, M=M, rtol=tol, atol=0.0, restart=60, maxiter=40,
            callback=history.append, callback_type="pr_norm",
        )
        true_res = float(np.linalg.norm(matvec(x) - b) / np.linalg.norm(b))
        if info != 0 or true_res > 10 * tol:
            raise OracleConvergenceError(
                f"cell problem {i + 1} did not converge (info={info}, residual={true_res:.3e})", history
            )
        chi = x.reshape(n, n) - x.mean()
        chis.append(chi)
    for i, chi in enumerate(chis):
        _dump(dump_dir, f"chi{i + 1}.csv", GridField2D(g, chi))
    vs = (v1, v2)
    m = base.matrix().copy()
    for i in range(2):
        for j in range(2):
            m[i, j] += 0.5 * float(np.mean(vs[i] * chis[j] + chis[i] * vs[j]))
    return DiffTensor2.from_matrix(m)
