"""CSV readers and writers for fields, tensors and profiles.

Floats are written with ``repr`` so every file round-trips exactly and
identical inputs give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from shmm.fields import Grid2D, GridField2D, SpectralField2D
from shmm.tensor import DiffTensor2


def _f(x: float) -> str:
    return repr(float(x))


def grid_field_to_csv(f: GridField2D) -> str:
    g = f.grid
    lines = [f"# {g.nx},{g.ny},{_f(g.hx)},{_f(g.hy)},{_f(g.origin[0])},{_f(g.origin[1])}"]
    # one row per x2 index, columns run over x1
    for j in range(g.ny):
        lines.append(",".join(_f(v) for v in f.values[:, j]))
    return "\n".join(lines) + "\n"


def grid_field_from_csv(text: str, bc_x1: str = "periodic", bc_x2: str = "periodic") -> GridField2D:
    lines = text.strip().splitlines()
    head = lines[0].lstrip("#").strip().split(",")
    nx, ny = int(head[0]), int(head[1])
    hx, hy, x0, y0 = (float(v) for v in head[2:6])
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if rows.shape != (ny, nx):
        raise ValueError(f"expected {ny} rows of {nx} values, got {rows.shape}")
    return GridField2D(Grid2D(nx, ny, hx, hy, (x0, y0), bc_x1, bc_x2), rows.T)


def write_grid_field(path: str | Path, f: GridField2D) -> None:
    Path(path).write_text(grid_field_to_csv(f))


def read_grid_field(path: str | Path, **kw) -> GridField2D:
    return grid_field_from_csv(Path(path).read_text(), **kw)


def spectral_to_csv(s: SpectralField2D) -> str:
    """Nonzero coefficients as ``k1,k2,re,im`` sorted by ``(k1, k2)``."""
    lines = [f"# kmax,{s.kmax}", "k1,k2,re,im"]
    K = s.kmax
    for i in range(2 * K + 1):
        for j in range(2 * K + 1):
            c = s.coeffs[i, j]
            if c != 0:
                lines.append(f"{i - K},{j - K},{_f(c.real)},{_f(c.imag)}")
    return "\n".join(lines) + "\n"


def spectral_from_csv(text: str) -> SpectralField2D:
    lines = text.strip().splitlines()
    K = int(lines[0].lstrip("#").split(",")[1])
    c = np.zeros((2 * K + 1, 2 * K + 1), dtype=complex)
    for ln in lines[2:]:
        k1, k2, re, im = ln.split(",")
        c[int(k1) + K, int(k2) + K] = complex(float(re), float(im))
    return SpectralField2D(c)


def write_spectral(path: str | Path, s: SpectralField2D) -> None:
    Path(path).write_text(spectral_to_csv(s))


def read_spectral(path: str | Path) -> SpectralField2D:
    return spectral_from_csv(Path(path).read_text())


def tensor_to_csv(t: DiffTensor2) -> str:
    return "k11,k12,k22\n" + t.to_csv() + "\n"


def tensor_from_csv(text: str) -> DiffTensor2:
    lines = [ln for ln in text.strip().splitlines() if ln and not ln.startswith("k11")]
    return DiffTensor2.from_csv(lines[0])


def profile_to_csv(x: np.ndarray, u: np.ndarray) -> str:
    lines = ["x1,u"] + [f"{_f(a)},{_f(b)}" for a, b in zip(x, u)]
    return "\n".join(lines) + "\n"


def profile_from_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    rows = [ln.split(",") for ln in text.strip().splitlines()[1:]]
    arr = np.array(rows, dtype=float)
    return arr[:, 0], arr[:, 1]
