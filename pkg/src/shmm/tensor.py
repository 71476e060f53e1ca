"""Symmetric 2x2 diffusivity tensors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NotSPDError(ValueError):
    """A tensor expected to be symmetric positive definite is not."""


@dataclass(frozen=True)
class DiffTensor2:
    k11: float
    k12: float
    k22: float

    def __post_init__(self) -> None:
        for name in ("k11", "k12", "k22"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @classmethod
    def iso(cls, kappa: float) -> DiffTensor2:
        return cls(float(kappa), 0.0, float(kappa))

    @classmethod
    def diag(cls, k11: float, k22: float) -> DiffTensor2:
        return cls(float(k11), 0.0, float(k22))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> DiffTensor2:
        """Symmetric part of a 2x2 matrix."""
        m = np.asarray(m, dtype=float)
        return cls(float(m[0, 0]), float(0.5 * (m[0, 1] + m[1, 0])), float(m[1, 1]))

    def matrix(self) -> np.ndarray:
        return np.array([[self.k11, self.k12], [self.k12, self.k22]])

    def eigvals(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix())

    def is_spd(self) -> bool:
        return self.k11 > 0 and self.k11 * self.k22 - self.k12 * self.k12 > 0

    def check_spd(self, what: str = "tensor") -> DiffTensor2:
        if not self.is_spd():
            raise NotSPDError(f"{what} is not positive definite: {self}")
        return self

    def __add__(self, other: DiffTensor2) -> DiffTensor2:
        return DiffTensor2(self.k11 + other.k11, self.k12 + other.k12, self.k22 + other.k22)

    def __sub__(self, other: DiffTensor2) -> DiffTensor2:
        return DiffTensor2(self.k11 - other.k11, self.k12 - other.k12, self.k22 - other.k22)

    def max_abs_diff(self, other: DiffTensor2) -> float:
        return float(np.max(np.abs(self.matrix() - other.matrix())))

    def rel_diag_errors(self, ref: DiffTensor2) -> tuple[float, float]:
        return (abs(self.k11 - ref.k11) / abs(ref.k11), abs(self.k22 - ref.k22) / abs(ref.k22))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.k11, self.k12, self.k22)

    def to_csv(self) -> str:
        return f"{self.k11!r},{self.k12!r},{self.k22!r}"

    @classmethod
    def from_csv(cls, line: str) -> DiffTensor2:
        a, b, c = (float(x) for x in line.strip().split(","))
        return cls(a, b, c)
