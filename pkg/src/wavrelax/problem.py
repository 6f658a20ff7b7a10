"""Linear DAE problem records and the manufactured test case.

The test case couples a block-diagonal, singular ``A`` (identity blocks
followed by two zero blocks, i.e. ``2p`` algebraic rows) with a 2D
five-point-stencil style ``B``.  The exact solution repeats the pattern
``[cos t, sin t, t]`` and the forcing is obtained by substituting it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, DimensionError, SingularMatrixError
from .linalg import factorize
from .structured import (ScaledIdentity, StructuredMatrix, Tridiagonal,
                         block_diagonal, block_tridiagonal, matvec)

Forcing = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class LinearDAE:
    """``A y' + B y = f(t)`` on ``[t0, t0 + J h]`` with ``y(t0) = y0``."""

    A: StructuredMatrix
    B: StructuredMatrix
    forcing: Forcing
    y0: np.ndarray
    t0: float = 0.0
    h: float = 0.1
    J: int = 20

    def __post_init__(self):
        if (self.A.p, self.A.q) != (self.B.p, self.B.q):
            raise DimensionError(f"A and B block shapes differ: {(self.A.p, self.A.q)} "
                                 f"vs {(self.B.p, self.B.q)}")
        y0 = np.array(self.y0, dtype=float)
        if y0.shape != (self.m,):
            raise DimensionError(f"y0 has shape {y0.shape}, expected ({self.m},)")
        y0.setflags(write=False)
        object.__setattr__(self, "y0", y0)
        if self.J < 0 or not self.h > 0:
            raise ConfigError(f"need J >= 0 and h > 0, got J={self.J}, h={self.h}")
        try:
            factorize(self.B)
        except SingularMatrixError as exc:
            raise ConfigError(f"B must be nonsingular: {exc}") from exc

    @property
    def m(self) -> int:
        return self.A.m

    @property
    def T(self) -> float:
        return self.t0 + self.J * self.h

    def time(self, n: int) -> float:
        return self.t0 + n * self.h

    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.J + 1)


def _check_m(m: int) -> None:
    if m % 3:
        raise ConfigError(f"manufactured solution needs m divisible by 3, got m={m}")


def analytic_solution(t: float, m: int) -> np.ndarray:
    _check_m(m)
    return np.tile([math.cos(t), math.sin(t), t], m // 3)


def analytic_derivative(t: float, m: int) -> np.ndarray:
    _check_m(m)
    return np.tile([-math.sin(t), math.cos(t), 1.0], m // 3)


@dataclass(frozen=True)
class ManufacturedCase:
    m: int
    p: int
    q: int
    dcoef: float
    problem: LinearDAE


def manufactured_rhs(case: ManufacturedCase, t: float) -> np.ndarray:
    """``A y'(t) + B y(t)`` for the exact solution."""
    pr = case.problem
    return (matvec(pr.A, analytic_derivative(t, case.m))
            + matvec(pr.B, analytic_solution(t, case.m)))


def paper_A(p: int, q: int) -> StructuredMatrix:
    return block_diagonal(p, [ScaledIdentity(1.0)] * (q - 2) + [ScaledIdentity(0.0)] * 2)


def paper_B(p: int, q: int, dcoef: float = 1.0) -> StructuredMatrix:
    return block_tridiagonal(p, q, Tridiagonal(-dcoef, 4.0 * dcoef, -dcoef),
                             ScaledIdentity(-dcoef))


def build_paper_problem(p: int, q: int, dcoef: float = 1.0, t0: float = 0.0,
                        h: float = 0.1, J: int = 20) -> ManufacturedCase:
    """The manufactured test problem with ``m = p q`` unknowns."""
    if p < 1 or q < 3:
        raise ConfigError(f"need p >= 1 and q >= 3, got p={p}, q={q}")
    m = p * q
    _check_m(m)
    A = paper_A(p, q)
    B = paper_B(p, q, dcoef)

    def forcing(t: float) -> np.ndarray:
        return matvec(A, analytic_derivative(t, m)) + matvec(B, analytic_solution(t, m))

    problem = LinearDAE(A, B, forcing, analytic_solution(t0, m), t0=t0, h=h, J=J)
    return ManufacturedCase(m, p, q, dcoef, problem)
