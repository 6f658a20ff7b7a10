"""Stage splittings, subproblem splittings and the partition of unity.

Stage hierarchy (each ``M`` is easier to invert than the one before)::

    A   = M_A - N_A
    B   = M_1 - N_1     (M_A + h M_1: block diagonal, tridiagonal blocks)
    M_1 = M_2 - N_2     (M_A + h M_2: diagonal)
    M_2 = M_3 - N_3     (M_A + h M_3: diagonal)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SingularMatrixError, ValidationError
from .linalg import factorize
from .problem import ManufacturedCase
from .structured import (ScaledIdentity, StructuredMatrix,
                         block_tridiagonal, combine, identity)

IDENTITY_TOL = 1e-12
ALPHA_TOL = 1e-12


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    deviation: float | None = None
    detail: str = ""

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        dev = "" if self.deviation is None else f"  max|dev| = {self.deviation:.3e}"
        detail = f"  ({self.detail})" if self.detail else ""
        return f"[{status}] {self.name}{dev}{detail}"


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def extend(self, other: "ValidationReport") -> None:
        self.checks.extend(other.checks)

    def __str__(self):
        return "\n".join(str(c) for c in self.checks)


def _identity_check(name: str, lhs: StructuredMatrix, rhs: StructuredMatrix) -> Check:
    dev = combine(1.0, lhs, -1.0, rhs).max_abs()
    return Check(name, dev <= IDENTITY_TOL, dev)


def _factor_check(name: str, M: StructuredMatrix) -> Check:
    try:
        F = factorize(M)
    except SingularMatrixError as exc:
        return Check(name, False, detail=str(exc))
    return Check(name, True, detail=f"{F.path} solve path")


@dataclass(frozen=True)
class StageSplittings:
    M_A: StructuredMatrix
    N_A: StructuredMatrix
    M_1: StructuredMatrix
    N_1: StructuredMatrix
    M_2: StructuredMatrix
    N_2: StructuredMatrix
    M_3: StructuredMatrix
    N_3: StructuredMatrix


def make_stage_splittings(A, B, N_A, N_1, M_2, M_3) -> StageSplittings:
    """Complete a splitting family from its free members."""
    M_A = combine(1.0, A, 1.0, N_A)
    M_1 = combine(1.0, B, 1.0, N_1)
    N_2 = combine(1.0, M_2, -1.0, M_1)
    N_3 = combine(1.0, M_3, -1.0, M_2)
    return StageSplittings(M_A, N_A, M_1, N_1, M_2, N_2, M_3, N_3)


def validate_stage(s: StageSplittings, A: StructuredMatrix, B: StructuredMatrix,
                   h: float) -> ValidationReport:
    report = ValidationReport([
        _identity_check("A = M_A - N_A", A, combine(1.0, s.M_A, -1.0, s.N_A)),
        _identity_check("B = M_1 - N_1", B, combine(1.0, s.M_1, -1.0, s.N_1)),
        _identity_check("M_1 = M_2 - N_2", s.M_1, combine(1.0, s.M_2, -1.0, s.N_2)),
        _identity_check("M_2 = M_3 - N_3", s.M_2, combine(1.0, s.M_3, -1.0, s.N_3)),
    ])
    for k, M in ((1, s.M_1), (2, s.M_2), (3, s.M_3)):
        report.checks.append(_factor_check(f"M_A + h M_{k} nonsingular (h={h:g})",
                                           combine(1.0, s.M_A, h, M)))
    return report


def _single_block(p: int, q: int, index: int, s: float) -> StructuredMatrix:
    return StructuredMatrix(p, q, {(index, index): ScaledIdentity(s)})


def _stencil(p: int, q: int, centre: float, dcoef: float) -> StructuredMatrix:
    return block_tridiagonal(p, q, ScaledIdentity(centre * dcoef), ScaledIdentity(dcoef))


def build_stage_splittings(case: ManufacturedCase, dcoef: float | None = None,
                           n1_scale: float = 1.0) -> StageSplittings:
    """Splitting family of the manufactured problem.

    ``n1_scale`` multiplies ``N_1`` (``M_1 = B + N_1`` follows); the default
    reproduces the reference splitting.  Raises :class:`ValidationError` if
    any identity or shifted factorization fails.
    """
    dcoef = case.dcoef if dcoef is None else dcoef
    p, q = case.p, case.q
    pr = case.problem
    s = make_stage_splittings(
        pr.A, pr.B,
        N_A=_single_block(p, q, q - 2, 0.01),
        N_1=_stencil(p, q, 2.0, n1_scale * dcoef),
        M_2=identity(p, q, 8.0 * dcoef),
        M_3=identity(p, q, 10.0 * dcoef),
    )
    report = validate_stage(s, pr.A, pr.B, pr.h)
    if not report.passed:
        raise ValidationError(report)
    return s


@dataclass(frozen=True)
class SubproblemSplitting:
    index: int
    N_A: StructuredMatrix
    N_1: StructuredMatrix
    M_A: StructuredMatrix
    M_1: StructuredMatrix


def make_subproblem(index: int, A, B, N_A, N_1) -> SubproblemSplitting:
    return SubproblemSplitting(index, N_A, N_1, combine(1.0, A, 1.0, N_A),
                               combine(1.0, B, 1.0, N_1))


def validate_subproblems(subs, A: StructuredMatrix, B: StructuredMatrix,
                         h: float) -> ValidationReport:
    report = ValidationReport()
    for sub in subs:
        l = sub.index
        report.checks += [
            _identity_check(f"M_A{l} = A + N_A{l}", sub.M_A, combine(1.0, A, 1.0, sub.N_A)),
            _identity_check(f"M_1,{l} = B + N_1,{l}", sub.M_1, combine(1.0, B, 1.0, sub.N_1)),
            _factor_check(f"M_A{l} + h M_1,{l} nonsingular (h={h:g})",
                          combine(1.0, sub.M_A, h, sub.M_1)),
        ]
    return report


def build_subproblem_splittings(case: ManufacturedCase, dcoef: float | None = None,
                                n1_scale: float = 1.0
                                ) -> tuple[SubproblemSplitting, SubproblemSplitting]:
    dcoef = case.dcoef if dcoef is None else dcoef
    p, q = case.p, case.q
    pr = case.problem
    subs = (
        make_subproblem(1, pr.A, pr.B, _single_block(p, q, q - 2, 0.01),
                        _stencil(p, q, 2.0, n1_scale * dcoef)),
        make_subproblem(2, pr.A, pr.B, _single_block(p, q, q - 1, 0.01),
                        _stencil(p, q, 3.0, n1_scale * dcoef)),
    )
    report = validate_subproblems(subs, pr.A, pr.B, pr.h)
    if not report.passed:
        raise ValidationError(report)
    return subs


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """Diagonal weights ``E[l][j]`` (0-based) blending subproblem iterates.

    Processor ``l`` mixes ``E[l][0] y^1 + E[l][1] y^2``.
    """

    E: tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
    overlap: int
    alphas: tuple[float, float, float, float]
    L: int = 2

    def __post_init__(self):
        frozen = []
        for row in self.E:
            r = []
            for w in row:
                w = np.array(w, dtype=float)
                w.setflags(write=False)
                r.append(w)
            frozen.append(tuple(r))
        object.__setattr__(self, "E", tuple(frozen))

    @property
    def m(self) -> int:
        return self.E[0][0].shape[0]

    def mix(self, l: int, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        """Processor ``l``'s (1-based) blend of the two subproblem iterates."""
        e1, e2 = self.E[l - 1]
        return e1 * y1 + e2 * y2


def largest_overlap(m: int) -> int:
    return m // 2 - 1 if m % 2 == 0 else (m - 1) // 2


def _alpha_problems(alphas) -> list[str]:
    a1, a2, a3, a4 = alphas
    out = []
    if any(a < 0 for a in alphas):
        out.append("alphas must be nonnegative, got " + ", ".join(f"{a:g}" for a in alphas))
    if abs(a1 + a2 - 1.0) > ALPHA_TOL:
        out.append(f"alpha1+alpha2 = {a1 + a2:g} != 1")
    if abs(a3 + a4 - 1.0) > ALPHA_TOL:
        out.append(f"alpha3+alpha4 = {a3 + a4:g} != 1")
    return out


def build_partition(m: int, p: int = 1, o: int = 1,
                    alphas=(0.5, 0.5, 0.5, 0.5)) -> PartitionOfUnity:
    """Two-processor partition of unity with one of the two overlap shapes.

    ``o = 1`` puts a single fractional row at index ``ceil(m/2) - 1``;
    ``o = largest_overlap(m)`` (``m/2 - 1`` for even ``m``) makes every row
    but the first and last fractional.  Where the two coincide (``m <= 4``)
    the single-row shape wins.
    """
    alphas = tuple(float(a) for a in alphas)
    if len(alphas) != 4:
        raise ConfigError(f"need four alphas, got {len(alphas)}")
    problems = _alpha_problems(alphas)
    if problems:
        raise ConfigError("; ".join(problems))
    if m < 2 or p < 1 or m % p:
        raise ConfigError(f"need m >= 2 divisible by p, got m={m}, p={p}")
    if o not in (1, largest_overlap(m)):
        raise ConfigError(f"overlap must be 1 or {largest_overlap(m)} for m={m}, got {o}")

    def first_weights(alpha: float) -> np.ndarray:
        e = np.zeros(m)
        if o == 1:
            split = (m + 1) // 2 - 1
            e[:split] = 1.0
            e[split] = alpha
        else:
            e[0] = 1.0
            e[1:-1] = alpha
        return e

    E = []
    for alpha in (alphas[0], alphas[2]):
        e1 = first_weights(alpha)
        # complement keeps each row sum exactly one
        E.append((e1, 1.0 - e1))
    return PartitionOfUnity((E[0], E[1]), o, alphas)


def validate_partition(P: PartitionOfUnity) -> ValidationReport:
    report = ValidationReport()
    for l, (e1, e2) in enumerate(P.E, start=1):
        dev = float(np.max(np.abs(e1 + e2 - 1.0)))
        report.checks.append(Check(f"E_{l},1 + E_{l},2 = I", dev == 0.0, dev))
    neg = min(float(np.min(w)) for row in P.E for w in row)
    report.checks.append(Check("E_l,j >= 0", neg >= 0.0, detail=f"min weight {neg:g}"))
    problems = _alpha_problems(P.alphas)
    report.checks.append(Check("alpha constraints", not problems, detail="; ".join(problems)))
    return report
