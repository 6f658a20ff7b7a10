"""One-, two- and three-stage waveform relaxation with implicit Euler.

Every scheme shares the per-step fixed point of implicit Euler,

    (A + h B) y_{n+1} = A y_n + h f_{n+1},

and differs only in which matrix is inverted per sweep: ``M_A + h M_1`` for
one stage, ``M_A + h M_2`` for two, ``M_A + h M_3`` for three.

Stepwise mode converges each time step before moving on.  Windowed mode sweeps
the whole grid per iteration, taking the new iterate at ``t_n`` and the old
one at ``t_{n+1}`` on the right-hand side.
"""

from __future__ import annotations

import enum
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import ConvergenceError
from .linalg import BandFactorization, factorize, solve
from .problem import LinearDAE
from .splittings import StageSplittings
from .structured import combine, matvec, matvec_rows


class StageDepth(enum.IntEnum):
    ONE = 1
    TWO = 2
    THREE = 3


class TimeLoopMode(enum.Enum):
    STEPWISE = "stepwise"
    WINDOWED = "windowed"


@dataclass(frozen=True)
class ErrorBound:
    """Iterate every level until the update norm drops to ``tol``."""

    tol: float = 1e-3
    max_iters: int = 200

    def __post_init__(self):
        if not self.tol > 0 or self.max_iters < 1:
            raise ValueError(f"need tol > 0 and max_iters >= 1, got {self.tol}, {self.max_iters}")


@dataclass(frozen=True)
class FixedIters:
    """Exactly ``K`` outer, ``nu`` inner and ``mu`` innermost iterations."""

    K: int = 20
    nu: int = 1
    mu: int = 1

    def __post_init__(self):
        if min(self.K, self.nu, self.mu) < 1:
            raise ValueError(f"iteration counts must be >= 1, got {self.K}, {self.nu}, {self.mu}")


StoppingCriterion = Union[ErrorBound, FixedIters]


@dataclass
class SolveTrace:
    """Iteration counts per time step and linear-solve tallies per solve path."""

    outer: list[int] = field(default_factory=list)
    inner: list[int] = field(default_factory=list)
    innermost: list[int] = field(default_factory=list)
    update_norm: list[float] = field(default_factory=list)
    factorizations: int = 0
    solves: Counter = field(default_factory=Counter)
    subproblem_solves: Counter = field(default_factory=Counter)
    elapsed: float = 0.0

    def factor(self, M) -> BandFactorization:
        F = factorize(M)
        self.factorizations += 1
        return F

    def solve(self, F: BandFactorization, rhs) -> np.ndarray:
        self.solves[F.path] += 1
        return solve(F, rhs)

    def merge(self, other: "SolveTrace") -> None:
        self.factorizations += other.factorizations
        self.solves.update(other.solves)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __len__(self):
        return len(self.times)


def _trajectory(problem: LinearDAE, states) -> Trajectory:
    return Trajectory(problem.times(), np.array(states))


def _vec_norm(x: np.ndarray) -> float:
    return float(np.linalg.norm(x))


def _window_norm(X: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(X, axis=1)))


class _Level:
    """Runs one nesting level of the iteration and counts its sweeps."""

    def __init__(self, stop: StoppingCriterion, fixed: int, name: str,
                 norm: Callable[[np.ndarray], float], trace: SolveTrace):
        self.stop = stop
        self.fixed = fixed
        self.name = name
        self.norm = norm
        self.trace = trace
        self.count = 0
        self.last = 0.0

    def run(self, update, x):
        if isinstance(self.stop, FixedIters):
            for _ in range(self.fixed):
                new = update(x)
                self.last = self.norm(new - x)
                self.count += 1
                x = new
            return x
        for _ in range(self.stop.max_iters):
            new = update(x)
            self.last = self.norm(new - x)
            self.count += 1
            x = new
            if self.last <= self.stop.tol:
                return x
            if not np.isfinite(self.last):
                break
        raise ConvergenceError(
            f"{self.name} iteration did not reach tol={self.stop.tol:g} within "
            f"{self.stop.max_iters} iterations (last update {self.last:.3e})", self.trace)


def direct_euler(problem: LinearDAE, trace: SolveTrace | None = None) -> Trajectory:
    """Implicit Euler with a direct solve of ``(A + h B)`` per step."""
    trace = SolveTrace() if trace is None else trace
    t_start = time.perf_counter()
    h = problem.h
    F = trace.factor(combine(1.0, problem.A, h, problem.B))
    y = problem.y0.copy()
    states = [y]
    for n in range(problem.J):
        rhs = matvec(problem.A, y) + h * problem.forcing(problem.time(n + 1))
        y = trace.solve(F, rhs)
        states.append(y)
    trace.elapsed += time.perf_counter() - t_start
    return _trajectory(problem, states)


def _left_matrices(s: StageSplittings, depth: StageDepth, h: float):
    M = {StageDepth.ONE: s.M_1, StageDepth.TWO: s.M_2, StageDepth.THREE: s.M_3}[depth]
    return combine(1.0, s.M_A, h, M)


def wr_run(problem: LinearDAE, s: StageSplittings, depth: StageDepth,
           stop: StoppingCriterion, mode: TimeLoopMode = TimeLoopMode.STEPWISE
           ) -> tuple[Trajectory, SolveTrace]:
    """Waveform relaxation of the requested nesting depth.

    Raises :class:`ConvergenceError` (carrying the trace) when an
    :class:`ErrorBound` level hits its cap.
    """
    depth = StageDepth(depth)
    mode = TimeLoopMode(mode)
    trace = SolveTrace()
    t_start = time.perf_counter()
    F = trace.factor(_left_matrices(s, depth, problem.h))
    if mode is TimeLoopMode.STEPWISE:
        traj = _run_stepwise(problem, s, depth, stop, F, trace)
    else:
        traj = _run_windowed(problem, s, depth, stop, F, trace)
    trace.elapsed = time.perf_counter() - t_start
    return traj, trace


def _levels(stop, norm, trace):
    K, nu, mu = (stop.K, stop.nu, stop.mu) if isinstance(stop, FixedIters) else (0, 0, 0)
    return (_Level(stop, K, "outer", norm, trace),
            _Level(stop, nu, "inner", norm, trace),
            _Level(stop, mu, "innermost", norm, trace))


def _run_stepwise(problem, s, depth, stop, F, trace) -> Trajectory:
    h = problem.h
    y = problem.y0.copy()
    states = [y]
    for n in range(problem.J):
        outer, inner, innermost = _levels(stop, _vec_norm, trace)
        c = matvec(s.M_A, y) - matvec(s.N_A, y) + h * problem.forcing(problem.time(n + 1))

        def coupling(yk):
            return h * matvec(s.N_1, yk) + matvec(s.N_A, yk) + c

        if depth is StageDepth.ONE:
            def outer_update(yk):
                return trace.solve(F, coupling(yk))
        elif depth is StageDepth.TWO:
            def outer_update(yk):
                g = coupling(yk)
                return inner.run(lambda z: trace.solve(F, h * matvec(s.N_2, z) + g), yk)
        else:
            def outer_update(yk):
                g = coupling(yk)

                def middle_update(z):
                    g2 = h * matvec(s.N_2, z) + g
                    return innermost.run(
                        lambda zt: trace.solve(F, h * matvec(s.N_3, zt) + g2), z)

                return inner.run(middle_update, yk)

        y = outer.run(outer_update, y)
        states.append(y)
        trace.outer.append(outer.count)
        trace.inner.append(inner.count)
        trace.innermost.append(innermost.count)
        trace.update_norm.append(outer.last)
    return _trajectory(problem, states)


def _run_windowed(problem, s, depth, stop, F, trace) -> Trajectory:
    h, J = problem.h, problem.J
    y0 = problem.y0
    hf = np.array([h * problem.forcing(problem.time(n)) for n in range(J + 1)])
    outer, inner, innermost = _levels(stop, _window_norm, trace)
    # splitting part applied to the swept level's own previous iterate
    P = {StageDepth.ONE: None, StageDepth.TWO: s.N_2, StageDepth.THREE: s.N_3}[depth]

    def sweep(X, fixed_part):
        """One pass over the grid: solve for X^{new}_{n+1} using X^{new}_n."""
        if P is not None:
            fixed_part = fixed_part + h * matvec_rows(P, X[1:])
        new = np.empty_like(X)
        new[0] = y0
        for n in range(J):
            new[n + 1] = trace.solve(F, fixed_part[n] + matvec(s.M_A, new[n]))
        return new

    def outer_fixed(Y):
        # terms frozen at the outer iterate: G y_{n+1}^k - N_A y_n^k + h f_{n+1}
        return (h * matvec_rows(s.N_1, Y[1:]) + matvec_rows(s.N_A, Y[1:])
                - matvec_rows(s.N_A, Y[:-1]) + hf[1:])

    if depth is StageDepth.ONE:
        def outer_update(Y):
            return sweep(Y, outer_fixed(Y))
    elif depth is StageDepth.TWO:
        def outer_update(Y):
            base = outer_fixed(Y)
            return inner.run(lambda Z: sweep(Z, base), Y)
    else:
        def outer_update(Y):
            base = outer_fixed(Y)

            def middle_update(Z):
                mid = base + h * matvec_rows(s.N_2, Z[1:])
                return innermost.run(lambda Zt: sweep(Zt, mid), Z)

            return inner.run(middle_update, Y)

    Y0 = np.tile(y0, (J + 1, 1))
    if J == 0:
        return _trajectory(problem, Y0)
    Y = outer.run(outer_update, Y0)
    trace.outer = [outer.count] * J
    trace.inner = [inner.count] * J
    trace.innermost = [innermost.count] * J
    trace.update_norm = [outer.last] * J
    return _trajectory(problem, Y)


def iteration_operator(s: StageSplittings, depth: StageDepth, h: float,
                       nu: int = 1, mu: int = 1) -> Callable[[np.ndarray], np.ndarray]:
    """Linear map taking the outer error ``y^k - y*`` to ``y^{k+1} - y*``.

    For depth one this is ``(M_A + h M_1)^{-1} (h N_1 + N_A)``; deeper stages
    compose ``nu`` inner (and ``mu`` innermost) sweeps started from ``y^k``.
    Raises :class:`SingularMatrixError` for a singular left-hand matrix.
    """
    depth = StageDepth(depth)
    F = factorize(_left_matrices(s, depth, h))

    def coupling(v):
        return h * matvec(s.N_1, v) + matvec(s.N_A, v)

    if depth is StageDepth.ONE:
        return lambda v: solve(F, coupling(v))

    if depth is StageDepth.TWO:
        def apply(v):
            g = coupling(v)
            z = v
            for _ in range(nu):
                z = solve(F, h * matvec(s.N_2, z) + g)
            return z
        return apply

    def apply(v):
        g = coupling(v)
        z = v
        for _ in range(nu):
            g2 = h * matvec(s.N_2, z) + g
            zt = z
            for _ in range(mu):
                zt = solve(F, h * matvec(s.N_3, zt) + g2)
            z = zt
        return z
    return apply

