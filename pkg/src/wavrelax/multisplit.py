"""Multisplitting waveform relaxation with two overlapping subproblems.

Each processor ``l`` owns a splitting ``A = M_A_l - N_A_l``, ``B = M_1_l - N_1_l``
and sees the other processor's iterate only through the diagonal weights of a
:class:`~wavrelax.splittings.PartitionOfUnity`.  Four coupling patterns are
provided (Jacobi, serial Gauss-Seidel, decoupled and coupled Gauss-Seidel).
All of them have the implicit Euler step as their common fixed point.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConvergenceError
from .problem import LinearDAE
from .splittings import PartitionOfUnity, StageSplittings
from .stages import FixedIters, SolveTrace, StoppingCriterion, Trajectory
from .structured import combine, matvec, scale_columns

MIX = "mix"
SWITCH_OFF = "switch-off"
GUARD_RTOL = 4 * np.finfo(float).eps


class MSKind(enum.Enum):
    JACOBI = "jacobi"
    GS_SERIAL = "gs-serial"
    GS_DECOUPLED = "gs-decoupled"
    GS_COUPLED = "gs-coupled"


@dataclass(frozen=True)
class MSMethod:
    kind: MSKind
    fast: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", MSKind(self.kind))
        if self.fast not in (1, 2):
            raise ConfigError(f"fast processor must be 1 or 2, got {self.fast}")

    @property
    def decoupled(self) -> bool:
        return self.kind in (MSKind.GS_DECOUPLED, MSKind.GS_COUPLED)


JACOBI = MSMethod(MSKind.JACOBI)
GS_SERIAL = MSMethod(MSKind.GS_SERIAL)
GS_DECOUPLED = MSMethod(MSKind.GS_DECOUPLED)


def gs_coupled(fast: int = 1) -> MSMethod:
    return MSMethod(MSKind.GS_COUPLED, fast)


@dataclass
class MixingGuardState:
    """Log of guard decisions as ``(step, iteration, decision)`` triples."""

    decisions: list[tuple[int, int, str]] = field(default_factory=list)

    def switch_offs(self) -> list[tuple[int, int]]:
        return [(n, k) for n, k, d in self.decisions if d == SWITCH_OFF]


def mixing_guard_check(y1k, y2k, y1km1, y2km1, P: PartitionOfUnity,
                       method: MSMethod, y1kp1=None) -> str:
    """Keep mixing only if each blend moves no further than the raw iterate.

    For serial Gauss-Seidel the second blend uses processor 1's newer iterate
    ``y1kp1`` when given.
    """
    partner = y1kp1 if (method.kind is MSKind.GS_SERIAL and y1kp1 is not None) else y1k
    # blending equal vectors is exact only up to rounding
    slack = GUARD_RTOL * (np.linalg.norm(partner) + np.linalg.norm(y2k))
    lhs1 = np.linalg.norm(P.mix(1, y1k, y2k) - y1km1)
    rhs1 = np.linalg.norm(y1k - y1km1)
    lhs2 = np.linalg.norm(P.mix(2, partner, y2k) - y2km1)
    rhs2 = np.linalg.norm(y2k - y2km1)
    return MIX if (lhs1 <= rhs1 + slack and lhs2 <= rhs2 + slack) else SWITCH_OFF


class MultisplitSolver:
    """Factorized subproblem operators for one method, partition and step size."""

    def __init__(self, subs, P: PartitionOfUnity, method: MSMethod, h: float,
                 trace: SolveTrace | None = None):
        if len(subs) != 2:
            raise ConfigError(f"exactly two subproblems are supported, got {len(subs)}")
        self.subs = tuple(sorted(subs, key=lambda s: s.index))
        self.P = P
        self.method = method
        self.h = h
        self.trace = SolveTrace() if trace is None else trace
        # coupling T_l = h N_1,l + N_A_l
        self.T = [combine(h, s.N_1, 1.0, s.N_A) for s in self.subs]
        self.F = []
        for l, (s, T) in enumerate(zip(self.subs, self.T)):
            lhs = combine(1.0, s.M_A, h, s.M_1)
            if method.decoupled:
                lhs = combine(1.0, lhs, -1.0, scale_columns(T, P.E[l][l]))
            self.F.append(self.trace.factor(lhs))

    def _solve(self, l: int, mixed: np.ndarray, c: np.ndarray) -> np.ndarray:
        self.trace.subproblem_solves[l] += 1
        return self.trace.solve(self.F[l - 1], matvec(self.T[l - 1], mixed) + c)

    def solve_first(self, y1, y2, c, mixing: bool = True) -> np.ndarray:
        """Processor 1's update given the partner iterate ``y2``."""
        E = self.P.E
        if not mixing:
            y2 = y1
        if self.method.decoupled:
            return self._solve(1, E[0][1] * y2, c)
        return self._solve(1, self.P.mix(1, y1, y2), c)

    def solve_second(self, y1, y2, c) -> np.ndarray:
        E = self.P.E
        if self.method.decoupled:
            return self._solve(2, E[1][0] * y1, c)
        return self._solve(2, self.P.mix(2, y1, y2), c)

    def iterate(self, y1, y2, c, mixing: bool = True):
        """One outer iteration of both processors."""
        if not mixing:
            return self.solve_first(y1, y2, c, mixing=False), y2
        kind = self.method.kind
        if kind in (MSKind.JACOBI, MSKind.GS_DECOUPLED):
            return self.solve_first(y1, y2, c), self.solve_second(y1, y2, c)
        if kind is MSKind.GS_SERIAL or self.method.fast == 1:
            y1n = self.solve_first(y1, y2, c)
            return y1n, self.solve_second(y1n, y2, c)
        y2n = self.solve_second(y1, y2, c)
        return self.solve_first(y1, y2n, c), y2n


def ms_iteration_operator(subs, P: PartitionOfUnity, method: MSMethod, h: float):
    """Homogeneous outer-iteration map on the stacked pair ``[y^1; y^2]``."""
    solver = MultisplitSolver(subs, P, method, h)
    m = P.m
    zero = np.zeros(m)

    def apply(v):
        y1, y2 = solver.iterate(v[:m], v[m:], zero)
        return np.concatenate([y1, y2])

    return apply


def ms_run(problem: LinearDAE, subs, P: PartitionOfUnity, method: MSMethod,
           stop: StoppingCriterion, guard: bool = True,
           stage: StageSplittings | None = None, mix_row: int = 1
           ) -> tuple[Trajectory, SolveTrace, MixingGuardState]:
    """Multisplitting WR, stepping through the time grid.

    The reported iterate is the blend ``E[mix_row]`` of both processors.  With
    ``guard`` on, a failed guard check switches mixing off for the rest of the
    current step: processor 1 then iterates alone and its iterate is reported.
    ``stage`` supplies the ``M_A``, ``N_A`` used for the ``M_A y_n - N_A y_n``
    term; without it ``A y_n`` is used directly.
    """
    if mix_row not in (1, 2):
        raise ConfigError(f"mix_row must be 1 or 2, got {mix_row}")
    if P.m != problem.m:
        raise ConfigError(f"partition has m={P.m}, problem has m={problem.m}")
    trace = SolveTrace()
    state = MixingGuardState()
    t_start = time.perf_counter()
    solver = MultisplitSolver(subs, P, method, problem.h, trace)
    h = problem.h
    serial = method.kind is MSKind.GS_SERIAL
    if isinstance(stop, FixedIters):
        cap, tol = stop.K, None
    else:
        cap, tol = stop.max_iters, stop.tol

    y = problem.y0.copy()
    states = [y]
    for n in range(problem.J):
        if stage is not None:
            Ay = matvec(stage.M_A, y) - matvec(stage.N_A, y)
        else:
            Ay = matvec(problem.A, y)
        c = Ay + h * problem.forcing(problem.time(n + 1))
        y1 = y2 = y
        y1_prev = y2_prev = None
        g = y
        mixing = True
        upd = np.inf
        for k in range(cap):
            if guard and mixing and k >= 1 and not serial:
                decision = mixing_guard_check(y1, y2, y1_prev, y2_prev, P, method)
                state.decisions.append((n, k, decision))
                if decision == SWITCH_OFF:
                    mixing = False
                    g = y1
            if serial and mixing:
                y1n = solver.solve_first(y1, y2, c)
                if guard and k >= 1:
                    decision = mixing_guard_check(y1, y2, y1_prev, y2_prev, P, method,
                                                  y1kp1=y1n)
                    state.decisions.append((n, k, decision))
                    if decision == SWITCH_OFF:
                        mixing = False
                        g = y1
                y2n = solver.solve_second(y1n, y2, c) if mixing else y2
            else:
                y1n, y2n = solver.iterate(y1, y2, c, mixing)
            y1_prev, y2_prev, y1, y2 = y1, y2, y1n, y2n
            g_new = P.mix(mix_row, y1, y2) if mixing else y1
            upd = float(np.linalg.norm(g_new - g))
            g = g_new
            if tol is not None and upd <= tol:
                break
            if tol is not None and not np.isfinite(upd):
                trace.elapsed = time.perf_counter() - t_start
                raise ConvergenceError(
                    f"multisplitting ({method.kind.value}) iterate is no longer finite at "
                    f"step {n}, iteration {k + 1}", trace)
        else:
            if tol is not None:
                trace.elapsed = time.perf_counter() - t_start
                raise ConvergenceError(
                    f"multisplitting ({method.kind.value}) did not reach tol={tol:g} within "
                    f"{cap} iterations at step {n} (last update {upd:.3e})", trace)
        y = g
        states.append(y)
        trace.outer.append(k + 1)
        trace.update_norm.append(upd)
    trace.elapsed = time.perf_counter() - t_start
    return Trajectory(problem.times(), np.array(states)), trace, state
