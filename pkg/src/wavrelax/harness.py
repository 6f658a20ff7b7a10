"""Experiment configuration, error series and method comparison.

A run builds the manufactured problem from an :class:`ExperimentConfig`,
dispatches to the stage or multisplitting solver and evaluates both error
norms against the analytic solution at every grid time.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ConvergenceError
from .linalg import spectral_radius_estimate
from .multisplit import MixingGuardState, MSKind, MSMethod, ms_iteration_operator, ms_run
from .problem import ManufacturedCase, analytic_solution, build_paper_problem
from .splittings import build_partition, build_stage_splittings, build_subproblem_splittings
from .stages import (ErrorBound, FixedIters, SolveTrace, StageDepth, StoppingCriterion,
                     TimeLoopMode, Trajectory, iteration_operator, wr_run)

STAGE_METHODS = {"one-stage": StageDepth.ONE, "two-stage": StageDepth.TWO,
                 "three-stage": StageDepth.THREE}
MS_METHODS = {"ms-jacobi": MSKind.JACOBI, "ms-gs-serial": MSKind.GS_SERIAL,
              "ms-gs-decoupled": MSKind.GS_DECOUPLED, "ms-gs-coupled": MSKind.GS_COUPLED}
METHODS = tuple(STAGE_METHODS) + tuple(MS_METHODS)
STOP_MODES = ("auto", "error-bound", "fixed")

# (K, nu, mu) used when a fixed iteration count is not given explicitly
DEFAULT_COUNTS = {
    "one-stage": (20, 1, 1),
    "two-stage": (5, 4, 1),
    "three-stage": (5, 2, 2),
}
MS_DEFAULT_COUNTS = (20, 1, 1)

PROBLEM_KEYS = ("p", "q", "dcoef", "h", "steps", "t0")


def err_l2(numerical, t: float, dx: float = 1.0) -> float:
    """Scaled Euclidean distance to the analytic solution at ``t``."""
    if not dx > 0:
        raise ConfigError(f"dx must be positive, got {dx}")
    y = np.asarray(numerical, dtype=float)
    return float(np.sqrt(np.sum((analytic_solution(t, y.shape[0]) - y) ** 2)) / dx)


def err_max(numerical, t: float) -> float:
    y = np.asarray(numerical, dtype=float)
    return float(np.max(np.abs(analytic_solution(t, y.shape[0]) - y)))


@dataclass
class ExperimentConfig:
    """Every knob of one run; keys double as config-file keys and CLI flags."""

    p: int = 50
    q: int = 6
    dcoef: float = 1.0
    h: float = 0.1
    steps: int = 20
    t0: float = 0.0
    method: str = "one-stage"
    stop: str = "auto"
    tol: float = 1e-3
    outer: int | None = None
    inner: int | None = None
    innermost: int | None = None
    cap: int = 200
    mode: str = "stepwise"
    overlap: int = 1
    alpha1: float = 0.5
    alpha2: float = 0.5
    alpha3: float = 0.5
    alpha4: float = 0.5
    guard: bool = False
    fast: int = 1
    mix_row: int = 1
    n1_scale: float = 1.0
    seed: int = 0
    label: str = ""

    def __post_init__(self):
        for f in dataclasses.fields(self):
            setattr(self, f.name, _coerce(f.name, f.type, getattr(self, f.name)))
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.stop not in STOP_MODES:
            raise ConfigError(f"stop must be one of {STOP_MODES}, got {self.stop!r}")
        if self.mode not in ("stepwise", "windowed"):
            raise ConfigError(f"mode must be stepwise or windowed, got {self.mode!r}")
        if self.mode == "windowed" and self.method in MS_METHODS:
            raise ConfigError("windowed mode is only available for the stage methods")
        for name in ("outer", "inner", "innermost"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be >= 1, got {v}")
        if self.cap < 1 or not self.tol > 0:
            raise ConfigError(f"need cap >= 1 and tol > 0, got cap={self.cap}, tol={self.tol}")
        if self.steps < 0 or not self.h > 0:
            raise ConfigError(f"need steps >= 0 and h > 0, got steps={self.steps}, h={self.h}")
        if self.fast not in (1, 2) or self.mix_row not in (1, 2):
            raise ConfigError(f"fast and mix_row must be 1 or 2, got {self.fast}, {self.mix_row}")

    @property
    def name(self) -> str:
        return self.label or self.method

    @property
    def alphas(self) -> tuple[float, float, float, float]:
        return (self.alpha1, self.alpha2, self.alpha3, self.alpha4)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"config must be a flat mapping, got {type(data).__name__}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def same_problem(self, other: "ExperimentConfig") -> bool:
        return all(getattr(self, k) == getattr(other, k) for k in PROBLEM_KEYS)


def _coerce(name: str, type_name: str, value):
    optional = "None" in type_name
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{name} may not be null")
    base = type_name.split("|")[0].strip()
    if base == "bool":
        if isinstance(value, bool):
            return value
        if value in ("on", "true", "yes"):
            return True
        if value in ("off", "false", "no"):
            return False
        raise ConfigError(f"{name} must be a boolean (on/off), got {value!r}")
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be {base}, got a boolean")
    if base == "int":
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return value
    if base == "float":
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{name} must be a finite number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{name} must be a string, got {value!r}")
    return value


def stop_criterion(cfg: ExperimentConfig) -> StoppingCriterion:
    """Resolve ``stop = auto`` to the reference setting of the method."""
    K0, nu0, mu0 = DEFAULT_COUNTS.get(cfg.method, MS_DEFAULT_COUNTS)
    stop = cfg.stop
    if stop == "auto":
        stop = "fixed" if cfg.method in ("two-stage", "three-stage") else "error-bound"
    if stop == "error-bound":
        return ErrorBound(cfg.tol, cfg.cap)
    return FixedIters(cfg.outer or K0, cfg.inner or nu0, cfg.innermost or mu0)


def build_case(cfg: ExperimentConfig) -> ManufacturedCase:
    return build_paper_problem(cfg.p, cfg.q, cfg.dcoef, t0=cfg.t0, h=cfg.h, J=cfg.steps)


def ms_method(cfg: ExperimentConfig) -> MSMethod:
    return MSMethod(MS_METHODS[cfg.method], cfg.fast)


@dataclass(frozen=True)
class ErrorSeries:
    label: str
    t: np.ndarray
    err_l2: np.ndarray
    err_max: np.ndarray

    def __len__(self):
        return len(self.t)

    def to_csv(self) -> str:
        rows = [("t", "err_l2", "err_max")]
        rows += [tuple(_fmt(v) for v in row) for row in zip(self.t, self.err_l2, self.err_max)]
        return _csv(rows)


def _fmt(x) -> str:
    # shortest round-trip decimal
    return repr(float(x))


def _csv(rows) -> str:
    return "".join(",".join(r) + "\n" for r in rows)


def error_series(label: str, traj: Trajectory, dx: float = 1.0) -> ErrorSeries:
    l2 = np.array([err_l2(y, t, dx) for t, y in zip(traj.times, traj.states)])
    mx = np.array([err_max(y, t) for t, y in zip(traj.times, traj.states)])
    return ErrorSeries(label, np.array(traj.times, dtype=float), l2, mx)


@dataclass
class RunResult:
    series: ErrorSeries
    trace: SolveTrace
    trajectory: Trajectory
    guard: MixingGuardState | None = None


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    """Solve the configured problem and tabulate its errors.

    A :class:`ConvergenceError` is re-raised with the config attached.
    """
    case = build_case(cfg)
    pr = case.problem
    stop = stop_criterion(cfg)
    guard_state = None
    try:
        if cfg.method in STAGE_METHODS:
            s = build_stage_splittings(case, n1_scale=cfg.n1_scale)
            traj, trace = wr_run(pr, s, STAGE_METHODS[cfg.method], stop, TimeLoopMode(cfg.mode))
        else:
            subs = build_subproblem_splittings(case, n1_scale=cfg.n1_scale)
            P = build_partition(case.m, case.p, cfg.overlap, cfg.alphas)
            s = build_stage_splittings(case)
            traj, trace, guard_state = ms_run(pr, subs, P, ms_method(cfg), stop,
                                              guard=cfg.guard, stage=s, mix_row=cfg.mix_row)
    except ConvergenceError as exc:
        compact = json.dumps(cfg.to_dict(), separators=(",", ":"))
        raise ConvergenceError(f"{exc}\nconfig: {compact}", exc.trace) from exc
    return RunResult(error_series(cfg.name, traj), trace, traj, guard_state)


def iteration_radius(cfg: ExperimentConfig, iters: int = 200) -> float:
    """Power-iteration estimate of the outer iteration's spectral radius.

    Stage methods with an error bound iterate the inner levels to
    convergence, so their outer map is estimated by the one-stage map.
    """
    case = build_case(cfg)
    h = cfg.h
    if cfg.method in STAGE_METHODS:
        s = build_stage_splittings(case, n1_scale=cfg.n1_scale)
        stop = stop_criterion(cfg)
        if isinstance(stop, FixedIters):
            op = iteration_operator(s, STAGE_METHODS[cfg.method], h, stop.nu, stop.mu)
        else:
            op = iteration_operator(s, StageDepth.ONE, h)
        return spectral_radius_estimate(op, case.m, iters, cfg.seed)
    subs = build_subproblem_splittings(case, n1_scale=cfg.n1_scale)
    P = build_partition(case.m, case.p, cfg.overlap, cfg.alphas)
    op = ms_iteration_operator(subs, P, ms_method(cfg), h)
    return spectral_radius_estimate(op, 2 * case.m, iters, cfg.seed)


@dataclass
class MethodOutcome:
    label: str
    status: str
    radius: float
    series: ErrorSeries | None
    trace: SolveTrace | None
    message: str = ""

    @property
    def diverged(self) -> bool:
        return self.status != "ok"


@dataclass
class Comparison:
    times: np.ndarray
    outcomes: list[MethodOutcome] = field(default_factory=list)

    @property
    def any_diverged(self) -> bool:
        return any(o.diverged for o in self.outcomes)

    def to_csv(self) -> str:
        header = ["t"]
        for o in self.outcomes:
            header += [f"{o.label}_l2", f"{o.label}_max"]
        rows = [header]
        for n, t in enumerate(self.times):
            row = [_fmt(t)]
            for o in self.outcomes:
                if o.series is None:
                    row += ["nan", "nan"]
                else:
                    row += [_fmt(o.series.err_l2[n]), _fmt(o.series.err_max[n])]
            rows.append(row)
        return _csv(rows)

    def work_csv(self) -> str:
        """Totals of the work counters per method (wall time excluded)."""
        rows = [["label", "status", "radius", "outer", "inner", "innermost",
                 "diagonal", "block_thomas", "banded", "factorizations"]]
        for o in self.outcomes:
            tr = o.trace or SolveTrace()
            rows.append([o.label, o.status, _fmt(o.radius), str(sum(tr.outer)),
                         str(sum(tr.inner)), str(sum(tr.innermost)),
                         str(tr.solves["diagonal"]), str(tr.solves["block_thomas"]),
                         str(tr.solves["banded"]), str(tr.factorizations)])
        return _csv(rows)


def compare_methods(cfgs) -> Comparison:
    """Run every config on a shared grid and collect an aligned table.

    A method is flagged as diverged when it hits its iteration cap, produces
    non-finite values, or its estimated iteration radius is at least one.
    """
    cfgs = list(cfgs)
    if not cfgs:
        raise ConfigError("compare needs at least one method")
    first = cfgs[0]
    for c in cfgs[1:]:
        if not c.same_problem(first):
            diffs = [k for k in PROBLEM_KEYS if getattr(c, k) != getattr(first, k)]
            raise ConfigError(f"mismatched grids: {c.name} differs from {first.name} in "
                              f"{', '.join(diffs)}")
    labels = [c.name for c in cfgs]
    dup = sorted({x for x in labels if labels.count(x) > 1})
    if dup:
        raise ConfigError(f"duplicate method labels: {', '.join(dup)}")
    times = build_case(first).problem.times()
    comp = Comparison(times)
    for c in cfgs:
        radius = iteration_radius(c)
        try:
            res = run_experiment(c)
        except ConvergenceError as exc:
            comp.outcomes.append(MethodOutcome(c.name, "diverged", radius, None, exc.trace,
                                               str(exc).splitlines()[0]))
            continue
        finite = np.all(np.isfinite(res.series.err_l2)) and np.all(np.isfinite(res.series.err_max))
        status = "ok" if finite and radius < 1.0 else "diverged"
        msg = "" if status == "ok" else (
            "non-finite errors" if not finite else f"iteration radius {radius:.4g} >= 1")
        comp.outcomes.append(MethodOutcome(c.name, status, radius, res.series, res.trace, msg))
    return comp


def write_text(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    with io.open(path, "w", newline="") as fh:
        fh.write(text)
