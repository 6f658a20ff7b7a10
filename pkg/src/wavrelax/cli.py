"""Command line entry point: run, compare, validate, radius.

Exit codes: 0 success, 2 config error, 3 non-convergence, 4 validation failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .errors import (ConfigError, ConvergenceError, DimensionError,
                     SingularMatrixError, ValidationError)
from .harness import (METHODS, MS_METHODS, ExperimentConfig, build_case,
                      compare_methods, iteration_radius, run_experiment, write_text)
from .splittings import (ValidationReport, build_partition, build_stage_splittings,
                         build_subproblem_splittings, validate_partition, validate_stage,
                         validate_subproblems)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_VALIDATION = 4


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat JSON config file")
    for f in dataclasses.fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = str(f.type).split("|")[0].strip()
        if f.name == "guard":
            parser.add_argument(flag, dest=f.name, choices=("on", "off"))
        elif f.name == "method":
            parser.add_argument(flag, dest=f.name, choices=METHODS)
        elif f.name in ("mode",):
            parser.add_argument(flag, dest=f.name, choices=("stepwise", "windowed"))
        elif f.name in ("fast", "mix_row"):
            parser.add_argument(flag, dest=f.name, type=int, choices=(1, 2))
        else:
            conv = {"int": int, "float": float}.get(kind, str)
            parser.add_argument(flag, dest=f.name, type=conv)


def load_config(args: argparse.Namespace, skip=()) -> ExperimentConfig:
    """Config file (or defaults) with every given flag applied on top."""
    base = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    data = base.to_dict()
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in skip:
            continue
        value = getattr(args, f.name, None)
        if value is not None:
            data[f.name] = value
    return ExperimentConfig.from_dict(data)


def _method_list(text: str | None) -> list[str]:
    if not text:
        return list(METHODS)
    names = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in names if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown methods: {', '.join(bad)}; choose from {', '.join(METHODS)}")
    return names


def cmd_run(args) -> int:
    cfg = load_config(args)
    res = run_experiment(cfg)
    write_text(args.out, res.series.to_csv())
    tr = res.trace
    print(f"{cfg.name}: max err_max {res.series.err_max.max():.6e}, "
          f"outer iterations {sum(tr.outer)}, solves {dict(sorted(tr.solves.items()))}",
          file=sys.stderr)
    if res.guard is not None and cfg.guard:
        print(f"guard switch-offs: {len(res.guard.switch_offs())} of "
              f"{len(res.guard.decisions)} checks", file=sys.stderr)
    return EXIT_OK


def cmd_compare(args) -> int:
    base = load_config(args, skip=("method", "label"))
    cfgs = [base.replace(method=m, label="") for m in _method_list(args.methods)]
    comp = compare_methods(cfgs)
    write_text(args.out, comp.to_csv())
    work = comp.work_csv()
    if args.out and str(args.out) != "-":
        out = Path(args.out)
        write_text(out.with_name(out.stem + ".work.csv"), work)
    else:
        sys.stderr.write(work)
    for o in comp.outcomes:
        if o.diverged:
            print(f"DIVERGED {o.label}: {o.message}", file=sys.stderr)
    return EXIT_CONVERGENCE if comp.any_diverged else EXIT_OK


def _collect(report: ValidationReport, build, check) -> None:
    try:
        obj = build()
    except ValidationError as exc:
        report.extend(exc.report)
        return
    report.extend(check(obj))


def cmd_validate(args) -> int:
    cfg = load_config(args)
    case = build_case(cfg)
    pr = case.problem
    report = ValidationReport()
    _collect(report, lambda: build_stage_splittings(case, n1_scale=cfg.n1_scale),
             lambda s: validate_stage(s, pr.A, pr.B, pr.h))
    _collect(report, lambda: build_subproblem_splittings(case, n1_scale=cfg.n1_scale),
             lambda subs: validate_subproblems(subs, pr.A, pr.B, pr.h))
    report.extend(validate_partition(build_partition(case.m, case.p, cfg.overlap, cfg.alphas)))
    print(report)
    print("all checks passed" if report.passed else "validation FAILED")
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_radius(args) -> int:
    base = load_config(args, skip=("method", "label"))
    for m in _method_list(args.methods):
        cfg = base.replace(method=m, label="")
        if m in MS_METHODS and cfg.mode == "windowed":
            cfg = cfg.replace(mode="stepwise")
        print(f"{m:16s} {iteration_radius(cfg):.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wavrelax",
                                     description="Waveform relaxation experiments on a linear DAE")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one method and write its error series")
    _add_config_flags(p_run)
    p_run.add_argument("--out", default="-", help="CSV path (default stdout)")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run several methods on one grid")
    _add_config_flags(p_cmp)
    p_cmp.add_argument("--methods", help="comma separated (default all)")
    p_cmp.add_argument("--out", default="-", help="CSV path (default stdout)")
    p_cmp.set_defaults(func=cmd_compare)

    p_val = sub.add_parser("validate", help="check splitting and partition identities")
    _add_config_flags(p_val)
    p_val.set_defaults(func=cmd_validate)

    p_rad = sub.add_parser("radius", help="estimate iteration spectral radii")
    _add_config_flags(p_rad)
    p_rad.add_argument("--methods", help="comma separated (default all)")
    p_rad.set_defaults(func=cmd_radius)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DimensionError, SingularMatrixError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ValidationError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
