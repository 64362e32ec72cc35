"""Command-line front end: ``verify``, ``solve``, ``freq-matrices``, ``dft``.

Machine-readable reports go to stdout as JSON (CSV for ``dft``); one-line
human summaries go to stderr.  Exit codes: 0 on pass/convergence, 1 on a
failed verification or non-convergence, 2 on usage or parse errors.  The
environment variable ``GEOPMP_TOL`` overrides the default verification
tolerance.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import GeoPMPError, InfeasibleError, NonConvergence, ParseError
from .frequency import FrequencySpec, build_freq_matrices, dft
from .pmp import DEFAULT_PASS_TOL, recover_multipliers, verify
from .problem_io import (
    certificate_from_dict,
    certificate_to_dict,
    parse_problem,
    read_trajectory_csv,
    write_trajectory_csv,
)
from .solvers import METHODS, SolveOptions, solve


def _default_tol(explicit: float | None) -> float:
    if explicit is not None:
        return explicit
    env = os.environ.get("GEOPMP_TOL")
    if env is not None:
        try:
            return float(env)
        except ValueError:
            raise ParseError(f"GEOPMP_TOL must be a float, got '{env}'", "") from None
    return DEFAULT_PASS_TOL


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _info(message: str) -> None:
    print(message, file=sys.stderr)


def _cmd_verify(args) -> int:
    problem = parse_problem(args.problem)
    traj = read_trajectory_csv(problem, args.trajectory)
    tol = _default_tol(args.tol)
    if args.certificate:
        with open(args.certificate) as fh:
            cert = certificate_from_dict(traj, json.load(fh))
        report = verify(problem, traj, cert, tol=tol)
        payload = report.as_dict()
    else:
        result = recover_multipliers(problem, traj, pass_tol=tol)
        report = result.report
        payload = report.as_dict()
        payload["certificate"] = certificate_to_dict(result.certificate)
        payload["certificate_exact"] = result.exact
    _emit(payload)
    ok = report.overall_pass and report.feasibility.feasible()
    _info(
        "verify: "
        + ("all conditions pass" if ok else "FAILED")
        + f" (max residual {report.max_condition_residual():.3e}, tol {tol:.1e})"
    )
    return 0 if ok else 1


def _cmd_solve(args) -> int:
    problem = parse_problem(args.problem)
    opts = SolveOptions(
        method=args.method,
        max_iters=args.max_iters,
        tol=args.tol if args.tol is not None else 1e-10,
        grid_resolution=args.grid_res,
        seed=args.seed,
        n_starts=args.starts,
    )
    try:
        result = solve(problem, opts)
    except (NonConvergence, InfeasibleError) as exc:
        residual = getattr(exc, "residual", None)
        _emit(
            {
                "converged": False,
                "error": str(exc),
                "residual": residual,
            }
        )
        _info(f"solve: {exc}")
        return 1
    payload = result.as_dict()
    payload["controls"] = result.trajectory.controls.tolist()
    if result.recovery is not None:
        payload["certificate"] = certificate_to_dict(result.recovery.certificate)
    if args.traj_out:
        write_trajectory_csv(result.trajectory, args.traj_out)
        payload["trajectory_file"] = args.traj_out
    _emit(payload)
    _info(
        f"solve[{args.method}]: objective {result.objective:.9g}, "
        f"{result.status}, {result.iterations} iterations"
    )
    return 0 if result.converged else 1


def _cmd_freq_matrices(args) -> int:
    if args.problem:
        problem = parse_problem(args.problem)
        spec = problem.freq
    else:
        if args.horizon is None or args.support is None:
            raise ParseError(
                "freq-matrices needs a problem file or both --horizon and --support", ""
            )
        try:
            support = json.loads(args.support)
        except json.JSONDecodeError as exc:
            raise ParseError(f"--support must be JSON: {exc}", "") from None
        if not isinstance(support, list) or not support:
            raise ParseError("--support must be a nonempty list of bin lists", "")
        spec = FrequencySpec(
            horizon=args.horizon,
            control_dim=len(support),
            allowed_support=tuple(frozenset(w) for w in support),
        )
    mats = build_freq_matrices(spec)
    _emit(
        {
            "ell": mats.ell,
            "horizon": spec.horizon,
            "control_dim": spec.control_dim,
            "E": [e.tolist() for e in mats.matrices],
        }
    )
    _info(f"freq-matrices: ell={mats.ell} over horizon {spec.horizon}")
    return 0


def _cmd_dft(args) -> int:
    try:
        data = np.loadtxt(args.input, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ParseError(f"cannot read control CSV: {exc}", "") from None
    if data.shape[0] == 1 and data.shape[1] > 1:
        data = data.T  # a single row is one sequence
    lines = []
    multi = data.shape[1] > 1
    lines.append(("component,bin,re,im,abs" if multi else "bin,re,im,abs"))
    for k in range(data.shape[1]):
        spectrum = dft(data[:, k])
        for xi, z in enumerate(spectrum):
            fields = [str(xi), repr(float(z.real)), repr(float(z.imag)), repr(float(abs(z)))]
            if multi:
                fields.insert(0, str(k))
            lines.append(",".join(fields))
    print("\n".join(lines))
    _info(f"dft: {data.shape[1]} component(s), {data.shape[0]} samples")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geopmp",
        description="Discrete-time optimal control on embedded manifolds: "
        "solve small instances and check the first-order necessary conditions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="check PMP conditions on a trajectory")
    p_verify.add_argument("problem", help="problem JSON file")
    p_verify.add_argument("--trajectory", required=True, help="trajectory CSV file")
    p_verify.add_argument("--certificate", help="multiplier JSON (recovered if omitted)")
    p_verify.add_argument("--tol", type=float, default=None, help="pass tolerance")
    p_verify.set_defaults(func=_cmd_verify)

    p_solve = sub.add_parser("solve", help="solve a problem instance")
    p_solve.add_argument("problem", help="problem JSON file")
    p_solve.add_argument("--method", choices=METHODS, default="direct_grid")
    p_solve.add_argument("--grid-res", type=float, default=1e-9,
                         help="target grid spacing for direct_grid")
    p_solve.add_argument("--max-iters", type=int, default=500)
    p_solve.add_argument("--seed", type=int, default=0)
    p_solve.add_argument("--starts", type=int, default=3, help="multistart count")
    p_solve.add_argument("--tol", type=float, default=None, help="step tolerance")
    p_solve.add_argument("--traj-out", help="write the solution trajectory CSV here")
    p_solve.set_defaults(func=_cmd_solve)

    p_freq = sub.add_parser("freq-matrices", help="print the condensed constraint matrices")
    p_freq.add_argument("problem", nargs="?", help="problem JSON file")
    p_freq.add_argument("--horizon", type=int, default=None)
    p_freq.add_argument("--support", default=None,
                        help='allowed bins per component as JSON, e.g. "[[0,1]]"')
    p_freq.set_defaults(func=_cmd_freq_matrices)

    p_dft = sub.add_parser("dft", help="DFT of control sequences from CSV")
    p_dft.add_argument("--input", required=True, help="CSV, one column per component")
    p_dft.set_defaults(func=_cmd_dft)

    return parser


def run_cli(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        return args.func(args)
    except ParseError as exc:
        _info(f"error: {exc}")
        return 2
    except GeoPMPError as exc:
        _info(f"error: {exc}")
        return 1
    except FileNotFoundError as exc:
        _info(f"error: {exc}")
        return 2


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
