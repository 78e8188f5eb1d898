"""Command line front end: ``solve``, ``verify`` and ``sweep`` subcommands.

Exit codes: 0 converged and all mandatory checks pass, 2 non-convergence,
3 verification failure, 64 usage or config error, 66 missing or corrupt
input state.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import fieldio
from . import grid as g_
from . import maglaw as ml
from .config import _KEYS, ConfigError, RunConfig, parse_config_file
from .energies import saddle_objective
from .inner import NonConvergenceError
from .outer import OuterNonConvergenceError
from .reporting import (parse_report, render_history_figure,
                        render_state_figure, render_sweep_figure,
                        write_run_report, write_sweep_csv, write_verify_report)
from .saddle import (CheckResult, SaddleState, bubble_census,
                     check_bottom_distance, check_energy_minimality,
                     check_linear_duality, check_nontrivial_potential,
                     check_norm_bound, free_surface_residual,
                     interface_potential_jump, probe_saddle, solve_saddle)

EXIT_OK = 0
EXIT_NONCONVERGED = 2
EXIT_CHECK_FAILED = 3
EXIT_USAGE = 64
EXIT_MISSING_INPUT = 66


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="ferrosaddle",
                     description="Saddle-point solver for the ferrofluid "
                                 "free-boundary energy on a cylinder")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("solve", "run the saddle iteration and export the state"),
                            ("verify", "re-check a previously written state"),
                            ("sweep", "run a Cartesian parameter sweep")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the run config")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--deterministic", action="store_true",
                       help="force bit-reproducible outputs")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--threads", type=int, default=None,
                       help="worker count for sweeps")
        if name == "verify":
            p.add_argument("--state", default=None,
                           help="state directory (default: the config output dir)")
        if name == "sweep":
            p.add_argument("--param", action="append", default=[],
                           metavar="KEY=V1,V2,...",
                           help="parameter values to sweep (repeatable)")
    return parser


def _load_config(args) -> RunConfig:
    cfg = parse_config_file(args.config)
    updates = {}
    if args.out is not None:
        updates["output.dir"] = args.out
    if args.deterministic:
        updates["run.deterministic"] = True
    if args.seed is not None:
        updates["run.seed"] = args.seed
    if args.threads is not None:
        updates["run.threads"] = args.threads
    cfg = cfg.replace(**updates) if updates else cfg
    cfg.validate()
    return cfg


def _resolved_constants(cfg: RunConfig) -> dict:
    law = cfg.law()
    params = cfg.params()
    return {"mu_drive": params.mu_drive, "p0": params.p0,
            "growth_constant": ml.growth_constant(law)}


def _mandatory_checks(spec, law, params, opts, state: SaddleState) -> list[CheckResult]:
    checks = [check_norm_bound(spec, params, state.u),
              check_bottom_distance(spec, law, params, state.chi)]
    slack_tol = 10.0 * (opts.inner_tol + opts.outer_tol)
    worst = min((h["upper"] - h["lower"] + slack_tol * (1.0 + abs(h["upper"]))
                 for h in state.history), default=0.0)
    checks.append(CheckResult("weak_duality", worst, 0.0, worst >= 0.0,
                              note="min over sweeps of upper-lower plus solver slack"))
    return checks


def _write_state_files(outdir: str, spec, state: SaddleState, formats: list[str]) -> None:
    fields = {"u": state.u, "rho": state.rho, "chi": state.chi}
    origin = (0.0,) * (spec.dim - 1) + (-1.0,)
    for name, values in fields.items():
        if "csv" in formats:
            fieldio.write_field_csv(os.path.join(outdir, f"{name}.csv"), values)
        if "grid" in formats:
            fieldio.write_field_grid(os.path.join(outdir, f"{name}.grid"), values,
                                     spec.spacings, origin)
    try:
        eta = g_.graph_from_indicator(spec, state.chi)
        fieldio.write_field_csv(os.path.join(outdir, "interface.csv"),
                                eta.reshape(eta.shape + (1,)) if eta.ndim == 1 else eta)
    except g_.NotAGraphError:
        pass


def _run_solve(cfg: RunConfig) -> tuple[int, SaddleState | None, list[CheckResult]]:
    spec = cfg.domain_spec()
    law = cfg.law()
    params = cfg.params()
    opts = cfg.saddle_options()
    deterministic = cfg["run.deterministic"]
    outdir = cfg["output.dir"]
    os.makedirs(outdir, exist_ok=True)

    t0 = time.perf_counter()
    try:
        state = solve_saddle(spec, law, params, opts)
    except (NonConvergenceError, OuterNonConvergenceError) as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED, None, []
    wallclock = time.perf_counter() - t0

    checks = _mandatory_checks(spec, law, params, opts, state)
    formats = cfg["output.formats"]
    _write_state_files(outdir, spec, state, formats)
    write_run_report(os.path.join(outdir, "report.txt"), cfg, state, checks,
                     _resolved_constants(cfg), deterministic, wallclock)
    if "png" in formats:
        render_state_figure(spec, state, os.path.join(outdir, "state.png"))
        render_history_figure(state, os.path.join(outdir, "history.png"))

    if not state.converged:
        return EXIT_NONCONVERGED, state, checks
    if not all(c.passed for c in checks):
        return EXIT_CHECK_FAILED, state, checks
    return EXIT_OK, state, checks


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    code, state, _ = _run_solve(cfg)
    if state is not None:
        print(f"converged={state.converged} sweeps={state.sweeps} "
              f"gap={state.gap:.3e} out={cfg['output.dir']}")
    return code


def _read_state(cfg: RunConfig, state_dir: str):
    spec = cfg.domain_spec()
    report_path = os.path.join(state_dir, "report.txt")
    if not os.path.exists(report_path):
        raise FileNotFoundError(report_path)
    report = parse_report(report_path)
    u = fieldio.read_field_csv(os.path.join(state_dir, "u.csv"))
    rho = fieldio.read_field_csv(os.path.join(state_dir, "rho.csv"))
    chi = fieldio.read_field_csv(os.path.join(state_dir, "chi.csv"))
    if u.shape != spec.node_shape or chi.shape != spec.cell_shape \
            or rho.shape != spec.cell_shape:
        raise fieldio.FieldFormatError("field shapes do not match the config domain")
    g_.validate_potential(spec, u)
    g_.validate_density(spec, rho)
    if not g_.is_binary(chi):
        raise fieldio.FieldFormatError("chi field is not binary")
    gap = float(report.get("run.gap", "nan"))
    multiplier = float(report.get("run.multiplier", "0.0"))
    return u, rho, chi, gap, multiplier


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    state_dir = args.state or cfg["output.dir"]
    spec = cfg.domain_spec()
    law = cfg.law()
    params = cfg.params()
    try:
        u, rho, chi, gap, multiplier = _read_state(cfg, state_dir)
    except (FileNotFoundError, OSError, fieldio.FieldFormatError, ValueError) as exc:
        print(f"missing or corrupt state in {state_dir}: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT

    seed = cfg["run.seed"]
    n_probes = cfg["verify.n_probes"]
    j00 = saddle_objective(spec, law, params, u, chi)
    probe_tol = max(cfg["verify.tol"],
                    2.0 * max(gap, 0.0) + 10.0 * cfg["inner.tol"] * (1.0 + abs(j00)))

    checks: list[CheckResult] = []
    checks.append(check_norm_bound(spec, params, u))
    checks.append(check_bottom_distance(spec, law, params, chi))
    checks.extend(probe_saddle(spec, law, params, u, chi, n_probes=n_probes,
                               tol=probe_tol, seed=seed).checks)
    checks.append(check_nontrivial_potential(spec, law, params, chi))
    checks.append(bubble_census(spec, chi))
    if law.kind == "linear":
        dual_tol = max(1e-8, 2.0 * max(gap, 0.0))
        checks.extend(check_linear_duality(spec, params, law.mu_const, chi,
                                           tol=dual_tol, inner_tol=cfg["inner.tol"],
                                           n_probes=n_probes, seed=seed).checks)
        checks.extend(check_energy_minimality(spec, params, law.mu_const, u, chi,
                                              tol=probe_tol, n_probes=n_probes,
                                              seed=seed).checks)
    try:
        eta = g_.graph_from_indicator(spec, chi)
        _, res_norm = free_surface_residual(spec, law, params, u, eta,
                                            pressure_shift=multiplier)
        checks.append(CheckResult("free_surface_residual", res_norm, 0.0, True,
                                  note="diagnostic, multiplier-corrected"))
        _, jump = interface_potential_jump(spec, u, eta)
        checks.append(CheckResult("interface_potential_jump", jump, 0.0, True,
                                  note="diagnostic, O(h) expected"))
    except g_.NotAGraphError as exc:
        checks.append(CheckResult("free_surface_residual", float("nan"), 0.0, True,
                                  note=f"skipped: {exc}"))

    write_verify_report(os.path.join(state_dir, "verify_report.txt"), cfg, checks)
    failed = [c.name for c in checks if not c.passed]
    if failed:
        print("verification failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"verification passed ({len(checks)} checks)")
    return EXIT_OK


def _parse_sweep_params(entries: list[str]) -> list[tuple[str, list]]:
    if not entries:
        raise _UsageError("sweep requires at least one --param KEY=V1,V2,...")
    out = []
    for entry in entries:
        key, sep, values = entry.partition("=")
        key = key.strip()
        if not sep or key not in _KEYS:
            raise _UsageError(f"bad sweep parameter {entry!r}")
        parser, _ = _KEYS[key]
        vals = [v.strip() for v in values.split(",") if v.strip()]
        if not vals:
            raise _UsageError(f"empty value list in {entry!r}")
        try:
            out.append((key, [parser(v) for v in vals]))
        except ValueError as exc:
            raise _UsageError(f"bad value in {entry!r}: {exc}")
    return out


def _sweep_worker(payload) -> dict:
    values, run_idx, varied = payload
    cfg = RunConfig(values)
    row = {"run": run_idx}
    for key, _ in varied:
        row[key] = cfg[key]
    try:
        code, state, checks = _run_solve(cfg)
    except Exception as exc:  # isolate worker failures into the aggregate
        print(f"run {run_idx} failed: {exc}", file=sys.stderr)
        row.update({"converged": False, "exit_code": EXIT_NONCONVERGED,
                    "lower": float("nan"), "upper": float("nan"), "gap": float("nan"),
                    "u_norm": float("nan"), "norm_bound": float("nan"),
                    "bottom_distance": float("nan"), "bottom_bound": float("nan")})
        return row
    by_name = {c.name: c for c in checks}
    norm = by_name.get("norm_bound")
    bottom = by_name.get("bottom_distance")
    row.update({
        "converged": bool(state is not None and state.converged),
        "exit_code": code,
        "lower": state.lower if state else float("nan"),
        "upper": state.upper if state else float("nan"),
        "gap": state.gap if state else float("nan"),
        "u_norm": norm.measured if norm else float("nan"),
        "norm_bound": norm.bound if norm else float("nan"),
        "bottom_distance": bottom.measured if bottom else float("nan"),
        "bottom_bound": bottom.bound if bottom else float("nan"),
    })
    return row


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    varied = _parse_sweep_params(args.param)
    base_dir = cfg["output.dir"]
    os.makedirs(base_dir, exist_ok=True)

    combos = list(itertools.product(*(vals for _, vals in varied)))
    payloads = []
    for idx, combo in enumerate(combos):
        updates = {key: val for (key, _), val in zip(varied, combo)}
        tag = "_".join(f"{key.split('.')[-1]}{val:g}" if isinstance(val, float)
                       else f"{key.split('.')[-1]}{val}"
                       for key, val in updates.items())
        updates["output.dir"] = os.path.join(base_dir, f"run{idx:03d}_{tag}")
        payloads.append((cfg.replace(**updates).values, idx, varied))

    threads = cfg["run.threads"]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_sweep_worker, payloads))
    else:
        rows = [_sweep_worker(p) for p in payloads]
    rows.sort(key=lambda r: r["run"])

    varied_keys = [key for key, _ in varied]
    write_sweep_csv(os.path.join(base_dir, "sweep.csv"), rows, varied_keys)
    if "png" in cfg["output.formats"]:
        render_sweep_figure(rows, varied_keys, os.path.join(base_dir, "sweep.png"))
    n_failed = sum(1 for r in rows if r["exit_code"] != EXIT_OK)
    print(f"sweep finished: {len(rows)} runs, {n_failed} failed")
    return EXIT_NONCONVERGED if n_failed else EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "sweep":
            return cmd_sweep(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
