"""Command-line entry point.

Four commands: ``solve`` (single trajectory), ``convergence`` (ladder
study with CSV/JSON/figure artifacts), ``oracle-check`` (brute-force
cross-validation of the core flows), and ``transform-check`` (consistency
of the shifted change-of-variables stepper against the direct solve).

Configuration comes from flags, optionally seeded by a flat key=value
file; flags override file values.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import convergence, fem, oracles, reporting, solver

__all__ = ["RunConfig", "UsageError", "parse_config", "run", "main"]

COMMANDS = ("solve", "convergence", "oracle-check", "transform-check")

_CONFIG_KEYS = {
    "command", "nx", "nx-ladder", "nt", "nt-ladder", "T", "lambda",
    "xi", "zeta", "xi-amplitude", "zeta-amplitude", "coupling", "out",
    "ref-nx", "ref-nt",
}


class UsageError(ValueError):
    """Invalid flag or configuration value; carries the offending key."""


@dataclass
class RunConfig:
    command: str = "solve"
    nx: int = 8
    nx_ladder: list[int] = field(default_factory=list)
    nt: int = 64
    nt_ladder: list[int] = field(default_factory=list)
    horizon: float = 1.0
    lambda_shift: float | None = None
    xi_name: str = "default-xi"
    zeta_name: str = "default-zeta"
    xi_amplitude: float = 1.0
    zeta_amplitude: float = 1.0
    coupling: str = "none"
    out_dir: Path = Path("out")
    ref_nx: int | None = None
    ref_nt: int | None = None

    @property
    def shift(self) -> float:
        if self.lambda_shift is not None:
            return self.lambda_shift
        return 1.0 if self.command == "transform-check" else 0.0


def _parse_ladder(text: str, key: str) -> list[int]:
    try:
        values = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{key}: expected comma-separated integers, got {text!r}") from None
    if not values:
        raise UsageError(f"{key}: empty ladder")
    return sorted(values)


def _read_config_file(path: Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def _build_arg_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dre-lab",
        description="Differential Riccati equation splitting solver and convergence laboratory.",
    )
    p.add_argument("--command", choices=COMMANDS, default=None)
    p.add_argument("--config", type=Path, default=None, help="flat key=value config file")
    p.add_argument("--nx", type=int, default=None)
    p.add_argument("--nx-ladder", type=str, default=None)
    p.add_argument("--nt", type=int, default=None)
    p.add_argument("--nt-ladder", type=str, default=None)
    p.add_argument("--T", dest="horizon", type=float, default=None)
    p.add_argument("--lambda", dest="lambda_shift", type=float, default=None)
    p.add_argument("--xi", type=str, default=None)
    p.add_argument("--zeta", type=str, default=None)
    p.add_argument("--xi-amplitude", type=float, default=None)
    p.add_argument("--zeta-amplitude", type=float, default=None)
    p.add_argument("--coupling", choices=("none", "tau-h2"), default=None)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--ref-nx", type=int, default=None)
    p.add_argument("--ref-nt", type=int, default=None)
    return p


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _validate(cfg: RunConfig) -> RunConfig:
    for key, nx in [("nx", cfg.nx)] + [("nx-ladder", v) for v in cfg.nx_ladder]:
        if nx < 2 or nx % 2 != 0:
            raise UsageError(f"{key}: grid size must be even and >= 2, got {nx}")
    if cfg.nt < 1:
        raise UsageError(f"nt: must be >= 1, got {cfg.nt}")
    for v in cfg.nt_ladder:
        if not _is_power_of_two(v):
            raise UsageError(f"nt-ladder: entries must be powers of two, got {v}")
    if cfg.horizon <= 0:
        raise UsageError(f"T: must be positive, got {cfg.horizon}")
    if cfg.shift < 0:
        raise UsageError(f"lambda: must be nonnegative, got {cfg.shift}")
    if cfg.xi_name not in fem.FIELD_CATALOG:
        raise UsageError(f"xi: unknown field {cfg.xi_name!r}")
    if cfg.zeta_name not in fem.FIELD_CATALOG:
        raise UsageError(f"zeta: unknown field {cfg.zeta_name!r}")
    return cfg


def parse_config(argv=None) -> RunConfig:
    """Build a validated RunConfig from argv, with file values as defaults."""
    args = _build_arg_parser().parse_args(argv)
    cfg = RunConfig()
    if args.config is not None:
        if not args.config.exists():
            raise UsageError(f"config: file not found: {args.config}")
        file_vals = _read_config_file(args.config)
        if "command" in file_vals:
            if file_vals["command"] not in COMMANDS:
                raise UsageError(f"command: unknown command {file_vals['command']!r}")
            cfg.command = file_vals["command"]
        try:
            if "nx" in file_vals:
                cfg.nx = int(file_vals["nx"])
            if "nt" in file_vals:
                cfg.nt = int(file_vals["nt"])
            if "T" in file_vals:
                cfg.horizon = float(file_vals["T"])
            if "lambda" in file_vals:
                cfg.lambda_shift = float(file_vals["lambda"])
            if "xi-amplitude" in file_vals:
                cfg.xi_amplitude = float(file_vals["xi-amplitude"])
            if "zeta-amplitude" in file_vals:
                cfg.zeta_amplitude = float(file_vals["zeta-amplitude"])
            if "ref-nx" in file_vals:
                cfg.ref_nx = int(file_vals["ref-nx"])
            if "ref-nt" in file_vals:
                cfg.ref_nt = int(file_vals["ref-nt"])
        except ValueError as exc:
            raise UsageError(f"config file: {exc}") from None
        if "nx-ladder" in file_vals:
            cfg.nx_ladder = _parse_ladder(file_vals["nx-ladder"], "nx-ladder")
        if "nt-ladder" in file_vals:
            cfg.nt_ladder = _parse_ladder(file_vals["nt-ladder"], "nt-ladder")
        if "xi" in file_vals:
            cfg.xi_name = file_vals["xi"]
        if "zeta" in file_vals:
            cfg.zeta_name = file_vals["zeta"]
        if "coupling" in file_vals:
            if file_vals["coupling"] not in ("none", "tau-h2"):
                raise UsageError(f"coupling: unknown value {file_vals['coupling']!r}")
            cfg.coupling = file_vals["coupling"]
        if "out" in file_vals:
            cfg.out_dir = Path(file_vals["out"])

    if args.command is not None:
        cfg.command = args.command
    if args.nx is not None:
        cfg.nx = args.nx
    if args.nx_ladder is not None:
        cfg.nx_ladder = _parse_ladder(args.nx_ladder, "nx-ladder")
    if args.nt is not None:
        cfg.nt = args.nt
    if args.nt_ladder is not None:
        cfg.nt_ladder = _parse_ladder(args.nt_ladder, "nt-ladder")
    if args.horizon is not None:
        cfg.horizon = args.horizon
    if args.lambda_shift is not None:
        cfg.lambda_shift = args.lambda_shift
    if args.xi is not None:
        cfg.xi_name = args.xi
    if args.zeta is not None:
        cfg.zeta_name = args.zeta
    if args.xi_amplitude is not None:
        cfg.xi_amplitude = args.xi_amplitude
    if args.zeta_amplitude is not None:
        cfg.zeta_amplitude = args.zeta_amplitude
    if args.coupling is not None:
        cfg.coupling = args.coupling
    if args.out is not None:
        cfg.out_dir = args.out
    if args.ref_nx is not None:
        cfg.ref_nx = args.ref_nx
    if args.ref_nt is not None:
        cfg.ref_nt = args.ref_nt
    return _validate(cfg)


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _run_solve(cfg: RunConfig) -> int:
    problem = fem.build_problem(
        cfg.nx,
        xi=cfg.xi_name,
        zeta=cfg.zeta_name,
        lambda_shift=cfg.shift,
        horizon=cfg.horizon,
        xi_amplitude=cfg.xi_amplitude,
        zeta_amplitude=cfg.zeta_amplitude,
    )
    stride = max(1, cfg.nt // 256)
    while cfg.nt % stride != 0:
        stride -= 1
    traj = solver.solve(problem, cfg.nt, stride=stride)
    times = [n * traj.tau for n in traj.steps]
    norms = [
        convergence.operator_norm_L2(traj.kernel_at(n), problem.mass_chol)
        for n in traj.steps
    ]
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["# t,norm"] + [f"{t:.16e},{v:.16e}" for t, v in zip(times, norms)]
    (cfg.out_dir / "norms.csv").write_text("\n".join(lines) + "\n")
    _write_json(
        {
            "command": "solve",
            "nx": cfg.nx,
            "nt": cfg.nt,
            "T": cfg.horizon,
            "lambda": cfg.shift,
            "xi": cfg.xi_name,
            "zeta": cfg.zeta_name,
            "final_norm": norms[-1],
            "sup_norm": max(norms),
        },
        cfg.out_dir / "report.json",
    )
    reporting.render_norm_history(times, norms, cfg.out_dir / "norm_history.png")
    print(f"solve: nx={cfg.nx} nt={cfg.nt} final ||P(T)|| = {norms[-1]:.6e}")
    return 0


def _run_convergence(cfg: RunConfig) -> int:
    nx_ladder = cfg.nx_ladder or [cfg.nx]
    nt_ladder = cfg.nt_ladder or [cfg.nt]
    report = convergence.run_study(
        nx_ladder,
        nt_ladder,
        ref_nx=cfg.ref_nx,
        ref_nt=cfg.ref_nt,
        horizon=cfg.horizon,
        lambda_shift=cfg.shift,
        xi=cfg.xi_name,
        zeta=cfg.zeta_name,
        xi_amplitude=cfg.xi_amplitude,
        zeta_amplitude=cfg.zeta_amplitude,
        coupling=cfg.coupling if cfg.coupling != "none" else None,
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    reporting.write_errors_csv(report, cfg.out_dir / "errors.csv")
    reporting.write_report_json(report, cfg.out_dir / "report.json")
    reporting.write_orders_txt(report, cfg.out_dir / "orders.txt")
    reporting.render_study_figures(report, cfg.out_dir)
    print((cfg.out_dir / "orders.txt").read_text().rstrip())
    return 0


def _run_oracle_check(cfg: RunConfig) -> int:
    rng = np.random.default_rng(2024)
    checks: list[tuple[str, float, float]] = []  # (name, max deviation, tolerance)

    dev = 0.0
    for a, q, s, p0 in [(-1.0, 1.0, 1.0, 0.0), (0.0, 0.5, 2.0, 1.0), (-2.0, 2.0, 0.5, 0.3)]:
        exact = solver.scalar_riccati_closed_form(a, q, s, p0, 1.0)
        approx = oracles.rk4_scalar_riccati(a, q, s, p0, 1.0, steps=100_000)
        dev = max(dev, abs(exact - approx) / max(abs(exact), 1e-30))
    checks.append(("scalar-riccati vs RK4", dev, 1e-8))

    dev = 0.0
    for _ in range(5):
        m = rng.standard_normal((4, 4))
        a = m - 4.0 * np.eye(4)
        b = rng.standard_normal((4, 4))
        q = b @ b.T
        _, x = solver.vanloan_flow(a, q, 0.5)
        x_ref = oracles.simpson_gramian(a, q, 0.5, panels=10_000)
        dev = max(dev, np.linalg.norm(x - x_ref) / np.linalg.norm(x_ref))
    checks.append(("van-loan vs simpson", dev, 1e-10))

    dev = 0.0
    for _ in range(5):
        b = rng.standard_normal((5, 5))
        p0 = b @ b.T
        ell = rng.standard_normal(5)
        got = solver.nonlinear_flow(p0, ell, 0.7)
        ref = oracles.rk4_quadratic_decay(p0, ell, 0.7, steps=10_000)
        dev = max(dev, np.linalg.norm(got - ref) / np.linalg.norm(ref))
    checks.append(("nonlinear-flow vs RK4", dev, 1e-8))

    ok = True
    for name, deviation, tol in checks:
        status = "PASS" if deviation <= tol else "FAIL"
        ok = ok and deviation <= tol
        print(f"{status} {name}: max deviation {deviation:.3e} (tol {tol:.0e})")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(
        {
            "command": "oracle-check",
            "checks": [
                {"name": n, "max_deviation": float(d), "tolerance": t, "pass": bool(d <= t)}
                for n, d, t in checks
            ],
        },
        cfg.out_dir / "report.json",
    )
    return 0 if ok else 1


def _run_transform_check(cfg: RunConfig) -> int:
    lam = cfg.shift
    if lam <= 0:
        raise UsageError("lambda: transform-check requires a positive shift")
    kwargs = dict(
        xi=cfg.xi_name,
        zeta=cfg.zeta_name,
        horizon=cfg.horizon,
        xi_amplitude=cfg.xi_amplitude,
        zeta_amplitude=cfg.zeta_amplitude,
    )
    direct = fem.build_problem(cfg.nx, lambda_shift=0.0, **kwargs)
    shifted = fem.build_problem(cfg.nx, lambda_shift=lam, **kwargs)

    def gap(nt):
        p_direct = solver.solve(direct, nt, stride=nt).final
        p_trans = solver.solve_transformed(shifted, nt, stride=nt).final
        return convergence.operator_norm_L2(p_direct - p_trans, direct.mass_chol)

    g1, g2 = gap(cfg.nt), gap(2 * cfg.nt)
    ratio = g1 / g2 if g2 > 0 else float("inf")
    print(
        f"transform-check: nx={cfg.nx} lambda={lam} nt={cfg.nt}: "
        f"|direct - back-mapped| = {g1:.3e}, halved tau -> {g2:.3e}, ratio {ratio:.3f} (expect ~2)"
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(
        {
            "command": "transform-check",
            "nx": cfg.nx,
            "lambda": lam,
            "nt": cfg.nt,
            "gap": g1,
            "gap_half_tau": g2,
            "ratio": ratio,
        },
        cfg.out_dir / "report.json",
    )
    return 0


def run(cfg: RunConfig) -> int:
    if cfg.command == "solve":
        return _run_solve(cfg)
    if cfg.command == "convergence":
        return _run_convergence(cfg)
    if cfg.command == "oracle-check":
        return _run_oracle_check(cfg)
    if cfg.command == "transform-check":
        return _run_transform_check(cfg)
    raise UsageError(f"command: unknown command {cfg.command!r}")


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
        return run(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
