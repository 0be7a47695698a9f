"""Command-line front end.

Verbs: ``solve``, ``sweep``, ``check-potential``, ``oracle`` and ``certify``.
Configuration is a flat UTF-8 ``key = value`` file with dotted keys; every
command validates it before computing anything.

Exit codes: 0 success, 1 validation, 2 numerical failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import certify
from .functionals import estimate_sobolev_constant, talenti_sobolev_constant
from .mp_solver import (
    PathError,
    SolverOptions,
    StagnationError,
    mass_sweep,
    solve_ground_state,
)
from .potentials import PotentialError, PotentialSpec, check_V1, make_potential
from .radial_core import AdmissibilityError, GridError, Params, RadialFunction, RadialGrid, build_grid

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

# residual gate for a successful solve; the Pohozaev gate is solver.tol_poh
EQUATION_GATE = 1e-3


class ConfigError(ValueError):
    """Malformed or inadmissible configuration."""


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1"):
        return True
    if t in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float(text: str) -> float:
    v = float(text)
    if math.isnan(v):
        raise ValueError("nan is not allowed")
    return v


def _int(text: str) -> int:
    return int(text.strip())


def _str(text: str) -> str:
    return text.strip()


def _bracket(text: str) -> tuple[float, float]:
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != 2:
        raise ValueError("expected two comma-separated numbers")
    return (_float(parts[0]), _float(parts[1]))


# key -> (parser, default)
SCHEMA: dict[str, tuple] = {
    "params.N": (_int, 3),
    "params.p": (_float, 2.0),
    "params.s": (_float, 2.0),
    "params.q": (_float, 4.0),
    "params.rho": (_float, 1.0),
    "grid.R_max": (_float, 15.0),
    "grid.n": (_int, 2000),
    "grid.grading": (_str, "uniform"),
    "potential.kind": (_str, "zero"),
    "potential.alpha": (_float, math.inf),
    "potential.amplitude": (_float, 0.0),
    "potential.width": (_float, 1.0),
    "potential.sign": (_int, 1),
    "potential.beta": (_float, 2.0),
    "potential.cutoff": (_float, 1.0),
    "potential.path": (_str, ""),
    "solver.tol_grad": (_float, 1e-9),
    "solver.tol_poh": (_float, 1e-4),
    "solver.max_iter": (_int, 400),
    "solver.seed_width": (_float, 1.0),
    "solver.newton": (_bool, True),
    "oracle.bracket": (_bracket, (1.0, 10.0)),
    "output.directory": (_str, "."),
    "output.emit_profile": (_bool, True),
    "output.emit_report": (_bool, True),
}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return str(value)


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def params(self) -> Params:
        v = self.values
        return Params(v["params.N"], v["params.p"], v["params.s"], v["params.q"], v["params.rho"])

    def grid(self) -> RadialGrid:
        v = self.values
        return build_grid(v["grid.R_max"], v["grid.n"], v["grid.grading"], N=v["params.N"])

    def grid_spec(self) -> dict:
        return {k.split(".", 1)[1]: self.values[k] for k in ("grid.R_max", "grid.n", "grid.grading")}

    def potential_spec(self) -> PotentialSpec:
        v = self.values
        return PotentialSpec(
            kind=v["potential.kind"],
            alpha=v["potential.alpha"],
            amplitude=v["potential.amplitude"],
            width=v["potential.width"],
            sign=v["potential.sign"],
            beta=v["potential.beta"],
            cutoff=v["potential.cutoff"],
            path=v["potential.path"] or None,
        )

    def solver_options(self) -> SolverOptions:
        v = self.values
        return SolverOptions(
            tol_grad=v["solver.tol_grad"],
            tol_poh=v["solver.tol_poh"],
            max_iter=v["solver.max_iter"],
            newton=v["solver.newton"],
        )

    def validate(self) -> None:
        """Check admissibility and well-formedness; raises ``ConfigError``."""
        try:
            self.params
            self.grid()
            self.potential_spec()
            self.solver_options()
        except (AdmissibilityError, GridError, PotentialError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if not self.values["solver.seed_width"] > 0:
            raise ConfigError("solver.seed_width must be positive")
        a, b = self.values["oracle.bracket"]
        if not 0 < a < b:
            raise ConfigError("oracle.bracket needs 0 < low < high")


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    cfg = RunConfig()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (x.strip() for x in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        try:
            cfg.values[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {_format(cfg.values[k])}\n" for k in SCHEMA)


def load_config(path: str | None) -> RunConfig:
    if path is None:
        cfg = RunConfig()
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise _IOFailure(f"cannot read config {path}: {exc}") from exc
        cfg = parse_config(text)
    cfg.validate()
    return cfg


class _IOFailure(Exception):
    pass


# ---------------------------------------------------------------- output


def _ensure_dir(out: Path) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _IOFailure(f"cannot create output directory {out}: {exc}") from exc
    return out


def _write(path: Path, text: str) -> None:
    try:
        certify._atomic_write(path, text)
    except OSError as exc:
        raise _IOFailure(f"cannot write {path}: {exc}") from exc


def format_report(report: certify.SolveReport) -> str:
    lines = []
    for key, value in report.as_items():
        if key == "flags":
            value = ",".join(value)
        lines.append(f"{key} = {_format(value)}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def read_profile(path: str | Path, N: int) -> RadialFunction:
    """Read an ``r,u`` CSV onto the grid formed by its radii."""
    rs, us = [], []
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise _IOFailure(f"cannot read {path}: {exc}") from exc
    with fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or [h.strip() for h in header] != ["r", "u"]:
            raise ConfigError(f"{path}:1: header must be 'r,u'")
        for lineno, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 2 columns")
            try:
                r, u = float(row[0]), float(row[1])
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: non-numeric entry") from None
            if not (math.isfinite(r) and math.isfinite(u)):
                raise ConfigError(f"{path}:{lineno}: non-finite entry")
            if rs and r <= rs[-1]:
                raise ConfigError(f"{path}:{lineno}: r is not strictly increasing")
            rs.append(r)
            us.append(u)
    try:
        grid = RadialGrid(np.array(rs), N)
    except GridError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return RadialFunction(grid, np.array(us))


# --------------------------------------------------------------- commands


def _potential(cfg: RunConfig, grid: RadialGrid, P: Params):
    try:
        return make_potential(cfg.potential_spec(), grid, P)
    except PotentialError as exc:
        raise ConfigError(str(exc)) from exc


def _v1_gate(cfg, V, P, grid, override: bool) -> None:
    if override or V.is_zero:
        return
    S = estimate_sobolev_constant(P.p, V.alpha, grid)
    rep = check_V1(V, P, S)
    if not rep.ok:
        raise ConfigError(
            f"potential fails the norm condition (LHS = {rep.lhs:.6g}, RHS = {rep.rhs:.6g}, "
            f"||V||_alpha = {rep.norm_V_alpha:.6g}, S = {S:.6g}); use --override-v1-check"
        )


def _seed(cfg, grid):
    return RadialFunction(grid, np.exp(-((grid.nodes / cfg["solver.seed_width"]) ** 2)))


def _passes(report: certify.SolveReport, cfg: RunConfig) -> bool:
    return (
        report.converged
        and report.pohozaev_residual <= cfg["solver.tol_poh"]
        and report.equation_residual <= EQUATION_GATE
    )


def cmd_solve(cfg: RunConfig, out: Path, override: bool = False) -> int:
    P = cfg.params
    grid = cfg.grid()
    V = _potential(cfg, grid, P)
    _v1_gate(cfg, V, P, grid, override)
    _ensure_dir(out)
    try:
        u, report = solve_ground_state(P, None if V.is_zero else V, grid, cfg.solver_options(), _seed(cfg, grid))
    except (PathError, StagnationError) as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if cfg["output.emit_profile"]:
        _write(out / "profile.csv", certify.profile_csv(u))
    if cfg["output.emit_report"]:
        _write(out / "report.txt", format_report(report))
    sys.stdout.write(format_report(report))
    return EXIT_OK if _passes(report, cfg) else EXIT_NUMERICAL


SWEEP_HEADER = "rho,c_rho,lambda,rho_s_lambda,pohozaev_residual,equation_residual,converged"


def _threads() -> int:
    raw = os.environ.get("PLAPNORM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"PLAPNORM_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("PLAPNORM_THREADS must be a positive integer")
    return n


def cmd_sweep(cfg: RunConfig, out: Path, rho_list: list[float], override: bool = False) -> int:
    if not rho_list:
        raise ConfigError("rho list is empty")
    if any(b >= a for a, b in zip(rho_list, rho_list[1:])):
        raise ConfigError("rho list must be strictly decreasing")
    P = cfg.params
    grid = cfg.grid()
    V = _potential(cfg, grid, P)
    _v1_gate(cfg, V, P, grid, override)
    _ensure_dir(out)
    rows = mass_sweep(
        P, None if V.is_zero else V, grid, rho_list, cfg.solver_options(), _seed(cfg, grid),
        workers=_threads(),
    )
    lines = [SWEEP_HEADER]
    ok = True
    for r in rows:
        good = r.converged and _passes(r.report, cfg)
        ok &= good
        if not good:
            reason = ",".join(r.report.flags) or "residual gates not met"
            print(f"rho = {_format(r.rho)}: {reason}", file=sys.stderr)
        lines.append(
            ",".join(
                _format(float(x))
                for x in (r.rho, r.c_rho, r.lam, r.rho_s_lambda, r.pohozaev_residual, r.equation_residual)
            )
            + ("," + _format(good))
        )
    _write(out / "sweep.csv", "\n".join(lines) + "\n")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_check_potential(cfg: RunConfig) -> int:
    P = cfg.params
    grid = cfg.grid()
    V = _potential(cfg, grid, P)
    S = estimate_sobolev_constant(P.p, V.alpha, grid)
    rep = check_V1(V, P, S)
    items = [
        ("LHS", rep.lhs),
        ("RHS", rep.rhs),
        ("LHS_proof_power", rep.lhs_proof_power),
        ("norm_V_alpha", rep.norm_V_alpha),
        ("norm_Wtilde", rep.norm_Wtilde),
        ("norm_Vminus_alpha", rep.norm_Vminus_alpha),
        ("S_est", rep.S_est),
        ("below_sobolev", rep.below_sobolev),
        ("pass", rep.ok),
        ("certified", rep.certified),
        ("flags", ",".join(V.flags)),
    ]
    sys.stdout.write("".join(f"{k} = {_format(v)}\n" for k, v in items))
    return EXIT_OK if rep.ok else EXIT_VALIDATION


def cmd_oracle(cfg: RunConfig, out: Path, lam: float | None) -> int:
    if lam is None or not lam > 0:
        raise ConfigError("--lambda must be a positive number")
    P = cfg.params
    grid = cfg.grid()
    _ensure_dir(out)
    try:
        res = certify.shoot_oracle(P, lam, cfg["oracle.bracket"], grid=grid)
    except certify.BracketError as exc:
        raise ConfigError(str(exc)) from exc
    path = out / "oracle.csv"
    try:
        certify.write_golden(path, res, P, cfg.grid_spec())
    except OSError as exc:
        raise _IOFailure(f"cannot write {path}: {exc}") from exc
    sys.stdout.write(f"u0 = {res.u0:.17g}\nmass = {res.mass:.17g}\nlambda = {res.lam:.17g}\n")
    return EXIT_OK


def cmd_certify(cfg: RunConfig, profile: str | None) -> int:
    if not profile:
        raise ConfigError("--profile is required")
    P = cfg.params
    u = read_profile(profile, P.N)
    V = _potential(cfg, u.grid, P)
    report = certify.build_report(u, None if V.is_zero else V, P, S_est=talenti_sobolev_constant(P.N, P.p))
    sys.stdout.write(format_report(report))
    return EXIT_OK


# ------------------------------------------------------------------ main


def _rho_list(text: str | None) -> list[float]:
    if text is None:
        return []
    try:
        return [_float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --rho-list: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plapnorm", description=__doc__.splitlines()[0])
    ap.add_argument("verb", choices=["solve", "sweep", "check-potential", "oracle", "certify"])
    ap.add_argument("--config", help="key = value configuration file")
    ap.add_argument("--out", help="output directory (overrides output.directory)")
    ap.add_argument("--rho-list", help="comma-separated decreasing masses for sweep")
    ap.add_argument("--lambda", dest="lam", type=float, help="multiplier for oracle")
    ap.add_argument("--profile", help="r,u CSV for certify")
    ap.add_argument("--override-v1-check", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = Path(args.out if args.out else cfg["output.directory"])
        if args.verb == "solve":
            return cmd_solve(cfg, out, args.override_v1_check)
        if args.verb == "sweep":
            return cmd_sweep(cfg, out, _rho_list(args.rho_list), args.override_v1_check)
        if args.verb == "check-potential":
            return cmd_check_potential(cfg)
        if args.verb == "oracle":
            return cmd_oracle(cfg, out, args.lam)
        return cmd_certify(cfg, args.profile)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except _IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
