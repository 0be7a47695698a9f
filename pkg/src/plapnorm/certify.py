"""Independent checks on computed profiles.

Residuals of the Pohozaev identity and of the weak equation, an explicit
Moser-iteration ``L^inf`` certificate, a shooting oracle for the radial ODE
and a tail-mass diagnostic.  The oracle depends only on ``radial_core``.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .functionals import (
    base_norm,
    constraint_normal_values,
    dual_norm_values,
    energy_from_terms,
    energy_gradient_values,
    pohozaev_from_terms,
    talenti_sobolev_constant,
    terms,
    _potential_values,
)
from .radial_core import Params, RadialFunction, RadialGrid, build_grid, sphere_area

REPORT_KEYS = (
    "energy",
    "lambda",
    "pohozaev_residual",
    "equation_residual",
    "linf_bound",
    "max_abs_u",
    "tail_mass_fraction",
    "A",
    "B",
    "C",
    "D",
    "E",
    "iterations",
    "converged",
    "flags",
)


@dataclass
class SolveReport:
    energy: float
    lam: float
    pohozaev_residual: float
    equation_residual: float
    linf_bound: float
    max_abs_u: float
    tail_mass_fraction: float
    A: float
    B: float
    C: float
    D: float
    E: float
    iterations: int
    converged: bool
    flags: list[str] = field(default_factory=list)

    def as_items(self) -> list[tuple[str, object]]:
        """Report entries in the canonical key order."""
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return [(k, d[k]) for k in REPORT_KEYS]


# ------------------------------------------------------------- residuals


def pohozaev_residual(u: RadialFunction, V, P: Params) -> float:
    """``|P_V(u)| / (1 + ||grad u||_p^p)``."""
    t = terms(u, V, P)
    return abs(pohozaev_from_terms(t, P)) / (1.0 + t.A)


def equation_residual(
    u: RadialFunction, lam: float, V, P: Params, forcing: np.ndarray | None = None
) -> float:
    """Hat-tested residual of the stationary equation, over ``1 + ||u||``.

    ``forcing`` is an optional right-hand side added to ``|u|^{q-2}u``.
    """
    if not math.isfinite(lam):
        raise ValueError("lambda must be finite")
    g = u.grid
    Vv = _potential_values(V, g)
    r = energy_gradient_values(g, u.values, Vv, P) + lam * constraint_normal_values(g, u.values, P.s)
    if forcing is not None:
        r = r - g.weights * np.asarray(forcing, dtype=float)
        r[-1] = 0.0
    return dual_norm_values(g, r) / (1.0 + base_norm(u, P))


def tail_mass(u: RadialFunction, fraction_radius: float, s: float = 2.0) -> float:
    """Share of ``||u||_s^s`` carried by ``r > fraction_radius * R_max``.

    The zero profile has no mass and returns 0.
    """
    if not 0.0 < fraction_radius < 1.0:
        raise ValueError("fraction_radius must lie in (0, 1)")
    g = u.grid
    dens = g.weights * np.abs(u.values) ** s
    total = float(dens.sum())
    if total == 0.0:
        return 0.0
    return float(dens[g.nodes > fraction_radius * g.R_max].sum()) / total


# -------------------------------------------------------- Moser certificate


@dataclass(frozen=True)
class MoserCertificate:
    """Explicit ``L^inf`` bound and the ladder it was built from.

    ``ladder_exponents[k-1]`` is ``p*(chi_k + 1)`` and ``ladder_norms`` the
    corresponding norms of ``|u|`` for ``k <= 6``.
    """

    bound: float
    gamma0: float
    chi: tuple[float, ...]
    ladder_exponents: tuple[float, ...]
    ladder_norms: tuple[float, ...]
    log_a: float
    terms_used: int
    S: float
    norm_pstar: float


def moser_gamma0(P: Params) -> float:
    """``p p* / (p* + p - q)``."""
    ps = P.p_star
    return P.p * ps / (ps + P.p - P.q)


def moser_chi(P: Params, n: int) -> list[float]:
    """``chi_k`` with ``1 + chi_k = (p*/gamma0)^k`` for ``k = 1..n``."""
    ratio = P.p_star / moser_gamma0(P)
    return [ratio**k - 1.0 for k in range(1, n + 1)]


def _moser_log_a(p: float, ratio: float, cut: float = 1e-8) -> tuple[float, int]:
    # log of prod_k ((chi_k+1)/(p chi_k+1)^{1/p})^{1/(chi_k+1)} with r=gamma0/p*;
    # the k-th factor is r^k (k log(1/r) - log(p chi_k + 1)/p)
    L = math.log(1.0 / ratio)
    total, k = 0.0, 0
    while True:
        k += 1
        rk = ratio**k
        chi = 1.0 / rk - 1.0
        total += rk * (k * L - math.log(p * chi + 1.0) / p)
        if rk < cut:
            break
    # remaining factors are each below r^j (1 - 1/p) j log(1/r)
    tail = (1 - 1 / p) * L * sum(j * ratio**j for j in range(k + 1, k + 2000))
    return total + tail, k


def moser_bound(
    u: RadialFunction, P: Params, S_est: float | None = None, c_f: float = 1.0
) -> MoserCertificate:
    """Moser-iteration bound on ``max |u|`` from ``||u||_{p*}``.

    ``S_est`` defaults to the exact Aubin-Talenti constant; ``c_f`` is the
    constant in the growth bound ``f(t) <= c_f t^{q-1}``.
    """
    if not c_f > 0:
        raise ValueError("c_f must be positive")
    S = talenti_sobolev_constant(P.N, P.p) if S_est is None else float(S_est)
    g = u.grid
    au = np.abs(u.values)
    ps = P.p_star
    gamma0 = moser_gamma0(P)
    ratio = gamma0 / ps
    chis = moser_chi(P, 6)
    exps = tuple(ps * (c + 1.0) for c in chis)
    top = float(au.max())
    if top == 0.0:
        norms = tuple(0.0 for _ in exps)
        npst = 0.0
    else:
        # scale by the max so that the high ladder exponents do not overflow
        x = au / top
        norms = tuple(top * float(g.weights @ x**e) ** (1.0 / e) for e in exps)
        npst = top * float(g.weights @ x**ps) ** (1.0 / ps)
    log_a, used = _moser_log_a(P.p, ratio)
    if npst == 0.0:
        bound = 0.0
    else:
        e = (P.q - P.p) / (ps - P.q)
        bound = math.exp(log_a) * (S / c_f) ** (-1.0 / (ps - P.q)) * max(npst, npst ** (1.0 + e))
    return MoserCertificate(
        bound=bound,
        gamma0=gamma0,
        chi=tuple(chis),
        ladder_exponents=exps,
        ladder_norms=norms,
        log_a=log_a,
        terms_used=used,
        S=S,
        norm_pstar=npst,
    )


# ---------------------------------------------------------- shooting oracle


class BracketError(ValueError):
    """The initial heights do not straddle the ground state."""


def _spow(x, a):
    return np.sign(x) * np.abs(x) ** a


@dataclass(frozen=True)
class Shot:
    kind: str  # "high": u reaches 0, "low": u' returns to 0 while u > 0
    r_end: float
    sol: object


def shoot(u0: float, P: Params, lam: float, r_max: float = 60.0, dense: bool = False) -> Shot:
    """Integrate the radial ODE from ``u(0) = u0``, ``u'(0) = 0``.

    The state is ``(u, v, m)`` with ``v = r^{N-1}|u'|^{p-2}u'`` and ``m`` the
    accumulated ``L^s`` mass; a power series starts the solution off ``r = 0``.
    """
    N, p, s, q = P.N, P.p, P.s, P.q
    sgn = P.sgn_term
    om = sphere_area(N)
    k = 1.0 / (p - 1)

    def g(x):
        return sgn * _spow(x, p - 1) + lam * _spow(x, s - 1) - _spow(x, q - 1)

    def rhs(r, y):
        x, v, _ = y
        du = _spow(v, k) / r ** ((N - 1) * k)
        return [du, r ** (N - 1) * g(x), om * r ** (N - 1) * abs(x) ** s]

    def hit_zero(r, y):
        return y[0]

    hit_zero.terminal, hit_zero.direction = True, -1

    def turn(r, y):
        return y[1]

    turn.terminal, turn.direction = True, 1

    g0 = g(u0)
    pc = p / (p - 1)
    r0 = 1e-6
    y0 = [
        u0 + np.sign(g0) * abs(g0 / N) ** k * r0**pc / pc,
        g0 * r0**N / N,
        om * u0**s * r0**N / N,
    ]
    sol = solve_ivp(
        rhs,
        (r0, r_max),
        y0,
        method="DOP853",
        rtol=1e-13,
        atol=1e-16 * u0,
        events=[hit_zero, turn],
        dense_output=dense,
    )
    if sol.t_events[0].size:
        kind = "high"
    elif sol.t_events[1].size:
        kind = "low"
    else:
        kind = "none"
    return Shot(kind, float(sol.t[-1]), sol)


@dataclass(frozen=True)
class OracleResult:
    profile: RadialFunction
    mass: float
    u0: float
    lam: float
    bisection_tol: float
    steps: int
    widths: tuple[float, ...]
    r_end: float


def shoot_oracle(
    P: Params,
    lam: float,
    bracket: tuple[float, float] = (1.0, 10.0),
    grid: RadialGrid | None = None,
    rtol: float = 4e-16,
    r_max: float | None = None,
) -> OracleResult:
    """Ground state of the radial ODE by bisection on ``u(0)``.

    ``bracket[0]`` must give a low shot and ``bracket[1]`` a high one.  The
    profile is sampled on ``grid`` and set to zero past the radius where the
    final low shot turns; ``mass`` is its ``L^s`` mass up to that radius.

    Raises
    ------
    BracketError
        If the bracket does not straddle, with both classifications.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if grid is None:
        grid = build_grid(15.0, 2000, N=P.N)
    if r_max is None:
        # decay length of the linearized equation is lam^{-1/p} for s = p
        r_max = max(2.0 * grid.R_max, 60.0 * lam ** (-1.0 / P.p))
    a, b = map(float, bracket)
    ka, kb = shoot(a, P, lam, r_max).kind, shoot(b, P, lam, r_max).kind
    if ka == "none":
        ka = "low"
    if not (ka == "low" and kb == "high"):
        raise BracketError(f"bracket ({a}, {b}) does not straddle: shots are {ka!r} and {kb!r}")
    widths = [b - a]
    steps = 0
    while b - a > rtol * b:
        m = 0.5 * (a + b)
        if m in (a, b):
            break
        kind = shoot(m, P, lam, r_max).kind
        if kind == "high":
            b = m
        else:
            a = m
        widths.append(b - a)
        steps += 1
    final = shoot(a, P, lam, r_max, dense=True)
    r = grid.nodes
    r_end = final.r_end
    inside = (r > 0) & (r < r_end)
    vals = np.zeros_like(r)
    vals[inside] = final.sol.sol(r[inside])[0]
    vals[0] = a
    vals = np.maximum(vals, 0.0)
    mass = float(final.sol.y[2, -1])
    return OracleResult(
        profile=RadialFunction(grid, vals),
        mass=mass,
        u0=a,
        lam=float(lam),
        bisection_tol=rtol,
        steps=steps,
        widths=tuple(widths),
        r_end=r_end,
    )


# ------------------------------------------------------------------ goldens


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def profile_csv(u: RadialFunction) -> str:
    lines = ["r,u"]
    lines += [f"{r:.17g},{v:.17g}" for r, v in zip(u.grid.nodes, u.values)]
    return "\n".join(lines) + "\n"


def write_profile(path: str | Path, u: RadialFunction) -> None:
    _atomic_write(Path(path), profile_csv(u))


def write_golden(path: str | Path, result: OracleResult, P: Params, grid_spec: dict) -> Path:
    """Write the oracle profile CSV and a ``.meta.json`` sidecar next to it."""
    path = Path(path)
    write_profile(path, result.profile)
    meta = {
        "params": {"N": P.N, "p": P.p, "s": P.s, "q": P.q},
        "lambda": result.lam,
        "u0": result.u0,
        "mass": result.mass,
        "bisection_tol": result.bisection_tol,
        "bisection_steps": result.steps,
        "grid": grid_spec,
    }
    side = path.with_name(path.name + ".meta.json")
    _atomic_write(side, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return side


# ------------------------------------------------------------------ report


def build_report(
    u: RadialFunction,
    V,
    P: Params,
    *,
    lam: float | None = None,
    iterations: int = 0,
    converged: bool = True,
    flags: list[str] | None = None,
    S_est: float | None = None,
    tail_radius: float = 0.75,
) -> SolveReport:
    """Assemble a ``SolveReport`` for ``u`` from independent evaluations."""
    flags = list(flags or [])
    t = terms(u, V, P)
    if t.mass == 0.0:
        flags.append("degenerate_zero_profile")
        lam_v = 0.0 if lam is None else float(lam)
    else:
        lam_v = (t.E - t.A - t.B - t.C) / t.mass if lam is None else float(lam)
    cert = moser_bound(u, P, S_est)
    tm = tail_mass(u, tail_radius, P.s)
    if tm > 1e-6:
        flags.append("tail_mass_large_R_max_too_small")
    if np.any(u.values < 0):
        flags.append("sign_changing")
    return SolveReport(
        energy=energy_from_terms(t, P),
        lam=lam_v,
        pohozaev_residual=abs(pohozaev_from_terms(t, P)) / (1.0 + t.A),
        equation_residual=equation_residual(u, lam_v, V, P),
        linf_bound=cert.bound,
        max_abs_u=float(np.max(np.abs(u.values))),
        tail_mass_fraction=tm,
        A=t.A,
        B=t.B,
        C=t.C,
        D=t.D,
        E=t.E,
        iterations=int(iterations),
        converged=bool(converged),
        flags=flags,
    )


__all__ = [
    "BracketError",
    "MoserCertificate",
    "OracleResult",
    "REPORT_KEYS",
    "Shot",
    "SolveReport",
    "build_report",
    "equation_residual",
    "moser_bound",
    "moser_chi",
    "moser_gamma0",
    "pohozaev_residual",
    "profile_csv",
    "shoot",
    "shoot_oracle",
    "tail_mass",
    "write_golden",
    "write_profile",
]
