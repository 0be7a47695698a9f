"""Constrained mountain-pass solver on the mass sphere ``||u||_s = rho``.

The flow works with the fiber maximum ``m(u) = max_t J_V(u^t)`` over the
mass-preserving dilations: every state sits at (a numerical maximizer of) its
own dilation fiber, where ``P_V(u) = 0`` up to the line-search tolerance.
A step moves along the tangent-projected, preconditioned gradient of
``J_V`` and then re-maximizes along the fiber; it is accepted only if the
fiber maximum does not increase.  The flow thus descends the mountain-pass
level while damping the Pohozaev functional.

Near a critical point the flow is slow because the discrete problem is
stiff at the origin, so once the residual is small a Newton iteration on the
bordered system ``J_V'(u) + lam |u|^{s-2}u = 0, ||u||_s = rho`` finishes
the solve.  Newton states are logged with ``phase = "newton"``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import minimize_scalar

from .certify import SolveReport, build_report
from .functionals import (
    constraint_normal_values,
    dual_norm_values,
    energy_from_terms,
    energy_gradient_values,
    estimate_gn_constant,
    estimate_sobolev_constant,
    gn_theta,
    hessian_bands,
    pohozaev_from_terms,
    power_curvature,
    terms_values,
    _potential_values,
)
from .radial_core import Params, RadialFunction, RadialGrid, dilate_values


class GeometryError(ValueError):
    """The mountain-pass geometry hypothesis fails for this potential."""


class PathError(RuntimeError):
    """No negative-energy endpoint along the dilation path."""


class StagnationError(RuntimeError):
    """Energy increases even at the smallest admissible step."""


# ------------------------------------------------------------- geometry


@dataclass(frozen=True)
class MPGeometry:
    k1: float
    k2: float
    t0: float
    f_t0: float
    C_gn: float
    S_est: float

    def f(self, t: float, P: Params, vminus: float = 0.0) -> float:
        theta = gn_theta(P)
        a = 1.0 - vminus / self.S_est
        return a * t**P.p / P.p - self.C_gn**P.q / P.q * P.rho ** ((1 - theta) * P.q) * t ** (theta * P.q)


def _vnorms(V) -> tuple[float, float]:
    if V is None:
        return 0.0, 0.0
    return float(V.norm_Vminus_alpha), float(V.norm_Vplus_alpha)


def compute_geometry(P: Params, V, C_gn: float, S_est: float) -> MPGeometry:
    """Radii ``k1 < k2`` of the mountain-pass geometry.

    ``f(t) = (1 - ||V^-||/S) t^p/p - C^q rho^{(1-theta)q} t^{theta q}/q``
    bounds ``J_V`` from below on ``||u|| = t``; ``t0`` is its maximizer.
    """
    vminus, vplus = _vnorms(V)
    if not vminus < S_est:
        raise GeometryError(f"||V^-||_alpha = {vminus:.6g} is not below S = {S_est:.6g}")
    if not (C_gn > 0 and S_est > 0):
        raise ValueError("C_gn and S_est must be positive")
    p, q, rho = P.p, P.q, P.rho
    theta = gn_theta(P)
    a = 1.0 - vminus / S_est
    b = C_gn**q * rho ** ((1 - theta) * q)
    t0 = (a / (b * theta)) ** (1.0 / (theta * q - p))
    geom = MPGeometry(0.0, t0, t0, 0.0, C_gn, S_est)
    f0 = geom.f(t0, P, vminus)
    k1 = min((p * f0 / (1.0 + vplus / S_est)) ** (1.0 / p), t0) * (1.0 - 1e-6)
    return MPGeometry(k1=k1, k2=t0, t0=t0, f_t0=f0, C_gn=C_gn, S_est=S_est)


# ------------------------------------------------------------- helpers


class _Problem:
    """Discrete energy, gradient and projection for fixed data."""

    def __init__(self, grid: RadialGrid, P: Params, V):
        self.g = grid
        self.P = P
        self.V = V
        self.Vv = _potential_values(V, grid)

    def terms(self, u):
        return terms_values(self.g, u, self.Vv, self.P)

    def J(self, u) -> float:
        return energy_from_terms(self.terms(u), self.P)

    def poh(self, u) -> tuple[float, float]:
        t = self.terms(u)
        return pohozaev_from_terms(t, self.P), t.A

    def grad(self, u):
        return energy_gradient_values(self.g, u, self.Vv, self.P)

    def normal(self, u):
        return constraint_normal_values(self.g, u, self.P.s)

    def mass(self, u) -> float:
        return float(self.g.weights @ np.abs(u) ** self.P.s) ** (1.0 / self.P.s)

    def project(self, u):
        m = self.mass(u)
        if m == 0.0:
            raise ValueError("cannot project the zero profile")
        return u * (self.P.rho / m)

    def dilate(self, u, t):
        return self.project(dilate_values(self.g, u, t, self.P.N, self.P.s))

    def lam(self, u) -> float:
        t = self.terms(u)
        return (t.E - t.A - t.B - t.C) / t.mass

    def residual(self, u, lam):
        return self.grad(u) + lam * self.normal(u)

    def norm(self, u) -> float:
        t = self.terms(u)
        return (t.A + t.B) ** (1.0 / self.P.p)


def _fiber_max(prob: _Problem, u, lo: float = 0.5, hi: float = 2.0, xatol: float = 1e-9):
    """Maximize ``t -> J_V(u^t)`` on ``[lo, hi]`` and return ``(u^t*, t*)``."""
    res = minimize_scalar(
        lambda t: -prob.J(prob.dilate(u, t)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": xatol},
    )
    t = float(res.x)
    if abs(t - 1.0) <= xatol:
        return u, 1.0
    return prob.dilate(u, t), t


def _preconditioner(prob: _Problem, u, shift: float):
    g = prob.g
    off, main = hessian_bands(g, u, prob.P.p, shift * g.weights, floor=1e-8)
    m = u.size - 1
    ab = np.zeros((3, m))
    ab[0, 1:] = off[: m - 1]
    ab[1] = main[:m]
    ab[2, :-1] = off[: m - 1]

    def solve(r):
        x = np.zeros_like(r)
        x[:m] = solve_banded((1, 1), ab, r[:m])
        return x

    return solve


def _tangent_direction(prob: _Problem, u, gr, n, shift):
    """Preconditioned gradient with its component along the normal removed."""
    Minv = _preconditioner(prob, u, shift)
    d = Minv(gr)
    y = Minv(n)
    d = d - (d @ n) / (y @ n) * y
    # a second pass removes the roundoff left by the first projection
    d = d - (d @ n) / (y @ n) * y
    return d


def tangency(prob: _Problem, d, u) -> float:
    """``|<d, n>| / (||d|| ||n||)`` in the quadrature inner product."""
    w = prob.g.weights
    nt = np.abs(u) ** (prob.P.s - 1) * np.sign(u)
    num = abs(float(w @ (d * nt)))
    den = math.sqrt(float(w @ d**2)) * math.sqrt(float(w @ nt**2))
    return 0.0 if den == 0.0 else num / den


# ----------------------------------------------------------------- path


def initial_path(P: Params, V, geom: MPGeometry, seed: RadialFunction, t_max: float = 1e6):
    """Dilation path from ``u_low`` with ``||u_low|| <= k1`` to ``J_V(u_high) < 0``.

    Returns ``(u_low, u_high, t_high)``; ``t_low`` is found by halving and
    ``t_high`` by doubling from ``t = 1``.

    Raises
    ------
    PathError
        If no ``t <= t_max`` gives negative energy.
    """
    if np.any(seed.values < 0):
        raise ValueError("seed must be nonnegative")
    if not np.any(seed.values):
        raise ValueError("seed must be nonzero")
    prob = _Problem(seed.grid, P, V)
    u = prob.project(seed.values)
    t = 1.0
    low = u
    while prob.norm(low) > geom.k1:
        t *= 0.5
        if t < 1e-12:
            raise PathError("could not reach ||u_low|| <= k1")
        low = prob.dilate(u, t)
    th = 1.0
    high = u
    while prob.J(high) >= 0:
        th *= 2.0
        if th > t_max:
            raise PathError(f"J_V stays nonnegative for t <= {t_max:g}")
        high = prob.dilate(u, th)
    return RadialFunction(seed.grid, low), RadialFunction(seed.grid, high), th


def _resolvable(prob: _Problem, u) -> bool:
    # dilations are trusted only while the profile fits the mesh: negligible
    # mass near the truncation radius and enough cells across its core
    g = prob.g
    dens = g.weights * np.abs(u) ** prob.P.s
    total = float(dens.sum())
    if total == 0.0:
        return False
    if float(dens[g.nodes > 0.75 * g.R_max].sum()) > 1e-8 * total:
        return False
    r99 = g.nodes[np.searchsorted(np.cumsum(dens), 0.99 * total)]
    return int(np.count_nonzero(g.nodes <= r99)) >= 40


def path_maximizer(prob: _Problem, u, t_lo: float, t_hi: float, count: int = 97):
    """First global maximizer of ``J_V(u^t)`` over a log grid, then refined."""
    ts = np.geomspace(t_lo, t_hi, count)
    ok = []
    for t in ts:
        v = prob.dilate(u, t)
        if _resolvable(prob, v):
            ok.append((t, prob.J(v)))
    if not ok:
        raise PathError("no resolvable dilation of the seed on this grid")
    k = int(np.argmax([j for _, j in ok]))
    best_t, best = ok[k]
    if len(ok) < 3 or k in (0, len(ok) - 1):
        raise PathError(
            f"the energy along the dilation path peaks at the edge of the resolvable range "
            f"(t = {best_t:.3g}); rho is out of scale for this grid"
        )
    step = (t_hi / t_lo) ** (1.0 / (count - 1))
    res = minimize_scalar(
        lambda s: -prob.J(prob.dilate(u, s)),
        bounds=(best_t / step, best_t * step),
        method="bounded",
        options={"xatol": 1e-10 * best_t},
    )
    t = float(res.x) if -res.fun >= best else best_t
    return prob.dilate(u, t), t


# ----------------------------------------------------------------- flow


@dataclass(frozen=True)
class FlowState:
    u: RadialFunction = field(repr=False)
    tau: float
    energy: float
    pohozaev: float
    constrained_grad_norm: float
    iter: int
    phase: str = "descent"
    mass_error: float = 0.0
    tangency: float = 0.0
    step: float = 0.0


@dataclass(frozen=True)
class SolverOptions:
    """Stopping and step-rule settings.

    ``tol_grad`` bounds the dual norm of ``J_V' + lam n`` relative to
    ``1 + ||n||``; ``tol_poh`` bounds ``|P_V| / (1 + ||grad u||_p^p)``.
    The flow hands over to Newton once the relative residual is below
    ``newton_switch``; ``clamp_every`` is the period of ``u -> |u|``.
    """

    tol_grad: float = 1e-9
    tol_poh: float = 1e-4
    max_iter: int = 400
    eta0: float = 1.0
    eta_min: float = 1e-12
    eta_max: float = 1e3
    newton: bool = True
    newton_switch: float = 5e-2
    newton_max: int = 30
    clamp_every: int = 10
    refresh_every: int = 10

    def __post_init__(self) -> None:
        if not (self.tol_grad > 0 and self.tol_poh > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0 < self.eta_min <= self.eta0 <= self.eta_max:
            raise ValueError("need 0 < eta_min <= eta0 <= eta_max")


def _bordered_newton_step(prob: _Problem, u, lam):
    """Newton step for ``F = J' + lam n = 0``, ``G = (||u||_s^s - rho^s)/s = 0``."""
    g, P = prob.g, prob.P
    F = prob.residual(u, lam)
    n = prob.normal(u)
    G = (float(g.weights @ np.abs(u) ** P.s) - P.rho**P.s) / P.s
    coef = P.sgn_term if prob.Vv is None else P.sgn_term + prob.Vv
    zeroth = coef * power_curvature(g, u, P.p) - power_curvature(g, u, P.q)
    zeroth = zeroth + lam * power_curvature(g, u, P.s, floor=1e-150)
    off, main = hessian_bands(g, u, P.p, zeroth, floor=1e-12)
    m = u.size - 1
    ab = np.zeros((3, m))
    ab[0, 1:] = off[: m - 1]
    ab[1] = main[:m]
    ab[2, :-1] = off[: m - 1]
    rhs = np.stack([-F[:m], n[:m]], axis=1)
    sol = solve_banded((1, 1), ab, rhs)
    x, y = sol[:, 0], sol[:, 1]
    dl = (float(n[:m] @ x) + G) / float(n[:m] @ y)
    du = np.zeros_like(u)
    du[:m] = x - dl * y
    return du, dl


def _stationarity(prob: _Problem, u, lam) -> float:
    r = prob.residual(u, lam)
    return dual_norm_values(prob.g, r) / (1.0 + dual_norm_values(prob.g, prob.normal(u)))


def _rel_residual(prob: _Problem, u, lam) -> float:
    return dual_norm_values(prob.g, prob.residual(u, lam)) / (1.0 + prob.norm(u))


@dataclass
class SolveResult:
    u: RadialFunction
    report: SolveReport
    history: list[FlowState]
    lam: float
    geometry: MPGeometry | None = None


def default_seed(grid: RadialGrid) -> RadialFunction:
    """Unit-width Gaussian."""
    return RadialFunction(grid, np.exp(-grid.nodes**2))


def solve_ground_state(
    P: Params,
    V,
    grid: RadialGrid,
    opts: SolverOptions | None = None,
    seed: RadialFunction | None = None,
    *,
    warm_start: bool = False,
    geometry: MPGeometry | None = None,
    log: list | None = None,
) -> tuple[RadialFunction, SolveReport]:
    """Mountain-pass critical point of ``J_V`` on the mass sphere.

    The flow starts from the maximizer of ``J_V`` along the dilation path of
    the projected seed.  ``warm_start`` marks the seed as a previous
    solution, possibly with roundoff sign errors, and uses its absolute
    value.  ``log``, if given, receives one ``FlowState`` per accepted step.

    Raises
    ------
    StagnationError
        If the fiber maximum increases even at the smallest step.
    """
    res = solve(P, V, grid, opts, seed, warm_start=warm_start, geometry=geometry)
    if log is not None:
        log.extend(res.history)
    return res.u, res.report


def solve(
    P: Params,
    V,
    grid: RadialGrid,
    opts: SolverOptions | None = None,
    seed: RadialFunction | None = None,
    *,
    warm_start: bool = False,
    geometry: MPGeometry | None = None,
) -> SolveResult:
    """Like ``solve_ground_state`` but also returns the step log."""
    opts = opts or SolverOptions()
    prob = _Problem(grid, P, V)
    if seed is None:
        seed = default_seed(grid)
    if not seed.grid.same_as(grid):
        raise ValueError("seed lives on a different grid")
    u0 = np.abs(seed.values) if warm_start else seed.values
    if np.any(u0 < 0):
        raise ValueError("seed must be nonnegative")
    u = prob.project(u0)
    flags: list[str] = []
    u, tau = path_maximizer(prob, u, 1e-2, 1e2)

    history: list[FlowState] = []

    def record(u, phase, it, lam, tan=0.0, step=0.0):
        pz, A = prob.poh(u)
        st = FlowState(
            u=RadialFunction(grid, u),
            tau=tau,
            energy=prob.J(u),
            pohozaev=pz,
            constrained_grad_norm=_stationarity(prob, u, lam),
            iter=it,
            phase=phase,
            mass_error=abs(prob.mass(u) - P.rho) / P.rho,
            tangency=tan,
            step=step,
        )
        history.append(st)
        return st

    lam = prob.lam(u)
    record(u, "start", 0, lam)
    E = prob.J(u)
    eta = opts.eta0
    converged = False
    it = 0
    for k in range(1, opts.max_iter + 1):
        lam = prob.lam(u)
        pz, A = prob.poh(u)
        if _stationarity(prob, u, lam) <= opts.tol_grad and abs(pz) <= opts.tol_poh * (1 + A):
            converged = True
            break
        if opts.newton and _rel_residual(prob, u, lam) <= opts.newton_switch:
            break
        gr = prob.grad(u)
        n = prob.normal(u)
        d = _tangent_direction(prob, u, gr, n, max(lam, 1e-3))
        tan = tangency(prob, d, u)
        slope = -float(gr @ d)
        if not slope < 0:
            break
        accepted = False
        while eta >= opts.eta_min:
            trial = prob.project(u - eta * d)
            trial, t_star = _fiber_max(prob, trial)
            Et = prob.J(trial)
            if Et <= E + 1e-4 * eta * slope:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            raise StagnationError(f"fiber maximum increases at step {eta:.3e} (iteration {k})")
        u, E = trial, Et
        it = k
        tau *= t_star
        if opts.clamp_every and it % opts.clamp_every == 0 and np.any(u < 0):
            au = np.abs(u)
            Ja = prob.J(au)
            assert Ja <= E + 1e-12 * (1 + abs(E)), "absolute value increased the energy"
            u, E = au, Ja
        record(u, "descent", it, prob.lam(u), tan, eta)
        eta = min(eta * 2.0, opts.eta_max)

    if not converged and opts.newton:
        lam = prob.lam(u)
        best = _rel_residual(prob, u, lam)
        for k in range(opts.newton_max):
            pz, A = prob.poh(u)
            if _stationarity(prob, u, lam) <= opts.tol_grad and abs(pz) <= opts.tol_poh * (1 + A):
                converged = True
                break
            du, dl = _bordered_newton_step(prob, u, lam)
            step = 1.0
            while step >= 1.0 / 64:
                trial = prob.project(u + step * du)
                tl = lam + step * dl
                r = _rel_residual(prob, trial, tl)
                if r < best:
                    break
                step *= 0.5
            else:
                flags.append("newton_stalled")
                break
            tan = tangency(prob, du, u)
            u, lam, best = trial, tl, r
            it += 1
            record(u, "newton", it, lam, tan, step)
        if not converged:
            pz, A = prob.poh(u)
            converged = _stationarity(prob, u, lam) <= opts.tol_grad and abs(pz) <= opts.tol_poh * (1 + A)

    if np.any(u < 0) and np.all(u >= -1e-12 * np.max(np.abs(u))):
        # roundoff-level negative values from the final Newton update
        u = np.maximum(u, 0.0)
    if not converged:
        flags.append("not_converged")
    uf = RadialFunction(grid, u)
    report = build_report(uf, V, P, iterations=it, converged=converged, flags=flags)
    return SolveResult(uf, report, history, report.lam, geometry)


# ----------------------------------------------------------------- sweep


@dataclass(frozen=True)
class SweepRow:
    rho: float
    c_rho: float
    lam: float
    rho_s_lambda: float
    pohozaev_residual: float
    equation_residual: float
    converged: bool
    report: SolveReport = field(repr=False)
    u: RadialFunction = field(repr=False)


def _sweep_row(rho, P, V, grid, opts, seed, warm) -> SweepRow:
    Pr = P.with_rho(rho)
    try:
        u, rep = solve_ground_state(Pr, V, grid, opts, seed, warm_start=warm)
    except (StagnationError, PathError, ValueError) as exc:
        return _failed_row(rho, P, exc, grid)
    return SweepRow(
        rho=rho,
        c_rho=rep.energy,
        lam=rep.lam,
        rho_s_lambda=rho**P.s * rep.lam,
        pohozaev_residual=rep.pohozaev_residual,
        equation_residual=rep.equation_residual,
        converged=rep.converged,
        report=rep,
        u=u,
    )


def mass_sweep(P: Params, V, grid: RadialGrid, rho_list, opts: SolverOptions | None = None,
               seed: RadialFunction | None = None, workers: int = 1) -> list[SweepRow]:
    """Solve for each ``rho`` in a strictly decreasing list.

    With ``workers == 1`` each solve after the first is warm-started from the
    previous converged solution, re-projected to the new mass.  With more
    workers every row is cold-started from ``seed`` in a thread pool and the
    rows are collected in input order.  Non-converged entries are flagged
    and the sweep continues.
    """
    rhos = [float(r) for r in rho_list]
    if not rhos:
        raise ValueError("rho_list is empty")
    if any(b >= a for a, b in zip(rhos, rhos[1:])):
        raise ValueError("rho_list must be strictly decreasing")
    if workers < 1:
        raise ValueError("workers must be at least 1")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sweep_row, rho, P, V, grid, opts, seed, False) for rho in rhos]
            return [f.result() for f in futures]
    rows = []
    prev = None
    for rho in rhos:
        row = _sweep_row(rho, P, V, grid, opts, seed if prev is None else prev, prev is not None)
        if math.isfinite(row.c_rho):
            prev = row.u
        rows.append(row)
    return rows


def _failed_row(rho, P, exc, grid) -> SweepRow:
    nan = math.nan
    rep = SolveReport(nan, nan, nan, nan, nan, nan, nan, nan, nan, nan, nan, nan, 0, False,
                      [f"error: {exc}"])
    return SweepRow(rho, nan, nan, nan, nan, nan, False, rep, RadialFunction(grid, np.zeros(grid.size)))


def default_geometry(P: Params, V, grid: RadialGrid) -> MPGeometry:
    """Geometry from the empirical GN constant and the embedding constant of ``V``."""
    alpha = math.inf if V is None else V.alpha
    S = estimate_sobolev_constant(P.p, alpha, grid)
    return compute_geometry(P, V, estimate_gn_constant(P, grid), S)


__all__ = [
    "FlowState",
    "GeometryError",
    "MPGeometry",
    "PathError",
    "SolveResult",
    "SolverOptions",
    "StagnationError",
    "SweepRow",
    "compute_geometry",
    "default_geometry",
    "default_seed",
    "initial_path",
    "mass_sweep",
    "path_maximizer",
    "solve",
    "solve_ground_state",
    "tangency",
]
