"""Strictly convex subproblem ``min E_f(u) = ||u||^p/p + lam ||u||_s^s/s - <f, u>``.

Its minimizer realizes the inverse of the monotone operator
``u -> -Delta_p u + sgn(p-s)|u|^{p-2}u + lam |u|^{s-2}u`` on the grid.  The
descent direction is a Newton step on the tridiagonal second variation,
followed by an Armijo backtracking line search on ``E_f``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import solve_banded

from .functionals import dual_norm_values, hessian_bands, power_curvature, slopes
from .radial_core import GridError, Params, RadialFunction, RadialGrid


# |u|^{s-1} only drops below a tolerance once |u| is far below its square,
# so curvature regularization must act at a much smaller scale
CURVATURE_FLOOR = 1e-150


class DualSolveError(RuntimeError):
    """Iteration cap reached; carries the last iterate and its gradient norm."""

    def __init__(self, message: str, last: RadialFunction, grad_norm: float):
        super().__init__(message)
        self.last = last
        self.grad_norm = grad_norm


@dataclass(frozen=True, eq=False)
class DualDatum:
    """Discrete functional acting by ``<f, u> = sum_i w_i f_i u_i``."""

    grid: RadialGrid
    values: NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.nodes.shape:
            raise GridError(f"datum has shape {v.shape}, grid has {self.grid.nodes.shape}")
        bad = np.flatnonzero(~np.isfinite(v))
        if bad.size:
            raise ValueError(f"datum is not finite at r={self.grid.nodes[bad[0]]}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __neg__(self) -> "DualDatum":
        return DualDatum(self.grid, -self.values)

    def __add__(self, other: "DualDatum") -> "DualDatum":
        if not self.grid.same_as(other.grid):
            raise GridError("data live on different grids")
        return DualDatum(self.grid, self.values + other.values)

    def __mul__(self, c: float) -> "DualDatum":
        return DualDatum(self.grid, float(c) * self.values)

    __rmul__ = __mul__

    def pairing(self, u: NDArray) -> float:
        return float(self.grid.weights @ (self.values * u))

    def norm(self) -> float:
        """Hat-mass dual norm of ``f`` tested against the nodal basis."""
        return dual_norm_values(self.grid, self.grid.weights * self.values)

    def lebesgue_norm(self, t: float) -> float:
        return float(self.grid.weights @ np.abs(self.values) ** t) ** (1.0 / t)


def _energy_parts(grid: RadialGrid, u: NDArray, f: NDArray, lam: float, P: Params) -> tuple:
    w = grid.weights
    au = np.abs(u)
    A = float(grid.cell_measure @ np.abs(slopes(grid, u)) ** P.p)
    B = P.sgn_term * float(w @ au**P.p)
    return (A / P.p, B / P.p, lam * float(w @ au**P.s) / P.s, -float(w @ (f * u)))


def _energy(grid: RadialGrid, u: NDArray, f: NDArray, lam: float, P: Params) -> float:
    return math.fsum(_energy_parts(grid, u, f, lam, P))


def operator_values(grid: RadialGrid, u: NDArray, lam: float, P: Params) -> NDArray:
    """Nodal image of ``u`` under the discrete monotone operator (weak form)."""
    p, s = P.p, P.s
    D = slopes(grid, u)
    flux = grid.cell_measure * np.abs(D) ** (p - 2) * D / grid.h
    g = np.zeros_like(u, dtype=float)
    g[1:] += flux
    g[:-1] -= flux
    au = np.abs(u)
    g += grid.weights * (P.sgn_term * au ** (p - 2) * u + lam * au ** (s - 1) * np.sign(u))
    g[-1] = 0.0
    return g


def dual_gradient_values(grid: RadialGrid, u: NDArray, f: NDArray, lam: float, P: Params) -> NDArray:
    """Exact gradient of the discrete ``E_f`` with respect to nodal values."""
    g = operator_values(grid, u, lam, P) - grid.weights * f
    g[-1] = 0.0
    return g


def dual_energy(u: RadialFunction, f: DualDatum, lam: float, P: Params) -> float:
    """Discrete ``E_f(u)``."""
    if not u.grid.same_as(f.grid):
        raise GridError("u and f live on different grids")
    return _energy(u.grid, u.values, f.values, lam, P)


def datum_from_profile(u: RadialFunction, lam: float, P: Params) -> DualDatum:
    """Manufactured datum whose discrete minimizer is ``u``."""
    g = operator_values(u.grid, u.values, lam, P)
    return DualDatum(u.grid, g / u.grid.weights)


def _newton_direction(grid, u, g, lam, P, rel, majorize=False):
    su = float(np.max(np.abs(u)))
    sd = float(np.max(np.abs(slopes(grid, u))))
    fu = max(rel * su, CURVATURE_FLOOR)
    fd = max(rel * sd, CURVATURE_FLOOR)
    if majorize and P.s < 2:
        # |v|^s/s lies below its quadratic model with curvature |u|^{s-2}
        # when s < 2; that step never crosses zero, where the exact Newton
        # step on |u|^{s-1} sign(u) cycles between u and -u
        zeroth = lam * grid.weights * np.maximum(np.abs(u), fu) ** (P.s - 2)
    else:
        zeroth = lam * power_curvature(grid, u, P.s, fu)
    if P.sgn_term:
        zeroth = zeroth + P.sgn_term * power_curvature(grid, u, P.p, fu)
    off, main = hessian_bands(grid, u, P.p, zeroth, fd)
    m = u.size - 1
    ab = np.zeros((3, m))
    ab[0, 1:] = off[: m - 1]
    ab[1] = main[:m]
    ab[2, :-1] = off[: m - 1]
    d = np.zeros_like(u)
    d[:m] = solve_banded((1, 1), ab, -g[:m])
    return d


def _line_search(grid, u, d, g, E, fv, lam, P, min_eta, gnorm):
    slope = float(g @ d)
    if not slope < 0:
        return None
    # when the energy cannot resolve the predicted decrease, the step must
    # cut the gradient norm instead; plain Armijo would accept roundoff
    noise = 64 * np.finfo(float).eps * sum(abs(x) for x in _energy_parts(grid, u, fv, lam, P))
    flat = -slope <= noise
    eta = 1.0
    while eta >= min_eta:
        trial = u + eta * d
        with np.errstate(over="ignore", invalid="ignore"):
            Et = _energy(grid, trial, fv, lam, P)
            if flat:
                if Et <= E + noise:
                    gt = dual_norm_values(grid, dual_gradient_values(grid, trial, fv, lam, P))
                    if gt <= 0.9 * gnorm:
                        return trial, Et
            elif Et <= E + 1e-4 * eta * slope:
                return trial, Et
        eta *= 0.5
    return None


# (relative curvature floor, majorized) pairs tried in order; the first is
# the plain Newton step
_FLOOR_LADDER = ((0.0, False), (0.0, True), (1e-8, False), (1e-4, False), (1e-2, False), (1.0, False))


def solve_dual(
    f: DualDatum,
    lam: float,
    P: Params,
    tol: float = 1e-10,
    max_iter: int = 1000,
    history: list | None = None,
) -> RadialFunction:
    """Minimize the discrete ``E_f``.

    Stops when the hat-mass dual norm of the gradient is at most
    ``tol * max(1, ||f||)``.  Each step tries the Newton direction, then a
    majorized variant for ``s < 2``, then Newton with increasing curvature
    floors, and finally falls back to the mass-scaled gradient.
    Once the predicted decrease is below the roundoff of ``E_f``, a step is
    accepted only if it cuts the gradient norm by a fixed factor without
    raising the energy beyond roundoff.  ``history``, if given, receives the energy of every
    accepted iterate; in that regime it may rise by roundoff.

    Raises
    ------
    DualSolveError
        When ``max_iter`` steps do not reach the tolerance.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    grid = f.grid
    fv = f.values
    u = np.zeros_like(fv)
    scale = max(1.0, f.norm())
    E = 0.0
    if history is not None:
        history.append(E)
    gnorm = math.inf
    for _ in range(max_iter):
        g = dual_gradient_values(grid, u, fv, lam, P)
        gnorm = dual_norm_values(grid, g)
        if gnorm <= tol * scale:
            return RadialFunction(grid, u)
        step = None
        for rel, majorize in _FLOOR_LADDER:
            d = _newton_direction(grid, u, g, lam, P, rel, majorize)
            step = _line_search(grid, u, d, g, E, fv, lam, P, 2.0**-20, gnorm)
            if step is not None:
                break
        if step is None:
            d = -g / grid.hat_mass
            d[-1] = 0.0
            step = _line_search(grid, u, d, g, E, fv, lam, P, 1e-30, gnorm)
        if step is None:
            # energy roundoff floor reached without meeting the tolerance
            break
        u, E = step
        if history is not None:
            history.append(E)
    raise DualSolveError(
        f"no convergence: gradient norm {gnorm:.3e} > {tol * scale:.3e}",
        RadialFunction(grid, u),
        gnorm,
    )


def a_priori_constant(lam: float, P: Params) -> float:
    """Explicit constant ``C`` in ``||u||^p + lam||u||_s^s <= C(F^{p'} + F^{s'})``.

    ``F = ||f||_{s'}`` bounds the pairing ``<f, u> <= F ||u||_s``; two Young
    inequalities with ``eps^p/p <= 1/2`` and ``eps^s/s <= lam/2`` absorb the
    right side into the left.
    """
    p, s = P.p, P.s
    pc, sc = p / (p - 1), s / (s - 1)
    eps = min((p / 2) ** (1 / p), (s * lam / 2) ** (1 / s))
    return 2.0 * max(1.0 / (pc * eps**pc), 1.0 / (sc * eps**sc))


def a_priori_sides(u: RadialFunction, f: DualDatum, lam: float, P: Params) -> tuple[float, float]:
    """Both sides of the a-priori bound for a computed solution."""
    w = u.grid.weights
    au = np.abs(u.values)
    A = float(u.grid.cell_measure @ np.abs(slopes(u.grid, u.values)) ** P.p)
    B = P.sgn_term * float(w @ au**P.p)
    lhs = A + B + lam * float(w @ au**P.s)
    sc = P.s / (P.s - 1)
    F = f.lebesgue_norm(sc)
    rhs = a_priori_constant(lam, P) * (F ** (P.p / (P.p - 1)) + F**sc)
    return lhs, rhs


__all__ = [
    "DualDatum",
    "DualSolveError",
    "a_priori_constant",
    "a_priori_sides",
    "datum_from_profile",
    "dual_energy",
    "dual_gradient_values",
    "operator_values",
    "solve_dual",
]
