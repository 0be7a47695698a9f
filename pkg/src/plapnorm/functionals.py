"""Discrete energy, Pohozaev functional and related constants.

All functionals share one discretization: the gradient term is the exact
``int |v'|^p`` of the piecewise-linear interpolant ``v`` of the nodal values,
and every zeroth-order term uses the quadrature weights of the grid.  Because
each part is homogeneous in ``u``, testing the discrete gradient with ``u``
reproduces the identity ``<J'(u), u> = A + B + C - E`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .radial_core import (
    GridError,
    Params,
    RadialFunction,
    RadialGrid,
    derivative_values,
    sphere_area,
)


@dataclass(frozen=True)
class FunctionalValue:
    """Energy value with its signed parts.

    ``parts`` holds ``gradient = A/p``, ``mass = sgn(p-s) B/p``,
    ``potential = C/p`` and ``nonlinear = -E/q``.
    """

    value: float
    parts: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Terms:
    """The integrals ``A .. E`` entering the energy and Pohozaev functional.

    ``B`` already carries the factor ``sgn(p - s)``; ``Lp`` is the raw
    ``||u||_p^p`` and ``mass`` is ``||u||_s^s``.
    """

    A: float
    B: float
    C: float
    D: float
    E: float
    Lp: float
    mass: float


def _potential_values(V, grid: RadialGrid) -> NDArray | None:
    if V is None:
        return None
    vals = V.on(grid) if hasattr(V, "on") else np.asarray(V, dtype=float)
    if vals.shape != grid.nodes.shape:
        raise GridError("potential values do not match the grid")
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise ValueError(f"potential is not finite at node {bad} (r={grid.nodes[bad]})")
    if not np.any(vals):
        return None
    return vals


def slopes(grid: RadialGrid, u: NDArray) -> NDArray:
    return np.diff(u) / grid.h


def terms_values(grid: RadialGrid, u: NDArray, Vv: NDArray | None, P: Params) -> Terms:
    w = grid.weights
    au = np.abs(u)
    A = float(grid.cell_measure @ np.abs(slopes(grid, u)) ** P.p)
    aup = au**P.p
    Lp = float(w @ aup)
    E = float(w @ au**P.q)
    mass = float(w @ au**P.s)
    if Vv is None:
        C = D = 0.0
    else:
        C = float(w @ (Vv * aup))
        du = derivative_values(grid, u)
        D = float(w @ (Vv * au ** (P.p - 2) * u * du * grid.nodes))
    return Terms(A, P.sgn_term * Lp, C, D, E, Lp, mass)


def terms(u: RadialFunction, V, P: Params) -> Terms:
    return terms_values(u.grid, u.values, _potential_values(V, u.grid), P)


def _check(u: RadialFunction, P: Params) -> None:
    if u.grid.N != P.N:
        raise GridError(f"grid dimension {u.grid.N} differs from N={P.N}")


def energy_J(u: RadialFunction, V, P: Params) -> FunctionalValue:
    """Discrete ``J_V(u) = A/p + sgn(p-s) B/p + C/p - E/q``."""
    _check(u, P)
    t = terms(u, V, P)
    parts = {
        "gradient": t.A / P.p,
        "mass": t.B / P.p,
        "potential": t.C / P.p,
        "nonlinear": -t.E / P.q,
    }
    return FunctionalValue(math.fsum(parts.values()), parts)


def energy_from_terms(t: Terms, P: Params) -> float:
    return (t.A + t.B + t.C) / P.p - t.E / P.q


def pohozaev_from_terms(t: Terms, P: Params) -> float:
    N, p, s, q = P.N, P.p, P.s, P.q
    return (
        (p * (N + s) - s * N) / (s * p) * t.A
        + N * (p - s) / (s * p) * t.Lp
        - N * (q - s) / (s * q) * t.E
        + (N / s) * t.C
        + t.D
    )


def pohozaev_P(u: RadialFunction, V, P: Params) -> float:
    """Derivative at ``t = 1`` of ``J_V`` along the mass-preserving dilation.

    The potential contribution ``int V |u|^{p-2} u (x . grad u)`` is evaluated
    with the nodal derivative, without integrating by parts.
    """
    _check(u, P)
    return pohozaev_from_terms(terms(u, V, P), P)


def energy_gradient_values(grid: RadialGrid, u: NDArray, Vv: NDArray | None, P: Params) -> NDArray:
    """Exact gradient of the discrete energy with respect to the nodal values.

    The last entry (Dirichlet node) is set to zero.
    """
    p, q = P.p, P.q
    D = slopes(grid, u)
    flux = grid.cell_measure * np.abs(D) ** (p - 2) * D / grid.h
    g = np.zeros_like(u)
    g[1:] += flux
    g[:-1] -= flux
    au = np.abs(u)
    coef = float(P.sgn_term) if Vv is None else P.sgn_term + Vv
    g += grid.weights * ((coef * au ** (p - 2) - au ** (q - 2)) * u)
    g[-1] = 0.0
    return g


def constraint_normal_values(grid: RadialGrid, u: NDArray, s: float) -> NDArray:
    """Gradient of ``||u||_s^s / s``, i.e. ``w_i |u_i|^{s-2} u_i``."""
    n = grid.weights * np.abs(u) ** (s - 1) * np.sign(u)
    n[-1] = 0.0
    return n


def hessian_bands(
    grid: RadialGrid,
    u: NDArray,
    p: float,
    zeroth: NDArray | float = 0.0,
    floor: float = 1e-12,
) -> tuple[NDArray, NDArray]:
    """Tridiagonal second variation of ``A/p`` plus a diagonal term.

    Returns ``(off, main)`` where ``off[k]`` couples nodes ``k`` and ``k+1``
    and ``main`` is the diagonal with ``zeroth`` added.  Slopes below
    ``floor`` are lifted to it so that ``p > 2`` stays nondegenerate.
    """
    D = np.abs(slopes(grid, u))
    if p != 2:
        D = np.maximum(D, floor)
    k = grid.cell_measure * (p - 1) * D ** (p - 2) / grid.h**2
    main = np.zeros_like(u, dtype=float)
    main[1:] += k
    main[:-1] += k
    main = main + zeroth
    return -k, main


def power_curvature(grid: RadialGrid, u: NDArray, e: float, floor: float = 1e-12) -> NDArray:
    """Diagonal of the second variation of ``sum_i w_i |u_i|^e / e``."""
    au = np.abs(u)
    if e < 2:
        au = np.maximum(au, floor)
    return grid.weights * (e - 1) * au ** (e - 2)


def lagrange_multiplier(u: RadialFunction, V, P: Params) -> float:
    """Multiplier making ``int |u'|^p + sgn B + int V|u|^p + lambda ||u||_s^s = ||u||_q^q`` exact."""
    _check(u, P)
    t = terms(u, V, P)
    if t.mass == 0.0:
        raise ValueError("zero mass: the multiplier is undefined")
    return (t.E - t.A - t.B - t.C) / t.mass


def base_norm(u: RadialFunction, P: Params) -> float:
    """``||u|| = (||grad u||_p^p + sgn(p-s) ||u||_p^p)^{1/p}``."""
    t = terms(u, None, P)
    return (t.A + t.B) ** (1.0 / P.p)


def gn_theta(P: Params) -> float:
    """Gagliardo-Nirenberg exponent ``pN(q-s) / (q(p(N+s) - sN))``."""
    N, p, s, q = P.N, P.p, P.s, P.q
    return p * N * (q - s) / (q * (p * (N + s) - s * N))


# ---------------------------------------------------------------- constants


def _resolvable_widths(grid: RadialGrid, count: int = 12, tail: float = 8.0, cells: float = 25.0) -> NDArray:
    hmin = float(grid.h[: max(3, grid.size // 50)].max())
    lo, hi = cells * hmin, grid.R_max / tail
    if hi <= lo:
        hi = lo * 1.5
    return np.geomspace(lo, hi, count)


def _gn_families(q: float):
    yield lambda x: np.exp(-(x**2))
    yield lambda x: np.exp(-np.abs(x) ** 1.5)
    for k in (1.0, 2.0 / (q - 2.0) if q > 2 else 1.0, 2.0):
        yield lambda x, k=k: np.cosh(x) ** (-k)
    for m in (2.0, 3.0, 4.0):
        yield lambda x, m=m: np.clip(1.0 - x**2, 0.0, None) ** m


def gn_quotient_values(grid: RadialGrid, u: NDArray, P: Params, theta: float | None = None) -> float:
    if theta is None:
        theta = gn_theta(P)
    w = grid.weights
    au = np.abs(u)
    Lq = float(w @ au**P.q) ** (1 / P.q)
    Ls = float(w @ au**P.s) ** (1 / P.s)
    G = float(grid.cell_measure @ np.abs(slopes(grid, u)) ** P.p) ** (1 / P.p)
    if G == 0.0 or Ls == 0.0:
        return 0.0
    return Lq / (G**theta * Ls ** (1 - theta))


def gn_quotient(u: RadialFunction, P: Params) -> float:
    """``||u||_q / (||grad u||_p^theta ||u||_s^{1-theta})``."""
    return gn_quotient_values(u.grid, u.values, P)


def estimate_gn_constant(P: Params, grid: RadialGrid, safety: float = 1.05) -> float:
    """Empirical Gagliardo-Nirenberg constant.

    Maximizes the GN quotient over Gaussians, stretched exponentials, sech
    powers and compact bumps across a width sweep, then inflates the best
    quotient by ``safety``.  The result is not a certified bound.
    """
    theta = gn_theta(P)
    r = grid.nodes
    best = 0.0
    for fam in _gn_families(P.q):
        for width in _resolvable_widths(grid):
            u = fam(r / width)
            u = u - u[-1]
            best = max(best, gn_quotient_values(grid, u, P, theta))
    return safety * best


def talenti_sobolev_constant(N: int, p: float) -> float:
    """Exact ``S_p = inf ||grad u||_p^p / ||u||_{p*}^p`` on R^N (Aubin-Talenti)."""
    lg = math.lgamma
    K = (
        math.pi ** (-0.5)
        * N ** (-1.0 / p)
        * ((p - 1) / (N - p)) ** (1 - 1.0 / p)
        * math.exp((lg(1 + N / 2) + lg(N) - lg(N / p) - lg(1 + N - N / p)) / N)
    )
    return K ** (-p)


def conjugate_sobolev_exponent(p: float, alpha: float, N: int) -> float:
    """``p alpha / (alpha - 1)``, equal to ``p`` when ``alpha = inf``."""
    if alpha == math.inf:
        return p
    return p * alpha / (alpha - 1)


def estimate_sobolev_constant(p: float, alpha: float, grid: RadialGrid) -> float:
    """Numerical estimate of ``S_{p,alpha}`` from a family search.

    ``alpha = inf`` returns 1 by convention.  ``alpha = N/p`` minimizes the
    Sobolev quotient over truncated Talenti bubbles; otherwise the full
    ``W^{1,p}`` quotient is minimized over Gaussians and bubbles.  A finite
    family bounds the infimum of the discrete quotient from above; the
    discrete quotient itself differs from the continuum one by the
    discretization error, so the estimate may fall slightly below the true
    constant on coarse grids.
    """
    N = grid.N
    if alpha == math.inf:
        return 1.0
    if alpha < N / p * (1 - 1e-14):
        raise ValueError(f"alpha={alpha} is below N/p={N / p}")
    r = grid.nodes
    w, cm = grid.weights, grid.cell_measure
    critical = abs(alpha - N / p) <= 1e-12 * (N / p)
    t = p * N / (N - p) if critical else conjugate_sobolev_exponent(p, alpha, N)
    bubble_exp = -(N - p) / p
    bubble_pow = p / (p - 1)

    def quotient(u):
        u = u - u[-1]
        G = float(cm @ np.abs(np.diff(u) / grid.h) ** p)
        if not critical:
            G += float(w @ np.abs(u) ** p)
        Lt = float(w @ np.abs(u) ** t) ** (p / t)
        return G / Lt

    families = [lambda x: (1.0 + x**bubble_pow) ** bubble_exp]
    if not critical:
        families.append(lambda x: np.exp(-(x**2)))
    best = math.inf
    for fam in families:
        # the truncated 1/r-type bubble tail favours widths of a few cells
        widths = _resolvable_widths(
            grid, count=24, tail=4.0 if critical else 8.0, cells=2.0 if critical else 10.0
        )
        vals = [quotient(fam(r / wd)) for wd in widths]
        k = int(np.argmin(vals))
        # refine around the best width of the coarse sweep
        lo = widths[max(k - 1, 0)]
        hi = widths[min(k + 1, len(widths) - 1)]
        fine = np.geomspace(lo, hi, 17)
        best = min(best, min(vals), min(quotient(fam(r / wd)) for wd in fine))
    return best


def dual_norm_values(grid: RadialGrid, g: NDArray) -> float:
    """Dual norm ``(sum g_i^2 / m_i)^{1/2}`` with hat-function masses ``m_i``.

    ``g_i`` is a residual tested against the i-th hat function; the Dirichlet
    node is excluded.
    """
    m = grid.hat_mass[:-1]
    return float(np.sqrt(np.sum(g[:-1] ** 2 / m)))


__all__ = [
    "FunctionalValue",
    "Terms",
    "base_norm",
    "constraint_normal_values",
    "dual_norm_values",
    "energy_J",
    "energy_from_terms",
    "energy_gradient_values",
    "estimate_gn_constant",
    "estimate_sobolev_constant",
    "gn_quotient",
    "gn_theta",
    "hessian_bands",
    "power_curvature",
    "lagrange_multiplier",
    "pohozaev_P",
    "pohozaev_from_terms",
    "slopes",
    "terms_values",
    "gn_quotient_values",
    "conjugate_sobolev_exponent",
    "sphere_area",
    "talenti_sobolev_constant",
    "terms",
]
