"""Radial discretization on a truncated ball B(0, R_max) in R^N.

A radial profile u(|x|) is stored by its nodal values on ``0 = r_0 < ... < r_n
= R_max`` with the Dirichlet value ``u(R_max) = 0``.  Integrals of radial
functions over the ball are approximated by the composite trapezoid rule in r
against the surface weight ``omega_{N-1} r^{N-1}``.  Gradient integrals use the
piecewise-linear interpolant: on each cell the slope is constant and its
``|.|^p`` is integrated exactly against ``omega_{N-1} r^{N-1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import PchipInterpolator


class AdmissibilityError(ValueError):
    """Raised when exponents or mass level fall outside the admissible range."""


class GridError(ValueError):
    """Raised for invalid grids or profiles living on different grids."""


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere S^{N-1} in R^N."""
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


def ball_volume(N: int, R: float) -> float:
    return sphere_area(N) * R**N / N


@dataclass(frozen=True)
class Params:
    """Problem data ``(N, p, s, q, rho)``.

    Construction fails with :class:`AdmissibilityError` unless ``N >= 3``,
    ``2 <= p < N``, ``1 < s <= p`` and ``p(N+s)/N < q < Np/(N-p)``.
    """

    N: int
    p: float
    s: float
    q: float
    rho: float = 1.0

    def __post_init__(self) -> None:
        N, p, s, q, rho = self.N, self.p, self.s, self.q, self.rho
        if int(N) != N or N < 3:
            raise AdmissibilityError(f"dimension N={N} must be an integer >= 3")
        if not 2 <= p < N:
            raise AdmissibilityError(f"p={p} must satisfy 2 <= p < N={N}")
        if not 1 < s <= p:
            raise AdmissibilityError(f"s={s} must satisfy 1 < s <= p={p}")
        lower = p * (N + s) / N
        if not q > lower:
            raise AdmissibilityError(
                f"q={q} violates the lower bound q > p(N+s)/N = {lower:.17g}"
            )
        if not q < self.p_star:
            raise AdmissibilityError(
                f"q={q} violates the upper bound q < p* = Np/(N-p) = {self.p_star:.17g}"
            )
        if not (rho > 0 and math.isfinite(rho)):
            raise AdmissibilityError(f"mass level rho={rho} must be positive")

    @property
    def p_star(self) -> float:
        return self.N * self.p / (self.N - self.p)

    @property
    def sgn_term(self) -> int:
        """sgn(p - s), which is 0 when s = p and 1 otherwise."""
        return 0 if self.s == self.p else 1

    def with_rho(self, rho: float) -> "Params":
        return Params(self.N, self.p, self.s, self.q, rho)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Truncated radial mesh together with its quadrature data.

    Attributes
    ----------
    nodes : ndarray
        Strictly increasing radii, ``nodes[0] = 0`` and ``nodes[-1] = R_max``.
    weights : ndarray
        Trapezoid weights so that ``weights @ g`` approximates
        ``int_{B_R} g(|x|) dx``. The origin node, where the trapezoid
        weight vanishes, carries the moment of its hat function instead so
        the discrete equation at ``r = 0`` keeps its zeroth-order terms.
    cell_measure : ndarray
        Exact measure of each spherical shell ``r_k < |x| < r_{k+1}``.
    hat_mass : ndarray
        Exact integral of each nodal hat function; positive at every node.
    """

    nodes: NDArray[np.float64]
    N: int
    weights: NDArray[np.float64] = field(init=False, repr=False)
    cell_measure: NDArray[np.float64] = field(init=False, repr=False)
    h: NDArray[np.float64] = field(init=False, repr=False)
    hat_mass: NDArray[np.float64] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        r = np.asarray(self.nodes, dtype=float)
        if r.ndim != 1 or r.size < 3:
            raise GridError("a grid needs at least 3 nodes")
        if r[0] != 0.0:
            raise GridError("first node must be r = 0")
        h = np.diff(r)
        if not np.all(h > 0):
            raise GridError("nodes must be strictly increasing")
        om = sphere_area(self.N)
        w = np.zeros_like(r)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        w *= om * r ** (self.N - 1)
        cells = om * (r[1:] ** self.N - r[:-1] ** self.N) / self.N
        hat = np.zeros_like(r)
        a, b, N = r[:-1], r[1:], self.N
        # exact int of each hat function against omega r^{N-1}, split by cell
        left = (b ** (N + 1) - a ** (N + 1)) / (N + 1) - a * (b**N - a**N) / N
        hat[1:] += om * left / h
        hat[:-1] += cells - om * left / h
        w[0] = hat[0]
        r.setflags(write=False)
        for name, arr in (
            ("weights", w),
            ("cell_measure", cells),
            ("h", h),
            ("hat_mass", hat),
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "nodes", r)

    @property
    def R_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def size(self) -> int:
        return self.nodes.size

    def same_as(self, other: "RadialGrid") -> bool:
        return self is other or (
            self.N == other.N
            and self.size == other.size
            and np.array_equal(self.nodes, other.nodes)
        )

    def sample(self, fn) -> "RadialFunction":
        """Evaluate ``fn(r)`` at the nodes and impose the Dirichlet value."""
        return RadialFunction(self, np.asarray(fn(self.nodes), dtype=float))


class RadialFunction:
    """Nodal values of a radial profile; the last value is forced to 0.

    Instances are treated as immutable; arithmetic returns new objects.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: RadialGrid, values: ArrayLike, *, strict: bool = False):
        v = np.array(values, dtype=float)
        if v.shape != grid.nodes.shape:
            raise GridError(f"expected {grid.size} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v))[0])
            raise ValueError(f"non-finite profile value at node {bad} (r={grid.nodes[bad]})")
        if strict and v[-1] != 0.0:
            raise ValueError("profile does not vanish at R_max")
        v[-1] = 0.0
        v.setflags(write=False)
        self.grid = grid
        self.values = v

    def _check(self, other: "RadialFunction") -> None:
        if not self.grid.same_as(other.grid):
            raise GridError("profiles live on different grids")

    def __add__(self, other):
        if isinstance(other, RadialFunction):
            self._check(other)
            return RadialFunction(self.grid, self.values + other.values)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, RadialFunction):
            self._check(other)
            return RadialFunction(self.grid, self.values - other.values)
        return NotImplemented

    def __mul__(self, c):
        return RadialFunction(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return RadialFunction(self.grid, -self.values)

    def __abs__(self):
        return RadialFunction(self.grid, np.abs(self.values))

    def __repr__(self) -> str:
        return f"RadialFunction(n={self.grid.size}, R_max={self.grid.R_max}, max|u|={np.max(np.abs(self.values)):.6g})"


def build_grid(R_max: float, n: int, grading: str | tuple = "uniform", N: int = 3) -> RadialGrid:
    """Build a radial grid with ``n`` cells (``n + 1`` nodes).

    ``grading`` is ``"uniform"`` or ``("geometric", ratio)``; a geometric grid
    has cell widths ``h_k = h_0 ratio^k`` and clusters nodes near the origin
    when ``ratio > 1``.
    """
    if not (R_max > 0 and math.isfinite(R_max)):
        raise GridError(f"R_max must be positive, got {R_max}")
    if int(n) != n or n < 16:
        raise GridError(f"n must be an integer >= 16, got {n}")
    n = int(n)
    if isinstance(grading, str):
        kind, ratio = grading, None
        if kind.startswith("geometric"):
            _, _, tail = kind.partition(":")
            kind, ratio = "geometric", float(tail) if tail else None
    else:
        kind, ratio = grading[0], float(grading[1])
    if kind == "uniform":
        nodes = np.linspace(0.0, R_max, n + 1)
    elif kind == "geometric":
        if ratio is None or not ratio > 0:
            raise GridError(f"geometric grading needs a ratio > 0, got {ratio}")
        if ratio == 1.0:
            nodes = np.linspace(0.0, R_max, n + 1)
        else:
            h = ratio ** np.arange(n)
            nodes = np.concatenate(([0.0], np.cumsum(h)))
            nodes *= R_max / nodes[-1]
            nodes[-1] = R_max
    else:
        raise GridError(f"unknown grading {grading!r}")
    return RadialGrid(nodes, int(N))


def integrate(grid: RadialGrid, g: RadialFunction | NDArray) -> float:
    """Quadrature ``sum_i w_i g(r_i)`` of a radial integrand over the ball."""
    if isinstance(g, RadialFunction):
        if not grid.same_as(g.grid):
            raise GridError("integrand lives on a different grid")
        g = g.values
    g = np.asarray(g, dtype=float)
    if g.shape != grid.weights.shape:
        raise GridError("integrand size does not match the grid")
    return float(grid.weights @ g)


def derivative_values(grid: RadialGrid, u: NDArray, even: bool = True) -> NDArray:
    h = grid.h
    du = np.empty_like(u)
    h0, h1 = h[:-1], h[1:]
    # three-point second-order formula on a non-uniform mesh
    du[1:-1] = (
        -h1 / (h0 * (h0 + h1)) * u[:-2]
        + (h1 - h0) / (h0 * h1) * u[1:-1]
        + h0 / (h1 * (h0 + h1)) * u[2:]
    )

    def one_sided(ua, ub, uc, a, b):
        # derivative at the first point from values at offsets 0, a, a+b
        return -(2 * a + b) / (a * (a + b)) * ua + (a + b) / (a * b) * ub - a / (b * (a + b)) * uc

    if even:
        du[0] = 0.0
    else:
        du[0] = one_sided(u[0], u[1], u[2], h[0], h[1])
    du[-1] = -one_sided(u[-1], u[-2], u[-3], h[-1], h[-2])
    return du


def derivative(u: RadialFunction, even: bool = True) -> NDArray:
    """Nodal derivative u'(r_i).

    Central second-order differences inside, one-sided second-order formulas at
    the ends.  With ``even=True`` the profile is read as an even function of r
    and ``u'(0) = 0`` is returned.  The result is a plain array because a
    derivative does not satisfy the Dirichlet condition.
    """
    return derivative_values(u.grid, u.values, even)


def lp_norm(u: RadialFunction, t: float) -> float:
    """``(int |u|^t dx)^(1/t)``; ``t = inf`` gives the nodal maximum."""
    if t == math.inf:
        return float(np.max(np.abs(u.values)))
    if not t >= 1:
        raise ValueError(f"norm exponent must be >= 1, got {t}")
    return integrate(u.grid, np.abs(u.values) ** t) ** (1.0 / t)


BOUNDARY_LIFT_POWER = 8


def dilate_values(grid: RadialGrid, u: NDArray, t: float, N: int, s: float) -> NDArray:
    if t == 1.0:
        return np.array(u, dtype=float)
    # PCHIP slope weights overflow on underflowed tails; the result stays finite
    with np.errstate(over="ignore", invalid="ignore"):
        interp = PchipInterpolator(grid.nodes, u, extrapolate=False)
        v = interp(t * grid.nodes)
    v = np.nan_to_num(v, nan=0.0)
    v *= t ** (N / s)
    if v[-1] != 0.0:
        # smooth lift restores u(R_max) = 0 without a one-cell jump
        v -= v[-1] * (grid.nodes / grid.R_max) ** BOUNDARY_LIFT_POWER
    v[-1] = 0.0
    return v


def rescale(u: RadialFunction, t: float, P: Params) -> RadialFunction:
    """Mass-preserving dilation ``u^t(r) = t^{N/s} u(t r)``.

    Off-node values come from monotone cubic (PCHIP) interpolation and the
    profile is extended by zero beyond R_max.  For ``t < 1`` the dilated
    profile no longer vanishes at R_max; the boundary value ``b`` is removed
    by subtracting ``b (r/R_max)^8``.
    """
    if not t > 0:
        raise ValueError(f"dilation factor must be positive, got {t}")
    return RadialFunction(u.grid, dilate_values(u.grid, u.values, t, P.N, P.s))


def project_sphere(u: RadialFunction, rho: float, s: float) -> RadialFunction:
    """Radial retraction ``(rho / ||u||_s) u`` onto the sphere ``||u||_s = rho``."""
    m = lp_norm(u, s)
    if m == 0.0:
        raise ValueError("cannot project the zero profile onto the mass sphere")
    return RadialFunction(u.grid, u.values * (rho / m))
