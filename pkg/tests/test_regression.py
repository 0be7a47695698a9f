"""Frozen outputs of the baseline pipelines.

Values were produced once on x86-64 Linux; the tolerances absorb
floating-point differences across platforms and BLAS builds.
"""

import math

import pytest

from conftest import ORACLE_MASS
from plapnorm.functionals import energy_J
from plapnorm.mp_solver import mass_sweep
from plapnorm.radial_core import Params

BASELINE_ENERGY = 14.764752010858047
BASELINE_LAMBDA = 2.4420036126097755
BASELINE_MAX = 6.774983109927665
SWEEP_C = (9.448664908856578, 37.79498940808439, 151.19061733298867)
SWEEP_LAMBDA = (1.0000063991066832, 16.00043383260896, 256.05397670380825)
RTOL = 1e-6


def test_baseline_solve_golden(baseline_solve):
    rep = baseline_solve.report
    assert rep.energy == pytest.approx(BASELINE_ENERGY, rel=RTOL)
    assert rep.lam == pytest.approx(BASELINE_LAMBDA, rel=RTOL)
    assert rep.max_abs_u == pytest.approx(BASELINE_MAX, rel=RTOL)


@pytest.fixture(scope="module")
def sweep_rows(geometric_grid):
    rho0 = math.sqrt(ORACLE_MASS)
    return mass_sweep(Params(3, 2, 2, 4, rho0), None, geometric_grid, [rho0, rho0 / 2, rho0 / 4])


def test_sweep_golden(sweep_rows):
    for row, c, lam in zip(sweep_rows, SWEEP_C, SWEEP_LAMBDA):
        assert row.c_rho == pytest.approx(c, rel=RTOL)
        assert row.lam == pytest.approx(lam, rel=RTOL)


def test_sweep_follows_nls_scaling(sweep_rows, oracle_unit):
    # for N=3, p=s=2, q=4 the ground state at mass rho has lambda = (M/rho^2)^2
    # and energy c_1 (M/rho^2) with c_1 the energy of the lambda = 1 oracle
    c1 = energy_J(oracle_unit.profile, None, Params(3, 2, 2, 4)).value
    for row in sweep_rows:
        factor = ORACLE_MASS / row.rho**2
        assert row.lam == pytest.approx(factor**2, rel=1e-3)
        assert row.c_rho == pytest.approx(c1 * factor, rel=1e-3)
