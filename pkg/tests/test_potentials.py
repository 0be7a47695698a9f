import math

import numpy as np
import pytest

from plapnorm.functionals import estimate_sobolev_constant
from plapnorm.potentials import (
    PotentialError,
    PotentialSpec,
    check_V1,
    make_potential,
    read_table,
    wtilde_exponent,
    zero_potential,
)
from plapnorm.radial_core import Params

P0 = Params(3, 2, 2, 4)


def bump(amplitude, alpha=math.inf, sign=1, width=1.0):
    return PotentialSpec("gaussian_bump", alpha=alpha, amplitude=amplitude, width=width, sign=sign)


def test_zero_potential_passes_with_rhs_one_half(grid):
    V = zero_potential(grid, P0)
    rep = check_V1(V, P0, 1.0)
    assert V.is_zero
    assert rep.lhs == 0.0
    # min(s (N/q - (N-p)/p), Nq - p(N+s)) = min(2 (3/4 - 1/2), 12 - 10)
    assert rep.rhs == 0.5
    assert rep.ok and rep.certified


def test_gaussian_bump_norms(grid):
    V = make_potential(bump(1.0, alpha=2.0), grid, P0)
    # ||e^{-r^2}||_2 = (pi/2)^{3/4}
    assert V.norm_V_alpha == pytest.approx((math.pi / 2) ** 0.75, rel=1e-5)
    assert V.norm_Vminus_alpha == 0.0
    assert V.norm_Vplus_alpha == pytest.approx(V.norm_V_alpha)
    assert V.vanishes_at_infinity


def test_negative_bump_splits_into_negative_part(grid):
    V = make_potential(bump(0.5, sign=-1), grid, P0)
    assert V.norm_V_alpha == pytest.approx(0.5)
    assert V.norm_Vminus_alpha == pytest.approx(0.5)
    assert V.norm_Vplus_alpha == 0.0


def test_sup_norm_wtilde(grid):
    # max_r r e^{-r^2} = e^{-1/2} / sqrt(2)
    V = make_potential(bump(1.0), grid, P0)
    assert V.norm_Wtilde == pytest.approx(math.exp(-0.5) / math.sqrt(2), rel=1e-5)


def test_alpha_below_threshold_rejected(grid):
    with pytest.raises(PotentialError, match="below N/p"):
        make_potential(bump(1.0, alpha=1.0), grid, P0)


def test_spec_validation():
    with pytest.raises(PotentialError):
        PotentialSpec("yukawa")
    with pytest.raises(PotentialError):
        PotentialSpec("gaussian_bump", sign=2)
    with pytest.raises(PotentialError):
        PotentialSpec("tabulated")


def test_power_tail_truncation_flags(grid):
    V = make_potential(PotentialSpec("power_tail", alpha=2.0, amplitude=1.0, beta=1.0), grid, P0)
    assert "V_not_integrable_masked_by_truncation" in V.flags
    ok = make_potential(PotentialSpec("power_tail", alpha=2.0, amplitude=1.0, beta=4.0), grid, P0)
    assert ok.flags == ()


def test_tabulated_roundtrip(tmp_path, grid):
    path = tmp_path / "v.csv"
    r = np.linspace(0, 5, 51)
    path.write_text("r,value\n" + "".join(f"{a},{math.exp(-a)}\n" for a in r))
    V = make_potential(PotentialSpec("tabulated", path=str(path)), grid, P0)
    inside = grid.nodes <= 5
    assert np.allclose(V.values[inside], np.exp(-grid.nodes[inside]), rtol=5e-3)
    assert np.all(V.values[grid.nodes > 5] == 0)


@pytest.mark.parametrize(
    "body, line",
    [
        ("r,value\n0,1\n1,x\n", 3),
        ("r,value\n0,1\n1,2\n0.5,3\n", 4),
        ("r,value\n0,1,2\n", 2),
    ],
)
def test_read_table_reports_line(tmp_path, body, line):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(PotentialError, match=f":{line}:"):
        read_table(path)


def test_read_table_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n0,1\n1,2\n")
    with pytest.raises(PotentialError, match="header"):
        read_table(path)


def test_v1_fails_monotonically_in_amplitude(grid):
    amps = np.linspace(0.0, 0.5, 26)
    verdicts = [check_V1(make_potential(bump(a), grid, P0), P0, 1.0).ok for a in amps]
    assert verdicts[0] and not verdicts[-1]
    first_fail = verdicts.index(False)
    assert not any(verdicts[first_fail:])


def test_v1_lhs_is_linear_in_amplitude(grid):
    lhs = [check_V1(make_potential(bump(a), grid, P0), P0, 1.0).lhs for a in (0.1, 0.2, 0.4)]
    assert lhs[1] == pytest.approx(2 * lhs[0], rel=1e-12)
    assert lhs[2] == pytest.approx(4 * lhs[0], rel=1e-12)


def test_v1_finite_alpha_is_not_certified(grid):
    V = make_potential(bump(0.01, alpha=3.0), grid, P0)
    S = estimate_sobolev_constant(2.0, 3.0, grid)
    rep = check_V1(V, P0, S)
    assert not rep.certified
    assert rep.lhs_proof_power > 0


def test_wtilde_exponent():
    assert wtilde_exponent(math.inf, 2.0) == math.inf
    assert wtilde_exponent(3.0, 2.0) == 6.0
