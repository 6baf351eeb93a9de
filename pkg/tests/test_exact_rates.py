import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asep_ldp.errors import DomainError
from asep_ldp.exact_rates import (B_q, FractionalOrder, ModelParams, dual_objective,
                                  h_q, h_q_limit_slope, legendre_dual, mp_density,
                                  mp_total_mass, phi_asymptotic_ratio, phi_plus,
                                  subadditivity_deficit, tasep_GV_integral, tasep_J,
                                  y0_threshold)

# frozen from 40-digit mpmath evaluations of the closed forms
H1_Q07 = 0.08348486100883199868
B0_Q07 = 0.08472978603872036137
PHI_025 = 0.08802039174945886573
PHI_030 = 0.11713715424591257382
PHI_020 = 0.06224413545227518128
S_STAR_025 = 2.59321388623844464202
Y0_Q07 = 0.04356076261039998353
J_5 = 0.31122067726137590642
RATIO_1E6 = 0.66666680000005714289
RATIO_1E2 = 0.66800574623517517063

qs = st.floats(0.51, 0.99)


def test_params_derived_fields():
    P = ModelParams(0.7)
    assert P.p == pytest.approx(0.3)
    assert P.tau == pytest.approx(3 / 7)
    assert P.gamma == pytest.approx(0.4)


@pytest.mark.parametrize("q", [0.5, 1.0, 0.2, float("nan")])
def test_params_reject_boundary(q):
    with pytest.raises(DomainError):
        ModelParams(q)


def test_fractional_order_split():
    o = FractionalOrder(2.7)
    assert (o.n, o.alpha) == (3, pytest.approx(0.7))
    o = FractionalOrder(1.0)
    assert (o.n, o.alpha) == (2, 0.0)
    with pytest.raises(DomainError):
        FractionalOrder(0.0)


def test_h_q_values(p07):
    assert h_q(p07, 2) == pytest.approx(0.16, rel=1e-14)
    assert h_q(p07, 1) == pytest.approx(H1_Q07, rel=1e-14)
    assert h_q(p07, 1e-12) < 1e-12


def test_h_q_domain(p07):
    for bad in (0.0, -1.0):
        with pytest.raises(DomainError):
            h_q(p07, bad)
        with pytest.raises(DomainError):
            B_q(p07, bad)


def test_B_q_limit_is_positive(p07):
    assert h_q_limit_slope(p07) == pytest.approx(B0_Q07, rel=1e-14)
    assert B_q(p07, 1e-10) == pytest.approx(B0_Q07, rel=1e-12)
    assert B_q(p07, 2) == pytest.approx(0.08, rel=1e-14)


@given(qs, st.floats(1e-6, 50))
def test_B_q_halves(q, s):
    P = ModelParams(q)
    a, b = B_q(P, s), B_q(P, 2 * s)
    # B_q(s) - B_q(2s) ~ B0 x^2, x = s |ln tau| / 4; below float resolution
    # at the small end only non-increase is observable
    x = s * abs(P.log_tau) / 4
    if x * x > 1e-14:
        assert a > b
    else:
        assert a >= b


@pytest.mark.parametrize("q", [0.55, 0.7, 0.9])
def test_B_q_monotone_on_log_grid(q):
    import mpmath as mp
    P = ModelParams(q)
    grid = np.logspace(-6, 2, 1000)
    vals = np.array([B_q(P, s) for s in grid])
    d = np.diff(vals)
    assert np.all(d <= 0)
    # strict wherever the exact gap is resolvable in double precision
    assert np.all(d[np.abs(d) == 0] == 0)
    resolvable = (grid[1:] * abs(P.log_tau) / 4) ** 2 > 1e-13
    assert np.all(d[resolvable] < 0)
    # and strictly decreasing everywhere at 50 digits
    with mp.workdps(50):
        qq = mp.mpf(q)
        tau = (1 - qq) / qq
        ex = [(2 * qq - 1) * (1 - tau ** (mp.mpf(s) / 2)) / (1 + tau ** (mp.mpf(s) / 2)) / mp.mpf(s)
              for s in grid]
        assert all(ex[i + 1] < ex[i] for i in range(len(ex) - 1))


@given(qs, st.floats(1e-3, 200))
def test_h_q_range(q, s):
    P = ModelParams(q)
    v = h_q(P, s)
    assert 0 < v <= P.gamma
    assert h_q(P, s * 1.5) > v or v == P.gamma


def test_h_q_saturates(p07):
    assert h_q(p07, 200) == pytest.approx(p07.gamma, rel=1e-14)


@given(qs, st.floats(1e-3, 20), st.floats(1e-3, 20))
def test_subadditivity_matches_product_form(q, x, y):
    P = ModelParams(q)
    gap = h_q(P, x) + h_q(P, y) - h_q(P, x + y)
    assert gap > 0
    assert abs(gap - subadditivity_deficit(P, x, y)) < 1e-12


def test_phi_plus_values():
    assert phi_plus(0.25) == pytest.approx(PHI_025, rel=1e-14)
    assert phi_plus(0.3) == pytest.approx(PHI_030, rel=1e-14)
    assert phi_plus(0.2) == pytest.approx(PHI_020, rel=1e-14)
    assert phi_plus(1 - 1e-15) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("y", [0.0, 1.0, -0.1, 1.5])
def test_phi_plus_domain(y):
    with pytest.raises(DomainError):
        phi_plus(y)


def test_phi_plus_branch_continuity():
    # series branch below 1/4, closed form above
    lo, hi = phi_plus(0.25 - 1e-12), phi_plus(0.25)
    assert abs(hi - lo) < 1e-11


@given(st.floats(1e-9, 1 - 1e-9))
def test_phi_plus_positive(y):
    assert phi_plus(y) > 0


def test_legendre_dual_example(p07):
    r = legendre_dual(p07, 0.25)
    assert r.s_star == pytest.approx(S_STAR_025, rel=1e-13)
    assert r.dual_value == pytest.approx(PHI_025, abs=1e-12)
    g = dual_objective(p07, 0.25, r.s_star)
    assert dual_objective(p07, 0.25, r.s_star + 0.1) < g
    assert dual_objective(p07, 0.25, r.s_star - 0.1) < g


@pytest.mark.parametrize("q", [0.6, 0.7, 0.85])
def test_duality_grid(q):
    P = ModelParams(q)
    for y in np.linspace(0.01, 0.99, 50):
        r = legendre_dual(P, float(y))
        assert abs(r.dual_value - phi_plus(float(y))) < 1e-10
        assert abs(r.s_numeric - r.s_star) < 1e-6


def test_asymptotic_ratio_values():
    assert phi_asymptotic_ratio(1e-6) == pytest.approx(RATIO_1E6, rel=1e-14)
    assert phi_asymptotic_ratio(1e-2) == pytest.approx(RATIO_1E2, rel=1e-14)
    assert phi_asymptotic_ratio(0.25) == pytest.approx(0.70416313399567, rel=1e-12)
    # the ratio approaches 2/3 from above: 2/3 + (2/15) y + O(y^2)
    assert abs(phi_asymptotic_ratio(1e-6) - 2 / 3) < 1e-3
    ys = np.logspace(-10, -0.5, 50)
    r = np.array([phi_asymptotic_ratio(float(y)) for y in ys])
    assert np.all(np.diff(r) > 0) and np.all(r > 2 / 3)


def test_asymptotic_ratio_underflow_warning():
    with pytest.warns(RuntimeWarning):
        phi_asymptotic_ratio(1e-13)


def test_y0_threshold():
    assert y0_threshold(0.5) == 0.0
    assert y0_threshold(0.7) == pytest.approx(Y0_Q07, rel=1e-14)
    assert y0_threshold(1 - 1e-14) == pytest.approx(1.0, abs=1e-6)


def test_tasep_J_values():
    assert tasep_J(4) == 0.0
    assert tasep_J(5) == pytest.approx(J_5, rel=1e-14)
    with pytest.raises(DomainError):
        tasep_J(3.9)
    t = np.linspace(4, 30, 200)
    assert np.all(np.diff([tasep_J(x) for x in t]) > 0)


@pytest.mark.parametrize("y", np.round(np.arange(0.1, 0.91, 0.1), 10))
def test_lpp_rate_identity(y):
    assert abs((1 - y) / 4 * tasep_J(4 / (1 - y)) - phi_plus(y)) < 1e-10


@pytest.mark.parametrize("t", [4.5, 5, 6, 8, 12])
def test_gv_integral(t):
    assert abs(tasep_GV_integral(t, 1e-10) - tasep_J(t)) < 1e-10


def test_gv_integral_trivial_and_domain():
    assert tasep_GV_integral(4.0) == 0.0
    with pytest.raises(DomainError):
        tasep_GV_integral(3.0)


def test_mp_density():
    assert mp_density(2.0) == pytest.approx(1 / (2 * math.pi), rel=1e-15)
    assert mp_density(4.0) == 0.0
    assert mp_density(-1.0) == 0.0 and mp_density(5.0) == 0.0
    assert abs(mp_total_mass() - 1) < 1e-8
