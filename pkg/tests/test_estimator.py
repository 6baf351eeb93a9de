import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

from asep_ldp.errors import DomainError, InconclusiveError
from asep_ldp.estimator import (McEstimate, bridge_lpp_size, bridge_lpp_tail,
                                convention_discriminator, empirical_rate,
                                estimate_lyapunov, estimate_tail, estimate_tau_laplace,
                                joint_z, lpp_rate_reference, lpp_tail,
                                lyapunov_from_samples, probability_estimate, tail_event,
                                tail_horizon, tail_reference, tasep_tail)
from asep_ldp.exact_rates import ModelParams, h_q, phi_plus, tasep_J
from asep_ldp.fredholm import build_nystrom, fredholm_det
from asep_ldp.kernel import ContourSpec
from asep_ldp.qfunctions import F_q
from asep_ldp.simulator import H0Convention, asep_samples

from oracles import lpp_upper_tail


def test_mc_estimate_z_score():
    e = McEstimate(1.0, 0.5, 10, 0)
    assert e.z_score(0.0) == 2.0
    assert McEstimate(1.0, 0.0, 10, 0).z_score(1.0) == 0.0
    assert McEstimate(1.0, 0.0, 10, 0).z_score(0.0) == math.inf


def test_tau_laplace_time_zero(p07):
    e = estimate_tau_laplace(p07, 0.8, 0.0, 100, seed=1)
    assert e.mean == float(F_q(p07, 0.8)) and e.stderr == 0.0


def test_tau_laplace_small_zeta(p07):
    e = estimate_tau_laplace(p07, 1e-12, 1.0, 1000, seed=1)
    assert 1 - 1e-9 < e.mean <= 1


def test_tau_laplace_minimum_samples(p07):
    with pytest.raises(DomainError):
        estimate_tau_laplace(p07, 1.0, 1.0, 99, seed=1)


def test_tau_laplace_matches_determinant(p07):
    e = estimate_tau_laplace(p07, 1.0, 1.0, 200_000, seed=12)
    det = fredholm_det(build_nystrom(p07, 0, 1.0, 1.0, ContourSpec(delta=0.5))).real
    assert 0 < e.mean <= 1
    assert abs(e.mean - det) <= 3 * e.stderr + 1e-6


def test_lyapunov_zero_order_limit(p07):
    rep = estimate_lyapunov(p07, 1e-9, [1.0, 2.0, 4.0], 2000, seed=3)
    assert all(abs(e.mean) < 1e-8 for e in rep.empirical)


def test_lyapunov_report_fields(p07):
    rep = estimate_lyapunov(p07, 1.0, [2.0, 4.0, 8.0], 20_000, seed=4)
    assert rep.exact == -h_q(p07, 1.0)
    assert all(e.mean <= 0 and e.stderr > 0 for e in rep.empirical)
    assert rep.fit["shape"] == "slope*t + c*ln(t) + d"
    assert rep.extrapolated == rep.fit["slope"]


def test_lyapunov_degenerate_samples(p07):
    with pytest.raises(DomainError):
        lyapunov_from_samples(p07, 1.0, [1.0], [np.zeros(10, dtype=int)], 0, 10)
    with pytest.raises(DomainError):
        estimate_lyapunov(p07, 1.0, [2.0, 1.0], 100, seed=0)


def test_lyapunov_log_moment_prefactor(p07):
    # t * empirical = -t h_q(1) - ln(t)/2 + O(1): the residual settles as t grows
    assert -40 * h_q(p07, 1.0) == pytest.approx(-3.339, abs=1e-3)
    T = [10.0, 20.0, 40.0]
    rep = estimate_lyapunov(p07, 1.0, T, 50_000, seed=5)
    resid = [t * e.mean + t * h_q(p07, 1.0) + 0.5 * math.log(t) for t, e in zip(T, rep.empirical)]
    steps = np.diff(resid)
    assert np.all(steps > 0) and steps[1] < steps[0]
    assert abs(steps[1]) < 0.1


def test_tail_time_change_pinned(p07):
    assert p07.gamma == pytest.approx(2 * p07.q - 1)
    assert tail_horizon(p07, 10.0) == pytest.approx(10.0 / p07.gamma)
    est = estimate_tail(p07, 0.2, 10.0, 5000, seed=6)
    h = asep_samples(p07.q, [10.0 / p07.gamma], 5000, 6).h0()
    assert est.mean == tail_event(h, 10.0, 0.2).mean()


def test_tail_trivial_regimes(p07):
    assert estimate_tail(p07, 1.0, 10.0, 100, seed=0).mean == 0.0
    # the mean current sits above t/4 at this scale, so only nondegeneracy holds
    e = estimate_tail(p07, 1e-6, 10.0, 5000, seed=0)
    assert 0.01 < e.mean < 0.99


def test_tail_rates_nested(p07):
    t = 20.0
    h = asep_samples(p07.q, [t / p07.gamma], 50_000, seed=7).h0()
    probs = [tail_event(h, t, y).mean() for y in (0.05, 0.15, 0.3, 0.5)]
    assert all(a >= b for a, b in zip(probs, probs[1:]))
    rates = [-math.log(p) / t for p in probs if p > 0]
    assert all(a <= b for a, b in zip(rates, rates[1:]))


def test_zero_hit_reports_bound():
    with pytest.warns(RuntimeWarning):
        e = probability_estimate(np.zeros(1000, dtype=bool), seed=0)
    assert e.mean == 0 and e.upper_bound == pytest.approx(1 - 0.05 ** (1 / 1000))
    assert empirical_rate(e, 10.0) == math.inf


def test_probability_estimate_binomial_stderr():
    hits = np.array([True] * 30 + [False] * 70)
    e = probability_estimate(hits, seed=0)
    assert e.mean == 0.3 and e.stderr == pytest.approx(math.sqrt(0.3 * 0.7 / 100))


def test_discriminator_picks_unique_convention(p07):
    picks = []
    for seed in (101, 202):
        conv, table = convention_discriminator(p07, 2.0, 200_000, seed)
        picks.append(conv)
        assert len(table) == 6
    assert picks[0] == picks[1] == H0Convention.GEQ_ZERO


def test_discriminator_tie_is_inconclusive(p07):
    s = asep_samples(p07.q, [0.5, 1.0, 2.0], 20_000, seed=9)
    tied = replace(s, h0_gt=s.h0_geq.copy())
    with pytest.raises(InconclusiveError) as info:
        convention_discriminator(p07, 2.0, 20_000, 9, samples=tied)
    assert info.value.table


def test_discriminator_domain(p07):
    with pytest.raises(DomainError):
        convention_discriminator(p07, 5.0, 100, 0)
    with pytest.raises(DomainError):
        convention_discriminator(p07, 0.25, 100, 0)


def test_lue_oracle_single_cell():
    for s in (0.5, 2.0, 7.0):
        assert lpp_upper_tail(1, s) == pytest.approx(math.exp(-s), rel=1e-10)


def test_lpp_tail_against_exact_oracle():
    N, z = 5, 5.0
    e = lpp_tail(N, z, 200_000, seed=10)
    exact = lpp_upper_tail(N, N * z)
    assert abs(e.mean - exact) < 4 * e.stderr


def test_lpp_tail_shape():
    with pytest.raises(DomainError):
        lpp_tail(10, 3.9, 100, 0)
    at4 = lpp_tail(10, 4.0, 20_000, seed=11).mean
    assert 0.01 < at4 < 0.99
    a = lpp_tail(10, 5.0, 20_000, seed=11).mean
    with pytest.warns(RuntimeWarning):
        b = lpp_tail(10, 5.5, 20_000, seed=11)
    assert b.mean < a and b.upper_bound < a
    assert lpp_rate_reference(5.0) == tasep_J(5.0)
    assert tail_reference(0.3) == phi_plus(0.3)


def test_bridge_size():
    assert bridge_lpp_size(40.0, 0.2) == 9
    assert bridge_lpp_size(40.0, 0.4) == 7


def test_bridge_identity_small_t():
    # TASEP current tail and LPP tail are the same event at any t
    t, y = 12.0, 0.3
    a = tasep_tail(y, t, 100_000, seed=12)
    b = bridge_lpp_tail(y, t, 100_000, seed=13)
    assert abs(joint_z(a, b)) < 4


def test_bridge_lpp_against_exact_oracle():
    t, y = 12.0, 0.3
    e = bridge_lpp_tail(y, t, 100_000, seed=14)
    exact = lpp_upper_tail(bridge_lpp_size(t, y), t)
    assert abs(e.mean - exact) < 4 * e.stderr


def test_joint_z():
    a = McEstimate(0.3, 0.03, 10, 0)
    b = McEstimate(0.26, 0.04, 10, 0)
    assert joint_z(a, b) == pytest.approx(0.8)
