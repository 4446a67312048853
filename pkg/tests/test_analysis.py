"""Closed forms and Monte-Carlo cross-checks for the capacity/latency model."""

import math
from fractions import Fraction

import pytest

from sdag.analysis import (
    AdversaryMajority,
    UnstableQueue,
    catchup_probability,
    infection_chain_mc,
    infection_q1,
    nakamoto_discounted_depth,
    queue_length,
    rates_for_share,
    secure_latency_mc,
    tag_sequence_mc,
    theta,
    type1_fraction,
    w1,
    w1_of_theta,
    w2_bound,
    z_success_prob,
)
from sdag.curves import InstantCurve, QuadraticCurve, StepCurve


def test_theta_form_and_limits():
    c, mu, t_bar = 0.01, 1.2, 5.0 / 3.0
    a = (1 - math.exp(-mu * t_bar)) * mu * c * t_bar
    assert theta(c, mu, t_bar) == pytest.approx(a / (1 + a), abs=1e-15)
    assert theta(0.0, mu, t_bar) == 0.0
    assert theta(c, 0.0, t_bar) == 0.0
    with pytest.raises(ValueError):
        theta(-1, mu, t_bar)


def test_queue_and_w1_little_law():
    lam, n, mu, c = 1000.0, 1000, 1.2, 0.01
    th = theta(c, mu, 5.0 / 3.0)
    q = queue_length(lam, n, mu, c, th)
    assert w1(lam, n, mu, c, th) == pytest.approx(q / lam, rel=1e-12)


def test_unstable_queue_raises():
    with pytest.raises(UnstableQueue):
        queue_length(1200.0, 1000, 1.2, 0.01, 0.2)
    with pytest.raises(UnstableQueue):
        w1(1300.0, 1000, 1.2, 0.01, 0.0)


def test_w1_of_theta_matches_w1():
    # the trade-off form and the direct form agree when theta comes from c
    c, mu, t_bar, n = 0.01, 1.2, 5.0 / 3.0, 1000
    lam = 1000.0
    th = theta(c, mu, t_bar)
    rho = lam / (n * mu)
    assert w1_of_theta(th, rho, t_bar, mu) == pytest.approx(
        w1(lam, n, mu, c, th), rel=1e-9
    )


def test_infection_q1_exact_and_bound():
    res = infection_q1(1000, Fraction(1, 12000))
    assert float(res.exact) <= res.bound
    # n = 1: only the geometric absorption wait remains
    assert infection_q1(1, Fraction(1, 4)).exact == 4
    with pytest.raises(ValueError):
        infection_q1(0, Fraction(1, 2))
    with pytest.raises(ValueError):
        infection_q1(10, Fraction(2))


def test_w2_scaling():
    r = w2_bound(1000, Fraction(1, 12000), 1.2)
    assert r.exact <= r.bound
    assert r.exact == pytest.approx(float(infection_q1(1000, Fraction(1, 12000)).exact) / 1200.0)


def test_infection_chain_mc_matches_exact():
    n, p = 30, 0.05
    exact = float(infection_q1(n, Fraction(p)).exact)
    mc = infection_chain_mc(n, p, paths=20_000, seed=3)
    assert abs(mc.mean - exact) <= 3 * mc.stderr


def test_type1_fraction_known_points():
    curve = QuadraticCurve(2.0)
    assert type1_fraction(0.1, 2.0, curve) == pytest.approx(0.928, abs=1e-3)
    # instant delivery: every milestone is type 1
    assert type1_fraction(0.1, 2.0, InstantCurve(2.0)) == pytest.approx(1.0)
    # step delivery at t0: fraction = e^-r t0 / (e^-r t0 + 1 - e^-r t0)
    r, t0 = 0.1, 2.0
    frac = type1_fraction(r, t0, StepCurve(t0))
    assert frac == pytest.approx(math.exp(-r * t0), abs=1e-9)


def test_z_success_bounds():
    curve = QuadraticCurve(2.0)
    z = z_success_prob(0.1, 2.0, curve)
    assert math.exp(-0.2) < z < 1.0


def test_tag_sequence_mc_agrees_with_closed_form():
    curve = QuadraticCurve(2.0)
    expect = type1_fraction(0.1, 2.0, curve)
    mc = tag_sequence_mc(0.1, 2.0, curve, tags=200_000, seed=1)
    assert abs(mc.mean - expect) <= 3 * mc.stderr


def test_rates_for_share_conventions():
    h, a = rates_for_share(0.1, 0.1)
    assert h == pytest.approx(0.09) and a == pytest.approx(0.01)
    h, a = rates_for_share(0.1, 0.1, honest_fixed=True)
    assert h == pytest.approx(0.1) and a == pytest.approx(0.1 / 9)
    with pytest.raises(ValueError):
        rates_for_share(1.0, 0.1)


def test_secure_latency_mc_reproducible_and_decaying():
    curve = QuadraticCurve(2.0)
    honest, adv = rates_for_share(0.10, 0.1)
    pts1 = secure_latency_mc(honest, adv, 2.0, curve, [20.0, 60.0], paths=40_000, seed=5)
    pts2 = secure_latency_mc(honest, adv, 2.0, curve, [20.0, 60.0], paths=40_000, seed=5)
    assert [(p.failures, p.horizon) for p in pts1] == [
        (p.failures, p.horizon) for p in pts2
    ]
    assert pts1[0].frequency > pts1[1].frequency  # decays with the horizon
    with pytest.raises(ValueError):
        secure_latency_mc(honest, adv, 2.0, curve, [3.0], paths=100)


def test_catchup_probability_shape():
    assert catchup_probability(0.0, 6) == 0.0
    assert catchup_probability(0.5, 6) == 1.0
    probs = [catchup_probability(0.2, d) for d in range(1, 8)]
    assert all(b < a for a, b in zip(probs, probs[1:]))
    assert 0.0 < probs[-1] < probs[0] < 1.0


def test_nakamoto_discounted_depth():
    plain = nakamoto_discounted_depth(0.1, 1.0, 1e-3)
    discounted = nakamoto_discounted_depth(0.1, 0.928, 1e-3)
    assert discounted >= plain
    with pytest.raises(AdversaryMajority):
        nakamoto_discounted_depth(0.45, 0.5, 1e-3)
    with pytest.raises(ValueError):
        nakamoto_discounted_depth(0.1, 0.9, 1.5)
