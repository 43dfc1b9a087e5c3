import math

import numpy as np
import pytest

from rssplan import (DelayProfile, LateralConfig, max_safe_passing_speed,
                     rss_gap, safe_lateral_distance,
                     safe_longitudinal_distance, static_gap_safe)
from rssplan.core import VehicleState

from conftest import make_descriptor


# Independent term-by-term evaluators, kept deliberately separate from the
# library formulas.

def oracle_longitudinal(v_rear, v_front, rho, a_acc, a_brake_min,
                        a_brake_max_front, l_rear, l_front):
    reaction_travel = v_rear * rho
    acceleration_gain = 0.5 * a_acc * rho * rho
    peak_speed = v_rear + a_acc * rho
    rear_stopping = peak_speed * peak_speed / (2.0 * a_brake_min)
    body = 0.5 * (l_rear + l_front)
    front_stopping = v_front * v_front / (2.0 * a_brake_max_front)
    h = (reaction_travel + acceleration_gain + rear_stopping + body
         - front_stopping)
    return max(h, 0.0), h


def oracle_lateral(v_lo, v_up, rho, a_lat_acc, a_lat_brake_lo,
                   a_lat_brake_up, w_lo, w_up, mu):
    v_lo_rho = v_lo + a_lat_acc * rho
    v_up_rho = v_up - a_lat_acc * rho
    toward = (0.5 * (v_lo + v_lo_rho) * rho
              + v_lo_rho * v_lo_rho / (2.0 * a_lat_brake_lo)
              + 0.5 * (w_lo + w_up))
    away = (0.5 * (v_up + v_up_rho) * rho
            + v_up_rho * v_up_rho / (2.0 * a_lat_brake_up))
    h = toward - away
    return mu + max(h, 0.0), h


def test_longitudinal_stationary_reduces_to_body_term():
    d = make_descriptor()
    zero = DelayProfile(rho_rt=0.0, rho_cd=0.0)
    assert safe_longitudinal_distance(d, 0.0, d, 0.0, zero) == 5.0


def test_longitudinal_matches_frozen_value(descriptor, delays):
    got = safe_longitudinal_distance(descriptor, 20.0, descriptor, 20.0,
                                     delays)
    assert got == pytest.approx(60.8583625, abs=1e-9)


def test_longitudinal_clamps_negative_bracket(delays):
    rear = make_descriptor("r")
    front = make_descriptor("f", a_brake_max=4.0)
    got = safe_longitudinal_distance(rear, 10.0, front, 30.0, delays)
    assert got == 0.0
    gap = rss_gap(rear, VehicleState(v_long=10.0), front,
                  VehicleState(v_long=30.0), delays,
                  ego_is_rear=True, ego_is_lower=True)
    assert gap.pre_clamp_long == pytest.approx(-78.6666375, abs=1e-6)


def test_lateral_zero_speed_zero_delay():
    d = make_descriptor()
    zero = DelayProfile(rho_rt=0.0, rho_cd=0.0)
    got = safe_lateral_distance(d, 0.0, d, 0.0, zero, LateralConfig(mu=0.5))
    assert got == pytest.approx(2.5)


def test_lateral_matches_frozen_value(descriptor, delays):
    got = safe_lateral_distance(descriptor, 0.5, descriptor, -0.3, delays,
                                LateralConfig(mu=0.5))
    assert got == pytest.approx(3.9759, abs=1e-4)


def test_lateral_diverging_returns_margin(descriptor, delays):
    got = safe_lateral_distance(descriptor, -3.0, descriptor, 3.0, delays,
                                LateralConfig(mu=0.5))
    assert got == 0.5
    gap = rss_gap(descriptor, VehicleState(v_lat=-3.0), descriptor,
                  VehicleState(v_lat=3.0), delays,
                  ego_is_rear=True, ego_is_lower=True)
    assert gap.pre_clamp_lat == pytest.approx(-2.2911, abs=1e-4)


def test_negative_speed_rejected(descriptor, delays):
    with pytest.raises(ValueError):
        safe_longitudinal_distance(descriptor, -1.0, descriptor, 5.0,
                                   delays)
    with pytest.raises(ValueError):
        safe_longitudinal_distance(descriptor, math.nan, descriptor, 5.0,
                                   delays)


def test_oracle_agreement_random(descriptor):
    rng = np.random.RandomState(7)
    for _ in range(500):
        rear = make_descriptor("r", length=rng.uniform(3, 8),
                               a_accel_max=rng.uniform(1, 5),
                               a_brake_min=rng.uniform(2, 6),
                               a_brake_max=rng.uniform(6, 10))
        front_bmin = rng.uniform(2, 6)
        front = make_descriptor("f", length=rng.uniform(3, 8),
                                a_brake_min=front_bmin,
                                a_brake_max=rng.uniform(front_bmin, 10))
        dl = DelayProfile(rho_rt=rng.uniform(0, 2), rho_cd=rng.uniform(0, 0.01))
        v_r, v_f = rng.uniform(0, 35), rng.uniform(0, 35)
        want, _ = oracle_longitudinal(v_r, v_f, dl.rho, rear.a_accel_max,
                                      rear.a_brake_min, front.a_brake_max,
                                      rear.length, front.length)
        got = safe_longitudinal_distance(rear, v_r, front, v_f, dl)
        assert got == pytest.approx(want, abs=1e-9)

        lo = make_descriptor("lo", width=rng.uniform(1.5, 2.5),
                             a_lat_accel_max=rng.uniform(0.5, 2),
                             a_lat_brake_min=rng.uniform(1, 4))
        up = make_descriptor("up", width=rng.uniform(1.5, 2.5),
                             a_lat_accel_max=rng.uniform(0.5, 2),
                             a_lat_brake_min=rng.uniform(1, 4))
        mu = rng.uniform(0, 1)
        v_lo, v_up = rng.uniform(-3, 3), rng.uniform(-3, 3)
        # the lower vehicle accelerates toward, the upper away, each with
        # its own bound
        want = mu + max(
            0.5 * (v_lo + (v_lo + lo.a_lat_accel_max * dl.rho)) * dl.rho
            + (v_lo + lo.a_lat_accel_max * dl.rho) ** 2
            / (2 * lo.a_lat_brake_min)
            + 0.5 * (lo.width + up.width)
            - (0.5 * (v_up + (v_up - up.a_lat_accel_max * dl.rho)) * dl.rho
               + (v_up - up.a_lat_accel_max * dl.rho) ** 2
               / (2 * up.a_lat_brake_min)), 0.0)
        got = safe_lateral_distance(lo, v_lo, up, v_up, dl,
                                    LateralConfig(mu=mu))
        assert got == pytest.approx(want, abs=1e-9)


def test_monotonicity_sample(descriptor, delays):
    rng = np.random.RandomState(11)
    for _ in range(500):
        v_r = rng.uniform(0, 30)
        v_f = rng.uniform(0, 30)
        base = safe_longitudinal_distance(descriptor, v_r, descriptor, v_f,
                                          delays)
        assert safe_longitudinal_distance(descriptor, v_r + 1.0, descriptor,
                                          v_f, delays) >= base
        assert safe_longitudinal_distance(descriptor, v_r, descriptor,
                                          v_f + 1.0, delays) <= base
        slower_react = DelayProfile(rho_rt=delays.rho_rt + 0.2, rho_cd=0.0)
        assert safe_longitudinal_distance(descriptor, v_r, descriptor, v_f,
                                          slower_react) >= base


def test_comm_delay_never_decreases(descriptor):
    # Longitudinal: holds over the whole domain. Lateral: holds whenever
    # the vehicles are approaching or静 (v_lo >= 0 >= v_up); co-moving
    # lateral speeds admit counterexamples in the printed formula.
    rng = np.random.RandomState(3)
    plain = DelayProfile(rho_rt=0.83, rho_cd=0.0)
    linked = DelayProfile(rho_rt=0.83, rho_cd=0.0005)
    for _ in range(200):
        v_r, v_f = rng.uniform(0, 30, size=2)
        assert (safe_longitudinal_distance(descriptor, v_r, descriptor,
                                           v_f, linked)
                >= safe_longitudinal_distance(descriptor, v_r, descriptor,
                                              v_f, plain))
        v_lo, v_up = rng.uniform(0, 2), rng.uniform(-2, 0)
        assert (safe_lateral_distance(descriptor, v_lo, descriptor, v_up,
                                      linked)
                >= safe_lateral_distance(descriptor, v_lo, descriptor,
                                         v_up, plain))


def test_lateral_floor_is_mu(descriptor, delays):
    rng = np.random.RandomState(5)
    cfg = LateralConfig(mu=0.5)
    for _ in range(200):
        v_lo, v_up = rng.uniform(-4, 4, size=2)
        got = safe_lateral_distance(descriptor, v_lo, descriptor, v_up,
                                    delays, cfg)
        assert got >= cfg.mu - 1e-12


def test_static_gap_boundary():
    d = make_descriptor()
    zero = DelayProfile(rho_rt=0.0, rho_cd=0.0)
    # at standstill only the body term remains: 5 <= 10/2 exactly
    assert static_gap_safe(10.0, d, 0.0, zero)
    assert not static_gap_safe(0.0, d, 1.0, zero)


def test_static_gap_speed_threshold(descriptor, delays):
    assert static_gap_safe(40.0, descriptor, 5.99, delays)
    assert not static_gap_safe(40.0, descriptor, 6.1, delays)


def test_max_safe_passing_speed(descriptor, delays):
    got = max_safe_passing_speed(40.0, descriptor, delays, 30.0)
    assert got == pytest.approx(5.992, abs=0.02)
    # narrow gap: feasible only at standstill, and not at all once a
    # reaction window applies
    zero = DelayProfile(rho_rt=0.0, rho_cd=0.0)
    assert max_safe_passing_speed(10.0, descriptor, zero, 30.0) == 0.0
    assert static_gap_safe(10.0, descriptor, 0.0, zero)
    assert max_safe_passing_speed(10.0, descriptor, delays, 30.0) == 0.0
    assert not static_gap_safe(10.0, descriptor, 0.0, delays)
    # unconstrained: the limit binds
    assert max_safe_passing_speed(1e6, descriptor, delays, 30.0) == 30.0


def test_passing_speed_is_tight(descriptor, delays):
    rng = np.random.RandomState(13)
    for _ in range(100):
        gap = rng.uniform(12, 200)
        v = max_safe_passing_speed(gap, descriptor, delays, 30.0)
        assert static_gap_safe(gap, descriptor, v, delays)
        if 0.0 < v < 30.0:
            assert not static_gap_safe(gap, descriptor, v + 0.02, delays)
