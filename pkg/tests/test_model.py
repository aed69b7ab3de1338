import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectrum_share import oracle
from spectrum_share.model import (
    ApConfig,
    ContentionModel,
    InvalidInput,
    Scenario,
    UserConfig,
    UserPopulation,
    candidate_throughputs,
    contention_success,
    dbm_to_mw,
    mw_to_dbm,
    occupancy,
    per_ap_throughput,
    potential_phi,
    system_throughput,
    throughput,
    user_rate,
)

from _instances import random_scenario, two_ap

# Hand-evaluated with 30-digit arithmetic: S = 100/20^4 = 6.25e-4 mW,
# I = 100/250^4 = 2.56e-8 mW, noise 1e-10 mW, B = 6 MHz.
TWO_COCHANNEL_BPS = 87419157.1938326510170934982485
ISOLATED_100MW_BPS = 135452549.939580521152212881965


def test_unit_snr_gives_one_bit():
    ap = ApConfig.build((0, 0), 1.0, 1.0, [1], 1.0)
    sc = Scenario(1, 1.0, 4.0, (ap,))
    assert throughput(sc, (1,), 0) == 1.0


def test_distinct_channels_match_isolated_rate():
    sc = two_ap(channels=((1, 2), (1, 2)))
    rates = per_ap_throughput(sc, (1, 2))
    assert rates == pytest.approx([ISOLATED_100MW_BPS] * 2, rel=1e-13)


def test_two_cochannel_aps_against_hand_value():
    sc = two_ap()
    rates = per_ap_throughput(sc, (1, 1))
    assert rates == pytest.approx([TWO_COCHANNEL_BPS] * 2, rel=1e-13)
    assert oracle.ap_rate(sc, (1, 1), 0) == pytest.approx(TWO_COCHANNEL_BPS, rel=1e-13)


def test_system_throughput_sums_aps():
    sc = random_scenario(3, 3, 3)
    for p in sc.profiles():
        expect = sum(oracle.ap_rate(sc, p, n) for n in range(3))
        assert system_throughput(sc, p) == pytest.approx(expect, rel=1e-12)


def test_permuting_identical_aps_keeps_total():
    a = two_ap(channels=((1, 2), (1, 2)), powers=(200.0, 200.0))
    assert system_throughput(a, (1, 2)) == pytest.approx(system_throughput(a, (2, 1)), rel=1e-14)


def test_single_ap_total_is_its_rate():
    sc = Scenario(2, 6e6, 4.0, (ApConfig.build((0, 0), 100, 20, [1, 2], 1e-10),))
    assert system_throughput(sc, (2,)) == throughput(sc, (2,), 0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_adding_interferer_never_helps(seed):
    sc = random_scenario(seed, 3, 2, per_channel_noise=False)
    for p in sc.profiles():
        for n in range(3):
            chans, table = candidate_throughputs(sc, p, n)
            for c, row in zip(chans, table):
                for j in range(3):
                    if j == n:
                        continue
                    joining = c == p[j] and p[n] != p[j]
                    leaving = c != p[j] and p[n] == p[j]
                    base = throughput(sc, p, j)
                    if joining:
                        assert row[j] <= base * (1 + 1e-12)
                    if leaving:
                        assert row[j] >= base * (1 - 1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_candidate_table_matches_direct_evaluation(seed):
    sc = random_scenario(seed, 4, 3)
    p = next(iter(sc.profiles()))
    for n in range(sc.n_aps):
        chans, table = candidate_throughputs(sc, p, n)
        for c, row in zip(chans, table):
            q = p[:n] + (c,) + p[n + 1:]
            np.testing.assert_allclose(row, per_ap_throughput(sc, q), rtol=1e-13)


def test_min_distance_guard():
    with pytest.raises(InvalidInput, match="closer than coverage radius"):
        two_ap(distance=10.0)


@pytest.mark.parametrize("bad", [
    dict(power=0.0), dict(coverage_radius=-1.0), dict(noise=0.0), dict(feasible_channels=[]),
    dict(feasible_channels=[5]),
])
def test_invalid_ap_rejected(bad):
    kw = dict(position=(0, 0), power=100.0, coverage_radius=20.0, feasible_channels=[1], noise=1e-10)
    kw.update(bad)
    with pytest.raises(InvalidInput):
        Scenario(2, 6e6, 4.0, (ApConfig.build(**kw),))


def test_invalid_profile_rejected():
    sc = two_ap(channels=((1,), (1, 2)))
    with pytest.raises(InvalidInput):
        per_ap_throughput(sc, (2, 1))
    with pytest.raises(InvalidInput):
        per_ap_throughput(sc, (1,))
    with pytest.raises(InvalidInput):
        throughput(sc, (1, 1), 2)


def test_distance_override_used():
    aps = tuple(ApConfig.build((0, 0), 100, 20, [1], 1e-10) for _ in range(2))
    sc = Scenario(1, 6e6, 4.0, aps, distances=((0, 250), (250, 0)))
    assert throughput(sc, (1, 1), 0) == pytest.approx(TWO_COCHANNEL_BPS, rel=1e-13)
    with pytest.raises(InvalidInput):
        Scenario(1, 6e6, 4.0, aps, distances=((0, 250), (200, 0)))


def test_dbm_roundtrip():
    assert dbm_to_mw(-100) == pytest.approx(1e-10, rel=1e-15)
    assert mw_to_dbm(dbm_to_mw(23.5)) == pytest.approx(23.5)


# ------------------------------------------------------------------ potential


def test_phi_single_ap():
    sc = Scenario(1, 6e6, 4.0, (ApConfig.build((0, 0), 250.0, 20, [1], 3e-10),))
    assert potential_phi(sc, (1,)) == pytest.approx(-2 * 250.0 * 3e-10, rel=1e-15)


def test_phi_distinct_channels_tiny_noise_is_noise_only():
    sc = two_ap(channels=((1, 2), (1, 2)), noise=1e-10)
    assert potential_phi(sc, (1, 2)) == pytest.approx(-2 * (100 + 100) * 1e-10)


def test_phi_cochannel_coupling_by_hand():
    sc = two_ap(noise=1e-10)
    coupling = 2 * 100 * 100 / 250.0**4
    assert potential_phi(sc, (1, 1)) == pytest.approx(-coupling - 4e-8, rel=1e-13)


def test_phi_cochannel_unequal_powers():
    sc = two_ap(powers=(100.0, 300.0), noise=2e-10)
    coupling = 2 * 100 * 300 / 250.0**4
    noise = 2 * (100 + 300) * 2e-10
    assert potential_phi(sc, (1, 1)) == pytest.approx(-coupling - noise, rel=1e-13)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_phi_sign_matches_utility_sign(seed):
    sc = random_scenario(seed, 3, 3)
    for p in sc.profiles():
        phi = potential_phi(sc, p)
        for n, ap in enumerate(sc.aps):
            u = oracle.ap_rate(sc, p, n)
            for c in ap.feasible_channels:
                q = p[:n] + (c,) + p[n + 1:]
                dphi = potential_phi(sc, q) - phi
                du = oracle.ap_rate(sc, q, n) - u
                if abs(du) > 1e-9 * u:
                    assert math.copysign(1, dphi) == math.copysign(1, du)


# ------------------------------------------------------------------ contention


def test_contention_exact_values():
    assert contention_success(10, 0) == 1.0
    assert contention_success(10, 1) == 1.0
    assert contention_success(10, 2) == 0.45
    assert contention_success(10, 3) == 0.285


def test_contention_monte_carlo_x5():
    p = contention_success(10, 5)
    trials = 10**6
    mc = oracle.monte_carlo_backoff(10, 5, trials, seed=11)
    se = math.sqrt(p * (1 - p) / trials)
    assert abs(mc - p) <= 3 * se


@given(lam=st.integers(1, 30), x=st.integers(1, 40))
def test_contention_nonincreasing_and_bounded(lam, x):
    g0, g1 = contention_success(lam, x), contention_success(lam, x + 1)
    assert 0 <= g1 <= g0 <= 1


@given(lam=st.integers(1, 30), x=st.integers(1, 40))
def test_at_most_one_winner(lam, x):
    assert x * contention_success(lam, x) <= 1 + 1e-12


def test_contention_invalid():
    with pytest.raises(InvalidInput):
        contention_success(0, 2)
    with pytest.raises(InvalidInput):
        contention_success(10, -1)
    with pytest.raises(InvalidInput):
        ContentionModel(10, x_max=0)


def test_contention_model_table_and_cumsum():
    m = ContentionModel(10, x_max=5)
    assert m.g(2) == 0.45
    assert m.g(7) == contention_success(10, 7)
    cum = m.log_g_cumsum(3)
    assert cum[0] == 0.0 and cum[1] == 0.0
    assert cum[3] == pytest.approx(math.log(0.45) + math.log(0.285))


# ------------------------------------------------------------------ users


def _pop(gains, state):
    return UserPopulation(tuple(UserConfig(g) for g in gains), state)


def test_lone_user_gets_ap_rate():
    sc = two_ap(channels=((1,), (2,)))
    pop = _pop([(1.0, 1.0)], (0,))
    assert user_rate(sc, (1, 2), pop, 0, 1) == pytest.approx(throughput(sc, (1, 2), 1))


def test_gain_scales_rate():
    sc = two_ap(channels=((1,), (2,)))
    one = user_rate(sc, (1, 2), _pop([(1.0, 1.0)], (0,)), 0, 0)
    two = user_rate(sc, (1, 2), _pop([(2.0, 1.0)], (0,)), 0, 0)
    assert two == pytest.approx(2 * one)


def test_two_users_share_with_contention():
    sc = two_ap(channels=((1,), (2,)))
    pop = _pop([(1.5, 1.0), (1.0, 1.0)], (1, 0))
    assert user_rate(sc, (1, 2), pop, 0, 0) == pytest.approx(0.45 * 1.5 * ISOLATED_100MW_BPS, rel=1e-12)


def test_user_validation():
    with pytest.raises(InvalidInput):
        UserConfig((0.5,))
    with pytest.raises(InvalidInput):
        UserConfig((1.0,), mobility_cost=-1)
    with pytest.raises(InvalidInput):
        UserConfig((1.0, 1.0), distance_override=((1, 0), (0, 0)))
    with pytest.raises(InvalidInput):
        _pop([(1.0,), (1.0, 1.0)], (0, 0))
    with pytest.raises(InvalidInput):
        _pop([(1.0, 1.0)], (2,))
    with pytest.raises(InvalidInput):
        UserPopulation((UserConfig((1.0,), uid=3), UserConfig((1.0,), uid=3)), (0, 0))


def test_occupancy_counts():
    assert occupancy([0, 2, 2], 4).tolist() == [1, 0, 2, 0]
