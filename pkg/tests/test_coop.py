import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectrum_share import oracle
from spectrum_share.coop import (
    GibbsConfig,
    gibbs_step,
    optimality_gap_bound,
    run_cooperative,
    selection_probabilities,
    stationary_distribution,
)
from spectrum_share.model import ApConfig, InvalidInput, Scenario, per_ap_throughput

from _instances import random_scenario, two_ap


def _softmax_oracle(sc, profile, n, gamma):
    """Conditional law of AP n's new channel, by direct enumeration."""
    chans = sc.aps[n].feasible_channels
    totals = [oracle.total_throughput(sc, profile[:n] + (c,) + profile[n + 1:]) * 1e-6 for c in chans]
    top = max(totals)
    w = [math.exp(gamma * (t - top)) for t in totals]
    return {c: v / sum(w) for c, v in zip(chans, w)}


def test_gamma_zero_is_uniform():
    sc = random_scenario(1, 3, 3)
    p = next(iter(sc.profiles()))
    for n, ap in enumerate(sc.aps):
        probs = selection_probabilities(sc, p, n, 0.0)
        assert list(probs) == list(ap.feasible_channels)
        assert all(v == pytest.approx(1 / len(probs), abs=1e-15) for v in probs.values())


def test_single_channel_never_moves():
    sc = two_ap(channels=((1,), (1, 2)))
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert gibbs_step(sc, (1, 2), 0, 0.85, rng) == (1, 2)


def test_selection_probabilities_match_enumeration():
    for seed in range(5):
        sc = random_scenario(seed, 3, 3)
        p = next(iter(sc.profiles()))
        for n in range(3):
            got = selection_probabilities(sc, p, n, 0.85)
            want = _softmax_oracle(sc, p, n, 0.85)
            assert got == pytest.approx(want, abs=1e-14)


def test_step_frequencies_within_three_sigma():
    sc = two_ap(channels=((1, 2), (1, 2)), distance=60.0, powers=(100.0, 300.0))
    # small gamma keeps both outcomes likely enough to test
    gamma, draws = 0.02, 100_000
    want = _softmax_oracle(sc, (1, 1), 0, gamma)
    rng = np.random.default_rng(17)
    hits = sum(gibbs_step(sc, (1, 1), 0, gamma, rng)[0] == 2 for _ in range(draws))
    p = want[2]
    assert abs(hits / draws - p) <= 3 * math.sqrt(p * (1 - p) / draws)


def test_single_ap_single_channel_trace_is_constant():
    sc = Scenario(3, 6e6, 4.0, (ApConfig.build((0, 0), 100, 20, [3], 1e-10),))
    run = run_cooperative(sc, GibbsConfig(0.85, 50))
    assert np.all(run.profiles == 3)
    assert np.all(run.system_throughput == run.system_throughput[0])


def test_fixed_seed_is_bit_identical():
    sc = random_scenario(4, 4, 3)
    a = run_cooperative(sc, GibbsConfig(0.5, 3000, seed=9))
    b = run_cooperative(sc, GibbsConfig(0.5, 3000, seed=9))
    assert np.array_equal(a.profiles, b.profiles)
    assert np.array_equal(a.system_throughput, b.system_throughput)
    c = run_cooperative(sc, GibbsConfig(0.5, 3000, seed=10))
    assert not np.array_equal(a.profiles, c.profiles)


def test_at_most_one_ap_changes_per_iteration():
    sc = random_scenario(6, 4, 3)
    run = run_cooperative(sc, GibbsConfig(0.2, 5000, seed=1))
    prev = np.asarray(run.initial_profile)
    for t, row in enumerate(run.profiles):
        diff = np.flatnonzero(row != prev)
        assert diff.size == 0 or diff.tolist() == [run.updating_ap[t]]
        prev = row


def test_trace_throughputs_and_running_average():
    sc = random_scenario(8, 3, 3)
    run = run_cooperative(sc, GibbsConfig(0.5, 500, seed=2))
    for t in (0, 17, 499):
        np.testing.assert_allclose(run.ap_throughputs[t], per_ap_throughput(sc, run.profiles[t]), rtol=1e-13)
    np.testing.assert_allclose(run.running_average[-1], run.system_throughput.mean(), rtol=1e-12)
    assert sum(run.occupancy().values()) == pytest.approx(1.0)


def test_cache_does_not_change_trace():
    sc = random_scenario(6, 4, 3)
    a = run_cooperative(sc, GibbsConfig(0.5, 2000, seed=3))
    b = run_cooperative(sc, GibbsConfig(0.5, 2000, seed=3), cache_size=0)
    assert np.array_equal(a.profiles, b.profiles)


def test_occupancy_concentrates_on_optimum():
    # Co-channel penalties are tens of Mbps, so gamma = 0.02 per Mbps is
    # already cold enough to favour the optimum while still mixing quickly.
    sc = random_scenario(24, 3, 3)
    best, _ = oracle.brute_force_optimum(sc)
    profiles, probs = stationary_distribution(sc, 0.02)
    assert profiles[int(np.argmax(probs))] == best
    for seed in range(3):
        occ = run_cooperative(sc, GibbsConfig(0.02, 100_000, seed=seed)).occupancy(burn_in=1000)
        assert max(occ, key=occ.get) == best


def test_initial_profile_respected_and_validated():
    sc = random_scenario(2, 3, 3)
    p = next(iter(sc.profiles()))
    run = run_cooperative(sc, GibbsConfig(0.5, 10, initial_profile=p))
    assert run.initial_profile == p
    with pytest.raises(InvalidInput):
        run_cooperative(sc, GibbsConfig(0.5, 10, initial_profile=(99, 99, 99)))


@pytest.mark.parametrize("kw", [dict(gamma=-1, iterations=5), dict(gamma=1, iterations=0),
                                dict(gamma=1, iterations=5, utility_scale=0)])
def test_config_validation(kw):
    with pytest.raises(InvalidInput):
        GibbsConfig(**kw)


# ------------------------------------------------------------------ exact law


def test_stationary_gamma_zero_uniform():
    sc = random_scenario(3, 3, 3)
    _, probs = stationary_distribution(sc, 0.0)
    np.testing.assert_allclose(probs, 1 / len(probs), atol=1e-15)


def test_stationary_single_profile():
    sc = two_ap(channels=((1,), (2,)))
    profiles, probs = stationary_distribution(sc, 0.85)
    assert profiles == [(1, 2)] and probs.tolist() == [1.0]


def test_stationary_six_state_chain():
    aps = (
        ApConfig.build((0, 0), 350, 20, [1, 2], 1e-10),
        ApConfig.build((80, 30), 300, 20, [1, 2, 3], 1e-10),
    )
    sc = Scenario(3, 6e6, 4.0, aps)
    for gamma in (0.2, 0.5, 0.85):
        profiles, probs = stationary_distribution(sc, gamma)
        states, q, pi = oracle.exact_chain_analysis(sc, gamma)
        assert profiles == states and len(states) == 6
        assert np.max(np.abs(probs - pi)) <= 1e-9
        flow = probs[:, None] * q
        assert np.max(np.abs(flow - flow.T)) <= 1e-12
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), gamma=st.sampled_from([0.0, 0.2, 0.85, 2.0]))
def test_detailed_balance_property(seed, gamma):
    sc = random_scenario(seed, 3, 3)
    _, probs = stationary_distribution(sc, gamma)
    _, q, _ = oracle.exact_chain_analysis(sc, gamma)
    flow = probs[:, None] * q
    assert np.max(np.abs(flow - flow.T)) <= 1e-12


def test_gap_bound_single_profile():
    sc = two_ap(channels=((1,), (2,)))
    s_bar, s_star, bound = optimality_gap_bound(sc, 0.85)
    assert s_bar == s_star and bound == 0.0


def test_gap_zero_for_identical_utilities():
    sc = Scenario(2, 6e6, 4.0, (ApConfig.build((0, 0), 100, 20, [1, 2], 1e-10),))
    s_bar, s_star, _ = optimality_gap_bound(sc, 0.85)
    assert s_star - s_bar == 0.0


def test_gap_within_bound_and_shrinks():
    sc = random_scenario(12, 3, 3)
    gaps = []
    for gamma in (0.2, 0.5, 0.85):
        s_bar, s_star, bound = optimality_gap_bound(sc, gamma)
        assert 0 <= s_star - s_bar <= bound
        assert bound == pytest.approx(math.log(sc.profile_space_size()) / gamma)
        gaps.append(s_star - s_bar)
    assert gaps[0] >= gaps[1] >= gaps[2]


def test_gap_bound_needs_positive_gamma():
    with pytest.raises(InvalidInput):
        optimality_gap_bound(random_scenario(0, 2, 2), 0.0)


def test_enumeration_cap():
    from spectrum_share import coop

    sc = two_ap(channels=((1, 2), (1, 2)))
    with pytest.raises(InvalidInput, match="above the cap"):
        coop._enumerate_totals(sc, limit=3)
