import math

import numpy as np
import pytest

from helpers import random_scenario, throughput

from ehalloc.errors import DomainError, ValidationError
from ehalloc.fullsi import (
    closed_form_k2,
    dp_full_finite_bmax,
    k2_allocation,
    staircase_waterfill,
    update_with_new_slot,
    waterfill,
)
from ehalloc.si_models import Scenario, replay_allocation

EPS = 1e-9


def check_staircase_invariants(sc, res, tol=1e-6):
    """Structural properties every staircase solution must satisfy."""
    alloc = np.asarray(res.allocation)
    levels = np.asarray(res.water_levels)
    cum = sc.cumulative_energy()
    spent = np.concatenate([[0.0], np.cumsum(alloc)])
    # feasible prefix spending
    assert np.all(spent[1:] <= cum[1:] + 10 * res.eps), "prefix constraint violated"
    # levels step upward only
    assert np.all(np.diff(levels) >= -1e-9), "water levels decreased"
    # the store is drained at every transition slot
    for ts in res.transition_slots:
        assert abs(spent[ts] - cum[ts]) <= tol, f"store not empty at slot {ts}"
    # the last transition slot is the horizon
    assert res.transition_slots[-1] == sc.K
    # per-slot allocation matches its block's water level
    inv = np.where(np.asarray(sc.snr) > 0, 1.0 / np.asarray(sc.snr), np.inf)
    if not res.degenerate:
        for k in range(sc.K):
            want = max(levels[k] - inv[k], 0.0)
            assert alloc[k] == pytest.approx(want, abs=5e-8)


class TestWaterfill:
    def test_two_slot_hand_solved(self):
        # KKT by hand: level 1.5 puts 0.5 and 1.0 into slots with 1/snr = 1, 0.5
        res = waterfill(np.array([1.0, 2.0]), 1.5)
        np.testing.assert_allclose(res.allocation, [0.5, 1.0], atol=1e-8)
        assert res.water_level == pytest.approx(1.5, abs=1e-8)

    def test_strong_slot_takes_everything(self):
        res = waterfill(np.array([1.0, 100.0]), 0.5)
        np.testing.assert_allclose(res.allocation, [0.0, 0.5], atol=1e-8)
        assert res.water_level == pytest.approx(0.51, abs=1e-8)

    def test_zero_snr_slot_gets_nothing(self):
        res = waterfill(np.array([0.0, 1.0]), 1.0)
        assert res.allocation[0] == 0.0
        assert res.allocation[1] == pytest.approx(1.0, abs=1e-8)

    def test_all_zero_snr_degenerate(self):
        res = waterfill(np.array([0.0, 0.0]), 1.0)
        np.testing.assert_array_equal(res.allocation, [0.0, 0.0])
        assert res.degenerate

    def test_zero_budget(self):
        res = waterfill(np.array([1.0, 2.0]), 0.0)
        np.testing.assert_array_equal(res.allocation, [0.0, 0.0])
        assert not res.degenerate

    def test_random_instances_satisfy_kkt(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            n = int(rng.integers(1, 8))
            snr = rng.uniform(0.0, 10.0, n)
            snr[rng.uniform(size=n) < 0.15] = 0.0
            p = float(rng.uniform(0.0, 4.0))
            res = waterfill(snr, p)
            total = res.allocation.sum()
            assert total <= p + 1e-12
            if not res.degenerate and p > 0:
                assert p - total <= res.residual + 1e-12
                assert p - total <= EPS
                inv = np.where(snr > 0, 1.0 / np.where(snr > 0, snr, 1), np.inf)
                want = np.maximum(res.water_level - inv, 0.0)
                np.testing.assert_allclose(res.allocation, want, atol=1e-12)

    def test_validation(self):
        with pytest.raises(DomainError):
            waterfill(np.array([1.0]), -0.5)
        with pytest.raises(DomainError):
            waterfill(np.array([-1.0]), 0.5)
        with pytest.raises(ValidationError):
            waterfill(np.array([]), 0.5)
        with pytest.raises(ValidationError):
            waterfill(np.array([1.0]), 0.5, eps=0.0)


class TestStaircase:
    def test_rising_levels_two_blocks(self):
        sc = Scenario(K=2, b1=0.5, bmax=math.inf, snr=(1.0, 1.0), harvest=(1.5,))
        res = staircase_waterfill(sc)
        np.testing.assert_allclose(res.allocation, [0.5, 1.5], atol=1e-8)
        np.testing.assert_allclose(res.water_levels, [1.5, 2.5], atol=1e-8)
        assert list(res.transition_slots) == [1, 2]

    def test_flat_when_initial_store_carries(self):
        sc = Scenario(K=2, b1=2.0, bmax=math.inf, snr=(1.0, 1.0), harvest=(0.0,))
        res = staircase_waterfill(sc)
        np.testing.assert_allclose(res.allocation, [1.0, 1.0], atol=1e-8)
        assert list(res.transition_slots) == [2]

    def test_single_slot_spends_exactly(self):
        sc = Scenario(K=1, b1=0.73, bmax=math.inf, snr=(3.0,), harvest=())
        res = staircase_waterfill(sc)
        assert res.allocation[0] == 0.73

    def test_invariants_on_random_instances(self):
        rng = np.random.default_rng(31)
        for _ in range(300):
            sc = random_scenario(rng)
            res = staircase_waterfill(sc)
            check_staircase_invariants(sc, res)
            replay_allocation(sc, res.allocation, tol=1e-7)

    def test_dominates_simple_feasible_rules(self):
        rng = np.random.default_rng(32)
        for _ in range(100):
            sc = random_scenario(rng)
            res = staircase_waterfill(sc)
            snr = np.asarray(sc.snr)
            harvest = np.asarray(sc.harvest)
            # drain-every-slot
            b = sc.b1
            naive = []
            for k in range(sc.K):
                naive.append(b)
                b = harvest[k] if k < sc.K - 1 else 0.0
            # spend-half
            b = sc.b1
            half = []
            for k in range(sc.K):
                t = b if k == sc.K - 1 else b / 2
                half.append(t)
                if k < sc.K - 1:
                    b = b - t + harvest[k]
            for rival in (naive, half):
                assert res.throughput_bits >= throughput(snr, rival) - 1e-9

    def test_zero_snr_everywhere_is_degenerate(self):
        sc = Scenario(K=2, b1=1.0, bmax=math.inf, snr=(0.0, 0.0), harvest=(0.5,))
        res = staircase_waterfill(sc)
        np.testing.assert_array_equal(res.allocation, [0.0, 0.0])
        assert res.degenerate
        assert res.throughput_bits == 0.0

    def test_zero_snr_slots_mixed_in(self):
        rng = np.random.default_rng(33)
        for _ in range(100):
            sc0 = random_scenario(rng)
            snr = np.asarray(sc0.snr)
            snr[rng.uniform(size=sc0.K) < 0.3] = 0.0
            sc = Scenario(K=sc0.K, b1=sc0.b1, bmax=math.inf,
                          snr=tuple(snr), harvest=sc0.harvest)
            res = staircase_waterfill(sc)
            assert np.all(np.asarray(res.allocation)[snr == 0.0] == 0.0)
            spent = np.cumsum(res.allocation)
            cum = sc.cumulative_energy()
            assert np.all(spent <= cum[1:] + 1e-7)

    def test_rejects_finite_bmax(self):
        sc = Scenario(K=2, b1=1.0, bmax=2.0, snr=(1.0, 1.0), harvest=(0.5,))
        with pytest.raises(ValidationError, match="dp_full_finite_bmax"):
            staircase_waterfill(sc)

    def test_result_dict_contract(self):
        sc = Scenario(K=2, b1=0.5, bmax=math.inf, snr=(1.0, 1.0), harvest=(1.5,))
        d = staircase_waterfill(sc).to_dict()
        assert set(d) == {"transition_slots", "water_levels", "allocation",
                          "throughput_bits"}


class TestUpdateWithNewSlot:
    def test_matches_fresh_solve_on_worked_case(self):
        sc_old = Scenario(K=2, b1=0.5, bmax=math.inf, snr=(1.0, 1.0), harvest=(1.5,))
        prev = staircase_waterfill(sc_old)
        new = update_with_new_slot(prev, sc_old, new_snr=4.0, new_harvest=0.25)
        sc_new = Scenario(K=3, b1=0.5, bmax=math.inf, snr=(1.0, 1.0, 4.0),
                          harvest=(1.5, 0.25))
        fresh = staircase_waterfill(sc_new)
        assert list(new.transition_slots) == list(fresh.transition_slots)
        np.testing.assert_allclose(new.allocation, fresh.allocation, atol=2 * EPS)

    def test_matches_fresh_solve_randomized(self):
        rng = np.random.default_rng(41)
        for _ in range(300):
            sc_old = random_scenario(rng, k_choices=(1, 2, 3, 4))
            prev = staircase_waterfill(sc_old)
            g = float(rng.uniform(0.1, 10.0))
            h = float(rng.uniform(0.0, 2.0))
            new = update_with_new_slot(prev, sc_old, new_snr=g, new_harvest=h)
            sc_new = Scenario(K=sc_old.K + 1, b1=sc_old.b1, bmax=math.inf,
                              snr=sc_old.snr + (g,), harvest=sc_old.harvest + (h,))
            fresh = staircase_waterfill(sc_new)
            assert list(new.transition_slots) == list(fresh.transition_slots)
            np.testing.assert_allclose(new.allocation, fresh.allocation, atol=2e-8)
            check_staircase_invariants(sc_new, new)

    def test_rejects_mismatched_previous_result(self):
        sc_a = Scenario(K=2, b1=0.5, bmax=math.inf, snr=(1.0, 1.0), harvest=(1.5,))
        sc_b = Scenario(K=2, b1=2.0, bmax=math.inf, snr=(1.0, 1.0), harvest=(0.0,))
        prev_a = staircase_waterfill(sc_a)
        with pytest.raises(ValidationError):
            update_with_new_slot(prev_a, sc_b, new_snr=1.0, new_harvest=0.5)


class TestClosedFormK2:
    def test_balanced_mode(self):
        sc = Scenario(K=2, b1=2.0, bmax=math.inf, snr=(1.0, 1.0), harvest=(0.0,))
        t1, mode = closed_form_k2(sc)
        assert mode == "B"
        assert t1 == pytest.approx(1.0, abs=1e-12)

    def test_greedy_mode_strong_first_channel(self):
        sc = Scenario(K=2, b1=1.0, bmax=math.inf, snr=(100.0, 0.01), harvest=(1.0,))
        t1, mode = closed_form_k2(sc)
        assert mode == "G"
        assert t1 == 1.0

    def test_conservative_mode_forced_by_cap(self):
        # store would overflow: slot 1 must spend at least B1 + H1 - Bmax
        sc = Scenario(K=2, b1=1.0, bmax=1.2, snr=(0.1, 10.0), harvest=(1.0,))
        t1, mode = closed_form_k2(sc)
        assert mode == "C"
        assert t1 == pytest.approx(0.8, abs=1e-12)

    def test_zero_snr_channels(self):
        sc = Scenario(K=2, b1=1.0, bmax=math.inf, snr=(0.0, 1.0), harvest=(0.5,))
        t1, mode = closed_form_k2(sc)
        assert t1 == 0.0 and mode == "C"
        sc = Scenario(K=2, b1=1.0, bmax=math.inf, snr=(1.0, 0.0), harvest=(0.5,))
        t1, mode = closed_form_k2(sc)
        assert t1 == 1.0 and mode == "G"

    def test_matches_grid_solver_randomized(self):
        rng = np.random.default_rng(51)
        for _ in range(150):
            sc = random_scenario(rng, k_choices=(2,), bmax_mode="mixed", e_hi=2.0)
            t1, _ = closed_form_k2(sc)
            alloc = k2_allocation(sc, t1)
            tput = throughput(sc.snr, alloc)
            grid = dp_full_finite_bmax(sc, delta_b=1e-3)
            assert tput >= grid.throughput_bits - 1e-9
            assert abs(tput - grid.throughput_bits) < 1e-2
            replay_allocation(sc, alloc, tol=1e-9)

    def test_rejects_wrong_horizon(self):
        sc = Scenario(K=3, b1=1.0, bmax=math.inf, snr=(1.0, 1.0, 1.0), harvest=(0.5, 0.5))
        with pytest.raises(ValidationError):
            closed_form_k2(sc)

    def test_k2_allocation_respects_cap(self):
        sc = Scenario(K=2, b1=1.0, bmax=1.2, snr=(1.0, 1.0), harvest=(1.0,))
        alloc = k2_allocation(sc, 0.9)
        assert alloc[1] == pytest.approx(min(1.0 - 0.9 + 1.0, 1.2), abs=1e-12)


class TestGridDp:
    def test_close_to_staircase_when_cap_is_slack(self):
        rng = np.random.default_rng(61)
        for _ in range(25):
            sc_inf = random_scenario(rng, k_choices=(2, 3))
            total = float(np.sum(sc_inf.cumulative_energy()[-1]))
            sc_cap = Scenario(K=sc_inf.K, b1=sc_inf.b1, bmax=total + 1.0,
                              snr=sc_inf.snr, harvest=sc_inf.harvest)
            stair = staircase_waterfill(sc_inf)
            grid = dp_full_finite_bmax(sc_cap, delta_b=1e-3)
            slope = float(np.sum(sc_inf.snr)) / math.log(2.0)
            assert grid.throughput_bits <= stair.throughput_bits + 1e-9
            assert grid.throughput_bits >= stair.throughput_bits - 3 * (slope * 1e-3)

    def test_cap_binds(self):
        # a tight cap forces early spending into the weak channel
        sc_tight = Scenario(K=2, b1=1.0, bmax=1.0, snr=(0.5, 10.0), harvest=(1.0,))
        sc_loose = Scenario(K=2, b1=1.0, bmax=2.0, snr=(0.5, 10.0), harvest=(1.0,))
        tight = dp_full_finite_bmax(sc_tight, delta_b=1e-3)
        loose = dp_full_finite_bmax(sc_loose, delta_b=1e-3)
        assert tight.throughput_bits < loose.throughput_bits
        traj = replay_allocation(sc_tight, tight.allocation, tol=1e-9)
        assert np.all(np.asarray(traj) <= 1.0 + 1e-9)

    def test_allocation_always_replayable(self):
        rng = np.random.default_rng(62)
        for _ in range(40):
            sc = random_scenario(rng, k_choices=(2, 3, 4), bmax_mode="finite")
            grid = dp_full_finite_bmax(sc, delta_b=0.005)
            replay_allocation(sc, grid.allocation, tol=1e-9)

    def test_validation(self):
        sc = Scenario(K=2, b1=1.0, bmax=1.5, snr=(1.0, 1.0), harvest=(0.5,))
        with pytest.raises(ValidationError):
            dp_full_finite_bmax(sc, delta_b=0.0)
        with pytest.raises(ValidationError):
            dp_full_finite_bmax(sc, delta_b=-1.0)
