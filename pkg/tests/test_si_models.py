import json
import math

import numpy as np
import pytest
import scipy.stats

from ehalloc.errors import DomainError, InfeasibleAllocationError, ValidationError
from ehalloc.fullsi import staircase_waterfill
from ehalloc.si_models import (
    AwgnProcess,
    DeterministicProcess,
    DiscreteDist,
    IidProcess,
    MarkovProcess,
    RayleighProcess,
    Scenario,
    StochasticModel,
    battery_step,
    reference_model,
    replay_allocation,
    sample_scenario,
)

UNIFORM3 = DiscreteDist.uniform((0.0, 0.5, 1.0))


class TestDiscreteDist:
    def test_uniform_and_mean(self):
        d = DiscreteDist.uniform((0.0, 1.0))
        assert d.probs == (0.5, 0.5)
        assert d.mean == pytest.approx(0.5)
        assert UNIFORM3.mean == pytest.approx(0.5)

    def test_validation(self):
        with pytest.raises(ValidationError):
            DiscreteDist((0.0, 1.0), (0.7, 0.7))
        with pytest.raises(ValidationError):
            DiscreteDist((0.0, 1.0), (-0.1, 1.1))
        with pytest.raises(ValidationError):
            DiscreteDist((1.0, 1.0), (0.5, 0.5))
        with pytest.raises(ValidationError):
            DiscreteDist((), ())
        with pytest.raises(ValidationError):
            DiscreteDist((0.0, math.inf), (0.5, 0.5))

    def test_sample_index_frequencies(self):
        d = DiscreteDist((1.0, 2.0, 3.0), (0.2, 0.3, 0.5))
        rng = np.random.default_rng(123)
        idx = d.sample_index(rng, 20000)
        counts = np.bincount(idx, minlength=3)
        res = scipy.stats.chisquare(counts, 20000 * np.asarray(d.probs))
        assert res.pvalue > 0.01


class TestProcesses:
    def test_deterministic_tiles_trace(self):
        p = DeterministicProcess(trace=(1.0, 2.0, 3.0))
        rng = np.random.default_rng(0)
        m = p.sample_matrix(rng, runs=4, n=2)
        assert m.shape == (4, 2)
        np.testing.assert_array_equal(m, np.tile([1.0, 2.0], (4, 1)))

    def test_deterministic_trace_too_short(self):
        p = DeterministicProcess(trace=(1.0,))
        with pytest.raises(ValidationError):
            p.sample_matrix(np.random.default_rng(0), runs=2, n=3)

    def test_iid_draws_from_support(self):
        p = IidProcess(dist=UNIFORM3)
        m = p.sample_matrix(np.random.default_rng(1), runs=50, n=4)
        assert m.shape == (50, 4)
        assert set(np.unique(m)) <= {0.0, 0.5, 1.0}

    def test_markov_needs_start(self):
        p = MarkovProcess(support=(0.0, 1.0), kernel=((0.5, 0.5), (0.1, 0.9)))
        with pytest.raises(ValidationError):
            p.sample_matrix(np.random.default_rng(0), runs=2, n=2)

    def test_markov_one_step_distribution(self):
        kernel = ((0.7, 0.3), (0.2, 0.8))
        p = MarkovProcess(support=(0.0, 1.0), kernel=kernel)
        m = p.sample_matrix(np.random.default_rng(5), runs=20000, n=1, start=0.0)
        counts = np.array([(m[:, 0] == 0.0).sum(), (m[:, 0] == 1.0).sum()])
        res = scipy.stats.chisquare(counts, 20000 * np.asarray(kernel[0]))
        assert res.pvalue > 0.01

    def test_markov_kernel_validation(self):
        with pytest.raises(ValidationError):
            MarkovProcess(support=(0.0, 1.0), kernel=((0.5, 0.6), (0.1, 0.9)))
        with pytest.raises(ValidationError):
            MarkovProcess(support=(0.0,), kernel=((0.5, 0.5),))

    def test_markov_rejects_unknown_start(self):
        p = MarkovProcess(support=(0.0, 1.0), kernel=((0.5, 0.5), (0.1, 0.9)))
        with pytest.raises(ValidationError):
            p.sample_matrix(np.random.default_rng(0), runs=2, n=1, start=0.25)

    def test_rayleigh_mean(self):
        p = RayleighProcess(mean=4.0)
        m = p.sample_matrix(np.random.default_rng(3), runs=20000, n=1)
        se = m.std() / math.sqrt(m.size)
        assert abs(m.mean() - 4.0) < 4 * se

    def test_awgn_is_constant(self):
        p = AwgnProcess(mean=2.5)
        m = p.sample_matrix(np.random.default_rng(0), runs=3, n=2)
        np.testing.assert_array_equal(m, np.full((3, 2), 2.5))

    def test_mean_values(self):
        assert AwgnProcess(mean=2.0).mean_value() == 2.0
        assert RayleighProcess(mean=3.0).mean_value() == 3.0
        assert IidProcess(dist=UNIFORM3).mean_value() == pytest.approx(0.5)
        assert DeterministicProcess(trace=(1.0, 3.0)).mean_value() == pytest.approx(2.0)


class TestStochasticModel:
    def test_markov_harvest_requires_h0_on_chain(self):
        harvest = MarkovProcess(support=(0.0, 1.0), kernel=((0.5, 0.5), (0.1, 0.9)))
        with pytest.raises(ValidationError):
            StochasticModel(snr=AwgnProcess(mean=1.0), harvest=harvest, h0=0.3)
        StochasticModel(snr=AwgnProcess(mean=1.0), harvest=harvest, h0=1.0)

    def test_markov_snr_requires_snr0(self):
        snr = MarkovProcess(support=(0.5, 2.0), kernel=((0.5, 0.5), (0.1, 0.9)))
        with pytest.raises(ValidationError):
            StochasticModel(snr=snr, harvest=IidProcess(dist=UNIFORM3))
        StochasticModel(snr=snr, harvest=IidProcess(dist=UNIFORM3), snr0=0.5)

    def test_harvest_kind_restricted(self):
        with pytest.raises(ValidationError):
            StochasticModel(snr=AwgnProcess(mean=1.0), harvest=AwgnProcess(mean=1.0))
        with pytest.raises(ValidationError):
            StochasticModel(snr=AwgnProcess(mean=1.0), harvest=RayleighProcess(mean=1.0))

    def test_json_round_trip_exact(self):
        model = StochasticModel(
            snr=MarkovProcess(support=(0.5, 2.0), kernel=((0.5, 0.5), (0.1, 0.9))),
            harvest=IidProcess(dist=UNIFORM3),
            b1=DiscreteDist((0.0, 1.0 / 3.0), (0.25, 0.75)),
            h0=0.5,
            snr0=2.0,
        )
        back = StochasticModel.from_json(model.to_json())
        assert back == model

    def test_json_round_trip_all_kinds(self):
        for snr in (AwgnProcess(mean=1.5), RayleighProcess(mean=2.5),
                    DeterministicProcess(trace=(1.0, 2.0)),
                    IidProcess(dist=DiscreteDist((1.0, 7.0), (0.4, 0.6)))):
            model = StochasticModel(snr=snr, harvest=IidProcess(dist=UNIFORM3), b1=0.7)
            assert StochasticModel.from_json(model.to_json()) == model

    def test_from_json_rejects_unknown_fields(self):
        raw = {"snr": {"kind": "awgn", "mean": 1.0},
               "harvest": {"kind": "iid", "support": [0.0, 1.0], "probs": [0.5, 0.5]},
               "B1": 1.0}
        with pytest.raises(ValidationError, match="B1"):
            StochasticModel.from_json(raw)

    def test_from_json_type_errors_are_validation_errors(self):
        raw = {"snr": {"kind": "awgn", "mean": "ten"},
               "harvest": {"kind": "iid", "support": [0.0, 1.0], "probs": [0.5, 0.5]}}
        with pytest.raises(ValidationError):
            StochasticModel.from_json(raw)
        with pytest.raises(ValidationError):
            StochasticModel.from_json("{not json")
        with pytest.raises(ValidationError):
            StochasticModel.from_json({"snr": {"kind": "warp", "mean": 1.0},
                                       "harvest": {"kind": "iid", "support": [0], "probs": [1]}})

    def test_mean_snr(self):
        model = StochasticModel(snr=RayleighProcess(mean=7.0),
                                harvest=IidProcess(dist=UNIFORM3))
        assert model.mean_snr() == 7.0

    def test_reference_model_shape(self):
        m = reference_model("awgn", mean_snr=10.0)
        assert m.snr.kind == "awgn" and m.snr.mean == 10.0
        assert m.harvest.kind == "iid"
        assert tuple(m.harvest.dist.support) == (0.0, 0.5, 1.0)
        assert isinstance(m.b1, DiscreteDist)
        r = reference_model("rayleigh", mean_snr=2.0)
        assert r.snr.kind == "rayleigh"
        with pytest.raises(ValidationError):
            reference_model("qam", mean_snr=1.0)


class TestScenario:
    def test_cumulative_energy(self):
        sc = Scenario(K=3, b1=1.0, bmax=math.inf, snr=(1.0, 2.0, 3.0), harvest=(0.5, 0.25))
        np.testing.assert_allclose(sc.cumulative_energy(), [0.0, 1.0, 1.5, 1.75])

    def test_validation(self):
        with pytest.raises(ValidationError):
            Scenario(K=0, b1=1.0, bmax=math.inf, snr=(), harvest=())
        with pytest.raises(ValidationError):
            Scenario(K=2, b1=1.0, bmax=math.inf, snr=(1.0,), harvest=(0.5,))
        with pytest.raises(ValidationError):
            Scenario(K=2, b1=1.0, bmax=math.inf, snr=(1.0, 2.0), harvest=())
        with pytest.raises(ValidationError):
            Scenario(K=2, b1=2.0, bmax=1.0, snr=(1.0, 2.0), harvest=(0.5,))
        with pytest.raises(ValidationError):
            Scenario(K=1, b1=-0.5, bmax=math.inf, snr=(1.0,), harvest=())
        with pytest.raises(ValidationError):
            Scenario(K=1, b1=0.5, bmax=math.inf, snr=(-1.0,), harvest=())

    def test_json_round_trip(self):
        sc = Scenario(K=2, b1=0.7, bmax=1.9, snr=(2.0, 0.5), harvest=(0.3,), h0=0.1)
        back = Scenario.from_json(sc.to_json())
        assert back == sc
        sc_inf = Scenario(K=1, b1=0.7, bmax=math.inf, snr=(2.0,), harvest=())
        raw = json.loads(sc_inf.to_json())
        assert raw["Bmax"] == "inf"
        assert Scenario.from_json(raw) == sc_inf

    def test_from_json_diagnostics(self):
        with pytest.raises(ValidationError, match="missing"):
            Scenario.from_json({"K": 2})
        with pytest.raises(ValidationError, match="unrecognized"):
            Scenario.from_json({"K": 1, "B1": 1.0, "Bmax": "inf", "snr": [1.0],
                                "harvest": [], "b1": 1.0})
        with pytest.raises(ValidationError):
            Scenario.from_json({"K": 1, "B1": 1.0, "Bmax": "lots", "snr": [1.0],
                                "harvest": []})


class TestBatteryStep:
    def test_basic_and_cap(self):
        assert battery_step(1.0, 0.4, 0.2, math.inf) == pytest.approx(0.8)
        assert battery_step(1.0, 0.0, 5.0, 2.0) == 2.0
        assert battery_step(1.0, 1.0, 0.0, math.inf) == 0.0

    def test_overdraw(self):
        with pytest.raises(InfeasibleAllocationError):
            battery_step(1.0, 1.1, 0.0, math.inf)
        # within tolerance the overdraw clips to an empty store
        assert battery_step(1.0, 1.0 + 1e-12, 0.0, math.inf, tol=1e-9) == 0.0

    def test_negative_inputs(self):
        with pytest.raises(InfeasibleAllocationError):
            battery_step(1.0, -0.1, 0.0, math.inf)
        with pytest.raises(DomainError):
            battery_step(1.0, 0.1, -0.2, math.inf)

    def test_array_form(self):
        b = np.array([1.0, 2.0])
        out = battery_step(b, np.array([0.5, 1.0]), np.array([0.1, 3.0]), 2.5)
        np.testing.assert_allclose(out, [0.6, 2.5])


class TestSampling:
    def test_sample_scenario_is_seed_deterministic(self):
        model = reference_model("rayleigh", mean_snr=5.0)
        a = sample_scenario(model, K=4, seed=11)
        b = sample_scenario(model, K=4, seed=11)
        assert a == b
        c = sample_scenario(model, K=4, seed=12)
        assert c != a

    def test_sample_scenario_respects_bmax_clip(self):
        model = reference_model("awgn", mean_snr=1.0)
        for seed in range(20):
            sc = sample_scenario(model, K=2, bmax=0.25, seed=seed)
            assert sc.b1 <= 0.25

    def test_markov_chain_starts_conditioned(self):
        kernel = ((0.9, 0.1), (0.1, 0.9))
        model = StochasticModel(
            snr=AwgnProcess(mean=1.0),
            harvest=MarkovProcess(support=(0.0, 1.0), kernel=kernel),
            b1=1.0, h0=0.0)
        hits = np.array([0, 0])
        n = 4000
        for seed in range(n):
            sc = sample_scenario(model, K=2, seed=seed)
            hits[int(sc.harvest[0] == 1.0)] += 1
        res = scipy.stats.chisquare(hits, n * np.asarray(kernel[0]))
        assert res.pvalue > 0.01

    def test_replay_allocation_matches_staircase(self):
        rng = np.random.default_rng(9)
        for _ in range(25):
            K = int(rng.integers(1, 5))
            sc = Scenario(K=K, b1=float(rng.uniform(0.1, 2)), bmax=math.inf,
                          snr=tuple(rng.uniform(0.1, 10, K)),
                          harvest=tuple(rng.uniform(0, 2, K - 1)))
            res = staircase_waterfill(sc)
            traj = replay_allocation(sc, res.allocation, tol=1e-7)
            assert np.all(np.asarray(traj) >= -1e-12)

    def test_replay_rejects_infeasible(self):
        sc = Scenario(K=2, b1=0.5, bmax=math.inf, snr=(1.0, 1.0), harvest=(0.1,))
        with pytest.raises(InfeasibleAllocationError):
            replay_allocation(sc, (0.6, 0.0))
        with pytest.raises(InfeasibleAllocationError):
            replay_allocation(sc, (0.2, 0.5))
