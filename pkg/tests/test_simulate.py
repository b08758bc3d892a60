"""Simulator tests: determinism, edge models, statistics, the stock model."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

import telegraph_hmm as th

from conftest import random_model


class TestSimConfig:
    def test_rejects_bad_bins(self, tiny_model):
        with pytest.raises(ValueError, match="n_bins"):
            th.SimConfig(model=tiny_model, n_bins=0, seed=1)

    def test_rejects_negative_seed(self, tiny_model):
        with pytest.raises(ValueError, match="seed"):
            th.SimConfig(model=tiny_model, n_bins=10, seed=-1)

    def test_rejects_unalignable_bin_width(self, tiny_model):
        with pytest.raises(ValueError, match="whole number"):
            th.SimConfig(
                model=tiny_model, n_bins=10, seed=1,
                bin_width=75e-9, emit_timestamps=True,
            )


class TestSimulateChain:
    def test_deterministic(self, tiny_model):
        cfg = th.SimConfig(model=tiny_model, n_bins=500, seed=123)
        s1, o1 = th.simulate_chain(cfg)
        s2, o2 = th.simulate_chain(cfg)
        assert np.array_equal(s1, s2)
        assert np.array_equal(o1.counts, o2.counts)

    def test_different_seeds_differ(self, tiny_model):
        _, o1 = th.simulate_chain(th.SimConfig(model=tiny_model, n_bins=500, seed=1))
        _, o2 = th.simulate_chain(th.SimConfig(model=tiny_model, n_bins=500, seed=2))
        assert not np.array_equal(o1.counts, o2.counts)

    def test_identity_chain_freezes_state(self):
        model = th.ModelSpec(
            initial=[0.0, 1.0],
            transition=[[1.0, 0.0], [0.0, 1.0]],
            emission=[[1.0, 0.0], [0.5, 0.5]],
        )
        states, _ = th.simulate_chain(th.SimConfig(model=model, n_bins=200, seed=9))
        assert np.all(states == 1)

    def test_deterministic_emission_pins_counts(self):
        model = th.ModelSpec(
            initial=[1.0],
            transition=[[1.0]],
            emission=[[0.0, 0.0, 1.0]],
        )
        _, obs = th.simulate_chain(th.SimConfig(model=model, n_bins=100, seed=3))
        assert np.all(obs.counts == 2)

    def test_counts_respect_model_and_timestamps_do_not_disturb_chain(self):
        model = th.default_paper_model()
        base = th.SimConfig(model=model, n_bins=400, seed=55)
        with_ts = th.SimConfig(
            model=model, n_bins=400, seed=55, emit_timestamps=True
        )
        s1, o1 = th.simulate_chain(base)
        s2, o2, record = th.run_simulation(with_ts)
        assert np.array_equal(s1, s2)
        assert np.array_equal(o1.counts, o2.counts)
        assert record is not None
        assert record.n_clicks == int(o1.counts.sum())

    def test_empirical_frequencies_within_4_sigma(self):
        rng_model = th.ModelSpec(
            initial=[0.6, 0.4],
            transition=[[0.95, 0.05], [0.10, 0.90]],
            emission=[[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]],
        )
        n = 200_000
        states, obs = th.simulate_chain(
            th.SimConfig(model=rng_model, n_bins=n, seed=2718)
        )
        # Transition frequencies, conditioned on the source state.
        for i in range(2):
            from_i = np.flatnonzero(states[:-1] == i)
            n_i = from_i.size
            for j in range(2):
                p = rng_model.transition[i, j]
                observed = np.count_nonzero(states[from_i + 1] == j)
                sigma = np.sqrt(n_i * p * (1 - p))
                assert abs(observed - n_i * p) < 4 * sigma
        # Emission frequencies, conditioned on the state.
        for i in range(2):
            in_i = states == i
            n_i = int(in_i.sum())
            for s in range(3):
                p = rng_model.emission[i, s]
                observed = np.count_nonzero(obs.counts[in_i] == s)
                sigma = np.sqrt(n_i * p * (1 - p))
                assert abs(observed - n_i * p) < 4 * sigma


class TestScatterTimestamps:
    def test_round_trip_through_binning(self):
        model = th.default_paper_model()
        cfg = th.SimConfig(model=model, n_bins=300, seed=77, emit_timestamps=True)
        _, obs, record = th.run_simulation(cfg)
        back = th.bin_counts(
            record, obs.bin_width, span=obs.n_bins * obs.bin_width
        )
        assert np.array_equal(back.counts, obs.counts)

    def test_ticks_stay_inside_their_bins(self):
        obs = th.ObservationSequence([3, 0, 2], 50e-6)
        record = th.scatter_timestamps(obs, seed=4)
        assert record.n_clicks == 5
        bins = record.ticks // 1000
        assert bins.tolist() == [0, 0, 0, 2, 2]

    def test_requires_seed_or_rng(self):
        obs = th.ObservationSequence([1], 50e-6)
        with pytest.raises(ValueError, match="generator or a seed"):
            th.scatter_timestamps(obs)


class TestPoissonEmissionTable:
    def test_rows_sum_to_one(self):
        for mean in (0.0, 0.25, 1.5, 7.0):
            row = th.poisson_emission_table(mean, 12)
            assert_allclose(row.sum(), 1.0, atol=1e-15)

    def test_matches_pmf_below_fold(self):
        row = th.poisson_emission_table(1.5, 10)
        assert_allclose(row[0], np.exp(-1.5), rtol=1e-12)
        assert_allclose(row[:10], stats.poisson.pmf(np.arange(10), 1.5), rtol=1e-12)

    def test_tail_fold(self):
        row = th.poisson_emission_table(2.0, 3)
        assert_allclose(row[3], stats.poisson.sf(2, 2.0), rtol=1e-12)

    def test_zero_mean_is_delta(self):
        assert_allclose(th.poisson_emission_table(0.0, 5), [1, 0, 0, 0, 0, 0])

    def test_max_count_zero(self):
        assert_allclose(th.poisson_emission_table(3.0, 0), [1.0])

    def test_rejects_negative_mean(self):
        with pytest.raises(ValueError):
            th.poisson_emission_table(-1.0, 5)


class TestDefaultPaperModel:
    def test_structure(self):
        model = th.default_paper_model()
        assert model.n_states == 3
        assert model.max_count == 12
        assert_allclose(model.transition.sum(axis=1), 1.0, atol=1e-15)
        assert_allclose(model.initial, 1.0 / 3.0)

    def test_means(self):
        means = th.emission_means(th.default_paper_model())
        assert_allclose(means, [1.5, 0.25, 0.5], atol=1e-6)

    def test_transition_probabilities(self):
        model = th.default_paper_model()
        assert_allclose(model.transition[0], [0.996, 0.002, 0.002], atol=1e-15)
        assert_allclose(model.transition[1], [0.003, 0.996, 0.001], atol=1e-15)
        assert_allclose(model.transition[2], [0.003, 0.001, 0.996], atol=1e-15)

    def test_aggregate_rates(self):
        model = th.default_paper_model()
        labeling = th.assign_labels(model)
        rates = th.rates_from_transitions(model, labeling, 50e-6)
        assert_allclose(rates.f3_to_f4, 80.0, rtol=1e-9)
        assert_allclose(rates.f4_to_f3, 60.0, rtol=1e-9)

    def test_dark_counts_are_super_poissonian(self):
        # The dark manifold mixes two Poisson levels, so its aggregate
        # counts must show variance above the mean.
        model = th.default_paper_model()
        states, obs = th.simulate_chain(
            th.SimConfig(model=model, n_bins=1_000_000, seed=600)
        )
        dark = obs.counts[states != 0]
        assert dark.var() > dark.mean()
