"""Seeded simulation of telegraph count records.

Reproducibility contract: every draw flows from one explicit 64-bit
seed. The state/count chain and the optional click-scatter step consume
independent child streams ([seed, 0] and [seed, 1]) so that toggling
timestamp output never changes the simulated counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import ModelSpec, ObservationSequence
from .ingest import DEFAULT_TICK_RESOLUTION, PhotonRecord, _ticks_per_bin

DEFAULT_BIN_WIDTH = 50e-6

_CHAIN_STREAM = 0
_SCATTER_STREAM = 1


@dataclass(frozen=True)
class SimConfig:
    """Everything a simulation run depends on.

    ``emit_timestamps`` additionally scatters each bin's counts onto
    uniformly random ticks inside that bin, giving a synthetic detector
    record that round-trips through ingestion.
    """

    model: ModelSpec
    n_bins: int
    seed: int
    bin_width: float = DEFAULT_BIN_WIDTH
    emit_timestamps: bool = False
    tick_resolution: float = DEFAULT_TICK_RESOLUTION

    def __post_init__(self):
        if int(self.n_bins) < 1:
            raise ValueError("n_bins must be at least 1")
        if int(self.seed) < 0:
            raise ValueError("seed must be a non-negative 64-bit integer")
        object.__setattr__(self, "n_bins", int(self.n_bins))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "bin_width", float(self.bin_width))
        if self.emit_timestamps:
            # Fail fast if the bin width cannot be expressed in ticks.
            _ticks_per_bin(self.bin_width, self.tick_resolution)


def simulate_chain(config: SimConfig) -> tuple[np.ndarray, ObservationSequence]:
    """Draw a state path and its counts.

    Returns (states, observations) where states[t] is the hidden state
    of bin t. Two calls with equal configs produce bitwise-identical
    output.
    """
    from . import _kernels

    model = config.model
    rng = np.random.default_rng([config.seed, _CHAIN_STREAM])
    state_draws = rng.random(config.n_bins)
    count_draws = rng.random(config.n_bins)

    initial_cdf = np.cumsum(model.initial)
    transition_cdf = np.cumsum(model.transition, axis=1)
    states = _kernels.sample_path(initial_cdf, transition_cdf, state_draws)

    emission_cdf = np.cumsum(model.emission, axis=1)
    counts = np.empty(config.n_bins, dtype=np.int64)
    for i in range(model.n_states):
        here = states == i
        counts[here] = np.searchsorted(emission_cdf[i], count_draws[here], side="right")
    np.clip(counts, 0, model.max_count, out=counts)

    return states, ObservationSequence(counts, config.bin_width)


def scatter_timestamps(
    obs: ObservationSequence,
    tick_resolution: float = DEFAULT_TICK_RESOLUTION,
    rng: np.random.Generator | None = None,
    seed: int | None = None,
) -> PhotonRecord:
    """Place each bin's counts on uniform random ticks within the bin."""
    if rng is None:
        if seed is None:
            raise ValueError("pass either a generator or a seed")
        rng = np.random.default_rng([int(seed), _SCATTER_STREAM])
    width_ticks = _ticks_per_bin(obs.bin_width, tick_resolution)
    bases = np.repeat(np.arange(obs.n_bins, dtype=np.int64) * width_ticks, obs.counts)
    offsets = rng.integers(0, width_ticks, size=bases.shape[0], dtype=np.int64)
    ticks = np.sort(bases + offsets)
    return PhotonRecord(ticks, tick_resolution)


def run_simulation(
    config: SimConfig,
) -> tuple[np.ndarray, ObservationSequence, PhotonRecord | None]:
    """simulate_chain plus the optional timestamp scatter."""
    states, obs = simulate_chain(config)
    record = None
    if config.emit_timestamps:
        record = scatter_timestamps(
            obs,
            config.tick_resolution,
            rng=np.random.default_rng([config.seed, _SCATTER_STREAM]),
        )
    return states, obs, record


def poisson_emission_table(mean: float, max_count: int) -> np.ndarray:
    """Poisson count probabilities with the tail folded into the last cell.

    Entry s < max_count is the plain Poisson pmf at s for the given mean;
    entry max_count absorbs all remaining mass, so the row sums to one
    exactly (up to rounding) for any truncation point.
    """
    if mean < 0.0 or not np.isfinite(mean):
        raise ValueError("mean must be a finite non-negative rate per bin")
    max_count = int(max_count)
    if max_count < 0:
        raise ValueError("max_count must be non-negative")
    row = np.empty(max_count + 1)
    if max_count == 0:
        row[0] = 1.0
        return row
    support = np.arange(max_count)
    row[:max_count] = stats.poisson.pmf(support, mean)
    row[max_count] = stats.poisson.sf(max_count - 1, mean)
    return row / row.sum()


def default_paper_model(max_count: int = 12) -> ModelSpec:
    """The stock three-state telegraph model used throughout the docs.

    State 0 is the bright hyperfine level (mean 1.5 counts per 50 us
    bin); states 1 and 2 are two dark sublevels with means 0.25 and 0.5.
    Per-bin transition probabilities: the bright state leaks 0.004 total
    to the dark pair (split evenly), each dark state returns at 0.003,
    and the dark sublevels mix with each other at 0.001. The first-bin
    distribution is uniform, reflecting no knowledge of the preparation.
    """
    means = (1.5, 0.25, 0.5)
    emission = np.vstack([poisson_emission_table(m, max_count) for m in means])
    transition = np.array(
        [
            [0.996, 0.002, 0.002],
            [0.003, 0.996, 0.001],
            [0.003, 0.001, 0.996],
        ]
    )
    initial = np.full(3, 1.0 / 3.0)
    return ModelSpec(initial=initial, transition=transition, emission=emission)
