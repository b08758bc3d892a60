"""Discrete-count hidden Markov model: types, filtering, smoothing, EM.

All recursions use the standard per-bin scaling scheme: the forward pass
normalizes each filtered vector and stores the log of each one-step
normalizer, and the backward pass divides by the same constants. With
that convention the smoothed distribution is the elementwise product of
the two passes and needs no further normalization, which keeps the last
smoothed bin bitwise identical to the last filtered bin.

Probabilities live in linear space throughout; the scaling makes that
safe for arbitrarily long records because no quantity ever drifts far
from one.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import _kernels

# Tolerance on model row sums (initial, transition rows, emission rows).
ROW_SUM_TOL = 1e-12
# Tolerance on posterior row sums.
POSTERIOR_ROW_TOL = 1e-10
# Smallest probability an emission table cell may take after re-estimation.
EMISSION_FLOOR = 1e-12
# Occupancy mass below which a state is treated as unvisited in the M-step.
OCCUPANCY_FLOOR = 1e-12


class ZeroLikelihoodError(ValueError):
    """Raised when an observation has zero probability under the model.

    ``bin_index`` is 1-based, matching how bins are referred to in
    reports and in ``predict_bin``. ``iteration`` is set when the error
    surfaced inside EM.
    """

    def __init__(self, bin_index: int, iteration: int | None = None):
        self.bin_index = int(bin_index)
        self.iteration = iteration
        msg = f"observation likelihood vanished at bin {self.bin_index}"
        if iteration is not None:
            msg += f" during EM iteration {iteration}"
        super().__init__(msg)


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_stochastic(name: str, matrix: np.ndarray) -> None:
    if not np.all(np.isfinite(matrix)):
        raise ValueError(f"{name} contains non-finite entries")
    if matrix.min() < 0.0 or matrix.max() > 1.0:
        raise ValueError(f"{name} entries must lie in [0, 1]")
    sums = matrix.sum(axis=-1)
    worst = np.abs(sums - 1.0).max()
    if worst > ROW_SUM_TOL:
        raise ValueError(
            f"{name} rows must sum to 1 within {ROW_SUM_TOL:g} "
            f"(worst deviation {worst:.3e})"
        )


@dataclass(frozen=True)
class ModelSpec:
    """A discrete-count HMM.

    Attributes
    ----------
    initial : (n_states,) probabilities of the state in the first bin.
    transition : (n_states, n_states) row-stochastic one-bin transition
        matrix; ``transition[i, j]`` is P(next = j | current = i).
    emission : (n_states, max_count + 1) row-stochastic count tables;
        ``emission[i, s]`` is P(count = s | state = i). Column ``max_count``
        absorbs whatever tail mass the modeller folded in.
    """

    initial: np.ndarray
    transition: np.ndarray
    emission: np.ndarray

    def __post_init__(self):
        initial = _frozen_array(self.initial, float)
        transition = _frozen_array(self.transition, float)
        emission = _frozen_array(self.emission, float)
        if initial.ndim != 1 or initial.shape[0] < 1:
            raise ValueError("initial must be a non-empty vector")
        k = initial.shape[0]
        if transition.shape != (k, k):
            raise ValueError(
                f"transition must be ({k}, {k}), got {transition.shape}"
            )
        if emission.ndim != 2 or emission.shape[0] != k or emission.shape[1] < 1:
            raise ValueError(
                f"emission must be ({k}, max_count + 1), got {emission.shape}"
            )
        _check_stochastic("initial", initial[None, :])
        _check_stochastic("transition", transition)
        _check_stochastic("emission", emission)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "emission", emission)

    @property
    def n_states(self) -> int:
        return self.initial.shape[0]

    @property
    def max_count(self) -> int:
        return self.emission.shape[1] - 1

    def replace(self, **changes) -> "ModelSpec":
        """Return a copy with the given fields swapped out."""
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class ObservationSequence:
    """Binned photon counts with their bin width in seconds."""

    counts: np.ndarray
    bin_width: float

    def __post_init__(self):
        counts = _frozen_array(self.counts, np.int64)
        if counts.ndim != 1 or counts.shape[0] < 1:
            raise ValueError("counts must be a non-empty vector")
        if counts.min() < 0:
            raise ValueError("counts must be non-negative")
        width = float(self.bin_width)
        if not np.isfinite(width) or width <= 0.0:
            raise ValueError("bin_width must be a positive number of seconds")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "bin_width", width)

    @property
    def n_bins(self) -> int:
        return self.counts.shape[0]

    def times(self) -> np.ndarray:
        """Start time of each bin in seconds."""
        return np.arange(self.n_bins) * self.bin_width


@dataclass(frozen=True)
class PosteriorTrajectory:
    """Per-bin state distributions plus the incremental log normalizers.

    ``kind`` is "filtered" (conditioned on bins up to t) or "smoothed"
    (conditioned on the whole record). ``log_normalizers[t]`` is
    log P(s_t | s_1..t-1) from the forward pass either way, so
    ``log_normalizers.sum()`` is the record log-likelihood.
    """

    kind: str
    probs: np.ndarray
    log_normalizers: np.ndarray

    def __post_init__(self):
        if self.kind not in ("filtered", "smoothed"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        probs = _frozen_array(self.probs, float)
        log_norm = _frozen_array(self.log_normalizers, float)
        if probs.ndim != 2 or probs.shape[0] < 1:
            raise ValueError("probs must be (n_bins, n_states)")
        if log_norm.shape != (probs.shape[0],):
            raise ValueError("log_normalizers must have one entry per bin")
        if not np.all(np.isfinite(probs)) or probs.min() < 0.0:
            raise ValueError("posterior probabilities must be finite and non-negative")
        worst = np.abs(probs.sum(axis=1) - 1.0).max()
        if worst > POSTERIOR_ROW_TOL:
            raise ValueError(
                f"posterior rows must sum to 1 within {POSTERIOR_ROW_TOL:g} "
                f"(worst deviation {worst:.3e})"
            )
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "log_normalizers", log_norm)

    @property
    def n_bins(self) -> int:
        return self.probs.shape[0]

    @property
    def n_states(self) -> int:
        return self.probs.shape[1]

    def log_likelihood(self) -> float:
        return float(self.log_normalizers.sum())


@dataclass(frozen=True)
class PairwisePosterior:
    """Smoothed joint distributions over adjacent bins.

    ``probs[t, i, j]`` is P(X_t = i, X_{t+1} = j | whole record) for
    t = 0..n_bins-2. Summing over j recovers the smoothed occupancy of
    bin t; summing over i recovers bin t+1.
    """

    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen_array(self.probs, float)
        if probs.ndim != 3 or probs.shape[1] != probs.shape[2]:
            raise ValueError("pairwise probs must be (n_bins - 1, k, k)")
        if probs.shape[0] > 0:
            if not np.all(np.isfinite(probs)) or probs.min() < 0.0:
                raise ValueError("pairwise probabilities must be finite and non-negative")
            worst = np.abs(probs.sum(axis=(1, 2)) - 1.0).max()
            if worst > POSTERIOR_ROW_TOL:
                raise ValueError(
                    f"pairwise tables must sum to 1 within {POSTERIOR_ROW_TOL:g} "
                    f"(worst deviation {worst:.3e})"
                )
        object.__setattr__(self, "probs", probs)


@dataclass(frozen=True)
class FitResult:
    """Outcome of one EM run."""

    model: ModelSpec
    loglik_trace: np.ndarray
    iterations: int
    converged: bool
    final_delta: float

    def __post_init__(self):
        object.__setattr__(
            self, "loglik_trace", _frozen_array(self.loglik_trace, float)
        )

    @property
    def log_likelihood(self) -> float:
        """Log-likelihood recorded at the last completed iteration."""
        return float(self.loglik_trace[-1])


@dataclass(frozen=True)
class BinPrediction:
    """Predictive count distributions for one held-out bin.

    ``full_record`` conditions on every other bin in the record;
    ``forward_only`` conditions on the bins before it alone. ``t`` is
    the 1-based bin index.
    """

    t: int
    full_record: np.ndarray
    forward_only: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "full_record", _frozen_array(self.full_record, float))
        object.__setattr__(self, "forward_only", _frozen_array(self.forward_only, float))


def _likelihood_matrix(model: ModelSpec, counts: np.ndarray) -> np.ndarray:
    """Per-bin emission likelihoods, shape (n_bins, n_states)."""
    too_big = counts > model.max_count
    if too_big.any():
        bad = int(np.argmax(too_big))
        raise ValueError(
            f"count {int(counts[bad])} at bin {bad + 1} exceeds the model's "
            f"max_count of {model.max_count}; clamp or refit with a larger table"
        )
    return model.emission.T[counts]


def clamp_counts(obs: ObservationSequence, max_count: int) -> ObservationSequence:
    """Clip counts above ``max_count`` into the model's overflow column."""
    if max_count < 0:
        raise ValueError("max_count must be non-negative")
    return ObservationSequence(
        np.minimum(obs.counts, max_count), obs.bin_width
    )


def forward_filter(model: ModelSpec, obs: ObservationSequence) -> PosteriorTrajectory:
    """Run the scaled forward recursion.

    Returns the filtered trajectory: row t is P(X_t | counts up to t),
    and the stored log normalizers sum to the record log-likelihood.
    Raises ZeroLikelihoodError if some prefix of the record has zero
    probability under the model.
    """
    lik = _likelihood_matrix(model, obs.counts)
    alpha, scale, fail = _kernels.forward_scaled(
        model.initial, model.transition, lik
    )
    if fail != _kernels.NO_FAILURE:
        raise ZeroLikelihoodError(fail + 1)
    return PosteriorTrajectory(
        kind="filtered", probs=alpha, log_normalizers=np.log(scale)
    )


def log_likelihood(model: ModelSpec, obs: ObservationSequence) -> float:
    """log P(counts | model), via the forward pass."""
    return forward_filter(model, obs).log_likelihood()


def backward_pass(
    model: ModelSpec, obs: ObservationSequence, log_normalizers: np.ndarray
) -> np.ndarray:
    """Backward recursion scaled by the forward normalizers.

    ``log_normalizers`` must come from ``forward_filter`` on the same
    model and record. The returned array has ones in its last row, and
    multiplying it elementwise with the filtered trajectory gives the
    smoothed one directly.
    """
    lik = _likelihood_matrix(model, obs.counts)
    log_normalizers = np.asarray(log_normalizers, dtype=float)
    if log_normalizers.shape != (obs.n_bins,):
        raise ValueError("log_normalizers must have one entry per bin")
    dead = lik.max(axis=1) == 0.0
    if dead.any():
        raise ZeroLikelihoodError(int(np.argmax(dead)) + 1)
    return _kernels.backward_scaled(
        model.transition, lik, np.exp(log_normalizers)
    )


def smooth(
    model: ModelSpec, obs: ObservationSequence
) -> tuple[PosteriorTrajectory, PairwisePosterior]:
    """Forward-backward smoothing.

    Returns the smoothed trajectory together with the pairwise posterior
    over adjacent bins. The smoothed probabilities are the elementwise
    product of the scaled passes, taken as-is: under this scaling each
    row already sums to one, and the final row stays bitwise equal to
    the filtered final row.
    """
    lik = _likelihood_matrix(model, obs.counts)
    alpha, scale, fail = _kernels.forward_scaled(
        model.initial, model.transition, lik
    )
    if fail != _kernels.NO_FAILURE:
        raise ZeroLikelihoodError(fail + 1)
    beta = _kernels.backward_scaled(model.transition, lik, scale)
    smoothed = alpha * beta

    # xi[t, i, j] = alpha[t, i] A[i, j] lik[t+1, j] beta[t+1, j] / c[t+1]
    weighted_next = lik[1:] * beta[1:] / scale[1:, None]
    xi = alpha[:-1, :, None] * model.transition[None, :, :] * weighted_next[:, None, :]

    trajectory = PosteriorTrajectory(
        kind="smoothed", probs=smoothed, log_normalizers=np.log(scale)
    )
    return trajectory, PairwisePosterior(xi)


def _transition_update(
    xi_sum: np.ndarray, occupancy: np.ndarray, previous: np.ndarray | None
) -> np.ndarray:
    k = xi_sum.shape[0]
    out = np.empty((k, k))
    for i in range(k):
        if occupancy[i] < OCCUPANCY_FLOOR:
            row = previous[i] if previous is not None else np.full(k, 1.0 / k)
        else:
            row = xi_sum[i] / occupancy[i]
        out[i] = row / row.sum()
    return out


def _emission_update(
    weighted_counts: np.ndarray, occupancy: np.ndarray, previous: np.ndarray | None
) -> np.ndarray:
    k, width = weighted_counts.shape
    out = np.empty((k, width))
    for i in range(k):
        if occupancy[i] < OCCUPANCY_FLOOR:
            row = previous[i] if previous is not None else np.full(width, 1.0 / width)
        else:
            row = np.maximum(weighted_counts[i] / occupancy[i], EMISSION_FLOOR)
        out[i] = row / row.sum()
    return out


def reestimate_transitions(
    pairwise: PairwisePosterior,
    smoothed: PosteriorTrajectory,
    previous: np.ndarray | None = None,
) -> np.ndarray:
    """M-step update of the transition matrix.

    Row i is the pairwise posterior mass leaving state i divided by the
    smoothed occupancy of i over all bins but the last, then normalized.
    A state whose occupancy falls below the floor keeps its row from
    ``previous`` (uniform if none is given), so EM never manufactures
    dynamics for a state the data never visits.
    """
    xi_sum = pairwise.probs.sum(axis=0)
    occupancy = smoothed.probs[:-1].sum(axis=0)
    return _transition_update(xi_sum, occupancy, previous)


def reestimate_emissions(
    smoothed: PosteriorTrajectory,
    obs: ObservationSequence,
    max_count: int | None = None,
    previous: np.ndarray | None = None,
) -> np.ndarray:
    """M-step update of the emission tables.

    Each row is the occupancy-weighted histogram of the observed counts,
    floored at EMISSION_FLOOR and renormalized so no cell is ever exactly
    zero (a zero would make future records with that count impossible).
    The table spans counts 0..max_count; when ``max_count`` is omitted it
    is taken from ``previous``, and failing that from the largest
    observed count.
    """
    if max_count is not None:
        width = int(max_count) + 1
    elif previous is not None:
        width = previous.shape[1]
    else:
        width = int(obs.counts.max()) + 1
    if obs.counts.max() >= width:
        raise ValueError("observed counts exceed the emission table width")
    if previous is not None and previous.shape[1] != width:
        raise ValueError("previous emission table width disagrees with max_count")
    k = smoothed.n_states
    weighted = np.zeros((width, k))
    np.add.at(weighted, obs.counts, smoothed.probs)
    occupancy = smoothed.probs.sum(axis=0)
    return _emission_update(weighted.T.copy(), occupancy, previous)


def reestimate_initial(smoothed: PosteriorTrajectory) -> np.ndarray:
    """M-step update of the first-bin distribution."""
    first = smoothed.probs[0]
    return first / first.sum()


def baum_welch(
    model: ModelSpec,
    obs: ObservationSequence,
    tol: float = 1e-9,
    max_iter: int = 2000,
) -> FitResult:
    """Iterate EM from ``model`` until the parameters stop moving.

    Convergence is declared when the largest absolute change across all
    of (initial, transition, emission) drops below ``tol``. The returned
    trace holds the log-likelihood of the model entering each iteration,
    so it is non-decreasing up to floating-point slack.

    Raises ZeroLikelihoodError (with the iteration attached) if some
    intermediate model assigns the record zero probability; the floored
    emission update makes that impossible after the first iteration, so
    in practice only a hostile starting model can trigger it.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")

    counts = obs.counts
    trace = []
    converged = False
    delta = np.inf
    iterations = 0

    for iteration in range(1, max_iter + 1):
        lik = _likelihood_matrix(model, counts)
        loglik, gamma1, xi_sum, occ_head, occ_all, emis_num, fail = _kernels.em_stats(
            model.initial, model.transition, lik, counts, model.max_count + 1
        )
        if fail != _kernels.NO_FAILURE:
            raise ZeroLikelihoodError(fail + 1, iteration=iteration)

        trace.append(loglik)
        iterations = iteration

        new_initial = gamma1 / gamma1.sum()
        new_transition = _transition_update(xi_sum, occ_head, model.transition)
        new_emission = _emission_update(emis_num, occ_all, model.emission)

        delta = max(
            np.abs(new_initial - model.initial).max(),
            np.abs(new_transition - model.transition).max(),
            np.abs(new_emission - model.emission).max(),
        )
        model = ModelSpec(new_initial, new_transition, new_emission)
        if delta < tol:
            converged = True
            break

    return FitResult(
        model=model,
        loglik_trace=np.array(trace),
        iterations=iterations,
        converged=converged,
        final_delta=float(delta),
    )


def predict_bin(model: ModelSpec, obs: ObservationSequence, t: int) -> BinPrediction:
    """Predictive count distributions for bin ``t`` (1-based).

    The full-record prediction marginalizes bin t out of the smoother:
    its likelihood column is replaced by ones, the forward-backward pass
    is re-run, and the resulting state posterior is pushed through the
    emission tables. The forward-only prediction propagates the filtered
    state at t-1 one step instead (the initial distribution when t = 1).
    """
    if not 1 <= t <= obs.n_bins:
        raise ValueError(f"t must be in 1..{obs.n_bins}, got {t}")
    lik = _likelihood_matrix(model, obs.counts)
    lik[t - 1, :] = 1.0
    alpha, scale, fail = _kernels.forward_scaled(model.initial, model.transition, lik)
    if fail != _kernels.NO_FAILURE:
        raise ZeroLikelihoodError(fail + 1)
    beta = _kernels.backward_scaled(model.transition, lik, scale)

    weights = alpha[t - 1] * beta[t - 1]
    weights = weights / weights.sum()
    full = weights @ model.emission

    if t == 1:
        prior = model.initial
    else:
        prior = alpha[t - 2] @ model.transition
        prior = prior / prior.sum()
    ahead = prior @ model.emission

    return BinPrediction(t=t, full_record=full, forward_only=ahead)
