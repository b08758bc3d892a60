"""Brute-force posterior computation by explicit path enumeration.

This module exists to cross-check the recursive implementations in
:mod:`telegraph_hmm.core` on small instances. It shares no code with
them: every quantity is obtained by summing the joint probability
P(path, counts) over all n_states ** n_bins state paths, which is
exponential but exact up to ordinary floating-point rounding.
"""

from __future__ import annotations

import numpy as np

from .core import (
    ModelSpec,
    ObservationSequence,
    PairwisePosterior,
    PosteriorTrajectory,
    ZeroLikelihoodError,
)

# Refuse instances with more paths than this; enumeration above it is
# pointless for a sanity oracle and would only burn memory.
MAX_PATHS = 10_000_000

_CHUNK = 1 << 16


def _check_size(n_states: int, n_bins: int) -> None:
    if n_states**n_bins > MAX_PATHS:
        raise ValueError(
            f"enumeration over {n_states}^{n_bins} paths exceeds the "
            f"{MAX_PATHS} path ceiling; use the recursive routines instead"
        )


def _path_weights(model: ModelSpec, counts: np.ndarray, paths: np.ndarray) -> np.ndarray:
    """Joint probability of each path with the observed counts."""
    lik = model.emission.T[counts]
    w = model.initial[paths[:, 0]] * lik[0, paths[:, 0]]
    for t in range(1, paths.shape[1]):
        w = w * model.transition[paths[:, t - 1], paths[:, t]]
        w = w * lik[t, paths[:, t]]
    return w


def _enumerate(model: ModelSpec, counts: np.ndarray):
    """Total probability, per-bin marginals, and adjacent-pair marginals."""
    k = model.n_states
    n = counts.shape[0]
    total = 0.0
    marginals = np.zeros((n, k))
    pairs = np.zeros((max(n - 1, 0), k, k))

    n_paths = k**n
    shape = (k,) * n
    for start in range(0, n_paths, _CHUNK):
        ids = np.arange(start, min(start + _CHUNK, n_paths))
        paths = np.stack(np.unravel_index(ids, shape), axis=1)
        w = _path_weights(model, counts, paths)
        total += w.sum()
        for t in range(n):
            np.add.at(marginals[t], paths[:, t], w)
        for t in range(n - 1):
            np.add.at(pairs[t], (paths[:, t], paths[:, t + 1]), w)

    return total, marginals, pairs


def _prefix_totals(model: ModelSpec, counts: np.ndarray) -> np.ndarray:
    """P(first t bins) for t = 1..n, each by its own enumeration."""
    n = counts.shape[0]
    totals = np.empty(n)
    for t in range(1, n + 1):
        totals[t - 1], _, _ = _enumerate(model, counts[:t])
    return totals


def _log_normalizers(totals: np.ndarray) -> np.ndarray:
    out = np.empty_like(totals)
    out[0] = np.log(totals[0])
    out[1:] = np.log(totals[1:] / totals[:-1])
    return out


def brute_force_posterior(
    model: ModelSpec, obs: ObservationSequence
) -> tuple[PosteriorTrajectory, float]:
    """Smoothed trajectory and log-likelihood by full enumeration.

    Only instances with at most MAX_PATHS state paths are accepted.
    Raises the same zero-likelihood error as the recursive code when the
    record is impossible under the model.
    """
    _check_size(model.n_states, obs.n_bins)
    total, marginals, _ = _enumerate(model, obs.counts)
    if total <= 0.0:
        # Locate the first impossible prefix so the error matches
        # forward_filter's report.
        for t in range(1, obs.n_bins + 1):
            sub, _, _ = _enumerate(model, obs.counts[:t])
            if sub <= 0.0:
                raise ZeroLikelihoodError(t)
    totals = _prefix_totals(model, obs.counts)
    trajectory = PosteriorTrajectory(
        kind="smoothed",
        probs=marginals / total,
        log_normalizers=_log_normalizers(totals),
    )
    return trajectory, float(np.log(total))


def brute_force_filtered(
    model: ModelSpec, obs: ObservationSequence
) -> PosteriorTrajectory:
    """Filtered trajectory by enumerating every record prefix."""
    _check_size(model.n_states, obs.n_bins)
    n = obs.n_bins
    k = model.n_states
    probs = np.empty((n, k))
    totals = np.empty(n)
    for t in range(1, n + 1):
        total, marginals, _ = _enumerate(model, obs.counts[:t])
        if total <= 0.0:
            raise ZeroLikelihoodError(t)
        totals[t - 1] = total
        probs[t - 1] = marginals[t - 1] / total
    return PosteriorTrajectory(
        kind="filtered", probs=probs, log_normalizers=_log_normalizers(totals)
    )


def brute_force_pairwise(
    model: ModelSpec, obs: ObservationSequence
) -> PairwisePosterior:
    """Smoothed adjacent-pair posterior by full enumeration."""
    _check_size(model.n_states, obs.n_bins)
    total, _, pairs = _enumerate(model, obs.counts)
    if total <= 0.0:
        for t in range(1, obs.n_bins + 1):
            sub, _, _ = _enumerate(model, obs.counts[:t])
            if sub <= 0.0:
                raise ZeroLikelihoodError(t)
    return PairwisePosterior(pairs / total)
