"""Multi-state fitting, model comparison, and physical read-out.

The states of a fitted model carry no inherent meaning, so everything
here works in terms of emission means: states are grouped into a bright
"F3" family and a dark "F4" family, populations are aggregated over the
groups, and per-second hopping rates between the groups are derived from
the transition matrix with stationary-distribution weighting.
"""

from __future__ import annotations

import dataclasses
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import (
    FitResult,
    ModelSpec,
    ObservationSequence,
    PosteriorTrajectory,
    ZeroLikelihoodError,
    baum_welch,
)

BRIGHT_LABEL = "F3"
DARK_LABEL = "F4"

# An eigenvalue this close to 1 counts as a unit eigenvalue when testing
# for a unique stationary distribution.
_UNIT_EIG_TOL = 1e-9


class NonErgodicError(ValueError):
    """The transition matrix has no unique stationary distribution."""


def emission_means(model: ModelSpec) -> np.ndarray:
    """Expected count per bin for each state."""
    support = np.arange(model.max_count + 1)
    return model.emission @ support


def permute_states(model: ModelSpec, order: Sequence[int]) -> ModelSpec:
    """Relabel states so new state i is old state order[i]."""
    order = np.asarray(order, dtype=int)
    if sorted(order.tolist()) != list(range(model.n_states)):
        raise ValueError(f"order must be a permutation of 0..{model.n_states - 1}")
    return ModelSpec(
        initial=model.initial[order],
        transition=model.transition[np.ix_(order, order)],
        emission=model.emission[order],
    )


def canonicalize(model: ModelSpec) -> ModelSpec:
    """Permute states into ascending emission-mean order.

    EM assigns state indices arbitrarily, so two fits of the same record
    can describe the same distribution with shuffled labels. Sorting by
    mean count (stable on ties) gives every fit a single comparable
    form; the described distribution is unchanged.
    """
    order = np.argsort(emission_means(model), kind="stable")
    return permute_states(model, order)


@dataclass(frozen=True)
class StateLabeling:
    """Assignment of model states to the bright/dark groups.

    ``order`` lists state indices by ascending emission mean (stable in
    the original index on ties); ``labels[i]`` is the group of state i.
    """

    order: tuple[int, ...]
    labels: tuple[str, ...]
    means: tuple[float, ...]

    def states_in(self, label: str) -> tuple[int, ...]:
        return tuple(i for i, lab in enumerate(self.labels) if lab == label)

    @property
    def bright_states(self) -> tuple[int, ...]:
        return self.states_in(BRIGHT_LABEL)

    @property
    def dark_states(self) -> tuple[int, ...]:
        return self.states_in(DARK_LABEL)


def assign_labels(model: ModelSpec, threshold: float | None = None) -> StateLabeling:
    """Group states into bright (F3) and dark (F4) by emission mean.

    Without a threshold, exactly the states attaining the maximum mean
    are bright and the rest are dark (a one-state model is all bright).
    With a threshold, states whose mean exceeds it are bright. An empty
    group is permitted but triggers a warning since downstream rates are
    then degenerate.
    """
    means = emission_means(model)
    order = tuple(int(i) for i in np.argsort(means, kind="stable"))
    if threshold is None:
        top = means.max()
        bright = means >= top
    else:
        bright = means > float(threshold)
    labels = tuple(BRIGHT_LABEL if b else DARK_LABEL for b in bright)
    if bright.all() and model.n_states > 1:
        warnings.warn(
            "every state landed in the bright group; rates between groups "
            "will be degenerate",
            stacklevel=2,
        )
    if not bright.any():
        warnings.warn(
            "no state landed in the bright group; rates between groups "
            "will be degenerate",
            stacklevel=2,
        )
    return StateLabeling(order=order, labels=labels, means=tuple(float(m) for m in means))


def aggregate_populations(
    trajectory: PosteriorTrajectory, labeling: StateLabeling
) -> np.ndarray:
    """Collapse per-state posteriors to (P_F3, P_F4) columns."""
    if trajectory.n_states != len(labeling.labels):
        raise ValueError("labeling does not match the trajectory's state count")
    bright = list(labeling.bright_states)
    dark = list(labeling.dark_states)
    out = np.empty((trajectory.n_bins, 2))
    out[:, 0] = trajectory.probs[:, bright].sum(axis=1)
    out[:, 1] = trajectory.probs[:, dark].sum(axis=1)
    return out


def stationary_distribution(transition: np.ndarray) -> np.ndarray:
    """Unique stationary distribution of a row-stochastic matrix.

    Raises NonErgodicError when the unit eigenvalue is not simple, which
    covers block-diagonal and otherwise decomposable chains.
    """
    transition = np.asarray(transition, dtype=float)
    values, vectors = np.linalg.eig(transition.T)
    unit = np.abs(values - 1.0) < _UNIT_EIG_TOL
    n_unit = int(np.count_nonzero(unit))
    if n_unit != 1:
        raise NonErgodicError(
            f"transition matrix has {n_unit} unit eigenvalues; no unique "
            "stationary distribution exists"
        )
    vec = np.real(vectors[:, int(np.argmax(unit))])
    vec = np.abs(vec)
    return vec / vec.sum()


class GroupRates(NamedTuple):
    """Aggregate per-second hopping rates between the two groups."""

    f3_to_f4: float
    f4_to_f3: float


def rates_from_transitions(
    model: ModelSpec, labeling: StateLabeling, bin_width: float
) -> GroupRates:
    """Per-second aggregate rates between the bright and dark groups.

    Within each group, per-state exit probabilities are averaged with
    stationary-distribution weights before dividing by the bin width.
    A transition matrix that never crosses between the groups yields
    zero rates with a warning; a chain without a unique stationary
    distribution that nonetheless mixes the groups is an error.
    """
    if bin_width <= 0.0:
        raise ValueError("bin_width must be positive seconds")
    A = model.transition
    bright = list(labeling.bright_states)
    dark = list(labeling.dark_states)

    if not bright or not dark:
        warnings.warn("one of the groups is empty; rates are zero", stacklevel=2)
        return GroupRates(0.0, 0.0)

    cross_bd = A[np.ix_(bright, dark)].sum(axis=1)
    cross_db = A[np.ix_(dark, bright)].sum(axis=1)
    if cross_bd.sum() == 0.0 and cross_db.sum() == 0.0:
        warnings.warn(
            "the groups never exchange population; rates are zero", stacklevel=2
        )
        return GroupRates(0.0, 0.0)

    pi = stationary_distribution(A)

    def group_rate(members: list[int], exit_mass: np.ndarray) -> float:
        weight = pi[members]
        total = weight.sum()
        if total <= 1e-300:
            warnings.warn(
                "a group carries no stationary mass; its exit rate is zero",
                stacklevel=3,
            )
            return 0.0
        return float((weight / total) @ exit_mass) / bin_width

    return GroupRates(
        f3_to_f4=group_rate(bright, cross_bd),
        f4_to_f3=group_rate(dark, cross_db),
    )


@dataclass(frozen=True)
class KStateFit:
    """Best-of-restarts EM fit for one state count.

    ``best.model`` is canonicalized: its states come in ascending
    emission-mean order regardless of how the winning restart happened
    to label them. A restart that aborted on a zero-likelihood record
    shows up with log-likelihood -inf and its message in
    ``restart_errors``; it never wins.
    """

    n_states: int
    best: FitResult
    best_index: int
    restart_seeds: tuple[int, ...]
    restart_logliks: tuple[float, ...]
    restart_converged: tuple[bool, ...]
    restart_errors: tuple[str | None, ...]
    n_obs: int


def _initial_guess(
    counts: np.ndarray, n_states: int, max_count: int, rng: np.random.Generator
) -> ModelSpec:
    """Random but data-aware EM starting point.

    Transition rows are flat Dirichlet draws. Each state's emission row
    perturbs the global count histogram by a random geometric tilt
    hist[s] * g**s with log(g) uniform on [log 1/3, log 3]: the states
    start with distinct mean count levels spread around the record's
    overall profile, which breaks the label symmetry hard enough for EM
    to segment the record within the first few iterations.
    """
    k = n_states
    transition = np.vstack([rng.dirichlet(np.ones(k)) for _ in range(k)])

    hist = np.bincount(counts, minlength=max_count + 1).astype(float)
    hist /= hist.sum()
    support = np.arange(max_count + 1)
    emission = np.empty((k, max_count + 1))
    for i in range(k):
        tilt = np.exp(rng.uniform(np.log(1.0 / 3.0), np.log(3.0)))
        row = np.maximum(hist * tilt**support, 1e-12)
        emission[i] = row / row.sum()

    initial = np.full(k, 1.0 / k)
    return ModelSpec(initial=initial, transition=transition, emission=emission)


def _run_restart(args) -> tuple[int, FitResult | None, str | None]:
    (index, counts, bin_width, n_states, max_count, base_seed, tol, max_iter) = args
    obs = ObservationSequence(counts, bin_width)
    rng = np.random.default_rng([base_seed, index])
    start = _initial_guess(counts, n_states, max_count, rng)
    try:
        return index, baum_welch(start, obs, tol=tol, max_iter=max_iter), None
    except ZeroLikelihoodError as exc:
        # One impossible restart must not take down the others; it is
        # reported as a string so the result pickles across workers.
        return index, None, str(exc)


def fit_restarts(
    obs: ObservationSequence,
    n_states: int,
    base_seed: int,
    restarts: int = 5,
    tol: float = 1e-9,
    max_iter: int = 2000,
    max_count: int | None = None,
    workers: int = 1,
) -> KStateFit:
    """Fit a k-state model by EM from several seeded random starts.

    Restart r draws its starting point from the [base_seed, r] stream,
    so the whole procedure is reproducible and individual restarts can
    be re-run in isolation. The restart with the highest final
    log-likelihood wins; ties go to the lowest restart index. With
    ``workers`` > 1 restarts run in separate processes, which does not
    change the result, only the wall time.
    """
    if n_states < 1:
        raise ValueError("n_states must be at least 1")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    if base_seed < 0:
        raise ValueError("base_seed must be a non-negative 64-bit integer")
    if max_count is None:
        max_count = int(obs.counts.max()) + 2
    if obs.counts.max() > max_count:
        raise ValueError(
            f"observed counts reach {int(obs.counts.max())}, beyond the "
            f"emission table's max_count of {max_count}; clamp first or "
            "enlarge the table"
        )

    tasks = [
        (r, obs.counts, obs.bin_width, n_states, max_count, base_seed, tol, max_iter)
        for r in range(restarts)
    ]
    results: list[FitResult | None] = [None] * restarts
    errors: list[str | None] = [None] * restarts
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for index, fit, error in pool.map(_run_restart, tasks):
                results[index] = fit
                errors[index] = error
    else:
        for task in tasks:
            index, fit, error = _run_restart(task)
            results[index] = fit
            errors[index] = error

    if all(fit is None for fit in results):
        raise ValueError(
            f"all {restarts} restarts failed: "
            + "; ".join(f"restart {r}: {msg}" for r, msg in enumerate(errors))
        )

    logliks = [
        fit.log_likelihood if fit is not None else float("-inf") for fit in results
    ]
    best_index = int(np.argmax(logliks))  # argmax takes the first maximum
    best = results[best_index]
    best = dataclasses.replace(best, model=canonicalize(best.model))
    return KStateFit(
        n_states=n_states,
        best=best,
        best_index=best_index,
        restart_seeds=tuple(range(restarts)),
        restart_logliks=tuple(logliks),
        restart_converged=tuple(
            fit.converged if fit is not None else False for fit in results
        ),
        restart_errors=tuple(errors),
        n_obs=obs.n_bins,
    )


def fit_k_states(
    obs: ObservationSequence,
    n_states: int,
    base_seed: int,
    restarts: int = 5,
    tol: float = 1e-9,
    max_iter: int = 2000,
    max_count: int | None = None,
    workers: int = 1,
) -> FitResult:
    """Convenience wrapper around fit_restarts returning only the winner."""
    return fit_restarts(
        obs,
        n_states,
        base_seed,
        restarts=restarts,
        tol=tol,
        max_iter=max_iter,
        max_count=max_count,
        workers=workers,
    ).best


def n_free_parameters(n_states: int, max_count: int) -> int:
    """Free parameters of a k-state model with counts up to max_count.

    k - 1 for the first-bin distribution, k(k - 1) for the transition
    matrix, and k * max_count for the emission tables, each row being a
    distribution over max_count + 1 cells.
    """
    k = n_states
    return (k - 1) + k * (k - 1) + k * max_count


@dataclass(frozen=True)
class ComparisonEntry:
    n_states: int
    log_likelihood: float
    n_params: int
    aic: float
    bic: float
    converged: bool


@dataclass(frozen=True)
class ModelComparison:
    """Information-criterion comparison across state counts."""

    entries: tuple[ComparisonEntry, ...]
    n_obs: int

    def ranked_by_aic(self) -> tuple[int, ...]:
        return tuple(
            e.n_states for e in sorted(self.entries, key=lambda e: (e.aic, e.n_states))
        )

    def ranked_by_bic(self) -> tuple[int, ...]:
        return tuple(
            e.n_states for e in sorted(self.entries, key=lambda e: (e.bic, e.n_states))
        )

    @property
    def best_aic(self) -> int:
        return self.ranked_by_aic()[0]

    @property
    def best_bic(self) -> int:
        return self.ranked_by_bic()[0]


def comparison_entry(
    n_states: int, log_likelihood: float, max_count: int, n_obs: int, converged: bool
) -> ComparisonEntry:
    """Score one fitted model under AIC and BIC."""
    p = n_free_parameters(n_states, max_count)
    ll = float(log_likelihood)
    return ComparisonEntry(
        n_states=n_states,
        log_likelihood=ll,
        n_params=p,
        aic=2.0 * p - 2.0 * ll,
        bic=p * float(np.log(n_obs)) - 2.0 * ll,
        converged=bool(converged),
    )


def compare_models(fits: Sequence[KStateFit]) -> ModelComparison:
    """Rank two or more best-of-restarts fits of the same record.

    All fits must come from the same observation sequence; the entry
    list is ordered by state count.
    """
    if len(fits) < 2:
        raise ValueError("model comparison needs at least two fits")
    n_obs = fits[0].n_obs
    if any(f.n_obs != n_obs for f in fits):
        raise ValueError("fits being compared must share the same record")
    seen = [f.n_states for f in fits]
    if len(set(seen)) != len(seen):
        raise ValueError("fits being compared must have distinct state counts")
    entries = tuple(
        comparison_entry(
            f.n_states,
            f.best.log_likelihood,
            f.best.model.max_count,
            f.n_obs,
            f.best.converged,
        )
        for f in sorted(fits, key=lambda f: f.n_states)
    )
    return ModelComparison(entries=entries, n_obs=n_obs)
