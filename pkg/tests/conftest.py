import numpy as np
import pytest

from telegraph_hmm import ModelSpec, ObservationSequence

# One line per acceptance criterion, filled in by tests/test_acceptance.py
# and replayed after the run summary so the verdicts are visible even
# when pytest captures stdout.
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    verdict = "PASS" if passed else "FAIL"
    line = f"ACCEPTANCE CRITERION {number}: {verdict} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


def random_model(rng, n_states, max_count, sticky=False):
    """Dirichlet-random model; sticky pushes mass onto the diagonal."""
    initial = rng.dirichlet(np.ones(n_states))
    transition = np.vstack(
        [rng.dirichlet(np.ones(n_states)) for _ in range(n_states)]
    )
    if sticky:
        stay = rng.uniform(0.9, 0.999, size=n_states)
        transition = transition * (1.0 - stay)[:, None]
        transition[np.diag_indices(n_states)] += stay
        transition = transition / transition.sum(axis=1, keepdims=True)
    emission = np.vstack(
        [rng.dirichlet(np.ones(max_count + 1)) for _ in range(n_states)]
    )
    return ModelSpec(initial=initial, transition=transition, emission=emission)


def random_obs(rng, n_bins, max_count, bin_width=50e-6):
    counts = rng.integers(0, max_count + 1, size=n_bins)
    return ObservationSequence(counts, bin_width)


@pytest.fixture
def tiny_model():
    """Two-state model whose posteriors are pinned in the tests."""
    return ModelSpec(
        initial=[0.5, 0.5],
        transition=[[0.9, 0.1], [0.2, 0.8]],
        emission=[[0.8, 0.2], [0.3, 0.7]],
    )


@pytest.fixture
def tiny_obs():
    return ObservationSequence([0, 1, 1], 50e-6)
