"""On-disk formats: model JSON, counts/posterior/aggregate CSV.

All writers go through an atomic temp-file-plus-rename so a crash never
leaves a half-written artifact, and they refuse to overwrite existing
files unless told to. Probabilities in CSV output carry 9 significant
digits; JSON floats use Python's shortest round-trip representation.
"""

from __future__ import annotations

import csv
import io as _stdio
import json
import os
import warnings
from pathlib import Path

import numpy as np

from .core import ModelSpec, ObservationSequence, PosteriorTrajectory
from .simulate import DEFAULT_BIN_WIDTH

# A model file whose rows deviate from unit sum by more than this is
# rejected outright; smaller deviations are silently renormalized.
MODEL_ROW_SUM_REJECT = 1e-6


class ModelFileError(ValueError):
    """A model JSON file that cannot be accepted."""


def _atomic_write(path, data: str | bytes, force: bool) -> None:
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} already exists; pass force to overwrite")
    tmp = path.with_name(f".{path.name}.tmp")
    if isinstance(data, str):
        tmp.write_text(data)
    else:
        tmp.write_bytes(data)
    os.replace(tmp, path)


def save_model(model: ModelSpec, path, force: bool = False) -> None:
    """Write a model as JSON with explicit dimensions."""
    doc = {
        "n_states": model.n_states,
        "max_count": model.max_count,
        "initial": model.initial.tolist(),
        "transition": model.transition.tolist(),
        "emission": model.emission.tolist(),
    }
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n", force)


def _accept_rows(name: str, rows: np.ndarray) -> np.ndarray:
    """Apply the load policy to one stochastic table."""
    if not np.all(np.isfinite(rows)):
        raise ModelFileError(f"{name} contains non-finite values")
    if rows.min() < -MODEL_ROW_SUM_REJECT:
        raise ModelFileError(f"{name} contains negative probabilities")
    rows = np.clip(rows, 0.0, None)
    sums = rows.sum(axis=-1)
    worst = np.abs(sums - 1.0).max()
    if worst > MODEL_ROW_SUM_REJECT:
        raise ModelFileError(
            f"{name} rows deviate from unit sum by {worst:.3e}, beyond the "
            f"{MODEL_ROW_SUM_REJECT:g} acceptance bound"
        )
    return rows / sums[..., None]


def load_model(path) -> ModelSpec:
    """Read a model JSON file.

    Rows that miss unit sum by at most 1e-6 are renormalized; anything
    worse, negative, non-finite, or dimensionally inconsistent raises
    ModelFileError.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ModelFileError(f"{path} is not valid JSON: {err}") from err

    for key in ("n_states", "max_count", "initial", "transition", "emission"):
        if key not in doc:
            raise ModelFileError(f"{path} is missing the {key!r} field")

    k = int(doc["n_states"])
    m = int(doc["max_count"])
    try:
        initial = np.asarray(doc["initial"], dtype=float)
        transition = np.asarray(doc["transition"], dtype=float)
        emission = np.asarray(doc["emission"], dtype=float)
    except (TypeError, ValueError) as err:
        raise ModelFileError(f"{path} has malformed probability tables") from err

    if initial.shape != (k,):
        raise ModelFileError(f"initial has shape {initial.shape}, expected ({k},)")
    if transition.shape != (k, k):
        raise ModelFileError(
            f"transition has shape {transition.shape}, expected ({k}, {k})"
        )
    if emission.shape != (k, m + 1):
        raise ModelFileError(
            f"emission has shape {emission.shape}, expected ({k}, {m + 1})"
        )

    initial = _accept_rows("initial", initial[None, :])[0]
    transition = _accept_rows("transition", transition)
    emission = _accept_rows("emission", emission)
    return ModelSpec(initial=initial, transition=transition, emission=emission)


_BIN_WIDTH_COMMENT = "# bin_width_s="


def write_counts_csv(obs: ObservationSequence, path, force: bool = False) -> None:
    """Counts as CSV with the bin width recorded in a leading comment."""
    buf = _stdio.StringIO()
    buf.write(f"{_BIN_WIDTH_COMMENT}{obs.bin_width!r}\n")
    writer = csv.writer(buf)
    writer.writerow(["bin_index", "count"])
    for i, c in enumerate(obs.counts):
        writer.writerow([i, int(c)])
    _atomic_write(path, buf.getvalue(), force)


def read_counts_csv(path, bin_width: float | None = None) -> ObservationSequence:
    """Read a counts CSV.

    The bin width is taken from the explicit argument first, then from
    the file's own comment, and finally falls back to the 50 us default
    with a warning.
    """
    file_width = None
    counts = []
    with open(path, newline="") as fh:
        rows = []
        for raw in fh:
            if raw.startswith(_BIN_WIDTH_COMMENT):
                file_width = float(raw[len(_BIN_WIDTH_COMMENT):].strip())
                continue
            if raw.startswith("#") or not raw.strip():
                continue
            rows.append(raw)
        reader = csv.reader(rows)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["bin_index", "count"]:
            raise ValueError(f"{path} does not look like a counts CSV")
        for row in reader:
            counts.append(int(row[1]))

    if bin_width is None:
        bin_width = file_width
    if bin_width is None:
        warnings.warn(
            f"{path} does not record its bin width; assuming "
            f"{DEFAULT_BIN_WIDTH:g} s",
            stacklevel=2,
        )
        bin_width = DEFAULT_BIN_WIDTH
    return ObservationSequence(np.array(counts, dtype=np.int64), bin_width)


def _format_prob(x: float) -> str:
    return f"{x:.9g}"


def write_posterior_csv(
    trajectory: PosteriorTrajectory, bin_width: float, path, force: bool = False
) -> None:
    """Per-bin state probabilities with a time axis, 9 significant digits."""
    buf = _stdio.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        ["bin_index", "time_s"]
        + [f"state_{i}" for i in range(trajectory.n_states)]
    )
    for i, row in enumerate(trajectory.probs):
        writer.writerow(
            [i, _format_prob(i * bin_width)] + [_format_prob(p) for p in row]
        )
    _atomic_write(path, buf.getvalue(), force)


def write_aggregate_csv(
    aggregate: np.ndarray, bin_width: float, path, force: bool = False
) -> None:
    """Bright/dark population columns with a time axis."""
    aggregate = np.asarray(aggregate, dtype=float)
    if aggregate.ndim != 2 or aggregate.shape[1] != 2:
        raise ValueError("aggregate must be an (n_bins, 2) array")
    buf = _stdio.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["bin_index", "time_s", "P_F3", "P_F4"])
    for i, (p3, p4) in enumerate(aggregate):
        writer.writerow(
            [i, _format_prob(i * bin_width), _format_prob(p3), _format_prob(p4)]
        )
    _atomic_write(path, buf.getvalue(), force)


def write_states_csv(states: np.ndarray, path, force: bool = False) -> None:
    """True simulated states, for reference next to simulated counts."""
    buf = _stdio.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["bin_index", "state"])
    for i, s in enumerate(states):
        writer.writerow([i, int(s)])
    _atomic_write(path, buf.getvalue(), force)


def write_loglik_trace_csv(trace: np.ndarray, path, force: bool = False) -> None:
    """EM log-likelihood per iteration, full precision."""
    buf = _stdio.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["iteration", "loglik"])
    for i, ll in enumerate(np.asarray(trace, dtype=float), start=1):
        writer.writerow([i, repr(float(ll))])
    _atomic_write(path, buf.getvalue(), force)


def write_json(doc: dict, path, force: bool = False) -> None:
    """Deterministic JSON writer shared by the CLI reports."""
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n", force)
