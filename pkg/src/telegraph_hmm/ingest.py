"""Photon timestamp ingestion: parsing, binning, rebinning.

Timestamps are integer detector ticks. The default tick resolution is
50 ns, so the standard 50 us analysis bin spans exactly 1000 ticks.
Binning uses half-open intervals [t*W, (t+1)*W): a click landing on a
bin boundary belongs to the later bin, and a trailing partial bin is
dropped rather than emitted short.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ObservationSequence

DEFAULT_TICK_RESOLUTION = 50e-9

_U64_MAX_SIGNED = 2**63 - 1


class TimestampParseError(ValueError):
    """A timestamp source that could not be decoded.

    ``position`` is the 1-based line number for text sources and the
    0-based byte offset for binary ones.
    """

    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(message)


class TimestampOrderError(ValueError):
    """Timestamps that go backwards. ``index`` is 0-based into the ticks."""

    def __init__(self, index: int, value: int, previous: int):
        self.index = index
        super().__init__(
            f"tick {value} at index {index} is smaller than its "
            f"predecessor {previous}; timestamps must be non-decreasing"
        )


@dataclass(frozen=True)
class PhotonRecord:
    """A sorted sequence of integer detector ticks."""

    ticks: np.ndarray
    tick_resolution: float = DEFAULT_TICK_RESOLUTION

    def __post_init__(self):
        ticks = np.array(self.ticks, dtype=np.int64, copy=True)
        if ticks.ndim != 1:
            raise ValueError("ticks must be a vector")
        if ticks.size and ticks.min() < 0:
            raise ValueError("ticks must be non-negative")
        if ticks.size > 1:
            steps = np.diff(ticks)
            if steps.min() < 0:
                idx = int(np.argmax(steps < 0)) + 1
                raise TimestampOrderError(idx, int(ticks[idx]), int(ticks[idx - 1]))
        res = float(self.tick_resolution)
        if not np.isfinite(res) or res <= 0.0:
            raise ValueError("tick_resolution must be a positive number of seconds")
        ticks.setflags(write=False)
        object.__setattr__(self, "ticks", ticks)
        object.__setattr__(self, "tick_resolution", res)

    @property
    def n_clicks(self) -> int:
        return self.ticks.shape[0]

    def duration(self) -> float:
        """Seconds from time zero through the last click's tick."""
        if self.ticks.size == 0:
            return 0.0
        return float(self.ticks[-1] + 1) * self.tick_resolution


def _parse_text(data: str) -> np.ndarray:
    values = []
    for lineno, raw in enumerate(data.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            value = int(line)
        except ValueError:
            raise TimestampParseError(
                f"line {lineno}: {line!r} is not a decimal tick", lineno
            ) from None
        if value < 0:
            raise TimestampParseError(
                f"line {lineno}: tick {value} is negative", lineno
            )
        if value > _U64_MAX_SIGNED:
            raise TimestampParseError(
                f"line {lineno}: tick {value} overflows the 64-bit range", lineno
            )
        values.append(value)
    return np.array(values, dtype=np.int64)


def _parse_binary(data: bytes) -> np.ndarray:
    if len(data) % 8 != 0:
        offset = len(data) - (len(data) % 8)
        raise TimestampParseError(
            f"binary stream truncated: {len(data) - offset} stray bytes "
            f"after offset {offset}",
            offset,
        )
    raw = np.frombuffer(data, dtype="<u8")
    too_big = raw > _U64_MAX_SIGNED
    if too_big.any():
        idx = int(np.argmax(too_big))
        raise TimestampParseError(
            f"tick at byte offset {idx * 8} overflows the signed 64-bit range",
            idx * 8,
        )
    return raw.astype(np.int64)


def parse_timestamps(
    source,
    fmt: str = "text",
    tick_resolution: float = DEFAULT_TICK_RESOLUTION,
) -> PhotonRecord:
    """Read a timestamp stream into a PhotonRecord.

    Parameters
    ----------
    source : a filesystem path or an open file object. Text format is
        one decimal tick per line (blank lines ignored); binary format
        is consecutive little-endian unsigned 64-bit ticks.
    fmt : "text" or "binary".
    tick_resolution : seconds per tick.

    Raises TimestampParseError with the offending line number or byte
    offset, and TimestampOrderError if ticks decrease.
    """
    if fmt not in ("text", "binary"):
        raise ValueError(f"unknown timestamp format {fmt!r}")

    if isinstance(source, (str, Path)):
        mode = "r" if fmt == "text" else "rb"
        with open(source, mode) as fh:
            payload = fh.read()
    else:
        payload = source.read()

    if fmt == "text":
        if isinstance(payload, bytes):
            payload = payload.decode("ascii")
        ticks = _parse_text(payload)
    else:
        if isinstance(payload, str):
            raise TypeError("binary format requires a bytes source")
        ticks = _parse_binary(payload)

    return PhotonRecord(ticks, tick_resolution)


def write_timestamps(record: PhotonRecord, destination, fmt: str = "text") -> None:
    """Serialize a PhotonRecord in either on-disk format."""
    if fmt == "text":
        text = "".join(f"{int(t)}\n" for t in record.ticks)
        if isinstance(destination, (str, Path)):
            Path(destination).write_text(text)
        else:
            destination.write(text)
    elif fmt == "binary":
        blob = record.ticks.astype("<u8").tobytes()
        if isinstance(destination, (str, Path)):
            Path(destination).write_bytes(blob)
        else:
            destination.write(blob)
    else:
        raise ValueError(f"unknown timestamp format {fmt!r}")


def _ticks_per_bin(bin_width: float, tick_resolution: float) -> int:
    ratio = bin_width / tick_resolution
    ticks = int(round(ratio))
    if ticks < 1 or abs(ratio - ticks) > 1e-6 * max(ratio, 1.0):
        raise ValueError(
            f"bin width {bin_width:g} s is not a whole number of "
            f"{tick_resolution:g} s ticks"
        )
    return ticks


def bin_counts(
    record: PhotonRecord,
    bin_width: float,
    span: float | None = None,
) -> ObservationSequence:
    """Histogram clicks into fixed-width bins.

    Parameters
    ----------
    record : the ticks to bin.
    bin_width : bin width in seconds; must be an integer number of ticks.
    span : record duration in seconds, measured from time zero. Bins are
        laid down over [0, span) and a trailing partial bin is dropped.
        Defaults to the record's own duration; an empty record then has
        no length at all, which is an error because a count sequence
        cannot be empty.

    Clicks at or beyond the last full bin's end are excluded.
    """
    width_ticks = _ticks_per_bin(bin_width, record.tick_resolution)

    if span is None:
        if record.ticks.size == 0:
            raise ValueError(
                "cannot infer a span from an empty record; pass span explicitly"
            )
        span_ticks = int(record.ticks[-1]) + 1
    else:
        if not np.isfinite(span) or span <= 0.0:
            raise ValueError("span must be a positive number of seconds")
        span_ticks = int(round(span / record.tick_resolution))

    n_bins = span_ticks // width_ticks
    if n_bins < 1:
        raise ValueError(
            f"span of {span_ticks} ticks is shorter than one {width_ticks}-tick bin"
        )

    limit = n_bins * width_ticks
    kept = record.ticks[record.ticks < limit]
    counts = np.bincount(kept // width_ticks, minlength=n_bins)
    return ObservationSequence(counts, bin_width)


def rebin(obs: ObservationSequence, factor: int) -> ObservationSequence:
    """Merge every ``factor`` adjacent bins by summing their counts.

    A trailing group with fewer than ``factor`` bins is dropped, matching
    how bin_counts treats a trailing partial bin.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError("rebin factor must be a positive integer")
    if factor == 1:
        return obs
    n_groups = obs.n_bins // factor
    if n_groups < 1:
        raise ValueError(
            f"cannot rebin {obs.n_bins} bins by a factor of {factor}"
        )
    trimmed = obs.counts[: n_groups * factor]
    merged = trimmed.reshape(n_groups, factor).sum(axis=1)
    return ObservationSequence(merged, obs.bin_width * factor)
