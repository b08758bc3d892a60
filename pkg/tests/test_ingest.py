"""Timestamp parsing and binning tests."""

import io

import numpy as np
import pytest
from numpy.testing import assert_allclose

import telegraph_hmm as th
from telegraph_hmm.ingest import bin_counts, parse_timestamps, rebin, write_timestamps

from conftest import random_obs


class TestTextParsing:
    def test_basic(self, tmp_path):
        path = tmp_path / "ticks.txt"
        path.write_text("0\n999\n1000\n2500\n")
        record = parse_timestamps(path)
        assert record.n_clicks == 4
        assert record.ticks.tolist() == [0, 999, 1000, 2500]

    def test_blank_lines_ignored(self):
        record = parse_timestamps(io.StringIO("5\n\n  \n7\n"))
        assert record.ticks.tolist() == [5, 7]

    def test_empty_input(self):
        record = parse_timestamps(io.StringIO(""))
        assert record.n_clicks == 0

    def test_malformed_line_reports_position(self):
        with pytest.raises(th.TimestampParseError) as err:
            parse_timestamps(io.StringIO("1\n2\nbogus\n4\n"))
        assert err.value.position == 3
        assert "line 3" in str(err.value)

    def test_negative_tick_rejected(self):
        with pytest.raises(th.TimestampParseError, match="negative"):
            parse_timestamps(io.StringIO("1\n-2\n"))

    def test_unsorted_reports_index(self):
        with pytest.raises(th.TimestampOrderError) as err:
            parse_timestamps(io.StringIO("10\n20\n15\n30\n"))
        assert err.value.index == 2


class TestBinaryParsing:
    def test_round_trip(self, tmp_path):
        record = th.PhotonRecord(np.array([0, 7, 1000, 99999], dtype=np.int64))
        path = tmp_path / "ticks.bin"
        write_timestamps(record, path, fmt="binary")
        back = parse_timestamps(path, fmt="binary")
        assert np.array_equal(back.ticks, record.ticks)

    def test_independent_encoding(self):
        # Bytes assembled by hand with the struct module, not our writer.
        import struct

        blob = b"".join(struct.pack("<Q", v) for v in (3, 14, 159))
        record = parse_timestamps(io.BytesIO(blob), fmt="binary")
        assert record.ticks.tolist() == [3, 14, 159]

    def test_truncated_stream_reports_offset(self):
        blob = b"\x00" * 20  # 2 full ticks plus 4 stray bytes
        with pytest.raises(th.TimestampParseError) as err:
            parse_timestamps(io.BytesIO(blob), fmt="binary")
        assert err.value.position == 16

    def test_text_round_trip(self, tmp_path):
        record = th.PhotonRecord(np.array([1, 2, 3], dtype=np.int64))
        path = tmp_path / "ticks.txt"
        write_timestamps(record, path, fmt="text")
        back = parse_timestamps(path, fmt="text")
        assert np.array_equal(back.ticks, record.ticks)


class TestPhotonRecord:
    def test_duration(self):
        record = th.PhotonRecord(np.array([0, 1999], dtype=np.int64))
        assert_allclose(record.duration(), 2000 * 50e-9)

    def test_empty_duration(self):
        assert th.PhotonRecord(np.array([], dtype=np.int64)).duration() == 0.0


class TestBinCounts:
    def test_example(self):
        # Ticks 0, 999 land in bin 0; tick 1000 sits exactly on the
        # boundary and belongs to bin 1.
        record = th.PhotonRecord(np.array([0, 999, 1000], dtype=np.int64))
        obs = bin_counts(record, 50e-6, span=100e-6)
        assert obs.counts.tolist() == [2, 1]

    def test_empty_record_with_span(self):
        record = th.PhotonRecord(np.array([], dtype=np.int64))
        obs = bin_counts(record, 50e-6, span=150e-6)
        assert obs.counts.tolist() == [0, 0, 0]

    def test_empty_record_without_span(self):
        record = th.PhotonRecord(np.array([], dtype=np.int64))
        with pytest.raises(ValueError, match="span"):
            bin_counts(record, 50e-6)

    def test_non_integral_width(self):
        record = th.PhotonRecord(np.array([0], dtype=np.int64))
        with pytest.raises(ValueError, match="whole number"):
            bin_counts(record, 75e-9)

    def test_trailing_partial_dropped(self):
        record = th.PhotonRecord(np.array([0, 1000, 2400], dtype=np.int64))
        obs = bin_counts(record, 50e-6)  # span ends at tick 2401
        assert obs.counts.tolist() == [1, 1]

    def test_negative_span(self):
        record = th.PhotonRecord(np.array([0], dtype=np.int64))
        with pytest.raises(ValueError, match="positive"):
            bin_counts(record, 50e-6, span=-1.0)

    def test_span_shorter_than_one_bin(self):
        record = th.PhotonRecord(np.array([0], dtype=np.int64))
        with pytest.raises(ValueError, match="shorter than one"):
            bin_counts(record, 50e-6, span=10e-6)

    def test_count_conservation(self):
        rng = np.random.default_rng(88)
        for _ in range(50):
            n_ticks = int(rng.integers(0, 400))
            limit = int(rng.integers(1, 20)) * 1000
            ticks = np.sort(rng.integers(0, limit, size=n_ticks))
            record = th.PhotonRecord(ticks.astype(np.int64))
            span = limit * 50e-9
            obs = bin_counts(record, 50e-6, span=span)
            assert int(obs.counts.sum()) == n_ticks


class TestRebin:
    def test_example(self):
        obs = th.ObservationSequence([1, 2, 3, 4], 50e-6)
        merged = rebin(obs, 2)
        assert merged.counts.tolist() == [3, 7]
        assert_allclose(merged.bin_width, 100e-6)

    def test_factor_one_identity(self):
        obs = th.ObservationSequence([1, 2, 3], 50e-6)
        assert rebin(obs, 1) is obs

    def test_trailing_partial_group_dropped(self):
        obs = th.ObservationSequence([1, 2, 3, 4, 5], 50e-6)
        assert rebin(obs, 2).counts.tolist() == [3, 7]

    def test_invalid_factor(self):
        obs = th.ObservationSequence([1, 2], 50e-6)
        with pytest.raises(ValueError, match="positive"):
            rebin(obs, 0)

    def test_factor_larger_than_record(self):
        obs = th.ObservationSequence([1, 2], 50e-6)
        with pytest.raises(ValueError, match="cannot rebin"):
            rebin(obs, 5)

    def test_composition(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            n = int(rng.integers(1, 10)) * 12
            obs = random_obs(rng, n, 5)
            once = rebin(obs, 12)
            twice = rebin(rebin(obs, 3), 4)
            assert np.array_equal(once.counts, twice.counts)
            assert_allclose(once.bin_width, twice.bin_width)

    def test_rebin_matches_coarser_binning(self):
        # Binning at 100 us directly equals binning at 50 us then
        # merging pairs, when the span divides evenly.
        rng = np.random.default_rng(10)
        ticks = np.sort(rng.integers(0, 20000, size=300)).astype(np.int64)
        record = th.PhotonRecord(ticks)
        direct = bin_counts(record, 100e-6, span=1e-3)
        fine = bin_counts(record, 50e-6, span=1e-3)
        assert np.array_equal(rebin(fine, 2).counts, direct.counts)
