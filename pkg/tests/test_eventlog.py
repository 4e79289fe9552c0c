"""Tests for event log ingestion, splitting and prefix extraction."""

import io
import os
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from adversarial_ppm.errors import IngestionError, SplitError
from adversarial_ppm.eventlog import (ColumnMapping, Event, EventLog, Prefix, PrefixLog,
                                      SyntheticLogSpec, Trace, deduplicate, extract_prefixes,
                                      generate_synthetic_log, parse_log, temporal_split,
                                      write_log)

CSV = b"""case,activity,timestamp,label
c2,register,2023-01-02T09:00:00,0
c1,register,2023-01-01T09:00:00,1
c1,approve,2023-01-01T11:00:00,1
c1,check,2023-01-01T10:00:00,1
c2,reject,2023-01-02T10:00:00,0
"""


def make_log(spec):
    """Build a log from [(case_id, start, [activities], label)] with one tick per event."""
    traces = []
    for case_id, start, activities, label in spec:
        events = tuple(Event(case_id, a, start + i, i + 1) for i, a in enumerate(activities))
        traces.append(Trace(case_id, events, label))
    return EventLog.from_traces(traces)


class TestParseLog(unittest.TestCase):
    """Test cases for CSV ingestion."""

    def test_orders_traces_and_events(self):
        log = parse_log(CSV)
        self.assertEqual([t.case_id for t in log.traces], ["c2", "c1"])
        self.assertEqual(log.traces[1].activities, ("register", "check", "approve"))
        self.assertEqual([e.position for e in log.traces[1].events], [1, 2, 3])
        self.assertEqual(log.vocabulary, ("register", "reject", "check", "approve"))
        self.assertEqual([t.label for t in log.traces], [0, 1])

    def test_missing_column(self):
        with self.assertRaises(IngestionError) as ctx:
            parse_log(b"case,activity,label\nc1,a,0\n")
        self.assertEqual(ctx.exception.column, "timestamp")

    def test_bad_timestamp_names_case(self):
        data = b"case,activity,timestamp,label\nc1,a,2023-01-01T00:00:00,0\nc9,b,not-a-date,0\n"
        with self.assertRaises(IngestionError) as ctx:
            parse_log(data)
        self.assertEqual(ctx.exception.case_id, "c9")
        self.assertEqual(ctx.exception.row, 2)

    def test_conflicting_labels(self):
        data = b"case,activity,timestamp,label\nc1,a,1,0\nc1,b,2,1\n"
        with self.assertRaises(IngestionError):
            parse_log(data, timestamp_format="ticks")

    def test_label_map_and_custom_columns(self):
        data = (b"CaseID,Activity,Time,Outcome\n"
                b"x,a,1,Accepted\nx,b,2,Accepted\ny,a,3,Rejected\n")
        mapping = ColumnMapping("CaseID", "Activity", "Time", "Outcome")
        log = parse_log(data, mapping, {"Rejected": 0, "Accepted": 1}, "ticks")
        self.assertEqual([t.label for t in log.traces], [1, 0])

    def test_unmapped_label(self):
        data = b"case,activity,timestamp,label\nc1,a,1,Maybe\n"
        with self.assertRaises(IngestionError):
            parse_log(data, label_map={"Yes": 1, "No": 0}, timestamp_format="ticks")

    def test_write_then_parse_is_identity(self):
        log = parse_log(CSV)
        buffer = io.StringIO()
        write_log(log, buffer)
        again = parse_log(buffer.getvalue().encode("utf-8"))
        self.assertEqual(log, again)

    def test_synthetic_log_round_trips_through_file(self):
        log = generate_synthetic_log(SyntheticLogSpec.precedence(n_traces=30), seed=3)
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "log.csv"
            write_log(log, path)
            self.assertEqual(parse_log(path, timestamp_format="ticks"), log)


class TestTemporalSplit(unittest.TestCase):
    """Test cases for the temporal train/test split."""

    def setUp(self):
        self.log = make_log([(f"c{i}", i * 10, ["a", "b", "c"], i % 2) for i in range(10)])

    def test_split_sizes_and_disjointness(self):
        train, test = temporal_split(self.log, 0.8)
        self.assertEqual((len(train), len(test)), (8, 2))
        self.assertFalse({t.case_id for t in train} & {t.case_id for t in test})

    def test_train_events_end_before_test_starts(self):
        log = make_log([("early", 0, ["a"] * 30, 0), ("mid", 5, ["b"], 1),
                        ("late", 10, ["c", "d"], 1)])
        train, test = temporal_split(log, 0.67)
        test_start = min(t.start_time for t in test.traces)
        for trace in train.traces:
            self.assertTrue(all(e.timestamp <= test_start for e in trace.events))
        self.assertEqual(len(train.traces[0]), 11)

    def test_ties_keep_file_order(self):
        log = make_log([("b", 0, ["a"], 0), ("a", 0, ["a"], 1), ("c", 0, ["a"], 0)])
        train, test = temporal_split(log, 0.5)
        self.assertEqual([t.case_id for t in train.traces], ["b"])
        self.assertEqual([t.case_id for t in test.traces], ["a", "c"])

    def test_split_errors(self):
        with self.assertRaises(SplitError):
            temporal_split(self.log, 1.0)
        with self.assertRaises(SplitError):
            temporal_split(self.log, 0.0)
        with self.assertRaises(SplitError):
            temporal_split(make_log([("only", 0, ["a"], 0)]), 0.8)


class TestPrefixes(unittest.TestCase):
    """Test cases for prefix extraction and deduplication."""

    def test_prefix_counts(self):
        log = make_log([("c1", 0, ["a", "b", "c", "d"], 0), ("c2", 10, ["a", "b"], 1)])
        prefixes = extract_prefixes(log, 2, 3)
        self.assertEqual([p.activities for p in prefixes],
                         [("a", "b"), ("a", "b", "c"), ("a", "b")])
        self.assertTrue(all(p.label == t for p, t in zip(prefixes, [0, 0, 1])))

    def test_bounds(self):
        log = make_log([("c1", 0, ["a"], 0)])
        with self.assertRaises(ValueError):
            extract_prefixes(log, 3, 2)
        with self.assertRaises(ValueError):
            extract_prefixes(log, 0, 2)

    def test_deduplicate(self):
        def prefix(case_id, activities, label):
            events = tuple(Event(case_id, a, i, i + 1) for i, a in enumerate(activities))
            return Prefix(case_id, events, label)

        prefixes = PrefixLog((prefix("c1", "ab", 0), prefix("c2", "ab", 0),
                              prefix("c3", "ab", 1), prefix("c4", "b", 1)), 1, 5)
        kept = deduplicate(prefixes)
        self.assertEqual([p.case_id for p in kept], ["c1", "c3", "c4"])
        strict = deduplicate(prefixes, remove_ambiguous=True)
        self.assertEqual([p.case_id for p in strict], ["c4"])


class TestSyntheticLog(unittest.TestCase):
    """Test cases for the synthetic log generator."""

    def test_deterministic(self):
        spec = SyntheticLogSpec.precedence(n_traces=40)
        self.assertEqual(generate_synthetic_log(spec, 5), generate_synthetic_log(spec, 5))
        self.assertNotEqual(generate_synthetic_log(spec, 5), generate_synthetic_log(spec, 6))

    def test_precedence_pattern_and_lengths(self):
        spec = SyntheticLogSpec.precedence(n_traces=100, min_length=2, max_length=8)
        log = generate_synthetic_log(spec, 0)
        self.assertEqual({t.label for t in log.traces}, {0, 1})
        for trace in log.traces:
            self.assertEqual(trace.activities[0], "A" if trace.label == 0 else "B")
            self.assertTrue(2 <= len(trace) <= 8)

    def test_filler_openings(self):
        spec = SyntheticLogSpec.precedence(n_traces=200, lead_start=0.6)
        firsts = [trace.activities[0] for trace in generate_synthetic_log(spec, 1).traces]
        fillers = sum(first in ("C", "D", "E") for first in firsts)
        self.assertTrue(40 <= fillers <= 120, fillers)
        for bad in (0.0, 1.5):
            with self.assertRaises(ValueError):
                SyntheticLogSpec.precedence(lead_start=bad)

    def test_degenerate_spec_warns(self):
        table = np.full((3, 3), 1 / 3)
        spec = SyntheticLogSpec(("a", "b"), 10, 1, 4, {0: table, 1: table})
        log = generate_synthetic_log(spec, 0)
        self.assertTrue(log.metadata["warnings"])

    def test_two_traces_get_both_labels(self):
        log = generate_synthetic_log(SyntheticLogSpec.precedence(n_traces=2), 0)
        self.assertEqual(sorted(t.label for t in log.traces), [0, 1])


if __name__ == '__main__':
    unittest.main()
