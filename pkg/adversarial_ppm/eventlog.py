"""Event log ingestion, temporal splitting, prefix extraction and synthetic logs."""

import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import IngestionError, SplitError

logger = logging.getLogger(__name__)

Timestamp = Union[int, pd.Timestamp]
LogSource = Union[str, Path, bytes, bytearray, BinaryIO, io.StringIO]

TIMESTAMP_FORMATS = ("iso", "ticks")
CANONICAL_COLUMNS = ("case", "activity", "timestamp", "label")


@dataclass(frozen=True)
class Event:
    case_id: str
    activity: str
    timestamp: Timestamp
    position: int


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: Tuple[Event, ...]
    label: int

    @property
    def activities(self) -> Tuple[str, ...]:
        return tuple(event.activity for event in self.events)

    @property
    def start_time(self) -> Timestamp:
        return self.events[0].timestamp

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class EventLog:
    """Labeled traces plus the activity vocabulary in first-occurrence order.

    ``metadata`` carries provenance and generator warnings and is ignored by equality.
    """

    traces: Tuple[Trace, ...]
    vocabulary: Tuple[str, ...]
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    @classmethod
    def from_traces(cls, traces: Sequence[Trace],
                    metadata: Optional[Dict[str, Any]] = None) -> "EventLog":
        vocabulary: Dict[str, None] = {}
        for trace in traces:
            for activity in trace.activities:
                vocabulary.setdefault(activity, None)
        case_ids = [trace.case_id for trace in traces]
        if len(set(case_ids)) != len(case_ids):
            raise IngestionError("case ids must be unique within an event log")
        return cls(tuple(traces), tuple(vocabulary), dict(metadata or {}))

    @property
    def positive_class_ratio(self) -> float:
        if not self.traces:
            return 0.0
        return sum(trace.label for trace in self.traces) / len(self.traces)

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self) -> Iterator[Trace]:
        return iter(self.traces)


@dataclass(frozen=True)
class Prefix:
    case_id: str
    events: Tuple[Event, ...]
    label: int

    @property
    def length(self) -> int:
        return len(self.events)

    @property
    def activities(self) -> Tuple[str, ...]:
        return tuple(event.activity for event in self.events)

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class PrefixLog:
    prefixes: Tuple[Prefix, ...]
    min_length: int
    max_length: int

    def __len__(self) -> int:
        return len(self.prefixes)

    def __iter__(self) -> Iterator[Prefix]:
        return iter(self.prefixes)

    @property
    def labels(self) -> np.ndarray:
        return np.array([prefix.label for prefix in self.prefixes], dtype=np.int64)

    @property
    def case_ids(self) -> set:
        return {prefix.case_id for prefix in self.prefixes}

    def with_label(self, label: int) -> "PrefixLog":
        """Return the prefixes carrying ``label`` (the class-specific subset)."""
        return PrefixLog(tuple(p for p in self.prefixes if p.label == label),
                         self.min_length, self.max_length)

    def head(self, limit: Optional[int]) -> "PrefixLog":
        if limit is None:
            return self
        return PrefixLog(self.prefixes[:limit], self.min_length, self.max_length)


@dataclass(frozen=True)
class ColumnMapping:
    case: str = "case"
    activity: str = "activity"
    timestamp: str = "timestamp"
    label: str = "label"

    def items(self) -> List[Tuple[str, str]]:
        return [("case", self.case), ("activity", self.activity),
                ("timestamp", self.timestamp), ("label", self.label)]


def _read_table(source: LogSource) -> pd.DataFrame:
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(bytes(source))
    try:
        return pd.read_csv(source, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as e:
        raise IngestionError(f"event log has no header row: {e}")


def _parse_timestamps(frame: pd.DataFrame, mapping: ColumnMapping,
                      timestamp_format: str) -> List[Timestamp]:
    raw = frame[mapping.timestamp]
    if timestamp_format == "iso":
        parsed = pd.to_datetime(raw, errors="coerce", format="ISO8601")
        invalid = parsed.isna()
    elif timestamp_format == "ticks":
        parsed = pd.to_numeric(raw, errors="coerce")
        invalid = parsed.isna() | (parsed != parsed.round())
    else:
        raise IngestionError(f"unknown timestamp format '{timestamp_format}'; "
                             f"expected one of {TIMESTAMP_FORMATS}")

    if invalid.any():
        row = int(np.flatnonzero(invalid.to_numpy())[0])
        case_id = frame[mapping.case].iloc[row]
        raise IngestionError(
            f"unparseable timestamp '{raw.iloc[row]}' in row {row + 1} (case {case_id})",
            column=mapping.timestamp, case_id=case_id, row=row + 1)

    if timestamp_format == "ticks":
        return parsed.astype("int64").tolist()
    return parsed.tolist()


def _map_label(raw: str, case_id: str, label_map: Optional[Mapping[str, int]]) -> int:
    if label_map is not None:
        if raw not in label_map:
            raise IngestionError(f"label '{raw}' of case {case_id} is not in the label mapping",
                                 case_id=case_id)
        value = int(label_map[raw])
    else:
        try:
            value = int(raw)
        except ValueError:
            raise IngestionError(f"label '{raw}' of case {case_id} is not binary; "
                                 "provide a label mapping", case_id=case_id)
    if value not in (0, 1):
        raise IngestionError(f"label '{raw}' of case {case_id} maps to {value}, not 0/1",
                             case_id=case_id)
    return value


def parse_log(source: LogSource, mapping: Optional[ColumnMapping] = None,
              label_map: Optional[Mapping[str, int]] = None,
              timestamp_format: str = "iso") -> EventLog:
    """Parse a labeled event log from CSV.

    Args:
        source: Path, raw bytes or file object holding UTF-8 CSV with a header row
        mapping: Column names for case, activity, timestamp and label
        label_map: Raw label value -> 0/1. If None, labels must already be 0/1
        timestamp_format: 'iso' (ISO-8601) or 'ticks' (integers)

    Returns:
        EventLog with traces in order of first appearance and events sorted by
        timestamp (ties keep file order)
    """
    mapping = mapping or ColumnMapping()
    frame = _read_table(source)

    for role, column in mapping.items():
        if column not in frame.columns:
            raise IngestionError(f"missing {role} column '{column}'", column=column)

    timestamps = _parse_timestamps(frame, mapping, timestamp_format)
    cases = frame[mapping.case].tolist()
    activities = frame[mapping.activity].tolist()
    labels = frame[mapping.label].tolist()

    rows_by_case: Dict[str, List[int]] = {}
    for row, case_id in enumerate(cases):
        rows_by_case.setdefault(case_id, []).append(row)

    traces = []
    for case_id, rows in rows_by_case.items():
        raw_labels = {labels[row] for row in rows}
        if len(raw_labels) > 1:
            raise IngestionError(f"case {case_id} has conflicting labels {sorted(raw_labels)}",
                                 column=mapping.label, case_id=case_id)
        label = _map_label(raw_labels.pop(), case_id, label_map)
        ordered = sorted(rows, key=lambda row: timestamps[row])
        events = tuple(Event(case_id, activities[row], timestamps[row], position)
                       for position, row in enumerate(ordered, start=1))
        traces.append(Trace(case_id, events, label))

    source_name = str(source) if isinstance(source, (str, Path)) else None
    return EventLog.from_traces(traces, {"source": source_name,
                                         "timestamp_format": timestamp_format})


def _format_timestamp(timestamp: Timestamp) -> str:
    if isinstance(timestamp, pd.Timestamp):
        return timestamp.isoformat()
    return str(int(timestamp))


def write_log(log: EventLog, dest: Union[str, Path, io.StringIO]) -> None:
    """Write ``log`` as canonical CSV (case, activity, timestamp, label)."""
    rows = [(event.case_id, event.activity, _format_timestamp(event.timestamp), trace.label)
            for trace in log.traces for event in trace.events]
    frame = pd.DataFrame(rows, columns=list(CANONICAL_COLUMNS))
    frame.to_csv(dest, index=False)


def temporal_split(log: EventLog, train_fraction: float = 0.8) -> Tuple[EventLog, EventLog]:
    """Split traces by start time; train events inside the test period are discarded."""
    if not 0 < train_fraction < 1:
        raise SplitError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if len(log.traces) < 2:
        raise SplitError(f"need at least 2 traces to split, got {len(log.traces)}")

    ordered = sorted(log.traces, key=lambda trace: trace.start_time)
    n_train = math.floor(train_fraction * len(ordered))
    if n_train < 1 or n_train >= len(ordered):
        raise SplitError(f"train_fraction {train_fraction} leaves an empty split "
                         f"for {len(ordered)} traces")

    train_traces, test_traces = ordered[:n_train], ordered[n_train:]
    test_start = min(trace.start_time for trace in test_traces)

    kept = []
    dropped = 0
    for trace in train_traces:
        events = tuple(event for event in trace.events if event.timestamp <= test_start)
        dropped += len(trace.events) - len(events)
        kept.append(Trace(trace.case_id, events, trace.label))
    if dropped:
        logger.info("discarded %d training events inside the test period", dropped)

    return (EventLog.from_traces(kept, log.metadata),
            EventLog.from_traces(test_traces, log.metadata))


def extract_prefixes(log: EventLog, min_len: int = 1, max_len: int = 40) -> PrefixLog:
    if not 1 <= min_len <= max_len:
        raise ValueError(f"prefix bounds must satisfy 1 <= min_len <= max_len, "
                         f"got {min_len}, {max_len}")
    prefixes = []
    for trace in log.traces:
        for length in range(min_len, min(len(trace), max_len) + 1):
            prefixes.append(Prefix(trace.case_id, trace.events[:length], trace.label))
    return PrefixLog(tuple(prefixes), min_len, max_len)


def deduplicate(prefixlog: PrefixLog, remove_ambiguous: bool = False) -> PrefixLog:
    """Keep one prefix per (activity sequence, label).

    With ``remove_ambiguous`` every sequence that occurs under both labels is dropped.
    """
    ambiguous = set()
    if remove_ambiguous:
        seen_labels: Dict[Tuple[str, ...], set] = {}
        for prefix in prefixlog:
            seen_labels.setdefault(prefix.activities, set()).add(prefix.label)
        ambiguous = {seq for seq, labels in seen_labels.items() if len(labels) > 1}

    kept = []
    seen = set()
    for prefix in prefixlog:
        key = (prefix.activities, prefix.label)
        if key in seen or prefix.activities in ambiguous:
            continue
        seen.add(key)
        kept.append(prefix)
    return PrefixLog(tuple(kept), prefixlog.min_length, prefixlog.max_length)


@dataclass(frozen=True)
class SyntheticLogSpec:
    """Parameters of a two-class Markov-chain event log.

    ``transitions[label]`` has shape (A + 1, A + 1): row 0 is the start state,
    row i the i-th activity; columns 0..A-1 are the next activity, column A ends the trace.
    """

    activities: Tuple[str, ...]
    n_traces: int
    min_length: int
    max_length: int
    transitions: Dict[int, np.ndarray] = field(compare=False)
    positive_ratio: float = 0.5
    case_spacing: int = 100

    def __post_init__(self):
        n = len(self.activities)
        if n < 1:
            raise ValueError("synthetic spec needs at least one activity")
        if self.n_traces < 0:
            raise ValueError("n_traces must be non-negative")
        if not 1 <= self.min_length <= self.max_length:
            raise ValueError("synthetic lengths must satisfy 1 <= min_length <= max_length")
        if not 0 < self.positive_ratio < 1:
            raise ValueError("positive_ratio must lie in (0, 1)")
        for label in (0, 1):
            table = np.asarray(self.transitions.get(label))
            if table.shape != (n + 1, n + 1):
                raise ValueError(f"transition table for label {label} must have shape "
                                 f"{(n + 1, n + 1)}, got {table.shape}")
            if (table < 0).any() or not np.allclose(table.sum(axis=1), 1.0):
                raise ValueError(f"transition table for label {label} must hold "
                                 "probability rows")

    @property
    def is_degenerate(self) -> bool:
        return np.allclose(self.transitions[0], self.transitions[1])

    @classmethod
    def precedence(cls, n_activities: int = 5, n_traces: int = 200, min_length: int = 2,
                   max_length: int = 10, positive_ratio: float = 0.5,
                   lead_start: float = 1.0) -> "SyntheticLogSpec":
        """Label 0 traces open with the first activity, label 1 with the second.

        So in label 0 the first activity tends to precede the second and vice versa.
        With ``lead_start`` below 1 the remaining traces open with a filler
        activity instead, which leaves short prefixes whose label is uncertain.
        """
        if n_activities < 3:
            raise ValueError("the precedence pattern needs at least 3 activities")
        if not 0.0 < lead_start <= 1.0:
            raise ValueError(f"lead_start must lie in (0, 1], got {lead_start}")
        activities = tuple(chr(ord("A") + i) for i in range(n_activities))
        fillers = list(range(2, n_activities))

        def table(lead: int, other: int) -> np.ndarray:
            t = np.zeros((n_activities + 1, n_activities + 1))
            t[0, lead] = lead_start
            t[0, fillers] = (1.0 - lead_start) / len(fillers)
            for row in range(1, n_activities + 1):
                t[row, fillers] = 0.6 / len(fillers)
                t[row, lead] = 0.15
                t[row, other] = 0.05
                t[row, n_activities] = 0.2
            return t

        return cls(activities, n_traces, min_length, max_length,
                   {0: table(0, 1), 1: table(1, 0)}, positive_ratio)


def _walk(table: np.ndarray, length_cap: int, min_length: int,
          rng: np.random.Generator) -> List[int]:
    n = table.shape[0] - 1
    state, walk = 0, []
    while len(walk) < length_cap:
        probs = table[state].copy()
        if len(walk) < min_length:
            probs[n] = 0.0
        if probs.sum() <= 0:
            probs[:n] = 1.0
        nxt = int(rng.choice(n + 1, p=probs / probs.sum()))
        if nxt == n:
            break
        walk.append(nxt)
        state = nxt + 1
    return walk


def generate_synthetic_log(spec: SyntheticLogSpec, seed: int) -> EventLog:
    """Generate a deterministic labeled log with integer-tick timestamps."""
    rng = np.random.default_rng(seed)
    metadata: Dict[str, Any] = {"source": "synthetic", "seed": seed,
                                "timestamp_format": "ticks", "warnings": []}
    if spec.is_degenerate:
        message = "class transition tables are identical; labels carry no pattern"
        logger.warning(message)
        metadata["warnings"].append(message)

    n = spec.n_traces
    if n == 0:
        return EventLog.from_traces([], metadata)

    n_pos = int(round(spec.positive_ratio * n))
    if n >= 2:
        n_pos = min(max(n_pos, 1), n - 1)
    labels = rng.permutation(np.array([1] * n_pos + [0] * (n - n_pos)))

    width = len(str(n))
    traces = []
    for i, label in enumerate(labels.tolist()):
        case_id = f"case_{i:0{width}d}"
        cap = int(rng.integers(spec.min_length, spec.max_length + 1))
        walk = _walk(spec.transitions[label], cap, spec.min_length, rng)
        clock = i * spec.case_spacing + int(rng.integers(0, spec.case_spacing // 2 + 1))
        events = []
        for position, index in enumerate(walk, start=1):
            events.append(Event(case_id, spec.activities[index], clock, position))
            clock += int(rng.integers(1, 20))
        traces.append(Trace(case_id, tuple(events), int(label)))

    return EventLog.from_traces(traces, metadata)
