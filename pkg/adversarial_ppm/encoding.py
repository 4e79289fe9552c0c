"""Aggregated frequency vectors and padded one-hot sequences for prefixes."""

import hashlib
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from .errors import EncodingError
from .eventlog import EventLog, Prefix

logger = logging.getLogger(__name__)

PAD = 0
EOS = 1
PAD_TOKEN = "<pad>"
EOS_TOKEN = "<eos>"
N_RESERVED = 2

ActivitySequence = Union[Prefix, Sequence[str]]


@dataclass(frozen=True)
class ActivityVocabulary:
    """Activity <-> index map; PAD is 0, EOS is 1, activities start at 2."""

    activities: Tuple[str, ...]

    def __post_init__(self):
        if len(set(self.activities)) != len(self.activities):
            raise EncodingError("vocabulary activities must be unique")
        if PAD_TOKEN in self.activities or EOS_TOKEN in self.activities:
            raise EncodingError("reserved tokens cannot be used as activity labels")
        object.__setattr__(self, "_index",
                           {a: i + N_RESERVED for i, a in enumerate(self.activities)})

    @property
    def size(self) -> int:
        """Number of one-hot columns (activities plus PAD and EOS)."""
        return len(self.activities) + N_RESERVED

    @property
    def n_activities(self) -> int:
        return len(self.activities)

    def index_of(self, activity: str) -> int:
        try:
            return self._index[activity]
        except KeyError:
            raise EncodingError(f"activity '{activity}' is not in the vocabulary")

    def token(self, index: int) -> str:
        if index == PAD:
            return PAD_TOKEN
        if index == EOS:
            return EOS_TOKEN
        return self.activities[index - N_RESERVED]

    def __contains__(self, activity: str) -> bool:
        return activity in self._index

    def content_hash(self) -> str:
        joined = "\x1f".join(self.activities).encode("utf-8")
        return hashlib.sha256(joined).hexdigest()


@dataclass(frozen=True)
class SequenceMatrix:
    rows: np.ndarray
    valid_length: int
    mask: np.ndarray


def build_vocabulary(log: EventLog) -> ActivityVocabulary:
    return ActivityVocabulary(tuple(log.vocabulary))


def as_activities(prefix: ActivitySequence) -> Tuple[str, ...]:
    if isinstance(prefix, Prefix):
        return prefix.activities
    return tuple(prefix)


def aggregate_encode(prefix: ActivitySequence, vocab: ActivityVocabulary) -> np.ndarray:
    """Count each activity's occurrences; one column per real activity."""
    counts = np.zeros(vocab.n_activities, dtype=np.int64)
    for activity in as_activities(prefix):
        counts[vocab.index_of(activity) - N_RESERVED] += 1
    return counts


def aggregate_encode_batch(prefixes: Iterable[ActivitySequence],
                           vocab: ActivityVocabulary) -> np.ndarray:
    rows = [aggregate_encode(p, vocab) for p in prefixes]
    if not rows:
        return np.zeros((0, vocab.n_activities), dtype=np.int64)
    return np.stack(rows)


def index_encode(prefix: ActivitySequence, vocab: ActivityVocabulary, max_len: int) -> np.ndarray:
    """Token indices of length max_len + 1: activities, EOS, then PAD."""
    activities = as_activities(prefix)
    if len(activities) > max_len:
        raise EncodingError(f"prefix of length {len(activities)} exceeds max_len {max_len}")
    indices = np.full(max_len + 1, PAD, dtype=np.int64)
    for position, activity in enumerate(activities):
        indices[position] = vocab.index_of(activity)
    indices[len(activities)] = EOS
    return indices


def onehot_encode(prefix: ActivitySequence, vocab: ActivityVocabulary,
                  max_len: int) -> SequenceMatrix:
    indices = index_encode(prefix, vocab, max_len)
    rows = np.eye(vocab.size, dtype=np.float32)[indices]
    valid_length = len(as_activities(prefix)) + 1
    mask = np.arange(max_len + 1) < valid_length
    return SequenceMatrix(rows, valid_length, mask)


def onehot_encode_batch(prefixes: Iterable[ActivitySequence], vocab: ActivityVocabulary,
                        max_len: int) -> np.ndarray:
    """Stack one-hot rows into an array of shape (n, max_len + 1, vocab.size)."""
    rows = [onehot_encode(p, vocab, max_len).rows for p in prefixes]
    if not rows:
        return np.zeros((0, max_len + 1, vocab.size), dtype=np.float32)
    return np.stack(rows)


def decode_sequence_status(encoded: Union[np.ndarray, Sequence[int]],
                           vocab: ActivityVocabulary) -> Tuple[Tuple[str, ...], str]:
    """Decode rows (or token indices) and report how the sequence terminated.

    Status is 'eos', 'irregular' (a PAD came before any EOS) or 'unterminated'.
    """
    encoded = np.asarray(encoded)
    if encoded.ndim == 2:
        indices = np.argmax(encoded, axis=1)
    elif encoded.ndim == 1:
        indices = encoded.astype(np.int64)
    else:
        raise EncodingError(f"cannot decode an array with {encoded.ndim} dimensions")

    activities = []
    for index in indices.tolist():
        if index == EOS:
            return tuple(activities), "eos"
        if index == PAD:
            logger.debug("PAD decoded before EOS; treating it as the end of the sequence")
            return tuple(activities), "irregular"
        activities.append(vocab.token(index))
    return tuple(activities), "unterminated"


def decode_sequence(encoded: Union[np.ndarray, Sequence[int]],
                    vocab: ActivityVocabulary) -> Tuple[str, ...]:
    return decode_sequence_status(encoded, vocab)[0]


def encode_dataset(prefixes: Iterable[ActivitySequence], vocab: ActivityVocabulary,
                   input_mode: str, max_len: int) -> np.ndarray:
    """Aggregated counts or stacked one-hot rows, depending on ``input_mode``."""
    if input_mode == "sequence":
        return onehot_encode_batch(prefixes, vocab, max_len)
    if input_mode == "aggregated":
        return aggregate_encode_batch(prefixes, vocab)
    raise EncodingError(f"unknown input mode '{input_mode}'")
