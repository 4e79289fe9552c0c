"""Distances between original prefixes and their adversarial examples."""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .encoding import ActivitySequence, ActivityVocabulary, aggregate_encode, as_activities
from .errors import MetricError
from .manifold import LatentPoint

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricPanel:
    success_rate: float
    latent_euclidean: float
    l1: float
    l2: float
    emd: float
    dl_edit: float
    lcp: float
    adv_length: float = 0.0
    count: int = 0


def success_rate(results: Sequence) -> float:
    """Share of results whose prediction flipped; 0 for an empty collection."""
    if not results:
        logger.warning("success rate of an empty result set is reported as 0")
        return 0.0
    return sum(1 for r in results if r.flipped) / len(results)


def l1_l2(a: np.ndarray, b: np.ndarray) -> Tuple[float, float]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"aggregated vectors have different vocabularies: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.abs(diff).sum()), float(np.sqrt(np.square(diff).sum()))


def emd(a: ActivitySequence, b: ActivitySequence, vocab: ActivityVocabulary) -> float:
    """1-D earth mover's distance between raw activity-count histograms.

    Ground distance is the index gap in vocabulary order; equals the sum of
    absolute prefix sums of the count difference.
    """
    diff = aggregate_encode(a, vocab) - aggregate_encode(b, vocab)
    return float(np.abs(np.cumsum(diff)).sum())


def dl_edit(a: ActivitySequence, b: ActivitySequence) -> int:
    """Unrestricted Damerau-Levenshtein distance (transpositions may be edited again)."""
    a, b = as_activities(a), as_activities(b)
    if a == b:
        return 0
    len_a, len_b = len(a), len(b)
    if not len_a or not len_b:
        return len_a + len_b

    max_dist = len_a + len_b
    last_row: Dict[str, int] = {}
    d = np.zeros((len_a + 2, len_b + 2), dtype=np.int64)
    d[0, :] = max_dist
    d[:, 0] = max_dist
    d[1:, 1] = np.arange(len_a + 1)
    d[1, 1:] = np.arange(len_b + 1)

    for i in range(1, len_a + 1):
        last_col = 0
        for j in range(1, len_b + 1):
            k = last_row.get(b[j - 1], 0)
            l = last_col
            if a[i - 1] == b[j - 1]:
                cost = 0
                last_col = j
            else:
                cost = 1
            d[i + 1, j + 1] = min(
                d[i, j] + cost,                                   # substitution
                d[i + 1, j] + 1,                                  # insertion
                d[i, j + 1] + 1,                                  # deletion
                d[k, l] + (i - k - 1) + 1 + (j - l - 1),          # transposition
            )
        last_row[a[i - 1]] = i
    return int(d[len_a + 1, len_b + 1])


def lcp(a: ActivitySequence, b: ActivitySequence) -> int:
    length = 0
    for x, y in zip(as_activities(a), as_activities(b)):
        if x != y:
            break
        length += 1
    return length


def latent_euclidean(a: LatentPoint, b: LatentPoint) -> float:
    if a.mu.shape != b.mu.shape:
        raise MetricError(f"latent dimensions differ: {a.mu.shape} vs {b.mu.shape}")
    return float(np.linalg.norm(np.asarray(a.mu, np.float64) - np.asarray(b.mu, np.float64)))


def distance_panel(original: ActivitySequence, adversarial: ActivitySequence,
                   vocab: ActivityVocabulary) -> Dict[str, float]:
    """Input-space distances of one adversarial example."""
    l1, l2 = l1_l2(aggregate_encode(original, vocab), aggregate_encode(adversarial, vocab))
    return {"l1": l1, "l2": l2, "emd": emd(original, adversarial, vocab),
            "dl_edit": dl_edit(original, adversarial), "lcp": lcp(original, adversarial),
            "adv_length": len(as_activities(adversarial))}


def _mean(values: List[float]) -> float:
    return float(np.mean(values)) if values else float("nan")


def summarize(results: Sequence, vocab: ActivityVocabulary) -> MetricPanel:
    """Success rate over every result; distance means over results with an adversarial."""
    panels = [distance_panel(r.original, r.adversarial, vocab) for r in results
              if r.adversarial is not None]
    latent = [r.latent_distance for r in results
              if r.adversarial is not None and r.latent_distance is not None]

    def column(name: str) -> float:
        return _mean([p[name] for p in panels])

    return MetricPanel(success_rate=success_rate(results), latent_euclidean=_mean(latent),
                       l1=column("l1"), l2=column("l2"), emd=column("emd"),
                       dl_edit=column("dl_edit"), lcp=column("lcp"),
                       adv_length=column("adv_length"), count=len(results))


def success_by_length(results: Iterable) -> List[Dict[str, float]]:
    """Per prefix length: attacked count, flips, success rate and the share of all flips."""
    attacked: Dict[int, int] = {}
    flipped: Dict[int, int] = {}
    for r in results:
        attacked[r.prefix_length] = attacked.get(r.prefix_length, 0) + 1
        flipped[r.prefix_length] = flipped.get(r.prefix_length, 0) + int(r.flipped)
    total_flips = sum(flipped.values())
    rows = []
    for length in sorted(attacked):
        rows.append({"prefix_length": length, "attacked": attacked[length],
                     "flipped": flipped[length],
                     "success_rate": flipped[length] / attacked[length],
                     "normalized_frequency": flipped[length] / total_flips if total_flips else 0.0})
    return rows


def flip_from_probabilities(original_prob: float, adversarial_prob: Optional[float],
                            tau: float) -> bool:
    """Flip status recomputed from raw probabilities and the threshold."""
    if adversarial_prob is None:
        return False
    return (original_prob >= tau) != (adversarial_prob >= tau)
