"""Quartile-threshold cluster profiles for adversarial attacks."""

import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import ProfilingError

logger = logging.getLogger(__name__)

MIN_POPULATION = 4


class ClusterProfile(str, Enum):
    AGGRESSIVE = "Aggressive"
    SUBTLE = "Subtle"
    SEQUENCE_PERTURBATION = "SequencePerturbation"
    DISTRIBUTION_SHIFT = "DistributionShift"
    OTHERS = "Others"


@dataclass(frozen=True)
class NormalizedAttackMetrics:
    dl_norm: float
    emd_norm: float
    success: bool = False

    @classmethod
    def from_distances(cls, dl_edit: float, emd: float, prefix_length: int,
                       success: bool = False) -> "NormalizedAttackMetrics":
        if prefix_length < 1:
            raise ProfilingError("prefix length must be positive to normalize distances")
        return cls(dl_edit / prefix_length, emd / prefix_length, success)


@dataclass(frozen=True)
class QuartileThresholds:
    dl_q1: float
    dl_med: float
    dl_q3: float
    emd_q1: float
    emd_med: float
    emd_q3: float


def _quartiles(values: np.ndarray) -> Tuple[float, float, float]:
    q1, med, q3 = np.percentile(values, [25, 50, 75], method="linear")
    return float(q1), float(med), float(q3)


def compute_quartiles(population: Sequence[NormalizedAttackMetrics]) -> QuartileThresholds:
    """Inclusive (linear interpolation) quartiles of both normalized distances."""
    if len(population) < MIN_POPULATION:
        raise ProfilingError(f"need at least {MIN_POPULATION} attack results to derive quartiles, "
                             f"got {len(population)}")
    dl = _quartiles(np.array([m.dl_norm for m in population], dtype=np.float64))
    em = _quartiles(np.array([m.emd_norm for m in population], dtype=np.float64))
    return QuartileThresholds(*dl, *em)


def assign_profile(m: NormalizedAttackMetrics, t: QuartileThresholds) -> ClusterProfile:
    # rules overlap at the boundaries; first match wins
    if m.dl_norm <= t.dl_q1 and m.emd_norm <= t.emd_q1:
        return ClusterProfile.SUBTLE
    if m.dl_norm >= t.dl_q3 and m.emd_norm >= t.emd_q3:
        return ClusterProfile.AGGRESSIVE
    if m.dl_norm >= t.dl_q3 and m.emd_norm < t.emd_med:
        return ClusterProfile.SEQUENCE_PERTURBATION
    if m.emd_norm >= t.emd_q3 and m.dl_norm < t.dl_q3:
        return ClusterProfile.DISTRIBUTION_SHIFT
    return ClusterProfile.OTHERS


def profile_population(population: Sequence[NormalizedAttackMetrics]
                       ) -> Tuple[QuartileThresholds, List[ClusterProfile]]:
    thresholds = compute_quartiles(population)
    profiles = [assign_profile(m, thresholds) for m in population]
    logger.debug("profile counts: %s", Counter(p.value for p in profiles))
    return thresholds, profiles


def profile_counts(profiles: Sequence[ClusterProfile], attacks: Sequence[str],
                   successes: Sequence[bool]) -> List[Dict]:
    """Count and success rate per (profile, attack), in profile enum order."""
    if not len(profiles) == len(attacks) == len(successes):
        raise ProfilingError("profiles, attacks and successes must align")
    totals: Counter = Counter()
    flips: Counter = Counter()
    for profile, attack, success in zip(profiles, attacks, successes):
        totals[(profile, attack)] += 1
        flips[(profile, attack)] += int(bool(success))

    order = {p: i for i, p in enumerate(ClusterProfile)}
    rows = []
    for profile, attack in sorted(totals, key=lambda key: (order[key[0]], key[1])):
        count = totals[(profile, attack)]
        rows.append({"profile": profile.value, "attack": attack, "count": count,
                     "success_rate": flips[(profile, attack)] / count})
    return rows
