"""Adversarial example generation for outcome-prediction models.

Regular attacks perturb activities directly (last event, every event, or k
admissible events); projected attacks push each perturbation through the
class manifold; latent sampling and gradient steps work in latent space.
"""

import logging
import zlib
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .classifiers import Classifier, ClassifierKind, loss_and_gradient_wrt_latent, predict_batch
from .encoding import (ActivitySequence, ActivityVocabulary, aggregate_encode, as_activities,
                       onehot_encode)
from .errors import (AdversarialPPMError, AttackPreconditionError, SelectionError,
                     UnsupportedOperationError)
from .eventlog import Prefix, PrefixLog
from .manifold import ClassManifold, LatentPoint, reparameterize

logger = logging.getLogger(__name__)

Candidate = Tuple[str, ...]


class Strategy(str, Enum):
    REGULAR = "regular"
    PROJECTED = "projected"
    LATENT_SAMPLED = "latent_sampled"
    GRADIENT_BASED = "gradient_based"

    @property
    def uses_manifold(self) -> bool:
        return self is not Strategy.REGULAR


class AttackType(str, Enum):
    LAST_EVENT = "last_event"
    ALL_EVENT = "all_event"
    K_EVENT = "k_event"


@dataclass(frozen=True)
class AttackConfig:
    strategy: Strategy
    attack_type: Optional[AttackType] = None
    nr_adv: int = 16
    k_events: int = 3
    max_iters: int = 1500
    step_size: float = 0.05
    lambda_dist: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.strategy in (Strategy.REGULAR, Strategy.PROJECTED):
            if self.attack_type is None:
                raise ValueError(f"{self.strategy.value} attacks need an attack type")
            object.__setattr__(self, "attack_type", AttackType(self.attack_type))
        else:
            object.__setattr__(self, "attack_type", None)
        if self.nr_adv < 1 or self.k_events < 1 or self.max_iters < 1:
            raise ValueError("nr_adv, k_events and max_iters must be at least 1")
        if self.step_size < 0 or self.lambda_dist < 0:
            raise ValueError("step_size and lambda_dist must be non-negative")

    @property
    def attack_label(self) -> str:
        return self.attack_type.value if self.attack_type else self.strategy.value

    @property
    def name(self) -> str:
        if self.attack_type is None:
            return self.strategy.value
        return f"{self.strategy.value}:{self.attack_type.value}"


ATTACK_METHODS: Tuple[Tuple[Strategy, Optional[AttackType]], ...] = (
    (Strategy.REGULAR, AttackType.LAST_EVENT),
    (Strategy.REGULAR, AttackType.ALL_EVENT),
    (Strategy.REGULAR, AttackType.K_EVENT),
    (Strategy.PROJECTED, AttackType.LAST_EVENT),
    (Strategy.PROJECTED, AttackType.ALL_EVENT),
    (Strategy.PROJECTED, AttackType.K_EVENT),
    (Strategy.LATENT_SAMPLED, None),
    (Strategy.GRADIENT_BASED, None),
)


def parse_attack_methods(spec: str) -> List[Tuple[Strategy, Optional[AttackType]]]:
    """Parse 'all' or a comma list such as 'regular:last_event, latent_sampled'."""
    if spec.strip().lower() == "all":
        return list(ATTACK_METHODS)
    methods = []
    for token in filter(None, (t.strip() for t in spec.split(","))):
        strategy, _, attack_type = token.partition(":")
        method = (Strategy(strategy), AttackType(attack_type) if attack_type else None)
        if method not in ATTACK_METHODS:
            raise ValueError(f"unknown attack method '{token}'")
        methods.append(method)
    return methods


def applicable_attacks(kind: ClassifierKind, methods: Iterable[Tuple[Strategy, Optional[AttackType]]],
                       **settings) -> List[AttackConfig]:
    """AttackConfigs for ``methods``; gradient steps only against recurrent models."""
    configs = []
    for strategy, attack_type in methods:
        if strategy is Strategy.GRADIENT_BASED and ClassifierKind(kind) is not ClassifierKind.RECURRENT:
            continue
        configs.append(AttackConfig(strategy, attack_type, **settings))
    return configs


@dataclass(frozen=True)
class PositionActivityTable:
    """(1-based position, activity) pairs observed in the training prefixes."""

    by_position: Mapping[int, Tuple[str, ...]]

    @property
    def pairs(self) -> FrozenSet[Tuple[int, str]]:
        return frozenset((pos, act) for pos, acts in self.by_position.items() for act in acts)

    def admissible(self, position: int) -> Tuple[str, ...]:
        return self.by_position.get(position, ())

    def __contains__(self, pair: Tuple[int, str]) -> bool:
        return pair[1] in self.by_position.get(pair[0], ())


def build_position_activity_table(train: Iterable[ActivitySequence]) -> PositionActivityTable:
    seen: Dict[int, Dict[str, None]] = defaultdict(dict)
    for sequence in train:
        for position, activity in enumerate(as_activities(sequence), start=1):
            seen[position][activity] = None
    return PositionActivityTable({pos: tuple(acts) for pos, acts in sorted(seen.items())})


@dataclass(frozen=True)
class AdversarialResult:
    case_id: str
    original: Candidate
    original_label: int
    adversarial: Optional[Candidate]
    strategy: str
    attack: str
    original_prob: float
    adversarial_prob: Optional[float]
    flipped: bool
    latent_distance: Optional[float]
    candidate_count: int
    status: str = "ok"
    extras: Dict[str, float] = field(default_factory=dict, compare=False)

    @property
    def prefix_length(self) -> int:
        return len(self.original)

    @property
    def has_adversarial(self) -> bool:
        return self.adversarial is not None


def _dedupe(candidates: Iterable[Candidate], original: Candidate) -> List[Candidate]:
    kept: Dict[Candidate, None] = {}
    for candidate in candidates:
        if candidate != original:
            kept.setdefault(tuple(candidate), None)
    return list(kept)


def permute_last_event(prefix: ActivitySequence, vocab: ActivityVocabulary,
                       rng: np.random.Generator, nr_adv: int) -> List[Candidate]:
    original = as_activities(prefix)
    if not original:
        raise AttackPreconditionError("cannot permute the last event of an empty prefix")
    alternatives = [a for a in vocab.activities if a != original[-1]]
    if not alternatives:
        return []
    chosen = np.sort(rng.choice(len(alternatives), size=min(nr_adv, len(alternatives)),
                                replace=False))
    return [original[:-1] + (alternatives[i],) for i in chosen]


def permute_all_events(prefix: ActivitySequence, vocab: ActivityVocabulary,
                       rng: np.random.Generator, nr_adv: int) -> List[Candidate]:
    original = as_activities(prefix)
    if not original:
        raise AttackPreconditionError("cannot permute an empty prefix")
    if vocab.n_activities < 2:
        return []
    candidates = []
    for _ in range(nr_adv):
        candidate = []
        for activity in original:
            options = [a for a in vocab.activities if a != activity]
            candidate.append(options[rng.integers(len(options))])
        candidates.append(tuple(candidate))
    return _dedupe(candidates, original)


def permute_k_events(prefix: ActivitySequence, k: int, table: PositionActivityTable,
                     rng: np.random.Generator, nr_adv: int) -> List[Candidate]:
    if k < 1:
        raise ValueError("k must be at least 1")
    original = as_activities(prefix)
    admissible = [(pos, act) for pos in range(1, len(original) + 1)
                  for act in table.admissible(pos) if act != original[pos - 1]]
    if not admissible:
        return []

    candidates = []
    for _ in range(nr_adv):
        candidate = list(original)
        modified = set()
        for i in rng.permutation(len(admissible)):
            pos, act = admissible[i]
            if pos in modified:
                continue
            candidate[pos - 1] = act
            modified.add(pos)
            if len(modified) == k:
                break
        candidates.append(tuple(candidate))
    return _dedupe(candidates, original)


def project(manifold: ClassManifold, candidate: ActivitySequence) -> Candidate:
    """Decode the posterior mean of ``candidate`` on the class manifold."""
    return manifold.decode(manifold.encode(candidate).mu)


def decode_latent_samples(manifold: ClassManifold, point: LatentPoint,
                          eps: np.ndarray) -> List[Candidate]:
    return [manifold.decode(reparameterize(point, e)) for e in np.atleast_2d(eps)]


def latent_sampling_attack(manifold: ClassManifold, prefix: ActivitySequence, nr_adv: int,
                           rng: np.random.Generator) -> List[Candidate]:
    point = manifold.encode(prefix)
    eps = rng.standard_normal((nr_adv, manifold.latent_dim)).astype(point.mu.dtype)
    candidates = _dedupe(decode_latent_samples(manifold, point, eps), as_activities(prefix))
    if not candidates:
        logger.debug("every latent sample reproduced the original prefix")
    return candidates


def classifier_input(classifier: Classifier, sequence: ActivitySequence,
                     vocab: ActivityVocabulary, max_len: int) -> np.ndarray:
    if classifier.input_mode == "sequence":
        return onehot_encode(sequence, vocab, max_len).rows
    return aggregate_encode(sequence, vocab)


def gradient_steps_attack(manifold: ClassManifold, classifier: Classifier,
                          prefix: Prefix, max_iters: int = 1500, step_size: float = 0.05,
                          lambda_dist: float = 0.1) -> Optional[Candidate]:
    """Descend from the prefix's latent mean toward the opposite label.

    Returns:
        The first decoded sequence the classifier labels differently, or None
        once ``max_iters`` steps are spent or the gradient vanishes.
    """
    if classifier.kind is not ClassifierKind.RECURRENT:
        raise UnsupportedOperationError("gradient steps need a differentiable (recurrent) classifier")
    vocab, max_len = manifold.vocab, manifold.max_len
    x = classifier_input(classifier, prefix, vocab, max_len)
    _, (label,) = predict_batch(classifier, x[np.newaxis])
    if label != prefix.label:
        raise AttackPreconditionError(f"prefix of case {prefix.case_id} is misclassified")

    z0 = manifold.encode(prefix).mu.astype(np.float64)
    z = z0.copy()
    target = 1 - prefix.label
    for _ in range(max_iters):
        _, gradient = loss_and_gradient_wrt_latent(classifier, manifold, z, target, z0, lambda_dist)
        if not np.any(gradient):
            break
        z = z - step_size * gradient
        decoded = manifold.decode(z)
        _, (decoded_label,) = predict_batch(
            classifier, classifier_input(classifier, decoded, vocab, max_len)[np.newaxis])
        if decoded_label != label:
            return decoded
    return None


def select_closest(original: ActivitySequence, candidates: Sequence[ActivitySequence],
                   manifold: ClassManifold) -> Tuple[Candidate, float]:
    """Candidate whose posterior mean is nearest the original's; first one wins ties."""
    if not candidates:
        raise SelectionError("no candidates to select from")
    mu, _ = manifold.encode_batch([original] + list(candidates))
    distances = np.linalg.norm(mu[1:] - mu[0], axis=1)
    best = int(np.argmin(distances))
    return as_activities(candidates[best]), float(distances[best])


def prefix_rng(seed: int, case_id: str, length: int) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(case_id.encode("utf-8")), length])


class AttackRunner:
    """Applies one AttackConfig to every correctly predicted prefix."""

    def __init__(self, classifier: Classifier, manifolds: Mapping[int, ClassManifold],
                 config: AttackConfig, vocab: ActivityVocabulary, max_len: int,
                 table: Optional[PositionActivityTable] = None):
        self.classifier = classifier
        self.manifolds = manifolds
        self.config = config
        self.vocab = vocab
        self.max_len = max_len
        self.table = table
        self._check_preconditions()

    def _check_preconditions(self) -> None:
        config = self.config
        if config.strategy is Strategy.GRADIENT_BASED and self.classifier.kind is not ClassifierKind.RECURRENT:
            raise UnsupportedOperationError(
                f"gradient steps cannot attack a {self.classifier.kind.value} classifier")
        if config.attack_type is AttackType.K_EVENT and self.table is None:
            raise AttackPreconditionError("k-event attacks need a position/activity table")
        if config.strategy.uses_manifold and set(self.manifolds) != {0, 1}:
            raise AttackPreconditionError(f"{config.name} needs a manifold for both classes")
        hashes = {self.vocab.content_hash()}
        hashes.update(m.vocab.content_hash() for m in self.manifolds.values())
        if self.classifier.vocab_hash is not None:
            hashes.add(self.classifier.vocab_hash)
        if len(hashes) > 1:
            raise AttackPreconditionError("classifier and manifolds were built on different vocabularies")

    def encode_batch(self, sequences: Sequence[ActivitySequence]) -> np.ndarray:
        return np.stack([classifier_input(self.classifier, s, self.vocab, self.max_len)
                         for s in sequences])

    def _raw_candidates(self, prefix: Prefix, rng: np.random.Generator) -> List[Candidate]:
        config = self.config
        if config.attack_type is AttackType.LAST_EVENT:
            return permute_last_event(prefix, self.vocab, rng, config.nr_adv)
        if config.attack_type is AttackType.ALL_EVENT:
            return permute_all_events(prefix, self.vocab, rng, config.nr_adv)
        return permute_k_events(prefix, config.k_events, self.table, rng, config.nr_adv)

    def candidates(self, prefix: Prefix) -> List[Candidate]:
        config = self.config
        rng = prefix_rng(config.seed, prefix.case_id, len(prefix))
        manifold = self.manifolds.get(prefix.label)
        if config.strategy is Strategy.REGULAR:
            return self._raw_candidates(prefix, rng)
        if config.strategy is Strategy.PROJECTED:
            projected = [project(manifold, c) for c in self._raw_candidates(prefix, rng)]
            return _dedupe(projected, prefix.activities)
        if config.strategy is Strategy.LATENT_SAMPLED:
            return latent_sampling_attack(manifold, prefix, config.nr_adv, rng)
        found = gradient_steps_attack(manifold, self.classifier, prefix, config.max_iters,
                                      config.step_size, config.lambda_dist)
        return [] if found is None else _dedupe([found], prefix.activities)

    def attack(self, prefix: Prefix, original_prob: float) -> AdversarialResult:
        config = self.config
        row = dict(case_id=prefix.case_id, original=prefix.activities, original_label=prefix.label,
                   strategy=config.strategy.value, attack=config.attack_label,
                   original_prob=original_prob)
        try:
            candidates = self.candidates(prefix)
            if not candidates:
                status = "no_flip_found" if config.strategy is Strategy.GRADIENT_BASED else "no_candidates"
                return AdversarialResult(adversarial=None, adversarial_prob=None, flipped=False,
                                         latent_distance=None, candidate_count=0, status=status, **row)
            manifold = self.manifolds.get(prefix.label)
            if manifold is not None:
                adversarial, distance = select_closest(prefix, candidates, manifold)
            else:
                adversarial, distance = candidates[0], None
            (adversarial_prob,), (adversarial_label,) = predict_batch(
                self.classifier, self.encode_batch([adversarial]))
        except AdversarialPPMError as exc:
            logger.warning("attack %s failed on case %s (length %d): %s",
                           config.name, prefix.case_id, len(prefix), exc)
            return AdversarialResult(adversarial=None, adversarial_prob=None, flipped=False,
                                     latent_distance=None, candidate_count=0,
                                     status=f"error: {exc}", **row)
        except Exception as exc:
            logger.exception("attack %s crashed on case %s (length %d)",
                             config.name, prefix.case_id, len(prefix))
            return AdversarialResult(adversarial=None, adversarial_prob=None, flipped=False,
                                     latent_distance=None, candidate_count=0,
                                     status=f"error: {type(exc).__name__}: {exc}", **row)
        return AdversarialResult(adversarial=adversarial, adversarial_prob=float(adversarial_prob),
                                 flipped=bool(adversarial_label != prefix.label),
                                 latent_distance=distance, candidate_count=len(candidates), **row)


def generate_adversarials(prefixes: PrefixLog, classifier: Classifier,
                          manifolds: Mapping[int, ClassManifold], config: AttackConfig,
                          vocab: ActivityVocabulary, table: Optional[PositionActivityTable] = None,
                          workers: int = 1, progress: bool = False) -> List[AdversarialResult]:
    """Attack every test prefix the classifier predicts correctly.

    Args:
        prefixes: Test prefixes (already capped by the caller)
        classifier: Trained classifier with its threshold
        manifolds: Class manifold per label; may be empty for regular attacks
        config: Attack method and budget
        vocab: Shared vocabulary
        table: Position/activity table from the training prefixes (k-event attacks)
        workers: Thread count; results keep input order

    Returns:
        One AdversarialResult per correctly predicted prefix
    """
    max_len = prefixes.max_length
    runner = AttackRunner(classifier, manifolds, config, vocab, max_len, table)
    if len(prefixes) == 0:
        return []

    probs, labels = predict_batch(classifier, runner.encode_batch(prefixes.prefixes))
    pool = [(p, float(prob)) for p, prob, label in zip(prefixes, probs, labels) if label == p.label]
    logger.info("%s: attacking %d of %d correctly predicted prefixes", config.name, len(pool),
                len(prefixes))

    bar = tqdm(total=len(pool), desc=config.name, disable=not progress, leave=False)

    def run(item: Tuple[Prefix, float]) -> AdversarialResult:
        result = runner.attack(*item)
        bar.update(1)
        return result

    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                return list(executor.map(run, pool))
        return [run(item) for item in pool]
    finally:
        bar.close()
