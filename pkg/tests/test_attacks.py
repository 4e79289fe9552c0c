"""Tests for candidate generation, selection and the attack runner."""

import os
import sys
import unittest
from types import SimpleNamespace
from unittest.mock import patch

import numpy as np
import torch

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from adversarial_ppm.attacks import (ATTACK_METHODS, AttackConfig, AttackRunner, AttackType,
                                     Strategy, applicable_attacks, build_position_activity_table,
                                     decode_latent_samples, generate_adversarials,
                                     gradient_steps_attack, parse_attack_methods,
                                     permute_all_events, permute_k_events, permute_last_event,
                                     prefix_rng, project, select_closest)
from adversarial_ppm.classifiers import Classifier
from adversarial_ppm.encoding import ActivityVocabulary
from adversarial_ppm.errors import (AttackPreconditionError, SelectionError,
                                    UnsupportedOperationError)
from adversarial_ppm.eventlog import Event, Prefix, PrefixLog
from adversarial_ppm.manifold import LatentPoint, VAEConfig, train_class_vae
from adversarial_ppm.metrics import dl_edit

VOCAB = ActivityVocabulary(("a", "b", "c"))


def prefix(case_id, activities, label):
    events = tuple(Event(case_id, a, i, i + 1) for i, a in enumerate(activities))
    return Prefix(case_id, events, label)


def prefix_log(rows, max_length=5):
    return PrefixLog(tuple(prefix(c, s, label) for c, s, label in rows), 1, max_length)


def constant_classifier(probability, vocab=VOCAB):
    model = SimpleNamespace(
        predict_proba=lambda X: np.tile([1 - probability, probability], (len(X), 1)))
    return Classifier("linear", model, (vocab.n_activities,), 0, {}, vocab_hash=vocab.content_hash())


class StubManifold:
    """Latent means looked up from a table; decode echoes a fixed sequence."""

    def __init__(self, means, decoded=("a",), vocab=VOCAB, max_len=5):
        self.means = {tuple(k): np.asarray(v, dtype=np.float32) for k, v in means.items()}
        self.decoded = tuple(decoded)
        self.vocab = vocab
        self.max_len = max_len
        self.latent_dim = 2

    def encode_batch(self, sequences):
        mu = np.stack([self.means[tuple(s.activities if isinstance(s, Prefix) else s)]
                       for s in sequences])
        return mu, np.zeros_like(mu)

    def encode(self, sequence):
        mu, log_var = self.encode_batch([sequence])
        return LatentPoint(mu[0], log_var[0])

    def decode(self, z):
        return self.decoded


class TestCandidateGenerators(unittest.TestCase):

    def test_position_table(self):
        table = build_position_activity_table([("a", "b"), ("a", "c")])
        self.assertEqual(table.pairs, {(1, "a"), (2, "b"), (2, "c")})
        self.assertIn((2, "c"), table)
        self.assertNotIn((1, "b"), table)
        self.assertEqual(table.admissible(3), ())

    def test_last_event(self):
        rng = np.random.default_rng(0)
        self.assertEqual(permute_last_event(("a", "b"), VOCAB, rng, 2), [("a", "a"), ("a", "c")])
        self.assertEqual(len(permute_last_event(("a", "b"), VOCAB, rng, 1)), 1)

    def test_last_event_single_activity_vocab(self):
        vocab = ActivityVocabulary(("a",))
        self.assertEqual(permute_last_event(("a", "a"), vocab, np.random.default_rng(0), 4), [])

    def test_all_events_binary_vocab(self):
        vocab = ActivityVocabulary(("a", "b"))
        rng = np.random.default_rng(0)
        self.assertEqual(permute_all_events(("a", "b"), vocab, rng, 5), [("b", "a")])

    def test_all_events_change_every_position(self):
        rng = np.random.default_rng(1)
        original = ("a", "b", "c", "a")
        for candidate in permute_all_events(original, VOCAB, rng, 10):
            self.assertTrue(all(x != y for x, y in zip(original, candidate)))

    def test_k_events_respect_table_and_budget(self):
        train = [("a", "b", "c", "a"), ("b", "c", "a", "b"), ("c", "a", "b", "c")]
        table = build_position_activity_table(train)
        rng = np.random.default_rng(2)
        for k in (1, 2, 3):
            for original in train:
                for candidate in permute_k_events(original, k, table, rng, 8):
                    self.assertEqual(len(candidate), len(original))
                    self.assertNotEqual(candidate, original)
                    changed = [i for i, (x, y) in enumerate(zip(original, candidate)) if x != y]
                    self.assertLessEqual(len(changed), k)
                    self.assertLessEqual(dl_edit(original, candidate), k)
                    for i in changed:
                        self.assertIn((i + 1, candidate[i]), table)

    def test_k_events_without_admissible_pairs(self):
        table = build_position_activity_table([("a", "b")])
        self.assertEqual(permute_k_events(("a", "b"), 2, table, np.random.default_rng(0), 4), [])

    def test_prefix_rng_is_stable(self):
        a = prefix_rng(7, "case_01", 3).integers(0, 1000, 5)
        b = prefix_rng(7, "case_01", 3).integers(0, 1000, 5)
        c = prefix_rng(7, "case_01", 4).integers(0, 1000, 5)
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))


class TestSelection(unittest.TestCase):

    def test_closest_candidate(self):
        manifold = StubManifold({("a",): [0, 0], ("b",): [3, 0], ("c",): [1, 0]})
        self.assertEqual(select_closest(("a",), [("b",), ("c",)], manifold), (("c",), 1.0))

    def test_first_candidate_wins_ties(self):
        manifold = StubManifold({("a",): [0, 0], ("b",): [0, 2], ("c",): [2, 0]})
        self.assertEqual(select_closest(("a",), [("b",), ("c",)], manifold)[0], ("b",))

    def test_matches_pairwise_scan(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            candidates = [(f"x{i}",) for i in range(10)]
            means = {c: rng.normal(size=2) for c in candidates}
            means[("a",)] = rng.normal(size=2)
            manifold = StubManifold(means)
            scan = min(candidates, key=lambda c: np.linalg.norm(
                manifold.means[c] - manifold.means[("a",)]))
            self.assertEqual(select_closest(("a",), candidates, manifold)[0], scan)

    def test_empty_candidates(self):
        with self.assertRaises(SelectionError):
            select_closest(("a",), [], StubManifold({("a",): [0, 0]}))


class TestMethods(unittest.TestCase):

    def test_parse(self):
        self.assertEqual(len(parse_attack_methods("all")), len(ATTACK_METHODS))
        self.assertEqual(parse_attack_methods("regular:last_event, latent_sampled"),
                         [(Strategy.REGULAR, AttackType.LAST_EVENT), (Strategy.LATENT_SAMPLED, None)])
        with self.assertRaises(ValueError):
            parse_attack_methods("regular:swap")
        with self.assertRaises(ValueError):
            parse_attack_methods("latent_sampled:last_event")

    def test_gradient_only_for_recurrent(self):
        linear = applicable_attacks("linear", ATTACK_METHODS)
        recurrent = applicable_attacks("recurrent", ATTACK_METHODS)
        self.assertEqual(len(linear), len(ATTACK_METHODS) - 1)
        self.assertNotIn(Strategy.GRADIENT_BASED, [c.strategy for c in linear])
        self.assertEqual(len(recurrent), len(ATTACK_METHODS))

    def test_config_names(self):
        self.assertEqual(AttackConfig("regular", "k_event").name, "regular:k_event")
        self.assertEqual(AttackConfig("projected", "last_event").attack_label, "last_event")
        latent = AttackConfig("latent_sampled", "last_event")
        self.assertIsNone(latent.attack_type)
        self.assertEqual(latent.attack_label, "latent_sampled")
        with self.assertRaises(ValueError):
            AttackConfig("regular")


class TestAttackRunner(unittest.TestCase):

    def setUp(self):
        self.prefixes = prefix_log([("c1", ("a", "b"), 1), ("c2", ("b", "c", "a"), 1),
                                    ("c3", ("c",), 1), ("c4", ("a", "a", "b", "c"), 1)])

    def test_only_correct_predictions_are_attacked(self):
        config = AttackConfig("regular", "last_event")
        results = generate_adversarials(self.prefixes, constant_classifier(0.1), {}, config, VOCAB)
        self.assertEqual(results, [])
        results = generate_adversarials(self.prefixes, constant_classifier(0.9), {}, config, VOCAB)
        self.assertEqual([r.case_id for r in results], ["c1", "c2", "c3", "c4"])

    def test_last_event_footprint(self):
        config = AttackConfig("regular", "last_event", nr_adv=4)
        results = generate_adversarials(self.prefixes, constant_classifier(0.9), {}, config, VOCAB)
        for r in results:
            self.assertEqual(r.status, "ok")
            self.assertEqual(r.candidate_count, 2)
            self.assertEqual(r.adversarial[:-1], r.original[:-1])
            self.assertNotEqual(r.adversarial[-1], r.original[-1])
            self.assertFalse(r.flipped)
            self.assertIsNone(r.latent_distance)

    def test_deterministic_across_workers(self):
        config = AttackConfig("regular", "all_event", nr_adv=3, seed=5)
        one = generate_adversarials(self.prefixes, constant_classifier(0.9), {}, config, VOCAB)
        two = generate_adversarials(self.prefixes, constant_classifier(0.9), {}, config, VOCAB,
                                    workers=2)
        self.assertEqual(one, two)

    def test_preconditions(self):
        classifier = constant_classifier(0.9)
        with self.assertRaises(AttackPreconditionError):
            AttackRunner(classifier, {}, AttackConfig("regular", "k_event"), VOCAB, 5)
        with self.assertRaises(AttackPreconditionError):
            AttackRunner(classifier, {}, AttackConfig("projected", "last_event"), VOCAB, 5)
        with self.assertRaises(UnsupportedOperationError):
            AttackRunner(classifier, {}, AttackConfig("gradient_based"), VOCAB, 5)
        other = constant_classifier(0.9, ActivityVocabulary(("a", "b", "d")))
        with self.assertRaises(AttackPreconditionError):
            AttackRunner(other, {}, AttackConfig("regular", "last_event"), VOCAB, 5)

    def test_unexpected_failure_becomes_error_row(self):
        config = AttackConfig("regular", "last_event", nr_adv=4)
        real = permute_last_event

        def flaky(candidate, *args, **kwargs):
            if candidate.case_id == "c2":
                raise RuntimeError("shape mismatch")
            return real(candidate, *args, **kwargs)

        with patch("adversarial_ppm.attacks.permute_last_event", side_effect=flaky):
            with self.assertLogs("adversarial_ppm.attacks", level="ERROR"):
                results = generate_adversarials(self.prefixes, constant_classifier(0.9), {},
                                                config, VOCAB)
        self.assertEqual([r.case_id for r in results], ["c1", "c2", "c3", "c4"])
        statuses = {r.case_id: r.status for r in results}
        self.assertEqual(statuses["c2"], "error: RuntimeError: shape mismatch")
        self.assertFalse(results[1].has_adversarial)
        self.assertEqual({statuses[c] for c in ("c1", "c3", "c4")}, {"ok"})


class TestLatentAttacks(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        sequences = [("a", "b"), ("a", "c"), ("a", "b", "c"), ("b",)] * 3
        prefixes = prefix_log([(f"c{i}", s, 1) for i, s in enumerate(sequences)])
        cls.manifold = train_class_vae(prefixes, VOCAB,
                                       VAEConfig(latent_dim=2, hidden_size=8, epochs=2, max_len=5))

    def test_zero_noise_sample_is_the_projection(self):
        point = self.manifold.encode(("a", "b"))
        decoded = decode_latent_samples(self.manifold, point, np.zeros((1, 2), dtype=np.float32))
        self.assertEqual(decoded, [project(self.manifold, ("a", "b"))])

    def test_decoded_lengths_within_bounds(self):
        rng = np.random.default_rng(0)
        for z in rng.normal(scale=3.0, size=(20, 2)):
            self.assertLessEqual(len(self.manifold.decode(z)), 5)

    def test_manifold_strategies_run(self):
        manifolds = {0: self.manifold, 1: self.manifold}
        prefixes = prefix_log([("c1", ("a", "b"), 1), ("c2", ("b", "c", "a"), 1)])
        for config in (AttackConfig("projected", "last_event", nr_adv=4),
                       AttackConfig("latent_sampled", nr_adv=4)):
            results = generate_adversarials(prefixes, constant_classifier(0.9), manifolds,
                                            config, VOCAB)
            self.assertEqual(len(results), 2)
            for r in results:
                self.assertIn(r.status, ("ok", "no_candidates"))
                if r.has_adversarial:
                    self.assertNotEqual(r.adversarial, r.original)
                    self.assertGreaterEqual(r.latent_distance, 0.0)


class TestGradientSteps(unittest.TestCase):

    def setUp(self):
        # constant logit 2.0: every prefix is labeled 1
        model = lambda rows: torch.full((rows.shape[0],), 2.0)
        self.classifier = Classifier("recurrent", model, (6, VOCAB.size), 0, {})
        self.manifold = StubManifold({("a", "b"): [0.5, 0.5]}, decoded=("a", "b"))

    def test_zero_step_never_flips(self):
        with patch("adversarial_ppm.attacks.loss_and_gradient_wrt_latent",
                   return_value=(1.0, np.ones(2))) as gradient:
            found = gradient_steps_attack(self.manifold, self.classifier,
                                          prefix("c1", ("a", "b"), 1), max_iters=3, step_size=0.0)
        self.assertIsNone(found)
        self.assertEqual(gradient.call_count, 3)

    def test_vanishing_gradient_stops(self):
        with patch("adversarial_ppm.attacks.loss_and_gradient_wrt_latent",
                   return_value=(0.0, np.zeros(2))) as gradient:
            found = gradient_steps_attack(self.manifold, self.classifier,
                                          prefix("c1", ("a", "b"), 1), max_iters=50)
        self.assertIsNone(found)
        self.assertEqual(gradient.call_count, 1)

    def test_returns_first_flipped_decode(self):
        manifold = StubManifold({("a", "b"): [0.5, 0.5]}, decoded=("c",))
        classifier = Classifier(
            "recurrent", lambda rows: torch.where(rows[:, 0, 4] > 0.5, -2.0, 2.0), (6, VOCAB.size), 0, {})
        with patch("adversarial_ppm.attacks.loss_and_gradient_wrt_latent",
                   return_value=(1.0, np.ones(2))):
            found = gradient_steps_attack(manifold, classifier, prefix("c1", ("a", "b"), 1),
                                          max_iters=5)
        self.assertEqual(found, ("c",))

    def test_misclassified_prefix(self):
        with self.assertRaises(AttackPreconditionError):
            gradient_steps_attack(self.manifold, self.classifier, prefix("c1", ("a", "b"), 0))


if __name__ == '__main__':
    unittest.main()
