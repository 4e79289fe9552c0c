"""Tests for the adversarial distance metrics."""

import itertools
import os
import sys
import unittest
from types import SimpleNamespace

import numpy as np
from scipy.optimize import linprog

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from adversarial_ppm.encoding import ActivityVocabulary, aggregate_encode
from adversarial_ppm.errors import MetricError
from adversarial_ppm.manifold import LatentPoint
from adversarial_ppm.metrics import (distance_panel, dl_edit, emd, flip_from_probabilities,
                                     l1_l2, latent_euclidean, lcp, success_by_length,
                                     success_rate, summarize)


def transport_cost(p, q):
    """Optimal transport between equal-mass histograms with |i - j| ground cost."""
    n = len(p)
    cost = np.abs(np.subtract.outer(np.arange(n), np.arange(n))).ravel()
    a_eq = []
    for i in range(n):
        row = np.zeros((n, n))
        row[i, :] = 1
        a_eq.append(row.ravel())
    for j in range(n):
        col = np.zeros((n, n))
        col[:, j] = 1
        a_eq.append(col.ravel())
    b_eq = np.concatenate([p, q]).astype(float)
    return linprog(cost, A_eq=np.array(a_eq), b_eq=b_eq, bounds=(0, None), method="highs").fun


def edit_script_distances(source, alphabet, depth):
    """Breadth-first search over single edits, adjacent swaps included."""
    dist = {source: 0}
    frontier = [source]
    for d in range(1, depth + 1):
        following = []
        for s in frontier:
            neighbours = [s[:i] + s[i + 1:] for i in range(len(s))]
            neighbours += [s[:i] + (c,) + s[i:] for i in range(len(s) + 1) for c in alphabet]
            neighbours += [s[:i] + (c,) + s[i + 1:] for i in range(len(s)) for c in alphabet]
            neighbours += [s[:i] + (s[i + 1], s[i]) + s[i + 2:] for i in range(len(s) - 1)]
            for n in neighbours:
                if n not in dist:
                    dist[n] = d
                    following.append(n)
        frontier = following
    return dist


def result(original, adversarial, flipped, latent=None):
    return SimpleNamespace(original=tuple(original),
                           adversarial=None if adversarial is None else tuple(adversarial),
                           flipped=flipped, latent_distance=latent,
                           prefix_length=len(original))


class TestInputDistances(unittest.TestCase):

    def setUp(self):
        self.vocab = ActivityVocabulary(("a", "b", "c", "d"))

    def test_l1_l2(self):
        l1, l2 = l1_l2(np.array([1, 0]), np.array([0, 1]))
        self.assertEqual(l1, 2.0)
        self.assertAlmostEqual(l2, np.sqrt(2))

    def test_l1_l2_shape_mismatch(self):
        with self.assertRaises(MetricError):
            l1_l2(np.zeros(3), np.zeros(4))

    def test_emd_adjacent_and_far(self):
        self.assertEqual(emd(["a"], ["b"], self.vocab), 1.0)
        self.assertEqual(emd(["a"], ["d"], self.vocab), 3.0)
        self.assertEqual(emd(["a", "b"], ["b", "a"], self.vocab), 0.0)

    def test_emd_matches_linear_program(self):
        rng = np.random.default_rng(11)
        activities = list(self.vocab.activities)
        for _ in range(15):
            length = int(rng.integers(1, 7))
            x = list(rng.choice(activities, size=length))
            y = list(rng.choice(activities, size=length))
            expected = transport_cost(aggregate_encode(x, self.vocab), aggregate_encode(y, self.vocab))
            self.assertAlmostEqual(emd(x, y, self.vocab), expected, places=6)

    def test_dl_edit_basics(self):
        self.assertEqual(dl_edit(["a", "b"], ["b", "a"]), 1)
        self.assertEqual(dl_edit(["a", "b", "c"], ["a", "b", "c"]), 0)
        self.assertEqual(dl_edit([], ["a", "b"]), 2)
        self.assertEqual(dl_edit(["a", "b", "c"], ["a", "d", "c"]), 1)

    def test_dl_edit_allows_edit_after_transposition(self):
        # restricted (OSA) distance would be 3
        self.assertEqual(dl_edit(["c", "a"], ["a", "b", "c"]), 2)

    def test_dl_edit_is_a_metric(self):
        words = [tuple(w) for w in ("ab", "ba", "abc", "cab", "bca", "a", "cc")]
        for x, y, z in itertools.product(words, repeat=3):
            self.assertEqual(dl_edit(x, y), dl_edit(y, x))
            self.assertLessEqual(dl_edit(x, z), dl_edit(x, y) + dl_edit(y, z))

    def test_dl_edit_matches_edit_script_search(self):
        alphabet = ("a", "b", "c")
        words = [w for n in range(4) for w in itertools.product(alphabet, repeat=n)]
        for source in words:
            reachable = edit_script_distances(source, alphabet, 3)
            for target in words:
                self.assertEqual(dl_edit(source, target), reachable[target], (source, target))

    def test_lcp(self):
        self.assertEqual(lcp(["a", "b", "c"], ["a", "b", "d"]), 2)
        self.assertEqual(lcp(["a"], ["b"]), 0)
        self.assertEqual(lcp(["a", "b"], ["a", "b", "c"]), 2)

    def test_panel(self):
        panel = distance_panel(["a", "b"], ["a", "c"], self.vocab)
        self.assertEqual(panel["l1"], 2.0)
        self.assertEqual(panel["emd"], 1.0)
        self.assertEqual(panel["dl_edit"], 1)
        self.assertEqual(panel["lcp"], 1)
        self.assertEqual(panel["adv_length"], 2)


class TestLatentDistance(unittest.TestCase):

    def test_three_four_five(self):
        a = LatentPoint(np.zeros(2, dtype=np.float32), np.zeros(2, dtype=np.float32))
        b = LatentPoint(np.array([3.0, 4.0], dtype=np.float32), np.zeros(2, dtype=np.float32))
        self.assertAlmostEqual(latent_euclidean(a, b), 5.0)

    def test_dimension_mismatch(self):
        a = LatentPoint(np.zeros(2), np.zeros(2))
        b = LatentPoint(np.zeros(3), np.zeros(3))
        with self.assertRaises(MetricError):
            latent_euclidean(a, b)


class TestSummaries(unittest.TestCase):

    def setUp(self):
        self.vocab = ActivityVocabulary(("a", "b", "c"))

    def test_success_rate(self):
        results = [result("ab", "ac", True), result("ab", None, False), result("abc", "abb", True),
                   result("a", "b", False)]
        self.assertEqual(success_rate(results), 0.5)
        self.assertEqual(success_rate([]), 0.0)

    def test_summary_skips_rows_without_adversarial(self):
        results = [result("ab", "ac", True, latent=1.0), result("ab", None, False),
                   result("abc", "cba", False, latent=3.0)]
        panel = summarize(results, self.vocab)
        self.assertEqual(panel.count, 3)
        self.assertAlmostEqual(panel.success_rate, 1 / 3)
        self.assertAlmostEqual(panel.latent_euclidean, 2.0)
        self.assertAlmostEqual(panel.dl_edit, (1 + 2) / 2)

    def test_summary_without_adversarials_is_nan(self):
        panel = summarize([result("ab", None, False)], self.vocab)
        self.assertTrue(np.isnan(panel.l1))
        self.assertEqual(panel.success_rate, 0.0)

    def test_success_by_length(self):
        results = [result("a", "b", True), result("b", "a", False), result("ab", "aa", True)]
        rows = success_by_length(results)
        self.assertEqual([r["prefix_length"] for r in rows], [1, 2])
        self.assertEqual(rows[0]["success_rate"], 0.5)
        self.assertEqual(rows[0]["normalized_frequency"], 0.5)
        self.assertEqual(sum(r["normalized_frequency"] for r in rows), 1.0)

    def test_flip_from_probabilities(self):
        self.assertTrue(flip_from_probabilities(0.2, 0.5, 0.5))
        self.assertFalse(flip_from_probabilities(0.6, 0.7, 0.5))
        self.assertFalse(flip_from_probabilities(0.6, None, 0.5))


if __name__ == '__main__':
    unittest.main()
