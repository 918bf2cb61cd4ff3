"""
Tests for the target score function and target mining
"""
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from taro_lab.autodiff import Tensor
from taro_lab.models.siamnet import EmbeddingSet
from taro_lab.schemas.configs import ScoreConfig
from taro_lab.services.target_selection import (
    Pairing,
    random_targets,
    score_entropy,
    score_similarity,
    select_targets,
    target_class_distribution,
)
from taro_lab.utils.error_handler import DegenerateVectorError, DimensionError, SelectionError


def embeddings(e, p=None) -> EmbeddingSet:
    e = Tensor(e)
    p = Tensor(p) if p is not None else e
    return EmbeddingSet(e=e, z=p, p=p)


def brute_force_targets(e_base, e_cand, p_cand, excluded, tau):
    """Direct per-row evaluation of the normalized similarity + entropy score"""
    picks = []
    for i in range(len(e_base)):
        sims = []
        for j in range(len(e_cand)):
            if (i, j) in excluded:
                sims.append(-1.0)
            else:
                a, b = e_base[i], e_cand[j]
                sims.append(float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b))))
        ents = []
        for j in range(len(e_cand)):
            logits = p_cand[j] / tau
            probs = np.exp(logits - logits.max())
            probs /= probs.sum()
            ents.append(float(-np.sum(probs * np.log(probs))))
        sim_norm = math.sqrt(sum(s * s for s in sims))
        ent_norm = math.sqrt(sum(h * h for h in ents))
        best, best_score = None, -math.inf
        for j in range(len(e_cand)):
            if (i, j) in excluded:
                continue
            score = sims[j] / sim_norm + ents[j] / ent_norm
            if score > best_score:
                best, best_score = j, score
        picks.append(best)
    return picks


@pytest.mark.unit
class TestScoreTerms:
    """Entropy and similarity components"""

    def test_uniform_entropy(self):
        assert score_entropy([0.0, 0.0, 0.0, 0.0], 0.5) == pytest.approx(math.log(4), abs=1e-12)

    def test_peaked_entropy_vanishes(self):
        assert score_entropy([100.0, 0.0, 0.0], 0.5) < 1e-12

    def test_row_wise_entropy(self):
        values = score_entropy(np.array([[0.0, 0.0], [50.0, 0.0]]), 1.0)
        assert values.shape == (2,)
        assert values[0] == pytest.approx(math.log(2), abs=1e-12)

    def test_similarity_examples(self):
        assert score_similarity([1.0, 0.0], [1.0, 0.0]) == pytest.approx(1.0, abs=1e-12)
        assert score_similarity([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0, abs=1e-12)
        assert score_similarity([1.0, 2.0], [2.0, 1.0]) == pytest.approx(0.8, abs=1e-12)

    def test_similarity_matrix(self, rng):
        a, b = rng.normal(size=(3, 5)), rng.normal(size=(4, 5))
        sims = score_similarity(a, b)
        assert sims.shape == (3, 4)
        assert sims[1, 2] == pytest.approx(score_similarity(a[1], b[2]), abs=1e-12)

    def test_similarity_degenerate(self):
        with pytest.raises(DegenerateVectorError):
            score_similarity([0.0, 0.0], [1.0, 0.0])


@pytest.mark.property
class TestScoreProperties:
    """Invariances of the score terms"""

    logits = st.lists(st.floats(min_value=-20, max_value=20), min_size=2, max_size=8).map(np.array)

    @given(p=logits, shift=st.floats(min_value=-100, max_value=100))
    @settings(max_examples=50, deadline=None)
    def test_entropy_shift_invariant(self, p, shift):
        assert score_entropy(p + shift, 0.5) == pytest.approx(score_entropy(p, 0.5), abs=1e-9)

    @given(p=logits, tau=st.floats(min_value=0.05, max_value=5.0))
    @settings(max_examples=50, deadline=None)
    def test_entropy_range(self, p, tau):
        value = score_entropy(p, tau)
        assert -1e-12 <= value <= math.log(len(p)) + 1e-12

    @given(
        e=st.lists(st.floats(min_value=-5, max_value=5), min_size=3, max_size=3).map(np.array),
        e_prime=st.lists(st.floats(min_value=-5, max_value=5), min_size=3, max_size=3).map(np.array),
        c=st.floats(min_value=0.01, max_value=100),
    )
    @settings(max_examples=50, deadline=None)
    def test_similarity_scale_invariant(self, e, e_prime, c):
        assume(np.linalg.norm(e) > 1e-3 and np.linalg.norm(e_prime) > 1e-3)
        assert score_similarity(c * e, e_prime) == pytest.approx(score_similarity(e, e_prime), abs=1e-12)

    @given(seed=st.integers(min_value=0, max_value=10_000), batch=st.integers(min_value=3, max_value=9))
    @settings(max_examples=40, deadline=None)
    def test_never_selects_self_or_positive(self, seed, batch):
        gen = np.random.default_rng(seed)
        base = embeddings(gen.normal(size=(batch, 4)), gen.normal(size=(batch, 3)))
        positives = [(i + 1) % batch for i in range(batch)]
        picks = select_targets(base, pairing=Pairing.same_batch(batch, positives))
        for i, j in enumerate(picks):
            assert j != i and j != positives[i]


@pytest.mark.unit
class TestSelectTargets:
    """argmax over eligible candidates"""

    def test_batch_of_two_is_forced(self, rng):
        base = embeddings(rng.normal(size=(2, 3)))
        np.testing.assert_array_equal(select_targets(base, pairing=Pairing.same_batch(2)), [1, 0])

    def test_cross_view_excludes_same_index(self, rng):
        v1 = embeddings(rng.normal(size=(5, 3)))
        v2 = embeddings(rng.normal(size=(5, 3)))
        picks = select_targets(v1, v2, Pairing.cross_view(5))
        assert all(j != i for i, j in enumerate(picks))

    def test_ties_go_to_lowest_index(self):
        base = embeddings(np.ones((4, 3)))
        picks = select_targets(base, base, Pairing.cross_view(4))
        np.testing.assert_array_equal(picks, [1, 0, 0, 0])

    def test_batch_of_one(self):
        base = embeddings(np.ones((1, 3)))
        with pytest.raises(SelectionError):
            select_targets(base, pairing=Pairing.same_batch(1))

    def test_no_eligible_candidate(self):
        base = embeddings(np.eye(2))
        with pytest.raises(SelectionError):
            select_targets(base, pairing=Pairing([[0, 1], [1]], 2))

    def test_pairing_index_out_of_range(self):
        with pytest.raises(DimensionError):
            Pairing([[0], [3]], 2)

    def test_matches_brute_force(self, rng):
        e_base, e_cand = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
        p_cand = rng.normal(size=(6, 3))
        picks = select_targets(embeddings(e_base), embeddings(e_cand, p_cand), Pairing.cross_view(6))
        excluded = {(i, i) for i in range(6)}
        assert picks.tolist() == brute_force_targets(e_base, e_cand, p_cand, excluded, 0.5)

    def test_permutation_equivariant(self, rng):
        e, p = rng.normal(size=(7, 4)), rng.normal(size=(7, 3))
        perm = rng.permutation(7)
        original = select_targets(embeddings(e, p), pairing=Pairing.same_batch(7))
        permuted = select_targets(embeddings(e[perm], p[perm]), pairing=Pairing.same_batch(7))
        for k in range(7):
            assert perm[permuted[k]] == original[perm[k]]

    def test_similarity_component_picks_most_similar(self):
        e = np.array([[1.0, 0.0], [0.0, 1.0], [0.9, 0.1], [-1.0, 0.0]])
        picks = select_targets(embeddings(e), config=ScoreConfig(exclusion="same_batch", components="similarity"))
        assert picks[0] == 2

    def test_entropy_component_picks_most_uncertain(self):
        e = np.eye(3)
        p = np.array([[5.0, 0.0], [0.0, 0.0], [3.0, 0.0]])
        picks = select_targets(
            embeddings(e, p), config=ScoreConfig(exclusion="same_batch", components="entropy")
        )
        np.testing.assert_array_equal(picks, [1, 2, 1])

    def test_random_targets_respect_exclusions(self, rng):
        pairing = Pairing.same_batch(6, [1, 0, 3, 2, 5, 4])
        picks = random_targets(pairing, rng)
        excluded = pairing.mask()
        assert not any(excluded[i, j] for i, j in enumerate(picks))

    def test_random_targets_deterministic(self):
        pairing = Pairing.cross_view(8)
        first = random_targets(pairing, np.random.default_rng(9))
        second = random_targets(pairing, np.random.default_rng(9))
        np.testing.assert_array_equal(first, second)

    def test_verify_accepts_eligible_targets(self, rng):
        pairing = Pairing.same_batch(6, [1, 0, 3, 2, 5, 4])
        pairing.verify(random_targets(pairing, rng))

    def test_verify_rejects_positive(self):
        with pytest.raises(SelectionError):
            Pairing.cross_view(4).verify(np.array([1, 1, 0, 0]))

    def test_verify_rejects_partner(self):
        pairing = Pairing.same_batch(4, [1, 0, 3, 2])
        with pytest.raises(SelectionError):
            pairing.verify(np.array([2, 3, 1, 2]))

    def test_verify_rejects_wrong_length(self):
        with pytest.raises(SelectionError):
            Pairing.cross_view(4).verify(np.array([1, 0, 3]))


@pytest.mark.unit
class TestTargetClassDistribution:
    """Histogram of target classes per base class"""

    def test_single_target_class_is_one_hot(self):
        probs = np.tile([0.1, 0.1, 0.8], (6, 1))
        report = target_class_distribution(
            np.zeros(6, dtype=int), np.array([0, 0, 1, 1, 2, 2]), probs, probs, 3
        )
        assert report.counts == [[0, 0, 2], [0, 0, 2], [0, 0, 2]]

    def test_counts_sum_to_base_samples(self, rng):
        probs = rng.dirichlet(np.ones(4), size=20)
        labels = rng.integers(0, 4, size=20)
        selected = rng.integers(0, 20, size=20)
        report = target_class_distribution(selected, labels, probs, probs, 4)
        assert sum(sum(row) for row in report.counts) == 20

    def test_top_confused_follows_base_probabilities(self):
        base_probs = np.array([[0.6, 0.1, 0.3], [0.2, 0.7, 0.1]])
        target_probs = np.array([[0.1, 0.1, 0.8], [0.9, 0.05, 0.05]])
        report = target_class_distribution(np.array([0, 1]), np.array([0, 1]), target_probs, base_probs, 3)
        assert report.top_confused[0] == [2, 1]
        assert report.top_confused[1] == [0, 2]
        assert report.confused_fraction == [1.0, 1.0, 0.0]
        assert report.mean_probability[0] == pytest.approx([0.1, 0.1, 0.8])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            target_class_distribution(np.array([0, 1]), np.array([0]), np.eye(2), np.eye(2), 2)
