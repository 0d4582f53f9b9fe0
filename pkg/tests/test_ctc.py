"""CTC scoring vs brute-force alignment enumeration, decoding, gradients."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from handiff import tensor as T
from handiff.ctc import (
    Alphabet,
    best_path_decode,
    collapse,
    ctc_loss_graph,
    ctc_neg_log_posterior,
)
from handiff.errors import AlphabetError


def brute_force_prob(frames: np.ndarray, label: str, alphabet: Alphabet) -> float:
    """Sum path probabilities over every frame labelling that collapses
    to the target; the independent oracle for the forward algorithm."""
    F, K = frames.shape
    total = 0.0
    for path in itertools.product(range(K), repeat=F):
        if collapse(path, alphabet) == label:
            p = 1.0
            for t, k in enumerate(path):
                p *= frames[t, k]
            total += p
    return total


def random_posteriors(rng, F, K):
    x = rng.random((F, K)) + 0.05
    return x / x.sum(axis=1, keepdims=True)


TOY = np.array([[0.4, 0.6], [0.4, 0.6]])
AB1 = Alphabet("a")


class TestWorkedExample:
    def test_single_character(self):
        # paths aa, -a, a-: 0.36 + 0.24 + 0.24
        loss = ctc_neg_log_posterior(TOY, "a", AB1)
        assert loss == pytest.approx(-np.log(0.84), abs=1e-12)
        assert loss == pytest.approx(0.174353, abs=1e-6)
        assert brute_force_prob(TOY, "a", AB1) == pytest.approx(0.84, abs=1e-12)

    def test_empty_label(self):
        loss = ctc_neg_log_posterior(TOY, "", AB1)
        assert loss == pytest.approx(-np.log(0.16), abs=1e-12)
        assert loss == pytest.approx(1.832581, abs=1e-6)

    def test_inadmissible_label(self):
        assert ctc_neg_log_posterior(TOY, "aa", AB1) == np.inf

    def test_unknown_character(self):
        with pytest.raises(AlphabetError, match="z"):
            ctc_neg_log_posterior(TOY, "z", AB1)


class TestForwardEquivalence:
    @pytest.mark.parametrize("A", [1, 2, 3])
    @pytest.mark.parametrize("F", [1, 2, 3, 4])
    def test_exhaustive_small_instances(self, A, F):
        alphabet = Alphabet("abc"[:A])
        rng = np.random.default_rng(100 * A + F)
        frames = random_posteriors(rng, F, A + 1)
        labels = [
            "".join(c)
            for L in range(F + 2)
            for c in itertools.product(alphabet.chars, repeat=L)
        ]
        for label in labels:
            ref = brute_force_prob(frames, label, alphabet)
            got = ctc_neg_log_posterior(frames, label, alphabet)
            prob = 0.0 if got == np.inf else float(np.exp(-got))
            assert abs(prob - ref) < 1e-9, (label, prob, ref)

    @pytest.mark.parametrize("A,F", [(1, 3), (2, 3), (3, 4)])
    def test_posterior_mass_sums_to_one(self, A, F):
        alphabet = Alphabet("abc"[:A])
        frames = random_posteriors(np.random.default_rng(9), F, A + 1)
        total = 0.0
        for L in range(F + 1):
            for c in itertools.product(alphabet.chars, repeat=L):
                loss = ctc_neg_log_posterior(frames, "".join(c), alphabet)
                if loss != np.inf:
                    total += np.exp(-loss)
        assert total == pytest.approx(1.0, abs=1e-6)


class TestDecode:
    def test_repeat_collapses(self):
        frames = np.array([[0.1, 0.9], [0.2, 0.8]])
        assert best_path_decode(frames, AB1).text == "a"

    def test_blank_separates_repeats(self):
        frames = np.array([[0.1, 0.9], [0.9, 0.1], [0.1, 0.9]])
        result = best_path_decode(frames, AB1)
        assert result.text == "aa"
        np.testing.assert_array_equal(result.frame_argmax, [1, 0, 1])

    def test_all_blank(self):
        frames = np.array([[0.9, 0.1], [0.9, 0.1]])
        assert best_path_decode(frames, AB1).text == ""

    def test_tie_breaks_to_lower_index(self):
        frames = np.array([[0.5, 0.5]])
        assert best_path_decode(frames, AB1).frame_argmax[0] == 0

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, 3), min_size=1, max_size=12))
    def test_decode_equals_collapse(self, ids):
        alphabet = Alphabet("abc")
        frames = np.full((len(ids), 4), 0.01)
        for t, k in enumerate(ids):
            frames[t, k] = 0.97
        result = best_path_decode(frames, alphabet)
        assert result.text == collapse(ids, alphabet)


class TestLossGradient:
    def test_graph_value_matches_scoring(self):
        alphabet = Alphabet("ab")
        rng = np.random.default_rng(5)
        logits = rng.standard_normal((3, 4, 3))
        labels = [alphabet.encode(s) for s in ("ab", "b", "")]
        losses = ctc_loss_graph(T.Tensor(logits), labels).data
        for i, text in enumerate(("ab", "b", "")):
            shift = logits[i] - logits[i].max(axis=1, keepdims=True)
            probs = np.exp(shift) / np.exp(shift).sum(axis=1, keepdims=True)
            ref = ctc_neg_log_posterior(probs, text, alphabet)
            assert losses[i] == pytest.approx(ref, rel=1e-10)

    def test_gradient_matches_finite_differences(self):
        alphabet = Alphabet("abc")
        rng = np.random.default_rng(17)
        logits = T.parameter(rng.standard_normal((3, 4, 4)) * 0.5)
        labels = [alphabet.encode(s) for s in ("ab", "ccb", "a")]

        def loss_value():
            return float(ctc_loss_graph(logits, labels).sum().data)

        total = ctc_loss_graph(logits, labels).sum()
        T.backward(total)
        analytic = logits.grad.copy()

        h = 1e-6
        worst = 0.0
        flat = logits.data.reshape(-1)
        gflat = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_value()
            flat[i] = orig - h
            fm = loss_value()
            flat[i] = orig
            num = (fp - fm) / (2 * h)
            rel = abs(gflat[i] - num) / max(abs(num), abs(gflat[i]), 1e-6)
            worst = max(worst, rel)
        assert worst < 1e-4, worst

    def test_impossible_label_inf_loss_zero_grad(self):
        alphabet = Alphabet("a")
        logits = T.parameter(np.zeros((1, 2, 2)))
        losses = ctc_loss_graph(logits, [alphabet.encode("aa")])
        assert losses.data[0] == np.inf
        T.backward(losses.sum())
        np.testing.assert_array_equal(logits.grad, np.zeros((1, 2, 2)))

    def test_state_posteriors_normalized(self):
        # internal consistency: occupancy sums to one at every frame
        alphabet = Alphabet("ab")
        rng = np.random.default_rng(3)
        logits = T.parameter(rng.standard_normal((2, 5, 3)))
        labels = [alphabet.encode(s) for s in ("ab", "ba")]
        losses = ctc_loss_graph(logits, labels)
        T.backward(losses.sum())
        # gradient = softmax - occupancy; softmax rows sum to 1, so the
        # gradient rows must sum to 0
        np.testing.assert_allclose(logits.grad.sum(axis=2), 0.0, atol=1e-9)
