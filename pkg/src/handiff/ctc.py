"""Alignment-free sequence scoring with a blank symbol.

Frame posteriors are (F, K) arrays of per-frame label probabilities
where index 0 is the blank. Scoring runs the forward dynamic program
over the blank-augmented label in log space; a label whose probability
underflows to exact zero scores ``+inf`` (callers treat that marker as
"impossible", it is not an error). Training uses the forward-backward
posteriors to give the exact gradient of the negative log likelihood
with respect to the logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import AlphabetError

BLANK = 0
DEFAULT_ALPHABET = "abcdefghijklmnopqrstuvwxyz'-"


@dataclass(frozen=True)
class Alphabet:
    """Character inventory; network output index i+1 is ``chars[i]``."""

    chars: str = DEFAULT_ALPHABET

    @property
    def size(self) -> int:
        return len(self.chars)

    @property
    def with_blank(self) -> int:
        return len(self.chars) + 1

    def encode(self, text: str) -> np.ndarray:
        try:
            return np.array([self.chars.index(c) + 1 for c in text], dtype=np.int64)
        except ValueError:
            missing = next(c for c in text if c not in self.chars)
            raise AlphabetError(f"character {missing!r} not in alphabet") from None

    def decode(self, ids) -> str:
        return "".join(self.chars[i - 1] for i in ids if i != BLANK)


def extended_label(label_ids: np.ndarray) -> np.ndarray:
    """Blank-interleaved label: blank, l1, blank, l2, ..., blank."""
    ext = np.full(2 * len(label_ids) + 1, BLANK, dtype=np.int64)
    ext[1::2] = label_ids
    return ext


def _skip_mask(ext: np.ndarray) -> np.ndarray:
    """Whether the s-2 -> s transition is allowed at each state."""
    mask = np.zeros(len(ext), dtype=bool)
    if len(ext) > 2:
        mask[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    return mask


def _forward_logprob(logp: np.ndarray, ext: np.ndarray) -> float:
    """Log probability of the extended label under (F, K) log posteriors."""
    F = logp.shape[0]
    S = len(ext)
    emit = logp[:, ext]  # (F, S)
    alpha = np.full(S, -np.inf)
    alpha[0] = emit[0, 0]
    if S > 1:
        alpha[1] = emit[0, 1]
    skip = _skip_mask(ext)
    with np.errstate(invalid="ignore"):
        for t in range(1, F):
            step = np.full(S, -np.inf)
            step[1:] = alpha[:-1]
            jump = np.full(S, -np.inf)
            if S > 2:
                jump[2:] = alpha[:-2]
            jump = np.where(skip, jump, -np.inf)
            alpha = np.logaddexp(np.logaddexp(alpha, step), jump) + emit[t]
    tail = alpha[-1] if S == 1 else np.logaddexp(alpha[-1], alpha[-2])
    return float(tail)


def ctc_neg_log_posterior(frames: np.ndarray, label: str, alphabet: Alphabet) -> float:
    """Exact -log p(label | frames); ``+inf`` when the probability is 0."""
    frames = np.asarray(frames, dtype=np.float64)
    ids = alphabet.encode(label)
    with np.errstate(divide="ignore"):
        logp = np.log(frames)
    lp = _forward_logprob(logp, extended_label(ids))
    return np.inf if lp == -np.inf else -lp


@dataclass
class DecodeResult:
    text: str
    frame_argmax: np.ndarray


def collapse(frame_ids, alphabet: Alphabet) -> str:
    """Merge repeats, then drop blanks."""
    out = []
    prev = -1
    for i in frame_ids:
        if i != prev and i != BLANK:
            out.append(alphabet.chars[i - 1])
        prev = i
    return "".join(out)


def best_path_decode(frames: np.ndarray, alphabet: Alphabet) -> DecodeResult:
    """Per-frame argmax decoding; ties break toward the lower label index."""
    am = np.argmax(np.asarray(frames), axis=1)
    return DecodeResult(text=collapse(am, alphabet), frame_argmax=am)


# -- training loss -------------------------------------------------------------


def _pad_labels(labels: list[np.ndarray]):
    smax = max(2, max(2 * len(l) + 1 for l in labels))
    b = len(labels)
    ext = np.zeros((b, smax), dtype=np.int64)
    valid = np.zeros((b, smax), dtype=bool)
    skip = np.zeros((b, smax), dtype=bool)
    last = np.zeros(b, dtype=np.int64)
    for i, ids in enumerate(labels):
        e = extended_label(ids)
        ext[i, : len(e)] = e
        valid[i, : len(e)] = True
        skip[i, : len(e)] = _skip_mask(e)
        last[i] = len(e) - 1
    return ext, valid, skip, last


def ctc_loss_graph(logits: T.Tensor, labels: list[np.ndarray]) -> T.Tensor:
    """Per-sample negative log likelihoods as an autodiff node.

    The gradient with respect to the logits is softmax(logits) minus the
    forward-backward state posteriors accumulated per label. Samples with
    zero-probability labels get loss ``+inf`` and a zero gradient.
    """
    logits_data = logits.data if isinstance(logits, T.Tensor) else np.asarray(logits)
    b, f, k = logits_data.shape
    shift = logits_data - logits_data.max(axis=2, keepdims=True)
    log_z = np.log(np.exp(shift).sum(axis=2, keepdims=True))
    logp = shift - log_z  # (B, F, K)
    softmax = np.exp(logp)

    ext, valid, skip, last = _pad_labels(labels)
    smax = ext.shape[1]
    emit = np.take_along_axis(logp, ext[:, None, :], axis=2)  # (B, F, S)
    emit = np.where(valid[:, None, :], emit, -np.inf)

    neg = np.full((b, 1), -np.inf)
    with np.errstate(invalid="ignore"):
        alpha = np.full((b, f, smax), -np.inf)
        alpha[:, 0, 0] = emit[:, 0, 0]
        alpha[:, 0, 1] = np.where(valid[:, 1], emit[:, 0, 1], -np.inf)
        for t in range(1, f):
            prev = alpha[:, t - 1]
            step = np.concatenate([neg, prev[:, :-1]], axis=1)
            jump = np.concatenate([neg, neg, prev[:, :-2]], axis=1)
            jump = np.where(skip, jump, -np.inf)
            alpha[:, t] = np.logaddexp(np.logaddexp(prev, step), jump) + emit[:, t]

        rows = np.arange(b)
        tail = alpha[rows, f - 1, last]
        tail2 = np.where(last >= 1, alpha[rows, f - 1, np.maximum(last - 1, 0)], -np.inf)
        loglik = np.logaddexp(tail, tail2)  # (B,)

        # beta excludes the emission at the current frame, so alpha + beta
        # partitions total path probability at every frame
        beta = np.full((b, f, smax), -np.inf)
        beta[rows, f - 1, last] = 0.0
        beta[rows, f - 1, np.maximum(last - 1, 0)] = np.where(
            last >= 1, 0.0, beta[rows, f - 1, np.maximum(last - 1, 0)]
        )
        for t in range(f - 2, -1, -1):
            nxt = beta[:, t + 1] + emit[:, t + 1]
            step = np.concatenate([nxt[:, 1:], neg], axis=1)
            jump_src = np.where(skip, nxt, -np.inf)
            jump = np.concatenate([jump_src[:, 2:], neg, neg], axis=1)
            beta[:, t] = np.logaddexp(np.logaddexp(nxt, step), jump)

        gamma = np.exp(alpha + beta - loglik[:, None, None])  # (B, F, S)
    gamma = np.where(np.isfinite(loglik)[:, None, None] & valid[:, None, :], gamma, 0.0)

    occupancy = np.zeros_like(softmax)  # (B, F, K)
    for s in range(smax):
        ids = ext[:, s]
        occupancy[rows[:, None], np.arange(f)[None, :], ids[:, None]] += gamma[:, :, s]

    losses = np.where(loglik == -np.inf, np.inf, -loglik)

    def vjp(g):
        scale = np.where(np.isfinite(losses), g, 0.0)[:, None, None]
        return ((softmax - occupancy) * scale,)

    if isinstance(logits, T.Tensor):
        return T.from_op(losses, (logits,), vjp)
    return T.Tensor(losses)
