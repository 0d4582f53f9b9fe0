"""Word and character error rates via edit distance."""

from __future__ import annotations

import math

from .errors import ParameterError


def levenshtein(a, b) -> int:
    """Edit distance between two sequences (two-row dynamic program)."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            current[j] = min(
                previous[j] + 1,  # delete
                current[j - 1] + 1,  # insert
                previous[j - 1] + (ca != cb),  # substitute / match
            )
        previous = current
    return previous[len(b)]


def error_rates(refs: list[str], hyps: list[str]) -> tuple[float, float]:
    """(WER, CER): summed edit distances over summed reference lengths.

    Words are whitespace tokens; characters are the raw strings. With an
    empty reference total the rate is 0 when nothing differs, inf otherwise.
    """
    if len(refs) != len(hyps):
        raise ParameterError(f"got {len(refs)} references but {len(hyps)} hypotheses")
    word_dist = word_total = char_dist = char_total = 0
    for ref, hyp in zip(refs, hyps):
        rw, hw = ref.split(), hyp.split()
        word_dist += levenshtein(rw, hw)
        word_total += len(rw)
        char_dist += levenshtein(ref, hyp)
        char_total += len(ref)

    def rate(dist, total):
        if total == 0:
            return 0.0 if dist == 0 else math.inf
        return dist / total

    return rate(word_dist, word_total), rate(char_dist, char_total)
