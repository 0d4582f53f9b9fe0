"""Noise schedule algebra for the discrete forward corruption process.

A schedule fixes, for steps t = 1..T, the per-step noise variances
``beta_t``, the retained-signal factors ``alpha_t = 1 - beta_t``, their
running products ``alpha_bar_t``, and the posterior variances
``beta_tilde_t = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t``
with ``alpha_bar_0 = 1`` by convention (so ``beta_tilde_1 = 0``).

Arrays are float64 so the product/ratio identities hold to ~1e-16.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step corruption coefficients, 1-indexed through the accessors."""

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_tilde: np.ndarray
    kind: str = "linear"
    beta_start: float = DEFAULT_BETA_START
    beta_end: float = DEFAULT_BETA_END

    def _check(self, t: int) -> int:
        if not 1 <= t <= self.T:
            raise ParameterError(f"step {t} outside 1..{self.T}")
        return t - 1

    def beta_at(self, t: int) -> float:
        return float(self.beta[self._check(t)])

    def alpha_at(self, t: int) -> float:
        return float(self.alpha[self._check(t)])

    def alpha_bar_at(self, t: int) -> float:
        if t == 0:
            return 1.0
        return float(self.alpha_bar[self._check(t)])

    def beta_tilde_at(self, t: int) -> float:
        return float(self.beta_tilde[self._check(t)])

    def spec(self) -> dict:
        """Serializable description; ``build_schedule(**spec)`` reproduces it."""
        return {
            "T": self.T,
            "kind": self.kind,
            "beta_start": self.beta_start,
            "beta_end": self.beta_end,
        }


def build_schedule(
    T: int,
    kind: str = "linear",
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Construct the linear ramp schedule and its derived arrays."""
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ParameterError(f"T must be a positive integer, got {T!r}")
    if kind != "linear":
        raise ParameterError(f"unsupported schedule kind {kind!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ParameterError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    if T == 1:
        beta = np.array([beta_start], dtype=np.float64)
    else:
        beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    prev_bar = np.concatenate([[1.0], alpha_bar[:-1]])
    beta_tilde = (1.0 - prev_bar) / (1.0 - alpha_bar) * beta
    return NoiseSchedule(
        T=int(T),
        beta=beta,
        alpha=alpha,
        alpha_bar=alpha_bar,
        beta_tilde=beta_tilde,
        kind=kind,
        beta_start=float(beta_start),
        beta_end=float(beta_end),
    )
