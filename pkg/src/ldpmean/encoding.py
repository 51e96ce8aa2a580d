"""Message probability assignment and wire format.

The k-closest assignment gives the maximal allowed probability e^eps * q0 to
the (floor of) k highest-scoring messages, an interpolated probability to the
next one when k is fractional, and the minimal q0 to the rest, with
q0 = 1/(k e^eps + M - k). Integer k makes the max/min ratio exactly e^eps.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "kclosest_probs",
    "check_probability_vector",
    "sample_index",
    "message_to_bytes",
    "message_from_bytes",
    "message_width",
]


def kclosest_probs(scores: np.ndarray, k: float, eps: float) -> np.ndarray:
    """Probability over messages given per-message scores.

    Args:
        scores: length-M score vector (higher = closer to the input).
        k: closeness budget, 1 <= k <= M - 1; fractional values allowed.
        eps: privacy parameter, > 0.

    Ranking ties are broken toward the lower message index.
    """
    scores = np.asarray(scores, dtype=float)
    M = scores.shape[0]
    if not 1 <= k <= M - 1:
        raise ValueError(f"k must satisfy 1 <= k <= M - 1, got k={k}, M={M}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    e_eps = math.exp(eps)
    denom = k * e_eps + M - k
    kf = int(math.floor(k))
    order = np.argsort(-scores, kind="stable")
    probs = np.full(M, 1.0 / denom)
    probs[order[:kf]] = e_eps / denom
    if kf < M:
        probs[order[kf]] = ((k - kf) * (e_eps - 1.0) + 1.0) / denom
    return probs


def check_probability_vector(probs: np.ndarray, eps: float) -> None:
    """Raise unless probs is a distribution whose max/min ratio respects eps."""
    probs = np.asarray(probs, dtype=float)
    if probs.min() < 0:
        raise ValueError("negative probability")
    total = probs.sum()
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"probabilities sum to {total!r}, not 1")
    ratio = probs.max() / probs.min()
    if ratio > math.exp(eps) + 1e-9:
        raise ValueError(f"max/min probability ratio {ratio} exceeds e^eps")


def sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Draw one index from a probability vector."""
    u = rng.random()
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, u, side="right"), len(probs) - 1))


def message_width(bits: int) -> int:
    """Byte width of a b-bit message."""
    if bits < 1:
        raise ValueError("bits must be >= 1")
    return (bits + 7) // 8


def message_to_bytes(m: int, bits: int) -> bytes:
    """Serialize message index m as a little-endian unsigned integer."""
    if not 0 <= m < (1 << bits):
        raise ValueError(f"message {m} does not fit in {bits} bits")
    return int(m).to_bytes(message_width(bits), "little")


def message_from_bytes(buf: bytes, bits: int) -> int:
    if len(buf) != message_width(bits):
        raise ValueError(f"expected {message_width(bits)} bytes for {bits}-bit message")
    m = int.from_bytes(buf, "little")
    if m >= (1 << bits):
        raise ValueError(f"decoded message {m} out of range for {bits} bits")
    return m
