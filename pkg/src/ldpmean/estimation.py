"""Multi-user protocol: cohort generation, aggregation, error metric.

The server decodes each user independently and averages (the canonical
protocol); the reported metric is the realized l2 distance between the
estimate and the cohort's true mean.
"""

from __future__ import annotations

import numpy as np

from .randomness import RandomStream

__all__ = ["generate_cohort", "cohort_mean", "estimate_mean", "l2_error"]


def generate_cohort(n: int, d: int, stream: RandomStream) -> np.ndarray:
    """(n, d) unit vectors: first half iid N(1,1)^d, second half iid N(10,1)^d,
    each normalized. The split forces a nonzero, inhomogeneous mean."""
    if n < 2 or n % 2 != 0:
        raise ValueError(f"n must be even and >= 2 (the cohort splits in half), got {n}")
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = stream.generator()
    half = n // 2
    vecs = np.empty((n, d))
    vecs[:half] = rng.standard_normal((half, d)) + 1.0
    vecs[half:] = rng.standard_normal((n - half, d)) + 10.0
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return vecs


def cohort_mean(vectors: np.ndarray) -> np.ndarray:
    return np.asarray(vectors, dtype=float).mean(axis=0)


def estimate_mean(vectors: np.ndarray, mechanism, root: RandomStream) -> np.ndarray:
    """Privatized mean estimate: encode/decode each user, average the decodes.

    User i gets the shared stream ("user", i) and the private stream
    ("priv", i) derived from ``root``; the summation order is fixed, so the
    result is bit-reproducible for a given root.
    """
    vectors = np.asarray(vectors, dtype=float)
    n, d = vectors.shape
    if d != mechanism.d_:
        raise ValueError(f"cohort dimension {d} != mechanism dimension {mechanism.d_}")
    total = np.zeros(d)
    for i in range(n):
        total += mechanism.respond(
            vectors[i], root.derive("user", i), root.derive("priv", i)
        )
    return total / n


def l2_error(estimate: np.ndarray, vectors: np.ndarray) -> float:
    """||estimate - true cohort mean||_2."""
    estimate = np.asarray(estimate, dtype=float)
    truth = cohort_mean(vectors)
    if estimate.shape != truth.shape:
        raise ValueError(f"estimate shape {estimate.shape} != mean shape {truth.shape}")
    return float(np.linalg.norm(estimate - truth))
