"""Seeded random streams and random-geometry sampling.

Everything downstream (codebooks, calibration, the sweep harness) draws its
randomness through :class:`RandomStream`, a value-like handle on a root seed
plus a derivation path. Deriving the same path from the same root always
yields bit-identical draws, and differently derived streams are statistically
independent, which is what lets the encoder and the decoder rebuild the same
codebook from a compact seed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RandomStream",
    "as_generator",
    "derive_stream",
    "haar_orthogonal",
    "orthonormal_rows",
    "uniform_sphere",
    "unit_rows",
]


def _label_words(label: str) -> tuple[int, int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return (
        int.from_bytes(digest[0:4], "little"),
        int.from_bytes(digest[4:8], "little"),
    )


@dataclass(frozen=True)
class RandomStream:
    """Deterministic, splittable random source.

    Parameters
    ----------
    root_seed : int
        Root seed shared by an entire pipeline run.
    path : tuple of (label, index) pairs
        Derivation steps taken from the root. Streams with different paths
        are independent; identical (root_seed, path) pairs reproduce the
        same bit stream.
    """

    root_seed: int
    path: tuple[tuple[str, int], ...] = field(default=())

    def derive(self, label: str, index: int = 0) -> "RandomStream":
        """Return the child stream at (label, index)."""
        if not label:
            raise ValueError("derivation label must be nonempty")
        if index < 0:
            raise ValueError("derivation index must be nonnegative")
        return RandomStream(self.root_seed, self.path + ((label, int(index)),))

    def seed_sequence(self) -> np.random.SeedSequence:
        spawn_key: list[int] = []
        for label, index in self.path:
            spawn_key.extend(_label_words(label))
            spawn_key.append(index & 0xFFFFFFFF)
            spawn_key.append((index >> 32) & 0xFFFFFFFF)
        return np.random.SeedSequence(self.root_seed, spawn_key=tuple(spawn_key))

    def generator(self) -> np.random.Generator:
        """Fresh PCG64 generator positioned at the start of this stream."""
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))

    def key(self) -> int:
        """Stable 63-bit identifier of (root_seed, path), used as a cache key."""
        h = hashlib.sha256()
        h.update(str(self.root_seed).encode())
        for label, index in self.path:
            h.update(b"/")
            h.update(label.encode("utf-8"))
            h.update(str(index).encode())
        return int.from_bytes(h.digest()[:8], "little") >> 1


def as_generator(source: RandomStream | np.random.Generator) -> np.random.Generator:
    """Accept either a RandomStream or a ready Generator."""
    if isinstance(source, RandomStream):
        return source.generator()
    return source


def derive_stream(root: RandomStream, label: str, index: int = 0) -> RandomStream:
    """Functional alias for :meth:`RandomStream.derive`."""
    return root.derive(label, index)


def haar_orthogonal(d: int, source: RandomStream | np.random.Generator) -> np.ndarray:
    """Sample a d x d orthogonal matrix uniformly (Haar measure).

    QR-decomposes an iid standard Gaussian matrix and flips each column of Q
    by the sign of the matching diagonal entry of R. The sign correction is
    required; raw numpy QR is not Haar-distributed.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    rng = as_generator(source)
    g = rng.standard_normal((d, d))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def orthonormal_rows(
    n_rows: int, d: int, source: RandomStream | np.random.Generator
) -> np.ndarray:
    """Sample an (n_rows, d) matrix with orthonormal rows, uniform on the Stiefel manifold.

    Row j is distributed exactly as the j-th column of a Haar orthogonal
    matrix, so this is the cheap O(n_rows^2 d) stand-in for sampling the full
    matrix when only a few rows are consumed.
    """
    if not 1 <= n_rows <= d:
        raise ValueError("need 1 <= n_rows <= d")
    rng = as_generator(source)
    g = rng.standard_normal((d, n_rows))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return (q * signs).T


def orthonormal_rows_batch(
    count: int, n_rows: int, d: int, rng: np.random.Generator
) -> np.ndarray:
    """(count, n_rows, d) stack of independent orthonormal-row draws."""
    g = rng.standard_normal((count, d, n_rows))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.einsum("bii->bi", r))
    signs[signs == 0] = 1.0
    return np.transpose(q * signs[:, None, :], (0, 2, 1))


def uniform_sphere(d: int, source: RandomStream | np.random.Generator) -> np.ndarray:
    """Uniform draw from the unit sphere in R^d (Gaussian direction, normalized)."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    rng = as_generator(source)
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def unit_rows(count: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """(count, d) array of independent uniform unit vectors."""
    g = rng.standard_normal((count, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)
