"""Codebook construction and scoring.

Two variants share one container:

* ``simplex``: the M maximally separated unit vectors in R^d (pairwise inner
  product -1/(M-1)), randomly rotated. Only M orthonormal rows of the
  rotation are stored, so scoring and decoding cost O(Md) instead of O(d^2).
* ``sphere``: M iid uniform unit vectors, used when M > d or when explicitly
  requested.

Codewords carry a common ``scale`` (the unbiasing constant of the mechanism
that owns the codebook).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .randomness import RandomStream, as_generator, orthonormal_rows, unit_rows

SIMPLEX = "simplex"
SPHERE = "sphere"

__all__ = ["SIMPLEX", "SPHERE", "Codebook", "simplex_vectors", "validate_simplex_spec"]


def validate_simplex_spec(M: int, d: int) -> None:
    """The simplex construction needs 2 <= M <= d (M = d is the boundary case
    where the vectors stay unit-norm; beyond that use the sphere variant)."""
    if M < 2 or M > d:
        raise ValueError(f"simplex codebook requires 2 <= M <= d, got M={M}, d={d}")


def simplex_vectors(M: int, d: int) -> np.ndarray:
    """The (M, d) unrotated simplex: diagonal (M-1)/sqrt(M(M-1)), off-diagonal
    -1/sqrt(M(M-1)) on the first M coordinates, zero elsewhere."""
    validate_simplex_spec(M, d)
    block = np.full((M, M), -1.0 / np.sqrt(M * (M - 1.0)))
    np.fill_diagonal(block, (M - 1.0) / np.sqrt(M * (M - 1.0)))
    out = np.zeros((M, d))
    out[:, :M] = block
    return out


@dataclass
class Codebook:
    """M codewords in R^d with a common norm ``scale``.

    For the simplex variant ``basis`` holds M orthonormal rows (row j is the
    j-th column of the underlying rotation); codeword m is
    ``scale * (c1 * basis[m] - c2 * basis.sum(0))`` with c1 = sqrt(M/(M-1)),
    c2 = 1/sqrt(M(M-1)). For the sphere variant ``basis`` holds the unit
    codeword directions themselves.
    """

    variant: str
    M: int
    d: int
    scale: float
    basis: np.ndarray

    @classmethod
    def rotated_simplex(
        cls, M: int, d: int, scale: float, source: RandomStream | np.random.Generator
    ) -> "Codebook":
        validate_simplex_spec(M, d)
        if scale <= 0:
            raise ValueError("scale must be positive")
        return cls(SIMPLEX, M, d, float(scale), orthonormal_rows(M, d, source))

    @classmethod
    def uniform_sphere(
        cls, M: int, d: int, scale: float, source: RandomStream | np.random.Generator
    ) -> "Codebook":
        if M < 2 or d < 1:
            raise ValueError(f"sphere codebook requires M >= 2 and d >= 1, got M={M}, d={d}")
        if scale <= 0:
            raise ValueError("scale must be positive")
        return cls(SPHERE, M, d, float(scale), unit_rows(M, d, as_generator(source)))

    @classmethod
    def from_rotation(cls, rotation: np.ndarray, M: int, scale: float = 1.0) -> "Codebook":
        """Test hook: build the simplex codebook from an explicit orthogonal matrix."""
        d = rotation.shape[0]
        validate_simplex_spec(M, d)
        return cls(SIMPLEX, M, d, float(scale), rotation[:, :M].T.copy())

    def _coeffs(self) -> tuple[float, float]:
        M = self.M
        return np.sqrt(M / (M - 1.0)), 1.0 / np.sqrt(M * (M - 1.0))

    def scores(self, v: np.ndarray) -> np.ndarray:
        """Inner products of v with the codeword directions, one per message.

        Simplex: <v, A s_m> computed from the stored rows in O(Md), unscaled
        (the scale cancels in ranking). Sphere: plain inner products with the
        stored (scaled) codewords.
        """
        v = np.asarray(v, dtype=float)
        if v.shape != (self.d,):
            raise ValueError(f"expected a vector of dimension {self.d}, got shape {v.shape}")
        proj = self.basis @ v
        if self.variant == SPHERE:
            return self.scale * proj
        c1, c2 = self._coeffs()
        return c1 * proj - c2 * proj.sum()

    def codeword(self, m: int) -> np.ndarray:
        if not 0 <= m < self.M:
            raise ValueError(f"message index {m} out of range [0, {self.M})")
        if self.variant == SPHERE:
            return self.scale * self.basis[m]
        c1, c2 = self._coeffs()
        return self.scale * (c1 * self.basis[m] - c2 * self.basis.sum(axis=0))

    def codewords(self) -> np.ndarray:
        """Materialize all M codewords, (M, d)."""
        if self.variant == SPHERE:
            return self.scale * self.basis
        c1, c2 = self._coeffs()
        return self.scale * (c1 * self.basis - c2 * self.basis.sum(axis=0))
