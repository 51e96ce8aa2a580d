"""Streaming moment accumulation for mechanism Monte Carlo checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .randomness import RandomStream, as_generator

__all__ = ["ResponseMoments", "decoded_moments"]


@dataclass
class ResponseMoments:
    """First/second moments of decoded outputs against a fixed input v."""

    v: np.ndarray
    n: int
    sum_vec: np.ndarray
    sum_sq_coord: np.ndarray
    sum_err2: float
    sum_err4: float

    @property
    def mean_vector(self) -> np.ndarray:
        return self.sum_vec / self.n

    @property
    def mean_error_norm(self) -> float:
        """||empirical mean - v||_2."""
        return float(np.linalg.norm(self.mean_vector - self.v))

    @property
    def coord_std(self) -> float:
        """Root-mean of per-coordinate sample variances."""
        var = self.sum_sq_coord / self.n - self.mean_vector**2
        return float(math.sqrt(max(var.mean(), 0.0)))

    @property
    def mse(self) -> float:
        """Mean squared error E||decoded - v||^2."""
        return self.sum_err2 / self.n

    @property
    def mse_stderr(self) -> float:
        var = max(self.sum_err4 / self.n - self.mse**2, 0.0)
        return math.sqrt(var / self.n)


def decoded_moments(
    mechanism,
    v: np.ndarray,
    count: int,
    source: RandomStream | np.random.Generator,
    block: int = 0,
) -> ResponseMoments:
    """Run ``count`` independent encode/decode rounds and accumulate moments."""
    v = np.asarray(v, dtype=float)
    rng = as_generator(source)
    d = v.shape[0]
    sum_vec = np.zeros(d)
    sum_sq = np.zeros(d)
    sum_e2 = 0.0
    sum_e4 = 0.0
    seen = 0
    for blockvals in mechanism.iter_responses(v, count, rng, block=block):
        sum_vec += blockvals.sum(axis=0)
        sum_sq += np.einsum("ij,ij->j", blockvals, blockvals)
        err2 = ((blockvals - v) ** 2).sum(axis=1)
        sum_e2 += err2.sum()
        sum_e4 += err2 @ err2
        seen += blockvals.shape[0]
    return ResponseMoments(v=v, n=seen, sum_vec=sum_vec, sum_sq_coord=sum_sq,
                           sum_err2=sum_e2, sum_err4=sum_e4)
