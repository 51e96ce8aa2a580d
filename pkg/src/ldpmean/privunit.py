"""Gaussian cap mechanism: the communication-unconstrained utility reference.

The randomizer draws Z ~ N(0, I/d) conditioned on <Z, v> >= gamma with
probability p (else on the complement) and rescales by an unbiasing constant.
The privacy budget eps is split as eps0 + eps1 with p = sigmoid(eps0) and the
threshold set by Phi(alpha) = sigmoid(eps1); the split is optimized
numerically to maximize the alignment constant, i.e. minimize the unbiasing
scale and hence the error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import beta as _beta

__all__ = [
    "CapParams",
    "cap_params",
    "split_budget",
    "golden_section_max",
    "sample_cap_outputs",
    "sphere_cap_threshold",
    "sphere_cap_mass",
]

_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f, lo: float, hi: float, iters: int = 90) -> float:
    """Golden-section search for the maximizer of a unimodal f on [lo, hi]."""
    a, b = float(lo), float(hi)
    x1 = b - _INV_GOLDEN * (b - a)
    x2 = a + _INV_GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_GOLDEN * (b - a)
            f1 = f(x1)
    return 0.5 * (a + b)


def _alignment(eps0: float, eps1: float, d: int) -> float:
    """E[<output, v>] before unbiasing, for the split (eps0, eps1)."""
    p = 1.0 / (1.0 + math.exp(-eps0))
    alpha = ndtri(1.0 / (1.0 + math.exp(-eps1)))
    sigma = 1.0 / math.sqrt(d)
    phi_alpha = math.exp(-0.5 * alpha * alpha) / math.sqrt(2.0 * math.pi)
    top_mass = ndtr(-alpha)
    bottom_mass = ndtr(alpha)
    return sigma * phi_alpha * (p / top_mass - (1.0 - p) / bottom_mass)


def split_budget(eps: float, d: int) -> tuple[float, float]:
    """Optimal (eps0, eps1) split of the privacy budget for dimension d."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    eps1 = golden_section_max(lambda e1: _alignment(eps - e1, e1, d), 0.0, eps)
    return eps - eps1, eps1


@dataclass(frozen=True)
class CapParams:
    """Fitted cap-mechanism parameters for one (eps, d)."""

    d: int
    eps: float
    p: float       # probability of the high (aligned) branch
    gamma: float   # cap threshold on <Z, v>
    alpha: float   # gamma in standard-normal units, gamma * sqrt(d)
    m_const: float # alignment constant; the output is divided by it

    @property
    def sigma(self) -> float:
        return 1.0 / math.sqrt(self.d)

    def mse(self) -> float:
        """Analytic per-user squared error, E||output - v||^2."""
        return (1.0 + self.gamma * self.m_const) / self.m_const**2 - 1.0


def cap_params(
    eps: float, d: int, p: float | None = None, gamma: float | None = None
) -> CapParams:
    """Fit (p, gamma) for the given budget, or validate explicit overrides.

    Explicit (p, gamma) must satisfy the density-ratio feasibility
    log(p/(1-p)) + log(Phi(alpha)/Phi(-alpha)) <= eps, else the config is
    rejected.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if d < 1:
        raise ValueError("d must be >= 1")
    if (p is None) != (gamma is None):
        raise ValueError("p and gamma must be overridden together")
    if p is None:
        eps0, eps1 = split_budget(eps, d)
        p = 1.0 / (1.0 + math.exp(-eps0))
        alpha = float(ndtri(1.0 / (1.0 + math.exp(-eps1))))
        gamma = alpha / math.sqrt(d)
    else:
        if not 0.5 <= p < 1.0:
            raise ValueError("p must lie in [0.5, 1)")
        alpha = gamma * math.sqrt(d)
        used = math.log(p / (1.0 - p)) + math.log(ndtr(alpha) / ndtr(-alpha))
        if used > eps + 1e-9:
            raise ValueError(
                f"(p, gamma) spends {used:.6f} > eps = {eps}; infeasible configuration"
            )
    sigma = 1.0 / math.sqrt(d)
    phi_alpha = math.exp(-0.5 * alpha * alpha) / math.sqrt(2.0 * math.pi)
    m_const = sigma * phi_alpha * (p / ndtr(-alpha) - (1.0 - p) / ndtr(alpha))
    if m_const <= 0:
        raise ValueError("degenerate parameters: nonpositive alignment constant")
    return CapParams(d=d, eps=eps, p=p, gamma=float(gamma), alpha=float(alpha), m_const=float(m_const))


def sample_cap_outputs(
    v: np.ndarray, params: CapParams, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``count`` unbiased mechanism outputs for input v, shape (count, d).

    The component along v comes from the truncated 1-d Gaussian via inverse
    CDF (top branch evaluated through the upper tail for stability); the
    orthogonal complement is an iid Gaussian with the v-component projected
    out.
    """
    d = params.d
    sigma = params.sigma
    alpha = params.alpha
    top_mass = ndtr(-alpha)
    bottom_mass = ndtr(alpha)
    take_top = rng.random(count) < params.p
    # tail = 1 - u lies in (0, 1], keeping both inverse-CDF arguments nonzero
    tail = 1.0 - rng.random(count)
    w = np.empty(count)
    # Phi(w) = Phi(alpha) + u * (1 - Phi(alpha))  <=>  Phi(-w) = tail * Phi(-alpha)
    w[take_top] = -ndtri(tail[take_top] * top_mass)
    w[~take_top] = ndtri(tail[~take_top] * bottom_mass)
    z = sigma * rng.standard_normal((count, d))
    z -= (z @ v)[:, None] * v
    out = w[:, None] * (sigma * v) + z
    out /= params.m_const
    return out


def sphere_cap_threshold(mass: float, d: int) -> float:
    """Threshold gamma with P[a_1 >= gamma] = mass for a uniform unit vector.

    Exact through the Beta(1/2, (d-1)/2) law of a_1^2; only caps no larger
    than a hemisphere are needed here.
    """
    if not 0.0 < mass <= 0.5:
        raise ValueError("cap mass must lie in (0, 0.5]")
    if mass == 0.5:
        return 0.0
    return float(np.sqrt(_beta.isf(2.0 * mass, 0.5, (d - 1) / 2.0)))


def sphere_cap_mass(gamma: float, d: int) -> float:
    """P[a_1 >= gamma] for a uniform unit vector in R^d, gamma >= 0."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if gamma >= 1.0:
        return 0.0
    return float(0.5 * _beta.sf(gamma * gamma, 0.5, (d - 1) / 2.0))
