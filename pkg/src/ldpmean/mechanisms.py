"""The four eps-LDP randomizers behind one encode/decode interface.

* ``rrsc``: randomly rotated simplex codebook with k-closest message
  probabilities; the selected codeword times r_k is the decoded estimate.
* ``privunitg``: Gaussian cap mechanism, no communication constraint; the
  utility reference.
* ``sqkr``: Kashin frame expansion, stochastic 1-bit quantization, shared
  coordinate sampling, 2^kappa-ary randomized response.
* ``mmrc``: importance sampling over shared uniform-sphere candidates against
  a cap-mechanism target, with a Monte Carlo debiasing scale.

Codebook and frame randomness always comes from the ``shared`` stream (known
to the server); message sampling consumes the encoder-only ``private``
stream. Mechanisms are immutable after :meth:`configure`; encode/decode are
pure functions of their stream arguments.

Mechanisms also expose a light sklearn-style estimator surface: ``fit(X)``
configures from the data dimension, ``transform(X)`` privatizes and decodes
row-by-row with streams derived from ``random_state``, and ``get_params``
round-trips construction.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .calibration import DEFAULT_TRIALS, Calibrator
from .codebook import SIMPLEX, SPHERE, Codebook
from .encoding import kclosest_probs, message_width, sample_index
from .privunit import (
    CapParams,
    cap_params,
    sample_cap_outputs,
    sphere_cap_threshold,
    split_budget,
)
from .randomness import (
    RandomStream,
    as_generator,
    haar_orthogonal,
    orthonormal_rows_batch,
    unit_rows,
)

MECHANISM_KINDS = ("rrsc", "privunitg", "sqkr", "mmrc")

__all__ = [
    "MECHANISM_KINDS",
    "BaseMechanism",
    "RRSC",
    "PrivUnitG",
    "SQKR",
    "MMRC",
    "KashinLevelError",
    "make_mechanism",
]


class KashinLevelError(RuntimeError):
    """Frame expansion failed to reach the coefficient level; callers may
    retry with the next ``frame_attempt`` on both encoder and decoder."""

    def __init__(self, residual: float, attempt: int):
        super().__init__(
            f"Kashin residual {residual:.3e} above tolerance at frame attempt {attempt}"
        )
        self.residual = residual
        self.attempt = attempt


def _check_unit(v: np.ndarray, d: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (d,):
        raise ValueError(f"expected a vector of dimension {d}, got shape {v.shape}")
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"input must be unit-norm (||v|| = {norm}); normalize on ingestion")
    return v


class BaseMechanism(BaseEstimator, TransformerMixin):
    """Shared estimator plumbing; subclasses implement the actual protocol."""

    kind: str = ""

    # -- configuration ------------------------------------------------------

    def configure(self, d: int) -> "BaseMechanism":
        raise NotImplementedError

    def _require_configured(self) -> None:
        if getattr(self, "d_", None) is None:
            raise RuntimeError("mechanism is not configured; call fit/configure first")

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        return self.configure(X.shape[1])

    def transform(self, X) -> np.ndarray:
        """Privatize and decode each row of X under streams derived from
        ``random_state``; rows are normalized to the unit sphere first."""
        self._require_configured()
        X = check_array(X, dtype=float)
        if X.shape[1] != self.d_:
            raise ValueError(f"X has {X.shape[1]} columns, mechanism configured for {self.d_}")
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms == 0):
            raise ValueError("zero rows cannot be normalized to the sphere")
        V = X / norms[:, None]
        root = RandomStream(self.random_state)
        out = np.empty_like(V)
        for i, v in enumerate(V):
            out[i] = self.respond(v, root.derive("user", i), root.derive("priv", i))
        return out

    # -- protocol -----------------------------------------------------------

    def respond(
        self,
        v: np.ndarray,
        shared: RandomStream | np.random.Generator,
        private: RandomStream | np.random.Generator,
    ) -> np.ndarray:
        """Encode v and decode the resulting message: one user's estimate."""
        raise NotImplementedError

    def iter_responses(
        self, v: np.ndarray, count: int, source, block: int = 0
    ) -> Iterator[np.ndarray]:
        """Vectorized Monte Carlo path: yields blocks of decoded estimates for
        ``count`` independent shared/private draws taken from one generator."""
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Randomly rotated simplex coding


class RRSC(BaseMechanism):
    """Rotated-codebook mechanism with k-closest encoding.

    Args:
        eps: privacy parameter.
        bits: message budget b; the codebook has M = 2^b codewords.
        k: closeness budget, or "auto" to pick the error-minimizing k.
        variant: "simplex", "sphere", or "auto" (simplex while M <= d).
        calib_trials: Monte Carlo trials when self-calibrating.
        calibrator: optional shared cache-aware Calibrator.
        random_state: root seed for the sklearn transform surface.
    """

    kind = "rrsc"

    def __init__(
        self,
        eps: float,
        bits: int,
        k="auto",
        variant: str = "auto",
        calib_trials: int = DEFAULT_TRIALS,
        calibrator: Calibrator | None = None,
        random_state: int = 0,
    ):
        self.eps = eps
        self.bits = bits
        self.k = k
        self.variant = variant
        self.calib_trials = calib_trials
        self.calibrator = calibrator
        self.random_state = random_state

    def configure(self, d: int) -> "RRSC":
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.bits < 1:
            raise ValueError("bits must be >= 1")
        M = 1 << int(self.bits)
        if self.variant == "auto":
            variant = SIMPLEX if M <= d else SPHERE
        elif self.variant in (SIMPLEX, SPHERE):
            variant = self.variant
        else:
            raise ValueError(f"unknown variant {self.variant!r}")
        calibrator = self.calibrator or Calibrator(
            RandomStream(self.random_state).derive("calib"), self.calib_trials
        )
        want_k = None if self.k == "auto" else int(self.k)
        if variant == SIMPLEX:
            cal = calibrator.simplex(M, d, self.eps, want_k)
        else:
            cal = calibrator.sphere(M, d, self.eps, want_k)
        self.d_ = d
        self.M_ = M
        self.variant_ = variant
        self.calibration_ = cal
        self.k_ = cal.k
        self.r_k_ = cal.r_k
        return self

    @property
    def message_bytes(self) -> int:
        self._require_configured()
        return message_width(self.bits)

    def codebook(self, shared) -> Codebook:
        """Rebuild the shared codebook; bit-identical at encoder and decoder."""
        self._require_configured()
        if self.variant_ == SIMPLEX:
            return Codebook.rotated_simplex(self.M_, self.d_, self.r_k_, shared)
        return Codebook.uniform_sphere(self.M_, self.d_, self.r_k_, shared)

    def message_probs(self, v: np.ndarray, shared) -> np.ndarray:
        """The transition probabilities Q(. | v, shared codebook)."""
        self._require_configured()
        v = _check_unit(v, self.d_)
        cb = self.codebook(shared)
        return kclosest_probs(cb.scores(v), self.k_, self.eps)

    def encode(self, v: np.ndarray, shared, private) -> int:
        probs = self.message_probs(v, shared)
        return sample_index(probs, as_generator(private))

    def decode(self, m: int, shared) -> np.ndarray:
        self._require_configured()
        return self.codebook(shared).codeword(m)

    def respond(self, v, shared, private) -> np.ndarray:
        self._require_configured()
        v = _check_unit(v, self.d_)
        cb = self.codebook(shared)
        probs = kclosest_probs(cb.scores(v), self.k_, self.eps)
        return cb.codeword(sample_index(probs, as_generator(private)))

    def iter_responses(self, v, count, source, block: int = 0) -> Iterator[np.ndarray]:
        self._require_configured()
        v = _check_unit(v, self.d_)
        rng = as_generator(source)
        M, d, k = self.M_, self.d_, self.k_
        if block <= 0:
            block = max(64, 4_000_000 // (M * d))
        e_eps = math.exp(self.eps)
        denom = k * e_eps + M - k
        c1 = math.sqrt(M / (M - 1.0))
        c2 = 1.0 / math.sqrt(M * (M - 1.0))
        done = 0
        while done < count:
            B = min(block, count - done)
            if self.variant_ == SIMPLEX:
                rows = orthonormal_rows_batch(B, M, d, rng)
                proj = rows @ v
                scores = c1 * proj - c2 * proj.sum(axis=1, keepdims=True)
            else:
                rows = rng.standard_normal((B, M, d))
                rows /= np.linalg.norm(rows, axis=2, keepdims=True)
                scores = rows @ v
            probs = np.full((B, M), 1.0 / denom)
            top = np.argpartition(-scores, k - 1, axis=1)[:, :k]
            np.put_along_axis(probs, top, e_eps / denom, axis=1)
            u = rng.random(B)
            idx = (np.cumsum(probs, axis=1) < u[:, None]).sum(axis=1)
            np.clip(idx, 0, M - 1, out=idx)
            chosen = rows[np.arange(B), idx]
            if self.variant_ == SIMPLEX:
                decoded = self.r_k_ * (c1 * chosen - c2 * rows.sum(axis=1))
            else:
                decoded = self.r_k_ * chosen
            yield decoded
            done += B


# ---------------------------------------------------------------------------
# Gaussian cap mechanism (communication-unconstrained reference)


class PrivUnitG(BaseMechanism):
    """Cap mechanism over an iid N(0, 1/d) draw; outputs a d-vector directly.

    No message budget: this mechanism is the utility reference the
    communication-constrained ones are compared against. Explicit (p, gamma)
    overrides are validated against the eps budget at configure time.
    """

    kind = "privunitg"

    def __init__(self, eps: float, p=None, gamma=None, random_state: int = 0):
        self.eps = eps
        self.p = p
        self.gamma = gamma
        self.random_state = random_state

    def configure(self, d: int) -> "PrivUnitG":
        self.params_: CapParams = cap_params(self.eps, d, self.p, self.gamma)
        self.d_ = d
        return self

    def privatize(self, v: np.ndarray, private) -> np.ndarray:
        self._require_configured()
        v = _check_unit(v, self.d_)
        return sample_cap_outputs(v, self.params_, 1, as_generator(private))[0]

    def respond(self, v, shared, private) -> np.ndarray:
        # shared randomness is unused: the mechanism is private-coin only
        return self.privatize(v, private)

    def iter_responses(self, v, count, source, block: int = 0) -> Iterator[np.ndarray]:
        self._require_configured()
        v = _check_unit(v, self.d_)
        rng = as_generator(source)
        if block <= 0:
            block = max(256, 1_000_000 // self.d_)
        done = 0
        while done < count:
            B = min(block, count - done)
            yield sample_cap_outputs(v, self.params_, B, rng)
            done += B

    def mse(self) -> float:
        self._require_configured()
        return self.params_.mse()


# ---------------------------------------------------------------------------
# Kashin frame + sampling + randomized response


class SQKR(BaseMechanism):
    """Frame-expansion mechanism: quantize, sample kappa coordinates, privatize.

    The tight frame stacks the identity basis on a Haar-rotated basis
    (N = 2d rows, Parseval). Coefficients come from alternating
    truncation-projection into the box [-c/sqrt(d), c/sqrt(d)] with an exact
    completion step, so the expansion reconstructs v exactly. kappa =
    min(ceil(eps), bits) coordinates are drawn through shared randomness and
    their quantized signs are sent through 2^kappa-ary randomized response.
    """

    kind = "sqkr"

    def __init__(
        self,
        eps: float,
        bits: int,
        clip_const: float = 3.0,
        kashin_iters: int = 30,
        random_state: int = 0,
    ):
        self.eps = eps
        self.bits = bits
        self.clip_const = clip_const
        self.kashin_iters = kashin_iters
        self.random_state = random_state

    def configure(self, d: int) -> "SQKR":
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.bits < 1:
            raise ValueError("bits must be >= 1")
        self.d_ = d
        self.N_ = 2 * d
        self.kappa_ = min(math.ceil(self.eps), int(self.bits))
        self.L_ = 1 << self.kappa_
        self.tau_ = self.clip_const / math.sqrt(d)
        e_eps = math.exp(self.eps)
        self.p_keep_ = (e_eps - 1.0) / (e_eps + self.L_ - 1.0)
        self.unbias_ = (e_eps + self.L_ - 1.0) / (e_eps - 1.0)
        return self

    def rr_transition_row(self, truth: int) -> np.ndarray:
        """P[report = y | truth] over the 2^kappa message alphabet."""
        self._require_configured()
        row = np.full(self.L_, (1.0 - self.p_keep_) / self.L_)
        row[truth] += self.p_keep_
        return row

    def frame(self, shared, frame_attempt: int = 0) -> np.ndarray:
        """(N, d) Parseval tight frame from shared randomness.

        ``frame_attempt`` skips that many draws so encoder and decoder can
        agree on a retry after a KashinLevelError.
        """
        return self._shared_draw(shared, frame_attempt)[0]

    def _shared_draw(self, shared, frame_attempt: int) -> tuple[np.ndarray, np.ndarray]:
        self._require_configured()
        rng = as_generator(shared)
        for _ in range(frame_attempt):
            haar_orthogonal(self.d_, rng)
        q = haar_orthogonal(self.d_, rng)
        frame = np.vstack([np.eye(self.d_), q.T]) / math.sqrt(2.0)
        indices = rng.integers(0, self.N_, size=self.kappa_)
        return frame, indices

    def kashin_coefficients(self, v: np.ndarray, frame: np.ndarray, frame_attempt: int = 0) -> np.ndarray:
        """Coefficients a with frame.T @ a == v and |a| <= tau (+ completion slack)."""
        tau = self.tau_
        a = np.zeros(frame.shape[0])
        y = np.asarray(v, dtype=float).copy()
        for _ in range(self.kashin_iters):
            b = frame @ y
            a_new = np.clip(a + b, -tau, tau)
            y -= frame.T @ (a_new - a)
            a = a_new
            if np.linalg.norm(y) < 1e-13:
                break
        residual = float(np.linalg.norm(y))
        if residual > 1e-6:
            raise KashinLevelError(residual, frame_attempt)
        # exact completion: folds the residual in, exceeding the box by <= residual
        return a + frame @ y

    def encode(self, v, shared, private, frame_attempt: int = 0) -> int:
        self._require_configured()
        v = _check_unit(v, self.d_)
        frame, indices = self._shared_draw(shared, frame_attempt)
        a = self.kashin_coefficients(v, frame, frame_attempt)
        rng = as_generator(private)
        tau = self.tau_
        prob_plus = (np.clip(a, -tau, tau) + tau) / (2.0 * tau)
        plus = rng.random(self.N_) < prob_plus
        truth = 0
        for t, j in enumerate(indices):
            truth |= int(plus[j]) << t
        if rng.random() < self.p_keep_:
            return truth
        return int(rng.integers(0, self.L_))

    def decode(self, m: int, shared, frame_attempt: int = 0) -> np.ndarray:
        self._require_configured()
        if not 0 <= m < self.L_:
            raise ValueError(f"message {m} out of range [0, {self.L_})")
        frame, indices = self._shared_draw(shared, frame_attempt)
        signs = np.array([1.0 if (m >> t) & 1 else -1.0 for t in range(self.kappa_)])
        scale = self.tau_ * self.unbias_ * self.N_ / self.kappa_
        return scale * (signs @ frame[indices])

    def respond(self, v, shared, private) -> np.ndarray:
        self._require_configured()
        v = _check_unit(v, self.d_)
        frame, indices = self._shared_draw(shared, 0)
        a = self.kashin_coefficients(v, frame)
        rng = as_generator(private)
        tau = self.tau_
        prob_plus = (np.clip(a, -tau, tau) + tau) / (2.0 * tau)
        plus = rng.random(self.N_) < prob_plus
        bits = plus[indices]
        if rng.random() >= self.p_keep_:
            bits = rng.integers(0, 2, size=self.kappa_).astype(bool)
        vals = np.where(bits, 1.0, -1.0) * (tau * self.unbias_ * self.N_ / self.kappa_)
        return vals @ frame[indices]

    def iter_responses(self, v, count, source, block: int = 0) -> Iterator[np.ndarray]:
        self._require_configured()
        v = _check_unit(v, self.d_)
        rng = as_generator(source)
        d, N, kappa, tau = self.d_, self.N_, self.kappa_, self.tau_
        if block <= 0:
            block = max(16, 2_000_000 // (N * d))
        done = 0
        while done < count:
            B = min(block, count - done)
            g = rng.standard_normal((B, d, d))
            q, r = np.linalg.qr(g)
            signs = np.sign(np.einsum("bii->bi", r))
            signs[signs == 0] = 1.0
            q *= signs[:, None, :]
            frames = np.concatenate(
                [np.broadcast_to(np.eye(d), (B, d, d)), np.transpose(q, (0, 2, 1))], axis=1
            ) / math.sqrt(2.0)
            indices = rng.integers(0, N, size=(B, kappa))
            a = np.zeros((B, N))
            y = np.broadcast_to(v, (B, d)).copy()
            for _ in range(self.kashin_iters):
                b = np.einsum("bnd,bd->bn", frames, y)
                a_new = np.clip(a + b, -tau, tau)
                y -= np.einsum("bnd,bn->bd", frames, a_new - a)
                a = a_new
                if np.abs(y).max() < 1e-13:
                    break
            res = np.linalg.norm(y, axis=1)
            if res.max() > 1e-6:
                raise KashinLevelError(float(res.max()), 0)
            a += np.einsum("bnd,bd->bn", frames, y)
            # quantization is iid per coordinate, so only sampled ones are drawn
            av = np.take_along_axis(a, indices, axis=1)
            prob_plus = (np.clip(av, -tau, tau) + tau) / (2.0 * tau)
            bits = rng.random((B, kappa)) < prob_plus
            keep = rng.random(B) < self.p_keep_
            rand_bits = rng.integers(0, 2, size=(B, kappa)).astype(bool)
            bits = np.where(keep[:, None], bits, rand_bits)
            vals = np.where(bits, 1.0, -1.0) * (tau * self.unbias_ * N / kappa)
            rows = np.take_along_axis(frames, indices[:, :, None], axis=1)
            yield np.einsum("bk,bkd->bd", vals, rows)
            done += B


# ---------------------------------------------------------------------------
# Importance-sampling simulation of the cap mechanism


class MMRC(BaseMechanism):
    """Channel simulation over M = 2^bits shared uniform-sphere candidates.

    Candidate weights take one of two values (in/out of the target cap) whose
    ratio is exactly e^eps; the index is sampled proportionally and the
    decoder rescales the selected candidate by a Monte Carlo calibrated
    debiasing constant (a stand-in for the original bias correction, flagged
    as such in the README).
    """

    kind = "mmrc"

    def __init__(
        self,
        eps: float,
        bits: int,
        calib_trials: int = DEFAULT_TRIALS,
        calibrator: Calibrator | None = None,
        random_state: int = 0,
    ):
        self.eps = eps
        self.bits = bits
        self.calib_trials = calib_trials
        self.calibrator = calibrator
        self.random_state = random_state

    def configure(self, d: int) -> "MMRC":
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.bits < 1:
            raise ValueError("bits must be >= 1")
        M = 1 << int(self.bits)
        eps0, eps1 = split_budget(self.eps, d)
        p = 1.0 / (1.0 + math.exp(-eps0))
        cap_mass = 1.0 / (1.0 + math.exp(eps1))
        calibrator = self.calibrator or Calibrator(
            RandomStream(self.random_state).derive("calib"), self.calib_trials
        )
        cal = calibrator.mmrc(M, d, self.eps)
        self.d_ = d
        self.M_ = M
        self.p_ = p
        self.cap_mass_ = cap_mass
        self.gamma_ = sphere_cap_threshold(cap_mass, d)
        self.w_hi_ = p / cap_mass
        self.w_lo_ = (1.0 - p) / (1.0 - cap_mass)
        self.calibration_ = cal
        self.beta_ = cal.r_k
        return self

    @property
    def message_bytes(self) -> int:
        self._require_configured()
        return message_width(self.bits)

    def candidates(self, shared) -> np.ndarray:
        self._require_configured()
        return unit_rows(self.M_, self.d_, as_generator(shared))

    def candidate_weights(self, v: np.ndarray, candidates: np.ndarray) -> np.ndarray:
        """Unnormalized importance weights of each candidate for input v."""
        self._require_configured()
        v = _check_unit(v, self.d_)
        return np.where(candidates @ v >= self.gamma_, self.w_hi_, self.w_lo_)

    def encode(self, v, shared, private) -> int:
        w = self.candidate_weights(v, self.candidates(shared))
        return sample_index(w / w.sum(), as_generator(private))

    def decode(self, m: int, shared) -> np.ndarray:
        self._require_configured()
        if not 0 <= m < self.M_:
            raise ValueError(f"message {m} out of range [0, {self.M_})")
        return self.beta_ * self.candidates(shared)[m]

    def respond(self, v, shared, private) -> np.ndarray:
        cands = self.candidates(shared)
        w = self.candidate_weights(v, cands)
        m = sample_index(w / w.sum(), as_generator(private))
        return self.beta_ * cands[m]

    def iter_responses(self, v, count, source, block: int = 0) -> Iterator[np.ndarray]:
        self._require_configured()
        v = _check_unit(v, self.d_)
        rng = as_generator(source)
        M, d = self.M_, self.d_
        if block <= 0:
            block = max(64, 4_000_000 // (M * d))
        done = 0
        while done < count:
            B = min(block, count - done)
            cands = rng.standard_normal((B, M, d))
            cands /= np.linalg.norm(cands, axis=2, keepdims=True)
            x = cands @ v
            w = np.where(x >= self.gamma_, self.w_hi_, self.w_lo_)
            probs = w / w.sum(axis=1, keepdims=True)
            u = rng.random(B)
            idx = (np.cumsum(probs, axis=1) < u[:, None]).sum(axis=1)
            np.clip(idx, 0, M - 1, out=idx)
            yield self.beta_ * cands[np.arange(B), idx]
            done += B


# ---------------------------------------------------------------------------


def make_mechanism(
    kind: str,
    eps: float,
    bits: int | None = None,
    calibrator: Calibrator | None = None,
    calib_trials: int = DEFAULT_TRIALS,
    random_state: int = 0,
    rrsc_variant: str = "auto",
) -> BaseMechanism:
    """Build an unconfigured mechanism by its wire name."""
    if kind == "rrsc":
        if bits is None:
            raise ValueError("rrsc requires a bits budget")
        return RRSC(
            eps, bits, variant=rrsc_variant, calib_trials=calib_trials,
            calibrator=calibrator, random_state=random_state,
        )
    if kind == "privunitg":
        return PrivUnitG(eps, random_state=random_state)
    if kind == "sqkr":
        if bits is None:
            raise ValueError("sqkr requires a bits budget")
        return SQKR(eps, bits, random_state=random_state)
    if kind == "mmrc":
        if bits is None:
            raise ValueError("mmrc requires a bits budget")
        return MMRC(
            eps, bits, calib_trials=calib_trials,
            calibrator=calibrator, random_state=random_state,
        )
    raise ValueError(f"unknown mechanism kind {kind!r}; expected one of {MECHANISM_KINDS}")
