"""Differential-privacy primitives and masked fixed-point aggregation.

Two independent layers live here:

* a Gaussian output-perturbation mechanism with an additive budget ledger
  (budgets accumulate exactly, as rationals, so repeated spending never
  drifts), and
* a pairwise-masking aggregation scheme over a prime field: participants
  submit masked fixed-point encodings whose masks cancel in the sum, so the
  aggregate is recoverable while individual submissions look uniform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "DEFAULT_PRIME",
    "DEFAULT_SCALE",
    "KnowledgeVector",
    "is_probable_prime",
    "PrivacyParams",
    "noise_scale",
    "clip_to_sensitivity",
    "privatize",
    "PrivacyBudget",
    "AggregationField",
    "encode_fixed",
    "decode_fixed",
    "pairwise_masks",
    "masked_submissions",
    "secure_aggregate",
]

# Shared knowledge is just a real vector; no wrapper class needed.
KnowledgeVector = np.ndarray

DEFAULT_PRIME = 2**61 - 1
DEFAULT_SCALE = 10**6

# Witnesses making Miller-Rabin deterministic for all n < 3.3 * 10**24.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_probable_prime(n: int) -> bool:
    """Deterministic Miller-Rabin for the modulus sizes used here (< 2**64)."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _check_dp_params(epsilon: float, delta: float, sensitivity: float) -> None:
    if not epsilon > 0.0:
        raise ValueError("epsilon must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if not (math.isfinite(sensitivity) and sensitivity > 0.0):
        raise ValueError("sensitivity must be positive and finite")


@dataclass(frozen=True)
class PrivacyParams:
    """One release's (epsilon, delta) cost plus the L2 clipping bound.

    epsilon may be infinite (noise-free control arm); delta must be a proper
    probability and sensitivity a positive finite clipping radius.
    """

    epsilon: float
    delta: float
    sensitivity: float = 1.0

    def __post_init__(self):
        _check_dp_params(self.epsilon, self.delta, self.sensitivity)

    def noise_scale(self) -> float:
        return noise_scale(self.epsilon, self.delta, self.sensitivity)


def noise_scale(epsilon: float, delta: float, sensitivity: float = 1.0) -> float:
    """Gaussian noise standard deviation for one (epsilon, delta) release.

    sigma = sensitivity * sqrt(2 * ln(1.25 / delta)) / epsilon

    An infinite epsilon is allowed and yields 0.0 (no perturbation), which
    lets sweeps include a noise-free arm without special-casing callers.
    """
    _check_dp_params(epsilon, delta, sensitivity)
    if math.isinf(epsilon):
        return 0.0
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def clip_to_sensitivity(vector: np.ndarray, sensitivity: float) -> np.ndarray:
    """Scale a vector down so its L2 norm is at most `sensitivity`."""
    if not (math.isfinite(sensitivity) and sensitivity > 0.0):
        raise ValueError("sensitivity must be positive and finite")
    v = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= sensitivity:
        return v.copy()
    return v * (sensitivity / norm)


def privatize(
    vector: np.ndarray,
    params: PrivacyParams,
    rng: np.random.Generator,
) -> np.ndarray:
    """Clip to the sensitivity radius, then add i.i.d. Gaussian noise
    calibrated to one (epsilon, delta) release.

    Clipping happens here so the stated sensitivity is always honest. Draws
    len(vector) normals from `rng` even when the scale is zero, so the
    downstream random stream does not depend on epsilon.
    """
    v = clip_to_sensitivity(vector, params.sensitivity)
    sigma = params.noise_scale()
    noise = rng.standard_normal(v.shape)
    return v + sigma * noise


@dataclass
class PrivacyBudget:
    """Additive (epsilon, delta) ledger.

    Spending is all-or-nothing: an event that would push either total past
    its maximum is refused and leaves the ledger untouched. Totals accumulate
    as exact rationals; the float views round only on read.
    """

    epsilon_max: float
    delta_max: float
    _epsilon_spent: Fraction = field(default_factory=Fraction, repr=False)
    _delta_spent: Fraction = field(default_factory=Fraction, repr=False)
    events: int = 0

    def __post_init__(self):
        if math.isnan(self.epsilon_max) or self.epsilon_max < 0.0:
            raise ValueError("epsilon_max must be non-negative")
        if math.isnan(self.delta_max) or self.delta_max < 0.0:
            raise ValueError("delta_max must be non-negative")

    @property
    def epsilon_spent(self) -> float:
        return float(self._epsilon_spent)

    @property
    def delta_spent(self) -> float:
        return float(self._delta_spent)

    @property
    def epsilon_remaining(self) -> float:
        return self.epsilon_max - self.epsilon_spent

    @property
    def delta_remaining(self) -> float:
        return self.delta_max - self.delta_spent

    def can_spend(self, epsilon: float, delta: float) -> bool:
        eps, dlt = self._validate(epsilon, delta)
        return self._fits(eps, dlt)

    def within_bounds(self) -> bool:
        """Exact check that the ledger never crossed its maxima."""
        eps_ok = math.isinf(self.epsilon_max) or self._epsilon_spent <= Fraction(self.epsilon_max)
        dlt_ok = math.isinf(self.delta_max) or self._delta_spent <= Fraction(self.delta_max)
        return eps_ok and dlt_ok

    def spend(self, epsilon: float, delta: float) -> bool:
        """Try to charge one release; True if accepted, False if refused."""
        eps, dlt = self._validate(epsilon, delta)
        if not self._fits(eps, dlt):
            return False
        self._epsilon_spent += eps
        self._delta_spent += dlt
        self.events += 1
        return True

    def _validate(self, epsilon: float, delta: float) -> tuple[Fraction, Fraction]:
        if not (math.isfinite(epsilon) and epsilon >= 0.0):
            raise ValueError("epsilon must be finite and non-negative")
        if not (math.isfinite(delta) and delta >= 0.0):
            raise ValueError("delta must be finite and non-negative")
        # Fraction(float) is exact: binary floats are dyadic rationals.
        return Fraction(epsilon), Fraction(delta)

    def _fits(self, eps: Fraction, dlt: Fraction) -> bool:
        if math.isinf(self.epsilon_max):
            eps_ok = True
        else:
            eps_ok = self._epsilon_spent + eps <= Fraction(self.epsilon_max)
        if math.isinf(self.delta_max):
            dlt_ok = True
        else:
            dlt_ok = self._delta_spent + dlt <= Fraction(self.delta_max)
        return eps_ok and dlt_ok


@dataclass(frozen=True)
class AggregationField:
    """Parameters of the masked-aggregation arithmetic.

    The headroom condition max_participants * max_magnitude * scale < prime/2
    guarantees that any in-contract aggregate survives the centered lift
    without wraparound.
    """

    prime: int = DEFAULT_PRIME
    scale: int = DEFAULT_SCALE
    max_participants: int = 10_000
    max_magnitude: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.prime, int) and is_probable_prime(self.prime)):
            raise ValueError("prime must be a prime integer")
        if self.prime >= 2**62:
            raise ValueError("prime must fit the 64-bit accumulation path")
        if not (isinstance(self.scale, int) and self.scale > 0):
            raise ValueError("scale must be a positive integer")
        if not (isinstance(self.max_participants, int) and self.max_participants > 0):
            raise ValueError("max_participants must be a positive integer")
        if not (math.isfinite(self.max_magnitude) and self.max_magnitude > 0.0):
            raise ValueError("max_magnitude must be positive and finite")
        if self.max_participants * self.max_magnitude * self.scale >= self.prime / 2:
            raise ValueError("field too small: participants * magnitude * scale must stay below prime/2")


def encode_fixed(x: float, fld: AggregationField) -> int:
    """Fixed-point field encoding: round(x * scale) reduced mod prime."""
    if not math.isfinite(x):
        raise ValueError("value must be finite")
    q = int(round(x * fld.scale))
    return q % fld.prime


def decode_fixed(v: int, fld: AggregationField) -> float:
    """Inverse of encode_fixed via the centered lift of the residue."""
    if not 0 <= v < fld.prime:
        raise ValueError("residue out of range")
    if v > fld.prime // 2:
        v -= fld.prime
    return v / fld.scale


def _encode_vector(x: np.ndarray, fld: AggregationField) -> np.ndarray:
    q = np.rint(np.asarray(x, dtype=np.float64) * fld.scale).astype(np.int64)
    return np.mod(q, fld.prime).astype(np.uint64)


def _mod_sum_rows(rows: np.ndarray, p: int) -> np.ndarray:
    """Exact column-wise sum mod p of a (k, D) uint64 array with entries < p.

    Reduces in groups of 8: eight values below 2**61 stay below 2**64, so
    every intermediate fits uint64 and the result is exact.
    """
    if rows.shape[0] == 0:
        return np.zeros(rows.shape[1], dtype=np.uint64)
    arr = rows
    while arr.shape[0] > 1:
        pad = (-arr.shape[0]) % 8
        if pad:
            arr = np.vstack([arr, np.zeros((pad, arr.shape[1]), dtype=np.uint64)])
        arr = arr.reshape(-1, 8, arr.shape[1]).sum(axis=1) % p
    return arr[0]


def pairwise_masks(
    participants: list[int],
    mask_seed: int,
    dimension: int,
    fld: AggregationField,
) -> dict[int, np.ndarray]:
    """Per-participant additive masks that cancel exactly in the field sum.

    One mask vector is drawn per unordered pair {i, j}, i < j, in ascending
    row-major pair order from a single generator seeded by mask_seed; i adds
    the vector and j subtracts it mod prime, so summing every participant's
    mask gives zero. A single bulk draw keeps this fast for hundreds of
    thousands of pairs.
    """
    ids = sorted(participants)
    if len(ids) != len(set(ids)):
        raise ValueError("participant ids must be distinct")
    if mask_seed < 0:
        raise ValueError("mask_seed must be non-negative")
    p = fld.prime
    n = len(ids)
    if n < 2:
        return {i: np.zeros(dimension, dtype=np.uint64) for i in ids}
    n_pairs = n * (n - 1) // 2
    rng = np.random.default_rng(mask_seed)
    draws = rng.integers(0, p, size=(n_pairs, dimension), dtype=np.int64).astype(np.uint64)
    neg = (p - draws) % p
    # offsets[s] = first pair position whose lower index is s (row-major order)
    offsets = np.zeros(n + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(np.arange(n - 1, -1, -1))
    masks: dict[int, np.ndarray] = {}
    for t in range(n):
        adds = draws[offsets[t] : offsets[t + 1]]          # pairs (t, j), j > t
        sub_pos = offsets[:t] + (t - np.arange(t) - 1)     # pairs (s, t), s < t
        subs = neg[sub_pos]
        masks[ids[t]] = (_mod_sum_rows(adds, p) + _mod_sum_rows(subs, p)) % p
    return masks


def _check_submission(
    vectors: dict[int, np.ndarray],
    weights: dict[int, float],
    fld: AggregationField,
) -> int:
    if not vectors:
        raise ValueError("need at least one participant")
    if set(vectors) != set(weights):
        raise ValueError("weights must cover exactly the participating ids")
    if len(vectors) > fld.max_participants:
        raise OverflowError("participant count exceeds the field headroom bound")
    dims = {np.asarray(v).shape for v in vectors.values()}
    if len(dims) != 1 or len(next(iter(dims))) != 1:
        raise ValueError("all contributions must be 1-D vectors of equal length")
    peak = 0.0
    for i, v in vectors.items():
        w = weights[i]
        if not math.isfinite(w):
            raise ValueError("weights must be finite")
        contrib = np.abs(np.asarray(v, dtype=np.float64) * w)
        if contrib.size:
            peak = max(peak, float(contrib.max()))
    # Reject before touching field arithmetic if the true sum could wrap.
    if len(vectors) * peak * fld.scale >= fld.prime / 2:
        raise OverflowError("aggregate magnitude exceeds the field headroom bound")
    return next(iter(dims))[0]


def masked_submissions(
    vectors: dict[int, np.ndarray],
    weights: dict[int, float],
    mask_seed: int,
    fld: AggregationField,
) -> dict[int, np.ndarray]:
    """What each participant actually transmits: masked weighted encodings."""
    dim = _check_submission(vectors, weights, fld)
    masks = pairwise_masks(sorted(vectors), mask_seed, dim, fld)
    out: dict[int, np.ndarray] = {}
    for i in sorted(vectors):
        enc = _encode_vector(np.asarray(vectors[i], dtype=np.float64) * weights[i], fld)
        out[i] = (enc + masks[i]) % fld.prime
    return out


def secure_aggregate(
    vectors: dict[int, np.ndarray],
    weights: dict[int, float],
    mask_seed: int,
    fld: AggregationField,
) -> np.ndarray:
    """Recover the weighted sum of contributions from masked submissions.

    Equals sum_i weights[i] * vectors[i] up to fixed-point rounding of each
    contribution; the masks cancel exactly, contributing nothing.
    """
    submissions = masked_submissions(vectors, weights, mask_seed, fld)
    p = fld.prime
    total = np.zeros(next(iter(submissions.values())).shape, dtype=np.uint64)
    for i in sorted(submissions):
        # stay below 2**63 by reducing after every addition
        total = (total + submissions[i]) % p
    lifted = total.astype(np.int64)
    lifted = np.where(total > p // 2, lifted - p, lifted)
    return lifted.astype(np.float64) / fld.scale
