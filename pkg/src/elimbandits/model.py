"""Gaussian linear bandit environment and its sufficient statistics.

Arms are indexed 0..K-1. Arm k has a known feature vector phi_k in R^d and
reward distribution N(phi_k' theta, 1) for an unknown parameter theta.
The unstructured case is the special instance with d == K and features
equal to the canonical basis, where most quantities reduce to per-arm
forms and no dense linear algebra is needed.

Rewards themselves are never stored: pull counts, the design matrix
V_t = sum_s phi_{k_s} phi_{k_s}', the response vector sum_s x_s phi_{k_s}
and per-arm reward sums are sufficient for everything downstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

RIDGE = 1e-8
LINEAR = "linear"
UNSTRUCTURED = "unstructured"

# Full recomputation period for the incrementally maintained design inverse,
# bounding floating-point drift from the rank-1 updates.
RECOMPUTE_EVERY = 10_000


class RngStream:
    """Seeded Gaussian noise stream with bit-exact replay.

    The same seed always yields the same sequence of draws; ``n_draws``
    counts how far the stream has advanced.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.n_draws = 0
        self._gen = np.random.default_rng(self.seed)

    def normal(self) -> float:
        self.n_draws += 1
        return float(self._gen.standard_normal())


@dataclass(frozen=True)
class BanditInstance:
    """A Gaussian bandit: arm features, true parameter, structure tag."""

    features: np.ndarray  # (K, d)
    theta: np.ndarray  # (d,)
    structure: str = LINEAR

    def __post_init__(self):
        feats = np.atleast_2d(np.asarray(self.features, dtype=float))
        theta = np.asarray(self.theta, dtype=float).ravel()
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "theta", theta)
        if feats.shape[0] < 2:
            raise ValueError("need at least 2 arms")
        if feats.shape[1] != theta.shape[0]:
            raise ValueError("feature dimension does not match theta")
        if not np.all(np.isfinite(feats)) or not np.all(np.isfinite(theta)):
            raise ValueError("features and theta must be finite")
        if self.structure not in (LINEAR, UNSTRUCTURED):
            raise ValueError(f"unknown structure {self.structure!r}")
        if self.structure == UNSTRUCTURED:
            K, d = feats.shape
            if K != d or not np.array_equal(feats, np.eye(K)):
                raise ValueError("unstructured instances require canonical-basis features")

    @property
    def K(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def means(self) -> np.ndarray:
        return self.features @ self.theta

    def to_json(self) -> str:
        obj = {
            "K": self.K,
            "d": self.d,
            "structure": self.structure,
            "features": [[float(v) for v in row] for row in self.features],
            "theta": [float(v) for v in self.theta],
        }
        return json.dumps(obj)

    @classmethod
    def from_json(cls, text: str) -> "BanditInstance":
        obj = json.loads(text)
        inst = cls(
            features=np.array(obj["features"], dtype=float),
            theta=np.array(obj["theta"], dtype=float),
            structure=obj["structure"],
        )
        if inst.K != obj["K"] or inst.d != obj["d"]:
            raise ValueError("inconsistent K/d in serialized instance")
        return inst


def unstructured_instance(means) -> BanditInstance:
    """Canonical-basis instance with the given mean rewards."""
    means = np.asarray(means, dtype=float)
    return BanditInstance(np.eye(len(means)), means, UNSTRUCTURED)


def sample_reward(inst: BanditInstance, k: int, rng: RngStream) -> float:
    """Draw one unit-variance Gaussian reward of arm ``k``."""
    if not 0 <= k < inst.K:
        raise IndexError(f"arm index {k} out of range [0, {inst.K})")
    return float(inst.features[k] @ inst.theta) + rng.normal()


class Statistics:
    """Pull counts, design matrix, response vector and the ridge ML estimate.

    ``theta_hat`` solves the ridge-regularized normal equations
    (V_t + ridge I) theta = response at every step. For linear structure the
    inverse (V_t + ridge I)^-1 is maintained by rank-1 updates and fully
    recomputed every RECOMPUTE_EVERY steps; for unstructured structure all
    state is per-arm and diagonal.
    """

    def __init__(self, inst: BanditInstance, ridge: float = RIDGE):
        self.features = inst.features
        self.structure = inst.structure
        self.ridge = float(ridge)
        K, d = inst.features.shape
        self.K, self.d = K, d
        self.t = 0
        self.counts = np.zeros(K, dtype=np.int64)
        self.arm_sums = np.zeros(K)
        if self.structure == LINEAR:
            self._design = np.zeros((d, d))
            self._response = np.zeros(d)
            self._vinv = np.eye(d) / self.ridge
            self._theta_hat = np.zeros(d)
            # per-arm outer products, reused by the periodic recomputation
            self._grams = inst.features[:, :, None] * inst.features[:, None, :]

    # -- updates ---------------------------------------------------------

    def update(self, k: int, x: float) -> "Statistics":
        """Record one observation ``x`` of arm ``k``; refreshes theta_hat."""
        if not 0 <= k < self.K:
            raise IndexError(f"arm index {k} out of range [0, {self.K})")
        self.t += 1
        self.counts[k] += 1
        self.arm_sums[k] += x
        if self.structure == LINEAR:
            phi = self.features[k]
            self._design += self._grams[k]
            self._response += x * phi
            u = self._vinv @ phi
            self._vinv -= np.outer(u, u) / (1.0 + phi @ u)
            if self.t % RECOMPUTE_EVERY == 0:
                self._recompute()
            else:
                self._theta_hat = self._vinv @ self._response
        return self

    def _recompute(self):
        self._design = np.tensordot(self.counts.astype(float), self._grams, axes=1)
        self._response = self.features.T @ self.arm_sums
        self._vinv = np.linalg.inv(self._design + self.ridge * np.eye(self.d))
        self._theta_hat = self._vinv @ self._response

    @classmethod
    def from_pull_data(cls, inst: BanditInstance, counts, arm_sums) -> "Statistics":
        """Build statistics directly from per-arm counts and reward sums."""
        stats = cls(inst)
        stats.counts = np.asarray(counts, dtype=np.int64).copy()
        stats.arm_sums = np.asarray(arm_sums, dtype=float).copy()
        stats.t = int(stats.counts.sum())
        if stats.structure == LINEAR:
            stats._recompute()
        return stats

    # -- views -----------------------------------------------------------

    @property
    def design(self) -> np.ndarray:
        if self.structure == UNSTRUCTURED:
            return np.diag(self.counts.astype(float))
        return self._design

    @property
    def response(self) -> np.ndarray:
        if self.structure == UNSTRUCTURED:
            return self.arm_sums.copy()
        return self._response

    @property
    def theta_hat(self) -> np.ndarray:
        if self.structure == UNSTRUCTURED:
            return self.arm_sums / (self.counts + self.ridge)
        return self._theta_hat

    @property
    def vinv(self) -> np.ndarray:
        """Inverse of (V_t + ridge I)."""
        if self.structure == UNSTRUCTURED:
            return np.diag(1.0 / (self.counts + self.ridge))
        return self._vinv

    @property
    def inv_counts(self) -> np.ndarray:
        """1 / N_t per arm, with +inf for unpulled arms."""
        with np.errstate(divide="ignore"):
            return np.where(self.counts > 0, 1.0 / np.maximum(self.counts, 1), np.inf)

    @property
    def emp_means(self) -> np.ndarray:
        """Per-arm empirical means (0 for unpulled arms)."""
        return np.divide(
            self.arm_sums,
            self.counts,
            out=np.zeros(self.K),
            where=self.counts > 0,
        )

    def means_hat(self) -> np.ndarray:
        """Estimated arm means phi_k' theta_hat."""
        if self.structure == UNSTRUCTURED:
            return self.theta_hat
        return self.features @ self._theta_hat

    def llr_to(self, lam) -> float:
        """Log-likelihood ratio between theta_hat and ``lam``.

        Equals 0.5 * ||theta_hat - lam||^2 in the V_t norm, which is also
        sum_k N_t^k KL_k(theta_hat, lam) for unit-variance Gaussian arms.
        """
        lam = np.asarray(lam, dtype=float)
        diff = self.theta_hat - lam
        if self.structure == UNSTRUCTURED:
            val = 0.5 * float(self.counts @ (diff * diff))
        else:
            val = 0.5 * float(diff @ self._design @ diff)
        return max(val, 0.0)

    def copy(self) -> "Statistics":
        out = Statistics.__new__(Statistics)
        out.features = self.features
        out.structure = self.structure
        out.ridge = self.ridge
        out.K, out.d = self.K, self.d
        out.t = self.t
        out.counts = self.counts.copy()
        out.arm_sums = self.arm_sums.copy()
        if self.structure == LINEAR:
            out._design = self._design.copy()
            out._response = self._response.copy()
            out._vinv = self._vinv.copy()
            out._theta_hat = self._theta_hat.copy()
            out._grams = self._grams
        return out
