"""Sampling rules behind a single next-arm interface.

* ``oracle``  -- tracks the fixed optimal allocation computed from the true
  parameter (a diagnostic upper bound on what adaptive rules can do).
* ``tas``     -- solves the allocation game at the current estimate every
  step (optionally restricted to the active pieces) and tracks it.
* ``lingame`` -- incremental game solver: a multiplicative-weights learner
  proposes allocations, the environment answers with the closest active
  piece, and the learner is updated with optimistic gains.

Samplers never mutate stopping state; they only read statistics and the
currently active pieces of the empirical answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import allocation, stopping
from .model import LINEAR, UNSTRUCTURED, Statistics
from .problems import ProblemSpec, pieces_of

CUMULATIVE = "cumulative"
PER_STEP = "per_step"

WIDTH_CAP = 1e6  # width assigned to unpulled unstructured arms


@dataclass
class SamplerSettings:
    tracking: str = CUMULATIVE
    solver_tol: float = 1e-6
    solver_max_iter: int = 2000
    recompute_every: int = 1
    learner_rate_scale: float = 1.0
    gain_cap: float | None = None  # None: adaptive 4x largest observed sq-gap
    width_cap: float = WIDTH_CAP

    def __post_init__(self):
        if self.tracking not in (CUMULATIVE, PER_STEP):
            raise ValueError(f"unknown tracking mode {self.tracking!r}")
        if self.recompute_every < 1:
            raise ValueError("recompute_every must be >= 1")


def confidence_widths(stats: Statistics, thr: stopping.Threshold,
                      width_cap: float = WIDTH_CAP) -> np.ndarray:
    """Per-arm optimism bonus sqrt(2 beta(t, 1/t^2)) * ||phi_k||_{Vinv}."""
    t = max(stats.t, 2)
    b = stopping.beta(thr, t, delta=1.0 / (t * t))
    if stats.structure == UNSTRUCTURED:
        w = np.sqrt(2.0 * b * stats.inv_counts)
        return np.minimum(w, width_cap)
    norms = np.einsum("kd,de,ke->k", stats.features, stats.vinv, stats.features)
    return np.sqrt(2.0 * b * np.maximum(norms, 0.0))


def confidence_width(stats: Statistics, k: int, thr: stopping.Threshold,
                     width_cap: float = WIDTH_CAP) -> float:
    return float(confidence_widths(stats, thr, width_cap)[k])


class _TrackingMixin:
    def _track(self, w_t: np.ndarray, counts, t: int) -> int:
        self.cum_weights += w_t
        if self.settings.tracking == PER_STEP:
            target = t * w_t
        else:
            target = self.cum_weights
        return allocation.track(target, counts, t)

    def _geometry(self, i_hat, active):
        """Piece geometry cached across steps with a stable answer/active set."""
        key = (i_hat, tuple(active))
        if getattr(self, "_geo_key", None) != key:
            self._geo = allocation._PieceGeometry(
                self.spec, self.features, self.structure, i_hat, list(active))
            self._geo_key = key
        return self._geo


class OracleSampler(_TrackingMixin):
    """Tracks a fixed allocation computed from the true parameter."""

    kind = "oracle"

    def __init__(self, omega_star: np.ndarray, settings: SamplerSettings | None = None):
        self.omega_star = allocation.as_weights(omega_star)
        self.settings = settings or SamplerSettings()
        self.cum_weights = np.zeros_like(self.omega_star)
        self.last_w = self.omega_star

    def next_arm(self, stats: Statistics, t: int, i_hat, active) -> int:
        return self._track(self.omega_star, stats.counts, t)


class TrackAndStopSampler(_TrackingMixin):
    """Re-solves the allocation game at theta_hat and tracks the solution.

    Each step's solve is warm-started from the previous weights with a
    bounded iteration budget; a full-budget solve from uniform runs every
    FULL_REFRESH steps (and on the first step) so warm starts cannot drift.
    """

    kind = "tas"
    WARM_BUDGET = 100
    FULL_REFRESH = 256

    def __init__(self, spec: ProblemSpec, features, structure,
                 settings: SamplerSettings | None = None):
        self.spec = spec
        self.features = features
        self.structure = structure
        self.settings = settings or SamplerSettings()
        K = features.shape[0]
        self.cum_weights = np.zeros(K)
        self.last_w = np.full(K, 1.0 / K)
        self._steps = 0
        self._solves = 0
        self.solver_failures = 0

    def next_arm(self, stats: Statistics, t: int, i_hat, active) -> int:
        if not active:
            raise ValueError("sampler needs a nonempty active piece set")
        if self._steps % self.settings.recompute_every == 0:
            geo = self._geometry(i_hat, active)
            fresh = self._solves % self.FULL_REFRESH == 0
            sol = allocation.optimal_weights(
                self.spec, self.features, self.structure, stats.theta_hat,
                i_hat, tol=self.settings.solver_tol,
                max_iter=(self.settings.solver_max_iter if fresh
                          else min(self.WARM_BUDGET, self.settings.solver_max_iter)),
                w_init=None if fresh else self.last_w,
                geometry=geo)
            if fresh and not sol.converged:
                self.solver_failures += 1
            self._solves += 1
            self.last_w = sol.weights
        self._steps += 1
        return self._track(self.last_w, stats.counts, t)


class GameLearnerSampler(_TrackingMixin):
    """Multiplicative-weights learner against best-response alternatives.

    The learner keeps cumulative optimistic gains G and proposes
    w_t = softmax(eta_t G) with eta_t = scale * sqrt(8 log K / t). Gains are
    the squared mean distances to the closest active alternative plus a
    confidence width, clipped to [0, gain_cap].
    """

    kind = "lingame"

    def __init__(self, spec: ProblemSpec, features, structure,
                 thr: stopping.Threshold, settings: SamplerSettings | None = None):
        self.spec = spec
        self.features = features
        self.structure = structure
        self.thr = thr
        self.settings = settings or SamplerSettings()
        K = features.shape[0]
        self.K = K
        self.cum_weights = np.zeros(K)
        self.cum_gains = np.zeros(K)
        self._updates = 0
        self._sq_gap_bound = 0.0
        self.last_w = np.full(K, 1.0 / K)

    def learner_weights(self) -> np.ndarray:
        self._updates += 1
        eta = self.settings.learner_rate_scale * math.sqrt(
            8.0 * math.log(self.K) / self._updates)
        z = eta * self.cum_gains
        z -= z.max()
        w = np.exp(z)
        return w / w.sum()

    def update_learner(self, gains: np.ndarray):
        self.cum_gains += gains

    def next_arm(self, stats: Statistics, t: int, i_hat, active) -> int:
        if not active:
            raise ValueError("sampler needs a nonempty active piece set")
        w = self.learner_weights()
        self.last_w = w
        geo = self._geometry(i_hat, active).set_theta(stats.theta_hat)
        _, _, lam = allocation.best_response_geo(geo, w, return_minimizer=True)
        if self.structure == UNSTRUCTURED:
            proj = stats.theta_hat - lam
        else:
            proj = self.features @ (stats.theta_hat - lam)
        sq = proj * proj
        self._sq_gap_bound = max(self._sq_gap_bound, float(sq.max()))
        gains = 0.5 * sq + confidence_widths(stats, self.thr, self.settings.width_cap)
        cap = self.settings.gain_cap
        if cap is None:
            cap = 4.0 * max(self._sq_gap_bound, 1e-12)
        self.update_learner(np.clip(gains, 0.0, cap))
        return self._track(w, stats.counts, t)


def make_sampler(algo: str, spec: ProblemSpec, inst, thr: stopping.Threshold,
                 settings: SamplerSettings | None = None):
    """Build a sampler by config name; the oracle precomputes omega_star."""
    settings = settings or SamplerSettings()
    if algo == "oracle":
        from .problems import answer_of

        i_star = answer_of(spec, inst.means())
        sol = allocation.optimal_weights(spec, inst.features, inst.structure,
                                         inst.theta, i_star, tol=1e-9,
                                         max_iter=20_000)
        return OracleSampler(sol.weights, settings)
    if algo == "tas":
        return TrackAndStopSampler(spec, inst.features, inst.structure, settings)
    if algo == "lingame":
        return GameLearnerSampler(spec, inst.features, inst.structure, thr, settings)
    raise ValueError(f"unknown sampler {algo!r}")
