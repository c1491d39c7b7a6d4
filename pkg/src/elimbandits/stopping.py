"""Stopping thresholds and monitors.

Three stopping rules share one threshold function beta(t, delta):

* ``llr``       -- stop when every piece of the empirical answer clears the
  threshold simultaneously.
* ``selective`` -- prune active pieces of the empirical answer as they
  individually clear the threshold; stop when the empirical answer (or, in
  the efficient encodings, the surviving answer) has none left.
* ``full``      -- prune pieces of every answer each step.

Threshold modes:

* ``heuristic`` -- beta(t, delta) = log(1/delta) + log(1 + t). One active
  set is shared between stopping and sampling and never reset.
* ``theory``    -- beta(t, delta) = log(1/delta) + c2 log t, with a larger
  sampling threshold alpha(t, delta) and sampling-side sets that are reset
  lazily at times tbar0 ** (2 ** j).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import problems
from .problems import PieceEvaluator, ProblemSpec

HEURISTIC = "heuristic"
THEORY = "theory"

RULES = ("llr", "selective", "full")


@dataclass(frozen=True)
class Threshold:
    """Stopping/sampling threshold family beta(t, delta)."""

    delta: float
    mode: str = HEURISTIC
    c1: float = 2.0
    c2: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if self.mode not in (HEURISTIC, THEORY):
            raise ValueError(f"unknown threshold mode {self.mode!r}")
        if self.mode == THEORY and not (0.0 < self.c1 <= self.c2):
            raise ValueError("theory mode requires 0 < c1 <= c2")


def beta(thr: Threshold, t: int, delta: float | None = None) -> float:
    """Threshold at step t; ``delta`` overrides thr.delta (e.g. 1/t^2)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    d = thr.delta if delta is None else delta
    if thr.mode == HEURISTIC:
        return math.log(1.0 / d) + math.log(1.0 + t)
    return math.log(1.0 / d) + thr.c2 * math.log(max(t, 1))


def alpha(thr: Threshold, t: int) -> float:
    """Sampling-side threshold; only defined in theory mode for t >= 2."""
    if thr.mode != THEORY:
        raise ValueError("alpha is only defined in theory mode; the heuristic "
                         "configuration shares one active set driven by beta")
    if t < 2:
        raise ValueError("alpha requires t >= 2")
    b = beta(thr, t)
    b_self = beta(thr, t, delta=1.0 / (t * t))
    log_t = math.log(t)
    return (math.sqrt(b + (4.0 * thr.c2 - thr.c1) * log_t)
            + 4.0 * math.sqrt(thr.c2 / thr.c1 * b_self)) ** 2


class StoppingMonitor:
    """Single-run stopping-rule state machine with a minimization counter.

    ``step`` returns the answer once the rule fires (and keeps returning
    it); ``minimizations`` counts every piece-infimum evaluation performed.
    """

    def __init__(self, spec: ProblemSpec, rule: str):
        if rule not in RULES:
            raise ValueError(f"unknown stopping rule {rule!r}")
        self.spec = spec
        self.rule = rule
        self.state = None if rule == "llr" else problems.init_active(spec)
        self.minimizations = 0
        self.stopped_at: int | None = None
        self.answer = None
        self.events: list = []  # (t, piece_id)

    @property
    def stopped(self) -> bool:
        return self.stopped_at is not None

    def active_size(self) -> int:
        if self.state is None:
            return self.spec.n_pieces
        return self.state.size()

    def active_pieces(self, i) -> list:
        """Active pieces of answer i (every piece for the llr rule)."""
        if self.state is None:
            return problems.pieces_of(self.spec, i)
        return problems.active_pieces(self.spec, self.state, i)

    def step(self, ev: PieceEvaluator, i_hat, t: int, beta_t: float):
        if self.stopped:
            return self.answer
        if self.rule == "llr":
            pieces = problems.pieces_of(self.spec, i_hat)
            vals = ev.values(i_hat, pieces)
            self.minimizations += len(pieces)
            if float(vals.min()) >= beta_t:
                self.stopped_at = t
                self.answer = i_hat
        else:
            update = (problems.update_active_selective if self.rule == "selective"
                      else problems.update_active_full)
            eliminated, n_evals = update(self.spec, self.state, ev, i_hat, beta_t)
            self.minimizations += n_evals
            self.events.extend((t, p) for p in eliminated)
            ans = problems.is_stopped(self.spec, self.state)
            if ans is not None:
                self.stopped_at = t
                self.answer = ans
        return self.answer


def monitor_step(mon: StoppingMonitor, ev: PieceEvaluator, i_hat, t: int,
                 thr: Threshold):
    """Advance one monitor by one step at threshold beta(t, delta)."""
    return mon.step(ev, i_hat, t, beta(thr, t))


# ---------------------------------------------------------------------------
# Lazy reset schedule and sampling-side active sets (theory mode)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResetSchedule:
    """Reset times tbar0 ** (2 ** j) for j >= 0."""

    tbar0: int = 2

    def __post_init__(self):
        if self.tbar0 < 2:
            raise ValueError("tbar0 must be >= 2")

    def is_reset(self, t: int) -> bool:
        x = self.tbar0
        while x <= t:
            if x == t:
                return True
            x = x * x
        return False

    def reset_times(self, horizon: int) -> list:
        out = []
        x = self.tbar0
        while x <= horizon:
            out.append(x)
            x = x * x
        return out

    def j_of(self, t: int) -> int:
        """Index of the last reset at or before t (t >= tbar0)."""
        times = self.reset_times(t)
        if not times:
            raise ValueError("no reset has happened before tbar0")
        return len(times) - 1


class SamplingSets:
    """Sampling-side active pieces with lazy resets.

    Maintains a helper state updated with the alpha threshold each step.
    At every reset time the helper is stored and reinitialized to all
    pieces; the exposed active set is the intersection of the current
    helper with the stored one, so between resets it equals the running
    intersection of per-step test outcomes since the second-last reset.
    """

    def __init__(self, spec: ProblemSpec, rule: str = "selective",
                 schedule: ResetSchedule | None = None):
        if rule not in ("selective", "full"):
            raise ValueError("sampling sets use the selective or full rule")
        self.spec = spec
        self.rule = rule
        self.schedule = schedule or ResetSchedule()
        self.helper = problems.init_active(spec)
        self.stored = problems.init_active(spec)
        self.resets_done: list = []

    def step(self, ev: PieceEvaluator, i_hat, t: int, alpha_t: float):
        if self.schedule.is_reset(t):
            self.stored = self.helper
            self.helper = problems.init_active(self.spec)
            self.resets_done.append(t)
        update = (problems.update_active_selective if self.rule == "selective"
                  else problems.update_active_full)
        update(self.spec, self.helper, ev, i_hat, alpha_t)

    def active_pieces(self, i) -> list:
        cur = set(problems.active_pieces(self.spec, self.helper, i))
        old = set(problems.active_pieces(self.spec, self.stored, i))
        return sorted(cur & old)


def sampling_sets_step(sets: SamplingSets, ev: PieceEvaluator, i_hat, t: int,
                       thr: Threshold):
    """Advance the sampling-side sets one step at threshold alpha(t, delta)."""
    sets.step(ev, i_hat, t, alpha(thr, t))
    return sets
