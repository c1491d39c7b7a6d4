"""Identification queries and their alternative-piece geometry.

Three queries are supported over a K-armed Gaussian bandit:

* ``bai``  -- best-arm identification; an answer is an arm index.
* ``topm`` -- identify the m arms with largest means; an answer is a
  sorted tuple of m arm indices.
* ``osi``  -- identify the sign of every arm mean (threshold zero); an
  answer is a K-tuple of 0/1 with sign(x) = 1{x >= 0}.

For every answer i the set of parameters with a different correct answer
decomposes into half-space pieces. Each piece is indexed by

* ``bai``:  an arm j != i, piece {lam : lam' phi_j > lam' phi_i};
* ``topm``: a pair (j, k) with j in i, k not in i, piece
  {lam : lam' phi_k > lam' phi_j};
* ``osi``:  an arm p, piece {lam : sign(lam' phi_p) != i_p}.

All pieces reduce to {lam : a' lam < 0} for a direction vector a, so the
infimum of 0.5 ||theta - lam||^2_V over a piece has the closed form
max(a' theta, 0)^2 / (2 a' V^-1 a), attained at the boundary projection.
In the unstructured case a' V^-1 a is a sum of inverse pull counts.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .model import LINEAR, RIDGE, UNSTRUCTURED, Statistics

BAI = "bai"
TOPM = "topm"
OSI = "osi"


@dataclass(frozen=True)
class ProblemSpec:
    """An identification query over K arms."""

    kind: str
    K: int
    m: int | None = None

    def __post_init__(self):
        if self.kind not in (BAI, TOPM, OSI):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.K < 2:
            raise ValueError("need at least 2 arms")
        if self.kind == TOPM:
            if self.m is None or not 1 <= self.m < self.K:
                raise ValueError("topm requires 1 <= m < K")
        elif self.m is not None:
            raise ValueError("m is only meaningful for topm")

    @property
    def n_pieces(self) -> int:
        """Number of pieces of any answer: K-1, m(K-m) or K."""
        if self.kind == BAI:
            return self.K - 1
        if self.kind == TOPM:
            return self.m * (self.K - self.m)
        return self.K

    def list_answers(self):
        """All possible answers; only for enumeration-oracle sized problems."""
        if self.kind == BAI:
            if self.K > 5:
                raise ValueError("answer enumeration limited to K <= 5 for bai")
            return list(range(self.K))
        if self.kind == TOPM:
            if self.K > 5 or self.m > 2:
                raise ValueError("answer enumeration limited to K <= 5, m <= 2 for topm")
            return [tuple(sorted(c)) for c in itertools.combinations(range(self.K), self.m)]
        if self.K > 4:
            raise ValueError("answer enumeration limited to K <= 4 for osi")
        return [tuple(bits) for bits in itertools.product((0, 1), repeat=self.K)]


# ---------------------------------------------------------------------------
# Answers
# ---------------------------------------------------------------------------


def answer_of(spec: ProblemSpec, means):
    """Correct answer for the given arm means; ties break to lowest index."""
    means = np.asarray(means, dtype=float)
    if spec.kind == BAI:
        return int(np.argmax(means))
    if spec.kind == TOPM:
        order = np.lexsort((np.arange(spec.K), -means))
        return tuple(sorted(int(j) for j in order[: spec.m]))
    return tuple(1 if mu >= 0 else 0 for mu in means)


def boundary_tie(spec: ProblemSpec, means) -> bool:
    """True when the answer sits on a decision boundary (exact tie)."""
    means = np.asarray(means, dtype=float)
    if spec.kind == BAI:
        top = means.max()
        return int(np.sum(means == top)) > 1
    if spec.kind == TOPM:
        order = np.lexsort((np.arange(spec.K), -means))
        return bool(means[order[spec.m - 1]] == means[order[spec.m]])
    return bool(np.any(means == 0.0))


def pieces_of(spec: ProblemSpec, i) -> list:
    """Piece indices of answer ``i`` in canonical order."""
    if spec.kind == BAI:
        return [j for j in range(spec.K) if j != i]
    if spec.kind == TOPM:
        outside = [k for k in range(spec.K) if k not in i]
        return [(j, k) for j in i for k in outside]
    return list(range(spec.K))


def piece_direction(spec: ProblemSpec, features: np.ndarray, i, p) -> np.ndarray:
    """Direction a with piece closure {lam : a' lam <= 0}."""
    if spec.kind == BAI:
        return features[i] - features[p]
    if spec.kind == TOPM:
        j, k = p
        return features[j] - features[k]
    sign = 1.0 if i[p] == 1 else -1.0
    return sign * features[p]


# ---------------------------------------------------------------------------
# Closed-form piece infima
# ---------------------------------------------------------------------------


def halfspace_values(gaps: np.ndarray, sqnorms: np.ndarray) -> np.ndarray:
    """max(gap, 0)^2 / (2 sqnorm) with infinite sqnorm mapping to 0."""
    gaps = np.asarray(gaps, dtype=float)
    sqnorms = np.asarray(sqnorms, dtype=float)
    out = np.zeros_like(gaps)
    pos = gaps > 0
    if np.any(pos):
        with np.errstate(divide="ignore"):
            vals = 0.5 * gaps[pos] ** 2 / sqnorms[pos]
        vals[~np.isfinite(vals)] = 0.0
        out[pos] = vals
    return out


class PieceEvaluator:
    """Batch evaluation of piece infima at a fixed second-order state.

    The state is either pull counts (via (V_t + ridge I)^-1 for linear
    structure, inverse counts for unstructured) or an allocation omega on
    the simplex playing the role of normalized counts.
    """

    def __init__(self, spec, features, structure, theta, *, vinv=None, inv_weights=None):
        self.spec = spec
        self.features = features
        self.structure = structure
        self.theta = np.asarray(theta, dtype=float)
        self._vinv = vinv
        self._iw = inv_weights  # per-arm 1/weight, +inf allowed
        self._means = None

    @classmethod
    def from_stats(cls, spec: ProblemSpec, stats: Statistics) -> "PieceEvaluator":
        if stats.structure == UNSTRUCTURED:
            return cls(spec, stats.features, UNSTRUCTURED, stats.theta_hat,
                       inv_weights=stats.inv_counts)
        return cls(spec, stats.features, LINEAR, stats.theta_hat, vinv=stats.vinv)

    @classmethod
    def from_weights(cls, spec, features, structure, theta, omega,
                     ridge: float = RIDGE) -> "PieceEvaluator":
        omega = np.asarray(omega, dtype=float)
        if structure == UNSTRUCTURED:
            with np.errstate(divide="ignore"):
                iw = np.where(omega > 0, 1.0 / np.maximum(omega, 1e-300), np.inf)
            return cls(spec, features, UNSTRUCTURED, theta, inv_weights=iw)
        d = features.shape[1]
        v = (features.T * omega) @ features + ridge * np.eye(d)
        return cls(spec, features, LINEAR, theta, vinv=np.linalg.inv(v))

    @property
    def means(self) -> np.ndarray:
        if self._means is None:
            if self.structure == UNSTRUCTURED:
                self._means = self.theta
            else:
                self._means = self.features @ self.theta
        return self._means

    # -- batched values ----------------------------------------------------

    def values(self, i, pieces) -> np.ndarray:
        """Infimum LLR (or information value) for each piece of answer i."""
        if len(pieces) == 0:
            return np.zeros(0)
        spec = self.spec
        if spec.kind == BAI:
            js = np.asarray(pieces, dtype=int)
            gaps = self.means[i] - self.means[js]
            if self.structure == UNSTRUCTURED:
                sqn = self._iw[i] + self._iw[js]
            else:
                a = self.features[i][None, :] - self.features[js]
                sqn = np.einsum("pd,de,pe->p", a, self._vinv, a)
            return halfspace_values(gaps, sqn)
        if spec.kind == TOPM:
            jj = np.fromiter((p[0] for p in pieces), dtype=int, count=len(pieces))
            kk = np.fromiter((p[1] for p in pieces), dtype=int, count=len(pieces))
            gaps = self.means[jj] - self.means[kk]
            if self.structure == UNSTRUCTURED:
                sqn = self._iw[jj] + self._iw[kk]
            else:
                a = self.features[jj] - self.features[kk]
                sqn = np.einsum("pd,de,pe->p", a, self._vinv, a)
            return halfspace_values(gaps, sqn)
        ps = np.asarray(pieces, dtype=int)
        signs = np.array([1.0 if i[p] == 1 else -1.0 for p in ps])
        gaps = signs * self.means[ps]
        if self.structure == UNSTRUCTURED:
            sqn = self._iw[ps]
        else:
            a = self.features[ps] * signs[:, None]
            sqn = np.einsum("pd,de,pe->p", a, self._vinv, a)
        return halfspace_values(gaps, sqn)

    def pairwise_values(self, rows) -> np.ndarray:
        """Matrix of piece values for pieces {lam: lam'phi_row > lam'phi_col}.

        Entry (r, c) is the infimum over the half-space in which arm
        ``rows[r]`` beats arm c; used by the full-elimination rules.
        """
        rows = np.asarray(rows, dtype=int)
        gaps = self.means[None, :] - self.means[rows][:, None]  # (R, K)
        if self.structure == UNSTRUCTURED:
            sqn = self._iw[rows][:, None] + self._iw[None, :]
        else:
            a = self.features[None, :, :] - self.features[rows][:, None, :]
            sqn = np.einsum("rkd,de,rke->rk", a, self._vinv, a)
        vals = halfspace_values(gaps.ravel(), sqn.ravel()).reshape(gaps.shape)
        for r, j in enumerate(rows):
            vals[r, j] = 0.0
        return vals

    # -- single piece with minimizer ----------------------------------------

    def value_minimizer(self, i, p):
        """Value and closest alternative for one piece (theta itself if 0)."""
        a = piece_direction(self.spec, self.features, i, p)
        gap = float(a @ self.theta)
        if gap <= 0:
            return 0.0, self.theta.copy()
        if self.structure == UNSTRUCTURED:
            nz = np.nonzero(a)[0]
            sqn = float(np.sum(a[nz] ** 2 * self._iw[nz]))
            if not np.isfinite(sqn):
                return 0.0, self.theta.copy()
            lam = self.theta.copy()
            lam[nz] -= (gap / sqn) * a[nz] * self._iw[nz]
        else:
            u = self._vinv @ a
            sqn = float(a @ u)
            lam = self.theta - (gap / sqn) * u
        return 0.5 * gap * gap / sqn, lam


def inf_llr_piece(spec: ProblemSpec, stats: Statistics, i, p):
    """Closed-form infimum LLR over one alternative piece, with minimizer."""
    return PieceEvaluator.from_stats(spec, stats).value_minimizer(i, p)


def naive_inf_llr(spec: ProblemSpec, stats: Statistics, i, p,
                  tol: float = 1e-9, max_iter: int = 500_000) -> float:
    """Numerical-oracle infimum over one piece: accelerated projected descent.

    Minimizes 0.5 (theta_hat - lam)' (V_t + ridge I) (theta_hat - lam) over
    the closed half-space {a' lam <= 0}. Independent of the closed forms;
    intended for tests. Raises on failure to converge.
    """
    d = stats.d
    v = stats.design + stats.ridge * np.eye(d)
    theta = stats.theta_hat
    a = piece_direction(spec, stats.features, i, p)
    a_sq = float(a @ a)
    if a_sq == 0.0:
        return 0.0

    def project(x):
        c = float(a @ x)
        if c > 0:
            return x - (c / a_sq) * a
        return x

    def f(x):
        diff = theta - x
        return 0.5 * float(diff @ v @ diff)

    lip = float(np.linalg.eigvalsh(v)[-1])
    step = 1.0 / lip
    lam = project(theta.copy())
    y = lam.copy()
    t_acc = 1.0
    f_prev = f(lam)
    hits = 0
    restarted = False
    for _ in range(max_iter):
        grad = v @ (y - theta)
        lam_next = project(y - step * grad)
        f_cur = f(lam_next)
        if f_cur > f_prev:
            if restarted:
                # even the momentum-free step cannot decrease f: lam is a
                # fixed point of the projected-gradient map, hence optimal
                return f_prev
            y = lam.copy()  # momentum overshoot: restart acceleration
            t_acc = 1.0
            restarted = True
            continue
        restarted = False
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc * t_acc))
        y = lam_next + ((t_acc - 1.0) / t_next) * (lam_next - lam)
        lam, t_acc = lam_next, t_next
        hits = hits + 1 if abs(f_prev - f_cur) <= 1e-13 * max(1.0, abs(f_cur)) else 0
        f_prev = f_cur
        if hits >= 3:
            return f_cur
    raise RuntimeError("projected-descent oracle did not converge")


# ---------------------------------------------------------------------------
# Active-piece state machines
# ---------------------------------------------------------------------------


@dataclass
class BaiActive:
    """Active-arm encoding of the not-yet-eliminated pieces for BAI.

    ``emptied_for`` records the answer whose update removed the last active
    arm; that can only happen when the empirical answer was itself pruned
    earlier, in which case the rule stops and returns that answer.
    """

    active: np.ndarray  # bool (K,)
    emptied_for: int | None = None

    def copy(self):
        return BaiActive(self.active.copy(), self.emptied_for)

    def size(self) -> int:
        return int(self.active.sum())


@dataclass
class TopMActive:
    """Per-arm worse-than sets; arm j is decided once |S(j)| >= K - m."""

    worse: np.ndarray  # bool (K, K), worse[j, k] = piece (j, k) eliminated
    frozen: np.ndarray  # bool (K,)
    decided: list = field(default_factory=list)  # decided arms in order

    def copy(self):
        return TopMActive(self.worse.copy(), self.frozen.copy(), list(self.decided))

    def size(self) -> int:
        """Arms still collecting evidence (not yet decided)."""
        return int((~self.frozen).sum())


@dataclass
class OsiActive:
    """Undecided arms and the signs fixed so far (-1 marks undecided)."""

    undecided: np.ndarray  # bool (K,)
    signs: np.ndarray  # int (K,), values in {-1, 0, 1}

    def copy(self):
        return OsiActive(self.undecided.copy(), self.signs.copy())

    def size(self) -> int:
        return int(self.undecided.sum())


def init_active(spec: ProblemSpec):
    """Fresh state with every piece active."""
    if spec.kind == BAI:
        return BaiActive(np.ones(spec.K, dtype=bool))
    if spec.kind == TOPM:
        return TopMActive(np.zeros((spec.K, spec.K), dtype=bool),
                          np.zeros(spec.K, dtype=bool))
    return OsiActive(np.ones(spec.K, dtype=bool), np.full(spec.K, -1, dtype=int))


def active_pieces(spec: ProblemSpec, state, i) -> list:
    """Pieces of answer ``i`` still active in ``state``."""
    if spec.kind == BAI:
        return [j for j in np.nonzero(state.active)[0] if j != i]
    if spec.kind == TOPM:
        out = []
        for j in i:
            if state.frozen[j]:
                continue
            for k in range(spec.K):
                if k not in i and not state.worse[j, k]:
                    out.append((int(j), int(k)))
        return out
    return [int(p) for p in np.nonzero(state.undecided)[0]]


def _freeze_topm(spec, state, j):
    if not state.frozen[j] and int(state.worse[j].sum()) >= spec.K - spec.m:
        state.frozen[j] = True
        state.decided.append(int(j))


def update_active_selective(spec: ProblemSpec, state, ev: PieceEvaluator, i, beta: float):
    """Test only the active pieces of the empirical answer ``i``.

    Returns (eliminated piece ids, number of infimum evaluations).
    """
    eliminated = []
    n_evals = 0
    if spec.kind == BAI:
        cand = [j for j in np.nonzero(state.active)[0] if j != i]
        if cand:
            vals = ev.values(i, cand)
            n_evals = len(cand)
            for j, v in zip(cand, vals):
                if v >= beta:
                    state.active[j] = False
                    eliminated.append(int(j))
            if state.size() == 0:
                state.emptied_for = i
    elif spec.kind == TOPM:
        for j in i:
            if state.frozen[j]:
                continue
            ks = [k for k in range(spec.K)
                  if k not in i and not state.worse[j, k]]
            if not ks:
                continue
            pieces = [(j, k) for k in ks]
            vals = ev.values(i, pieces)
            n_evals += len(pieces)
            for (jj, kk), v in zip(pieces, vals):
                if v >= beta:
                    state.worse[jj, kk] = True
                    eliminated.append((jj, kk))
            _freeze_topm(spec, state, j)
    else:
        cand = [int(p) for p in np.nonzero(state.undecided)[0]]
        if cand:
            vals = ev.values(i, cand)
            n_evals = len(cand)
            for p, v in zip(cand, vals):
                if v >= beta:
                    state.undecided[p] = False
                    state.signs[p] = i[p]
                    eliminated.append(p)
    return eliminated, n_evals


def update_active_full(spec: ProblemSpec, state, ev: PieceEvaluator, i, beta: float):
    """Test pieces of every answer (statistically efficient encodings).

    For BAI an arm j is dropped when some answer's piece against j can be
    eliminated; for top-m every undecided arm's worse-than set grows; for
    OSI the rule coincides with the selective one.
    """
    if spec.kind == OSI:
        return update_active_selective(spec, state, ev, i, beta)
    eliminated = []
    n_evals = 0
    if spec.kind == BAI:
        cand = np.nonzero(state.active)[0]
        if len(cand):
            vals = ev.pairwise_values(cand)  # (n_cand, K), beats-column orientation
            n_evals = len(cand) * (spec.K - 1)
            best = vals.max(axis=1)
            for j, v in zip(cand, best):
                if v >= beta:
                    state.active[j] = False
                    eliminated.append(int(j))
            if state.size() == 0:
                state.emptied_for = i
    else:
        for j in range(spec.K):
            if state.frozen[j]:
                continue
            ks = [k for k in range(spec.K) if k != j and not state.worse[j, k]]
            if not ks:
                continue
            pieces = [(j, k) for k in ks]
            vals = ev.values(None, pieces)  # pair pieces do not depend on the answer
            n_evals += len(pieces)
            for (jj, kk), v in zip(pieces, vals):
                if v >= beta:
                    state.worse[jj, kk] = True
                    eliminated.append((jj, kk))
            _freeze_topm(spec, state, j)
    return eliminated, n_evals


def is_stopped(spec: ProblemSpec, state):
    """Answer determined by the state, or None while undecided."""
    if spec.kind == BAI:
        if state.size() == 1:
            return int(np.nonzero(state.active)[0][0])
        if state.size() == 0 and state.emptied_for is not None:
            return int(state.emptied_for)
        return None
    if spec.kind == TOPM:
        if len(state.decided) >= spec.m:
            return tuple(sorted(state.decided[: spec.m]))
        return None
    if state.size() == 0:
        return tuple(int(s) for s in state.signs)
    return None


# ---------------------------------------------------------------------------
# Enumeration oracle
# ---------------------------------------------------------------------------


class NaiveEliminationMonitor:
    """Literal per-answer bookkeeping of active pieces, for tiny instances.

    Keeps the active piece set of every possible answer and applies the
    threshold test with intersection history: selective mode updates only
    the empirical answer each step, full mode updates all answers. Stops
    when an updated answer runs out of pieces.
    """

    def __init__(self, spec: ProblemSpec, mode: str = "selective"):
        if mode not in ("selective", "full"):
            raise ValueError("mode must be selective or full")
        self.spec = spec
        self.mode = mode
        self.answers = spec.list_answers()
        self.active = {i: set(pieces_of(spec, i)) for i in self.answers}
        self.stopped_answer = None

    def step(self, ev: PieceEvaluator, i_hat, beta: float):
        if self.stopped_answer is not None:
            return self.stopped_answer
        targets = self.answers if self.mode == "full" else [i_hat]
        for i in targets:
            pieces = pieces_of(self.spec, i)
            vals = ev.values(i, pieces)
            surviving = {p for p, v in zip(pieces, vals) if v < beta}
            self.active[i] &= surviving
        check = [i_hat] if self.mode == "selective" else self.answers
        for i in check:
            if not self.active[i]:
                self.stopped_answer = i
                return i
        return None


def naive_stop_check(monitor: NaiveEliminationMonitor, spec: ProblemSpec,
                     stats: Statistics, beta: float):
    """One enumeration-oracle step; returns the stopped answer or None."""
    ev = PieceEvaluator.from_stats(spec, stats)
    i_hat = answer_of(spec, ev.means)
    return monitor.step(ev, i_hat, beta)
