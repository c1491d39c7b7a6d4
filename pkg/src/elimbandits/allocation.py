"""The allocation game: information values, best responses, max-min weights.

For an allocation omega on the simplex, the information value of a piece is
the per-sample analogue of the piece infimum LLR: counts are replaced by
weights in the design matrix. The characteristic value of an instance is

    H* = max_omega min_pieces H_piece(omega, theta),

whose inverse scales the asymptotic sample complexity. ``optimal_weights``
solves that concave max-min program by entropic mirror ascent against
best-response subgradients. ``track`` turns weight targets into pulls with
sqrt(t) forced exploration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import LINEAR, RIDGE, UNSTRUCTURED
from .problems import PieceEvaluator, ProblemSpec, halfspace_values, pieces_of


def as_weights(x) -> np.ndarray:
    """Validate and renormalize a simplex point."""
    w = np.asarray(x, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    s = w.sum()
    if s <= 0:
        raise ValueError("weights must have positive mass")
    w = w / s
    assert abs(w.sum() - 1.0) < 1e-12
    return w


def info_value(spec: ProblemSpec, features, structure, theta, omega, i, p,
               ridge: float = RIDGE) -> float:
    """Information of allocation ``omega`` against one piece of answer i."""
    ev = PieceEvaluator.from_weights(spec, features, structure, theta,
                                     as_weights(omega), ridge)
    val, _ = ev.value_minimizer(i, p)
    return val


def best_response(spec: ProblemSpec, features, structure, theta, omega, i,
                  active=None, ridge: float = RIDGE, return_minimizer: bool = False):
    """Piece of minimal information value (ties to lowest piece id)."""
    pieces = pieces_of(spec, i) if active is None else list(active)
    if not pieces:
        raise ValueError("best response over an empty piece set")
    geo = _PieceGeometry(spec, features, structure, i, pieces, theta=theta)
    return best_response_geo(geo, as_weights(omega), ridge, return_minimizer)


def best_response_geo(geo: "_PieceGeometry", omega, ridge: float = RIDGE,
                      return_minimizer: bool = False):
    """Best response against precomputed piece geometry (hot-path variant)."""
    vals, ctx = geo.values_ctx(omega, ridge)
    idx = int(np.argmin(vals))
    piece, value = geo.pieces[idx], float(vals[idx])
    if return_minimizer:
        return piece, value, geo.minimizer(idx, ctx)
    return piece, value


@dataclass
class GameSolution:
    """Result of the max-min solve."""

    weights: np.ndarray
    value: float
    worst_piece: object
    iterations: int
    gap: float
    converged: bool


class _PieceGeometry:
    """Precomputed piece directions for fast repeated evaluation.

    Piece gaps a' theta are constant across allocations, so only the
    quadratic norms a' V_omega^-1 a are recomputed per evaluation. A zero
    weight shows up as an inverse of 1e300, which safely drives the value
    of any piece touching that arm to ~0 without inf arithmetic.
    """

    def __init__(self, spec, features, structure, i, pieces, theta=None):
        self.structure = structure
        self.features = features
        self.pieces = list(pieces)
        K, d = features.shape
        self.n_arms, self.d = K, d
        if spec.kind == "bai":
            js = np.asarray(self.pieces, dtype=int)
            self.A = features[i][None, :] - features[js]
            self.hi = np.full(len(js), i, dtype=int)
            self.lo = js
        elif spec.kind == "topm":
            jj = np.array([p[0] for p in self.pieces], dtype=int)
            kk = np.array([p[1] for p in self.pieces], dtype=int)
            self.A = features[jj] - features[kk]
            self.hi, self.lo = jj, kk
        else:
            ps = np.asarray(self.pieces, dtype=int)
            signs = np.array([1.0 if i[p] == 1 else -1.0 for p in ps])
            self.A = features[ps] * signs[:, None]
            self.hi = ps
            self.lo = None  # single-coordinate pieces
        self._eye = np.eye(d)
        self.theta = None
        if theta is not None:
            self.set_theta(theta)

    def set_theta(self, theta):
        """Refresh the theta-dependent gap terms; index structure is reused."""
        self.theta = np.asarray(theta, dtype=float)
        self.gaps = self.A @ self.theta
        self.pos = self.gaps > 0
        self.num = np.where(self.pos, 0.5 * self.gaps ** 2, 0.0)
        return self

    def values_ctx(self, omega, ridge):
        """Piece information values at omega plus reusable solve context."""
        if self.structure == UNSTRUCTURED:
            iw = 1.0 / np.maximum(omega, 1e-300)
            sqn = iw[self.hi] if self.lo is None else iw[self.hi] + iw[self.lo]
            return self.num / sqn, (iw, sqn)
        v = self.features.T @ (self.features * omega[:, None])
        v += ridge * self._eye
        vinv = np.linalg.inv(v)
        u = self.A @ vinv
        sqn = np.einsum("pd,pd->p", u, self.A)
        return self.num / np.maximum(sqn, 1e-300), (vinv, sqn)

    def kl_gradient(self, p_idx, ctx):
        """Per-arm KL vector of the worst piece's minimizer (the subgradient)."""
        gap = self.gaps[p_idx]
        g = np.zeros(self.n_arms)
        if gap <= 0:
            return g
        if self.structure == UNSTRUCTURED:
            iw, sqn = ctx
            hi = self.hi[p_idx]
            if self.lo is None:
                g[hi] = 0.5 * gap * gap
                return g
            lo = self.lo[p_idx]
            s = sqn[p_idx]
            if s > 1e200:  # an unweighted arm: the piece is free to enter
                return g
            g[hi] = 0.5 * (gap * iw[hi] / s) ** 2
            g[lo] = 0.5 * (gap * iw[lo] / s) ** 2
            return g
        vinv, sqn = ctx
        diff = (gap / sqn[p_idx]) * (vinv @ self.A[p_idx])  # theta - lambda*
        proj = self.features @ diff
        return 0.5 * proj * proj

    def minimizer(self, p_idx, ctx):
        """Closest point of piece p_idx at the evaluated allocation."""
        gap = self.gaps[p_idx]
        if gap <= 0:
            return self.theta.copy()
        if self.structure == UNSTRUCTURED:
            iw, sqn = ctx
            lam = self.theta.copy()
            s = sqn[p_idx]
            if s > 1e200:
                return lam
            hi = self.hi[p_idx]
            if self.lo is None:
                lam[hi] = 0.0  # sign pieces project onto the zero hyperplane
            else:
                lo = self.lo[p_idx]
                lam[hi] -= gap * iw[hi] / s
                lam[lo] += gap * iw[lo] / s
            return lam
        vinv, sqn = ctx
        return self.theta - (gap / sqn[p_idx]) * (vinv @ self.A[p_idx])


def optimal_weights(spec: ProblemSpec, features, structure, theta, i,
                    active=None, tol: float = 1e-6, max_iter: int = 2000,
                    w_init=None, ridge: float = RIDGE,
                    geometry: "_PieceGeometry | None" = None) -> GameSolution:
    """Solve max over the simplex of the minimal piece information value.

    Entropic mirror ascent on omega against the best-response subgradient,
    step size 1/sqrt(iter) scaled by the largest gain seen so far; the best
    evaluated iterate is returned (raw unnormalized steps stall when the
    game value is small, and the averaged iterate converges an order of
    magnitude slower than the best one). If no piece has a positive gap the
    game value is 0 and uniform weights are returned.
    """
    K = features.shape[0]
    if geometry is not None:
        geo = geometry.set_theta(theta)
        pieces = geo.pieces
    else:
        pieces = pieces_of(spec, i) if active is None else list(active)
        if not pieces:
            raise ValueError("optimal_weights over an empty piece set")
        geo = _PieceGeometry(spec, features, structure, i, pieces, theta=theta)
    if float(geo.gaps.min()) <= 0:
        # some piece contains theta: the min value is 0 for every omega
        idx = int(np.argmin(geo.gaps))
        return GameSolution(np.full(K, 1.0 / K), 0.0, pieces[idx], 0, 0.0, True)

    warm = w_init is not None
    if warm:
        w = np.clip(np.asarray(w_init, dtype=float), 1e-12, None)
        w = w / w.sum()
    else:
        w = np.full(K, 1.0 / K)
    logw = np.log(w)
    gmax = 0.0
    best_v, best_w, best_p = -np.inf, w.copy(), pieces[0]
    hist = []  # best value after each iteration
    gap_win = math.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        vals, ctx = geo.values_ctx(w, ridge)
        p_idx = int(np.argmin(vals))
        v = float(vals[p_idx])
        if v > best_v:
            best_v, best_w, best_p = v, w.copy(), pieces[p_idx]
        g = geo.kl_gradient(p_idx, ctx)
        gmax = max(gmax, float(g.max()))
        if gmax > 0:
            logw += (1.0 / math.sqrt(it) / gmax) * g
            logw -= logw.max()
            w = np.exp(logw)
            w /= w.sum()
        hist.append(best_v)
        scale = tol * (1.0 + abs(best_v))
        if warm and it == 10:
            # warm starts are usually already optimal: a short probe showing
            # no improvement over the initial value counts as converged
            gap_win = best_v - hist[0]
            if gap_win < scale:
                converged = True
                break
        if it > 50 and it % 10 == 0:
            gap_win = best_v - hist[it - 51]
            if gap_win < scale:
                converged = True
                break
    return GameSolution(best_w, best_v, best_p, it,
                        gap_win if math.isfinite(gap_win) else 0.0, converged)


def characteristic_value(spec: ProblemSpec, inst, tol: float = 1e-8,
                         max_iter: int = 20_000) -> GameSolution:
    """H* of a bandit instance: the max-min value at the true parameter."""
    from .problems import answer_of

    i = answer_of(spec, inst.means())
    return optimal_weights(spec, inst.features, inst.structure, inst.theta, i,
                           tol=tol, max_iter=max_iter)


def track(target, counts, t: int) -> int:
    """Next arm from cumulative weight targets with forced exploration.

    Any arm with fewer than sqrt(t) pulls triggers a forced pull of the
    least-pulled arm; otherwise the arm with the largest tracking deficit
    (smallest N_k - target_k) is pulled. Ties go to the lowest index.
    """
    counts = np.asarray(counts)
    if counts.min() < math.sqrt(t):
        return int(np.argmin(counts))
    return int(np.argmin(counts - np.asarray(target)))
