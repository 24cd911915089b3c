"""Point-based value iteration with lower and upper bounds.

Lower bound: a set of action-tagged alpha vectors, seeded with blind policies
and improved by point backups.  Upper bound: the fast informed bound at the
corners of the simplex plus belief/value points, combined by sawtooth
interpolation.  Belief points are collected by heuristic trials that follow
the upper-bound greedy action and the observation with the largest weighted
excess gap, so only beliefs reachable under promising policies are explored.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import spsolve

from ..errors import WrongHorizon
from .policy import AlphaPolicy, best_alpha
from .scalarize import ScalarizedPomdp

TINY = 1e-12
DENSE_CELLS = 4_000_000


@dataclass
class PbviConfig:
    target_gap: float | None = None  # absolute; default max(1e-3 |value|, 1e-6)
    rel_gap: float = 1e-3
    timeout: float = 30.0
    max_depth: int = 500
    max_trials: int = 100_000
    fib_tol: float = 1e-9
    fib_iters: int = 100_000
    stall_trials: int = 50
    fib_share: float = 0.25  # share of the timeout the upper-bound initialization may use
    fib_rounds: int = 300  # informed-bound sweeps after the MDP bound has converged


@dataclass
class PbviResult:
    policy: AlphaPolicy
    lower: float
    upper: float
    offset: float
    trials: int
    elapsed: float
    timed_out: bool

    @property
    def gap(self) -> float:
        return self.upper - self.lower


class _Bounds:
    def __init__(self, sp: ScalarizedPomdp, cfg: PbviConfig, t0: float):
        if sp.T is not None or not sp.time_invariant:
            raise WrongHorizon("point-based solving needs a time-invariant discounted problem")
        self.g = sp.gamma
        self.r = sp.r
        U, S, _ = sp.P.shape
        O = sp.Z.shape[1]
        self.U, self.S, self.O = U, S, O
        # dense arrays are faster for small models, sparse ones keep large coordinators tractable
        self.sparse = U * S * S > DENSE_CELLS
        if self.sparse:
            self.P = [sps.csr_matrix(sp.P[u]) for u in range(U)]
            self.PT = [m.T.tocsr() for m in self.P]
            self.Z = sps.csr_matrix(sp.Z)
        else:
            self.P = [np.ascontiguousarray(sp.P[u]) for u in range(U)]
            self.PT = [np.ascontiguousarray(m.T) for m in self.P]
            self.Z = np.asarray(sp.Z, dtype=float)
        self.ZT = self.Z.T
        self._blind()
        self._fib(cfg, t0)
        # sawtooth points, stored by support: pad column S of the extended belief is +inf
        self.pt_idx = np.zeros((0, 1), dtype=np.int64)
        self.pt_val = np.ones((0, 1))
        self.pt_v = np.zeros(0)  # upper value at each stored point

    # -- belief successors ------------------------------------------------------

    def joint(self, b, u):
        """``(joint, probs)``: unnormalized successor beliefs (S, O) and their masses."""
        pred = self.PT[u] @ b
        if not self.sparse:
            jt = self.Z * pred[:, None]
            return jt, jt.sum(axis=0)
        jt = self.Z.multiply(pred[:, None]).tocsc()
        return jt, np.asarray(jt.sum(axis=0)).ravel()

    def successors(self, b, u):
        jt, p = self.joint(b, u)
        obs = np.flatnonzero(p > TINY)
        if not obs.size:
            return obs, p[obs], np.zeros((0, self.S))
        cols = jt[:, obs]
        C = (cols.toarray() if self.sparse else cols).T / p[obs, None]
        return obs, p[obs], C

    # -- lower bound ------------------------------------------------------------

    def _blind(self):
        if self.sparse:
            eye = sps.identity(self.S, format="csc")
            alphas = [spsolve((eye - self.g * self.P[u]).tocsc(), self.r[:, u]) for u in range(self.U)]
        else:
            eye = np.eye(self.S)
            alphas = [np.linalg.solve(eye - self.g * self.P[u], self.r[:, u]) for u in range(self.U)]
        self.alphas = np.array(alphas).reshape(self.U, self.S)
        self.acts = np.arange(self.U)

    def lower(self, b) -> float:
        return float((self.alphas @ b).max())

    def backup_lower(self, b):
        best_v, best = -np.inf, None
        # every observation gets a vector, so the new alpha is a conditional plan's value
        fallback = np.asarray(self.ZT @ self.alphas.T).argmax(axis=1)
        for u in range(self.U):
            jt, p = self.joint(b, u)
            scores = np.asarray(jt.T @ self.alphas.T)  # (O, n_alpha)
            idx = np.where(p > TINY, scores.argmax(axis=1), fallback)
            chosen = self.alphas[idx].T  # (S, O)
            if self.sparse:
                g = np.asarray(self.Z.multiply(chosen).sum(axis=1)).ravel()
            else:
                g = (self.Z * chosen).sum(axis=1)
            alpha = self.r[:, u] + self.g * (self.P[u] @ g)
            v = float(alpha @ b)
            if best is None or v > best_v + 1e-12 * max(1.0, abs(best_v)):
                best_v, best = v, (u, alpha)
        if best_v > self.lower(b) + 1e-12 * max(1.0, abs(best_v)):
            u, alpha = best
            self.alphas = np.vstack([self.alphas, alpha])
            self.acts = np.append(self.acts, u)

    # -- upper bound ------------------------------------------------------------

    def _fib(self, cfg: PbviConfig, t0: float):
        """Fast informed bound, started from the MDP bound and stopped early if slow.

        Every iterate of a monotone operator started above the fixed point
        stays above it, so an early stop still gives an upper bound.
        """
        U, S, O = self.U, self.S, self.O
        rmax = float(self.r.max())
        scale = max(1.0, abs(rmax) / (1 - self.g))
        Q = np.full((S, U), rmax / (1 - self.g))
        for _ in range(cfg.fib_iters):
            V = Q.max(axis=1)
            Qn = np.minimum(self.r + self.g * np.stack([m @ V for m in self.P], axis=1), Q)
            done = np.abs(Qn - Q).max() <= cfg.fib_tol * scale
            Q = Qn
            if done:
                break
        budget = t0 + cfg.fib_share * cfg.timeout
        Zc = self.Z.tocsc() if self.sparse else self.Z
        for _ in range(cfg.fib_rounds):
            # W[s', (u', o)] = Z(o | s') Q(s', u')
            if self.sparse:
                W = sps.hstack([Zc.multiply(Q[:, [v]]) for v in range(U)]).tocsc()
                prod = [np.asarray((self.P[u] @ W).todense()) for u in range(U)]
            else:
                W = (Q[:, :, None] * Zc[:, None, :]).reshape(S, U * O)
                prod = [self.P[u] @ W for u in range(U)]
            nxt = np.stack([x.reshape(S, U, O).max(axis=1).sum(axis=1) for x in prod], axis=1)
            Qn = np.minimum(self.r + self.g * nxt, Q)
            done = np.abs(Qn - Q).max() <= cfg.fib_tol * scale
            Q = Qn
            if done or time.monotonic() > budget:
                break
        self.corner = Q.max(axis=1)

    def upper_many(self, C: np.ndarray) -> np.ndarray:
        """Sawtooth upper bound at each row of ``C``."""
        v = C @ self.corner
        if self.pt_v.size:
            # gains against the current corners, which may have dropped since a point was stored
            corner = np.append(self.corner, 0.0)
            gain = np.minimum(self.pt_v - (self.pt_val * corner[self.pt_idx]).sum(axis=1), 0.0)
            ext = np.hstack([C, np.full((C.shape[0], 1), np.inf)])
            out = np.empty(C.shape[0])
            step = max(1, int(2e6 // max(1, self.pt_idx.size)))
            for i in range(0, C.shape[0], step):
                ratio = (ext[i:i + step][:, self.pt_idx] / self.pt_val).min(axis=2)
                out[i:i + step] = (ratio * gain).min(axis=1)
            v = v + np.minimum(out, 0.0)
        return v

    def upper(self, b) -> float:
        return float(self.upper_many(b[None, :])[0])

    def q_upper(self, b):
        qs = b @ self.r
        for u in range(self.U):
            obs, p, C = self.successors(b, u)
            if obs.size:
                qs[u] += self.g * float(p @ self.upper_many(C))
        return qs

    def backup_upper(self, b):
        v = float(self.q_upper(b).max())
        if v < self.upper(b) - 1e-12 * max(1.0, abs(v)):
            nz = np.flatnonzero(b > TINY)
            if nz.size == 1:
                s = nz[0]
                self.corner[s] = min(self.corner[s], v)
                return
            k = self.pt_idx.shape[1]
            if nz.size > k:
                pad = nz.size - k
                self.pt_idx = np.hstack([self.pt_idx, np.full((self.pt_idx.shape[0], pad), self.S)])
                self.pt_val = np.hstack([self.pt_val, np.ones((self.pt_val.shape[0], pad))])
                k = nz.size
            idx = np.full(k, self.S)
            val = np.ones(k)
            idx[:nz.size] = nz
            val[:nz.size] = b[nz]
            self.pt_idx = np.vstack([self.pt_idx, idx])
            self.pt_val = np.vstack([self.pt_val, val])
            self.pt_v = np.append(self.pt_v, v)


def solve_pbvi(sp: ScalarizedPomdp, cfg: PbviConfig | None = None) -> PbviResult:
    """Anytime point-based solve; returns the lower-bound policy and both bounds.

    Bounds are for the scalarized value, before ``offset`` is added.  On
    timeout the best policy so far is returned with ``timed_out`` set.
    """
    cfg = cfg or PbviConfig()
    t0 = time.monotonic()
    bd = _Bounds(sp, cfg, t0)
    roots, weights = [], []
    for o in range(sp.n_obs):
        b = sp.init * sp.Z[:, o]
        p = float(b.sum())
        if p > TINY:
            roots.append(b / p)
            weights.append(p)
    weights = np.array(weights)
    roots = np.array(roots)

    def root_bounds():
        lo = float(weights @ (roots @ bd.alphas.T).max(axis=1))
        hi = float(weights @ bd.upper_many(roots))
        return lo, hi

    def target(lo, hi):
        if cfg.target_gap is not None:
            return cfg.target_gap
        return max(cfg.rel_gap * max(abs(lo), abs(hi)), 1e-6)

    def explore(b, depth, eps):
        if depth >= cfg.max_depth or time.monotonic() - t0 > cfg.timeout:
            return
        if bd.upper(b) - bd.lower(b) <= eps * bd.g ** (-depth):
            return
        q = bd.q_upper(b)
        u = int(np.argmax(q))
        thr = eps * bd.g ** (-(depth + 1))
        obs, p, C = bd.successors(b, u)
        nxt, best = None, -np.inf
        if obs.size:
            score = p * (bd.upper_many(C) - (C @ bd.alphas.T).max(axis=1) - thr)
            k = int(np.argmax(score))
            best, nxt = score[k], C[k]
        if nxt is not None and best > 0:
            explore(nxt, depth + 1, eps)
        bd.backup_lower(b)
        bd.backup_upper(b)

    trials = stalled = 0
    timed_out = False
    lo, hi = root_bounds()
    while hi - lo > target(lo, hi):
        if trials >= cfg.max_trials:
            break
        if time.monotonic() - t0 > cfg.timeout:
            timed_out = True
            break
        eps = target(lo, hi)
        scores = weights * (bd.upper_many(roots) - (roots @ bd.alphas.T).max(axis=1) - eps)
        k = int(np.argmax(scores))
        explore(roots[k], 0, eps)
        trials += 1
        lo_n, hi_n = root_bounds()
        stalled = stalled + 1 if (lo_n <= lo and hi_n >= hi) else 0
        lo, hi = max(lo, lo_n), min(hi, hi_n)
        if stalled >= cfg.stall_trials:
            break
    policy = AlphaPolicy(sp.P, sp.Z, sp.init, bd.alphas, bd.acts)
    return PbviResult(policy, lo, hi, sp.offset, trials, time.monotonic() - t0, timed_out)


__all__ = ["PbviConfig", "PbviResult", "solve_pbvi", "best_alpha"]
