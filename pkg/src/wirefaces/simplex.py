"""Dense two-phase simplex for small linear programs.

Solves ``min c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0`` on a full
tableau.  Pricing uses the most negative reduced cost while the objective
makes progress and switches to Bland's rule after a run of degenerate
pivots, which rules out cycling.  The tableau is periodically rebuilt from
the original data so round-off cannot accumulate.  Free variables are
handled by the caller (split into positive parts).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LPError(RuntimeError):
    pass


class Infeasible(LPError):
    pass


class Unbounded(LPError):
    pass


@dataclass
class LPResult:
    x: np.ndarray
    objective: float
    iterations: int
    basis: np.ndarray


PIVOT_TOL = 1e-9
BLAND_AFTER = 20
REFACTOR_EVERY = 50


def _tableau(A, b, c, basis):
    m, n = A.shape
    B = A[:, basis]
    T = np.empty((m + 1, n + 1))
    T[:m, :n] = np.linalg.solve(B, A)
    T[:m, n] = np.linalg.solve(B, b)
    cb = c[basis]
    T[m, :n] = c - cb @ T[:m, :n]
    T[m, n] = -cb @ T[:m, n]
    return T


def _pivot(T: np.ndarray, r: int, col: int) -> None:
    T[r] /= T[r, col]
    f = T[:, col].copy()
    f[r] = 0.0
    T -= np.outer(f, T[r])


def _phase(A, b, c, basis, tol, max_iter, it):
    """Optimise from a feasible basis, updating ``basis`` in place."""
    m, n = A.shape
    T = _tableau(A, b, c, basis)
    fresh = True
    stall = 0
    since = 0
    while True:
        if it >= max_iter:
            raise LPError("iteration limit reached")
        if since >= REFACTOR_EVERY:
            T = _tableau(A, b, c, basis)
            fresh, since = True, 0
        red = T[m, :n]
        cscale = max(1.0, float(np.abs(c).max(initial=0.0)))
        cand = np.flatnonzero(red < -tol * cscale)
        if cand.size == 0:
            if fresh:
                return T, it
            T = _tableau(A, b, c, basis)
            fresh, since = True, 0
            continue
        bland = stall >= BLAND_AFTER
        col = int(cand[0]) if bland else int(cand[np.argmin(red[cand])])
        colv = T[:m, col]
        pos = colv > PIVOT_TOL * max(1.0, float(np.abs(colv).max()))
        if not pos.any():
            if fresh:
                raise Unbounded("objective is unbounded below")
            T = _tableau(A, b, c, basis)
            fresh, since = True, 0
            continue
        rhs = np.maximum(T[:m, n], 0.0)
        ratios = np.full(m, np.inf)
        ratios[pos] = rhs[pos] / colv[pos]
        best = float(ratios.min())
        ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, best))
        if bland:
            r = int(min(ties, key=lambda i: basis[i]))
        else:
            r = int(ties[np.argmax(colv[ties])])
        stall = stall + 1 if best <= 1e-12 else 0
        _pivot(T, r, col)
        basis[r] = col
        it += 1
        since += 1
        fresh = False


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, *, tol=1e-10, max_iter=50_000) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    mu, me = len(b_ub), len(b_eq)
    m = mu + me

    # standard form [A_ub I; A_eq 0] [x; s] = b with b >= 0
    A = np.zeros((m, n + mu))
    A[:mu, :n] = A_ub
    A[:mu, n:] = np.eye(mu)
    A[mu:, :n] = A_eq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    nv = n + mu

    # rows whose slack is still +1 start with it in the basis; others get an artificial
    basis = np.array([n + r if r < mu and not neg[r] else -1 for r in range(m)])
    # a column whose only nonzero is positive and in row r can start in the basis
    nz = A != 0
    for j in np.flatnonzero(nz.sum(axis=0) == 1):
        r = int(np.flatnonzero(nz[:, j])[0])
        if basis[r] == -1 and A[r, j] > 0:
            basis[r] = j
    needs = [r for r in range(m) if basis[r] == -1]
    art = np.zeros((m, len(needs)))
    for j, r in enumerate(needs):
        art[r, j] = 1.0
        basis[r] = nv + j
    A1 = np.hstack([A, art])
    c1 = np.concatenate([np.zeros(nv), np.ones(len(needs))])
    it = 0
    if needs:
        T, it = _phase(A1, b, c1, basis, tol, max_iter, it)
        scale = max(1.0, float(np.abs(b).max(initial=0.0)))
        if -T[m, -1] > 1e-8 * scale:
            raise Infeasible("no feasible point")
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] < nv:
                continue
            row = T[r, :nv]
            cand = np.flatnonzero(np.abs(row) > 1e-7)
            if cand.size:
                k = int(cand[np.argmax(np.abs(row[cand]))])
                _pivot(T, r, k)
                basis[r] = k
            else:
                keep[r] = False  # redundant equality
        A, b, basis = A[keep], b[keep], basis[keep]

    cost = np.concatenate([c, np.zeros(mu)])
    T, it = _phase(A, b, cost, basis, tol, max_iter, it)

    xb = np.linalg.solve(A[:, basis], b)
    z = np.zeros(nv)
    z[basis] = xb
    x = np.maximum(z[:n], 0.0)
    return LPResult(x, float(c @ x), it, basis.copy())
