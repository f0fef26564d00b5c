"""Revised simplex method for ``min c'x  s.t.  A x = b, x >= 0``.

Entering and leaving variables follow Bland's smallest-index rule, which
rules out cycling on degenerate problems. The basis inverse is kept as a
dense matrix, updated by one elementary row operation per pivot and rebuilt
from scratch every ``refactor_every`` pivots. ``A`` may be a dense array or
a scipy sparse matrix; only products with ``A`` and single-column reads are
needed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class LpError(RuntimeError):
    pass


class InfeasibleError(LpError):
    """``certificate`` is a vector ``y`` with ``A'y <= 0`` and ``b'y > 0``."""

    def __init__(self, msg, certificate):
        super().__init__(msg)
        self.certificate = certificate


class UnboundedError(LpError):
    pass


class IterationLimitError(LpError):
    pass


@dataclass
class LpResult:
    x: np.ndarray
    objective: float
    duals: np.ndarray
    basis: np.ndarray
    iterations: int
    dropped_rows: list


class _Columns:
    def __init__(self, A):
        if sp.issparse(A):
            self.A = sp.csc_matrix(A, dtype=float)
            self.sparse = True
        else:
            self.A = np.asarray(A, dtype=float)
            self.sparse = False

    @property
    def shape(self):
        return self.A.shape

    def col(self, j) -> np.ndarray:
        if self.sparse:
            out = np.zeros(self.A.shape[0])
            a = self.A
            lo, hi = a.indptr[j], a.indptr[j + 1]
            out[a.indices[lo:hi]] = a.data[lo:hi]
            return out
        return self.A[:, j].copy()

    def cols(self, idx) -> np.ndarray:
        m = self.A[:, idx]
        return m.toarray() if self.sparse else np.asarray(m)

    def rmatvec(self, y) -> np.ndarray:
        return np.asarray(self.A.T @ y).reshape(-1)


class _Tableau:
    """Revised-simplex state over a column set with costs ``c``."""

    def __init__(self, A: _Columns, b, basis, tol, refactor_every):
        self.A = A
        self.b = b
        self.basis = np.array(basis, dtype=int)
        self.tol = tol
        self.refactor_every = refactor_every
        self.refactor()

    def refactor(self):
        B = self.A.cols(self.basis)
        self.Binv = np.linalg.inv(B)
        self.xB = self.Binv @ self.b
        self.since = 0

    def pivot(self, r, j, d):
        piv = d[r]
        row = self.Binv[r] / piv
        self.Binv -= np.outer(d, row)
        self.Binv[r] = row
        theta = self.xB[r] / piv
        self.xB -= theta * d
        self.xB[r] = theta
        self.basis[r] = j
        self.since += 1
        if self.since >= self.refactor_every:
            self.refactor()

    def run(self, c, allowed, max_iter, start_iter=0):
        """Bland-rule phase over columns flagged in ``allowed``."""
        it = start_iter
        scale = 1.0 + np.max(np.abs(c)) if c.size else 1.0
        opt_tol = self.tol * scale
        while True:
            y = c[self.basis] @ self.Binv
            red = c - self.A.rmatvec(y)
            red[self.basis] = 0.0
            cand = np.nonzero((red < -opt_tol) & allowed)[0]
            if cand.size == 0:
                return y, it
            if it >= max_iter:
                raise IterationLimitError(f"no optimum after {it} pivots")
            j = int(cand[0])
            d = self.Binv @ self.A.col(j)
            pos = d > self.tol
            if not np.any(pos):
                raise UnboundedError(f"column {j} is an unbounded direction")
            ratios = np.full(d.shape, np.inf)
            ratios[pos] = np.maximum(self.xB[pos], 0.0) / d[pos]
            best = np.min(ratios)
            ties = np.nonzero(ratios <= best + self.tol * max(1.0, best))[0]
            r = int(ties[np.argmin(self.basis[ties])])
            self.pivot(r, j, d)
            it += 1


def simplex(c, A, b, basis=None, max_iter: int = 10**6, tol: float = 1e-9,
            refactor_every: int = 64) -> LpResult:
    """Solve the standard-form LP.

    ``basis`` optionally names a feasible starting basis (one column per row);
    otherwise a phase with artificial variables finds one. Raises
    :class:`InfeasibleError` (with a Farkas certificate),
    :class:`UnboundedError` or :class:`IterationLimitError`.
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1).copy()
    cols = _Columns(A)
    m, n = cols.shape
    if c.size != n or b.size != m:
        raise ValueError("shape mismatch between c, A and b")
    sign = np.where(b < 0, -1.0, 1.0)
    dropped: list = []
    iters = 0

    if basis is not None:
        if sp.issparse(cols.A):
            cols.A = sp.csc_matrix(sp.diags(sign) @ cols.A)
        else:
            cols.A = sign[:, None] * cols.A
        tab = _Tableau(cols, b * sign, basis, tol, refactor_every)
        if np.min(tab.xB) < -1e3 * tol * (1.0 + np.max(np.abs(b))):
            raise LpError("starting basis is not primal feasible")
    else:
        b = b * sign
        if sp.issparse(cols.A):
            aug = sp.hstack([sp.diags(sign) @ cols.A, sp.identity(m)], format="csc")
        else:
            aug = np.hstack([sign[:, None] * cols.A, np.eye(m)])
        acols = _Columns(aug)
        tab = _Tableau(acols, b, np.arange(n, n + m), tol, refactor_every)
        c1 = np.concatenate([np.zeros(n), np.ones(m)])
        y1, iters = tab.run(c1, np.ones(n + m, dtype=bool), max_iter)
        infeas = float(c1[tab.basis] @ tab.xB)
        if infeas > 1e3 * tol * (1.0 + np.max(np.abs(b), initial=0.0)):
            raise InfeasibleError(f"infeasible: phase-one residual {infeas:.3e}", y1 * sign)
        # drive zero-level artificials out of the basis, dropping redundant rows
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if tab.basis[r] < n:
                continue
            row = acols.rmatvec(tab.Binv[r])[:n]
            basic = set(tab.basis.tolist())
            cand = [j for j in np.nonzero(np.abs(row) > tol)[0] if j not in basic]
            if cand:
                j = int(cand[0])
                tab.pivot(r, j, tab.Binv @ tab.A.col(j))
            else:
                keep[r] = False
        if not np.all(keep):
            dropped = np.nonzero(~keep)[0].tolist()
        aug_basis = tab.basis[keep]
        cols.A = cols.A[keep, :] * sign[keep][:, None] if not cols.sparse \
            else sp.csc_matrix(sp.diags(sign[keep]) @ cols.A[keep, :])
        tab = _Tableau(cols, b[keep], aug_basis, tol, refactor_every)
        sign = sign[keep]

    y, iters = tab.run(c, np.ones(n, dtype=bool), max_iter, iters)
    tab.refactor()
    x = np.zeros(n)
    x[tab.basis] = np.maximum(tab.xB, 0.0)
    y = c[tab.basis] @ tab.Binv
    duals = np.zeros(m)
    keep_idx = [i for i in range(m) if i not in set(dropped)]
    duals[keep_idx] = y * sign
    return LpResult(x, float(c @ x), duals, tab.basis.copy(), iters, dropped)
