"""Two-phase revised simplex with an explicit basis inverse.

Float mode keeps ``A`` sparse for pricing and ``B^-1`` dense, refactoring
periodically; rows are equilibrated and the ratio test is Harris' two-pass
variant.  Pricing uses Devex reference weights, falling back to Bland's
rule during runs of degenerate pivots so the method cannot cycle.  Exact
mode runs the same iteration on ``Fraction`` object arrays under Bland's
rule throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg.blas import dger

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7
COST_TOL = 1e-9
PIVOT_TOL = 1e-9
HARRIS_TOL = 1e-9
REFACTOR_EVERY = 100
DEGENERATE_STREAK = 20


class SimplexError(RuntimeError):
    pass


class InfeasibleError(SimplexError):
    pass


class UnboundedError(SimplexError):
    pass


class IterationLimitError(SimplexError):
    def __init__(self, limit: int, objective: float):
        self.limit = limit
        self.objective = objective
        super().__init__(f"iteration limit {limit} exceeded (last objective {objective})")


@dataclass
class SimplexResult:
    x: np.ndarray
    objective: float | Fraction
    iterations: int
    exact: bool
    basis: list[int]


Row = Sequence[tuple[int, float | Fraction]]


class _Tableau:
    """Standard-form problem plus the current basis; shared by both phases."""

    def __init__(self, c, rows: Sequence[Row], senses: Sequence[str], b, n: int, exact: bool):
        self.exact = exact
        self.n = n
        zero = Fraction(0) if exact else 0.0
        one = Fraction(1) if exact else 1.0
        conv = Fraction if exact else float
        m = len(rows)
        entries: list[tuple[int, int, object]] = []
        rhs = []
        norm_senses = []
        for r, (row, sense, br) in enumerate(zip(rows, senses, b)):
            br = conv(br)
            scale = one
            if not exact and row:
                scale = 1.0 / max(abs(float(v)) for _, v in row)
            if br < 0:
                scale = -scale
                sense = {"<=": ">=", ">=": "<=", "=": "="}[sense]
            for col, v in row:
                entries.append((r, col, scale * conv(v)))
            rhs.append(scale * br)
            norm_senses.append(sense)

        slack_col = n
        art_start = n + sum(1 for s in norm_senses if s != "=")
        art_next = art_start
        basis: list[int] = []
        for r, sense in enumerate(norm_senses):
            if sense == "<=":
                entries.append((r, slack_col, one))
                basis.append(slack_col)
                slack_col += 1
            elif sense == ">=":
                entries.append((r, slack_col, -one))
                slack_col += 1
                entries.append((r, art_next, one))
                basis.append(art_next)
                art_next += 1
            else:
                entries.append((r, art_next, one))
                basis.append(art_next)
                art_next += 1
        ncols = art_next
        self.m, self.ncols = m, ncols
        self.art_start = art_start
        if exact:
            A = np.full((m, ncols), zero, dtype=object)
            for r, col, v in entries:
                A[r, col] = A[r, col] + v
            self.A = A
            self.AT = A.T
            self.b = np.array(rhs, dtype=object)
            self.cost = np.array([conv(v) for v in c] + [zero] * (ncols - n), dtype=object)
        else:
            if entries:
                r_idx, c_idx, vals = zip(*entries)
            else:
                r_idx, c_idx, vals = (), (), ()
            A = sp.csc_matrix((np.array(vals, dtype=float), (r_idx, c_idx)), shape=(m, ncols))
            # column equilibration: x = col_scale * x_scaled
            colmax = abs(A).max(axis=0).toarray().ravel()
            self.col_scale = np.where(colmax > 0, 1.0 / np.where(colmax > 0, colmax, 1.0), 1.0)
            self.A = (A @ sp.diags(self.col_scale)).tocsc()
            self.AT = self.A.T.tocsr()
            self.b = np.array(rhs, dtype=float)
            self.cost = np.concatenate([np.asarray(c, dtype=float), np.zeros(ncols - n)]) * self.col_scale
        self.zero = zero
        self.basis = basis
        self._identity_start()
        self.iterations = 0

    def _identity_start(self):
        if self.exact:
            self.Binv = np.full((self.m, self.m), self.zero, dtype=object)
            for i in range(self.m):
                self.Binv[i, i] = Fraction(1)
        else:
            self.Binv = np.asfortranarray(np.eye(self.m))
        self.xB = self.b.copy()

    def try_crash(self, crash: Sequence[tuple[int, int]]) -> bool:
        """Swap in ``(row, column)`` basics; keep them only if primal feasible."""
        if self.exact or not crash:
            return False
        saved = list(self.basis)
        for r, col in crash:
            self.basis[r] = col
        if len(set(self.basis)) != self.m:
            self.basis = saved
            return False
        try:
            self.refactor()
        except SimplexError:
            ok = False
        else:
            ok = bool(self.xB.min() >= -FEAS_TOL)
        if not ok:
            self.basis = saved
            self._identity_start()
            return False
        self.xB = np.maximum(self.xB, 0.0)
        return True

    # -- linear algebra helpers -----------------------------------------
    def column(self, q: int):
        if self.exact:
            return self.A[:, q]
        return self.A[:, [q]].toarray().ravel()

    def refactor(self):
        if self.exact:
            return
        B = self.A[:, self.basis].toarray()
        try:
            self.Binv = np.asfortranarray(np.linalg.inv(B))
        except np.linalg.LinAlgError as exc:
            raise SimplexError("basis matrix is numerically singular") from exc
        self.xB = self.Binv @ self.b
        self.xB[np.abs(self.xB) < 1e-13] = 0.0

    def reduced_costs(self, cost):
        pi = cost[self.basis] @ self.Binv
        if self.exact:
            return cost - self.AT.dot(pi)
        return cost - self.AT @ pi

    def pivot(self, r: int, q: int, alpha):
        piv = alpha[r]
        theta = self.xB[r] / piv
        self.Binv[r, :] = self.Binv[r, :] / piv
        col = alpha.copy()
        col[r] = self.zero
        if self.exact:
            self.Binv -= np.outer(col, self.Binv[r, :])
        else:
            self.Binv = dger(-1.0, col, np.array(self.Binv[r, :]), a=self.Binv, overwrite_a=1)
        self.xB = self.xB - theta * col
        self.xB[r] = theta
        self.basis[r] = q
        if not self.exact:
            self.xB[np.abs(self.xB) < 1e-13] = 0.0

    def objective(self, cost):
        return cost[self.basis] @ self.xB

    # -- main loop ------------------------------------------------------
    def run(self, cost, max_iter: int):
        """Iterate to optimality; artificial columns never (re-)enter."""
        if self.exact:
            self._run_exact(cost, max_iter)
        else:
            self._run_float(cost, max_iter)

    def _run_exact(self, cost, max_iter: int):
        limit = self.art_start
        while True:
            if self.iterations >= max_iter:
                raise IterationLimitError(max_iter, float(self.objective(cost)))
            d = self.reduced_costs(cost)
            basic = set(self.basis)
            q = next((j for j in range(limit) if j not in basic and d[j] < 0), None)
            if q is None:
                return
            alpha = self.Binv @ self.column(q)
            ratios = [(self.xB[i] / alpha[i], self.basis[i], i) for i in range(self.m) if alpha[i] > 0]
            if not ratios:
                raise UnboundedError(f"unbounded direction on column {q}")
            r = min(ratios)[2]
            self.pivot(r, q, alpha)
            self.iterations += 1

    def _alpha(self, q: int):
        A = self.A
        lo, hi = A.indptr[q], A.indptr[q + 1]
        return self.Binv[:, A.indices[lo:hi]] @ A.data[lo:hi]

    def _run_float(self, cost, max_iter: int):
        limit = self.art_start
        degenerate = 0
        bland = False
        since_refactor = 0
        weights = np.ones(self.ncols)  # Devex reference weights
        d = None
        while True:
            if self.iterations >= max_iter:
                raise IterationLimitError(max_iter, float(self.objective(cost)))
            if since_refactor >= REFACTOR_EVERY:
                self.refactor()
                since_refactor = 0
                d = None
            if d is None:
                d = self.reduced_costs(cost)
                d[self.basis] = 0.0
            dl = d[:limit]
            if bland:
                cand = np.nonzero(dl < -COST_TOL)[0]
                if len(cand) == 0:
                    return
                q = int(cand[0])
            else:
                neg = dl < -COST_TOL
                if not neg.any():
                    return
                score = np.where(neg, dl * dl / weights[:limit], 0.0)
                q = int(np.argmax(score))
            alpha = self._alpha(q)
            rows = np.nonzero(alpha > PIVOT_TOL)[0]
            if len(rows) == 0:
                raise UnboundedError(f"unbounded direction on column {q}")
            xb = np.maximum(self.xB[rows], 0.0)
            ar = alpha[rows]
            ratios = xb / ar
            if bland:
                tmin = ratios.min()
                ties = rows[ratios <= tmin + 1e-12 * max(1.0, tmin)]
                r = int(min(ties, key=lambda i: self.basis[i]))
            else:
                bound = ((xb + HARRIS_TOL) / ar).min()
                ok = ratios <= bound
                r = int(rows[ok][np.argmax(ar[ok])])
            ar_piv = alpha[r]
            step = max(self.xB[r], 0.0) / ar_piv
            prow = (self.AT @ self.Binv[r, :]) / ar_piv
            # reduced costs and Devex weights follow from the pivot row
            d -= d[q] * prow
            wq = weights[q]
            leaving = self.basis[r]
            np.maximum(weights, prow * prow * wq, out=weights)
            weights[leaving] = max(wq / (ar_piv * ar_piv), 1.0)
            weights[q] = 1.0
            self.pivot(r, q, alpha)
            d[self.basis] = 0.0
            self.iterations += 1
            since_refactor += 1
            if step <= 1e-12:
                degenerate += 1
                if degenerate >= DEGENERATE_STREAK:
                    bland = True
            else:
                degenerate = 0
                bland = False


def simplex(
    c,
    rows: Sequence[Row],
    senses: Sequence[str],
    b,
    *,
    exact: bool = False,
    max_iter: int | None = None,
    crash: Sequence[tuple[int, int]] | None = None,
) -> SimplexResult:
    """Minimise ``c @ x`` subject to ``rows`` (sparse) ``senses`` ``b``, ``x >= 0``.

    ``rows[r]`` lists ``(column, coefficient)`` pairs; ``senses`` entries are
    ``"<="``, ``">="`` or ``"="``.  ``crash`` optionally proposes starting
    basics as ``(row, column)`` pairs; it is ignored unless the resulting
    basis is nonsingular and primal feasible.
    """
    n = len(c)
    if n == 0:
        raise SimplexError("model has no variables")
    if not (len(rows) == len(senses) == len(b)):
        raise ValueError("rows, senses and b differ in length")
    tab = _Tableau(c, rows, senses, b, n, exact)
    if max_iter is None:
        max_iter = 50 * (tab.m + tab.ncols) + 1000
    crashed = tab.try_crash(crash or ())
    log.debug("simplex: %d rows, %d columns, crash %s", tab.m, tab.ncols, "used" if crashed else "unused")

    if any(j >= tab.art_start for j in tab.basis):
        phase1 = np.array([tab.zero] * tab.ncols, dtype=object if exact else float)
        phase1[tab.art_start :] = Fraction(1) if exact else 1.0
        tab.run(phase1, max_iter)
        if not exact:
            tab.refactor()
        infeas = tab.objective(phase1)
        if infeas > (0 if exact else FEAS_TOL):
            raise InfeasibleError(f"phase I ended with infeasibility {float(infeas):.3g}")
        _drive_out_artificials(tab)
    tab.run(tab.cost, max_iter)
    if not exact:
        tab.refactor()
    x = np.array([tab.zero] * tab.ncols, dtype=object if exact else float)
    for i, j in enumerate(tab.basis):
        x[j] = tab.xB[i]
    if not exact:
        x = np.maximum(x * tab.col_scale, 0.0)
        x[x < 1e-12] = 0.0
    xs = x[:n]
    obj = sum((cv * xv for cv, xv in zip(c, xs)), tab.zero)
    log.debug("simplex: %d iterations, objective %s", tab.iterations, obj)
    return SimplexResult(xs, obj, tab.iterations, exact, list(tab.basis))


def _drive_out_artificials(tab: _Tableau):
    tol = 0 if tab.exact else PIVOT_TOL
    for r in range(tab.m):
        if tab.basis[r] < tab.art_start:
            continue
        row = tab.AT.dot(tab.Binv[r, :]) if tab.exact else tab.AT @ tab.Binv[r, :]
        basic = set(tab.basis)
        best, best_val = None, tol
        for j in range(tab.art_start):
            if j in basic:
                continue
            v = abs(row[j])
            if v > best_val:
                best, best_val = j, v
        if best is None:
            continue  # redundant row; the artificial stays basic at zero
        alpha = tab.Binv @ tab.column(best)
        tab.pivot(r, best, alpha)
