"""
Dense two-phase tableau simplex with Bland's anti-cycling rule.

Solves  max/min c^T x  s.t.  A_eq x = b_eq, A_ge x >= b_ge, A_le x <= b_le, x >= 0.
Meant for desk-scale problems (a few thousand columns at most).
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, IterationLimitError

logger = logging.getLogger('cmdpcut.simplex')

PIVOT_TOL = 1e-9
REDUCED_COST_TOL = 1e-10
FEASIBILITY_TOL = 1e-8

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass(frozen=True, eq=False)
class SimplexResult:
    status: str
    x: np.ndarray = None
    objective: float = None
    pivots: int = 0


def _block(matrix, rhs, n):
    if matrix is None:
        return np.zeros((0, n)), np.zeros(0)
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    if matrix.shape[1] != n or matrix.shape[0] != rhs.shape[0]:
        raise DimensionError(f"constraint block {matrix.shape} does not match {n} variables / {rhs.shape[0]} rows")
    return matrix, rhs


class DenseSimplex:
    """Tableau rows are constraints, last row is the objective row, last column the rhs."""

    def __init__(self, max_pivots=None):
        self.max_pivots = max_pivots
        self.pivots = 0

    @staticmethod
    def _pivot(tableau, row, col):
        tableau[row] /= tableau[row, col]
        factors = tableau[:, col].copy()
        factors[row] = 0.0
        tableau -= np.outer(factors, tableau[row])

    @staticmethod
    def _entering(z_row, allowed):
        # Bland: lowest-index column with negative reduced cost
        candidates = np.flatnonzero((z_row[:-1] < -REDUCED_COST_TOL) & allowed)
        return int(candidates[0]) if candidates.size else -1

    @staticmethod
    def _leaving(tableau, col, basis):
        column = tableau[:-1, col]
        rows = np.flatnonzero(column > PIVOT_TOL)
        if rows.size == 0:
            return -1
        ratios = tableau[rows, -1] / column[rows]
        best = ratios.min()
        tied = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        # Bland: among ties, the row whose basic variable has the lowest index
        return int(min(tied, key=lambda r: basis[r]))

    def _iterate(self, tableau, basis, allowed, limit):
        while True:
            col = self._entering(tableau[-1], allowed)
            if col == -1:
                return OPTIMAL
            row = self._leaving(tableau, col, basis)
            if row == -1:
                return UNBOUNDED
            self._pivot(tableau, row, col)
            basis[row] = col
            self.pivots += 1
            if self.pivots > limit:
                raise IterationLimitError(f"simplex exceeded {limit} pivots")

    def solve(self, c, a_eq=None, b_eq=None, a_ge=None, b_ge=None, a_le=None, b_le=None, maximize=True):
        c = np.asarray(c, dtype=float).reshape(-1)
        n = c.shape[0]
        blocks = [_block(a_eq, b_eq, n), _block(a_ge, b_ge, n), _block(a_le, b_le, n)]
        senses = ["="] * blocks[0][0].shape[0] + [">="] * blocks[1][0].shape[0] + ["<="] * blocks[2][0].shape[0]
        a_matrix = np.vstack([block[0] for block in blocks])
        rhs = np.concatenate([block[1] for block in blocks])

        # nonnegative rhs: flip rows and their sense
        negative = rhs < 0
        a_matrix[negative] *= -1
        rhs[negative] *= -1
        flip = {"=": "=", ">=": "<=", "<=": ">="}
        senses = [flip[s] if neg else s for s, neg in zip(senses, negative)]

        # columns: x, one slack per inequality, one artificial per >= or = row
        n_rows = a_matrix.shape[0]
        n_slack = sum(s != "=" for s in senses)
        n_art = sum(s != "<=" for s in senses)
        width = n + n_slack + n_art
        art_start = n + n_slack
        limit = self.max_pivots or 50 * (n_rows + width + 1)
        self.pivots = 0

        # last row is the objective, last column the rhs
        tableau = np.zeros((n_rows + 1, width + 1))
        tableau[:n_rows, :n] = a_matrix
        tableau[:n_rows, -1] = rhs
        basis = []
        slack = n
        art = art_start
        for i, sense in enumerate(senses):
            if sense == "<=":
                tableau[i, slack] = 1.0
                basis.append(slack)
                slack += 1
            elif sense == ">=":
                tableau[i, slack] = -1.0
                tableau[i, art] = 1.0
                basis.append(art)
                slack += 1
                art += 1
            else:
                tableau[i, art] = 1.0
                basis.append(art)
                art += 1

        # phase I: max -sum(artificials)
        # price out the basic artificials so the objective row is reduced
        for row, var in enumerate(basis):
            if var >= art_start:
                tableau[-1] -= tableau[row]
        tableau[-1, art_start:width] = 0.0
        everything = np.ones(width, dtype=bool)
        self._iterate(tableau, basis, everything, limit)
        if tableau[-1, -1] < -FEASIBILITY_TOL * max(1.0, float(rhs.sum())):
            logger.debug(f"phase I residual {-tableau[-1, -1]:.3g}: infeasible")
            return SimplexResult(INFEASIBLE, pivots=self.pivots)

        # drive remaining artificials out of the basis or drop redundant rows
        keep_rows = []
        for row in range(n_rows):
            if basis[row] >= art_start:
                pivots = np.flatnonzero(np.abs(tableau[row, :art_start]) > PIVOT_TOL)
                if pivots.size:
                    self._pivot(tableau, row, int(pivots[0]))
                    basis[row] = int(pivots[0])
                else:
                    continue
            keep_rows.append(row)
        if len(keep_rows) < n_rows:
            logger.debug(f"dropping {n_rows - len(keep_rows)} redundant row(s)")
        tableau = np.vstack([tableau[keep_rows], tableau[-1:]])
        basis = [basis[row] for row in keep_rows]
        tableau = np.hstack([tableau[:, :art_start], tableau[:, -1:]])

        # phase II: reprice the original cost over the feasible basis
        cost = c if maximize else -c
        tableau[-1] = 0.0
        tableau[-1, :n] = -cost
        for row, var in enumerate(basis):
            if var < n and cost[var] != 0.0:
                tableau[-1] += cost[var] * tableau[row]
        status = self._iterate(tableau, basis, np.ones(art_start, dtype=bool), limit)
        if status == UNBOUNDED:
            return SimplexResult(UNBOUNDED, pivots=self.pivots)

        solution = np.zeros(art_start)
        for row, var in enumerate(basis):
            solution[var] = tableau[row, -1]
        x = np.clip(solution[:n], 0.0, None)
        objective = float(tableau[-1, -1]) if maximize else -float(tableau[-1, -1])
        logger.debug(f"simplex optimal after {self.pivots} pivots, objective {objective:.10g}")
        return SimplexResult(OPTIMAL, x=x, objective=objective, pivots=self.pivots)
