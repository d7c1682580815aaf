"""Thin row-wise LP builder on top of the HiGHS simplex."""
from __future__ import annotations

import highspy
import numpy as np

INF = highspy.kHighsInf

_STATUS = {
    highspy.HighsModelStatus.kOptimal: "optimal",
    highspy.HighsModelStatus.kInfeasible: "infeasible",
    highspy.HighsModelStatus.kUnbounded: "unbounded",
    highspy.HighsModelStatus.kModelEmpty: "optimal",
}


class LinearProgram:
    """Collects columns and ranged rows, then hands them to HiGHS in one go."""

    def __init__(self, maximize: bool = False):
        self.maximize = maximize
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.cost: list[float] = []
        self._starts = [0]
        self._index: list[int] = []
        self._value: list[float] = []
        self.row_lo: list[float] = []
        self.row_hi: list[float] = []

    @property
    def num_col(self) -> int:
        return len(self.lb)

    @property
    def num_row(self) -> int:
        return len(self.row_lo)

    def var(self, lb=0.0, ub=INF, cost=0.0) -> int:
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.cost.append(float(cost))
        return len(self.lb) - 1

    def row(self, terms, lo=-INF, hi=INF) -> int:
        """Add lo <= sum(coef * x[j]) <= hi; ``terms`` is an iterable of (j, coef)."""
        merged: dict[int, float] = {}
        for j, c in terms:
            merged[j] = merged.get(j, 0.0) + c
        for j, c in merged.items():
            if c != 0.0:
                self._index.append(j)
                self._value.append(c)
        self._starts.append(len(self._index))
        self.row_lo.append(float(lo))
        self.row_hi.append(float(hi))
        return len(self.row_lo) - 1

    def to_highs(self, **options) -> highspy.Highs:
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        for k, v in options.items():
            h.setOptionValue(k, v)
        lp = highspy.HighsLp()
        lp.num_col_ = self.num_col
        lp.num_row_ = self.num_row
        lp.col_cost_ = np.array(self.cost, dtype=float)
        lp.col_lower_ = np.array(self.lb, dtype=float)
        lp.col_upper_ = np.array(self.ub, dtype=float)
        lp.row_lower_ = np.array(self.row_lo, dtype=float)
        lp.row_upper_ = np.array(self.row_hi, dtype=float)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kRowwise
        lp.a_matrix_.start_ = np.array(self._starts, dtype=np.int32)
        lp.a_matrix_.index_ = np.array(self._index, dtype=np.int32)
        lp.a_matrix_.value_ = np.array(self._value, dtype=float)
        lp.sense_ = highspy.ObjSense.kMaximize if self.maximize else highspy.ObjSense.kMinimize
        h.passModel(lp)
        return h


def run(h: highspy.Highs) -> str:
    """Solve and return one of optimal / infeasible / unbounded / failed."""
    h.run()
    st = h.getModelStatus()
    if st == highspy.HighsModelStatus.kUnboundedOrInfeasible:
        # presolve cannot tell the two apart; settle it without presolve
        h.setOptionValue("presolve", "off")
        h.run()
        h.setOptionValue("presolve", "choose")
        st = h.getModelStatus()
    if st not in _STATUS:
        # a stale warm-start basis occasionally stalls the simplex; retry cold
        h.clearSolver()
        h.run()
        st = h.getModelStatus()
    return _STATUS.get(st, "failed")


def add_row(h: highspy.Highs, idx, val, lo=-INF, hi=INF) -> None:
    h.addRow(float(lo), float(hi), len(idx), np.asarray(idx, dtype=np.int32), np.asarray(val, dtype=float))


def solve_lp(lp: LinearProgram, **options):
    """One-shot solve: returns (status, x, objective)."""
    if lp.num_col == 0:
        return "optimal", np.zeros(0), 0.0
    h = lp.to_highs(**options)
    st = run(h)
    if st != "optimal":
        return st, None, None
    return st, np.array(h.getSolution().col_value), h.getInfo().objective_function_value
