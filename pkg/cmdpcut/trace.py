"""Per-iteration record of a cutting-plane run, exportable as CSV."""

import csv
import io
import logging
import threading

import numpy as np

from .errors import InvalidParameterError

logger = logging.getLogger('cmdpcut.trace')

COLUMNS = ("t", "action", "k", "sigma_min", "lambda", "value_estimate",
           "best_so_far", "gap_vs_lp", "violation_l2")


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


class ConvergenceTrace:
    """
    Rows keyed by strictly increasing iteration t. best_so_far is the running
    minimum of value estimates over subgradient-cut rows.
    """

    def __init__(self, m, label=None):
        self.m = m
        self.label = label
        self.rows = []
        self._best = None
        self._lock = threading.Lock()

    def record(self, t, action, k, sigma_min, lam, value_estimate=None,
               gap_vs_lp=None, violation_l2=None):
        lam = np.asarray(lam, dtype=float).reshape(-1)
        with self._lock:
            if self.rows and t <= self.rows[-1]["t"]:
                raise InvalidParameterError(f"trace rows must have increasing t, got {t} after {self.rows[-1]['t']}")
            if action == "subgradient-cut" and value_estimate is not None:
                if self._best is None or value_estimate < self._best:
                    self._best = float(value_estimate)
            self.rows.append({
                "t": int(t),
                "action": action,
                "k": int(k),
                "sigma_min": float(sigma_min),
                "lambda": lam.copy(),
                "value_estimate": None if value_estimate is None else float(value_estimate),
                "best_so_far": self._best,
                "gap_vs_lp": None if gap_vs_lp is None else float(gap_vs_lp),
                "violation_l2": None if violation_l2 is None else float(violation_l2),
            })

    @property
    def best_so_far(self):
        with self._lock:
            return self._best

    def get_rows(self):
        with self._lock:
            return [dict(row) for row in self.rows]

    def best_series(self):
        """(t, best_so_far) for every subgradient-cut row."""
        with self._lock:
            return [(row["t"], row["best_so_far"]) for row in self.rows
                    if row["action"] == "subgradient-cut" and row["best_so_far"] is not None]

    def get_summary(self):
        with self._lock:
            actions = [row["action"] for row in self.rows]
            last = self.rows[-1] if self.rows else None
            return {
                "iterations": len(self.rows),
                "subgradient_cuts": actions.count("subgradient-cut"),
                "separation_cuts": actions.count("separation-cut"),
                "drops": actions.count("drop"),
                "best_value_estimate": self._best,
                "final_k": None if last is None else last["k"],
            }

    def write_csv(self, handle):
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in self.get_rows():
            writer.writerow([
                _fmt(row["t"]),
                row["action"],
                _fmt(row["k"]),
                _fmt(row["sigma_min"]),
                ";".join(_fmt(x) for x in row["lambda"]),
                _fmt(row["value_estimate"]),
                _fmt(row["best_so_far"]),
                _fmt(row["gap_vs_lp"]),
                _fmt(row["violation_l2"]),
            ])

    def to_csv_text(self):
        buffer = io.StringIO()
        self.write_csv(buffer)
        return buffer.getvalue()

    def save_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as handle:
            self.write_csv(handle)
        logger.debug(f"wrote {len(self.rows)} trace rows to {path}")
