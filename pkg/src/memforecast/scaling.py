"""Compute-cost accounting and predictor selection against a fixed target.

Training cost is the standard 6 flops per parameter per token, computed in
exact integer arithmetic. A predictor grid attaches costs and forecast
quality (precision/recall vs one fixed target) to every (model, checkpoint);
the equi-compute frontier then picks, per budget, the affordable row with the
best recall — recall because a missed memorization is the expensive failure
mode, a false alarm merely wastes a cheap run.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import ModelSpec, Suite
from . import predictor as predictor_eval
from . import store

FLOPS_PER_PARAM_TOKEN = 6
COST_LIMIT = 1 << 128

GRID_COLUMNS = ("model", "params", "checkpoint", "sequences_seen", "cost",
                "precision", "recall")


def training_cost(model: ModelSpec, sequences_seen: int) -> int:
    """Exact flops to train ``model`` through ``sequences_seen`` sequences."""
    if sequences_seen <= 0:
        raise ValueError(f"sequences_seen must be positive, got {sequences_seen}")
    if model.params <= 0 or model.tokens_per_sequence <= 0:
        raise ValueError("model params and tokens_per_sequence must be positive")
    cost = (FLOPS_PER_PARAM_TOKEN * model.params
            * sequences_seen * model.tokens_per_sequence)
    if cost >= COST_LIMIT:
        raise OverflowError(f"training cost {cost} exceeds 128-bit range")
    return cost


@dataclass(frozen=True)
class GridRow:
    model: str
    params: int
    checkpoint: str
    sequences_seen: int
    cost: int
    precision: float | None
    recall: float | None

    def as_tuple(self) -> tuple:
        return (self.model, self.params, self.checkpoint, self.sequences_seen,
                self.cost, self.precision, self.recall)


@dataclass(frozen=True)
class PredictorGrid:
    rows: tuple[GridRow, ...]
    problems: tuple[str, ...] = ()

    def to_csv(self) -> str:
        return grid_to_csv(self.rows)


def predictor_grid(suite: Suite, target: tuple[str, str],
                   cont_len: int | None = None) -> PredictorGrid:
    """One row per (model, checkpoint) in the suite, excluding the target.

    Rows whose record files are missing or unreadable are omitted, each
    reported in ``problems``.
    """
    from . import scorer
    from .core import FormatError

    n = cont_len if cont_len is not None else suite.threshold_default.cont_len
    target_set = predictor_eval.checkpoint_memorized_set(
        suite, target[0], target[1], n)
    rows: list[GridRow] = []
    problems: list[str] = []
    for model in suite.models:
        for cp in model.checkpoints:
            if (model.name, cp.label) == target:
                continue
            try:
                pred = scorer.load_memorized_set(suite.record_path(cp), n,
                                                 id_bound=cp.sequences_seen)
            except (OSError, FormatError) as exc:
                problems.append(f"{model.name}@{cp.label}: {exc}")
                continue
            c = predictor_eval.confusion(pred, target_set)
            precision, recall = predictor_eval.precision_recall(c)
            rows.append(GridRow(model.name, model.params, cp.label,
                                cp.sequences_seen,
                                training_cost(model, cp.sequences_seen),
                                precision, recall))
    return PredictorGrid(tuple(rows), tuple(problems))


def grid_to_csv(rows: Iterable[GridRow]) -> str:
    return store.export_csv(GRID_COLUMNS, [r.as_tuple() for r in rows])


def grid_from_csv(text: str) -> list[GridRow]:
    header, body = store.parse_csv(text)
    if tuple(header) != GRID_COLUMNS:
        raise ValueError(f"grid CSV columns {header} do not match {GRID_COLUMNS}")
    rows = []
    for cells in body:
        model, params, checkpoint, seen, cost, precision, recall = cells
        rows.append(GridRow(model, int(params), checkpoint, int(seen), int(cost),
                            float(precision) if precision else None,
                            float(recall) if recall else None))
    return rows


@dataclass(frozen=True)
class FrontierEntry:
    budget: int
    row: GridRow | None  # None: no grid row is affordable at this budget

    @property
    def feasible(self) -> bool:
        return self.row is not None


def _better(candidate: GridRow, incumbent: GridRow | None) -> bool:
    if incumbent is None:
        return True
    # Maximal recall; ties broken by lower cost, then fewer params.
    return ((candidate.recall, -candidate.cost, -candidate.params)
            > (incumbent.recall, -incumbent.cost, -incumbent.params))


def best_affordable(rows: Iterable[GridRow], budget: int) -> GridRow | None:
    best: GridRow | None = None
    for row in rows:
        if row.cost <= budget and row.recall is not None and _better(row, best):
            best = row
    return best


def equi_compute_frontier(rows: Sequence[GridRow],
                          budgets: Iterable[int]) -> list[FrontierEntry]:
    """Per budget, the affordable row with the best defined recall.

    Budgets are deduplicated and sorted ascending; the selected recall is
    non-decreasing along the result. A budget below every row's cost yields
    an infeasible entry.
    """
    if not rows:
        raise ValueError("frontier needs a non-empty grid")
    ordered = sorted(set(int(b) for b in budgets))
    return [FrontierEntry(b, best_affordable(rows, b)) for b in ordered]


def frontier_to_csv(entries: Sequence[FrontierEntry]) -> str:
    cols = ("budget", "feasible") + GRID_COLUMNS
    out = []
    for e in entries:
        row = e.row.as_tuple() if e.row else (None,) * len(GRID_COLUMNS)
        out.append((e.budget, e.feasible) + row)
    return store.export_csv(cols, out)


@dataclass(frozen=True)
class Recommendation:
    budget: int
    min_recall: float | None
    row: GridRow | None            # best affordable at the budget, if any
    feasible: bool                 # meets the budget and any recall floor
    # Cheapest grid row reaching min_recall, when the budget itself cannot.
    smallest_sufficient: GridRow | None = None

    def as_dict(self) -> dict:
        def row_dict(r: GridRow | None):
            return None if r is None else {
                "model": r.model, "params": r.params, "checkpoint": r.checkpoint,
                "sequences_seen": r.sequences_seen, "cost": r.cost,
                "precision": r.precision, "recall": r.recall,
            }
        return {
            "budget": self.budget,
            "min_recall": self.min_recall,
            "feasible": self.feasible,
            "row": row_dict(self.row),
            "smallest_sufficient_budget":
                None if self.smallest_sufficient is None
                else self.smallest_sufficient.cost,
            "smallest_sufficient_row": row_dict(self.smallest_sufficient),
        }


def recommend(budget: int, rows: Sequence[GridRow],
              min_recall: float | None = None) -> Recommendation:
    """Pick the predictor to train for a budget, optionally with a recall floor.

    When no affordable row reaches ``min_recall``, the recommendation is
    infeasible and carries the cheapest row (hence smallest budget) anywhere
    on the grid that does reach it, or None if none achieves it.
    """
    best = best_affordable(rows, budget)
    if min_recall is None:
        return Recommendation(budget, None, best, best is not None)
    if best is not None and best.recall is not None and best.recall >= min_recall:
        return Recommendation(budget, min_recall, best, True)
    sufficient = [r for r in rows
                  if r.recall is not None and r.recall >= min_recall]
    cheapest = min(sufficient, key=lambda r: (r.cost, r.params), default=None)
    return Recommendation(budget, min_recall, best, False,
                          smallest_sufficient=cheapest)


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    residuals: tuple[float, ...]
    max_abs_residual: float
    dropped: int

    def predict(self, cost) -> np.ndarray:
        """Metric value(s) the fit extrapolates to at the given cost(s)."""
        logc = np.log10(np.asarray(cost, dtype=float))
        return 10.0 ** (self.slope * logc + self.intercept)


def loglog_fit(points: Iterable[tuple[float, float]]) -> LogLogFit:
    """Least-squares line in log10-log10 space, residuals reported.

    Residuals are in log10 units of the metric, so deviations from a pure
    power law are quantified rather than assumed away. Points with a
    non-positive metric are dropped with a warning.
    """
    pts = [(float(c), float(m)) for c, m in points]
    kept = [(c, m) for c, m in pts if m > 0 and c > 0]
    dropped = len(pts) - len(kept)
    if dropped:
        warnings.warn(f"dropped {dropped} non-positive point(s) from log-log fit",
                      stacklevel=2)
    if len(kept) < 2:
        raise ValueError(f"log-log fit needs >= 2 positive points, have {len(kept)}")
    x = np.log10([c for c, _ in kept])
    y = np.log10([m for _, m in kept])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return LogLogFit(float(slope), float(intercept),
                     tuple(float(r) for r in resid),
                     float(np.max(np.abs(resid))), dropped)


@dataclass(frozen=True)
class Deviation:
    row: GridRow
    observed: float
    extrapolated: float

    @property
    def deviation(self) -> float:
        return self.observed - self.extrapolated


def emergence_deviation(small_rows: Sequence[GridRow],
                        large_rows: Sequence[GridRow],
                        metric: str = "recall") -> list[Deviation]:
    """How far each large-model point sits from the small-model extrapolation.

    Positive deviation means the large model memorizes more than the
    small-model trend predicts (in metric units, not log units).
    """
    def value(row: GridRow) -> float | None:
        return getattr(row, metric)

    fit = loglog_fit([(r.cost, value(r)) for r in small_rows
                      if value(r) is not None])
    out = []
    for row in large_rows:
        v = value(row)
        if v is None:
            continue
        out.append(Deviation(row, v, float(fit.predict(row.cost))))
    return out
