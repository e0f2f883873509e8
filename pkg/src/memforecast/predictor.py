"""Treat one checkpoint's memorized set as a classifier for another's.

A predictor set P forecasts a target set T over the shared training-order
universe: an id in both is a true positive, in P only a false positive, in T
only a false negative. Every pairwise statistic is restricted to the common
support (the training prefix both owners have seen), and 0/0 statistics are
first-class ``None`` values, rendered as empty report cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .core import Suite
from .sets import MemorizedSet, intersection_count
from . import scorer, store


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def universe(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def common_support(a: MemorizedSet, b: MemorizedSet) -> int:
    """The id prefix both owners can be compared on: the smaller universe."""
    return min(a.universe_bound, b.universe_bound)


def confusion(predictor: MemorizedSet, target: MemorizedSet) -> Confusion:
    """Confusion counts of predictor vs target over their common support."""
    if predictor.threshold != target.threshold:
        raise ValueError(
            f"threshold mismatch: predictor at {predictor.threshold}, "
            f"target at {target.threshold}; comparisons are per-threshold")
    bound = common_support(predictor, target)
    tp = intersection_count(predictor, target, bound)
    np_ = predictor.count_below(bound)
    nt = target.count_below(bound)
    fp = np_ - tp
    fn = nt - tp
    tn = bound - (np_ + nt - tp)
    return Confusion(tp, fp, fn, tn)


def precision_recall(c: Confusion) -> tuple[float | None, float | None]:
    """(precision, recall); a zero denominator yields None, never NaN."""
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else None
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else None
    return precision, recall


def phi_correlation(a: MemorizedSet, b: MemorizedSet) -> float | None:
    """Pearson correlation of the two membership indicators (phi coefficient).

    Computed over the common support; None when either indicator is constant
    there. An empty common support is a usage error.
    """
    bound = common_support(a, b)
    if bound < 1:
        raise ValueError("common support is empty; phi is undefined on an "
                         "empty universe")
    n11 = intersection_count(a, b, bound)
    na = a.count_below(bound)
    nb = b.count_below(bound)
    if na in (0, bound) or nb in (0, bound):
        return None
    # Grouped per set so the result is bit-identical under argument swap.
    num = bound * n11 - na * nb
    den = math.sqrt(na * (bound - na)) * math.sqrt(nb * (bound - nb))
    return num / den


@dataclass(frozen=True)
class CorrelationMatrix:
    labels: tuple[str, ...]
    values: tuple[tuple[float | None, ...], ...]

    def to_csv(self) -> str:
        rows = [(label,) + row for label, row in zip(self.labels, self.values)]
        return store.export_csv(("",) + self.labels, rows)


def correlation_matrix(selection: Sequence[MemorizedSet]) -> CorrelationMatrix:
    """Symmetric phi matrix over a selection of sets, pairwise common support."""
    if len(selection) < 2:
        raise ValueError("correlation matrix needs at least two sets")
    k = len(selection)
    values: list[list[float | None]] = [[None] * k for _ in range(k)]
    for i in range(k):
        for j in range(i, k):
            v = phi_correlation(selection[i], selection[j])
            values[i][j] = v
            values[j][i] = v
    labels = tuple(s.label for s in selection)
    return CorrelationMatrix(labels, tuple(tuple(row) for row in values))


def memorized_fraction(s: MemorizedSet) -> float:
    if s.universe_bound <= 0:
        raise ValueError("memorized fraction needs a non-empty universe")
    return len(s) / s.universe_bound


@dataclass(frozen=True)
class SuiteDelta:
    label: str
    fraction_a: float
    fraction_b: float

    @property
    def delta(self) -> float:
        return self.fraction_b - self.fraction_a


@dataclass(frozen=True)
class SuiteComparison:
    rows: tuple[SuiteDelta, ...]
    warnings: tuple[str, ...]

    def to_csv(self) -> str:
        return store.export_csv(
            ("model", "fraction_a", "fraction_b", "delta"),
            [(r.label, r.fraction_a, r.fraction_b, r.delta) for r in self.rows])


def final_memorized_set(suite: Suite, model_name: str,
                        cont_len: int | None = None) -> MemorizedSet:
    """Memorized set of a model's last checkpoint at the suite threshold."""
    model = suite.model(model_name)
    cp = model.final_checkpoint()
    n = cont_len if cont_len is not None else suite.threshold_default.cont_len
    return scorer.load_memorized_set(suite.record_path(cp), n,
                                     id_bound=cp.sequences_seen)


def checkpoint_memorized_set(suite: Suite, model_name: str, label: str,
                             cont_len: int | None = None) -> MemorizedSet:
    model, cp = suite.checkpoint(model_name, label)
    n = cont_len if cont_len is not None else suite.threshold_default.cont_len
    return scorer.load_memorized_set(suite.record_path(cp), n,
                                     id_bound=cp.sequences_seen)


def compare_suites(a: Suite, b: Suite,
                   cont_len: int | None = None) -> SuiteComparison:
    """Per-model memorized-fraction deltas between two suites.

    Models are matched by name; fractions come from each model's final
    checkpoint. Unmatched names are reported as warnings, not errors.
    """
    names_a = [m.name for m in a.models]
    names_b = {m.name for m in b.models}
    rows = []
    warnings = []
    for name in names_a:
        if name not in names_b:
            warnings.append(f"model {name!r} present in suite {a.name!r} "
                            f"but not in {b.name!r}")
            continue
        fa = memorized_fraction(final_memorized_set(a, name, cont_len))
        fb = memorized_fraction(final_memorized_set(b, name, cont_len))
        rows.append(SuiteDelta(name, fa, fb))
    for m in b.models:
        if m.name not in set(names_a):
            warnings.append(f"model {m.name!r} present in suite {b.name!r} "
                            f"but not in {a.name!r}")
    return SuiteComparison(tuple(rows), tuple(warnings))
