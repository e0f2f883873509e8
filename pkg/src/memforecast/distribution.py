"""Distribution of memorization scores: histogram, spike at 1, tail shape.

Scores at threshold N take exactly N+1 values, so everything here is discrete:
the histogram has one bin per attainable score, and the tail fits are discrete
maximum-likelihood fits over bin indices. The mass at score 1 (the spike) is
excluded from both tail fits and reported separately — it is the diagnostic
quantity, not part of the smooth tail.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.optimize import minimize_scalar

from .core import ScoreParams
from . import store

# Scores at or above this fraction of N (and below 1) form the default tail.
DEFAULT_TAIL_MIN = 0.5


@dataclass(frozen=True)
class ScoreHistogram:
    """Counts over the N+1 attainable scores 0/N .. N/N."""

    cont_len: int
    counts: np.ndarray

    def __post_init__(self):
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if counts.shape != (self.cont_len + 1,):
            raise ValueError(
                f"histogram needs {self.cont_len + 1} bins, got {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("bin counts must be non-negative")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ScoreHistogram") -> "ScoreHistogram":
        if other.cont_len != self.cont_len:
            raise ValueError("cannot merge histograms at different thresholds")
        return ScoreHistogram(self.cont_len, self.counts + other.counts)

    def to_csv(self) -> str:
        rows = [(b, b / self.cont_len, int(c))
                for b, c in enumerate(self.counts)]
        return store.export_csv(("matched_tokens", "score", "count"), rows)


def histogram_from_masks(masks: np.ndarray, cont_len: int) -> ScoreHistogram:
    """Bin an array of 64-bit match masks by popcount of the low N bits."""
    masks = np.asarray(masks, dtype=np.uint64)
    matched = np.bitwise_count(masks & np.uint64((1 << cont_len) - 1))
    counts = np.bincount(matched.astype(np.int64), minlength=cont_len + 1)
    return ScoreHistogram(cont_len, counts)


def histogram(records: Iterable, params: ScoreParams) -> ScoreHistogram:
    """Histogram of scores for a stream of match records.

    Accepts an iterable of MatchRecord or of (seq_ids, masks) array chunks;
    accumulation is bin-wise addition, so any chunking or ordering of the
    input yields the same result.
    """
    n = params.cont_len
    total = np.zeros(n + 1, dtype=np.int64)
    pending: list[int] = []
    for item in records:
        if isinstance(item, tuple):
            _, masks = item
            total += histogram_from_masks(masks, n).counts
        else:
            if item.valid_bits < n:
                raise ValueError(
                    f"threshold {n} exceeds record's {item.valid_bits} valid bits")
            pending.append(item.match_mask)
            if len(pending) >= 1 << 16:
                total += histogram_from_masks(
                    np.array(pending, dtype=np.uint64), n).counts
                pending.clear()
    if pending:
        total += histogram_from_masks(np.array(pending, dtype=np.uint64), n).counts
    return ScoreHistogram(n, total)


def spike_mass(h: ScoreHistogram) -> float:
    """Probability mass at score exactly 1."""
    if h.total == 0:
        raise ValueError("spike mass of an empty histogram is undefined")
    return int(h.counts[h.cont_len]) / h.total


@dataclass(frozen=True)
class TailFitReport:
    spike_mass: float
    exp_rate: float        # per-bin decay rate lambda; geometric ratio e^-lambda
    pl_exponent: float     # Zipf exponent over absolute bin index
    loglik_exp: float
    loglik_pl: float
    preferred: str         # "exponential" | "power-law"
    tail_lo: int           # first bin of the fitted tail (score tail_lo/N)
    tail_hi: int           # last bin (always N-1; the spike bin is excluded)
    tail_total: int

    def as_dict(self) -> dict:
        return {
            "spike_mass": self.spike_mass,
            "exp_rate": self.exp_rate,
            "pl_exponent": self.pl_exponent,
            "loglik_exp": self.loglik_exp,
            "loglik_pl": self.loglik_pl,
            "preferred": self.preferred,
            "tail_lo": self.tail_lo,
            "tail_hi": self.tail_hi,
            "tail_total": self.tail_total,
        }


def _mle_concave(stat_per_bin: np.ndarray, counts: np.ndarray):
    """MLE for p(b) proportional to exp(-theta * stat(b)) on a finite support.

    One-parameter exponential family, so the log-likelihood is concave in
    theta and the scalar maximizer is unique; Brent search is deterministic.
    Returns (theta_hat, loglik).
    """
    n = counts.sum()
    s_mean = float((counts * stat_per_bin).sum() / n)

    def neg_loglik(theta: float) -> float:
        z = -theta * stat_per_bin
        zmax = z.max()
        log_norm = zmax + np.log(np.exp(z - zmax).sum())
        return theta * s_mean + log_norm

    res = minimize_scalar(neg_loglik, bracket=(-1.0, 1.0), method="brent",
                          options={"xtol": 1e-12})
    theta = float(res.x)
    return theta, float(-res.fun * n)


def tail_fit(h: ScoreHistogram, tail_min: float = DEFAULT_TAIL_MIN) -> TailFitReport:
    """Fit geometric-decay and Zipf models to the tail bins by likelihood.

    The tail is the bins with tail_min <= score < 1. Both fits are discrete
    truncated MLEs with one free parameter each, so the larger log-likelihood
    directly identifies the preferred model. Needs at least two non-empty
    tail bins to identify a decay rate.
    """
    n = h.cont_len
    if not 0 < tail_min < 1:
        raise ValueError(f"tail_min must be in (0, 1), got {tail_min}")
    lo = int(np.ceil(tail_min * n))
    lo = max(lo, 1)
    hi = n - 1
    if lo > hi:
        raise ValueError(
            f"tail range is empty: first tail bin {lo} exceeds last non-spike "
            f"bin {hi}")
    bins = np.arange(lo, hi + 1)
    counts = h.counts[lo: hi + 1].astype(np.float64)
    nonempty = int((counts > 0).sum())
    if nonempty < 2:
        occupied = [int(b) for b, c in zip(bins, counts) if c > 0]
        raise ValueError(
            f"insufficient tail support in bins {lo}..{hi}: only "
            f"{occupied or 'none'} non-empty; need at least 2 to fit a decay")

    offsets = (bins - lo).astype(np.float64)
    rate, loglik_exp = _mle_concave(offsets, counts)
    log_bins = np.log(bins.astype(np.float64))
    exponent, loglik_pl = _mle_concave(log_bins, counts)

    preferred = "power-law" if loglik_pl > loglik_exp else "exponential"
    return TailFitReport(
        spike_mass=spike_mass(h),
        exp_rate=rate,
        pl_exponent=exponent,
        loglik_exp=loglik_exp,
        loglik_pl=loglik_pl,
        preferred=preferred,
        tail_lo=lo,
        tail_hi=hi,
        tail_total=int(counts.sum()),
    )
