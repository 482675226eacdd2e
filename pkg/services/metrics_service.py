import logging
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.stats import kendalltau, rankdata

from models.report import MetricsReport
from utils.errors import LengthError, RangeError

logger = logging.getLogger(__name__)

TAU_VARIANTS = ("paper", "tau_b")


def _pair(predicted: Sequence[float], actual: Sequence[float], minimum: int = 1):
    p = np.asarray(predicted, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape or p.ndim != 1:
        raise LengthError(f"predicted {p.shape} and actual {a.shape} must be vectors of equal length")
    if len(p) < minimum:
        raise LengthError(f"need at least {minimum} items, got {len(p)}")
    return p, a


def concordant_pairs(predicted: np.ndarray, actual: np.ndarray) -> int:
    """Pairs ordered strictly the same way in both vectors; ties are not concordant"""
    count = 0
    for i in range(len(predicted) - 1):
        dp = np.sign(predicted[i + 1:] - predicted[i])
        da = np.sign(actual[i + 1:] - actual[i])
        count += int(np.count_nonzero(dp * da > 0))
    return count


def kendall_tau(predicted: Sequence[float], actual: Sequence[float], variant: str = "paper") -> float:
    """
    Rank agreement between predicted and actual performance

    `paper`: 2 * C / (n(n-1)/2) - 1 with C the strictly concordant pairs.
    `tau_b`: the tie-corrected coefficient (NaN when a vector is constant).

    Raises:
        LengthError: unequal lengths or fewer than 2 items
    """
    p, a = _pair(predicted, actual, minimum=2)
    if variant == "paper":
        n = len(p)
        return 2.0 * concordant_pairs(p, a) / (n * (n - 1) / 2.0) - 1.0
    if variant == "tau_b":
        tau, _ = kendalltau(p, a)
        return float(tau)
    raise RangeError(f"Unknown tau variant {variant!r}; use one of {TAU_VARIANTS}")


def n_at_k(predicted: Sequence[float], actual: Sequence[float], k: int) -> int:
    """
    Best true rank among the k items with the highest predictions

    Predictions tie by index order; true ranks use competition ranking
    (rank 1 = best actual).

    Raises:
        RangeError: k outside 1..n
    """
    p, a = _pair(predicted, actual)
    if not 1 <= k <= len(p):
        raise RangeError(f"k must lie in 1..{len(p)}, got {k}")
    picks = np.argsort(-p, kind="stable")[:k]
    ranks = rankdata(-a, method="min")
    return int(ranks[picks].min())


class MetricsService:
    """Service for building evaluation reports"""

    def metrics_report(
        self,
        predicted: Sequence[float],
        actual: Sequence[float],
        ks: Sequence[int] = (5, 10),
    ) -> MetricsReport:
        """Tau (both variants) and N@K for every requested k; k above n is clipped to n"""
        p, a = _pair(predicted, actual, minimum=2)
        n = len(p)
        scores: Dict[str, int] = {}
        for k in ks:
            if k < 1:
                raise RangeError(f"k must be positive, got {k}")
            if k > n:
                logger.warning(f"N@{k} requested on {n} items; using k={n}")
            scores[str(k)] = n_at_k(p, a, min(k, n))

        tau_b: Optional[float] = kendall_tau(p, a, "tau_b")
        if tau_b is not None and np.isnan(tau_b):
            tau_b = None
        report = MetricsReport(tau_paper=kendall_tau(p, a, "paper"), tau_b=tau_b, n_at_k=scores, n_test=n)
        logger.info(f"tau_paper={report.tau_paper:.4f} tau_b={report.tau_b} n_at_k={report.n_at_k} n_test={n}")
        return report
