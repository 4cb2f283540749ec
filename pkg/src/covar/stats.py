"""Per-sample summary statistics of softmax probability rows.

Everything downstream runs on four numbers per sample: the argmax class
k', its confidence p(k'), the residual mean

    mu = (1 - p(k')) / (K - 1),

and the residual class variance (RCV)

    v = (1/(K-1)) * sum_{k != k'} (p(k) - mu)^2 .

The residual-scale ratio rho = max_k |p(k) - mu| / mu measures how far
the residual entries stray from their mean in relative terms; the
second-order expansion used by :mod:`covar.decomposition` is certified
only while rho < 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InfiniteCrossEntropyError, ValidationError

__all__ = [
    "ONE_HOT_TOL",
    "CONF_CEILING",
    "ROW_SUM_ACCEPT",
    "ROW_SUM_REJECT",
    "ProbabilityBatch",
    "PredictionStats",
    "IdealDistribution",
    "compute_stats",
    "exact_ce",
]

# A row whose max confidence reaches 1 - ONE_HOT_TOL is flagged degenerate:
# mu and rho are no longer trustworthy at that scale.
ONE_HOT_TOL = 1e-12

# Formulas with a 1 - p(k') denominator use confidence clamped to this
# ceiling so degenerate rows stay finite (and keep their "stronger
# penalty" ordering instead of overflowing).
CONF_CEILING = 1.0 - 1e-6

# Row sums within ROW_SUM_ACCEPT of 1 are taken as-is (so clean float64
# batches round-trip bitwise through I/O).  Sums off by more than that
# but within ROW_SUM_REJECT (think float32 softmax exports) are
# renormalized.  Anything worse is rejected.
ROW_SUM_ACCEPT = 1e-9
ROW_SUM_REJECT = 1e-6


@dataclass(frozen=True)
class ProbabilityBatch:
    """A validated (N, K) row-stochastic float64 matrix.

    Build instances through :meth:`from_array`, which validates entries,
    renormalizes rows with small sum drift and marks the array read-only.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise ValidationError(f"expected a 2-d array, got ndim={self.values.ndim}")
        n, k = self.values.shape
        if n < 1:
            raise ValidationError("batch must contain at least one sample")
        if k < 2:
            raise ValidationError(f"need at least 2 classes, got {k}")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_classes(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_array(cls, values: np.ndarray) -> "ProbabilityBatch":
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError(f"expected a 2-d array, got ndim={arr.ndim}")
        if not np.all(np.isfinite(arr)):
            row = int(np.argwhere(~np.isfinite(arr).all(axis=1))[0, 0])
            raise ValidationError(f"row {row}: non-finite entry")
        neg = arr < 0.0
        if neg.any():
            row = int(np.argwhere(neg.any(axis=1))[0, 0])
            raise ValidationError(f"row {row}: negative entry {arr[row][neg[row]][0]!r}")
        sums = arr.sum(axis=1)
        drift = np.abs(sums - 1.0)
        bad = drift > ROW_SUM_REJECT
        if bad.any():
            row = int(np.argmax(bad))
            raise ValidationError(
                f"row {row}: sum {sums[row]!r} deviates from 1 by more than {ROW_SUM_REJECT}"
            )
        fix = drift > ROW_SUM_ACCEPT
        if fix.any():
            arr = arr.copy()
            arr[fix] = arr[fix] / sums[fix, None]
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        return cls(arr)


@dataclass(frozen=True)
class PredictionStats:
    """Summary statistics of one probability row.

    ``residuals`` holds the raw p(k) of the K-1 residual classes in
    ascending class order (argmax column removed); ``deviations`` holds
    p(k) - mu in the same order and sums to zero up to roundoff.  The raw
    values are kept because a probability below mu's ulp is unrecoverable
    from its deviation (p - mu rounds to exactly -mu).  ``degenerate``
    marks rows whose max confidence is within ``ONE_HOT_TOL`` of 1, where
    mu and rho lose meaning.
    """

    max_class: int
    max_conf: float
    residual_mean: float
    residuals: np.ndarray = field(repr=False)
    deviations: np.ndarray = field(repr=False)
    rcv: float
    rho: float
    degenerate: bool
    n_classes: int

    @property
    def safe_conf(self) -> float:
        """Max confidence clamped to ``CONF_CEILING`` for 1-p denominators."""
        return min(self.max_conf, CONF_CEILING)


def _stats_arrays(batch: ProbabilityBatch):
    """Vectorized core of :func:`compute_stats`.

    Returns (max_class, max_conf, mu, residuals, deviations, rcv, rho,
    degenerate) as arrays; residuals and deviations have shape (N, K-1).
    """
    vals = batch.values
    n, k = vals.shape
    idx = np.arange(n)
    max_class = vals.argmax(axis=1)  # first maximum wins ties
    max_conf = vals[idx, max_class]
    mu = (1.0 - max_conf) / (k - 1)
    # A row that is uniform up to the last ulp can have its float row sum
    # land just below 1, which would put mu one ulp above max_conf and
    # break the exact ordering p(k') >= mu that downstream sign arguments
    # rely on.  Clamping costs at most one ulp and restores the invariant
    # the exact simplex row satisfies.
    np.minimum(mu, max_conf, out=mu)
    keep = np.ones((n, k), dtype=bool)
    keep[idx, max_class] = False
    residuals = vals[keep].reshape(n, k - 1)
    deviations = residuals - mu[:, None]
    rcv = (deviations * deviations).sum(axis=1) / (k - 1)
    max_abs_dev = np.abs(deviations).max(axis=1)
    degenerate = max_conf >= 1.0 - ONE_HOT_TOL
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(mu > 0.0, max_abs_dev / np.where(mu > 0.0, mu, 1.0), 0.0)
    return max_class, max_conf, mu, residuals, deviations, rcv, rho, degenerate


def compute_stats(batch: ProbabilityBatch) -> list[PredictionStats]:
    """Compute :class:`PredictionStats` for every row of the batch.

    Ties in the argmax resolve to the lowest class index.  Rows with
    max confidence at or above 1 - 1e-12 come back flagged degenerate,
    with rho reported as 0 when the residual mean underflows to zero.
    """
    (
        max_class,
        max_conf,
        mu,
        residuals,
        deviations,
        rcv,
        rho,
        degenerate,
    ) = _stats_arrays(batch)
    k = batch.n_classes
    out = []
    for i in range(batch.n_samples):
        res = residuals[i]
        res.setflags(write=False)
        dev = deviations[i]
        dev.setflags(write=False)
        out.append(
            PredictionStats(
                max_class=int(max_class[i]),
                max_conf=float(max_conf[i]),
                residual_mean=float(mu[i]),
                residuals=res,
                deviations=dev,
                rcv=float(rcv[i]),
                rho=float(rho[i]),
                degenerate=bool(degenerate[i]),
                n_classes=k,
            )
        )
    return out


@dataclass(frozen=True)
class IdealDistribution:
    """The smoothed target q: q(k') = 1 - (K-1)*eps, q(k) = eps elsewhere."""

    epsilon: float
    max_class: int
    n_classes: int

    def __post_init__(self) -> None:
        k = self.n_classes
        if k < 2:
            raise DomainError(f"need at least 2 classes, got {k}")
        if not 0 <= self.max_class < k:
            raise DomainError(f"max_class {self.max_class} outside [0, {k})")
        if not 0.0 <= self.epsilon < 1.0 / (k - 1):
            raise DomainError(
                f"epsilon {self.epsilon!r} outside [0, 1/(K-1)) for K={k}"
            )

    def values(self) -> np.ndarray:
        q = np.full(self.n_classes, self.epsilon)
        q[self.max_class] = 1.0 - (self.n_classes - 1) * self.epsilon
        return q


def exact_ce(p_row: np.ndarray, q: IdealDistribution) -> float:
    """Cross-entropy -sum_k q(k) log p(k) of one probability row against q.

    With eps = 0 the residual term vanishes and zero residual entries are
    fine (0 * log 0 = 0 convention); with eps > 0 an exact zero anywhere
    raises :class:`InfiniteCrossEntropyError` rather than returning inf.
    """
    p = np.asarray(p_row, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] != q.n_classes:
        raise DomainError(
            f"row has shape {p.shape}, expected ({q.n_classes},)"
        )
    k = q.n_classes
    eps = q.epsilon
    kp = q.max_class
    if p[kp] <= 0.0:
        raise InfiniteCrossEntropyError(
            f"p({kp}) = {p[kp]!r} where the target places mass {1.0 - (k - 1) * eps!r}"
        )
    head = -(1.0 - (k - 1) * eps) * math.log(p[kp])
    if eps == 0.0:
        return head
    rest = np.delete(p, kp)
    if np.any(rest <= 0.0):
        j = int(np.argmax(rest <= 0.0))
        raise InfiniteCrossEntropyError(
            f"residual entry {j} is zero while epsilon={eps!r} places mass on it"
        )
    return head - eps * math.fsum(math.log(x) for x in rest)
