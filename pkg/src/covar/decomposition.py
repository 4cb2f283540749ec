"""Cross-entropy decomposition into confidence and residual-variance terms.

For a row p with argmax k', residual mean mu and RCV v, the cross-entropy
against the smoothed target q (eps mass on each non-max class) is

    CE = -(1 - (K-1) eps) log p(k') - eps sum_{k != k'} log p(k).

Expanding each residual log around mu to second order,

    log p(k) = log mu + d/mu - d^2 / (2 mu^2) + R2(k),   d = p(k) - mu,

and using sum_k d = 0 gives the working approximation

    CE ~ -log p(k') + (K-1) eps log(p(k')/mu) + g v,

with the dispersion penalty

    g = (K-1)^3 eps / (2 (1 - p(k'))^2)        (fixed eps)
      = (K-1)^2 / (2 (1 - p(k')))              (adaptive eps = mu).

The middle term above carries a positive sign; that is the form the
substitution actually produces and the only one whose error is covered by
the remainder certificate below.  A variant with the sign flipped and the
log(K-1) constant dropped circulates in derived write-ups; it is exposed
behind ``paper_literal=True`` for comparison but is not certified.

While every |d| <= rho * mu with rho < 1, the Lagrange form of R2 gives

    |CE - approx| <= C v^{3/2},
    C = (K-1)^{3/2} eps / (3 (1 - rho)^3 mu^3),

which under the adaptive policy eps = mu simplifies to
C = (K-1)^{3/2} / (3 (1 - rho)^3 mu^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

from .errors import AssumptionViolation, DomainError, InfiniteCrossEntropyError
from .stats import CONF_CEILING, PredictionStats

__all__ = [
    "EpsilonPolicy",
    "CEDecomposition",
    "BatchDecomposition",
    "taylor_log_expand",
    "g_coefficient",
    "decompose_sample",
    "decompose_batch",
]


@dataclass(frozen=True)
class EpsilonPolicy:
    """How much target mass each residual class receives.

    ``adaptive`` sets eps = mu per sample; ``fixed`` uses one explicit
    value for the whole run (it must stay below 1/(K-1)).
    """

    mode: Literal["fixed", "adaptive"]
    value: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("fixed", "adaptive"):
            raise DomainError(f"unknown epsilon mode {self.mode!r}")
        if self.mode == "fixed":
            if self.value is None or not self.value > 0.0:
                raise DomainError("fixed mode requires an explicit epsilon > 0")
        elif self.value is not None:
            raise DomainError("adaptive mode takes no explicit value")

    @classmethod
    def adaptive(cls) -> "EpsilonPolicy":
        return cls(mode="adaptive")

    @classmethod
    def fixed(cls, value: float) -> "EpsilonPolicy":
        return cls(mode="fixed", value=value)

    def resolve(self, residual_mean: float, n_classes: int) -> float:
        """The eps used for a sample with the given residual mean."""
        if self.mode == "adaptive":
            return residual_mean
        eps = float(self.value)  # type: ignore[arg-type]
        if eps >= 1.0 / (n_classes - 1):
            raise DomainError(
                f"fixed epsilon {eps!r} must stay below 1/(K-1) for K={n_classes}"
            )
        return eps


@dataclass(frozen=True)
class CEDecomposition:
    """Per-sample decomposition record.

    ``approx_ce`` always equals ``-f_term + g_coeff * rcv`` for whichever
    form (certified or paper-literal) was requested; ``middle_term`` is
    the certified (K-1) eps log(p(k')/mu) correction regardless.  The
    remainder certificate |remainder_actual| <= remainder_bound is only
    claimed while ``assumption_ok`` (rho < 1) and only for the certified
    form.
    """

    exact_ce: float
    f_term: float
    g_coeff: float
    middle_term: float
    approx_ce: float
    remainder_bound: float
    remainder_actual: float
    assumption_ok: bool
    epsilon: float


@dataclass(frozen=True)
class BatchDecomposition:
    """Batch-mean view: CE_B ~ -mc_bar + g_bar * v_bar + cov_gv.

    ``srcv`` is the separable product g_bar * v_bar; ``cov_gv`` is the
    population covariance of (g, v) over the batch, so the identity
    mean(g v) = srcv + cov_gv is algebraic.  ``lower_bound`` is the mean
    of -log p(k') + (K-1)^2/(2(1-p(k'))) v; under the adaptive policy
    batch_ce >= lower_bound - remainder_batch_bound.
    """

    mc_bar: float
    g_bar: float
    v_bar: float
    srcv: float
    cov_gv: float
    batch_ce: float
    lower_bound: float
    remainder_batch_bound: float
    n_samples: int


def taylor_log_expand(p_k: float, mu: float, rho: float) -> tuple[float, float]:
    """Second-order expansion of log p_k around mu with a certified bound.

    Returns ``(value, bound)`` where value = log mu + d/mu - d^2/(2 mu^2)
    and |log p_k - value| <= bound = |d|^3 / (3 (1-rho)^3 mu^3), valid for
    p_k inside the band [(1-rho) mu, (1+rho) mu] with rho < 1.
    """
    if not mu > 0.0:
        raise DomainError(f"mu must be positive, got {mu!r}")
    if not 0.0 <= rho < 1.0:
        raise AssumptionViolation(f"rho={rho!r} outside [0, 1)")
    d = p_k - mu
    # A point exactly on the band edge is legal (rho is usually computed
    # as max|d|/mu, which lands there); allow a few ulp of slack so the
    # float product rho*mu does not spuriously reject it.
    if abs(d) > rho * mu * (1.0 + 1e-12):
        raise AssumptionViolation(
            f"p_k={p_k!r} outside the band [{(1 - rho) * mu!r}, {(1 + rho) * mu!r}]"
        )
    t = d / mu
    value = math.log(mu) + t - 0.5 * t * t
    bound = abs(d) ** 3 / (3.0 * (1.0 - rho) ** 3 * mu**3)
    return value, bound


def g_coefficient(max_conf: float, n_classes: int, policy: EpsilonPolicy) -> float:
    """Dispersion-penalty coefficient g as a function of max confidence.

    Strictly increasing in max_conf under both policies.
    """
    k = n_classes
    if k < 2:
        raise DomainError(f"need at least 2 classes, got {k}")
    # tolerate a few ulp below 1/K: a float64 uniform row's max entry can
    # round to just under the exact value
    if max_conf < (1.0 / k) * (1.0 - 1e-12) or max_conf > CONF_CEILING:
        raise DomainError(
            f"max_conf {max_conf!r} outside [1/K, {CONF_CEILING}] for K={k}"
        )
    if policy.mode == "adaptive":
        return (k - 1) ** 2 / (2.0 * (1.0 - max_conf))
    eps = policy.resolve((1.0 - max_conf) / (k - 1), k)
    return (k - 1) ** 3 * eps / (2.0 * (1.0 - max_conf) ** 2)


def _remainder_series(residuals, deviations, mu: float, eps: float) -> float:
    """exact_ce - approx_ce evaluated without catastrophic cancellation.

    Algebraically the remainder is -eps * sum_k (log1p(t_k) - t_k + t_k^2/2)
    with t_k = d_k / mu; summing the third-order tails directly keeps full
    relative precision even when the deviations are tiny, where the naive
    difference of two O(1) cross-entropies would be pure roundoff.  Far
    below the mean the stored deviation saturates at exactly -mu (p - mu
    rounds there once p < ulp(mu)), so the log switches to the raw
    probability ratio, which stays exact in that regime.
    """
    acc = 0.0
    for r, d in zip(residuals, deviations):
        t = float(d) / mu
        if t > -0.5:
            acc += math.log1p(t) - t + 0.5 * t * t
        else:
            acc += math.log(float(r) / mu) - t + 0.5 * t * t
    return -eps * acc


def decompose_sample(
    stats: PredictionStats,
    policy: EpsilonPolicy,
    *,
    paper_literal: bool = False,
    clamp_degenerate: bool = True,
) -> CEDecomposition:
    """Decompose one sample's cross-entropy against its ideal target.

    Degenerate (near one-hot) rows are canonicalized to confidence
    1 - 1e-6 with uniform residuals when ``clamp_degenerate`` is on, which
    keeps every field finite; with clamping disabled they raise.
    """
    k = stats.n_classes
    if stats.degenerate:
        if not clamp_degenerate:
            raise DomainError(
                "degenerate (one-hot) sample: enable clamping or filter it out"
            )
        p = stats.safe_conf
        mu = (1.0 - p) / (k - 1)
        residuals: Sequence[float] = ()
        deviations: Sequence[float] = ()
        v = 0.0
        rho = 0.0
    else:
        p = stats.max_conf
        mu = stats.residual_mean
        residuals = stats.residuals
        deviations = stats.deviations
        v = stats.rcv
        rho = stats.rho

    eps = policy.resolve(mu, k)
    # 1 - p denominators always use the clamped confidence; a row can sit
    # above CONF_CEILING without being degenerate.
    g = g_coefficient(min(p, CONF_CEILING), k, policy)

    # Exact CE straight from the row's raw residual probabilities.
    log_p = math.log(p)
    if len(residuals) > 0:
        if not all(r > 0.0 for r in residuals):
            raise InfiniteCrossEntropyError(
                "a residual class has probability exactly 0 while the "
                "smoothed target puts mass on every class"
            )
        resid_logs = math.fsum(math.log(r) for r in residuals)
    else:
        resid_logs = (k - 1) * math.log(mu) if mu > 0.0 else 0.0
    exact = -(1.0 - (k - 1) * eps) * log_p - eps * resid_logs

    middle = (k - 1) * eps * math.log(p / mu)
    gv = g * v
    approx_certified = -log_p + middle + gv
    if paper_literal:
        f = log_p + (k - 1) * eps * math.log(p / (1.0 - p))
        approx = -f + gv
    else:
        approx = approx_certified
        f = log_p - middle

    assumption_ok = rho < 1.0
    if v == 0.0:
        bound = 0.0
    elif assumption_ok:
        bound = (
            (k - 1) ** 1.5 * eps / (3.0 * (1.0 - rho) ** 3 * mu**3)
        ) * v**1.5
    else:
        bound = math.inf

    remainder = _remainder_series(residuals, deviations, mu, eps) if v != 0.0 else 0.0
    if paper_literal:
        remainder += approx_certified - approx

    return CEDecomposition(
        exact_ce=exact,
        f_term=f,
        g_coeff=g,
        middle_term=middle,
        approx_ce=approx,
        remainder_bound=bound,
        remainder_actual=remainder,
        assumption_ok=assumption_ok,
        epsilon=eps,
    )


def decompose_batch(
    batch_stats: Sequence[PredictionStats],
    policy: EpsilonPolicy,
    *,
    paper_literal: bool = False,
) -> BatchDecomposition:
    """Aggregate per-sample decompositions into batch means.

    All means use compensated (fsum) summation in input order, so results
    are deterministic for a given input.  The covariance is population
    normalized (1/N), which is what makes
    mean(g v) = g_bar v_bar + cov_gv exact.
    """
    n = len(batch_stats)
    if n == 0:
        raise DomainError("cannot decompose an empty batch")
    per = [
        decompose_sample(s, policy, paper_literal=paper_literal)
        for s in batch_stats
    ]
    fs = [d.f_term for d in per]
    gs = [d.g_coeff for d in per]
    # v as used inside each decomposition: zero for clamped degenerate rows.
    vs = [0.0 if s.degenerate else s.rcv for s in batch_stats]
    mc_bar = math.fsum(fs) / n
    g_bar = math.fsum(gs) / n
    v_bar = math.fsum(vs) / n
    cov = math.fsum((g - g_bar) * (v - v_bar) for g, v in zip(gs, vs)) / n
    batch_ce = math.fsum(d.exact_ce for d in per) / n

    k = batch_stats[0].n_classes
    lower_terms = []
    for s in batch_stats:
        # -log p at the confidence the exact CE actually used; the clamp
        # only enters the 1-p denominator.
        p_log = s.safe_conf if s.degenerate else s.max_conf
        v = 0.0 if s.degenerate else s.rcv
        lower_terms.append(
            -math.log(p_log) + (k - 1) ** 2 / (2.0 * (1.0 - s.safe_conf)) * v
        )
    lower = math.fsum(lower_terms) / n
    rem_bound = math.fsum(d.remainder_bound for d in per) / n

    return BatchDecomposition(
        mc_bar=mc_bar,
        g_bar=g_bar,
        v_bar=v_bar,
        srcv=g_bar * v_bar,
        cov_gv=cov,
        batch_ce=batch_ce,
        lower_bound=lower,
        remainder_batch_bound=rem_bound,
        n_samples=n,
    )
