"""Threshold-free reliability partitioning of a batch in a 2-d embedding.

Each sample is embedded as a column of a 2 x N matrix Phi.  The "theory"
embedding is (log p(k'), -g v) with the adaptive dispersion penalty
g = (K-1)^2 / (2 (1 - p(k'))); the "raw" embedding is (p_max, v).  A
bipartition S maximizing the normalized grouping objective

    sum_c || sum_{n in c} h_n ||^2 / n_c

is approximated by the top-two right singular directions of Phi: sample n
joins the direction i with the larger normalized score |u_i(n)|, where
u_i = Phi^T w_i / sigma_i comes from the closed-form eigendecomposition
of the 2 x 2 matrix Phi Phi^T.  By the Ky Fan inequality the objective of
any bipartition is at most lambda_1 + lambda_2.

The cluster whose statistics score best under mu_c[0] - lambda sigma_c[1]
(lambda = 0.25) is declared reliable, and every sample is weighted by a
separable Gaussian centred on that cluster's statistics; samples beating
the reliable mean in both coordinates keep weight 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError
from .stats import PredictionStats, ProbabilityBatch, compute_stats

__all__ = [
    "DEFAULT_LAMBDA",
    "EmbeddingMatrix",
    "SelectionMatrix",
    "SpectralAssignment",
    "ClusterStats",
    "ReliabilityWeights",
    "embed",
    "trace_objective",
    "enumerate_bipartitions",
    "brute_force_partition",
    "spectral_assign",
    "cluster_statistics",
    "select_reliable_cluster",
    "gaussian_weights",
    "pcos",
]

DEFAULT_LAMBDA = 0.25
_BRUTE_FORCE_LIMIT = 20
_RANK_TOL = 1e-14


@dataclass(frozen=True)
class EmbeddingMatrix:
    """2 x N sample embedding plus the kind that produced it."""

    phi: np.ndarray
    kind: str  # "theory" | "raw"

    def __post_init__(self) -> None:
        if self.kind not in ("theory", "raw"):
            raise DomainError(f"unknown embedding kind {self.kind!r}")
        if self.phi.ndim != 2 or self.phi.shape[0] != 2:
            raise DomainError(f"phi must be (2, N), got {self.phi.shape}")

    @property
    def n_samples(self) -> int:
        return self.phi.shape[1]


@dataclass(frozen=True)
class SelectionMatrix:
    """A bipartition as a vector of cluster ids in {0, 1}."""

    assignment: np.ndarray

    def __post_init__(self) -> None:
        a = self.assignment
        if a.ndim != 1:
            raise DomainError("assignment must be 1-d")
        if a.size and not np.isin(a, (0, 1)).all():
            raise DomainError("assignment entries must be 0 or 1")

    def indicator(self) -> np.ndarray:
        """The N x 2 one-hot selection matrix S."""
        s = np.zeros((self.assignment.size, 2))
        s[np.arange(self.assignment.size), self.assignment] = 1.0
        return s


@dataclass(frozen=True)
class SpectralAssignment:
    """Result of the closed-form two-direction spectral split."""

    assignment: np.ndarray
    rank_deficient: bool
    isotropic: bool
    singular_values: np.ndarray = field(repr=False)
    left_vectors: np.ndarray = field(repr=False)  # rows w1, w2
    scores: np.ndarray = field(repr=False)  # (2, N) normalized scores u_i(n)


@dataclass(frozen=True)
class ClusterStats:
    """Per-cluster per-dimension mean and population std (nan if empty)."""

    mean: np.ndarray  # (2 clusters, 2 dims)
    std: np.ndarray
    size: np.ndarray  # (2,) int


@dataclass(frozen=True)
class ReliabilityWeights:
    """Final PCOS output: weights in [0, 1] plus the supporting structure."""

    weights: np.ndarray
    reliable_cluster: int
    preserved_mask: np.ndarray
    assignment: np.ndarray
    cluster_stats: ClusterStats
    rank_deficient: bool


# ---------------------------------------------------------------------------
# embedding


def embed(batch_stats: Sequence[PredictionStats], kind: str = "theory") -> EmbeddingMatrix:
    """Stack per-sample statistics into the 2 x N embedding matrix.

    theory: row 0 = log p(k') (confidence reward, <= 0),
            row 1 = -(K-1)^2 / (2 (1 - p(k'))) * v (dispersion penalty, <= 0).
    raw:    row 0 = p_max, row 1 = v.

    Degenerate rows enter through the clamped confidence, so every entry
    is finite.  Needs at least two samples (a bipartition of one point is
    meaningless).
    """
    n = len(batch_stats)
    if n < 2:
        raise DomainError(f"need at least 2 samples to partition, got {n}")
    if kind == "raw":
        phi = np.empty((2, n))
        phi[0] = [s.max_conf for s in batch_stats]
        phi[1] = [s.rcv for s in batch_stats]
    elif kind == "theory":
        k = batch_stats[0].n_classes
        conf = np.array([s.safe_conf for s in batch_stats])
        v = np.array([s.rcv for s in batch_stats])
        phi = np.vstack([np.log(conf), -((k - 1) ** 2) / (2.0 * (1.0 - conf)) * v])
    else:
        raise DomainError(f"unknown embedding kind {kind!r}")
    phi.setflags(write=False)
    return EmbeddingMatrix(phi=phi, kind=kind)


# ---------------------------------------------------------------------------
# grouping objective and the exhaustive oracle


def _as_phi(phi) -> np.ndarray:
    arr = phi.phi if isinstance(phi, EmbeddingMatrix) else np.asarray(phi, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != 2:
        raise DomainError(f"phi must be (2, N), got {arr.shape}")
    return arr


def trace_objective(phi, selection, normalized: bool = True) -> float:
    """Grouping objective of a bipartition.

    Unnormalized: sum_c ||sum_{n in c} h_n||^2, i.e. Tr(S^T Phi^T Phi S).
    Normalized divides each cluster's term by its size (the projection
    form Tr(Phi^T P Phi)); it requires both clusters to be non-empty.
    """
    arr = _as_phi(phi)
    a = selection.assignment if isinstance(selection, SelectionMatrix) else np.asarray(selection)
    if a.shape != (arr.shape[1],):
        raise DomainError(f"assignment shape {a.shape} does not match N={arr.shape[1]}")
    if a.size and not np.isin(a, (0, 1)).all():
        raise DomainError("assignment entries must be 0 or 1")
    total = 0.0
    for c in (0, 1):
        cols = arr[:, a == c]
        n_c = cols.shape[1]
        if n_c == 0:
            if normalized:
                raise DomainError(f"cluster {c} is empty; normalized objective undefined")
            continue
        s = cols.sum(axis=1)
        term = float(s @ s)
        total += term / n_c if normalized else term
    return total


def enumerate_bipartitions(n: int) -> np.ndarray:
    """All non-trivial bipartitions of n samples with sample 0 in cluster 0.

    Returns a (2^(n-1) - 1, n) int8 matrix in lexicographic order of the
    assignment vector.  Complementary assignments have equal objectives,
    so pinning sample 0 halves the enumeration without losing any value;
    it also makes the first maximizer the lexicographically smallest one.
    """
    if not 2 <= n <= _BRUTE_FORCE_LIMIT:
        raise DomainError(f"exhaustive enumeration supports 2 <= N <= {_BRUTE_FORCE_LIMIT}")
    codes = np.arange(1, 1 << (n - 1), dtype=np.int64)
    shifts = np.arange(n - 2, -1, -1, dtype=np.int64)
    bits = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.int8)
    return np.hstack([np.zeros((codes.size, 1), dtype=np.int8), bits])


def brute_force_partition(phi) -> SelectionMatrix:
    """Exhaustive maximizer of the normalized objective (oracle, N <= 20).

    Ties resolve to the lexicographically smallest assignment vector.
    """
    arr = _as_phi(phi)
    n = arr.shape[1]
    parts = enumerate_bipartitions(n)
    ones = parts.astype(np.float64)
    sums1 = ones @ arr.T  # (M, 2) cluster-1 sums
    total = arr.sum(axis=1)
    sums0 = total[None, :] - sums1
    n1 = ones.sum(axis=1)
    n0 = n - n1
    obj = (sums0 * sums0).sum(axis=1) / n0 + (sums1 * sums1).sum(axis=1) / n1
    best = int(np.argmax(obj))
    return SelectionMatrix(assignment=parts[best].astype(np.int64))


# ---------------------------------------------------------------------------
# spectral route


def _eig2_sym(a: float, b: float, c: float):
    """Eigendecomposition of [[a, b], [b, c]], eigenvalues descending.

    Returns (lam1, lam2, w1, w2, isotropic).  On an exact tie (only
    possible when b = 0 and a = c) the two axis eigenvectors are ordered
    lexicographically and the isotropy flag is set.
    """
    if b == 0.0:
        if a == c:
            return a, c, np.array([0.0, 1.0]), np.array([1.0, 0.0]), True
        if a > c:
            return a, c, np.array([1.0, 0.0]), np.array([0.0, 1.0]), False
        return c, a, np.array([0.0, 1.0]), np.array([1.0, 0.0]), False
    half_tr = 0.5 * (a + c)
    half_gap = 0.5 * math.hypot(a - c, 2.0 * b)
    lam1 = half_tr + half_gap
    lam2 = half_tr - half_gap
    # Two algebraically equivalent eigenvector formulas; pick the better
    # conditioned one.
    cand1 = np.array([b, lam1 - a])
    cand2 = np.array([lam1 - c, b])
    w1 = cand1 if cand1 @ cand1 >= cand2 @ cand2 else cand2
    w1 = w1 / math.sqrt(w1 @ w1)
    w2 = np.array([-w1[1], w1[0]])
    for w in (w1, w2):
        if w[0] < 0.0 or (w[0] == 0.0 and w[1] < 0.0):
            np.negative(w, out=w)
    return lam1, max(lam2, 0.0), w1, w2, False


def spectral_assign(phi) -> SpectralAssignment:
    """Assign each sample to its dominant normalized singular direction.

    The top-two right singular vectors u_i of Phi are obtained in closed
    form from the 2 x 2 matrix Phi Phi^T as u_i = Phi^T w_i / sigma_i;
    sample n goes to argmax_i |u_i(n)| with ties to cluster 0.  A
    rank-deficient Phi (sigma_2 = 0) yields the single cluster 0 and sets
    the flag.  Scale and singular-vector sign changes cannot move any
    sample across clusters.
    """
    arr = _as_phi(phi)
    if arr.shape[1] < 2:
        raise DomainError("need at least 2 samples")
    if not np.all(np.isfinite(arr)):
        raise DomainError("phi contains non-finite entries")
    a = float(arr[0] @ arr[0])
    b = float(arr[0] @ arr[1])
    c = float(arr[1] @ arr[1])
    trace = a + c
    if trace == 0.0:
        raise DomainError("all-zero embedding has no principal directions")
    lam1, lam2, w1, w2, isotropic = _eig2_sym(a, b, c)
    sigma = np.array([math.sqrt(max(lam1, 0.0)), math.sqrt(max(lam2, 0.0))])
    n = arr.shape[1]
    scores = np.zeros((2, n))
    scores[0] = (w1 @ arr) / sigma[0]
    rank_deficient = lam2 <= trace * _RANK_TOL
    if rank_deficient:
        assignment = np.zeros(n, dtype=np.int64)
    else:
        scores[1] = (w2 @ arr) / sigma[1]
        assignment = (np.abs(scores[1]) > np.abs(scores[0])).astype(np.int64)
    scores.setflags(write=False)
    assignment.setflags(write=False)
    return SpectralAssignment(
        assignment=assignment,
        rank_deficient=rank_deficient,
        isotropic=isotropic,
        singular_values=sigma,
        left_vectors=np.vstack([w1, w2]),
        scores=scores,
    )


# ---------------------------------------------------------------------------
# cluster scoring and weights


def cluster_statistics(phi, selection) -> ClusterStats:
    """Per-cluster mean and population std along each embedding dimension.

    Singleton clusters get std 0; empty clusters get size 0 and nan
    statistics (callers on the rank-deficient path never read them).
    """
    arr = _as_phi(phi)
    a = selection.assignment if isinstance(selection, SelectionMatrix) else np.asarray(selection)
    mean = np.full((2, 2), np.nan)
    std = np.full((2, 2), np.nan)
    size = np.zeros(2, dtype=np.int64)
    for c in (0, 1):
        cols = arr[:, a == c]
        size[c] = cols.shape[1]
        if size[c] > 0:
            mean[c] = cols.mean(axis=1)
            std[c] = cols.std(axis=1)  # ddof=0
    return ClusterStats(mean=mean, std=std, size=size)


def select_reliable_cluster(stats: ClusterStats, lam: float = DEFAULT_LAMBDA) -> int:
    """Pick the cluster maximizing mu_c[0] - lam * sigma_c[1] (ties -> 0)."""
    if (stats.size == 0).any():
        raise DomainError("both clusters must be non-empty to score reliability")
    scores = stats.mean[:, 0] - lam * stats.std[:, 1]
    return 0 if scores[0] >= scores[1] else 1


def gaussian_weights(
    phi: EmbeddingMatrix,
    mean: np.ndarray,
    std: np.ndarray,
    *,
    alg1_exponent: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Separable Gaussian reliability weights around the reliable cluster.

    Default factor per dimension: exp(-(h - mu)^2 / (2 sigma^2)); with
    ``alg1_exponent`` the spread doubles to exp(-(h - mu)^2 / (4 sigma^2)).
    A dimension with sigma = 0 degenerates to an exact-match indicator.
    Samples strictly better than the mean in both dimensions (higher
    confidence coordinate, and for the theory embedding a higher = less
    negative penalty coordinate, for the raw embedding a lower variance)
    are preserved at weight 1.  Returns (weights, preserved_mask).
    """
    arr = phi.phi
    d = arr - np.asarray(mean, dtype=np.float64)[:, None]
    weights = np.ones(arr.shape[1])
    with np.errstate(over="ignore", under="ignore"):
        for dim in (0, 1):
            s = float(std[dim])
            if s > 0.0:
                z = d[dim] / s
                expo = z * z * (0.25 if alg1_exponent else 0.5)
                weights = weights * np.exp(-expo)
            else:
                weights = weights * (d[dim] == 0.0)
    if phi.kind == "theory":
        preserved = (d[0] > 0.0) & (d[1] > 0.0)
    else:
        preserved = (d[0] > 0.0) & (d[1] < 0.0)
    weights = np.where(preserved, 1.0, weights)
    weights.setflags(write=False)
    preserved.setflags(write=False)
    return weights, preserved


def pcos(
    batch: ProbabilityBatch,
    kind: str = "theory",
    lam: float = DEFAULT_LAMBDA,
    *,
    alg1_exponent: bool = False,
) -> ReliabilityWeights:
    """End-to-end pipeline: stats -> embed -> split -> score -> weights."""
    sts = compute_stats(batch)
    em = embed(sts, kind)
    split = spectral_assign(em)
    cs = cluster_statistics(em, split.assignment)
    if split.rank_deficient:
        reliable = 0
    else:
        reliable = select_reliable_cluster(cs, lam)
    weights, preserved = gaussian_weights(
        em, cs.mean[reliable], cs.std[reliable], alg1_exponent=alg1_exponent
    )
    return ReliabilityWeights(
        weights=weights,
        reliable_cluster=reliable,
        preserved_mask=preserved,
        assignment=split.assignment,
        cluster_stats=cs,
        rank_deficient=split.rank_deficient,
    )
