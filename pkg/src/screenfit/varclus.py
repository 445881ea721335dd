"""Divisive variable clustering with principal-component representatives.

Starting from one cluster holding every variable, any cluster whose
correlation submatrix has a second eigenvalue above a threshold (or, in
count-driven mode, the worst such cluster until a target count is
reached) is split along its first two principal components; members go
to the component they correlate with more strongly, followed by a global
reassignment pass to the nearest cluster component.  One representative
per cluster is then chosen by the smallest (1 - R^2 own) / (1 - R^2
nearest) ratio, i.e. the member that best stands in for its own cluster
while overlapping least with the others.

Everything here works off the correlation matrix alone: the correlation
between a variable v and the first principal component of a cluster with
member correlation submatrix R, top eigenpair (lambda, u), is
(R[v, members] @ u) / sqrt(lambda).

Eigenvalues come from symmetric eigendecomposition; magnitudes below
DEGENERACY_TOL are treated as zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ComputationError, ValidationError
from .table import DataTable

DEGENERACY_TOL = 1e-10

REASSIGN_CAP = 20


@dataclass(frozen=True)
class CorrelationMatrix:
    names: tuple[str, ...]
    values: np.ndarray  # symmetric, unit diagonal

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"no variable named {name!r} in correlation matrix") from None


@dataclass(frozen=True)
class VariableCluster:
    members: tuple[str, ...]
    pc1_loadings: tuple[float, ...]  # correlation of each member with the cluster's first PC
    second_eigenvalue: float


@dataclass(frozen=True)
class VariableScore:
    variable: str
    cluster: int
    r2_own: float
    r2_nearest: float
    ratio: float
    is_representative: bool


@dataclass(frozen=True)
class ClusterSelection:
    clusters: tuple[VariableCluster, ...]
    scores: tuple[VariableScore, ...]

    def representatives(self) -> list[str]:
        return [s.variable for s in self.scores if s.is_representative]

    def to_dict(self) -> dict:
        return {
            "clusters": [
                {
                    "cluster": k,
                    "members": list(c.members),
                    "second_eigenvalue": c.second_eigenvalue,
                }
                for k, c in enumerate(self.clusters)
            ],
            "variables": [
                {
                    "variable": s.variable,
                    "cluster": s.cluster,
                    "r2_own": s.r2_own,
                    "r2_nearest": s.r2_nearest,
                    "ratio": s.ratio,
                    "representative": s.is_representative,
                }
                for s in self.scores
            ],
        }


# ---------------------------------------------------------------------------
# Correlation


def correlation_matrix_from_array(values: np.ndarray, names: list[str]) -> CorrelationMatrix:
    """Pearson correlations of array columns, pairwise-complete over NaN rows."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[1] != len(names):
        raise ValidationError("values must be n_rows x n_variables matching names")
    k = len(names)
    for j, name in enumerate(names):
        col = values[:, j]
        finite = col[~np.isnan(col)]
        if len(finite) == 0 or float(finite.std()) == 0.0:
            raise ComputationError(f"zero variance in column {name!r}")
    if not np.isnan(values).any():
        corr = np.corrcoef(values, rowvar=False)
        if k == 1:
            corr = np.array([[1.0]])
    else:
        corr = np.eye(k)
        for i in range(k):
            for j in range(i + 1, k):
                keep = ~(np.isnan(values[:, i]) | np.isnan(values[:, j]))
                xi, xj = values[keep, i], values[keep, j]
                if len(xi) < 2:
                    raise ComputationError(
                        f"columns {names[i]!r} and {names[j]!r} share < 2 complete rows"
                    )
                sx, sy = xi.std(), xj.std()
                if sx == 0.0 or sy == 0.0:
                    name = names[i] if sx == 0.0 else names[j]
                    raise ComputationError(
                        f"zero variance in column {name!r} on pairwise-complete rows"
                    )
                corr[i, j] = corr[j, i] = float(
                    ((xi - xi.mean()) * (xj - xj.mean())).mean() / (sx * sy)
                )
    corr = np.clip(corr, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return CorrelationMatrix(names=tuple(names), values=corr)


def correlation_matrix(table: DataTable, variables: list[str]) -> CorrelationMatrix:
    """Pairwise-complete Pearson correlations of the variables' numeric views."""
    values = np.column_stack([table.numeric_view(v) for v in variables])
    return correlation_matrix_from_array(values, list(variables))


# ---------------------------------------------------------------------------
# Clustering


def _top_eigenpairs(sub: np.ndarray, k: int = 2):
    """Leading eigenvalues (descending) and unit eigenvectors of a symmetric matrix."""
    if not np.isfinite(sub).all():
        raise ComputationError("non-finite entries in correlation submatrix")
    try:
        w, v = np.linalg.eigh(sub)
    except np.linalg.LinAlgError as exc:
        raise ComputationError(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    return w[:k], v[:, :k]


def _pc1_correlations(corr: np.ndarray, members: list[int]) -> np.ndarray:
    """Correlation of every variable with the first PC of the member block."""
    sub = corr[np.ix_(members, members)]
    w, v = _top_eigenpairs(sub, k=1)
    lam = float(w[0])
    if lam <= DEGENERACY_TOL:
        raise ComputationError("degenerate cluster: leading eigenvalue is zero")
    return (corr[:, members] @ v[:, 0]) / np.sqrt(lam)


def _second_eigenvalue(corr: np.ndarray, members: list[int]) -> float:
    if len(members) < 2:
        return 0.0
    sub = corr[np.ix_(members, members)]
    w, _ = _top_eigenpairs(sub, k=2)
    return float(w[1])


def _split_cluster(corr: np.ndarray, members: list[int]) -> tuple[list[int], list[int]]:
    """Two-way split along the first two principal components."""
    sub = corr[np.ix_(members, members)]
    w, v = _top_eigenpairs(sub, k=2)
    lam1, lam2 = float(w[0]), float(w[1])
    r2_pc1 = lam1 * v[:, 0] ** 2
    r2_pc2 = lam2 * v[:, 1] ** 2
    side2 = r2_pc2 > r2_pc1
    if side2.all() or not side2.any():
        # Degenerate assignment; peel off the variable most aligned with PC2.
        side2 = np.zeros(len(members), dtype=bool)
        side2[int(np.argmax(r2_pc2 - r2_pc1))] = True
    a = [m for m, s in zip(members, side2) if not s]
    b = [m for m, s in zip(members, side2) if s]
    return a, b


def _reassign(corr: np.ndarray, clusters: list[list[int]]) -> list[list[int]]:
    """Move each variable to the cluster whose first PC it correlates with most; repeat until stable."""
    n = corr.shape[0]
    for _ in range(REASSIGN_CAP):
        comps = np.column_stack([_pc1_correlations(corr, c) for c in clusters]) ** 2
        assign = np.argmax(comps, axis=1)
        new_clusters = [sorted(np.flatnonzero(assign == k).tolist()) for k in range(len(clusters))]
        new_clusters = [c for c in new_clusters if c]
        if new_clusters == clusters:
            break
        clusters = new_clusters
        if len(clusters) == 1:
            break
    return clusters


def _canonical(clusters: list[list[int]], names: tuple[str, ...]) -> list[list[int]]:
    return sorted(clusters, key=lambda c: min(names[i] for i in c))


def cluster_variables(
    corr: CorrelationMatrix,
    split_threshold: float = 1.0,
    n_clusters: int | None = None,
) -> list[VariableCluster]:
    """Divisively split variables into correlated clusters.

    With the default threshold rule, any cluster whose second eigenvalue
    exceeds split_threshold is split, worst first, until none does.  With
    n_clusters set, splitting instead continues (still worst-first) until
    that many clusters exist or every cluster is a singleton; the
    threshold is ignored.
    """
    names = corr.names
    R = corr.values
    k = len(names)
    if n_clusters is not None and not (1 <= n_clusters <= k):
        raise ValidationError(f"n_clusters must be in [1, {k}], got {n_clusters}")
    clusters: list[list[int]] = [list(range(k))]

    def pick_worst() -> int | None:
        """Index of the splittable cluster with the largest second eigenvalue."""
        candidates = [
            (-_second_eigenvalue(R, c), min(names[i] for i in c), idx)
            for idx, c in enumerate(clusters)
            if len(c) >= 2
        ]
        if not candidates:
            return None
        neg_second, _, idx = min(candidates)
        if n_clusters is None and -neg_second <= split_threshold:
            return None
        return idx

    for _ in range(2 * k):  # reassignment can undo splits; bound generously
        if n_clusters is not None and len(clusters) >= n_clusters:
            break
        worst = pick_worst()
        if worst is None:
            break
        a, b = _split_cluster(R, clusters[worst])
        clusters = clusters[:worst] + [a, b] + clusters[worst + 1 :]
        clusters = _reassign(R, clusters)

    clusters = _canonical(clusters, names)
    out = []
    for c in clusters:
        loadings = _pc1_correlations(R, c)[c]
        out.append(
            VariableCluster(
                members=tuple(names[i] for i in c),
                pc1_loadings=tuple(float(x) for x in loadings),
                second_eigenvalue=_second_eigenvalue(R, c),
            )
        )
    return out


def select_representatives(
    clusters: list[VariableCluster], corr: CorrelationMatrix
) -> ClusterSelection:
    """Score every variable and pick each cluster's min-(1-R^2-ratio) member.

    r2_own is the squared correlation with the own cluster's first PC,
    r2_nearest the best squared correlation with any other cluster's
    first PC (0 when there is only one cluster), and the ratio is
    (1 - r2_own) / (1 - r2_nearest).  Ties break on the variable name.
    """
    if not clusters:
        raise ValidationError("need at least one cluster")
    R = corr.values
    member_idx = [[corr.index(v) for v in c.members] for c in clusters]
    pc1_corr = np.column_stack([_pc1_correlations(R, m) for m in member_idx]) ** 2

    scores: list[VariableScore] = []
    for k, cluster in enumerate(clusters):
        rows = []
        for v in cluster.members:
            i = corr.index(v)
            r2_own = float(min(pc1_corr[i, k], 1.0))
            if len(clusters) == 1:
                r2_nearest = 0.0
            else:
                others = [pc1_corr[i, j] for j in range(len(clusters)) if j != k]
                r2_nearest = float(min(max(others), 1.0))
            num, den = 1.0 - r2_own, 1.0 - r2_nearest
            if num <= DEGENERACY_TOL:
                ratio = 0.0
            elif den <= DEGENERACY_TOL:
                ratio = float("inf")
            else:
                ratio = num / den
            rows.append((v, r2_own, r2_nearest, ratio))
        best = min(rows, key=lambda r: (r[3], r[0]))[0]
        for v, r2_own, r2_nearest, ratio in sorted(rows, key=lambda r: r[0]):
            scores.append(
                VariableScore(
                    variable=v,
                    cluster=k,
                    r2_own=r2_own,
                    r2_nearest=r2_nearest,
                    ratio=ratio,
                    is_representative=(v == best),
                )
            )
    return ClusterSelection(clusters=tuple(clusters), scores=tuple(scores))
