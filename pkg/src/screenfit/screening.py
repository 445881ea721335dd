"""Staged predictor screening against a binary target.

Four filters are applied in a fixed order, each shrinking the retained
variable set: a chi-square screen over binary predictors, a two-sample
t screen over multivalued numeric predictors, an information-value band
over discrete predictors, and a final stage that clusters the survivors
(see :mod:`screenfit.varclus`), keeps one representative per cluster,
drops sparse binary flags, and merges statistically indistinguishable
categorical levels.  Every stage's statistics and retained set are
recorded in a :class:`ScreeningReport` whose stage sets are nested.

Likelihood-scale columns (integers 1..99) are treated as numeric for the
t screen and binned into seven equal-width bins for weight-of-evidence /
information-value work and for proportion curves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import varclus
from .errors import ComputationError, ValidationError
from .table import (
    LIKELIHOOD_MAX,
    LIKELIHOOD_MIN,
    ColumnKind,
    ColumnSpec,
    DataTable,
)

N_LIKELIHOOD_BINS = 7

DEFAULT_IV_SMOOTHING = 0.5


# ---------------------------------------------------------------------------
# Result containers


@dataclass(frozen=True)
class ChiSquareResult:
    variable: str
    statistic: float
    df: int
    p_value: float


@dataclass(frozen=True)
class TTestResult:
    variable: str
    t_statistic: float
    df: int

    @property
    def abs_rank_key(self) -> float:
        return abs(self.t_statistic)


@dataclass(frozen=True)
class IvLevelRow:
    level: str
    signal_share: float
    background_share: float
    woe: float
    iv_contribution: float


@dataclass(frozen=True)
class IvResult:
    variable: str
    rows: tuple[IvLevelRow, ...]
    total_iv: float


@dataclass(frozen=True)
class LevelMapping:
    """Surjective map from a categorical column's original levels onto merged ids.

    Each merged id is the lexicographically smallest member of its group,
    which makes repeated application idempotent.
    """

    variable: str
    mapping: dict[str, str]

    def groups(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {}
        for orig, merged in self.mapping.items():
            out.setdefault(merged, []).append(orig)
        return {k: tuple(sorted(v)) for k, v in sorted(out.items())}

    @property
    def n_merged(self) -> int:
        return len(set(self.mapping.values()))


@dataclass(frozen=True)
class ProportionPoint:
    level: str
    count_signal: int
    count_background: int
    proportion: float | None  # None when the level is absent from one class
    defined: bool


@dataclass(frozen=True)
class StagePlan:
    """Retention targets and thresholds for the screening cascade.

    Counts are totals after each stage and must decrease strictly:
    retain_after_chi2 > retain_after_t > retain_after_iv > final_retain.
    """

    retain_after_chi2: int
    retain_after_t: int
    retain_after_iv: int
    final_retain: int
    iv_min: float = 0.03
    iv_max: float = 0.5
    occupancy_min: float = 0.10
    level_merge_alpha: float = 0.05
    iv_smoothing: float = DEFAULT_IV_SMOOTHING

    def __post_init__(self):
        counts = (
            self.retain_after_chi2,
            self.retain_after_t,
            self.retain_after_iv,
            self.final_retain,
        )
        if any(c < 1 for c in counts):
            raise ValidationError("stage counts must be >= 1")
        if not all(a > b for a, b in zip(counts, counts[1:])):
            raise ValidationError(
                f"stage counts must decrease strictly, got {counts}"
            )
        if not (0.0 < self.iv_min < self.iv_max):
            raise ValidationError("need 0 < iv_min < iv_max")
        if not (0.0 <= self.occupancy_min <= 1.0):
            raise ValidationError("occupancy_min must be in [0, 1]")
        if not (0.0 <= self.level_merge_alpha < 1.0):
            raise ValidationError("level_merge_alpha must be in [0, 1)")
        if self.iv_smoothing < 0.0:
            raise ValidationError("iv_smoothing must be >= 0")


@dataclass
class ScreeningReport:
    """Per-stage retained sets (nested) plus the statistics behind each cut."""

    stages: list[tuple[str, list[str]]] = field(default_factory=list)
    chi_square: dict[str, ChiSquareResult] = field(default_factory=dict)
    t_test: dict[str, TTestResult] = field(default_factory=dict)
    iv: dict[str, IvResult] = field(default_factory=dict)
    level_mappings: dict[str, LevelMapping] = field(default_factory=dict)
    cluster_selection: varclus.ClusterSelection | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def final_variables(self) -> list[str]:
        return list(self.stages[-1][1]) if self.stages else []

    def to_dict(self) -> dict:
        return {
            "stages": [{"stage": s, "retained": vs} for s, vs in self.stages],
            "chi_square": {
                v: {"statistic": r.statistic, "df": r.df, "p_value": r.p_value}
                for v, r in sorted(self.chi_square.items())
            },
            "t_test": {
                v: {"t_statistic": r.t_statistic, "df": r.df}
                for v, r in sorted(self.t_test.items())
            },
            "iv": {
                v: {
                    "total_iv": r.total_iv,
                    "levels": [
                        {
                            "level": row.level,
                            "signal_share": row.signal_share,
                            "background_share": row.background_share,
                            "woe": row.woe,
                            "iv_contribution": row.iv_contribution,
                        }
                        for row in r.rows
                    ],
                }
                for v, r in sorted(self.iv.items())
            },
            "level_mappings": {
                v: dict(sorted(m.mapping.items()))
                for v, m in sorted(self.level_mappings.items())
            },
            "warnings": list(self.warnings),
        }


# ---------------------------------------------------------------------------
# Level extraction helpers


def _likelihood_bin_edges() -> np.ndarray:
    return np.linspace(LIKELIHOOD_MIN, LIKELIHOOD_MAX, N_LIKELIHOOD_BINS + 1)


def _likelihood_bin_labels() -> list[str]:
    edges = _likelihood_bin_edges()
    labels = []
    for i in range(N_LIKELIHOOD_BINS):
        lo, hi = edges[i], edges[i + 1]
        close = "]" if i == N_LIKELIHOOD_BINS - 1 else ")"
        labels.append(f"[{lo:g},{hi:g}{close}")
    return labels


def discrete_levels(table: DataTable, variable: str) -> tuple[np.ndarray, np.ndarray]:
    """(labels, level-index per row) for a variable usable in level-wise stats.

    Binary columns yield levels "0"/"1"; categorical columns their string
    levels; likelihood columns the seven equal-width bins over [1, 99].
    Missing rows get index -1.  Returned labels cover only levels that
    occur in the data (plus, for likelihood, all occupied bins).
    """
    spec = table.schema.column(variable)
    if spec.kind is ColumnKind.CONTINUOUS:
        raise ValidationError(
            f"{variable!r} is continuous; level-wise statistics need a discrete kind"
        )
    if spec.kind is ColumnKind.LIKELIHOOD:
        values = table.column(variable)
        mask = np.isnan(values)
        edges = _likelihood_bin_edges()
        # searchsorted puts x == edge into the left bin's right edge; shift
        # so bins are [lo, hi) with the last bin closed.
        idx = np.searchsorted(edges, values, side="right") - 1
        idx = np.clip(idx, 0, N_LIKELIHOOD_BINS - 1)
        idx[mask] = -1
        labels = np.array(_likelihood_bin_labels(), dtype=object)
        occupied = np.unique(idx[idx >= 0])
        remap = -np.ones(N_LIKELIHOOD_BINS, dtype=int)
        remap[occupied] = np.arange(len(occupied))
        out = np.where(idx >= 0, remap[np.clip(idx, 0, None)], -1)
        return labels[occupied], out
    col = table.column(variable)
    if spec.kind is ColumnKind.BINARY:
        mask = np.isnan(col)
        present = sorted(set(col[~mask].astype(int)))
        labels = np.array([str(v) for v in present], dtype=object)
        index = {v: i for i, v in enumerate(present)}
        out = np.array(
            [index[int(v)] if not np.isnan(v) else -1 for v in col], dtype=int
        )
        return labels, out
    # categorical
    mask = np.array([v is None for v in col], dtype=bool)
    present = sorted({v for v in col if v is not None})
    labels = np.array(present, dtype=object)
    index = {v: i for i, v in enumerate(present)}
    out = np.array([index[v] if v is not None else -1 for v in col], dtype=int)
    return labels, out


def _level_class_counts(
    table: DataTable, variable: str
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(labels, count per level among y=1, count per level among y=0)."""
    labels, idx = discrete_levels(table, variable)
    y = table.target_values
    keep = idx >= 0
    L = len(labels)
    n1 = np.bincount(idx[keep & (y == 1)], minlength=L).astype(float)
    n0 = np.bincount(idx[keep & (y == 0)], minlength=L).astype(float)
    return labels, n1, n0


def _require_both_classes(table: DataTable) -> None:
    n0, n1 = table.class_counts()
    if n0 == 0 or n1 == 0:
        raise ComputationError("target is constant; both classes are required")


# ---------------------------------------------------------------------------
# Per-variable statistics


def chi_square_binary(table: DataTable, variable: str, target: str | None = None) -> ChiSquareResult:
    """Pearson chi-square of a binary variable against the binary target.

    Computed on the 2x2 contingency table of pairwise non-missing rows,
    df = 1, no continuity correction.  All four margins must be nonzero.
    """
    target = target or table.schema.target
    spec = table.schema.column(variable)
    if spec.kind is not ColumnKind.BINARY:
        raise ValidationError(f"{variable!r} is not binary")
    x = table.column(variable)
    y = table.column(target)
    keep = ~np.isnan(x)
    x, y = x[keep].astype(int), y[keep].astype(int)
    obs = np.zeros((2, 2))
    for xi in (0, 1):
        for yi in (0, 1):
            obs[xi, yi] = np.sum((x == xi) & (y == yi))
    if (obs.sum(axis=0) == 0).any() or (obs.sum(axis=1) == 0).any():
        raise ComputationError(
            f"degenerate 2x2 table for {variable!r}: a margin is zero"
        )
    expected = np.outer(obs.sum(axis=1), obs.sum(axis=0)) / obs.sum()
    statistic = float(((obs - expected) ** 2 / expected).sum())
    p = float(stats.chi2.sf(statistic, df=1))
    return ChiSquareResult(variable=variable, statistic=statistic, df=1, p_value=p)


def t_test_multivalued(table: DataTable, variable: str, target: str | None = None) -> TTestResult:
    """Pooled-variance two-sample t of a numeric variable across target groups.

    Sign follows mean(target=1) - mean(target=0); df = n0 + n1 - 2.
    """
    target = target or table.schema.target
    spec = table.schema.column(variable)
    if spec.kind not in (ColumnKind.CONTINUOUS, ColumnKind.LIKELIHOOD):
        raise ValidationError(
            f"{variable!r} is {spec.kind.value}; the t screen needs a multivalued numeric column"
        )
    x = table.column(variable)
    y = table.column(target).astype(int)
    keep = ~np.isnan(x)
    g0 = x[keep & (y == 0)]
    g1 = x[keep & (y == 1)]
    if len(g0) < 2 or len(g1) < 2:
        raise ValidationError(
            f"{variable!r}: each target group needs >= 2 non-missing values "
            f"(got {len(g0)} and {len(g1)})"
        )
    diff = float(g1.mean() - g0.mean())
    df = len(g0) + len(g1) - 2
    pooled_var = float(
        ((len(g0) - 1) * g0.var(ddof=1) + (len(g1) - 1) * g1.var(ddof=1)) / df
    )
    if pooled_var == 0.0:
        if diff == 0.0:
            return TTestResult(variable=variable, t_statistic=0.0, df=df)
        raise ComputationError(
            f"{variable!r}: zero pooled variance with unequal group means (infinite t)"
        )
    se = np.sqrt(pooled_var * (1.0 / len(g0) + 1.0 / len(g1)))
    return TTestResult(variable=variable, t_statistic=diff / se, df=df)


def woe_iv(
    table: DataTable,
    variable: str,
    target: str | None = None,
    smoothing: float = DEFAULT_IV_SMOOTHING,
) -> IvResult:
    """Weight of evidence and information value of a discrete variable.

    Per level, with pseudo-count smoothing s over L levels:
        signal_share     = (n_1,level + s) / (n_1 + s*L)
        background_share = (n_0,level + s) / (n_0 + s*L)
        woe              = ln(signal_share / background_share)
        contribution     = (signal_share - background_share) * woe
    and total IV is the sum of contributions.  A single-level variable
    has IV 0 by construction.
    """
    _require_both_classes(table)
    target = target or table.schema.target
    labels, n1, n0 = _level_class_counts(table, variable)
    L = len(labels)
    if L == 0:
        raise ComputationError(f"{variable!r} has no non-missing values")
    s = smoothing
    sig = (n1 + s) / (n1.sum() + s * L)
    bkg = (n0 + s) / (n0.sum() + s * L)
    if s == 0.0 and ((n1 == 0) | (n0 == 0)).any():
        raise ComputationError(
            f"{variable!r}: empty level with smoothing off; WoE is undefined"
        )
    woe = np.log(sig / bkg)
    contrib = (sig - bkg) * woe
    rows = tuple(
        IvLevelRow(
            level=str(labels[i]),
            signal_share=float(sig[i]),
            background_share=float(bkg[i]),
            woe=float(woe[i]),
            iv_contribution=float(contrib[i]),
        )
        for i in range(L)
    )
    return IvResult(variable=variable, rows=rows, total_iv=float(contrib.sum()))


def occupancy_filter(
    table: DataTable, variables: list[str], min_frac: float
) -> list[str]:
    """Retain binary variables whose share of ones (among non-missing) is >= min_frac."""
    retained = []
    for name in variables:
        spec = table.schema.column(name)
        if spec.kind is not ColumnKind.BINARY:
            raise ValidationError(f"occupancy filter applies to binary columns; {name!r} is {spec.kind.value}")
        x = table.column(name)
        x = x[~np.isnan(x)]
        if len(x) == 0:
            continue
        if float(x.mean()) >= min_frac:
            retained.append(name)
    return retained


def _pair_chi_square(n1_a: float, n0_a: float, n1_b: float, n0_b: float) -> float:
    """Pearson chi-square of a 2x2 (group a/b vs target) table; 0 when a
    target margin is empty (both groups then have identical rates)."""
    obs = np.array([[n0_a, n1_a], [n0_b, n1_b]], dtype=float)
    col = obs.sum(axis=0)
    row = obs.sum(axis=1)
    if (col == 0).any() or (row == 0).any():
        return 0.0
    expected = np.outer(row, col) / obs.sum()
    return float(((obs - expected) ** 2 / expected).sum())


def merge_levels(
    table: DataTable, variable: str, target: str | None = None, alpha: float = 0.05
) -> LevelMapping:
    """Greedily merge categorical levels that are indistinguishable on the target.

    Repeatedly takes the pair of current levels with the closest target
    rates, tests the pair's 2x2 chi-square against the target, and fuses
    the pair when p > alpha; stops at the first pair that fails.  With
    alpha = 0 merging is disabled and the identity mapping is returned
    (any finite chi-square has p > 0, so a literal p > 0 rule would fuse
    everything).
    """
    _require_both_classes(table)
    spec = table.schema.column(variable)
    if spec.kind is not ColumnKind.CATEGORICAL:
        raise ValidationError(f"merge_levels applies to categorical columns; {variable!r} is {spec.kind.value}")
    labels, n1, n0 = _level_class_counts(table, variable)
    groups: list[list[str]] = [[str(v)] for v in labels]
    counts1 = list(n1)
    counts0 = list(n0)

    def mapping_from_groups() -> LevelMapping:
        m = {}
        for members in groups:
            rep = min(members)
            for lvl in members:
                m[lvl] = rep
        # levels declared in the schema but absent from the data map to themselves
        for lvl in spec.levels or ():
            m.setdefault(lvl, lvl)
        return LevelMapping(variable=variable, mapping=m)

    if alpha <= 0.0:
        return mapping_from_groups()

    while len(groups) > 1:
        rates = [
            c1 / (c1 + c0) if (c1 + c0) > 0 else 0.0
            for c1, c0 in zip(counts1, counts0)
        ]
        best = None
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                key = (abs(rates[i] - rates[j]), min(groups[i]), min(groups[j]))
                if best is None or key < best[0]:
                    best = (key, i, j)
        _, i, j = best
        statistic = _pair_chi_square(counts1[i], counts0[i], counts1[j], counts0[j])
        p = float(stats.chi2.sf(statistic, df=1))
        if p <= alpha:
            break
        groups[i] = groups[i] + groups[j]
        counts1[i] += counts1[j]
        counts0[i] += counts0[j]
        del groups[j], counts1[j], counts0[j]
    return mapping_from_groups()


def apply_level_mapping(table: DataTable, mapping: LevelMapping) -> DataTable:
    """Rewrite a categorical column through a level mapping, updating its spec.

    Levels without an entry in the mapping are left as-is, so mappings
    learned on one table can be applied to later tables that may carry
    extra levels.
    """
    spec = table.schema.column(mapping.variable)
    if spec.kind is not ColumnKind.CATEGORICAL:
        raise ValidationError(f"{mapping.variable!r} is not categorical")
    col = table.column(mapping.variable)
    new_col = np.array(
        [mapping.mapping.get(v, v) if v is not None else None for v in col],
        dtype=object,
    )
    new_levels = tuple(sorted({mapping.mapping.get(v, v) for v in spec.levels}))
    if len(new_levels) < 2:
        raise ComputationError(
            f"{mapping.variable!r}: merging collapsed the column to a single level"
        )
    new_spec = ColumnSpec(name=spec.name, kind=spec.kind, levels=new_levels)
    return table.replace_column(mapping.variable, new_col, new_spec)


def proportion_curve(
    table: DataTable, variable: str, target: str | None = None
) -> list[ProportionPoint]:
    """Per-level ratio of class shares, scaled so 100 means equal shares.

    proportion(level) = 100 * (share of target=1 records at the level)
                            / (share of target=0 records at the level).
    Levels absent from either class are flagged undefined rather than
    given a number.
    """
    _require_both_classes(table)
    labels, n1, n0 = _level_class_counts(table, variable)
    total1, total0 = n1.sum(), n0.sum()
    points = []
    for i, label in enumerate(labels):
        if n1[i] == 0 or n0[i] == 0:
            points.append(
                ProportionPoint(
                    level=str(label),
                    count_signal=int(n1[i]),
                    count_background=int(n0[i]),
                    proportion=None,
                    defined=False,
                )
            )
            continue
        share1 = n1[i] / total1
        share0 = n0[i] / total0
        points.append(
            ProportionPoint(
                level=str(label),
                count_signal=int(n1[i]),
                count_background=int(n0[i]),
                proportion=float(100.0 * share1 / share0),
                defined=True,
            )
        )
    return points


def export_proportion_curve(points: list[ProportionPoint], path) -> None:
    """Write (level, count_signal, count_background, proportion) as CSV; undefined points get an empty proportion."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["level", "count_signal", "count_background", "proportion"])
        for p in points:
            writer.writerow(
                [
                    p.level,
                    p.count_signal,
                    p.count_background,
                    repr(p.proportion) if p.defined else "",
                ]
            )


# ---------------------------------------------------------------------------
# The cascade


def _drop_to_count(
    retained: list[str],
    droppable_ranked: list[str],
    want_total: int,
    stage: str,
) -> list[str]:
    """Remove the lowest-ranked droppable variables until len == want_total.

    droppable_ranked is ordered best-first; variables not in it are kept
    unconditionally.
    """
    n_drop = len(retained) - want_total
    if n_drop < 0:
        raise ValidationError(
            f"{stage}: plan wants {want_total} variables but only {len(retained)} remain"
        )
    if n_drop == 0:
        return list(retained)
    if n_drop > len(droppable_ranked):
        raise ValidationError(
            f"{stage}: plan needs {n_drop} variables dropped but only "
            f"{len(droppable_ranked)} are eligible"
        )
    dropped = set(droppable_ranked[len(droppable_ranked) - n_drop :])
    return [v for v in retained if v not in dropped]


def run_screening(table: DataTable, plan: StagePlan) -> ScreeningReport:
    """Run the full screening cascade and record every stage.

    Stage order: chi-square screen over binary predictors (other kinds
    pass through), |t| screen over multivalued numeric predictors, IV
    band [iv_min, iv_max] over discrete predictors capped at the stage
    count by IV rank (continuous pass through), then variable clustering
    down to final_retain representatives followed by the binary occupancy
    filter and categorical level merging.  Retained sets are nested and
    listed in schema column order.
    """
    _require_both_classes(table)
    schema_order = {name: i for i, name in enumerate(table.schema.names)}
    predictors = table.schema.predictors
    report = ScreeningReport()
    report.stages.append(("input", list(predictors)))

    def kind(name: str) -> ColumnKind:
        return table.schema.column(name).kind

    # --- stage 1: chi-square over binary predictors
    binaries = [v for v in predictors if kind(v) is ColumnKind.BINARY]
    for v in binaries:
        report.chi_square[v] = chi_square_binary(table, v)
    ranked = sorted(
        binaries, key=lambda v: (-report.chi_square[v].statistic, schema_order[v])
    )
    retained = _drop_to_count(predictors, ranked, plan.retain_after_chi2, "chi-square stage")
    report.stages.append(("chi_square", retained))

    # --- stage 2: |t| over multivalued numeric predictors
    multivalued = [
        v for v in retained if kind(v) in (ColumnKind.CONTINUOUS, ColumnKind.LIKELIHOOD)
    ]
    for v in multivalued:
        report.t_test[v] = t_test_multivalued(table, v)
    ranked = sorted(
        multivalued, key=lambda v: (-report.t_test[v].abs_rank_key, schema_order[v])
    )
    retained = _drop_to_count(retained, ranked, plan.retain_after_t, "t-test stage")
    report.stages.append(("t_test", retained))

    # --- stage 3: information-value band over discrete predictors
    discrete = [v for v in retained if kind(v) is not ColumnKind.CONTINUOUS]
    for v in discrete:
        report.iv[v] = woe_iv(table, v, smoothing=plan.iv_smoothing)
    in_band = [
        v for v in discrete if plan.iv_min <= report.iv[v].total_iv <= plan.iv_max
    ]
    retained = [v for v in retained if kind(v) is ColumnKind.CONTINUOUS or v in set(in_band)]
    if len(retained) > plan.retain_after_iv:
        ranked = sorted(
            in_band, key=lambda v: (-report.iv[v].total_iv, schema_order[v])
        )
        retained = _drop_to_count(retained, ranked, plan.retain_after_iv, "IV stage")
    if not retained:
        raise ComputationError("IV stage retained no variables")
    report.stages.append(("information_value", retained))

    # --- stage 4: variable clustering, occupancy filter, level merging
    if len(retained) < plan.final_retain:
        raise ValidationError(
            f"clustering stage: plan wants {plan.final_retain} clusters but only "
            f"{len(retained)} variables remain"
        )
    numeric = np.column_stack([table.numeric_view(v) for v in retained])
    corr = varclus.correlation_matrix_from_array(numeric, retained)
    clusters = varclus.cluster_variables(corr, n_clusters=plan.final_retain)
    selection = varclus.select_representatives(clusters, corr)
    report.cluster_selection = selection
    retained = sorted(selection.representatives(), key=schema_order.__getitem__)

    flags = [v for v in retained if kind(v) is ColumnKind.BINARY]
    kept_flags = set(occupancy_filter(table, flags, plan.occupancy_min))
    retained = [v for v in retained if kind(v) is not ColumnKind.BINARY or v in kept_flags]

    final = []
    for v in retained:
        if kind(v) is ColumnKind.CATEGORICAL:
            mapping = merge_levels(table, v, alpha=plan.level_merge_alpha)
            report.level_mappings[v] = mapping
            if mapping.n_merged < 2:
                report.warnings.append(
                    f"{v}: level merging collapsed the column to one level; dropped"
                )
                continue
        final.append(v)
    if not final:
        raise ComputationError("final screening stage retained no variables")
    report.stages.append(("cluster_occupancy_merge", final))

    # nestedness is structural; assert it cheaply as a guard
    for (_, prev), (_, cur) in zip(report.stages, report.stages[1:]):
        assert set(cur) <= set(prev)
    return report
