"""Synthetic wide tables with a planted logistic ground truth.

The generator draws independent predictor columns of four kinds (binary
flags with occupancy between 5% and 60%, categoricals with 3-8 levels,
1..99 likelihood scales with per-column skew, and standard-normal
continuous variables), picks a subset of them as informative, and draws
the outcome from a logistic model over the standardized informative
columns.  The intercept is calibrated by bisection on the realized
responder count so the realized prevalence matches
n_signal / (n_signal + n_background).  Missing cells are then injected
into continuous and likelihood columns.

Everything is a pure function of the spec (including its seed) plus a
sample index: the same inputs reproduce the same table bit for bit.  The
spec seed drives a *structure* stream (column parameters, the choice of
informative variables, their coefficients) while the sample index picks
a *records* stream, so sibling samples -- e.g. an out-of-sample test set
drawn with index 1 -- share the identical data-generating process while
holding entirely fresh records.  The planted coefficients, intercept,
and the standardization constants they apply to are returned as ground
truth so fitted models can be compared against an oracle that scores
with the truth directly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ComputationError, ValidationError
from .evaluation import ScoreSet
from .logit import _sigmoid
from .table import ColumnKind, ColumnSpec, DataTable, TableSchema

KINDS = ("binary", "categorical", "likelihood", "continuous")

TARGET_NAME = "target"

CATEGORY_LABELS = "abcdefgh"

MAX_INTERCEPT = 60.0


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape and signal content of a generated table."""

    n_signal: int
    n_background: int
    n_informative: int
    n_noise: int
    kind_mix: dict[str, float]
    beta_range: tuple[float, float] = (0.3, 1.5)
    missing_rate: float = 0.0
    seed: int = 0
    n_correlated_pairs: int = 0
    correlated_r: float = 0.8

    def __post_init__(self):
        if self.n_signal < 1 or self.n_background < 1:
            raise ValidationError("n_signal and n_background must be >= 1")
        if self.n_informative < 0 or self.n_noise < 0 or self.n_predictors < 1:
            raise ValidationError("predictor counts must be non-negative and total >= 1")
        if set(self.kind_mix) - set(KINDS):
            raise ValidationError(
                f"kind_mix keys must be among {KINDS}, got {sorted(self.kind_mix)}"
            )
        if any(v < 0 for v in self.kind_mix.values()):
            raise ValidationError("kind_mix fractions must be non-negative")
        if abs(sum(self.kind_mix.values()) - 1.0) > 1e-9:
            raise ValidationError("kind_mix fractions must sum to 1")
        lo, hi = self.beta_range
        if not (0.0 < lo <= hi):
            raise ValidationError("beta_range must satisfy 0 < low <= high")
        if not (0.0 <= self.missing_rate <= 0.5):
            raise ValidationError("missing_rate must be in [0, 0.5]")
        if self.n_correlated_pairs < 0:
            raise ValidationError("n_correlated_pairs must be >= 0")
        if not (-1.0 < self.correlated_r < 1.0):
            raise ValidationError("correlated_r must be in (-1, 1)")

    @property
    def n_records(self) -> int:
        return self.n_signal + self.n_background

    @property
    def n_predictors(self) -> int:
        return self.n_informative + self.n_noise

    @property
    def target_prevalence(self) -> float:
        return self.n_signal / self.n_records

    def to_dict(self) -> dict:
        return {
            "n_signal": self.n_signal,
            "n_background": self.n_background,
            "n_informative": self.n_informative,
            "n_noise": self.n_noise,
            "kind_mix": dict(self.kind_mix),
            "beta_range": list(self.beta_range),
            "missing_rate": self.missing_rate,
            "seed": self.seed,
            "n_correlated_pairs": self.n_correlated_pairs,
            "correlated_r": self.correlated_r,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        try:
            return cls(
                n_signal=d["n_signal"],
                n_background=d["n_background"],
                n_informative=d["n_informative"],
                n_noise=d["n_noise"],
                kind_mix=dict(d["kind_mix"]),
                beta_range=tuple(d.get("beta_range", (0.3, 1.5))),
                missing_rate=d.get("missing_rate", 0.0),
                seed=d.get("seed", 0),
                n_correlated_pairs=d.get("n_correlated_pairs", 0),
                correlated_r=d.get("correlated_r", 0.8),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed synthetic spec: {exc}") from exc


@dataclass(frozen=True)
class GroundTruth:
    """Planted coefficients (per standardized unit) and the calibrated intercept."""

    planted: dict[str, float]
    intercept: float
    prevalence: float
    standardization: dict[str, tuple[float, float]]  # variable -> (mean, std)

    def to_dict(self) -> dict:
        return {
            "planted": dict(sorted(self.planted.items())),
            "intercept": self.intercept,
            "prevalence": self.prevalence,
            "standardization": {
                k: {"mean": m, "std": s}
                for k, (m, s) in sorted(self.standardization.items())
            },
        }


def _kind_counts(mix: dict[str, float], total: int) -> dict[str, int]:
    """Largest-remainder apportionment of the kind fractions over the total."""
    fracs = {k: mix.get(k, 0.0) for k in KINDS}
    floors = {k: math.floor(fracs[k] * total) for k in KINDS}
    leftover = total - sum(floors.values())
    by_remainder = sorted(KINDS, key=lambda k: (-(fracs[k] * total - floors[k]), k))
    for k in by_remainder[:leftover]:
        floors[k] += 1
    return floors


def generate(spec: SyntheticSpec, sample_index: int = 0) -> tuple[DataTable, GroundTruth]:
    """Draw a table plus its ground truth; deterministic given spec and index.

    sample_index 0 is the primary table; any other index yields a fresh,
    structurally identical sample (same column parameters, same planted
    variables and coefficients) suitable for out-of-sample testing.
    """
    if sample_index < 0:
        raise ValidationError("sample_index must be >= 0")
    structure = np.random.default_rng(np.random.SeedSequence([spec.seed, 0]))
    records = np.random.default_rng(np.random.SeedSequence([spec.seed, 1 + sample_index]))
    n = spec.n_records
    counts = _kind_counts(spec.kind_mix, spec.n_predictors)

    specs: list[ColumnSpec] = []
    columns: dict[str, np.ndarray] = {}
    names_by_kind: dict[str, list[str]] = {k: [] for k in KINDS}

    for i in range(counts["binary"]):
        name = f"bin_{i:03d}"
        occupancy = structure.uniform(0.05, 0.6)
        columns[name] = (records.random(n) < occupancy).astype(float)
        specs.append(ColumnSpec(name=name, kind=ColumnKind.BINARY))
        names_by_kind["binary"].append(name)
    for i in range(counts["categorical"]):
        name = f"cat_{i:03d}"
        n_levels = int(structure.integers(3, len(CATEGORY_LABELS) + 1))
        levels = tuple(CATEGORY_LABELS[:n_levels])
        probs = structure.dirichlet(np.full(n_levels, 2.0))
        columns[name] = records.choice(np.array(levels, dtype=object), size=n, p=probs)
        specs.append(ColumnSpec(name=name, kind=ColumnKind.CATEGORICAL, levels=levels))
        names_by_kind["categorical"].append(name)
    for i in range(counts["likelihood"]):
        name = f"lik_{i:03d}"
        skew = structure.uniform(0.5, 2.0)
        u = records.random(n)
        columns[name] = np.clip(np.floor(u**skew * 99.0) + 1.0, 1.0, 99.0)
        specs.append(ColumnSpec(name=name, kind=ColumnKind.LIKELIHOOD))
        names_by_kind["likelihood"].append(name)
    for i in range(counts["continuous"]):
        name = f"con_{i:03d}"
        columns[name] = records.standard_normal(n)
        specs.append(ColumnSpec(name=name, kind=ColumnKind.CONTINUOUS))
        names_by_kind["continuous"].append(name)

    all_names = [s.name for s in specs]
    planted_names = sorted(
        structure.choice(
            np.array(all_names, dtype=object), size=spec.n_informative, replace=False
        )
    )

    # Correlated pairs are built from continuous noise columns so the
    # redundancy is informative-free by construction.
    if spec.n_correlated_pairs:
        noise_cont = [
            v for v in names_by_kind["continuous"] if v not in set(planted_names)
        ]
        if len(noise_cont) < 2 * spec.n_correlated_pairs:
            raise ValidationError(
                f"{spec.n_correlated_pairs} correlated pairs need "
                f"{2 * spec.n_correlated_pairs} continuous noise columns, "
                f"have {len(noise_cont)}"
            )
        r = spec.correlated_r
        for p in range(spec.n_correlated_pairs):
            a, b = noise_cont[2 * p], noise_cont[2 * p + 1]
            columns[b] = r * columns[a] + math.sqrt(1.0 - r * r) * records.standard_normal(n)

    # Latent score over standardized planted columns.
    level_index = {
        s.name: {lvl: float(j) for j, lvl in enumerate(s.levels)}
        for s in specs
        if s.kind is ColumnKind.CATEGORICAL
    }
    standardization: dict[str, tuple[float, float]] = {}
    latent = np.zeros(n)
    planted: dict[str, float] = {}
    lo, hi = spec.beta_range
    for name in planted_names:
        beta = float(structure.uniform(lo, hi)) * float(structure.choice([-1.0, 1.0]))
        if name in level_index:
            values = np.array([level_index[name][v] for v in columns[name]])
        else:
            values = columns[name].astype(float)
        mean, std = float(values.mean()), float(values.std())
        if std == 0.0:
            raise ComputationError(
                f"planted column {name!r} is constant; cannot standardize"
            )
        latent += beta * (values - mean) / std
        planted[name] = beta
        standardization[name] = (mean, std)

    # Intercept calibration: y_i = 1 iff u_i < sigmoid(c + latent_i); the
    # responder count is monotone in c, so bisect c to the target count.
    u = records.random(n)
    want = spec.n_signal

    def count(c: float) -> int:
        return int(np.sum(u < _sigmoid(c + latent)))

    lo_c, hi_c = -MAX_INTERCEPT, MAX_INTERCEPT
    if count(lo_c) > want or count(hi_c) < want:
        raise ComputationError("intercept calibration infeasible for this spec")
    for _ in range(200):
        mid = 0.5 * (lo_c + hi_c)
        if count(mid) < want:
            lo_c = mid
        else:
            hi_c = mid
    intercept = hi_c
    y = (u < _sigmoid(intercept + latent)).astype(float)
    realized = float(y.mean())
    if abs(realized - spec.target_prevalence) > 0.01:
        raise ComputationError(
            f"calibrated prevalence {realized:.4f} misses target "
            f"{spec.target_prevalence:.4f} by more than one point"
        )

    if spec.missing_rate > 0.0:
        for kind in ("likelihood", "continuous"):
            for name in names_by_kind[kind]:
                mask = records.random(n) < spec.missing_rate
                if mask.all():
                    mask[0] = False  # keep the column imputable
                col = columns[name].copy()
                col[mask] = np.nan
                columns[name] = col

    specs.append(ColumnSpec(name=TARGET_NAME, kind=ColumnKind.BINARY))
    columns[TARGET_NAME] = y
    schema = TableSchema(columns=tuple(specs), target=TARGET_NAME)
    table = DataTable(schema, columns)
    truth = GroundTruth(
        planted=planted,
        intercept=intercept,
        prevalence=realized,
        standardization=standardization,
    )
    return table, truth


def oracle_metrics(truth: GroundTruth, table: DataTable) -> ScoreSet:
    """Score a table with the planted coefficients, bypassing any fitted model.

    Missing cells contribute zero to the latent score (the standardized
    mean), which keeps the oracle defined on tables with injected
    missingness.
    """
    for name in truth.planted:
        if name not in table.schema.names:
            raise ValidationError(f"planted variable {name!r} missing from table")
    latent = np.full(table.n_records, truth.intercept)
    for name, beta in truth.planted.items():
        mean, std = truth.standardization[name]
        z = (table.numeric_view(name) - mean) / std
        latent += beta * np.nan_to_num(z)
    p = _sigmoid(latent)
    return ScoreSet(ids=np.arange(table.n_records), p=p, y=table.target_values)


def save_ground_truth(truth: GroundTruth, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
