"""Maximum-likelihood logistic regression with stepwise selection.

The design matrix carries an explicit intercept column plus one column
per term, where a term is a standardized numeric variable (z-scored with
stored training mean/std), a dummy level of a categorical variable
against its most-frequent reference level, or a raw 0/1 flag.  Fitting
is Newton / iteratively-reweighted least squares with step-halving so
the deviance never increases, a small ridge jitter on the information
matrix for rank safety, and a complete-separation warning when any
coefficient runs past +-30.

Selection is forward with backward elimination: a candidate enters when
its single-term likelihood-ratio p-value clears p_enter AND the entry
lowers the Schwarz Bayesian criterion; in-model terms whose Wald p-value
exceeds p_stay are removed after each entry.  A final collinearity pass
drops one member of any term pair correlated beyond a cutoff, keeping
whichever member scores better on held-out decile statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .errors import ComputationError, ValidationError
from .table import ColumnKind, DataTable

PROB_CLAMP = 1e-12

SEPARATION_BETA = 30.0

STANDARDIZED = "standardized"
DUMMY = "dummy"
FLAG = "flag"


@dataclass(frozen=True)
class Term:
    """One design column: where it came from and how it is encoded."""

    source: str
    encoding: str
    mean: float | None = None
    std: float | None = None
    level: str | None = None
    reference: str | None = None

    def __post_init__(self):
        if self.encoding == STANDARDIZED:
            if self.std is None or self.std <= 0 or self.mean is None:
                raise ValidationError(
                    f"standardized term {self.source!r} needs a mean and a positive std"
                )
        elif self.encoding == DUMMY:
            if self.level is None or self.reference is None or self.level == self.reference:
                raise ValidationError(
                    f"dummy term {self.source!r} needs a level distinct from its reference"
                )
        elif self.encoding != FLAG:
            raise ValidationError(f"unknown term encoding {self.encoding!r}")

    @property
    def name(self) -> str:
        if self.encoding == DUMMY:
            return f"{self.source}={self.level}"
        return self.source

    def to_dict(self) -> dict:
        d: dict = {"source": self.source, "encoding": self.encoding}
        if self.encoding == STANDARDIZED:
            d["mean"], d["std"] = self.mean, self.std
        elif self.encoding == DUMMY:
            d["level"], d["reference"] = self.level, self.reference
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Term":
        return cls(
            source=d["source"],
            encoding=d["encoding"],
            mean=d.get("mean"),
            std=d.get("std"),
            level=d.get("level"),
            reference=d.get("reference"),
        )


@dataclass(frozen=True)
class DesignMatrix:
    """n x (k+1) design with a leading intercept column and a 0/1 response."""

    terms: tuple[Term, ...]
    X: np.ndarray
    y: np.ndarray
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if self.X.shape != (len(self.y), len(self.terms) + 1):
            raise ValidationError(
                f"design shape {self.X.shape} does not match "
                f"{len(self.y)} rows x {len(self.terms)} terms + intercept"
            )
        if not np.isin(self.y, (0, 1)).all():
            raise ValidationError("response values must be 0 or 1")

    @property
    def n(self) -> int:
        return len(self.y)

    def select(self, indices: list[int]) -> "DesignMatrix":
        """Sub-design with the intercept plus the given term indices, in order."""
        cols = [0] + [i + 1 for i in indices]
        return DesignMatrix(
            terms=tuple(self.terms[i] for i in indices),
            X=self.X[:, cols],
            y=self.y,
            warnings=self.warnings,
        )


@dataclass(frozen=True)
class LogisticModel:
    """Fitted coefficients and their derived statistics.

    Arrays are aligned as [intercept, term_0, term_1, ...].  The
    standardized estimate is the coefficient itself for standardized
    terms and None for the intercept, flags, and dummies, which are not
    on a common scale.
    """

    terms: tuple[Term, ...]
    beta: np.ndarray
    se: np.ndarray
    wald: np.ndarray
    p_values: np.ndarray
    standardized_estimate: tuple[float | None, ...]
    exp_est: np.ndarray
    log_likelihood: float
    sbc: float
    n: int
    converged: bool
    iterations: int
    warnings: tuple[str, ...] = ()
    deviance_path: tuple[float, ...] = field(default=(), repr=False)

    @property
    def k_params(self) -> int:
        return len(self.beta)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(X @ self.beta)

    def term_names(self) -> list[str]:
        return [t.name for t in self.terms]

    def source_variables(self) -> list[str]:
        seen: list[str] = []
        for t in self.terms:
            if t.source not in seen:
                seen.append(t.source)
        return seen


# ---------------------------------------------------------------------------
# Encoding


def encode_design(
    table: DataTable,
    variables: list[str],
    target: str | None = None,
    template: tuple[Term, ...] | None = None,
) -> DesignMatrix:
    """Build the model design from screened, fully imputed variables.

    Training mode (no template): numeric variables are z-scored with
    their training mean and population std, categoricals expand to
    dummies against the most-frequent level, binaries stay as 0/1 flags,
    and constant columns are dropped with a warning.  Scoring mode
    (template given): the template's terms are reproduced exactly with
    their stored statistics; a categorical level unseen in training maps
    to the reference (all dummies zero) with a warning.
    """
    target = target or table.schema.target
    y = table.column(target).astype(int)

    used = list(variables) if template is None else sorted({t.source for t in template})
    for v in used:
        if table.missing_mask(v).any():
            raise ValidationError(f"variable {v!r} has missing values; impute first")

    warnings: list[str] = []
    if template is not None:
        columns = []
        for term in template:
            if term.encoding == STANDARDIZED:
                values = table.column(term.source).astype(float)
                columns.append((values - term.mean) / term.std)
            elif term.encoding == FLAG:
                columns.append(table.column(term.source).astype(float))
            else:
                col = table.column(term.source)
                columns.append(np.array([1.0 if v == term.level else 0.0 for v in col]))
        dummy_sources = {t.source: t for t in template if t.encoding == DUMMY}
        for source, term in dummy_sources.items():
            known = {t.level for t in template if t.source == source} | {term.reference}
            unseen = sorted({v for v in table.column(source)} - known)
            for lvl in unseen:
                warnings.append(
                    f"{source}: level {lvl!r} unseen in training; mapped to reference "
                    f"{term.reference!r}"
                )
        terms = tuple(template)
    else:
        terms_list: list[Term] = []
        columns = []
        for v in variables:
            spec = table.schema.column(v)
            if spec.kind in (ColumnKind.CONTINUOUS, ColumnKind.LIKELIHOOD):
                values = table.column(v).astype(float)
                mean, std = float(values.mean()), float(values.std())
                if std == 0.0:
                    warnings.append(f"{v}: constant column dropped from the design")
                    continue
                terms_list.append(Term(source=v, encoding=STANDARDIZED, mean=mean, std=std))
                columns.append((values - mean) / std)
            elif spec.kind is ColumnKind.BINARY:
                values = table.column(v).astype(float)
                if values.std() == 0.0:
                    warnings.append(f"{v}: constant column dropped from the design")
                    continue
                terms_list.append(Term(source=v, encoding=FLAG))
                columns.append(values)
            else:
                col = table.column(v)
                counts: dict[str, int] = {lvl: 0 for lvl in spec.levels}
                for val in col:
                    counts[val] += 1
                reference = min(spec.levels, key=lambda lvl: (-counts[lvl], lvl))
                for lvl in spec.levels:
                    if lvl == reference:
                        continue
                    dummy = np.array([1.0 if val == lvl else 0.0 for val in col])
                    if dummy.std() == 0.0:
                        warnings.append(
                            f"{v}={lvl}: constant dummy column dropped from the design"
                        )
                        continue
                    terms_list.append(
                        Term(source=v, encoding=DUMMY, level=lvl, reference=reference)
                    )
                    columns.append(dummy)
        terms = tuple(terms_list)

    X = np.column_stack([np.ones(table.n_records)] + columns) if columns else np.ones(
        (table.n_records, 1)
    )
    return DesignMatrix(terms=terms, X=X, y=y, warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# Likelihood and fitting


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_likelihood(design: DesignMatrix, beta: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """(logL, gradient, hessian) of the Bernoulli log-likelihood at beta.

    Probabilities are clamped to [1e-12, 1 - 1e-12] before the logs;
    gradient = X'(y - p) and hessian = -X'WX with W = diag(p(1-p)).
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (design.X.shape[1],):
        raise ValidationError(
            f"beta has length {beta.shape}, design has {design.X.shape[1]} columns"
        )
    p = _sigmoid(design.X @ beta)
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    logL = float(np.sum(design.y * np.log(pc) + (1 - design.y) * np.log(1.0 - pc)))
    gradient = design.X.T @ (design.y - p)
    w = p * (1.0 - p)
    hessian = -(design.X.T * w) @ design.X
    return logL, gradient, hessian


def _logL_only(design: DesignMatrix, beta: np.ndarray) -> float:
    p = np.clip(_sigmoid(design.X @ beta), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.sum(design.y * np.log(p) + (1 - design.y) * np.log(1.0 - p)))


def sbc(logL: float, k_params: int, n: int) -> float:
    """Schwarz Bayesian criterion, -2*logL + k*ln(n); lower is better."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    return -2.0 * logL + k_params * math.log(n)


def fit_irls(
    design: DesignMatrix,
    tol: float = 1e-8,
    max_iter: int = 50,
    ridge: float = 1e-8,
    beta0: np.ndarray | None = None,
) -> LogisticModel:
    """Newton/IRLS maximum-likelihood fit.

    Stops when the largest coefficient update falls below tol; halves the
    step whenever it would decrease the log-likelihood.  Standard errors
    come from the inverse of the ridge-jittered information matrix.  On
    hitting max_iter the model is returned with converged=False rather
    than raising.
    """
    k = design.X.shape[1]
    if design.n <= k:
        raise ValidationError(
            f"need more records ({design.n}) than design columns ({k})"
        )
    if design.y.min() == design.y.max():
        raise ValidationError("response has a single class; cannot fit")

    beta = np.zeros(k) if beta0 is None else np.asarray(beta0, dtype=float).copy()
    logL, gradient, hessian = log_likelihood(design, beta)
    deviances = [-2.0 * logL]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        info = -hessian + ridge * np.eye(k)
        try:
            delta = np.linalg.solve(info, gradient)
        except np.linalg.LinAlgError as exc:
            raise ComputationError(f"singular information matrix: {exc}") from exc
        step = 1.0
        for _ in range(40):
            candidate = beta + step * delta
            cand_logL = _logL_only(design, candidate)
            if cand_logL >= logL - 1e-10:
                break
            step /= 2.0
        else:
            # No improving step exists; treat the current point as final.
            converged = True
            break
        beta = candidate
        moved = float(np.max(np.abs(step * delta)))
        logL, gradient, hessian = log_likelihood(design, beta)
        deviances.append(-2.0 * logL)
        if moved < tol:
            converged = True
            break

    info = -hessian + ridge * np.eye(k)
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise ComputationError(f"singular information matrix: {exc}") from exc
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))

    warnings = []
    if np.any(np.abs(beta) > SEPARATION_BETA):
        warnings.append(
            "possible complete or quasi-complete separation: a coefficient "
            f"exceeds |{SEPARATION_BETA:g}|"
        )

    model = LogisticModel(
        terms=design.terms,
        beta=beta,
        se=se,
        wald=np.zeros(k),
        p_values=np.ones(k),
        standardized_estimate=(None,) * k,
        exp_est=np.ones(k),
        log_likelihood=logL,
        sbc=sbc(logL, k, design.n),
        n=design.n,
        converged=converged,
        iterations=iterations,
        warnings=tuple(warnings),
        deviance_path=tuple(deviances),
    )
    return wald_and_derived(model)


def wald_and_derived(model: LogisticModel) -> LogisticModel:
    """Fill Wald chi-square, p-values, exp(estimate), and standardized estimates.

    wald = (beta/se)^2 with p from the chi-square(1) upper tail; the
    standardized estimate is reported only for standardized terms.
    """
    with np.errstate(divide="ignore"):
        wald = np.where(model.se > 0, (model.beta / np.where(model.se > 0, model.se, 1.0)) ** 2, np.inf)
    p = stats.chi2.sf(wald, df=1)
    std_est: list[float | None] = [None]
    for term, b in zip(model.terms, model.beta[1:]):
        std_est.append(float(b) if term.encoding == STANDARDIZED else None)
    return replace(
        model,
        wald=wald,
        p_values=p,
        exp_est=np.exp(model.beta),
        standardized_estimate=tuple(std_est),
    )


# ---------------------------------------------------------------------------
# Stepwise selection


@dataclass(frozen=True)
class StepwiseStep:
    action: str  # "enter" | "remove"
    term: str
    p_value: float
    sbc_after: float


@dataclass(frozen=True)
class StepwiseTrace:
    steps: tuple[StepwiseStep, ...]

    def net_terms(self) -> list[str]:
        current: list[str] = []
        for s in self.steps:
            if s.action == "enter":
                current.append(s.term)
            else:
                current.remove(s.term)
        return current


def stepwise_select(
    design: DesignMatrix,
    p_enter: float = 0.01,
    p_stay: float = 0.01,
    max_terms: int | None = None,
) -> tuple[LogisticModel, StepwiseTrace]:
    """Forward selection with backward elimination.

    Each forward step fits every out-of-model candidate, ranks them by
    single-term likelihood-ratio p-value (ties: SBC, then term name), and
    enters the best candidate only if p < p_enter and the SBC drops.
    After every change, in-model terms with Wald p > p_stay are removed,
    worst first.  Stops when a full pass changes nothing.
    """
    if not design.terms:
        raise ValidationError("need at least one candidate term")
    steps: list[StepwiseStep] = []
    current: list[int] = []
    try:
        cur_model = fit_irls(design.select(current))
        for _ in range(2 * len(design.terms)):
            changed = False

            if max_terms is None or len(current) < max_terms:
                best = None
                for j in range(len(design.terms)):
                    if j in current:
                        continue
                    trial = current + [j]
                    warm = np.append(cur_model.beta, 0.0)
                    model_j = fit_irls(design.select(trial), beta0=warm)
                    lr = max(2.0 * (model_j.log_likelihood - cur_model.log_likelihood), 0.0)
                    p = float(stats.chi2.sf(lr, df=1))
                    key = (p, model_j.sbc, design.terms[j].name)
                    if best is None or key < best[0]:
                        best = (key, j, model_j, p)
                if best is not None:
                    _, j, model_j, p = best
                    if p < p_enter and model_j.sbc < cur_model.sbc:
                        current.append(j)
                        cur_model = model_j
                        steps.append(
                            StepwiseStep("enter", design.terms[j].name, p, model_j.sbc)
                        )
                        changed = True

            while current:
                p_in = cur_model.p_values[1:]  # aligned with current order
                worst = int(np.argmax(p_in))
                if p_in[worst] <= p_stay:
                    break
                removed = current.pop(worst)
                cur_model = fit_irls(design.select(current))
                steps.append(
                    StepwiseStep(
                        "remove",
                        design.terms[removed].name,
                        float(p_in[worst]),
                        cur_model.sbc,
                    )
                )
                changed = True

            if not changed:
                break
    except ComputationError as exc:
        exc.trace = StepwiseTrace(steps=tuple(steps))  # type: ignore[attr-defined]
        raise
    return cur_model, StepwiseTrace(steps=tuple(steps))


# ---------------------------------------------------------------------------
# Collinearity pruning and the global-null test


def _term_indices(design: DesignMatrix, terms: tuple[Term, ...]) -> list[int]:
    names = [t.name for t in design.terms]
    out = []
    for t in terms:
        if t.name not in names:
            raise ValidationError(f"term {t.name!r} not present in the design")
        out.append(names.index(t.name))
    return out


def prune_collinear(
    model: LogisticModel,
    design: DesignMatrix,
    validation: DesignMatrix,
    cutoff: float = 0.40,
) -> LogisticModel:
    """Break up correlated term pairs using held-out decile performance.

    While any pair of in-model term columns has |Pearson r| > cutoff on
    the training design, refit once without each member of the worst pair
    and keep the refit with the higher first-decile cumulative captured
    response on the validation data (ties: first-decile lift, then the
    surviving term's Wald chi-square, then term name).
    """
    from .evaluation import ScoreSet, decile_table

    current = _term_indices(design, model.terms)
    cur_model = model

    def captured_and_lift(m: LogisticModel, idx: list[int]) -> tuple[float, float]:
        sub = validation.select(idx)
        p = m.predict_proba(sub.X)
        scores = ScoreSet(ids=np.arange(len(p)), p=p, y=sub.y)
        rows = decile_table(scores)
        return rows[0].cum_captured, rows[0].lift

    while len(current) >= 2:
        cols = design.X[:, [i + 1 for i in current]]
        corr = np.nan_to_num(np.corrcoef(cols, rowvar=False))
        np.fill_diagonal(corr, 0.0)
        flat = np.abs(corr)
        worst = float(flat.max())
        if worst <= cutoff:
            break
        a_pos, b_pos = np.unravel_index(int(flat.argmax()), flat.shape)
        if a_pos > b_pos:
            a_pos, b_pos = b_pos, a_pos

        candidates = []
        for drop_pos, keep_pos in ((a_pos, b_pos), (b_pos, a_pos)):
            kept = [i for pos, i in enumerate(current) if pos != drop_pos]
            refit = fit_irls(design.select(kept))
            captured, lift = captured_and_lift(refit, kept)
            survivor = design.terms[current[keep_pos]].name
            survivor_wald = float(refit.wald[1 + kept.index(current[keep_pos])])
            candidates.append(
                ((-captured, -lift, -survivor_wald, survivor), kept, refit)
            )
        _, current, cur_model = min(candidates)
    return cur_model


def global_null_lr(model: LogisticModel, design: DesignMatrix) -> dict:
    """Likelihood-ratio test of the fitted model against intercept-only."""
    k = len(model.terms)
    if k < 1:
        raise ValidationError("global null test needs at least one non-intercept term")
    pbar = float(design.y.mean())
    pbar = min(max(pbar, PROB_CLAMP), 1.0 - PROB_CLAMP)
    logL0 = design.n * (pbar * math.log(pbar) + (1.0 - pbar) * math.log(1.0 - pbar))
    statistic = 2.0 * (model.log_likelihood - logL0)
    return {
        "statistic": float(statistic),
        "df": k,
        "p_value": float(stats.chi2.sf(statistic, df=k)),
    }


# ---------------------------------------------------------------------------
# Serialization


def model_to_dict(model: LogisticModel) -> dict:
    rows = []
    names = ["Intercept"] + [t.name for t in model.terms]
    term_dicts = [None] + [t.to_dict() for t in model.terms]
    for i, name in enumerate(names):
        rows.append(
            {
                "name": name,
                "term": term_dicts[i],
                "estimate": float(model.beta[i]),
                "std_error": float(model.se[i]),
                "wald_chi_square": float(model.wald[i]),
                "p_value": float(model.p_values[i]),
                "standardized_estimate": model.standardized_estimate[i],
                "exp_estimate": float(model.exp_est[i]),
            }
        )
    return {
        "rows": rows,
        "log_likelihood": model.log_likelihood,
        "sbc": model.sbc,
        "n": model.n,
        "converged": model.converged,
        "iterations": model.iterations,
        "warnings": list(model.warnings),
    }


def model_from_dict(d: dict) -> LogisticModel:
    try:
        rows = d["rows"]
        terms = tuple(Term.from_dict(r["term"]) for r in rows[1:])
        beta = np.array([r["estimate"] for r in rows])
        se = np.array([r["std_error"] for r in rows])
        wald = np.array([r["wald_chi_square"] for r in rows])
        p = np.array([r["p_value"] for r in rows])
        std_est = tuple(r["standardized_estimate"] for r in rows)
        exp_est = np.array([r["exp_estimate"] for r in rows])
        return LogisticModel(
            terms=terms,
            beta=beta,
            se=se,
            wald=wald,
            p_values=p,
            standardized_estimate=std_est,
            exp_est=exp_est,
            log_likelihood=d["log_likelihood"],
            sbc=d["sbc"],
            n=d["n"],
            converged=d["converged"],
            iterations=d["iterations"],
            warnings=tuple(d.get("warnings", ())),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed model file: {exc}") from exc
