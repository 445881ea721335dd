"""Run configuration: one JSON file drives the whole pipeline.

Every tunable the pipeline honors -- stage retention counts, IV band,
occupancy floor, level-merge alpha, split fraction and seed, stepwise
entry/stay p-values, the collinearity cutoff, and the classification
threshold -- lives here under a name describing its role, with defaults
matching the conventional values (p < 0.01 entry/stay, 40% correlation
cutoff, IV in [0.03, 0.5], 10% occupancy, 60/40 split, threshold 0.5).

Exactly one of `input` (csv + schema paths) or `synthetic` (generator
spec) must be present.  An optional `out_of_sample` block names a second
dataset to score; synthetic runs otherwise score a sibling table drawn
from the same generator structure with sample index 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import ValidationError
from .screening import StagePlan
from .synthgen import SyntheticSpec


@dataclass(frozen=True)
class InputConfig:
    csv: str
    schema: str


@dataclass(frozen=True)
class SplitConfig:
    frac: float = 0.6
    seed: int = 17

    def __post_init__(self):
        if not (0.0 < self.frac < 1.0):
            raise ValidationError(f"split.frac must be in (0, 1), got {self.frac}")


@dataclass(frozen=True)
class StepwiseConfig:
    p_enter: float = 0.01
    p_stay: float = 0.01
    max_terms: int | None = None

    def __post_init__(self):
        for name, v in (("p_enter", self.p_enter), ("p_stay", self.p_stay)):
            if not (0.0 < v < 1.0):
                raise ValidationError(f"stepwise.{name} must be in (0, 1), got {v}")
        if self.max_terms is not None and self.max_terms < 1:
            raise ValidationError("stepwise.max_terms must be >= 1 when set")


@dataclass(frozen=True)
class PipelineConfig:
    plan: StagePlan
    split: SplitConfig
    stepwise: StepwiseConfig
    prune_cutoff: float = 0.40
    threshold: float = 0.5
    out_dir: str = "out"
    input: InputConfig | None = None
    synthetic: SyntheticSpec | None = None
    out_of_sample: InputConfig | None = None

    def __post_init__(self):
        if (self.input is None) == (self.synthetic is None):
            raise ValidationError(
                "exactly one of 'input' and 'synthetic' must be present"
            )
        if not (0.0 <= self.prune_cutoff <= 1.0):
            raise ValidationError("prune_cutoff must be in [0, 1]")
        if not (0.0 <= self.threshold <= 1.0):
            raise ValidationError("threshold must be in [0, 1]")

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Override every seed from one master value: the generator takes
        the seed itself, the split takes seed + 1."""
        cfg = replace(self, split=replace(self.split, seed=seed + 1))
        if cfg.synthetic is not None:
            cfg = replace(cfg, synthetic=replace(cfg.synthetic, seed=seed))
        return cfg

    def to_dict(self) -> dict:
        d: dict = {
            "plan": {
                "retain_after_chi2": self.plan.retain_after_chi2,
                "retain_after_t": self.plan.retain_after_t,
                "retain_after_iv": self.plan.retain_after_iv,
                "final_retain": self.plan.final_retain,
                "iv_min": self.plan.iv_min,
                "iv_max": self.plan.iv_max,
                "occupancy_min": self.plan.occupancy_min,
                "level_merge_alpha": self.plan.level_merge_alpha,
                "iv_smoothing": self.plan.iv_smoothing,
            },
            "split": {"frac": self.split.frac, "seed": self.split.seed},
            "stepwise": {
                "p_enter": self.stepwise.p_enter,
                "p_stay": self.stepwise.p_stay,
                "max_terms": self.stepwise.max_terms,
            },
            "prune_cutoff": self.prune_cutoff,
            "threshold": self.threshold,
            "out_dir": self.out_dir,
        }
        if self.input is not None:
            d["input"] = {"csv": self.input.csv, "schema": self.input.schema}
        if self.synthetic is not None:
            d["synthetic"] = self.synthetic.to_dict()
        if self.out_of_sample is not None:
            d["out_of_sample"] = {
                "csv": self.out_of_sample.csv,
                "schema": self.out_of_sample.schema,
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        def section(name: str, builder, default=None):
            if name not in d:
                if default is not None:
                    return default
                raise ValidationError(f"config is missing the {name!r} section")
            try:
                return builder(d[name])
            except ValidationError:
                raise
            except (KeyError, TypeError) as exc:
                raise ValidationError(f"config section {name!r}: {exc}") from exc

        plan = section("plan", lambda p: StagePlan(**p))
        split = section("split", lambda s: SplitConfig(**s), SplitConfig())
        stepwise = section("stepwise", lambda s: StepwiseConfig(**s), StepwiseConfig())
        input_cfg = (
            InputConfig(**d["input"]) if "input" in d and d["input"] is not None else None
        )
        synthetic = (
            SyntheticSpec.from_dict(d["synthetic"])
            if "synthetic" in d and d["synthetic"] is not None
            else None
        )
        oos = (
            InputConfig(**d["out_of_sample"])
            if d.get("out_of_sample") is not None
            else None
        )
        try:
            return cls(
                plan=plan,
                split=split,
                stepwise=stepwise,
                prune_cutoff=d.get("prune_cutoff", 0.40),
                threshold=d.get("threshold", 0.5),
                out_dir=d.get("out_dir", "out"),
                input=input_cfg,
                synthetic=synthetic,
                out_of_sample=oos,
            )
        except TypeError as exc:
            raise ValidationError(f"malformed config: {exc}") from exc


def load_config(path: str | Path) -> PipelineConfig:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"no such config file: {p}")
    with open(p, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{p}: invalid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise ValidationError(f"{p}: config must be a JSON object")
    return PipelineConfig.from_dict(d)
