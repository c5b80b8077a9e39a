"""Feature transforms and the declarative preprocessing plan.

A plan is an ordered list of steps (drop, binarize, merge_average,
one_hot, min_max). Fitting a plan on a training matrix records the
state each step needs (scaler ranges, category vocabularies) so the same
transformation can be replayed on validation and test matrices.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence, Union

import numpy as np

from .data import FeatureKind, LabeledDataset
from .errors import PlanError

logger = logging.getLogger(__name__)

PROVENANCES = ("heuristic", "llm", "manual")


@dataclass(frozen=True)
class FeatureMatrix:
    column_names: tuple[str, ...]
    values: np.ndarray
    kinds: tuple[FeatureKind, ...] = ()
    vocabularies: dict[str, tuple[str, ...]] = field(default_factory=dict)
    unseen_categories: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            values = values.reshape(-1, len(self.column_names))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        if not self.kinds:
            object.__setattr__(self, "kinds", (FeatureKind.CONTINUOUS,) * len(self.column_names))
        if values.shape[1] != len(self.column_names) or len(self.kinds) != len(self.column_names):
            raise ValueError("column metadata does not match matrix width")
        if len(set(self.column_names)) != len(self.column_names):
            raise ValueError("column names must be unique")
        if not np.all(np.isfinite(values)):
            raise ValueError("feature matrix contains non-finite values")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def index(self, name: str) -> int:
        return self.column_names.index(name)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def rows(self, idx) -> "FeatureMatrix":
        return replace(self, values=self.values[idx])


def dataset_matrix(ds: LabeledDataset) -> FeatureMatrix:
    """All schema columns; categorical columns stay index-coded."""
    return FeatureMatrix(
        column_names=tuple(ds.schema.names),
        values=np.array(ds.rows, dtype=np.float64),
        kinds=tuple(ds.schema.kinds),
        vocabularies=dict(ds.schema.vocabularies),
    )


# -- Min-Max scaling ---------------------------------------------------------

@dataclass(frozen=True)
class MinMaxScaler:
    columns: tuple[str, ...]
    mins: tuple[float, ...]
    maxs: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "mins": list(self.mins), "maxs": list(self.maxs)}

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxScaler":
        return cls(tuple(d["columns"]), tuple(float(v) for v in d["mins"]), tuple(float(v) for v in d["maxs"]))


def fit_minmax(m: FeatureMatrix, columns: Sequence[str] | None = None) -> MinMaxScaler:
    columns = tuple(m.column_names if columns is None else columns)
    if m.shape[0] == 0:
        raise ValueError("cannot fit a Min-Max scaler on an empty matrix")
    missing = [c for c in columns if c not in m.column_names]
    if missing:
        raise KeyError(f"unknown column(s) {missing}")
    block = m.values[:, [m.index(c) for c in columns]]
    return MinMaxScaler(columns, tuple(block.min(axis=0).tolist()), tuple(block.max(axis=0).tolist()))


def apply_minmax(m: FeatureMatrix, s: MinMaxScaler) -> FeatureMatrix:
    """Scale to [0, 1]. Constant columns map to 0; out-of-range values clip."""
    values = m.values.copy()
    for col, lo, hi in zip(s.columns, s.mins, s.maxs):
        if col not in m.column_names:
            raise KeyError(f"scaler column {col!r} not in matrix")
        j = m.index(col)
        if hi > lo:
            values[:, j] = np.clip((values[:, j] - lo) / (hi - lo), 0.0, 1.0)
        else:
            values[:, j] = 0.0
    return replace(m, values=values)


# -- One-hot encoding ----------------------------------------------------------

@dataclass(frozen=True)
class OneHotEncoder:
    vocabularies: dict[str, tuple[str, ...]]

    def output_names(self, column: str) -> list[str]:
        return [f"{column}_{cat}" for cat in self.vocabularies[column]]

    def to_dict(self) -> dict:
        return {"vocabularies": {k: list(v) for k, v in self.vocabularies.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "OneHotEncoder":
        return cls({k: tuple(v) for k, v in d["vocabularies"].items()})


def fit_onehot(ds: LabeledDataset | FeatureMatrix, columns: Iterable[str] | None = None) -> OneHotEncoder:
    if isinstance(ds, LabeledDataset):
        vocabs = ds.schema.vocabularies
        cats = ds.schema.categorical()
    else:
        vocabs = ds.vocabularies
        cats = [c for c, k in zip(ds.column_names, ds.kinds) if k is FeatureKind.CATEGORICAL]
    if columns is not None:
        cats = list(columns)
    return OneHotEncoder({c: tuple(vocabs.get(c, ())) for c in cats})


def _expand_column(m: FeatureMatrix, column: str, categories: tuple[str, ...]) -> tuple[np.ndarray, int]:
    """Indicator block for one index-coded column, matched by category text."""
    source_vocab = m.vocabularies.get(column, ())
    position = {cat: k for k, cat in enumerate(categories)}
    # map source index -> encoder slot, -1 when unseen
    lookup = np.array([position.get(cat, -1) for cat in source_vocab] + [-1], dtype=np.int64)
    codes = m.column(column).astype(np.int64)
    codes = np.where((codes >= 0) & (codes < len(source_vocab)), codes, len(source_vocab))
    slots = lookup[codes]
    block = np.zeros((m.shape[0], len(categories)))
    known = slots >= 0
    block[np.flatnonzero(known), slots[known]] = 1.0
    return block, int((~known).sum())


def _splice(m: FeatureMatrix, remove: Sequence[str], at: int, names: Sequence[str],
            block: np.ndarray, kind: FeatureKind, unseen: int = 0) -> FeatureMatrix:
    """Remove ``remove`` columns and insert ``block`` at original position ``at``."""
    keep = [j for j, c in enumerate(m.column_names) if c not in set(remove)]
    insert_at = sum(1 for j in keep if j < at)
    new_names = [m.column_names[j] for j in keep]
    new_kinds = [m.kinds[j] for j in keep]
    new_names[insert_at:insert_at] = list(names)
    new_kinds[insert_at:insert_at] = [kind] * len(names)
    values = np.concatenate(
        [m.values[:, keep[:insert_at]], block.reshape(m.shape[0], -1), m.values[:, keep[insert_at:]]], axis=1
    )
    vocabs = {k: v for k, v in m.vocabularies.items() if k not in set(remove)}
    return FeatureMatrix(tuple(new_names), values, tuple(new_kinds), vocabs, m.unseen_categories + unseen)


def apply_onehot(ds: LabeledDataset | FeatureMatrix, enc: OneHotEncoder) -> FeatureMatrix:
    """Replace each encoded categorical column by its indicator block.

    Categories missing from the encoder vocabulary give an all-zero block
    and are counted in ``unseen_categories``.
    """
    m = dataset_matrix(ds) if isinstance(ds, LabeledDataset) else ds
    for column, categories in enc.vocabularies.items():
        if column not in m.column_names:
            raise KeyError(f"encoder column {column!r} not in matrix")
        block, unseen = _expand_column(m, column, categories)
        if unseen:
            logger.warning("%d value(s) of %r outside the fitted vocabulary", unseen, column)
        m = _splice(m, [column], m.index(column), enc.output_names(column), block, FeatureKind.BINARY, unseen)
    return m


# -- Plan steps ----------------------------------------------------------------

@dataclass(frozen=True)
class Drop:
    column: str
    op = "drop"

    def to_dict(self) -> dict:
        return {"op": self.op, "column": self.column}


@dataclass(frozen=True)
class Binarize:
    column: str
    threshold: float = 0.0
    op = "binarize"

    def to_dict(self) -> dict:
        return {"op": self.op, "column": self.column, "threshold": self.threshold}


@dataclass(frozen=True)
class MergeAverage:
    columns: tuple[str, ...]
    new_name: str
    op = "merge_average"

    def to_dict(self) -> dict:
        return {"op": self.op, "columns": list(self.columns), "new_name": self.new_name}


@dataclass(frozen=True)
class OneHot:
    column: str
    op = "one_hot"

    def to_dict(self) -> dict:
        return {"op": self.op, "column": self.column}


@dataclass(frozen=True)
class MinMax:
    columns: tuple[str, ...]
    op = "min_max"

    def to_dict(self) -> dict:
        return {"op": self.op, "columns": list(self.columns)}


TransformStep = Union[Drop, Binarize, MergeAverage, OneHot, MinMax]
STEP_OPS = ("drop", "binarize", "merge_average", "one_hot", "min_max")


@dataclass(frozen=True)
class PreprocessPlan:
    steps: tuple[TransformStep, ...] = ()
    provenance: str = "manual"

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if self.provenance not in PROVENANCES:
            raise PlanError(f"unknown plan provenance {self.provenance!r}")

    def __add__(self, other: "PreprocessPlan") -> "PreprocessPlan":
        return PreprocessPlan(self.steps + other.steps, self.provenance)

    def to_dict(self) -> dict:
        return {"steps": [s.to_dict() for s in self.steps], "provenance": self.provenance}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d: Any, provenance: str | None = None) -> "PreprocessPlan":
        if not isinstance(d, dict) or not isinstance(d.get("steps"), list):
            raise PlanError('plan must be an object with a "steps" list')
        steps = [step_from_dict(s, i) for i, s in enumerate(d["steps"])]
        prov = provenance or d.get("provenance", "manual")
        return cls(tuple(steps), prov)

    @classmethod
    def from_json(cls, text: str, provenance: str | None = None) -> "PreprocessPlan":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise PlanError(f"plan is not valid JSON: {exc}") from exc
        return cls.from_dict(raw, provenance)


def _text(d: dict, key: str, i: int) -> str:
    v = d.get(key)
    if not isinstance(v, str) or not v:
        raise PlanError(f"step {i}: {key!r} must be a non-empty string")
    return v


def _text_list(d: dict, key: str, i: int) -> tuple[str, ...]:
    v = d.get(key)
    if not isinstance(v, list) or not v or not all(isinstance(c, str) and c for c in v):
        raise PlanError(f"step {i}: {key!r} must be a non-empty list of column names")
    return tuple(v)


def step_from_dict(d: Any, i: int = 0) -> TransformStep:
    if not isinstance(d, dict):
        raise PlanError(f"step {i}: expected an object, got {type(d).__name__}")
    op = d.get("op")
    if op == "drop":
        return Drop(_text(d, "column", i))
    if op == "binarize":
        threshold = d.get("threshold", 0.0)
        if isinstance(threshold, bool) or not isinstance(threshold, (int, float)):
            raise PlanError(f"step {i}: threshold must be a number")
        return Binarize(_text(d, "column", i), float(threshold))
    if op == "merge_average":
        columns = _text_list(d, "columns", i)
        if len(columns) < 2 or len(set(columns)) != len(columns):
            raise PlanError(f"step {i}: merge_average needs at least two distinct columns")
        return MergeAverage(columns, _text(d, "new_name", i))
    if op == "one_hot":
        return OneHot(_text(d, "column", i))
    if op == "min_max":
        return MinMax(_text_list(d, "columns", i))
    raise PlanError(f"step {i}: unknown op {op!r} (allowed: {', '.join(STEP_OPS)})")


def step_columns(step: TransformStep) -> tuple[str, ...]:
    if isinstance(step, (MergeAverage, MinMax)):
        return step.columns
    return (step.column,)


def validate_plan(plan: PreprocessPlan, columns: Sequence[str], kinds: Sequence[FeatureKind] | None = None,
                  vocabularies: dict[str, Sequence[str]] | None = None, complete: bool = False) -> None:
    """Check every step against the columns alive at its position.

    Without vocabularies, columns produced by one_hot are matched by the
    ``<column>_`` prefix. ``complete`` additionally requires that no
    categorical column survives the plan unencoded.
    """
    kinds = list(kinds) if kinds is not None else [FeatureKind.CONTINUOUS] * len(columns)
    alive = dict(zip(columns, kinds))
    wildcard: set[str] = set()

    def exists(name: str) -> bool:
        return name in alive or any(name.startswith(p + "_") for p in wildcard)

    for i, step in enumerate(plan.steps):
        for col in step_columns(step):
            if not exists(col):
                raise PlanError(f"step {i} ({step.op}): unknown column {col!r}")
        if isinstance(step, OneHot):
            if alive.get(step.column) is not FeatureKind.CATEGORICAL:
                raise PlanError(f"step {i} (one_hot): column {step.column!r} is not categorical")
        else:
            for col in step_columns(step):
                if alive.get(col) is FeatureKind.CATEGORICAL:
                    raise PlanError(f"step {i} ({step.op}): column {col!r} is categorical")
        if isinstance(step, Drop):
            alive.pop(step.column, None)
        elif isinstance(step, Binarize):
            alive[step.column] = FeatureKind.BINARY
        elif isinstance(step, MergeAverage):
            for col in step.columns:
                alive.pop(col, None)
            if exists(step.new_name):
                raise PlanError(f"step {i} (merge_average): new_name {step.new_name!r} already exists")
            alive[step.new_name] = FeatureKind.CONTINUOUS
        elif isinstance(step, OneHot):
            alive.pop(step.column)
            if vocabularies is not None and step.column in vocabularies:
                for cat in vocabularies[step.column]:
                    alive[f"{step.column}_{cat}"] = FeatureKind.BINARY
            else:
                wildcard.add(step.column)
    if complete:
        left = sorted(c for c, k in alive.items() if k is FeatureKind.CATEGORICAL)
        if left:
            raise PlanError(f"plan leaves categorical column(s) {left} unencoded")


# -- Fitting and applying plans ------------------------------------------------

def _require(m: FeatureMatrix, step: TransformStep, i: int) -> None:
    for col in step_columns(step):
        if col not in m.column_names:
            raise PlanError(f"step {i} ({step.op}): unknown column {col!r}")


def _run_step(m: FeatureMatrix, step: TransformStep, i: int, state: Any):
    _require(m, step, i)
    if isinstance(step, Drop):
        return _splice(m, [step.column], m.index(step.column), [], np.empty((m.shape[0], 0)), FeatureKind.CONTINUOUS), None
    if isinstance(step, Binarize):
        values = m.values.copy()
        j = m.index(step.column)
        values[:, j] = (values[:, j] > step.threshold).astype(np.float64)
        kinds = list(m.kinds)
        kinds[j] = FeatureKind.BINARY
        return replace(m, values=values, kinds=tuple(kinds)), None
    if isinstance(step, MergeAverage):
        if step.new_name in m.column_names and step.new_name not in step.columns:
            raise PlanError(f"step {i} (merge_average): new_name {step.new_name!r} already exists")
        idx = [m.index(c) for c in step.columns]
        mean = m.values[:, idx].mean(axis=1)
        return _splice(m, step.columns, min(idx), [step.new_name], mean, FeatureKind.CONTINUOUS), None
    if isinstance(step, OneHot):
        if m.kinds[m.index(step.column)] is not FeatureKind.CATEGORICAL:
            raise PlanError(f"step {i} (one_hot): column {step.column!r} is not categorical")
        if state is None:
            state = OneHotEncoder({step.column: tuple(m.vocabularies.get(step.column, ()))})
        return apply_onehot(m, state), state
    if isinstance(step, MinMax):
        if state is None:
            state = fit_minmax(m, step.columns)
        return apply_minmax(m, state), state
    raise PlanError(f"step {i}: unsupported step {step!r}")


@dataclass(frozen=True)
class FittedPlan:
    """A plan plus the per-step state learned from a training matrix."""

    plan: PreprocessPlan
    states: tuple[Any, ...]

    def transform(self, m: FeatureMatrix) -> FeatureMatrix:
        for i, (step, state) in enumerate(zip(self.plan.steps, self.states)):
            m, _ = _run_step(m, step, i, state)
        return m

    def to_dict(self) -> dict:
        return {
            "plan": self.plan.to_dict(),
            "states": [None if s is None else s.to_dict() for s in self.states],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedPlan":
        plan = PreprocessPlan.from_dict(d["plan"])
        states = []
        for step, s in zip(plan.steps, d["states"]):
            if s is None:
                states.append(None)
            elif isinstance(step, OneHot):
                states.append(OneHotEncoder.from_dict(s))
            else:
                states.append(MinMaxScaler.from_dict(s))
        return cls(plan, tuple(states))


def fit_plan(m: FeatureMatrix, plan: PreprocessPlan) -> tuple[FittedPlan, FeatureMatrix]:
    """Fit step state on ``m``; returns the fitted plan and transformed ``m``."""
    states = []
    for i, step in enumerate(plan.steps):
        m, state = _run_step(m, step, i, None)
        states.append(state)
    return FittedPlan(plan, tuple(states)), m


def apply_plan(m: FeatureMatrix, plan: PreprocessPlan) -> FeatureMatrix:
    return fit_plan(m, plan)[1]
