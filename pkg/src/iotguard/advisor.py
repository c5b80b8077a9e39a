"""Feature statistics and preprocessing-plan advice.

``heuristic_advise`` is a deterministic rule set; the LLM route sends the
same statistics in a prompt and parses a plan out of the answer. Both
return a :class:`PreprocessPlan`.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .data import FeatureKind
from .errors import AdvisorResponseError, PlanError
from .transforms import (
    STEP_OPS,
    Binarize,
    Drop,
    FeatureMatrix,
    MergeAverage,
    MinMax,
    OneHot,
    PreprocessPlan,
    validate_plan,
)

CORRELATION_REPORT_CUTOFF = 0.5


@dataclass(frozen=True)
class ColumnStats:
    name: str
    kind: FeatureKind
    variance: float
    sparsity: float
    cardinality: int
    top_correlations: tuple[tuple[str, float], ...] = ()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind.value,
            "variance": self.variance,
            "sparsity": self.sparsity,
            "cardinality": self.cardinality,
            "top_correlations": [[other, r] for other, r in self.top_correlations],
        }


@dataclass(frozen=True)
class FeatureStats:
    columns: tuple[ColumnStats, ...]
    rows: int
    # full continuous-pair correlation matrix, used for grouping
    correlation_names: tuple[str, ...] = ()
    correlation: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    vocabularies: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __getitem__(self, name: str) -> ColumnStats:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def to_dict(self) -> dict:
        return {"rows": self.rows, "columns": [c.to_dict() for c in self.columns]}


@dataclass(frozen=True)
class AdvisorThresholds:
    low_variance_cutoff: float = 1e-6
    high_correlation_cutoff: float = 0.95
    sparsity_cutoff: float = 0.9

    def __post_init__(self):
        if self.low_variance_cutoff < 0:
            raise ValueError("low_variance_cutoff must be >= 0")
        for name in ("high_correlation_cutoff", "sparsity_cutoff"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")


def pearson_matrix(x: np.ndarray) -> np.ndarray:
    """Pearson r between columns; 0 wherever a column is constant."""
    centred = x - x.mean(axis=0)
    norms = np.sqrt(np.sum(centred ** 2, axis=0))
    constant = norms <= 1e-12 * max(1.0, float(np.abs(x).max(initial=0.0)))
    safe = np.where(constant, 1.0, norms)
    r = (centred.T @ centred) / np.outer(safe, safe)
    r[constant, :] = 0.0
    r[:, constant] = 0.0
    np.fill_diagonal(r, np.where(constant, 0.0, 1.0))
    return np.clip(r, -1.0, 1.0)


def compute_feature_stats(m: FeatureMatrix) -> FeatureStats:
    """Population variance, zero fraction and cardinality per column, plus
    Pearson correlations among continuous columns (|r| > 0.5 reported)."""
    rows = m.shape[0]
    if rows < 2:
        raise ValueError("feature statistics need at least two rows")
    x = m.values
    variance = x.var(axis=0)
    sparsity = np.mean(x == 0, axis=0)

    cont = [j for j, k in enumerate(m.kinds) if k is FeatureKind.CONTINUOUS]
    cont_names = tuple(m.column_names[j] for j in cont)
    r = pearson_matrix(x[:, cont]) if cont else np.zeros((0, 0))
    where = {j: i for i, j in enumerate(cont)}

    columns = []
    for j, name in enumerate(m.column_names):
        tops: list[tuple[str, float]] = []
        if j in where:
            i = where[j]
            tops = [
                (cont_names[o], float(r[i, o]))
                for o in range(len(cont))
                if o != i and abs(r[i, o]) > CORRELATION_REPORT_CUTOFF
            ]
            tops.sort(key=lambda t: (-abs(t[1]), t[0]))
        columns.append(
            ColumnStats(
                name=name,
                kind=m.kinds[j],
                variance=float(variance[j]),
                sparsity=float(sparsity[j]),
                cardinality=int(len(np.unique(x[:, j]))),
                top_correlations=tuple(tops),
            )
        )
    return FeatureStats(tuple(columns), rows, cont_names, r, dict(m.vocabularies))


def _correlation_groups(stats: FeatureStats, candidates: list[str], cutoff: float) -> list[list[str]]:
    """Connected components (size >= 2) of the |r| > cutoff graph."""
    parent = {c: c for c in candidates}

    def find(c: str) -> str:
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    index = {name: i for i, name in enumerate(stats.correlation_names)}
    for a_pos, a in enumerate(candidates):
        for b in candidates[a_pos + 1:]:
            if abs(stats.correlation[index[a], index[b]]) > cutoff:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    groups: dict[str, list[str]] = {}
    for c in candidates:
        groups.setdefault(find(c), []).append(c)
    return sorted((sorted(g) for g in groups.values() if len(g) > 1), key=lambda g: g[0])


def merged_name(columns) -> str:
    return "avg(" + ",".join(sorted(columns)) + ")"


def heuristic_advise(stats: FeatureStats, t: AdvisorThresholds | None = None) -> PreprocessPlan:
    """Drop low-variance columns, average correlated groups, binarize sparse
    columns, one-hot categoricals, then Min-Max the remaining continuous
    columns. Steps within a phase are ordered by column name."""
    t = t or AdvisorThresholds()
    steps = []
    dropped = sorted(c.name for c in stats.columns if c.variance < t.low_variance_cutoff)
    steps += [Drop(name) for name in dropped]

    survivors = sorted(
        c.name for c in stats.columns if c.kind is FeatureKind.CONTINUOUS and c.name not in dropped
    )
    groups = _correlation_groups(stats, survivors, t.high_correlation_cutoff)
    merged = {c for g in groups for c in g}
    steps += [MergeAverage(tuple(g), merged_name(g)) for g in groups]

    singles = [c for c in survivors if c not in merged]
    sparse = [c for c in singles if stats[c].sparsity > t.sparsity_cutoff]
    steps += [Binarize(c, 0.0) for c in sparse]

    categorical = sorted(
        c.name for c in stats.columns if c.kind is FeatureKind.CATEGORICAL and c.name not in dropped
    )
    steps += [OneHot(c) for c in categorical]

    remaining = sorted([c for c in singles if c not in sparse] + [merged_name(g) for g in groups])
    if remaining:
        steps.append(MinMax(tuple(remaining)))
    return PreprocessPlan(tuple(steps), "heuristic")


_PLAN_EXAMPLE = {
    "steps": [
        {"op": "drop", "column": "<column>"},
        {"op": "binarize", "column": "<column>", "threshold": 0.0},
        {"op": "merge_average", "columns": ["<column>", "<column>"], "new_name": "<new column>"},
        {"op": "one_hot", "column": "<categorical column>"},
        {"op": "min_max", "columns": ["<column>"]},
    ],
    "provenance": "llm",
}


def _num(v: float) -> str:
    return f"{v:.6g}"


def build_advisor_prompt(stats: FeatureStats) -> str:
    lines = [
        "You are preparing network connection records for an autoencoder anomaly detector.",
        f"Feature statistics computed on {stats.rows} training rows "
        "(continuous columns already Min-Max scaled to [0, 1]):",
        "",
        "| column | kind | variance | sparsity | distinct | top correlation |",
        "|---|---|---|---|---|---|",
    ]
    for c in stats.columns:
        top = f"{c.top_correlations[0][0]} (r={c.top_correlations[0][1]:.3f})" if c.top_correlations else "-"
        lines.append(f"| {c.name} | {c.kind.value} | {_num(c.variance)} | {_num(c.sparsity)} | {c.cardinality} | {top} |")
    lines += [
        "",
        "Identify redundant and low-variance features and propose a preprocessing plan.",
        "Allowed step ops, applied in order:",
        "- drop(column): remove a column",
        "- binarize(column, threshold): value > threshold becomes 1, else 0 (for sparse columns)",
        "- merge_average(columns, new_name): replace highly correlated columns by their mean",
        "- one_hot(column): indicator encoding of a categorical column",
        "- min_max(columns): rescale continuous columns to [0, 1]",
        "Every categorical column must be either dropped or one_hot encoded.",
        "Never reference a column after it has been dropped or merged.",
        "",
        "Answer with exactly one fenced ```json block containing an object of this shape and nothing else:",
        "```json",
        json.dumps(_PLAN_EXAMPLE, indent=2),
        "```",
    ]
    return "\n".join(lines) + "\n"


_FENCE = re.compile(r"```[ \t]*([A-Za-z0-9_-]*)[ \t]*\n(.*?)```", re.DOTALL)


def extract_json_block(text: str) -> str:
    for match in _FENCE.finditer(text):
        lang, body = match.group(1).lower(), match.group(2).strip()
        if lang in ("json", "") and body.startswith("{"):
            return body
    raise AdvisorResponseError("response contains no fenced JSON block")


def parse_advisor_response(text: str, stats: FeatureStats | FeatureMatrix | None = None) -> PreprocessPlan:
    """First fenced JSON block as a plan, validated against the known columns."""
    body = extract_json_block(text)
    try:
        plan = PreprocessPlan.from_json(body, provenance="llm")
    except PlanError as exc:
        raise AdvisorResponseError(f"invalid plan: {exc}") from exc
    if stats is not None:
        if isinstance(stats, FeatureMatrix):
            names, kinds, vocabs = stats.column_names, stats.kinds, stats.vocabularies
        else:
            names, kinds, vocabs = stats.names, [c.kind for c in stats.columns], stats.vocabularies
        try:
            validate_plan(plan, names, kinds, vocabs, complete=True)
        except PlanError as exc:
            raise AdvisorResponseError(str(exc)) from exc
    return plan


def plan_to_response(plan: PreprocessPlan) -> str:
    """Render a plan the way a compliant LLM answer would."""
    return "```json\n" + plan.to_json() + "\n```\n"
