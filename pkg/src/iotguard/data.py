"""KDDCup99 record ingestion, binary labelling and reproducible splits."""

from __future__ import annotations

import csv
import gzip
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ParseError


class FeatureKind(str, Enum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"
    BINARY = "binary"


_KDD_COLUMNS: tuple[tuple[str, FeatureKind], ...] = tuple(
    (name, FeatureKind(kind))
    for name, kind in [
        ("duration", "continuous"),
        ("protocol_type", "categorical"),
        ("service", "categorical"),
        ("flag", "categorical"),
        ("src_bytes", "continuous"),
        ("dst_bytes", "continuous"),
        ("land", "binary"),
        ("wrong_fragment", "continuous"),
        ("urgent", "continuous"),
        ("hot", "continuous"),
        ("num_failed_logins", "continuous"),
        ("logged_in", "binary"),
        ("num_compromised", "continuous"),
        ("root_shell", "continuous"),
        ("su_attempted", "continuous"),
        ("num_root", "continuous"),
        ("num_file_creations", "continuous"),
        ("num_shells", "continuous"),
        ("num_access_files", "continuous"),
        ("num_outbound_cmds", "continuous"),
        ("is_host_login", "binary"),
        ("is_guest_login", "binary"),
        ("count", "continuous"),
        ("srv_count", "continuous"),
        ("serror_rate", "continuous"),
        ("srv_serror_rate", "continuous"),
        ("rerror_rate", "continuous"),
        ("srv_rerror_rate", "continuous"),
        ("same_srv_rate", "continuous"),
        ("diff_srv_rate", "continuous"),
        ("srv_diff_host_rate", "continuous"),
        ("dst_host_count", "continuous"),
        ("dst_host_srv_count", "continuous"),
        ("dst_host_same_srv_rate", "continuous"),
        ("dst_host_diff_srv_rate", "continuous"),
        ("dst_host_same_src_port_rate", "continuous"),
        ("dst_host_srv_diff_host_rate", "continuous"),
        ("dst_host_serror_rate", "continuous"),
        ("dst_host_srv_serror_rate", "continuous"),
        ("dst_host_rerror_rate", "continuous"),
        ("dst_host_srv_rerror_rate", "continuous"),
    ]
)


@dataclass(frozen=True)
class DatasetSchema:
    columns: tuple[tuple[str, FeatureKind], ...]
    vocabularies: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            raise ConfigError("schema column names must be unique")
        for name, vocab in self.vocabularies.items():
            if self.kind(name) is not FeatureKind.CATEGORICAL:
                raise ConfigError(f"vocabulary given for non-categorical column {name!r}")
            if list(vocab) != sorted(set(vocab)):
                raise ConfigError(f"vocabulary of {name!r} must be unique and sorted")

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.columns]

    @property
    def kinds(self) -> list[FeatureKind]:
        return [kind for _, kind in self.columns]

    def kind(self, name: str) -> FeatureKind:
        for col, kind in self.columns:
            if col == name:
                return kind
        raise KeyError(name)

    def categorical(self) -> list[str]:
        return [name for name, kind in self.columns if kind is FeatureKind.CATEGORICAL]

    def with_vocabularies(self, vocabularies: dict[str, tuple[str, ...]]) -> "DatasetSchema":
        return DatasetSchema(self.columns, dict(vocabularies))


def kdd_schema() -> DatasetSchema:
    """The canonical 41-feature KDDCup99 schema with empty vocabularies."""
    return DatasetSchema(_KDD_COLUMNS)


def load_schema(path: str | Path) -> DatasetSchema:
    """Read a schema override: a JSON list of ``{"name", "kind"}`` objects
    (optionally wrapped as ``{"columns": [...]}``)."""
    with open(path) as fh:
        raw = json.load(fh)
    if isinstance(raw, dict):
        raw = raw.get("columns")
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"{path}: schema must be a non-empty list of columns")
    columns = []
    for entry in raw:
        try:
            if isinstance(entry, dict):
                columns.append((str(entry["name"]), FeatureKind(entry["kind"])))
            else:
                name, kind = entry
                columns.append((str(name), FeatureKind(kind)))
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"{path}: bad schema entry {entry!r}") from exc
    return DatasetSchema(tuple(columns))


@dataclass(frozen=True)
class LabeledDataset:
    """Parsed records. ``rows`` holds continuous values as floats and
    categorical values as indices into ``schema.vocabularies``."""

    schema: DatasetSchema
    rows: np.ndarray
    labels: np.ndarray
    raw_labels: tuple[str, ...]
    row_ids: np.ndarray

    def __post_init__(self):
        n = len(self.labels)
        if self.rows.shape[0] != n or len(self.raw_labels) != n or len(self.row_ids) != n:
            raise ValueError("rows, labels, raw_labels and row_ids must have equal length")
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.schema.columns):
            raise ValueError("row width does not match the schema")
        for arr in (self.rows, self.labels, self.row_ids):
            arr.flags.writeable = False

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, indices: Sequence[int] | np.ndarray) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            schema=self.schema,
            rows=self.rows[idx].copy(),
            labels=self.labels[idx].copy(),
            raw_labels=tuple(self.raw_labels[i] for i in idx),
            row_ids=self.row_ids[idx].copy(),
        )

    def category(self, row: int, column: str) -> str:
        j = self.schema.names.index(column)
        return self.schema.vocabularies[column][int(self.rows[row, j])]


def binarize_label(text: str) -> int:
    return 0 if normalize_label(text) == "normal" else 1


def normalize_label(text: str) -> str:
    text = text.strip()
    return text[:-1] if text.endswith(".") else text


def _open_text(path: Path):
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, newline="", encoding="utf-8")


def load_kddcup(path: str | Path, schema: DatasetSchema | None = None) -> LabeledDataset:
    """Stream a headerless KDD CSV (41 features + label per line).

    Categories not already in the schema's vocabulary are added; the
    returned schema's vocabularies are sorted lexicographically and the
    row indices refer to that sorted order.
    """
    schema = schema or kdd_schema()
    path = Path(path)
    names = schema.names
    width = len(names)
    cat_pos = {j: names[j] for j, kind in enumerate(schema.kinds) if kind is FeatureKind.CATEGORICAL}
    # provisional ids in order of first appearance, remapped to sorted order at the end
    seen: dict[str, dict[str, int]] = {c: {v: i for i, v in enumerate(schema.vocabularies.get(c, ()))} for c in cat_pos.values()}

    rows: list[list[float]] = []
    raw_labels: list[str] = []
    with _open_text(path) as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if not fields or (len(fields) == 1 and not fields[0].strip()):
                continue
            if len(fields) != width + 1:
                raise ParseError(f"{path}:{lineno}: expected {width + 1} fields, got {len(fields)}")
            values = []
            for j in range(width):
                text = fields[j].strip()
                col = cat_pos.get(j)
                if col is not None:
                    vocab = seen[col]
                    if text not in vocab:
                        vocab[text] = len(vocab)
                    values.append(float(vocab[text]))
                    continue
                try:
                    v = float(text)
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: column {names[j]!r} is not numeric: {text!r}") from None
                if not np.isfinite(v):
                    raise ParseError(f"{path}:{lineno}: column {names[j]!r} is not finite: {text!r}")
                values.append(v)
            rows.append(values)
            raw_labels.append(fields[width].strip())

    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), width)
    vocabularies = {}
    for j, col in cat_pos.items():
        provisional = seen[col]
        ordered = sorted(provisional)
        remap = np.empty(len(provisional), dtype=np.float64)
        for new, cat in enumerate(ordered):
            remap[provisional[cat]] = new
        if len(matrix):
            matrix[:, j] = remap[matrix[:, j].astype(np.int64)]
        vocabularies[col] = tuple(ordered)

    labels = np.array([binarize_label(t) for t in raw_labels], dtype=np.int8)
    return LabeledDataset(
        schema=schema.with_vocabularies(vocabularies),
        rows=matrix,
        labels=labels,
        raw_labels=tuple(raw_labels),
        row_ids=np.arange(len(rows), dtype=np.int64),
    )


def _format_value(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def write_kddcup(ds: LabeledDataset, path: str | Path) -> None:
    """Serialise back to the headerless KDD CSV layout."""
    kinds = ds.schema.kinds
    names = ds.schema.names
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for i in range(len(ds)):
            out = []
            for j, kind in enumerate(kinds):
                v = ds.rows[i, j]
                if kind is FeatureKind.CATEGORICAL:
                    out.append(ds.schema.vocabularies[names[j]][int(v)])
                else:
                    out.append(_format_value(v))
            out.append(ds.raw_labels[i])
            writer.writerow(out)


def _allocate(total: int, fractions: Iterable[float]) -> list[int]:
    """Largest-remainder apportionment of ``total`` items."""
    fractions = list(fractions)
    exact = [total * f for f in fractions]
    counts = [int(np.floor(e)) for e in exact]
    short = total - sum(counts)
    order = sorted(range(len(exact)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def stratified_split(
    ds: LabeledDataset, fractions: Sequence[float] = (0.6, 0.2, 0.2), seed: int = 0
) -> tuple[LabeledDataset, ...]:
    """Split into len(fractions) parts with per-class proportions preserved.

    The permutation depends only on ``seed``; each part keeps original row
    order.
    """
    fractions = [float(f) for f in fractions]
    if not fractions or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be positive and sum to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[] for _ in fractions]
    for cls in (0, 1):
        members = np.flatnonzero(ds.labels == cls)
        if len(members) == 0:
            continue
        if len(members) < len(fractions):
            raise ValueError(
                f"label class {cls} has {len(members)} rows, fewer than {len(fractions)} splits"
            )
        members = members[rng.permutation(len(members))]
        start = 0
        for k, count in enumerate(_allocate(len(members), fractions)):
            parts[k].append(members[start:start + count])
            start += count
    return tuple(ds.take(np.sort(np.concatenate(p)) if p else np.array([], dtype=np.int64)) for p in parts)


def subsample(ds: LabeledDataset, n: int, seed: int = 0) -> LabeledDataset:
    """Draw ``n`` rows stratified by binary label, preserving row order."""
    if n < 0 or n > len(ds):
        raise ValueError(f"cannot draw {n} rows from a dataset of {len(ds)}")
    if n == 0:
        return ds.take([])
    rng = np.random.default_rng(seed)
    classes = [np.flatnonzero(ds.labels == c) for c in (0, 1)]
    counts = _allocate(n, [len(c) / len(ds) for c in classes])
    chosen = [members[rng.permutation(len(members))[:k]] for members, k in zip(classes, counts)]
    return ds.take(np.sort(np.concatenate(chosen)))
