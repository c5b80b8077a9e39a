"""Covariance-eigendecomposition PCA."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transforms import FeatureMatrix


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # k x n, orthonormal rows
    explained_variance: np.ndarray
    explained_ratio: np.ndarray
    input_columns: tuple[str, ...] = ()

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def to_dict(self) -> dict:
        return {
            "input_columns": list(self.input_columns),
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "explained_ratio": self.explained_ratio.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        return cls(
            mean=np.asarray(d["mean"], dtype=np.float64),
            components=np.asarray(d["components"], dtype=np.float64).reshape(-1, len(d["mean"])),
            explained_variance=np.asarray(d["explained_variance"], dtype=np.float64),
            explained_ratio=np.asarray(d["explained_ratio"], dtype=np.float64),
            input_columns=tuple(d.get("input_columns", ())),
        )


def _values(m: FeatureMatrix | np.ndarray) -> np.ndarray:
    return m.values if isinstance(m, FeatureMatrix) else np.asarray(m, dtype=np.float64)


def fit_pca(m: FeatureMatrix | np.ndarray, k: int) -> PcaModel:
    """Top-``k`` eigenvectors of the sample covariance of mean-centred rows.

    Each component is sign-fixed so its largest-magnitude entry is positive.
    Ratios are taken against the total variance over all columns.
    """
    x = _values(m)
    rows, cols = x.shape
    if rows < 2:
        raise ValueError("PCA needs at least two rows")
    if not 1 <= k <= min(rows - 1, cols):
        raise ValueError(f"k={k} outside [1, {min(rows - 1, cols)}]")
    if not np.all(np.isfinite(x)):
        raise ValueError("PCA input contains non-finite values")

    mean = x.mean(axis=0)
    centred = x - mean
    cov = centred.T @ centred / (rows - 1)
    cov = (cov + cov.T) / 2
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals, kind="stable")[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]

    total = float(np.trace(cov))
    components = eigvecs[:, :k].T.copy()
    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(k), pivots])
    components *= signs[:, None]
    variance = eigvals[:k].copy()
    ratio = variance / total if total > 0 else np.zeros(k)
    names = m.column_names if isinstance(m, FeatureMatrix) else ()
    return PcaModel(mean, components, variance, np.clip(ratio, 0.0, 1.0), tuple(names))


def transform_pca(m: FeatureMatrix | np.ndarray, p: PcaModel) -> FeatureMatrix:
    x = _values(m)
    if x.ndim != 2 or x.shape[1] != p.mean.shape[0]:
        raise ValueError(f"expected {p.mean.shape[0]} columns, got {x.shape[-1]}")
    scores = (x - p.mean) @ p.components.T
    return FeatureMatrix(tuple(f"pc{i + 1}" for i in range(p.k)), scores)


def inverse_transform_pca(scores: FeatureMatrix | np.ndarray, p: PcaModel) -> np.ndarray:
    return _values(scores) @ p.components + p.mean


def select_components(p: PcaModel, target: float) -> int:
    """Smallest k whose cumulative explained ratio reaches ``target``."""
    if not 0 < target <= 1:
        raise ValueError("target must lie in (0, 1]")
    cumulative = np.cumsum(p.explained_ratio)
    # tolerate round-off so target=1.0 selects the full set
    hits = np.flatnonzero(cumulative >= target - 1e-12)
    return int(hits[0]) + 1 if len(hits) else p.k
