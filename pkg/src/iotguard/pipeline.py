"""End-to-end experiment: preprocessing, training, calibration, scoring.

Both preprocessing routes are expressed as one fitted plan; the
traditional route appends a PCA projection.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import advisor as adv
from .autoencoder import AutoencoderModel, TrainConfig, TrainTrace, init_model, reconstruction_errors, train
from .config import RunConfig
from .data import FeatureKind, LabeledDataset, load_kddcup, load_schema, stratified_split, subsample
from .detection import (
    ErrorHistogram,
    EvaluationReport,
    ThresholdModel,
    calibrate_threshold,
    classify,
    evaluate,
    export_error_histogram,
)
from .errors import AdvisorResponseError, ConfigError
from .gateway import chat
from .pca import PcaModel, fit_pca, select_components, transform_pca
from .transforms import FeatureMatrix, FittedPlan, MinMax, OneHot, PreprocessPlan, dataset_matrix, fit_plan

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Splits:
    train: LabeledDataset
    val: LabeledDataset
    test: LabeledDataset


def load_splits(cfg: RunConfig) -> Splits:
    schema = load_schema(cfg.schema) if cfg.schema else None
    ds = load_kddcup(cfg.dataset, schema)
    if cfg.subsample is not None and cfg.subsample < len(ds):
        ds = subsample(ds, cfg.subsample, cfg.seed)
    train_ds, val_ds, test_ds = stratified_split(ds, cfg.split_fractions, cfg.seed)
    return Splits(train_ds, val_ds, test_ds)


def _continuous(m: FeatureMatrix) -> tuple[str, ...]:
    return tuple(c for c, k in zip(m.column_names, m.kinds) if k is FeatureKind.CONTINUOUS)


def _categorical(m: FeatureMatrix) -> list[str]:
    return [c for c, k in zip(m.column_names, m.kinds) if k is FeatureKind.CATEGORICAL]


def traditional_plan(m: FeatureMatrix) -> PreprocessPlan:
    """Min-Max the continuous columns, one-hot every categorical column."""
    steps = [MinMax(_continuous(m))] + [OneHot(c) for c in _categorical(m)]
    return PreprocessPlan(tuple(steps), "manual")


def prescale_plan(m: FeatureMatrix) -> PreprocessPlan:
    return PreprocessPlan((MinMax(_continuous(m)),), "manual")


def advisor_stats(train_ds: LabeledDataset) -> tuple[adv.FeatureStats, FittedPlan]:
    """Statistics of the Min-Max scaled training split."""
    base = dataset_matrix(train_ds)
    fitted, scaled = fit_plan(base, prescale_plan(base))
    return adv.compute_feature_stats(scaled), fitted


@dataclass
class AdvicePlan:
    plan: PreprocessPlan
    prompt: str | None = None
    response: str | None = None
    failure: str | None = None


def advise(stats: adv.FeatureStats, cfg: RunConfig, mode: str | None = None, transport=None) -> AdvicePlan:
    """Plan from the heuristic, or from the LLM with heuristic fallback on a
    parse failure. Configuration and transport errors propagate."""
    mode = mode or cfg.pipeline.advisor
    if mode == "heuristic":
        return AdvicePlan(adv.heuristic_advise(stats, cfg.advisor_thresholds))
    if mode != "llm":
        raise ConfigError(f"unknown advisor mode {mode!r}")
    if not cfg.gateway.base_url and not cfg.gateway.fixture_dir:
        raise ConfigError("LLM advisor selected but LLM_API_URL is not set")
    prompt = adv.build_advisor_prompt(stats)
    response = chat(prompt, cfg.gateway, transport=transport).content
    try:
        return AdvicePlan(adv.parse_advisor_response(response, stats), prompt, response)
    except AdvisorResponseError as exc:
        logger.warning("LLM plan rejected (%s); falling back to the heuristic advisor", exc)
        return AdvicePlan(adv.heuristic_advise(stats, cfg.advisor_thresholds), prompt, response, str(exc))


@dataclass
class FittedPipeline:
    provenance: str  # "pca", "heuristic", "llm" or "manual"
    plan: FittedPlan
    pca: PcaModel | None = None
    advice_failure: str | None = None

    def transform(self, ds: LabeledDataset | FeatureMatrix) -> FeatureMatrix:
        m = dataset_matrix(ds) if isinstance(ds, LabeledDataset) else ds
        m = self.plan.transform(m)
        return transform_pca(m, self.pca) if self.pca is not None else m

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance,
            "plan": self.plan.to_dict(),
            "pca": None if self.pca is None else self.pca.to_dict(),
            "advice_failure": self.advice_failure,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedPipeline":
        return cls(
            d["provenance"],
            FittedPlan.from_dict(d["plan"]),
            None if d.get("pca") is None else PcaModel.from_dict(d["pca"]),
            d.get("advice_failure"),
        )


def truncate_pca(p: PcaModel, k: int) -> PcaModel:
    return PcaModel(p.mean, p.components[:k].copy(), p.explained_variance[:k].copy(),
                    p.explained_ratio[:k].copy(), p.input_columns)


def fit_pca_pipeline(train_ds: LabeledDataset, cfg: RunConfig) -> FittedPipeline:
    base = dataset_matrix(train_ds)
    fitted, encoded = fit_plan(base, traditional_plan(base))
    choice = cfg.pipeline
    if choice.pca_target_variance is not None:
        full = fit_pca(encoded, min(encoded.shape[0] - 1, encoded.shape[1]))
        pca = truncate_pca(full, select_components(full, choice.pca_target_variance))
    else:
        pca = fit_pca(encoded, choice.pca_k)
    logger.info("PCA: %d components keep %.4f of the variance", pca.k, float(pca.explained_ratio.sum()))
    return FittedPipeline("pca", fitted, pca)


def fit_advisor_pipeline(train_ds: LabeledDataset, cfg: RunConfig, mode: str | None = None,
                         transport=None) -> tuple[FittedPipeline, AdvicePlan]:
    stats, _ = advisor_stats(train_ds)
    advice = advise(stats, cfg, mode, transport)
    base = dataset_matrix(train_ds)
    full_plan = PreprocessPlan(prescale_plan(base).steps + advice.plan.steps, advice.plan.provenance)
    fitted, _ = fit_plan(base, full_plan)
    return FittedPipeline(advice.plan.provenance, fitted, None, advice.failure), advice


def fit_pipeline(train_ds: LabeledDataset, cfg: RunConfig, transport=None) -> tuple[FittedPipeline, AdvicePlan | None]:
    if cfg.pipeline.kind == "pca":
        return fit_pca_pipeline(train_ds, cfg), None
    return fit_advisor_pipeline(train_ds, cfg, transport=transport)


@dataclass
class TrainedDetector:
    pipeline: FittedPipeline
    model: AutoencoderModel
    trace: TrainTrace
    train_config: TrainConfig


def train_detector(pipeline: FittedPipeline, train_ds: LabeledDataset, tc: TrainConfig) -> TrainedDetector:
    x = pipeline.transform(train_ds)
    n = x.shape[1]
    if tc.latent_dim >= n:
        raise ConfigError(f"latent_dim={tc.latent_dim} must be below the input width {n}")
    model = init_model(n, tc.hidden_widths, tc.latent_dim, tc.seed)
    model, trace = train(model, x, tc, labels=train_ds.labels)
    return TrainedDetector(pipeline, model, trace, tc)


@dataclass
class Evaluation:
    threshold: ThresholdModel
    report: EvaluationReport
    histogram: ErrorHistogram
    errors: np.ndarray
    predictions: np.ndarray
    matrix: FeatureMatrix


def evaluate_detector(det: TrainedDetector, val_ds: LabeledDataset, test_ds: LabeledDataset,
                      cfg: RunConfig) -> Evaluation:
    val_errors = reconstruction_errors(det.model, det.pipeline.transform(val_ds))
    threshold = calibrate_threshold(val_errors, val_ds.labels, cfg.threshold_method, cfg.threshold_value)
    test_m = det.pipeline.transform(test_ds)
    errors = reconstruction_errors(det.model, test_m)
    pred = classify(errors, threshold)
    report = evaluate(pred, test_ds.labels)
    if test_m.unseen_categories:
        report.warnings.append(f"{test_m.unseen_categories} categorical value(s) outside the fitted vocabulary")
    return Evaluation(threshold, report, export_error_histogram(errors, test_ds.labels), errors, pred, test_m)


# -- artifact I/O ------------------------------------------------------------

def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, cfg: RunConfig, command: str, provenance: list[str], extra: dict | None = None) -> None:
    """Manifest listing config hash, seed, provenance and artifact digests."""
    artifacts = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            artifacts[str(p.relative_to(out))] = file_digest(p)
    doc = {
        "command": command,
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "provenance": provenance,
        "dataset_sha256": file_digest(cfg.dataset),
        "config": cfg.to_dict(),
        "artifacts": artifacts,
    }
    if extra:
        doc.update(extra)
    dump_json(doc, out / "manifest.json")
