"""Run configuration (JSON) with ${VAR} interpolation in the gateway block."""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .advisor import AdvisorThresholds
from .autoencoder import TrainConfig
from .errors import ConfigError
from .gateway import GatewayConfig, canonical_json

_ENV_REF = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass(frozen=True)
class PipelineChoice:
    kind: str = "advisor"  # "pca" or "advisor"
    pca_k: int | None = 25
    pca_target_variance: float | None = None
    advisor: str = "heuristic"  # "heuristic" or "llm"

    def __post_init__(self):
        if self.kind not in ("pca", "advisor"):
            raise ConfigError(f"pipeline.kind must be 'pca' or 'advisor', got {self.kind!r}")
        if self.advisor not in ("heuristic", "llm"):
            raise ConfigError(f"pipeline.advisor must be 'heuristic' or 'llm', got {self.advisor!r}")
        if self.kind == "pca" and (self.pca_k is None) == (self.pca_target_variance is None):
            raise ConfigError("a pca pipeline needs exactly one of pca_k or pca_target_variance")

    @property
    def provenance(self) -> str:
        return "pca" if self.kind == "pca" else self.advisor


@dataclass(frozen=True)
class ExplainConfig:
    mode: str = "offline"  # "offline" or "llm"
    max_cases: int = 10
    top_k: int = 4


@dataclass(frozen=True)
class RunConfig:
    dataset: str
    output_dir: str = "runs/default"
    schema: str | None = None
    subsample: int | None = None
    split_fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0
    pipeline: PipelineChoice = field(default_factory=PipelineChoice)
    train: TrainConfig = field(default_factory=TrainConfig)
    threshold_method: str = "percentile"
    threshold_value: float = 95.0
    advisor_thresholds: AdvisorThresholds = field(default_factory=AdvisorThresholds)
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)

    def with_overrides(self, seed: int | None = None, output_dir: str | None = None,
                       advisor: str | None = None, pipeline: str | None = None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed, train=replace(cfg.train, seed=seed))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=output_dir)
        if advisor is not None:
            cfg = replace(cfg, pipeline=replace(cfg.pipeline, advisor=advisor))
        if pipeline is not None:
            cfg = replace(cfg, pipeline=replace(cfg.pipeline, kind=pipeline))
        return cfg

    def to_dict(self, redact: bool = True) -> dict:
        gw = self.gateway
        return {
            "dataset": self.dataset,
            "schema": self.schema,
            "subsample": self.subsample,
            "split": {"fractions": list(self.split_fractions)},
            "seed": self.seed,
            "pipeline": {
                "kind": self.pipeline.kind,
                "pca_k": self.pipeline.pca_k,
                "pca_target_variance": self.pipeline.pca_target_variance,
                "advisor": self.pipeline.advisor,
            },
            "train": self.train.to_dict(),
            "threshold": {"method": self.threshold_method, "value": self.threshold_value},
            "advisor_thresholds": {
                "low_variance_cutoff": self.advisor_thresholds.low_variance_cutoff,
                "high_correlation_cutoff": self.advisor_thresholds.high_correlation_cutoff,
                "sparsity_cutoff": self.advisor_thresholds.sparsity_cutoff,
            },
            "gateway": {
                "base_url": gw.base_url,
                "model": gw.model,
                "timeout_ms": gw.timeout_ms,
                "max_retries": gw.max_retries,
                "fixture_dir": gw.fixture_dir,
                **({} if redact else {"api_key": gw.api_key}),
            },
            "explain": {"mode": self.explain.mode, "max_cases": self.explain.max_cases, "top_k": self.explain.top_k},
        }

    def digest(self) -> str:
        """Hash of everything that affects results (output dir and secrets excluded)."""
        return hashlib.sha256(canonical_json(self.to_dict())).hexdigest()


def _interpolate(value: Any, env: dict) -> Any:
    if isinstance(value, str):
        def sub(m: re.Match) -> str:
            if m.group(1) not in env:
                return ""
            return env[m.group(1)]
        out = _ENV_REF.sub(sub, value)
        return out or None
    return value


def _section(raw: dict, key: str) -> dict:
    value = raw.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section {key!r} must be an object")
    return value


def _resolve(path: str | None, base: Path) -> str | None:
    if path is None:
        return None
    p = Path(path)
    return str(p if p.is_absolute() else base / p)


def config_from_dict(raw: dict, base_dir: str | Path = ".", env: dict | None = None) -> RunConfig:
    env = dict(os.environ) if env is None else env
    base = Path(base_dir)
    if "dataset" not in raw:
        raise ConfigError("config is missing 'dataset'")
    try:
        seed = int(raw.get("seed", 0))
        split = _section(raw, "split")
        pipe = _section(raw, "pipeline")
        pipeline = PipelineChoice(
            kind=pipe.get("kind", "advisor"),
            pca_k=pipe.get("pca_k", None if "pca_target_variance" in pipe else 25),
            pca_target_variance=pipe.get("pca_target_variance"),
            advisor=pipe.get("advisor", "heuristic"),
        )
        train_raw = dict(_section(raw, "train"))
        train_raw.setdefault("seed", seed)
        if "hidden_widths" in train_raw:
            train_raw["hidden_widths"] = tuple(train_raw["hidden_widths"])
        train = TrainConfig(**train_raw)
        threshold = _section(raw, "threshold")
        thresholds = AdvisorThresholds(**_section(raw, "advisor_thresholds"))

        gw_raw = {k: _interpolate(v, env) for k, v in _section(raw, "gateway").items()}
        if gw_raw.get("fixture_dir"):
            gw_raw["fixture_dir"] = _resolve(gw_raw["fixture_dir"], base)
        gateway = GatewayConfig.from_env(env, **gw_raw)
        explain = ExplainConfig(**_section(raw, "explain"))
        fractions = tuple(float(f) for f in split.get("fractions", (0.6, 0.2, 0.2)))
        if len(fractions) != 3:
            raise ConfigError("split.fractions must list train, validation and test fractions")
        return RunConfig(
            dataset=_resolve(raw["dataset"], base),
            output_dir=raw.get("output_dir", "runs/default"),
            schema=_resolve(raw.get("schema"), base),
            subsample=raw.get("subsample"),
            split_fractions=fractions,
            seed=seed,
            pipeline=pipeline,
            train=train,
            threshold_method=threshold.get("method", "percentile"),
            threshold_value=float(threshold.get("value", 95.0)),
            advisor_thresholds=thresholds,
            gateway=gateway,
            explain=explain,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load_config(path: str | Path, env: dict | None = None) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    cfg = config_from_dict(raw, path.parent, env)
    for p in (cfg.dataset, cfg.schema):
        if p is not None and not Path(p).exists():
            raise ConfigError(f"referenced path {p} does not exist")
    return cfg
