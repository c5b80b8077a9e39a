"""Natural-language explanations for flagged connections.

A flagged row becomes an :class:`AnomalyCase` (error plus the features
with the largest residuals). The case is rendered either into a prompt
for a chat endpoint or through fixed offline rules that cover the
low-volume reconnaissance, probing and rejected-connection patterns.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gateway import GatewayConfig, chat

CONTEXT_FEATURES = ("src_bytes", "dst_bytes", "flag_REJ")
CONTEXT_PREFIXES = ("protocol_type_",)

# scaled-feature magnitudes treated as "near zero" / "small"
NEAR_ZERO = 1e-5
SMALL = 1e-3


@dataclass(frozen=True)
class SalientFeature:
    name: str
    value: float
    squared_residual: float


@dataclass(frozen=True)
class AnomalyCase:
    row_id: int
    reconstruction_error: float
    salient_features: tuple[SalientFeature, ...]
    prediction: str = "attack"

    def value(self, name: str) -> float | None:
        for f in self.salient_features:
            if f.name == name:
                return f.value
        return None

    def to_dict(self) -> dict:
        return {
            "row_id": self.row_id,
            "reconstruction_error": self.reconstruction_error,
            "salient_features": [
                {"name": f.name, "value": f.value, "squared_residual": f.squared_residual}
                for f in self.salient_features
            ],
            "prediction": self.prediction,
        }


@dataclass(frozen=True)
class ExplanationReport:
    case: AnomalyCase
    insight: str
    analysis_steps: tuple[str, ...]
    source: str  # "llm" or "offline-template"
    raw_response: str | None = None

    def __post_init__(self):
        if not self.insight.strip():
            raise ValueError("insight must not be empty")
        if not self.analysis_steps:
            raise ValueError("at least one analysis step is required")

    def to_dict(self) -> dict:
        d = {
            "case": self.case.to_dict(),
            "insight": self.insight,
            "analysis_steps": list(self.analysis_steps),
            "source": self.source,
        }
        if self.raw_response is not None:
            d["raw_response"] = self.raw_response
        return d


def extract_case(row_id: int, x: np.ndarray, x_hat: np.ndarray, error: float,
                 column_names: Sequence[str], k: int = 4) -> AnomalyCase:
    """Top-``k`` residual features plus the traffic-context columns."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    residual = (x - x_hat) ** 2
    order = sorted(range(len(column_names)), key=lambda j: (-residual[j], j))
    chosen = order[:max(k, 0)]
    for j, name in enumerate(column_names):
        if j in chosen:
            continue
        if name in CONTEXT_FEATURES or name.startswith(CONTEXT_PREFIXES):
            chosen.append(j)
    chosen.sort(key=lambda j: (-residual[j], j))
    features = tuple(SalientFeature(column_names[j], float(x[j]), float(residual[j])) for j in chosen)
    return AnomalyCase(int(row_id), float(error), features)


def format_error(error: float) -> str:
    return f"{error:.4f}"


def build_explanation_prompt(case: AnomalyCase) -> str:
    features = "\n".join(f"- {f.name}={f.value!r}" for f in case.salient_features)
    return (
        "A network-traffic autoencoder flagged the connection below as anomalous.\n"
        "\n"
        f"Reconstruction Error: {format_error(case.reconstruction_error)}\n"
        "Features (Min-Max scaled, largest reconstruction residual first):\n"
        f"{features}\n"
        f"Prediction: {case.prediction.capitalize()}\n"
        "\n"
        "Respond in two parts:\n"
        "Generated Insight: one paragraph on the probable cause of this anomaly and its implications.\n"
        "Steps for Further Analysis: a numbered list of concrete follow-up checks for a security analyst.\n"
    )


_STEPS_RECON = (
    "Network Logs: Look up the source IP and count its connection attempts in the surrounding window.",
    "Port Analysis: Check which destination ports the source touched.",
    "Threshold Adjustment: Review whether the detection threshold suits near-empty payloads.",
)
_STEPS_PROBE = (
    "Traffic Context: Search adjacent connections for a sequential sweep of ports.",
    "Protocol Analysis: Check whether the TCP handshake completed or was torn down early.",
    "Source IP Tracking: Group connections by source IP to spot repetition.",
)
_STEPS_REJECTED = (
    "Network Logs: Collect the rejected connection attempts from the same source.",
    "Port Analysis: List the destination ports that refused the connection.",
    "Source IP Tracking: Check whether the source is contacting other hosts the same way.",
)


def _fmt(v: float | None) -> str:
    return "n/a" if v is None else repr(v)


def _top_feature(case: AnomalyCase) -> SalientFeature:
    return max(case.salient_features, key=lambda f: f.squared_residual)


def offline_explain(case: AnomalyCase) -> ExplanationReport:
    """Rule-based explanation; total and deterministic."""
    src = case.value("src_bytes")
    dst = case.value("dst_bytes")
    tcp = case.value("protocol_type_tcp")
    rej = case.value("flag_REJ")
    tiny_src = src is not None and abs(src) <= NEAR_ZERO

    if rej is not None and rej >= 0.5 and (src is None or tiny_src):
        insight = (
            f"The remote side refused the connection (flag_REJ={_fmt(rej)}) and the source sent next to "
            f"nothing (src_bytes={_fmt(src)}), which fits a failed network scanning attempt against a "
            "closed service."
        )
        steps = _STEPS_REJECTED
    elif tiny_src and dst == 0.0 and tcp is not None and tcp < 0.5:
        insight = (
            f"Almost no payload left the source (src_bytes={_fmt(src)}) and nothing came back "
            f"(dst_bytes={_fmt(dst)}), over a non-TCP protocol (protocol_type_tcp={_fmt(tcp)}) and without a "
            f"rejection flag (flag_REJ={_fmt(rej)}). Connections that carry no meaningful data like this are "
            "typical of low-volume traffic anomalies or stealth reconnaissance."
        )
        steps = _STEPS_RECON
    elif (tiny_src and dst is not None and 0.0 < dst <= SMALL and tcp is not None and tcp >= 0.5
          and (rej is None or rej < 0.5)):
        insight = (
            f"A TCP connection (protocol_type_tcp={_fmt(tcp)}) sent a tiny request (src_bytes={_fmt(src)}) "
            f"and received a small reply (dst_bytes={_fmt(dst)}) without being rejected. Short exchanges "
            "like this are characteristic of port scanning or probing behavior that tests which services answer."
        )
        steps = _STEPS_PROBE
    else:
        top = _top_feature(case)
        insight = (
            f"The reconstruction error ({format_error(case.reconstruction_error)}) is driven mainly by "
            f"{top.name}={top.value!r} (squared residual {top.squared_residual:.3g}), a value the model "
            "did not learn from normal traffic. The connection deviates from the normal profile and "
            "should be reviewed as a potential intrusion."
        )
        steps = (
            f"Feature Review: Compare {top.name} against its distribution in normal traffic.",
            "Network Logs: Verify the source IP and check for related connections.",
            "Source IP Tracking: Group connections by source IP to spot repetition.",
        )
    return ExplanationReport(case, insight, steps, "offline-template")


_STEP_LINE = re.compile(r"^\s*(?:\d+[.)]|[-*])\s+(.*\S)\s*$")
_STEPS_HEADING = re.compile(r"steps\s+for\s+further\s+analysis", re.IGNORECASE)


def parse_explanation(text: str) -> tuple[str, tuple[str, ...]]:
    """Split an LLM answer into insight text and numbered steps."""
    heading = _STEPS_HEADING.search(text)
    head, tail = (text[:heading.start()], text[heading.end():]) if heading else (text, text)
    insight = re.sub(r"(?i)^\s*\**\s*generated insight\s*:?\**\s*", "", head.strip()).strip()
    insight = re.sub(r"[\s*#]+$", "", insight)
    steps = tuple(
        m.group(1).replace("**", "")
        for m in map(_STEP_LINE.match, tail.splitlines())
        if m and (heading or re.match(r"^\s*\d", m.group(0)))
    )
    if not insight:
        insight = text.strip()
    if not steps:
        steps = ("Review the full model response above.",)
    return insight, steps


def llm_explain(case: AnomalyCase, cfg: GatewayConfig, transport=None) -> ExplanationReport:
    response = chat(build_explanation_prompt(case), cfg, transport=transport)
    insight, steps = parse_explanation(response.content)
    return ExplanationReport(case, insight, steps, "llm", raw_response=response.content)


def render_markdown(reports: Sequence[ExplanationReport]) -> str:
    out = ["# Anomaly explanations", ""]
    for i, r in enumerate(reports, start=1):
        out += [
            f"## Anomaly {i} (row {r.case.row_id})",
            "",
            f"**Reconstruction Error:** {format_error(r.case.reconstruction_error)}",
            "",
            "**Features:**",
            "",
        ]
        out += [f"- `{f.name}={f.value!r}`" for f in r.case.salient_features]
        out += [
            "",
            f"**Prediction:** {r.case.prediction.capitalize()}",
            "",
            "**Generated Insight:**",
            "",
            r.insight,
            "",
            "**Steps for Further Analysis:**",
            "",
        ]
        out += [f"{n}. {step}" for n, step in enumerate(r.analysis_steps, start=1)]
        out += ["", f"_source: {r.source}_", ""]
    return "\n".join(out)


def reports_json(reports: Sequence[ExplanationReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
