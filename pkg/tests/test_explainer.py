import json
from pathlib import Path

import httpx
import numpy as np
import pytest
from exemplars import PROBE_CASE, PROBE_FEATURES, RECON_CASE, RECON_FEATURES, make_case

from iotguard.explainer import (
    ExplanationReport,
    build_explanation_prompt,
    extract_case,
    llm_explain,
    offline_explain,
    parse_explanation,
    render_markdown,
    reports_json,
)
from iotguard.gateway import GatewayConfig, completion_payload

GOLDEN = Path(__file__).parent / "golden"
COLUMNS = ["duration", "src_bytes", "dst_bytes", "protocol_type_icmp", "protocol_type_tcp",
           "protocol_type_udp", "flag_REJ", "flag_SF", "count"]


def test_extract_case_orders_by_residual_and_adds_context():
    x = np.array([0.9, 1e-6, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.2])
    x_hat = np.array([0.1, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.4, 0.2])
    case = extract_case(3, x, x_hat, 0.1, COLUMNS, k=2)
    names = [f.name for f in case.salient_features]
    assert names[:2] == ["duration", "flag_SF"]
    assert set(names) == {"duration", "flag_SF", "src_bytes", "dst_bytes", "protocol_type_icmp",
                          "protocol_type_tcp", "protocol_type_udp", "flag_REJ"}
    res = [f.squared_residual for f in case.salient_features]
    assert res == sorted(res, reverse=True)
    assert len(names) == len(set(names))


def test_extract_case_perfect_reconstruction():
    x = np.linspace(0, 1, len(COLUMNS))
    case = extract_case(0, x, x, 0.0, COLUMNS)
    assert all(f.squared_residual == 0 for f in case.salient_features)
    assert case.value("src_bytes") == x[1]


def test_extract_case_k_exceeds_columns():
    x = np.arange(3.0)
    case = extract_case(0, x, x * 0, 1.0, ["a", "b", "c"], k=10)
    assert sorted(f.name for f in case.salient_features) == ["a", "b", "c"]


def test_recon_prompt_contains_fields():
    prompt = build_explanation_prompt(RECON_CASE)
    for name, value in RECON_FEATURES.items():
        assert f"{name}={value!r}" in prompt
    assert "src_bytes=1.4883707192251517e-06" in prompt
    assert "0.0001" in prompt and "Prediction: Attack" in prompt
    assert "Generated Insight" in prompt and "Steps for Further Analysis" in prompt


@pytest.mark.parametrize("case, golden", [(RECON_CASE, "recon_prompt.txt"), (PROBE_CASE, "probe_prompt.txt")])
def test_prompt_goldens(case, golden):
    assert build_explanation_prompt(case).encode() == (GOLDEN / golden).read_bytes()


def test_offline_recon_rule():
    r = offline_explain(RECON_CASE)
    assert "stealth reconnaissance" in r.insight
    assert r.source == "offline-template"
    assert any(s.startswith("Network Logs") for s in r.analysis_steps)


def test_offline_probe_rule():
    r = offline_explain(PROBE_CASE)
    assert "port scanning or probing" in r.insight
    assert any(s.startswith("Source IP Tracking") for s in r.analysis_steps)


def test_offline_rejected_rule():
    r = offline_explain(make_case({"src_bytes": 0.0, "dst_bytes": 0.0, "flag_REJ": 1.0}, 0.02))
    assert "failed network scanning attempt" in r.insight


def test_offline_generic_rule_names_top_feature():
    case = make_case({"count": 0.93, "src_bytes": 0.4, "dst_bytes": 0.2}, 0.3)
    r = offline_explain(case)
    assert "count=0.93" in r.insight


def test_offline_is_deterministic():
    assert offline_explain(PROBE_CASE) == offline_explain(PROBE_CASE)


@pytest.mark.parametrize("features", [
    {"x": 0.0},
    {"src_bytes": 0.0},
    {"src_bytes": 0.0, "dst_bytes": 0.5, "protocol_type_tcp": 1.0},
    {"flag_REJ": 1.0, "src_bytes": 0.3},
    {"protocol_type_tcp": 0.0, "dst_bytes": 0.0},
])
def test_offline_is_total(features):
    r = offline_explain(make_case(features, 0.5))
    assert r.insight and r.analysis_steps


def test_report_invariants():
    with pytest.raises(ValueError):
        ExplanationReport(RECON_CASE, " ", ("x",), "llm")
    with pytest.raises(ValueError):
        ExplanationReport(RECON_CASE, "x", (), "llm")


def test_parse_explanation():
    text = (
        "**Generated Insight:** Looks like a probe.\n\n"
        "**Steps for Further Analysis:**\n"
        "1. **Traffic Context:** check neighbours\n"
        "2. Protocol Analysis: handshake\n"
    )
    insight, steps = parse_explanation(text)
    assert insight == "Looks like a probe."
    assert steps == ("Traffic Context: check neighbours", "Protocol Analysis: handshake")


def test_parse_explanation_free_text():
    insight, steps = parse_explanation("just prose")
    assert insight == "just prose" and len(steps) == 1


def test_llm_explain_embeds_verbatim_content():
    answer = "Generated Insight: odd.\nSteps for Further Analysis:\n1. look"
    transport = httpx.MockTransport(lambda request: httpx.Response(200, json=completion_payload(answer)))
    cfg = GatewayConfig(base_url="http://llm.test", api_key="k")
    r = llm_explain(PROBE_CASE, cfg, transport=transport)
    assert r.source == "llm" and r.raw_response == answer
    assert r.analysis_steps == ("look",)


def test_render_markdown_and_json():
    reports = [offline_explain(RECON_CASE), offline_explain(PROBE_CASE)]
    md = render_markdown(reports)
    assert md.count("## Anomaly") == 2
    assert "**Reconstruction Error:** 0.0008" in md
    assert "`protocol_type_tcp=1.0`" in md
    assert "1. " in md
    doc = json.loads(reports_json(reports))
    assert doc[1]["case"]["salient_features"][0]["name"] == "src_bytes"
    assert doc[0]["source"] == "offline-template"
    assert doc[1]["case"]["salient_features"][1]["value"] == PROBE_FEATURES["dst_bytes"]
