"""``iotguard`` command line.

    iotguard <stats|plan|train|evaluate|compare|explain> --config CFG [--seed N] [--out DIR]

Every command writes its artifacts plus ``manifest.json`` under the
output directory. Failures exit non-zero with one diagnostic line.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .autoencoder import TrainTrace, forward, load_model, save_model
from .config import RunConfig, load_config
from .errors import IotGuardError
from .explainer import extract_case, llm_explain, offline_explain, render_markdown, reports_json
from .pipeline import (
    FittedPipeline,
    TrainedDetector,
    advise,
    advisor_stats,
    dump_json,
    evaluate_detector,
    fit_pipeline,
    load_splits,
    train_detector,
    write_manifest,
)

logger = logging.getLogger("iotguard")

COMMANDS = ("stats", "plan", "train", "evaluate", "compare", "explain")


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _train_into(out: Path, cfg: RunConfig, splits, transport=None) -> TrainedDetector:
    pipeline, advice = fit_pipeline(splits.train, cfg, transport=transport)
    det = train_detector(pipeline, splits.train, cfg.train)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(pipeline.to_dict(), out / "pipeline.json")
    if advice is not None:
        (out / "plan.json").write_text(advice.plan.to_json() + "\n")
        if advice.prompt is not None:
            (out / "advisor_prompt.txt").write_text(advice.prompt)
            (out / "advisor_response.txt").write_text(advice.response or "")
    if pipeline.pca is not None:
        dump_json(pipeline.pca.to_dict(), out / "pca.json")
    save_model(det.model, out / "model.json", det.train_config)
    det.trace.write_csv(out / "trace.csv")
    return det


def _load_or_train(out: Path, cfg: RunConfig, splits, transport=None) -> TrainedDetector:
    pipe_path, model_path = out / "pipeline.json", out / "model.json"
    if pipe_path.is_file() and model_path.is_file():
        pipeline = FittedPipeline.from_dict(json.loads(pipe_path.read_text()))
        return TrainedDetector(pipeline, load_model(model_path), TrainTrace(), cfg.train)
    return _train_into(out, cfg, splits, transport)


def _evaluate_into(out: Path, cfg: RunConfig, det: TrainedDetector, splits):
    ev = evaluate_detector(det, splits.val, splits.test, cfg)
    report = ev.report.to_dict()
    report["threshold"] = ev.threshold.to_dict()
    report["provenance"] = det.pipeline.provenance
    report["input_width"] = det.model.input_dim
    if det.pipeline.pca is not None:
        report["pca_explained_ratio"] = float(np.sum(det.pipeline.pca.explained_ratio))
    if det.pipeline.advice_failure:
        report["warnings"].append(f"LLM plan rejected, heuristic used: {det.pipeline.advice_failure}")
    dump_json(report, out / "report.json")
    ev.histogram.write_csv(out / "histogram.csv")
    return ev, report


def cmd_stats(cfg: RunConfig, args) -> None:
    out = _out(cfg)
    splits = load_splits(cfg)
    stats, _ = advisor_stats(splits.train)
    dump_json(stats.to_dict(), out / "stats.json")
    write_manifest(out, cfg, "stats", [cfg.pipeline.provenance])


def cmd_plan(cfg: RunConfig, args) -> None:
    out = _out(cfg)
    splits = load_splits(cfg)
    stats, _ = advisor_stats(splits.train)
    advice = advise(stats, cfg, args.advisor or cfg.pipeline.advisor)
    (out / "plan.json").write_text(advice.plan.to_json() + "\n")
    extra = {"advice_failure": advice.failure} if advice.failure else None
    write_manifest(out, cfg, "plan", [advice.plan.provenance], extra)


def cmd_train(cfg: RunConfig, args) -> None:
    out = _out(cfg)
    det = _train_into(out, cfg, load_splits(cfg))
    write_manifest(out, cfg, "train", [det.pipeline.provenance])


def cmd_evaluate(cfg: RunConfig, args) -> None:
    out = _out(cfg)
    splits = load_splits(cfg)
    det = _load_or_train(out, cfg, splits)
    _evaluate_into(out, cfg, det, splits)
    write_manifest(out, cfg, "evaluate", [det.pipeline.provenance])


def _summary(report: dict) -> dict:
    return {
        "accuracy": report["accuracy"],
        "false_positive_rate": report["false_positive_rate"],
        "macro_precision": report["macro"]["precision"],
        "macro_recall": report["macro"]["recall"],
        "macro_f1": report["macro"]["f1"],
    }


def cmd_compare(cfg: RunConfig, args) -> None:
    """Both pipelines on one ingest/split; side-by-side macro metrics."""
    out = _out(cfg)
    splits = load_splits(cfg)
    results = {}
    for name, kind in (("pca", "pca"), ("advisor", "advisor")):
        sub_cfg = cfg.with_overrides(pipeline=kind)
        sub_out = out / name
        det = _train_into(sub_out, sub_cfg, splits)
        _, report = _evaluate_into(sub_out, sub_cfg, det, splits)
        results[name] = report
    a, b = _summary(results["pca"]), _summary(results["advisor"])
    doc = {
        "pca": results["pca"],
        "advisor": results["advisor"],
        "summary": {"pca": a, "advisor": b},
        "delta": {k: b[k] - a[k] for k in a},
    }
    dump_json(doc, out / "report.json")
    write_manifest(out, cfg, "compare", ["pca", results["advisor"]["provenance"]])
    print(f"macro F1: pca={a['macro_f1']:.4f} advisor={b['macro_f1']:.4f} delta={doc['delta']['macro_f1']:+.4f}")


def cmd_explain(cfg: RunConfig, args) -> None:
    out = _out(cfg)
    splits = load_splits(cfg)
    det = _load_or_train(out, cfg, splits)
    ev, _ = _evaluate_into(out, cfg, det, splits)
    flagged = np.flatnonzero(ev.predictions == 1)
    # highest error first, row order breaks ties
    flagged = flagged[np.argsort(-ev.errors[flagged], kind="stable")][: cfg.explain.max_cases]
    x = ev.matrix.values
    _, x_hat = forward(det.model, x[flagged]) if len(flagged) else (None, np.zeros((0, x.shape[1])))
    reports = []
    for i, row in enumerate(flagged):
        case = extract_case(int(splits.test.row_ids[row]), x[row], x_hat[i], float(ev.errors[row]),
                            ev.matrix.column_names, cfg.explain.top_k)
        reports.append(llm_explain(case, cfg.gateway) if cfg.explain.mode == "llm" else offline_explain(case))
    (out / "explanations.md").write_text(render_markdown(reports))
    (out / "explanations.json").write_text(reports_json(reports))
    write_manifest(out, cfg, "explain", [det.pipeline.provenance])


HANDLERS = {
    "stats": cmd_stats,
    "plan": cmd_plan,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "explain": cmd_explain,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iotguard", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="run configuration (JSON)")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--advisor", choices=("heuristic", "llm"), help="advisor used by plan/train")
    parser.add_argument("--pipeline", choices=("pca", "advisor"), help="pipeline used by train/evaluate/explain")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(
            seed=args.seed, output_dir=args.out, advisor=args.advisor, pipeline=args.pipeline
        )
        HANDLERS[args.command](cfg, args)
    except IotGuardError as exc:
        print(f"iotguard: {exc.failure_class} error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, KeyError) as exc:
        print(f"iotguard: config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
