"""forge: command-line front end for the RGB-Event dataset pipeline.

Exit codes: 0 success, 1 configuration error, 2 partial failure (quarantined
items present).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .events import accumulate_slices, parse_event_stream, render_slice_png, select_window
from .fusion import deserialize_fused, fuse_graphs, serialize_fused
from .gateway import Gateway, HttpTransport, MockTransport
from .graph import deserialize_graph, parse_caption_to_graph, serialize_graph
from .metrics import EvalRecord, aggregate_scores, correction_rate, dataset_accuracy
from .pipeline import ConfigError, load_config, run_pipeline, split_dataset
from .stam import (
    FeatureGrid,
    alignment_summary,
    resample_to_lattice,
    se_temporal_weighting,
    temporal_multiscale_dwconv,
)
from .tensorio import load_tensors, save_tensors
from .gateway import JudgeScores


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # bad flags are config errors (exit 1), not crashes
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="forge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse events, window, accumulate slices")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["csv", "evs"], default="csv")
    p.add_argument("--keyframe-ts", type=int, required=True)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--frame-ms", type=int, default=33)
    p.add_argument("--slices", type=int, default=3)
    p.add_argument("--sort", action="store_true", help="repair unsorted input")
    p.add_argument("--out", required=True, help="output tensor container")
    p.add_argument("--render-dir", default=None, help="also write slice PNGs here")

    p = sub.add_parser("graph", help="parse a structured caption into a scene graph")
    p.add_argument("--caption", required=True)
    p.add_argument("--modality", choices=["event", "rgb"], required=True)
    p.add_argument("--frame-ref", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fuse", help="degradation-aware fusion of two graphs")
    p.add_argument("--event-graph", required=True)
    p.add_argument("--rgb-graph", required=True)
    p.add_argument("--tau", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None, help="also write the policy trace alone")

    p = sub.add_parser("synth", help="synthesize caption and VQA items from a fused graph")
    p.add_argument("--fused", required=True)
    p.add_argument("--mode", choices=["template", "external"], default="template")
    p.add_argument("--max-items", type=int, default=3)
    p.add_argument("--base-url", default=None, help="chat endpoint for external mode")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="aggregate judge scores and attribute accuracy")
    p.add_argument("--records", required=True)
    p.add_argument("--pooled", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("audit-stats", help="correction rate over an audit log")
    p.add_argument("--audits", required=True)

    p = sub.add_parser("split", help="sequence-level train/test split of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stratify", action="store_true", help="stratify by condition tag")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("run", help="run the full pipeline from a TOML config")
    p.add_argument("--config", required=True)

    p = sub.add_parser("serve", help="start the review service")
    p.add_argument("--manifest", required=True)
    p.add_argument("--port", type=int, default=8630)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--frontend", default=None, help="static UI bundle directory")

    p = sub.add_parser("stam", help="alignment loss report for two feature tensors")
    p.add_argument("--rgb", required=True)
    p.add_argument("--event", required=True)
    p.add_argument("--tc", type=int, default=None)
    p.add_argument("--hc", type=int, default=None)
    p.add_argument("--wc", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--l-llm", type=float, default=0.0)
    p.add_argument("--enhance", action="store_true",
                   help="apply temporal conv + SE gating to the event grid first")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)
    return parser


def _read(path) -> bytes:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"input file {p} does not exist")
    return p.read_bytes()


def cmd_ingest(args) -> int:
    stream = parse_event_stream(_read(args.input), args.format, sort=args.sort)
    window = select_window(stream, args.keyframe_ts, n=args.n, frame_ms=args.frame_ms)
    stack = accumulate_slices(window, args.slices)
    save_tensors(args.out, {
        "counts": stack.counts,
        "window": np.array([stack.t_start, stack.t_end, window.keyframe_t, stack.pad_us],
                           dtype=np.int64),
    })
    if args.render_dir:
        out = Path(args.render_dir)
        out.mkdir(parents=True, exist_ok=True)
        for s in range(stack.n_slices):
            (out / f"slice_{s}.png").write_bytes(render_slice_png(stack, s))
    print(f"ingested {len(window)} events into {args.slices} slices -> {args.out}")
    return 0


def cmd_graph(args) -> int:
    caption = _read(args.caption).decode("utf-8")
    g = parse_caption_to_graph(caption, modality=args.modality, frame_ref=args.frame_ref)
    Path(args.out).write_text(serialize_graph(g))
    print(f"parsed {len(g.entities)} entities, {len(g.predicates)} predicates -> {args.out}")
    return 0


def cmd_fuse(args) -> int:
    g_e = deserialize_graph(_read(args.event_graph).decode("utf-8"))
    g_r = deserialize_graph(_read(args.rgb_graph).decode("utf-8"))
    fused = fuse_graphs(g_e, g_r, tau=args.tau)
    Path(args.out).write_text(serialize_fused(fused))
    if args.trace:
        Path(args.trace).write_text(
            json.dumps(fused.policy_trace, indent=2, sort_keys=True) + "\n")
    print(f"fused {len(fused.facts)} facts (severe={fused.report.severe}) -> {args.out}")
    return 0


def cmd_synth(args) -> int:
    from .pipeline import _paraphrase
    from .synth import synthesize_caption, synthesize_vqa

    fused = deserialize_fused(_read(args.fused).decode("utf-8"))
    caption = synthesize_caption(fused)
    qa_items = synthesize_vqa(fused, max_items=args.max_items)
    generator = args.mode
    caption_text = caption.text
    questions = [q.question for q in qa_items]
    if args.mode == "external":
        transport = HttpTransport(args.base_url) if args.base_url else MockTransport()
        gw = Gateway(transport=transport)
        caption_text = _paraphrase(gw, caption.text)
        questions = [_paraphrase(gw, q) for q in questions]
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(json.dumps({"type": "caption", "text": caption_text,
                            "supporting_facts": caption.supporting_facts,
                            "generator": generator,
                            "provenance": {"fused": args.fused}},
                           sort_keys=True, ensure_ascii=False) + "\n")
        for i, (qa, question) in enumerate(zip(qa_items, questions)):
            f.write(json.dumps({"type": "qa", "question": question, "answer": qa.answer,
                                "attributes": qa.attributes, "field_class": qa.field_class,
                                "supporting_facts": qa.supporting_facts,
                                "generator": generator,
                                "provenance": {"fused": args.fused}},
                               sort_keys=True, ensure_ascii=False) + "\n")
    print(f"wrote 1 caption and {len(qa_items)} QA items -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    records = []
    with open(args.records, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            doc = json.loads(line)
            judge = None
            if doc.get("judge"):
                j = doc["judge"]
                judge = JudgeScores(ci=j["ci"], do_=j["do"], cu=j["cu"], ave=j["ave"],
                                    acc_attrs=j.get("acc_attrs", {}))
            records.append(EvalRecord(
                item_id=doc.get("item_id", ""),
                predicted_attributes=doc.get("predicted_attributes", {}),
                gold_attributes=doc.get("gold_attributes", {}),
                judge=judge))
    report = aggregate_scores(records)
    if args.pooled:
        report["acc_pooled"] = dataset_accuracy(records, pooled=True)
    Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_audit_stats(args) -> int:
    audits = []
    with open(args.audits, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                audits.append(json.loads(line))
    stats = correction_rate(audits)
    print(json.dumps({"count": stats.count, "total": stats.total,
                      "rate_percent": stats.rate_percent}))
    return 0


def cmd_split(args) -> int:
    manifest = json.loads(_read(args.manifest).decode("utf-8"))
    parts = split_dataset(manifest, args.train_frac, args.seed,
                          stratify_by_condition=args.stratify)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in parts.items():
        (out / f"manifest.{name}.json").write_text(
            json.dumps(part, indent=2, sort_keys=True) + "\n")
    print(f"train {len(parts['train']['items'])} / test {len(parts['test']['items'])} items")
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    manifest, quarantined = run_pipeline(cfg)
    n = manifest["splits"]["all"]["items"]
    print(f"pipeline wrote {n} items (config {cfg.config_hash[:12]})")
    if quarantined:
        print(f"{len(quarantined)} item(s) quarantined; see failed/quarantine.jsonl",
              file=sys.stderr)
        return 2
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.manifest, frontend_dir=args.frontend)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def _load_grid(path, name) -> FeatureGrid:
    arrays = load_tensors(path)
    data = arrays.get(name)
    if data is None:
        if len(arrays) != 1:
            raise ConfigError(
                f"{path} holds {sorted(arrays)}; name one array {name!r} or store exactly one")
        data = next(iter(arrays.values()))
    if data.ndim == 3:
        data = data[None]
    return FeatureGrid(np.asarray(data, dtype=np.float64))


def cmd_stam(args) -> int:
    rgb = _load_grid(args.rgb, "rgb")
    event = _load_grid(args.event, "event")
    if args.enhance:
        event = se_temporal_weighting(temporal_multiscale_dwconv(event, seed=args.seed),
                                      seed=args.seed)
    pair = resample_to_lattice(rgb, event, t_c=args.tc, h_c=args.hc, w_c=args.wc)
    report = alignment_summary(pair, lam=args.lam, l_llm=args.l_llm)
    Path(args.report).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"l_cawtd={report['l_cawtd']:.6g} total={report['total']:.6g} -> {args.report}")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "graph": cmd_graph,
    "fuse": cmd_fuse,
    "synth": cmd_synth,
    "eval": cmd_eval,
    "audit-stats": cmd_audit_stats,
    "split": cmd_split,
    "run": cmd_run,
    "serve": cmd_serve,
    "stam": cmd_stam,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"forge: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"forge: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
