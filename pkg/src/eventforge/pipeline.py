"""End-to-end dataset generation: ingest -> graphs -> fuse -> synth -> manifest.

Every keyframe item stages its intermediates under a content-hashed directory
so reruns skip finished work and any step can be inspected after the fact.
Failures are quarantined per item; the run itself keeps going.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
import sys
from dataclasses import dataclass, field, asdict
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import PIPELINE_VERSION
from .events import accumulate_slices, parse_event_stream, render_slice_png, select_window
from .fusion import fuse_graphs, serialize_fused, deserialize_fused
from .gateway import Gateway, GatewayRequest, HttpTransport, MockTransport
from .graph import parse_caption_to_graph, serialize_graph
from .synth import synthesize_caption, synthesize_vqa

log = logging.getLogger(__name__)

EVENT_CAPTION_PROMPT = """Describe only observable facts from the event slices, one fact per line,
in the subject-motion-place line grammar. Mark dynamic and temporal cues.
Scene notes:
{notes}
Window: [{t_start}, {t_end}) us, {n_events} events in {n_slices} slices.
"""

RGB_CAPTION_PROMPT = """Describe appearance and static structure of the keyframe, one fact per line,
in the line grammar. Annotate visible degradations with deg(...) lines.
Scene notes:
{notes}
"""

GRAPH_PARSE_PROMPT = """Convert the structured caption below into the line grammar, one fact per line.
{caption}
"""


class ConfigError(ValueError):
    pass


@dataclass
class KeyframeSpec:
    item_id: str
    sequence_id: str
    events: str
    keyframe_ts: int
    rgb: str | None = None
    notes_event: str = ""
    notes_rgb: str = ""
    condition: str | None = None


@dataclass
class PipelineConfig:
    dataset_name: str
    index: str
    output_root: str
    window_n: int = 4
    frame_ms: int = 33
    n_slices: int = 3
    tau: float = 0.3
    lam: float = 0.1
    synth_mode: str = "template"
    max_vqa: int = 3
    gateway_mode: str = "mock"
    gateway_base_url: str = ""
    gateway_model: str = "mock"

    def as_dict(self):
        return asdict(self)

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.as_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_config(path) -> PipelineConfig:
    """Read the TOML run configuration; defaults follow the reference pipeline."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    with open(path, "rb") as f:
        doc = tomllib.load(f)
    try:
        inputs = doc.get("inputs", {})
        window = doc.get("window", {})
        cfg = PipelineConfig(
            dataset_name=doc.get("dataset_name", "dataset"),
            index=str(Path(path).parent / inputs["index"]),
            output_root=str(Path(path).parent / doc["output"]["root"]),
            window_n=int(window.get("n", 4)),
            frame_ms=int(window.get("frame_ms", 33)),
            n_slices=int(window.get("slices", 3)),
            tau=float(doc.get("fusion", {}).get("tau", 0.3)),
            lam=float(doc.get("stam", {}).get("lambda", 0.1)),
            synth_mode=doc.get("synth", {}).get("mode", "template"),
            max_vqa=int(doc.get("synth", {}).get("max_items", 3)),
            gateway_mode=doc.get("gateway", {}).get("mode", "mock"),
            gateway_base_url=doc.get("gateway", {}).get("base_url", ""),
            gateway_model=doc.get("gateway", {}).get("model", "mock"),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key: {exc}") from None
    if cfg.synth_mode not in ("template", "external"):
        raise ConfigError(f"synth mode {cfg.synth_mode!r} not in ('template', 'external')")
    if cfg.gateway_mode not in ("mock", "http"):
        raise ConfigError(f"gateway mode {cfg.gateway_mode!r} not in ('mock', 'http')")
    if not Path(cfg.index).exists():
        raise ConfigError(f"keyframe index {cfg.index} does not exist")
    return cfg


def load_index(path) -> list:
    with open(path, "r", encoding="utf-8") as f:
        entries = json.load(f)
    specs = []
    for e in entries:
        specs.append(KeyframeSpec(
            item_id=e["item_id"], sequence_id=e["sequence_id"], events=e["events"],
            keyframe_ts=int(e["keyframe_ts"]), rgb=e.get("rgb"),
            notes_event=e.get("notes_event", ""), notes_rgb=e.get("notes_rgb", ""),
            condition=e.get("condition"),
        ))
    ids = [s.item_id for s in specs]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate item_id in keyframe index")
    return specs


def make_gateway(cfg: PipelineConfig, cache_dir) -> Gateway:
    if cfg.gateway_mode == "mock":
        return Gateway(transport=MockTransport(), cache_dir=cache_dir)
    if not cfg.gateway_base_url:
        raise ConfigError("gateway.base_url required for http mode")
    return Gateway(transport=HttpTransport(cfg.gateway_base_url), cache_dir=cache_dir)


def _item_key(cfg: PipelineConfig, spec: KeyframeSpec, events_blob: bytes) -> str:
    h = hashlib.sha256()
    h.update(cfg.config_hash.encode())
    h.update(spec.item_id.encode())
    h.update(str(spec.keyframe_ts).encode())
    h.update(hashlib.sha256(events_blob).digest())
    h.update(spec.notes_event.encode())
    h.update(spec.notes_rgb.encode())
    return h.hexdigest()[:16]


def _modality_graph(gateway, cfg, spec, modality, window, stack):
    if modality == "event":
        prompt = EVENT_CAPTION_PROMPT.format(
            notes=spec.notes_event, t_start=window.t_start, t_end=window.t_end,
            n_events=len(window), n_slices=stack.n_slices)
    else:
        prompt = RGB_CAPTION_PROMPT.format(notes=spec.notes_rgb)
    caption = gateway.complete(GatewayRequest(task="caption", prompt=prompt,
                                              model=cfg.gateway_model))
    doc = gateway.complete(GatewayRequest(
        task="graph_parse", prompt=GRAPH_PARSE_PROMPT.format(caption=caption),
        model=cfg.gateway_model))
    return parse_caption_to_graph(doc, modality=modality, frame_ref=spec.keyframe_ts)


def _paraphrase(gateway, text, model="mock"):
    from .gateway import PARAPHRASE_MARKER

    prompt = ("Rewrite the text below, preserving every factual attribute verbatim.\n"
              + PARAPHRASE_MARKER + text)
    return gateway.complete(GatewayRequest(task="paraphrase", prompt=prompt, model=model))


def _emit_items(cfg, gateway, spec, fused):
    caption = synthesize_caption(fused)
    qa_items = synthesize_vqa(fused, max_items=cfg.max_vqa)
    generator = "template"
    caption_text = caption.text
    questions = [q.question for q in qa_items]
    if cfg.synth_mode == "external":
        generator = "external"
        caption_text = _paraphrase(gateway, caption.text, cfg.gateway_model)
        questions = [_paraphrase(gateway, q, cfg.gateway_model) for q in questions]
    provenance = {
        "sequence_id": spec.sequence_id,
        "keyframe_id": spec.item_id,
        "keyframe_ts": spec.keyframe_ts,
        "source_files": {"events": spec.events, "rgb": spec.rgb},
        "pipeline_version": PIPELINE_VERSION,
        "config_hash": cfg.config_hash,
    }
    lines = [{
        "type": "caption",
        "item_id": f"{spec.item_id}:caption",
        "text": caption_text,
        "supporting_facts": caption.supporting_facts,
        "generator": generator,
        "provenance": provenance,
    }]
    for i, (qa, question) in enumerate(zip(qa_items, questions)):
        lines.append({
            "type": "qa",
            "item_id": f"{spec.item_id}:qa{i}",
            "question": question,
            "answer": qa.answer,
            "attributes": qa.attributes,
            "field_class": qa.field_class,
            "supporting_facts": qa.supporting_facts,
            "generator": generator,
            "provenance": provenance,
        })
    return lines


def process_keyframe(cfg: PipelineConfig, gateway: Gateway, spec: KeyframeSpec,
                     out_root: Path) -> list:
    """Run one keyframe through the full chain, staging every intermediate."""
    events_path = Path(cfg.index).parent / spec.events
    blob = events_path.read_bytes()
    stage = out_root / "stages" / f"{spec.item_id}-{_item_key(cfg, spec, blob)}"
    items_file = stage / "items.json"
    if items_file.exists():
        log.info("skip %s: already staged", spec.item_id)
        return json.loads(items_file.read_text())

    stage.mkdir(parents=True, exist_ok=True)
    fmt = "evs" if spec.events.endswith(".evs") else "csv"
    stream = parse_event_stream(blob, fmt)
    window = select_window(stream, spec.keyframe_ts, n=cfg.window_n, frame_ms=cfg.frame_ms)
    stack = accumulate_slices(window, cfg.n_slices)

    render_dir = out_root / "renders" / spec.item_id
    render_dir.mkdir(parents=True, exist_ok=True)
    for s in range(stack.n_slices):
        (render_dir / f"slice_{s}.png").write_bytes(render_slice_png(stack, s))
    if spec.rgb:
        rgb_src = Path(cfg.index).parent / spec.rgb
        keyframes = out_root / "keyframes"
        keyframes.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(rgb_src, keyframes / f"{spec.item_id}{rgb_src.suffix}")

    g_e = _modality_graph(gateway, cfg, spec, "event", window, stack)
    g_r = _modality_graph(gateway, cfg, spec, "rgb", window, stack)
    (stage / "event_graph.json").write_text(serialize_graph(g_e))
    (stage / "rgb_graph.json").write_text(serialize_graph(g_r))

    fused = fuse_graphs(g_e, g_r, tau=cfg.tau)
    (stage / "fused.json").write_text(serialize_fused(fused))

    lines = _emit_items(cfg, gateway, spec, fused)
    items_file.write_text(json.dumps(lines, sort_keys=True, ensure_ascii=False, indent=2))
    return lines


def run_pipeline(cfg: PipelineConfig, gateway: Gateway | None = None) -> tuple:
    """Process every keyframe in the index; returns (manifest, quarantined)."""
    out_root = Path(cfg.output_root)
    out_root.mkdir(parents=True, exist_ok=True)
    if gateway is None:
        gateway = make_gateway(cfg, cache_dir=str(out_root / "gateway"))
    specs = load_index(cfg.index)

    all_lines = []
    provenance_entries = []
    quarantined = []
    for spec in sorted(specs, key=lambda s: s.item_id):
        try:
            lines = process_keyframe(cfg, gateway, spec, out_root)
        except Exception as exc:  # per-item isolation: log and continue
            log.warning("quarantining %s: %s", spec.item_id, exc)
            quarantined.append({"item_id": spec.item_id, "error": str(exc)})
            continue
        all_lines.extend(lines)
        provenance_entries.append({
            "item_id": spec.item_id,
            "sequence_id": spec.sequence_id,
            "condition": spec.condition,
            "source_files": {"events": spec.events, "rgb": spec.rgb},
            "pipeline_version": PIPELINE_VERSION,
            "config_hash": cfg.config_hash,
            "audit_status": "unaudited",
            "generated": {
                "caption": sum(1 for l in lines if l["type"] == "caption"),
                "qa": sum(1 for l in lines if l["type"] == "qa"),
            },
        })

    with open(out_root / "items.jsonl", "w", encoding="utf-8") as f:
        for line in all_lines:
            f.write(json.dumps(line, sort_keys=True, ensure_ascii=False) + "\n")

    manifest = {
        "dataset_name": cfg.dataset_name,
        "pipeline_version": PIPELINE_VERSION,
        "config_hash": cfg.config_hash,
        "splits": {"all": {"items": len(provenance_entries)}},
        "items": provenance_entries,
    }
    with open(out_root / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, ensure_ascii=False, indent=2)

    if quarantined:
        failed_dir = out_root / "failed"
        failed_dir.mkdir(exist_ok=True)
        with open(failed_dir / "quarantine.jsonl", "a", encoding="utf-8") as f:
            for entry in quarantined:
                f.write(json.dumps(entry, sort_keys=True) + "\n")
    return manifest, quarantined


def split_dataset(manifest: dict, train_frac: float, seed: int,
                  stratify_by_condition: bool = False) -> dict:
    """Split by whole sequences, never by item; deterministic for a seed."""
    import numpy as np

    items = manifest["items"]
    sequences = sorted({it["sequence_id"] for it in items})
    if len(sequences) < 2:
        raise ValueError(f"need at least 2 sequences to split, got {len(sequences)}")
    rng = np.random.default_rng(seed)

    def cut(seqs):
        seqs = list(seqs)
        order = list(rng.permutation(len(seqs)))
        n_train = max(1, min(len(seqs) - 1, round(train_frac * len(seqs))))
        picked = {seqs[i] for i in order[:n_train]}
        return picked

    if stratify_by_condition:
        train_seqs = set()
        by_condition: dict = {}
        for it in items:
            by_condition.setdefault(it.get("condition"), set()).add(it["sequence_id"])
        for condition in sorted(by_condition, key=str):
            group = sorted(by_condition[condition])
            if len(group) == 1:
                train_seqs |= set(group) if rng.random() < train_frac else set()
            else:
                train_seqs |= cut(group)
    else:
        train_seqs = cut(sequences)

    def subset(name, keep):
        kept = [it for it in items if (it["sequence_id"] in train_seqs) == keep]
        return {
            "dataset_name": f"{manifest['dataset_name']}-{name}",
            "pipeline_version": manifest["pipeline_version"],
            "config_hash": manifest["config_hash"],
            "splits": {name: {"items": len(kept)}},
            "items": kept,
        }

    return {"train": subset("train", True), "test": subset("test", False)}
