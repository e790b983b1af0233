"""HTTP review service: serves generated items for audit and records decisions.

Persistence is a single append-only JSONL log plus an in-memory index rebuilt
at startup; replaying the log always reconstructs the same effective statuses
(latest timestamp wins, annotator id breaks ties).
"""

from __future__ import annotations

import base64
import bisect
import hashlib
import json
import os
import threading
import time
from pathlib import Path
from typing import Literal, Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field, field_validator, model_validator

from .metrics import correction_rate

AUDIT_LOG_NAME = "audits.jsonl"

DECISION_STATUS = {"accept": "accepted", "correct": "corrected", "reject": "rejected"}

SUGGESTED_ERROR_TAGS = [
    "wrong_color", "wrong_motion", "wrong_count", "wrong_place",
    "hallucinated_entity", "missed_entity", "other",
]


class AuditSubmission(BaseModel):
    annotator_id: str = Field(min_length=1)
    decision: Literal["accept", "correct", "reject"]
    corrected_text: Optional[str] = None
    error_tags: list[str] = Field(default_factory=list)
    timestamp: Optional[int] = None  # microseconds since epoch; server fills if absent
    idempotency_key: Optional[str] = None

    @model_validator(mode="after")
    def _correct_needs_text(self):
        if self.decision == "correct" and not self.corrected_text:
            raise ValueError("decision 'correct' requires corrected_text")
        return self


class AuditStore:
    """Append-only audit log with atomic fsync appends and an in-memory index."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.records: list[dict] = []
        self._by_key: dict[str, dict] = {}
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        self._index(json.loads(line))

    def _index(self, record):
        self.records.append(record)
        key = record.get("idempotency_key")
        if key:
            self._by_key[key] = record

    @staticmethod
    def _body_digest(record):
        client_fields = {k: record[k] for k in
                         ("item_id", "annotator_id", "decision", "corrected_text",
                          "error_tags", "timestamp")}
        return hashlib.sha256(
            json.dumps(client_fields, sort_keys=True, ensure_ascii=False).encode()).hexdigest()

    def append(self, record) -> tuple:
        """Returns (record, created). Replays by idempotency key are deduplicated;
        a replay with a differing body raises ValueError."""
        with self._lock:
            key = record.get("idempotency_key")
            if key and key in self._by_key:
                existing = self._by_key[key]
                if self._body_digest(existing) != self._body_digest(record):
                    raise ValueError(f"idempotency key {key} replayed with differing body")
                return existing, False
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
                f.flush()
                os.fsync(f.fileno())
            self._index(record)
            return record, True

    def effective(self) -> dict:
        """Latest record per item (timestamp, then annotator id as tiebreaker)."""
        chosen: dict[str, dict] = {}
        for rec in self.records:
            cur = chosen.get(rec["item_id"])
            if cur is None or (rec["timestamp"], rec["annotator_id"]) >= (
                    cur["timestamp"], cur["annotator_id"]):
                chosen[rec["item_id"]] = rec
        return chosen


def _badges(fused_doc, fact_ids):
    facts = {f["fact_id"]: f for f in fused_doc.get("facts", [])}
    rules = {}
    for entry in fused_doc.get("policy_trace", []):
        rules.setdefault(entry["fact_id"], entry["rule"])
    badges = []
    for fid in fact_ids:
        f = facts.get(fid)
        if f is None:
            continue
        badges.append({"fact_id": fid, "source": f["source"], "confidence": f["confidence"],
                       "rule": rules.get(fid)})
    return badges


def load_items(manifest_dir) -> dict:
    """Item payloads keyed by id, with provenance badges and render URLs."""
    root = Path(manifest_dir)
    items_path = root / "items.jsonl"
    items: dict[str, dict] = {}
    if not items_path.exists():
        return items
    fused_cache: dict[str, dict] = {}

    def fused_for(keyframe_id):
        if keyframe_id not in fused_cache:
            matches = sorted(root.glob(f"stages/{keyframe_id}-*/fused.json"))
            fused_cache[keyframe_id] = json.loads(matches[-1].read_text()) if matches else {}
        return fused_cache[keyframe_id]

    with open(items_path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            raw = json.loads(line)
            kf = raw["provenance"]["keyframe_id"]
            rgb = raw["provenance"]["source_files"].get("rgb")
            slices = sorted(p.name for p in (root / "renders" / kf).glob("slice_*.png"))
            payload = {
                "id": raw["item_id"],
                "type": raw["type"],
                "keyframe_id": kf,
                "sequence_id": raw["provenance"]["sequence_id"],
                "generator": raw["generator"],
                "provenance_badges": _badges(fused_for(kf), raw["supporting_facts"]),
                "images": {
                    "keyframe": f"/files/keyframes/{kf}{Path(rgb).suffix}" if rgb else None,
                    "slices": [f"/files/renders/{kf}/{name}" for name in slices],
                },
            }
            if raw["type"] == "caption":
                payload["text"] = raw["text"]
            else:
                payload.update(question=raw["question"], answer=raw["answer"],
                               attributes=raw["attributes"], field_class=raw["field_class"])
            items[raw["item_id"]] = payload
    return items


def _encode_cursor(item_id: str) -> str:
    return base64.urlsafe_b64encode(item_id.encode("utf-8")).decode("ascii")


def _decode_cursor(cursor: str) -> str:
    try:
        return base64.urlsafe_b64decode(cursor.encode("ascii")).decode("utf-8")
    except Exception:
        raise HTTPException(status_code=400, detail="malformed cursor") from None


def create_app(manifest_dir, frontend_dir=None) -> FastAPI:
    root = Path(manifest_dir)
    app = FastAPI(title="eventforge review service", version="0.1.0")
    items = load_items(root)
    ordered_ids = sorted(items)
    store = AuditStore(root / AUDIT_LOG_NAME)

    def status_of(item_id, effective):
        rec = effective.get(item_id)
        return DECISION_STATUS[rec["decision"]] if rec else "unaudited"

    def with_audit(item_id, effective):
        payload = dict(items[item_id])
        payload["status"] = status_of(item_id, effective)
        rec = effective.get(item_id)
        if rec:
            payload["corrected_text"] = rec.get("corrected_text")
            payload["error_tags"] = rec.get("error_tags", [])
        return payload

    @app.get("/items")
    def list_items(status: Optional[str] = Query(default=None),
                   cursor: Optional[str] = Query(default=None),
                   limit: int = Query(default=10, ge=1, le=100)):
        effective = store.effective()
        ids = ordered_ids
        if cursor is not None:
            last = _decode_cursor(cursor)
            ids = ids[bisect.bisect_right(ids, last):]
        if status is not None:
            ids = [i for i in ids if status_of(i, effective) == status]
        page = ids[:limit]
        next_cursor = _encode_cursor(page[-1]) if len(ids) > limit else None
        return {"items": [with_audit(i, effective) for i in page],
                "next_cursor": next_cursor}

    @app.get("/items/{item_id}/audit-log")
    def item_audit_log(item_id: str):
        if item_id not in items:
            raise HTTPException(status_code=404, detail=f"unknown item {item_id}")
        return {"records": [r for r in store.records if r["item_id"] == item_id]}

    @app.get("/items/{item_id}")
    def get_item(item_id: str):
        if item_id not in items:
            raise HTTPException(status_code=404, detail=f"unknown item {item_id}")
        return with_audit(item_id, store.effective())

    @app.post("/items/{item_id}/audit", status_code=201)
    def post_audit(item_id: str, body: AuditSubmission):
        if item_id not in items:
            raise HTTPException(status_code=404, detail=f"unknown item {item_id}")
        record = {
            "item_id": item_id,
            "annotator_id": body.annotator_id,
            "decision": body.decision,
            "corrected_text": body.corrected_text,
            "error_tags": body.error_tags,
            "timestamp": body.timestamp if body.timestamp is not None
            else time.time_ns() // 1000,
            "idempotency_key": body.idempotency_key,
        }
        try:
            stored, created = store.append(record)
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        effective = store.effective()
        return JSONResponse(
            status_code=201 if created else 200,
            content={"record": stored, "status": status_of(item_id, effective)})

    @app.get("/stats")
    def stats():
        effective = store.effective()
        audited = list(effective.values())
        if not audited:
            return {"correction_rate": None, "count": 0, "total_audited": 0,
                    "histogram": {}}
        cstats = correction_rate(audited)
        histogram: dict[str, int] = {}
        for rec in audited:
            if rec["decision"] in ("correct", "reject"):
                for tag in rec.get("error_tags", []):
                    histogram[tag] = histogram.get(tag, 0) + 1
        return {"correction_rate": cstats.rate_percent, "count": cstats.count,
                "total_audited": cstats.total, "histogram": histogram}

    if (root / "renders").exists() or (root / "keyframes").exists():
        app.mount("/files", StaticFiles(directory=str(root)), name="files")
    if frontend_dir and Path(frontend_dir).exists():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")
    return app
