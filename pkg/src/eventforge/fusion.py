"""Degradation-aware fusion of event and RGB scene graphs.

Every fact from either graph is classified as motion, appearance, or geometry
and arbitrated field by field: motion anchors to the event graph, appearance
defers to a healthy RGB graph, geometry takes consensus with RGB precedence on
conflict. Each emitted fact carries its source, confidence, and a policy-trace
entry naming the rule that produced it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources

import jsonschema

from .graph import SceneGraph, DegradationLabel, GraphSchemaError

APPEARANCE_ATTRS = ("color", "texture", "light_state", "text", "brightness")
MOTION_EDGE_KINDS = ("temporal", "hierarchical", "spatial")

SOURCE_EVENT = "G_e"
SOURCE_RGB = "G_r"
SOURCE_BOTH = "G_e+r"


@dataclass
class DegradationReport:
    """Imaging-quality diagnosis computed solely from the RGB graph's labels."""

    severe: bool
    labels: list
    degraded_fraction: float
    tau: float = 0.3


@dataclass
class Fact:
    """One atomic assertion extracted from a scene graph, keyed for arbitration."""

    key: tuple
    kind: str  # attr | place | predicate | edge
    payload: dict


@dataclass
class FusedFact:
    fact_id: str
    key: tuple
    kind: str
    payload: dict
    field_class: str
    source: str
    confidence: str
    superseded_by: str | None = None


@dataclass
class AlignedEntity:
    canonical_name: str
    presence: tuple
    degradations: dict = field(default_factory=dict)


@dataclass
class FusedGraph:
    entities: list
    facts: list
    policy_trace: list
    report: DegradationReport

    def __post_init__(self):
        by_id = {f.fact_id: f for f in self.facts}
        traced = {e["fact_id"] for e in self.policy_trace}
        for f in self.facts:
            if f.fact_id not in traced:
                raise ValueError(f"fact {f.fact_id} has no policy_trace entry")
            if f.superseded_by is not None:
                winner = by_id.get(f.superseded_by)
                if winner is None:
                    raise ValueError(f"dangling superseded_by {f.superseded_by!r}")
                if f.confidence != "low" or winner.confidence != "high":
                    raise ValueError(
                        f"{f.fact_id} ({f.confidence}) superseded by "
                        f"{winner.fact_id} ({winner.confidence}); only low facts "
                        "may yield to high ones")

    def fact_by_id(self, fact_id):
        for f in self.facts:
            if f.fact_id == fact_id:
                return f
        raise KeyError(fact_id)


def diagnose_degradation(g_r: SceneGraph, tau: float = 0.3) -> DegradationReport:
    """severe <=> any label marked severe, or degradation coverage above tau."""
    if g_r.modality != "rgb":
        raise ValueError(f"degradation is diagnosed from the rgb graph, got {g_r.modality!r}")
    labels = []
    degraded = 0
    units = list(g_r.entities.values()) + list(g_r.edges)
    for unit in units:
        if unit.degradations:
            degraded += 1
            labels.extend(unit.degradations)
    fraction = degraded / len(units) if units else 0.0
    severe = any(lbl.severity == "severe" for lbl in labels) or fraction > tau
    return DegradationReport(severe=severe, labels=labels, degraded_fraction=fraction, tau=tau)


def classify_fact_field(fact: Fact) -> str:
    """Map a fact to motion, appearance, or geometry (default appearance)."""
    if fact.kind == "predicate":
        return "motion" if "motion" in fact.payload["args"] else "appearance"
    if fact.kind == "edge":
        return "motion" if fact.payload["kind"] in MOTION_EDGE_KINDS else "appearance"
    if fact.kind == "place":
        return "geometry"
    key = fact.payload["key"]
    if key in APPEARANCE_ATTRS:
        return "appearance"
    if key == "count" or key.endswith("_count") or key in ("position", "distance"):
        return "geometry"
    return "appearance"


def extract_facts(g: SceneGraph) -> dict:
    """Index a graph's assertions by their arbitration field key."""
    facts: dict[tuple, Fact] = {}
    for name in sorted(g.entities):
        ent = g.entities[name]
        for key in sorted(ent.attributes):
            k = ("attr", name, key)
            facts[k] = Fact(k, "attr", {"entity": name, "key": key, "value": ent.attributes[key]})
        if ent.place is not None:
            k = ("place", name)
            facts[k] = Fact(k, "place", {"entity": name, "place": ent.place})
    ordinals: dict[tuple, int] = {}
    for pred in g.predicates:
        base = (pred.args["subject"], pred.verb)
        ordinal = ordinals.get(base, 0)
        ordinals[base] = ordinal + 1
        k = ("predicate", pred.args["subject"], pred.verb, ordinal)
        facts[k] = Fact(k, "predicate", {
            "verb": pred.verb, "args": dict(pred.args), "attrs": dict(pred.attrs),
            "temporal_index": pred.temporal_index,
        })
    for edge in g.edges:
        k = ("edge", edge.from_id, edge.kind, edge.to_id)
        facts[k] = Fact(k, "edge", {"from": edge.from_id, "kind": edge.kind,
                                    "to": edge.to_id, "label": edge.label})
    return facts


def align_entities(g_e: SceneGraph, g_r: SceneGraph) -> list:
    """Match entities by exact canonical name; single-modality ones carry over."""
    names = sorted(set(g_e.entities) | set(g_r.entities))
    aligned = []
    for name in names:
        presence = tuple(m for m, g in (("event", g_e), ("rgb", g_r)) if name in g.entities)
        degradations = {}
        for modality, g in (("event", g_e), ("rgb", g_r)):
            ent = g.entities.get(name)
            if ent is not None and ent.degradations:
                degradations[modality] = list(ent.degradations)
        aligned.append(AlignedEntity(canonical_name=name, presence=presence,
                                     degradations=degradations))
    return aligned


def _facts_agree(kind, fact_e: Fact, fact_r: Fact) -> bool:
    if kind == "predicate":
        merged_keys = set(fact_e.payload["args"]) & set(fact_r.payload["args"])
        if any(fact_e.payload["args"][k] != fact_r.payload["args"][k] for k in merged_keys):
            return False
        shared_attrs = set(fact_e.payload["attrs"]) & set(fact_r.payload["attrs"])
        return all(fact_e.payload["attrs"][k] == fact_r.payload["attrs"][k] for k in shared_attrs)
    if kind == "attr":
        return fact_e.payload["value"] == fact_r.payload["value"]
    if kind == "place":
        return fact_e.payload["place"] == fact_r.payload["place"]
    return fact_e.payload["label"] == fact_r.payload["label"]


def _merge_payload(kind, fact_e: Fact, fact_r: Fact) -> dict:
    if kind != "predicate":
        return dict(fact_e.payload)
    args = {**fact_r.payload["args"], **fact_e.payload["args"]}
    attrs = {**fact_r.payload["attrs"], **fact_e.payload["attrs"]}
    t_idx = fact_e.payload["temporal_index"]
    if t_idx is None:
        t_idx = fact_r.payload["temporal_index"]
    return {"verb": fact_e.payload["verb"], "args": args, "attrs": attrs, "temporal_index": t_idx}


class _Arbiter:
    """Applies the field-level rule table, allocating fact ids and trace entries."""

    def __init__(self, report: DegradationReport):
        self.report = report
        self.facts: list[FusedFact] = []
        self.trace: list[dict] = []

    def _emit(self, key, kind, payload, field_class, source, confidence, superseded_by=None):
        fact = FusedFact(fact_id=f"f{len(self.facts):03d}", key=key, kind=kind,
                         payload=payload, field_class=field_class, source=source,
                         confidence=confidence, superseded_by=superseded_by)
        self.facts.append(fact)
        return fact

    def _record(self, rule, key, outcome, flag=None):
        # one trace entry per emitted fact, each naming exactly one rule id
        for f in outcome:
            entry = {"rule": rule, "field": list(key), "fact_id": f.fact_id,
                     "severe": self.report.severe}
            if flag:
                entry["flag"] = flag
            self.trace.append(entry)

    def arbitrate(self, field_class: str, fact_e: Fact | None, fact_r: Fact | None):
        if fact_e is None and fact_r is None:
            raise ValueError("arbitrate requires at least one fact")
        severe = self.report.severe

        if fact_e is not None and fact_r is not None:
            key, kind = fact_e.key, fact_e.kind
            if _facts_agree(kind, fact_e, fact_r):
                merged = self._emit(key, kind, _merge_payload(kind, fact_e, fact_r),
                                    field_class, SOURCE_BOTH, "high")
                self._record(f"{field_class}-consensus", key, [merged])
                return [merged]
            if field_class == "motion":
                win = self._emit(key, kind, dict(fact_e.payload), field_class, SOURCE_EVENT, "high")
                lose = self._emit(key, kind, dict(fact_r.payload), field_class, SOURCE_RGB,
                                  "low", superseded_by=win.fact_id)
                self._record("motion-anchor-event", key, [win, lose])
                return [win, lose]
            if field_class == "appearance":
                if severe:
                    win = self._emit(key, kind, dict(fact_e.payload), field_class,
                                     SOURCE_EVENT, "high")
                    cand = self._emit(key, kind, dict(fact_r.payload), field_class, SOURCE_RGB,
                                      "low", superseded_by=win.fact_id)
                    self._record("appearance-event-anchor-degraded", key, [win, cand])
                    return [win, cand]
                win = self._emit(key, kind, dict(fact_r.payload), field_class, SOURCE_RGB, "high")
                lose = self._emit(key, kind, dict(fact_e.payload), field_class, SOURCE_EVENT,
                                  "low", superseded_by=win.fact_id)
                self._record("appearance-rgb-healthy", key, [win, lose])
                return [win, lose]
            # geometry: RGB precedence regardless of severity; the trace flags it when severe
            win = self._emit(key, kind, dict(fact_r.payload), field_class, SOURCE_RGB, "high")
            lose = self._emit(key, kind, dict(fact_e.payload), field_class, SOURCE_EVENT,
                              "low", superseded_by=win.fact_id)
            self._record("geometry-rgb-precedence", key, [win, lose],
                         flag="rgb-precedence-under-severe-degradation" if severe else None)
            return [win, lose]

        if fact_e is not None:
            fact = self._emit(fact_e.key, fact_e.kind, dict(fact_e.payload), field_class,
                              SOURCE_EVENT, "high")
            self._record("single-source-event", fact_e.key, [fact])
            return [fact]

        confidence = "low" if (field_class == "appearance" and severe) else "high"
        fact = self._emit(fact_r.key, fact_r.kind, dict(fact_r.payload), field_class,
                          SOURCE_RGB, confidence)
        self._record("single-source-rgb", fact_r.key, [fact],
                     flag="appearance-degraded-low-confidence" if confidence == "low" else None)
        return [fact]


def arbitrate(field_class: str, fact_e: Fact | None, fact_r: Fact | None,
              report: DegradationReport) -> list:
    """Standalone rule-table application for one field; see :class:`_Arbiter`."""
    arb = _Arbiter(report)
    return arb.arbitrate(field_class, fact_e, fact_r)


def fuse_graphs(g_e: SceneGraph, g_r: SceneGraph, tau: float = 0.3) -> FusedGraph:
    """Merge the two modality graphs under the degradation-aware rule table.

    Deterministic: fields are arbitrated in sorted key order and fact ids are
    sequential, so identical inputs serialize identically.
    """
    if g_e.modality != "event":
        raise ValueError(f"first graph must be event modality, got {g_e.modality!r}")
    report = diagnose_degradation(g_r, tau)
    entities = align_entities(g_e, g_r)
    facts_e = extract_facts(g_e)
    facts_r = extract_facts(g_r)
    arb = _Arbiter(report)
    for key in sorted(set(facts_e) | set(facts_r)):
        fact_e = facts_e.get(key)
        fact_r = facts_r.get(key)
        field_class = classify_fact_field(fact_e if fact_e is not None else fact_r)
        arb.arbitrate(field_class, fact_e, fact_r)
    return FusedGraph(entities=entities, facts=arb.facts, policy_trace=arb.trace, report=report)


# ---------------------------------------------------------------------------
# Canonical serialization (the policy trace is part of the audited document)


def _fused_to_doc(fg: FusedGraph) -> dict:
    return {
        "report": {
            "severe": fg.report.severe,
            "degraded_fraction": fg.report.degraded_fraction,
            "tau": fg.report.tau,
            "labels": [{"kind": l.kind, "severity": l.severity} for l in fg.report.labels],
        },
        "entities": [
            {
                "canonical_name": e.canonical_name,
                "presence": list(e.presence),
                "degradations": {
                    m: [{"kind": d.kind, "severity": d.severity} for d in degs]
                    for m, degs in sorted(e.degradations.items())
                },
            }
            for e in fg.entities
        ],
        "facts": [
            {
                "fact_id": f.fact_id,
                "key": list(f.key),
                "kind": f.kind,
                "payload": f.payload,
                "field_class": f.field_class,
                "source": f.source,
                "confidence": f.confidence,
                "superseded_by": f.superseded_by,
            }
            for f in fg.facts
        ],
        "policy_trace": fg.policy_trace,
    }


_FUSED_SCHEMA = None


def serialize_fused(fg: FusedGraph) -> str:
    return json.dumps(_fused_to_doc(fg), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def deserialize_fused(text: str) -> FusedGraph:
    global _FUSED_SCHEMA
    if _FUSED_SCHEMA is None:
        with resources.files("eventforge.schemas").joinpath("fused_graph.schema.json").open("r") as f:
            _FUSED_SCHEMA = json.load(f)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphSchemaError(f"not valid JSON: {exc}", path="$") from None
    try:
        jsonschema.validate(doc, _FUSED_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "$" + "".join(f"[{p!r}]" if isinstance(p, str) else f"[{p}]" for p in exc.absolute_path)
        raise GraphSchemaError(exc.message, path=path) from None
    report = DegradationReport(
        severe=doc["report"]["severe"],
        labels=[DegradationLabel(l["kind"], l["severity"]) for l in doc["report"]["labels"]],
        degraded_fraction=doc["report"]["degraded_fraction"],
        tau=doc["report"]["tau"],
    )
    entities = [
        AlignedEntity(
            canonical_name=e["canonical_name"], presence=tuple(e["presence"]),
            degradations={m: [DegradationLabel(d["kind"], d["severity"]) for d in degs]
                          for m, degs in e.get("degradations", {}).items()},
        )
        for e in doc["entities"]
    ]
    facts = [
        FusedFact(fact_id=f["fact_id"], key=tuple(f["key"]), kind=f["kind"],
                  payload=f["payload"], field_class=f["field_class"], source=f["source"],
                  confidence=f["confidence"], superseded_by=f.get("superseded_by"))
        for f in doc["facts"]
    ]
    return FusedGraph(entities=entities, facts=facts, policy_trace=doc["policy_trace"],
                      report=report)
