"""Scene-graph data model and the line-grammar parser for structured captions.

A caption document is newline-separated lines of four kinds:

    Move(subject=car, motion=forward, place=lane_center)   predicate
    car.color=white                                        entity attribute
    rel(car, spatial, road)                                relation
    deg(scene, low_light, severe)                          degradation
    # comment

The reserved entity ``scene`` carries global degradations and layout facts.
Graphs are immutable after construction and serialize to a canonical JSON form.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from importlib import resources

import jsonschema

RELATION_KINDS = ("hierarchical", "attribute", "spatial", "temporal")
SEVERITIES = ("mild", "severe")
KNOWN_DEGRADATIONS = ("low_light", "overexposure", "glare", "motion_blur", "noise")
KNOWN_ARG_KEYS = ("subject", "motion", "place", "direction", "target")
SCENE_ENTITY = "scene"

ARTICLES = ("the", "a", "an")

# Fixed regular-plural table; lookup keeps canonicalization idempotent.
PLURAL_TABLE = {
    "bicycles": "bicycle", "buildings": "building", "buses": "bus", "cars": "car",
    "children": "child", "crosswalks": "crosswalk", "cyclists": "cyclist",
    "dogs": "dog", "drivers": "driver", "houses": "house", "intersections": "intersection",
    "lanes": "lane", "lights": "light", "men": "man", "motorcycles": "motorcycle",
    "pedestrians": "pedestrian", "people": "person", "poles": "pole", "riders": "rider",
    "roads": "road", "signs": "sign", "streets": "street", "trains": "train",
    "trees": "tree", "trucks": "truck", "vans": "van", "vehicles": "vehicle",
    "walls": "wall", "windows": "window", "women": "woman",
}

_IDENT = r"[A-Za-z][A-Za-z0-9_]*"
_TOKEN = r"(?:[a-z][a-z0-9_]*|[0-9]+(?:\.[0-9]+)?)"


class GraphParseError(ValueError):
    """Syntax or integrity error with the line and byte offset of the failure."""

    def __init__(self, message, line=None, offset=None):
        self.line = line
        self.offset = offset
        where = ""
        if line is not None:
            where = f" at line {line}" + (f", offset {offset}" if offset is not None else "")
        super().__init__(message + where)


class GraphSchemaError(ValueError):
    """Canonical-document violation, carrying the JSON path of the offending node."""

    def __init__(self, message, path):
        self.path = path
        super().__init__(f"{message} (at {path})")


@dataclass(frozen=True)
class DegradationLabel:
    kind: str
    severity: str

    def __post_init__(self):
        if self.severity not in SEVERITIES:
            raise ValueError(f"severity {self.severity!r} not in {SEVERITIES}")

    @property
    def is_known_kind(self):
        return self.kind in KNOWN_DEGRADATIONS


@dataclass
class EntityNode:
    id: str
    canonical_name: str
    category: str = ""
    attributes: dict = field(default_factory=dict)
    place: str | None = None
    degradations: list = field(default_factory=list)

    def __post_init__(self):
        if not self.canonical_name:
            raise ValueError("entity canonical_name must be non-empty")


@dataclass
class Predicate:
    verb: str
    args: dict
    attrs: dict = field(default_factory=dict)
    temporal_index: int | None = None

    def __post_init__(self):
        if "subject" not in self.args:
            raise ValueError(f"predicate {self.verb!r} missing subject arg")


@dataclass
class RelationEdge:
    from_id: str
    to_id: str
    kind: str
    label: str = ""
    degradations: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in RELATION_KINDS:
            raise ValueError(f"relation kind {self.kind!r} not in {RELATION_KINDS}")
        if not self.label:
            self.label = self.kind


@dataclass
class SceneGraph:
    modality: str
    entities: dict = field(default_factory=dict)
    predicates: list = field(default_factory=list)
    edges: list = field(default_factory=list)
    frame_ref: int | None = None

    def __post_init__(self):
        if self.modality not in ("event", "rgb"):
            raise ValueError(f"modality {self.modality!r} not in ('event', 'rgb')")
        self.validate()

    def validate(self):
        for name, ent in self.entities.items():
            if name != ent.canonical_name:
                raise ValueError(f"entity keyed {name!r} but named {ent.canonical_name!r}")
        for pred in self.predicates:
            subj = pred.args["subject"]
            if subj not in self.entities:
                raise ValueError(f"predicate subject {subj!r} not an entity")
        for edge in self.edges:
            for end in (edge.from_id, edge.to_id):
                if end not in self.entities:
                    raise ValueError(f"relation endpoint {end!r} never defined as an entity")


def canonicalize_entity(surface: str) -> str:
    """Normalize an entity surface form: lowercase, strip leading articles,
    whitespace/hyphens to underscores, singularize via the plural table. Idempotent."""
    words = surface.lower().split()
    while words and words[0] in ARTICLES:
        words = words[1:]
    joined = "_".join(words)
    joined = re.sub(r"[-\s]+", "_", joined)
    joined = re.sub(r"[^a-z0-9_]", "", joined)
    joined = re.sub(r"_+", "_", joined).strip("_")
    if not joined:
        raise ValueError(f"entity name {surface!r} empty after normalization")
    parts = joined.split("_")
    parts[-1] = PLURAL_TABLE.get(parts[-1], parts[-1])
    return "_".join(parts)


class _LineScanner:
    """Cursor over one line; failures report the byte offset within the line."""

    def __init__(self, text, lineno=None):
        self.text = text
        self.pos = 0
        self.lineno = lineno

    def error(self, message):
        raise GraphParseError(message, line=self.lineno, offset=self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def take(self, pattern, what):
        self.skip_ws()
        m = re.compile(pattern).match(self.text, self.pos)
        if not m:
            self.error(f"expected {what}")
        self.pos = m.end()
        return m.group(0)

    def expect(self, ch):
        self.skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] != ch:
            self.error(f"expected {ch!r}")
        self.pos += 1

    def at_end(self):
        self.skip_ws()
        return self.pos >= len(self.text)

    def expect_end(self):
        if not self.at_end():
            self.error("unexpected trailing input")


def parse_predicate(text: str, lineno: int | None = None) -> Predicate:
    """Parse ``Verb(key=value, ...)``; the subject key is required, keys must be unique.

    Arg keys outside the known role set (subject, motion, place, direction,
    target) are preserved in ``attrs``.
    """
    sc = _LineScanner(text, lineno)
    verb = sc.take(_IDENT, "predicate verb").lower()
    sc.expect("(")
    args, attrs = {}, {}
    while True:
        key = sc.take(r"[a-z][a-z0-9_]*", "argument key")
        sc.expect("=")
        value = sc.take(_TOKEN, "argument value")
        if key in args or key in attrs:
            sc.error(f"duplicate argument key {key!r}")
        if key in KNOWN_ARG_KEYS:
            args[key] = value
        else:
            attrs[key] = value
        sc.skip_ws()
        if sc.pos < len(sc.text) and sc.text[sc.pos] == ",":
            sc.pos += 1
            continue
        break
    sc.expect(")")
    sc.expect_end()
    if "subject" not in args:
        raise GraphParseError(f"predicate {verb!r} missing subject arg", line=lineno, offset=0)
    return Predicate(verb=verb, args=args, attrs=attrs)


def _parse_attr(text, lineno):
    sc = _LineScanner(text, lineno)
    entity = sc.take(_IDENT, "entity name")
    sc.expect(".")
    key = sc.take(r"[a-z][a-z0-9_]*", "attribute key")
    sc.expect("=")
    value = sc.take(_TOKEN, "attribute value")
    sc.expect_end()
    return entity, key, value


def _parse_rel(text, lineno):
    sc = _LineScanner(text, lineno)
    sc.take(r"rel", "'rel'")
    sc.expect("(")
    a = sc.take(_IDENT, "relation endpoint")
    sc.expect(",")
    kind = sc.take(r"[a-z][a-z_]*", "relation kind")
    if kind not in RELATION_KINDS:
        sc.error(f"relation kind {kind!r} not in {RELATION_KINDS}")
    sc.expect(",")
    b = sc.take(_IDENT, "relation endpoint")
    sc.expect(")")
    sc.expect_end()
    return a, kind, b


def _parse_deg(text, lineno):
    sc = _LineScanner(text, lineno)
    sc.take(r"deg", "'deg'")
    sc.expect("(")
    entity = sc.take(_IDENT, "entity name")
    sc.expect(",")
    kind = sc.take(r"[a-z][a-z0-9_]*", "degradation kind")
    sc.expect(",")
    severity = sc.take(r"[a-z]+", "severity")
    if severity not in SEVERITIES:
        sc.error(f"severity {severity!r} not in {SEVERITIES}")
    sc.expect(")")
    sc.expect_end()
    return entity, kind, severity


def parse_caption_to_graph(caption: str, modality: str,
                           frame_ref: int | None = None) -> SceneGraph:
    """Build a SceneGraph from a structured caption document.

    Entities are auto-created on first mention (predicate subject/target args,
    attribute and degradation lines); relation endpoints must be defined
    elsewhere in the document. Predicates carrying a motion arg receive
    temporal indices in line order.
    """
    entities: dict[str, EntityNode] = {}
    predicates: list[Predicate] = []
    edges: list[RelationEdge] = []

    def ensure_entity(name):
        canon = canonicalize_entity(name)
        if canon not in entities:
            entities[canon] = EntityNode(id=canon, canonical_name=canon)
        return entities[canon]

    motion_counter = 0
    pending_edges = []
    for lineno, raw in enumerate(caption.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if re.match(r"rel\s*\(", line):
            a, kind, b = _parse_rel(line, lineno)
            pending_edges.append((canonicalize_entity(a), kind, canonicalize_entity(b), lineno))
        elif re.match(r"deg\s*\(", line):
            name, kind, severity = _parse_deg(line, lineno)
            ensure_entity(name).degradations.append(DegradationLabel(kind, severity))
        elif re.match(rf"{_IDENT}\s*\.", line):
            name, key, value = _parse_attr(line, lineno)
            ent = ensure_entity(name)
            previous = ent.place if key == "place" else ent.attributes.get(key)
            if previous is not None and previous != value:
                raise GraphParseError(
                    f"conflicting values for {ent.canonical_name}.{key}: "
                    f"{previous!r} vs {value!r}", line=lineno)
            if key == "place":
                ent.place = value
            else:
                ent.attributes[key] = value
        else:
            pred = parse_predicate(line, lineno)
            pred.args["subject"] = canonicalize_entity(pred.args["subject"])
            ensure_entity(pred.args["subject"])
            if "target" in pred.args:
                pred.args["target"] = canonicalize_entity(pred.args["target"])
                ensure_entity(pred.args["target"])
            if "motion" in pred.args:
                pred.temporal_index = motion_counter
                motion_counter += 1
            predicates.append(pred)

    for a, kind, b, lineno in pending_edges:
        for end in (a, b):
            if end not in entities:
                raise GraphParseError(
                    f"relation endpoint {end!r} never defined as entity or predicate subject",
                    line=lineno)
        edges.append(RelationEdge(from_id=a, to_id=b, kind=kind))

    return SceneGraph(modality=modality, entities=entities, predicates=predicates,
                      edges=edges, frame_ref=frame_ref)


# ---------------------------------------------------------------------------
# Canonical rendering and serialization


def render_predicate(p: Predicate) -> str:
    """Canonical predicate form: capitalized verb, role args first, extras sorted."""
    items = [(k, p.args[k]) for k in KNOWN_ARG_KEYS if k in p.args]
    items += sorted(p.attrs.items())
    body = ", ".join(f"{k}={v}" for k, v in items)
    return f"{p.verb[:1].upper()}{p.verb[1:]}({body})"


def render_caption_doc(g: SceneGraph) -> str:
    """Re-emit a graph as a grammar document (predicates, attrs, rels, degs)."""
    lines = [render_predicate(p) for p in g.predicates]
    for name in sorted(g.entities):
        ent = g.entities[name]
        if ent.place is not None:
            lines.append(f"{name}.place={ent.place}")
        for key in sorted(ent.attributes):
            lines.append(f"{name}.{key}={ent.attributes[key]}")
        for deg in ent.degradations:
            lines.append(f"deg({name}, {deg.kind}, {deg.severity})")
    for edge in sorted(g.edges, key=lambda e: (e.from_id, e.kind, e.to_id, e.label)):
        lines.append(f"rel({edge.from_id}, {edge.kind}, {edge.to_id})")
    return "\n".join(lines) + ("\n" if lines else "")


def _graph_to_doc(g: SceneGraph) -> dict:
    return {
        "modality": g.modality,
        "frame_ref": g.frame_ref,
        "entities": [
            {
                "id": ent.id,
                "canonical_name": ent.canonical_name,
                "category": ent.category,
                "attributes": dict(sorted(ent.attributes.items())),
                "place": ent.place,
                "degradations": [
                    {"kind": d.kind, "severity": d.severity} for d in ent.degradations
                ],
            }
            for _, ent in sorted(g.entities.items())
        ],
        "predicates": [
            {
                "verb": p.verb,
                "args": dict(p.args),
                "attrs": dict(sorted(p.attrs.items())),
                "temporal_index": p.temporal_index,
            }
            for p in g.predicates
        ],
        "edges": [
            {
                "from_id": e.from_id,
                "to_id": e.to_id,
                "kind": e.kind,
                "label": e.label,
                "degradations": [
                    {"kind": d.kind, "severity": d.severity} for d in e.degradations
                ],
            }
            for e in sorted(g.edges, key=lambda e: (e.from_id, e.kind, e.to_id, e.label))
        ],
    }


def _load_schema(name):
    with resources.files("eventforge.schemas").joinpath(name).open("r") as f:
        return json.load(f)


_SCENE_SCHEMA = None


def serialize_graph(g: SceneGraph) -> str:
    """Canonical JSON: sorted keys, entities by canonical_name, stable ordering."""
    return json.dumps(_graph_to_doc(g), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def deserialize_graph(text: str) -> SceneGraph:
    """Parse and schema-validate a canonical graph document."""
    global _SCENE_SCHEMA
    if _SCENE_SCHEMA is None:
        _SCENE_SCHEMA = _load_schema("scene_graph.schema.json")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphSchemaError(f"not valid JSON: {exc}", path="$") from None
    try:
        jsonschema.validate(doc, _SCENE_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "$" + "".join(f"[{p!r}]" if isinstance(p, str) else f"[{p}]" for p in exc.absolute_path)
        raise GraphSchemaError(exc.message, path=path) from None
    entities = {}
    for e in doc["entities"]:
        entities[e["canonical_name"]] = EntityNode(
            id=e["id"], canonical_name=e["canonical_name"], category=e.get("category", ""),
            attributes=dict(e.get("attributes", {})), place=e.get("place"),
            degradations=[DegradationLabel(d["kind"], d["severity"])
                          for d in e.get("degradations", [])],
        )
    predicates = [
        Predicate(verb=p["verb"], args=dict(p["args"]), attrs=dict(p.get("attrs", {})),
                  temporal_index=p.get("temporal_index"))
        for p in doc["predicates"]
    ]
    edges = [
        RelationEdge(from_id=e["from_id"], to_id=e["to_id"], kind=e["kind"],
                     label=e.get("label", ""),
                     degradations=[DegradationLabel(d["kind"], d["severity"])
                                   for d in e.get("degradations", [])])
        for e in doc["edges"]
    ]
    try:
        return SceneGraph(modality=doc["modality"], entities=entities, predicates=predicates,
                          edges=edges, frame_ref=doc.get("frame_ref"))
    except ValueError as exc:
        raise GraphSchemaError(str(exc), path="$") from None
