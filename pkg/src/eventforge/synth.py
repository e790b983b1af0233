"""Template synthesis of captions and VQA items from a fused graph.

The template path is fully deterministic so the pipeline runs and tests
offline; the external path asks the gateway for paraphrases but must leave
the grading attributes untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .fusion import FusedGraph, FusedFact, APPEARANCE_ATTRS
from .graph import PLURAL_TABLE

TEMPLATE_VERSION = "templates-v1"

HEDGE_ATTR = "possibly"
HEDGE_PRED = "appears to"

_SINGULAR_TO_PLURAL = {v: k for k, v in PLURAL_TABLE.items()}


@dataclass
class CaptionItem:
    text: str
    supporting_facts: list
    generator: str = "template"


@dataclass
class QAItem:
    question: str
    answer: str
    attributes: dict
    field_class: str
    supporting_facts: list
    generator: str = "template"

    def __post_init__(self):
        if not self.attributes:
            raise ValueError("QA item needs a non-empty grading key")


def _words(token: str) -> str:
    return token.replace("_", " ")


def _article(phrase: str) -> str:
    return "An" if phrase[:1].lower() in "aeiou" else "A"


def _pluralize(noun: str) -> str:
    return _SINGULAR_TO_PLURAL.get(noun, noun + "s")


def _conjugate(verb: str) -> str:
    if verb.endswith(("s", "x", "z", "ch", "sh")):
        return verb + "es"
    return verb + "s"


def _subject_phrase(subject, attr_facts):
    """Noun phrase with high-confidence adjectives; hedged low-confidence ones."""
    adjectives, hedged, used = [], [], []
    for f in attr_facts:
        if f.payload["key"] not in APPEARANCE_ATTRS:
            continue
        value = _words(f.payload["value"])
        if f.confidence == "high":
            adjectives.append(value)
        else:
            hedged.append(value)
        used.append(f.fact_id)
    parts = adjectives + [f"{HEDGE_ATTR} {v}" for v in hedged] + [_words(subject)]
    return " ".join(parts), used


def _predicate_clause(fact: FusedFact) -> str:
    args = fact.payload["args"]
    verb = fact.payload["verb"]
    clause = _conjugate(verb) if fact.confidence == "high" else f"{HEDGE_PRED} {verb}"
    if "motion" in args:
        clause += f" {_words(args['motion'])}"
    if "direction" in args:
        clause += f" heading {_words(args['direction'])}"
    if "target" in args:
        clause += f" toward the {_words(args['target'])}"
    if "place" in args:
        clause += f" in the {_words(args['place'])}"
    return clause


def synthesize_caption(g: FusedGraph) -> CaptionItem:
    """Render predicates in temporal order, then leftover entity descriptions.

    Low-confidence facts appear only behind hedging markers. Deterministic:
    the same fused graph always yields the same text.
    """
    attr_by_entity: dict[str, list] = {}
    for f in g.facts:
        if f.kind == "attr" and f.superseded_by is None:
            attr_by_entity.setdefault(f.payload["entity"], []).append(f)
    place_by_entity = {f.payload["entity"]: f for f in g.facts
                       if f.kind == "place" and f.superseded_by is None}

    pred_facts = [f for f in g.facts if f.kind == "predicate" and f.superseded_by is None]
    pred_facts.sort(key=lambda f: (f.payload["temporal_index"] is None,
                                   f.payload["temporal_index"], f.fact_id))

    sentences, supporting, described = [], [], set()
    for fact in pred_facts:
        subject = fact.payload["args"]["subject"]
        phrase, attr_ids = _subject_phrase(subject, attr_by_entity.get(subject, []))
        sentences.append(f"{_article(phrase)} {phrase} {_predicate_clause(fact)}.")
        supporting.extend([fact.fact_id] + attr_ids)
        described.add(subject)

    for entity in sorted(set(attr_by_entity) | set(place_by_entity)):
        if entity in described or entity == "scene":
            continue
        phrase, attr_ids = _subject_phrase(entity, attr_by_entity.get(entity, []))
        place = place_by_entity.get(entity)
        if place is not None:
            sentences.append(f"{_article(phrase)} {phrase} is in the {_words(place.payload['place'])}.")
            attr_ids = attr_ids + [place.fact_id]
        elif attr_ids:
            sentences.append(f"{_article(phrase)} {phrase} is visible.")
        if attr_ids:
            supporting.extend(attr_ids)

    if not sentences:
        return CaptionItem(text="no salient content", supporting_facts=[])
    # preserve first-use order without duplicates
    seen = set()
    cited = [i for i in supporting if not (i in seen or seen.add(i))]
    return CaptionItem(text=" ".join(sentences), supporting_facts=cited)


def _motion_item(fact: FusedFact) -> QAItem:
    subject = fact.payload["args"]["subject"]
    motion = fact.payload["args"]["motion"]
    return QAItem(
        question=f"What is the {_words(subject)} doing?",
        answer=f"moving {_words(motion)}",
        attributes={"motion": motion},
        field_class="motion",
        supporting_facts=[fact.fact_id],
    )


_APPEARANCE_QUESTIONS = {
    "color": "What color is the {entity}?",
    "texture": "What texture does the {entity} have?",
    "light_state": "What is the state of the {entity}?",
    "text": "What text is readable on the {entity}?",
    "brightness": "How bright is the {entity}?",
}


def _appearance_item(fact: FusedFact) -> QAItem:
    entity = fact.payload["entity"]
    key = fact.payload["key"]
    template = _APPEARANCE_QUESTIONS.get(key, "What is the " + key.replace("_", " ") + " of the {entity}?")
    return QAItem(
        question=template.format(entity=_words(entity)),
        answer=_words(fact.payload["value"]),
        attributes={key: fact.payload["value"]},
        field_class="appearance",
        supporting_facts=[fact.fact_id],
    )


def _geometry_item(fact: FusedFact) -> QAItem:
    if fact.kind == "place":
        entity = fact.payload["entity"]
        return QAItem(
            question=f"Where is the {_words(entity)}?",
            answer=f"in the {_words(fact.payload['place'])}",
            attributes={"place": fact.payload["place"]},
            field_class="geometry",
            supporting_facts=[fact.fact_id],
        )
    key = fact.payload["key"]
    noun = key[: -len("_count")] if key.endswith("_count") else fact.payload["entity"]
    return QAItem(
        question=f"How many {_words(_pluralize(noun))} are there?",
        answer=str(fact.payload["value"]),
        attributes={key: fact.payload["value"]},
        field_class="geometry",
        supporting_facts=[fact.fact_id],
    )


def synthesize_vqa(g: FusedGraph, max_items: int = 3) -> list:
    """Up to ``max_items`` QA items: one motion, one appearance, one geometry.

    Gold attributes come only from high-confidence facts; classes with no such
    fact yield nothing, and a graph without any yields an empty list.
    """
    high = [f for f in g.facts if f.confidence == "high"]
    items = []

    motion = [f for f in high if f.field_class == "motion" and f.kind == "predicate"
              and "motion" in f.payload["args"]]
    if motion:
        items.append(_motion_item(motion[0]))

    appearance = [f for f in high if f.field_class == "appearance" and f.kind == "attr"]
    if appearance:
        items.append(_appearance_item(appearance[0]))

    geometry = [f for f in high if f.field_class == "geometry" and f.kind in ("attr", "place")]
    if geometry:
        items.append(_geometry_item(geometry[0]))

    return items[:max_items]
