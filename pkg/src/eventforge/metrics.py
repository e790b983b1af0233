"""Deterministic evaluation metrics: attribute-level accuracy, judge-score
aggregation, and human-audit correction rates."""

from __future__ import annotations

from dataclasses import dataclass, field

from .gateway import JudgeScores
from .graph import canonicalize_entity

CORRECTION_DECISIONS = ("correct", "reject")


@dataclass
class EvalRecord:
    item_id: str
    predicted_attributes: dict
    gold_attributes: dict
    judge: JudgeScores | None = None


@dataclass
class CorrectionStats:
    count: int
    total: int
    rate_percent: float  # rounded to 0.1%


def _values_match(predicted, gold) -> bool:
    if predicted is None:
        return False
    p, g = str(predicted), str(gold)
    try:
        return float(p) == float(g)
    except ValueError:
        pass
    try:
        return canonicalize_entity(p) == canonicalize_entity(g)
    except ValueError:
        return p == g


def attribute_accuracy(predicted: dict, gold: dict) -> float:
    """One point per gold attribute whose prediction matches, zero otherwise.

    Matching runs through entity canonicalization plus numeric-literal equality;
    a missing prediction counts as incorrect.
    """
    if not gold:
        raise ValueError("gold attributes must be non-empty")
    hits = sum(1 for k, v in gold.items() if _values_match(predicted.get(k), v))
    return hits / len(gold)


def dataset_accuracy(records, pooled: bool = False) -> float:
    """Mean accuracy over items; ``pooled`` averages over all (item, attribute) pairs."""
    records = list(records)
    if not records:
        raise ValueError("no records")
    if pooled:
        hits = total = 0
        for r in records:
            for k, v in r.gold_attributes.items():
                hits += _values_match(r.predicted_attributes.get(k), v)
                total += 1
        if total == 0:
            raise ValueError("no gold attributes in any record")
        return hits / total
    return sum(attribute_accuracy(r.predicted_attributes, r.gold_attributes)
               for r in records) / len(records)


def aggregate_scores(records) -> dict:
    """Arithmetic means of CI/DO/CU/Ave over judged records and Acc over all records."""
    records = list(records)
    if not records:
        raise ValueError("no records to aggregate")
    judged = [r for r in records if r.judge is not None]
    report = {
        "ci": sum(r.judge.ci for r in judged) / len(judged) if judged else None,
        "do": sum(r.judge.do_ for r in judged) / len(judged) if judged else None,
        "cu": sum(r.judge.cu for r in judged) / len(judged) if judged else None,
        "ave": sum(r.judge.ave for r in judged) / len(judged) if judged else None,
        "acc": dataset_accuracy(records),
        "counts": {"total": len(records), "judged": len(judged), "acc": len(records)},
    }
    return report


def _decision(audit) -> str:
    if isinstance(audit, dict):
        return audit["decision"]
    return audit.decision


def correction_rate(audits) -> CorrectionStats:
    """Fraction of audited items whose decision was correct or reject, to 0.1%."""
    audits = list(audits)
    if not audits:
        raise ValueError("no audit records")
    count = sum(1 for a in audits if _decision(a) in CORRECTION_DECISIONS)
    return CorrectionStats(count=count, total=len(audits),
                           rate_percent=round(100.0 * count / len(audits), 1))
