"""Strict accuracy and loose micro/macro F1 for hierarchical predictions.

Every label is expanded to its full ancestor set (``person/artist``
counts as ``{person, person/artist}``).  Strict accuracy requires the
expanded sets to match exactly.  Loose precision and recall measure the
overlap of the expanded sets; micro aggregates overlaps globally while
macro averages per-example precision and recall first and takes the F1
of the means (the per-example-F1 alternative is exposed as a flag).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

from .errors import ConfigurationError
from .schema_verbalizer import EntityType, expand_hierarchy

__all__ = ["EvalResult", "TypeReport", "evaluate", "per_type_report", "report_to_csv"]


@dataclass(frozen=True)
class EvalResult:
    strict_acc: float
    loose_macro_p: float
    loose_macro_r: float
    loose_macro_f1: float
    loose_micro_p: float
    loose_micro_r: float
    loose_micro_f1: float
    n_examples: int

    def to_json_obj(self) -> dict:
        return {
            "strict_acc": self.strict_acc,
            "loose_macro_p": self.loose_macro_p,
            "loose_macro_r": self.loose_macro_r,
            "loose_macro_f1": self.loose_macro_f1,
            "loose_micro_p": self.loose_micro_p,
            "loose_micro_r": self.loose_micro_r,
            "loose_micro_f1": self.loose_micro_f1,
            "n_examples": self.n_examples,
        }


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0.0 else 2.0 * p * r / (p + r)


def evaluate(
    preds: Sequence[EntityType],
    golds: Sequence[EntityType],
    macro_f1_per_example: bool = False,
) -> EvalResult:
    """Compute strict accuracy and loose micro/macro F1.

    ``macro_f1_per_example`` switches loose macro F1 to the mean of
    per-example F1 values instead of the F1 of mean precision and mean
    recall; macro P and R are unaffected.
    """
    if len(preds) != len(golds):
        raise ConfigurationError(
            f"prediction/gold length mismatch: {len(preds)} vs {len(golds)}"
        )
    if not golds:
        raise ConfigurationError("cannot evaluate an empty example list")

    n = len(golds)
    strict = 0
    sum_p = sum_r = sum_f = 0.0
    inter_total = pred_total = gold_total = 0
    for pred, gold in zip(preds, golds):
        pset = expand_hierarchy(pred)
        gset = expand_hierarchy(gold)
        inter = len(pset & gset)
        if pset == gset:
            strict += 1
        p_i = inter / len(pset)
        r_i = inter / len(gset)
        sum_p += p_i
        sum_r += r_i
        sum_f += _f1(p_i, r_i)
        inter_total += inter
        pred_total += len(pset)
        gold_total += len(gset)

    macro_p = sum_p / n
    macro_r = sum_r / n
    macro_f1 = sum_f / n if macro_f1_per_example else _f1(macro_p, macro_r)
    micro_p = inter_total / pred_total
    micro_r = inter_total / gold_total
    return EvalResult(
        strict_acc=strict / n,
        loose_macro_p=macro_p,
        loose_macro_r=macro_r,
        loose_macro_f1=macro_f1,
        loose_micro_p=micro_p,
        loose_micro_r=micro_r,
        loose_micro_f1=_f1(micro_p, micro_r),
        n_examples=n,
    )


@dataclass(frozen=True)
class TypeReport:
    """Prediction breakdown for one gold type."""

    support: int
    correct: int
    wrong_fine_right_coarse: int
    wrong_coarse: int
    predicted_counts: tuple[tuple[str, int], ...]


def per_type_report(
    preds: Sequence[EntityType], golds: Sequence[EntityType]
) -> dict[EntityType, TypeReport]:
    """Per gold type: support, correctness split, and predicted-type counts.

    A wrong prediction that still shares the coarsest (first) level with
    the gold type counts as wrong-fine/right-coarse; otherwise it is
    wrong-coarse.
    """
    if len(preds) != len(golds):
        raise ConfigurationError(
            f"prediction/gold length mismatch: {len(preds)} vs {len(golds)}"
        )
    support: dict[EntityType, int] = {}
    correct: dict[EntityType, int] = {}
    wrong_fine: dict[EntityType, int] = {}
    wrong_coarse: dict[EntityType, int] = {}
    counts: dict[EntityType, dict[str, int]] = {}
    for pred, gold in zip(preds, golds):
        support[gold] = support.get(gold, 0) + 1
        bucket = counts.setdefault(gold, {})
        cid = pred.canonical_id
        bucket[cid] = bucket.get(cid, 0) + 1
        if pred == gold:
            correct[gold] = correct.get(gold, 0) + 1
        elif pred.path[0] == gold.path[0]:
            wrong_fine[gold] = wrong_fine.get(gold, 0) + 1
        else:
            wrong_coarse[gold] = wrong_coarse.get(gold, 0) + 1

    out: dict[EntityType, TypeReport] = {}
    for gold in sorted(support, key=lambda t: t.canonical_id):
        ordered = tuple(
            sorted(counts[gold].items(), key=lambda kv: (-kv[1], kv[0]))
        )
        out[gold] = TypeReport(
            support=support[gold],
            correct=correct.get(gold, 0),
            wrong_fine_right_coarse=wrong_fine.get(gold, 0),
            wrong_coarse=wrong_coarse.get(gold, 0),
            predicted_counts=ordered,
        )
    return out


def report_to_csv(report: dict[EntityType, TypeReport]) -> str:
    """Render a per-type report as CSV (one row per gold type)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "type",
            "support",
            "correct",
            "wrong_fine_right_coarse",
            "wrong_coarse",
            "top_predictions",
        ]
    )
    for t, row in report.items():
        top = ";".join(f"{cid}:{n}" for cid, n in row.predicted_counts[:5])
        writer.writerow(
            [
                t.canonical_id,
                row.support,
                row.correct,
                row.wrong_fine_right_coarse,
                row.wrong_coarse,
                top,
            ]
        )
    return buf.getvalue()
