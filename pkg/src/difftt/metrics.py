"""Evaluation metrics: accuracy, R-Precision / mean R-Precision, corpus BLEU.

BLEU variant (pinned so numbers are comparable across runs): BLEU-4,
case-sensitive, whitespace tokens, uniform n-gram weights, clipped counts,
geometric mean, brevity penalty exp(1 - r/c) when c < r, and add-one
smoothing on the counts for n >= 2 only when that order has zero matches.
Values are reported in [0, 1].
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field


class EmptyGoldSetError(ValueError):
    """A sample with no positive labels has no defined R-Precision."""


def accuracy(preds, golds) -> float:
    preds, golds = list(preds), list(golds)
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(golds)} golds")
    if not preds:
        raise ValueError("empty evaluation set")
    return sum(p == g for p, g in zip(preds, golds)) / len(preds)


def r_precision(ranked, gold_labels) -> float:
    """Precision of the top-R ranked labels, R = number of true labels."""
    gold = set(gold_labels)
    if not gold:
        raise EmptyGoldSetError("sample has no positive labels")
    r = len(gold)
    top = list(ranked)[:r]
    return len(set(top) & gold) / r


def mean_r_precision(values) -> float:
    """Arithmetic mean of per-sample R-Precision values."""
    values = list(values)
    if not values:
        raise ValueError("empty sample set")
    return sum(values) / len(values)


def _ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(candidates, references, max_n: int = 4) -> float:
    """Corpus-level BLEU in [0, 1] over tokenized sequences."""
    candidates, references = list(candidates), list(references)
    if len(candidates) != len(references):
        raise ValueError(
            f"length mismatch: {len(candidates)} candidates vs {len(references)} references"
        )
    if not candidates:
        raise ValueError("empty corpus")
    clipped = [0] * (max_n + 1)
    totals = [0] * (max_n + 1)
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        cand, ref = list(cand), list(ref)
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            counts = _ngram_counts(cand, n)
            ref_counts = _ngram_counts(ref, n)
            totals[n] += sum(counts.values())
            clipped[n] += sum(min(c, ref_counts[g]) for g, c in counts.items())
    if cand_len == 0 or totals[1] == 0 or clipped[1] == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        num, den = clipped[n], totals[n]
        if n >= 2 and num == 0:
            num, den = num + 1, den + 1
        if num == 0 or den == 0:
            return 0.0
        log_sum += math.log(num / den)
    geo = math.exp(log_sum / max_n)
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * geo


@dataclass
class EvalReport:
    """Per-sample records plus aggregates for one evaluation run."""
    metric_kind: str                       # "accuracy" | "mrp" | "bleu"
    records: list[dict] = field(default_factory=list)
    aggregate: float = 0.0
    sample_count: int = 0
    excluded_empty_gold: int = 0
    seed: int | None = None
    ms_per_sample: float = 0.0

    def recompute(self) -> float:
        """Recompute the aggregate from the per-sample records."""
        if self.metric_kind == "accuracy":
            return accuracy([r["predicted"] for r in self.records],
                            [r["gold"] for r in self.records])
        if self.metric_kind == "mrp":
            return mean_r_precision([r["r_precision"] for r in self.records])
        raise ValueError(f"cannot recompute metric kind {self.metric_kind!r}")


def classification_report(preds, golds, multi_label: bool, seed=None,
                          ms_per_sample: float = 0.0) -> EvalReport:
    """Build an EvalReport from Prediction objects and gold labels."""
    if multi_label:
        records = []
        excluded = 0
        for p, g in zip(preds, golds):
            gold = set(int(x) for x in g)
            if not gold:
                excluded += 1
                continue
            records.append({
                "gold": sorted(gold),
                "predicted": [int(x) for x in p.ranked[:len(gold)]],
                "r_precision": r_precision(p.ranked, gold),
            })
        report = EvalReport(metric_kind="mrp", records=records,
                            sample_count=len(records), excluded_empty_gold=excluded,
                            seed=seed, ms_per_sample=ms_per_sample)
        report.aggregate = mean_r_precision([r["r_precision"] for r in records])
        return report
    records = [{"gold": int(g), "predicted": int(p.label)} for p, g in zip(preds, golds)]
    report = EvalReport(metric_kind="accuracy", records=records,
                        sample_count=len(records), seed=seed, ms_per_sample=ms_per_sample)
    report.aggregate = accuracy([r["predicted"] for r in records],
                                [r["gold"] for r in records])
    return report
