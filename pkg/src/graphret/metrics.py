"""Ranking metrics at a cutoff with binary relevance.

Conventions:

* P@k divides by k; R@k divides by the number of relevant cases.
* Mi-F1 is the harmonic mean of micro precision and recall, pooled over
  queries at the cutoff. Ma-F1 is the harmonic mean of the macro P@k and
  R@k (``macro_f1="mean_f1"`` averages per-query F1 instead).
* MAP uses the whole ranking; MRR and NDCG stop at the cutoff.
* NDCG uses gain 1 and discount ``log2(rank + 1)``.
* Queries with no relevant cases are left out of R@k, MAP and NDCG means,
  but still count towards P@k, MRR and the micro false positives.

Everything except NDCG is a ratio of integers, so it is accumulated as an
exact fraction and rounded once; NDCG means use ``math.fsum``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .ranking import RankedList


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    micro_f1: float
    macro_f1: float
    mrr: float
    map: float
    ndcg: float
    cutoff: int = 5
    n_queries: int = 0

    def as_dict(self) -> dict:
        k = self.cutoff
        return {
            f"P@{k}": self.precision,
            f"R@{k}": self.recall,
            "Mi-F1": self.micro_f1,
            "Ma-F1": self.macro_f1,
            f"MRR@{k}": self.mrr,
            "MAP": self.map,
            f"NDCG@{k}": self.ndcg,
        }

    def to_record(self) -> dict:
        return asdict(self)


def _hmean(p, r):
    return 2 * p * r / (p + r) if p + r > 0 else Fraction(0)


def _mean(xs: Sequence) -> Fraction:
    return sum(xs, Fraction(0)) / len(xs) if xs else Fraction(0)


def _average_precision(ranked_ids: Sequence[str], relevant: set) -> Fraction:
    hits, total = 0, Fraction(0)
    for i, cid in enumerate(ranked_ids, 1):
        if cid in relevant:
            hits += 1
            total += Fraction(hits, i)
    return total / len(relevant) if relevant else Fraction(0)


def _reciprocal_rank(ranked_ids: Sequence[str], relevant: set, k: int) -> Fraction:
    for i, cid in enumerate(ranked_ids[:k], 1):
        if cid in relevant:
            return Fraction(1, i)
    return Fraction(0)


def average_precision(ranked_ids: Sequence[str], relevant: set) -> float:
    return float(_average_precision(ranked_ids, set(relevant)))


def ndcg_at_k(ranked_ids: Sequence[str], relevant: set, k: int) -> float:
    dcg = sum(1.0 / math.log2(i + 1) for i, cid in enumerate(ranked_ids[:k], 1) if cid in relevant)
    ideal = sum(1.0 / math.log2(i + 1) for i in range(1, min(len(relevant), k) + 1))
    return dcg / ideal if ideal > 0 else 0.0


def reciprocal_rank(ranked_ids: Sequence[str], relevant: set, k: int) -> float:
    return float(_reciprocal_rank(ranked_ids, set(relevant), k))


def evaluate(
    rankings: Iterable[RankedList],
    labels: Mapping[str, Iterable[str]],
    cutoff: int = 5,
    macro_f1: str = "harmonic_of_means",
) -> EvalReport:
    if macro_f1 not in ("harmonic_of_means", "mean_f1"):
        raise ValueError(f"unknown macro_f1 convention {macro_f1!r}")
    precisions, recalls, rrs, aps, ndcgs, f1s = [], [], [], [], [], []
    tp = fp = fn = 0
    n = 0
    for rl in rankings:
        if rl.query_id not in labels:
            raise KeyError(f"no labels for query {rl.query_id!r}")
        rel = set(labels[rl.query_id])
        ids = rl.ids
        top = ids[:cutoff]
        hits = sum(1 for c in top if c in rel)
        n += 1
        tp += hits
        fp += len(top) - hits
        fn += len(rel) - hits
        p = Fraction(hits, cutoff)
        precisions.append(p)
        rrs.append(_reciprocal_rank(ids, rel, cutoff))
        if rel:
            r = Fraction(hits, len(rel))
            recalls.append(r)
            aps.append(_average_precision(ids, rel))
            ndcgs.append(ndcg_at_k(ids, rel, cutoff))
            f1s.append(_hmean(p, r))
        else:
            f1s.append(Fraction(0))

    micro_p = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
    micro_r = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    macro_p, macro_r = _mean(precisions), _mean(recalls)
    ma_f1 = _hmean(macro_p, macro_r) if macro_f1 == "harmonic_of_means" else _mean(f1s)
    return EvalReport(
        precision=float(macro_p),
        recall=float(macro_r),
        micro_f1=float(_hmean(micro_p, micro_r)),
        macro_f1=float(ma_f1),
        mrr=float(_mean(rrs)),
        map=float(_mean(aps)),
        ndcg=math.fsum(ndcgs) / len(ndcgs) if ndcgs else 0.0,
        cutoff=cutoff,
        n_queries=n,
    )


def format_report(report: EvalReport, title: str | None = None) -> str:
    d = report.as_dict()
    head = " ".join(f"{k:>8}" for k in d)
    row = " ".join(f"{100 * v:8.2f}" for v in d.values())
    lines = [title] if title else []
    lines += [head, row, f"({report.n_queries} queries, values in %)"]
    return "\n".join(lines)
