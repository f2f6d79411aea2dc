"""Line-delimited JSON records: cases, relevance labels, rankings."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator


class DataError(ValueError):
    """Malformed input data; the message carries the path and line number."""


@dataclass(frozen=True)
class CaseRecord:
    case_id: str
    fact_text: str = ""
    issue_text: str = ""
    fact_triplets: list = field(default_factory=list)
    issue_triplets: list = field(default_factory=list)

    @property
    def text(self) -> str:
        """Full lexical text used for BM25."""
        return f"{self.fact_text} {self.issue_text}".strip()

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "fact_text": self.fact_text,
            "issue_text": self.issue_text,
            "fact_triplets": [list(t) for t in self.fact_triplets],
            "issue_triplets": [list(t) for t in self.issue_triplets],
        }


def iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, rec


def write_jsonl(path, records: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _triplets(value, where: str) -> list[tuple[str, str, str]]:
    if not isinstance(value, list):
        raise DataError(f"{where}: triplets must be a list")
    out = []
    for t in value:
        if not (isinstance(t, (list, tuple)) and len(t) == 3 and all(isinstance(s, str) for s in t)):
            raise DataError(f"{where}: each triplet must be [head, relation, tail] strings, got {t!r}")
        out.append(tuple(t))
    return out


def iter_cases(path) -> Iterator[tuple[int, CaseRecord]]:
    """Yield ``(line_number, case)``; rejects malformed and duplicate records."""
    seen = set()
    for lineno, rec in iter_jsonl(path):
        where = f"{path}:{lineno}"
        if "case_id" not in rec:
            raise DataError(f"{where}: missing case_id")
        cid = str(rec["case_id"])
        if cid in seen:
            raise DataError(f"{where}: duplicate case_id {cid!r}")
        seen.add(cid)
        yield lineno, CaseRecord(
            case_id=cid,
            fact_text=str(rec.get("fact_text", "")),
            issue_text=str(rec.get("issue_text", "")),
            fact_triplets=_triplets(rec.get("fact_triplets", []), where),
            issue_triplets=_triplets(rec.get("issue_triplets", []), where),
        )


def load_cases(path) -> list[CaseRecord]:
    return [case for _, case in iter_cases(path)]


def load_labels(path) -> dict[str, list[str]]:
    labels: dict[str, list[str]] = {}
    for lineno, rec in iter_jsonl(path):
        if "query_id" not in rec or not isinstance(rec.get("relevant_ids"), list):
            raise DataError(f"{path}:{lineno}: need query_id and a relevant_ids list")
        labels[str(rec["query_id"])] = [str(x) for x in rec["relevant_ids"]]
    return labels


def save_labels(path, labels: dict[str, list[str]]) -> None:
    write_jsonl(path, ({"query_id": q, "relevant_ids": list(r)} for q, r in labels.items()))


def load_query_ids(path) -> list[str]:
    out = []
    for lineno, rec in iter_jsonl(path):
        if "query_id" not in rec:
            raise DataError(f"{path}:{lineno}: missing query_id")
        out.append(str(rec["query_id"]))
    return out
