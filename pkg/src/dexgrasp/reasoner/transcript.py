"""Append-only log of every reasoning request and its raw response."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional


@dataclass
class StageRecord:
    stage: str
    prompt: str
    images: List[str]
    response: str
    parsed: Any
    timestamp: int  # logical sequence number, not wall-clock
    retry: int
    backend: str = ""
    error: Optional[str] = None


@dataclass
class StageTranscript:
    records: List[StageRecord] = field(default_factory=list)
    meta: Dict[str, Any] = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def append(self, record: StageRecord) -> StageRecord:
        record.timestamp = len(self.records)
        self.records.append(record)
        return record

    def for_stage(self, stage: str) -> List[StageRecord]:
        return [r for r in self.records if r.stage == stage]

    def responses(self) -> Dict[str, List[str]]:
        """Raw responses grouped by stage in request order (the replay script)."""
        out: Dict[str, List[str]] = {}
        for r in self.records:
            out.setdefault(r.stage, []).append(r.response)
        return out

    def to_dict(self) -> dict:
        return {"meta": self.meta, "records": [asdict(r) for r in self.records]}

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        return path

    @classmethod
    def from_dict(cls, d) -> "StageTranscript":
        return cls([StageRecord(**r) for r in d.get("records", [])], dict(d.get("meta", {})))

    @classmethod
    def load(cls, path) -> "StageTranscript":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
