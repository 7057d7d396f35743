"""JSONL helpers with a canonical serialization shared across surfaces."""

from __future__ import annotations

import json
from typing import Any, Iterable, Iterator


def canonical_dumps(obj: Any) -> str:
    """Sorted keys, no whitespace: byte-stable across producers."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write_jsonl(path: str, objs: Iterable[Any]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(canonical_dumps(obj))
            fh.write("\n")
            count += 1
    return count


def read_jsonl(path: str) -> Iterator[tuple[int, Any]]:
    """Yield (line number, parsed object), skipping blank lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                yield lineno, json.loads(line)
