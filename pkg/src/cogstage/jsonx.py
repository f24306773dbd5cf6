"""Tolerant JSON extraction from LLM replies.

Models wrap JSON in prose and code fences; the contract here is to take the
largest balanced top-level JSON object in the text that actually parses.
"""

from __future__ import annotations

import json
from typing import Any


class NotJson(ValueError):
    """No parseable JSON object could be extracted from the text."""


def _balanced_spans(text: str) -> list[tuple[int, int]]:
    """All top-level {...} spans, tracked string-aware."""
    spans = []
    depth = 0
    start = -1
    in_string = False
    escaped = False
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            if depth > 0:
                in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            if depth > 0:
                depth -= 1
                if depth == 0:
                    spans.append((start, i + 1))
    return spans


def extract_json_object(text: str) -> dict[str, Any]:
    """Parse the largest balanced top-level JSON object found in ``text``."""
    candidates = sorted(_balanced_spans(text), key=lambda s: s[1] - s[0], reverse=True)
    for start, end in candidates:
        try:
            value = json.loads(text[start:end])
        except json.JSONDecodeError:
            continue
        if isinstance(value, dict):
            return value
    raise NotJson("no balanced JSON object parses in the reply")
