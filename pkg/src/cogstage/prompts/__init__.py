"""Versioned prompt assets and their assembly helpers.

The four templates are shipped as plain-text package data; placeholders use
``str.format`` syntax ({patient_data}, {doctor_prompt}, {tool_results}),
with literal JSON braces escaped as ``{{``/``}}`` inside the templates.
The aggregator system prompt doubles as the versioned clinical guideline
text: its SHA-256 digest is stamped into every report.
"""

from __future__ import annotations

import hashlib
from importlib import resources


def _load(name: str) -> str:
    return (resources.files(__package__) / name).read_text(encoding="utf-8")


def planner_system_prompt() -> str:
    return _load("planner_system.txt")


def planner_user_prompt(patient_data: str, doctor_prompt: str) -> str:
    return _load("planner_user.txt").format(
        patient_data=patient_data, doctor_prompt=doctor_prompt or "None"
    )


def aggregator_system_prompt() -> str:
    return _load("aggregator_system.txt")


def aggregator_user_prompt(
    tool_results: str, patient_data: str, doctor_prompt: str
) -> str:
    return _load("aggregator_user.txt").format(
        tool_results=tool_results,
        patient_data=patient_data,
        doctor_prompt=doctor_prompt or "None",
    )


def guideline_text() -> str:
    """The clinical guideline block conditioning every aggregation call."""
    return aggregator_system_prompt()


def guideline_checksum() -> str:
    return hashlib.sha256(guideline_text().encode("utf-8")).hexdigest()
