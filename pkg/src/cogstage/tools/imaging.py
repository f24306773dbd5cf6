"""Imaging analyzer backends: fixture sidecars and external-process wrappers.

The real volumetric pipelines are external neuroimaging programs; this
module wraps them behind the tool contract.  Two backend kinds:

* ``fixture`` - reads a ``<image>.volumes.json`` sidecar next to the image
  (deterministic tests and demos without neuroimaging software installed).
* ``external_process`` - renders a command template (placeholder
  substitution only, never shell interpretation), runs it, and parses a
  ``key value unit`` result file.

All volumes are converted to the canonical mm^3 at ingestion; the source
unit is recorded in the payload.
"""

from __future__ import annotations

import json
import os
import subprocess
import tempfile
from typing import Optional

from ..domain import convert_volume
from .executor import BackendProcessFailed, MissingSidecar, UnparseableOutput
from .registry import VOLUME_MEASURES

SIDECAR_SUFFIX = ".volumes.json"


def _finalize_measures(kind: str, values: dict[str, float], unit: str) -> dict:
    measures = VOLUME_MEASURES[kind]
    payload: dict[str, object] = {"source_unit": unit}
    missing = [m for m in measures if m not in values and m != "total"]
    if missing:
        raise UnparseableOutput(f"{kind}: missing measures {missing}")
    for name in measures:
        if name == "total" and "total" not in values:
            value = values["left"] + values["right"]
        else:
            value = values[name]
        payload[name] = convert_volume(float(value), unit, "mm3")
    return payload


class FixtureImagingBackend:
    """Reads per-image volume sidecars; the default test/demo profile."""

    def __init__(self, kind: str):
        if kind not in VOLUME_MEASURES:
            raise ValueError(f"not an imaging analyzer: {kind}")
        self.kind = kind

    def __call__(self, parameters: dict) -> dict:
        image_path = parameters["image_path"]
        sidecar = image_path + SIDECAR_SUFFIX
        if not os.path.exists(sidecar):
            raise MissingSidecar(f"no volume sidecar at {sidecar}")
        try:
            with open(sidecar, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UnparseableOutput(f"bad sidecar {sidecar}: {exc}") from exc
        unit = data.get("unit", "mL")
        try:
            return _finalize_measures(self.kind, data, unit)
        except (KeyError, TypeError, ValueError) as exc:
            raise UnparseableOutput(f"bad sidecar {sidecar}: {exc}") from exc


class ExternalProcessImagingBackend:
    """Runs a configured command and parses its ``key value unit`` result file.

    The template is a list of argv tokens; ``{input}`` and ``{output_dir}``
    are substituted per token.  The command must write ``result.txt`` into
    the output directory.
    """

    def __init__(self, kind: str, command_template: list[str],
                 timeout: Optional[float] = 600.0):
        if kind not in VOLUME_MEASURES:
            raise ValueError(f"not an imaging analyzer: {kind}")
        self.kind = kind
        self.command_template = list(command_template)
        self.timeout = timeout

    def __call__(self, parameters: dict) -> dict:
        image_path = parameters["image_path"]
        with tempfile.TemporaryDirectory(prefix="cogstage-tool-") as output_dir:
            argv = [
                token.format(input=image_path, output_dir=output_dir)
                for token in self.command_template
            ]
            try:
                completed = subprocess.run(
                    argv, capture_output=True, text=True, timeout=self.timeout,
                )
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise BackendProcessFailed(f"{argv[0]}: {exc}") from exc
            if completed.returncode != 0:
                raise BackendProcessFailed(
                    f"{argv[0]} exited {completed.returncode}: "
                    f"{completed.stderr.strip()[:500]}"
                )
            result_path = os.path.join(output_dir, "result.txt")
            values, unit = _parse_result_file(result_path)
        return _finalize_measures(self.kind, values, unit)


def _parse_result_file(path: str) -> tuple[dict[str, float], str]:
    if not os.path.exists(path):
        raise UnparseableOutput(f"backend wrote no result file at {path}")
    values: dict[str, float] = {}
    unit = "mL"
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) < 2:
                raise UnparseableOutput(f"bad result line: {line.strip()!r}")
            key, raw = parts[0], parts[1]
            try:
                values[key] = float(raw)
            except ValueError as exc:
                raise UnparseableOutput(f"bad numeric value in {line.strip()!r}") from exc
            if len(parts) >= 3:
                unit = parts[2]
    if not values:
        raise UnparseableOutput(f"result file {path} holds no measures")
    return values, unit


def write_volume_sidecar(image_path: str, volumes: dict, unit: str = "mL") -> str:
    """Write the fixture sidecar for an image; returns the sidecar path."""
    sidecar = image_path + SIDECAR_SUFFIX
    payload = {"unit": unit, **volumes}
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    return sidecar
