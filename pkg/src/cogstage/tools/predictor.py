"""MRI progression-forecast tool backends.

The real forecaster is a heavyweight generative model served elsewhere;
this module provides the honest ``stub`` backend (copies the input scan and
records horizon metadata under ``model_id="stub"``) and an
``external_process`` backend that shells out to a configured command, then
insists the emitted NIfTI passes the preprocessed-MRI header checks.
"""

from __future__ import annotations

import os
import shutil
import subprocess
from typing import Optional

from ..nifti import parse_nifti_file, validate_preprocessed_mri
from .executor import BackendProcessFailed, InvalidPredictedImage


def _check_inputs(parameters: dict) -> tuple[str, float, float]:
    image_path = parameters["image_path"]
    age = float(parameters["age"])
    future_years = float(parameters["future_years"])
    if age <= 0:
        raise ValueError(f"age must be positive: {age}")
    if future_years <= 0:
        raise ValueError(f"future_years must be positive: {future_years}")
    if not os.path.exists(image_path):
        raise BackendProcessFailed(f"input image not found: {image_path}")
    return image_path, age, future_years


def _predicted_name(image_path: str, future_years: float) -> str:
    base = os.path.basename(image_path)
    for ext in (".nii.gz", ".nii"):
        if base.endswith(ext):
            stem = base[: -len(ext)]
            return f"{stem}_predicted_{future_years:g}y{ext}"
    root, ext = os.path.splitext(base)
    return f"{root}_predicted_{future_years:g}y{ext}"


class StubPredictorBackend:
    """Copies the input scan as the 'prediction' and records the horizon."""

    def __init__(self, output_dir: Optional[str] = None):
        self.output_dir = output_dir

    def __call__(self, parameters: dict) -> dict:
        image_path, age, future_years = _check_inputs(parameters)
        out_dir = self.output_dir or os.path.dirname(os.path.abspath(image_path))
        os.makedirs(out_dir, exist_ok=True)
        predicted = os.path.join(out_dir, _predicted_name(image_path, future_years))
        shutil.copyfile(image_path, predicted)
        return {
            "predicted_image_ref": predicted,
            "horizon_years": future_years,
            "model_id": "stub",
            "input_age": age,
        }


class ExternalPredictorBackend:
    """Runs the configured forecast command and validates its output header."""

    def __init__(self, command_template: list[str], output_dir: Optional[str] = None,
                 model_id: str = "external", timeout: Optional[float] = 3600.0):
        self.command_template = list(command_template)
        self.output_dir = output_dir
        self.model_id = model_id
        self.timeout = timeout

    def __call__(self, parameters: dict) -> dict:
        image_path, age, future_years = _check_inputs(parameters)
        out_dir = self.output_dir or os.path.dirname(os.path.abspath(image_path))
        os.makedirs(out_dir, exist_ok=True)
        predicted = os.path.join(out_dir, _predicted_name(image_path, future_years))
        argv = [
            token.format(input=image_path, output=predicted,
                         age=age, future_years=future_years)
            for token in self.command_template
        ]
        try:
            completed = subprocess.run(argv, capture_output=True, text=True,
                                       timeout=self.timeout)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise BackendProcessFailed(f"{argv[0]}: {exc}") from exc
        if completed.returncode != 0:
            raise BackendProcessFailed(
                f"{argv[0]} exited {completed.returncode}: {completed.stderr[:500]}"
            )
        if not os.path.exists(predicted):
            raise InvalidPredictedImage(f"command produced no file at {predicted}")
        try:
            header = parse_nifti_file(predicted)
        except ValueError as exc:
            raise InvalidPredictedImage(f"predicted image is not NIfTI: {exc}") from exc
        report = validate_preprocessed_mri(header)
        if not report.ok:
            raise InvalidPredictedImage(
                "predicted image fails validation: " + "; ".join(report.violations)
            )
        return {
            "predicted_image_ref": predicted,
            "horizon_years": future_years,
            "model_id": self.model_id,
            "input_age": age,
        }
