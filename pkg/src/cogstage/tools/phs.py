"""Polygenic hazard score calculator.

raw score = sum of per-variant weights times alt-allele dosages over the
non-missing variants (missing variants contribute zero and are disclosed in
the diagnostics, never imputed).  The percentile ranks the raw score
against the model's reference sample with an inclusive <= convention, so
ties map to the upper percentile.  With an age, the hazard ratio
exp(score - mu) converts the baseline survival table into age-specific
annualized risk 1 - S0(age)^HR, with a bootstrap band over the reference
sample (resampled means of the reference feed the HR per resample).

The shipped model file is a small synthetic fixture; plug a published
weight set by pointing ``model_path`` at your own JSON with the same shape:
``{"variants": [{"rsid", "beta"}], "mu", "reference_scores": [],
"baseline_survival": [{"age", "s0"}]}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from ..vcf import parse_vcf_genotypes
from .executor import ModelFileInvalid, NoUsableGenotypes


@dataclass(frozen=True)
class PhsModel:
    variants: tuple[tuple[str, float], ...]  # (rsid, beta)
    mu: float
    reference_scores: tuple[float, ...]
    baseline_survival: tuple[tuple[float, float], ...]  # (age, s0), ages ascending

    @property
    def rsids(self) -> list[str]:
        return [rsid for rsid, _ in self.variants]


def load_phs_model(path: Optional[str] = None) -> PhsModel:
    """Load and sanity-check a PHS model file (default: the bundled fixture)."""
    if path is None:
        text = (resources.files("cogstage") / "data/phs_model.json").read_text("utf-8")
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        data = json.loads(text)
        variants = tuple((v["rsid"], float(v["beta"])) for v in data["variants"])
        mu = float(data["mu"])
        reference = tuple(float(x) for x in data["reference_scores"])
        survival = tuple(
            (float(row["age"]), float(row["s0"])) for row in data["baseline_survival"]
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ModelFileInvalid(f"cannot read PHS model: {exc}") from exc

    if not variants or any(not math.isfinite(beta) for _, beta in variants):
        raise ModelFileInvalid("model needs a non-empty, finite variant weight list")
    if not math.isfinite(mu):
        raise ModelFileInvalid("mu must be finite")
    if not reference:
        raise ModelFileInvalid("reference score sample is empty")
    if not survival:
        raise ModelFileInvalid("baseline survival table is empty")
    ages = [a for a, _ in survival]
    s0s = [s for _, s in survival]
    if ages != sorted(ages) or len(set(ages)) != len(ages):
        raise ModelFileInvalid("baseline survival ages must be strictly increasing")
    if any(not (0.0 < s <= 1.0) for s in s0s):
        raise ModelFileInvalid("baseline survival values must lie in (0, 1]")
    if any(b > a for a, b in zip(s0s, s0s[1:])):
        raise ModelFileInvalid("baseline survival must be non-increasing with age")
    return PhsModel(variants, mu, reference, survival)


def apoe_to_dosages(apoe: str) -> dict[str, int]:
    """Translate an APOE genotype into the two defining SNP dosages.

    Each epsilon-4 allele carries the rs429358 alt (C); each epsilon-2
    allele carries the rs7412 alt (T); epsilon-3 carries neither.
    """
    alleles = apoe.strip().split("/")
    if len(alleles) != 2 or any(a not in ("2", "3", "4") for a in alleles):
        raise ValueError(f"bad APOE genotype: {apoe!r}")
    return {
        "rs429358": sum(1 for a in alleles if a == "4"),
        "rs7412": sum(1 for a in alleles if a == "2"),
    }


def _interpolate_s0(model: PhsModel, age: float) -> float:
    table = model.baseline_survival
    if age <= table[0][0]:
        return table[0][1]
    if age >= table[-1][0]:
        return table[-1][1]
    for (a0, s0), (a1, s1) in zip(table, table[1:]):
        if a0 <= age <= a1:
            if a1 == a0:
                return s0
            t = (age - a0) / (a1 - a0)
            return s0 + t * (s1 - s0)
    return table[-1][1]


@dataclass(frozen=True)
class RiskPoint:
    age: float
    risk: float
    low: float
    high: float


@dataclass(frozen=True)
class PhsResult:
    raw_phs: float
    percentile: float
    risk_curve: Optional[tuple[RiskPoint, ...]]
    diagnostics: tuple[str, ...]

    def to_payload(self) -> dict:
        payload: dict = {
            "raw_phs": self.raw_phs,
            "percentile": self.percentile,
            "diagnostics": list(self.diagnostics),
        }
        if self.risk_curve is not None:
            payload["risk_curve"] = [
                {"age": p.age, "risk": p.risk, "low": p.low, "high": p.high}
                for p in self.risk_curve
            ]
        return payload


def compute_phs(
    dosages: dict[str, Optional[int]],
    model: PhsModel,
    age: Optional[float] = None,
    n_band_resamples: int = 1000,
    seed: int = 0,
) -> PhsResult:
    """Score a dosage map against the model; optionally add the risk curve."""
    diagnostics: list[str] = []
    usable = 0
    raw = 0.0
    for rsid, beta in model.variants:
        dosage = dosages.get(rsid)
        if dosage is None:
            diagnostics.append(f"{rsid}: no genotype; contributes 0 (not imputed)")
            continue
        if dosage not in (0, 1, 2):
            raise NoUsableGenotypes(f"{rsid}: dosage must be 0, 1 or 2, got {dosage!r}")
        usable += 1
        raw += beta * dosage
    if usable == 0:
        raise NoUsableGenotypes("no wanted variant has a non-missing dosage")

    reference = np.asarray(model.reference_scores, dtype=float)
    percentile = 100.0 * float(np.count_nonzero(reference <= raw)) / reference.size

    curve: Optional[tuple[RiskPoint, ...]] = None
    if age is not None:
        hr = math.exp(raw - model.mu)
        ages = [age] + [a for a, _ in model.baseline_survival if a > age]
        rng = np.random.default_rng(seed)
        resample_mu = np.array([
            rng.choice(reference, size=reference.size, replace=True).mean()
            for _ in range(n_band_resamples)
        ])
        hr_band = np.exp(raw - resample_mu)
        points = []
        for a in ages:
            s0 = _interpolate_s0(model, a)
            risk = 1.0 - s0 ** hr
            band = 1.0 - s0 ** hr_band
            points.append(RiskPoint(
                age=float(a),
                risk=float(risk),
                low=float(np.percentile(band, 2.5)),
                high=float(np.percentile(band, 97.5)),
            ))
        curve = tuple(points)

    return PhsResult(
        raw_phs=raw,
        percentile=percentile,
        risk_curve=curve,
        diagnostics=tuple(diagnostics),
    )


class PhsBackend:
    """Tool backend: resolves the genotype source, then scores it."""

    def __init__(self, model: Optional[PhsModel] = None,
                 n_band_resamples: int = 1000, seed: int = 0):
        self.model = model or load_phs_model()
        self.n_band_resamples = n_band_resamples
        self.seed = seed

    def __call__(self, parameters: dict) -> dict:
        dosages: dict[str, Optional[int]] = {}
        diagnostics: list[str] = []

        if parameters.get("vcf_path"):
            extract = parse_vcf_genotypes(parameters["vcf_path"], set(self.model.rsids))
            for rsid, call in extract.calls.items():
                dosages[rsid] = call.dosage
            diagnostics.extend(f"{k}: {v}" for k, v in extract.errors.items())
        if parameters.get("genotypes"):
            for rsid, dosage in parameters["genotypes"].items():
                dosages[rsid] = None if dosage is None else int(dosage)
        if parameters.get("apoe") and not any(
            rsid in dosages and dosages[rsid] is not None
            for rsid in ("rs429358", "rs7412")
        ):
            try:
                dosages.update(apoe_to_dosages(parameters["apoe"]))
            except ValueError as exc:
                raise NoUsableGenotypes(str(exc)) from exc

        if not dosages:
            raise NoUsableGenotypes("no genotype source produced any dosage")

        result = compute_phs(
            dosages,
            self.model,
            age=parameters.get("age"),
            n_band_resamples=self.n_band_resamples,
            seed=self.seed,
        )
        payload = result.to_payload()
        payload["diagnostics"] = list(result.diagnostics) + diagnostics
        return payload
