"""Executable encoding of the staging guideline bands and conflict protocol.

The aggregator's LLM is *asked* to follow these rules; this module *is*
these rules, deterministically.  It drives the fallback path when the LLM
fails, and serves as the cross-check oracle for every LLM-produced report.

Band semantics (defaults mirror the shipped guideline text exactly):
  CDR      0 -> CN, 0.5 -> MCI, >=1 -> AD
  MMSE     27-30 CN, 20-26 MCI, <20 AD
  MoCA     26-30 CN, 18-25 MCI, <18 AD
  ADAS-11  <10 CN, 10-20 MCI, >20 AD     (boundaries 10 and 20 are MCI)
  ADAS-13  <15 CN, 15-30 MCI, >30 AD     (boundaries 15 and 30 are MCI)
  FAQ      0-5 CN, 6-15 MCI, >15 AD
  Hippocampal total volume < 6000 mm^3 -> supporting impairment evidence
  CSF cutoffs carry no defaults: unset cutoffs cast no vote.
  APOE e4 is a risk factor only and never votes a label by itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .domain import ConfidenceLevel, PatientRecord, StagingLabel


class UnknownIndicator(ValueError):
    pass


class OutOfRange(ValueError):
    pass


class NoEvidence(ValueError):
    """No label-bearing and no supporting votes: staging is impossible."""


class Tier(str, Enum):
    PRIMARY_COGNITIVE = "primary_cognitive"
    SUPPORTING_BIOMARKER = "supporting_biomarker"
    SUPPORTING_IMAGING = "supporting_imaging"
    RISK_FACTOR = "risk_factor"


@dataclass(frozen=True)
class IndicatorVote:
    indicator: str
    tier: Tier
    label: Optional[StagingLabel]  # None for supporting/risk votes
    detail: str = ""

    def __post_init__(self) -> None:
        if self.tier is Tier.RISK_FACTOR and self.label is not None:
            raise ValueError("risk-factor votes never carry a staging label")


@dataclass(frozen=True)
class ThresholdTable:
    """All numeric cutoffs in one replaceable, serializable object.

    CSF cutoffs default to None (no vote) because the guideline text states
    directions but no numbers; shipping invented cutoffs as defaults would
    masquerade as clinical ground truth.
    """

    csf_abeta42_low: Optional[float] = None
    csf_tau_high: Optional[float] = None
    csf_ptau_high: Optional[float] = None
    hippocampus_atrophic_total: float = 6000.0  # mm^3

    def to_json_dict(self) -> dict:
        return {
            "csf_abeta42_low": self.csf_abeta42_low,
            "csf_tau_high": self.csf_tau_high,
            "csf_ptau_high": self.csf_ptau_high,
            "hippocampus_atrophic_total": self.hippocampus_atrophic_total,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ThresholdTable":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})

    @classmethod
    def load(cls, path: str) -> "ThresholdTable":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


DEFAULT_TABLE = ThresholdTable()

CN = StagingLabel.CN
MCI = StagingLabel.MCI
AD = StagingLabel.AD


def band_indicator(indicator: str, value: float, table: ThresholdTable = DEFAULT_TABLE) -> IndicatorVote:
    """Band one cognitive indicator value into its staging vote."""
    name = indicator.lower()
    if name == "cdr":
        if value not in (0.0, 0.5, 1.0, 2.0, 3.0):
            raise OutOfRange(f"cdr value not on the global-score grid: {value}")
        label = CN if value == 0 else MCI if value == 0.5 else AD
    elif name == "mmse":
        _check_range(name, value, 0, 30)
        label = CN if value >= 27 else MCI if value >= 20 else AD
    elif name == "moca":
        _check_range(name, value, 0, 30)
        label = CN if value >= 26 else MCI if value >= 18 else AD
    elif name == "adas11":
        if value < 0:
            raise OutOfRange(f"adas11 must be non-negative: {value}")
        label = CN if value < 10 else MCI if value <= 20 else AD
    elif name == "adas13":
        if value < 0:
            raise OutOfRange(f"adas13 must be non-negative: {value}")
        label = CN if value < 15 else MCI if value <= 30 else AD
    elif name == "faq":
        _check_range(name, value, 0, 30)
        label = CN if value <= 5 else MCI if value <= 15 else AD
    else:
        raise UnknownIndicator(indicator)
    return IndicatorVote(
        indicator=name,
        tier=Tier.PRIMARY_COGNITIVE,
        label=label,
        detail=f"{name}={value:g} banded as {label.value}",
    )


def _check_range(name: str, value: float, lo: float, hi: float) -> None:
    if not (lo <= value <= hi):
        raise OutOfRange(f"{name} out of range {lo}-{hi}: {value}")


_COGNITIVE_FIELDS = ("cdr", "mmse", "moca", "adas11", "adas13", "faq")


def collect_votes(
    record: PatientRecord,
    outcomes: Sequence = (),
    table: ThresholdTable = DEFAULT_TABLE,
) -> tuple[list[IndicatorVote], list[str]]:
    """Gather every vote the available evidence can cast.

    Absent data casts no vote.  Failed tool outcomes cast no vote either;
    they come back in the second element as evidence-availability conflicts.
    Tool outcomes are inspected duck-typed: anything with ``tool``,
    ``status`` and ``payload`` attributes participates.
    """
    votes: list[IndicatorVote] = []
    conflicts: list[str] = []

    for name in _COGNITIVE_FIELDS:
        value = getattr(record, name)
        if value is not None:
            votes.append(band_indicator(name, float(value), table))

    if record.csf_abeta42 is not None and table.csf_abeta42_low is not None:
        if record.csf_abeta42 < table.csf_abeta42_low:
            votes.append(IndicatorVote(
                "csf_abeta42", Tier.SUPPORTING_BIOMARKER, None,
                f"CSF Abeta42 {record.csf_abeta42:g} below cutoff "
                f"{table.csf_abeta42_low:g}: amyloid pathology supports MCI/AD",
            ))
    for name, cutoff in (("csf_tau", table.csf_tau_high), ("csf_ptau", table.csf_ptau_high)):
        value = getattr(record, name)
        if value is not None and cutoff is not None and value > cutoff:
            votes.append(IndicatorVote(
                name, Tier.SUPPORTING_BIOMARKER, None,
                f"{name} {value:g} above cutoff {cutoff:g}: "
                "neuronal injury supports MCI/AD",
            ))

    for outcome in outcomes:
        status = getattr(outcome, "status", None)
        status = getattr(status, "value", status)
        tool = getattr(outcome, "tool", "")
        if status == "failed":
            conflicts.append(f"tool {tool} failed; its evidence is unavailable")
            continue
        if status != "ok":
            continue
        payload = getattr(outcome, "payload", {}) or {}
        if tool == "hippocampus_analyzer" and "total" in payload:
            total = float(payload["total"])
            if total < table.hippocampus_atrophic_total:
                votes.append(IndicatorVote(
                    "hippocampus_volume", Tier.SUPPORTING_IMAGING, None,
                    f"total hippocampal volume {total:g} mm^3 below "
                    f"{table.hippocampus_atrophic_total:g} mm^3: atrophy supports MCI/AD",
                ))

    if record.apoe_genotype and "4" in record.apoe_genotype:
        votes.append(IndicatorVote(
            "apoe", Tier.RISK_FACTOR, None,
            f"APOE {record.apoe_genotype} carries an epsilon-4 allele "
            "(risk factor, not a standalone diagnostic criterion)",
        ))

    return votes, conflicts


@dataclass(frozen=True)
class GuidelineDecision:
    label: StagingLabel
    confidence: ConfidenceLevel
    votes: tuple[IndicatorVote, ...]
    conflicts: tuple[str, ...]
    rationale: str


def decide_stage(
    votes: Sequence[IndicatorVote],
    table: ThresholdTable = DEFAULT_TABLE,
    extra_conflicts: Sequence[str] = (),
) -> GuidelineDecision:
    """Resolve a vote set into a staged decision with confidence.

    Resolution order:
      1. CDR, when present, fixes the label outright.
      2. Otherwise the primary cognitive votes decide by majority; a tie
         goes to the most impaired tied label when supporting (biomarker or
         imaging) impairment evidence exists, else to MCI.
      3. A CN consensus is lifted to MCI (Medium) when supporting
         impairment evidence contradicts it.
      4. With no primary votes at all, supporting evidence alone yields MCI
         at Low confidence; with nothing label-bearing or supporting,
         :class:`NoEvidence` is raised.

    Confidence: High when every primary vote agrees and no supporting tier
    contradicts; Medium when a supporting tier contradicts an otherwise
    unanimous primary picture or breaks a primary tie; Low when primaries
    disagree among themselves or only supporting evidence exists.
    Vote order never matters.
    """
    votes = sorted(votes, key=lambda v: (v.tier.value, v.indicator))
    primaries = [v for v in votes if v.tier is Tier.PRIMARY_COGNITIVE]
    supporting = [v for v in votes if v.tier in (Tier.SUPPORTING_BIOMARKER, Tier.SUPPORTING_IMAGING)]
    cdr_votes = [v for v in primaries if v.indicator == "cdr"]
    other_primaries = [v for v in primaries if v.indicator != "cdr"]
    supporting_impaired = bool(supporting)

    conflicts: list[str] = list(extra_conflicts)
    rationale_parts: list[str] = []

    if not primaries and not supporting:
        raise NoEvidence("no label-bearing and no supporting votes")

    if cdr_votes:
        label = cdr_votes[0].label
        assert label is not None
        rationale_parts.append(f"CDR is present and prioritized: label {label.value}")
        disagreeing = [v for v in other_primaries if v.label != label]
        support_conflicts = supporting_impaired and label is CN
        if disagreeing:
            conflicts.extend(
                f"{v.indicator} bands as {v.label.value}, CDR bands as {label.value}"
                for v in disagreeing
            )
            confidence = ConfidenceLevel.LOW
        elif support_conflicts:
            conflicts.extend(
                f"{v.indicator}: {v.detail} (conflicts with CDR-derived CN)"
                for v in supporting
            )
            confidence = ConfidenceLevel.MEDIUM
        else:
            confidence = ConfidenceLevel.HIGH
    elif other_primaries:
        tally: dict[StagingLabel, int] = {}
        for v in other_primaries:
            assert v.label is not None
            tally[v.label] = tally.get(v.label, 0) + 1
        top = max(tally.values())
        tied = sorted(
            (label for label, n in tally.items() if n == top),
            key=lambda l: l.impairment_rank,
        )
        unanimous = len(tally) == 1
        tie_broken_by_support = False
        if len(tied) == 1:
            label = tied[0]
        elif supporting_impaired:
            label = tied[-1]
            tie_broken_by_support = True
            rationale_parts.append(
                "primary votes tied; supporting impairment evidence breaks the "
                f"tie toward {label.value}"
            )
        else:
            label = MCI
            rationale_parts.append(
                "primary votes tied with no supporting evidence; defaulting to "
                "the intermediate stage MCI"
            )

        if label is CN and supporting_impaired:
            # Normal cognitive picture contradicted by abnormal biomarkers or
            # imaging: stage as MCI with reduced confidence.
            label = MCI
            conflicts.extend(
                f"{v.indicator}: {v.detail} (conflicts with normal cognitive scores)"
                for v in supporting
            )
            rationale_parts.append(
                "cognitive scores band normal but abnormal supporting evidence "
                "indicates MCI"
            )
            confidence = ConfidenceLevel.MEDIUM
        elif not unanimous:
            split = ", ".join(
                f"{l.value}x{n}"
                for l, n in sorted(tally.items(), key=lambda kv: kv[0].impairment_rank)
            )
            conflicts.append(f"primary votes split: {split}")
            confidence = (
                ConfidenceLevel.MEDIUM if tie_broken_by_support else ConfidenceLevel.LOW
            )
        else:
            confidence = ConfidenceLevel.HIGH
    else:
        # Supporting evidence only: impairment is indicated but the stage is
        # ambiguous between MCI and AD; take the intermediate stage.
        label = MCI
        confidence = ConfidenceLevel.LOW
        rationale_parts.append(
            "no cognitive scores available; abnormal supporting evidence alone "
            "is staged conservatively as MCI"
        )

    if not rationale_parts:
        rationale_parts.append(f"all primary indicators agree on {label.value}")

    return GuidelineDecision(
        label=label,
        confidence=confidence,
        votes=tuple(votes),
        conflicts=tuple(conflicts),
        rationale="; ".join(rationale_parts),
    )


def stage_record(
    record: PatientRecord,
    outcomes: Sequence = (),
    table: ThresholdTable = DEFAULT_TABLE,
) -> GuidelineDecision:
    """collect_votes + decide_stage in one call (the oracle entry point)."""
    votes, conflicts = collect_votes(record, outcomes, table)
    return decide_stage(votes, table, extra_conflicts=conflicts)
