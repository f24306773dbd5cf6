"""VCF 4.x subset parser: single-sample genotype extraction plus APOE calls.

Only what the genetic-risk tooling needs: pull GT dosages for a wanted set
of variants (by rsid, or by (chrom, pos) as a fallback key) out of a
single-sample VCF, and derive the diploid APOE genotype from the standard
two-SNP table over rs429358 and rs7412.  Multi-sample files, INFO parsing,
and anything beyond GT are out of scope by design; missing genotypes stay
missing.
"""

from __future__ import annotations

import gzip
import io
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

WantedKey = Union[str, tuple[str, int]]


class VcfError(ValueError):
    """Base for VCF-level (whole file) failures."""


class NotVcf(VcfError):
    pass


class NoSampleColumn(VcfError):
    pass


class MultiSampleUnsupported(VcfError):
    pass


class ApoeError(ValueError):
    """Base for APOE inference failures."""


class MissingCall(ApoeError):
    pass


class InconsistentAlleles(ApoeError):
    pass


@dataclass(frozen=True)
class GenotypeCall:
    rsid: str
    chrom: str
    pos: int
    ref_allele: str
    alt_allele: str
    dosage: Optional[int]  # count of alt alleles; None when the call is missing
    phased: bool
    alleles: tuple[Optional[int], ...] = ()  # per-haplotype allele indices


@dataclass
class VcfExtract:
    """Result of a genotype extraction: calls keyed by rsid, plus per-variant
    errors that were recorded instead of raised (malformed GT, multi-allelic
    sites)."""

    calls: dict[str, GenotypeCall] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    def __contains__(self, rsid: str) -> bool:
        return rsid in self.calls

    def __getitem__(self, rsid: str) -> GenotypeCall:
        return self.calls[rsid]


def _open_text(source) -> Iterable[str]:
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
        if data[:2] == b"\x1f\x8b":
            data = gzip.decompress(data)
        return io.StringIO(data.decode("utf-8")).readlines()
    if isinstance(source, str) and "\n" in source:
        return io.StringIO(source).readlines()
    if isinstance(source, str):  # a path
        if source.endswith(".gz"):
            with gzip.open(source, "rt", encoding="utf-8") as fh:
                return fh.readlines()
        with open(source, "r", encoding="utf-8") as fh:
            return fh.readlines()
    return source.readlines()


def _parse_gt(gt: str) -> tuple[Optional[int], bool, tuple[Optional[int], ...]]:
    """Decode a GT string into (dosage, phased, allele indices).

    Dosage is the count of non-reference alleles; a GT containing "." is a
    missing call (dosage None).
    """
    phased = "|" in gt
    tokens = gt.replace("|", "/").split("/")
    alleles: list[Optional[int]] = []
    for token in tokens:
        if token == ".":
            alleles.append(None)
        elif token.isdigit():
            alleles.append(int(token))
        else:
            raise ValueError(f"malformed GT token {token!r}")
    if any(a is None for a in alleles):
        return None, phased, tuple(alleles)
    return sum(1 for a in alleles if a and a > 0), phased, tuple(alleles)


def parse_vcf_genotypes(source, wanted: Iterable[WantedKey]) -> VcfExtract:
    """Extract GT calls for ``wanted`` variants from a single-sample VCF.

    ``wanted`` entries are rsids or (chrom, pos) pairs; rsid matches take
    precedence.  File-level problems raise; per-variant problems (multi-
    allelic site, malformed GT) are recorded in the result's ``errors``.
    """
    lines = list(_open_text(source))
    if not lines or not lines[0].startswith("##fileformat=VCF"):
        raise NotVcf("input does not start with a ##fileformat=VCF meta-line")

    wanted_rsids = {w for w in wanted if isinstance(w, str)}
    wanted_pos = {(str(c), int(p)) for c, p in (w for w in wanted if not isinstance(w, str))}

    result = VcfExtract()
    header_seen = False
    for line in lines:
        line = line.rstrip("\n")
        if line.startswith("##") or not line.strip():
            continue
        if line.startswith("#CHROM"):
            columns = line.split("\t")
            if len(columns) < 10:
                raise NoSampleColumn("VCF has no sample column")
            if len(columns) > 10:
                raise MultiSampleUnsupported(
                    f"only single-sample VCFs are supported ({len(columns) - 9} samples found)"
                )
            header_seen = True
            continue

        fields = line.split("\t")
        if len(fields) < 10:
            continue
        chrom, pos_s, rsid, ref, alt = fields[0], fields[1], fields[2], fields[3], fields[4]
        key_hit = rsid in wanted_rsids or (chrom, int(pos_s)) in wanted_pos
        if not key_hit:
            continue
        name = rsid if rsid != "." else f"{chrom}:{pos_s}"

        if "," in alt:
            result.errors[name] = f"multi-allelic site (alt={alt})"
            continue
        format_keys = fields[8].split(":")
        if "GT" not in format_keys:
            result.errors[name] = "no GT field in FORMAT"
            continue
        sample_values = fields[9].split(":")
        gt_index = format_keys.index("GT")
        if gt_index >= len(sample_values):
            result.errors[name] = "sample column shorter than FORMAT"
            continue
        try:
            dosage, phased, alleles = _parse_gt(sample_values[gt_index])
        except ValueError as exc:
            result.errors[name] = str(exc)
            continue
        result.calls[name] = GenotypeCall(
            rsid=name,
            chrom=chrom,
            pos=int(pos_s),
            ref_allele=ref,
            alt_allele=alt,
            dosage=dosage,
            phased=phased,
            alleles=alleles,
        )

    if not header_seen:
        raise NoSampleColumn("VCF has no #CHROM header line")
    return result


# APOE epsilon alleles over the (rs429358, rs7412) haplotype:
#   e2 = (T, T)   e3 = (T, C)   e4 = (C, C);  (C, T) is outside the table.
# rs429358: ref=T alt=C, so its alt dosage counts C (epsilon-4) haplotypes;
# rs7412:   ref=C alt=T, so its alt dosage counts T (epsilon-2) haplotypes.
RS429358 = "rs429358"
RS7412 = "rs7412"

_UNPHASED_TABLE = {
    (0, 0): "3/3",
    (0, 1): "2/3",
    (0, 2): "2/2",
    (1, 0): "3/4",
    (2, 0): "4/4",
}


def infer_apoe_genotype(
    rs429358: GenotypeCall, rs7412: GenotypeCall
) -> tuple[str, bool]:
    """Derive the diploid APOE genotype ("x/y", sorted ascending) from the
    two defining SNP calls.

    Returns (genotype, ambiguity).  The unphased double-heterozygote is
    reported as "2/4" with ambiguity=True: without phase, e2/e4 cannot be
    told apart from the rare e1/e3 recombinant, and we never silently guess
    phase.  Dosage combinations that force a (C, T) haplotype raise
    :class:`InconsistentAlleles`.
    """
    for call, expected in ((rs429358, ("T", "C")), (rs7412, ("C", "T"))):
        if call.dosage is None:
            raise MissingCall(f"{call.rsid}: genotype call is missing")
        if (call.ref_allele.upper(), call.alt_allele.upper()) != expected:
            raise InconsistentAlleles(
                f"{call.rsid}: expected ref/alt {expected[0]}/{expected[1]}, "
                f"got {call.ref_allele}/{call.alt_allele}"
            )

    d1, d2 = rs429358.dosage, rs7412.dosage

    if (d1, d2) == (1, 1):
        if rs429358.phased and rs7412.phased and len(rs429358.alleles) == 2:
            haplotypes = list(zip(rs429358.alleles, rs7412.alleles))
            epsilons = []
            for a1, a2 in haplotypes:
                base1 = "C" if a1 else "T"
                base2 = "T" if a2 else "C"
                if (base1, base2) == ("T", "T"):
                    epsilons.append(2)
                elif (base1, base2) == ("T", "C"):
                    epsilons.append(3)
                elif (base1, base2) == ("C", "C"):
                    epsilons.append(4)
                else:
                    raise InconsistentAlleles(
                        "phased haplotype carries C at rs429358 with T at rs7412"
                    )
            lo, hi = sorted(epsilons)
            return f"{lo}/{hi}", False
        return "2/4", True

    try:
        return _UNPHASED_TABLE[(d1, d2)], False
    except KeyError:
        raise InconsistentAlleles(
            f"dosage pair rs429358={d1}, rs7412={d2} forces a haplotype "
            "outside the epsilon allele table"
        ) from None


def sniff_vcf(data: bytes) -> bool:
    """Cheap format check for uploads: gzip-aware ##fileformat test."""
    head = bytes(data[:2048])
    if head[:2] == b"\x1f\x8b":
        try:
            head = gzip.decompress(data)[:2048]
        except (OSError, EOFError):
            return False
    return head.startswith(b"##fileformat=VCF")
