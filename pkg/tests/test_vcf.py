import gzip

import pytest

from cogstage.vcf import (
    GenotypeCall,
    InconsistentAlleles,
    MissingCall,
    MultiSampleUnsupported,
    NoSampleColumn,
    NotVcf,
    infer_apoe_genotype,
    parse_vcf_genotypes,
    sniff_vcf,
)


def call(rsid, dosage, phased=False, ref="T", alt="C", alleles=()):
    return GenotypeCall(rsid=rsid, chrom="19", pos=1, ref_allele=ref,
                        alt_allele=alt, dosage=dosage, phased=phased,
                        alleles=alleles)


class TestParseVcf:
    def test_het_dosage(self, vcf_text):
        result = parse_vcf_genotypes(vcf_text, {"rs429358"})
        genotype = result["rs429358"]
        assert genotype.dosage == 1
        assert genotype.phased is False

    def test_missing_call(self, vcf_text):
        result = parse_vcf_genotypes(vcf_text, {"rs3851179"})
        assert result["rs3851179"].dosage is None

    def test_phased_hom_alt(self, vcf_text):
        result = parse_vcf_genotypes(vcf_text, {"rs11136000"})
        genotype = result["rs11136000"]
        assert genotype.dosage == 2
        assert genotype.phased is True

    def test_dosage_equals_alt_count_for_all_gts(self):
        for gt, expected in (("0/0", 0), ("0/1", 1), ("1/0", 1), ("1|1", 2), ("./.", None)):
            text = (
                "##fileformat=VCFv4.2\n"
                "#CHROM\tPOS\tID\tREF\tALT\tQUAL\tFILTER\tINFO\tFORMAT\tS\n"
                f"1\t100\trsX\tA\tG\t.\t.\t.\tGT\t{gt}\n"
            )
            assert parse_vcf_genotypes(text, {"rsX"})["rsX"].dosage == expected

    def test_wanted_by_position(self, vcf_text):
        result = parse_vcf_genotypes(vcf_text, {("19", 44908822)})
        assert result["rs7412"].dosage == 0

    def test_unwanted_skipped(self, vcf_text):
        result = parse_vcf_genotypes(vcf_text, {"rs429358"})
        assert "rs7412" not in result

    def test_multiallelic_recorded_not_raised(self):
        text = (
            "##fileformat=VCFv4.2\n"
            "#CHROM\tPOS\tID\tREF\tALT\tQUAL\tFILTER\tINFO\tFORMAT\tS\n"
            "1\t100\trsM\tA\tG,T\t.\t.\t.\tGT\t0/1\n"
        )
        result = parse_vcf_genotypes(text, {"rsM"})
        assert "rsM" not in result.calls
        assert "multi-allelic" in result.errors["rsM"]

    def test_malformed_gt_recorded(self):
        text = (
            "##fileformat=VCFv4.2\n"
            "#CHROM\tPOS\tID\tREF\tALT\tQUAL\tFILTER\tINFO\tFORMAT\tS\n"
            "1\t100\trsB\tA\tG\t.\t.\t.\tGT\tq/1\n"
        )
        result = parse_vcf_genotypes(text, {"rsB"})
        assert "rsB" in result.errors

    def test_gt_position_in_format(self):
        text = (
            "##fileformat=VCFv4.2\n"
            "#CHROM\tPOS\tID\tREF\tALT\tQUAL\tFILTER\tINFO\tFORMAT\tS\n"
            "1\t100\trsC\tA\tG\t.\t.\t.\tDP:GT\t31:1/1\n"
        )
        assert parse_vcf_genotypes(text, {"rsC"})["rsC"].dosage == 2

    def test_not_vcf(self):
        with pytest.raises(NotVcf):
            parse_vcf_genotypes("hello\nworld\n", {"rs1"})

    def test_no_sample_column(self):
        text = (
            "##fileformat=VCFv4.2\n"
            "#CHROM\tPOS\tID\tREF\tALT\tQUAL\tFILTER\tINFO\n"
        )
        with pytest.raises(NoSampleColumn):
            parse_vcf_genotypes(text, {"rs1"})

    def test_multi_sample_rejected(self):
        text = (
            "##fileformat=VCFv4.2\n"
            "#CHROM\tPOS\tID\tREF\tALT\tQUAL\tFILTER\tINFO\tFORMAT\tS1\tS2\n"
        )
        with pytest.raises(MultiSampleUnsupported):
            parse_vcf_genotypes(text, {"rs1"})

    def test_gzip_bytes(self, vcf_text):
        result = parse_vcf_genotypes(gzip.compress(vcf_text.encode()), {"rs429358"})
        assert result["rs429358"].dosage == 1

    def test_sniff(self, vcf_text):
        assert sniff_vcf(vcf_text.encode())
        assert sniff_vcf(gzip.compress(vcf_text.encode()))
        assert not sniff_vcf(b"#CHROM but no meta")


class TestApoeInference:
    # Haplotype table over (rs429358, rs7412): e2=(T,T), e3=(T,C), e4=(C,C).
    def test_double_ref_is_e3_e3(self):
        genotype, ambiguous = infer_apoe_genotype(
            call("rs429358", 0), call("rs7412", 0, ref="C", alt="T")
        )
        assert (genotype, ambiguous) == ("3/3", False)

    def test_one_e4(self):
        genotype, ambiguous = infer_apoe_genotype(
            call("rs429358", 1), call("rs7412", 0, ref="C", alt="T")
        )
        assert (genotype, ambiguous) == ("3/4", False)

    def test_homozygous_e4(self):
        genotype, _ = infer_apoe_genotype(
            call("rs429358", 2), call("rs7412", 0, ref="C", alt="T")
        )
        assert genotype == "4/4"

    def test_e2_carriers(self):
        genotype, _ = infer_apoe_genotype(
            call("rs429358", 0), call("rs7412", 1, ref="C", alt="T")
        )
        assert genotype == "2/3"
        genotype, _ = infer_apoe_genotype(
            call("rs429358", 0), call("rs7412", 2, ref="C", alt="T")
        )
        assert genotype == "2/2"

    def test_unphased_double_het_ambiguous(self):
        genotype, ambiguous = infer_apoe_genotype(
            call("rs429358", 1), call("rs7412", 1, ref="C", alt="T")
        )
        assert (genotype, ambiguous) == ("2/4", True)

    def test_phased_double_het_resolves(self):
        genotype, ambiguous = infer_apoe_genotype(
            call("rs429358", 1, phased=True, alleles=(0, 1)),
            call("rs7412", 1, phased=True, alleles=(1, 0), ref="C", alt="T"),
        )
        assert (genotype, ambiguous) == ("2/4", False)

    def test_phased_cis_het_inconsistent(self):
        with pytest.raises(InconsistentAlleles):
            infer_apoe_genotype(
                call("rs429358", 1, phased=True, alleles=(1, 0)),
                call("rs7412", 1, phased=True, alleles=(1, 0), ref="C", alt="T"),
            )

    def test_forced_e1_raises(self):
        with pytest.raises(InconsistentAlleles):
            infer_apoe_genotype(
                call("rs429358", 2), call("rs7412", 1, ref="C", alt="T")
            )

    def test_missing_call(self):
        with pytest.raises(MissingCall):
            infer_apoe_genotype(
                call("rs429358", None), call("rs7412", 0, ref="C", alt="T")
            )

    def test_output_is_order_normalized(self):
        from cogstage.domain import APOE_PATTERN
        for d1, d2 in ((0, 0), (0, 1), (0, 2), (1, 0), (2, 0)):
            genotype, _ = infer_apoe_genotype(
                call("rs429358", d1), call("rs7412", d2, ref="C", alt="T")
            )
            assert APOE_PATTERN.match(genotype)
            lo, hi = genotype.split("/")
            assert int(lo) <= int(hi)
