"""Shared fixtures: synthetic NIfTI headers, VCF text, records, engines.

Also hosts the acceptance reporter: after a run that included
test_acceptance.py, one PASS/FAIL line is printed per criterion.
"""

from __future__ import annotations

import gzip
import json

import pytest

_acceptance_results: dict[str, bool] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py" not in str(report.nodeid):
        return
    name = report.nodeid.split("::")[-1]
    _acceptance_results[name] = report.passed


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    import test_acceptance

    for name in sorted(_acceptance_results):
        passed = _acceptance_results[name]
        doc = (getattr(test_acceptance, name).__doc__ or "").strip().splitlines()[0]
        number = name.split("_")[1].lstrip("c")
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status} - {doc}")

from cogstage.domain import PatientRecord, Sex
from cogstage.nifti import build_nifti_header_bytes
from cogstage.tools.imaging import write_volume_sidecar

MNI_DIMS = (182, 218, 182)


@pytest.fixture
def mni_header_bytes() -> bytes:
    return build_nifti_header_bytes(MNI_DIMS)


@pytest.fixture
def mni_scan(tmp_path):
    """A header-only .nii fixture with a full volume sidecar next to it."""
    path = tmp_path / "scan.nii"
    path.write_bytes(build_nifti_header_bytes(MNI_DIMS))
    write_volume_sidecar(str(path), {
        "left": 3.1, "right": 3.0,
        "total_brain": 1150.0, "icv": 1450.0,
        "total_gm": 610.0, "total_wm": 480.0,
    })
    return str(path)


@pytest.fixture
def mni_scan_gz(tmp_path):
    path = tmp_path / "scan.nii.gz"
    path.write_bytes(gzip.compress(build_nifti_header_bytes(MNI_DIMS)))
    write_volume_sidecar(str(path), {
        "left": 2.9, "right": 2.9,
        "total_brain": 1100.0, "icv": 1430.0,
        "total_gm": 590.0, "total_wm": 460.0,
    })
    return str(path)


VCF_BODY = """##fileformat=VCFv4.2
##source=unit-fixture
#CHROM\tPOS\tID\tREF\tALT\tQUAL\tFILTER\tINFO\tFORMAT\tSAMPLE1
19\t44908684\trs429358\tT\tC\t.\tPASS\t.\tGT\t0/1
19\t44908822\trs7412\tC\tT\t.\tPASS\t.\tGT\t0/0
8\t27607002\trs11136000\tC\tT\t.\tPASS\t.\tGT\t1|1
11\t85868640\trs3851179\tA\tG\t.\tPASS\t.\tGT\t./.
"""


@pytest.fixture
def vcf_text() -> str:
    return VCF_BODY


@pytest.fixture
def vcf_file(tmp_path):
    path = tmp_path / "sample.vcf"
    path.write_text(VCF_BODY)
    return str(path)


@pytest.fixture
def full_record(mni_scan, vcf_file) -> PatientRecord:
    return PatientRecord(
        case_id="case-full",
        age=71.0,
        sex=Sex.FEMALE,
        education=16.0,
        cdr=0.5,
        mmse=25,
        moca=22,
        faq=8,
        apoe_genotype="3/4",
        mri_ref=mni_scan,
        vcf_ref=vcf_file,
    )


@pytest.fixture
def text_only_record() -> PatientRecord:
    return PatientRecord(case_id="case-text", age=70.0, cdr=0.0, mmse=29)


def record_json(record: PatientRecord) -> str:
    return json.dumps(record.to_json_dict())
