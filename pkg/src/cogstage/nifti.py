"""Minimal NIfTI-1 header reader for MRI upload validation.

Reads only the 348-byte header (standard field offsets, endianness
auto-detected from ``sizeof_hdr``), never the voxel data.  Gzip-compressed
streams (``.nii.gz``) are decoded transparently.  The point is to reject
uploads that cannot be a preprocessed 3D T1 volume: 2D scans, 4D time
series, and files that are not NIfTI at all.
"""

from __future__ import annotations

import gzip
import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Union

from .domain import ValidationReport

HEADER_SIZE = 348
MAGIC_SINGLE = b"n+1\x00"
MAGIC_PAIR = b"ni1\x00"

# Shape of the MNI152 template a registered scan must match.
MNI152_DIMS = (182, 218, 182)


class NiftiError(ValueError):
    """Base for NIfTI parsing failures."""


class TruncatedInput(NiftiError):
    pass


class BadHeaderSize(NiftiError):
    pass


class BadMagic(NiftiError):
    pass


@dataclass(frozen=True)
class NiftiHeader:
    sizeof_hdr: int
    ndim: int
    dims: tuple[int, int, int, int]  # (nx, ny, nz, nt)
    datatype_code: int
    voxel_sizes: tuple[float, float, float]  # mm
    magic: bytes
    endianness: str  # "little" | "big"

    @property
    def spatial_dims(self) -> tuple[int, int, int]:
        return self.dims[:3]


def _read_header_bytes(source: Union[bytes, BinaryIO]) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    else:
        raw = source.read(HEADER_SIZE + 16)
    if raw[:2] == b"\x1f\x8b":  # gzip magic
        try:
            with gzip.GzipFile(fileobj=io.BytesIO(raw)) as gz:
                raw = gz.read(HEADER_SIZE + 16)
        except (OSError, EOFError) as exc:
            raise TruncatedInput(f"gzip stream could not be decoded: {exc}") from exc
    if len(raw) < HEADER_SIZE:
        raise TruncatedInput(
            f"need at least {HEADER_SIZE} header bytes, got {len(raw)}"
        )
    return raw[:HEADER_SIZE]


def parse_nifti_header(source: Union[bytes, BinaryIO]) -> NiftiHeader:
    """Parse a NIfTI-1 header from raw bytes, a stream, or a gzip thereof.

    Raises :class:`TruncatedInput`, :class:`BadHeaderSize` or
    :class:`BadMagic`; never reads past the header block.
    """
    raw = _read_header_bytes(source)

    endianness = None
    for candidate, prefix in (("little", "<"), ("big", ">")):
        (size,) = struct.unpack_from(prefix + "i", raw, 0)
        if size == HEADER_SIZE:
            endianness = candidate
            break
    if endianness is None:
        raise BadHeaderSize(
            "sizeof_hdr is not 348 in either byte order; not a NIfTI-1 header"
        )

    magic = raw[344:348]
    if magic not in (MAGIC_SINGLE, MAGIC_PAIR):
        raise BadMagic(f"unrecognized magic {magic!r}")

    prefix = "<" if endianness == "little" else ">"
    dim = struct.unpack_from(prefix + "8h", raw, 40)
    (datatype_code,) = struct.unpack_from(prefix + "h", raw, 70)
    pixdim = struct.unpack_from(prefix + "8f", raw, 76)

    ndim = dim[0]
    if not (1 <= ndim <= 7):
        raise BadHeaderSize(f"dim[0] (ndim) must be 1..7, got {ndim}")

    def axis(i: int, default: int = 1) -> int:
        return dim[i] if i <= ndim and dim[i] > 0 else default

    dims = (axis(1), axis(2), axis(3), axis(4))
    voxel_sizes = (float(pixdim[1]), float(pixdim[2]), float(pixdim[3]))

    return NiftiHeader(
        sizeof_hdr=HEADER_SIZE,
        ndim=ndim,
        dims=dims,
        datatype_code=datatype_code,
        voxel_sizes=voxel_sizes,
        magic=magic,
        endianness=endianness,
    )


def parse_nifti_file(path: str) -> NiftiHeader:
    with open(path, "rb") as fh:
        return parse_nifti_header(fh)


def validate_preprocessed_mri(header: NiftiHeader) -> ValidationReport:
    """Check that a parsed header plausibly belongs to a preprocessed 3D scan.

    Calibration/localizer-style acquisitions surface as 2D scans (a spatial
    dimension of 1) or as sub-3D headers; time series surface as nt > 1.
    A shape other than the MNI152 template's is only an informational note,
    since unregistered scans are still valid inputs for header-level checks.
    """
    violations: list[str] = []
    notes: list[str] = []

    if header.ndim < 3:
        violations.append(f"not a 3D volume (ndim={header.ndim})")
    if any(d == 1 for d in header.spatial_dims):
        violations.append(f"2D scan excluded (dims={header.spatial_dims})")
    if header.dims[3] > 1:
        violations.append(f"4D time series excluded (nt={header.dims[3]})")
    if header.spatial_dims != MNI152_DIMS:
        notes.append(
            f"dims {header.spatial_dims} differ from the MNI152 template "
            f"{MNI152_DIMS}; scan may not be registered"
        )

    return ValidationReport(violations=tuple(violations), notes=tuple(notes))


def build_nifti_header_bytes(
    dims: tuple[int, ...],
    voxel_sizes: tuple[float, float, float] = (1.0, 1.0, 1.0),
    datatype_code: int = 16,
    endianness: str = "little",
    magic: bytes = MAGIC_SINGLE,
) -> bytes:
    """Assemble a minimal valid NIfTI-1 header (used for fixtures and the stub
    predictor's outputs)."""
    prefix = "<" if endianness == "little" else ">"
    raw = bytearray(HEADER_SIZE)
    struct.pack_into(prefix + "i", raw, 0, HEADER_SIZE)
    dim = [len(dims)] + list(dims) + [1] * (7 - len(dims))
    struct.pack_into(prefix + "8h", raw, 40, *dim)
    struct.pack_into(prefix + "h", raw, 70, datatype_code)
    struct.pack_into(prefix + "h", raw, 72, 32)  # bitpix
    pixdim = [1.0] + list(voxel_sizes) + [1.0] * 4
    struct.pack_into(prefix + "8f", raw, 76, *pixdim)
    struct.pack_into(prefix + "f", raw, 108, 352.0)  # vox_offset
    raw[344:348] = magic
    return bytes(raw)
