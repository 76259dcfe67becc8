"""Minimal DICOM CT reader and writer.

Parses Part-10 files with explicit- or implicit-VR little-endian transfer
syntax, uncompressed pixels, one slice per file.  Only the tags the
pipeline needs are interpreted; everything else is skipped by length.
The writer emits the same subset and exists for fixtures and the synthetic
phantom exporter, not as a general DICOM implementation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (BadParam, DuplicateLocation, InconsistentGeometry,
                     MissingMagic, MissingTag, NonUniformSpacing, ParseError,
                     TruncatedFile, UnsupportedTransferSyntax)
from .image import HU, ImageBuffer

EXPLICIT_VR_LE = "1.2.840.10008.1.2.1"
IMPLICIT_VR_LE = "1.2.840.10008.1.2"

TAG_TRANSFER_SYNTAX = (0x0002, 0x0010)
TAG_SLICE_THICKNESS = (0x0018, 0x0050)
TAG_IMAGE_POSITION = (0x0020, 0x0032)
TAG_SLICE_LOCATION = (0x0020, 0x1041)
TAG_ROWS = (0x0028, 0x0010)
TAG_COLS = (0x0028, 0x0011)
TAG_PIXEL_SPACING = (0x0028, 0x0030)
TAG_BITS_ALLOCATED = (0x0028, 0x0100)
TAG_BITS_STORED = (0x0028, 0x0101)
TAG_PIXEL_REPRESENTATION = (0x0028, 0x0103)
TAG_RESCALE_INTERCEPT = (0x0028, 0x1052)
TAG_RESCALE_SLOPE = (0x0028, 0x1053)
TAG_PIXEL_DATA = (0x7FE0, 0x0010)

_REQUIRED = {
    TAG_ROWS: "Rows",
    TAG_COLS: "Columns",
    TAG_PIXEL_SPACING: "PixelSpacing",
    TAG_IMAGE_POSITION: "ImagePositionPatient",
    TAG_BITS_STORED: "BitsStored",
    TAG_PIXEL_REPRESENTATION: "PixelRepresentation",
    TAG_PIXEL_DATA: "PixelData",
}

# VRs that use the 4-byte length form in explicit encoding
_LONG_VRS = {b"OB", b"OW", b"OF", b"OD", b"OL", b"SQ", b"UC", b"UR", b"UT", b"UN"}


@dataclass(frozen=True)
class DicomElement:
    tag: tuple[int, int]
    vr: str
    value: bytes


@dataclass(frozen=True)
class SliceMeta:
    rows: int
    cols: int
    pixel_spacing: tuple[float, float]  # (row_mm, col_mm)
    slice_location: float
    image_position: tuple[float, float, float]
    rescale_slope: float = 1.0
    rescale_intercept: float = 0.0
    bits_stored: int = 16
    pixel_representation: int = 1
    rescale_defaulted: bool = False  # slope/intercept were absent in the file
    slice_thickness: float | None = None

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ParseError(f"bad image dims {self.rows}x{self.cols}")
        if self.pixel_spacing[0] <= 0 or self.pixel_spacing[1] <= 0:
            raise ParseError(f"bad pixel spacing {self.pixel_spacing}")
        if self.bits_stored not in (8, 12, 16):
            raise ParseError(f"bits stored must be 8, 12 or 16, got {self.bits_stored}")


@dataclass(frozen=True)
class CtVolume:
    slices: tuple[tuple[SliceMeta, ImageBuffer], ...]
    slice_thickness: float

    @property
    def rows(self) -> int:
        return self.slices[0][0].rows

    @property
    def cols(self) -> int:
        return self.slices[0][0].cols

    @property
    def pixel_spacing(self) -> tuple[float, float]:
        return self.slices[0][0].pixel_spacing

    def __len__(self) -> int:
        return len(self.slices)

    def slice_image(self, i: int) -> ImageBuffer:
        return self.slices[i][1]

    def digest(self) -> str:
        import hashlib
        h = hashlib.blake2b(digest_size=16)
        for meta, img in self.slices:
            h.update(repr((meta.rows, meta.cols, meta.pixel_spacing,
                           meta.image_position)).encode())
            h.update(img.digest().encode())
        return h.hexdigest()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise TruncatedFile(
                f"needed {n} bytes at offset {self.off}, file has {len(self.data)}")
        chunk = self.data[self.off:self.off + n]
        self.off += n
        return chunk

    def peek_u16(self) -> int | None:
        if self.off + 2 > len(self.data):
            return None
        return struct.unpack_from("<H", self.data, self.off)[0]

    def eof(self) -> bool:
        return self.off >= len(self.data)


def _read_element(r: _Reader, explicit: bool) -> DicomElement:
    group, elem = struct.unpack("<HH", r.take(4))
    if explicit:
        vr = r.take(2)
        if vr in _LONG_VRS:
            r.take(2)
            (length,) = struct.unpack("<I", r.take(4))
        elif vr.isalpha() and vr.isupper():
            (length,) = struct.unpack("<H", r.take(2))
        else:
            # not a plausible VR; salvage as a 2-byte length so fuzzed input
            # fails with a named error instead of crashing
            (length,) = struct.unpack("<H", r.take(2))
        vr_str = vr.decode("ascii", errors="replace")
    else:
        (length,) = struct.unpack("<I", r.take(4))
        vr_str = "UN"
    value = r.take(length)
    return DicomElement(tag=(group, elem), vr=vr_str, value=value)


def _decode_ds(value: bytes) -> list[float]:
    text = value.decode("ascii", errors="replace").strip("\x00 ")
    if not text:
        raise ParseError("empty decimal string")
    try:
        return [float(part) for part in text.split("\\")]
    except ValueError as exc:
        raise ParseError(f"bad decimal string {text!r}") from exc


def _decode_us(value: bytes) -> int:
    if len(value) < 2:
        raise TruncatedFile("US value shorter than 2 bytes")
    return struct.unpack_from("<H", value, 0)[0]


def parse_dicom_file(data: bytes) -> tuple[SliceMeta, ImageBuffer]:
    """Parse one CT slice; returns metadata and the raw (unrescaled) pixels.

    The pixel buffer holds raw stored values as floats; apply ``raw_to_hu``
    (or use ``assemble_series``) to calibrate.
    """
    if len(data) < 132 or data[128:132] != b"DICM":
        raise MissingMagic("no DICM marker at offset 128")
    r = _Reader(data)
    r.off = 132
    # file meta group (0002,xxxx) is always explicit VR
    transfer_syntax = None
    while not r.eof() and r.peek_u16() == 0x0002:
        el = _read_element(r, explicit=True)
        if el.tag == TAG_TRANSFER_SYNTAX:
            transfer_syntax = el.value.decode("ascii", errors="replace").strip("\x00 ")
    if transfer_syntax is None:
        raise MissingTag("transfer syntax (0002,0010) absent")
    if transfer_syntax == EXPLICIT_VR_LE:
        explicit = True
    elif transfer_syntax == IMPLICIT_VR_LE:
        explicit = False
    else:
        raise UnsupportedTransferSyntax(
            f"transfer syntax {transfer_syntax!r} not supported "
            "(only uncompressed little-endian)")
    found: dict[tuple[int, int], DicomElement] = {}
    while not r.eof():
        el = _read_element(r, explicit)
        found[el.tag] = el
        if el.tag == TAG_PIXEL_DATA:
            break
    for tag, name in _REQUIRED.items():
        if tag == TAG_RESCALE_SLOPE or tag == TAG_RESCALE_INTERCEPT:
            continue
        if tag not in found:
            raise MissingTag(f"{name} ({tag[0]:04X},{tag[1]:04X}) absent")
    rows = _decode_us(found[TAG_ROWS].value)
    cols = _decode_us(found[TAG_COLS].value)
    spacing = _decode_ds(found[TAG_PIXEL_SPACING].value)
    if len(spacing) != 2:
        raise ParseError("PixelSpacing must have two values")
    position = _decode_ds(found[TAG_IMAGE_POSITION].value)
    if len(position) != 3:
        raise ParseError("ImagePositionPatient must have three values")
    rescale_defaulted = False
    if TAG_RESCALE_SLOPE in found and TAG_RESCALE_INTERCEPT in found:
        slope = _decode_ds(found[TAG_RESCALE_SLOPE].value)[0]
        intercept = _decode_ds(found[TAG_RESCALE_INTERCEPT].value)[0]
    else:
        slope, intercept = 1.0, 0.0
        rescale_defaulted = True
    bits_stored = _decode_us(found[TAG_BITS_STORED].value)
    pixel_rep = _decode_us(found[TAG_PIXEL_REPRESENTATION].value)
    bits_alloc = (_decode_us(found[TAG_BITS_ALLOCATED].value)
                  if TAG_BITS_ALLOCATED in found else (8 if bits_stored == 8 else 16))
    if bits_alloc not in (8, 16):
        raise ParseError(f"bits allocated must be 8 or 16, got {bits_alloc}")
    slice_location = (_decode_ds(found[TAG_SLICE_LOCATION].value)[0]
                      if TAG_SLICE_LOCATION in found else position[2])
    thickness = (_decode_ds(found[TAG_SLICE_THICKNESS].value)[0]
                 if TAG_SLICE_THICKNESS in found else None)
    meta = SliceMeta(rows=rows, cols=cols,
                     pixel_spacing=(spacing[0], spacing[1]),
                     slice_location=slice_location,
                     image_position=(position[0], position[1], position[2]),
                     rescale_slope=slope, rescale_intercept=intercept,
                     bits_stored=bits_stored, pixel_representation=pixel_rep,
                     rescale_defaulted=rescale_defaulted,
                     slice_thickness=thickness)
    pixel_bytes = found[TAG_PIXEL_DATA].value
    sample_size = bits_alloc // 8
    needed = rows * cols * sample_size
    if len(pixel_bytes) < needed:
        raise TruncatedFile(
            f"pixel data has {len(pixel_bytes)} bytes, need {needed}")
    dtype = {(8, 0): "u1", (8, 1): "i1",
             (16, 0): "<u2", (16, 1): "<i2"}[(bits_alloc, 1 if pixel_rep else 0)]
    raw = np.frombuffer(pixel_bytes[:needed], dtype=dtype).reshape(rows, cols)
    return meta, ImageBuffer(raw.astype(np.float32), HU)


def parse_dicom_path(path: str | Path) -> tuple[SliceMeta, ImageBuffer]:
    return parse_dicom_file(Path(path).read_bytes())


def raw_to_hu(raw, slope: float, intercept: float):
    """Affine CT calibration: slope * raw + intercept."""
    if isinstance(raw, np.ndarray):
        return raw.astype(np.float64) * slope + intercept
    return slope * raw + intercept


def assemble_series(parsed: list[tuple[SliceMeta, ImageBuffer]]) -> CtVolume:
    """Sort parsed slices by z, calibrate to HU, validate geometry."""
    if len(parsed) < 2:
        raise BadParam("a series needs at least 2 slices")
    first = parsed[0][0]
    for meta, _ in parsed[1:]:
        if (meta.rows, meta.cols) != (first.rows, first.cols) \
                or meta.pixel_spacing != first.pixel_spacing:
            raise InconsistentGeometry(
                f"slice geometry {meta.rows}x{meta.cols}@{meta.pixel_spacing} "
                f"differs from {first.rows}x{first.cols}@{first.pixel_spacing}")
    ordered = sorted(parsed, key=lambda p: p[0].image_position[2])
    zs = [m.image_position[2] for m, _ in ordered]
    for a, b in zip(zs, zs[1:]):
        if abs(b - a) < 1e-6:
            raise DuplicateLocation(f"two slices at z={a}")
    gaps = np.diff(zs)
    median_gap = float(np.median(gaps))
    if np.any(np.abs(gaps - median_gap) > 0.01 * abs(median_gap)):
        raise NonUniformSpacing(
            f"z-gaps {sorted(set(np.round(gaps, 6)))} deviate more than 1%")
    calibrated = []
    for meta, raw in ordered:
        hu = raw_to_hu(np.asarray(raw.data), meta.rescale_slope,
                       meta.rescale_intercept).astype(np.float32)
        calibrated.append((meta, ImageBuffer(hu, HU)))
    thickness = first.slice_thickness if first.slice_thickness else median_gap
    return CtVolume(slices=tuple(calibrated), slice_thickness=float(thickness))


def read_series_dir(directory: str | Path) -> CtVolume:
    """Parse every file in a directory as a DICOM slice and assemble."""
    paths = sorted(p for p in Path(directory).iterdir() if p.is_file())
    if not paths:
        raise BadParam(f"no files in {directory}")
    return assemble_series([parse_dicom_path(p) for p in paths])


# --- reference writer ---

def _fmt_ds(*values: float) -> bytes:
    parts = []
    for v in values:
        text = repr(float(v))
        if text.endswith(".0"):
            text = text[:-2]
        parts.append(text)
    return "\\".join(parts).encode("ascii")


def _pad_even(value: bytes, pad: bytes = b" ") -> bytes:
    return value + pad if len(value) % 2 else value


def _element_bytes(tag: tuple[int, int], vr: bytes, value: bytes,
                   explicit: bool) -> bytes:
    value = _pad_even(value, b"\x00" if vr in (b"UI", b"OB", b"OW") else b" ")
    head = struct.pack("<HH", tag[0], tag[1])
    if explicit:
        if vr in _LONG_VRS:
            return head + vr + b"\x00\x00" + struct.pack("<I", len(value)) + value
        return head + vr + struct.pack("<H", len(value)) + value
    return head + struct.pack("<I", len(value)) + value


def write_ct_slice(meta: SliceMeta, raw_pixels: np.ndarray,
                   explicit: bool = True,
                   transfer_syntax: str | None = None) -> bytes:
    """Serialize one CT slice in the supported subset.

    meta.rescale_defaulted=True omits the rescale tags, reproducing
    scanners that leave them out.
    """
    if transfer_syntax is None:
        transfer_syntax = EXPLICIT_VR_LE if explicit else IMPLICIT_VR_LE
    bits_alloc = 8 if meta.bits_stored == 8 else 16
    dtype = {(8, 0): "u1", (8, 1): "i1",
             (16, 0): "<u2", (16, 1): "<i2"}[(bits_alloc, 1 if meta.pixel_representation else 0)]
    pixels = np.ascontiguousarray(raw_pixels, dtype=dtype)
    if pixels.shape != (meta.rows, meta.cols):
        raise BadParam(f"pixel array {pixels.shape} does not match "
                       f"{meta.rows}x{meta.cols}")
    ts_el = _element_bytes(TAG_TRANSFER_SYNTAX, b"UI",
                           transfer_syntax.encode("ascii"), explicit=True)
    meta_group = _element_bytes((0x0002, 0x0000), b"UL",
                                struct.pack("<I", len(ts_el)), explicit=True)
    body: list[bytes] = []

    def put(tag, vr, value):
        body.append(_element_bytes(tag, vr, value, explicit))

    if meta.slice_thickness is not None:
        put(TAG_SLICE_THICKNESS, b"DS", _fmt_ds(meta.slice_thickness))
    put(TAG_IMAGE_POSITION, b"DS", _fmt_ds(*meta.image_position))
    put(TAG_SLICE_LOCATION, b"DS", _fmt_ds(meta.slice_location))
    put(TAG_ROWS, b"US", struct.pack("<H", meta.rows))
    put(TAG_COLS, b"US", struct.pack("<H", meta.cols))
    put(TAG_PIXEL_SPACING, b"DS", _fmt_ds(*meta.pixel_spacing))
    put(TAG_BITS_ALLOCATED, b"US", struct.pack("<H", bits_alloc))
    put(TAG_BITS_STORED, b"US", struct.pack("<H", meta.bits_stored))
    put(TAG_PIXEL_REPRESENTATION, b"US", struct.pack("<H", meta.pixel_representation))
    if not meta.rescale_defaulted:
        put(TAG_RESCALE_INTERCEPT, b"DS", _fmt_ds(meta.rescale_intercept))
        put(TAG_RESCALE_SLOPE, b"DS", _fmt_ds(meta.rescale_slope))
    put(TAG_PIXEL_DATA, b"OW", pixels.tobytes())
    return b"\x00" * 128 + b"DICM" + meta_group + ts_el + b"".join(body)


def hu_to_raw(hu: np.ndarray, slope: float, intercept: float) -> np.ndarray:
    """Inverse calibration used when exporting synthetic volumes."""
    return np.round((np.asarray(hu, dtype=np.float64) - intercept) / slope)
