"""Binary dataset and checkpoint files, plus binary PGM images.

Dataset file (all integers little-endian)::

    header   "DIMK" | u32 version | u8 endian tag (1 = little) | u32 n_records | u32 crc32(header)
    record   u32 nx | u32 ny | u32 nt | u8 split (0 train, 1 test) | u32 acs | f64 accel
             | f64 noise_std | u64 noise_seed | mask bits (np.packbits of ny*nt, row-major)
             | image f64[nx*ny*nt*2] | kspace f64[nx*ny*nt*2] | u32 crc32(record)

Complex samples are interleaved ``(re, im)`` in row-major ``(x, y, t)`` order.

Checkpoint file::

    "DIMC" | u32 version | u8 endian tag | u32 json_len | json metadata
    | u32 n_arrays | per array: u32 ndim, u32 dims..., f64 data | u32 crc32(all preceding bytes)

Arrays are the parameters in declaration order, then Adam first moments, then
second moments.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .sampling import SamplingMask

DATASET_MAGIC = b"DIMK"
CHECKPOINT_MAGIC = b"DIMC"
FORMAT_VERSION = 1
LITTLE = 1

_SPLITS = {"train": 0, "test": 1}
_SPLIT_NAMES = {v: k for k, v in _SPLITS.items()}
_REC_HEAD = struct.Struct("<IIIBIddQ")


class FormatError(ValueError):
    """Bad magic, version, checksum or truncated content."""


def _complex_bytes(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype=np.complex128)
    return a.view(np.float64).astype("<f8", copy=False).tobytes()


def _complex_from(buf: bytes, shape) -> np.ndarray:
    flat = np.frombuffer(buf, dtype="<f8").astype(np.float64)
    return flat.view(np.complex128).reshape(shape).copy()


def _encode_record(rec) -> bytes:
    nx, ny, nt = rec.image.shape
    if rec.kspace.shape != rec.image.shape or rec.mask.lines.shape != (ny, nt):
        raise ValueError("record image, k-space and mask dims disagree")
    body = _REC_HEAD.pack(nx, ny, nt, _SPLITS[rec.split], rec.mask.acs, rec.mask.accel,
                          rec.noise_std, rec.noise_seed)
    body += np.packbits(rec.mask.lines.ravel()).tobytes()
    body += _complex_bytes(rec.image) + _complex_bytes(rec.kspace)
    return body + struct.pack("<I", zlib.crc32(body))


def save_dataset(dataset, path) -> None:
    head = DATASET_MAGIC + struct.pack("<IBI", FORMAT_VERSION, LITTLE, len(dataset.records))
    parts = [head, struct.pack("<I", zlib.crc32(head))]
    parts += [_encode_record(r) for r in dataset.records]
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated file: needed {n} bytes at offset {self.pos}, {len(self.data) - self.pos} left")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def load_dataset(path, validate: bool = True):
    """Read a dataset file; nothing is returned unless every checksum matches."""
    from .phantom import DataRecord, Dataset

    r = _Reader(Path(path).read_bytes())
    head = r.take(4 + 9)
    if head[:4] != DATASET_MAGIC:
        raise FormatError(f"bad magic {head[:4]!r}, expected {DATASET_MAGIC!r}")
    version, endian, count = struct.unpack("<IBI", head[4:])
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    if endian != LITTLE:
        raise FormatError(f"unsupported endianness tag {endian}")
    (crc,) = r.unpack("<I")
    if crc != zlib.crc32(head):
        raise FormatError("header CRC mismatch")

    records = []
    for i in range(count):
        start = r.pos
        nx, ny, nt, split, acs, accel, noise_std, noise_seed = r.unpack(_REC_HEAD.format)
        n_bits = (ny * nt + 7) // 8
        bits = np.frombuffer(r.take(n_bits), dtype=np.uint8)
        nbytes = nx * ny * nt * 16
        image = r.take(nbytes)
        kspace = r.take(nbytes)
        body = r.data[start:r.pos]
        (crc,) = r.unpack("<I")
        if crc != zlib.crc32(body):
            raise FormatError(f"record {i}: CRC mismatch")
        if split not in _SPLIT_NAMES:
            raise FormatError(f"record {i}: unknown split tag {split}")
        lines = np.unpackbits(bits)[: ny * nt].reshape(ny, nt).astype(bool)
        records.append(DataRecord(
            _complex_from(image, (nx, ny, nt)), _complex_from(kspace, (nx, ny, nt)),
            SamplingMask(lines, acs=acs, accel=accel), _SPLIT_NAMES[split], noise_std, noise_seed,
        ))
    if r.pos != len(r.data):
        raise FormatError(f"{len(r.data) - r.pos} trailing bytes after last record")
    dataset = Dataset(records)
    if validate:
        for i, rec in enumerate(records):
            if not rec.is_consistent():
                raise FormatError(f"record {i}: stored k-space does not match image, mask and noise")
    return dataset


def save_checkpoint(path, meta: dict, arrays) -> None:
    blob = json.dumps(meta, sort_keys=True).encode()
    parts = [CHECKPOINT_MAGIC, struct.pack("<IBI", FORMAT_VERSION, LITTLE, len(blob)), blob,
             struct.pack("<I", len(arrays))]
    for a in arrays:
        a = np.asarray(a, dtype=np.float64)
        parts.append(struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape))
        parts.append(np.ascontiguousarray(a).astype("<f8", copy=False).tobytes())
    body = b"".join(parts)
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(body + struct.pack("<I", zlib.crc32(body)))
    tmp.replace(path)


def load_checkpoint(path) -> tuple[dict, list]:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {data[:4]!r}")
    if len(data) < 8:
        raise FormatError("truncated checkpoint")
    (crc,) = struct.unpack("<I", data[-4:])
    if crc != zlib.crc32(data[:-4]):
        raise FormatError("checkpoint CRC mismatch")
    r = _Reader(data[:-4])
    r.take(4)
    version, endian, n_json = r.unpack("<IBI")
    if version != FORMAT_VERSION or endian != LITTLE:
        raise FormatError(f"unsupported checkpoint version {version} / endianness {endian}")
    meta = json.loads(r.take(n_json))
    (count,) = r.unpack("<I")
    arrays = []
    for _ in range(count):
        (ndim,) = r.unpack("<I")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        n = int(np.prod(shape)) if shape else 1
        arrays.append(np.frombuffer(r.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape))
    return meta, arrays


def write_pgm(path, image: np.ndarray) -> None:
    """Binary (P5) 8-bit graymap; rows of ``image`` become image rows."""
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError("PGM export needs a 2D uint8 array")
    h, w = image.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + image.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise FormatError("not a binary PGM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise FormatError("only 8-bit PGM supported")
    return np.frombuffer(data[pos + 1:pos + 1 + w * h], dtype=np.uint8).reshape(h, w).copy()
