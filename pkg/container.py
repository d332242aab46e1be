"""
Versioned binary container shared by dataset (``NVDS``) and model (``NVEC``) files.

Layout (all integers little-endian)::

    magic        4 bytes
    version      u32
    header_len   u64
    header       canonical JSON (sorted keys, compact separators), UTF-8
    payload_len  u64
    payload      float64 little-endian tensors, in the order listed in header["tensors"]
    checksum     u64 BLAKE2b-64 of every preceding byte

The JSON header is canonical so that identical content gives identical bytes.
"""

import hashlib
import json
import logging
import os
import struct
from pathlib import Path
from typing import Any

import numpy as np

from errors import BadMagic, ChecksumMismatch, FormatVersionMismatch, MalformedFile, TruncatedFile

logger = logging.getLogger(__name__)

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


def checksum64(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def file_digest(path: str | os.PathLike) -> str:
    """Hex BLAKE2b digest of a whole file (used for manifest input/output checksums)."""
    h = hashlib.blake2b(digest_size=16)
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def peek_magic(path: str | os.PathLike) -> bytes:
    with open(path, "rb") as f:
        return f.read(4)


def write_container(
    path: str | os.PathLike,
    magic: bytes,
    version: int,
    header: dict[str, Any],
    tensors: list[tuple[str, np.ndarray]],
) -> int:
    """Write a container file; returns its 64-bit checksum."""
    header = dict(header)
    header["tensors"] = [{"name": name, "shape": list(np.shape(arr))} for name, arr in tensors]
    header_bytes = canonical_json(header).encode("utf-8")
    payload = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in tensors
    )
    body = b"".join([
        magic,
        _U32.pack(version),
        _U64.pack(len(header_bytes)),
        header_bytes,
        _U64.pack(len(payload)),
        payload,
    ])
    digest = checksum64(body)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(body)
        f.write(_U64.pack(digest))
    os.replace(tmp, path)
    logger.debug("Wrote %s (%d bytes, checksum %016x)", path, len(body) + 8, digest)
    return digest


def read_container(
    path: str | os.PathLike,
    magic: bytes,
    version: int,
) -> tuple[dict[str, Any], dict[str, np.ndarray], int]:
    """
    Read and verify a container file.

    Returns ``(header, tensors, checksum)``.  Raises :class:`BadMagic`,
    :class:`FormatVersionMismatch`, :class:`TruncatedFile`,
    :class:`MalformedFile` or :class:`ChecksumMismatch`.
    """
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise TruncatedFile(f"{path}: {len(data)} bytes, too short for a header")
    if data[:4] != magic:
        raise BadMagic(f"{path}: expected magic {magic!r}, found {data[:4]!r}")

    pos = 4
    if len(data) < pos + _U32.size:
        raise TruncatedFile(f"{path}: missing format version")
    (file_version,) = _U32.unpack_from(data, pos)
    pos += _U32.size
    if file_version != version:
        raise FormatVersionMismatch(
            f"{path}: file format version {file_version}, this build reads version {version}"
        )

    if len(data) < pos + _U64.size:
        raise TruncatedFile(f"{path}: missing header length")
    (header_len,) = _U64.unpack_from(data, pos)
    pos += _U64.size
    header_end = pos + header_len
    if len(data) < header_end + _U64.size:
        raise TruncatedFile(f"{path}: header truncated")
    header_bytes = data[pos:header_end]
    (payload_len,) = _U64.unpack_from(data, header_end)
    payload_start = header_end + _U64.size
    payload_end = payload_start + payload_len
    if len(data) < payload_end + _U64.size:
        raise TruncatedFile(
            f"{path}: expected {payload_end + _U64.size} bytes, found {len(data)}"
        )
    if len(data) > payload_end + _U64.size:
        raise MalformedFile(f"{path}: {len(data) - payload_end - _U64.size} trailing bytes after the checksum")

    (stored,) = _U64.unpack_from(data, payload_end)
    computed = checksum64(data[:payload_end])
    if stored != computed:
        raise ChecksumMismatch(f"{path}: stored checksum {stored:016x}, computed {computed:016x}")

    header = json.loads(header_bytes.decode("utf-8"))
    tensors: dict[str, np.ndarray] = {}
    offset = payload_start
    for entry in header.get("tensors", []):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if offset + nbytes > payload_end:
            raise TruncatedFile(f"{path}: tensor {entry['name']!r} runs past the payload")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        tensors[entry["name"]] = arr.astype(np.float64).reshape(shape)
        offset += nbytes
    return header, tensors, stored
