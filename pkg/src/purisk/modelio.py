"""Deterministic binary container for trained models.

Layout: magic line, 8-byte big-endian header length, JSON header (sorted
keys), then one length-prefixed ``npy`` blob per array named in the header.
Byte output depends only on the stored content, so identical models compare
equal as files.
"""

from __future__ import annotations

import io
import json

import numpy as np

MAGIC = b"PURISKMODEL1\n"

__all__ = ["save_model", "load_model", "ModelFormatError"]


class ModelFormatError(ValueError):
    pass


def save_model(path, header: dict, arrays: dict[str, np.ndarray]):
    header = dict(header)
    header["array_names"] = sorted(arrays)
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(8, "big"))
        fh.write(blob)
        for name in header["array_names"]:
            buf = io.BytesIO()
            np.save(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            raw = buf.getvalue()
            fh.write(len(raw).to_bytes(8, "big"))
            fh.write(raw)


def load_model(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ModelFormatError("not a purisk model file")
        header_len = int.from_bytes(fh.read(8), "big")
        header = json.loads(fh.read(header_len).decode())
        arrays = {}
        for name in header["array_names"]:
            raw_len = int.from_bytes(fh.read(8), "big")
            arrays[name] = np.load(io.BytesIO(fh.read(raw_len)), allow_pickle=False)
    return header, arrays
