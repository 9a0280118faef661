"""Versioned archive of named numeric arrays.

An archive is a zip file (stored, not compressed) holding one ``<name>.npy``
member per array plus ``manifest.json``. Members are written in sorted order
with a fixed timestamp, so equal contents give byte-identical files. The
result is also readable with ``numpy.load``.

The manifest records, for every array, its dtype string, shape, byte order
and the byte size of its raw data.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path
from typing import Dict, Mapping, Tuple

import numpy as np

ARCHIVE_FORMAT = "futureplan-archive"
ARCHIVE_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


class ArchiveError(Exception):
    pass


def _info(name: str) -> zipfile.ZipInfo:
    zi = zipfile.ZipInfo(name, date_time=_EPOCH)
    zi.compress_type = zipfile.ZIP_STORED
    zi.external_attr = 0o644 << 16
    return zi


def save_archive(path, arrays: Mapping[str, np.ndarray], manifest: Mapping) -> None:
    path = Path(path)
    layout = {}
    payload = {}
    for name in sorted(arrays):
        arr = np.require(np.asarray(arrays[name]), requirements="C")  # keeps 0-d shapes
        if arr.dtype == object:
            raise ArchiveError(f"array {name!r} has object dtype")
        buf = io.BytesIO()
        np.lib.format.write_array(buf, arr, allow_pickle=False)
        payload[name] = buf.getvalue()
        layout[name] = {
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "order": "C",
            "nbytes": int(arr.nbytes),
        }
    doc = {"format": ARCHIVE_FORMAT, "version": ARCHIVE_VERSION, "arrays": layout, **dict(manifest)}
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w", zipfile.ZIP_STORED) as zf:
        zf.writestr(_info("manifest.json"), json.dumps(doc, indent=2, sort_keys=True))
        for name, data in payload.items():
            zf.writestr(_info(f"{name}.npy"), data)
    tmp.replace(path)


def load_archive(path) -> Tuple[Dict[str, np.ndarray], dict]:
    path = Path(path)
    try:
        zf = zipfile.ZipFile(path, "r")
    except (zipfile.BadZipFile, OSError) as exc:
        raise ArchiveError(f"{path}: not a readable archive ({exc})") from exc
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except KeyError:
            raise ArchiveError(f"{path}: missing manifest.json") from None
        if manifest.get("format") != ARCHIVE_FORMAT:
            raise ArchiveError(f"{path}: unexpected format {manifest.get('format')!r}")
        if manifest.get("version") != ARCHIVE_VERSION:
            raise ArchiveError(f"{path}: archive version {manifest.get('version')} != {ARCHIVE_VERSION}")
        arrays = {}
        for name, meta in manifest["arrays"].items():
            arr = np.lib.format.read_array(io.BytesIO(zf.read(f"{name}.npy")), allow_pickle=False)
            if list(arr.shape) != meta["shape"] or arr.dtype.str != meta["dtype"]:
                raise ArchiveError(f"{path}: array {name!r} does not match its manifest entry")
            arrays[name] = arr
    return arrays, manifest
