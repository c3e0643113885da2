"""Binary model files.

Layout (all integers little-endian)::

    magic            8 bytes  b"RIPML\\x00\\r\\n"
    format_version   u32
    generator_ver    u32      version of the seeded projection generator
    section*         tag[4] | u64 length | payload | u32 crc32(payload)
    end section      tag b"END\\x00", length 0

The first section is ``META`` (UTF-8 JSON, sorted keys) describing the model
kind, hyperparameters and every learner's ProjectionSpec (ensemble, m, L,
seed).  Each following ``ARR\\x00`` section holds one named array::

    u16 name_len | name | u8 dtype (0 = float64, 1 = int64) | u8 ndim | u64 shape[ndim] | data

Array names, per model prefix ``P`` (empty for a flat model, ``c<i>.`` for
cluster i): ``P labels.indptr``, ``P labels.indices``, ``P excluded`` and for
learner f ``P f<f>.psi`` (m x d), ``P f<f>.z`` (N_f x m), ``P f<f>.ids``.
Clustered files add ``centers`` (C x d) and ``members.<i>``.
"""

from __future__ import annotations

import io
import json
import os
import struct
import tempfile
import zlib

import numpy as np
import scipy.sparse as sp

from .errors import ModelFormatError, VersionError
from .kmeans import Centroids
from .model import ClusteredModel, Hyper, Learner, Model
from .neighbors import EmbeddedIndex
from .projection import ProjectionSpec
from .ridge import Regressor
from .seeding import GENERATOR_NAME, GENERATOR_VERSION

__all__ = ["FORMAT_VERSION", "MAGIC", "dumps_model", "loads_model", "save_model", "load_model"]

MAGIC = b"RIPML\x00\r\n"
FORMAT_VERSION = 1

_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8")}
_CODES = {np.dtype("<f8"): 0, np.dtype("<i8"): 1}


def _section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack("<Q", len(payload)) + payload + struct.pack("<I", zlib.crc32(payload))


def _array_payload(name: str, a: np.ndarray) -> bytes:
    a = np.asarray(a)
    dt = np.dtype("<f8") if a.dtype.kind == "f" else np.dtype("<i8")
    a = np.ascontiguousarray(a, dtype=dt)
    nb = name.encode()
    head = struct.pack("<H", len(nb)) + nb + struct.pack("<BB", _CODES[dt], a.ndim)
    head += struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + a.tobytes()


def _model_parts(model: Model, prefix: str):
    meta = {
        "hyper": model.hyper.to_dict(),
        "n_features": model.n_features,
        "n_labels": model.n_labels,
        "n_points": model.n_points,
        "master_seed": model.master_seed,
        "learners": [
            {
                "ensemble": lr.projection.ensemble.value,
                "m": lr.projection.m,
                "L": lr.projection.L,
                "seed": lr.projection.seed,
                "lam": lr.regressor.lam,
                "solver": lr.regressor.solver,
                "n_iters": lr.regressor.n_iters,
                "metric": lr.index.metric.value,
            }
            for lr in model.learners
        ],
    }
    Y = model.labels.tocsr()
    Y.sort_indices()
    arrays = [
        (prefix + "labels.indptr", Y.indptr.astype(np.int64)),
        (prefix + "labels.indices", Y.indices.astype(np.int64)),
        (prefix + "excluded", model.excluded),
    ]
    for f, lr in enumerate(model.learners):
        arrays += [
            (f"{prefix}f{f}.psi", lr.regressor.psi),
            (f"{prefix}f{f}.z", lr.index.vectors),
            (f"{prefix}f{f}.ids", lr.index.point_ids),
        ]
    return meta, arrays


def dumps_model(model) -> bytes:
    if isinstance(model, ClusteredModel):
        metas, arrays = [], [("centers", model.centroids.centers)]
        for c, sub in enumerate(model.models):
            meta, arr = _model_parts(sub, f"c{c}.")
            metas.append(meta)
            arrays += arr
            if model.cluster_members is not None:
                arrays.append((f"members.{c}", np.asarray(model.cluster_members[c], dtype=np.int64)))
        meta = {"kind": "clustered", "C": model.C, "models": metas, "members": model.cluster_members is not None}
    elif isinstance(model, Model):
        meta, arrays = _model_parts(model, "")
        meta["kind"] = "model"
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    meta["generator"] = GENERATOR_NAME
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<II", FORMAT_VERSION, GENERATOR_VERSION))
    out.write(_section(b"META", json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()))
    for name, a in arrays:
        out.write(_section(b"ARR\x00", _array_payload(name, a)))
    out.write(_section(b"END\x00", b""))
    return out.getvalue()


def _read_sections(buf: bytes):
    if len(buf) < len(MAGIC) + 8:
        raise ModelFormatError("file is truncated (no header)")
    if buf[: len(MAGIC)] != MAGIC:
        raise ModelFormatError("not a RIPML model file (bad magic bytes)")
    fmt, gen = struct.unpack_from("<II", buf, len(MAGIC))
    if fmt != FORMAT_VERSION:
        raise VersionError(f"model file format version {fmt} is not supported (expected {FORMAT_VERSION})")
    if gen != GENERATOR_VERSION:
        raise VersionError(f"model was written with generator version {gen}, this build uses {GENERATOR_VERSION}")
    pos = len(MAGIC) + 8
    sections = []
    while True:
        if pos + 12 > len(buf):
            raise ModelFormatError("file is truncated (missing section header)")
        tag = buf[pos:pos + 4]
        (length,) = struct.unpack_from("<Q", buf, pos + 4)
        start = pos + 12
        end = start + length
        if end + 4 > len(buf):
            raise ModelFormatError(f"file is truncated inside section {tag!r}")
        payload = buf[start:end]
        (crc,) = struct.unpack_from("<I", buf, end)
        if zlib.crc32(payload) != crc:
            raise ModelFormatError(f"checksum failure in section {tag!r}")
        pos = end + 4
        if tag == b"END\x00":
            break
        sections.append((tag, payload))
    if pos != len(buf):
        raise ModelFormatError("trailing bytes after end section")
    return sections


def _parse_array(payload: bytes):
    (nlen,) = struct.unpack_from("<H", payload, 0)
    name = payload[2:2 + nlen].decode()
    p = 2 + nlen
    code, ndim = struct.unpack_from("<BB", payload, p)
    p += 2
    shape = struct.unpack_from(f"<{ndim}Q", payload, p)
    p += 8 * ndim
    if code not in _DTYPES:
        raise ModelFormatError(f"unknown dtype code {code} for array {name!r}")
    dt = _DTYPES[code]
    count = int(np.prod(shape)) if ndim else 1
    if len(payload) - p != count * dt.itemsize:
        raise ModelFormatError(f"array {name!r} has the wrong byte length")
    a = np.frombuffer(payload, dtype=dt, count=count, offset=p).reshape(shape)
    return name, a.astype(dt.newbyteorder("="))


def _build_model(meta: dict, arrays: dict, prefix: str) -> Model:
    hyper = Hyper.from_dict(meta["hyper"])
    n, L = meta["n_points"], meta["n_labels"]
    indptr = arrays[prefix + "labels.indptr"]
    indices = arrays[prefix + "labels.indices"]
    Y = sp.csr_matrix((np.ones(indices.size), indices, indptr), shape=(n, L))
    learners = []
    for f, lm in enumerate(meta["learners"]):
        spec = ProjectionSpec(lm["ensemble"], lm["m"], lm["L"], lm["seed"])
        reg = Regressor(arrays[f"{prefix}f{f}.psi"], lm["lam"], lm["solver"], lm["n_iters"])
        idx = EmbeddedIndex(arrays[f"{prefix}f{f}.z"], arrays[f"{prefix}f{f}.ids"], lm["metric"])
        learners.append(Learner(spec, reg, idx))
    return Model(learners, Y, hyper, meta["n_features"], arrays[prefix + "excluded"], meta.get("master_seed"))


def loads_model(buf: bytes):
    sections = _read_sections(bytes(buf))
    if not sections or sections[0][0] != b"META":
        raise ModelFormatError("missing META section")
    try:
        meta = json.loads(sections[0][1].decode())
        arrays = {}
        for tag, payload in sections[1:]:
            if tag != b"ARR\x00":
                raise ModelFormatError(f"unexpected section {tag!r}")
            name, a = _parse_array(payload)
            arrays[name] = a
        if meta.get("generator") != GENERATOR_NAME:
            raise VersionError(f"model uses generator {meta.get('generator')!r}, expected {GENERATOR_NAME!r}")
        if meta["kind"] == "model":
            return _build_model(meta, arrays, "")
        if meta["kind"] == "clustered":
            models = [_build_model(mm, arrays, f"c{c}.") for c, mm in enumerate(meta["models"])]
            members = [arrays[f"members.{c}"] for c in range(meta["C"])] if meta["members"] else None
            return ClusteredModel(Centroids(arrays["centers"]), models, members)
        raise ModelFormatError(f"unknown model kind {meta['kind']!r}")
    except (KeyError, ValueError, struct.error) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model file: {exc}") from exc


def save_model(model, path) -> None:
    """Write atomically: a failed write never leaves a partial file at ``path``."""
    data = dumps_model(model)
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".ripml-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_model(path):
    with open(path, "rb") as fh:
        return loads_model(fh.read())
