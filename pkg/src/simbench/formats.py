"""File formats: NPY representation files with JSON sidecars, suite JSON,
score CSVs and report files.

NPY files are parsed and written here directly (format version 1.0, with 2.0
also accepted on read) so that malformed input can be reported with byte
offsets.
"""

from __future__ import annotations

import ast
import csv
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .errors import (
    BadMagic,
    FileFormatError,
    InputError,
    NotTwoDimensional,
    SchemaError,
    UnsupportedDtype,
)
from .repcore import RawRepresentation

NPY_MAGIC = b"\x93NUMPY"
NPY_ALIGN = 64
_DTYPES = {"<f8": np.dtype("<f8"), "<f4": np.dtype("<f4")}

NEURONS_BY_EXAMPLES = "neurons_by_examples"
EXAMPLES_BY_NEURONS = "examples_by_neurons"
ORIENTATIONS = (NEURONS_BY_EXAMPLES, EXAMPLES_BY_NEURONS)

REPORT_SCHEMA_VERSION = 1


# -- atomic writes -----------------------------------------------------------


def atomic_write_bytes(path: str | os.PathLike, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


# -- NPY ---------------------------------------------------------------------


def parse_npy(buf: bytes) -> np.ndarray:
    """Decode an NPY byte string holding a 2-D little-endian float32/float64 array."""
    if buf[: len(NPY_MAGIC)] != NPY_MAGIC:
        bad = next(
            (i for i, (x, y) in enumerate(zip(buf, NPY_MAGIC)) if x != y),
            min(len(buf), len(NPY_MAGIC)),
        )
        raise BadMagic("not an NPY file: magic string mismatch", offset=bad)
    if len(buf) < 10:
        raise FileFormatError("truncated NPY preamble", offset=len(buf))
    major, minor = buf[6], buf[7]
    if (major, minor) == (1, 0):
        (hlen,) = struct.unpack("<H", buf[8:10])
        start = 10
    elif major in (2, 3) and minor == 0:
        if len(buf) < 12:
            raise FileFormatError("truncated NPY preamble", offset=len(buf))
        (hlen,) = struct.unpack("<I", buf[8:12])
        start = 12
    else:
        raise FileFormatError(f"unsupported NPY version {major}.{minor}", offset=6)
    if len(buf) < start + hlen:
        raise FileFormatError("truncated NPY header", offset=len(buf))
    try:
        header = ast.literal_eval(buf[start : start + hlen].decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise FileFormatError(f"unparseable NPY header: {exc}", offset=start) from exc
    if not isinstance(header, dict) or not {"descr", "fortran_order", "shape"} <= header.keys():
        raise FileFormatError("NPY header must define descr, fortran_order and shape", offset=start)
    descr = header["descr"]
    if descr not in _DTYPES:
        raise UnsupportedDtype(
            f"unsupported dtype {descr!r}; expected little-endian float32 or float64", offset=start
        )
    shape = header["shape"]
    if not isinstance(shape, tuple) or len(shape) != 2:
        raise NotTwoDimensional(f"expected a 2-D array, got shape {shape!r}", offset=start)
    dtype = _DTYPES[descr]
    data_start = start + hlen
    count = int(shape[0]) * int(shape[1])
    nbytes = count * dtype.itemsize
    if len(buf) - data_start != nbytes:
        raise FileFormatError(
            f"data section has {len(buf) - data_start} bytes, expected {nbytes}", offset=data_start
        )
    flat = np.frombuffer(buf, dtype=dtype, count=count, offset=data_start)
    order = "F" if header["fortran_order"] else "C"
    return np.ascontiguousarray(flat.reshape(shape, order=order), dtype=np.float64)


def encode_npy(m: np.ndarray) -> bytes:
    """NPY v1.0, ``<f8``, C order, header padded to a 64-byte boundary."""
    arr = np.ascontiguousarray(m, dtype="<f8")
    if arr.ndim != 2:
        raise NotTwoDimensional(f"expected a 2-D array, got shape {arr.shape}")
    header = "{'descr': '<f8', 'fortran_order': False, 'shape': (%d, %d), }" % arr.shape
    pad = -(len(NPY_MAGIC) + 2 + 2 + len(header) + 1) % NPY_ALIGN
    header = header + " " * pad + "\n"
    return NPY_MAGIC + b"\x01\x00" + struct.pack("<H", len(header)) + header.encode("latin1") + arr.tobytes()


def sidecar_path(path: str | os.PathLike) -> Path:
    return Path(path).with_suffix(".json")


def read_representation(path: str | os.PathLike, orientation: str | None = None) -> RawRepresentation:
    """Load an NPY representation plus its sidecar metadata.

    The sidecar (``<stem>.json``) states the orientation. Without a sidecar the
    caller must pass ``orientation``; it is never inferred from the shape.
    """
    path = Path(path)
    arr = parse_npy(path.read_bytes())
    meta: dict[str, Any] = {}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
        if meta.get("orientation") not in ORIENTATIONS:
            raise SchemaError(f"orientation must be one of {ORIENTATIONS}", "/orientation")
        if orientation is not None and orientation != meta["orientation"]:
            raise InputError(
                f"{path}: requested orientation {orientation!r} contradicts sidecar {meta['orientation']!r}"
            )
        orientation = meta["orientation"]
    if orientation is None:
        raise InputError(f"{path}: no sidecar {side.name} and no orientation given")
    if orientation not in ORIENTATIONS:
        raise InputError(f"unknown orientation {orientation!r}")
    if orientation == EXAMPLES_BY_NEURONS:
        arr = np.ascontiguousarray(arr.T)
    return RawRepresentation(
        data=arr,
        model_id=str(meta.get("model_id", path.stem)),
        layer_id=int(meta.get("layer_id", 0)),
        tags=meta.get("tags", {}),
    )


def write_representation(rep: RawRepresentation | np.ndarray, path: str | os.PathLike) -> None:
    if not isinstance(rep, RawRepresentation):
        rep = RawRepresentation(data=rep, model_id=Path(path).stem)
    atomic_write_bytes(path, encode_npy(rep.data))
    meta = {
        "orientation": NEURONS_BY_EXAMPLES,
        "model_id": rep.model_id,
        "layer_id": rep.layer_id,
        "tags": dict(rep.tags),
    }
    atomic_write_text(sidecar_path(path), dump_json(meta))


def read_representation_dir(directory: str | os.PathLike) -> list[RawRepresentation]:
    """All ``*.npy`` files in a directory, sorted by (model_id, layer_id, file name)."""
    paths = sorted(Path(directory).glob("*.npy"))
    if not paths:
        raise InputError(f"no .npy files in {directory}")
    reps = [(read_representation(p), p.name) for p in paths]
    reps.sort(key=lambda t: (t[0].model_id, t[0].layer_id, t[1]))
    return [r for r, _ in reps]


# -- suite JSON ----------------------------------------------------------------

SUITE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["entries"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": 1},
        "entries": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "object",
                "required": ["path", "functionality"],
                "additionalProperties": False,
                "properties": {
                    "path": {"type": "string", "minLength": 1},
                    "functionality": {"type": "number"},
                    "model_id": {"type": "string"},
                    "layer_id": {"type": "integer", "minimum": 0},
                    "tags": {"type": "object", "additionalProperties": {"type": "string"}},
                },
            },
        },
        "reference_rule": {
            "oneOf": [
                {"const": "argmax_f"},
                {
                    "type": "object",
                    "required": ["index"],
                    "additionalProperties": False,
                    "properties": {"index": {"type": "integer", "minimum": 0}},
                },
            ]
        },
        "include_reference_pair": {"type": "boolean"},
        "centering": {"enum": ["per-neuron", "per-example", "none"]},
        "metrics": {
            "type": "array",
            "minItems": 1,
            "items": {"enum": ["linear_cka", "mean_cca", "r2_cca", "pwcca", "procrustes"]},
        },
    },
}


def json_pointer(parts) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in parts)


def validate_suite_document(doc: Any) -> None:
    """Raise :class:`SchemaError` for the first violation, located by JSON pointer."""
    validator = jsonschema.Draft202012Validator(SUITE_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        err = errors[0]
        raise SchemaError(err.message, json_pointer(err.absolute_path))
    rule = doc.get("reference_rule")
    if isinstance(rule, dict) and rule["index"] >= len(doc["entries"]):
        raise SchemaError("reference index out of range", "/reference_rule/index")


def read_scores_csv(path: str | os.PathLike) -> dict[tuple[str, int], float]:
    """Functionality table with header ``model_id,layer_id,score``."""
    out: dict[tuple[str, int], float] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["model_id", "layer_id", "score"]:
            raise SchemaError("score CSV header must be model_id,layer_id,score", "")
        for lineno, row in enumerate(reader, start=2):
            try:
                key = (row["model_id"], int(row["layer_id"]))
                score = float(row["score"])
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"line {lineno}: {exc}", f"/{lineno}") from exc
            if not np.isfinite(score):
                raise SchemaError(f"line {lineno}: score must be finite", f"/{lineno}")
            if key in out:
                raise SchemaError(f"line {lineno}: duplicate key {key}", f"/{lineno}")
            out[key] = score
    return out


# -- report files --------------------------------------------------------------


@dataclass(frozen=True)
class ReportFile:
    kind: str
    payload: dict
    config: dict = field(default_factory=dict)
    fingerprint: str | None = None
    created_at: str | None = None
    schema_version: int = REPORT_SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "config": self.config,
            "fingerprint": self.fingerprint,
            "created_at": self.created_at,
            "payload": self.payload,
        }

    def dumps(self) -> str:
        return dump_json(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "ReportFile":
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise SchemaError("report must be a JSON object", "")
        version = doc.get("schema_version")
        if version != REPORT_SCHEMA_VERSION:
            raise SchemaError(
                f"unsupported report schema_version {version!r} (expected {REPORT_SCHEMA_VERSION})",
                "/schema_version",
            )
        for key in ("kind", "payload"):
            if key not in doc:
                raise SchemaError(f"missing required field {key!r}", f"/{key}")
        return cls(
            kind=doc["kind"],
            payload=doc["payload"],
            config=doc.get("config", {}),
            fingerprint=doc.get("fingerprint"),
            created_at=doc.get("created_at"),
            schema_version=version,
        )

    def write(self, path: str | os.PathLike) -> None:
        atomic_write_text(path, self.dumps())

    @classmethod
    def read(cls, path: str | os.PathLike) -> "ReportFile":
        return cls.loads(Path(path).read_text())
