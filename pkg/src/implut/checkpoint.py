"""Versioned, checksummed persistence of trained weights.

Layout: an ASCII header (format name + version, filter names, layer
dims, optional config fingerprint, payload SHA-256) terminated by an
``end`` line, followed by the raw little-endian float64 weight arrays
in declared order (transform layers first, then predictor layers if
present). Round-trips are byte-exact.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from .predictor import ParamPredictor
from .transform import MlpFilter

__all__ = [
    "FORMAT_NAME",
    "FORMAT_VERSION",
    "Checkpoint",
    "CheckpointFormatError",
    "CheckpointVersionError",
    "CheckpointChecksumError",
    "save_checkpoint",
    "load_checkpoint",
]

FORMAT_NAME = "implut-checkpoint"
FORMAT_VERSION = 1


class CheckpointFormatError(ValueError):
    pass


class CheckpointVersionError(CheckpointFormatError):
    def __init__(self, found: int, supported: int):
        self.found = found
        self.supported = supported
        super().__init__(
            f"checkpoint version {found} is not supported (this build reads version {supported})")


class CheckpointChecksumError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: MlpFilter
    predictor: ParamPredictor | None
    config_fingerprint: str | None


def _payload(model: MlpFilter, predictor: ParamPredictor | None) -> bytes:
    arrays = model.weight_arrays()
    if predictor is not None:
        arrays += predictor.weight_arrays()
    return b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)


def serialize_checkpoint(model: MlpFilter, predictor: ParamPredictor | None = None,
                         config_fingerprint: str | None = None) -> bytes:
    payload = _payload(model, predictor)
    lines = [
        f"{FORMAT_NAME} {FORMAT_VERSION}",
        f"filters\t" + "\t".join(model.filter_names),
        "transform_dims " + " ".join(str(d) for d in model.dims),
    ]
    if predictor is not None:
        lines.append("predictor_dims " + " ".join(str(d) for d in predictor.dims))
        lines.append(f"predictor_analysis {predictor.analysis_size}")
    lines.append(f"config_fingerprint {config_fingerprint if config_fingerprint else '-'}")
    lines.append(f"payload_sha256 {hashlib.sha256(payload).hexdigest()}")
    lines.append("end")
    return ("\n".join(lines) + "\n").encode("ascii") + payload


def save_checkpoint(path, model: MlpFilter, predictor: ParamPredictor | None = None,
                    config_fingerprint: str | None = None) -> None:
    with open(path, "wb") as f:
        f.write(serialize_checkpoint(model, predictor, config_fingerprint))


def _read_arrays(payload: bytes, shapes: list[tuple], offset: int = 0):
    arrays = []
    for shape in shapes:
        n = int(np.prod(shape))
        chunk = payload[offset : offset + 8 * n]
        arrays.append(np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64))
        offset += 8 * n
    return arrays, offset


def _layer_shapes(dims: list[int]) -> list[tuple]:
    shapes = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        shapes.append((fan_in, fan_out))
        shapes.append((fan_out,))
    return shapes


def deserialize_checkpoint(data: bytes, expected_fingerprint: str | None = None) -> Checkpoint:
    nl = data.find(b"\nend\n")
    if nl < 0:
        raise CheckpointFormatError("missing header terminator")
    header = data[: nl + 1].decode("ascii", errors="replace")
    payload = data[nl + 5 :]
    fields: dict[str, str] = {}
    first, *rest = header.splitlines()
    parts = first.split()
    if len(parts) != 2 or parts[0] != FORMAT_NAME:
        raise CheckpointFormatError(f"not a {FORMAT_NAME} file")
    try:
        version = int(parts[1])
    except ValueError:
        raise CheckpointFormatError("malformed version") from None
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(version, FORMAT_VERSION)
    for line in rest:
        key, _, value = line.partition(" ") if "\t" not in line else line.partition("\t")
        fields[key] = value
    for required in ("filters", "transform_dims", "payload_sha256"):
        if required not in fields:
            raise CheckpointFormatError(f"missing header field {required!r}")
    if hashlib.sha256(payload).hexdigest() != fields["payload_sha256"]:
        raise CheckpointChecksumError("payload checksum mismatch")

    names = tuple(fields["filters"].split("\t"))
    dims = [int(d) for d in fields["transform_dims"].split()]
    if dims[0] != 6 + len(names) or dims[-1] != 3:
        raise CheckpointFormatError("transform dims inconsistent with filter count")
    model = MlpFilter(names, hidden=dims[1] if len(dims) > 2 else 3, layers=len(dims) - 1)
    if model.dims != dims:
        raise CheckpointFormatError(f"unsupported transform dims {dims}")
    shapes = _layer_shapes(dims)
    expected_bytes = sum(8 * int(np.prod(s)) for s in shapes)

    predictor = None
    if "predictor_dims" in fields:
        pdims = [int(d) for d in fields["predictor_dims"].split()]
        analysis = int(fields.get("predictor_analysis", "16"))
        predictor = ParamPredictor(names, hidden=pdims[1], analysis_size=analysis)
        if predictor.dims != pdims:
            raise CheckpointFormatError(f"unsupported predictor dims {pdims}")
        pshapes = _layer_shapes(pdims)
        expected_bytes += sum(8 * int(np.prod(s)) for s in pshapes)

    if len(payload) != expected_bytes:
        raise CheckpointFormatError(
            f"payload has {len(payload)} bytes, expected {expected_bytes}")
    arrays, offset = _read_arrays(payload, shapes)
    for i in range(model.n_layers):
        model.params[f"w{i}"].data[...] = arrays[2 * i]
        model.params[f"b{i}"].data[...] = arrays[2 * i + 1]
    if predictor is not None:
        parrays, _ = _read_arrays(payload, _layer_shapes(predictor.dims), offset)
        for i in range(predictor.n_layers):
            predictor.params[f"w{i}"].data[...] = parrays[2 * i]
            predictor.params[f"b{i}"].data[...] = parrays[2 * i + 1]

    fingerprint = fields.get("config_fingerprint", "-")
    fingerprint = None if fingerprint == "-" else fingerprint
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        warnings.warn(
            f"checkpoint config fingerprint {fingerprint!r} differs from expected "
            f"{expected_fingerprint!r}")
    return Checkpoint(model, predictor, fingerprint)


def load_checkpoint(path, expected_fingerprint: str | None = None) -> Checkpoint:
    with open(path, "rb") as f:
        data = f.read()
    return deserialize_checkpoint(data, expected_fingerprint)
