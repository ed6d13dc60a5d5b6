"""Per-particle scalar fields and their binary file format.

Field files (DGSF) are little-endian: magic "DGSF" | u64 n | f32 values[n],
with metadata (kind, direction, scale, sources, ...) in a JSON sidecar next
to the binary file.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError

FIELD_KINDS = (
    "particle-separation",
    "diffusion-separation",
    "distance",
    "density",
    "opacity",
)

DGSF_MAGIC = b"DGSF"
_DGSF_HEADER = struct.Struct("<4sQ")


@dataclass(frozen=True)
class ScalarField:
    """One finite value per particle, tagged with how it was produced."""

    values: np.ndarray
    kind: str
    direction: str | None = None
    scale: float | None = None
    sources: tuple[int, ...] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if values.ndim != 1 or values.shape[0] == 0:
            raise ValidationError("field values must be a nonempty 1-d array")
        if not np.isfinite(values).all():
            raise ValidationError("field values must be finite")
        if self.kind not in FIELD_KINDS:
            raise ValidationError(f"unknown field kind {self.kind!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def metadata(self) -> dict:
        out = {"kind": self.kind, "n": self.n}
        if self.direction is not None:
            out["direction"] = self.direction
        if self.scale is not None:
            out["scale"] = self.scale
        if self.sources is not None:
            out["sources"] = [int(s) for s in self.sources]
        out.update(self.meta)
        return out


def write_field(f: ScalarField, path) -> None:
    """Write the binary field and its JSON sidecar (``<path>.json``)."""
    path = str(path)
    with open(path, "wb") as fh:
        fh.write(_DGSF_HEADER.pack(DGSF_MAGIC, f.n))
        fh.write(f.values.astype("<f4").tobytes())
    with open(path + ".json", "w") as fh:
        json.dump(f.metadata(), fh, indent=2)


def load_field(path) -> ScalarField:
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _DGSF_HEADER.size:
        raise FormatError("file too short for a DGSF header")
    magic, n = _DGSF_HEADER.unpack_from(data, 0)
    if magic != DGSF_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {DGSF_MAGIC!r}")
    if len(data) != _DGSF_HEADER.size + 4 * n:
        raise CorruptionError("DGSF payload does not match header count")
    values = np.frombuffer(data, dtype="<f4", offset=_DGSF_HEADER.size).astype(np.float64)
    try:
        with open(path + ".json") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        meta = {"kind": "distance"}
    kind = meta.pop("kind", "distance")
    meta.pop("n", None)
    direction = meta.pop("direction", None)
    scale = meta.pop("scale", None)
    sources = meta.pop("sources", None)
    return ScalarField(
        values=values,
        kind=kind,
        direction=direction,
        scale=scale,
        sources=tuple(sources) if sources is not None else None,
        meta=meta,
    )
