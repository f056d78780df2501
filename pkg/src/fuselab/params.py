"""Named parameter segments with a flat-vector view, plus checkpoint files.

A ParameterSet is an immutable ordered list of named float64 arrays. Two
sets are *aligned* when segment names and shapes match in order; all
weight-space arithmetic requires alignment. The checkpoint container is a
small binary format: magic, a JSON header carrying the segment manifest,
then raw little-endian float64 payloads in manifest order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

_MAGIC = b"FLABCKPT"
_FORMAT_VERSION = 1


class AlignmentError(ValueError):
    """Segment names or shapes of two ParameterSets do not match in order."""


@dataclass(frozen=True)
class Segment:
    name: str
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"segment {self.name!r} contains non-finite values")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class ParameterSet:
    segments: tuple[Segment, ...]
    total_len: int = field(init=False)

    def __post_init__(self):
        names = [s.name for s in self.segments]
        if len(set(names)) != len(names):
            raise ValueError("duplicate segment names")
        object.__setattr__(self, "total_len", sum(s.size for s in self.segments))

    @classmethod
    def build(cls, items: Iterable[tuple[str, np.ndarray]]) -> "ParameterSet":
        return cls(tuple(Segment(name, arr) for name, arr in items))

    def __iter__(self):
        return iter(self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.segments)

    def segment(self, name: str) -> Segment:
        for s in self.segments:
            if s.name == name:
                return s
        raise KeyError(name)

    def as_dict(self) -> dict[str, np.ndarray]:
        return {s.name: s.values for s in self.segments}

    def flat(self) -> np.ndarray:
        """Concatenated copy of all segment values, in segment order."""
        if not self.segments:
            return np.zeros(0, dtype=np.float64)
        return np.concatenate([s.values.ravel() for s in self.segments])

    def with_values(self, values: Mapping[str, np.ndarray]) -> "ParameterSet":
        """Same layout with some segment arrays replaced (shapes must match)."""
        out = []
        for s in self.segments:
            if s.name in values:
                arr = np.asarray(values[s.name], dtype=np.float64)
                if arr.shape != s.shape:
                    raise AlignmentError(
                        f"replacement for {s.name!r} has shape {arr.shape}, expected {s.shape}"
                    )
                out.append((s.name, arr))
            else:
                out.append((s.name, s.values))
        return ParameterSet.build(out)

    def from_flat(self, vec: np.ndarray) -> "ParameterSet":
        """Rebuild a set with this layout from one flat vector."""
        vec = np.asarray(vec, dtype=np.float64).ravel()
        if vec.size != self.total_len:
            raise AlignmentError(
                f"flat vector has {vec.size} scalars, layout needs {self.total_len}"
            )
        out, off = [], 0
        for s in self.segments:
            out.append((s.name, vec[off : off + s.size].reshape(s.shape)))
            off += s.size
        return ParameterSet.build(out)

    def aligned_with(self, other: "ParameterSet") -> bool:
        return self.names == other.names and all(
            a.shape == b.shape for a, b in zip(self.segments, other.segments)
        )


def require_aligned(*sets: ParameterSet) -> None:
    first = sets[0]
    for other in sets[1:]:
        if not first.aligned_with(other):
            raise AlignmentError("ParameterSets are not aligned")


# ----- checkpoint container ------------------------------------------------


def _write_container(path: Path, header: dict, arrays: list[np.ndarray]) -> None:
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_container(path: Path) -> tuple[dict, list[np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a fuselab checkpoint (bad magic)")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format_version") != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {header.get('format_version')}")
        arrays = []
        for seg in header["segments"]:
            shape = tuple(seg["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"{path}: truncated payload for segment {seg['name']!r}")
            arrays.append(np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape))
    return header, arrays


def save_checkpoint(path: str | Path, params: ParameterSet, arch: str, extra: dict | None = None) -> None:
    """Write a ParameterSet container; `extra` lands in the header verbatim."""
    header = {
        "format_version": _FORMAT_VERSION,
        "kind": "params",
        "arch": arch,
        "segments": [{"name": s.name, "shape": list(s.shape)} for s in params.segments],
    }
    if extra:
        header["extra"] = extra
    _write_container(Path(path), header, [s.values for s in params.segments])


def load_checkpoint(path: str | Path) -> tuple[ParameterSet, str, dict]:
    """Read a container; returns (params, arch, extra-header)."""
    header, arrays = _read_container(Path(path))
    if header.get("kind") != "params":
        raise ValueError(f"{path}: container holds {header.get('kind')!r}, not params")
    names = [seg["name"] for seg in header["segments"]]
    ps = ParameterSet.build(list(zip(names, arrays)))
    return ps, header["arch"], header.get("extra", {})


def save_fisher(
    path: str | Path,
    values: ParameterSet,
    *,
    normalized: bool,
    probe_id: str,
    n_examples: int,
    arch: str = "",
) -> None:
    """Write a diagonal-Fisher container (same layout as params files)."""
    header = {
        "format_version": _FORMAT_VERSION,
        "kind": "fisher",
        "arch": arch,
        "normalized": bool(normalized),
        "probe_id": probe_id,
        "n_examples": int(n_examples),
        "segments": [{"name": s.name, "shape": list(s.shape)} for s in values.segments],
    }
    _write_container(Path(path), header, [s.values for s in values.segments])


def load_fisher(path: str | Path) -> tuple[ParameterSet, dict]:
    header, arrays = _read_container(Path(path))
    if header.get("kind") != "fisher":
        raise ValueError(f"{path}: container holds {header.get('kind')!r}, not fisher")
    names = [seg["name"] for seg in header["segments"]]
    return ParameterSet.build(list(zip(names, arrays))), header
