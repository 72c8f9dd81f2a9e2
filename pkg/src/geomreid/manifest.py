"""Dataset manifests (JSON, schema v1) and on-disk sequence directories."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import PersonSequence
from .errors import DuplicateSequenceId, MissingFile, ParseError
from .ply import parse_ply, write_ply

SCHEMA_VERSION = 1
FRAME_PATTERN = "frame_{:06d}.ply"


@dataclass(frozen=True)
class ManifestEntry:
    sequence_id: str
    identity_id: str
    surgery_id: str
    file_path: str
    fps: float = 30.0


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    mode_tag: str = ""

    def surgeries(self):
        return sorted({e.surgery_id for e in self.entries})

    def identities(self):
        return sorted({e.identity_id for e in self.entries})

    def to_json(self) -> str:
        doc = {"v": SCHEMA_VERSION, "mode_tag": self.mode_tag,
               "entries": [{"sequence_id": e.sequence_id, "identity_id": e.identity_id,
                            "surgery_id": e.surgery_id, "file_path": e.file_path,
                            "fps": e.fps} for e in self.entries]}
        return json.dumps(doc, indent=2)


def load_manifest(text: str, base_dir=None, check_files: bool = True) -> DatasetManifest:
    """Parse and validate a manifest. Relative paths resolve against ``base_dir``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"manifest is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("manifest must be a JSON object")
    if doc.get("v") != SCHEMA_VERSION:
        raise ParseError(f"unsupported manifest version {doc.get('v')!r}")
    if not isinstance(doc.get("entries"), list):
        raise ParseError("manifest lacks an 'entries' list")
    mode_tag = doc.get("mode_tag", "")
    if not isinstance(mode_tag, str):
        raise ParseError("mode_tag must be a string")

    entries, seen = [], set()
    for i, raw in enumerate(doc["entries"]):
        if not isinstance(raw, dict):
            raise ParseError(f"entry {i} is not an object")
        try:
            fields = {k: raw[k] for k in ("sequence_id", "identity_id", "surgery_id", "file_path")}
        except KeyError as exc:
            raise ParseError(f"entry {i} lacks field {exc}") from None
        if not all(isinstance(v, str) and v for v in fields.values()):
            raise ParseError(f"entry {i}: fields must be nonempty strings")
        fps = raw.get("fps", 30.0)
        if isinstance(fps, bool) or not isinstance(fps, (int, float)) or not fps > 0:
            raise ParseError(f"entry {i}: fps must be a positive number")
        if fields["sequence_id"] in seen:
            raise DuplicateSequenceId(f"duplicate sequence_id {fields['sequence_id']!r}")
        seen.add(fields["sequence_id"])
        path = fields["file_path"]
        if base_dir is not None and not os.path.isabs(path):
            path = os.path.join(str(base_dir), path)
        if check_files and not os.path.exists(path):
            raise MissingFile(f"entry {fields['sequence_id']!r}: {path} does not exist")
        fields["file_path"] = path
        entries.append(ManifestEntry(fps=float(fps), **fields))
    return DatasetManifest(entries=tuple(entries), mode_tag=mode_tag)


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    return load_manifest(path.read_text(), base_dir=path.parent)


def remap_axes(points: np.ndarray, up: str) -> np.ndarray:
    """Convert clouds recorded with another vertical axis to the y-up convention."""
    if up == "y":
        return points
    if up == "z":
        return np.column_stack([points[:, 0], points[:, 2], -points[:, 1]])
    raise ValueError(f"unsupported up axis {up!r}")


def read_sequence(entry: ManifestEntry, up: str = "y") -> PersonSequence:
    files = sorted(Path(entry.file_path).glob("frame_*.ply"))
    if not files:
        raise MissingFile(f"no frame_*.ply files in {entry.file_path}")
    frames = []
    for k, f in enumerate(files):
        fr = parse_ply(f.read_bytes())
        frames.append(fr.replace(points=remap_axes(fr.points, up), timestamp_s=k / entry.fps))
    return PersonSequence(frames=frames, identity_id=entry.identity_id,
                          surgery_id=entry.surgery_id, sequence_id=entry.sequence_id,
                          fps=entry.fps)


def write_sequence(seq: PersonSequence, directory, form: str = "binary_le") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for k, fr in enumerate(seq.frames):
        (directory / FRAME_PATTERN.format(k)).write_bytes(write_ply(fr, form))
    return directory
