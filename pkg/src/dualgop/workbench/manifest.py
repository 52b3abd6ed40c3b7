"""Corpus manifests.

A manifest is a JSON document::

    {
      "format_version": 1,
      "inventory": "inventory.json",
      "lexicon": "lexicon.txt",
      "speakers": [
        {"id": "xa_s000", "l1": "xa", "features": "feats/xa_s000.csv",
         "transcript": ["word", ...], "label": 2.4},
        {"id": "xa_s001", "l1": "xa", "audio": "wav/xa_s001.wav",
         "transcript": ["word", ...]}
      ]
    }

Relative paths resolve against the manifest's directory.  Each speaker
names exactly one of ``features`` (a frame-matrix file) or ``audio`` (a
16-bit mono WAV).  ``label`` is optional and must lie in [1, 4].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from ..errors import IoError, SchemaError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class SpeakerEntry:
    id: str
    l1: str
    transcript: tuple
    features: Path | None = None
    audio: Path | None = None
    label: float | None = None


@dataclass(frozen=True)
class CorpusManifest:
    speakers: tuple
    lexicon: Path
    inventory: Path
    path: Path | None = None

    def __len__(self):
        return len(self.speakers)

    def labels(self) -> dict:
        return {s.id: s.label for s in self.speakers}


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def load_manifest(path) -> CorpusManifest:
    path = Path(path)
    if not path.exists():
        raise IoError(f"{path}: no such manifest")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: manifest must be a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"{path}: unsupported format_version {doc.get('format_version')!r}")
    base = path.parent
    for key in ("lexicon", "inventory", "speakers"):
        if key not in doc:
            raise SchemaError(f"{path}: missing field {key!r}")
    lexicon = _resolve(base, doc["lexicon"])
    inventory = _resolve(base, doc["inventory"])
    for p in (lexicon, inventory):
        if not p.exists():
            raise IoError(f"{p}: referenced by {path} but missing")
    seen = set()
    speakers = []
    for n, e in enumerate(doc["speakers"]):
        where = f"{path}: speakers[{n}]"
        if not isinstance(e, dict) or "id" not in e:
            raise SchemaError(f"{where}: missing field 'id'")
        sid = str(e["id"])
        if sid in seen:
            raise SchemaError(f"{where}: duplicate speaker id {sid!r}")
        seen.add(sid)
        if ("features" in e) == ("audio" in e):
            raise SchemaError(f"{where}: give exactly one of 'features' or 'audio'")
        transcript = e.get("transcript")
        if not isinstance(transcript, list) or not transcript:
            raise SchemaError(f"{where}: field 'transcript' must be a non-empty word list")
        label = e.get("label")
        if label is not None:
            try:
                label = float(label)
            except (TypeError, ValueError):
                raise SchemaError(f"{where}: field 'label' must be a number") from None
            if not math.isfinite(label) or not 1.0 <= label <= 4.0:
                raise SchemaError(f"{where}: field 'label' = {label} outside [1, 4]")
        feats = _resolve(base, e["features"]) if "features" in e else None
        audio = _resolve(base, e["audio"]) if "audio" in e else None
        target = feats or audio
        if not target.exists():
            raise IoError(f"{where}: file {target} does not exist")
        speakers.append(SpeakerEntry(sid, str(e.get("l1", "")), tuple(transcript), feats, audio, label))
    return CorpusManifest(tuple(speakers), lexicon, inventory, path)


def save_manifest(path, manifest: CorpusManifest) -> None:
    path = Path(path)
    base = path.parent

    def rel(p):
        try:
            return str(Path(p).relative_to(base))
        except ValueError:
            return str(p)

    speakers = []
    for s in manifest.speakers:
        e = {"id": s.id, "l1": s.l1, "transcript": list(s.transcript)}
        if s.features is not None:
            e["features"] = rel(s.features)
        if s.audio is not None:
            e["audio"] = rel(s.audio)
        if s.label is not None:
            e["label"] = float(s.label)
        speakers.append(e)
    doc = {
        "format_version": FORMAT_VERSION,
        "inventory": rel(manifest.inventory),
        "lexicon": rel(manifest.lexicon),
        "speakers": speakers,
    }
    path.write_text(json.dumps(doc, indent=1) + "\n")
