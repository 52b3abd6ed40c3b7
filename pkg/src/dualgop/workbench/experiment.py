"""End-to-end experiment: features -> alignment -> scores -> utterance
features -> leave-one-speaker-out regression.
"""

from __future__ import annotations

import hashlib
import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..acoustic import AcousticModel, load_inventory, load_lexicon, load_model
from ..aligner import AlignmentResult, force_align, write_alignments
from ..errors import DualGopError, InvalidConfig, InvalidInput, SchemaError
from ..evaluator import DEFAULT_KS, DEFAULT_LAMBDAS, Dataset, EvalReport, loso_evaluate
from ..featurizer import PhoneCategoryMap, aggregate, write_features
from ..frontend import FrontendConfig, extract_features, read_frame_matrix, read_wav
from ..scoring import score_utterance, write_scores
from .manifest import load_manifest

FEATURE_MODES = ("l2_only", "l2_and_l1")


@dataclass(frozen=True)
class ExperimentConfig:
    l2_model: Path
    manifest: Path
    out: Path
    l1_model: Path | None = None
    feature_mode: str = "l2_and_l1"
    lambdas: tuple = DEFAULT_LAMBDAS
    ks: tuple = DEFAULT_KS
    optional_silence: bool = True

    def __post_init__(self):
        if self.feature_mode not in FEATURE_MODES:
            raise InvalidConfig(f"feature_mode must be one of {FEATURE_MODES}")
        if self.feature_mode == "l2_and_l1" and self.l1_model is None:
            raise InvalidConfig("feature_mode l2_and_l1 needs an l1_model path")

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path(".")) -> "ExperimentConfig":
        known = {"l2_model", "l1_model", "manifest", "out", "feature_mode", "lambdas", "ks", "optional_silence"}
        unknown = set(d) - known
        if unknown:
            raise SchemaError(f"unknown experiment config fields: {sorted(unknown)}")
        for key in ("l2_model", "manifest", "out"):
            if key not in d:
                raise SchemaError(f"experiment config misses {key!r}")

        def path(v):
            if v is None:
                return None
            p = Path(v)
            return p if p.is_absolute() else base / p

        return cls(
            l2_model=path(d["l2_model"]),
            l1_model=path(d.get("l1_model")),
            manifest=path(d["manifest"]),
            out=path(d["out"]),
            feature_mode=d.get("feature_mode", "l2_and_l1"),
            lambdas=tuple(d.get("lambdas", DEFAULT_LAMBDAS)),
            ks=tuple(d.get("ks", DEFAULT_KS)),
            optional_silence=bool(d.get("optional_silence", True)),
        )


@dataclass
class ScoredUtterance:
    speaker: str
    alignment: AlignmentResult
    records: list
    label: float | None = None


def score_corpus(utterances, m_l2: AcousticModel, m_l1: AcousticModel | None,
                 optional_silence: bool = True) -> list:
    """``utterances``: iterable of (speaker, features, phones, label)."""
    out = []
    for speaker, feats, phones, label in utterances:
        ali = force_align(feats, phones, m_l2, optional_silence)
        records = score_utterance(feats, phones, m_l2, m_l1, segments=ali.segments)
        out.append(ScoredUtterance(speaker, ali, records, label))
    return out


def build_dataset(scored, cmap: PhoneCategoryMap, use_l1: bool) -> tuple:
    """Returns ``(Dataset, list of (speaker, UtteranceFeatures))``."""
    rows = [(s.speaker, aggregate(s.records, cmap, use_l1)) for s in scored]
    labels = [s.label for s in scored]
    if any(v is None for v in labels):
        raise InvalidInput("every speaker needs an accentedness label for evaluation")
    X = np.vstack([f.values for _, f in rows])
    return Dataset(tuple(sp for sp, _ in rows), X, np.array(labels), rows[0][1].names), rows


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_artifact_manifest(out: Path, names) -> Path:
    doc = {"format_version": 1, "artifacts": {n: sha256(out / n) for n in names}}
    path = out / "artifacts.json"
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


def load_utterances(manifest, frontend: FrontendConfig = FrontendConfig()):
    lexicon = load_lexicon(manifest.lexicon)
    for s in manifest.speakers:
        feats = read_frame_matrix(s.features) if s.features is not None else extract_features(read_wav(s.audio), frontend)
        yield s.id, feats, lexicon.pronounce(s.transcript), s.label


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except DualGopError as exc:
        if exc.stage is None:
            exc.stage = name
        raise


@dataclass
class ExperimentResult:
    report: EvalReport
    artifacts: dict = field(default_factory=dict)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run the whole pipeline and write its outputs to ``cfg.out``.

    Written files: ``alignments.txt``, ``scores.tsv``, ``features.csv``,
    ``report.json``, ``report.txt`` and ``artifacts.json`` (SHA-256 of each).
    Nothing is left behind in ``cfg.out`` when a stage fails.
    """
    manifest = _stage("manifest", load_manifest, cfg.manifest)
    if len(manifest) == 0:
        raise InvalidInput("corpus manifest lists no speakers", stage="manifest")
    use_l1 = cfg.feature_mode == "l2_and_l1"
    m_l2 = _stage("acoustic-model", load_model, cfg.l2_model)
    m_l1 = _stage("acoustic-model", load_model, cfg.l1_model) if use_l1 else None
    inventory = _stage("manifest", load_inventory, manifest.inventory)
    if inventory.phones != m_l2.inventory.phones:
        raise SchemaError("manifest inventory does not match the L2 model", stage="manifest")

    out = Path(cfg.out)
    existed = out.exists()
    out.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        utts = _stage("dsp-frontend", list, load_utterances(manifest))
        scored = _stage("scoring", score_corpus, utts, m_l2, m_l1, cfg.optional_silence)
        dataset, rows = _stage("featurizer", build_dataset, scored, PhoneCategoryMap.from_inventory(inventory), use_l1)
        report = _stage("evaluator", loso_evaluate, dataset, cfg.lambdas, cfg.ks)

        outputs = [
            ("alignments.txt", lambda p: write_alignments(p, [(s.speaker, s.alignment) for s in scored])),
            ("scores.tsv", lambda p: write_scores(p, [(s.speaker, s.records) for s in scored])),
            ("features.csv", lambda p: write_features(p, rows)),
            ("report.json", lambda p: p.write_text(report.to_json())),
            ("report.txt", lambda p: p.write_text(report.to_text())),
        ]
        for name, write in outputs:
            written.append(name)
            write(out / name)
        written.append("artifacts.json")
        write_artifact_manifest(out, written[:-1])
    except BaseException:
        for name in written:
            (out / name).unlink(missing_ok=True)
        if not existed:
            shutil.rmtree(out, ignore_errors=True)
        raise
    return ExperimentResult(report, {n: out / n for n in written})
