"""Command-line interface.

    dualgop <command> [--config CONFIG.json] [--seed N] [--out DIR]

Commands: train-am, align, score, featurize, evaluate, synth,
run-experiment.  Paths inside a config file are relative to that file.
Exit codes: 0 success, 2 schema/config error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..acoustic import load_inventory, load_model
from ..aligner import force_align, write_alignments
from ..errors import DegenerateLabels, DualGopError, SchemaError
from ..evaluator import DEFAULT_KS, DEFAULT_LAMBDAS, Dataset, loso_evaluate
from ..featurizer import PhoneCategoryMap, aggregate, read_features, write_features
from ..scoring import read_scores, score_utterance, write_scores
from ..training import TrainConfig, train_monophone
from .experiment import ExperimentConfig, load_utterances, run_experiment
from .manifest import load_manifest
from .synth import LabConfig, SynthConfig, build_lab, export_lab

log = logging.getLogger("dualgop")


def _load_config(path):
    if path is None:
        return {}, Path(".")
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: config file not found")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: config must be a JSON object")
    return doc, path.parent


def _require(cfg, key):
    if key not in cfg:
        raise SchemaError(f"config misses field {key!r}")
    return cfg[key]


def _path(base, v):
    p = Path(v)
    return p if p.is_absolute() else base / p


def _build(cls, d, name):
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - fields
    if unknown:
        raise SchemaError(f"unknown {name} fields: {sorted(unknown)}")
    d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    return cls(**d)


def _out_dir(args, cfg, base):
    out = Path(args.out) if args.out else _path(base, cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train_am(args, cfg, base):
    manifest = load_manifest(_path(base, _require(cfg, "manifest")))
    inventory = load_inventory(manifest.inventory)
    wrap = cfg.get("wrap_silence", True)
    corpus = []
    for sid, feats, phones, _ in load_utterances(manifest):
        if wrap:
            phones = [inventory.silence] + phones + [inventory.silence]
        corpus.append((feats, phones))
    tcfg = _build(TrainConfig, cfg.get("train", {}), "train")

    def report(ncomp, it, objective, frames):
        log.info("components=%d iteration=%d objective/frame=%.6f", ncomp, it, objective / frames)

    model = train_monophone(corpus, tcfg, inventory, on_iteration=report)
    path = _out_dir(args, cfg, base) / cfg.get("model_name", "model.json")
    model.save(path)
    print(path)


def cmd_align(args, cfg, base):
    manifest = load_manifest(_path(base, _require(cfg, "manifest")))
    model = load_model(_path(base, _require(cfg, "model")))
    sil = cfg.get("optional_silence", True)
    alis = [(sid, force_align(f, phones, model, sil)) for sid, f, phones, _ in load_utterances(manifest)]
    path = _out_dir(args, cfg, base) / "alignments.txt"
    write_alignments(path, alis)
    print(path)


def cmd_score(args, cfg, base):
    manifest = load_manifest(_path(base, _require(cfg, "manifest")))
    m_l2 = load_model(_path(base, _require(cfg, "l2_model")))
    m_l1 = load_model(_path(base, cfg["l1_model"])) if cfg.get("l1_model") else None
    sil = cfg.get("optional_silence", True)
    scored = [(sid, score_utterance(f, phones, m_l2, m_l1, sil)) for sid, f, phones, _ in load_utterances(manifest)]
    path = _out_dir(args, cfg, base) / "scores.tsv"
    write_scores(path, scored)
    print(path)


def cmd_featurize(args, cfg, base):
    scores = read_scores(_path(base, _require(cfg, "scores")))
    cmap = PhoneCategoryMap.from_inventory(load_inventory(_path(base, _require(cfg, "inventory"))))
    use_l1 = cfg.get("use_l1", True)
    rows = [(utt, aggregate(recs, cmap, use_l1)) for utt, recs in scores.items()]
    path = _out_dir(args, cfg, base) / "features.csv"
    write_features(path, rows)
    print(path)


def cmd_evaluate(args, cfg, base):
    feats = read_features(_path(base, _require(cfg, "features")))
    labels = load_manifest(_path(base, _require(cfg, "manifest"))).labels()
    missing = [s for s in feats if labels.get(s) is None]
    if missing:
        raise SchemaError(f"speakers without labels: {missing}")
    speakers = tuple(feats)
    d = Dataset(speakers, np.vstack([feats[s].values for s in speakers]),
                np.array([labels[s] for s in speakers]), feats[speakers[0]].names)
    report = loso_evaluate(d, cfg.get("lambdas", DEFAULT_LAMBDAS), cfg.get("ks", DEFAULT_KS))
    out = _out_dir(args, cfg, base)
    (out / "report.json").write_text(report.to_json())
    (out / "report.txt").write_text(report.to_text())
    sys.stdout.write(report.to_text())
    if report.degenerate:
        raise DegenerateLabels("predictions or labels are constant; PCC is undefined")


def lab_config_from_dict(d: dict) -> LabConfig:
    d = dict(d)
    if "train" in d:
        d["train"] = _build(TrainConfig, d["train"], "train")
    if "synth" in d:
        d["synth"] = _build(SynthConfig, d["synth"], "synth")
    return _build(LabConfig, d, "lab")


def cmd_synth(args, cfg, base):
    if args.seed is not None:
        cfg = {**cfg, "seed": args.seed}
    cfg.pop("out", None)
    lab = build_lab(lab_config_from_dict(cfg))
    out = Path(args.out) if args.out else Path("lab")
    configs = export_lab(lab, out)
    for path in configs.values():
        print(path)


def cmd_run_experiment(args, cfg, base):
    if args.out:
        cfg = {**cfg, "out": str(Path(args.out).resolve())}
    result = run_experiment(ExperimentConfig.from_dict(cfg, base))
    sys.stdout.write(result.report.to_text())
    if result.report.degenerate:
        raise DegenerateLabels("predictions or labels are constant; PCC is undefined")


COMMANDS = {
    "train-am": cmd_train_am,
    "align": cmd_align,
    "score": cmd_score,
    "featurize": cmd_featurize,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
    "run-experiment": cmd_run_experiment,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualgop", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="random seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise SchemaError("--seed must be an unsigned 64-bit integer")
        cfg, base = _load_config(args.config)
        COMMANDS[args.command](args, cfg, base)
    except DualGopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
