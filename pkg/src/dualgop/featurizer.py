"""Fixed-dimension utterance features from per-phone scores.

Coordinates are ordered score-major::

    for score in (psl2, psl1):
        for category in (vowel, consonant, combined):
            min, mean, std, nstd

where ``combined`` pools vowels and consonants and ``nstd`` is the
standard deviation divided by the (signed) mean.  12 coordinates with the
L2 score only, 24 with both.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .acoustic import PhoneInventory
from .errors import InsufficientPhones, InvalidInput, IoError, SchemaError

SCORES = ("psl2", "psl1")
GROUPS = ("vowel", "consonant", "combined")
STATS = ("min", "mean", "std", "nstd")
MEAN_EPS = 1e-12


def feature_names(use_l1: bool = True) -> list:
    scores = SCORES if use_l1 else SCORES[:1]
    return [f"{s}_{g}_{st}" for s in scores for g in GROUPS for st in STATS]


@dataclass(frozen=True)
class PhoneCategoryMap:
    categories: dict  # phone -> "vowel" | "consonant"

    def __post_init__(self):
        bad = {p: c for p, c in self.categories.items() if c not in ("vowel", "consonant")}
        if bad:
            raise SchemaError(f"phones must be vowel or consonant: {bad}")

    @classmethod
    def from_inventory(cls, inv: PhoneInventory) -> "PhoneCategoryMap":
        return cls({p: inv.categories[p] for p in inv.speech_phones})

    def members(self, group: str, phones) -> np.ndarray:
        if group == "combined":
            return np.ones(len(phones), dtype=bool)
        return np.array([self.categories[p] == group for p in phones], dtype=bool)


@dataclass(frozen=True)
class UtteranceFeatures:
    values: np.ndarray
    names: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if len(values) not in (12, 24) or len(values) != len(self.names):
            raise InvalidInput(f"utterance features must have 12 or 24 coordinates, got {len(values)}")

    @property
    def dim(self) -> int:
        return len(self.values)

    def __getitem__(self, name):
        return self.values[self.names.index(name)]


def _stats(x: np.ndarray) -> list:
    mean = x.mean()
    std = x.std()
    nstd = 0.0 if abs(mean) < MEAN_EPS else std / mean
    return [x.min(), mean, std, nstd]


def aggregate(records, cmap: PhoneCategoryMap, use_l1: bool = True) -> UtteranceFeatures:
    records = list(records)
    phones = [r.phone for r in records]
    for p in phones:
        if p not in cmap.categories:
            raise InvalidInput(f"phone {p!r} has no vowel/consonant category")
    for group in ("vowel", "consonant"):
        n = int(cmap.members(group, phones).sum())
        if n < 2:
            raise InsufficientPhones(group, n)
    columns = {"psl2": np.array([r.ps_l2 for r in records], dtype=np.float64)}
    if use_l1:
        if any(r.ps_l1 is None for r in records):
            raise InvalidInput("records carry no L1 score; rerun scoring with an L1 model")
        columns["psl1"] = np.array([r.ps_l1 for r in records], dtype=np.float64)
    values = []
    for score, col in columns.items():
        for group in GROUPS:
            values.extend(_stats(col[cmap.members(group, phones)]))
    return UtteranceFeatures(np.array(values), tuple(feature_names(use_l1)))


# --- feature files -------------------------------------------------------------
# CSV: header "utt_id,<coordinate names...>", then one row per utterance.

def write_features(path, rows) -> None:
    """``rows``: iterable of (utt_id, UtteranceFeatures), all the same dimension."""
    rows = list(rows)
    if not rows:
        raise InvalidInput("no utterance features to write")
    names = rows[0][1].names
    lines = [",".join(("utt_id",) + tuple(names))]
    for utt, feats in rows:
        if feats.names != names:
            raise InvalidInput("feature rows disagree on dimension")
        lines.append(",".join([utt] + [repr(float(v)) for v in feats.values]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_features(path) -> dict:
    """Returns utt_id -> UtteranceFeatures, in file order."""
    path = Path(path)
    if not path.exists():
        raise IoError(f"{path}: no such file")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise SchemaError(f"{path}: empty feature file")
    header = lines[0].split(",")
    if header[0] != "utt_id" or tuple(header[1:]) not in (tuple(feature_names(False)), tuple(feature_names(True))):
        raise SchemaError(f"{path}: unexpected feature header")
    names = tuple(header[1:])
    out = {}
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise SchemaError(f"{path}: row {parts[0]!r} has {len(parts) - 1} values, expected {len(names)}")
        out[parts[0]] = UtteranceFeatures(np.array([float(v) for v in parts[1:]]), names)
    return out
