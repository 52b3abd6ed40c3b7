"""Synthetic-accent laboratory.

A speaker with accent strength ``alpha`` in [0, 1] is simulated by sampling
frames from a generator whose every L2 phone is linearly interpolated
towards the L1 phone it maps to.  ``alpha = 0`` is a native L2 speaker,
``alpha = 1`` pronounces every phone as its L1 counterpart.  The label is
``1 + 3 * alpha`` plus Gaussian noise, clamped to the 1-4 rating scale.

All randomness derives from explicit integer seeds through
``numpy.random.SeedSequence`` and the counter-based Philox bit generator.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..acoustic import AcousticModel, GmmState, Lexicon, PhoneHmm, PhoneInventory, save_inventory, save_lexicon
from ..aligner import PhoneSegment
from ..errors import InvalidConfig, InvalidInput, SchemaError, UnknownPhone
from ..frontend import write_frame_matrix
from ..training import TrainConfig, train_monophone
from .manifest import CorpusManifest, SpeakerEntry, save_manifest


def make_rng(seed, *spawn_key) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in spawn_key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    num_speakers: int = 30
    alpha_law: str = "uniform"
    alpha_range: tuple = (0.0, 1.0)
    label_noise: float = 0.15
    phone_frames: tuple = (5, 12)      # inclusive range of frames per speech phone
    silence_frames: tuple = (5, 15)
    pause_probability: float = 0.2     # inter-word silence
    phone_map: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.label_noise < 0:
            raise InvalidConfig("label_noise must be >= 0")
        if self.alpha_law not in ("uniform",):
            raise InvalidConfig(f"unknown alpha law {self.alpha_law!r}")
        lo, hi = self.alpha_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise InvalidConfig("alpha_range must lie within [0, 1]")
        for lo, hi in (self.phone_frames, self.silence_frames):
            if not 1 <= lo <= hi:
                raise InvalidConfig("frame ranges need 1 <= low <= high")

    def sample_alpha(self, rng: np.random.Generator) -> float:
        lo, hi = self.alpha_range
        return float(rng.uniform(lo, hi))

    def label(self, alpha: float, rng: np.random.Generator) -> float:
        return float(np.clip(1.0 + 3.0 * alpha + self.label_noise * rng.standard_normal(), 1.0, 4.0))


def _rank_pairing(w2: np.ndarray, w1: np.ndarray) -> np.ndarray:
    """For each L2 component, the L1 component of the same weight rank."""
    o2 = np.argsort(-w2, kind="stable")
    o1 = np.argsort(-w1, kind="stable")
    pair = np.empty(len(w2), dtype=np.int64)
    pair[o2] = o1
    return pair


def interpolate_models(m_l2: AcousticModel, m_l1: AcousticModel, alpha: float, phone_map: dict) -> AcousticModel:
    """Generator model on the L2 inventory, each mapped phone moved towards L1.

    Mixture components are paired by weight rank and weights, means and
    variances all interpolated linearly; transitions stay those of ``m_l2``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidConfig(f"alpha must lie in [0, 1], got {alpha}")
    if m_l2.dim != m_l1.dim:
        raise InvalidInput(f"model dimensions differ: {m_l2.dim} vs {m_l1.dim}")
    unmapped = [p for p in m_l2.inventory.speech_phones if p not in phone_map]
    if unmapped:
        raise SchemaError(f"phone_map misses L2 phones {unmapped}")
    hmms = {}
    for p, h2 in m_l2.hmms.items():
        if p not in phone_map:
            hmms[p] = h2
            continue
        h1 = m_l1.hmm(phone_map[p])
        if h1.num_states != h2.num_states:
            raise InvalidInput(f"{p} -> {phone_map[p]}: state counts differ")
        states = []
        for s2, s1 in zip(h2.states, h1.states):
            if s2.num_components != s1.num_components:
                raise InvalidInput(f"{p} -> {phone_map[p]}: mixture sizes differ")
            # components stay in L2 order, each paired with its L1 rank-mate
            j = _rank_pairing(s2.weights, s1.weights)
            states.append(GmmState((1 - alpha) * s2.weights + alpha * s1.weights[j],
                                   (1 - alpha) * s2.means + alpha * s1.means[j],
                                   (1 - alpha) * s2.variances + alpha * s1.variances[j]))
        hmms[p] = PhoneHmm(p, states, h2.log_self.copy(), h2.log_next.copy())
    return AcousticModel(m_l2.inventory, hmms)


def _sample_state_frames(state: GmmState, n: int, rng: np.random.Generator) -> np.ndarray:
    comp = rng.choice(state.num_components, size=n, p=state.weights / state.weights.sum())
    z = rng.standard_normal((n, state.dim))
    return state.means[comp] + z * np.sqrt(state.variances[comp])


def sample_phone(h: PhoneHmm, n_frames: int, rng: np.random.Generator) -> np.ndarray:
    """Frames for one phone: ``n_frames`` split at random across its states in order."""
    k = h.num_states
    if n_frames < k:
        raise InvalidInput(f"{n_frames} frames cannot visit {k} states")
    cuts = np.sort(rng.choice(np.arange(1, n_frames), size=k - 1, replace=False)) if k > 1 else np.array([], int)
    bounds = np.concatenate([[0], cuts, [n_frames]])
    return np.vstack([_sample_state_frames(h.states[i], int(bounds[i + 1] - bounds[i]), rng) for i in range(k)])


def synth_speaker(gen: AcousticModel, phones, cfg: SynthConfig, seed, alpha: float | None = None):
    """Sample one utterance of ``phones`` from ``gen``.

    Returns ``(features, true segments, label)``; the label is ``None`` when
    no ``alpha`` is given.
    """
    rng = make_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    for p in phones:
        if p not in gen.hmms:
            raise UnknownPhone(p)
    sil = gen.inventory.silence
    blocks, segments, t = [], [], 0
    for p in phones:
        h = gen.hmm(p)
        lo, hi = cfg.silence_frames if p == sil else cfg.phone_frames
        n = max(int(rng.integers(lo, hi + 1)), h.num_states)
        blocks.append(sample_phone(h, n, rng))
        segments.append(PhoneSegment(p, t, t + n))
        t += n
    label = cfg.label(alpha, rng) if alpha is not None else None
    return np.vstack(blocks), segments, label


# --- the default two-language corpus ------------------------------------------

@dataclass(frozen=True)
class LabConfig:
    seed: int = 0
    dim: int = 6
    num_vowels: int = 5
    num_consonants: int = 7
    num_states: int = 3
    num_components: int = 2
    languages: tuple = ("xa", "xb")
    speakers_per_language: int = 30
    words_in_paragraph: int = 14
    phone_spread: float = 2.2          # std of L2 phone means around the origin
    l1_shift: tuple = (0.6, 0.7)       # per-language pull towards the nearest L2 neighbour
    l1_spread: float = 1.5             # orthogonal offset of each L1 phone
    l1_contrast: bool = True
    train_models: bool = True
    native_utterances: int = 16
    train: TrainConfig = TrainConfig(num_states=3, max_components=2, mixture_schedule=(1, 2), iterations=4)
    synth: SynthConfig = SynthConfig()

    def __post_init__(self):
        if len(self.l1_shift) < len(self.languages):
            raise InvalidConfig("need one l1_shift per language")


@dataclass
class Lab:
    """Ground-truth generators plus the (optionally trained) scoring models."""

    config: LabConfig
    l2_inventory: PhoneInventory
    lexicon: Lexicon
    paragraph: tuple               # shared word sequence read by every speaker
    true_l2: AcousticModel
    true_l1: dict                  # language -> AcousticModel
    phone_maps: dict               # language -> {L2 phone: L1 phone}
    l2_model: AcousticModel
    l1_models: dict

    def paragraph_phones(self) -> list:
        return self.lexicon.pronounce(self.paragraph)


@dataclass(frozen=True)
class SynthUtterance:
    speaker: str
    language: str
    alpha: float
    features: np.ndarray
    segments: list
    label: float
    transcript: tuple


def _random_gmm_hmm(phone, center, cfg: LabConfig, rng) -> PhoneHmm:
    states = []
    for _ in range(cfg.num_states):
        smean = center + 0.35 * rng.standard_normal(cfg.dim)
        means = smean + 0.3 * rng.standard_normal((cfg.num_components, cfg.dim))
        variances = rng.uniform(0.5, 1.0, size=(cfg.num_components, cfg.dim))
        weights = rng.dirichlet(np.full(cfg.num_components, 4.0))
        states.append(GmmState(weights, means, variances))
    p_self = rng.uniform(0.55, 0.75, size=cfg.num_states)
    return PhoneHmm(phone, states, np.log(p_self), np.log1p(-p_self))


def _inventory(prefix, cfg: LabConfig) -> PhoneInventory:
    vowels = [f"{prefix}v{i}" for i in range(cfg.num_vowels)]
    cons = [f"{prefix}c{i}" for i in range(cfg.num_consonants)]
    cats = {p: "vowel" for p in vowels} | {p: "consonant" for p in cons} | {"sil": "silence"}
    return PhoneInventory(tuple(vowels + cons + ["sil"]), cats)


def _silence_hmm(cfg: LabConfig, rng) -> PhoneHmm:
    center = np.zeros(cfg.dim)
    center[0] = -4.0 * cfg.phone_spread
    return _random_gmm_hmm("sil", center, cfg, rng)


def _lexicon(inv: PhoneInventory, n_words: int, rng) -> Lexicon:
    """CV(C) words; phones are drawn cyclically so every phone gets used."""
    cons = itertools.cycle([p for p in inv.speech_phones if inv.categories[p] == "consonant"])
    vowels = itertools.cycle([p for p in inv.speech_phones if inv.categories[p] == "vowel"])
    entries = {}
    for w in range(n_words):
        pron = []
        for _ in range(int(rng.integers(1, 3))):
            pron += [next(cons), next(vowels)]
        if rng.uniform() < 0.4:
            pron.append(next(cons))
        entries[f"w{w:02d}"] = [tuple(pron)]
    return Lexicon(entries)


def _native_corpus(model: AcousticModel, n_utts: int, cfg: LabConfig, rng_seed, key) -> list:
    """Native read speech for training: random phone strings framed by silence."""
    speech = list(model.inventory.speech_phones)
    corpus = []
    for u in range(n_utts):
        rng = make_rng(rng_seed, key, u)
        order = list(rng.permutation(speech)) + list(rng.choice(speech, size=len(speech)))
        phones = ["sil"] + [str(p) for p in order] + ["sil"]
        quiet = SynthConfig(pause_probability=0.0, phone_frames=cfg.synth.phone_frames,
                            silence_frames=cfg.synth.silence_frames)
        feats, _, _ = synth_speaker(model, phones, quiet, rng)
        corpus.append((feats, phones))
    return corpus


def build_lab(cfg: LabConfig = LabConfig()) -> Lab:
    rng = make_rng(cfg.seed, 0)
    l2_inv = _inventory("", cfg)
    speech = list(l2_inv.speech_phones)
    centers = {p: cfg.phone_spread * rng.standard_normal(cfg.dim) for p in speech}
    sil_hmm = _silence_hmm(cfg, rng)
    true_l2 = AcousticModel(l2_inv, {p: _random_gmm_hmm(p, centers[p], cfg, rng) for p in speech} | {"sil": sil_hmm})

    true_l1, maps = {}, {}
    for li, lang in enumerate(cfg.languages):
        lrng = make_rng(cfg.seed, 1, li)
        mapping, hmms, cats = {}, {}, {"sil": "silence"}
        for n, p in enumerate(speech):
            same = [o for o in speech if o != p and l2_inv.categories[o] == l2_inv.categories[p]]
            nearest = min(same, key=lambda o: float(np.sum((centers[o] - centers[p]) ** 2)))
            toward = centers[nearest] - centers[p]
            u = lrng.standard_normal(cfg.dim)
            u -= (u @ toward) / (toward @ toward) * toward
            offset = cfg.l1_shift[li] * toward + cfg.l1_spread * u / np.linalg.norm(u)
            q = f"{lang}_{p}"
            mapping[p] = q
            cats[q] = l2_inv.categories[p]
            hmms[q] = _random_gmm_hmm(q, centers[p] + offset, cfg, lrng)
            if cfg.l1_contrast:
                # an L1 category on the far side of the L2 phone leaves native
                # realizations halfway between two L1 phones
                r = f"{lang}_{p}x"
                cats[r] = l2_inv.categories[p]
                hmms[r] = _random_gmm_hmm(r, centers[p] - offset, cfg, lrng)
        hmms["sil"] = _silence_hmm(cfg, lrng)
        inv = PhoneInventory(tuple(hmms), cats)
        true_l1[lang] = AcousticModel(inv, hmms)
        maps[lang] = mapping

    lexicon = _lexicon(l2_inv, cfg.words_in_paragraph, make_rng(cfg.seed, 2))
    paragraph = tuple(make_rng(cfg.seed, 3).permutation(sorted(lexicon.entries)).tolist())

    if cfg.train_models:
        l2_model = train_monophone(_native_corpus(true_l2, cfg.native_utterances, cfg, cfg.seed, 10),
                                   cfg.train, l2_inv)
        l1_models = {
            lang: train_monophone(_native_corpus(m, cfg.native_utterances, cfg, cfg.seed, 11 + i),
                                  cfg.train, m.inventory)
            for i, (lang, m) in enumerate(true_l1.items())
        }
    else:
        l2_model, l1_models = true_l2, dict(true_l1)
    return Lab(cfg, l2_inv, lexicon, paragraph, true_l2, true_l1, maps, l2_model, l1_models)


def synth_corpus(lab: Lab, language: str, seed: int | None = None) -> list:
    """Accented readings of the shared paragraph for one L1 background."""
    cfg = lab.config
    seed = cfg.seed if seed is None else seed
    li = cfg.languages.index(language)
    words = lab.paragraph
    out = []
    for n in range(cfg.speakers_per_language):
        rng = make_rng(seed, 100 + li, n)
        alpha = cfg.synth.sample_alpha(rng)
        gen = interpolate_models(lab.true_l2, lab.true_l1[language], alpha, lab.phone_maps[language])
        phones = ["sil"]
        for k, w in enumerate(words):
            phones.extend(lab.lexicon.entries[w][0])
            if k < len(words) - 1 and rng.uniform() < cfg.synth.pause_probability:
                phones.append("sil")
        phones.append("sil")
        feats, segs, label = synth_speaker(gen, phones, cfg.synth, rng, alpha=alpha)
        out.append(SynthUtterance(f"{language}_s{n:03d}", language, alpha, feats, segs, label, words))
    return out


def export_lab(lab: Lab, out) -> dict:
    """Write a lab to disk as ordinary corpus files.

    Layout::

        inventory.json  lexicon.txt
        models/l2.json  models/l1_<lang>.json
        feats/<speaker>.csv
        manifest_<lang>.json
        experiment_<lang>_<mode>.json

    Returns the experiment config paths keyed by ``(lang, mode)``.
    """
    out = Path(out)
    (out / "models").mkdir(parents=True, exist_ok=True)
    (out / "feats").mkdir(exist_ok=True)
    save_inventory(out / "inventory.json", lab.l2_inventory)
    save_lexicon(out / "lexicon.txt", lab.lexicon)
    lab.l2_model.save(out / "models" / "l2.json")
    configs = {}
    for lang in lab.config.languages:
        lab.l1_models[lang].save(out / "models" / f"l1_{lang}.json")
        speakers = []
        for u in synth_corpus(lab, lang):
            fp = out / "feats" / f"{u.speaker}.csv"
            write_frame_matrix(fp, u.features)
            speakers.append(SpeakerEntry(u.speaker, lang, u.transcript, features=fp, label=u.label))
        save_manifest(out / f"manifest_{lang}.json",
                      CorpusManifest(tuple(speakers), out / "lexicon.txt", out / "inventory.json"))
        for mode in ("l2_only", "l2_and_l1"):
            doc = {"l2_model": "models/l2.json", "manifest": f"manifest_{lang}.json",
                   "out": f"runs/{lang}_{mode}", "feature_mode": mode}
            if mode == "l2_and_l1":
                doc["l1_model"] = f"models/l1_{lang}.json"
            path = out / f"experiment_{lang}_{mode}.json"
            path.write_text(json.dumps(doc, indent=1) + "\n")
            configs[(lang, mode)] = path
    return configs
