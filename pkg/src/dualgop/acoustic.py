"""Phone inventories, lexicons and monophone GMM-HMM acoustic models.

Every phone owns a strict left-to-right HMM (self-loop or advance, no
skips).  The model flattens all HMM states into one global state list in
inventory order; a phone's states are a contiguous run of that list.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInput, IoError, SchemaError, UnknownPhone

FORMAT_VERSION = 1
CATEGORIES = ("vowel", "consonant", "silence")
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PhoneInventory:
    phones: tuple
    categories: dict

    def __post_init__(self):
        phones = tuple(self.phones)
        object.__setattr__(self, "phones", phones)
        if len(set(phones)) != len(phones):
            raise SchemaError("phone symbols must be unique")
        missing = [p for p in phones if p not in self.categories]
        if missing:
            raise SchemaError(f"phones without a category: {missing}")
        bad = {p: c for p, c in self.categories.items() if c not in CATEGORIES}
        if bad:
            raise SchemaError(f"unknown categories: {bad}")
        if [self.categories[p] for p in phones].count("silence") > 1:
            raise SchemaError("inventory has more than one silence phone")

    def validate(self) -> None:
        """Full invariant check for inventories used in training and files.

        Direct construction also admits minimal inventories (a single phone,
        no silence) that decoding and scoring handle fine.
        """
        cats = [self.categories[p] for p in self.phones]
        if cats.count("silence") != 1:
            raise SchemaError("inventory needs exactly one silence phone")
        if "vowel" not in cats or "consonant" not in cats:
            raise SchemaError("inventory needs at least one vowel and one consonant")

    @property
    def silence(self) -> str | None:
        return next((p for p in self.phones if self.categories[p] == "silence"), None)

    @property
    def speech_phones(self) -> tuple:
        return tuple(p for p in self.phones if self.categories[p] != "silence")

    def index(self, phone) -> int:
        try:
            return self.phones.index(phone)
        except ValueError:
            raise UnknownPhone(phone) from None

    def to_dict(self):
        return {"phones": [{"symbol": p, "category": self.categories[p]} for p in self.phones]}

    @classmethod
    def from_dict(cls, d):
        try:
            entries = d["phones"]
            inv = cls(tuple(e["symbol"] for e in entries), {e["symbol"]: e["category"] for e in entries})
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed inventory: {exc}") from exc
        inv.validate()
        return inv


def load_inventory(path) -> PhoneInventory:
    return PhoneInventory.from_dict(_read_json(path))


def save_inventory(path, inv: PhoneInventory) -> None:
    doc = {"format_version": FORMAT_VERSION, **inv.to_dict()}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


@dataclass
class Lexicon:
    """Word -> list of pronunciations (tuples of phone symbols)."""

    entries: dict = field(default_factory=dict)

    def validate(self, inventory: PhoneInventory) -> None:
        for word, prons in self.entries.items():
            for pron in prons:
                if not pron:
                    raise SchemaError(f"empty pronunciation for {word!r}")
                for p in pron:
                    if p not in inventory.categories:
                        raise UnknownPhone(p)

    def pronounce(self, words) -> list:
        """Phone sequence for a word sequence, first pronunciation of each word."""
        phones = []
        for w in words:
            if w not in self.entries:
                raise InvalidInput(f"word {w!r} is not in the lexicon")
            phones.extend(self.entries[w][0])
        return phones


def load_lexicon(path) -> Lexicon:
    """Kaldi-style ``lexicon.txt``: one ``word phone phone ...`` line per pronunciation."""
    path = Path(path)
    if not path.exists():
        raise IoError(f"{path}: no such file")
    entries = {}
    for ln in path.read_text().splitlines():
        parts = ln.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) < 2:
            raise SchemaError(f"{path}: empty pronunciation for {parts[0]!r}")
        entries.setdefault(parts[0], []).append(tuple(parts[1:]))
    return Lexicon(entries)


def save_lexicon(path, lex: Lexicon) -> None:
    lines = [f"{w} {' '.join(pron)}" for w, prons in lex.entries.items() for pron in prons]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class GmmState:
    """Diagonal-covariance Gaussian mixture.

    ``weights`` is (C,), ``means`` and ``variances`` are (C, D).
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.variances = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if self.means.shape != self.variances.shape or self.means.shape[0] != len(self.weights):
            raise InvalidInput("GMM weights/means/variances shapes disagree")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def num_components(self) -> int:
        return len(self.weights)

    def component_log_densities(self, frames: np.ndarray) -> np.ndarray:
        """(T, D) frames -> (T, C) of log w_k + log N(x; mu_k, var_k)."""
        const = np.log(self.weights) - 0.5 * (self.dim * LOG_2PI + np.log(self.variances).sum(axis=1))
        diff = frames[:, None, :] - self.means[None, :, :]
        return const[None, :] - 0.5 * (diff * diff / self.variances[None, :, :]).sum(axis=2)


def gmm_log_likelihood(s: GmmState, frame) -> float | np.ndarray:
    """log sum_k w_k N(frame; mu_k, diag var_k), evaluated with log-sum-exp.

    Accepts one feature row (returns a float) or a (T, D) matrix (returns (T,)).
    """
    x = np.asarray(frame, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != s.dim:
        raise InvalidInput(f"frame dimension {x.shape[1]} != model dimension {s.dim}")
    out = logsumexp(s.component_log_densities(x), axis=1)
    return float(out[0]) if single else out


@dataclass
class PhoneHmm:
    """Left-to-right HMM; ``log_self[i]`` and ``log_next[i]`` leave state i."""

    phone: str
    states: list
    log_self: np.ndarray
    log_next: np.ndarray

    def __post_init__(self):
        self.log_self = np.asarray(self.log_self, dtype=np.float64)
        self.log_next = np.asarray(self.log_next, dtype=np.float64)
        if not self.states:
            raise InvalidInput(f"HMM for {self.phone!r} has no states")
        if self.log_self.shape != (len(self.states),) or self.log_next.shape != (len(self.states),):
            raise InvalidInput(f"HMM for {self.phone!r}: transition arrays must have one entry per state")

    @property
    def num_states(self) -> int:
        return len(self.states)

    def check_stochastic(self, tol=1e-8) -> None:
        total = np.exp(self.log_self) + np.exp(self.log_next)
        if np.any(np.abs(total - 1.0) > tol):
            raise InvalidInput(f"HMM for {self.phone!r}: transition probabilities do not sum to 1")


class AcousticModel:
    """Phone inventory plus one HMM per phone, with a flat global state index.

    ``state_index[g] == (phone, position)``; ``states_of(p)`` gives the
    global indices of phone p's states (the set S_p), and all global
    indices together are S.  Instances are treated as immutable.
    """

    def __init__(self, inventory: PhoneInventory, hmms: dict):
        self.inventory = inventory
        missing = [p for p in inventory.phones if p not in hmms]
        if missing:
            raise InvalidInput(f"phones without an HMM: {missing}")
        self.hmms = {p: hmms[p] for p in inventory.phones}
        dims = {s.dim for h in self.hmms.values() for s in h.states}
        if len(dims) != 1:
            raise InvalidInput(f"HMM states disagree on feature dimension: {sorted(dims)}")
        self.dim = dims.pop()
        self.state_index = [(p, i) for p in inventory.phones for i in range(self.hmms[p].num_states)]
        offsets, off = {}, 0
        for p in inventory.phones:
            offsets[p] = off
            off += self.hmms[p].num_states
        self._offsets = offsets

    @property
    def phones(self) -> tuple:
        return self.inventory.phones

    @property
    def num_states(self) -> int:
        return len(self.state_index)

    def hmm(self, phone) -> PhoneHmm:
        try:
            return self.hmms[phone]
        except KeyError:
            raise UnknownPhone(phone) from None

    def states_of(self, phone) -> np.ndarray:
        h = self.hmm(phone)
        return np.arange(self._offsets[phone], self._offsets[phone] + h.num_states)

    def state(self, g: int) -> GmmState:
        p, i = self.state_index[g]
        return self.hmms[p].states[i]

    @cached_property
    def phone_of_state(self) -> np.ndarray:
        """Inventory index of the phone owning each global state."""
        return np.array([self.inventory.phones.index(p) for p, _ in self.state_index])

    @cached_property
    def _stacked(self):
        cmax = max(s.num_components for h in self.hmms.values() for s in h.states)
        S, D = self.num_states, self.dim
        const = np.full((S, cmax), -np.inf)
        means = np.zeros((S, cmax, D))
        inv_var = np.ones((S, cmax, D))
        for g in range(S):
            s = self.state(g)
            c = s.num_components
            const[g, :c] = np.log(s.weights) - 0.5 * (D * LOG_2PI + np.log(s.variances).sum(axis=1))
            means[g, :c] = s.means
            inv_var[g, :c] = 1.0 / s.variances
        return const, means, inv_var

    def emission_matrix(self, frames: np.ndarray) -> np.ndarray:
        """(T, D) frames -> (T, S) GMM log-likelihood of every global state."""
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] != self.dim:
            raise InvalidInput(f"expected (T, {self.dim}) features, got shape {frames.shape}")
        const, means, inv_var = self._stacked
        out = np.empty((frames.shape[0], self.num_states))
        # chunked over states to bound the (T, S, C, D) temporary
        step = max(1, 4096 // max(1, const.shape[1] * self.dim))
        for lo in range(0, self.num_states, step):
            hi = min(lo + step, self.num_states)
            diff = frames[:, None, None, :] - means[None, lo:hi]
            comp = const[None, lo:hi] - 0.5 * np.einsum("tscd,scd->tsc", diff * diff, inv_var[lo:hi])
            out[:, lo:hi] = logsumexp(comp, axis=2)
        return out

    def validate(self, tol=1e-8, variance_floor=None) -> None:
        for h in self.hmms.values():
            h.check_stochastic(tol)
            for s in h.states:
                if np.any(s.weights <= 0) or abs(s.weights.sum() - 1.0) > tol:
                    raise InvalidInput(f"{h.phone}: mixture weights must be positive and sum to 1")
                if variance_floor is not None and np.any(s.variances < variance_floor):
                    raise InvalidInput(f"{h.phone}: variance below floor")
                if np.any(s.variances <= 0):
                    raise InvalidInput(f"{h.phone}: non-positive variance")

    # --- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "dim": self.dim,
            "inventory": self.inventory.to_dict(),
            "hmms": [
                {
                    "phone": p,
                    "log_self": [float(v) for v in h.log_self],
                    "log_next": [float(v) for v in h.log_next],
                    "states": [
                        {
                            "weights": [float(v) for v in s.weights],
                            "means": [[float(v) for v in row] for row in s.means],
                            "variances": [[float(v) for v in row] for row in s.variances],
                        }
                        for s in h.states
                    ],
                }
                for p, h in self.hmms.items()
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AcousticModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise SchemaError(f"unsupported model format_version {d.get('format_version')!r}")
        try:
            inv = PhoneInventory.from_dict(d["inventory"])
            hmms = {}
            for e in d["hmms"]:
                states = [GmmState(s["weights"], s["means"], s["variances"]) for s in e["states"]]
                hmms[e["phone"]] = PhoneHmm(e["phone"], states, e["log_self"], e["log_next"])
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed model document: {exc}") from exc
        model = cls(inv, hmms)
        model.validate()
        return model

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())


def load_model(path) -> AcousticModel:
    return AcousticModel.from_dict(_read_json(path))


def _read_json(path):
    path = Path(path)
    if not path.exists():
        raise IoError(f"{path}: no such file")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
