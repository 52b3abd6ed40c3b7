"""Flat-start Viterbi-EM training of monophone GMM-HMMs.

Each iteration force-aligns every utterance with the current model, then
re-estimates GMMs (one EM step on the frames each state received) and
transition probabilities (relative counts) from the best paths.  With a
fixed number of mixture components the summed best-path log-likelihood
never decreases.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .acoustic import AcousticModel, GmmState, PhoneHmm, PhoneInventory
from .aligner import force_align
from .errors import InvalidConfig, InvalidInput, SkippedUtteranceWarning, UncoveredPhone, UnknownPhone

DEAD_COMPONENT_WEIGHT = 1e-5


@dataclass(frozen=True)
class TrainConfig:
    num_states: int = 3
    max_components: int = 4
    mixture_schedule: tuple = (1, 2, 4)
    iterations: int = 5
    variance_floor: float = 1e-3
    # stop a stage early once the objective gains less than this per frame
    tolerance: float = 0.0
    transition_floor: float = 1e-3
    split_perturbation: float = 0.2
    optional_silence: bool = False

    def __post_init__(self):
        if self.num_states < 1 or self.max_components < 1 or self.iterations < 1:
            raise InvalidConfig("num_states, max_components and iterations must be positive")
        if not self.mixture_schedule or any(c < 1 for c in self.mixture_schedule):
            raise InvalidConfig("mixture_schedule needs positive component counts")
        if list(self.mixture_schedule) != sorted(self.mixture_schedule):
            raise InvalidConfig("mixture_schedule must be non-decreasing")
        if self.variance_floor <= 0 or not 0 < self.transition_floor < 0.5:
            raise InvalidConfig("variance_floor must be > 0 and transition_floor in (0, 0.5)")

    @property
    def stages(self) -> list:
        return sorted({min(c, self.max_components) for c in self.mixture_schedule})


class Accumulator:
    """Sufficient statistics over global states; ``merge`` is associative."""

    def __init__(self, num_states: int, num_components: int, dim: int):
        self.occ = np.zeros((num_states, num_components))
        self.first = np.zeros((num_states, num_components, dim))
        self.second = np.zeros((num_states, num_components, dim))
        self.n_self = np.zeros(num_states)
        self.n_next = np.zeros(num_states)
        self.objective = 0.0
        self.frames = 0

    def merge(self, other: "Accumulator") -> "Accumulator":
        out = Accumulator(*self.first.shape)
        for name in ("occ", "first", "second", "n_self", "n_next"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        out.objective = self.objective + other.objective
        out.frames = self.frames + other.frames
        return out

    def add_frames(self, g: int, frames: np.ndarray, resp: np.ndarray) -> None:
        c = resp.shape[1]
        self.occ[g, :c] += resp.sum(axis=0)
        self.first[g, :c] += resp.T @ frames
        self.second[g, :c] += resp.T @ (frames * frames)


def _responsibilities(state: GmmState, frames: np.ndarray) -> np.ndarray:
    return softmax(state.component_log_densities(frames), axis=1)


def _count_transitions(acc: Accumulator, states: np.ndarray, segments) -> None:
    for seg in segments:
        run = states[seg.start_frame:seg.end_frame]
        same = run[1:] == run[:-1]
        np.add.at(acc.n_self, run[1:][same], 1.0)
        np.add.at(acc.n_next, run[:-1][~same], 1.0)
    for prev, nxt in zip(segments[:-1], segments[1:]):
        acc.n_next[states[prev.end_frame - 1]] += 1.0


def accumulate_utterance(model: AcousticModel, frames: np.ndarray, phones, cfg: TrainConfig,
                         num_components: int) -> Accumulator:
    """Align one utterance and collect its E-step statistics."""
    ali = force_align(frames, phones, model, cfg.optional_silence)
    acc = Accumulator(model.num_states, num_components, model.dim)
    for g in np.unique(ali.states):
        sel = frames[ali.states == g]
        acc.add_frames(int(g), sel, _responsibilities(model.state(int(g)), sel))
    _count_transitions(acc, ali.states, ali.segments)
    acc.objective = ali.loglik
    acc.frames = len(frames)
    return acc


def _flat_start_accumulate(inventory: PhoneInventory, num_states: int, frames: np.ndarray,
                           phones, dim: int) -> Accumulator:
    """Statistics from a uniform split of the frames across the transcript's states."""
    offsets = {p: i * num_states for i, p in enumerate(inventory.phones)}
    seq = [offsets[p] + k for p in phones for k in range(num_states)]
    T = len(frames)
    assign = np.array(seq)[(np.arange(T) * len(seq)) // T]
    acc = Accumulator(len(inventory.phones) * num_states, 1, dim)
    for g in np.unique(assign):
        sel = frames[assign == g]
        acc.add_frames(int(g), sel, np.ones((len(sel), 1)))
    # every occurrence of every state is a run; runs end in an advance
    pos = np.flatnonzero(assign[1:] != assign[:-1])
    np.add.at(acc.n_next, assign[pos], 1.0)
    same = assign[1:] == assign[:-1]
    np.add.at(acc.n_self, assign[1:][same], 1.0)
    return acc


def _reestimate(model: AcousticModel | None, inventory: PhoneInventory, num_states: int,
                acc: Accumulator, cfg: TrainConfig) -> AcousticModel:
    hmms = {}
    g = 0
    for p in inventory.phones:
        old = model.hmm(p) if model is not None else None
        states, log_self, log_next = [], [], []
        for i in range(num_states):
            occ = acc.occ[g]
            ncomp = old.states[i].num_components if old is not None else acc.occ.shape[1]
            occ = occ[:ncomp]
            live = occ > 1e-10
            if not live.any():
                raise InvalidInput(f"state {i} of phone {p!r} received no frames")
            safe = np.where(live, occ, 1.0)[:, None]
            means = acc.first[g, :ncomp] / safe
            var = acc.second[g, :ncomp] / safe - means * means
            var = np.maximum(var, cfg.variance_floor)
            weights = occ / occ.sum()
            if not live.all():
                means[~live] = old.states[i].means[~live]
                var[~live] = old.states[i].variances[~live]
                weights = np.where(live, weights, DEAD_COMPONENT_WEIGHT)
                weights = weights / weights.sum()
            states.append(GmmState(weights, means, var))

            total = acc.n_self[g] + acc.n_next[g]
            if total > 0:
                ps = np.clip(acc.n_self[g] / total, cfg.transition_floor, 1.0 - cfg.transition_floor)
            elif old is not None:
                ps = float(np.exp(old.log_self[i]))
            else:
                ps = 0.5
            log_self.append(np.log(ps))
            log_next.append(np.log1p(-ps))
            g += 1
        hmms[p] = PhoneHmm(p, states, log_self, log_next)
    return AcousticModel(inventory, hmms)


def split_components(state: GmmState, target: int, perturbation: float = 0.2) -> GmmState:
    """Grow a GMM by repeatedly splitting its heaviest component.

    The two halves get half the weight each and means shifted by
    +/- ``perturbation`` standard deviations.
    """
    w, mu, var = state.weights.copy(), state.means.copy(), state.variances.copy()
    while len(w) < target:
        k = int(np.argmax(w))
        shift = perturbation * np.sqrt(var[k])
        w = np.concatenate([w, [w[k] / 2.0]])
        w[k] /= 2.0
        mu = np.vstack([mu, mu[k] - shift])
        mu[k] = mu[k] + shift
        var = np.vstack([var, var[k]])
    return GmmState(w, mu, var)


def _grow(model: AcousticModel, target: int, cfg: TrainConfig) -> AcousticModel:
    hmms = {
        p: PhoneHmm(p, [split_components(s, target, cfg.split_perturbation) for s in h.states],
                    h.log_self, h.log_next)
        for p, h in model.hmms.items()
    }
    return AcousticModel(model.inventory, hmms)


def train_monophone(corpus, cfg: TrainConfig, inventory: PhoneInventory, *, on_iteration=None) -> AcousticModel:
    """Train a monophone GMM-HMM from ``(features, phone sequence)`` pairs.

    ``on_iteration(num_components, iteration, objective, frames)`` is called
    after each alignment pass with the summed best-path log-likelihood under
    the model that produced it.
    """
    inventory.validate()
    corpus = list(corpus)
    if not corpus:
        raise InvalidInput("empty training corpus")
    for _, phones in corpus:
        for p in phones:
            if p not in inventory.categories:
                raise UnknownPhone(p)
    kept = []
    for n, (frames, phones) in enumerate(corpus):
        frames = np.asarray(frames, dtype=np.float64)
        if len(frames) < cfg.num_states * len(phones) or not phones:
            warnings.warn(f"utterance {n}: {len(frames)} frames too short for {len(phones)} phones",
                          SkippedUtteranceWarning, stacklevel=2)
            continue
        kept.append((frames, list(phones)))
    if not kept:
        raise InvalidInput("every utterance was too short to train on")
    seen = {p for _, phones in kept for p in phones}
    uncovered = [p for p in inventory.phones if p not in seen]
    if uncovered:
        raise UncoveredPhone(uncovered)
    dims = {f.shape[1] for f, _ in kept}
    if len(dims) != 1:
        raise InvalidInput(f"feature dimensions differ across the corpus: {sorted(dims)}")
    dim = dims.pop()

    acc = None
    for frames, phones in kept:
        a = _flat_start_accumulate(inventory, cfg.num_states, frames, phones, dim)
        acc = a if acc is None else acc.merge(a)
    model = _reestimate(None, inventory, cfg.num_states, acc, cfg)

    for ncomp in cfg.stages:
        model = _grow(model, ncomp, cfg)
        prev = None
        for it in range(cfg.iterations):
            acc = None
            for frames, phones in kept:
                a = accumulate_utterance(model, frames, phones, cfg, ncomp)
                acc = a if acc is None else acc.merge(a)
            if on_iteration is not None:
                on_iteration(ncomp, it, acc.objective, acc.frames)
            model = _reestimate(model, inventory, cfg.num_states, acc, cfg)
            if prev is not None and cfg.tolerance > 0 and (acc.objective - prev) / acc.frames < cfg.tolerance:
                break
            prev = acc.objective
    model.validate(variance_floor=cfg.variance_floor)
    return model


def viterbi_objective(model: AcousticModel, corpus, optional_silence: bool = False) -> float:
    """Summed best-path log-likelihood of a corpus under ``model``."""
    return float(sum(force_align(f, phones, model, optional_silence).loglik for f, phones in corpus))

