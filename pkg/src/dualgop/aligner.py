"""Log-domain Viterbi: forced alignment, single-phone segment scoring and
phone-loop decoding.

All three search a graph of HMM-state nodes.  Ties are broken towards the
lowest node index, both when choosing a predecessor and when choosing the
final node, so results are deterministic.  A path's score is the sum of its
emission log-likelihoods and the arcs it takes; no exit arc is charged
after the last frame.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .acoustic import AcousticModel, PhoneHmm, gmm_log_likelihood
from .errors import InfeasibleAlignment, InvalidInput, IoError, SchemaError, UnknownPhone

NEG_INF = -np.inf


@dataclass(frozen=True)
class PhoneSegment:
    phone: str
    start_frame: int
    end_frame: int
    loglik: float = 0.0

    def __post_init__(self):
        if not self.start_frame < self.end_frame:
            raise InvalidInput(f"segment needs start < end, got [{self.start_frame}, {self.end_frame})")

    @property
    def num_frames(self) -> int:
        return self.end_frame - self.start_frame

    @property
    def span(self) -> tuple:
        return (self.start_frame, self.end_frame)


@dataclass(frozen=True)
class StatePath:
    """Best path over a frame span.

    ``states`` holds global state indices when decoded against a full
    model, or positions within the HMM for single-phone scoring.
    """

    start_frame: int
    states: np.ndarray
    phones: tuple
    loglik: float

    def __len__(self):
        return len(self.states)

    def frames_of(self, phone) -> np.ndarray:
        """Absolute frame indices whose path state belongs to ``phone``."""
        mask = np.array([p == phone for p in self.phones], dtype=bool)
        return self.start_frame + np.flatnonzero(mask)


@dataclass(frozen=True)
class AlignmentResult:
    segments: list
    loglik: float
    states: np.ndarray  # per-frame global state index

    @property
    def num_frames(self) -> int:
        return len(self.states)


# --- generic sparse Viterbi ------------------------------------------------

@dataclass(frozen=True)
class _Network:
    state: np.ndarray   # (N,) global state emitted by each node
    pred: np.ndarray    # (N, K) predecessor nodes, ascending, padded
    weight: np.ndarray  # (N, K) arc log-probs, -inf on padding
    start: np.ndarray   # (N,) start log-probs, -inf where not allowed
    final: np.ndarray   # (N,) bool, node may end the path


def _build_network(states, arcs, start, final) -> _Network:
    """``arcs`` maps dest node -> {src node: log-prob}; duplicate arcs keep the max."""
    n = len(states)
    K = max(1, max((len(v) for v in arcs.values()), default=1))
    pred = np.zeros((n, K), dtype=np.int64)
    weight = np.full((n, K), NEG_INF)
    for dst, srcs in arcs.items():
        for k, src in enumerate(sorted(srcs)):
            pred[dst, k] = src
            weight[dst, k] = srcs[src]
    return _Network(np.asarray(states, dtype=np.int64), pred, weight,
                    np.asarray(start, dtype=np.float64), np.asarray(final, dtype=bool))


def _add_arc(arcs, src, dst, w):
    srcs = arcs.setdefault(dst, {})
    srcs[src] = max(srcs.get(src, NEG_INF), w)


def _viterbi(net: _Network, emis: np.ndarray):
    """Returns (score, node path, per-frame increments) or (-inf, None, None)."""
    T = emis.shape[0]
    N = len(net.state)
    rows = np.arange(N)
    e = emis[:, net.state]
    delta = net.start + e[0]
    back = np.zeros((T, N), dtype=np.int64)
    arc = np.zeros((T, N))
    for t in range(1, T):
        cand = delta[net.pred] + net.weight
        k = np.argmax(cand, axis=1)
        back[t] = net.pred[rows, k]
        arc[t] = net.weight[rows, k]
        delta = cand[rows, k] + e[t]
    end_scores = np.where(net.final, delta, NEG_INF)
    last = int(np.argmax(end_scores))
    score = float(end_scores[last])
    if score == NEG_INF:
        return NEG_INF, None, None
    path = np.empty(T, dtype=np.int64)
    path[-1] = last
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    inc = e[np.arange(T), path].copy()
    inc[0] += net.start[path[0]]
    inc[1:] += arc[np.arange(1, T), path[1:]]
    return score, path, inc


def _emissions(f, m: AcousticModel, emissions=None) -> np.ndarray:
    if emissions is not None:
        return np.asarray(emissions)
    return m.emission_matrix(f)


def _check_span(span, T):
    start, end = int(span[0]), int(span[1])
    if end <= start:
        raise InvalidInput(f"empty span [{start}, {end})")
    if start < 0 or end > T:
        raise InvalidInput(f"span [{start}, {end}) outside [0, {T})")
    return start, end


# --- forced alignment --------------------------------------------------------

def _alignment_network(phones, m: AcousticModel, allow_optional_silence: bool):
    sil = m.inventory.silence
    if allow_optional_silence and sil is None:
        raise InvalidInput("optional silence requested but the model has no silence phone")
    slots = []  # (phone, optional)
    for j, p in enumerate(phones):
        if allow_optional_silence:
            slots.append((sil, True))
        slots.append((p, False))
    if allow_optional_silence:
        slots.append((sil, True))

    states, slot_of, first, last = [], [], [], []
    for s, (p, _) in enumerate(slots):
        g = m.states_of(p)
        first.append(len(states))
        states.extend(g.tolist())
        slot_of.extend([s] * len(g))
        last.append(len(states) - 1)

    arcs = {}
    for s, (p, _) in enumerate(slots):
        h = m.hmm(p)
        for i in range(h.num_states):
            node = first[s] + i
            _add_arc(arcs, node, node, h.log_self[i])
            if i > 0:
                _add_arc(arcs, node - 1, node, h.log_next[i - 1])

    # slot s may be followed by slot s+1, or skip one optional slot to s+2
    start = np.full(len(states), NEG_INF)
    final = np.zeros(len(states), dtype=bool)
    n = len(slots)
    for s in range(n):
        exit_w = m.hmm(slots[s][0]).log_next[-1]
        for nxt in (s + 1, s + 2):
            if nxt >= n:
                break
            _add_arc(arcs, last[s], first[nxt], exit_w)
            if not slots[nxt][1]:
                break
    for s in range(n):
        start[first[s]] = 0.0
        if not slots[s][1]:
            break
    for s in range(n - 1, -1, -1):
        final[last[s]] = True
        if not slots[s][1]:
            break
    return _build_network(states, arcs, start, final), np.array(slot_of), slots


def force_align(f, phones, m: AcousticModel, allow_optional_silence: bool = False,
                *, emissions=None) -> AlignmentResult:
    """Maximum-likelihood segmentation of ``f`` into the phone sequence ``phones``.

    With ``allow_optional_silence`` a silence phone may be inserted at either
    edge and between any two consecutive phones; it yields extra segments.
    """
    phones = list(phones)
    if not phones:
        raise InvalidInput("empty transcript")
    for p in phones:
        if p not in m.hmms:
            raise UnknownPhone(p)
    emis = _emissions(f, m, emissions)
    T = emis.shape[0]
    need = sum(m.hmm(p).num_states for p in phones)
    if T < need:
        raise InfeasibleAlignment(f"{T} frames cannot cover {need} mandatory HMM states")
    net, slot_of, slots = _alignment_network(phones, m, allow_optional_silence)
    score, path, inc = _viterbi(net, emis)
    if path is None:
        raise InfeasibleAlignment("no admissible path")
    node_slots = slot_of[path]
    segments = []
    t0 = 0
    for t in range(1, T + 1):
        if t == T or node_slots[t] != node_slots[t0]:
            segments.append(PhoneSegment(slots[node_slots[t0]][0], t0, t, float(inc[t0:t].sum())))
            t0 = t
    return AlignmentResult(segments, score, net.state[path])


# --- single-phone segment scoring ------------------------------------------

def _chain_viterbi(emis: np.ndarray, log_self: np.ndarray, log_next: np.ndarray):
    """Left-to-right chain entered at state 0 and left from its last state.

    ``emis`` is (L, n).  When L < n the chain is truncated to its first L
    states so the path still ends in the (new) last state.
    """
    L, n = emis.shape
    n = min(n, L)
    emis = emis[:, :n]
    delta = np.full(n, NEG_INF)
    delta[0] = emis[0, 0]
    back = np.zeros((L, n), dtype=np.int64)
    stay_w = log_self[:n]
    adv_w = log_next[: n - 1]
    idx = np.arange(n)
    for t in range(1, L):
        stay = delta + stay_w
        adv = np.full(n, NEG_INF)
        adv[1:] = delta[:-1] + adv_w
        # ties go to the lower predecessor index, i.e. the advance arc
        take_adv = adv >= stay
        back[t] = np.where(take_adv, idx - 1, idx)
        delta = np.where(take_adv, adv, stay) + emis[t]
    score = float(delta[n - 1])
    path = np.empty(L, dtype=np.int64)
    path[-1] = n - 1
    for t in range(L - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return score, path


def segment_viterbi_loglik(f, span, h: PhoneHmm, *, emissions=None):
    """Best-path log-likelihood of frames ``span`` under the single phone HMM ``h``.

    ``emissions`` may carry precomputed (T, n_states) state log-likelihoods
    for the whole utterance.  Returns ``(loglik, StatePath)`` where the path
    holds state positions within ``h``.
    """
    if emissions is None:
        f = np.asarray(f, dtype=np.float64)
        T = f.shape[0]
    else:
        T = emissions.shape[0]
    start, end = _check_span(span, T)
    if emissions is None:
        frames = f[start:end]
        n = min(h.num_states, end - start)
        emis = np.column_stack([gmm_log_likelihood(h.states[i], frames) for i in range(n)])
    else:
        emis = np.asarray(emissions)[start:end]
    score, path = _chain_viterbi(emis, h.log_self, h.log_next)
    return score, StatePath(start, path, (h.phone,) * len(path), score)


# --- phone-loop decoding -----------------------------------------------------

_LOOP_CACHE: "weakref.WeakKeyDictionary[AcousticModel, _Network]" = weakref.WeakKeyDictionary()


def _loop_network(m: AcousticModel) -> _Network:
    net = _LOOP_CACHE.get(m)
    if net is not None:
        return net
    S = m.num_states
    arcs = {}
    firsts, lasts = [], []
    for p in m.phones:
        g = m.states_of(p)
        h = m.hmm(p)
        firsts.append(int(g[0]))
        lasts.append((int(g[-1]), h.log_next[-1]))
        for i, node in enumerate(g):
            _add_arc(arcs, int(node), int(node), h.log_self[i])
            if i > 0:
                _add_arc(arcs, int(node) - 1, int(node), h.log_next[i - 1])
    # any phone end may be followed by any phone start, no loop penalty
    for dst in firsts:
        for src, w in lasts:
            _add_arc(arcs, src, dst, w)
    start = np.full(S, NEG_INF)
    start[firsts] = 0.0
    net = _build_network(np.arange(S), arcs, start, np.ones(S, dtype=bool))
    _LOOP_CACHE[m] = net
    return net


def phone_loop_decode(f, span, m: AcousticModel, *, emissions=None) -> StatePath:
    """Unconstrained best state path over ``span`` through a loop of all phones.

    Paths start in any phone's first state and may end in any state.
    """
    emis = _emissions(f, m, emissions)
    start, end = _check_span(span, emis.shape[0])
    net = _loop_network(m)
    score, path, _ = _viterbi(net, emis[start:end])
    states = net.state[path]
    return StatePath(start, states, tuple(m.state_index[g][0] for g in states), score)


# --- alignment files ----------------------------------------------------------
# One whitespace-separated record per line:
#   utt_id phone start_frame end_frame loglik
# start inclusive, end exclusive; loglik is the segment's share of the best
# path score (its emissions plus every arc entering its frames).

ALIGNMENT_HEADER = "# utt_id phone start_frame end_frame loglik"


def write_alignments(path, alignments) -> None:
    """``alignments``: iterable of (utt_id, AlignmentResult)."""
    lines = [ALIGNMENT_HEADER]
    for utt, ali in alignments:
        for s in ali.segments:
            lines.append(f"{utt} {s.phone} {s.start_frame} {s.end_frame} {s.loglik!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_alignments(path) -> dict:
    """Returns utt_id -> list of PhoneSegment, in file order."""
    path = Path(path)
    if not path.exists():
        raise IoError(f"{path}: no such file")
    out = {}
    for n, ln in enumerate(path.read_text().splitlines(), 1):
        if not ln.strip() or ln.startswith("#"):
            continue
        parts = ln.split()
        if len(parts) != 5:
            raise SchemaError(f"{path}:{n}: expected 5 columns, got {len(parts)}")
        utt, phone, s, e, ll = parts
        out.setdefault(utt, []).append(PhoneSegment(phone, int(s), int(e), float(ll)))
    return out
