"""Exhaustive reference implementations used to check the decoders.

Everything here enumerates paths explicitly and is exponential; keep
instances tiny (a handful of frames and states).
"""

import itertools

import numpy as np

from dualgop.acoustic import gmm_log_likelihood


def direct_emissions(frames, model):
    """(T, S) state log-likelihoods, one gmm_log_likelihood call per cell."""
    T = len(frames)
    out = np.empty((T, model.num_states))
    for g in range(model.num_states):
        for t in range(T):
            out[t, g] = gmm_log_likelihood(model.state(g), frames[t])
    return out


def compositions(total, parts):
    """All tuples of ``parts`` positive ints summing to ``total``."""
    for cuts in itertools.combinations(range(1, total), parts - 1):
        bounds = (0,) + cuts + (total,)
        yield tuple(b - a for a, b in zip(bounds, bounds[1:]))


def _pick(cands, tol=1e-12):
    """Best score; among (near-)ties the path smallest when read backwards."""
    best = max(c[0] for c in cands)
    tied = [c for c in cands if c[0] >= best - tol]
    return min(tied, key=lambda c: tuple(reversed(c[1])))


def chain_paths(emis, chain):
    """Enumerate paths through a left-to-right ``chain`` of (column, self, next, key).

    Yields ``(score, keys)`` where ``keys`` is the per-frame node key.
    """
    T = emis.shape[0]
    L = len(chain)
    if T < L:
        return
    for durs in compositions(T, L):
        score, keys, t = 0.0, [], 0
        for i, ((col, w_self, w_next, key), d) in enumerate(zip(chain, durs)):
            score += emis[t:t + d, col].sum() + (d - 1) * w_self
            if i < L - 1:
                score += w_next
            keys += [key] * d
            t += d
        yield score, keys


def brute_force_align(emis, phones, model, optional_silence):
    """Returns ``(score, global_states)`` of the best alignment."""
    sil = model.inventory.silence
    slots = []
    for p in phones:
        if optional_silence:
            slots.append((sil, True))
        slots.append((p, False))
    if optional_silence:
        slots.append((sil, True))
    # node numbering follows slot order, then state order inside a slot
    nodes, n = [], 0
    for p, _ in slots:
        h = model.hmm(p)
        nodes.append(list(range(n, n + h.num_states)))
        n += h.num_states
    opt = [s for s, (_, o) in enumerate(slots) if o]
    cands = []
    for keep in itertools.product((False, True), repeat=len(opt)):
        dropped = {s for s, k in zip(opt, keep) if not k}
        chain = []
        for s, (p, _) in enumerate(slots):
            if s in dropped:
                continue
            h = model.hmm(p)
            g = model.states_of(p)
            for i in range(h.num_states):
                chain.append((int(g[i]), h.log_self[i], h.log_next[i], (nodes[s][i], int(g[i]))))
        for score, keys in chain_paths(emis, chain):
            cands.append((score, [k[0] for k in keys], [k[1] for k in keys]))
    if not cands:
        return None
    score, _, states = _pick(cands)
    return score, states


def brute_force_segment(emis, h):
    """Best path of a single phone HMM over every row of ``emis`` (L, n)."""
    L = emis.shape[0]
    n = min(h.num_states, L)
    chain = [(i, h.log_self[i], h.log_next[i], i) for i in range(n)]
    return _pick(list(chain_paths(emis, chain)))


def brute_force_loop(emis, model):
    """Best state sequence through the phone loop, any end state allowed."""
    T, S = emis.shape
    owner, pos, first, last, exit_w = [], [], set(), set(), {}
    for p in model.phones:
        g = model.states_of(p)
        h = model.hmm(p)
        first.add(int(g[0]))
        last.add(int(g[-1]))
        exit_w[int(g[-1])] = h.log_next[-1]
        for i in range(len(g)):
            owner.append(p)
            pos.append(i)

    def arc(a, b):
        h = model.hmm(owner[a])
        options = []
        if a == b:
            options.append(h.log_self[pos[a]])
        if b == a + 1 and owner[b] == owner[a]:
            options.append(h.log_next[pos[a]])
        if a in last and b in first:
            options.append(exit_w[a])
        return max(options) if options else None

    cands = []
    for seq in itertools.product(range(S), repeat=T):
        if seq[0] not in first:
            continue
        score = emis[0, seq[0]]
        for t in range(1, T):
            w = arc(seq[t - 1], seq[t])
            if w is None:
                break
            score += w + emis[t, seq[t]]
        else:
            cands.append((score, list(seq)))
    return _pick(cands)


# --- random decoder instances ------------------------------------------------

def _tiny_model(rng, ties):
    """At most 4 states in total; ``ties`` uses integer weights for exact ties."""
    from dualgop.acoustic import AcousticModel, GmmState, PhoneHmm, PhoneInventory

    counts = []
    while not counts or (sum(counts) < 4 and rng.uniform() < 0.6):
        counts.append(int(rng.integers(1, 5 - sum(counts))))
    with_sil = len(counts) > 1 and rng.uniform() < 0.5
    phones, cats, hmms = [], {}, {}
    for i, n in enumerate(counts):
        p = "sil" if (with_sil and i == len(counts) - 1) else f"p{i}"
        cats[p] = "silence" if p == "sil" else "vowel"
        states = [GmmState([1.0], rng.normal(0, 1, (1, 2)), rng.uniform(0.4, 2.0, (1, 2))) for _ in range(n)]
        if ties:
            log_self = rng.integers(-2, 1, n).astype(float)
            log_next = rng.integers(-2, 1, n).astype(float)
        else:
            ps = rng.uniform(0.1, 0.9, n)
            log_self, log_next = np.log(ps), np.log1p(-ps)
        hmms[p] = PhoneHmm(p, states, log_self, log_next)
        phones.append(p)
    return AcousticModel(PhoneInventory(tuple(phones), cats), hmms)


def _emissions_for(rng, m, T, ties):
    if ties:
        return rng.integers(-3, 1, (T, m.num_states)).astype(float), None
    frames = rng.normal(0, 1.2, (T, m.dim))
    return direct_emissions(frames, m), frames


def viterbi_case(seed, ties=False):
    """One random instance of each decoder; returns ``{name: (score_error, same_path)}``."""
    from dualgop.aligner import force_align, phone_loop_decode, segment_viterbi_loglik
    from dualgop.errors import InfeasibleAlignment

    rng = np.random.default_rng(seed)
    out = {}
    m = _tiny_model(rng, ties)
    speech = list(m.inventory.speech_phones)
    phones = [speech[int(i)] for i in rng.integers(0, len(speech), int(rng.integers(1, 4)))]
    sil = m.inventory.silence is not None and bool(rng.integers(0, 2))
    T = int(rng.integers(1, 7))
    emis, frames = _emissions_for(rng, m, T, ties)
    want = brute_force_align(emis, phones, m, sil)
    try:
        if frames is None:
            got = force_align(None, phones, m, sil, emissions=emis)
        else:
            got = force_align(frames, phones, m, sil)
    except InfeasibleAlignment:
        got = None
    if want is None or got is None:
        out["force_align"] = (0.0 if want is None and got is None else np.inf, want is None and got is None)
    else:
        out["force_align"] = (abs(got.loglik - want[0]), list(got.states) == list(want[1]))

    h = m.hmm(m.phones[int(rng.integers(0, len(m.phones)))])
    L = int(rng.integers(1, 7))
    if ties:
        e = rng.integers(-3, 1, (L, h.num_states)).astype(float)
        score, path = segment_viterbi_loglik(None, (0, L), h, emissions=e)
    else:
        fr = rng.normal(0, 1.2, (L, m.dim))
        e = np.array([[gmm_log_likelihood(s, x) for s in h.states] for x in fr])
        score, path = segment_viterbi_loglik(fr, (0, L), h)
    ws, wp = brute_force_segment(e, h)
    out["segment_viterbi_loglik"] = (abs(score - ws), list(path.states) == list(wp))

    T = int(rng.integers(1, 7))
    emis, frames = _emissions_for(rng, m, T, ties)
    got = phone_loop_decode(frames, (0, T), m, emissions=emis if frames is None else None)
    ws, wp = brute_force_loop(emis, m)
    out["phone_loop_decode"] = (abs(got.loglik - ws), list(got.states) == list(wp))
    return out
