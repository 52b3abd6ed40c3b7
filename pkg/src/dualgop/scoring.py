"""Per-phone pronunciation scores against the target-language (L2) and the
native-language (L1) acoustic models.

``ps_l2`` is a duration-normalized log likelihood ratio between the aligned
phone and the best competing phone on the same frames (uniform phone priors,
max in place of the sum).  ``ps_l1`` decodes the segment with an L1 phone
loop, picks the L1 phone seen on most frames, and averages that phone's
per-frame state-posterior mass over the frames the path assigns to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .acoustic import AcousticModel
from .aligner import (
    PhoneSegment,
    _chain_viterbi,
    _check_span,
    force_align,
    phone_loop_decode,
)
from .errors import InvalidInput, IoError, SchemaError, SilenceNotScorable, UnknownPhone


@dataclass(frozen=True)
class ScoreRecord:
    segment: PhoneSegment
    ps_l2: float
    argmax_l2_phone: str
    ps_l1: float | None = None
    l1_phone: str | None = None

    @property
    def phone(self) -> str:
        return self.segment.phone


def _model_emissions(f, m: AcousticModel, emissions):
    if emissions is not None:
        return emissions
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] != m.dim:
        raise InvalidInput(f"features have shape {f.shape}, model expects dimension {m.dim}")
    return m.emission_matrix(f)


def ps_l2(f, seg: PhoneSegment, m_l2: AcousticModel, *, emissions=None):
    """Returns ``(score, argmax phone)``; the score is 0 iff the target wins."""
    target = seg.phone
    if target not in m_l2.hmms:
        raise UnknownPhone(target)
    if m_l2.inventory.categories[target] == "silence":
        raise SilenceNotScorable(f"silence phone {target!r} has no pronunciation score")
    emis = _model_emissions(f, m_l2, emissions)
    start, end = _check_span(seg.span, emis.shape[0])
    window = emis[start:end]
    lls = {}
    for q in m_l2.inventory.speech_phones:
        h = m_l2.hmm(q)
        lls[q], _ = _chain_viterbi(window[:, m_l2.states_of(q)], h.log_self, h.log_next)
    best = max(lls.values())
    if lls[target] >= best:
        return 0.0, target
    winner = next(q for q, v in lls.items() if v == best)
    return (lls[target] - best) / (end - start), winner


def ps_l1(f, seg: PhoneSegment | tuple, m_l1: AcousticModel, *, emissions=None):
    """Returns ``(score, l1 phone)`` for a frame span decoded with the L1 model."""
    span = seg.span if isinstance(seg, PhoneSegment) else seg
    emis = _model_emissions(f, m_l1, emissions)
    start, end = _check_span(span, emis.shape[0])
    path = phone_loop_decode(None, (start, end), m_l1, emissions=emis)
    owner = m_l1.phone_of_state[path.states]
    counts = np.bincount(owner, minlength=len(m_l1.phones))
    best = int(np.argmax(counts))  # ties -> lowest inventory index
    p = m_l1.phones[best]
    frames = path.frames_of(p)
    sp = m_l1.states_of(p)
    others = np.setdiff1d(np.arange(m_l1.num_states), sp)
    if len(others) == 0:
        return 0.0, p
    rows = emis[frames]
    num = logsumexp(rows[:, sp], axis=1)
    rest = logsumexp(rows[:, others], axis=1)
    # log(num / (num + rest)) without cancellation when rest << num
    per_frame = -np.log1p(np.exp(rest - num))
    return float(per_frame.mean()), p


def score_utterance(f, phones, m_l2: AcousticModel, m_l1: AcousticModel | None = None,
                    allow_optional_silence: bool = True, *, segments=None) -> list:
    """Align ``f`` to ``phones`` with the L2 model and score every speech segment.

    Pass ``segments`` to reuse an existing alignment.  Without an L1 model the
    records carry only the L2 score.
    """
    f = np.asarray(f, dtype=np.float64)
    for m in (m_l2, m_l1):
        if m is not None and (f.ndim != 2 or f.shape[1] != m.dim):
            raise InvalidInput(f"features have shape {f.shape}, model expects dimension {m.dim}")
    e2 = m_l2.emission_matrix(f)
    if segments is None:
        segments = force_align(f, phones, m_l2, allow_optional_silence, emissions=e2).segments
    e1 = m_l1.emission_matrix(f) if m_l1 is not None else None
    sil = m_l2.inventory.silence
    records = []
    for seg in segments:
        if seg.phone == sil:
            continue
        s2, arg2 = ps_l2(f, seg, m_l2, emissions=e2)
        s1, p1 = ps_l1(f, seg, m_l1, emissions=e1) if m_l1 is not None else (None, None)
        records.append(ScoreRecord(seg, s2, arg2, s1, p1))
    return records


# --- score files ---------------------------------------------------------------
# Tab-separated with a header row; columns:
#   utt_id phone start end ps_l2 ps_l1 l1_phone argmax_l2_phone
# start inclusive, end exclusive.  Without an L1 model ps_l1 is "nan" and
# l1_phone is "-".

SCORE_COLUMNS = ("utt_id", "phone", "start", "end", "ps_l2", "ps_l1", "l1_phone", "argmax_l2_phone")


def write_scores(path, scored) -> None:
    """``scored``: iterable of (utt_id, list of ScoreRecord)."""
    lines = ["\t".join(SCORE_COLUMNS)]
    for utt, records in scored:
        for r in records:
            s1 = "nan" if r.ps_l1 is None else repr(float(r.ps_l1))
            lines.append("\t".join([
                utt, r.phone, str(r.segment.start_frame), str(r.segment.end_frame),
                repr(float(r.ps_l2)), s1, r.l1_phone or "-", r.argmax_l2_phone,
            ]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_scores(path) -> dict:
    """Returns utt_id -> list of ScoreRecord, in file order."""
    path = Path(path)
    if not path.exists():
        raise IoError(f"{path}: no such file")
    lines = path.read_text().splitlines()
    if not lines or tuple(lines[0].split("\t")) != SCORE_COLUMNS:
        raise SchemaError(f"{path}: missing or wrong score file header")
    out = {}
    for n, ln in enumerate(lines[1:], 2):
        if not ln.strip():
            continue
        parts = ln.split("\t")
        if len(parts) != len(SCORE_COLUMNS):
            raise SchemaError(f"{path}:{n}: expected {len(SCORE_COLUMNS)} columns")
        utt, phone, s, e, l2, l1, p1, arg = parts
        v1 = float(l1)
        rec = ScoreRecord(PhoneSegment(phone, int(s), int(e)), float(l2), arg,
                          None if math.isnan(v1) else v1, None if p1 == "-" else p1)
        out.setdefault(utt, []).append(rec)
    return out
