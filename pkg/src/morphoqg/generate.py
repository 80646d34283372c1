"""Beam-search decoding over the copy / list-word / rewrite-tag action space.

Hypotheses accumulate the sum of outcome log-probabilities; the beam is
pruned on that sum, and the final hypothesis is selected by the
length-normalised score (sum divided by number of emitted outcomes, end
marker included), so long questions are not penalised for their length
alone.  A beam of one reduces to greedy decoding.

Structural masks keep the action grammar valid: the padding and
start-of-sequence outcomes are never emitted, and a rewrite tag may only
follow a word-producing action (never open the question, never follow
another tag).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .codec import SOS_ID, EncodedExample, Trans, Vocab, realize
from .model import EncoderDecoder, PreparedExample
from .morphology import Morphology

_BLOCKED_WORDS = ("<pad>", "<sos>")
_EOS_WORD = "<eos>"


@dataclass(frozen=True)
class BeamResult:
    """One decoded hypothesis: its actions, normalised score, and status."""

    actions: tuple
    score: float
    finished: bool


@dataclass
class _Hyp:
    actions: tuple
    log_sum: float
    s: np.ndarray
    c: np.ndarray
    last_was_word: bool


def beam_search(
    model: EncoderDecoder,
    prep: PreparedExample,
    beam_size: Optional[int] = None,
    max_len: Optional[int] = None,
) -> BeamResult:
    """Decode one example; returns the best hypothesis under the
    length-normalised score."""
    k = beam_size if beam_size is not None else model.hyper.beam_size
    limit = max_len if max_len is not None else model.hyper.max_decode_len
    enc = model.encode(prep, masks=None)
    c0 = np.zeros(model.hyper.hidden_size, dtype=model.dtype)
    beams = [_Hyp(actions=(), log_sum=0.0, s=enc["s0"], c=c0, last_was_word=False)]
    finished: list[BeamResult] = []

    for _ in range(limit):
        candidates: list[tuple[float, _Hyp]] = []
        for hyp in beams:
            if hyp.actions:
                spec = model.input_spec_for_action(hyp.actions[-1], prep.roots)
            else:
                spec = ("word", SOS_ID)
            state = model.step(enc, hyp.s, hyp.c, spec)
            word_probs, word_actions, tag_probs = model.outcome_distribution(
                state, prep.roots)
            s_next, c_next = state["s"], state["c"]
            for word, prob in word_probs.items():
                if word in _BLOCKED_WORDS or prob <= 0.0:
                    continue
                logp = hyp.log_sum + math.log(prob)
                if word == _EOS_WORD:
                    length = len(hyp.actions) + 1
                    finished.append(BeamResult(
                        actions=hyp.actions, score=logp / length, finished=True))
                    continue
                candidates.append((logp, _Hyp(
                    actions=hyp.actions + (word_actions[word],),
                    log_sum=logp, s=s_next, c=c_next, last_was_word=True)))
            if hyp.last_was_word:
                for ttype, prob in tag_probs.items():
                    if prob <= 0.0:
                        continue
                    logp = hyp.log_sum + math.log(prob)
                    candidates.append((logp, _Hyp(
                        actions=hyp.actions + (Trans(ttype),),
                        log_sum=logp, s=s_next, c=c_next, last_was_word=False)))
        if not candidates:
            break
        candidates.sort(key=lambda item: item[0], reverse=True)
        beams = [hyp for _, hyp in candidates[:k]]

    for hyp in beams:
        length = max(len(hyp.actions), 1)
        finished.append(BeamResult(
            actions=hyp.actions, score=hyp.log_sum / length, finished=False))
    return max(finished, key=lambda r: (r.score, r.finished))


def greedy(model: EncoderDecoder, prep: PreparedExample,
           max_len: Optional[int] = None) -> BeamResult:
    """Greedy decoding: a beam of exactly one."""
    return beam_search(model, prep, beam_size=1, max_len=max_len)


def generate_question(
    model: EncoderDecoder,
    example: EncodedExample,
    vocab: Vocab,
    morphology: Optional[Morphology] = None,
    beam_size: Optional[int] = None,
) -> str:
    """Decode an encoded example and realise the actions as a word string."""
    prep = model.prepare(example)
    result = beam_search(model, prep, beam_size=beam_size)
    return realize(list(result.actions), list(prep.roots), vocab, morphology)
