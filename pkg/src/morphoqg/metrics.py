"""Corpus scorers for generated questions: BLEU-1..4 and ROUGE-L.

BLEU is the corpus-level form: modified (clipped) n-gram precisions are
pooled over the whole corpus, combined with uniform geometric weights up
to each order, and multiplied by the brevity penalty.  There is no
smoothing — a zero match count at any contributing order zeroes that
score — and scoring is case-insensitive on space-separated tokens.
Scores are reported on the 0..100 scale.

ROUGE-L is the longest-common-subsequence F-measure with beta^2 = 1.2;
the corpus score is the mean of per-pair scores, on the 0..1 scale.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Dict, List, Sequence

from .errors import LengthMismatch

ROUGE_BETA_SQUARED = 1.2


def _tokens(text: str) -> List[str]:
    return text.lower().split()


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates: Sequence[str], references: Sequence[str],
         max_n: int = 4) -> Dict[int, float]:
    """Corpus BLEU-1..max_n over parallel candidate/reference lists.

    Returns {n: score} with scores in [0, 100].  BLEU-n combines the
    clipped precisions of orders 1..n with uniform weights; the brevity
    penalty is exp(1 - r/c) when the candidate corpus is shorter than the
    reference corpus, 1 otherwise, and 0 when the candidates are empty.
    """
    if len(candidates) != len(references):
        raise LengthMismatch(
            f"{len(candidates)} candidates vs {len(references)} references")
    matched = [0] * (max_n + 1)
    total = [0] * (max_n + 1)
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        c_toks = _tokens(cand)
        r_toks = _tokens(ref)
        cand_len += len(c_toks)
        ref_len += len(r_toks)
        for n in range(1, max_n + 1):
            c_ngrams = _ngrams(c_toks, n)
            if not c_ngrams:
                continue
            r_ngrams = _ngrams(r_toks, n)
            total[n] += sum(c_ngrams.values())
            matched[n] += sum(min(count, r_ngrams[gram])
                              for gram, count in c_ngrams.items())
    if cand_len == 0:
        brevity = 0.0
    elif cand_len >= ref_len:
        brevity = 1.0
    else:
        brevity = math.exp(1.0 - ref_len / cand_len)
    precisions = [0.0] * (max_n + 1)
    for n in range(1, max_n + 1):
        precisions[n] = matched[n] / total[n] if total[n] else 0.0
    scores: Dict[int, float] = {}
    for n in range(1, max_n + 1):
        if any(precisions[k] == 0.0 for k in range(1, n + 1)):
            scores[n] = 0.0
            continue
        log_mean = sum(math.log(precisions[k]) for k in range(1, n + 1)) / n
        scores[n] = 100.0 * brevity * math.exp(log_mean)
    return scores


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token_a in a:
        current = [0] * (len(b) + 1)
        for j, token_b in enumerate(b, start=1):
            if token_a == token_b:
                current[j] = previous[j - 1] + 1
            else:
                current[j] = max(previous[j], current[j - 1])
        previous = current
    return previous[-1]


def rouge_l_pair(candidate: str, reference: str) -> float:
    """LCS F-measure for one pair, beta^2 = 1.2, in [0, 1]."""
    c_toks = _tokens(candidate)
    r_toks = _tokens(reference)
    lcs = _lcs_length(c_toks, r_toks)
    if lcs == 0:
        return 0.0
    precision = lcs / len(c_toks)
    recall = lcs / len(r_toks)
    denom = recall + ROUGE_BETA_SQUARED * precision
    return (1.0 + ROUGE_BETA_SQUARED) * recall * precision / denom


def rouge_l(candidates: Sequence[str], references: Sequence[str]) -> float:
    """Mean ROUGE-L F over parallel lists."""
    if len(candidates) != len(references):
        raise LengthMismatch(
            f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        return 0.0
    return sum(rouge_l_pair(c, r)
               for c, r in zip(candidates, references)) / len(candidates)


def score_report(candidates: Sequence[str], references: Sequence[str]) -> Dict:
    """Bundle BLEU-1..4 and ROUGE-L into one JSON-friendly report."""
    bleu_scores = bleu(candidates, references)
    return {
        "pairs": len(candidates),
        "bleu": {f"bleu-{n}": bleu_scores[n] for n in sorted(bleu_scores)},
        "rouge_l": rouge_l(candidates, references),
    }
