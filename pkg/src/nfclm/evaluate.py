"""Perplexity evaluation and n-best rescoring."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .engine import NfclmModel, sequence_logprob
from .seqmodel import ConditionalSymbolModel, ngram_sequence_logprob


@dataclass
class FusionWeights:
    """Non-negative interpolation weights for shallow fusion."""

    lm_weight: float = 0.0
    ilm_weight: float = 0.0

    def __post_init__(self):
        for name in ("lm_weight", "ilm_weight"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")


@dataclass
class NBestEntry:
    utterance_id: str
    asr_score: float
    ilm_score: float
    tokens: tuple[str, ...]
    reference: Optional[str] = None

    def __post_init__(self):
        if not math.isfinite(self.asr_score) or not math.isfinite(self.ilm_score):
            raise ValueError(f"{self.utterance_id}: scores must be finite")


@dataclass
class RescoredEntry:
    entry: NBestEntry
    lm_logprob: float
    fused_score: float
    original_rank: int
    failed: bool = False


@dataclass
class PerplexityReport:
    perplexity: float
    total_logprob: float
    symbol_count: int
    sentence_count: int
    dead_sentences: list[int] = field(default_factory=list)


def score_sentence(model, tokens: Sequence[str], mode: str = "beam") -> float:
    """Sentence log-probability for either a full model or a plain symbol model."""
    if isinstance(model, NfclmModel):
        return sequence_logprob(model, tokens, mode=mode)
    if isinstance(model, ConditionalSymbolModel):
        return ngram_sequence_logprob(model, tokens)
    raise TypeError(f"cannot score with {type(model).__name__}")


def perplexity(model, corpus: Sequence[Sequence[str]], mode: str = "beam",
               skip_dead: bool = False) -> PerplexityReport:
    """Corpus perplexity: exp(-logprob / symbols), EOS counted per sentence.

    A sentence no alignment can generate makes the whole corpus
    unscorable unless ``skip_dead`` excludes it from both the mass and
    the symbol count; excluded line numbers are reported either way.
    """
    total = 0.0
    symbols = 0
    scored = 0
    dead: list[int] = []
    for i, sentence in enumerate(corpus):
        lp = score_sentence(model, sentence, mode=mode)
        if lp == -math.inf:
            dead.append(i)
            if skip_dead:
                continue
            raise ValueError(
                f"sentence {i} has probability 0; pass skip_dead=True to exclude it"
            )
        total += lp
        symbols += len(sentence) + 1
        scored += 1
    if symbols == 0:
        raise ValueError("no scorable sentences")
    return PerplexityReport(
        perplexity=math.exp(-total / symbols),
        total_logprob=total,
        symbol_count=symbols,
        sentence_count=scored,
        dead_sentences=dead,
    )


def rescore_nbest(model: NfclmModel, entries: Sequence[NBestEntry],
                  weights: FusionWeights, mode: str = "beam") -> list[RescoredEntry]:
    """Fuse scores and re-rank: ASR + lm_weight * LM - ilm_weight * ILM.

    The sort is stable with ties broken by original rank; entries whose
    hypotheses cannot be scored (symbols outside the vocabulary or a dead
    history) are flagged and ranked last in original order.
    """
    if not entries:
        raise ValueError("empty n-best list")
    rescored = []
    for rank, entry in enumerate(entries):
        failed = any(tok not in model.vocabulary for tok in entry.tokens)
        lm = -math.inf
        if not failed:
            lm = sequence_logprob(model, entry.tokens, mode=mode)
            failed = lm == -math.inf
        fused = -math.inf if failed else (
            entry.asr_score + weights.lm_weight * lm - weights.ilm_weight * entry.ilm_score
        )
        rescored.append(RescoredEntry(entry, lm, fused, rank, failed))
    rescored.sort(key=lambda r: (r.failed, -r.fused_score if not r.failed else 0.0,
                                 r.original_rank))
    return rescored


def parse_nbest_file(source, references=None) -> list[NBestEntry]:
    """Read entries: ``utt-id TAB asr TAB ilm TAB tokens`` per line.

    ``references`` optionally maps utterance ids to transcripts, or names
    a file of ``utt-id TAB transcript`` lines.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        lines = list(source)
    refs = {}
    if isinstance(references, (str, os.PathLike)):
        with open(references, "r", encoding="utf-8") as fh:
            for line in fh.read().splitlines():
                if line.strip():
                    utt, _, text = line.partition("\t")
                    refs[utt] = text
    elif references:
        refs = dict(references)
    entries = []
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ValueError(f"n-best line {i}: expected 4 tab-separated fields, got {len(parts)}")
        utt, asr, ilm, hyp = parts
        try:
            entry = NBestEntry(utt, float(asr), float(ilm), tuple(hyp.split()),
                               reference=refs.get(utt))
        except ValueError as exc:
            raise ValueError(f"n-best line {i}: {exc}") from exc
        entries.append(entry)
    if not entries:
        raise ValueError("empty n-best list")
    return entries
