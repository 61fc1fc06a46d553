"""Template grammars: patterns over terminals and entity-class slots.

Patterns are single-level (no recursive non-terminals): a pattern is a
token sequence where ``@``-prefixed tokens name an entity class to be
filled from that class's entity list.  Expansion samples patterns and
entities uniformly; the tagged variant leaves class tokens in place,
which is exactly the decider's training format.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from .classfst import Entity, load_entities
from .vocab import BACKGROUND, ClassAlphabet, Vocabulary


@dataclass
class CfgGrammar:
    patterns: list[tuple[str, ...]]
    entities: dict[str, list[Entity]]

    def nonterminals_of(self, pattern: Sequence[str]) -> list[str]:
        return [tok for tok in pattern if tok.startswith("@")]


def parse_grammar(pattern_source, entity_dir, vocabulary: Vocabulary,
                  classes: ClassAlphabet) -> CfgGrammar:
    """Load and validate a grammar from a pattern file and an entity directory.

    Entity files are named ``<class>.txt`` in the entity-list format.
    Every referenced non-terminal needs a nonempty entity list; terminals
    must be vocabulary symbols.
    """
    if isinstance(pattern_source, (str, os.PathLike)):
        with open(pattern_source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        where = os.fspath(pattern_source)
    else:
        lines = list(pattern_source)
        where = "<patterns>"
    if not lines:
        raise ValueError(f"{where}: empty pattern file")

    patterns: list[tuple[str, ...]] = []
    used: set[str] = set()
    for i, line in enumerate(lines, start=1):
        tokens = tuple(line.split())
        if not tokens:
            raise ValueError(f"{where}:{i}: empty pattern")
        for tok in tokens:
            if tok.startswith("@"):
                if tok == BACKGROUND:
                    raise ValueError(f"{where}:{i}: {BACKGROUND} cannot appear in a pattern")
                if tok not in classes:
                    raise ValueError(f"{where}:{i}: unknown class {tok!r}")
                used.add(tok)
            elif tok not in vocabulary:
                raise ValueError(f"{where}:{i}: unknown terminal symbol {tok!r}")
        patterns.append(tokens)

    entities: dict[str, list[Entity]] = {}
    for label in sorted(used):
        path = os.path.join(os.fspath(entity_dir), f"{label}.txt")
        if not os.path.exists(path):
            raise ValueError(f"non-terminal {label} has no entity file at {path}")
        entries = load_entities(path)
        for symbols, _ in entries:
            for sym in symbols:
                if sym not in vocabulary:
                    raise ValueError(f"{path}: entity symbol {sym!r} is outside the vocabulary")
        entities[label] = entries
    return CfgGrammar(patterns=patterns, entities=entities)


def _draws(grammar: CfgGrammar, n_samples: int, seed: int):
    """Shared sampling stream: pattern index plus one entity index per slot."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = random.Random(seed)
    for _ in range(n_samples):
        p = rng.randrange(len(grammar.patterns))
        pattern = grammar.patterns[p]
        picks = [
            rng.randrange(len(grammar.entities[tok])) if tok.startswith("@") else -1
            for tok in pattern
        ]
        yield pattern, picks


def expand(grammar: CfgGrammar, n_samples: int, seed: int) -> list[tuple[str, ...]]:
    """Plain expansions: every class slot replaced by a sampled entity."""
    out = []
    for pattern, picks in _draws(grammar, n_samples, seed):
        sentence: list[str] = []
        for tok, pick in zip(pattern, picks):
            if pick < 0:
                sentence.append(tok)
            else:
                sentence.extend(grammar.entities[tok][pick][0])
        out.append(tuple(sentence))
    return out


def expand_tagged(grammar: CfgGrammar, n_samples: int, seed: int) -> list[tuple[str, ...]]:
    """Tagged expansions: class slots stay as single class tokens.

    Consumes the same sampling stream as :func:`expand`, so the two
    variants pick identical patterns (and entities) under one seed.
    """
    return [pattern for pattern, _ in _draws(grammar, n_samples, seed)]


def mix_corpora(background: Sequence[Sequence[str]], tagged: Sequence[Sequence[str]],
                background_fraction: float, seed: int,
                size: int | None = None) -> list[tuple[str, ...]]:
    """Deterministic shuffled mix with an exact background-line count.

    Draws ``round(fraction * size)`` lines from the background pool and
    the rest from the tagged pool, both uniformly with replacement, then
    shuffles.  ``size`` defaults to the combined pool size.
    """
    if not 0.0 <= background_fraction <= 1.0:
        raise ValueError(f"background fraction must be in [0,1], got {background_fraction}")
    if size is None:
        size = len(background) + len(tagged)
    if size < 1:
        raise ValueError("mix size must be >= 1")
    n_background = round(background_fraction * size)
    n_tagged = size - n_background
    if n_background > 0 and not background:
        raise ValueError("background corpus is empty but the fraction requires it")
    if n_tagged > 0 and not tagged:
        raise ValueError("tagged corpus is empty but the fraction requires it")
    rng = random.Random(seed)
    mixed = [tuple(background[rng.randrange(len(background))]) for _ in range(n_background)]
    mixed += [tuple(tagged[rng.randrange(len(tagged))]) for _ in range(n_tagged)]
    rng.shuffle(mixed)
    return mixed


def write_corpus(sentences: Iterable[Sequence[str]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sentence in sentences:
            fh.write(" ".join(sentence) + "\n")


def read_corpus(source) -> list[tuple[str, ...]]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        lines = list(source)
    return [tuple(line.split()) for line in lines if line.strip()]
