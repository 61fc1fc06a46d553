"""Marginalization engine over class alignments.

The model assigns each history symbol to a generating class: the
background class, a named entity class, or the continuation marker for a
class span that is still open.  Next-symbol probabilities marginalize
over these alignments; exact mode enumerates every alignment, beam mode
keeps only the most probable ones per history.

Each alignment hypothesis carries its collapsed decider history (class
spans as single tokens, background symbols verbatim), its position (in
the background, or inside a class automaton at a given state), and the
accumulated joint log-weight of alignment and symbols.  Hypotheses that
agree on (decider history, position) are exchangeable for every future
step, so they are merged by log-sum-exp.

All arithmetic is 64-bit log-domain with max-shifted log-sum-exp over
fixed summation orders, which keeps repeated runs bit-identical.

Model components never change after construction (internal lookup caches
only memoize idempotent values), so one model can serve any number of
concurrent scoring sessions; beams are cheap per-session values.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from .classfst import ProbClassFst
from .seqmodel import ConditionalSymbolModel, DeciderModel
from .vocab import BACKGROUND, BOS, EOS, ClassAlphabet, Vocabulary

EPSILON = "<eps>"

DEFAULT_BEAM_SIZE = 100
DEFAULT_BEAM_DELTA = 30.0

EXACT_HISTORY_LIMIT = 12

# background position: the hypothesis is not inside any class span
Position = Optional[tuple[str, int]]


class DeadHistoryError(Exception):
    """Every alignment assigns the extension probability zero."""

    def __init__(self, history: Sequence[str], symbol: str):
        self.history = tuple(history)
        self.symbol = symbol
        super().__init__(
            f"no alignment can generate {symbol!r} after {' '.join(self.history) or '<start>'}"
        )


@dataclass(frozen=True)
class AlignmentHypothesis:
    """One class alignment of the consumed history."""

    decider_history: tuple[str, ...]
    position: Position
    log_weight: float

    @property
    def key(self) -> tuple[tuple[str, ...], Position]:
        return (self.decider_history, self.position)


@dataclass
class AlignmentBeam:
    """Bounded set of alignment hypotheses for one token history.

    ``log_norm`` is the running estimate of log P(history) used to turn
    joint weights into posteriors; with renormalization it tracks the
    in-beam mass, without it the product of returned step probabilities.
    """

    history: tuple[str, ...]
    hypotheses: list[AlignmentHypothesis]
    log_norm: float = 0.0
    size_limit: int = DEFAULT_BEAM_SIZE
    delta: float = DEFAULT_BEAM_DELTA

    def decider_histories(self) -> list[tuple[str, ...]]:
        return [h.decider_history for h in self.hypotheses]


@dataclass
class NfclmModel:
    """Background model + per-class FSTs mixed by the decider."""

    vocabulary: Vocabulary
    classes: ClassAlphabet
    background: ConditionalSymbolModel
    class_fsts: dict[str, ProbClassFst]
    decider: DeciderModel
    beam_size: int = DEFAULT_BEAM_SIZE
    beam_delta: float = DEFAULT_BEAM_DELTA
    renormalize: bool = True

    def __post_init__(self):
        wanted = set(self.classes.nonbackground)
        have = set(self.class_fsts)
        if wanted != have:
            raise ValueError(
                f"class FSTs {sorted(have)} do not match class alphabet {sorted(wanted)}"
            )
        for label, fst in self.class_fsts.items():
            if fst.label != label:
                raise ValueError(f"FST labeled {fst.label!r} registered under {label!r}")
            for out in fst.arcs:
                for sym in out:
                    if sym not in self.vocabulary:
                        raise ValueError(
                            f"{label}: arc symbol {sym!r} is outside the vocabulary"
                        )
        bg_alpha = set(self.background.alphabet)
        if bg_alpha != set(self.vocabulary.symbols) | {EOS}:
            raise ValueError("background model must predict the vocabulary plus EOS")
        if set(self.decider.alphabet) != set(self.classes.labels):
            raise ValueError("decider classes do not match the class alphabet")
        self._bg_cache: dict[tuple, float] = {}
        self._decider_cache: dict[tuple, dict[str, float]] = {}

    # -- component lookups ------------------------------------------------

    def _padded(self, history: Sequence[str], model: ConditionalSymbolModel) -> tuple[str, ...]:
        cs = model.context_size
        history = tuple(history)
        if len(history) < cs:
            return (BOS,) * (cs - len(history)) + history
        return history[len(history) - cs:]

    def background_logprob(self, symbol: str, history: Sequence[str]) -> float:
        key = (symbol, self._padded(history, self.background))
        hit = self._bg_cache.get(key)
        if hit is None:
            hit = self.background.logprob(symbol, key[1])
            self._bg_cache[key] = hit
        return hit

    def decider_dist(self, decider_history: Sequence[str]) -> dict[str, float]:
        """Renormalized class distribution for a collapsed history."""
        key = (self._padded(decider_history, self.decider), self.decider.alpha)
        hit = self._decider_cache.get(key)
        if hit is None:
            hit = self.decider.distribution(key[0])
            self._decider_cache[key] = hit
        return hit


def last_class(alignment: Sequence[str], candidate: str) -> str:
    """Last non-continuation label of ``alignment + [candidate]`` (or the marker)."""
    if candidate != EPSILON:
        return candidate
    for label in reversed(alignment):
        if label != EPSILON:
            return label
    return EPSILON


def class_prefix(history: Sequence[str], alignment: Sequence[str], label: str) -> tuple[str, ...]:
    """Symbols of the open span of ``label`` at the end of the history.

    Empty unless the alignment currently sits inside ``label``: the last
    labels must be ``label`` followed only by continuation markers.
    """
    if len(history) != len(alignment):
        raise ValueError(
            f"history length {len(history)} != alignment length {len(alignment)}"
        )
    i = len(alignment) - 1
    while i >= 0 and alignment[i] == EPSILON:
        i -= 1
    if i < 0 or alignment[i] != label or label in (BACKGROUND, EPSILON):
        return ()
    return tuple(history[i:])


def decider_history(history: Sequence[str], alignment: Sequence[str]) -> tuple[str, ...]:
    """Collapse an aligned history: spans become one class token each."""
    if len(history) != len(alignment):
        raise ValueError(
            f"history length {len(history)} != alignment length {len(alignment)}"
        )
    out: list[str] = []
    for i, label in enumerate(alignment):
        if label == EPSILON:
            if i == 0 or alignment[i - 1] == BACKGROUND:
                raise ValueError(f"continuation marker at position {i} has no open span")
            continue
        out.append(history[i] if label == BACKGROUND else label)
    return tuple(out)


def start_beam(model: NfclmModel) -> AlignmentBeam:
    root = AlignmentHypothesis(decider_history=(), position=None, log_weight=0.0)
    return AlignmentBeam(history=(), hypotheses=[root], log_norm=0.0,
                         size_limit=model.beam_size, delta=model.beam_delta)


def log_sum_exp(values: Sequence[float]) -> float:
    best = max(values)
    if best == -math.inf:
        return -math.inf
    return best + math.log(math.fsum(math.exp(v - best) for v in values))


def _exit_prob(model: NfclmModel, position: Position) -> float:
    if position is None:
        return 1.0  # background always "exits": each symbol is its own span
    label, state = position
    return model.class_fsts[label].exit_prob(state)


def class_emission_dist(model: NfclmModel, hypothesis: AlignmentHypothesis) -> dict[str, float]:
    """Distribution over classes + continuation for the next position."""
    exit_p = _exit_prob(model, hypothesis.position)
    dist = {EPSILON: 1.0 - exit_p}
    if exit_p > 0.0:
        decider = model.decider_dist(hypothesis.decider_history)
        for c in model.classes.labels:
            dist[c] = exit_p * decider[c]
    else:
        for c in model.classes.labels:
            dist[c] = 0.0
    return dist


def class_component_prob(model: NfclmModel, symbol: str, candidate: str,
                         hypothesis: AlignmentHypothesis,
                         history: Sequence[str]) -> float:
    """Probability the chosen class generates ``symbol``.

    Background conditions on the raw token history; a named class
    conditions on its open-span prefix through the class automaton, with
    continuation arcs normalized by the state's stay probability.
    """
    if candidate == EPSILON:
        if hypothesis.position is None:
            return 0.0  # no open span to continue
        label, state = hypothesis.position
        fst = model.class_fsts[label]
        arc = fst.arc_prob(state, symbol)
        if arc == 0.0:
            return 0.0
        return arc / (1.0 - fst.exit_prob(state))
    if candidate == BACKGROUND:
        return math.exp(model.background_logprob(symbol, history))
    fst = model.class_fsts.get(candidate)
    if fst is None:
        raise ValueError(f"class {candidate!r} has no FST")
    return fst.arc_prob(fst.start, symbol)


def _position_sort_key(position: Position) -> tuple[str, int]:
    return ("", -1) if position is None else position


def _successors(model: NfclmModel, beam: AlignmentBeam, symbol: str):
    """Merged successor hypotheses for one extension symbol.

    Iteration order is fixed (beam order, then continuation, background,
    classes in alphabet order) so merged sums are reproducible.
    """
    bg_lp = model.background_logprob(symbol, beam.history)
    decider_cache: dict[tuple[str, ...], dict[str, float]] = {}
    merged: dict[tuple, tuple[tuple[str, ...], Position, list[float]]] = {}

    def emit(dh: tuple[str, ...], pos: Position, lw: float) -> None:
        key = (dh, pos)
        slot = merged.get(key)
        if slot is None:
            merged[key] = (dh, pos, [lw])
        else:
            slot[2].append(lw)

    for hyp in beam.hypotheses:
        if hyp.position is not None:
            label, state = hyp.position
            fst = model.class_fsts[label]
            hit = fst.arcs[state].get(symbol)
            if hit is not None:
                # stay emission times normalized arc collapses to the raw arc
                arc, dest = hit
                emit(hyp.decider_history, (label, dest), hyp.log_weight + math.log(arc))
            exit_p = fst.exit_prob(state)
            if exit_p == 0.0:
                continue
            log_exit = math.log(exit_p)
        else:
            log_exit = 0.0
        decider = decider_cache.get(hyp.decider_history)
        if decider is None:
            decider = model.decider_dist(hyp.decider_history)
            decider_cache[hyp.decider_history] = decider
        emit(hyp.decider_history + (symbol,), None,
             hyp.log_weight + log_exit + math.log(decider[BACKGROUND]) + bg_lp)
        for c in model.classes.nonbackground:
            fst = model.class_fsts[c]
            hit = fst.arcs[fst.start].get(symbol)
            if hit is not None:
                arc, dest = hit
                emit(hyp.decider_history + (c,), (c, dest),
                     hyp.log_weight + log_exit + math.log(decider[c]) + math.log(arc))
    return merged


def extend(model: NfclmModel, beam: AlignmentBeam, symbol: str) -> tuple[AlignmentBeam, float]:
    """Advance the beam by one symbol; returns (new beam, log P(symbol | history)).

    Successors sharing (decider history, position) are merged by
    log-sum-exp before pruning to the size and log-width limits.
    """
    if symbol not in model.vocabulary:
        raise KeyError(f"symbol {symbol!r} is outside the vocabulary")
    if not beam.hypotheses:
        raise DeadHistoryError(beam.history, symbol)
    merged = _successors(model, beam, symbol)
    if not merged:
        raise DeadHistoryError(beam.history, symbol)

    successors = [
        AlignmentHypothesis(dh, pos, log_sum_exp(weights))
        for dh, pos, weights in merged.values()
    ]
    step_logprob = log_sum_exp([h.log_weight for h in successors]) - beam.log_norm

    successors.sort(key=lambda h: (-h.log_weight, len(h.decider_history),
                                   h.decider_history, _position_sort_key(h.position)))
    kept = successors[: beam.size_limit]
    best = kept[0].log_weight
    kept = [h for h in kept if best - h.log_weight <= beam.delta]

    if model.renormalize:
        new_norm = log_sum_exp([h.log_weight for h in kept])
    else:
        new_norm = beam.log_norm + step_logprob
    new_beam = AlignmentBeam(
        history=beam.history + (symbol,),
        hypotheses=kept,
        log_norm=new_norm,
        size_limit=beam.size_limit,
        delta=beam.delta,
    )
    return new_beam, step_logprob


def eos_logprob(model: NfclmModel, beam: AlignmentBeam) -> float:
    """log P(EOS | history) under the beam; -inf when no alignment can stop."""
    eos_lp = model.background_logprob(EOS, beam.history)
    decider_cache: dict[tuple[str, ...], float] = {}
    contributions = []
    for hyp in beam.hypotheses:
        exit_p = _exit_prob(model, hyp.position)
        if exit_p == 0.0:
            continue
        bg_share = decider_cache.get(hyp.decider_history)
        if bg_share is None:
            bg_share = model.decider_dist(hyp.decider_history)[BACKGROUND]
            decider_cache[hyp.decider_history] = bg_share
        contributions.append(
            hyp.log_weight + math.log(exit_p) + math.log(bg_share) + eos_lp
        )
    if not contributions:
        return -math.inf
    return log_sum_exp(contributions) - beam.log_norm


def advance(model: NfclmModel, symbols: Sequence[str]) -> AlignmentBeam:
    """Beam after consuming ``symbols`` from the start state."""
    beam = start_beam(model)
    for sym in symbols:
        beam, _ = extend(model, beam, sym)
    return beam


def next_dist(model: NfclmModel, beam: AlignmentBeam) -> dict[str, float]:
    """Beam-mode next-symbol distribution over the vocabulary plus EOS."""
    dist = {}
    for sym in model.vocabulary.symbols:
        try:
            _, lp = extend(model, beam, sym)
        except DeadHistoryError:
            dist[sym] = 0.0
        else:
            dist[sym] = math.exp(lp)
    dist[EOS] = math.exp(eos_logprob(model, beam))
    return dist


# -- exact enumeration (the oracle path) ----------------------------------

def _alignment_step(model: NfclmModel, history: tuple[str, ...],
                    alignment: tuple[str, ...], candidate: str,
                    symbol: str) -> float:
    """Probability contribution of one (emission, symbol) step, from definitions."""
    open_label = last_class(alignment, EPSILON)
    if open_label in (EPSILON, BACKGROUND):
        exit_p = 1.0
    else:
        fst = model.class_fsts[open_label]
        state = fst.walk(class_prefix(history, alignment, open_label))
        if state is None:
            return 0.0
        exit_p = fst.exit_prob(state)
    if candidate == EPSILON:
        emission = 1.0 - exit_p
    else:
        if exit_p == 0.0:
            return 0.0
        dh = decider_history(history, alignment)
        emission = exit_p * model.decider_dist(dh)[candidate]
    if emission == 0.0:
        return 0.0

    effective = last_class(alignment, candidate)
    if effective == EPSILON:
        return 0.0
    if effective == BACKGROUND:
        component = math.exp(model.background_logprob(symbol, history))
    else:
        fst = model.class_fsts[effective]
        if candidate == EPSILON:
            state = fst.walk(class_prefix(history, alignment, effective))
            if state is None:
                return 0.0
            arc = fst.arc_prob(state, symbol)
            component = arc / (1.0 - fst.exit_prob(state)) if arc else 0.0
        else:
            component = fst.arc_prob(fst.start, symbol)
    return emission * component


def _enumerate_alignments(model: NfclmModel, history: tuple[str, ...]):
    """All (alignment, joint probability) pairs with nonzero weight.

    Depth-first over label choices, dropping a branch as soon as a factor
    is zero; probabilities are per-step products of emission and
    component terms computed from the alignment definitions alone.
    """
    labels = (EPSILON, BACKGROUND) + model.classes.nonbackground
    results: list[tuple[tuple[str, ...], float]] = []

    def descend(i: int, alignment: tuple[str, ...], weight: float) -> None:
        if i == len(history):
            results.append((alignment, weight))
            return
        for candidate in labels:
            p = _alignment_step(model, history[:i], alignment, candidate, history[i])
            if p > 0.0:
                descend(i + 1, alignment + (candidate,), weight * p)

    descend(0, (), 1.0)
    return results


def exact_alignment_histories(model: NfclmModel, history: Sequence[str]) -> set[tuple[str, ...]]:
    """Collapsed decider histories of every nonzero-probability alignment."""
    history = tuple(history)
    return {
        decider_history(history, alignment)
        for alignment, _ in _enumerate_alignments(model, history)
    }


def exact_next_dist(model: NfclmModel, history: Sequence[str]) -> dict[str, float]:
    """Next-symbol distribution by exhaustive alignment enumeration."""
    history = tuple(history)
    if len(history) > EXACT_HISTORY_LIMIT:
        raise ValueError(
            f"history of length {len(history)} exceeds the exact-mode limit "
            f"({EXACT_HISTORY_LIMIT})"
        )
    for sym in history:
        if sym not in model.vocabulary:
            raise KeyError(f"symbol {sym!r} is outside the vocabulary")
    alignments = _enumerate_alignments(model, history)
    if not alignments:
        raise DeadHistoryError(history, "<next>")
    marginal = math.fsum(w for _, w in alignments)
    labels = (EPSILON, BACKGROUND) + model.classes.nonbackground
    masses: dict[str, list[float]] = {sym: [] for sym in model.vocabulary.symbols}
    masses[EOS] = []
    for alignment, weight in alignments:
        for sym in model.vocabulary.symbols:
            for candidate in labels:
                p = _alignment_step(model, history, alignment, candidate, sym)
                if p > 0.0:
                    masses[sym].append(weight * p)
        open_label = last_class(alignment, EPSILON)
        if open_label in (EPSILON, BACKGROUND):
            exit_p = 1.0
        else:
            fst = model.class_fsts[open_label]
            exit_p = fst.exit_prob(fst.walk(class_prefix(history, alignment, open_label)))
        if exit_p > 0.0:
            dh = decider_history(history, alignment)
            masses[EOS].append(
                weight * exit_p * model.decider_dist(dh)[BACKGROUND]
                * math.exp(model.background_logprob(EOS, history))
            )
    return {sym: math.fsum(values) / marginal for sym, values in masses.items()}


def exact_sequence_logprob(model: NfclmModel, symbols: Sequence[str]) -> float:
    symbols = tuple(symbols)
    if len(symbols) > EXACT_HISTORY_LIMIT:
        raise ValueError(
            f"sequence of length {len(symbols)} exceeds the exact-mode limit "
            f"({EXACT_HISTORY_LIMIT})"
        )
    alignments = _enumerate_alignments(model, symbols)
    eos_lp = math.exp(model.background_logprob(EOS, symbols)) if alignments else 0.0
    terms = []
    for alignment, weight in alignments:
        open_label = last_class(alignment, EPSILON)
        if open_label in (EPSILON, BACKGROUND):
            exit_p = 1.0
        else:
            fst = model.class_fsts[open_label]
            exit_p = fst.exit_prob(fst.walk(class_prefix(symbols, alignment, open_label)))
        if exit_p > 0.0:
            dh = decider_history(symbols, alignment)
            terms.append(weight * exit_p * model.decider_dist(dh)[BACKGROUND] * eos_lp)
    total = math.fsum(terms)
    return math.log(total) if total > 0.0 else -math.inf


def sequence_logprob(model: NfclmModel, symbols: Sequence[str],
                     mode: str = "beam") -> float:
    """Sentence log-probability including the end-of-sentence factor.

    Beam mode accumulates step log-probabilities through the stored joint
    weights; a dead history yields -inf.
    """
    if mode == "exact":
        return exact_sequence_logprob(model, symbols)
    if mode != "beam":
        raise ValueError(f"unknown mode {mode!r}")
    beam = start_beam(model)
    total = 0.0
    try:
        for sym in symbols:
            beam, lp = extend(model, beam, sym)
            total += lp
    except DeadHistoryError:
        return -math.inf
    return total + eos_logprob(model, beam)


def sample(model: NfclmModel, max_length: int, seed: int) -> list[str]:
    """Ancestral sample: draw a class route, then a symbol, until EOS."""
    if max_length < 1:
        raise ValueError("max_length must be >= 1")
    rng = random.Random(seed)

    def draw(dist: dict[str, float]) -> str:
        u = rng.random() * math.fsum(dist.values())
        running = 0.0
        last = None
        for key, p in dist.items():
            if p <= 0.0:
                continue
            running += p
            last = key
            if u <= running:
                return key
        return last  # guard against rounding at the top end

    hyp = AlignmentHypothesis(decider_history=(), position=None, log_weight=0.0)
    out: list[str] = []
    while len(out) < max_length:
        route = draw(class_emission_dist(model, hyp))
        if route == BACKGROUND:
            bg = model.background.distribution(
                model._padded(out, model.background))
            symbol = draw(bg)
            if symbol == EOS:
                break
            hyp = AlignmentHypothesis(hyp.decider_history + (symbol,), None, 0.0)
        elif route == EPSILON:
            label, state = hyp.position
            fst = model.class_fsts[label]
            arcs = {sym: p for sym, (p, _) in fst.arcs[state].items()}
            symbol = draw(arcs)
            hyp = AlignmentHypothesis(hyp.decider_history,
                                      (label, fst.step(state, symbol)), 0.0)
        else:
            fst = model.class_fsts[route]
            arcs = {sym: p for sym, (p, _) in fst.arcs[fst.start].items()}
            symbol = draw(arcs)
            hyp = AlignmentHypothesis(hyp.decider_history + (route,),
                                      (route, fst.step(fst.start, symbol)), 0.0)
        out.append(symbol)
    return out
