"""Lazily expanded FST view of the model.

States are token histories carrying an alignment beam; arcs appear on
demand with negative-log next-symbol probabilities as weights, so any
FST-shaped consumer can drive the model without knowing about
alignments.  The automaton is infinite, so state payloads live in a
bounded LRU cache and are replayed from the nearest resident ancestor
when needed again; replays are bit-exact because beam extension is
deterministic.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

from .engine import (AlignmentBeam, DeadHistoryError, NfclmModel, eos_logprob,
                     extend, start_beam)


@dataclass
class DynFstState:
    state_id: int
    history: tuple[str, ...]
    beam: AlignmentBeam
    final_log_weight: float  # -log P(EOS | history); inf when mid-class

    @property
    def is_final(self) -> bool:
        return self.final_log_weight != math.inf


@dataclass
class SessionStats:
    expansions: int = 0
    replays: int = 0
    replayed_steps: int = 0
    evictions: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "expansions": self.expansions,
            "replays": self.replays,
            "replayed_steps": self.replayed_steps,
            "evictions": self.evictions,
        }


class DynFstSession:
    """Single-consumer expansion session over a shared immutable model.

    ``capacity`` bounds how many state payloads stay resident (the start
    state is never evicted); ids, arcs, and weights are remembered for
    every state ever expanded, so arc queries stay cheap after eviction.
    """

    def __init__(self, model: NfclmModel, capacity: Optional[int] = None):
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must allow at least the start state")
        self.model = model
        self.capacity = capacity
        self.stats = SessionStats()
        self._ids: dict[tuple[str, ...], int] = {}
        self._histories: list[tuple[str, ...]] = []
        self._resident: OrderedDict[int, DynFstState] = OrderedDict()
        self._arcs: dict[tuple[int, str], Optional[tuple[int, float]]] = {}
        self._finals: dict[int, float] = {}
        root = self._install((), start_beam(model))
        self._start_id = root.state_id

    # -- state bookkeeping -------------------------------------------------

    def _install(self, history: tuple[str, ...], beam: AlignmentBeam) -> DynFstState:
        state_id = self._ids.get(history)
        if state_id is None:
            state_id = len(self._histories)
            self._ids[history] = state_id
            self._histories.append(history)
        final = eos_logprob(self.model, beam)
        state = DynFstState(
            state_id=state_id,
            history=history,
            beam=beam,
            final_log_weight=-final if final != -math.inf else math.inf,
        )
        self._finals[state_id] = state.final_log_weight
        self._resident[state_id] = state
        self._resident.move_to_end(state_id)
        self.stats.expansions += 1
        self._enforce_capacity()
        return state

    def _enforce_capacity(self) -> None:
        if self.capacity is None:
            return
        while len(self._resident) > self.capacity:
            for candidate in self._resident:
                if candidate != self._start_id:
                    self._resident.pop(candidate)
                    self.stats.evictions += 1
                    break
            else:
                break  # only the start state is resident

    def _resolve(self, state_id: int) -> DynFstState:
        if not 0 <= state_id < len(self._histories):
            raise KeyError(f"unknown state id {state_id}")
        state = self._resident.get(state_id)
        if state is not None:
            self._resident.move_to_end(state_id)
            return state
        # Replay from the nearest resident ancestor.
        history = self._histories[state_id]
        depth = len(history) - 1
        while self._ids.get(history[:depth]) not in self._resident:
            depth -= 1  # terminates: the start state is never evicted
        ancestor = self._resident[self._ids[history[:depth]]]
        self.stats.replays += 1
        beam = ancestor.beam
        for i in range(depth, len(history)):
            beam, _ = extend(self.model, beam, history[i])
            self.stats.replayed_steps += 1
        return self._install(history, beam)

    # -- FST surface ---------------------------------------------------------

    def start_state(self) -> int:
        return self._start_id

    def history_of(self, state_id: int) -> tuple[str, ...]:
        if not 0 <= state_id < len(self._histories):
            raise KeyError(f"unknown state id {state_id}")
        return self._histories[state_id]

    def beam_of(self, state_id: int) -> AlignmentBeam:
        return self._resolve(state_id).beam

    def transition(self, state_id: int, symbol: str) -> Optional[tuple[int, float]]:
        """(destination id, arc weight) or None when no alignment survives."""
        key = (state_id, symbol)
        if key in self._arcs:
            return self._arcs[key]
        state = self._resolve(state_id)
        try:
            beam, step = extend(self.model, state.beam, symbol)
        except DeadHistoryError:
            self._arcs[key] = None
            return None
        dest = self._install(state.history + (symbol,), beam)
        arc = (dest.state_id, -step)
        self._arcs[key] = arc
        return arc

    def final_weight(self, state_id: int) -> Optional[float]:
        """-log P(EOS | history); None when the state cannot terminate."""
        if state_id in self._finals:
            weight = self._finals[state_id]
        else:
            weight = self._resolve(state_id).final_log_weight
        return None if weight == math.inf else weight

    def evict_and_replay(self, capacity: Optional[int] = None) -> SessionStats:
        """Shrink the resident set (to ``capacity`` if given) and report stats.

        Evicted states are reconstructed transparently on next touch.
        """
        if capacity is not None:
            if capacity < 1:
                raise ValueError("capacity must allow at least the start state")
            self.capacity = capacity
        self._enforce_capacity()
        return self.stats

    def dump(self) -> str:
        """Text rendering of everything expanded so far.

        One ``state`` line per state (history, then each alignment's
        decider history and log-weight), one ``arc`` line per surviving
        arc, and one ``final`` line per stoppable state.
        """
        lines = []
        for state_id, history in enumerate(self._histories):
            beam = self.beam_of(state_id)
            labels = " | ".join(
                f"{','.join(h.decider_history) or '<start>'}"
                f"{'' if h.position is None else f'[{h.position[0]}:{h.position[1]}]'}"
                f" {h.log_weight:.6f}"
                for h in beam.hypotheses
            )
            lines.append(f"state {state_id}\t{' '.join(history) or '<start>'}\t{labels}")
        for (src, symbol), arc in sorted(self._arcs.items()):
            if arc is not None:
                dest, weight = arc
                lines.append(f"arc {src}\t{symbol}\t{weight:.6f}\t{dest}")
        for state_id in range(len(self._histories)):
            weight = self._finals.get(state_id, math.inf)
            if weight != math.inf:
                lines.append(f"final {state_id}\t{weight:.6f}")
        return "\n".join(lines) + "\n"
