"""Uniform experience replay with a fixed-capacity ring buffer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    """One tuning step: network-ready state patches, the branch actions
    taken, the scalar reward, and whether this was the final tuning step."""

    state: np.ndarray
    next_state: np.ndarray
    reward: float
    i_choice: int
    s_choice: int
    terminal: bool

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=np.float32)
        self.next_state = np.asarray(self.next_state, dtype=np.float32)
        if self.state.shape != self.next_state.shape:
            raise ValueError(f"state shapes differ: {self.state.shape} vs "
                             f"{self.next_state.shape}")
        self.reward = float(self.reward)
        if not np.isfinite(self.reward):
            raise ValueError(f"reward must be finite, got {self.reward}")
        self.i_choice = int(self.i_choice)
        self.s_choice = int(self.s_choice)
        self.terminal = bool(self.terminal)


class ReplayPool:
    """Ring buffer; sampling is uniform without replacement."""

    def __init__(self, capacity: int, seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._rng = np.random.default_rng(seed)
        self._items: list[Transition] = []
        self._cursor = 0
        self.total_added = 0

    def __len__(self) -> int:
        return len(self._items)

    def add(self, transition: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._cursor] = transition
            self._cursor = (self._cursor + 1) % self.capacity
        self.total_added += 1

    def extend(self, transitions) -> None:
        for t in transitions:
            self.add(t)

    def sample(self, batch_size: int) -> list[Transition]:
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if batch_size > len(self._items):
            raise ValueError(f"cannot sample {batch_size} from a pool of "
                             f"{len(self._items)}")
        idx = self._rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[i] for i in idx]
