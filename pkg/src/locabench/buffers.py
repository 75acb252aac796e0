"""Fixed-capacity FIFO buffers backed by preallocated numpy arrays."""
from __future__ import annotations

import numpy as np


class RingBuffer:
    """FIFO store of records with named fields.

    ``fields`` maps a name to ``(shape, dtype)``. Once full, each ``add``
    overwrites the oldest record.

    >>> buf = RingBuffer(2, x=((), np.int64))
    >>> for i in range(3):
    ...     buf.add(x=i)
    >>> buf.field("x").tolist()
    [1, 2]
    """

    def __init__(self, capacity: int, **fields):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        if not fields:
            raise ValueError("a buffer needs at least one field")
        self.capacity = int(capacity)
        self._data = {name: np.empty((self.capacity, *shape), dtype=dtype)
                      for name, (shape, dtype) in fields.items()}
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, **values) -> None:
        i = self._next
        for name, arr in self._data.items():
            arr[i] = values[name]
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        if self._size < self.capacity:
            return np.arange(self._size)
        return (np.arange(self.capacity) + self._next) % self.capacity

    def field(self, name: str) -> np.ndarray:
        """Contents of one field, oldest first."""
        return self._data[name][self._order()]

    def sample_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.integers(self._size, size=n)

    def sample(self, rng: np.random.Generator, n: int) -> dict:
        """``n`` records drawn uniformly with replacement."""
        if self._size == 0:
            raise IndexError("sampling from an empty buffer")
        idx = self.sample_indices(rng, n)
        return {name: arr[idx] for name, arr in self._data.items()}

    def get(self, name: str, raw_index):
        return self._data[name][raw_index]

    def arrays(self) -> dict:
        """Raw storage (not in FIFO order), for checksums."""
        return {name: arr[:self._size] for name, arr in self._data.items()}


class PlanningBuffer(RingBuffer):
    """Observed sparse feature vectors (``k`` active indices each)."""

    def __init__(self, capacity: int, k: int):
        super().__init__(capacity, x=((k,), np.int64))

    def add_features(self, active) -> None:
        self.add(x=active)

    def sample_batch(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` feature vectors drawn uniformly with replacement, shape (n, k)."""
        return self._data["x"][rng.integers(self._size, size=n)]


class LearningBuffer(RingBuffer):
    """Transitions ``(s, a, r, s', z)`` for model learning."""

    def __init__(self, capacity: int, state_dim: int):
        super().__init__(capacity, s=((state_dim,), float), a=((), np.int64), r=((), float),
                         s_next=((state_dim,), float), z=((), float))
