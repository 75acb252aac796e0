"""Grid tile coding with asymmetrically offset tilings.

Each tiling covers the box with ``tiles_per_dim`` tiles per dimension; the
tile width is ``(high - low) / (tiles_per_dim - 1)`` so that every offset
tiling still covers the whole box. Tiling ``i`` is shifted by
``(i * odd_d / k) mod 1`` tile widths in dimension ``d`` (odd_d = 1, 3, 5, ...).
"""
from __future__ import annotations

import numpy as np

# standard configurations: (tilings, tiles per dimension)
CONFIGS = ((3, 18), (5, 14), (10, 10))


class TileCoder:
    def __init__(self, num_tilings: int, tiles_per_dim, low, high, offsets=None):
        low = np.asarray(low, dtype=float)
        high = np.asarray(high, dtype=float)
        dims = len(low)
        tiles = np.broadcast_to(np.asarray(tiles_per_dim, dtype=np.int64), (dims,)).copy()
        if num_tilings < 1 or np.any(tiles < 2):
            raise ValueError("need at least one tiling and two tiles per dimension")
        if np.any(high <= low):
            raise ValueError("each upper bound must exceed its lower bound")
        self.num_tilings = int(num_tilings)
        self.tiles_per_dim = tiles
        self.low, self.high = low, high
        self.width = (high - low) / (tiles - 1)
        if offsets is None:
            odd = 2 * np.arange(dims) + 1
            offsets = (np.arange(num_tilings)[:, None] * odd[None, :] / num_tilings) % 1.0
        # offsets are stored in tile-width units
        self.offsets = np.asarray(offsets, dtype=float).reshape(num_tilings, dims)
        if np.any(self.offsets < 0.0) or np.any(self.offsets >= 1.0):
            raise ValueError("offsets must lie in [0, 1) tile widths")
        self.tiles_per_tiling = int(np.prod(tiles))
        self.total_features = self.num_tilings * self.tiles_per_tiling
        # row-major strides within one tiling
        self._strides = np.cumprod(np.r_[1, tiles[::-1][:-1]])[::-1].astype(np.int64)
        self._base = np.arange(num_tilings, dtype=np.int64) * self.tiles_per_tiling

    @property
    def m(self) -> int:
        return self.total_features

    def tile_coords(self, state) -> np.ndarray:
        """Per-tiling integer tile coordinates, shape (k, dims)."""
        x = (np.clip(np.asarray(state, dtype=float), self.low, self.high) - self.low) / self.width
        coords = np.floor(x + self.offsets).astype(np.int64)
        return np.minimum(coords, self.tiles_per_dim - 1)

    def encode(self, state) -> np.ndarray:
        """Active feature indices, one per tiling, strictly increasing."""
        return self._base + self.tile_coords(state) @ self._strides

    def encode_batch(self, states) -> np.ndarray:
        """Encode an (n, dims) array of states into (n, k) active indices."""
        x = (np.clip(np.asarray(states, dtype=float), self.low, self.high) - self.low) / self.width
        coords = np.floor(x[:, None, :] + self.offsets[None]).astype(np.int64)
        coords = np.minimum(coords, self.tiles_per_dim - 1)
        return self._base + coords @ self._strides


def encode(state, tc: TileCoder) -> np.ndarray:
    return tc.encode(state)


def onehot_feature(index: int, m: int) -> np.ndarray:
    if not 0 <= index < m:
        raise IndexError(f"feature index {index} outside [0, {m})")
    return np.array([index], dtype=np.int64)


def dense(active, m: int) -> np.ndarray:
    """Binary dense vector with ones at the active indices."""
    out = np.zeros(m)
    out[np.asarray(active)] = 1.0
    return out
