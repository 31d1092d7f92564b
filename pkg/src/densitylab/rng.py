"""Counter-based random number streams for reproducible parallel Monte Carlo.

Every path owns four independent Philox streams, one per noise channel:
Gaussian increments, Poisson jump counts, jump marks, jump times.  The
stream key is a pure function of (seed, path index, channel), so a path
produces bit-identical noise no matter which worker simulates it or in
which order paths are executed.
"""

from __future__ import annotations

import numpy as np

CHANNEL_GAUSSIAN = 0
CHANNEL_POISSON_COUNT = 1
CHANNEL_POISSON_MARKS = 2
CHANNEL_POISSON_TIMES = 3

_N_CHANNELS = 4
_MASK64 = (1 << 64) - 1


def stream(seed: int, path: int, channel: int) -> np.random.Generator:
    """Generator for one (seed, path, channel) triple.

    Philox is counter-based: distinct keys give statistically independent,
    reproducible streams with no sequential dependence between paths.
    """
    if channel < 0 or channel >= _N_CHANNELS:
        raise ValueError(f"channel must be in [0, {_N_CHANNELS}), got {channel}")
    if path < 0:
        raise ValueError(f"path index must be nonnegative, got {path}")
    key = np.array([seed & _MASK64, (path * _N_CHANNELS + channel) & _MASK64],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class PathStreams:
    """The four noise channels of a single Monte Carlo path.

    Each channel's generator is created once and then consumed sequentially;
    a fresh PathStreams with the same (seed, path) replays the same noise.
    """

    def __init__(self, seed: int, path: int):
        self.seed = seed
        self.path = path
        self._gen: dict[int, np.random.Generator] = {}

    def _channel(self, channel: int) -> np.random.Generator:
        if channel not in self._gen:
            self._gen[channel] = stream(self.seed, self.path, channel)
        return self._gen[channel]

    @property
    def gaussian(self) -> np.random.Generator:
        return self._channel(CHANNEL_GAUSSIAN)

    @property
    def poisson_count(self) -> np.random.Generator:
        return self._channel(CHANNEL_POISSON_COUNT)

    @property
    def poisson_marks(self) -> np.random.Generator:
        return self._channel(CHANNEL_POISSON_MARKS)

    @property
    def poisson_times(self) -> np.random.Generator:
        return self._channel(CHANNEL_POISSON_TIMES)


def decorrelate(seed: int, cell: int) -> int:
    """Derive an independent base seed for a sweep cell or sub-experiment."""
    return (seed * 0x9E3779B97F4A7C15 + 0x100000001B3 * (cell + 1)) & _MASK64
