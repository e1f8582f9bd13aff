"""Per-pulse click records from an M-channel detector array."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

MAX_CHANNELS = 32
DEFAULT_PERIOD_PS = 12_500  # 80 MHz repetition


def click_counts(masks: np.ndarray) -> np.ndarray:
    """Number of set bits per mask."""
    return np.bitwise_count(np.asarray(masks, dtype=np.uint32)).astype(np.int64)


@dataclass(frozen=True, eq=False)
class ClickStream:
    """Dense, ordered pulse train: one channel bitmask per pulse.

    Empty pulses are stored (mask 0). ``pulse_index`` must be strictly
    increasing; lags in the correlator are counted in record positions, so
    a stream read from disk is expected to be contiguous.
    """

    masks: np.ndarray
    m_channels: int
    pulse_period_ps: int = DEFAULT_PERIOD_PS
    pulse_index: np.ndarray | None = None

    def __post_init__(self):
        m = int(self.m_channels)
        if not 1 <= m <= MAX_CHANNELS:
            raise DomainError(f"m_channels must be in 1..{MAX_CHANNELS}, got {m}")
        if int(self.pulse_period_ps) <= 0:
            raise DomainError("pulse_period_ps must be positive")
        masks = np.ascontiguousarray(self.masks, dtype=np.uint32)
        if masks.ndim != 1:
            raise DomainError("masks must be one-dimensional")
        if m < 32 and masks.size and (masks >> np.uint32(m)).any():
            raise DomainError(f"masks have bits set at or above channel {m}")
        idx = self.pulse_index
        if idx is None:
            idx = np.arange(masks.size, dtype=np.uint64)
        else:
            idx = np.ascontiguousarray(idx, dtype=np.uint64)
            if idx.shape != masks.shape:
                raise DomainError("pulse_index and masks must have the same length")
            if idx.size > 1 and not (idx[1:] > idx[:-1]).all():
                raise DomainError("pulse_index must be strictly increasing")
        masks.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "pulse_index", idx)
        object.__setattr__(self, "m_channels", m)
        object.__setattr__(self, "pulse_period_ps", int(self.pulse_period_ps))

    def __len__(self):
        return int(self.masks.size)

    def counts(self) -> np.ndarray:
        return click_counts(self.masks)

    def __eq__(self, other):
        if not isinstance(other, ClickStream):
            return NotImplemented
        return (
            self.m_channels == other.m_channels
            and self.pulse_period_ps == other.pulse_period_ps
            and np.array_equal(self.masks, other.masks)
            and np.array_equal(self.pulse_index, other.pulse_index)
        )

    __hash__ = None

    @classmethod
    def from_counts(cls, counts, m_channels: int = MAX_CHANNELS, pulse_period_ps: int = DEFAULT_PERIOD_PS):
        """Ideal photon-number-resolving readout: ``k`` clicks set the lowest ``k`` bits."""
        k = np.asarray(counts, dtype=np.int64)
        if (k < 0).any() or (k > m_channels).any():
            raise DomainError(f"click counts must lie in 0..{m_channels}")
        masks = ((np.uint64(1) << k.astype(np.uint64)) - np.uint64(1)).astype(np.uint32)
        return cls(masks, m_channels, pulse_period_ps)
