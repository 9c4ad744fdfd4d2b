"""Channel timing profiles.

A profile boils a WLAN generation down to the four numbers the throughput
model needs: the empty-slot duration, the duration of an occupied slot
(frame exchange plus inter-frame spaces), the payload size and the beacon
interval that defines one adaptation stage.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace


@dataclass(frozen=True)
class PhyProfile:
    T_e: float  # empty slot, s
    T_t: float  # occupied slot (DIFS + DATA + SIFS + ACK), s
    l: float  # payload, bits
    T_beacon: float = 0.1  # stage length, s

    def __post_init__(self):
        if not (0.0 < self.T_e < self.T_t):
            raise ValueError(f"need 0 < T_e < T_t, got T_e={self.T_e!r}, T_t={self.T_t!r}")
        if self.l <= 0:
            raise ValueError(f"payload length must be positive, got {self.l!r}")
        if self.T_beacon <= 0:
            raise ValueError(f"beacon interval must be positive, got {self.T_beacon!r}")

    @property
    def capacity(self) -> float:
        """Channel capacity l/T_t in bits/s (one successful frame per slot)."""
        return self.l / self.T_t

    def with_overrides(self, **kw) -> "PhyProfile":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def ieee80211g(
        cls,
        payload_bytes: int = 1500,
        data_rate: float = 54e6,
        ack_rate: float = 24e6,
        slot: float = 9e-6,
        sifs: float = 10e-6,
        difs: float = 28e-6,
        plcp: float = 20e-6,
        mac_header_bytes: int = 34,
        ack_bytes: int = 14,
        beacon: float = 0.1,
    ) -> "PhyProfile":
        """802.11g OFDM profile.

        Frame airtimes are bit-exact (no OFDM symbol padding). ACK timeout
        and DIFS are folded into ``T_t`` so success and collision slots have
        the same length.
        """
        data = plcp + (mac_header_bytes + payload_bytes) * 8 / data_rate
        ack = plcp + ack_bytes * 8 / ack_rate
        return cls(T_e=slot, T_t=difs + data + sifs + ack, l=payload_bytes * 8.0, T_beacon=beacon)


DEFAULT_PHY = PhyProfile.ieee80211g()


def stage_count(duration: float, phy: PhyProfile) -> int:
    # guard against 0.30000000000000004 / 0.1 style round-up
    return max(1, math.ceil(round(duration / phy.T_beacon, 9)))
