"""Named configurations matching the two evaluated front ends.

asr3  -- 2-D blocks of 3x3 over 80-dim log-mel frames (first conv stride 3)
asv10 -- 1-D blocks of 10 samples over the raw waveform (first conv stride 10)
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParameterError


@dataclass(frozen=True)
class Preset:
    name: str
    mode: str
    M: int
    feature: str | None
    n_mels: int | None = None


PRESETS = {
    "asr3": Preset("asr3", "2d", 3, "log_mel", 80),
    "asv10": Preset("asv10", "1d", 10, None),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
