"""Stochastic daily weather, generated as a pure function of (seed, day).

Rainfall is a wet/dry Bernoulli followed by an exponential amount; mean
temperature and solar radiation follow an annual sinusoid (coldest at day
0) plus Gaussian noise, with radiation floored at zero.  Because each day
is derived from its own seed sequence, environment clones can never
desynchronize weather streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .seeding import stream_rng

if TYPE_CHECKING:  # pragma: no cover
    from .simulator import SimConfig

DAYS_PER_YEAR = 365.0


@dataclass(frozen=True)
class WeatherDay:
    rainfall_mm: float
    t_mean_c: float
    srad_mj: float

    def __post_init__(self) -> None:
        if not (self.rainfall_mm >= 0.0 and self.srad_mj >= 0.0):
            raise ValueError("rainfall and srad must be >= 0")
        if not all(map(math.isfinite, (self.rainfall_mm, self.t_mean_c, self.srad_mj))):
            raise ValueError("weather fields must be finite")


def generate_weather(seed: int, day: int, cfg: "SimConfig") -> WeatherDay:
    """Weather for one day; deterministic in (seed, day, cfg)."""
    if day < 0:
        raise ValueError("day must be >= 0")
    rng = stream_rng("weather", seed, day)
    rain = 0.0
    if rng.random() < cfg.wet_day_prob:
        rain = float(rng.exponential(cfg.rain_mean_mm))
    phase = 2.0 * math.pi * day / DAYS_PER_YEAR
    seasonal = -math.cos(phase)  # day 0 = coldest, mid-year = warmest
    t_mean = cfg.temp_mean_c + cfg.temp_amplitude_c * seasonal + float(rng.normal(0.0, cfg.temp_noise_c))
    srad = cfg.srad_mean_mj + cfg.srad_amplitude_mj * seasonal + float(rng.normal(0.0, cfg.srad_noise_mj))
    return WeatherDay(rainfall_mm=rain, t_mean_c=t_mean, srad_mj=max(0.0, srad))
