import numpy as np
import pytest

from croprl.simulator import SimConfig
from croprl.weather import WeatherDay, generate_weather

CFG = SimConfig()


def test_same_seed_day_identical():
    a = generate_weather(42, 100, CFG)
    b = generate_weather(42, 100, CFG)
    assert (a.rainfall_mm, a.t_mean_c, a.srad_mj) == (b.rainfall_mm, b.t_mean_c, b.srad_mj)


def test_different_seed_differs():
    days_a = [generate_weather(1, d, CFG).rainfall_mm for d in range(50)]
    days_b = [generate_weather(2, d, CFG).rainfall_mm for d in range(50)]
    assert days_a != days_b


def test_negative_day_rejected():
    with pytest.raises(ValueError):
        generate_weather(1, -1, CFG)


def test_weather_day_validates():
    with pytest.raises(ValueError):
        WeatherDay(rainfall_mm=-1.0, t_mean_c=20.0, srad_mj=10.0)
    with pytest.raises(ValueError):
        WeatherDay(rainfall_mm=0.0, t_mean_c=float("nan"), srad_mj=10.0)


def test_wet_fraction_matches_bernoulli():
    # Monte Carlo against the configured wet-day probability.
    n = 10_000
    wet = sum(generate_weather(seed, seed % 365, CFG).rainfall_mm > 0 for seed in range(n))
    assert abs(wet / n - CFG.wet_day_prob) < 0.02


def test_srad_never_negative():
    srads = [generate_weather(seed, seed % 365, CFG).srad_mj for seed in range(10_000)]
    assert min(srads) >= 0.0


def test_seasonal_cycle_present():
    # mid-year should be warmer than the season start on average
    t_early = np.mean([generate_weather(s, 5, CFG).t_mean_c for s in range(300)])
    t_mid = np.mean([generate_weather(s, 182, CFG).t_mean_c for s in range(300)])
    assert t_mid > t_early + 5.0
