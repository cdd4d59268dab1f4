"""Reward functions for the three management tasks.

All three are pure functions of one day's deltas and applied inputs.  The
fertilization reward trades nitrogen uptake against applied fertilizer, the
irrigation reward trades biomass gain against applied water, and the mixed
reward is a weighted economic balance that pays out yield at harvest and
charges inputs (and optionally nitrate leakage) every day.
"""

from __future__ import annotations

from dataclasses import dataclass

# Cost coefficients of the two single-input tasks.
FERT_COST_PER_KG = 0.5
WATER_COST_PER_L = 15.0


@dataclass(frozen=True)
class MixedRewardWeights:
    """Weights for yield, nitrogen use, water use, and nitrate leakage."""

    w1: float = 0.158
    w2: float = 0.79
    w3: float = 1.1
    w4: float = 0.0

    def __post_init__(self) -> None:
        for name in ("w1", "w2", "w3", "w4"):
            v = getattr(self, name)
            if not (v >= 0.0 and v == v and v != float("inf")):
                raise ValueError(f"{name} must be finite and >= 0")


@dataclass(frozen=True)
class StepDeltas:
    """Per-day quantities the rewards are computed from.

    trnu            daily plant nitrogen uptake, kg N/ha
    d_topwt         daily change in above-ground biomass, kg/ha
    n_applied       nitrogen applied this day, kg/ha
    water_applied   irrigation water applied this day, L/m^2
    n_leached       nitrate leached below the root zone this day, kg/ha
    grain_yield     grain yield, kg/ha; nonzero only at harvest
    is_harvest      True on the harvest step
    """

    trnu: float = 0.0
    d_topwt: float = 0.0
    n_applied: float = 0.0
    water_applied: float = 0.0
    n_leached: float = 0.0
    grain_yield: float = 0.0
    is_harvest: bool = False


def reward_fertilization(d: StepDeltas) -> float:
    """Nitrogen uptake minus half the applied fertilizer amount."""
    return d.trnu - FERT_COST_PER_KG * d.n_applied


def reward_irrigation(d: StepDeltas) -> float:
    """Biomass gain minus fifteen times the applied water amount."""
    return d.d_topwt - WATER_COST_PER_L * d.water_applied


def reward_mixed(d: StepDeltas, w: MixedRewardWeights) -> float:
    """Weighted input costs every day; weighted yield added at harvest."""
    r = -(w.w2 * d.n_applied + w.w3 * d.water_applied + w.w4 * d.n_leached)
    if d.is_harvest:
        r += w.w1 * d.grain_yield
    return r
