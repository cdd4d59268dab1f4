"""Surrogate daily-timestep maize field simulator.

A deliberately small water-bucket + nitrate-pool + radiation-use-efficiency
growth model.  It is built so that (a) fertilizer and water causally raise
growth and the task rewards, (b) over-application is punished through
leaching and the reward costs, and (c) stochastic weather creates real
episode variance.  Every constant lives in :class:`SimConfig` and can be
round-tripped through a flat key=value text file, so runs are fully
reproducible.

Model outline, applied once per simulated day:

1.  Weather arrives (pure function of the episode seed and day index).
2.  Soil temperature (a 5-day running mean of air temperature) drives the
    planting trigger; planting is automatic.
3.  Water bucket: rain + irrigation in; a fixed fraction of any overflow
    drains (carrying nitrate with it), crop evapotranspiration removes
    water, and residual overflow leaves as surface runoff.
4.  Nitrate pool: applied fertilizer joins the pool; plant uptake is capped
    by a stage- and water-stress-scaled daily demand; drainage leaches part
    of what remains.
5.  Growth: biomass accrues in proportion to solar radiation, scaled by the
    binding (minimum) of water and nitrogen stress; degree-days advance the
    phenological stage; extended severe water stress kills the crop.

The per-mode observation layouts are this project's own reconstruction and
are documented next to the field tuples below.
"""

from __future__ import annotations

import dataclasses
import math
from collections import deque
from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np

from .mdp import ActionSpace, Environment, StepAfterDone, StepResult
from .rewards import (
    MixedRewardWeights,
    StepDeltas,
    reward_fertilization,
    reward_irrigation,
    reward_mixed,
)
from .weather import WeatherDay, generate_weather


class InvalidStage(RuntimeError):
    """Growth step called outside the vegetative/reproductive stages."""


class TaskMode(str, Enum):
    FERTILIZATION = "fert"
    IRRIGATION = "irr"
    MIXED = "mix"


class Stage(IntEnum):
    PRE_PLANT = 0
    VEGETATIVE = 1
    REPRODUCTIVE = 2
    MATURE = 3
    FAILED = 4


# Observation field orders, one tuple per task mode.  days_after_planting is
# -1 before planting and is always field 0 so schedule-driven policies can
# read it uniformly.  The mixed layout is exactly the union of the other two.
FERT_OBS_FIELDS = (
    "days_after_planting",
    "soil_nitrate",
    "trnu",
    "n_uptake_cum",
    "biomass",
    "stage",
    "rain_prev",
    "fert_cum",
)
IRR_OBS_FIELDS = (
    "days_after_planting",
    "soil_water",
    "biomass",
    "d_biomass_prev",
    "stage",
    "rain_prev",
    "et_prev",
    "water_cum",
)
MIXED_OBS_FIELDS = (
    "days_after_planting",
    "soil_nitrate",
    "soil_water",
    "trnu",
    "n_uptake_cum",
    "biomass",
    "d_biomass_prev",
    "stage",
    "rain_prev",
    "et_prev",
    "fert_cum",
    "water_cum",
)

OBS_FIELDS = {
    TaskMode.FERTILIZATION: FERT_OBS_FIELDS,
    TaskMode.IRRIGATION: IRR_OBS_FIELDS,
    TaskMode.MIXED: MIXED_OBS_FIELDS,
}


@dataclass(frozen=True)
class SimConfig:
    """All surrogate constants.  Units in field names or comments."""

    # Soil
    soil_capacity_mm: float = 150.0
    initial_soil_water_mm: float = 90.0
    initial_nitrate_kg: float = 25.0
    drainage_fraction: float = 0.3

    # Evapotranspiration: et = et_coeff * srad * cover, throttled linearly
    # once soil water falls below et_dry_soil_mm (dry soil evaporates less),
    # with crop cover rising from cover_base (bare soil) to cover_max as
    # biomass approaches cover_full_biomass_kg.
    et_coeff_mm_per_mj: float = 0.45
    et_dry_soil_mm: float = 25.0
    cover_base: float = 0.15
    cover_max: float = 0.75
    cover_full_biomass_kg: float = 6000.0

    # Plant growth and phenology
    rue_g_per_mj: float = 1.6
    max_n_demand_kg_day: float = 4.0
    gdd_base_c: float = 8.0
    gdd_reproductive: float = 600.0
    gdd_maturity: float = 1600.0
    n_demand_factor_veg: float = 1.0
    n_demand_factor_rep: float = 0.15
    growth_factor_veg: float = 1.0
    growth_factor_rep: float = 0.85
    harvest_index: float = 0.5

    # Planting trigger: soil temperature above the threshold for the given
    # number of consecutive days (humidity is deliberately unmodeled).
    plant_trigger_temp_c: float = 12.0
    plant_trigger_days: int = 5
    soil_temp_window_days: int = 5

    # Crop failure: this many consecutive days of severe water stress.
    failure_stress_threshold: float = 0.05
    failure_days: int = 10

    # Automatic fertilization in irrigation mode (days after planting).
    auto_fert_days: tuple[int, ...] = (40, 45, 80)
    auto_fert_amount_kg: float = 30.0

    # Weather generator
    wet_day_prob: float = 0.3
    rain_mean_mm: float = 9.0
    temp_mean_c: float = 22.0
    temp_amplitude_c: float = 6.0
    temp_noise_c: float = 2.0
    srad_mean_mj: float = 18.0
    srad_amplitude_mj: float = 6.0
    srad_noise_mj: float = 2.0

    # Action bounds
    max_fert_kg: float = 200.0
    max_water_l: float = 50.0

    # Mixed-task reward weights
    w1: float = 0.158
    w2: float = 0.79
    w3: float = 1.1
    w4: float = 0.0

    # Hard safety cap on episode length, beyond the biological rules.
    max_episode_days: int = 365

    def __post_init__(self) -> None:
        positive = (
            "soil_capacity_mm",
            "et_coeff_mm_per_mj",
            "rue_g_per_mj",
            "max_n_demand_kg_day",
            "gdd_reproductive",
            "gdd_maturity",
            "harvest_index",
            "rain_mean_mm",
            "max_fert_kg",
            "max_water_l",
            "cover_full_biomass_kg",
        )
        for name in positive:
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0")
        if not 0.0 <= self.wet_day_prob <= 1.0:
            raise ValueError("wet_day_prob must be in [0, 1]")
        if not 0.0 <= self.drainage_fraction <= 1.0:
            raise ValueError("drainage_fraction must be in [0, 1]")
        if self.initial_soil_water_mm < 0 or self.initial_soil_water_mm > self.soil_capacity_mm:
            raise ValueError("initial_soil_water_mm must be in [0, capacity]")
        if self.initial_nitrate_kg < 0:
            raise ValueError("initial_nitrate_kg must be >= 0")
        if min(self.w1, self.w2, self.w3, self.w4) < 0:
            raise ValueError("reward weights must be >= 0")

    def reward_weights(self) -> MixedRewardWeights:
        return MixedRewardWeights(w1=self.w1, w2=self.w2, w3=self.w3, w4=self.w4)


@dataclass
class SoilState:
    water_mm: float
    nitrate_kg: float
    temp_c: float = 0.0


@dataclass
class PlantState:
    biomass_kg: float = 0.0
    n_uptake_cum_kg: float = 0.0
    gdd: float = 0.0
    stage: Stage = Stage.PRE_PLANT
    stress_days: int = 0


@dataclass(frozen=True)
class WaterFluxes:
    et_mm: float
    drainage_mm: float
    runoff_mm: float


def water_stress(water_mm: float, cfg: SimConfig) -> float:
    """1 when the bucket is at least half full, falling linearly to 0."""
    return min(1.0, water_mm / (0.5 * cfg.soil_capacity_mm))


def crop_cover(biomass_kg: float, cfg: SimConfig) -> float:
    frac = min(1.0, max(0.0, biomass_kg) / cfg.cover_full_biomass_kg)
    return cfg.cover_base + (cfg.cover_max - cfg.cover_base) * frac


def n_demand_stage_factor(stage: Stage, cfg: SimConfig) -> float:
    if stage == Stage.VEGETATIVE:
        return cfg.n_demand_factor_veg
    if stage == Stage.REPRODUCTIVE:
        return cfg.n_demand_factor_rep
    return 0.0


def growth_stage_factor(stage: Stage, cfg: SimConfig) -> float:
    if stage == Stage.VEGETATIVE:
        return cfg.growth_factor_veg
    if stage == Stage.REPRODUCTIVE:
        return cfg.growth_factor_rep
    return 0.0


def step_soil_water(
    soil: SoilState,
    weather: WeatherDay,
    irrigation_l: float,
    cover: float,
    cfg: SimConfig,
) -> tuple[SoilState, WaterFluxes]:
    """Advance the water bucket one day.  1 L/m^2 of irrigation == 1 mm.

    Order of fluxes: inflow, fractional drainage of overflow, ET (capped by
    available water), then any residual overflow leaves as surface runoff so
    the bucket never exceeds capacity.  Water is conserved exactly:
    rain + irrigation - et - drainage - runoff == water' - water.
    """
    if irrigation_l < 0:
        raise ValueError("irrigation must be >= 0")
    water = soil.water_mm + weather.rainfall_mm + irrigation_l
    drainage = cfg.drainage_fraction * max(0.0, water - cfg.soil_capacity_mm)
    water -= drainage
    dryness = min(1.0, water / cfg.et_dry_soil_mm) if cfg.et_dry_soil_mm > 0 else 1.0
    et = min(cfg.et_coeff_mm_per_mj * weather.srad_mj * cover * dryness, water)
    water -= et
    runoff = max(0.0, water - cfg.soil_capacity_mm)
    water -= runoff
    new_soil = dataclasses.replace(soil, water_mm=water)
    return new_soil, WaterFluxes(et_mm=et, drainage_mm=drainage, runoff_mm=runoff)


def step_nitrogen(
    soil: SoilState,
    plant: PlantState,
    fert_kg: float,
    drainage_mm: float,
    cfg: SimConfig,
) -> tuple[SoilState, float, float]:
    """Advance the nitrate pool one day; returns (soil', uptake, leached).

    Uptake is capped by the stage- and water-stress-scaled daily demand;
    what remains in the pool leaches in proportion to drainage relative to
    soil water.  Mass balance: nitrate + fert == nitrate' + uptake + leached.
    """
    if fert_kg < 0:
        raise ValueError("fertilizer must be >= 0")
    available = soil.nitrate_kg + fert_kg
    demand = (
        cfg.max_n_demand_kg_day
        * n_demand_stage_factor(plant.stage, cfg)
        * water_stress(soil.water_mm, cfg)
    )
    uptake = min(available, demand)
    leached = (available - uptake) * min(1.0, drainage_mm / max(soil.water_mm, 1.0))
    nitrate = available - uptake - leached
    return dataclasses.replace(soil, nitrate_kg=nitrate), uptake, leached


def step_growth(
    plant: PlantState,
    weather: WeatherDay,
    soil: SoilState,
    uptake_kg: float,
    cfg: SimConfig,
) -> PlantState:
    """Advance biomass, degree-days, stage, and the failure counter one day.

    Biomass gain = RUE * srad * 10 (g/m^2 -> kg/ha) scaled by the binding
    stress factor and the stage factor.  Raises InvalidStage outside the
    vegetative/reproductive stages.
    """
    if plant.stage not in (Stage.VEGETATIVE, Stage.REPRODUCTIVE):
        raise InvalidStage(f"no growth in stage {plant.stage.name}")
    wstress = water_stress(soil.water_mm, cfg)
    demand = cfg.max_n_demand_kg_day * n_demand_stage_factor(plant.stage, cfg) * wstress
    nstress = 1.0 if demand <= 1e-12 else min(1.0, uptake_kg / demand)
    d_biomass = (
        cfg.rue_g_per_mj
        * weather.srad_mj
        * 10.0
        * min(wstress, nstress)
        * growth_stage_factor(plant.stage, cfg)
    )
    gdd = plant.gdd + max(0.0, weather.t_mean_c - cfg.gdd_base_c)
    stage = plant.stage
    if gdd >= cfg.gdd_maturity:
        stage = Stage.MATURE
    elif stage == Stage.VEGETATIVE and gdd >= cfg.gdd_reproductive:
        stage = Stage.REPRODUCTIVE
    stress_days = plant.stress_days + 1 if wstress < cfg.failure_stress_threshold else 0
    if stage != Stage.MATURE and stress_days >= cfg.failure_days:
        stage = Stage.FAILED
    return PlantState(
        biomass_kg=plant.biomass_kg + d_biomass,
        n_uptake_cum_kg=plant.n_uptake_cum_kg + uptake_kg,
        gdd=gdd,
        stage=stage,
        stress_days=stress_days,
    )


class CropEnv(Environment):
    """The three maize management tasks behind one daily step interface.

    Actions are [N kg/ha] (fertilization), [W L/m^2] (irrigation) or
    [N, W] (mixed); out-of-range components are clamped and flagged in
    ``info["clamped"]``.  In irrigation mode, fertilizer follows the
    automatic schedule in the config.  Rewards follow the active task.
    """

    def __init__(self, mode: TaskMode | str, cfg: SimConfig | None = None):
        self.mode = TaskMode(mode)
        self.cfg = cfg or SimConfig()
        if self.mode == TaskMode.FERTILIZATION:
            low, high = [0.0], [self.cfg.max_fert_kg]
        elif self.mode == TaskMode.IRRIGATION:
            low, high = [0.0], [self.cfg.max_water_l]
        else:
            low, high = [0.0, 0.0], [self.cfg.max_fert_kg, self.cfg.max_water_l]
        self.action_space = ActionSpace(np.array(low), np.array(high))
        self.obs_fields = OBS_FIELDS[self.mode]
        self.observation_dim = len(self.obs_fields)
        self.episode_count = 0
        self._weights = self.cfg.reward_weights()
        self._live = False

    # -- episode lifecycle -------------------------------------------------

    def reset(self, seed: int) -> np.ndarray:
        self._seed = int(seed)
        self._day = 0
        self._planting_day: int | None = None
        self.soil = SoilState(
            water_mm=self.cfg.initial_soil_water_mm,
            nitrate_kg=self.cfg.initial_nitrate_kg,
        )
        self.plant = PlantState()
        self._temp_window: deque[float] = deque(maxlen=self.cfg.soil_temp_window_days)
        self._warm_days = 0
        self._prev = {"rain": 0.0, "et": 0.0, "trnu": 0.0, "d_biomass": 0.0}
        self._fert_cum = 0.0
        self._water_cum = 0.0
        self.episode_count += 1
        self._live = True
        return self._observe()

    def step(self, action: np.ndarray) -> StepResult:
        if not self._live:
            raise StepAfterDone("episode is over (or reset() was never called)")
        raw = np.asarray(action, dtype=np.float64).reshape(-1)
        if raw.shape[0] != self.action_space.dim:
            raise ValueError(f"action dimension {raw.shape[0]} != {self.action_space.dim}")
        applied = self.action_space.clip(raw)
        clamped = float(not self.action_space.contains(raw))

        cfg = self.cfg
        # Planting scheduled by yesterday's trigger becomes effective today,
        # so agents observe days_after_planting = 0 on the planting day.
        if self.plant.stage == Stage.PRE_PLANT and self._planting_day == self._day:
            self.plant.stage = Stage.VEGETATIVE
        entry_stage = self.plant.stage
        dap = self._dap()

        agent_fert, agent_water = 0.0, 0.0
        if self.mode == TaskMode.FERTILIZATION:
            agent_fert = float(applied[0])
        elif self.mode == TaskMode.IRRIGATION:
            agent_water = float(applied[0])
        else:
            agent_fert, agent_water = float(applied[0]), float(applied[1])

        fert = agent_fert
        if self.mode == TaskMode.IRRIGATION and dap in cfg.auto_fert_days:
            fert += cfg.auto_fert_amount_kg

        weather = generate_weather(self._seed, self._day, cfg)

        # Soil temperature and the automatic planting trigger (fires for the
        # following day once the warm streak is long enough).
        self._temp_window.append(weather.t_mean_c)
        soil_temp = sum(self._temp_window) / len(self._temp_window)
        self.soil.temp_c = soil_temp
        if entry_stage == Stage.PRE_PLANT and self._planting_day is None:
            self._warm_days = self._warm_days + 1 if soil_temp > cfg.plant_trigger_temp_c else 0
            if self._warm_days >= cfg.plant_trigger_days:
                self._planting_day = self._day + 1

        cover = crop_cover(self.plant.biomass_kg, cfg)
        self.soil, fluxes = step_soil_water(self.soil, weather, agent_water, cover, cfg)
        self.soil, uptake, leached = step_nitrogen(self.soil, self.plant, fert, fluxes.drainage_mm, cfg)

        prev_biomass = self.plant.biomass_kg
        if self.plant.stage in (Stage.VEGETATIVE, Stage.REPRODUCTIVE):
            self.plant = step_growth(self.plant, weather, self.soil, uptake, cfg)
        d_biomass = self.plant.biomass_kg - prev_biomass

        # Termination: a crop that entered this step mature is harvested
        # now; failure ends the episode on the day it happens; the hard day
        # cap is a safety net on top of the biological rules.
        is_harvest = entry_stage == Stage.MATURE
        done = is_harvest or self.plant.stage == Stage.FAILED or self._day + 1 >= cfg.max_episode_days
        grain = cfg.harvest_index * self.plant.biomass_kg if is_harvest else 0.0

        deltas = StepDeltas(
            trnu=uptake,
            d_topwt=d_biomass,
            n_applied=fert,
            water_applied=agent_water,
            n_leached=leached,
            grain_yield=grain,
            is_harvest=is_harvest,
        )
        r_fert = reward_fertilization(deltas)
        r_irr = reward_irrigation(deltas)
        if self.mode == TaskMode.FERTILIZATION:
            reward = r_fert
        elif self.mode == TaskMode.IRRIGATION:
            reward = r_irr
        else:
            reward = reward_mixed(deltas, self._weights)

        self._fert_cum += agent_fert
        self._water_cum += agent_water
        self._prev = {
            "rain": weather.rainfall_mm,
            "et": fluxes.et_mm,
            "trnu": uptake,
            "d_biomass": d_biomass,
        }
        self._day += 1
        self._live = not done

        info = {
            "day": float(self._day - 1),
            "days_after_planting": float(dap),
            "rain": weather.rainfall_mm,
            "t_mean": weather.t_mean_c,
            "srad": weather.srad_mj,
            "soil_water": self.soil.water_mm,
            "soil_nitrate": self.soil.nitrate_kg,
            "soil_temp": soil_temp,
            "biomass": self.plant.biomass_kg,
            "gdd": self.plant.gdd,
            "stage": float(self.plant.stage),
            "trnu": uptake,
            "d_topwt": d_biomass,
            "fert_applied": fert,
            "agent_fert": agent_fert,
            "water_applied": agent_water,
            "et": fluxes.et_mm,
            "drainage": fluxes.drainage_mm,
            "runoff": fluxes.runoff_mm,
            "leached": leached,
            "clamped": clamped,
            "r_fert": r_fert,
            "r_irr": r_irr,
            "grain_yield": grain,
            "is_harvest": float(is_harvest),
        }
        return StepResult(observation=self._observe(), reward=reward, done=done, info=info)

    # -- observations --------------------------------------------------------

    def _dap(self) -> int:
        if self._planting_day is None or self._day < self._planting_day:
            return -1
        return self._day - self._planting_day

    def _observe(self) -> np.ndarray:
        values = {
            "days_after_planting": float(self._dap()),
            "soil_nitrate": self.soil.nitrate_kg,
            "soil_water": self.soil.water_mm,
            "trnu": self._prev["trnu"],
            "n_uptake_cum": self.plant.n_uptake_cum_kg,
            "biomass": self.plant.biomass_kg,
            "d_biomass_prev": self._prev["d_biomass"],
            "stage": float(self.plant.stage),
            "rain_prev": self._prev["rain"],
            "et_prev": self._prev["et"],
            "fert_cum": self._fert_cum,
            "water_cum": self._water_cum,
        }
        return np.array([values[f] for f in self.obs_fields], dtype=np.float64)


def make_env(mode: TaskMode | str, cfg: SimConfig | None = None) -> CropEnv:
    """Top-level factory (picklable for evaluation worker pools)."""
    return CropEnv(mode, cfg)


# -- flat key=value config files ---------------------------------------------

def save_sim_config(cfg: SimConfig, path) -> None:
    """One ``key=value`` per line; '#' starts a comment."""
    lines = ["# croprl simulator configuration"]
    for f in dataclasses.fields(SimConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            lines.append(f"{f.name}={','.join(str(x) for x in v)}")
        else:
            lines.append(f"{f.name}={v!r}" if isinstance(v, float) else f"{f.name}={v}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_kv_file(path) -> dict[str, str]:
    """Parse a flat key=value file with '#' comments into a string dict."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line.strip()!r}")
            key, value = text.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def sim_config_from_strings(items: dict[str, str], base: SimConfig | None = None) -> SimConfig:
    """Build a SimConfig from string values (config file or CLI overrides)."""
    base = base or SimConfig()
    field_types = {f.name: f.type for f in dataclasses.fields(SimConfig)}
    kwargs: dict[str, object] = {}
    for key, value in items.items():
        if key not in field_types:
            raise ValueError(f"unknown simulator parameter {key!r}")
        current = getattr(base, key)
        if isinstance(current, tuple):
            kwargs[key] = tuple(int(x) for x in value.split(",") if x.strip())
        elif isinstance(current, bool):
            kwargs[key] = value.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            kwargs[key] = int(value)
        else:
            kwargs[key] = float(value)
    return dataclasses.replace(base, **kwargs)


def load_sim_config(path, base: SimConfig | None = None) -> SimConfig:
    return sim_config_from_strings(parse_kv_file(path), base)
