"""Evaluation protocol, comparison tables, and figure-data emission.

``evaluate`` runs a policy for a block of consecutively seeded episodes and
aggregates cumulative rewards, per-episode applied-input totals, and 2D
histograms of nonzero applications over (day-after-planting, amount) bins.
Reports serialize to schema-versioned JSON; comparisons are emitted as CSV
plus an aligned text table with the per-row best mean marked; histograms
are written as SVG heatmaps plus a raw-count CSV that round-trips exactly.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mdp import Environment, Policy
from .seeding import stream_rng
from .simulator import TaskMode

SCHEMA_VERSION = 1

# Histogram binning (bin edges are [lo, lo + width) with the top edge closed).
DAY_BIN_WIDTH = 5
DAY_MAX = 160
N_BIN_WIDTH = 10.0
N_MAX = 200.0
W_BIN_WIDTH = 2.0
W_MAX = 50.0


class MixedModes(ValueError):
    """Reports from different task modes were mixed into one comparison row."""


@dataclass(frozen=True)
class ExperimentSpec:
    """One cell of the comparison protocol: what to train and how to test it.

    Evaluation seeds are the block [eval_seed_base, eval_seed_base+episodes)
    and must not contain the training seed.
    """

    task: str
    algorithm: str  # dqn | ppo | null | expert
    train_seed: int
    eval_seed_base: int
    eval_episodes: int
    budget: int = 0  # episodes (dqn) or timesteps (ppo); 0 for baselines
    overrides: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if self.algorithm not in ("dqn", "ppo", "null", "expert"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.eval_episodes < 1:
            raise ValueError("eval_episodes must be >= 1")
        lo, hi = self.eval_seed_base, self.eval_seed_base + self.eval_episodes
        if lo <= self.train_seed < hi:
            raise ValueError("evaluation seed range overlaps the training seed")


def _bin_index(value: float, width: float, maximum: float) -> int:
    n_bins = int(round(maximum / width))
    return min(max(int(value // width), 0), n_bins - 1)


@dataclass
class HistogramGrid:
    """Counts of nonzero applications over (amount bin, day bin)."""

    input_name: str
    amount_width: float
    amount_max: float
    counts: np.ndarray  # shape (n_amount_bins, n_day_bins), int64

    @classmethod
    def empty(cls, input_name: str, amount_width: float, amount_max: float) -> "HistogramGrid":
        n_amount = int(round(amount_max / amount_width))
        n_day = int(round(DAY_MAX / DAY_BIN_WIDTH))
        return cls(input_name, amount_width, amount_max, np.zeros((n_amount, n_day), dtype=np.int64))

    def record(self, day_after_planting: float, amount: float) -> None:
        if amount <= 0.0:
            return
        day_bin = _bin_index(day_after_planting, DAY_BIN_WIDTH, DAY_MAX)
        amount_bin = _bin_index(amount, self.amount_width, self.amount_max)
        self.counts[amount_bin, day_bin] += 1

    def total(self) -> int:
        return int(self.counts.sum())

    def day_edges(self) -> np.ndarray:
        return np.arange(self.counts.shape[1] + 1) * DAY_BIN_WIDTH

    def amount_edges(self) -> np.ndarray:
        return np.arange(self.counts.shape[0] + 1) * self.amount_width

    def to_json(self) -> dict:
        return {
            "input_name": self.input_name,
            "amount_width": self.amount_width,
            "amount_max": self.amount_max,
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "HistogramGrid":
        return cls(
            input_name=data["input_name"],
            amount_width=float(data["amount_width"]),
            amount_max=float(data["amount_max"]),
            counts=np.array(data["counts"], dtype=np.int64),
        )


def _grids_for(task: TaskMode) -> dict[str, HistogramGrid]:
    grids = {}
    if task in (TaskMode.FERTILIZATION, TaskMode.MIXED):
        grids["nitrogen"] = HistogramGrid.empty("nitrogen", N_BIN_WIDTH, N_MAX)
    if task in (TaskMode.IRRIGATION, TaskMode.MIXED):
        grids["water"] = HistogramGrid.empty("water", W_BIN_WIDTH, W_MAX)
    return grids


@dataclass
class EvalReport:
    """Per-policy evaluation statistics over a seeded episode block."""

    policy_name: str
    task: str
    episodes: int
    seed_base: int
    rewards: list[float]
    applied_n: list[float]
    applied_water: list[float]
    histograms: dict[str, HistogramGrid] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @property
    def mean(self) -> float:
        return float(np.mean(self.rewards))

    @property
    def std(self) -> float:
        """Population standard deviation (ddof=0) of the episode rewards."""
        return float(np.std(self.rewards))

    def to_json(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "policy_name": self.policy_name,
            "task": self.task,
            "episodes": self.episodes,
            "seed_base": self.seed_base,
            "mean": self.mean,
            "std": self.std,
            "rewards": [float(r) for r in self.rewards],
            "applied_n": [float(v) for v in self.applied_n],
            "applied_water": [float(v) for v in self.applied_water],
            "histograms": {k: g.to_json() for k, g in self.histograms.items()},
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, data: dict) -> "EvalReport":
        return cls(
            policy_name=data["policy_name"],
            task=data["task"],
            episodes=int(data["episodes"]),
            seed_base=int(data["seed_base"]),
            rewards=[float(r) for r in data["rewards"]],
            applied_n=[float(v) for v in data["applied_n"]],
            applied_water=[float(v) for v in data["applied_water"]],
            histograms={k: HistogramGrid.from_json(g) for k, g in data["histograms"].items()},
            schema_version=int(data["schema_version"]),
        )

    @classmethod
    def load(cls, path) -> "EvalReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _agent_inputs(task: TaskMode, action: np.ndarray, low: np.ndarray, high: np.ndarray) -> tuple[float, float]:
    """Clamped (nitrogen, water) applied by the agent for one step."""
    a = np.clip(np.where(np.isfinite(action), action, 0.0), low, high)
    if task == TaskMode.FERTILIZATION:
        return float(a[0]), 0.0
    if task == TaskMode.IRRIGATION:
        return 0.0, float(a[0])
    return float(a[0]), float(a[1])


def _episode_stats(env: Environment, policy: Policy, task: TaskMode, seed: int, max_steps: int = 400):
    low, high = env.action_space.low, env.action_space.high
    obs = env.reset(seed)
    rng = stream_rng("eval-policy", seed)
    total = 0.0
    n_total = 0.0
    w_total = 0.0
    applications: list[tuple[float, float, float]] = []  # (dap, n, w)
    for _ in range(max_steps):
        action = np.asarray(policy.act(obs, rng), dtype=np.float64)
        dap = float(obs[0])
        n_amt, w_amt = _agent_inputs(task, action, low, high)
        n_total += n_amt
        w_total += w_amt
        if n_amt > 0.0 or w_amt > 0.0:
            applications.append((dap, n_amt, w_amt))
        res = env.step(action)
        total += res.reward
        obs = res.observation
        if res.done:
            break
    return total, n_total, w_total, applications


def _episode_batch(args) -> list[tuple[int, float, float, float, list]]:
    env_factory, policy, task, seeds = args
    env = env_factory()
    out = []
    for seed in seeds:
        total, n_total, w_total, apps = _episode_stats(env, policy, task, seed)
        out.append((seed, total, n_total, w_total, apps))
    return out


def evaluate(
    policy: Policy,
    env_factory,
    episodes: int,
    seed_base: int,
    policy_name: str,
    task: TaskMode | str,
    workers: int = 1,
) -> EvalReport:
    """Run ``episodes`` episodes with seeds seed_base..seed_base+episodes-1.

    Aggregation is keyed by seed, so the worker pool cannot change results;
    ``workers=1`` runs fully serial.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    task = TaskMode(task)
    seeds = list(range(seed_base, seed_base + episodes))

    results: dict[int, tuple[float, float, float, list]] = {}
    if workers <= 1:
        env = env_factory()
        for seed in seeds:
            total, n_total, w_total, apps = _episode_stats(env, policy, task, seed)
            results[seed] = (total, n_total, w_total, apps)
    else:
        chunks = [seeds[i::workers] for i in range(workers)]
        jobs = [(env_factory, policy, task, chunk) for chunk in chunks if chunk]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for batch in pool.map(_episode_batch, jobs):
                for seed, total, n_total, w_total, apps in batch:
                    results[seed] = (total, n_total, w_total, apps)

    grids = _grids_for(task)
    rewards, applied_n, applied_w = [], [], []
    for seed in seeds:
        total, n_total, w_total, apps = results[seed]
        rewards.append(total)
        applied_n.append(n_total)
        applied_w.append(w_total)
        for dap, n_amt, w_amt in apps:
            if "nitrogen" in grids:
                grids["nitrogen"].record(dap, n_amt)
            if "water" in grids:
                grids["water"].record(dap, w_amt)

    return EvalReport(
        policy_name=policy_name,
        task=task.value,
        episodes=episodes,
        seed_base=seed_base,
        rewards=rewards,
        applied_n=applied_n,
        applied_water=applied_w,
        histograms=grids,
    )


# -- comparison tables ---------------------------------------------------------


@dataclass
class ComparisonRow:
    task: str
    policies: list[str]
    means: list[float]
    stds: list[float]
    best_index: int


def compare(reports: list[EvalReport]) -> ComparisonRow:
    """One table row from reports that share a task mode.

    The highest mean is marked; ties break to the lower index.
    """
    if not reports:
        raise ValueError("need at least one report")
    tasks = {r.task for r in reports}
    if len(tasks) > 1:
        raise MixedModes(f"reports span multiple task modes: {sorted(tasks)}")
    means = [r.mean for r in reports]
    best = 0
    for i, m in enumerate(means):
        if m > means[best]:
            best = i
    return ComparisonRow(
        task=reports[0].task,
        policies=[r.policy_name for r in reports],
        means=means,
        stds=[r.std for r in reports],
        best_index=best,
    )


def comparison_to_csv(rows: list[ComparisonRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "policy", "mean", "std", "best"])
        for row in rows:
            for i, name in enumerate(row.policies):
                writer.writerow(
                    [row.task, name, repr(row.means[i]), repr(row.stds[i]), int(i == row.best_index)]
                )


def comparison_to_text(rows: list[ComparisonRow]) -> str:
    """Aligned text table; the best cell per row is wrapped in [brackets]."""
    names = list(dict.fromkeys(name for row in rows for name in row.policies))
    cells: list[list[str]] = []
    for row in rows:
        line = [row.task]
        for name in names:
            if name in row.policies:
                i = row.policies.index(name)
                cell = f"{row.means[i]:.2f} ± {row.stds[i]:.2f}"
                if i == row.best_index:
                    cell = f"[{cell}]"
            else:
                cell = "-"
            line.append(cell)
        cells.append(line)
    header = ["task", *names]
    widths = [max(len(header[c]), *(len(line[c]) for line in cells)) for c in range(len(header))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    out = [fmt.format(*header)]
    out.extend(fmt.format(*line) for line in cells)
    return "\n".join(out) + "\n"


# -- histogram figures -----------------------------------------------------------


def write_histogram_csv(grid: HistogramGrid, path) -> None:
    """Raw counts with day-bin left edges as columns, amount bins as rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        day_edges = grid.day_edges()[:-1]
        writer.writerow(["amount_low", *(int(e) for e in day_edges)])
        amount_edges = grid.amount_edges()[:-1]
        for i, lo in enumerate(amount_edges):
            writer.writerow([repr(float(lo)), *(int(c) for c in grid.counts[i])])


def read_histogram_csv(path, input_name: str = "", amount_max: float | None = None) -> HistogramGrid:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    amount_lows = [float(r[0]) for r in rows[1:]]
    counts = np.array([[int(c) for c in r[1:]] for r in rows[1:]], dtype=np.int64)
    width = amount_lows[1] - amount_lows[0] if len(amount_lows) > 1 else 1.0
    return HistogramGrid(
        input_name=input_name,
        amount_width=width,
        amount_max=amount_max if amount_max is not None else amount_lows[-1] + width,
        counts=counts,
    )


def emit_histogram_figure(report: EvalReport, out_dir, stem: str = "hist") -> list[Path]:
    """SVG heatmap (darker = more frequent) plus the raw grid CSV, one pair
    per input type in the report.  An all-zero grid yields an axes-only plot
    with an explicit zero annotation."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    units = {"nitrogen": "kg/ha", "water": "L/m$^2$"}
    for name, grid in report.histograms.items():
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        day_edges = grid.day_edges()
        amount_edges = grid.amount_edges()
        mesh = ax.pcolormesh(day_edges, amount_edges, grid.counts, cmap="Greys")
        fig.colorbar(mesh, ax=ax, label="applications")
        ax.set_xlabel("days after planting")
        ax.set_ylabel(f"{name} applied ({units.get(name, '')})")
        ax.set_title(f"{report.policy_name} / {report.task}: nonzero {name} applications")
        if grid.total() == 0:
            ax.text(
                0.5,
                0.5,
                "no nonzero applications",
                transform=ax.transAxes,
                ha="center",
                va="center",
            )
        svg_path = out_dir / f"{stem}_{name}.svg"
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
        plt.close(fig)
        csv_path = out_dir / f"{stem}_{name}.csv"
        write_histogram_csv(grid, csv_path)
        written.extend([svg_path, csv_path])
    return written
