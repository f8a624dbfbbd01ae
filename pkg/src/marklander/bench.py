"""Evaluation bench: test suites (unseen textures, altitude sweep, corrupted
marker, mosaics), agents (greedy DQN, random, template tracker), and report
rendering to delimited files and bar-chart figures.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .agent import EpisodeRunner
from .config import AppConfig
from .env import DESCENT_ACTIONS, DETECTION_ACTIONS, LandingEnv, Phase
from .matcher import TemplateTrackerAgent
from .metrics import MetricsLog
from .neural import QNetwork, load_checkpoint
from .records import record_from_rollout
from .textures import (GENERATED_FAMILIES, MarkerSpec, Texture, compose_mosaic,
                       corrupt_marker, default_marker, texture_pool)


class BenchError(Exception):
    pass


SUITE_NAMES = ("uniform", "altitude", "corrupted", "mosaic")


@dataclass(frozen=True)
class BenchWorld:
    world_id: str
    texture: Texture
    marker: MarkerSpec
    altitude: float | None = None  # overrides the profile detection altitude


@dataclass(frozen=True)
class BenchSuite:
    name: str
    worlds: tuple[BenchWorld, ...]
    episodes_per_world: int = 5

    def __post_init__(self):
        if not self.worlds:
            raise BenchError(f"suite {self.name} has no worlds")


@dataclass
class BenchReport:
    """Per-episode outcomes plus aggregates for agents x suites."""

    fingerprint: str
    rows: list[dict] = field(default_factory=list)

    def add(self, suite: str, world_id: str, agent: str, outcome: str, steps: int,
            episode_return: float, seed: int) -> None:
        self.rows.append({"suite": suite, "world_id": world_id, "agent": agent,
                          "outcome": outcome, "steps": steps,
                          "return": round(episode_return, 4), "seed": seed})

    def agents(self) -> list[str]:
        return sorted({r["agent"] for r in self.rows})

    def suites(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r["suite"] not in seen:
                seen.append(r["suite"])
        return seen

    def success_rate(self, agent: str, suite: str | None = None) -> float:
        rows = [r for r in self.rows
                if r["agent"] == agent and (suite is None or r["suite"] == suite)]
        if not rows:
            return 0.0
        return sum(r["outcome"] == "success" for r in rows) / len(rows)

    def mean_steps_to_success(self, agent: str, suite: str | None = None) -> float | None:
        steps = [r["steps"] for r in self.rows
                 if r["agent"] == agent and (suite is None or r["suite"] == suite)
                 and r["outcome"] == "success"]
        return float(np.mean(steps)) if steps else None

    def merge(self, other: "BenchReport") -> "BenchReport":
        if other.fingerprint != self.fingerprint:
            raise BenchError("cannot merge reports with different config fingerprints")
        merged = BenchReport(self.fingerprint, list(self.rows))
        merged.rows.extend(other.rows)
        return merged


def _test_textures(cfg: AppConfig) -> list[Texture]:
    return texture_pool(cfg.test_seeds(), size=cfg.textures.size,
                        world_scale=cfg.textures.world_scale)


def build_suite(name: str, cfg: AppConfig, seed: int = 0) -> BenchSuite:
    """Assemble one named suite from held-out texture seeds.

    Train/test disjointness is enforced here: a suite texture whose id
    collides with the training pool aborts the run.
    """
    marker = default_marker(cfg.world.marker_side)
    tests = _test_textures(cfg)
    train_ids = {f"{family.value}:{s}" for family in GENERATED_FAMILIES
                 for s in cfg.train_seeds()}
    leaked = {t.id for t in tests} & train_ids
    if leaked:
        raise BenchError(f"held-out suite overlaps training textures: {sorted(leaked)}")
    epw = cfg.bench.episodes_per_world
    if name == "uniform":
        worlds = [BenchWorld(t.id, t, marker) for t in tests]
    elif name == "altitude":
        worlds = [BenchWorld(f"{t.id}@{alt:g}m", t, marker, altitude=float(alt))
                  for alt in cfg.bench.altitudes for t in tests]
    elif name == "corrupted":
        worlds = [BenchWorld(f"{t.id}+dust", t,
                             corrupt_marker(marker, cfg.bench.corruption_fraction,
                                            seed=seed + i))
                  for i, t in enumerate(tests)]
    elif name == "mosaic":
        rng = np.random.default_rng(seed)
        worlds = []
        for i in range(len(tests)):
            picks = rng.integers(0, len(tests), size=cfg.bench.mosaic_count)
            tiles = [tests[p] for p in picks]
            mosaic = compose_mosaic(tiles, (cfg.bench.mosaic_grid, cfg.bench.mosaic_grid),
                                    seed=seed + 1000 + i)
            worlds.append(BenchWorld(f"mosaic:{i}", dc_replace(mosaic, id=f"mosaic:{i}"),
                                     marker))
    else:
        raise BenchError(f"unknown suite {name!r}; choose from {SUITE_NAMES}")
    return BenchSuite(name=name, worlds=tuple(worlds), episodes_per_world=epw)


class GreedyDQNAgent:
    def __init__(self, net: QNetwork, actions):
        self.net = net
        self.actions = actions

    def reset(self):
        pass

    def act(self, runner: EpisodeRunner):
        q = self.net.q_values(runner.stack.as_float())
        return self.actions[int(np.argmax(q))]


class RandomAgent:
    def __init__(self, actions, seed: int = 0):
        self.actions = actions
        self.rng = np.random.default_rng(seed)

    def reset(self):
        pass

    def act(self, runner: EpisodeRunner):
        return self.actions[int(self.rng.integers(len(self.actions)))]


class TrackerAgentAdapter:
    """Feeds the tracker its own camera renders of the live scene."""

    def __init__(self, tracker: TemplateTrackerAgent):
        self.tracker = tracker

    def reset(self):
        self.tracker.reset()

    def act(self, runner: EpisodeRunner):
        from .camera import render_frame
        obs = render_frame(runner.env.state, runner.world, runner.texture,
                           runner.marker, self.tracker.camera,
                           rng_seed=runner.env_seed)
        return self.tracker.act(obs.frame, runner.env.state.altitude)


def make_agent(kind: str, phase: Phase, cfg: AppConfig, checkpoint=None,
               seed: int = 0):
    actions = DETECTION_ACTIONS if phase is Phase.DETECTION else DESCENT_ACTIONS
    if kind == "dqn":
        if checkpoint is None:
            raise BenchError("the dqn agent requires a checkpoint")
        net, names, _ = load_checkpoint(checkpoint,
                                        expect_actions=[a.value for a in actions])
        return GreedyDQNAgent(net, actions)
    if kind == "random":
        return RandomAgent(actions, seed=seed)
    if kind == "template":
        from .matcher import BASELINE_CAMERA
        tracker = TemplateTrackerAgent(default_marker(cfg.world.marker_side),
                                       BASELINE_CAMERA, cfg.world_spec(), phase,
                                       threshold=cfg.bench.ncc_threshold)
        return TrackerAgentAdapter(tracker)
    raise BenchError(f"unknown agent {kind!r}; choose dqn, random, or template")


def run_suite(agent_kind: str, suite: BenchSuite, phase: Phase, cfg: AppConfig,
              checkpoint=None, episodes: int | None = None, seed: int = 0,
              record_episodes: list | None = None) -> BenchReport:
    """Greedy rollouts of one agent over a suite; deterministic per seed.

    `episodes`, when given, overrides episodes_per_world and spreads that many
    episodes round-robin over the suite's worlds.
    """
    report = BenchReport(fingerprint=cfg.fingerprint())
    total = episodes if episodes is not None else suite.episodes_per_world * len(suite.worlds)
    if total == 0:
        return report
    world_spec = cfg.world_spec()
    camera = cfg.camera_spec()
    noise = cfg.noise_spec()
    plan = [suite.worlds[i % len(suite.worlds)] for i in range(total)]
    agent = make_agent(agent_kind, phase, cfg, checkpoint=checkpoint, seed=seed + 77)
    for i, bw in enumerate(plan):
        wspec = world_spec
        if bw.altitude is not None:
            wspec = dc_replace(world_spec, detection_altitude=bw.altitude,
                               descent_spawn_alt_max=bw.altitude)
        env = LandingEnv(wspec, noise, exploring_start=False)
        runner = EpisodeRunner(env, wspec, camera, bw.marker)
        env_seed = seed * 1_000_003 + i
        runner.begin(phase, env_seed, bw.texture)
        agent.reset()
        trace = []
        outcome = None
        while not env.terminal:
            action = agent.act(runner)
            _, outcome = runner.step(action)
            trace.append((action, outcome, env.state))
        report.add(suite.name, bw.world_id, agent_kind, outcome.reason.value,
                   env.state.step_count, runner.episode_return, env_seed)
        if record_episodes is not None:
            record_episodes.append(record_from_rollout(
                cfg, phase, bw.texture.id, agent_kind, env_seed, trace))
    return report


def render_report(report: BenchReport, fmt: str, path=None):
    """Render a report as a text table, a delimited CSV, or a bar-chart PNG."""
    if not report.rows:
        raise BenchError("cannot render an empty report")
    if fmt == "table":
        return _table(report)
    if fmt == "delimited":
        return _delimited(report, path)
    if fmt == "plot":
        return _plot(report, path)
    raise BenchError(f"unknown report format {fmt!r}")


def _table(report: BenchReport) -> str:
    agents = report.agents()
    lines = [" " * 18 + "".join(f"{a:>12}" for a in agents)]
    for suite in report.suites():
        cells = "".join(f"{report.success_rate(a, suite):>12.4f}" for a in agents)
        lines.append(f"{suite:<18}{cells}")
    lines.append(f"(fingerprint {report.fingerprint})")
    return "\n".join(lines)


def _delimited(report: BenchReport, path):
    columns = ["suite", "world_id", "agent", "outcome", "steps", "return", "seed"]
    out = io.StringIO() if path is None else open(path, "w", newline="")
    try:
        writer = csv.DictWriter(out, fieldnames=columns)
        writer.writeheader()
        for row in report.rows:
            writer.writerow(row)
        if path is None:
            return out.getvalue()
        return path
    finally:
        if path is not None:
            out.close()


def parse_delimited(path) -> BenchReport:
    report = BenchReport(fingerprint="")
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            row["steps"] = int(row["steps"])
            row["return"] = float(row["return"])
            row["seed"] = int(row["seed"])
            report.rows.append(row)
    return report


def _plot_axes(report: BenchReport):
    agents = report.agents()
    suites = report.suites()
    width = 0.8 / max(1, len(agents))
    x = np.arange(len(suites))
    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(suites), 3.6))
    for i, agent in enumerate(agents):
        rates = [report.success_rate(agent, s) for s in suites]
        ax.bar(x + (i - (len(agents) - 1) / 2) * width, rates, width, label=agent)
    ax.set_xticks(x)
    ax.set_xticklabels(suites)
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("success rate")
    ax.legend(fontsize=8)
    ax.set_title(f"config {report.fingerprint}")
    fig.tight_layout()
    return fig, ax


def _plot(report: BenchReport, path):
    fig, _ = _plot_axes(report)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_training_curves(metrics: MetricsLog, path, ceiling: float = 1.0):
    """Reward / loss / Q-max curves from a metrics log, with the return ceiling."""
    records = metrics.records
    if not records:
        raise BenchError("metrics log has no records")
    frames = [r["frame"] for r in records]
    fig, axes = plt.subplots(3, 1, figsize=(7, 7), sharex=True)
    rets = [(f, r["return"]) for f, r in zip(frames, records) if r["return"] is not None]
    if rets:
        axes[0].plot(*zip(*rets), lw=0.8)
    axes[0].set_ylabel("return / episode")
    losses = [(f, r["loss"]) for f, r in zip(frames, records) if r["loss"] is not None]
    if losses:
        axes[1].plot(*zip(*losses), lw=0.8)
    axes[1].set_ylabel("loss")
    qmax = [(f, r["qmax"]) for f, r in zip(frames, records) if r["qmax"] is not None]
    if qmax:
        axes[2].plot(*zip(*qmax), lw=0.8)
    axes[2].axhline(ceiling, color="red", ls="--", lw=0.8, label=f"ceiling {ceiling}")
    axes[2].set_ylabel("q-max")
    axes[2].set_xlabel("frame")
    axes[2].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
