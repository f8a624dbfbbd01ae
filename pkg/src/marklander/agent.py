"""Acting and training loops: frame stacking, epsilon-greedy exploration with
optional descend bias, prefill policies, and the per-phase training procedure.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import CameraSpec, render_frame
from .config import AppConfig
from .env import (Action, DESCENT_ACTIONS, DETECTION_ACTIONS, LandingEnv, Phase,
                  PHASE_ACTIONS, WorldSpec)
from .metrics import MetricsLog
from .neural import (NetworkPair, QNetwork, RMSProp, save_checkpoint, train_step,
                     xavier_init)
from .replay import Experience, PartitionSpec, PartitionedReplay, augment_positive, classify
from .textures import MarkerSpec, Texture, default_marker, generate_texture, texture_pool


class AgentError(Exception):
    pass


class PrefillTimeout(AgentError):
    def __init__(self, message: str, progress: dict):
        super().__init__(message)
        self.progress = progress


class TrainingDiverged(AgentError):
    pass


def quantize(frame: np.ndarray) -> np.ndarray:
    """[0, 1] float frame to 8-bit storage, round-to-nearest."""
    return np.round(frame * 255.0).astype(np.uint8)


class FrameStack:
    """The 4 most recent 8-bit observations, oldest first.

    At episode start the reset frame is replicated four times.
    """

    SIZE = 4

    def __init__(self, frames: np.ndarray):
        if frames.shape[0] != self.SIZE:
            raise AgentError(f"frame stack must hold {self.SIZE} frames")
        self.frames = frames

    @classmethod
    def initial(cls, frame: np.ndarray) -> "FrameStack":
        return cls(np.repeat(frame[None], cls.SIZE, axis=0))

    def pushed(self, frame: np.ndarray) -> "FrameStack":
        return FrameStack(np.concatenate([self.frames[1:], frame[None]], axis=0))

    def as_float(self) -> np.ndarray:
        return self.frames.astype(np.float32) / 255.0


@dataclass(frozen=True)
class ExplorationSchedule:
    """Linear epsilon decay with an optional biased exploration action."""

    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    decay_frames: int = 500_000
    biased_action: int | None = None  # phase-local action index
    bias_probability: float = 0.0

    def epsilon(self, frame_index: int) -> float:
        if frame_index >= self.decay_frames:
            return self.epsilon_end
        span = self.epsilon_start - self.epsilon_end
        return self.epsilon_start - span * frame_index / self.decay_frames

    def explore(self, n_actions: int, rng: np.random.Generator) -> int:
        """Sample an exploration action: biased one with probability rho,
        each of the other N actions with probability (1 - rho) / N."""
        if self.biased_action is None:
            return int(rng.integers(n_actions))
        if rng.random() < self.bias_probability:
            return self.biased_action
        others = [a for a in range(n_actions) if a != self.biased_action]
        return others[int(rng.integers(len(others)))]


def select_action(net: QNetwork, stack: FrameStack, schedule: ExplorationSchedule,
                  frame_index: int, rng_seed: int,
                  actions: tuple[Action, ...] = DETECTION_ACTIONS) -> Action:
    """Epsilon-greedy action for one stack (ties broken by lowest index)."""
    rng = np.random.default_rng(rng_seed)
    if rng.random() < schedule.epsilon(frame_index):
        return actions[schedule.explore(len(actions), rng)]
    q = net.q_values(stack.as_float())
    return actions[int(np.argmax(q))]


class EpisodeRunner:
    """Steps one env episode, rendering an observation after every action.

    Frames are acquired between action bursts while the drone is stationary,
    so each env step yields exactly one new frame.
    """

    def __init__(self, env: LandingEnv, world: WorldSpec, camera: CameraSpec,
                 marker: MarkerSpec):
        self.env = env
        self.world = world
        self.camera = camera
        self.marker = marker
        self.texture: Texture | None = None
        self.env_seed = 0
        self.stack: FrameStack | None = None
        self.episode_return = 0.0

    def begin(self, phase: Phase, env_seed: int, texture: Texture) -> FrameStack:
        self.texture = texture
        self.env_seed = env_seed
        state = self.env.reset(phase, env_seed)
        frame = quantize(self._render(state).frame)
        self.stack = FrameStack.initial(frame)
        self.episode_return = 0.0
        return self.stack

    def _render(self, state):
        seed = (self.env_seed * 1_000_003 + state.step_count) % (2 ** 63)
        return render_frame(state, self.world, self.texture, self.marker,
                            self.camera, rng_seed=seed)

    def step(self, action: Action):
        """Apply one action; returns (experience, outcome)."""
        prev = self.stack
        state, outcome = self.env.step(action)
        frame = quantize(self._render(state).frame)
        self.stack = prev.pushed(frame)
        actions = PHASE_ACTIONS[state.phase]
        exp = Experience(state=prev.frames, action=actions.index(action),
                         reward=outcome.reward, next_state=self.stack.frames,
                         terminal=outcome.terminal)
        self.episode_return += outcome.reward
        return exp, outcome


class TextureRotation:
    """Deterministic texture choice with a swap every `period` episodes."""

    def __init__(self, pool: list[Texture], period: int, rng: np.random.Generator):
        if not pool:
            raise AgentError("texture pool is empty")
        self.pool = pool
        self.period = period
        self.rng = rng
        self.current = pool[0] if len(pool) == 1 else pool[int(rng.integers(len(pool)))]
        self.swaps = 0

    def for_episode(self, episode: int) -> Texture:
        if len(self.pool) > 1 and episode > 0 and episode % self.period == 0:
            self.current = self.pool[int(self.rng.integers(len(self.pool)))]
            self.swaps += 1
        return self.current


def build_texture_pool(cfg: AppConfig, phase: Phase, mode: str,
                       rng: np.random.Generator) -> list[Texture]:
    """Training textures: one fixed texture (single) or the train-seed library
    (multi); descent uses a random subset of the library."""
    t = cfg.textures
    if mode == "single":
        family, seed = t.single_texture.split(":")
        from .textures import Family
        return [generate_texture(Family(family), int(seed), size=t.size,
                                 world_scale=t.world_scale)]
    pool = texture_pool(cfg.train_seeds(), size=t.size, world_scale=t.world_scale)
    if phase is Phase.DESCENT and 0 < t.descent_train_subset < len(pool):
        picks = rng.choice(len(pool), size=t.descent_train_subset, replace=False)
        pool = [pool[i] for i in sorted(picks)]
    return pool


def _insert(buffer: PartitionedReplay, exp: Experience, augment: bool) -> None:
    if augment and exp.reward > 0:
        for variant in augment_positive(exp):
            buffer.insert(variant)
    else:
        buffer.insert(exp)


def prefill(runner: EpisodeRunner, buffer: PartitionedReplay, phase: Phase,
            quotas: dict[int, int], schedule: ExplorationSchedule,
            rotation: TextureRotation, rng: np.random.Generator,
            episode_seeds: np.random.Generator, budget_frames: int,
            augment: bool = False) -> dict:
    """Fill the buffer with a random policy until raw per-partition quotas are met.

    Quotas count raw (pre-augmentation) experiences keyed by partition index.
    Raises PrefillTimeout with per-partition progress when the frame budget
    runs out first.
    """
    raw = {k: 0 for k in quotas}
    frames = 0
    episode = 0
    actions = PHASE_ACTIONS[phase]
    while any(raw[k] < q for k, q in quotas.items()):
        if frames >= budget_frames:
            raise PrefillTimeout(
                f"prefill exhausted {budget_frames} frames with quotas unmet",
                progress={"frames": frames,
                          "raw": {buffer.spec.names[k]: (raw[k], quotas[k]) for k in quotas}})
        texture = rotation.for_episode(episode)
        runner.begin(phase, int(episode_seeds.integers(2 ** 63)), texture)
        episode += 1
        while not runner.env.terminal and frames < budget_frames:
            action = actions[schedule.explore(len(actions), rng)]
            exp, _ = runner.step(action)
            k = classify(exp.reward, buffer.spec)
            if k in raw:
                raw[k] += 1
            _insert(buffer, exp, augment)
            frames += 1
    return {"frames": frames, "episodes": episode,
            "raw": {buffer.spec.names[k]: raw[k] for k in raw}}


@dataclass
class TrainResult:
    checkpoint_path: str
    metrics_path: str
    metrics: MetricsLog
    frames: int
    episodes: int
    texture_swaps: int
    prefill: dict
    qmax_peak: float | None
    elapsed_seconds: float
    fingerprint: str


def phase_settings(cfg: AppConfig, phase: Phase) -> dict:
    tr = cfg.training
    if phase is Phase.DETECTION:
        return {"actions": DETECTION_ACTIONS, "frames": tr.detection_frames,
                "sync": tr.detection_sync_period, "mode": tr.detection_target_mode,
                "partitioned": cfg.replay.detection_partitioned}
    return {"actions": DESCENT_ACTIONS, "frames": tr.descent_frames,
            "sync": tr.descent_sync_period, "mode": tr.descent_target_mode,
            "partitioned": True}


def partition_spec(cfg: AppConfig, partitioned: bool) -> PartitionSpec:
    r = cfg.replay
    if not partitioned:
        return PartitionSpec.uniform(r.detection_capacity)
    return PartitionSpec(
        capacities=(r.positive_capacity, r.negative_capacity, r.neutral_capacity),
        fractions=(r.positive_fraction, r.negative_fraction, r.neutral_fraction))


def train_phase(phase: Phase, cfg: AppConfig, out_dir, seed: int = 0,
                textures: str = "multi", target_mode: str | None = None,
                frames: int | None = None, progress: bool = False,
                snapshot_every: int = 0) -> TrainResult:
    """Train one phase end to end: prefill, act/store/sample/step, periodic
    target sync, texture swaps, metrics, checkpoint.  Deterministic given
    (cfg, seed)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()
    tr = cfg.training
    settings = phase_settings(cfg, phase)
    mode = target_mode or settings["mode"]
    budget = frames if frames is not None else settings["frames"]
    actions = settings["actions"]

    ss = np.random.SeedSequence(seed)
    init_s, act_s, tex_s, ep_s, samp_s, pre_s = [int(c.generate_state(1)[0])
                                                 for c in ss.spawn(6)]
    act_rng = np.random.default_rng(act_s)
    sample_rng = np.random.default_rng(samp_s)
    episode_seeds = np.random.default_rng(ep_s)
    prefill_rng = np.random.default_rng(pre_s)
    tex_rng = np.random.default_rng(tex_s)

    world = cfg.world_spec()
    camera = cfg.camera_spec()
    marker = default_marker(world.marker_side)
    env = LandingEnv(world, cfg.noise_spec(),
                     exploring_start=(phase is Phase.DESCENT and tr.exploring_start))
    runner = EpisodeRunner(env, world, camera, marker)
    pool = build_texture_pool(cfg, phase, textures, tex_rng)
    rotation = TextureRotation(pool, tr.texture_swap_period, tex_rng)

    geometry = cfg.network_geometry(n_actions=len(actions))
    net = xavier_init(QNetwork(geometry, dtype=np.float32), init_s)
    pair = NetworkPair(net, sync_period=settings["sync"])
    opt = RMSProp(tr.learning_rate, tr.rmsprop_decay, tr.rmsprop_epsilon)

    spec = partition_spec(cfg, settings["partitioned"])
    frame_shape = (4, camera.resolution, camera.resolution)
    buffer = PartitionedReplay(spec, frame_shape)

    if phase is Phase.DESCENT:
        explore_schedule = ExplorationSchedule(
            tr.epsilon_start, tr.epsilon_end, tr.epsilon_decay_frames,
            biased_action=actions.index(Action.DESCEND),
            bias_probability=tr.descend_bias)
        quotas = {0: tr.prefill_positive, 1: tr.prefill_negative, 2: tr.prefill_neutral}
        augment = cfg.replay.augment_positive
    else:
        explore_schedule = ExplorationSchedule(
            tr.epsilon_start, tr.epsilon_end, tr.epsilon_decay_frames)
        quotas = {0: tr.detection_prefill} if spec.k == 1 else \
            {0: 0, 1: 0, 2: tr.detection_prefill}
        augment = False
    prefill_stats = prefill(runner, buffer, phase, quotas, explore_schedule,
                            rotation, prefill_rng, episode_seeds,
                            tr.prefill_budget_frames, augment=augment)

    fingerprint = cfg.fingerprint()
    metrics = MetricsLog(window=tr.metrics_window, live_path=out / "metrics.jsonl",
                         fingerprint=fingerprint)
    ckpt_path = out / "checkpoint.qnet"
    action_names = [a.value for a in actions]
    meta = {"phase": phase.value, "textures": textures, "target_mode": mode,
            "fingerprint": fingerprint, "seed": seed, "frames": budget}

    frame = 0
    episode = 0
    qmax_peak = None
    while frame < budget:
        texture = rotation.for_episode(episode)
        runner.begin(phase, int(episode_seeds.integers(2 ** 63)), texture)
        while frame < budget:
            q = net.q_values(runner.stack.as_float())
            qmax = float(q.max())
            qmax_peak = qmax if qmax_peak is None else max(qmax_peak, qmax)
            eps = explore_schedule.epsilon(frame)
            if act_rng.random() < eps:
                a_idx = explore_schedule.explore(len(actions), act_rng)
            else:
                a_idx = int(np.argmax(q))
            exp, outcome = runner.step(actions[a_idx])
            _insert(buffer, exp, augment and phase is Phase.DESCENT)
            batch = buffer.sample_arrays(tr.batch_size, int(sample_rng.integers(2 ** 63)))
            loss = train_step(pair, batch, opt, tr.gamma, mode)
            if not np.isfinite(loss):
                save_checkpoint(net, out / "diverged.qnet", action_names,
                                {**meta, "diverged_at_frame": frame})
                metrics.close()
                raise TrainingDiverged(f"non-finite loss at frame {frame}")
            pair.tick(1)
            frame += 1
            metrics.log_step(loss, qmax)
            if snapshot_every and frame % snapshot_every == 0:
                save_checkpoint(net, out / f"checkpoint_{frame:07d}.qnet", action_names,
                                {**meta, "snapshot_frame": frame})
            if frame % tr.metrics_window == 0:
                metrics.flush_window(frame, episode, eps, buffer.sizes, texture.id)
                if progress:
                    r = metrics.records[-1]
                    print(f"[{phase.value}] frame {frame}/{budget} eps {eps:.2f} "
                          f"loss {r['loss']:.4f} qmax {r['qmax']:.2f} "
                          f"return {r['return']}", flush=True)
            if outcome.terminal:
                metrics.log_episode(episode, runner.episode_return)
                episode += 1
                break

    save_checkpoint(net, ckpt_path, action_names, meta)
    metrics.save(out / "metrics.jsonl")
    metrics.close()
    elapsed = time.monotonic() - t0
    result = TrainResult(checkpoint_path=str(ckpt_path), metrics_path=str(out / "metrics.jsonl"),
                         metrics=metrics, frames=frame, episodes=episode,
                         texture_swaps=rotation.swaps, prefill=prefill_stats,
                         qmax_peak=qmax_peak, elapsed_seconds=elapsed,
                         fingerprint=fingerprint)
    with open(out / "result.json", "w") as fh:
        json.dump({"checkpoint": result.checkpoint_path, "frames": result.frames,
                   "episodes": result.episodes, "texture_swaps": result.texture_swaps,
                   "prefill": result.prefill, "qmax_peak": result.qmax_peak,
                   "elapsed_seconds": result.elapsed_seconds,
                   "fingerprint": result.fingerprint, **meta}, fh, indent=2)
    return result
