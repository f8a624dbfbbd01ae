"""Episode records: replayable logs shared by agent rollouts and human
sessions, an optional binary frame store, and the determinism audit that
re-simulates a record from its seed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import AppConfig
from .env import (Action, LandingEnv, Phase, episode_return_bounds)

FRAME_MAGIC = b"FRMS"
FRAME_VERSION = 1


class RecordError(Exception):
    pass


@dataclass(frozen=True)
class StepEntry:
    index: int
    action: str
    reward: float
    pose: tuple[float, float, float, float]  # x, y, z, yaw
    terminal: bool


@dataclass
class EpisodeRecord:
    phase: str
    world_id: str
    agent_id: str
    seed: int
    fingerprint: str
    exploring_start: bool
    steps: list[StepEntry]
    outcome: str
    episode_return: float
    frame_ref: dict | None = None  # {"path", "offset", "count"} into a frame store

    def to_json(self) -> str:
        d = asdict(self)
        d["steps"] = [asdict(s) for s in self.steps]
        return json.dumps(d)

    @classmethod
    def from_json(cls, line: str) -> "EpisodeRecord":
        d = json.loads(line)
        steps = [StepEntry(index=s["index"], action=s["action"], reward=s["reward"],
                           pose=tuple(s["pose"]), terminal=s["terminal"])
                 for s in d.pop("steps")]
        return cls(steps=steps, **d)

    def validate(self, world=None) -> None:
        for i, step in enumerate(self.steps):
            if step.index != i:
                raise RecordError(f"step indices not contiguous at {i}")
        if self.steps and not self.steps[-1].terminal:
            raise RecordError("record does not end on a terminal step")
        if any(s.terminal for s in self.steps[:-1]):
            raise RecordError("terminal step before the end of the record")
        if world is not None:
            phase = Phase(self.phase)
            lo, hi = episode_return_bounds(phase, world)
            if not lo - 1e-9 <= self.episode_return <= hi + 1e-9:
                raise RecordError(f"episode return {self.episode_return} outside "
                                  f"[{lo}, {hi}]")


def record_from_rollout(cfg: AppConfig, phase: Phase, world_id: str, agent_id: str,
                        seed: int, trace) -> EpisodeRecord:
    """Build a record from [(action, outcome, state), ...] in step order."""
    steps = []
    total = 0.0
    for i, (action, outcome, state) in enumerate(trace):
        steps.append(StepEntry(index=i, action=action.value, reward=outcome.reward,
                               pose=(state.x, state.y, state.altitude, state.yaw),
                               terminal=outcome.terminal))
        total += outcome.reward
    outcome_name = trace[-1][1].reason.value if trace else "none"
    record = EpisodeRecord(phase=phase.value, world_id=world_id, agent_id=agent_id,
                           seed=seed, fingerprint=cfg.fingerprint(),
                           exploring_start=False, steps=steps, outcome=outcome_name,
                           episode_return=total)
    record.validate(cfg.world_spec())
    return record


def append_records(path, records: list[EpisodeRecord]) -> None:
    with open(path, "a") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")


def read_records(path) -> list[EpisodeRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(EpisodeRecord.from_json(line))
    return out


@dataclass
class ReplayResult:
    ok: bool
    divergence_step: int | None = None
    message: str = ""


def replay_episode(record: EpisodeRecord, cfg: AppConfig) -> ReplayResult:
    """Re-simulate a record's action sequence from its seed and compare.

    Rewards and poses must match exactly: all randomness (spawn and noise)
    derives from the recorded seed, and floats survive the JSON round trip
    bit for bit.
    """
    if record.fingerprint != cfg.fingerprint():
        return ReplayResult(False, None, "config fingerprint mismatch")
    try:
        record.validate(cfg.world_spec())
    except RecordError as err:
        return ReplayResult(False, None, f"schema: {err}")
    env = LandingEnv(cfg.world_spec(), cfg.noise_spec(),
                     exploring_start=record.exploring_start)
    env.reset(Phase(record.phase), record.seed)
    for step in record.steps:
        if env.terminal:
            return ReplayResult(False, step.index, "episode already terminal")
        state, outcome = env.step(Action(step.action))
        pose = (state.x, state.y, state.altitude, state.yaw)
        if outcome.reward != step.reward:
            return ReplayResult(False, step.index,
                                f"reward {outcome.reward} != logged {step.reward}")
        if pose != tuple(step.pose):
            return ReplayResult(False, step.index,
                                f"pose {pose} != logged {tuple(step.pose)}")
        if outcome.terminal != step.terminal:
            return ReplayResult(False, step.index, "terminal flag mismatch")
    if record.steps and record.steps[-1].terminal:
        if record.outcome != outcome.reason.value:
            return ReplayResult(False, record.steps[-1].index,
                                f"outcome {outcome.reason.value} != logged {record.outcome}")
    return ReplayResult(True)


class FrameStore:
    """Flat binary store of 8-bit frames referenced by episode records."""

    def __init__(self, path, resolution: int):
        self.path = Path(path)
        self.resolution = resolution
        if not self.path.exists():
            with open(self.path, "wb") as fh:
                fh.write(FRAME_MAGIC)
                fh.write(struct.pack("<IHI", FRAME_VERSION, resolution, 0))
        else:
            self._check_header()

    def _check_header(self) -> tuple[int, int]:
        with open(self.path, "rb") as fh:
            if fh.read(4) != FRAME_MAGIC:
                raise RecordError("not a frame store (bad magic)")
            version, res, count = struct.unpack("<IHI", fh.read(10))
            if version != FRAME_VERSION:
                raise RecordError(f"unsupported frame store version {version}")
            if res != self.resolution:
                raise RecordError(f"frame store geometry {res} != expected {self.resolution}")
        return res, count

    @property
    def count(self) -> int:
        return self._check_header()[1]

    def append(self, frames: np.ndarray) -> dict:
        """Append (N, res, res) uint8 frames; returns a frame_ref dict."""
        frames = np.asarray(frames, dtype=np.uint8)
        if frames.ndim == 2:
            frames = frames[None]
        if frames.shape[1:] != (self.resolution, self.resolution):
            raise RecordError("frame geometry mismatch")
        _, count = self._check_header()
        with open(self.path, "r+b") as fh:
            fh.seek(0, 2)
            fh.write(frames.tobytes())
            fh.seek(4)
            fh.write(struct.pack("<IHI", FRAME_VERSION, self.resolution,
                                 count + frames.shape[0]))
        return {"path": self.path.name, "offset": count, "count": int(frames.shape[0])}

    def read(self, offset: int, count: int) -> np.ndarray:
        _, total = self._check_header()
        if offset + count > total:
            raise RecordError("frame reference beyond store contents")
        nbytes = self.resolution * self.resolution
        with open(self.path, "rb") as fh:
            fh.seek(14 + offset * nbytes)
            raw = fh.read(count * nbytes)
        return np.frombuffer(raw, dtype=np.uint8).reshape(count, self.resolution,
                                                          self.resolution)
