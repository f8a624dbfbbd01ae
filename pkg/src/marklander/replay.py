"""Experience storage: reward-partitioned ring datasets with exact-fraction batches.

Frames are kept as 8-bit grayscale and dequantized to [0, 1] float at
sampling time.  A uniform ring buffer is the K=1 special case of the
partitioned buffer, so both training regimes share one implementation.
"""

from __future__ import annotations

import io
import json
import math
import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from .env import Action

MAGIC = b"PBRP"
VERSION = 1

# Action index permutations for one 90-degree clockwise image rotation and for
# a mirror about the vertical image axis.  Both phase subsets share the layout
# [Forward, Backward, Left, Right, <direction-free>], so one table serves both.
_ROT90_CW = {0: 3, 1: 2, 2: 0, 3: 1}  # F->R, B->L, L->F, R->B
_MIRROR_LR = {0: 0, 1: 1, 2: 3, 3: 2}  # L<->R

SYMMETRIES = tuple((k, m) for m in (0, 1) for k in (0, 1, 2, 3))


class ReplayError(Exception):
    pass


class ClassificationError(ReplayError):
    pass


class SamplingError(ReplayError):
    pass


@dataclass(frozen=True)
class Experience:
    state: np.ndarray  # (4, H, W) uint8
    action: int
    reward: float
    next_state: np.ndarray  # (4, H, W) uint8
    terminal: bool


@dataclass(frozen=True)
class PartitionSpec:
    """Disjoint reward intervals (lo, hi] with per-partition batch fractions."""

    intervals: tuple[tuple[float, float], ...] = ((0.0, math.inf), (-math.inf, -0.5), (-0.5, 0.0))
    fractions: tuple[float, ...] = (0.25, 0.25, 0.5)
    capacities: tuple[int, ...] = (10_000, 10_000, 20_000)
    names: tuple[str, ...] = ("positive", "negative", "neutral")

    def __post_init__(self):
        k = len(self.intervals)
        if not (len(self.fractions) == len(self.capacities) == len(self.names) == k):
            raise ReplayError("partition spec fields must have equal length")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ReplayError("partition fractions must sum to 1")
        for i, (lo_i, hi_i) in enumerate(self.intervals):
            if lo_i >= hi_i:
                raise ReplayError(f"empty interval {i}")
            for j, (lo_j, hi_j) in enumerate(self.intervals):
                if i < j and lo_i < hi_j and lo_j < hi_i:
                    raise ReplayError(f"intervals {i} and {j} overlap")

    @property
    def k(self) -> int:
        return len(self.intervals)

    @classmethod
    def uniform(cls, capacity: int) -> "PartitionSpec":
        return cls(intervals=((-math.inf, math.inf),), fractions=(1.0,),
                   capacities=(capacity,), names=("all",))


def classify(reward: float, spec: PartitionSpec) -> int:
    """Index of the unique interval (lo, hi] containing the reward."""
    for i, (lo, hi) in enumerate(spec.intervals):
        if (lo < reward <= hi) or (reward == lo == -math.inf):
            return i
    raise ClassificationError(f"reward {reward} falls outside every partition interval")


def batch_counts(batch_size: int, fractions) -> list[int]:
    """Largest-remainder apportionment of a batch across fractions."""
    raw = [f * batch_size for f in fractions]
    counts = [int(math.floor(r)) for r in raw]
    short = batch_size - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts


class _Ring:
    """FIFO ring of experiences with preallocated uint8 frame storage."""

    def __init__(self, capacity: int, frame_shape: tuple[int, int, int]):
        self.capacity = capacity
        self.frame_shape = frame_shape
        self.states = np.zeros((capacity, *frame_shape), dtype=np.uint8)
        self.next_states = np.zeros((capacity, *frame_shape), dtype=np.uint8)
        self.actions = np.zeros(capacity, dtype=np.uint8)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.terminals = np.zeros(capacity, dtype=bool)
        self.head = 0  # next write slot
        self.size = 0
        self.inserted = 0
        self.evicted = 0

    def append(self, e: Experience) -> None:
        if self.size == self.capacity:
            self.evicted += 1
        i = self.head
        self.states[i] = e.state
        self.next_states[i] = e.next_state
        self.actions[i] = e.action
        self.rewards[i] = e.reward
        self.terminals[i] = e.terminal
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.inserted += 1

    def _slot(self, fifo_index: int) -> int:
        # fifo_index 0 is the oldest retained experience
        return (self.head - self.size + fifo_index) % self.capacity

    def get(self, fifo_index: int) -> Experience:
        i = self._slot(fifo_index)
        return Experience(state=self.states[i].copy(), action=int(self.actions[i]),
                          reward=float(self.rewards[i]), next_state=self.next_states[i].copy(),
                          terminal=bool(self.terminals[i]))


class PartitionedReplay:
    """K reward-partitioned FIFO datasets with fraction-exact batch sampling.

    One writer and one sampler may run concurrently; both take the internal
    lock so a sample never observes a half-written experience.
    """

    def __init__(self, spec: PartitionSpec, frame_shape: tuple[int, int, int]):
        self.spec = spec
        self.frame_shape = tuple(frame_shape)
        self.partitions = [_Ring(c, self.frame_shape) for c in spec.capacities]
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return sum(p.size for p in self.partitions)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(p.size for p in self.partitions)

    @property
    def counters(self) -> dict:
        return {name: {"inserted": p.inserted, "evicted": p.evicted, "size": p.size}
                for name, p in zip(self.spec.names, self.partitions)}

    def insert(self, e: Experience) -> int:
        """Insert into the partition owning e.reward; returns the partition index."""
        k = classify(e.reward, self.spec)
        with self._lock:
            self.partitions[k].append(e)
        return k

    def _draw_indices(self, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
        counts = batch_counts(batch_size, self.spec.fractions)
        picks = []
        for k, (n, part) in enumerate(zip(counts, self.partitions)):
            if n > 0 and part.size == 0:
                raise SamplingError(
                    f"partition '{self.spec.names[k]}' is empty but has sampling fraction "
                    f"{self.spec.fractions[k]}")
            picks.append(rng.integers(0, part.size, size=n) if n else np.empty(0, dtype=np.int64))
        return picks

    def sample_batch(self, batch_size: int, rng_seed: int) -> list[Experience]:
        """Exactly round(fraction_k * batch_size) experiences per partition."""
        rng = np.random.default_rng(rng_seed)
        with self._lock:
            picks = self._draw_indices(batch_size, rng)
            return [self.partitions[k].get(int(i))
                    for k, idx in enumerate(picks) for i in idx]

    def sample_arrays(self, batch_size: int, rng_seed: int):
        """Batch as stacked arrays with frames dequantized to float32 [0, 1]."""
        rng = np.random.default_rng(rng_seed)
        with self._lock:
            picks = self._draw_indices(batch_size, rng)
            states, next_states, actions, rewards, terminals = [], [], [], [], []
            for k, idx in enumerate(picks):
                part = self.partitions[k]
                sl = np.array([part._slot(int(i)) for i in idx], dtype=np.int64)
                states.append(part.states[sl])
                next_states.append(part.next_states[sl])
                actions.append(part.actions[sl])
                rewards.append(part.rewards[sl])
                terminals.append(part.terminals[sl])
        states = np.concatenate(states).astype(np.float32) / 255.0
        next_states = np.concatenate(next_states).astype(np.float32) / 255.0
        return (states, np.concatenate(actions).astype(np.int64),
                np.concatenate(rewards), next_states, np.concatenate(terminals))

    def iter_all(self):
        """All stored experiences, partition by partition in FIFO order."""
        with self._lock:
            for part in self.partitions:
                for i in range(part.size):
                    yield part.get(i)

    def save(self, path) -> None:
        """Versioned binary snapshot; stable byte-for-byte across save/load."""
        header = {
            "k": self.spec.k,
            "frame_shape": list(self.frame_shape),
            "intervals": [[_enc_inf(lo), _enc_inf(hi)] for lo, hi in self.spec.intervals],
            "fractions": list(self.spec.fractions),
            "capacities": list(self.spec.capacities),
            "names": list(self.spec.names),
            "partitions": [{"size": p.size, "inserted": p.inserted, "evicted": p.evicted}
                           for p in self.partitions],
        }
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", VERSION, len(blob)))
            fh.write(blob)
            for part in self.partitions:
                for i in range(part.size):
                    s = part._slot(i)
                    fh.write(part.states[s].tobytes())
                    fh.write(part.next_states[s].tobytes())
                    fh.write(struct.pack("<Bd?", part.actions[s], part.rewards[s],
                                         part.terminals[s]))

    @classmethod
    def load(cls, path) -> "PartitionedReplay":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != MAGIC:
                raise ReplayError("not a replay snapshot (bad magic)")
            version, hlen = struct.unpack("<II", fh.read(8))
            if version != VERSION:
                raise ReplayError(f"unsupported snapshot version {version}")
            header = json.loads(fh.read(hlen).decode())
            spec = PartitionSpec(
                intervals=tuple((_dec_inf(lo), _dec_inf(hi)) for lo, hi in header["intervals"]),
                fractions=tuple(header["fractions"]),
                capacities=tuple(header["capacities"]),
                names=tuple(header["names"]))
            frame_shape = tuple(header["frame_shape"])
            buf = cls(spec, frame_shape)
            nbytes = int(np.prod(frame_shape))
            rec = struct.Struct("<Bd?")
            for part, meta in zip(buf.partitions, header["partitions"]):
                for _ in range(meta["size"]):
                    state = np.frombuffer(fh.read(nbytes), dtype=np.uint8).reshape(frame_shape)
                    nxt = np.frombuffer(fh.read(nbytes), dtype=np.uint8).reshape(frame_shape)
                    payload = fh.read(rec.size)
                    if len(payload) < rec.size:
                        raise ReplayError("truncated replay snapshot")
                    action, reward, terminal = rec.unpack(payload)
                    part.append(Experience(state=state.copy(), action=action, reward=reward,
                                           next_state=nxt.copy(), terminal=terminal))
                part.inserted = meta["inserted"]
                part.evicted = meta["evicted"]
            return buf


def _enc_inf(v: float):
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return v


def _dec_inf(v) -> float:
    if v == "inf":
        return math.inf
    if v == "-inf":
        return -math.inf
    return float(v)


def transform_frames(frames: np.ndarray, quarter_turns: int, mirror: int) -> np.ndarray:
    """Apply mirror (about the vertical image axis) then k clockwise quarter turns.

    Operates on (..., H, W) stacks; exact on integer grids.
    """
    out = frames
    if mirror:
        out = out[..., ::-1]
    if quarter_turns % 4:
        out = np.rot90(out, k=-(quarter_turns % 4), axes=(-2, -1))
    return np.ascontiguousarray(out)


def transform_action(action: int, quarter_turns: int, mirror: int) -> int:
    """Remap a phase-local action index through the same planar symmetry."""
    a = action
    if mirror:
        a = _MIRROR_LR.get(a, a)
    for _ in range(quarter_turns % 4):
        a = _ROT90_CW.get(a, a)
    return a


def inverse_symmetry(quarter_turns: int, mirror: int) -> tuple[int, int]:
    """Inverse element in the dihedral group (mirror-first composition)."""
    if mirror:
        return (quarter_turns % 4, 1)
    return ((4 - quarter_turns) % 4, 0)


def apply_symmetry(e: Experience, quarter_turns: int, mirror: int) -> Experience:
    return Experience(state=transform_frames(e.state, quarter_turns, mirror),
                      action=transform_action(e.action, quarter_turns, mirror),
                      reward=e.reward,
                      next_state=transform_frames(e.next_state, quarter_turns, mirror),
                      terminal=e.terminal)


def augment_positive(e: Experience) -> list[Experience]:
    """The 8 planar-symmetry variants of a positive experience (identity first)."""
    if e.reward <= 0:
        raise ReplayError("augmentation is reserved for positive experiences")
    return [apply_symmetry(e, k, m) for k, m in SYMMETRIES]
