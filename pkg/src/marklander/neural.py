"""From-scratch Q-network: conv/dense layers with manual backprop, RMSProp,
squared-error training on bootstrap targets, and binary checkpoints.

The architecture family is three valid-padding convolutions followed by two
dense layers, rectified-linear after every hidden layer and a linear output
(Q-values may be negative).  Geometry is parameterized so the tiny profile
can shrink input size and channel counts; float64 is used in tests, float32
in training.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

CKPT_MAGIC = b"QNCK"
CKPT_VERSION = 1


class NeuralError(Exception):
    pass


class ShapeError(NeuralError):
    pass


class CheckpointError(NeuralError):
    pass


@dataclass(frozen=True)
class NetworkGeometry:
    input_hw: int = 84
    input_frames: int = 4
    conv: tuple[tuple[int, int, int], ...] = ((32, 8, 2), (64, 4, 2), (64, 3, 1))
    dense: tuple[int, ...] = (512,)
    n_actions: int = 5

    def feature_sizes(self) -> list[int]:
        """Spatial edge length after each conv (valid padding, floor division)."""
        sizes = []
        hw = self.input_hw
        for _, k, s in self.conv:
            hw = (hw - k) // s + 1
            if hw <= 0:
                raise ShapeError(f"conv stack collapses a {self.input_hw}px input")
            sizes.append(hw)
        return sizes

    def flat_features(self) -> int:
        return self.conv[-1][0] * self.feature_sizes()[-1] ** 2

    def to_dict(self) -> dict:
        return {"input_hw": self.input_hw, "input_frames": self.input_frames,
                "conv": [list(c) for c in self.conv], "dense": list(self.dense),
                "n_actions": self.n_actions}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkGeometry":
        return cls(input_hw=d["input_hw"], input_frames=d["input_frames"],
                   conv=tuple(tuple(c) for c in d["conv"]), dense=tuple(d["dense"]),
                   n_actions=d["n_actions"])


class Conv2D:
    """Valid-padding strided convolution via im2col.

    Activations flow channels-last (B, H, W, C) so the im2col gather and the
    col2im scatter touch contiguous kernel-row-by-channel blocks; weights are
    stored (k, k, in_ch, out_ch) so the GEMM operand is a zero-copy reshape.
    """

    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int, dtype):
        self.in_ch, self.out_ch, self.kernel, self.stride = in_ch, out_ch, kernel, stride
        self.w = np.zeros((kernel, kernel, in_ch, out_ch), dtype=dtype)
        self.b = np.zeros(out_ch, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._cache = None

    @property
    def fans(self) -> tuple[int, int]:
        rf = self.kernel * self.kernel
        return self.in_ch * rf, self.out_ch * rf

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.dw, self.db]

    def forward(self, x: np.ndarray) -> np.ndarray:
        bsz, h, w, c = x.shape
        if c != self.in_ch:
            raise ShapeError(f"conv expected {self.in_ch} channels, got {c}")
        k, s = self.kernel, self.stride
        oh = (h - k) // s + 1
        ow = (w - k) // s + 1
        if not x.flags.c_contiguous:
            x = np.ascontiguousarray(x)
        sb, sh, sw, sc = x.strides
        view = np.lib.stride_tricks.as_strided(
            x, shape=(bsz, oh, ow, k, k, c),
            strides=(sb, s * sh, s * sw, sh, sw, sc), writeable=False)
        flat = view.reshape(bsz * oh * ow, k * k * c)
        out = flat @ self.w.reshape(k * k * c, self.out_ch) + self.b
        self._cache = (x.shape, flat)
        return out.reshape(bsz, oh, ow, self.out_ch)

    def backward(self, dy: np.ndarray, need_dx: bool = True) -> np.ndarray | None:
        x_shape, flat = self._cache
        bsz, h, w, c = x_shape
        k, s = self.kernel, self.stride
        _, oh, ow, _ = dy.shape
        dflat = dy.reshape(bsz * oh * ow, self.out_ch)
        self.dw[...] = (flat.T @ dflat).reshape(self.dw.shape)
        self.db[...] = dflat.sum(axis=0)
        if not need_dx:
            return None
        # col2im: scatter-add the column gradients back per kernel offset
        dcols = (dflat @ self.w.reshape(k * k * c, self.out_ch).T).reshape(bsz, oh, ow, k, k, c)
        dx = np.zeros(x_shape, dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dx[:, i:i + s * oh:s, j:j + s * ow:s, :] += dcols[:, :, :, i, j, :]
        return dx


class ReLU:
    def __init__(self):
        self._mask = None

    def params(self):
        return []

    def grads(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.where(self._mask, dy, 0)


class Flatten:
    def __init__(self):
        self._shape = None

    def params(self):
        return []

    def grads(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy.reshape(self._shape)


class Dense:
    def __init__(self, n_in: int, n_out: int, dtype):
        self.n_in, self.n_out = n_in, n_out
        self.w = np.zeros((n_in, n_out), dtype=dtype)
        self.b = np.zeros(n_out, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    @property
    def fans(self) -> tuple[int, int]:
        return self.n_in, self.n_out

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.dw, self.db]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != self.n_in:
            raise ShapeError(f"dense expected {self.n_in} inputs, got {x.shape[1]}")
        self._x = x
        return x @ self.w + self.b

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.dw[...] = self._x.T @ dy
        self.db[...] = dy.sum(axis=0)
        return dy @ self.w.T


class QNetwork:
    """Action-value network Q(s, .; theta) over stacked grayscale frames."""

    def __init__(self, geometry: NetworkGeometry | None = None, dtype=np.float32):
        self.geometry = geometry if geometry is not None else NetworkGeometry()
        self.dtype = np.dtype(dtype)
        g = self.geometry
        g.feature_sizes()  # validates
        self.layers: list = []
        in_ch = g.input_frames
        for out_ch, k, s in g.conv:
            self.layers.append(Conv2D(in_ch, out_ch, k, s, self.dtype))
            self.layers.append(ReLU())
            in_ch = out_ch
        self.layers.append(Flatten())
        n_in = g.flat_features()
        for n in g.dense:
            self.layers.append(Dense(n_in, n, self.dtype))
            self.layers.append(ReLU())
            n_in = n
        self.layers.append(Dense(n_in, g.n_actions, self.dtype))

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def grads(self) -> list[np.ndarray]:
        return [gr for layer in self.layers for gr in layer.grads()]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Q-values for a batch of stacks (B, frames, H, W) -> (B, actions)."""
        g = self.geometry
        if x.ndim != 4 or x.shape[1:] != (g.input_frames, g.input_hw, g.input_hw):
            raise ShapeError(f"expected (B, {g.input_frames}, {g.input_hw}, {g.input_hw}), "
                             f"got {x.shape}")
        # frames to channels-last for the conv stack
        out = np.ascontiguousarray(np.asarray(x, dtype=self.dtype).transpose(0, 2, 3, 1))
        for layer in self.layers:
            out = layer.forward(out)
        return out

    def backward(self, dq: np.ndarray) -> None:
        grad = np.asarray(dq, dtype=self.dtype)
        for index, layer in reversed(list(enumerate(self.layers))):
            if isinstance(layer, Conv2D):
                grad = layer.backward(grad, need_dx=(index > 0))
            else:
                grad = layer.backward(grad)

    def q_values(self, stack: np.ndarray) -> np.ndarray:
        """Q-vector for a single stack (frames, H, W)."""
        return self.forward(stack[None])[0]

    def copy_params_from(self, other: "QNetwork") -> None:
        for dst, src in zip(self.params(), other.params()):
            np.copyto(dst, src)

    def clone(self) -> "QNetwork":
        twin = QNetwork(self.geometry, self.dtype)
        twin.copy_params_from(self)
        return twin


def xavier_init(net: QNetwork, seed: int) -> QNetwork:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases, in place."""
    rng = np.random.default_rng(seed)
    for layer in net.layers:
        if isinstance(layer, (Conv2D, Dense)):
            fan_in, fan_out = layer.fans
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            layer.w[...] = rng.uniform(-bound, bound, size=layer.w.shape)
            layer.b[...] = 0.0
    return net


class RMSProp:
    """Root-mean-square propagation with per-parameter accumulators."""

    def __init__(self, learning_rate: float = 2.5e-4, decay: float = 0.95,
                 epsilon: float = 1e-6):
        self.learning_rate = learning_rate
        self.decay = decay
        self.epsilon = epsilon
        self._acc: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self._acc is None:
            self._acc = [np.zeros_like(p) for p in params]
        for p, g, a in zip(params, grads, self._acc):
            a *= self.decay
            a += (1.0 - self.decay) * g * g
            p -= self.learning_rate * g / (np.sqrt(a) + self.epsilon)

    @property
    def accumulators(self) -> list[np.ndarray]:
        return [] if self._acc is None else self._acc


class NetworkPair:
    """Online network theta and its periodically synchronized frozen copy."""

    def __init__(self, online: QNetwork, sync_period: int):
        self.online = online
        self.target = online.clone()
        self.sync_period = sync_period
        self.frames_since_sync = 0

    def tick(self, frames: int = 1) -> bool:
        """Advance the sync counter; sync and report True when the period elapses."""
        self.frames_since_sync += frames
        if self.frames_since_sync >= self.sync_period:
            sync_target(self)
            return True
        return False


def sync_target(pair: NetworkPair) -> NetworkPair:
    pair.target.copy_params_from(pair.online)
    pair.frames_since_sync = 0
    return pair


class TargetMode:
    VANILLA = "vanilla"
    DOUBLE = "double"


def td_target(reward: float, next_state: np.ndarray, terminal: bool,
              pair: NetworkPair, gamma: float, mode: str) -> float:
    """Single-transition bootstrap target (terminal suppresses bootstrapping)."""
    if terminal:
        return float(reward)
    target_q = pair.target.q_values(next_state)
    if mode == TargetMode.VANILLA:
        return float(reward + gamma * target_q.max())
    if mode == TargetMode.DOUBLE:
        online_q = pair.online.q_values(next_state)
        return float(reward + gamma * target_q[int(np.argmax(online_q))])
    raise NeuralError(f"unknown target mode {mode!r}")


def td_targets_batch(rewards: np.ndarray, next_states: np.ndarray, terminals: np.ndarray,
                     pair: NetworkPair, gamma: float, mode: str) -> np.ndarray:
    target_q = pair.target.forward(next_states)
    if mode == TargetMode.VANILLA:
        bootstrap = target_q.max(axis=1)
    elif mode == TargetMode.DOUBLE:
        picks = np.argmax(pair.online.forward(next_states), axis=1)
        bootstrap = target_q[np.arange(len(picks)), picks]
    else:
        raise NeuralError(f"unknown target mode {mode!r}")
    return rewards + gamma * bootstrap * (~np.asarray(terminals, dtype=bool))


def train_step(pair: NetworkPair, batch, opt: RMSProp, gamma: float, mode: str) -> float:
    """One squared-error gradient step on the online network.

    `batch` is either (states, actions, rewards, next_states, terminals)or a
    list of replay Experiences.  The gradient flows only through the taken
    action's output; the target network is untouched.
    """
    if isinstance(batch, (list,)):
        batch = experiences_to_arrays(batch)
    states, actions, rewards, next_states, terminals = batch
    if len(actions) == 0:
        raise NeuralError("empty training batch")
    targets = td_targets_batch(np.asarray(rewards, dtype=np.float64), next_states,
                               terminals, pair, gamma, mode)
    q = pair.online.forward(states)
    idx = np.arange(len(actions))
    taken = q[idx, actions]
    err = taken - targets
    loss = float(np.mean(err * err))
    dq = np.zeros_like(q)
    dq[idx, actions] = (2.0 / len(actions)) * err
    pair.online.backward(dq)
    opt.step(pair.online.params(), pair.online.grads())
    return loss


def experiences_to_arrays(batch):
    """Stack replay Experiences into training arrays (frames to [0, 1] float)."""
    states = np.stack([e.state for e in batch]).astype(np.float32) / 255.0
    next_states = np.stack([e.next_state for e in batch]).astype(np.float32) / 255.0
    actions = np.array([e.action for e in batch], dtype=np.int64)
    rewards = np.array([e.reward for e in batch], dtype=np.float64)
    terminals = np.array([e.terminal for e in batch], dtype=bool)
    return states, actions, rewards, next_states, terminals


def save_checkpoint(net: QNetwork, path, action_names: list[str], meta: dict | None = None) -> None:
    """Versioned binary checkpoint: JSON header + little-endian float32 payload."""
    header = {"geometry": net.geometry.to_dict(), "action_names": list(action_names),
              "meta": meta or {}}
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(blob)))
        fh.write(blob)
        for p in net.params():
            fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_checkpoint(path, expect_geometry: NetworkGeometry | None = None,
                    expect_actions: list[str] | None = None,
                    dtype=np.float32) -> tuple[QNetwork, list[str], dict]:
    """Load a checkpoint; raises CheckpointError on any mismatch or truncation."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CKPT_MAGIC:
            raise CheckpointError("not a network checkpoint (bad magic)")
        head = fh.read(8)
        if len(head) < 8:
            raise CheckpointError("truncated checkpoint header")
        version, hlen = struct.unpack("<II", head)
        if version != CKPT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        raw = fh.read(hlen)
        if len(raw) < hlen:
            raise CheckpointError("truncated checkpoint header")
        header = json.loads(raw.decode())
        geometry = NetworkGeometry.from_dict(header["geometry"])
        actions = list(header["action_names"])
        if expect_geometry is not None and geometry != expect_geometry:
            raise CheckpointError(f"checkpoint geometry {geometry} does not match "
                                  f"expected {expect_geometry}")
        if expect_actions is not None and actions != list(expect_actions):
            raise CheckpointError("checkpoint action set does not match expected actions")
        net = QNetwork(geometry, dtype=dtype)
        for p in net.params():
            payload = fh.read(p.size * 4)
            if len(payload) < p.size * 4:
                raise CheckpointError("truncated checkpoint payload")
            p[...] = np.frombuffer(payload, dtype="<f4").reshape(p.shape)
        if fh.read(1):
            raise CheckpointError("trailing bytes after checkpoint payload")
    return net, actions, header["meta"]
