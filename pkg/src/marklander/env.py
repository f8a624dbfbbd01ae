"""Landing MDPs: world geometry, discrete-action kinematics, rewards, spawning.

Two phases share one flat world with a ground marker at the center.  The
detection phase flies at fixed altitude and must fire the trigger inside a
target box; the descent phase starts above that box and must sink into a
small target volume without dipping low anywhere else.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

TWO_PI = 2.0 * math.pi


class EnvError(Exception):
    """Configuration or contract violation in the environment."""


class Phase(enum.Enum):
    DETECTION = "detection"
    DESCENT = "descent"
    TOUCHDOWN = "touchdown"


class Action(enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    LEFT = "left"
    RIGHT = "right"
    STOP = "stop"
    DESCEND = "descend"
    TRIGGER = "trigger"


# Stop exists in the action vocabulary but is not part of either phase subset.
DETECTION_ACTIONS = (Action.FORWARD, Action.BACKWARD, Action.LEFT, Action.RIGHT, Action.TRIGGER)
DESCENT_ACTIONS = (Action.FORWARD, Action.BACKWARD, Action.LEFT, Action.RIGHT, Action.DESCEND)

PHASE_ACTIONS = {Phase.DETECTION: DETECTION_ACTIONS, Phase.DESCENT: DESCENT_ACTIONS}

LIVING_COST = -0.01


class Termination(enum.Enum):
    NONE = "none"
    SUCCESS = "success"
    FAILURE = "failure"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    terminal: bool
    reason: Termination = Termination.NONE


@dataclass(frozen=True)
class MotionParams:
    """Discrete action bursts: speed times burst length gives the step size."""

    burst_seconds: float = 2.0
    planar_speed: float = 0.5
    descend_speed: float = 0.25

    @property
    def planar_step(self) -> float:
        return self.planar_speed * self.burst_seconds

    @property
    def descend_step(self) -> float:
        return self.descend_speed * self.burst_seconds


@dataclass(frozen=True)
class NoiseSpec:
    """Optional per-step positional jitter and per-frame camera tilt jitter."""

    enabled: bool = False
    position_sigma: float = 0.05
    tilt_sigma: float = 0.015


@dataclass(frozen=True)
class WorldSpec:
    """Flat square world with the marker at the center of every box.

    All boxes are axis aligned and expressed as half extents around the
    marker.  Defaults are the full-scale setup; the tiny profile shrinks
    everything (see config.tiny_profile).
    """

    world_extent: float = 100.0
    marker_position: tuple[float, float] = (0.0, 0.0)
    marker_side: float = 1.5
    detection_altitude: float = 20.0
    detection_spawn_half: float = 7.5
    detection_target_half: float = 1.5
    descent_spawn_alt_min: float = 2.0
    descent_spawn_alt_max: float = 20.0
    descent_target_half: float = 0.75
    descent_target_alt: float = 1.5
    descent_failure_altitude: float = 1.5
    detection_step_limit: int = 20
    descent_step_limit: int = 40
    texture_id: str = "asphalt:0"
    texture_swap_period: int = 50

    def __post_init__(self):
        if self.detection_target_half > self.detection_spawn_half:
            raise EnvError("detection target box must fit inside the spawn box footprint")
        if self.world_extent <= 2 * self.detection_spawn_half:
            raise EnvError("world extent must exceed the spawn box")
        if self.descent_target_half > self.detection_target_half:
            raise EnvError("descent target footprint must fit inside the descent spawn box")
        if self.descent_spawn_alt_min <= self.descent_failure_altitude:
            raise EnvError("descent spawn altitude must start above the failure altitude")

    @property
    def descent_spawn_half(self) -> float:
        # The descent spawn footprint is the detection target box.
        return self.detection_target_half

    def in_detection_target(self, x: float, y: float) -> bool:
        mx, my = self.marker_position
        return abs(x - mx) <= self.detection_target_half and abs(y - my) <= self.detection_target_half

    def in_descent_footprint(self, x: float, y: float) -> bool:
        mx, my = self.marker_position
        return abs(x - mx) <= self.descent_target_half and abs(y - my) <= self.descent_target_half

    def in_descent_target(self, x: float, y: float, z: float) -> bool:
        return self.in_descent_footprint(x, y) and 0.0 <= z <= self.descent_target_alt


@dataclass(frozen=True)
class DroneState:
    position: tuple[float, float, float]
    yaw: float
    step_count: int
    phase: Phase

    @property
    def x(self) -> float:
        return self.position[0]

    @property
    def y(self) -> float:
        return self.position[1]

    @property
    def altitude(self) -> float:
        return self.position[2]


def reset(phase: Phase, world: WorldSpec, rng: np.random.Generator,
          exploring_start: bool = False) -> DroneState:
    """Spawn a drone for the given phase.

    Detection spawns uniformly in the spawn footprint at the fixed flight
    altitude.  Descent spawns above the detection target box, either at the
    top of the column or (exploring start) at a uniform altitude in it.
    """
    mx, my = world.marker_position
    yaw = rng.uniform(0.0, TWO_PI)
    if phase is Phase.DETECTION:
        x = mx + rng.uniform(-world.detection_spawn_half, world.detection_spawn_half)
        y = my + rng.uniform(-world.detection_spawn_half, world.detection_spawn_half)
        z = world.detection_altitude
    elif phase is Phase.DESCENT:
        x = mx + rng.uniform(-world.descent_spawn_half, world.descent_spawn_half)
        y = my + rng.uniform(-world.descent_spawn_half, world.descent_spawn_half)
        if exploring_start:
            z = rng.uniform(world.descent_spawn_alt_min, world.descent_spawn_alt_max)
        else:
            z = world.descent_spawn_alt_max
    else:
        raise EnvError(f"no spawn box defined for phase {phase!r}")
    return DroneState(position=(x, y, z), yaw=yaw, step_count=0, phase=phase)


def apply_action(state: DroneState, action: Action, motion: MotionParams,
                 noise: NoiseSpec, rng: np.random.Generator) -> DroneState:
    """Apply one discrete action burst and return the successor state.

    Planar moves displace one step in the body frame rotated by yaw; descend
    sinks one vertical step; Stop and Trigger leave the pose unchanged.  With
    noise on, a zero-mean Gaussian jitter is added to the displaced axes
    (never to altitude during detection).  Kinematics accepts the whole
    action vocabulary; the per-phase subset is enforced by LandingEnv.step.
    """
    bx, by = 0.0, 0.0  # body frame: x forward, y left
    dz = 0.0
    step = motion.planar_step
    if action is Action.FORWARD:
        bx = step
    elif action is Action.BACKWARD:
        bx = -step
    elif action is Action.LEFT:
        by = step
    elif action is Action.RIGHT:
        by = -step
    elif action is Action.DESCEND:
        dz = -motion.descend_step
    c, s = _snapped_trig(state.yaw)
    dx = c * bx - s * by
    dy = s * bx + c * by
    if noise.enabled and action not in (Action.TRIGGER, Action.STOP):
        dx += rng.normal(0.0, noise.position_sigma)
        dy += rng.normal(0.0, noise.position_sigma)
        if state.phase is Phase.DESCENT and action is Action.DESCEND:
            dz += rng.normal(0.0, noise.position_sigma)
    x, y, z = state.position
    return replace(state, position=(x + dx, y + dy, z + dz), step_count=state.step_count + 1)


def _snapped_trig(angle: float) -> tuple[float, float]:
    """cos/sin with values snapped to exact 0/±1 near quarter turns.

    Keeps quarter-turn rotations exactly representable so that 90-degree yaw
    deltas commute bit-for-bit with image rotations.
    """
    c, s = math.cos(angle), math.sin(angle)
    for v in (-1.0, 0.0, 1.0):
        if abs(c - v) < 1e-12:
            c = v
        if abs(s - v) < 1e-12:
            s = v
    return c, s


def reward_detection(state: DroneState, action: Action, world: WorldSpec) -> StepOutcome:
    """Reward for a detection-phase step, evaluated on the post-action state."""
    if action is Action.TRIGGER:
        if world.in_detection_target(state.x, state.y):
            return StepOutcome(1.0, True, Termination.SUCCESS)
        return StepOutcome(-1.0, True, Termination.FAILURE)
    if state.step_count >= world.detection_step_limit:
        return StepOutcome(LIVING_COST, True, Termination.TIMEOUT)
    return StepOutcome(LIVING_COST, False, Termination.NONE)


def reward_descent(state: DroneState, world: WorldSpec) -> StepOutcome:
    """Reward for a descent-phase step, evaluated on the post-action state."""
    x, y, z = state.position
    if world.in_descent_target(x, y, z):
        return StepOutcome(1.0, True, Termination.SUCCESS)
    if z < world.descent_failure_altitude and not world.in_descent_footprint(x, y):
        return StepOutcome(-1.0, True, Termination.FAILURE)
    if state.step_count >= world.descent_step_limit:
        return StepOutcome(LIVING_COST, True, Termination.TIMEOUT)
    return StepOutcome(LIVING_COST, False, Termination.NONE)


class LandingEnv:
    """Single-threaded environment instance for one phase at a time.

    All randomness (spawn, positional noise) flows from the seed given to
    reset, so an episode replays exactly from (seed, action sequence).
    """

    def __init__(self, world: WorldSpec | None = None, noise: NoiseSpec | None = None,
                 motion: MotionParams | None = None, exploring_start: bool = False):
        self.world = world if world is not None else WorldSpec()
        self.noise = noise if noise is not None else NoiseSpec()
        self.motion = motion if motion is not None else MotionParams()
        self.exploring_start = exploring_start
        self.state: DroneState | None = None
        self._terminal = True
        self._rng: np.random.Generator | None = None

    def reset(self, phase: Phase, seed: int) -> DroneState:
        self._rng = np.random.default_rng(seed)
        self.state = reset(phase, self.world, self._rng,
                           exploring_start=(phase is Phase.DESCENT and self.exploring_start))
        self._terminal = False
        return self.state

    def step(self, action: Action) -> tuple[DroneState, StepOutcome]:
        if self.state is None or self._terminal:
            raise EnvError("step called on a terminal or unreset environment")
        if action not in PHASE_ACTIONS[self.state.phase]:
            raise EnvError(f"action {action.value} not available in phase "
                           f"{self.state.phase.value}")
        state = apply_action(self.state, action, self.motion, self.noise, self._rng)
        if state.phase is Phase.DETECTION:
            outcome = reward_detection(state, action, self.world)
        elif state.phase is Phase.DESCENT:
            outcome = reward_descent(state, self.world)
        else:
            raise EnvError(f"phase {state.phase!r} has no step rule")
        self.state = state
        self._terminal = outcome.terminal
        return state, outcome

    @property
    def terminal(self) -> bool:
        return self._terminal

    def enter_descent(self) -> DroneState:
        """Switch a detection-phase drone to the descent MDP in place.

        Used by the landing state machine at the detection-to-descent
        hand-off: position carries over, the step budget restarts.
        """
        if self.state is None:
            raise EnvError("cannot enter descent before reset")
        self.state = replace(self.state, phase=Phase.DESCENT, step_count=0)
        self._terminal = False
        return self.state


def episode_return_bounds(phase: Phase, world: WorldSpec) -> tuple[float, float]:
    """Inclusive bounds on the undiscounted episode return for a phase."""
    limit = world.detection_step_limit if phase is Phase.DETECTION else world.descent_step_limit
    return (limit - 1) * LIVING_COST - 1.0, 1.0
