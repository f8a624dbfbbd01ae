"""Finite-state machine chaining the detection and descent policies into one
landing run, with a stub touchdown stage.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .agent import EpisodeRunner, FrameStack, quantize
from .camera import CameraSpec
from .env import (DESCENT_ACTIONS, DETECTION_ACTIONS, LandingEnv, Phase,
                  PHASE_ACTIONS, Termination, WorldSpec)
from .neural import NetworkGeometry, load_checkpoint
from .textures import MarkerSpec, Texture


class HierarchyError(Exception):
    pass


class FSMState(enum.Enum):
    LANDMARK_DETECTION = "landmark_detection"
    DESCENT_MANEUVER = "descent_maneuver"
    TOUCHDOWN = "touchdown"
    LANDED = "landed"
    ABORTED = "aborted"


class LandingOutcome(enum.Enum):
    LANDED = "landed"
    MISSED_TIMEOUT = "missed_timeout"
    WRONG_TRIGGER = "wrong_trigger"
    DESCENT_FAILURE = "descent_failure"


@dataclass
class LandingResult:
    outcome: LandingOutcome
    total_steps: int
    detection_steps: int
    descent_steps: int
    final_position: tuple[float, float, float]
    transitions: list[tuple[str, int]]  # (state name, global step index)
    action_violations: int = 0
    world_id: str = ""
    seed: int = 0

    @property
    def landed(self) -> bool:
        return self.outcome is LandingOutcome.LANDED

    def to_json(self) -> str:
        import json
        return json.dumps({
            "kind": "landing", "outcome": self.outcome.value,
            "total_steps": self.total_steps,
            "detection_steps": self.detection_steps,
            "descent_steps": self.descent_steps,
            "final_position": list(self.final_position),
            "transitions": [list(t) for t in self.transitions],
            "action_violations": self.action_violations,
            "world_id": self.world_id, "seed": self.seed,
        })

    @classmethod
    def from_json(cls, line: str) -> "LandingResult":
        import json
        d = json.loads(line)
        return cls(outcome=LandingOutcome(d["outcome"]), total_steps=d["total_steps"],
                   detection_steps=d["detection_steps"],
                   descent_steps=d["descent_steps"],
                   final_position=tuple(d["final_position"]),
                   transitions=[tuple(t) for t in d["transitions"]],
                   action_violations=d["action_violations"],
                   world_id=d.get("world_id", ""), seed=d.get("seed", 0))


def append_landing_results(path, results: list[LandingResult]) -> None:
    """Line-delimited landing results, same log family as episode records."""
    with open(path, "a") as fh:
        for result in results:
            fh.write(result.to_json() + "\n")


class LandingFSM:
    """Holds the two phase policies and replays Fig-3-style transitions.

    Each state runs exactly one policy; the detection trigger and the descent
    target-zone entry are the state-advancing events.
    """

    def __init__(self, detection_net, descent_net):
        det_geom = getattr(detection_net, "geometry", None)
        desc_geom = getattr(descent_net, "geometry", None)
        if det_geom is not None and det_geom.n_actions != len(DETECTION_ACTIONS):
            raise HierarchyError("detection policy action count mismatch")
        if desc_geom is not None and desc_geom.n_actions != len(DESCENT_ACTIONS):
            raise HierarchyError("descent policy action count mismatch")
        if (det_geom is not None and desc_geom is not None
                and det_geom.input_hw != desc_geom.input_hw):
            raise HierarchyError("phase policies disagree on observation size")
        self.detection_net = detection_net
        self.descent_net = descent_net

    @classmethod
    def from_checkpoints(cls, detection_path, descent_path,
                         expect_geometry: NetworkGeometry | None = None) -> "LandingFSM":
        det_geom = None
        desc_geom = None
        if expect_geometry is not None:
            det_geom = expect_geometry
            desc_geom = expect_geometry
        det, det_actions, _ = load_checkpoint(detection_path, expect_geometry=det_geom,
                                              expect_actions=[a.value for a in DETECTION_ACTIONS])
        desc, desc_actions, _ = load_checkpoint(descent_path, expect_geometry=desc_geom,
                                                expect_actions=[a.value for a in DESCENT_ACTIONS])
        return cls(det, desc)


def run_landing(fsm: LandingFSM, env: LandingEnv, world: WorldSpec, texture: Texture,
                marker: MarkerSpec, camera: CameraSpec, seed: int) -> LandingResult:
    """One greedy end-to-end landing episode through the state machine.

    Detection success hands the drone to the descent policy in place (the
    detection target box is the descent spawn footprint) with a fresh step
    budget; entering the descent target zone triggers the touchdown stub.
    """
    runner = EpisodeRunner(env, world, camera, marker)
    runner.begin(Phase.DETECTION, seed, texture)
    transitions = [(FSMState.LANDMARK_DETECTION.value, 0)]
    violations = 0
    detection_steps = 0
    descent_steps = 0

    def aborted(outcome: LandingOutcome) -> LandingResult:
        transitions.append((FSMState.ABORTED.value, detection_steps + descent_steps))
        return LandingResult(outcome=outcome, total_steps=detection_steps + descent_steps,
                             detection_steps=detection_steps, descent_steps=descent_steps,
                             final_position=env.state.position, transitions=transitions,
                             action_violations=violations, world_id=texture.id, seed=seed)

    while True:
        action = DETECTION_ACTIONS[int(np.argmax(fsm.detection_net.q_values(runner.stack.as_float())))]
        if action not in PHASE_ACTIONS[Phase.DETECTION]:
            violations += 1
        _, outcome = runner.step(action)
        detection_steps += 1
        if outcome.terminal:
            if outcome.reason is Termination.SUCCESS:
                break
            if outcome.reason is Termination.FAILURE:
                return aborted(LandingOutcome.WRONG_TRIGGER)
            return aborted(LandingOutcome.MISSED_TIMEOUT)

    transitions.append((FSMState.DESCENT_MANEUVER.value, detection_steps))
    state = env.enter_descent()
    runner.stack = FrameStack.initial(quantize(runner._render(state).frame))

    while True:
        action = DESCENT_ACTIONS[int(np.argmax(fsm.descent_net.q_values(runner.stack.as_float())))]
        if action not in PHASE_ACTIONS[Phase.DESCENT]:
            violations += 1
        _, outcome = runner.step(action)
        descent_steps += 1
        if outcome.terminal:
            if outcome.reason is Termination.SUCCESS:
                total = detection_steps + descent_steps
                transitions.append((FSMState.TOUCHDOWN.value, total))
                # touchdown stub: motors wind down immediately
                transitions.append((FSMState.LANDED.value, total))
                return LandingResult(outcome=LandingOutcome.LANDED, total_steps=total,
                                     detection_steps=detection_steps,
                                     descent_steps=descent_steps,
                                     final_position=env.state.position,
                                     transitions=transitions,
                                     action_violations=violations,
                                     world_id=texture.id, seed=seed)
            if outcome.reason is Termination.FAILURE:
                return aborted(LandingOutcome.DESCENT_FAILURE)
            return aborted(LandingOutcome.MISSED_TIMEOUT)


def end_to_end_success_rate(fsm: LandingFSM, env: LandingEnv, world: WorldSpec,
                            textures: list[Texture], marker: MarkerSpec,
                            camera: CameraSpec, episodes_per_world: int,
                            base_seed: int = 0) -> dict:
    """Fraction of landings over a world suite, with a per-failure breakdown."""
    if not textures:
        raise HierarchyError("empty world suite")
    results = []
    seed = base_seed
    for texture in textures:
        for _ in range(episodes_per_world):
            results.append(run_landing(fsm, env, world, texture, marker, camera, seed))
            seed += 1
    n = len(results)
    breakdown = {o.value: sum(r.outcome is o for r in results) for o in LandingOutcome}
    landed = [r for r in results if r.landed]
    return {
        "episodes": n,
        "success_rate": len(landed) / n if n else 0.0,
        "breakdown": breakdown,
        "mean_steps_to_land": (sum(r.total_steps for r in landed) / len(landed)
                               if landed else None),
        "action_violations": sum(r.action_violations for r in results),
        "results": results,
    }
