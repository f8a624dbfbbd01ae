"""Sequential training runs feeding the acceptance-test cache."""
import json, sys, time
import numpy as np
from collections import Counter
from pathlib import Path
from marklander.agent import EpisodeRunner, train_phase
from marklander.config import tiny_profile
from marklander.env import DESCENT_ACTIONS, DETECTION_ACTIONS, LandingEnv, Phase, Termination
from marklander.neural import load_checkpoint
from marklander.textures import default_marker, texture_pool

CACHE = Path(".acceptance_cache")

def evaluate(cfg, ckpt, phase, episodes=200, seed_base=50_000):
    net, _, _ = load_checkpoint(ckpt)
    world = cfg.world_spec(); camera = cfg.camera_spec()
    marker = default_marker(world.marker_side)
    pool = texture_pool(cfg.test_seeds(), size=cfg.textures.size, world_scale=cfg.textures.world_scale)
    env = LandingEnv(world, cfg.noise_spec(), exploring_start=False)
    runner = EpisodeRunner(env, world, camera, marker)
    actions = DETECTION_ACTIONS if phase is Phase.DETECTION else DESCENT_ACTIONS
    reasons = Counter(); steps = []
    for ep in range(episodes):
        runner.begin(phase, seed_base + ep, pool[ep % len(pool)])
        while not env.terminal:
            q = net.q_values(runner.stack.as_float())
            _, outcome = runner.step(actions[int(np.argmax(q))])
        reasons[outcome.reason.value] += 1
        if outcome.reason is Termination.SUCCESS: steps.append(env.state.step_count)
    return reasons["success"] / episodes, dict(reasons), float(np.mean(steps)) if steps else -1

def run(name, phase, seed, textures="multi", target_mode=None, frames=None, eval_phase=None):
    cfg = tiny_profile()
    out = CACHE / name
    t0 = time.monotonic()
    print(f"=== {name}: training ===", flush=True)
    res = train_phase(phase, cfg, out, seed=seed, textures=textures,
                      target_mode=target_mode, frames=frames, progress=True,
                      snapshot_every=50_000)
    rate, modes, msteps = evaluate(cfg, res.checkpoint_path, eval_phase or phase)
    summary = {"name": name, "success_rate": rate, "modes": modes, "mean_steps": msteps,
               "qmax_peak": res.qmax_peak, "frames": res.frames,
               "elapsed": round(time.monotonic() - t0, 1)}
    with open(out / "eval.json", "w") as fh: json.dump(summary, fh, indent=2)
    print(f"=== {name}: {json.dumps(summary)} ===", flush=True)

# smoke first: catches descent-design errors cheaply
run("descent_smoke", Phase.DESCENT, seed=99, frames=30_000)
run("descent_double", Phase.DESCENT, seed=13)
run("detection_multi", Phase.DETECTION, seed=11)
run("detection_single", Phase.DETECTION, seed=12, textures="single")
run("descent_vanilla", Phase.DESCENT, seed=14, target_mode="vanilla", frames=100_000)
print("ALL RUNS DONE", flush=True)
