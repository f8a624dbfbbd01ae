"""Command-line entry points: train, eval, render, serve, replay, pilot."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .agent import train_phase
from .camera import render_frame
from .config import ConfigError, load_config
from .env import DroneState, Phase
from .records import append_records, read_records, replay_episode
from .service import PilotService
from .textures import (Family, corrupt_marker, default_marker, generate_texture,
                       save_png, texture_from_png)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file overlaying the profile")
    p.add_argument("--profile", choices=["full", "tiny"], default=None,
                   help="base profile (default: full, or the file's choice)")


def _load_cfg(args):
    return load_config(args.config, args.profile)


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    phase = Phase(args.phase)
    result = train_phase(phase, cfg, args.out, seed=args.seed, textures=args.textures,
                         target_mode=args.target_mode, frames=args.frames,
                         progress=not args.quiet)
    curves = Path(args.out) / "curves.png"
    bench_mod.plot_training_curves(result.metrics, curves)
    print(json.dumps({"checkpoint": result.checkpoint_path,
                      "metrics": result.metrics_path, "frames": result.frames,
                      "episodes": result.episodes, "texture_swaps": result.texture_swaps,
                      "qmax_peak": result.qmax_peak,
                      "elapsed_seconds": round(result.elapsed_seconds, 1),
                      "fingerprint": result.fingerprint}))
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    phase = Phase(args.phase)
    if args.agent == "dqn" and not args.checkpoint:
        print("error: --checkpoint is required for the dqn agent", file=sys.stderr)
        return 2
    suites = list(bench_mod.SUITE_NAMES) if args.suite == "all" else [args.suite]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = None
    records = []
    for name in suites:
        suite = bench_mod.build_suite(name, cfg, seed=args.seed)
        part = bench_mod.run_suite(args.agent, suite, phase, cfg,
                                   checkpoint=args.checkpoint, episodes=args.episodes,
                                   seed=args.seed, record_episodes=records)
        report = part if report is None else report.merge(part)
    csv_path = out / "results.csv"
    png_path = out / "results.png"
    bench_mod.render_report(report, "delimited", csv_path)
    bench_mod.render_report(report, "plot", png_path)
    append_records(out / "episodes.jsonl", records)
    print(bench_mod.render_report(report, "table"))
    print(f"wrote {csv_path}, {png_path}, and {out / 'episodes.jsonl'}")
    return 0


def cmd_render(args) -> int:
    cfg = _load_cfg(args)
    world = cfg.world_spec()
    camera = cfg.camera_spec()
    if args.texture_png:
        texture = texture_from_png(args.texture_png, cfg.textures.world_scale)
    else:
        family, _, seed = args.texture.partition(":")
        texture = generate_texture(Family(family), int(seed or 0),
                                   size=cfg.textures.size,
                                   world_scale=cfg.textures.world_scale)
    marker = default_marker(world.marker_side)
    if args.marker_corruption > 0:
        marker = corrupt_marker(marker, args.marker_corruption, args.seed)
    state = DroneState(position=(args.x, args.y, args.altitude), yaw=args.yaw,
                       step_count=0, phase=Phase.DETECTION)
    obs = render_frame(state, world, texture, marker, camera, rng_seed=args.seed)
    save_png(obs.frame, args.out)
    print(f"wrote {args.out} ({camera.resolution}x{camera.resolution})")
    return 0


def cmd_serve(args) -> int:
    cfg = _load_cfg(args)
    records = Path(args.records)
    records.parent.mkdir(parents=True, exist_ok=True)
    service = PilotService(cfg, records_path=records, metrics_path=args.metrics)
    host = cfg.service.host
    tcp_port = service.start_tcp(host, args.port if args.port is not None
                                 else cfg.service.port)
    ws_port = None
    if not args.no_ws:
        ws_port = service.start_ws(host, args.ws_port if args.ws_port is not None
                                   else cfg.service.ws_port)
    print(json.dumps({"event": "listening", "host": host, "tcp_port": tcp_port,
                      "ws_port": ws_port, "records": str(records)}), flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        service.shutdown()
    return 0


def cmd_replay(args) -> int:
    cfg = _load_cfg(args)
    records = read_records(args.records)
    if not records:
        print("no records found", file=sys.stderr)
        return 2
    failures = 0
    for i, record in enumerate(records):
        result = replay_episode(record, cfg)
        if not result.ok:
            failures += 1
            print(f"record {i} ({record.agent_id}, seed {record.seed}): DIVERGED "
                  f"at step {result.divergence_step}: {result.message}")
    print(f"verified {len(records)} episodes, {failures} divergent")
    return 1 if failures else 0


def cmd_pilot(args) -> int:
    import functools
    import http.server

    cfg = _load_cfg(args)
    ui_dir = Path(args.ui_dir)
    if not (ui_dir / "index.html").exists():
        print(f"error: no UI build at {ui_dir} (run `npm run build` in frontend/)",
              file=sys.stderr)
        return 2
    records = Path(args.records)
    records.parent.mkdir(parents=True, exist_ok=True)
    service = PilotService(cfg, records_path=records, metrics_path=args.metrics)
    host = cfg.service.host
    ws_port = service.start_ws(host, args.ws_port if args.ws_port is not None
                               else cfg.service.ws_port)
    handler = functools.partial(http.server.SimpleHTTPRequestHandler,
                                directory=str(ui_dir))
    httpd = http.server.ThreadingHTTPServer((host, args.http_port), handler)
    port = httpd.server_address[1]
    print(json.dumps({"event": "listening", "url": f"http://{host}:{port}/?ws={ws_port}",
                      "ws_port": ws_port, "ui_dir": str(ui_dir)}), flush=True)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        service.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marklander",
        description="Marker-landing sandbox: train, evaluate, render, serve, replay.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one phase policy")
    _add_config_args(p)
    p.add_argument("--phase", choices=["detection", "descent"], required=True)
    p.add_argument("--textures", choices=["single", "multi"], default="multi")
    p.add_argument("--target-mode", choices=["vanilla", "double"], default=None)
    p.add_argument("--frames", type=int, default=None, help="override frame budget")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run evaluation suites")
    _add_config_args(p)
    p.add_argument("--suite", choices=list(bench_mod.SUITE_NAMES) + ["all"],
                   default="uniform")
    p.add_argument("--agent", choices=["dqn", "random", "template"], default="dqn")
    p.add_argument("--phase", choices=["detection", "descent"], default="detection")
    p.add_argument("--checkpoint")
    p.add_argument("--episodes", type=int, default=None,
                   help="episodes per suite (default: episodes_per_world x worlds)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="render one camera frame to PNG")
    _add_config_args(p)
    p.add_argument("--texture", default="asphalt:0", help="family:seed")
    p.add_argument("--texture-png", help="use a PNG file as the ground texture")
    p.add_argument("--altitude", type=float, default=20.0)
    p.add_argument("--x", type=float, default=0.0)
    p.add_argument("--y", type=float, default=0.0)
    p.add_argument("--yaw", type=float, default=0.0)
    p.add_argument("--marker-corruption", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("serve", help="run the pilot session service")
    _add_config_args(p)
    p.add_argument("--port", type=int, default=None, help="TCP port (0 = ephemeral)")
    p.add_argument("--ws-port", type=int, default=None, help="WebSocket port")
    p.add_argument("--no-ws", action="store_true")
    p.add_argument("--records", default="runs/sessions.jsonl")
    p.add_argument("--metrics", default=None, help="metrics JSONL to serve as telemetry")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="verify logged episodes re-simulate exactly")
    _add_config_args(p)
    p.add_argument("--records", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("pilot", help="serve the browser UI plus a WebSocket session port")
    _add_config_args(p)
    p.add_argument("--ws-port", type=int, default=None)
    p.add_argument("--http-port", type=int, default=8000)
    p.add_argument("--ui-dir", default="frontend/dist")
    p.add_argument("--records", default="runs/sessions.jsonl")
    p.add_argument("--metrics", default=None)
    p.set_defaults(func=cmd_pilot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
