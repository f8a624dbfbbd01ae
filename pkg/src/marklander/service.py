"""Socket service for pilot sessions and telemetry.

One JSON message per line (TCP) or per WebSocket text frame; both transports
drive the same session core.  Every session owns an isolated environment, so
concurrent sessions never share state; completed episodes are appended to the
records file with agent id "human".
"""

from __future__ import annotations

import base64
import json
import socketserver
import threading
from pathlib import Path

import numpy as np

from .agent import EpisodeRunner
from .config import AppConfig
from .env import Action, LandingEnv, Phase, PHASE_ACTIONS
from .records import append_records, record_from_rollout
from .textures import Texture, compose_mosaic, corrupt_marker, default_marker, texture_pool


class ServiceError(Exception):
    pass


def _texture_for(cfg: AppConfig, suite: str, seed: int) -> Texture:
    pool_seeds = cfg.test_seeds() if suite in ("uniform", "mosaic", "corrupted") \
        else cfg.train_seeds()
    pool = texture_pool(pool_seeds, size=cfg.textures.size,
                        world_scale=cfg.textures.world_scale)
    rng = np.random.default_rng(seed)
    if suite == "mosaic":
        picks = rng.integers(0, len(pool), size=cfg.bench.mosaic_count)
        return compose_mosaic([pool[p] for p in picks],
                              (cfg.bench.mosaic_grid, cfg.bench.mosaic_grid), seed=seed)
    return pool[int(rng.integers(len(pool)))]


class SessionCore:
    """Transport-independent protocol handler for one pilot session."""

    def __init__(self, cfg: AppConfig, records_path, metrics_path=None,
                 session_id: int = 0, record_sink=None):
        self.cfg = cfg
        self.records_path = records_path
        self.metrics_path = metrics_path
        self.session_id = session_id
        self.record_sink = record_sink  # called with each finished EpisodeRecord
        self.name = f"session-{session_id}"
        self.runner: EpisodeRunner | None = None
        self.env: LandingEnv | None = None
        self.phase: Phase | None = None
        self.trace = []
        self.world_id = ""
        self.seed = 0
        self.practice = False
        self.seq = 0
        self.closed = False

    # -- message handling ---------------------------------------------------

    def handle_line(self, line: str) -> list[dict]:
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as err:
            return [self._error("bad_json", str(err))]
        if not isinstance(msg, dict) or "type" not in msg:
            return [self._error("bad_message", "messages are objects with a type field")]
        handler = getattr(self, f"_on_{msg['type']}", None)
        if handler is None:
            return [self._error("unknown_type", f"unknown message type {msg['type']!r}")]
        try:
            return handler(msg)
        except ServiceError as err:
            return [self._error("protocol", str(err))]

    def _error(self, code: str, message: str) -> dict:
        return {"type": "error", "code": code, "message": message}

    def _state_msg(self) -> dict:
        msg = {"type": "state", "phase": self.phase.value if self.phase else None,
               "step": self.env.state.step_count if self.env and self.env.state else 0,
               "budget": self._budget(), "terminal": self.env.terminal if self.env else True}
        if self.cfg.service.show_pose and self.env and self.env.state:
            s = self.env.state
            msg["pose"] = [s.x, s.y, s.altitude, s.yaw]
        return msg

    def _budget(self) -> int | None:
        if self.env is None or self.env.state is None or self.phase is None:
            return None
        world = self.env.world
        limit = world.detection_step_limit if self.phase is Phase.DETECTION \
            else world.descent_step_limit
        return max(0, limit - self.env.state.step_count)

    def _frame_msg(self) -> dict:
        frame = self.runner.stack.frames[-1]
        self.seq += 1
        return {"type": "frame", "seq": self.seq, "width": int(frame.shape[1]),
                "height": int(frame.shape[0]),
                "pixels": base64.b64encode(frame.tobytes()).decode()}

    def _on_hello(self, msg: dict) -> list[dict]:
        self.name = str(msg.get("name", self.name))
        return [self._state_msg() if self.env else
                {"type": "state", "phase": None, "step": 0, "budget": None,
                 "terminal": True}]

    def _on_reset(self, msg: dict) -> list[dict]:
        phase_name = msg.get("phase", "detection")
        try:
            self.phase = Phase(phase_name)
        except ValueError:
            return [self._error("bad_phase", f"unknown phase {phase_name!r}")]
        if self.phase not in (Phase.DETECTION, Phase.DESCENT):
            return [self._error("bad_phase", f"cannot pilot phase {phase_name!r}")]
        suite = msg.get("suite", "uniform")
        self.seed = int(msg["seed"]) if "seed" in msg else \
            int(np.random.default_rng().integers(2 ** 31))
        self.practice = bool(msg.get("practice", False))
        texture = _texture_for(self.cfg, suite, self.seed)
        self.world_id = texture.id
        world = self.cfg.world_spec()
        marker = default_marker(world.marker_side)
        if suite == "corrupted":
            marker = corrupt_marker(marker, self.cfg.bench.corruption_fraction, self.seed)
        self.env = LandingEnv(world, self.cfg.noise_spec(), exploring_start=False)
        self.runner = EpisodeRunner(self.env, world, self.cfg.camera_spec(), marker)
        self.runner.begin(self.phase, self.seed, texture)
        self.trace = []
        return [self._state_msg(), self._frame_msg()]

    def _on_action(self, msg: dict) -> list[dict]:
        if self.env is None or self.runner is None:
            return [self._error("no_episode", "send reset before actions")]
        if self.env.terminal:
            return [self._error("episode_over", "episode finished; send reset")]
        name = msg.get("name", "")
        try:
            action = Action(name)
        except ValueError:
            return [self._error("bad_action", f"unknown action {name!r}")]
        if action not in PHASE_ACTIONS[self.phase]:
            return [self._error("illegal_action",
                                f"action {name!r} not available in phase {self.phase.value}")]
        _, outcome = self.runner.step(action)
        state = self.env.state
        self.trace.append((action, outcome, state))
        replies = [{"type": "step_result", "reward": outcome.reward,
                    "terminal": outcome.terminal, "reason": outcome.reason.value},
                   self._frame_msg(), self._state_msg()]
        if outcome.terminal:
            replies.append({"type": "episode_summary", "outcome": outcome.reason.value,
                            "steps": state.step_count,
                            "return": self.runner.episode_return})
            self._write_record()
        return replies

    def _write_record(self) -> None:
        record = record_from_rollout(self.cfg, self.phase, self.world_id,
                                     "human-practice" if self.practice else "human",
                                     self.seed, self.trace)
        if self.record_sink is not None:
            self.record_sink(record)
        if self.records_path is not None:
            append_records(self.records_path, [record])

    def _on_telemetry(self, msg: dict) -> list[dict]:
        if self.metrics_path is None or not Path(self.metrics_path).exists():
            return [self._error("no_telemetry", "no metrics log configured")]
        since = int(msg.get("since", -1))
        out = []
        with open(self.metrics_path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if rec.get("frame", 0) > since:
                    out.append({"type": "metrics", "frame": rec.get("frame"),
                                "return": rec.get("return"), "loss": rec.get("loss"),
                                "qmax": rec.get("qmax"), "epsilon": rec.get("epsilon")})
        return out

    def _on_bye(self, msg: dict) -> list[dict]:
        self.closed = True
        return []


class PilotService:
    """Accepts sessions over TCP (line-delimited) and WebSocket transports."""

    def __init__(self, cfg: AppConfig, records_path=None, metrics_path=None):
        self.cfg = cfg
        self.records_path = records_path
        self.metrics_path = metrics_path
        self._counter = 0
        self._active = 0
        self._lock = threading.Lock()
        self._records_lock = threading.Lock()
        self._tcp_server = None
        self._ws_server = None
        self._threads: list[threading.Thread] = []

    def _record_sink(self, record) -> None:
        # sessions share one log file; serialize appends so lines never interleave
        if self.records_path is None:
            return
        with self._records_lock:
            append_records(self.records_path, [record])

    def _new_session(self) -> SessionCore:
        with self._lock:
            if self._active >= self.cfg.service.max_sessions:
                raise ServiceError("session limit reached")
            self._counter += 1
            self._active += 1
            return SessionCore(self.cfg, None, self.metrics_path,
                               session_id=self._counter,
                               record_sink=self._record_sink)

    def _end_session(self) -> None:
        with self._lock:
            self._active -= 1

    # -- TCP ------------------------------------------------------------------

    def start_tcp(self, host: str, port: int) -> int:
        service = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                try:
                    session = service._new_session()
                except ServiceError as err:
                    self.wfile.write((json.dumps(
                        {"type": "error", "code": "busy", "message": str(err)}) + "\n").encode())
                    return
                try:
                    for raw in self.rfile:
                        line = raw.decode("utf-8", errors="replace").strip()
                        if not line:
                            continue
                        for reply in session.handle_line(line):
                            self.wfile.write((json.dumps(reply) + "\n").encode())
                        if session.closed:
                            break
                except (BrokenPipeError, ConnectionResetError):
                    pass
                finally:
                    service._end_session()

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._tcp_server = Server((host, port), Handler)
        thread = threading.Thread(target=self._tcp_server.serve_forever, daemon=True)
        thread.start()
        self._threads.append(thread)
        return self._tcp_server.server_address[1]

    # -- WebSocket --------------------------------------------------------------

    def start_ws(self, host: str, port: int) -> int:
        from websockets.sync.server import serve as ws_serve

        service = self

        def handler(conn):
            try:
                session = service._new_session()
            except ServiceError as err:
                conn.send(json.dumps({"type": "error", "code": "busy",
                                      "message": str(err)}))
                return
            try:
                for raw in conn:
                    for reply in session.handle_line(raw):
                        conn.send(json.dumps(reply))
                    if session.closed:
                        break
            finally:
                service._end_session()

        self._ws_server = ws_serve(handler, host, port)
        thread = threading.Thread(target=self._ws_server.serve_forever, daemon=True)
        thread.start()
        self._threads.append(thread)
        return self._ws_server.socket.getsockname()[1]

    def shutdown(self) -> None:
        if self._tcp_server is not None:
            self._tcp_server.shutdown()
            self._tcp_server.server_close()
        if self._ws_server is not None:
            self._ws_server.shutdown()
