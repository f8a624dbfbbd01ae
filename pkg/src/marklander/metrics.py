"""Training metrics: windowed line-delimited records plus the Q-max probe."""

from __future__ import annotations

import json
from dataclasses import dataclass


class MetricsError(Exception):
    pass


RETURN_CEILING = 1.0  # max terminal reward; living costs only lower the return


class MetricsLog:
    """Append-only log of per-window training records.

    One record per frame window: frame, episode, return (mean over episodes
    completed in the window), loss, qmax (window max), epsilon, partition
    sizes, texture id.  Optionally streams each record to a JSONL file so a
    service can tail it live.
    """

    def __init__(self, window: int = 250, live_path=None, fingerprint: str = ""):
        self.window = window
        self.fingerprint = fingerprint
        self.records: list[dict] = []
        self.episode_returns: list[tuple[int, float]] = []  # (episode index, return)
        self._live = open(live_path, "a", buffering=1) if live_path else None
        self._losses: list[float] = []
        self._qmax: float | None = None
        self._window_returns: list[float] = []

    def log_step(self, loss: float | None, qmax: float | None) -> None:
        if loss is not None:
            self._losses.append(loss)
        if qmax is not None:
            self._qmax = qmax if self._qmax is None else max(self._qmax, qmax)

    def log_episode(self, episode: int, undiscounted_return: float) -> None:
        self.episode_returns.append((episode, undiscounted_return))
        self._window_returns.append(undiscounted_return)

    def flush_window(self, frame: int, episode: int, epsilon: float,
                     partitions: tuple[int, ...], texture: str) -> dict:
        record = {
            "frame": frame,
            "episode": episode,
            "return": (sum(self._window_returns) / len(self._window_returns)
                       if self._window_returns else None),
            "loss": sum(self._losses) / len(self._losses) if self._losses else None,
            "qmax": self._qmax,
            "epsilon": epsilon,
            "partitions": list(partitions),
            "texture": texture,
            "fingerprint": self.fingerprint,
        }
        self.records.append(record)
        if self._live is not None:
            self._live.write(json.dumps(record) + "\n")
        self._losses = []
        self._qmax = None
        self._window_returns = []
        return record

    def close(self) -> None:
        if self._live is not None:
            self._live.close()
            self._live = None

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for record in self.records:
                fh.write(json.dumps(record) + "\n")

    @classmethod
    def load(cls, path) -> "MetricsLog":
        log = cls()
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    log.records.append(json.loads(line))
        return log


def qmax_overestimation_probe(log: MetricsLog, ceiling: float = RETURN_CEILING) -> dict:
    """Peak and trajectory of logged Q-max against the analytic return ceiling.

    Flags every window whose Q-max exceeds the ceiling; an empty flag list
    means utilities stayed below the maximum attainable return.
    """
    if not log.records:
        raise MetricsError("metrics log is empty")
    trajectory = [(r["frame"], r["qmax"]) for r in log.records if r.get("qmax") is not None]
    flags = [frame for frame, q in trajectory if q > ceiling]
    peak = max((q for _, q in trajectory), default=None)
    return {"ceiling": ceiling, "peak": peak, "flags": flags, "trajectory": trajectory}
