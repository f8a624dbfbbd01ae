"""Configuration tree, profiles, strict file loading, and fingerprints.

A config is a nested dataclass tree.  Loading a YAML file overlays values
onto a named profile; any key that does not match a field is rejected so an
experiment's provenance stays trustworthy.  Every output artifact embeds
fingerprint(config).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .camera import CameraSpec
from .env import NoiseSpec, WorldSpec
from .neural import NetworkGeometry


class ConfigError(Exception):
    pass


@dataclass
class WorldConfig:
    world_extent: float = 100.0
    marker_x: float = 0.0
    marker_y: float = 0.0
    marker_side: float = 1.5
    detection_altitude: float = 20.0
    detection_spawn_half: float = 7.5
    detection_target_half: float = 1.5
    descent_spawn_alt_min: float = 2.0
    descent_target_half: float = 0.75
    descent_target_alt: float = 1.5
    descent_failure_altitude: float = 1.5
    detection_step_limit: int = 20
    descent_step_limit: int = 40


@dataclass
class CameraConfig:
    resolution: int = 84
    field_of_view: float = 90.0
    supersample: int = 2


@dataclass
class NoiseConfig:
    enabled: bool = False
    position_sigma: float = 0.05
    tilt_sigma: float = 0.015


@dataclass
class TextureConfig:
    size: int = 256
    world_scale: float = 0.25
    train_seed_lo: int = 0
    train_seed_hi: int = 10      # 7 families x 10 seeds = 70 training textures
    test_seed_lo: int = 100
    test_seed_hi: int = 103      # 7 families x 3 seeds = 21 held-out textures
    descent_train_subset: int = 20
    single_texture: str = "asphalt:0"


@dataclass
class ReplayConfig:
    detection_capacity: int = 20_000
    positive_capacity: int = 10_000
    negative_capacity: int = 10_000
    neutral_capacity: int = 20_000
    positive_fraction: float = 0.25
    negative_fraction: float = 0.25
    neutral_fraction: float = 0.5
    augment_positive: bool = True
    detection_partitioned: bool = False


@dataclass
class NetworkConfig:
    conv1_channels: int = 32
    conv2_channels: int = 64
    conv3_channels: int = 64
    dense_units: int = 512


@dataclass
class TrainingConfig:
    gamma: float = 0.99
    batch_size: int = 32
    learning_rate: float = 2.5e-4
    rmsprop_decay: float = 0.95
    rmsprop_epsilon: float = 1e-6
    detection_sync_period: int = 10_000
    descent_sync_period: int = 30_000
    detection_frames: int = 650_000
    descent_frames: int = 650_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_decay_frames: int = 500_000
    descend_bias: float = 0.5
    detection_prefill: int = 400_000
    prefill_neutral: int = 1_000_000
    prefill_negative: int = 500_000
    prefill_positive: int = 62_000
    prefill_budget_frames: int = 4_000_000
    texture_swap_period: int = 50
    detection_target_mode: str = "vanilla"
    descent_target_mode: str = "double"
    exploring_start: bool = True
    metrics_window: int = 250


@dataclass
class BenchConfig:
    episodes: int = 200
    episodes_per_world: int = 5
    altitudes: tuple = (20.0, 15.0, 10.0)
    corruption_fraction: float = 0.6
    ncc_threshold: float = 0.7
    mosaic_grid: int = 5
    mosaic_count: int = 25


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 7860
    ws_port: int = 7861
    show_pose: bool = False
    max_sessions: int = 16


@dataclass
class AppConfig:
    profile: str = "full"
    world: WorldConfig = field(default_factory=WorldConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    textures: TextureConfig = field(default_factory=TextureConfig)
    replay: ReplayConfig = field(default_factory=ReplayConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def world_spec(self) -> WorldSpec:
        w = self.world
        return WorldSpec(
            world_extent=w.world_extent,
            marker_position=(w.marker_x, w.marker_y),
            marker_side=w.marker_side,
            detection_altitude=w.detection_altitude,
            detection_spawn_half=w.detection_spawn_half,
            detection_target_half=w.detection_target_half,
            descent_spawn_alt_min=w.descent_spawn_alt_min,
            descent_spawn_alt_max=w.detection_altitude,
            descent_target_half=w.descent_target_half,
            descent_target_alt=w.descent_target_alt,
            descent_failure_altitude=w.descent_failure_altitude,
            detection_step_limit=w.detection_step_limit,
            descent_step_limit=w.descent_step_limit,
        )

    def camera_spec(self) -> CameraSpec:
        tilt = self.noise.tilt_sigma if self.noise.enabled else 0.0
        return CameraSpec(resolution=self.camera.resolution,
                          field_of_view=self.camera.field_of_view,
                          tilt_jitter_sigma=tilt,
                          supersample=self.camera.supersample)

    def noise_spec(self) -> NoiseSpec:
        n = self.noise
        return NoiseSpec(enabled=n.enabled, position_sigma=n.position_sigma,
                         tilt_sigma=n.tilt_sigma)

    def network_geometry(self, n_actions: int = 5) -> NetworkGeometry:
        n = self.network
        return NetworkGeometry(
            input_hw=self.camera.resolution,
            input_frames=4,
            conv=((n.conv1_channels, 8, 2), (n.conv2_channels, 4, 2), (n.conv3_channels, 3, 1)),
            dense=(n.dense_units,),
            n_actions=n_actions,
        )

    def train_seeds(self) -> range:
        return range(self.textures.train_seed_lo, self.textures.train_seed_hi)

    def test_seeds(self) -> range:
        return range(self.textures.test_seed_lo, self.textures.test_seed_hi)


def full_profile() -> AppConfig:
    return AppConfig(profile="full")


def tiny_profile() -> AppConfig:
    """Desk-scale substitute for the full setup: 20x20 m world, altitude 8,
    32x32 observations, reduced channel counts, and budgets that finish on a
    desktop processor."""
    cfg = AppConfig(profile="tiny")
    cfg.world = WorldConfig(
        world_extent=20.0,
        marker_side=2.0,
        detection_altitude=8.0,
        detection_spawn_half=3.0,
        detection_target_half=1.0,
        descent_spawn_alt_min=2.0,
        descent_target_half=1.0,
        descent_target_alt=1.5,
        descent_failure_altitude=1.5,
    )
    cfg.camera = CameraConfig(resolution=32)
    cfg.textures = TextureConfig(size=192, world_scale=0.2)
    cfg.network = NetworkConfig(conv1_channels=16, conv2_channels=32,
                                conv3_channels=32, dense_units=256)
    cfg.replay = ReplayConfig(detection_capacity=20_000, positive_capacity=20_000,
                              negative_capacity=10_000, neutral_capacity=20_000)
    cfg.training = TrainingConfig(
        detection_sync_period=2_000,
        descent_sync_period=2_000,
        detection_frames=150_000,
        descent_frames=200_000,
        epsilon_decay_frames=60_000,
        detection_prefill=20_000,
        prefill_neutral=10_000,
        prefill_negative=2_000,
        prefill_positive=500,
        prefill_budget_frames=400_000,
    )
    cfg.bench = BenchConfig(altitudes=(8.0, 6.0, 5.0))
    return cfg


PROFILES = {"full": full_profile, "tiny": tiny_profile}


def make_profile(name: str) -> AppConfig:
    try:
        return PROFILES[name]()
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None


def _overlay(obj, data: dict, path: str) -> None:
    fields = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in fields:
            raise ConfigError(f"unknown config key: {where}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where} expects a mapping")
            _overlay(current, value, where)
        else:
            if isinstance(current, tuple) and isinstance(value, list):
                value = tuple(value)
            if isinstance(current, bool) and not isinstance(value, bool):
                raise ConfigError(f"config key {where} expects a boolean")
            if isinstance(current, (int, float)) and isinstance(value, str):
                raise ConfigError(f"config key {where} expects a number")
            setattr(obj, key, value)


def load_config(path=None, profile: str | None = None) -> AppConfig:
    """Build a config from a profile plus optional strict YAML overrides.

    The file may set `profile:` itself; an explicit argument wins.  Unknown
    keys raise ConfigError naming the offending dotted path.
    """
    data = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a mapping")
    name = profile or data.pop("profile", None) or "full"
    if profile is not None:
        data.pop("profile", None)
    cfg = make_profile(name)
    _overlay(cfg, data, "")
    return cfg
