"""Software-rendered downward camera over the textured ground plane.

Pinhole model: a ground point at planar offset d from the drone maps to a
pixel offset u = f * d / z from the image center, with f = (res/2)/tan(fov/2).
Image axes follow the body frame: body-forward is up in the image,
body-right is right.  Rendering is pure given (state, texture, marker,
camera, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import DroneState, WorldSpec, _snapped_trig
from .textures import MarkerSpec, Texture


class RenderError(Exception):
    pass


@dataclass(frozen=True)
class CameraSpec:
    resolution: int = 84
    field_of_view: float = 90.0  # vertical, degrees
    tilt_jitter_sigma: float = 0.0  # radians; 0 disables jitter
    supersample: int = 2  # sub-rays per pixel edge

    def __post_init__(self):
        if not 0.0 < self.field_of_view < 180.0:
            raise RenderError("field of view must be in (0, 180) degrees")
        if self.resolution < 2 or self.supersample < 1:
            raise RenderError("bad camera geometry")

    @property
    def focal(self) -> float:
        return (self.resolution / 2.0) / math.tan(math.radians(self.field_of_view) / 2.0)


@dataclass(frozen=True)
class Observation:
    frame: np.ndarray  # (res, res) float32 in [0, 1]
    acquisition_step: int


def project(bx: float, by: float, z: float, camera: CameraSpec):
    """Body-frame ground offset (forward, left) -> pixel offset (u right, v down)."""
    f = camera.focal
    return (-f * by / z, -f * bx / z)


def unproject(u, v, z: float, camera: CameraSpec):
    """Pixel offset from image center -> body-frame ground offset (forward, left)."""
    f = camera.focal
    return (-v * z / f, -u * z / f)


def pixel_of(u, v, camera: CameraSpec):
    """Center-relative (u, v) to (row, col) in pixel-index coordinates."""
    half = (camera.resolution - 1) / 2.0
    return (v + half, u + half)


def _mirror_fold(idx: np.ndarray, n: int) -> np.ndarray:
    """Mirror-repeat addressing: reflect indices into [0, n)."""
    m = np.mod(idx, 2 * n)
    return np.where(m < n, m, 2 * n - 1 - m)


def _bilinear_mirror(grid: np.ndarray, ty: np.ndarray, tx: np.ndarray) -> np.ndarray:
    n = grid.shape[0]
    y0 = np.floor(ty).astype(np.int64)
    x0 = np.floor(tx).astype(np.int64)
    fy = ty - y0
    fx = tx - x0
    y0f, y1f = _mirror_fold(y0, n), _mirror_fold(y0 + 1, n)
    x0f, x1f = _mirror_fold(x0, n), _mirror_fold(x0 + 1, n)
    g00 = grid[y0f, x0f]
    g01 = grid[y0f, x1f]
    g10 = grid[y1f, x0f]
    g11 = grid[y1f, x1f]
    return (g00 * (1 - fy) * (1 - fx) + g01 * (1 - fy) * fx
            + g10 * fy * (1 - fx) + g11 * fy * fx)


def _bilinear_clamp(grid: np.ndarray, ty: np.ndarray, tx: np.ndarray) -> np.ndarray:
    n = grid.shape[0]
    y0 = np.clip(np.floor(ty), 0, n - 1).astype(np.int64)
    x0 = np.clip(np.floor(tx), 0, n - 1).astype(np.int64)
    y1 = np.minimum(y0 + 1, n - 1)
    x1 = np.minimum(x0 + 1, n - 1)
    fy = np.clip(ty - y0, 0.0, 1.0)
    fx = np.clip(tx - x0, 0.0, 1.0)
    g00 = grid[y0, x0]
    g01 = grid[y0, x1]
    g10 = grid[y1, x0]
    g11 = grid[y1, x1]
    return (g00 * (1 - fy) * (1 - fx) + g01 * (1 - fy) * fx
            + g10 * fy * (1 - fx) + g11 * fy * fx)


def ground_color(wx: np.ndarray, wy: np.ndarray, world: WorldSpec,
                 texture: Texture, marker: MarkerSpec | None) -> np.ndarray:
    """Ground-plane intensity at world points: texture with the marker composited."""
    tx = wx / texture.world_scale
    ty = wy / texture.world_scale
    values = _bilinear_mirror(texture.pixels, ty, tx)
    if marker is not None:
        mx, my = world.marker_position
        half = marker.side_length / 2.0
        rel_x = wx - (mx - half)
        rel_y = wy - (my - half)
        inside = ((rel_x >= 0) & (rel_x <= marker.side_length)
                  & (rel_y >= 0) & (rel_y <= marker.side_length))
        if np.any(inside):
            p = marker.pattern.shape[0]
            pu = rel_x[inside] / marker.side_length * p - 0.5
            pv = rel_y[inside] / marker.side_length * p - 0.5
            values = values.copy() if not values.flags.writeable else values
            values[inside] = _bilinear_clamp(marker.pattern, pv, pu)
    return values


def render_frame(state: DroneState, world: WorldSpec, texture: Texture,
                 marker: MarkerSpec | None, camera: CameraSpec,
                 rng_seed: int = 0) -> Observation:
    """Render one grayscale frame from the drone's downward camera."""
    z = state.altitude
    if z <= 0:
        raise RenderError("cannot render at non-positive altitude")
    res, ss = camera.resolution, camera.supersample
    f = camera.focal
    half = (res - 1) / 2.0
    # sub-sample centers in center-relative pixel units
    coords = (np.arange(res * ss) + 0.5) / ss - 0.5 - half
    u = coords[None, :]
    v = coords[:, None]
    if camera.tilt_jitter_sigma > 0.0:
        rng = np.random.default_rng(rng_seed)
        ax, ay = rng.normal(0.0, camera.tilt_jitter_sigma, size=2)
        dx, dy, dz = _tilt_rays(u / f, v / f, ax, ay)
        gu = z * dx / dz
        gv = z * dy / dz
    else:
        gu = np.broadcast_to(u * (z / f), (res * ss, res * ss))
        gv = np.broadcast_to(v * (z / f), (res * ss, res * ss))
    # image-frame ground offsets to body frame (x forward, y left)
    bx = -gv
    by = -gu
    c, s = _snapped_trig(state.yaw)
    wx = state.x + c * bx - s * by
    wy = state.y + s * bx + c * by
    values = ground_color(wx, wy, world, texture, marker)
    frame = values.reshape(res, ss, res, ss).mean(axis=(1, 3))
    return Observation(frame=frame.astype(np.float32), acquisition_step=state.step_count)


def _tilt_rays(dx, dy, ax: float, ay: float):
    """Rotate downward-looking rays (dx, dy, 1) by small tilts about x then y."""
    ca, sa = math.cos(ax), math.sin(ax)
    cb, sb = math.cos(ay), math.sin(ay)
    # about x-axis
    dy1 = ca * dy - sa
    dz1 = sa * dy + ca
    # about y-axis
    dx2 = cb * dx + sb * dz1
    dz2 = -sb * dx + cb * dz1
    return dx2, dy1, dz2


def marker_in_view(state: DroneState, world: WorldSpec, camera: CameraSpec) -> bool:
    """True when the marker center projects inside the frame."""
    mx, my = world.marker_position
    c, s = _snapped_trig(state.yaw)
    ox, oy = mx - state.x, my - state.y
    bx = c * ox + s * oy
    by = -s * ox + c * oy
    u, v = project(bx, by, state.altitude, camera)
    half = camera.resolution / 2.0
    return abs(u) <= half and abs(v) <= half
