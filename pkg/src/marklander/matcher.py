"""Normalized cross-correlation marker detector and the scripted agent that
plays the landing MDPs from its detections.

This is the template-matching stand-in baseline: it slides rescaled copies of
the clean marker pattern over the frame and reports the best zero-normalized
correlation peak.  A threshold gate turns the peak into a found/not-found
decision, which is exactly the brittleness the corruption tests probe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraSpec
from .env import Action, Phase, WorldSpec
from .textures import MarkerSpec


@dataclass(frozen=True)
class Detection:
    found: bool
    row: float
    col: float
    score: float
    scale: int  # template side in pixels
    ncc: float = 0.0
    ring_margin: float = 0.0


# Ring-signature decode: like a fiducial bit check, every sampled angle must
# show the bright ring strictly above both dark rings.  Grime locally inverts
# the polarity, so the pass fraction collapses on dusted markers while clean
# ones decode everywhere.  Constants calibrated on the corruption-vs-score
# curve before freezing the 0.7 threshold default.
RING_SAMPLE_ANGLES = 16
RING_BIT_MARGIN = 0.45
RING_PASS_LO = 0.55
RING_PASS_SPAN = 0.35
# sample radii (fractions of the half side): dark core, bright ring, dark ring
RING_RADII = (0.1, 0.39, 0.7)


def _bilinear_at(frame: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    h, w = frame.shape
    r0 = np.clip(np.floor(rows), 0, h - 1).astype(int)
    c0 = np.clip(np.floor(cols), 0, w - 1).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = np.clip(rows - r0, 0.0, 1.0)
    fc = np.clip(cols - c0, 0.0, 1.0)
    return (frame[r0, c0] * (1 - fr) * (1 - fc) + frame[r0, c1] * (1 - fr) * fc
            + frame[r1, c0] * fr * (1 - fc) + frame[r1, c1] * fr * fc)


def _ring_decode_fraction(frame: np.ndarray, row: float, col: float,
                          size: float) -> float:
    """Fraction of sampled angles whose ring ordering decodes correctly."""
    half = size / 2.0
    angles = np.linspace(0.0, 2.0 * np.pi, RING_SAMPLE_ANGLES, endpoint=False)
    ca, sa = np.cos(angles), np.sin(angles)
    r_in, r_bright, r_out = (r * half for r in RING_RADII)
    inner = _bilinear_at(frame, row + r_in * sa, col + r_in * ca)
    bright = _bilinear_at(frame, row + r_bright * sa, col + r_bright * ca)
    outer = _bilinear_at(frame, row + r_out * sa, col + r_out * ca)
    ok = (bright - inner >= RING_BIT_MARGIN) & (bright - outer >= RING_BIT_MARGIN)
    return float(ok.mean())


def _confidence(ncc: float, decode_fraction: float) -> float:
    validity = np.clip((decode_fraction - RING_PASS_LO) / RING_PASS_SPAN, 0.0, 1.0)
    return float(np.sqrt(np.clip(ncc, 0.0, 1.0)) * validity)


def resize_bilinear(grid: np.ndarray, size: int) -> np.ndarray:
    """Plain bilinear resample of a square grid to size x size."""
    n = grid.shape[0]
    t = (np.arange(size) + 0.5) * (n / size) - 0.5
    t = np.clip(t, 0.0, n - 1.0)
    i0 = np.floor(t).astype(int)
    i1 = np.minimum(i0 + 1, n - 1)
    f = t - i0
    top = grid[np.ix_(i0, i0)] * np.outer(1 - f, 1 - f) + grid[np.ix_(i0, i1)] * np.outer(1 - f, f)
    bot = grid[np.ix_(i1, i0)] * np.outer(f, 1 - f) + grid[np.ix_(i1, i1)] * np.outer(f, f)
    return top + bot


def ncc_scores(frame: np.ndarray, template: np.ndarray) -> np.ndarray:
    """Zero-normalized cross correlation of a template at every position.

    Windows with (near) zero variance score 0, which handles all-constant
    frames without dividing by zero.
    """
    t = template - template.mean()
    t_energy = float((t * t).sum())
    if t_energy < 1e-12:
        return np.zeros((frame.shape[0] - template.shape[0] + 1,
                         frame.shape[1] - template.shape[1] + 1))
    k = template.shape[0]
    wins = np.lib.stride_tricks.sliding_window_view(frame, (k, k))
    corr = np.einsum("ijkl,kl->ij", wins, t)
    wsum = wins.sum(axis=(-1, -2))
    wsq = np.einsum("ijkl,ijkl->ij", wins, wins)
    var = wsq - wsum * wsum / (k * k)
    var = np.maximum(var, 0.0)
    den = np.sqrt(var * t_energy)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(den > 1e-9, corr / np.maximum(den, 1e-12), 0.0)
    return scores


def template_sizes(camera: CameraSpec, marker: MarkerSpec, altitudes) -> list[int]:
    """Apparent marker side in pixels for each altitude, clipped to the frame."""
    sizes = set()
    for z in altitudes:
        side = int(round(camera.focal * marker.side_length / z))
        sizes.add(int(np.clip(side, 3, camera.resolution - 2)))
    return sorted(sizes)


def template_match_detect(frame: np.ndarray, marker: MarkerSpec, threshold: float,
                          sizes: list[int] | None = None,
                          camera: CameraSpec | None = None,
                          altitudes=None) -> Detection:
    """Best NCC peak over a pyramid of template scales.

    found is True iff the peak score reaches the threshold; the reported
    pixel is the window center at the peak.
    """
    if sizes is None:
        if camera is None or altitudes is None:
            raise ValueError("pass template sizes or (camera, altitudes)")
        sizes = template_sizes(camera, marker, altitudes)
    frame = np.asarray(frame, dtype=np.float64)
    best = Detection(found=False, row=0.0, col=0.0, score=-1.0, scale=0)
    for size in sizes:
        if size >= min(frame.shape):
            continue
        template = resize_bilinear(marker.pattern.astype(np.float64), size)
        scores = ncc_scores(frame, template)
        peak = np.unravel_index(int(np.argmax(scores)), scores.shape)
        ncc = float(scores[peak])
        row = peak[0] + (size - 1) / 2.0
        col = peak[1] + (size - 1) / 2.0
        decode = _ring_decode_fraction(frame, row, col, size)
        score = _confidence(ncc, decode)
        if score > best.score:
            best = Detection(found=score >= threshold, row=row, col=col,
                             score=score, scale=size, ncc=ncc, ring_margin=decode)
    return best


# The tracker runs on its own camera feed, independent of the policy
# observation size (the tracker it stands in for had a full-resolution
# pipeline of its own).
BASELINE_CAMERA = CameraSpec(resolution=128, field_of_view=90.0, supersample=2)

# square spiral used when the marker is not detected: grows the sweep radius
_SPIRAL_TURNS = (Action.FORWARD, Action.RIGHT, Action.BACKWARD, Action.LEFT)


class TemplateTrackerAgent:
    """Plays a phase by steering toward the NCC detection.

    Knows the camera intrinsics and its own altitude (like the tracker it
    stands in for, which had a pose estimate); moves along the dominant image
    offset, fires the trigger / descends when centered, and walks an
    expanding square spiral while the marker is not found.
    """

    def __init__(self, marker: MarkerSpec, camera: CameraSpec, world: WorldSpec,
                 phase: Phase, threshold: float = 0.7, center_tolerance: float = 0.6):
        self.marker = marker
        self.camera = camera
        self.world = world
        self.phase = phase
        self.threshold = threshold
        self.center_tolerance = center_tolerance
        self._spiral_step = 0

    def reset(self) -> None:
        self._spiral_step = 0

    def _spiral_action(self) -> Action:
        # leg lengths 1,1,2,2,3,3,... over the four turn directions
        step = self._spiral_step
        self._spiral_step += 1
        leg = 0
        length = 1
        remaining = step
        while True:
            span = length
            if remaining < span:
                return _SPIRAL_TURNS[leg % 4]
            remaining -= span
            leg += 1
            if leg % 2 == 0:
                length += 1

    def act(self, frame: np.ndarray, altitude: float) -> Action:
        detection = template_match_detect(
            frame, self.marker, self.threshold,
            sizes=template_sizes(self.camera, self.marker, [altitude]))
        if not detection.found:
            return self._spiral_action()
        self._spiral_step = 0
        half = (self.camera.resolution - 1) / 2.0
        u = detection.col - half
        v = detection.row - half
        z = altitude
        f = self.camera.focal
        off_forward = -v * z / f  # marker ahead shows above the center
        off_left = -u * z / f
        if self.phase is Phase.DETECTION:
            tol = self.world.detection_target_half * self.center_tolerance
            centered_action = Action.TRIGGER
        else:
            tol = self.world.descent_target_half * self.center_tolerance
            centered_action = Action.DESCEND
        if max(abs(off_forward), abs(off_left)) <= tol:
            return centered_action
        if abs(off_forward) >= abs(off_left):
            return Action.FORWARD if off_forward > 0 else Action.BACKWARD
        return Action.LEFT if off_left > 0 else Action.RIGHT
