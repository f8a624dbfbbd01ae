"""Procedural ground textures, mosaics, and the landing marker.

Each texture family is a deterministic function of (family, seed), so a seed
range acts as a reusable texture library: train and test splits are simply
disjoint seed ranges.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image


class TextureError(Exception):
    pass


class Family(enum.Enum):
    ASPHALT = "asphalt"
    BRICK = "brick"
    GRASS = "grass"
    PAVEMENT = "pavement"
    SAND = "sand"
    SNOW = "snow"
    SOIL = "soil"
    MOSAIC = "mosaic"
    FROM_FILE = "file"


GENERATED_FAMILIES = (Family.ASPHALT, Family.BRICK, Family.GRASS, Family.PAVEMENT,
                      Family.SAND, Family.SNOW, Family.SOIL)


@dataclass(frozen=True)
class Texture:
    pixels: np.ndarray  # (N, N) float32 in [0, 1]
    world_scale: float  # meters per texel
    family: Family
    id: str

    def __post_init__(self):
        if self.world_scale <= 0:
            raise TextureError("world_scale must be positive")


@dataclass(frozen=True)
class MarkerSpec:
    pattern: np.ndarray  # (P, P) float32 in [0, 1]
    side_length: float = 1.5
    corruption_fraction: float = 0.0
    corruption_seed: int = 0


def _value_noise(size: int, cells: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth value noise in [0, 1] from a random lattice."""
    grid = rng.random((cells + 1, cells + 1))
    t = np.arange(size) * (cells / size)
    i0 = np.floor(t).astype(int)
    f = t - i0
    f = f * f * (3.0 - 2.0 * f)
    g00 = grid[np.ix_(i0, i0)]
    g01 = grid[np.ix_(i0, i0 + 1)]
    g10 = grid[np.ix_(i0 + 1, i0)]
    g11 = grid[np.ix_(i0 + 1, i0 + 1)]
    fy = f[:, None]
    fx = f[None, :]
    top = g00 * (1 - fx) + g01 * fx
    bot = g10 * (1 - fx) + g11 * fx
    return top * (1 - fy) + bot * fy


def _fractal(size: int, rng: np.random.Generator, base_cells: int = 4,
             octaves: int = 4, persistence: float = 0.55) -> np.ndarray:
    """Multi-octave value noise, renormalized to [0, 1]."""
    out = np.zeros((size, size))
    amp, total = 1.0, 0.0
    cells = base_cells
    for _ in range(octaves):
        out += amp * _value_noise(size, min(cells, size // 2), rng)
        total += amp
        amp *= persistence
        cells *= 2
    out /= total
    lo, hi = out.min(), out.max()
    return (out - lo) / (hi - lo + 1e-12)


def _tone(noise: np.ndarray, mean: float, contrast: float) -> np.ndarray:
    return np.clip(mean + contrast * (noise - 0.5), 0.0, 1.0)


def _gen_asphalt(size, rng):
    base = _tone(_fractal(size, rng, base_cells=16, octaves=3), 0.30, 0.18)
    speckle = rng.random((size, size)) < 0.01
    return np.where(speckle, np.minimum(base + 0.35, 1.0), base)


def _gen_grass(size, rng):
    fine = _fractal(size, rng, base_cells=32, octaves=3, persistence=0.7)
    patches = _fractal(size, rng, base_cells=4, octaves=2)
    return _tone(0.65 * fine + 0.35 * patches, 0.42, 0.30)


def _gen_sand(size, rng):
    warp = _fractal(size, rng, base_cells=4, octaves=2)
    y = np.arange(size)[:, None] / size
    ripples = 0.5 + 0.5 * np.sin(2 * np.pi * (6.0 * y + 1.5 * warp))
    grain = _fractal(size, rng, base_cells=32, octaves=2)
    return _tone(0.65 * ripples + 0.35 * grain, 0.66, 0.20)


def _gen_snow(size, rng):
    soft = _fractal(size, rng, base_cells=6, octaves=3)
    return _tone(soft, 0.86, 0.10)


def _gen_soil(size, rng):
    blotch = _fractal(size, rng, base_cells=8, octaves=4, persistence=0.6)
    return _tone(blotch, 0.38, 0.26)


def _gen_brick(size, rng):
    rows, cols = 8, 4  # bricks per texture edge
    bh, bw = size // rows, size // cols
    mortar = max(1, size // 128)
    yy = np.arange(size)[:, None]
    xx = np.arange(size)[None, :]
    row_idx = yy // bh
    offset = (row_idx % 2) * (bw // 2)
    col_idx = (xx + offset) // bw
    shade = rng.uniform(0.30, 0.50, (rows + 1, cols + 2))
    brick = shade[row_idx.clip(0, rows), col_idx.clip(0, cols + 1)]
    is_mortar = ((yy % bh) < mortar) | (((xx + offset) % bw) < mortar)
    grain = _fractal(size, rng, base_cells=32, octaves=2)
    out = np.where(is_mortar, 0.62, brick) + 0.08 * (grain - 0.5)
    return np.clip(out, 0.0, 1.0)


def _gen_pavement(size, rng):
    slabs = 5
    sw = size // slabs
    mortar = max(1, size // 128)
    yy = np.arange(size)[:, None]
    xx = np.arange(size)[None, :]
    tone = rng.uniform(0.45, 0.62, (slabs + 1, slabs + 1))
    slab = tone[(yy // sw).clip(0, slabs), (xx // sw).clip(0, slabs)]
    groove = ((yy % sw) < mortar) | ((xx % sw) < mortar)
    grain = _fractal(size, rng, base_cells=16, octaves=3)
    out = np.where(groove, 0.30, slab) + 0.10 * (grain - 0.5)
    return np.clip(out, 0.0, 1.0)


_GENERATORS = {
    Family.ASPHALT: _gen_asphalt,
    Family.BRICK: _gen_brick,
    Family.GRASS: _gen_grass,
    Family.PAVEMENT: _gen_pavement,
    Family.SAND: _gen_sand,
    Family.SNOW: _gen_snow,
    Family.SOIL: _gen_soil,
}


def generate_texture(family: Family, seed: int, size: int = 256,
                     world_scale: float = 0.25) -> Texture:
    """Deterministic procedural texture for (family, seed)."""
    gen = _GENERATORS.get(family)
    if gen is None:
        raise TextureError(f"no generator for texture family {family!r}")
    rng = np.random.default_rng([_family_code(family), seed])
    pixels = gen(size, rng).astype(np.float32)
    return Texture(pixels=pixels, world_scale=world_scale, family=family,
                   id=f"{family.value}:{seed}")


def _family_code(family: Family) -> int:
    return list(Family).index(family)


def compose_mosaic(textures: list[Texture], grid: tuple[int, int] = (5, 5),
                   seed: int = 0) -> Texture:
    """Tile crops of the input textures into one patchwork texture.

    Tiles are sampled with replacement; each tile copies the matching crop of
    the chosen source, so a 1x1 grid reproduces a single input.
    """
    if not textures:
        raise TextureError("mosaic needs at least one texture")
    rng = np.random.default_rng(seed)
    base = textures[0]
    size = base.pixels.shape[0]
    gy, gx = grid
    out = np.empty_like(base.pixels)
    ys = np.array_split(np.arange(size), gy)
    xs = np.array_split(np.arange(size), gx)
    picks = rng.integers(0, len(textures), size=(gy, gx))
    for i, yseg in enumerate(ys):
        for j, xseg in enumerate(xs):
            src = textures[picks[i, j]].pixels
            out[np.ix_(yseg, xseg)] = src[np.ix_(yseg, xseg)]
    return Texture(pixels=out, world_scale=base.world_scale, family=Family.MOSAIC,
                   id=f"mosaic:{seed}")


# bullseye ring boundaries as fractions of the half side; the matcher's ring
# signature check reads the same layout
MARKER_RINGS = (0.25, 0.55, 0.85)
MARKER_DARK = 0.05
MARKER_BRIGHT = 0.95


def make_marker_pattern(size: int = 64) -> np.ndarray:
    """High-contrast concentric-ring bullseye in [0, 1].

    Circular rings keep the pattern rotation invariant, so a single template
    per scale suffices for matching and the policies see the same marker at
    any yaw.
    """
    half = (size - 1) / 2.0
    yy = (np.arange(size) - half)[:, None]
    xx = (np.arange(size) - half)[None, :]
    d = np.sqrt(yy * yy + xx * xx) / (half + 0.5)  # radial distance in [0, ~1.4]
    r1, r2, r3 = MARKER_RINGS
    pattern = np.where(d < r1, MARKER_DARK,
                       np.where(d < r2, MARKER_BRIGHT,
                                np.where(d < r3, MARKER_DARK, MARKER_BRIGHT)))
    return pattern.astype(np.float32)


def default_marker(side_length: float = 1.5) -> MarkerSpec:
    return MarkerSpec(pattern=make_marker_pattern(), side_length=side_length)


def corrupt_marker(marker: MarkerSpec, fraction: float, seed: int,
                   opacity: float = 0.6) -> MarkerSpec:
    """Blend a dust-like noise layer over `fraction` of the marker's area.

    The mask comes from thresholded smooth noise, so the corruption forms
    blotches rather than salt-and-pepper. fraction 0 returns the pattern
    unmodified (bit for bit).
    """
    if not 0.0 <= fraction <= 1.0:
        raise TextureError("corruption fraction must be in [0, 1]")
    if fraction == 0.0:
        return replace(marker, corruption_fraction=0.0, corruption_seed=seed)
    rng = np.random.default_rng(seed)
    size = marker.pattern.shape[0]
    field = _fractal(size, rng, base_cells=6, octaves=3)
    threshold = np.quantile(field, fraction)
    mask = field <= threshold
    # grime with both soot and chalk patches, coarse enough to survive the
    # camera blur: locally inverts ring polarity, which is what actually
    # breaks a ring/bit decoder
    speckle = _fractal(size, rng, base_cells=8, octaves=1)
    dust = np.where(speckle > 0.5, 0.9, 0.1) + 0.1 * (speckle - 0.5)
    blended = np.where(mask, (1 - opacity) * marker.pattern + opacity * dust, marker.pattern)
    return replace(marker, pattern=np.clip(blended, 0.0, 1.0).astype(np.float32),
                   corruption_fraction=fraction, corruption_seed=seed)


def texture_pool(seeds, families=GENERATED_FAMILIES, size: int = 256,
                 world_scale: float = 0.25) -> list[Texture]:
    """One texture per (family, seed) pair, in a stable order."""
    return [generate_texture(f, s, size=size, world_scale=world_scale)
            for f in families for s in seeds]


def texture_from_png(path, world_scale: float = 0.25) -> Texture:
    """Load an 8-bit PNG as a grayscale texture (luminance for RGB inputs)."""
    img = Image.open(path)
    if img.mode not in ("L", "I;16"):
        img = img.convert("L")  # PIL uses the 0.299/0.587/0.114 luminance weights
    arr = np.asarray(img, dtype=np.float32)
    arr /= 65535.0 if arr.max() > 255 else 255.0
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise TextureError("texture PNG must be square grayscale")
    return Texture(pixels=np.clip(arr, 0.0, 1.0), world_scale=world_scale,
                   family=Family.FROM_FILE, id=f"file:{path}")


def marker_from_png(path, side_length: float = 1.5) -> MarkerSpec:
    tex = texture_from_png(path)
    return MarkerSpec(pattern=tex.pixels, side_length=side_length)


def save_png(pixels: np.ndarray, path) -> None:
    """Write a [0, 1] grayscale grid as an 8-bit PNG."""
    arr = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8), mode="L").save(path)
