"""Synthetic mask overlay: six parametric templates on a jittered trapezoid."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from maskbench.dataset import Corpus, ImageRecord, MaskState
from maskbench.imaging import GrayImage

JITTER_MAX = 2


@dataclass(frozen=True)
class Uniform:
    level: int


@dataclass(frozen=True)
class VerticalStripes:
    level_a: int
    level_b: int
    period: int


@dataclass(frozen=True)
class Speckle:
    base_level: int
    amplitude: int


@dataclass(frozen=True)
class Gradient:
    top_level: int
    bottom_level: int


@dataclass(frozen=True)
class MaskTemplate:
    id: int
    fill: object
    top_fraction: float = 0.55
    bottom_fraction: float = 0.95
    top_width_fraction: float = 0.90
    bottom_width_fraction: float = 0.55

    def __post_init__(self):
        if not 1 <= self.id <= 6:
            raise ValueError(f"template id must be in [1, 6], got {self.id}")
        if not 0 < self.top_fraction < self.bottom_fraction <= 1:
            raise ValueError("need 0 < top_fraction < bottom_fraction <= 1")
        for w in (self.top_width_fraction, self.bottom_width_fraction):
            if not 0 < w <= 1:
                raise ValueError("width fractions must lie in (0, 1]")
        for level in _fill_levels(self.fill):
            if not 0 <= level <= 255:
                raise ValueError(f"fill level {level} outside [0, 255]")


@dataclass(frozen=True)
class MaskJitter:
    dx: int = 0
    dy: int = 0

    def __post_init__(self):
        if abs(self.dx) > JITTER_MAX or abs(self.dy) > JITTER_MAX:
            raise ValueError(f"jitter must lie in [-{JITTER_MAX}, {JITTER_MAX}]")


def _fill_levels(fill) -> tuple:
    if isinstance(fill, Uniform):
        return (fill.level,)
    if isinstance(fill, VerticalStripes):
        if fill.period < 2:
            raise ValueError("stripe period must be >= 2")
        return fill.level_a, fill.level_b
    if isinstance(fill, Speckle):
        return fill.base_level - fill.amplitude, fill.base_level + fill.amplitude
    if isinstance(fill, Gradient):
        return fill.top_level, fill.bottom_level
    raise TypeError(f"unknown fill {fill!r}")


_FILLS = (
    Uniform(200),
    Uniform(225),
    Uniform(60),
    VerticalStripes(180, 120, 4),
    Speckle(150, 30),
    Gradient(190, 110),
)


def default_templates(
    top_fraction: float = 0.55,
    bottom_fraction: float = 0.95,
    top_width_fraction: float = 0.90,
    bottom_width_fraction: float = 0.55,
) -> tuple[MaskTemplate, ...]:
    return tuple(
        MaskTemplate(i + 1, fill, top_fraction, bottom_fraction, top_width_fraction, bottom_width_fraction)
        for i, fill in enumerate(_FILLS)
    )


def trapezoid_vertices(width: int, height: int, t: MaskTemplate, j: MaskJitter) -> np.ndarray:
    """Corners (x, y) in continuous pixel coordinates, clockwise from top-left."""
    cx = width / 2.0 + j.dx
    top = t.top_fraction * height + j.dy
    bottom = t.bottom_fraction * height + j.dy
    ht = t.top_width_fraction * width / 2.0
    hb = t.bottom_width_fraction * width / 2.0
    return np.array(
        [[cx - ht, top], [cx + ht, top], [cx + hb, bottom], [cx - hb, bottom]], dtype=np.float64
    )


def mask_region(width: int, height: int, t: MaskTemplate, j: MaskJitter) -> np.ndarray:
    """Boolean ``(height, width)`` array of pixels whose centre lies in the trapezoid."""
    (x_tl, top), _, _, (_, bottom) = trapezoid_vertices(width, height, t, j)
    cx = width / 2.0 + j.dx
    ht = t.top_width_fraction * width / 2.0
    hb = t.bottom_width_fraction * width / 2.0
    yc = np.arange(height) + 0.5
    xc = np.arange(width) + 0.5
    inside_rows = (yc >= top) & (yc <= bottom)
    frac = (yc - top) / (bottom - top)
    half = ht + (hb - ht) * frac
    region = np.abs(xc[None, :] - cx) <= half[:, None]
    return region & inside_rows[:, None]


def _speckle_field(fill: Speckle, height: int, width: int) -> np.ndarray:
    # fixed texture anchored to image coordinates, so apply_mask stays pure
    rng = np.random.Generator(np.random.Philox(key=[0x6D61736B, fill.base_level * 1000 + fill.amplitude]))
    noise = rng.integers(-fill.amplitude, fill.amplitude + 1, size=(height, width))
    return fill.base_level + noise


def fill_values(fill, height: int, width: int, top: float, bottom: float) -> np.ndarray:
    if isinstance(fill, Uniform):
        return np.full((height, width), fill.level)
    if isinstance(fill, VerticalStripes):
        band = (np.arange(width) // (fill.period // 2)) % 2
        row = np.where(band == 0, fill.level_a, fill.level_b)
        return np.broadcast_to(row, (height, width))
    if isinstance(fill, Speckle):
        return _speckle_field(fill, height, width)
    if isinstance(fill, Gradient):
        frac = np.clip((np.arange(height) + 0.5 - top) / (bottom - top), 0.0, 1.0)
        col = np.rint(fill.top_level + (fill.bottom_level - fill.top_level) * frac)
        return np.broadcast_to(col[:, None], (height, width))
    raise TypeError(f"unknown fill {fill!r}")


def apply_mask(img: GrayImage, t: MaskTemplate, j: MaskJitter = MaskJitter()) -> GrayImage:
    region = mask_region(img.width, img.height, t, j)
    top = t.top_fraction * img.height + j.dy
    bottom = t.bottom_fraction * img.height + j.dy
    values = np.clip(fill_values(t.fill, img.height, img.width, top, bottom), 0, 255).astype(np.uint8)
    out = img.pixels.copy()
    out[region] = values[region]
    return GrayImage.from_array(out)


def record_stream(seed: int, subject: int, index: int) -> np.random.Generator:
    """Counter-based generator keyed on ``(seed, subject, index)``."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, subject, index])
    return np.random.Generator(np.random.Philox(ss))


def draw_mask(seed: int, subject: int, index: int) -> tuple[int, MaskJitter]:
    rng = record_stream(seed, subject, index)
    template_id = int(rng.integers(1, 7))
    dx, dy = (int(v) for v in rng.integers(-JITTER_MAX, JITTER_MAX + 1, size=2))
    return template_id, MaskJitter(dx, dy)


def mask_record(rec: ImageRecord, seed: int, templates) -> ImageRecord:
    tid, jitter = draw_mask(seed, rec.subject, rec.index)
    masked = apply_mask(rec.image, templates[tid - 1], jitter)
    return replace(rec, image=masked, mask_state=MaskState.MASKED)


def mask_corpus(c: Corpus, seed: int, templates=None, jobs: int = 1) -> Corpus:
    """Masked rendition of every record; output does not depend on ``jobs``."""
    if templates is None:
        templates = default_templates()
    if any(r.mask_state is not MaskState.UNMASKED for r in c.records):
        raise ValueError("mask_corpus expects an all-unmasked corpus")
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            recs = list(ex.map(lambda r: mask_record(r, seed, templates), c.records))
    else:
        recs = [mask_record(r, seed, templates) for r in c.records]
    return Corpus(tuple(recs), c.subject_count, c.images_per_subject)
