"""Circular LBP codes and grid-concatenated uniform-pattern histograms."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from maskbench.imaging import GrayImage

_SNAP = 1e-9


@dataclass(frozen=True)
class LbpConfig:
    radius: int = 8
    neighbors: int = 24
    grid_x: int = 4
    grid_y: int = 4
    uniform_mapping: bool = True
    normalization: str = "L1"

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("radius must be >= 1")
        if not 4 <= self.neighbors <= 32:
            raise ValueError("neighbors must lie in [4, 32]")
        if self.grid_x < 1 or self.grid_y < 1:
            raise ValueError("grid counts must be >= 1")
        if self.normalization not in ("none", "L1"):
            raise ValueError(f"normalization must be 'none' or 'L1', got {self.normalization!r}")
        if not self.uniform_mapping and self.neighbors > 16:
            raise ValueError("uniform mapping is mandatory for more than 16 neighbors")

    @property
    def bins(self) -> int:
        P = self.neighbors
        return P * (P - 1) + 3 if self.uniform_mapping else 2**P

    @property
    def dimension(self) -> int:
        return self.grid_x * self.grid_y * self.bins

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class ImageTooSmallError(ValueError):
    pass


@lru_cache(maxsize=None)
def neighbor_offsets(radius: int, neighbors: int) -> tuple[tuple[float, float], ...]:
    """(dx, dy) of each circular sample; near-integer offsets are snapped."""
    out = []
    for k in range(neighbors):
        theta = 2.0 * np.pi * k / neighbors
        dx = radius * np.cos(theta)
        dy = -radius * np.sin(theta)
        if abs(dx - round(dx)) < _SNAP:
            dx = float(round(dx))
        if abs(dy - round(dy)) < _SNAP:
            dy = float(round(dy))
        out.append((float(dx) + 0.0, float(dy) + 0.0))
    return tuple(out)


def _lerp_planes(pix: np.ndarray, ys: np.ndarray, xs: np.ndarray, dx: float, dy: float, ref):
    """Bilinear sample at (xs + dx, ys + dy) relative to ``ref``.

    Written as nested lerps of differences so that equal corners interpolate
    exactly and a constant gray shift cancels without rounding.
    """
    x0 = int(np.floor(dx))
    y0 = int(np.floor(dy))
    fx = dx - x0
    fy = dy - y0
    H, W = pix.shape
    a = pix[np.clip(ys + y0, 0, H - 1)[:, None], np.clip(xs + x0, 0, W - 1)[None, :]] - ref
    if fx == 0.0 and fy == 0.0:
        return a
    if fx != 0.0:
        b = pix[np.clip(ys + y0, 0, H - 1)[:, None], np.clip(xs + x0 + 1, 0, W - 1)[None, :]] - ref
        top = a + fx * (b - a)
    else:
        top = a
    if fy == 0.0:
        return top
    c = pix[np.clip(ys + y0 + 1, 0, H - 1)[:, None], np.clip(xs + x0, 0, W - 1)[None, :]] - ref
    if fx != 0.0:
        d = pix[np.clip(ys + y0 + 1, 0, H - 1)[:, None], np.clip(xs + x0 + 1, 0, W - 1)[None, :]] - ref
        bot = c + fx * (d - c)
    else:
        bot = c
    return top + fy * (bot - top)


def _check_point(img: GrayImage, cx: int, cy: int, cfg: LbpConfig):
    R = cfg.radius
    if not (R <= cx < img.width - R and R <= cy < img.height - R):
        raise IndexError(f"({cx}, {cy}) is not at least {R} pixels from every border")


def sample_neighbor(img: GrayImage, cx: int, cy: int, k: int, cfg: LbpConfig) -> float:
    """Bilinearly interpolated intensity of neighbor ``k`` around ``(cx, cy)``."""
    _check_point(img, cx, cy, cfg)
    dx, dy = neighbor_offsets(cfg.radius, cfg.neighbors)[k]
    pix = img.pixels.astype(np.float64)
    v = _lerp_planes(pix, np.array([cy]), np.array([cx]), dx, dy, 0.0)
    return float(v[0, 0])


def lbp_code_at(img: GrayImage, cx: int, cy: int, cfg: LbpConfig) -> int:
    _check_point(img, cx, cy, cfg)
    pix = img.pixels.astype(np.float64)
    center = pix[cy, cx]
    code = 0
    for k, (dx, dy) in enumerate(neighbor_offsets(cfg.radius, cfg.neighbors)):
        diff = _lerp_planes(pix, np.array([cy]), np.array([cx]), dx, dy, center)[0, 0]
        if diff >= 0:
            code |= 1 << k
    return code


def lbp_codes(img: GrayImage, cfg: LbpConfig) -> np.ndarray:
    """LBP code of every valid interior pixel, shape ``(H - 2R, W - 2R)``."""
    R = cfg.radius
    h, w = img.height - 2 * R, img.width - 2 * R
    if h < 1 or w < 1:
        raise ImageTooSmallError(f"{img.width}x{img.height} image has no pixels at radius {R}")
    pix = img.pixels.astype(np.float64)
    ys = np.arange(R, img.height - R)
    xs = np.arange(R, img.width - R)
    center = pix[R : img.height - R, R : img.width - R]
    codes = np.zeros((h, w), dtype=np.int64)
    for k, (dx, dy) in enumerate(neighbor_offsets(R, cfg.neighbors)):
        diff = _lerp_planes(pix, ys, xs, dx, dy, center)
        codes |= (diff >= 0).astype(np.int64) << k
    return codes


def _rotl1(code, P: int):
    mask = (1 << P) - 1
    return ((code << 1) | (code >> (P - 1))) & mask


def transitions(code, P: int):
    """Number of circular 0/1 transitions in a P-bit code."""
    if isinstance(code, np.ndarray):
        x = (code ^ _rotl1(code, P)).astype(np.uint64)
        return np.bitwise_count(x).astype(np.int64)
    return bin(code ^ _rotl1(code, P)).count("1")


@lru_cache(maxsize=None)
def uniform_codes(P: int) -> np.ndarray:
    """The P(P-1)+2 codes with at most two transitions, ascending."""
    full = (1 << P) - 1
    codes = {0, full}
    for run in range(1, P):
        block = (1 << run) - 1
        for rot in range(P):
            codes.add(((block << rot) | (block >> (P - rot))) & full)
    arr = np.array(sorted(codes), dtype=np.int64)
    assert len(arr) == P * (P - 1) + 2
    return arr


def uniform_map(code, P: int):
    """Histogram bin of an LBP code; all non-uniform codes share the last bin."""
    table = uniform_codes(P)
    nonuniform_bin = P * (P - 1) + 2
    if isinstance(code, np.ndarray):
        idx = np.searchsorted(table, code)
        return np.where(transitions(code, P) <= 2, idx, nonuniform_bin)
    if transitions(code, P) <= 2:
        return int(np.searchsorted(table, code))
    return nonuniform_bin


def cell_bounds(length: int, cells: int) -> list[tuple[int, int]]:
    base = length // cells
    return [(i * base, length if i == cells - 1 else (i + 1) * base) for i in range(cells)]


def extract_features(img: GrayImage, cfg: LbpConfig = LbpConfig()) -> np.ndarray:
    """Concatenated per-cell LBP histograms, cells in row-major order."""
    R = cfg.radius
    vw, vh = img.width - 2 * R, img.height - 2 * R
    if vw < cfg.grid_x or vh < cfg.grid_y:
        raise ImageTooSmallError(
            f"{img.width}x{img.height} image leaves a {max(vw, 0)}x{max(vh, 0)} valid region, "
            f"too small for a {cfg.grid_x}x{cfg.grid_y} grid at radius {R}"
        )
    codes = lbp_codes(img, cfg)
    bins = uniform_map(codes, cfg.neighbors) if cfg.uniform_mapping else codes
    nb = cfg.bins
    out = np.empty(cfg.dimension, dtype=np.float64)
    pos = 0
    for y0, y1 in cell_bounds(vh, cfg.grid_y):
        for x0, x1 in cell_bounds(vw, cfg.grid_x):
            hist = np.bincount(bins[y0:y1, x0:x1].ravel(), minlength=nb).astype(np.float64)
            if cfg.normalization == "L1":
                total = hist.sum()
                if total > 0:
                    hist /= total
            out[pos : pos + nb] = hist
            pos += nb
    return out


def extract_matrix(images, cfg: LbpConfig = LbpConfig(), jobs: int = 1) -> np.ndarray:
    images = list(images)
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(jobs) as ex:
            rows = list(ex.map(lambda im: extract_features(im, cfg), images))
    else:
        rows = [extract_features(im, cfg) for im in images]
    if not rows:
        return np.zeros((0, cfg.dimension))
    return np.vstack(rows)


def features_csv(records, matrix: np.ndarray) -> str:
    """One row per record: subject, index, mask_state, then the feature values."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subject", "index", "mask_state"] + [f"f{i}" for i in range(matrix.shape[1])])
    for rec, row in zip(records, matrix):
        w.writerow([rec.subject, rec.index, rec.mask_state.value] + [repr(float(v)) for v in row])
    return buf.getvalue()
