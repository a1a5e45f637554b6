"""Subject-labeled corpora, the five train/test splits, and a procedural fixture corpus."""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from maskbench.imaging import GrayImage, PgmError, load_pgm, save_pgm


class MaskState(enum.Enum):
    UNMASKED = "Unmasked"
    MASKED = "Masked"


class CorpusError(Exception):
    """Corpus directory is missing, incomplete or inconsistent."""


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class ImageRecord:
    subject: int
    index: int
    mask_state: MaskState
    image: GrayImage

    @property
    def key(self) -> tuple[int, int]:
        return self.subject, self.index


@dataclass(frozen=True)
class Corpus:
    records: tuple[ImageRecord, ...]
    subject_count: int
    images_per_subject: int
    _by_key: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        by_key = {}
        shape = None
        for rec in self.records:
            if rec.key in by_key:
                raise CorpusError(f"duplicate record s{rec.subject}/{rec.index}")
            by_key[rec.key] = rec
            if shape is None:
                shape = rec.image.shape
            elif rec.image.shape != shape:
                raise CorpusError(
                    f"inconsistent dimensions at s{rec.subject}/{rec.index}: "
                    f"{rec.image.shape} vs {shape}"
                )
        for s in range(1, self.subject_count + 1):
            for i in range(1, self.images_per_subject + 1):
                if (s, i) not in by_key:
                    raise CorpusError(f"missing image s{s}/{i}")
        if len(by_key) != self.subject_count * self.images_per_subject:
            raise CorpusError("corpus holds records outside the subject/index grid")
        object.__setattr__(self, "_by_key", by_key)

    def __len__(self):
        return len(self.records)

    def get(self, subject: int, index: int) -> ImageRecord:
        return self._by_key[(subject, index)]

    @property
    def subjects(self) -> list[int]:
        return list(range(1, self.subject_count + 1))

    def digest(self) -> str:
        """SHA-256 over the canonical record order and raster bytes."""
        h = hashlib.sha256()
        for s in self.subjects:
            for i in range(1, self.images_per_subject + 1):
                rec = self.get(s, i)
                h.update(f"{s}/{i}/{rec.mask_state.value}/{rec.image.width}x{rec.image.height};".encode())
                h.update(rec.image.pixels.tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    records: tuple[ImageRecord, ...]

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.subject for r in self.records], dtype=np.int64)


@dataclass(frozen=True)
class SplitSet:
    training_um: DatasetSplit
    training_hm: DatasetSplit
    training_m: DatasetSplit
    testing_um: DatasetSplit
    testing_m: DatasetSplit

    def as_dict(self) -> dict[str, DatasetSplit]:
        return {
            s.name: s
            for s in (self.training_um, self.training_hm, self.training_m, self.testing_um, self.testing_m)
        }

    @property
    def training(self) -> dict[str, DatasetSplit]:
        return {"UM": self.training_um, "HM": self.training_hm, "M": self.training_m}

    @property
    def testing(self) -> dict[str, DatasetSplit]:
        return {"UM": self.testing_um, "M": self.testing_m}


_SUBJECT_DIR = re.compile(r"^s(\d+)$")
_IMAGE_FILE = re.compile(r"^(\d+)\.pgm$")


def load_corpus(root, mask_state: MaskState = MaskState.UNMASKED) -> Corpus:
    """Read a ``s<subject>/<index>.pgm`` tree.

    Subjects and per-subject image count are taken from the tree itself; every
    subject must have images ``1..P`` for the same ``P``.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus not found: {root}")
    subject_dirs = {}
    for child in root.iterdir():
        m = _SUBJECT_DIR.match(child.name)
        if m and child.is_dir():
            subject_dirs[int(m.group(1))] = child
    if not subject_dirs:
        raise CorpusError(f"corpus not found: no s<k> directories under {root}")
    n_subjects = max(subject_dirs)
    for s in range(1, n_subjects + 1):
        if s not in subject_dirs:
            raise CorpusError(f"missing subject directory s{s}")

    indices = {}
    for s, d in subject_dirs.items():
        indices[s] = sorted(
            int(m.group(1)) for m in (_IMAGE_FILE.match(p.name) for p in d.iterdir()) if m
        )
    per_subject = max((max(v) for v in indices.values() if v), default=0)
    if per_subject == 0:
        raise CorpusError(f"no images found under {root}")

    records = []
    shape = None
    for s in range(1, n_subjects + 1):
        present = set(indices[s])
        for i in range(1, per_subject + 1):
            if i not in present:
                raise CorpusError(f"missing file s{s}/{i}")
            path = subject_dirs[s] / f"{i}.pgm"
            try:
                img = load_pgm(path)
            except (OSError, PgmError) as exc:
                raise CorpusError(f"unreadable image s{s}/{i}: {exc}") from exc
            if shape is None:
                shape = img.shape
            elif img.shape != shape:
                raise CorpusError(
                    f"inconsistent dimensions at s{s}/{i}: {img.shape} vs {shape}"
                )
            records.append(ImageRecord(s, i, mask_state, img))
    return Corpus(tuple(records), n_subjects, per_subject)


def save_corpus(corpus: Corpus, root) -> list[Path]:
    root = Path(root)
    paths = []
    for rec in corpus.records:
        d = root / f"s{rec.subject}"
        d.mkdir(parents=True, exist_ok=True)
        p = d / f"{rec.index}.pgm"
        save_pgm(rec.image, p)
        paths.append(p)
    return paths


def build_splits(unmasked: Corpus, masked: Corpus, holdout_index: int | None = None) -> SplitSet:
    """Derive the five train/test splits.

    Per subject, ``holdout_index`` (default: the last image) is the test image.
    The half-masked split takes masked renditions of the lowest remaining
    indices and unmasked originals of the next ones, ``P - 2`` in total (4 + 4
    for ``P = 10``); the last remaining index is dropped.
    """
    P = unmasked.images_per_subject
    if holdout_index is None:
        holdout_index = P
    if not 1 <= holdout_index <= P:
        raise SplitError(f"holdout_index {holdout_index} out of range 1..{P}")
    if (masked.subject_count, masked.images_per_subject) != (unmasked.subject_count, P):
        raise SplitError(
            "masked and unmasked corpora disagree on subjects/indices: "
            f"{masked.subject_count}x{masked.images_per_subject} vs {unmasked.subject_count}x{P}"
        )

    remaining = [i for i in range(1, P + 1) if i != holdout_index]
    # P - 2 half-masked images per subject; balanced whenever P is even
    n_hm = max(len(remaining) - 1, 0)
    n_hm_masked = (n_hm + 1) // 2
    hm_masked, hm_unmasked = remaining[:n_hm_masked], remaining[n_hm_masked:n_hm]

    tr_um, tr_hm, tr_m, te_um, te_m = [], [], [], [], []
    for s in unmasked.subjects:
        te_um.append(unmasked.get(s, holdout_index))
        te_m.append(masked.get(s, holdout_index))
        for i in remaining:
            tr_um.append(unmasked.get(s, i))
            tr_m.append(masked.get(s, i))
        tr_hm.extend(masked.get(s, i) for i in hm_masked)
        tr_hm.extend(unmasked.get(s, i) for i in hm_unmasked)

    return SplitSet(
        training_um=DatasetSplit("Training_UM", tuple(tr_um)),
        training_hm=DatasetSplit("Training_HM", tuple(tr_hm)),
        training_m=DatasetSplit("Training_M", tuple(tr_m)),
        testing_um=DatasetSplit("Testing_UM", tuple(te_um)),
        testing_m=DatasetSplit("Testing_M", tuple(te_m)),
    )


def split_manifest_csv(splits: SplitSet, unmasked_root=None, masked_root=None) -> str:
    """CSV rows ``split_name,subject,index,mask_state,path`` for every split record."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["split_name", "subject", "index", "mask_state", "path"])
    for split in splits.as_dict().values():
        for rec in split:
            root = masked_root if rec.mask_state is MaskState.MASKED else unmasked_root
            rel = f"s{rec.subject}/{rec.index}.pgm"
            path = str(Path(root) / rel) if root is not None else rel
            w.writerow([split.name, rec.subject, rec.index, rec.mask_state.value, path])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Procedural fixture faces
# ---------------------------------------------------------------------------


def _ellipse(xx, yy, cx, cy, rx, ry):
    return ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0


def _subject_params(rng: np.random.Generator) -> dict:
    return {
        "head_rx": rng.uniform(0.36, 0.44),
        "head_ry": rng.uniform(0.40, 0.46),
        "skin": rng.uniform(120, 190),
        "background": rng.uniform(20, 90),
        "tex_freq": rng.uniform(0.25, 1.2, size=2),
        "tex_angle": rng.uniform(0, np.pi, size=2),
        "tex_amp": rng.uniform(6, 16, size=2),
        "eye_dx": rng.uniform(0.15, 0.24),
        "eye_y": rng.uniform(0.34, 0.42),
        "eye_r": rng.uniform(0.04, 0.08),
        "eye_level": rng.uniform(10, 70),
        "brow_gap": rng.uniform(0.05, 0.09),
        "mouth_y": rng.uniform(0.68, 0.78),
        "mouth_w": rng.uniform(0.12, 0.26),
        "mouth_h": rng.uniform(0.015, 0.04),
        "mouth_level": rng.uniform(30, 100),
        "nose_len": rng.uniform(0.06, 0.14),
    }


def _render_face(p: dict, width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    dx, dy = rng.uniform(-2.0, 2.0, size=2)
    gain = rng.uniform(0.9, 1.1)
    offset = rng.uniform(-10, 10)

    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    xs = xx - dx
    ys = yy - dy
    cx, cy = width / 2.0, height * 0.5

    img = np.full((height, width), p["background"]) + 10.0 * (yy / height)
    head = _ellipse(xs, ys, cx, cy, p["head_rx"] * width, p["head_ry"] * height)
    texture = np.zeros_like(img)
    for f, a, amp in zip(p["tex_freq"], p["tex_angle"], p["tex_amp"]):
        texture += amp * np.sin(f * (xs * np.cos(a) + ys * np.sin(a)))
    img[head] = p["skin"] + texture[head]

    ey = p["eye_y"] * height
    er = p["eye_r"] * width
    for side in (-1, 1):
        ex = cx + side * p["eye_dx"] * width
        img[_ellipse(xs, ys, ex, ey, er, er * 0.6)] = p["eye_level"]
        brow = _ellipse(xs, ys, ex, ey - p["brow_gap"] * height, er * 1.2, er * 0.25)
        img[brow] = p["eye_level"] * 0.8

    nose = (np.abs(xs - cx) <= 1.5) & (ys >= ey) & (ys <= ey + p["nose_len"] * height)
    img[nose] = p["skin"] * 0.7

    my = p["mouth_y"] * height
    mouth = (np.abs(xs - cx) <= p["mouth_w"] * width) & (np.abs(ys - my) <= max(1.0, p["mouth_h"] * height))
    img[mouth] = p["mouth_level"]

    img = gain * img + offset + rng.normal(0.0, 2.0, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_fixture_corpus(
    seed: int, subjects: int = 4, per_subject: int = 10, width: int = 92, height: int = 112
) -> Corpus:
    """Deterministic procedural faces standing in for a real corpus.

    Each subject gets its own head shape, skin texture, eye and mouth layout;
    each image perturbs position, contrast and noise from a stream keyed on
    ``(seed, subject, index)``.
    """
    if subjects <= 0 or per_subject <= 0 or width <= 0 or height <= 0:
        raise ValueError("fixture counts and dimensions must be positive")
    records = []
    for s in range(1, subjects + 1):
        params = _subject_params(np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, s]))
        for i in range(1, per_subject + 1):
            rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, s, i])
            pixels = _render_face(params, width, height, rng)
            records.append(ImageRecord(s, i, MaskState.UNMASKED, GrayImage.from_array(pixels)))
    return Corpus(tuple(records), subjects, per_subject)


def relabel(corpus: Corpus, mask_state: MaskState) -> Corpus:
    recs = tuple(replace(r, mask_state=mask_state) for r in corpus.records)
    return Corpus(recs, corpus.subject_count, corpus.images_per_subject)
