"""Synthetic structural x statistical texture dataset.

Nine joint classes: three structures (checkerboard, cross, stripes) times
three intensity laws (binomial over {64, 192}, uniform multinomial over
{64, 128, 192}, constant 128). Pixels off the structure are zero. Joint
class index is ``3 * structural + statistical``.
"""
from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

STRUCTURES = ("checkerboard", "cross", "stripes")
STATISTICS = ("binomial", "multinomial", "constant")
SPLITS = ("train", "val", "test")
PER_CLASS = 100
SPLIT_COUNTS = {"train": 70, "val": 10, "test": 20}
MANIFEST_HEADER = ("path", "structural", "statistical", "class", "split")


class DatasetFormatError(ValueError):
    pass


@dataclass
class SyntheticSample:
    pixels: np.ndarray  # (H, W) uint8
    structural: str
    statistical: str
    split: str

    @property
    def joint_class(self):
        return 3 * STRUCTURES.index(self.structural) + STATISTICS.index(self.statistical)

    def __eq__(self, other):
        return (isinstance(other, SyntheticSample)
                and self.pixels.dtype == other.pixels.dtype
                and np.array_equal(self.pixels, other.pixels)
                and (self.structural, self.statistical, self.split)
                == (other.structural, other.statistical, other.split))


@dataclass
class DatasetManifest:
    size: int
    seed: int
    entries: list  # (path, structural, statistical, class, split) tuples

    def class_counts(self):
        counts = {}
        for _, _, _, cls, split in self.entries:
            counts.setdefault(cls, {s: 0 for s in SPLITS})[split] += 1
        return counts


def structural_mask(kind, size):
    if size < 3:
        raise ValueError(f"mask size must be >= 3, got {size}")
    i, j = np.indices((size, size))
    if kind == "checkerboard":
        m = (i + j) % 2 == 0
    elif kind == "cross":
        m = (i == size // 2) | (j == size // 2)
    elif kind == "stripes":
        m = j % 2 == 0
    else:
        raise ValueError(f"unknown structure {kind!r}; expected one of {STRUCTURES}")
    return m.astype(np.uint8)


def sample_statistical(kind, count, rng):
    if kind == "binomial":
        return np.where(rng.random(count) < 0.5, 64, 192).astype(np.uint8)
    if kind == "multinomial":
        return np.array([64, 128, 192], dtype=np.uint8)[rng.integers(0, 3, count)]
    if kind == "constant":
        return np.full(count, 128, dtype=np.uint8)
    raise ValueError(f"unknown statistical law {kind!r}; expected one of {STATISTICS}")


def compose_image(mask, intensities):
    """Fill active mask cells in row-major order; everything else is 0."""
    mask = np.asarray(mask).astype(bool)
    intensities = np.asarray(intensities, dtype=np.uint8)
    if intensities.size != mask.sum():
        raise ValueError(f"{intensities.size} intensities for {int(mask.sum())} active cells")
    img = np.zeros(mask.shape, dtype=np.uint8)
    img[mask] = intensities
    return img


def derive_seed(*parts):
    """Stable 64-bit seed from arbitrary printable parts."""
    digest = hashlib.blake2b(":".join(map(str, parts)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def generate_dataset(size, seed):
    """900 samples (100 per class, 70/10/20 per class) and their manifest."""
    if size < 3:
        raise ValueError(f"image size must be >= 3, got {size}")
    samples, entries = [], []
    for s_idx, structure in enumerate(STRUCTURES):
        mask = structural_mask(structure, size)
        for t_idx, law in enumerate(STATISTICS):
            cls = 3 * s_idx + t_idx
            order = np.random.default_rng(derive_seed(seed, cls, "split")).permutation(PER_CLASS)
            split_of = np.empty(PER_CLASS, dtype=object)
            split_of[order[:70]] = "train"
            split_of[order[70:80]] = "val"
            split_of[order[80:]] = "test"
            for i in range(PER_CLASS):
                rng = np.random.default_rng(derive_seed(seed, cls, i))
                pixels = compose_image(mask, sample_statistical(law, int(mask.sum()), rng))
                samples.append(SyntheticSample(pixels, structure, law, split_of[i]))
                entries.append((f"images/c{cls}_{i:03d}.pgm", structure, law, cls, split_of[i]))
    return samples, DatasetManifest(size, seed, entries)


def encode_pgm(pixels):
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def decode_pgm(data, name="<pgm>"):
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos)
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DatasetFormatError(f"{name}: truncated PGM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace byte before raster
    if fields[0] != b"P5":
        raise DatasetFormatError(f"{name}: not a binary PGM (magic {fields[0]!r})")
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError as exc:
        raise DatasetFormatError(f"{name}: bad PGM header {fields}") from exc
    if maxval != 255:
        raise DatasetFormatError(f"{name}: maxval {maxval} unsupported (need 255)")
    raster = data[pos:pos + w * h]
    if len(raster) != w * h:
        raise DatasetFormatError(f"{name}: expected {w * h} pixel bytes, got {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def write_dataset(samples, manifest: DatasetManifest, out_dir):
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    for sample, entry in zip(samples, manifest.entries):
        (out_dir / entry[0]).write_bytes(encode_pgm(sample.pixels))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_HEADER)
    w.writerows(manifest.entries)
    (out_dir / "manifest.csv").write_text(buf.getvalue())
    (out_dir / "dataset.txt").write_text(f"size={manifest.size}\nseed={manifest.seed}\n")


def load_dataset(in_dir):
    in_dir = Path(in_dir)
    try:
        meta = dict(line.split("=", 1) for line in
                    (in_dir / "dataset.txt").read_text().split())
        size, seed = int(meta["size"]), int(meta["seed"])
        rows = list(csv.reader((in_dir / "manifest.csv").read_text().splitlines()))
    except (OSError, KeyError, ValueError) as exc:
        raise DatasetFormatError(f"cannot read dataset in {in_dir}: {exc}") from exc
    if not rows or tuple(rows[0]) != MANIFEST_HEADER:
        raise DatasetFormatError(f"manifest header must be {','.join(MANIFEST_HEADER)}")
    samples, entries = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 5:
            raise DatasetFormatError(f"manifest line {lineno}: expected 5 fields, got {len(row)}")
        path, structure, law, cls, split = row
        if structure not in STRUCTURES or law not in STATISTICS:
            raise DatasetFormatError(f"manifest line {lineno}: unknown label {structure}/{law}")
        if split not in SPLITS:
            raise DatasetFormatError(f"manifest line {lineno}: unknown split {split!r}")
        sample = SyntheticSample(decode_pgm((in_dir / path).read_bytes(), path),
                                 structure, law, split)
        if str(sample.joint_class) != cls:
            raise DatasetFormatError(f"manifest line {lineno}: class {cls} inconsistent "
                                     f"with {structure}/{law}")
        if sample.pixels.shape != (size, size):
            raise DatasetFormatError(f"{path}: {sample.pixels.shape} image in size-{size} dataset")
        samples.append(sample)
        entries.append((path, structure, law, int(cls), split))
    return samples, DatasetManifest(size, seed, entries)


LABEL_TARGETS = ("both", "statistical", "structural")


def to_arrays(samples, split, target="both"):
    """Images scaled to [0, 1] as (n, 1, H, W) float64 plus integer labels."""
    chosen = [s for s in samples if s.split == split]
    x = np.stack([s.pixels for s in chosen]).astype(np.float64)[:, None] / 255.0
    if target == "both":
        y = [s.joint_class for s in chosen]
    elif target == "statistical":
        y = [STATISTICS.index(s.statistical) for s in chosen]
    elif target == "structural":
        y = [STRUCTURES.index(s.structural) for s in chosen]
    else:
        raise ValueError(f"unknown label target {target!r}; expected one of {LABEL_TARGETS}")
    return x, np.asarray(y, dtype=np.int64)
