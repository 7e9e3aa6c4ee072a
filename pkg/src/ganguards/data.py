"""Canonical image/latent containers, procedural datasets, and splits.

Images live in NHWC float32 arrays with values in [0, 1]; generators that
emit tanh-range pixels are rescaled at the module boundary. Image identity
(for disjointness checks and manifests) is the SHA-256 of the 8-bit
quantized pixel content, which is what survives a PNG round trip.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import PreconditionError

DEFAULT_RESOLUTION = 32


@dataclass
class ImageBatch:
    """A batch of square images with a provenance tag chain.

    ``provenance`` records which model produced the batch and which
    perturbations were applied, e.g. ``"target/ME/Oup-c:0.5"``.
    """

    pixels: np.ndarray
    provenance: str

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 4:
            raise PreconditionError(
                f"pixels must be rank-4 (count, h, w, c), got shape {self.pixels.shape}"
            )
        n, h, w, c = self.pixels.shape
        if n < 1:
            raise PreconditionError("image batch must contain at least one image")
        if h != w:
            raise PreconditionError(f"images must be square, got {h}x{w}")
        if c not in (1, 3):
            raise PreconditionError(f"channels must be 1 or 3, got {c}")
        if not self.provenance:
            raise PreconditionError("provenance must be non-empty")
        lo = float(self.pixels.min())
        hi = float(self.pixels.max())
        if lo < 0.0 or hi > 1.0:
            raise PreconditionError(f"pixel values outside [0, 1]: min={lo}, max={hi}")

    @property
    def count(self) -> int:
        return self.pixels.shape[0]

    @property
    def resolution(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[3]

    def tagged(self, tag: str) -> "ImageBatch":
        """Copy of this batch with ``tag`` appended to the provenance chain."""
        return ImageBatch(self.pixels, f"{self.provenance}/{tag}")

    def take(self, count: int) -> "ImageBatch":
        if count > self.count:
            raise PreconditionError(f"asked for {count} images, batch has {self.count}")
        return ImageBatch(self.pixels[:count], self.provenance)

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.rint(self.pixels * 255.0), 0, 255).astype(np.uint8)

    def content_hashes(self) -> list[str]:
        """Per-image identity: SHA-256 of shape header + quantized bytes."""
        q = self.to_uint8()
        header = np.array(q.shape[1:], dtype=np.int64).tobytes()
        return [hashlib.sha256(header + q[i].tobytes()).hexdigest() for i in range(self.count)]


@dataclass
class LatentBatch:
    """Latent codes drawn from a named prior; reproducible from the seed."""

    codes: np.ndarray
    prior: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.float32)
        if self.codes.ndim != 2:
            raise PreconditionError(f"codes must be rank-2, got shape {self.codes.shape}")
        if self.prior != "gaussian":
            raise PreconditionError(f"unknown prior {self.prior!r}")

    @property
    def count(self) -> int:
        return self.codes.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.codes.shape[1]


def sample_prior(count: int, latent_dim: int, seed: int) -> LatentBatch:
    """Standard-normal latent codes, bit-identical for equal seeds."""
    if count < 1:
        raise PreconditionError(f"count must be >= 1, got {count}")
    if latent_dim < 1:
        raise PreconditionError(f"latent_dim must be >= 1, got {latent_dim}")
    rng = np.random.default_rng(seed)
    codes = rng.standard_normal((count, latent_dim), dtype=np.float32)
    return LatentBatch(codes=codes, prior="gaussian", seed=seed)


# ---------------------------------------------------------------------------
# Procedural shape families
# ---------------------------------------------------------------------------

def _grid(size):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    return (yy + 0.5) / size, (xx + 0.5) / size


def _colorize(mask, color, channels):
    if channels == 1:
        return mask[..., None] * float(np.mean(color))
    return mask[..., None] * np.asarray(color, np.float32)[None, None, :]


def _blobs_image(rng, size, channels):
    yy, xx = _grid(size)
    img = np.zeros((size, size, channels), np.float32)
    for _ in range(int(rng.integers(2, 5))):
        cy, cx = rng.uniform(0.15, 0.85, 2)
        r = rng.uniform(0.08, 0.22)
        color = rng.uniform(0.3, 1.0, 3)
        bump = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * r * r))
        img += _colorize(bump, color, channels)
    return img


def _rings_image(rng, size, channels):
    yy, xx = _grid(size)
    img = np.zeros((size, size, channels), np.float32)
    for _ in range(int(rng.integers(1, 3))):
        cy, cx = rng.uniform(0.25, 0.75, 2)
        radius = rng.uniform(0.12, 0.35)
        width = rng.uniform(0.02, 0.06)
        color = rng.uniform(0.4, 1.0, 3)
        dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
        ring = np.exp(-((dist - radius) ** 2) / (2.0 * width * width))
        img += _colorize(ring, color, channels)
    return img


def _stripes_image(rng, size, channels):
    yy, xx = _grid(size)
    theta = rng.uniform(0.0, np.pi)
    freq = rng.uniform(2.0, 6.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    wave = 0.5 + 0.5 * np.sin(2.0 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
    c_lo = rng.uniform(0.0, 0.4, 3)
    c_hi = rng.uniform(0.6, 1.0, 3)
    if channels == 1:
        lo, hi = float(np.mean(c_lo)), float(np.mean(c_hi))
        return (lo + (hi - lo) * wave)[..., None]
    return c_lo[None, None, :] + (c_hi - c_lo)[None, None, :] * wave[..., None]


_FAMILIES = {
    "blobs": _blobs_image,
    "rings": _rings_image,
    "stripes": _stripes_image,
}
_ALIASES = {"multi-blob": "blobs", "blob": "blobs", "ring": "rings", "striped-texture": "stripes", "stripe": "stripes"}

FAMILY_NAMES = tuple(sorted(_FAMILIES))


def make_procedural_dataset(
    family: str,
    count: int,
    seed: int,
    size: int = DEFAULT_RESOLUTION,
    channels: int = 3,
) -> ImageBatch:
    """Deterministic procedural images from one of the built-in families.

    Shapes get randomized positions, colors, and scales per image; identical
    (family, count, seed, size, channels) gives bit-identical output.
    """
    name = _ALIASES.get(family, family)
    if name not in _FAMILIES:
        raise PreconditionError(f"unknown shape family {family!r}; known: {FAMILY_NAMES}")
    if count < 3 or count % 3 != 0:
        raise PreconditionError(f"count must be >= 3 and divisible by 3, got {count}")
    rng = np.random.default_rng(seed)
    draw = _FAMILIES[name]
    out = np.empty((count, size, size, channels), np.float32)
    for i in range(count):
        out[i] = np.clip(draw(rng, size, channels), 0.0, 1.0)
    return ImageBatch(out, provenance=f"procedural:{name}:{seed}")


# ---------------------------------------------------------------------------
# Three-way split
# ---------------------------------------------------------------------------

@dataclass
class DatasetSplit:
    """Three pairwise-disjoint, equally sized parts of one source dataset."""

    part_i: ImageBatch
    part_ii: ImageBatch
    part_iii: ImageBatch
    source_name: str

    def __post_init__(self):
        sizes = {self.part_i.count, self.part_ii.count, self.part_iii.count}
        if len(sizes) != 1:
            raise PreconditionError(f"parts must have equal sizes, got {sizes}")
        hashes = [set(p.content_hashes()) for p in self.parts()]
        for a in range(3):
            for b in range(a + 1, 3):
                common = hashes[a] & hashes[b]
                if common:
                    raise PreconditionError(
                        f"parts {a + 1} and {b + 1} share {len(common)} image(s)"
                    )

    def parts(self) -> tuple[ImageBatch, ImageBatch, ImageBatch]:
        return (self.part_i, self.part_ii, self.part_iii)


def split_three_way(data: ImageBatch, seed: int) -> DatasetSplit:
    """Random disjoint equal thirds; the permutation is a function of seed."""
    if data.count % 3 != 0:
        raise PreconditionError(f"count must be divisible by 3, got {data.count}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.count)
    third = data.count // 3
    parts = []
    for idx, roman in zip(range(3), ("I", "II", "III")):
        sel = np.sort(perm[idx * third:(idx + 1) * third])
        parts.append(ImageBatch(data.pixels[sel], f"{data.provenance}/part-{roman}"))
    return DatasetSplit(*parts, source_name=data.provenance)


# ---------------------------------------------------------------------------
# PNG folder I/O
# ---------------------------------------------------------------------------

def save_image_batch(batch: ImageBatch, directory) -> list[str]:
    """Write one PNG per image; returns the written file names."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    q = batch.to_uint8()
    names = []
    for i in range(batch.count):
        arr = q[i, :, :, 0] if batch.channels == 1 else q[i]
        name = f"{i:06d}.png"
        Image.fromarray(arr).save(directory / name)
        names.append(name)
    return names


def load_image_folder(directory, provenance: str | None = None) -> ImageBatch:
    """Read every PNG under ``directory`` (recursively), sorted by path."""
    directory = Path(directory)
    files = sorted(directory.rglob("*.png"), key=lambda p: str(p.relative_to(directory)))
    if not files:
        raise PreconditionError(f"no PNG files under {directory}")
    arrays = []
    for f in files:
        with Image.open(f) as im:
            arr = np.asarray(im.convert("RGB") if im.mode not in ("L",) else im)
        if arr.ndim == 2:
            arr = arr[..., None]
        arrays.append(arr.astype(np.float32) / 255.0)
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise PreconditionError(f"images under {directory} have mixed shapes: {shapes}")
    return ImageBatch(np.stack(arrays), provenance or f"folder:{directory.name}")


def save_dataset_split(split: DatasetSplit, directory, seed: int | None = None) -> Path:
    """Persist a split as three PNG directories plus a JSON manifest."""
    directory = Path(directory)
    manifest = {"source_name": split.source_name, "seed": seed, "counts": [], "content_hashes": {}}
    for part, roman in zip(split.parts(), ("I", "II", "III")):
        save_image_batch(part, directory / f"part-{roman}")
        manifest["counts"].append(part.count)
        manifest["content_hashes"][f"part-{roman}"] = part.content_hashes()
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_dataset_split(directory) -> DatasetSplit:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    parts = [
        load_image_folder(directory / f"part-{roman}", provenance=f"{manifest['source_name']}/part-{roman}")
        for roman in ("I", "II", "III")
    ]
    return DatasetSplit(*parts, source_name=manifest["source_name"])
