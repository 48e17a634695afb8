"""Raster I/O, palette mapping, tiling, and the synthetic desk corpus.

Rasters are binary netpbm files only (P6 color, P5 gray, maxval 255); label
maps travel as palette-encoded P6 images. A corpus directory holds
images/NNNN.ppm, labels/NNNN.ppm, and manifest.json.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .tensor import Tensor

IGNORE_LABEL = 255


class RasterError(ValueError):
    """Malformed raster file; message names the offending byte offset."""


# ---------------------------------------------------------------------------
# netpbm


def _parse_header(blob: bytes, magic: bytes, path) -> tuple[int, int, int]:
    if blob[:2] != magic:
        got = blob[:2]
        raise RasterError(f"{path}: unsupported format {got!r} at byte 0 (expected {magic!r})")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(blob):
            raise RasterError(f"{path}: truncated header at byte {pos}")
        ch = blob[pos:pos + 1]
        if ch in b" \t\r\n":
            pos += 1
        elif ch == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(blob) and blob[pos:pos + 1].isdigit():
                pos += 1
            fields.append(int(blob[start:pos]))
        else:
            raise RasterError(f"{path}: unexpected byte {ch!r} at offset {pos}")
    if pos >= len(blob) or blob[pos:pos + 1] not in b" \t\r\n":
        raise RasterError(f"{path}: missing whitespace after maxval at byte {pos}")
    pos += 1
    width, height, maxval = fields
    if maxval != 255:
        raise RasterError(f"{path}: maxval {maxval} unsupported (only 255)")
    return width, height, pos


def _read_netpbm(path, magic: bytes, channels: int) -> np.ndarray:
    blob = Path(path).read_bytes()
    width, height, pos = _parse_header(blob, magic, path)
    need = width * height * channels
    payload = blob[pos: pos + need]
    if len(payload) < need:
        raise RasterError(f"{path}: truncated payload at byte {pos + len(payload)} "
                          f"(need {need} bytes)")
    arr = np.frombuffer(payload, dtype=np.uint8)
    shape = (height, width, channels) if channels > 1 else (height, width)
    return arr.reshape(shape).copy()


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 file into an (H, W, 3) uint8 array."""
    return _read_netpbm(path, b"P6", 3)


def read_pgm(path) -> np.ndarray:
    """Read a binary P5 file into an (H, W) uint8 array."""
    return _read_netpbm(path, b"P5", 1)


def _write_netpbm(path, raster: np.ndarray, magic: bytes) -> None:
    raster = np.ascontiguousarray(raster, dtype=np.uint8)
    h, w = raster.shape[:2]
    header = magic + b"\n%d %d\n255\n" % (w, h)
    Path(path).write_bytes(header + raster.tobytes())


def write_ppm(path, raster: np.ndarray) -> None:
    if raster.ndim != 3 or raster.shape[2] != 3:
        raise RasterError("write_ppm expects an (H, W, 3) array")
    _write_netpbm(path, raster, b"P6")


def write_pgm(path, raster: np.ndarray) -> None:
    if raster.ndim != 2:
        raise RasterError("write_pgm expects an (H, W) array")
    _write_netpbm(path, raster, b"P5")


# ---------------------------------------------------------------------------
# palette


@dataclass(frozen=True)
class PaletteEntry:
    index: int
    rgb: tuple
    name: str


class Palette:
    """Bijective map between class indices and RGB colors."""

    def __init__(self, entries: Sequence[PaletteEntry]):
        colors = [e.rgb for e in entries]
        if len(set(colors)) != len(colors):
            raise RasterError("palette colors must be unique")
        self.entries = list(entries)
        self._by_color = {e.rgb: e.index for e in entries}

    def __len__(self):
        return len(self.entries)

    def colors(self) -> np.ndarray:
        return np.array([e.rgb for e in self.entries], dtype=np.uint8)

    def names(self) -> list:
        return [e.name for e in self.entries]

    def to_manifest(self) -> list:
        return [[e.index, list(e.rgb), e.name] for e in self.entries]

    @staticmethod
    def from_manifest(data) -> "Palette":
        return Palette([PaletteEntry(i, tuple(rgb), name) for i, rgb, name in data])

    def decode(self, raster: np.ndarray, strict: bool = True,
               ignore_label: int = IGNORE_LABEL) -> np.ndarray:
        """Map an RGB raster to a label map by exact color match."""
        h, w, _ = raster.shape
        labels = np.full((h, w), ignore_label, dtype=np.int64)
        matched = np.zeros((h, w), dtype=bool)
        for e in self.entries:
            hit = np.all(raster == np.array(e.rgb, dtype=np.uint8), axis=-1)
            labels[hit] = e.index
            matched |= hit
        if strict and not matched.all():
            ys, xs = np.nonzero(~matched)
            rgb = tuple(int(v) for v in raster[ys[0], xs[0]])
            raise RasterError(f"unknown color {rgb} at pixel ({ys[0]}, {xs[0]})")
        return labels

    def encode(self, labels: np.ndarray) -> np.ndarray:
        """Map a label map back to an RGB raster."""
        lut = np.zeros((max(e.index for e in self.entries) + 1, 3), dtype=np.uint8)
        for e in self.entries:
            lut[e.index] = e.rgb
        return lut[labels]


def default_palette(num_classes: int = 6) -> Palette:
    """ISPRS-convention colors (community standard, truncated to num_classes)."""
    full = [
        PaletteEntry(0, (255, 255, 255), "impervious_surface"),
        PaletteEntry(1, (0, 0, 255), "building"),
        PaletteEntry(2, (0, 255, 255), "low_vegetation"),
        PaletteEntry(3, (0, 255, 0), "tree"),
        PaletteEntry(4, (255, 255, 0), "car"),
        PaletteEntry(5, (255, 0, 0), "clutter"),
    ]
    extra = [(128, 64, 0), (64, 0, 128), (0, 128, 64), (128, 128, 128)]
    while len(full) < num_classes:
        i = len(full)
        full.append(PaletteEntry(i, extra[(i - 6) % len(extra)], f"class{i}"))
    return Palette(full[:num_classes])


# ---------------------------------------------------------------------------
# samples and tiling


@dataclass
class LabeledSample:
    """Image scaled to [0, 1] with a pixel-aligned integer label map."""

    image: Tensor  # (1, 3, H, W)
    labels: np.ndarray  # (H, W) int64

    def __post_init__(self):
        if self.image.shape[2:] != self.labels.shape:
            raise RasterError("image and labels must share spatial dims")


def sample_from_rasters(image_raster: np.ndarray, labels: np.ndarray) -> LabeledSample:
    img = image_raster.astype(np.float32) / 255.0
    img = np.transpose(img, (2, 0, 1))[None]
    return LabeledSample(Tensor(img), labels.astype(np.int64))


@dataclass
class TileLayout:
    orig_hw: tuple
    padded_hw: tuple
    tile_size: int
    stride: int
    positions: list  # (y, x) offsets into the padded raster


def _pad_reflect(arr: np.ndarray, ph: int, pw: int) -> np.ndarray:
    h, w = arr.shape[:2]
    pads = [(0, ph - h), (0, pw - w)] + [(0, 0)] * (arr.ndim - 2)
    return np.pad(arr, pads, mode="reflect") if (ph > h or pw > w) else arr


def tile(image: np.ndarray, labels: Optional[np.ndarray], tile_size: int,
         stride: int) -> tuple[list, TileLayout]:
    """Cut an (H, W, C) raster into covering tiles with reflection padding.

    Returns (tiles, layout) where each tile is (image_tile, label_tile) and
    label_tile is None when no labels were given.
    """
    if tile_size % 32:
        raise RasterError("tile_size must be divisible by 32")
    if stride < 1 or stride > tile_size:
        raise RasterError("stride must be in [1, tile_size]")
    h, w = image.shape[:2]
    if h < 2 or w < 2:
        raise RasterError("raster too small to tile (reflection needs dim >= 2)")

    def n_steps(dim):
        return 1 if dim <= tile_size else -(-(dim - tile_size) // stride) + 1

    ny, nx = n_steps(h), n_steps(w)
    ph = max(tile_size, (ny - 1) * stride + tile_size)
    pw = max(tile_size, (nx - 1) * stride + tile_size)
    if ph >= 2 * h or pw >= 2 * w:
        raise RasterError("tile larger than image after reflection-padding rules")
    img_p = _pad_reflect(image, ph, pw)
    lab_p = _pad_reflect(labels, ph, pw) if labels is not None else None

    tiles, positions = [], []
    for iy in range(ny):
        for ix in range(nx):
            y, x = iy * stride, ix * stride
            img_t = img_p[y: y + tile_size, x: x + tile_size]
            lab_t = lab_p[y: y + tile_size, x: x + tile_size] if lab_p is not None else None
            tiles.append((img_t, lab_t))
            positions.append((y, x))
    return tiles, TileLayout((h, w), (ph, pw), tile_size, stride, positions)


def stitch(logit_tiles: Sequence[np.ndarray], layout: TileLayout) -> np.ndarray:
    """Reassemble per-tile (C, t, t) logits, averaging overlaps, crop padding."""
    if len(logit_tiles) != len(layout.positions):
        raise RasterError("tile count does not match layout")
    c = logit_tiles[0].shape[0]
    t = layout.tile_size
    ph, pw = layout.padded_hw
    acc = np.zeros((c, ph, pw), dtype=np.float64)
    cover = np.zeros((ph, pw), dtype=np.float64)
    for logits, (y, x) in zip(logit_tiles, layout.positions):
        if logits.shape != (c, t, t):
            raise RasterError(f"tile logits shape {logits.shape} != {(c, t, t)}")
        acc[:, y: y + t, x: x + t] += logits
        cover[y: y + t, x: x + t] += 1.0
    acc /= cover
    h, w = layout.orig_hw
    return acc[:, :h, :w]


# ---------------------------------------------------------------------------
# synthetic corpus


def _draw_shapes(rng: np.random.Generator, labels: np.ndarray, cls: int,
                 size: int) -> None:
    # Rectangle/bar edges snap to a coarse grid (1/16 of the canvas) so the
    # corpus is resolvable by models predicting at reduced resolution;
    # ellipses stay off-grid to keep curved, unaligned boundaries in play.
    grid = max(1, size // 16)

    def snap(v: int) -> int:
        return int(np.clip(round(v / grid) * grid, 0, size))

    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(int(rng.integers(1, 3))):
        kind = rng.choice(["rect", "ellipse", "bar"], p=[0.4, 0.2, 0.4])
        cy, cx = rng.integers(size // 6, size - size // 6, size=2)
        if kind == "rect":
            hh = int(rng.integers(size // 3, (2 * size) // 3))
            ww = int(rng.integers(size // 3, (2 * size) // 3))
            labels[snap(cy - hh // 2): snap(cy + hh // 2),
                   snap(cx - ww // 2): snap(cx + ww // 2)] = cls
        elif kind == "ellipse":
            ry = int(rng.integers(size // 5, size // 3)) + 1
            rx = int(rng.integers(size // 5, size // 3)) + 1
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
            labels[mask] = cls
        else:  # bar: thin relative to its length
            thick = max(grid, int(rng.integers(size // 7, size // 4)))
            length = int(rng.integers((2 * size) // 3, size))
            if rng.integers(2):
                labels[snap(cy - thick // 2): snap(cy + thick // 2),
                       snap(cx - length // 2): snap(cx + length // 2)] = cls
            else:
                labels[snap(cy - length // 2): snap(cy + length // 2),
                       snap(cx - thick // 2): snap(cx + thick // 2)] = cls


def synth_sample(seed: int, index: int, size: int, num_classes: int,
                 noise_sigma: float = 10.0) -> tuple[np.ndarray, np.ndarray]:
    """One deterministic sample: (image raster, label map)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, index)))
    labels = np.zeros((size, size), dtype=np.int64)
    order = rng.permutation(np.arange(1, num_classes))
    for cls in order:
        _draw_shapes(rng, labels, int(cls), size)
    palette = default_palette(num_classes)
    raster = palette.encode(labels).astype(np.float64)
    if noise_sigma > 0:
        raster += rng.normal(0.0, noise_sigma, size=raster.shape)
    return np.clip(np.rint(raster), 0, 255).astype(np.uint8), labels


def synth_generate(out_dir, seed: int, count: int, size: int, num_classes: int,
                   noise_sigma: float = 10.0) -> dict:
    """Write a deterministic corpus to disk and return its manifest."""
    if size % 32:
        raise RasterError("size must be divisible by 32")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    palette = default_palette(num_classes)
    for i in range(count):
        raster, labels = synth_sample(seed, i, size, num_classes, noise_sigma)
        write_ppm(out / "images" / f"{i:04d}.ppm", raster)
        write_ppm(out / "labels" / f"{i:04d}.ppm", palette.encode(labels))
    manifest = {
        "seed": seed,
        "size": size,
        "num_classes": num_classes,
        "count": count,
        "noise_sigma": noise_sigma,
        "palette": palette.to_manifest(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def load_corpus(corpus_dir, ignore_classes: Sequence[int] = (),
                ignore_label: int = IGNORE_LABEL) -> tuple[list, dict]:
    """Load every sample of a corpus directory; optionally ignore classes."""
    root = Path(corpus_dir)
    manifest = json.loads((root / "manifest.json").read_text())
    palette = Palette.from_manifest(manifest["palette"])
    samples = []
    for img_path in sorted((root / "images").glob("*.ppm")):
        raster = read_ppm(img_path)
        lab_raster = read_ppm(root / "labels" / img_path.name)
        labels = palette.decode(lab_raster)
        for cls in ignore_classes:
            labels[labels == cls] = ignore_label
        samples.append(sample_from_rasters(raster, labels))
    return samples, manifest
