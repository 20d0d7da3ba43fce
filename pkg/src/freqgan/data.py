"""Synthetic two-domain datasets, PNG I/O, and normalization.

Images are H x W x C float32 in [-1, 1] on the library side; PNGs are
8-bit RGB. Three desk-scale domain pairs stress different parts of the
loss machinery: stripes<->checkers (local structure), gradient<->texture
(local variance), and clean<->struck glyphs (ink masks, F1-friendly).
Generation is deterministic per (seed, split, index).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw


class FormatError(ValueError):
    pass


class DatasetError(IOError):
    pass


SPLITS = ("trainA", "trainB", "testA", "testB")
FAMILIES = ("stripes_checkers", "gradient_texture", "glyphs")

GLYPH_BG = 0.85
GLYPH_INK = -0.85


@dataclass(frozen=True)
class SyntheticDomainPair:
    family: str
    image_size: int = 32
    counts: tuple = (8, 8, 2, 2)  # trainA, trainB, testA, testB
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise FormatError(f"unknown family {self.family!r}; choose from {FAMILIES}")


# ---------------------------------------------------------------------------
# PNG I/O


def load_image(path) -> np.ndarray:
    """8-bit RGB PNG -> H x W x 3 float32 in [-1, 1] via x/127.5 - 1."""
    with Image.open(path) as im:
        if im.mode not in ("RGB", "L"):
            raise FormatError(f"{path}: unsupported mode {im.mode}, need 8-bit RGB/L")
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / 127.5 - 1.0


def save_image(img: np.ndarray, path):
    """Inverse of load_image with round-half-up and clamping."""
    arr = np.floor((np.asarray(img, dtype=np.float64) + 1.0) * 127.5 + 0.5)
    arr = np.clip(arr, 0, 255).astype(np.uint8)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    Image.fromarray(arr, mode="RGB").save(path)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Plain bilinear resample (half-pixel centers, edge clamp)."""
    img = np.asarray(img, dtype=np.float32)
    H, W = img.shape[0], img.shape[1]
    ys = np.clip((np.arange(out_h) + 0.5) * H / out_h - 0.5, 0, H - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * W / out_w - 0.5, 0, W - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    a = img[y0][:, x0]
    b = img[y0][:, x1]
    c = img[y1][:, x0]
    d = img[y1][:, x1]
    out = a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx
    return out.astype(np.float32)


def to_chw(img: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(img.transpose(2, 0, 1))


def to_hwc(img: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(img.transpose(1, 2, 0))


# ---------------------------------------------------------------------------
# synthetic families


def _levels(rng):
    dark = -0.75 + rng.uniform(-0.08, 0.08)
    light = 0.75 + rng.uniform(-0.08, 0.08)
    return np.float32(dark), np.float32(light)


def _stripes(size, rng):
    dark, light = _levels(rng)
    period = int(rng.choice([4, 6, 8]))
    phase = int(rng.integers(0, period))
    axis = int(rng.integers(0, 2))
    coord = np.arange(size)
    on = ((coord + phase) // (period // 2)) % 2 == 0
    row = np.where(on, dark, light).astype(np.float32)
    img = np.tile(row[:, None] if axis == 0 else row[None, :], (1, size) if axis == 0 else (size, 1))
    img = img[:, :, None].repeat(3, axis=2)
    img += rng.normal(0, 0.04, img.shape).astype(np.float32)
    return np.clip(img, -1, 1)


def _checkers(size, rng):
    dark, light = _levels(rng)
    cell = int(rng.choice([4, 8]))
    py, px = int(rng.integers(0, cell)), int(rng.integers(0, cell))
    yy, xx = np.meshgrid(np.arange(size) + py, np.arange(size) + px, indexing="ij")
    dark_cell = ((yy // cell) + (xx // cell)) % 2 == 0
    # shrink dark cells by one pixel so the two domains differ in bin mass
    interior = ((yy % cell) > 0) & ((xx % cell) > 0)
    img = np.where(dark_cell & interior, dark, light).astype(np.float32)
    img = img[:, :, None].repeat(3, axis=2)
    img += rng.normal(0, 0.04, img.shape).astype(np.float32)
    return np.clip(img, -1, 1)


def _gradient(size, rng):
    theta = rng.uniform(0, 2 * np.pi)
    yy, xx = np.meshgrid(np.linspace(-1, 1, size), np.linspace(-1, 1, size), indexing="ij")
    plane = np.cos(theta) * xx + np.sin(theta) * yy
    lo, hi = plane.min(), plane.max()
    img = (-0.8 + 1.6 * (plane - lo) / (hi - lo)).astype(np.float32)
    img = img[:, :, None].repeat(3, axis=2)
    img += rng.normal(0, 0.01, img.shape).astype(np.float32)
    return np.clip(img, -1, 1)


def _texture(size, rng):
    # bright rough noise, lightly smoothed: large local std, small dark mass
    noise = rng.uniform(-1, 1, (size, size)).astype(np.float32)
    sm = noise.copy()
    sm[1:] += noise[:-1]
    sm[:, 1:] += noise[:, :-1]
    sm /= 3.0
    img = (0.35 + 0.5 * sm)[:, :, None].repeat(3, axis=2)
    return np.clip(img, -1, 1).astype(np.float32)


def _draw_polyline(draw, pts, width):
    draw.line([tuple(p) for p in pts], fill=255, width=width)


def _glyph_mask(size, rng) -> np.ndarray:
    """Pseudo-characters: three cell-spanning strokes per grid cell.

    Stroke endpoints are pinned to opposite cell thirds so the per-image
    ink budget stays tight: the two domains must stay separable by a
    trivial dark-mass threshold.
    """
    im = Image.new("L", (size, size), 0)
    draw = ImageDraw.Draw(im)
    cell = size // 2
    margin = max(2, cell // 8)
    width = max(1, size // 32)
    span = cell - 2 * margin
    for cy in range(2):
        for cx in range(2):
            ox, oy = cx * cell + margin, cy * cell + margin
            for _ in range(3):
                if rng.integers(0, 2):  # left-to-right stroke
                    p0 = (ox + rng.integers(0, span // 3), oy + rng.integers(0, span))
                    p1 = (ox + span - rng.integers(0, span // 3), oy + rng.integers(0, span))
                else:  # top-to-bottom stroke
                    p0 = (ox + rng.integers(0, span), oy + rng.integers(0, span // 3))
                    p1 = (ox + rng.integers(0, span), oy + span - rng.integers(0, span // 3))
                mid = ((p0[0] + p1[0]) // 2 + int(rng.integers(-2, 3)),
                       (p0[1] + p1[1]) // 2 + int(rng.integers(-2, 3)))
                _draw_polyline(draw, [p0, mid, p1], width)
    return np.asarray(im) > 0


def _strike_mask(size, rng) -> np.ndarray:
    """Two wavy horizontal strokes across the full width."""
    im = Image.new("L", (size, size), 0)
    draw = ImageDraw.Draw(im)
    width = max(2, size // 20)
    for _ in range(2):
        y = int(rng.integers(size // 6, size - size // 6))
        xs = np.linspace(0, size - 1, 7)
        ys = y + rng.integers(-size // 16, size // 16 + 1, size=7)
        _draw_polyline(draw, np.stack([xs, ys], axis=1).astype(int), width)
    return np.asarray(im) > 0


def _mask_to_image(ink: np.ndarray) -> np.ndarray:
    img = np.where(ink, GLYPH_INK, GLYPH_BG).astype(np.float32)
    return img[:, :, None].repeat(3, axis=2)


def _make_image(family: str, domain: str, size: int, rng):
    """Returns (image, extra) where extra may hold glyph masks."""
    if family == "stripes_checkers":
        return (_stripes(size, rng) if domain == "A" else _checkers(size, rng)), None
    if family == "gradient_texture":
        return (_gradient(size, rng) if domain == "A" else _texture(size, rng)), None
    clean = _glyph_mask(size, rng)
    if domain == "A":
        return _mask_to_image(clean), None
    strike = _strike_mask(size, rng)
    struck = clean | strike
    changed = struck ^ clean  # strike pixels that landed on background
    return _mask_to_image(struck), changed


def _image_rng(seed: int, split_idx: int, index: int):
    return np.random.default_rng(np.random.SeedSequence(entropy=(seed, split_idx, index)))


def generate(pair: SyntheticDomainPair, out_dir) -> Path:
    """Write PNGs under {trainA,trainB,testA,testB}[, masks] plus a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    has_masks = pair.family == "glyphs"
    if has_masks:
        (out / "masks").mkdir(exist_ok=True)
    for si, (split, count) in enumerate(zip(SPLITS, pair.counts)):
        d = out / split
        d.mkdir(exist_ok=True)
        domain = "A" if split.endswith("A") else "B"
        for i in range(count):
            rng = _image_rng(pair.seed, si, i)
            img, extra = _make_image(pair.family, domain, pair.image_size, rng)
            name = f"{split}_{i:04d}.png"
            save_image(img, d / name)
            if extra is not None:
                Image.fromarray((extra * 255).astype(np.uint8), mode="L").save(
                    out / "masks" / name
                )
    manifest = {
        "family": pair.family,
        "seed": pair.seed,
        "size": pair.image_size,
        "counts": list(pair.counts),
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1)
    return out


@dataclass
class Dataset:
    root: Path
    images: dict = field(default_factory=dict)  # split -> list of HWC arrays
    names: dict = field(default_factory=dict)  # split -> list of filenames
    manifest: dict = field(default_factory=dict)

    def mask_for(self, split: str, index: int) -> np.ndarray | None:
        p = self.root / "masks" / self.names[split][index]
        if not p.exists():
            return None
        with Image.open(p) as im:
            return np.asarray(im.convert("L")) > 127


def load_dataset(root, image_size: int | None = None) -> Dataset:
    """Load all four splits, resizing to image_size when necessary."""
    root = Path(root)
    missing = [s for s in SPLITS if not (root / s).is_dir()]
    if missing:
        raise DatasetError(
            f"{root}: missing split dirs {missing}; expected layout "
            f"{{{', '.join(SPLITS)}}}[, masks] with PNG files"
        )
    ds = Dataset(root=root)
    mpath = root / "manifest.json"
    if mpath.exists():
        ds.manifest = json.loads(mpath.read_text())
    resized = 0
    for split in SPLITS:
        files = sorted((root / split).glob("*.png"))
        if not files:
            raise DatasetError(f"{root / split}: no PNG files")
        imgs = []
        for f in files:
            img = load_image(f)
            if image_size is not None and img.shape[:2] != (image_size, image_size):
                img = resize_bilinear(img, image_size, image_size)
                resized += 1
            imgs.append(img)
        ds.images[split] = imgs
        ds.names[split] = [f.name for f in files]
    if resized:
        ds.manifest["resized_to"] = image_size
        ds.manifest["resized_count"] = resized
    return ds
