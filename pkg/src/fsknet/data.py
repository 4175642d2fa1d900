"""Hyperspectral scenes: container I/O, patches, splits, scaling, synthetic data."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .layers import ConfigError

log = logging.getLogger(__name__)

HEADER_MAGIC = "FSKNET-HSI-CUBE"
CUBE_FORMAT_VERSION = 1
VALUE_DTYPE = np.dtype("<f4")
LABEL_DTYPE = np.dtype("<u2")


class FormatError(ValueError):
    """Malformed or inconsistent cube files."""


class ValidationError(ValueError):
    """Cube contents violate an invariant (e.g. label out of range)."""


@dataclass
class HsiCube:
    reflectance: np.ndarray  # [H, W, B]
    labels: np.ndarray       # [H, W], 0 = unlabeled
    class_count: int

    def __post_init__(self):
        self.reflectance = np.asarray(self.reflectance)
        self.labels = np.asarray(self.labels)
        if self.reflectance.ndim != 3:
            raise ValidationError(f"reflectance must be [H, W, B], got {self.reflectance.shape}")
        if self.labels.shape != self.reflectance.shape[:2]:
            raise ValidationError(f"labels {self.labels.shape} do not match grid {self.reflectance.shape[:2]}")

    @property
    def height(self):
        return self.reflectance.shape[0]

    @property
    def width(self):
        return self.reflectance.shape[1]

    @property
    def bands(self):
        return self.reflectance.shape[2]

    def validate(self) -> None:
        if not np.all(np.isfinite(self.reflectance)):
            raise ValidationError("reflectance holds non-finite values")
        bad = np.argwhere((self.labels < 0) | (self.labels > self.class_count))
        if len(bad):
            r, c = bad[0]
            raise ValidationError(f"label {self.labels[r, c]} at pixel ({r}, {c}) "
                                  f"exceeds class_count {self.class_count}")

    def labeled_pixels(self) -> np.ndarray:
        """Row-major flat indices of every labeled pixel."""
        return np.flatnonzero(self.labels.ravel() > 0)


# ---------------------------------------------------------------------------
# container format
# ---------------------------------------------------------------------------

def _blob_paths(path: Path) -> tuple[Path, Path]:
    return path.with_suffix(".refl"), path.with_suffix(".labels")


def save_cube(cube: HsiCube, path) -> None:
    """Write ``path`` (text header) plus ``.refl`` and ``.labels`` siblings."""
    cube.validate()
    path = Path(path)
    refl_path, lab_path = _blob_paths(path)
    header = {
        "format": HEADER_MAGIC,
        "version": CUBE_FORMAT_VERSION,
        "height": cube.height,
        "width": cube.width,
        "bands": cube.bands,
        "class_count": cube.class_count,
        "value_dtype": "float32-le",
        "label_dtype": "uint16-le",
        "interleave": "bip",
        "reflectance_file": refl_path.name,
        "labels_file": lab_path.name,
    }
    path.write_text("".join(f"{k} = {v}\n" for k, v in header.items()))
    refl_path.write_bytes(np.ascontiguousarray(cube.reflectance, dtype=VALUE_DTYPE).tobytes())
    lab_path.write_bytes(np.ascontiguousarray(cube.labels, dtype=LABEL_DTYPE).tobytes())


def read_header(path) -> dict:
    fields = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'key = value'")
        k, v = (p.strip() for p in line.split("=", 1))
        fields[k] = v
    if fields.get("format") != HEADER_MAGIC:
        raise FormatError(f"{path}: not a cube header")
    try:
        for key in ("version", "height", "width", "bands", "class_count"):
            fields[key] = int(fields[key])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad or missing field {exc}") from None
    if fields["version"] != CUBE_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {fields['version']}")
    return fields


def load_cube(path) -> HsiCube:
    path = Path(path)
    hdr = read_header(path)
    h, w, b = hdr["height"], hdr["width"], hdr["bands"]
    refl_path = path.parent / hdr.get("reflectance_file", _blob_paths(path)[0].name)
    lab_path = path.parent / hdr.get("labels_file", _blob_paths(path)[1].name)
    refl = refl_path.read_bytes()
    labs = lab_path.read_bytes()
    for blob, name, expected in ((refl, refl_path, h * w * b * VALUE_DTYPE.itemsize),
                                 (labs, lab_path, h * w * LABEL_DTYPE.itemsize)):
        if len(blob) != expected:
            raise FormatError(f"{name}: expected {expected} bytes, found {len(blob)}")
    cube = HsiCube(np.frombuffer(refl, VALUE_DTYPE).reshape(h, w, b).copy(),
                   np.frombuffer(labs, LABEL_DTYPE).reshape(h, w).astype(np.int64),
                   hdr["class_count"])
    cube.validate()
    return cube


# ---------------------------------------------------------------------------
# patches
# ---------------------------------------------------------------------------

@dataclass
class PatchSet:
    patches: np.ndarray  # [N, S, S, B, 1]
    labels: np.ndarray   # [N], 1..C
    origins: np.ndarray  # [N, 2] (row, col)

    @property
    def patch_edge(self) -> int:
        return self.patches.shape[1]

    def __len__(self):
        return len(self.labels)


def mirror_pad(cube: HsiCube, margin: int) -> np.ndarray:
    """Reflect the scene about its border pixels (edge pixel not repeated)."""
    return np.pad(cube.reflectance, ((margin, margin), (margin, margin), (0, 0)), mode="reflect")


def extract_patches(cube: HsiCube, patch_edge: int, pixels=None, dtype=np.float32) -> PatchSet:
    """Cut ``S x S x B`` blocks centred on the selected pixels.

    ``pixels`` holds row-major flat indices; by default every labeled pixel.
    """
    if patch_edge < 3 or patch_edge % 2 == 0:
        raise ConfigError(f"patch edge must be odd and >= 3, got {patch_edge}")
    m = patch_edge // 2
    if m >= min(cube.height, cube.width):
        raise ConfigError(f"patch edge {patch_edge} too large to mirror-pad a "
                          f"{cube.height}x{cube.width} scene")
    pixels = cube.labeled_pixels() if pixels is None else np.asarray(pixels, dtype=np.int64)
    rows, cols = np.divmod(pixels, cube.width)
    padded = mirror_pad(cube, m)
    out = np.empty((len(pixels), patch_edge, patch_edge, cube.bands, 1), dtype=dtype)
    for i, (r, c) in enumerate(zip(rows, cols)):
        out[i, ..., 0] = padded[r:r + patch_edge, c:c + patch_edge]
    return PatchSet(out, cube.labels[rows, cols].astype(np.int64), np.stack([rows, cols], axis=1))


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def parse_ratio(text: str) -> tuple[int, int, int]:
    """``"5:1:4"`` -> ``(5, 1, 4)``."""
    try:
        parts = tuple(int(p) for p in text.split(":"))
    except ValueError:
        raise ConfigError(f"ratio must look like a:b:c, got {text!r}") from None
    if len(parts) != 3 or any(p <= 0 for p in parts):
        raise ConfigError(f"ratio needs three positive integers, got {text!r}")
    return parts


@dataclass
class SplitSpec:
    ratios: tuple = (5, 1, 4)
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.ratios, str):
            self.ratios = parse_ratio(self.ratios)
        self.ratios = tuple(int(r) for r in self.ratios)
        if len(self.ratios) != 3 or any(r <= 0 for r in self.ratios):
            raise ConfigError(f"ratios must be three positive integers, got {self.ratios}")


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    warnings: list[str] = field(default_factory=list)


def split_sizes(count: int, ratios) -> tuple[int, int, int]:
    """Train takes the ceiling of its share, val the ceiling of its share of
    the rest, test the remainder. Train never drops below 1 when ``count > 0``."""
    a, b, c = ratios
    total = a + b + c
    n_train = min(count, math.ceil(count * a / total))
    n_val = min(count - n_train, math.ceil(count * b / total))
    return n_train, n_val, count - n_train - n_val


def stratified_split(cube: HsiCube, spec: SplitSpec) -> Split:
    """Per-class shuffled partition of the labeled pixels."""
    rng = np.random.default_rng(spec.seed)
    flat = cube.labels.ravel()
    parts = ([], [], [])
    warnings = []
    for cls in range(1, cube.class_count + 1):
        idx = np.flatnonzero(flat == cls)
        if len(idx) == 0:
            continue
        idx = rng.permutation(idx)
        sizes = split_sizes(len(idx), spec.ratios)
        if len(idx) < 3:
            msg = f"class {cls} has {len(idx)} pixel(s); split sizes {sizes}"
            warnings.append(msg)
            log.warning(msg)
        bounds = np.cumsum(sizes)[:-1]
        for part, chunk in zip(parts, np.split(idx, bounds)):
            part.append(chunk)
    train, val, test = (np.sort(np.concatenate(p)) if p else np.zeros(0, np.int64) for p in parts)
    return Split(train, val, test, warnings)


# ---------------------------------------------------------------------------
# scaling and synthetic scenes
# ---------------------------------------------------------------------------

def normalize(cube: HsiCube) -> HsiCube:
    """Per-band standardisation; zero-variance bands become 0."""
    x = cube.reflectance.astype(np.float64)
    mean = x.mean(axis=(0, 1))
    std = x.std(axis=(0, 1))
    safe = np.where(std > 0, std, 1.0)
    out = np.where(std > 0, (x - mean) / safe, 0.0)
    return HsiCube(out.astype(cube.reflectance.dtype), cube.labels.copy(), cube.class_count)


def class_signatures(classes: int, bands: int, rng: np.random.Generator, bumps: int = 4) -> np.ndarray:
    """Smooth spectra built from random Gaussian bumps, one row per class."""
    grid = np.linspace(0.0, 1.0, bands)
    sig = np.empty((classes, bands))
    for c in range(classes):
        centres = rng.uniform(0, 1, bumps)
        widths = rng.uniform(0.05, 0.2, bumps)
        heights = rng.uniform(0.2, 1.0, bumps)
        sig[c] = (heights[:, None] * np.exp(-0.5 * ((grid - centres[:, None]) / widths[:, None]) ** 2)).sum(0)
    return sig


def synth_cube(height=48, width=48, bands=200, classes=3, noise_sigma=0.05, seed=0) -> HsiCube:
    """Seeded Voronoi scene where each region carries its class spectrum plus noise."""
    if classes < 2:
        raise ConfigError("synthetic scenes need at least 2 classes")
    if bands < 9:
        raise ConfigError("synthetic scenes need at least 9 bands")
    rng = np.random.default_rng(seed)
    signatures = class_signatures(classes, bands, rng)
    n_sites = max(classes * 2, 4)
    sites = rng.uniform(0, [height, width], size=(n_sites, 2))
    site_class = np.concatenate([np.arange(classes), rng.integers(0, classes, n_sites - classes)])
    rr, cc = np.mgrid[0:height, 0:width]
    d2 = (rr[..., None] - sites[:, 0]) ** 2 + (cc[..., None] - sites[:, 1]) ** 2
    labels = site_class[d2.argmin(axis=-1)] + 1
    refl = signatures[labels - 1] + rng.normal(0.0, noise_sigma, (height, width, bands))
    return HsiCube(refl.astype(np.float32), labels.astype(np.int64), classes)
