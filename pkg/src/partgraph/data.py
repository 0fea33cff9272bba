"""Synthetic articulated-figure benchmark: generation, pyramids, dataset IO.

Figures are 2-D stick persons built from analytic shapes (ellipse head,
rectangle torso, capsule limbs) rendered with painter's-algorithm occlusion
onto a textured background. Upper arm/leg and lower arm/leg pairs share render
colors on purpose: local appearance cannot tell them apart, only where they
attach can, which is the capability the relation networks are meant to add.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from . import hierarchy as hgraph
from .errors import (
    CorruptManifestError,
    RangeError,
    UnknownLabelError,
    VersionMismatchError,
)
from .hierarchy import ValidatedHierarchy

DATASET_SCHEMA_VERSION = 1

# Fixed overlay/label palette, index = label value (0 = background).
PALETTE = (
    (0, 0, 0),
    (245, 210, 90),   # head
    (60, 100, 220),   # torso
    (80, 200, 80),    # upper arm
    (230, 70, 70),    # lower arm
    (170, 90, 230),   # upper leg
    (70, 220, 220),   # lower leg
)

# Render colors; limb pairs are deliberately identical.
_RENDER_COLORS = {
    "head": (0.92, 0.80, 0.42),
    "torso": (0.25, 0.40, 0.85),
    "upper_arm": (0.30, 0.72, 0.35),
    "upper_leg": (0.30, 0.72, 0.35),
    "lower_arm": (0.85, 0.30, 0.30),
    "lower_leg": (0.85, 0.30, 0.30),
}


@dataclass(frozen=True)
class SyntheticConfig:
    image_size: int = 64
    figures_per_image: int = 1
    # joint-angle intervals, radians
    torso_tilt: tuple[float, float] = (-0.25, 0.25)
    shoulder_angle: tuple[float, float] = (0.15, 1.35)
    elbow_bend: tuple[float, float] = (0.0, 1.2)
    hip_angle: tuple[float, float] = (0.05, 0.5)
    knee_bend: tuple[float, float] = (0.0, 0.9)
    # part sizes, fractions of image_size
    torso_half_width: tuple[float, float] = (0.07, 0.105)
    torso_half_height: tuple[float, float] = (0.13, 0.18)
    head_radius: tuple[float, float] = (0.055, 0.085)
    arm_length: tuple[float, float] = (0.11, 0.16)
    leg_length: tuple[float, float] = (0.13, 0.19)
    limb_radius: tuple[float, float] = (0.028, 0.042)
    background_mode: str = "smooth"  # smooth | noise | flat
    occluder_count: tuple[int, int] = (0, 2)
    occluder_radius: tuple[float, float] = (0.05, 0.11)
    noise_amplitude: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.image_size % 8 != 0 or self.image_size <= 0:
            raise RangeError(f"image_size {self.image_size} must be a positive multiple of 8")
        if self.figures_per_image not in (0, 1, 2):
            raise RangeError(f"figures_per_image {self.figures_per_image} not in {{0, 1, 2}}")
        for name in (
            "torso_tilt", "shoulder_angle", "elbow_bend", "hip_angle", "knee_bend",
            "torso_half_width", "torso_half_height", "head_radius", "arm_length",
            "leg_length", "limb_radius", "occluder_radius",
        ):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise RangeError(f"empty range for {name}: ({lo}, {hi})")
        lo, hi = self.occluder_count
        if hi < lo or lo < 0:
            raise RangeError(f"bad occluder_count range ({lo}, {hi})")
        if self.background_mode not in ("smooth", "noise", "flat"):
            raise RangeError(f"unknown background_mode {self.background_mode!r}")


@dataclass(eq=False)
class LabelPyramid:
    """Hierarchical groundtruth masks; parents are exact unions of children."""

    level1: dict[str, np.ndarray]
    level2: dict[str, np.ndarray]
    level3: dict[str, np.ndarray]
    background: np.ndarray

    def masks_at(self, level: int) -> dict[str, np.ndarray]:
        return {1: self.level1, 2: self.level2, 3: self.level3}[level]


@dataclass(eq=False)
class Sample:
    image: np.ndarray          # (H, W, 3) float32 in [0, 1], quantized to 8 bits
    labels: np.ndarray         # (H, W) int64 leaf label map
    pyramid: LabelPyramid
    seed: int


def build_pyramid(leaf_labels: np.ndarray, h: ValidatedHierarchy) -> LabelPyramid:
    """Union leaf masks up the decomposition tree; idempotent in the labels."""
    leaf_masks = hgraph.leaf_masks_from_labels(leaf_labels, h)

    def mask_of(v: str) -> np.ndarray:
        if h.level_of(v) == 1:
            return leaf_masks[v]
        m = np.zeros(leaf_labels.shape, dtype=bool)
        for c in h.children_of(v):
            m |= mask_of(c)
        return m

    level2 = {v: mask_of(v) for v in h.level_nodes(2)}
    level3 = {v: mask_of(v) for v in h.level_nodes(3)}
    covered = np.zeros(leaf_labels.shape, dtype=bool)
    for m in leaf_masks.values():
        covered |= m
    return LabelPyramid(
        level1=leaf_masks, level2=level2, level3=level3, background=~covered
    )


# ---------------------------------------------------------------------------
# rendering primitives (pixel centers at integer + 0.5)


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    return xs, ys


def _ellipse_mask(xs, ys, cx, cy, rx, ry, angle) -> np.ndarray:
    ca, sa = np.cos(angle), np.sin(angle)
    dx, dy = xs - cx, ys - cy
    u = dx * ca + dy * sa
    v = -dx * sa + dy * ca
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def _rect_mask(xs, ys, cx, cy, half_w, half_h, angle) -> np.ndarray:
    ca, sa = np.cos(angle), np.sin(angle)
    dx, dy = xs - cx, ys - cy
    u = dx * ca + dy * sa
    v = -dx * sa + dy * ca
    return (np.abs(u) <= half_w) & (np.abs(v) <= half_h)


def _capsule_mask(xs, ys, p0, p1, radius) -> np.ndarray:
    d = np.asarray(p1, dtype=np.float64) - np.asarray(p0, dtype=np.float64)
    len2 = float(d @ d)
    px, py = xs - p0[0], ys - p0[1]
    if len2 < 1e-12:
        return px**2 + py**2 <= radius**2
    t = np.clip((px * d[0] + py * d[1]) / len2, 0.0, 1.0)
    qx = px - t * d[0]
    qy = py - t * d[1]
    return qx**2 + qy**2 <= radius**2


def _bilinear_upsample(a: np.ndarray, size: int) -> np.ndarray:
    h, w = a.shape
    ys = np.clip((np.arange(size) + 0.5) * h / size - 0.5, 0, h - 1)
    xs = np.clip((np.arange(size) + 0.5) * w / size - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    return (
        a[np.ix_(y0, x0)] * (1 - wy) * (1 - wx)
        + a[np.ix_(y0, x1)] * (1 - wy) * wx
        + a[np.ix_(y1, x0)] * wy * (1 - wx)
        + a[np.ix_(y1, x1)] * wy * wx
    )


def _rot(v: np.ndarray, angle: float) -> np.ndarray:
    ca, sa = np.cos(angle), np.sin(angle)
    return np.array([v[0] * ca - v[1] * sa, v[0] * sa + v[1] * ca])


def _sample_figure(rng: np.random.Generator, cfg: SyntheticConfig, center: np.ndarray, scale: float):
    """Sample one articulated figure; returns draw-ordered (part_name, kind, geom)."""
    S = cfg.image_size * scale
    u = lambda rg: rng.uniform(rg[0], rg[1])

    tilt = u(cfg.torso_tilt)
    tw, th = u(cfg.torso_half_width) * S, u(cfg.torso_half_height) * S
    head_r = u(cfg.head_radius) * S
    limb_r = u(cfg.limb_radius) * S

    axis = np.array([np.sin(tilt), np.cos(tilt)])     # down the torso
    perp = np.array([np.cos(tilt), -np.sin(tilt)])    # to the figure's right

    top = center - axis * th
    bottom = center + axis * th
    head_c = top - axis * head_r * 0.95

    parts: list[tuple[str, str, tuple]] = []
    for side in (-1.0, 1.0):
        hip = bottom - axis * th * 0.1 + perp * side * tw * 0.55
        ul_dir = _rot(axis, side * u(cfg.hip_angle))
        knee = hip + ul_dir * u(cfg.leg_length) * S
        ll_dir = _rot(ul_dir, side * u(cfg.knee_bend))
        ankle = knee + ll_dir * u(cfg.leg_length) * S
        parts.append(("upper_leg", "capsule", (hip, knee, limb_r)))
        parts.append(("lower_leg", "capsule", (knee, ankle, limb_r * 0.9)))

    parts.append(("torso", "rect", (center[0], center[1], tw, th, -tilt)))

    for side in (-1.0, 1.0):
        shoulder = top + axis * th * 0.12 + perp * side * tw * 0.95
        ua_dir = _rot(axis, side * u(cfg.shoulder_angle))
        elbow = shoulder + ua_dir * u(cfg.arm_length) * S
        la_dir = _rot(ua_dir, side * u(cfg.elbow_bend))
        wrist = elbow + la_dir * u(cfg.arm_length) * S
        parts.append(("upper_arm", "capsule", (shoulder, elbow, limb_r * 0.95)))
        parts.append(("lower_arm", "capsule", (elbow, wrist, limb_r * 0.85)))

    parts.append(("head", "ellipse", (head_c[0], head_c[1], head_r * 0.85, head_r, -tilt)))
    return parts


def _figure_extent(parts) -> tuple[float, float, float, float]:
    xs, ys = [], []
    for _, kind, geom in parts:
        if kind == "capsule":
            p0, p1, r = geom
            xs += [p0[0] - r, p0[0] + r, p1[0] - r, p1[0] + r]
            ys += [p0[1] - r, p0[1] + r, p1[1] - r, p1[1] + r]
        elif kind == "ellipse":
            cx, cy, rx, ry, _ = geom
            xs += [cx - rx, cx + rx]
            ys += [cy - ry, cy + ry]
        else:
            cx, cy, hw, hh, _ = geom
            d = np.hypot(hw, hh)
            xs += [cx - d, cx + d]
            ys += [cy - d, cy + d]
    return min(xs), max(xs), min(ys), max(ys)


def _shift_parts(parts, delta):
    shifted = []
    for name, kind, geom in parts:
        if kind == "capsule":
            p0, p1, r = geom
            shifted.append((name, kind, (p0 + delta, p1 + delta, r)))
        elif kind == "ellipse":
            cx, cy, rx, ry, a = geom
            shifted.append((name, kind, (cx + delta[0], cy + delta[1], rx, ry, a)))
        else:
            cx, cy, hw, hh, a = geom
            shifted.append((name, kind, (cx + delta[0], cy + delta[1], hw, hh, a)))
    return shifted


def _render_background(rng: np.random.Generator, cfg: SyntheticConfig) -> np.ndarray:
    S = cfg.image_size
    base = rng.uniform(0.25, 0.75, size=3)
    img = np.ones((S, S, 3), dtype=np.float64) * base
    if cfg.background_mode == "smooth":
        for ch in range(3):
            coarse = rng.uniform(-0.18, 0.18, size=(5, 5))
            img[..., ch] += _bilinear_upsample(coarse, S)
    elif cfg.background_mode == "noise":
        img += rng.uniform(-0.15, 0.15, size=(S, S, 3))
    return img


def generate_sample(cfg: SyntheticConfig, seed: int, h: ValidatedHierarchy | None = None) -> Sample:
    """Render one figure scene; deterministic in (cfg, seed)."""
    if h is None:
        h = hgraph.builtin_hierarchy("synthetic6")
    rng = np.random.default_rng([cfg.seed, seed])
    S = cfg.image_size
    xs, ys = _grid(S)

    img = _render_background(rng, cfg)
    labels = np.zeros((S, S), dtype=np.int64)
    label_of = {leaf: idx for idx, leaf in h.label_schema.items()}

    n_fig = cfg.figures_per_image
    scale = 1.0 if n_fig <= 1 else 0.68
    margin = 1.0
    for k in range(n_fig):
        if n_fig == 1:
            center0 = np.array([S * 0.5, S * 0.52])
        else:
            center0 = np.array([S * (0.3 + 0.4 * k), S * 0.52])
        center = center0 + rng.uniform(-0.06, 0.06, size=2) * S
        parts = None
        for _ in range(20):
            cand = _sample_figure(rng, cfg, center, scale)
            x0, x1, y0, y1 = _figure_extent(cand)
            if x0 >= margin and y0 >= margin and x1 <= S - margin and y1 <= S - margin:
                parts = cand
                break
            parts = cand
        # recenter fallback: shift the figure fully into frame
        x0, x1, y0, y1 = _figure_extent(parts)
        dx = max(0.0, margin - x0) + min(0.0, S - margin - x1)
        dy = max(0.0, margin - y0) + min(0.0, S - margin - y1)
        if dx or dy:
            parts = _shift_parts(parts, np.array([dx, dy]))

        shade = {name: rng.uniform(0.85, 1.12) for name in _RENDER_COLORS}
        for name, kind, geom in parts:
            if kind == "capsule":
                m = _capsule_mask(xs, ys, *geom)
            elif kind == "ellipse":
                m = _ellipse_mask(xs, ys, *geom)
            else:
                m = _rect_mask(xs, ys, *geom)
            color = np.array(_RENDER_COLORS[name]) * shade[name]
            img[m] = color
            labels[m] = label_of[name]

    # occluders hide whatever they cover; labels revert to background
    n_occ = int(rng.integers(cfg.occluder_count[0], cfg.occluder_count[1] + 1))
    part_palette = [np.array(c) for c in _RENDER_COLORS.values()]
    for _ in range(n_occ):
        cx, cy = rng.uniform(0.1 * S, 0.9 * S, size=2)
        r = rng.uniform(cfg.occluder_radius[0], cfg.occluder_radius[1]) * S
        if rng.random() < 0.5:
            m = _ellipse_mask(xs, ys, cx, cy, r, r * rng.uniform(0.6, 1.0), rng.uniform(0, np.pi))
        else:
            m = _rect_mask(xs, ys, cx, cy, r, r * rng.uniform(0.5, 1.0), rng.uniform(0, np.pi))
        if rng.random() < 0.5:
            color = part_palette[rng.integers(0, len(part_palette))] * rng.uniform(0.85, 1.12)
        else:
            color = rng.uniform(0.1, 0.9, size=3)
        img[m] = color
        labels[m] = h.background_index

    if cfg.noise_amplitude > 0:
        img += rng.normal(0.0, cfg.noise_amplitude, size=img.shape)

    img8 = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    image = img8.astype(np.float32) / 255.0
    return Sample(image=image, labels=labels, pyramid=build_pyramid(labels, h), seed=seed)


# ---------------------------------------------------------------------------
# dataset handles and IO


class InMemoryDataset:
    def __init__(self, samples: Sequence[Sample], h: ValidatedHierarchy, seeds: Sequence[int]):
        self._samples = list(samples)
        self.hierarchy = h
        self.seeds = list(seeds)

    def __len__(self) -> int:
        return len(self._samples)

    def __getitem__(self, i: int) -> Sample:
        return self._samples[i]


def generate_dataset(cfg: SyntheticConfig, n: int, h: ValidatedHierarchy | None = None) -> InMemoryDataset:
    if h is None:
        h = hgraph.builtin_hierarchy("synthetic6")
    seeds = list(range(n))
    samples = [generate_sample(cfg, s, h) for s in seeds]
    return InMemoryDataset(samples, h, seeds)


def _palette_for(h: ValidatedHierarchy) -> list[tuple[int, int, int]]:
    n = max([h.background_index] + list(h.label_schema)) + 1
    pal = []
    for i in range(n):
        if i < len(PALETTE):
            pal.append(PALETTE[i])
        else:
            hue = (i * 0.61803398875) % 1.0
            pal.append(tuple(int(c * 255) for c in _hsv_to_rgb(hue, 0.65, 0.9)))
    return pal


def _hsv_to_rgb(hue: float, s: float, v: float) -> tuple[float, float, float]:
    i = int(hue * 6.0) % 6
    f = hue * 6.0 - int(hue * 6.0)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    return [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]


def write_label_image(labels: np.ndarray, path: Path, h: ValidatedHierarchy) -> None:
    pal = _palette_for(h)
    img = Image.fromarray(labels.astype(np.uint8), mode="P")
    flat = []
    for rgb in pal:
        flat.extend(rgb)
    flat.extend([0] * (768 - len(flat)))
    img.putpalette(flat)
    img.save(path)


def write_dataset(samples: Sequence[Sample], out_dir: str | Path, h: ValidatedHierarchy,
                  extra: Mapping | None = None) -> Path:
    """Serialize samples as 8-bit PNGs plus a manifest; round-trips bit-exactly."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    presence = {int(idx): 0 for idx in h.label_schema}
    for i, s in enumerate(samples):
        img8 = np.clip(np.round(s.image * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(img8, mode="RGB").save(out / "images" / f"{i:05d}.png")
        write_label_image(s.labels, out / "labels" / f"{i:05d}.png", h)
        for idx in presence:
            if (s.labels == idx).any():
                presence[idx] += 1
    n = len(samples)
    manifest = {
        "schema_version": DATASET_SCHEMA_VERSION,
        "count": n,
        "seeds": [int(s.seed) for s in samples],
        "hierarchy": h.spec.to_config(),
        "palette": [list(c) for c in _palette_for(h)],
        "class_presence": {str(k): (presence[k] / n if n else 0.0) for k in sorted(presence)},
        "class_presence_threshold": 0.95,
    }
    if extra:
        manifest.update(dict(extra))
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return out


class DiskDataset:
    """Lazy handle over a written dataset directory."""

    def __init__(self, root: Path, h: ValidatedHierarchy, seeds: list[int], stems: list[str],
                 manifest: dict | None = None):
        self.root = root
        self.hierarchy = h
        self.seeds = seeds
        self._stems = stems
        self.manifest = manifest or {}

    def __len__(self) -> int:
        return len(self._stems)

    def __getitem__(self, i: int) -> Sample:
        stem = self._stems[i]
        img = np.asarray(Image.open(self.root / "images" / f"{stem}.png").convert("RGB"))
        image = img.astype(np.float32) / 255.0
        lab_img = Image.open(self.root / "labels" / f"{stem}.png")
        labels = np.asarray(lab_img).astype(np.int64)
        valid = set(self.hierarchy.label_schema) | {self.hierarchy.background_index}
        bad = sorted(set(np.unique(labels).tolist()) - valid)
        if bad:
            raise UnknownLabelError(f"{stem}.png contains out-of-schema labels {bad}")
        seed = self.seeds[i] if i < len(self.seeds) else -1
        return Sample(image=image, labels=labels,
                      pyramid=build_pyramid(labels, self.hierarchy), seed=seed)


def read_dataset(root: str | Path) -> DiskDataset:
    root = Path(root)
    mpath = root / "manifest.json"
    if not mpath.exists():
        raise CorruptManifestError(f"missing manifest: {mpath}")
    try:
        with open(mpath, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (json.JSONDecodeError, OSError) as e:
        raise CorruptManifestError(f"unreadable manifest {mpath}: {e}") from e
    version = manifest.get("schema_version")
    if version != DATASET_SCHEMA_VERSION:
        raise VersionMismatchError(
            f"dataset schema {version!r} unsupported (expected {DATASET_SCHEMA_VERSION})"
        )
    try:
        h = hgraph.validate(hgraph.HierarchySpec.from_config(manifest["hierarchy"]))
        count = int(manifest["count"])
        seeds = [int(s) for s in manifest.get("seeds", [])]
    except (KeyError, TypeError) as e:
        raise CorruptManifestError(f"manifest {mpath} missing field: {e}") from e
    stems = [f"{i:05d}" for i in range(count)]
    return DiskDataset(root, h, seeds, stems, manifest)


def load_external(root: str | Path, h: ValidatedHierarchy) -> DiskDataset:
    """Open a plain (image, label-image) directory with a caller-supplied hierarchy."""
    root = Path(root)
    img_dir, lab_dir = root / "images", root / "labels"
    if not img_dir.is_dir() or not lab_dir.is_dir():
        raise CorruptManifestError(f"{root} lacks images/ and labels/ directories")
    stems = sorted(p.stem for p in lab_dir.glob("*.png"))
    missing = [s for s in stems if not (img_dir / f"{s}.png").exists()]
    if missing:
        raise CorruptManifestError(f"label files without images: {missing[:5]}")
    return DiskDataset(root, h, [-1] * len(stems), stems)
