"""Multi-class label images: loading, validation, denoising, permutation,
grid transforms, and synthetic cohort generation.

Pixels take one of three classes, encoded as small integers both in memory
and in the CSV/PNG interchange formats:

* 0 = normal tissue
* 1 = tumor
* 2 = empty (background / no tissue)

All randomness is driven by numpy's PCG64 generator so that a given seed
reproduces the same stream on every platform.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coxph import SurvivalRecord
from .errors import InvalidLabel, InvalidMixture, RaggedRows

NORMAL = 0
TUMOR = 1
EMPTY = 2

_VALID_LABELS = (NORMAL, TUMOR, EMPTY)

#: Covariate column order produced by :func:`synth_cohort`.
COHORT_COVARIATES = ("age", "tumor_size")

#: Seeds are plain non-negative integers; the same seed always yields a
#: bit-identical PCG64 stream.
RngSeed = int


def _rng(seed: RngSeed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class LabelImage:
    """A 2D grid of class labels, stored row-major as uint8."""

    labels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.labels, dtype=np.uint8)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidLabel("label grid must be 2D and non-empty")
        if not np.isin(arr, _VALID_LABELS).all():
            bad = int(arr[~np.isin(arr, _VALID_LABELS)].flat[0])
            raise InvalidLabel(f"label value outside {{0,1,2}}: {bad}")
        object.__setattr__(self, "labels", arr)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def class_counts(self) -> dict[int, int]:
        return {c: int((self.labels == c).sum()) for c in _VALID_LABELS}

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelImage) and np.array_equal(self.labels, other.labels)


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def load_label_image(path: str | Path, format: str | None = None) -> LabelImage:
    """Load a label image from ``csv`` or ``png-palette`` files.

    ``format`` defaults to the file extension (.csv / .png). CSV cells and
    PNG palette indices must be in {0, 1, 2}.
    """
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "png-palette"
    if format == "csv":
        return _load_csv(path)
    if format == "png-palette":
        return _load_png(path)
    raise ValueError(f"unknown label image format: {format!r}")


def _load_csv(path: Path) -> LabelImage:
    rows: list[list[int]] = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                vals = [int(cell) for cell in row]
            except ValueError as exc:
                raise InvalidLabel(f"{path}:{lineno}: non-integer cell") from exc
            for v in vals:
                if v not in _VALID_LABELS:
                    raise InvalidLabel(f"{path}:{lineno}: label value {v} outside {{0,1,2}}")
            rows.append(vals)
    if not rows:
        raise RaggedRows(f"{path}: empty image")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise RaggedRows(f"{path}: rows have differing lengths {sorted(widths)}")
    return LabelImage(np.array(rows, dtype=np.uint8))


def _load_png(path: Path) -> LabelImage:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("P", "L"):
            raise InvalidLabel(f"{path}: PNG must be palette or grayscale, got mode {im.mode}")
        arr = np.asarray(im)
    if not np.isin(arr, _VALID_LABELS).all():
        bad = int(arr[~np.isin(arr, _VALID_LABELS)].flat[0])
        raise InvalidLabel(f"{path}: palette index {bad} outside {{0,1,2}}")
    return LabelImage(arr.astype(np.uint8))


def save_label_image(img: LabelImage, path: str | Path) -> None:
    """Write a label image as CSV or indexed-palette PNG, by extension."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in img.labels:
                w.writerow([int(v) for v in row])
    elif path.suffix.lower() == ".png":
        from PIL import Image

        im = Image.fromarray(img.labels, mode="P")
        # normal=blue, tumor=green, empty=yellow; indices are what matter
        im.putpalette([60, 80, 200, 60, 180, 75, 255, 225, 25] + [0] * (256 * 3 - 9))
        im.save(path)
    else:
        raise ValueError(f"unsupported extension for label image: {path.suffix!r}")


# ---------------------------------------------------------------------------
# Transformations
# ---------------------------------------------------------------------------

def denoise(img: LabelImage) -> LabelImage:
    """Reclassify isolated single-pixel noise.

    An interior pixel whose eight neighbors all share one class different
    from its own is reassigned to that class. Reassignments are computed
    from the input and applied simultaneously (single pass). Border pixels
    never change because they lack a full 8-neighborhood.
    """
    a = img.labels
    if a.shape[0] < 3 or a.shape[1] < 3:
        return LabelImage(a.copy())
    out = a.copy()
    center = a[1:-1, 1:-1]
    neigh = [
        a[:-2, :-2], a[:-2, 1:-1], a[:-2, 2:],
        a[1:-1, :-2], a[1:-1, 2:],
        a[2:, :-2], a[2:, 1:-1], a[2:, 2:],
    ]
    for c in _VALID_LABELS:
        all_c = np.logical_and.reduce([n == c for n in neigh])
        mask = all_c & (center != c)
        out[1:-1, 1:-1][mask] = c
    return LabelImage(out)


def permute_pixels(img: LabelImage, seed: RngSeed) -> LabelImage:
    """Uniformly shuffle pixel positions (Fisher-Yates, seeded).

    Preserves the exact class multiset and the image dimensions.
    """
    flat = img.labels.ravel()
    perm = _rng(seed).permutation(flat.size)
    return LabelImage(flat[perm].reshape(img.labels.shape))


_TRANSFORMS = ("rot90", "rot180", "rot270", "flip-h", "flip-v")


def transform(img: LabelImage, op: str) -> LabelImage:
    """Apply a dihedral grid transform.

    ``rot90`` is a counterclockwise quarter turn mapping pixel (x, y) of a
    w-wide image to (y, w-1-x); ``flip-h`` mirrors left-right and
    ``flip-v`` top-bottom.
    """
    a = img.labels
    if op == "rot90":
        out = np.rot90(a, 1)
    elif op == "rot180":
        out = np.rot90(a, 2)
    elif op == "rot270":
        out = np.rot90(a, 3)
    elif op == "flip-h":
        out = a[:, ::-1]
    elif op == "flip-v":
        out = a[::-1, :]
    else:
        raise ValueError(f"unknown transform {op!r}; expected one of {_TRANSFORMS}")
    return LabelImage(np.ascontiguousarray(out))


# ---------------------------------------------------------------------------
# Synthetic cohorts
# ---------------------------------------------------------------------------

SHAPE_CLASSES = ("scattered", "blob", "ring")


@dataclass
class CohortSpec:
    """Parameters for a synthetic cohort.

    ``class_mix`` maps shape-class names to mixture weights (must sum to 1);
    ``hazard_multipliers`` maps the same names to hazard factors. Optional
    ``clinical_effects`` adds log-hazard-per-unit effects of generated
    clinical covariates (centered before applying), so the clinical block
    can carry real signal.
    """

    n_patients: int
    images_per_patient: int = 2
    image_size: int = 64
    class_mix: dict[str, float] = field(default_factory=lambda: {"scattered": 0.5, "ring": 0.5})
    hazard_multipliers: dict[str, float] = field(default_factory=lambda: {"scattered": 1.0, "ring": 4.0})
    censor_rate: float = 0.2
    baseline_hazard: float = 1.0
    clinical_effects: dict[str, float] = field(default_factory=dict)

    def validate(self) -> None:
        if self.n_patients < 0:
            raise InvalidMixture("n_patients must be >= 0")
        if abs(sum(self.class_mix.values()) - 1.0) > 1e-9:
            raise InvalidMixture(f"class mixture weights must sum to 1, got {sum(self.class_mix.values())}")
        for name in self.class_mix:
            if name not in SHAPE_CLASSES:
                raise InvalidMixture(f"unknown shape class {name!r}")
            if self.class_mix[name] < 0:
                raise InvalidMixture("mixture weights must be non-negative")
            if name not in self.hazard_multipliers:
                raise InvalidMixture(f"missing hazard multiplier for class {name!r}")
        if not 0.0 <= self.censor_rate <= 1.0:
            raise InvalidMixture("censor_rate must be in [0, 1]")

    @classmethod
    def from_json(cls, path: str | Path) -> "CohortSpec":
        with open(path) as fh:
            raw = json.load(fh)
        raw.pop("seed", None)  # seed is passed separately to synth_cohort
        return cls(**raw)


def _disk(mask: np.ndarray, cx: float, cy: float, r: float) -> None:
    h, w = mask.shape
    yy, xx = np.mgrid[0:h, 0:w]
    mask |= (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def _scattered_image(size: int, rng: np.random.Generator) -> np.ndarray:
    tumor = np.zeros((size, size), dtype=bool)
    n_blobs = int(rng.integers(8, 15))
    for _ in range(n_blobs):
        r = float(rng.uniform(1.0, 3.0))
        cx = float(rng.uniform(r + 1, size - r - 2))
        cy = float(rng.uniform(r + 1, size - r - 2))
        _disk(tumor, cx, cy, r)
    out = np.full((size, size), NORMAL, dtype=np.uint8)
    out[tumor] = TUMOR
    return out


def _blob_image(size: int, rng: np.random.Generator) -> np.ndarray:
    tumor = np.zeros((size, size), dtype=bool)
    n_blobs = int(rng.integers(1, 3))
    for _ in range(n_blobs):
        r = float(rng.uniform(7.0, 11.0))
        cx = float(rng.uniform(size * 0.3, size * 0.7))
        cy = float(rng.uniform(size * 0.3, size * 0.7))
        _disk(tumor, cx, cy, r)
    out = np.full((size, size), NORMAL, dtype=np.uint8)
    out[tumor] = TUMOR
    return out


def _ring_image(size: int, rng: np.random.Generator) -> np.ndarray:
    cx = size / 2 + float(rng.uniform(-4, 4))
    cy = size / 2 + float(rng.uniform(-4, 4))
    outer = float(rng.uniform(11.0, 15.0))
    thickness = float(rng.uniform(2.5, 4.5))
    inner = outer - thickness
    gap_at = float(rng.uniform(0, 2 * math.pi))
    gap_width = float(rng.uniform(0.5, 1.1))
    yy, xx = np.mgrid[0:size, 0:size]
    d2 = (xx - cx) ** 2 + (yy - cy) ** 2
    ring = (d2 <= outer * outer) & (d2 > inner * inner)
    ang = np.arctan2(yy - cy, xx - cx)
    delta = np.abs((ang - gap_at + math.pi) % (2 * math.pi) - math.pi)
    ring &= delta > gap_width / 2
    out = np.full((size, size), NORMAL, dtype=np.uint8)
    out[ring] = TUMOR
    return out


_SHAPE_MAKERS = {"scattered": _scattered_image, "blob": _blob_image, "ring": _ring_image}


def synth_cohort(
    spec: CohortSpec, seed: RngSeed
) -> list[tuple[str, list[LabelImage], SurvivalRecord]]:
    """Generate a synthetic cohort of shaped label images with survival data.

    Each patient draws one shape class from ``spec.class_mix``; all of the
    patient's images follow that archetype. Event times are exponential with
    hazard = baseline * class multiplier * exp(centered clinical effects);
    censoring is an independent coin flip that truncates the observed time.
    Deterministic for a fixed seed. Covariates are ordered per
    ``COHORT_COVARIATES`` (age, tumor_size).
    """
    spec.validate()
    rng = _rng(seed)
    class_names = sorted(spec.class_mix)
    weights = np.array([spec.class_mix[c] for c in class_names])

    cohort: list[tuple[str, list[LabelImage], SurvivalRecord]] = []
    for i in range(spec.n_patients):
        pid = f"P{i:04d}"
        cls = class_names[int(rng.choice(len(class_names), p=weights))]
        age = float(rng.uniform(50, 80))
        images = [
            LabelImage(_SHAPE_MAKERS[cls](spec.image_size, rng))
            for _ in range(spec.images_per_patient)
        ]
        tumor_size = float(np.mean([(im.labels == TUMOR).sum() for im in images])) if images else 0.0
        covariates = {"age": age, "tumor_size": tumor_size}
        hazard = spec.baseline_hazard * spec.hazard_multipliers[cls]
        for name, effect in spec.clinical_effects.items():
            hazard *= math.exp(effect * (covariates[name] - _COVARIATE_CENTERS[name]))
        t_event = float(rng.exponential(1.0 / hazard))
        censored = bool(rng.random() < spec.censor_rate)
        time = t_event * (1.0 - float(rng.random())) if censored else t_event
        record = SurvivalRecord(
            patient_id=pid,
            time=time,
            event=not censored,
            covariates=np.array([covariates[c] for c in COHORT_COVARIATES]),
        )
        cohort.append((pid, images, record))
    return cohort


_COVARIATE_CENTERS = {"age": 65.0, "tumor_size": 0.0}


def write_cohort(
    cohort: list[tuple[str, list[LabelImage], SurvivalRecord]],
    out_dir: str | Path,
    image_format: str = "csv",
) -> tuple[Path, Path]:
    """Write cohort images, a manifest JSON, and a survival CSV to a directory.

    Returns (manifest path, survival CSV path).
    """
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    ext = ".csv" if image_format == "csv" else ".png"
    manifest: dict[str, list[str]] = {}
    for pid, images, _rec in cohort:
        paths = []
        for k, img in enumerate(images):
            rel = f"images/{pid}_{k}{ext}"
            save_label_image(img, out_dir / rel)
            paths.append(rel)
        manifest[pid] = paths
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    surv_path = out_dir / "survival.csv"
    with open(surv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "time", "event", *COHORT_COVARIATES])
        for pid, _images, rec in cohort:
            w.writerow([pid, repr(rec.time), int(rec.event)] + [repr(float(v)) for v in rec.covariates])
    return manifest_path, surv_path
