"""Signed Euclidean distance transforms of label images.

Each pixel receives the Euclidean distance from its center to the nearest
pixel center of a *different* class, with sign encoding the pixel's own
class: negative inside tumor, positive inside normal tissue, +inf on empty
pixels (three-class variant). Distances are computed exactly: squared
distances stay in 64-bit integers through both separable passes and only
the final square root is floating point.

The transform is the two-pass lower-envelope method: a vertical sweep finds
the nearest target row per column, then a horizontal pass takes the lower
envelope of parabolas per row.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyClassPresent, RaggedRows, SingleClassImage
from .imgio import EMPTY, NORMAL, TUMOR, LabelImage

_INF_SQ = 1 << 62  # sentinel squared distance, larger than any real one
_BIG_ROW = 1 << 30


@dataclass(frozen=True)
class DistanceField:
    """Per-pixel signed distances; +inf marks pixels with no defined value."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("distance field must be 2D and non-empty")
        if np.isnan(arr).any():
            raise ValueError("distance field contains NaN")
        if np.isneginf(arr).any():
            raise ValueError("distance field contains -inf")
        finite = arr[np.isfinite(arr)]
        if finite.size and np.abs(finite).min() < 1.0 - 1e-12:
            raise ValueError("finite signed distances must have magnitude >= 1")
        object.__setattr__(self, "values", arr)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def _dt1d_sq(f: list[int]) -> list[int]:
    """Exact 1D squared-distance lower envelope.

    ``f[i]`` is the squared vertical distance at column i (or the _INF_SQ
    sentinel). Returns min over j of (i - j)^2 + f[j].
    """
    n = len(f)
    first = next((i for i in range(n) if f[i] < _INF_SQ), None)
    if first is None:
        return [_INF_SQ] * n
    v = [0] * n
    z = [0.0] * (n + 1)
    k = 0
    v[0] = first
    z[0] = -math.inf
    z[1] = math.inf
    for q in range(first + 1, n):
        if f[q] >= _INF_SQ:
            continue
        while True:
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2 * q - 2 * p)
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = math.inf
    out = [0] * n
    k = 0
    for x in range(n):
        while z[k + 1] < x:
            k += 1
        p = v[k]
        out[x] = (x - p) * (x - p) + f[p]
    return out


def _edt_sq(targets: np.ndarray) -> np.ndarray:
    """Squared distance from every pixel to the nearest True pixel."""
    h, w = targets.shape
    # vertical pass: distance in rows to the nearest target in each column
    drow = np.empty((h, w), dtype=np.int64)
    dist = np.full(w, _BIG_ROW, dtype=np.int64)
    for y in range(h):
        dist = np.where(targets[y], 0, np.minimum(dist + 1, _BIG_ROW))
        drow[y] = dist
    dist = np.full(w, _BIG_ROW, dtype=np.int64)
    for y in range(h - 1, -1, -1):
        dist = np.where(targets[y], 0, np.minimum(dist + 1, _BIG_ROW))
        np.minimum(drow[y], dist, out=drow[y])
    g = np.where(drow >= _BIG_ROW, _INF_SQ, drow.astype(np.int64) ** 2)

    out = np.empty((h, w), dtype=np.int64)
    for y in range(h):
        out[y] = _dt1d_sq([int(val) for val in g[y]])
    return out


def _signed(labels: np.ndarray, neg_class: int, pos_class: int, empty_is_inf: bool) -> np.ndarray:
    d_from_neg = _edt_sq(labels != neg_class)  # valid at neg_class pixels
    d_from_pos = _edt_sq(labels != pos_class)  # valid at pos_class pixels
    values = np.full(labels.shape, math.inf)
    neg_mask = labels == neg_class
    pos_mask = labels == pos_class
    values[neg_mask] = -np.sqrt(d_from_neg[neg_mask].astype(float))
    values[pos_mask] = np.sqrt(d_from_pos[pos_mask].astype(float))
    if not empty_is_inf:
        assert not (labels == EMPTY).any()
    return values


def sedt3(img: LabelImage) -> DistanceField:
    """Three-class signed transform: tumor < 0, normal > 0, empty = +inf.

    The magnitude at a tumor or normal pixel is the exact distance to the
    nearest pixel of any other class (empty counts). The image must contain
    at least two distinct classes.
    """
    labels = img.labels
    present = {int(c) for c in np.unique(labels)}
    if len(present) < 2:
        raise SingleClassImage("image contains a single class; distances are undefined")
    return DistanceField(_signed(labels, TUMOR, NORMAL, empty_is_inf=True))


def sedt2(img: LabelImage) -> DistanceField:
    """Two-class signed transform for images without empty pixels.

    Requires both tumor and normal present and forbids the empty class, so
    every pixel gets a finite signed distance.
    """
    labels = img.labels
    if (labels == EMPTY).any():
        raise EmptyClassPresent("two-class transform does not accept empty pixels")
    present = {int(c) for c in np.unique(labels)}
    if present != {TUMOR, NORMAL}:
        raise SingleClassImage("two-class transform needs both tumor and normal pixels")
    return DistanceField(_signed(labels, TUMOR, NORMAL, empty_is_inf=False))


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def save_distance_csv(field: DistanceField, path: str | Path) -> None:
    """Write the field as CSV; infinite cells are spelled ``inf``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in field.values:
            w.writerow([repr(float(v)) for v in row])


def load_distance_csv(path: str | Path) -> DistanceField:
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: unparsable distance value") from exc
    if not rows:
        raise ConfigError(f"{path}: empty distance field")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise RaggedRows(f"{path}: rows have differing lengths {sorted(widths)}")
    try:
        return DistanceField(np.array(rows))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
