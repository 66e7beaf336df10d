"""Weighted Gaussian surfaces over persistence diagrams.

A diagram's surface at (x, y) is the weight-scaled sum of kernels centered
at its finite (birth, death) points:

    rho(x, y) = sum_k w(b_k, d_k) * K_sigma(x - b_k, y - d_k)

with the max-distance weight w(b, d) = max(|b|, |d|, d - b). Two kernel
shapes are available: ``standard-gaussian`` (default), the bivariate normal
density exp(-(dx^2 + dy^2) / (2 sigma^2)) / (2 pi sigma^2), and
``paper-literal``, exp(-(dx^2 + dy^2)) / sigma^2, which scales only the
amplitude by sigma and keeps a fixed bandwidth. Every artifact records
which convention produced it.

Surfaces are sampled at the centers of a unit square lattice restricted to
the closed half-plane y >= x: cell origins are integers and centers sit at
half-integer offsets. Diagrams being compared share one grid built from the
pooled corpus range, padded and snapped outward to integers.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cubical import PersistenceDiagram
from .errors import ConfigError, EmptyList, GridMismatch, NoFinitePairs, NonPositiveSigma

KERNELS = ("standard-gaussian", "paper-literal")


def default_padding(sigma: float) -> int:
    """Grid padding used by the pipeline: 3 sigma rounded up."""
    return math.ceil(3 * sigma)


@dataclass(frozen=True)
class SurfaceGrid:
    """Integer cell origins x in [x_start, x_stop), y in [y_start, y_stop).

    Centers are origin + 0.5 per axis; only centers with y >= x are sample
    points.
    """

    x_start: int
    x_stop: int
    y_start: int
    y_stop: int

    def __post_init__(self):
        if self.x_stop <= self.x_start or self.y_stop <= self.y_start:
            raise ValueError("grid must span at least one cell per axis")

    @property
    def x_centers(self) -> np.ndarray:
        return np.arange(self.x_start, self.x_stop) + 0.5

    @property
    def y_centers(self) -> np.ndarray:
        return np.arange(self.y_start, self.y_stop) + 0.5

    @property
    def mask(self) -> np.ndarray:
        """Boolean (ny, nx) array marking centers on or above the diagonal."""
        return self.y_centers[:, None] >= self.x_centers[None, :]

    @property
    def n_points(self) -> int:
        return int(self.mask.sum())

    def point_list(self) -> np.ndarray:
        """(n_points, 2) array of (x, y) centers, row-major in y then x."""
        xs, ys = np.meshgrid(self.x_centers, self.y_centers)
        m = self.mask
        return np.column_stack([xs[m], ys[m]])


@dataclass(frozen=True)
class PersistenceSurface:
    """Sampled surface: one value per valid grid center, row-major in y, x."""

    grid: SurfaceGrid
    values: np.ndarray
    sigma: float
    kernel: str

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if vals.size != self.grid.n_points:
            raise GridMismatch(
                f"surface has {vals.size} values for a grid of {self.grid.n_points} points"
            )
        if not np.isfinite(vals).all():
            raise ValueError("surface values must be finite")
        object.__setattr__(self, "values", vals)

    def as_matrix(self) -> np.ndarray:
        """Full (ny, nx) matrix with NaN below the diagonal."""
        m = np.full(
            (self.grid.y_stop - self.grid.y_start, self.grid.x_stop - self.grid.x_start),
            np.nan,
        )
        m[self.grid.mask] = self.values
        return m


def max_distance_weight(birth: float, death: float) -> float:
    """max(|birth|, |death|, persistence); emphasizes far-from-origin points."""
    return max(abs(birth), abs(death), death - birth)


def _finite_points(diagram: PersistenceDiagram) -> np.ndarray:
    pts = np.vstack([diagram.dim0, diagram.dim1])
    if pts.size and not np.isfinite(pts).all():
        raise ValueError("diagram has infinite deaths; apply filter_finite first")
    return pts


def _grid_from_points(pts: np.ndarray, padding: float) -> SurfaceGrid:
    # snap outward: floor on the low side, ceil on the high side
    return SurfaceGrid(
        x_start=math.floor(pts[:, 0].min() - padding),
        x_stop=math.ceil(pts[:, 0].max() + padding) + 1,
        y_start=math.floor(pts[:, 1].min() - padding),
        y_stop=math.ceil(pts[:, 1].max() + padding) + 1,
    )


def shared_grid(diagrams: list[PersistenceDiagram], padding: float) -> SurfaceGrid:
    """One grid covering every diagram's points, padded and snapped outward.

    The x range covers births, the y range covers deaths. Padding must be
    non-negative; the pipeline passes ceil(3 sigma).
    """
    if padding < 0:
        raise ValueError(f"padding must be non-negative, got {padding}")
    if not diagrams:
        raise EmptyList("no diagrams given")
    stacks = [_finite_points(d) for d in diagrams]
    pts = np.vstack([s for s in stacks if s.size] or [np.zeros((0, 2))])
    if pts.size == 0:
        raise NoFinitePairs("no finite pairs in any diagram")
    return _grid_from_points(pts, padding)


def persistence_surface(
    diagram: PersistenceDiagram,
    grid: SurfaceGrid | None,
    sigma: float,
    kernel: str = "standard-gaussian",
) -> PersistenceSurface:
    """Sample the weighted kernel sum of a finite diagram on a grid.

    All pairs in the diagram are used regardless of homology dimension;
    callers that want per-dimension surfaces restrict the diagram first.
    With grid=None a grid is derived from this diagram alone (padding
    ceil(3 sigma)); a diagram with no points then has no derivable grid and
    raises NoFinitePairs, while with an explicit grid it yields the zero
    surface.
    """
    if sigma <= 0:
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    if kernel not in KERNELS:
        raise ConfigError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
    pts = _finite_points(diagram)
    if grid is None:
        if pts.size == 0:
            raise NoFinitePairs("no finite pairs to derive a grid from")
        grid = _grid_from_points(pts, default_padding(sigma))
    if pts.size == 0:
        return PersistenceSurface(grid, np.zeros(grid.n_points), sigma, kernel)

    weights = np.array([max_distance_weight(b, d) for b, d in pts])
    dx = grid.x_centers[None, :] - pts[:, 0][:, None]  # (k, nx)
    dy = grid.y_centers[None, :] - pts[:, 1][:, None]  # (k, ny)
    if kernel == "standard-gaussian":
        ex = np.exp(-(dx**2) / (2 * sigma**2))
        ey = np.exp(-(dy**2) / (2 * sigma**2))
        amplitude = 1.0 / (2 * math.pi * sigma**2)
    else:
        ex = np.exp(-(dx**2))
        ey = np.exp(-(dy**2))
        amplitude = 1.0 / sigma**2
    matrix = (weights[:, None] * ey).T @ ex * amplitude  # (ny, nx)
    return PersistenceSurface(grid, matrix[grid.mask], sigma, kernel)


def mean_surface(surfaces: list[PersistenceSurface]) -> PersistenceSurface:
    """Pointwise average of surfaces sampled on the same grid."""
    if not surfaces:
        raise EmptyList("no surfaces to average")
    first = surfaces[0]
    for s in surfaces[1:]:
        if s.grid != first.grid:
            raise GridMismatch("surfaces sampled on different grids")
        if s.sigma != first.sigma or s.kernel != first.kernel:
            raise ValueError("surfaces mix sigma or kernel settings")
    stacked = np.stack([s.values for s in surfaces])
    return PersistenceSurface(first.grid, stacked.mean(axis=0), first.sigma, first.kernel)


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def save_surface_csv(surface: PersistenceSurface, path: str | Path) -> None:
    """Matrix CSV (x centers across, y centers down, blanks below diagonal)
    plus a .json sidecar recording sigma, kernel, and grid extents."""
    path = Path(path)
    m = surface.as_matrix()
    with open(path, "w", newline="") as fh:
        wtr = csv.writer(fh)
        wtr.writerow([""] + [repr(float(x)) for x in surface.grid.x_centers])
        for yi, y in enumerate(surface.grid.y_centers):
            row = [repr(float(y))]
            for xi in range(m.shape[1]):
                row.append("" if math.isnan(m[yi, xi]) else repr(float(m[yi, xi])))
            wtr.writerow(row)
    sidecar = {
        "kernel": surface.kernel,
        "sigma": surface.sigma,
        "weight": "max-distance",
        "x_start": surface.grid.x_start,
        "x_stop": surface.grid.x_stop,
        "y_start": surface.grid.y_start,
        "y_stop": surface.grid.y_stop,
    }
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_surface_csv(path: str | Path) -> PersistenceSurface:
    path = Path(path)
    try:
        with open(path.with_suffix(".json")) as fh:
            side = json.load(fh)
        grid = SurfaceGrid(side["x_start"], side["x_stop"], side["y_start"], side["y_stop"])
        sigma = float(side["sigma"])
        kernel = side["kernel"]
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: missing or malformed sidecar JSON") from exc
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)  # x header
        for row in reader:
            rows.append([float(c) if c != "" else math.nan for c in row[1:]])
    m = np.array(rows)
    if m.shape != grid.mask.shape:
        raise ConfigError(f"{path}: matrix shape {m.shape} does not match sidecar grid")
    return PersistenceSurface(grid, m[grid.mask], sigma, kernel)
