"""Functional principal component analysis of gridded surfaces.

Surfaces live on a shared unit lattice, so the L2 inner product reduces to
a plain dot product of value vectors (cell area 1). The eigenpairs of the
empirical covariance (divisor n - 1) are computed from the singular value
decomposition of the centered data matrix; at most min(n - 1, grid size)
components exist. Eigenfunction signs follow one convention: the entry of
largest magnitude is positive.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FewerThanTwoSamples, GridMismatch, KTooLarge
from .psurf import PersistenceSurface, SurfaceGrid


@dataclass(frozen=True)
class FpcaModel:
    """Mean, eigenvalues, eigenfunctions (rows), and training scores.

    ``eigenfunctions[j]`` is the j-th component sampled on the grid;
    ``scores[i, j]`` is training sample i projected onto component j (the
    same arithmetic as :func:`project`). ``total_variance`` is the trace of
    the empirical covariance, which percent_variance needs even when
    components were truncated.
    """

    mean: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    scores: np.ndarray
    total_variance: float
    n_samples: int
    grid: SurfaceGrid | None = None
    sigma: float | None = None
    kernel: str | None = None

    def __post_init__(self):
        vals = np.asarray(self.eigenvalues, dtype=float)
        if (vals < -1e-12).any():
            raise ValueError("eigenvalues must be non-negative")
        object.__setattr__(self, "eigenvalues", np.maximum(vals, 0.0))
        if (np.diff(self.eigenvalues) > 1e-12).any():
            raise ValueError("eigenvalues must be non-increasing")

    @property
    def n_components(self) -> int:
        return self.eigenvalues.size


def _as_matrix(surfaces) -> tuple[np.ndarray, SurfaceGrid | None, float | None, str | None]:
    if isinstance(surfaces, np.ndarray):
        return np.asarray(surfaces, dtype=float), None, None, None
    if not all(isinstance(s, PersistenceSurface) for s in surfaces):
        raise TypeError("expected PersistenceSurface list or a 2D array")
    grid = surfaces[0].grid
    for s in surfaces[1:]:
        if s.grid != grid:
            raise GridMismatch("surfaces sampled on different grids")
    return np.stack([s.values for s in surfaces]), grid, surfaces[0].sigma, surfaces[0].kernel


def fit_fpca(surfaces, n_components: int | None = None) -> FpcaModel:
    """Eigen-decompose the empirical covariance of surfaces on one grid.

    Accepts a list of surfaces or a raw (n, p) array. Keeps
    min(n - 1, p) components unless ``n_components`` truncates further.
    """
    X, grid, sigma, kernel = _as_matrix(surfaces)
    if X.ndim != 2:
        raise ValueError("data must be 2D (samples x grid points)")
    n, p = X.shape
    if n < 2:
        raise FewerThanTwoSamples(f"need at least 2 samples, got {n}")
    mean = X.mean(axis=0)
    centered = X - mean
    k_full = min(n - 1, p)
    if n_components is None:
        n_components = k_full
    if n_components > k_full:
        raise KTooLarge(f"at most {k_full} components exist, asked for {n_components}")
    # SVD of the centered data; right singular vectors are the eigenfunctions
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    eigenvalues = (s**2) / (n - 1)
    total = float(eigenvalues.sum())
    eigenvalues = eigenvalues[:n_components]
    components = vt[:n_components]
    for j in range(components.shape[0]):
        i_max = int(np.argmax(np.abs(components[j])))
        if components[j, i_max] < 0:
            components[j] = -components[j]
    scores = np.empty((n, n_components))
    for i in range(n):
        scores[i] = _project_vector(centered[i], components)
    return FpcaModel(mean, eigenvalues, components, scores, total, n, grid, sigma, kernel)


def _project_vector(centered_vec: np.ndarray, components: np.ndarray) -> np.ndarray:
    return np.array([float(centered_vec @ phi) for phi in components])


def project(model: FpcaModel, surface, k: int | None = None) -> np.ndarray:
    """Scores of a surface: inner products of (x - mean) with the first k
    eigenfunctions. Accepts a PersistenceSurface or a raw vector."""
    if k is None:
        k = model.n_components
    if k > model.n_components:
        raise KTooLarge(f"model stores {model.n_components} components, asked for {k}")
    if isinstance(surface, PersistenceSurface):
        if model.grid is not None and surface.grid != model.grid:
            raise GridMismatch("surface grid differs from the model grid")
        vec = surface.values
    else:
        vec = np.asarray(surface, dtype=float).reshape(-1)
    if vec.size != model.mean.size:
        raise GridMismatch(f"vector length {vec.size} != grid size {model.mean.size}")
    return _project_vector(vec - model.mean, model.eigenfunctions[:k])


def percent_variance(model: FpcaModel, k: int) -> float:
    """Fraction of total variance carried by the first k components.

    Returns 1.0 when the total variance is 0 (all samples identical).
    """
    if k < 0 or k > model.n_components:
        raise KTooLarge(f"k must be in [0, {model.n_components}], got {k}")
    if model.total_variance == 0.0:
        return 1.0
    return float(model.eigenvalues[:k].sum() / model.total_variance)


def select_by_pv(model: FpcaModel, threshold: float) -> int:
    """Smallest k whose explained-variance fraction exceeds the threshold."""
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    for k in range(model.n_components + 1):
        if percent_variance(model, k) > threshold:
            return k
    raise KTooLarge(
        f"stored components explain only {percent_variance(model, model.n_components):.6f}"
    )


def reconstruct(model: FpcaModel, scores: np.ndarray) -> np.ndarray:
    """Mean plus the score-weighted sum of eigenfunctions."""
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if scores.size > model.n_components:
        raise KTooLarge(f"got {scores.size} scores for {model.n_components} components")
    return model.mean + scores @ model.eigenfunctions[: scores.size]


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def save_fpca(model: FpcaModel, base: str | Path) -> None:
    """Write `<base>.json` plus `<base>_mean.csv` / `<base>_components.csv`."""
    base = Path(base)
    meta = {
        "eigenvalues": [float(v) for v in model.eigenvalues],
        "total_variance": model.total_variance,
        "n_samples": model.n_samples,
        "n_components": model.n_components,
        "sigma": model.sigma,
        "kernel": model.kernel,
        "grid": None
        if model.grid is None
        else {
            "x_start": model.grid.x_start,
            "x_stop": model.grid.x_stop,
            "y_start": model.grid.y_start,
            "y_stop": model.grid.y_stop,
        },
    }
    with open(base.with_suffix(".json"), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _write_matrix_csv(base.parent / (base.name + "_mean.csv"), model.mean[None, :])
    _write_matrix_csv(base.parent / (base.name + "_components.csv"), model.eigenfunctions)


def _write_matrix_csv(path: Path, matrix: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        wtr = csv.writer(fh)
        for row in np.atleast_2d(matrix):
            wtr.writerow([repr(float(v)) for v in row])


def _read_matrix_csv(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(c) for c in row] for row in csv.reader(fh) if row])


def load_fpca(base: str | Path) -> FpcaModel:
    base = Path(base)
    try:
        with open(base.with_suffix(".json")) as fh:
            meta = json.load(fh)
        mean = _read_matrix_csv(base.parent / (base.name + "_mean.csv"))[0]
        components = _read_matrix_csv(base.parent / (base.name + "_components.csv"))
    except (OSError, ValueError, IndexError) as exc:
        raise ConfigError(f"{base}: missing or malformed FPCA bundle") from exc
    if components.size == 0:
        components = np.zeros((0, mean.size))
    grid = None
    if meta.get("grid"):
        g = meta["grid"]
        grid = SurfaceGrid(g["x_start"], g["x_stop"], g["y_start"], g["y_stop"])
    n = int(meta["n_samples"])
    scores = np.zeros((0, components.shape[0]))  # training scores not persisted
    return FpcaModel(
        mean,
        np.array(meta["eigenvalues"], dtype=float),
        components,
        scores,
        float(meta["total_variance"]),
        n,
        grid,
        meta.get("sigma"),
        meta.get("kernel"),
    )
