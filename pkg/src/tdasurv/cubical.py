"""Sublevel-set cubical persistence of distance fields.

Pixels are the top (2-dimensional) cells of a cubical complex; every edge
and vertex takes the minimum value over the pixels it touches. Pixels at
+inf, and faces touching only such pixels, are simply absent. Under this
construction the sublevel set at level t contains a cell exactly when its
value is <= t, and pixel components connect under 8-adjacency.

Persistence is computed in two stages: a union-find sweep over vertices and
edges yields the dimension-0 pairs (elder rule, ties broken by filtration
position of the component's creating vertex), and a boundary-matrix
reduction of the square columns over the cycle-creating edges yields the
dimension-1 pairs. Edges that close a loop no square ever fills become
infinite dimension-1 points (loops around empty regions).

Filtration order sorts cells by (value, dimension, row-major index), so
faces always precede cofaces.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AllInfiniteField, ConfigError, NonPositiveFactor
from .sedt import DistanceField

_KINDS = ("vertex", "hedge", "vedge", "square")


@dataclass(frozen=True)
class PersistenceDiagram:
    """Birth/death pairs per homological dimension; deaths may be +inf.

    Rows are canonically sorted by (birth, death) and every pair satisfies
    birth < death (zero-persistence pairs are never recorded).
    """

    dim0: np.ndarray
    dim1: np.ndarray

    def __post_init__(self):
        for name in ("dim0", "dim1"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1, 2)
            if np.isnan(arr).any():
                raise ValueError(f"{name}: NaN in diagram")
            if arr.size and not (arr[:, 0] < arr[:, 1]).all():
                raise ValueError(f"{name}: birth must be strictly below death")
            if arr.size:
                arr = arr[np.lexsort((arr[:, 1], arr[:, 0]))]
            object.__setattr__(self, name, arr)

    def points(self, dim: int) -> np.ndarray:
        if dim == 0:
            return self.dim0
        if dim == 1:
            return self.dim1
        raise ValueError(f"dimension must be 0 or 1, got {dim}")

    @property
    def n_points(self) -> int:
        return self.dim0.shape[0] + self.dim1.shape[0]


@dataclass(frozen=True)
class CubicalFiltration:
    """Cell values of the complex built over a distance field."""

    pixel_values: np.ndarray
    vertex_values: np.ndarray
    hedge_values: np.ndarray
    vedge_values: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixel_values.shape

    @property
    def n_cells(self) -> int:
        return sum(
            int(np.isfinite(a).sum())
            for a in (self.vertex_values, self.hedge_values, self.vedge_values, self.pixel_values)
        )

    def cells(self) -> list[tuple[float, int, str, int, int]]:
        """All finite cells as (value, dim, kind, i, j) in filtration order."""
        out = []
        for kind, dim, arr in (
            ("vertex", 0, self.vertex_values),
            ("hedge", 1, self.hedge_values),
            ("vedge", 1, self.vedge_values),
            ("square", 2, self.pixel_values),
        ):
            for (i, j), val in np.ndenumerate(arr):
                if math.isfinite(val):
                    out.append((float(val), dim, kind, int(i), int(j)))
        out.sort(key=lambda c: (c[0], c[1], _KINDS.index(c[2]), c[3], c[4]))
        return out


def build_filtration(field: DistanceField) -> CubicalFiltration:
    """Assign values to vertices and edges as minima over adjacent pixels."""
    p = field.values
    if not np.isfinite(p).any():
        raise AllInfiniteField("field has no finite pixels; filtration is empty")
    h, w = p.shape
    pad = np.full((h + 2, w + 2), math.inf)
    pad[1 : h + 1, 1 : w + 1] = p
    vertex = np.minimum.reduce(
        [pad[:-1, :-1], pad[:-1, 1:], pad[1:, :-1], pad[1:, 1:]]
    )
    hedge = np.minimum(pad[:-1, 1 : w + 1], pad[1:, 1 : w + 1])
    vedge = np.minimum(pad[1 : h + 1, :-1], pad[1 : h + 1, 1:])
    return CubicalFiltration(p.copy(), vertex, hedge, vedge)


def _cell_tables(filt: CubicalFiltration):
    """Flatten cells into id-indexed arrays plus filtration ranks.

    Ids are assigned block-wise: vertices, horizontal edges, vertical edges,
    squares, each row-major. Only finite cells get a rank.
    """
    h, w = filt.shape
    n_v = (h + 1) * (w + 1)
    n_he = (h + 1) * w
    n_ve = h * (w + 1)
    values = np.concatenate(
        [
            filt.vertex_values.ravel(),
            filt.hedge_values.ravel(),
            filt.vedge_values.ravel(),
            filt.pixel_values.ravel(),
        ]
    )
    dims = np.concatenate(
        [
            np.zeros(n_v, dtype=np.int8),
            np.ones(n_he + n_ve, dtype=np.int8),
            np.full(h * w, 2, dtype=np.int8),
        ]
    )
    finite = np.isfinite(values)
    ids = np.flatnonzero(finite)
    order = ids[np.lexsort((ids, dims[ids], values[ids]))]
    rank = np.full(values.size, -1, dtype=np.int64)
    rank[order] = np.arange(order.size)
    return values, dims, order, rank, (n_v, n_he, n_ve)


def compute_persistence(filt: CubicalFiltration) -> PersistenceDiagram:
    """Persistence diagram of the sublevel filtration (dims 0 and 1)."""
    h, w = filt.shape
    values, dims, order, rank, (n_v, n_he, n_ve) = _cell_tables(filt)

    def hedge_vertices(eid):
        i, j = divmod(eid - n_v, w)
        base = i * (w + 1) + j
        return base, base + 1

    def vedge_vertices(eid):
        i, j = divmod(eid - n_v - n_he, w + 1)
        base = i * (w + 1) + j
        return base, base + (w + 1)

    # --- dimension 0: union-find over vertices, edges in filtration order
    parent: dict[int, int] = {}
    creator: dict[int, int] = {}  # root -> rank of component's first vertex

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    dim0 = []
    positive_edges = []  # edges that close a loop, in filtration order
    for cid in order:
        d = dims[cid]
        if d == 0:
            parent[cid] = cid
            creator[cid] = rank[cid]
        elif d == 1:
            a, b = hedge_vertices(cid) if cid < n_v + n_he else vedge_vertices(cid)
            ra, rb = find(a), find(b)
            if ra == rb:
                positive_edges.append(cid)
                continue
            # elder rule: the component created earlier survives
            if creator[ra] > creator[rb]:
                ra, rb = rb, ra
            young_birth = values[order[creator[rb]]]
            parent[rb] = ra
            if young_birth < values[cid]:
                dim0.append((young_birth, float(values[cid])))
        else:
            continue  # squares are irrelevant for dim 0 but interleave by value

    roots = {find(v) for v in parent}
    for r in roots:
        dim0.append((float(values[order[creator[r]]]), math.inf))

    # --- dimension 1: reduce square boundaries over edge ranks
    squares = order[dims[order] == 2]
    pivot_of: dict[int, set[int]] = {}
    pivot_edges = set()
    dim1 = []
    sq_base = n_v + n_he + n_ve
    for sid in squares:
        i, j = divmod(sid - sq_base, w)
        edge_ids = (
            n_v + i * w + j,  # top
            n_v + (i + 1) * w + j,  # bottom
            n_v + n_he + i * (w + 1) + j,  # left
            n_v + n_he + i * (w + 1) + j + 1,  # right
        )
        col = {int(rank[e]) for e in edge_ids}
        while col:
            low = max(col)
            if low in pivot_of:
                col ^= pivot_of[low]
            else:
                pivot_of[low] = col
                pivot_edges.add(low)
                birth = float(values[order[low]])
                death = float(values[sid])
                if birth < death:
                    dim1.append((birth, death))
                break
        else:
            raise AssertionError("square column reduced to zero; complex is not planar")

    for eid in positive_edges:
        if int(rank[eid]) not in pivot_edges:
            dim1.append((float(values[eid]), math.inf))

    return PersistenceDiagram(
        np.array(dim0, dtype=float).reshape(-1, 2),
        np.array(dim1, dtype=float).reshape(-1, 2),
    )


def betti_numbers(
    filt: CubicalFiltration,
    threshold: float,
    diagram: PersistenceDiagram | None = None,
) -> tuple[int, int]:
    """Ranks of H0 and H1 of the sublevel complex at the threshold.

    Counts diagram pairs with birth <= threshold < death; pass a
    precomputed diagram of the same filtration to skip recomputation.
    """
    if diagram is None:
        diagram = compute_persistence(filt)

    def count(arr):
        if arr.size == 0:
            return 0
        return int(((arr[:, 0] <= threshold) & (threshold < arr[:, 1])).sum())

    return count(diagram.dim0), count(diagram.dim1)


def restrict_dimension(diagram: PersistenceDiagram, dim: int) -> PersistenceDiagram:
    """Keep only the pairs of one homology dimension."""
    empty = np.zeros((0, 2))
    if dim == 0:
        return PersistenceDiagram(diagram.dim0, empty)
    if dim == 1:
        return PersistenceDiagram(empty, diagram.dim1)
    raise ValueError(f"dimension must be 0 or 1, got {dim}")


def filter_finite(diagram: PersistenceDiagram) -> PersistenceDiagram:
    """Drop points with infinite death."""
    def keep(arr):
        return arr[np.isfinite(arr[:, 1])] if arr.size else arr

    return PersistenceDiagram(keep(diagram.dim0), keep(diagram.dim1))


def rescale_diagram(diagram: PersistenceDiagram, factor: float) -> PersistenceDiagram:
    """Multiply all births and deaths by a positive factor."""
    if not factor > 0:
        raise NonPositiveFactor(f"scale factor must be positive, got {factor}")
    return PersistenceDiagram(diagram.dim0 * factor, diagram.dim1 * factor)


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def save_diagram_csv(diagram: PersistenceDiagram, path: str | Path) -> None:
    """Write `dim,birth,death` rows sorted by (dim, birth, death)."""
    with open(path, "w", newline="") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["dim", "birth", "death"])
        for dim in (0, 1):
            for b, d in diagram.points(dim):
                wtr.writerow([dim, repr(float(b)), repr(float(d))])


def load_diagram_csv(path: str | Path) -> PersistenceDiagram:
    by_dim: dict[int, list[tuple[float, float]]] = {0: [], 1: []}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["dim", "birth", "death"]:
            raise ConfigError(f"{path}: expected header dim,birth,death")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                dim = int(row[0])
                pair = (float(row[1]), float(row[2]))
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"{path}:{lineno}: malformed diagram row") from exc
            if dim not in by_dim:
                raise ConfigError(f"{path}:{lineno}: dimension must be 0 or 1")
            by_dim[dim].append(pair)
    return PersistenceDiagram(
        np.array(by_dim[0], dtype=float).reshape(-1, 2),
        np.array(by_dim[1], dtype=float).reshape(-1, 2),
    )
