"""Uniform Dirichlet grids, interior-node fields, stencil operators and discrete norms.

Domains are intervals (1D) or axis-aligned rectangles (2D) discretized with a
uniform grid of interior nodes; the homogeneous Dirichlet boundary is realized
through zero ghost values, so fields only ever store interior values.

The discrete gradient energy uses forward differences over every edge,
including the edges that touch the boundary.  With that convention the
summation-by-parts identity

    sum of squared edge differences  ==  - h^dim * sum_i u_i * (lap u)_i

holds exactly, which the norms and energies elsewhere rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Grid",
    "Field",
    "make_grid",
    "laplacian",
    "norm_lp",
    "h1_seminorm",
    "positive_part",
    "negative_part",
    "stencil_min_eigenvalue",
    "first_mode",
    "write_field_csv",
    "read_field_csv",
]


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid of interior nodes with implied zero boundary.

    Attributes:
        dim: spatial dimension, 1 or 2.
        endpoints: per-axis (lo, hi) extents of the domain.
        n_interior: per-axis interior node counts.
        h: per-axis spacing, (hi - lo) / (n_interior + 1).
    """

    dim: int
    endpoints: tuple[tuple[float, float], ...]
    n_interior: tuple[int, ...]
    h: tuple[float, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n_interior

    @cached_property
    def n_nodes(self) -> int:
        total = 1
        for n in self.n_interior:
            total *= n
        return total

    @cached_property
    def cell_volume(self) -> float:
        """Quadrature weight h^dim of one interior node."""
        total = 1.0
        for h in self.h:
            total *= h
        return total

    @property
    def volume(self) -> float:
        """Measure of the continuous domain."""
        return float(np.prod([hi - lo for lo, hi in self.endpoints]))

    def axis_coords(self, axis: int) -> np.ndarray:
        lo, _ = self.endpoints[axis]
        n = self.n_interior[axis]
        h = self.h[axis]
        return lo + h * np.arange(1, n + 1)

    def coords(self) -> list[np.ndarray]:
        """Per-axis coordinate arrays broadcast over the interior shape."""
        axes = [self.axis_coords(a) for a in range(self.dim)]
        if self.dim == 1:
            return axes
        return [g.ravel() for g in np.meshgrid(*axes, indexing="ij")]


@dataclass(frozen=True)
class Field:
    """Values of a scalar function at the interior nodes of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.shape[0] != self.grid.n_nodes:
            raise ValueError(
                f"field has {v.shape[0]} values, grid has {self.grid.n_nodes} interior nodes"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)

    def reshaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


def make_grid(dim, endpoints, n_interior) -> Grid:
    """Build a uniform Dirichlet grid.

    1D accepts scalars, e.g. make_grid(1, (0, 1), 127); 2D takes per-axis
    tuples, e.g. make_grid(2, ((0, 1), (0, 1)), (31, 31)).
    """
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if dim == 1:
        ep = endpoints
        if len(ep) == 2 and np.isscalar(ep[0]):
            endpoints = (tuple(ep),)
        n_interior = (int(n_interior),) if np.isscalar(n_interior) else tuple(int(n) for n in n_interior)
    else:
        endpoints = tuple(tuple(e) for e in endpoints)
        n_interior = tuple(int(n) for n in n_interior)
    if len(endpoints) != dim or len(n_interior) != dim:
        raise ValueError("endpoints and n_interior must have one entry per axis")
    h = []
    for (lo, hi), n in zip(endpoints, n_interior):
        if not hi > lo:
            raise ValueError(f"endpoints must be ordered, got ({lo}, {hi})")
        if n < 1:
            raise ValueError(f"n_interior must be >= 1, got {n}")
        h.append((hi - lo) / (n + 1))
    return Grid(dim=dim, endpoints=tuple(endpoints), n_interior=tuple(n_interior), h=tuple(h))


def _check_on_grid(g: Grid, u: Field):
    if u.grid != g:
        raise ValueError("field is not defined on the given grid")


def lap_array(g: Grid, a: np.ndarray) -> np.ndarray:
    """Dirichlet Laplacian stencil on a raw value array (flat or shaped)."""
    if g.dim == 1:
        h2 = g.h[0] * g.h[0]
        out = -2.0 * a
        out[1:] += a[:-1]
        out[:-1] += a[1:]
        return out / h2
    v = a.reshape(g.shape)
    h1sq = g.h[0] * g.h[0]
    h2sq = g.h[1] * g.h[1]
    out = (-2.0 / h1sq - 2.0 / h2sq) * v
    out[1:, :] += v[:-1, :] / h1sq
    out[:-1, :] += v[1:, :] / h1sq
    out[:, 1:] += v[:, :-1] / h2sq
    out[:, :-1] += v[:, 1:] / h2sq
    return out.reshape(-1)


def laplacian(g: Grid, u: Field) -> Field:
    """Second-order 3-point (1D) / 5-point (2D) Laplacian with zero ghost values."""
    _check_on_grid(g, u)
    return Field(g, lap_array(g, u.values))


def norm_lp(g: Grid, u: Field, p) -> float:
    """Discrete L^p norm, (h^dim * sum |u|^p)^(1/p); p in {2, 4, 6, inf}."""
    _check_on_grid(g, u)
    v = u.values
    if p == np.inf or p == "inf":
        return float(np.max(np.abs(v))) if v.size else 0.0
    if p not in (2, 4, 6):
        raise ValueError(f"unsupported norm order {p}")
    return float((g.cell_volume * np.sum(np.abs(v) ** p)) ** (1.0 / p))


def h1_grad_sq(g: Grid, a: np.ndarray) -> float:
    """Squared discrete gradient norm of a raw array (edges to the boundary included)."""
    if g.dim == 1:
        d = np.empty(a.size + 1)
        d[0] = a[0]
        d[-1] = a[-1]
        np.subtract(a[1:], a[:-1], out=d[1:-1])
        total = float((d * d).sum()) / (g.h[0] * g.h[0])
    else:
        v = a.reshape(g.shape)
        d0 = np.diff(v, axis=0, prepend=0.0, append=0.0)
        d1 = np.diff(v, axis=1, prepend=0.0, append=0.0)
        total = float((d0 * d0).sum()) / (g.h[0] * g.h[0]) \
            + float((d1 * d1).sum()) / (g.h[1] * g.h[1])
    return g.cell_volume * total


def h1_seminorm(g: Grid, u: Field) -> float:
    """Discrete H1 seminorm (the square root of the edge-difference energy)."""
    _check_on_grid(g, u)
    return float(np.sqrt(h1_grad_sq(g, u.values)))


def positive_part(u: Field) -> Field:
    return Field(u.grid, np.maximum(u.values, 0.0))


def negative_part(u: Field) -> Field:
    return Field(u.grid, np.maximum(-u.values, 0.0))


def stencil_min_eigenvalue(g: Grid) -> float:
    """Smallest eigenvalue of the negative discrete Laplacian, summed per axis.

    Per axis the 3-point stencil has first eigenvalue (2/h^2)(1 - cos(pi h / L)).
    """
    total = 0.0
    for (lo, hi), h in zip(g.endpoints, g.h):
        total += (2.0 / (h * h)) * (1.0 - np.cos(np.pi * h / (hi - lo)))
    return float(total)


def first_mode(g: Grid) -> Field:
    """First eigenfield of the negative discrete Laplacian, scaled to peak value 1."""
    axes = []
    for n in g.n_interior:
        k = np.arange(1, n + 1)
        axes.append(np.sin(np.pi * k / (n + 1)))
    if g.dim == 1:
        v = axes[0]
    else:
        v = np.outer(axes[0], axes[1]).reshape(-1)
    return Field(g, v / np.max(v))


def write_field_csv(path, u: Field):
    """One node per line: axis coordinates then value, after a grid header."""
    g = u.grid
    n_str = "x".join(str(n) for n in g.n_interior)
    h_str = "x".join(repr(h) for h in g.h)
    lines = [f"# grid dim={g.dim} n={n_str} h={h_str}"]
    coords = g.coords()
    for i in range(g.n_nodes):
        cols = [repr(float(c[i])) for c in coords]
        cols.append(repr(float(u.values[i])))
        lines.append(",".join(cols))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_field_csv(path, grid: Grid | None = None) -> Field:
    """Read a field written by write_field_csv; rebuilds the grid if none is given."""
    with open(path) as f:
        header = f.readline().strip()
        rows = [line.strip() for line in f if line.strip()]
    if not header.startswith("# grid "):
        raise ValueError(f"{path}: missing grid header")
    meta = dict(tok.split("=", 1) for tok in header[len("# grid "):].split())
    dim = int(meta["dim"])
    n_interior = tuple(int(s) for s in meta["n"].split("x"))
    h = tuple(float(s) for s in meta["h"].split("x"))
    data = np.array([[float(c) for c in r.split(",")] for r in rows])
    if data.shape[1] != dim + 1:
        raise ValueError(f"{path}: expected {dim + 1} columns, got {data.shape[1]}")
    if grid is None:
        # endpoints recovered from the first interior node: lo = x0 - h
        endpoints = []
        for a in range(dim):
            lo = data[0, a] - h[a]
            endpoints.append((lo, lo + h[a] * (n_interior[a] + 1)))
        grid = Grid(dim=dim, endpoints=tuple(endpoints), n_interior=n_interior, h=h)
    else:
        if grid.dim != dim or grid.n_interior != n_interior:
            raise ValueError(f"{path}: grid header does not match the expected grid")
    if data.shape[0] != grid.n_nodes:
        raise ValueError(f"{path}: expected {grid.n_nodes} rows, got {data.shape[0]}")
    return Field(grid, data[:, -1])
