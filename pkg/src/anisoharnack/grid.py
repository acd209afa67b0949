"""Simplicial grids on boxes and piecewise-linear fields.

The box is split into ``prod(resolution)`` cubes, each cube into ``n!``
simplices along monotone vertex paths (the Kuhn split; in 2D this is the
diagonal from the lower-left to the upper-right corner).  All geometric
data needed by the solver (volumes, centroids, barycentric gradients) is
computed once at construction.
"""
import io
import itertools
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "Grid",
    "DiscreteField",
    "build_grid",
    "cell_gradient",
    "ball_stats",
    "oscillation",
    "write_field_csv",
    "read_field_csv",
]

_INSIDE_TOL = 1e-12


def _subsimplex_barycentres(n, k):
    """Barycentric coordinates of the centroids of the ``k**n`` equal-volume
    pieces of the edgewise subdivision of a reference n-simplex."""
    perms = list(itertools.permutations(range(n)))
    pts = []
    for corner in itertools.product(range(k), repeat=n):
        base = np.array(corner, dtype=float)
        for perm in perms:
            verts = [base.copy()]
            for ax in perm:
                nxt = verts[-1].copy()
                nxt[ax] += 1.0
                verts.append(nxt)
            c = np.mean(verts, axis=0) / k
            # keep pieces inside {1 >= y1 >= ... >= yn >= 0}
            if c[0] <= 1.0 and np.all(np.diff(c) <= 0):
                pts.append(c)
    y = np.array(pts)
    lam = np.empty((len(y), n + 1))
    lam[:, 0] = 1.0 - y[:, 0]
    lam[:, 1:n] = y[:, :-1] - y[:, 1:]
    lam[:, n] = y[:, -1]
    return lam


@dataclass(frozen=True, eq=False)
class Grid:
    """Conforming simplicial mesh of an axis-aligned box.

    Attributes
    ----------
    lo, hi : ndarray
        Box corners.
    resolution : tuple of int
        Cells per axis.
    vertices : ndarray, shape (nv, n)
    cells : ndarray, shape (nc, n + 1)
        Vertex indices of each simplex.
    boundary_mask : ndarray of bool, shape (nv,)
    volumes, centroids : ndarray
    basis_grads : ndarray, shape (nc, n + 1, n)
        Constant gradients of the barycentric (hat) functions on each cell.
    """

    lo: np.ndarray
    hi: np.ndarray
    resolution: tuple
    vertices: np.ndarray
    cells: np.ndarray
    boundary_mask: np.ndarray
    volumes: np.ndarray
    centroids: np.ndarray
    basis_grads: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_cells(self):
        return self.cells.shape[0]

    @property
    def h(self):
        """Largest cell side."""
        return float(np.max((self.hi - self.lo) / np.asarray(self.resolution)))

    @property
    def free(self):
        return ~self.boundary_mask

    @property
    def box_volume(self):
        return float(np.prod(self.hi - self.lo))

    def field(self, values):
        return DiscreteField(self, values)

    def interpolate(self, func):
        """Nodal interpolant of ``func`` (vectorised over points ``(..., n)``)."""
        vals = np.asarray(func(self.vertices), dtype=float)
        return DiscreteField(self, np.broadcast_to(vals, (self.n_vertices,)).copy())

    def integrate(self, cell_density):
        """``sum_c vol_c * density_c`` in fixed cell order."""
        return float(np.sum(self.volumes * np.asarray(cell_density)))

    def edges(self):
        if "edges" not in self._cache:
            n1 = self.cells.shape[1]
            pairs = [self.cells[:, [i, j]] for i in range(n1) for j in range(i + 1, n1)]
            e = np.sort(np.concatenate(pairs), axis=1)
            self._cache["edges"] = np.unique(e, axis=0)
        return self._cache["edges"]

    def contains_ball(self, center, r, margin=0.0):
        c = np.asarray(center, dtype=float)
        slack = _INSIDE_TOL * max(1.0, float(np.max(np.abs(self.hi - self.lo))))
        return bool(np.all(c - r - margin >= self.lo - slack)
                    and np.all(c + r + margin <= self.hi + slack))

    def _check_ball(self, center, r):
        c = np.asarray(center, dtype=float)
        if c.shape != (self.dim,):
            raise DomainError(f"center must have {self.dim} components")
        if not r > 0:
            raise DomainError("ball radius must be positive")
        if not self.contains_ball(c, r):
            raise DomainError(f"ball B_{r}({c.tolist()}) is not contained in the box")
        return c

    def _near_cells(self, c, r):
        d = np.linalg.norm(self.centroids - c, axis=1)
        return np.nonzero(d <= r + self.h * math.sqrt(self.dim))[0]

    def barycentric(self, cell_ids, pts):
        """Barycentric coordinates of ``pts[i]`` w.r.t. cell ``cell_ids[i]``."""
        P0 = self.vertices[self.cells[cell_ids, 0]]
        lam_rest = np.einsum("ckj,cj->ck", self.basis_grads[cell_ids, 1:, :], pts - P0)
        return np.column_stack([1.0 - lam_rest.sum(axis=1), lam_rest])

    def ball_quadrature(self, center, r):
        """Sample points, weights and cells approximating integrals over B_r.

        Every cell near the ball contributes its sub-simplex centroids
        (16 per triangle, 27 per tetrahedron) with equal weights; those
        outside the ball are dropped, which clips cut cells to O(h).
        Returns ``(points, weights, cell_ids, bary)``.
        """
        c = self._check_ball(center, r)
        key = ("quad", tuple(c.tolist()), float(r))
        if key in self._cache:
            return self._cache[key]
        lam = self._ref_samples()
        cells = self._near_cells(c, r)
        verts = self.vertices[self.cells[cells]]            # (m, n+1, n)
        pts = np.einsum("sk,mkj->msj", lam, verts)          # (m, s, n)
        inside = np.linalg.norm(pts - c, axis=-1) <= r * (1 + _INSIDE_TOL)
        mi, si = np.nonzero(inside)
        out = (pts[mi, si], self.volumes[cells[mi]] / lam.shape[0],
               cells[mi], lam[si])
        for a in out:
            a.setflags(write=False)
        self._cache[key] = out
        return out

    def samples(self):
        """Every sub-simplex centroid of every cell: ``(points, cell_ids, bary)``."""
        lam = self._ref_samples()
        verts = self.vertices[self.cells]
        pts = np.einsum("sk,mkj->msj", lam, verts).reshape(-1, self.dim)
        cid = np.repeat(np.arange(self.n_cells), lam.shape[0])
        return pts, cid, np.tile(lam, (self.n_cells, 1))

    def _ref_samples(self):
        if "ref" not in self._cache:
            k = 4 if self.dim == 2 else 3 if self.dim == 3 else 2
            self._cache["ref"] = _subsimplex_barycentres(self.dim, k)
        return self._cache["ref"]


def build_grid(box, resolution):
    """Mesh the box ``[(lo_1, hi_1), ..., (lo_n, hi_n)]``.

    ``resolution`` is an int (same on every axis) or one int per axis.
    """
    box = np.asarray(box, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2 or box.shape[0] < 2:
        raise ConfigurationError("box must be a list of (lo, hi) pairs, n >= 2")
    lo, hi = box[:, 0].copy(), box[:, 1].copy()
    n = len(lo)
    if np.any(hi - lo <= 0) or not np.all(np.isfinite(box)):
        raise ConfigurationError("box has a degenerate or non-finite side")
    res = np.broadcast_to(np.asarray(resolution), (n,))
    if np.any(res < 1) or np.any(res != np.round(res)):
        raise ConfigurationError("resolution must be a positive integer per axis")
    res = tuple(int(v) for v in res)

    axes = [np.linspace(lo[i], hi[i], res[i] + 1) for i in range(n)]
    vertices = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)
    shape = tuple(r + 1 for r in res)
    idx = np.stack(np.meshgrid(*[np.arange(r + 1) for r in res], indexing="ij"), -1)
    idx = idx.reshape(-1, n)
    boundary = np.any((idx == 0) | (idx == np.asarray(res)), axis=1)

    corners = np.stack(np.meshgrid(*[np.arange(r) for r in res], indexing="ij"), -1)
    corners = corners.reshape(-1, n)
    cells = []
    for perm in itertools.permutations(range(n)):
        path = [corners.copy()]
        for ax in perm:
            nxt = path[-1].copy()
            nxt[:, ax] += 1
            path.append(nxt)
        cells.append(np.stack([np.ravel_multi_index(tuple(p.T), shape) for p in path], 1))
    # cube-major order: all simplices of a cube are adjacent
    cells = np.stack(cells, 1).reshape(-1, n + 1)

    P = vertices[cells]
    T = np.swapaxes(P[:, 1:, :] - P[:, :1, :], 1, 2)       # columns are edges
    det = np.linalg.det(T)
    volumes = np.abs(det) / math.factorial(n)
    Tinv = np.linalg.inv(T)                                   # rows: grad lambda_k
    grads = np.concatenate([-Tinv.sum(axis=1, keepdims=True), Tinv], axis=1)
    centroids = P.mean(axis=1)
    arrays = dict(lo=lo, hi=hi, vertices=vertices, cells=cells, boundary_mask=boundary,
                  volumes=volumes, centroids=centroids, basis_grads=grads)
    for a in arrays.values():
        a.setflags(write=False)
    return Grid(resolution=res, **arrays)


@dataclass(eq=False)
class DiscreteField:
    """Piecewise-linear field given by one value per grid vertex."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_vertices,):
            raise ConfigurationError(
                f"field needs {self.grid.n_vertices} values, got {self.values.shape}")

    def gradients(self):
        """Per-cell gradients, shape ``(n_cells, n)``."""
        return cell_gradients(self.grid, self.values)

    def at_cells(self, cell_ids, bary):
        """Interpolated values at points given by cell and barycentric coords."""
        return np.einsum("mk,mk->m", bary, self.values[self.grid.cells[cell_ids]])

    def copy(self):
        return DiscreteField(self.grid, self.values.copy())


def cell_gradients(grid, values):
    """Per-cell gradients, written as differences against the first vertex
    so that constant fields give exactly zero."""
    v = np.asarray(values)[grid.cells]
    return np.einsum("ck,ckj->cj", v[:, 1:] - v[:, :1], grid.basis_grads[:, 1:])


def cell_gradient(field, cell):
    """Constant gradient of the linear interpolant on one simplex."""
    g = field.grid
    return field.values[g.cells[cell]] @ g.basis_grads[cell]


def _ball_extreme(field, c, r, sign):
    """``sign * max(sign * u)`` over B_r for the piecewise-linear interpolant.

    Candidates are vertices inside the ball, intersections of mesh edges
    with the sphere, and for each cut cell the point where the linear
    function peaks on the sphere (if it lies in that cell).  In 2D this set
    contains the exact extremum of the interpolant over the ball.
    """
    grid = field.grid
    u = field.values
    cand = []

    d = np.linalg.norm(grid.vertices - c, axis=1)
    inside = d <= r * (1 + _INSIDE_TOL)
    cand.append(u[inside])

    E = grid.edges()
    a, b = grid.vertices[E[:, 0]], grid.vertices[E[:, 1]]
    mid = 0.5 * (a + b)
    near = np.linalg.norm(mid - c, axis=1) <= r + grid.h * math.sqrt(grid.dim)
    a, b, E = a[near], b[near], E[near]
    dv = b - a
    ac = a - c
    qa = np.einsum("ij,ij->i", dv, dv)
    qb = 2.0 * np.einsum("ij,ij->i", ac, dv)
    qc = np.einsum("ij,ij->i", ac, ac) - r * r
    disc = qb * qb - 4 * qa * qc
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    for root in ((-qb - sq) / (2 * qa), (-qb + sq) / (2 * qa)):
        hit = ok & (root >= 0) & (root <= 1)
        t = root[hit]
        ua, ub = u[E[hit, 0]], u[E[hit, 1]]
        cand.append(ua + t * (ub - ua))

    cells = grid._near_cells(c, r)
    g = cell_gradients(grid, u)[cells] if len(cells) else np.zeros((0, grid.dim))
    gn = np.linalg.norm(g, axis=1)
    nz = gn > 0
    if np.any(nz):
        pts = c + sign * r * g[nz] / gn[nz, None]
        lam = grid.barycentric(cells[nz], pts)
        inc = np.all(lam >= -1e-12, axis=1)
        if np.any(inc):
            cand.append(field.at_cells(cells[nz][inc], lam[inc]))

    # the centre, so that balls smaller than a cell still get a value
    if len(cells):
        lam = grid.barycentric(cells, np.broadcast_to(c, (len(cells), grid.dim)))
        inc = np.nonzero(np.all(lam >= -1e-12, axis=1))[0]
        if len(inc):
            cand.append(field.at_cells(cells[inc[:1]], lam[inc[:1]]))

    vals = np.concatenate(cand)
    return float(sign * np.max(sign * vals))


def ball_stats(field, center, r, p):
    """Statistic of ``u`` over the ball ``B_r(center)``.

    ``p = inf`` gives the supremum, ``p = -inf`` the infimum and finite
    ``p > 0`` the norm ``(int_{B_r} |u|^p)^(1/p)``.
    """
    grid = field.grid
    c = grid._check_ball(center, r)
    if p == math.inf:
        return _ball_extreme(field, c, r, 1.0)
    if p == -math.inf:
        return _ball_extreme(field, c, r, -1.0)
    if not p > 0:
        raise DomainError(f"p must be positive or +-inf, got {p}")
    pts, w, cid, bary = grid.ball_quadrature(c, r)
    vals = np.abs(field.at_cells(cid, bary))
    return float(np.sum(w * vals ** p) ** (1.0 / p))


def oscillation(field, center, r):
    """``sup_{B_r} u - inf_{B_r} u``."""
    return ball_stats(field, center, r, math.inf) - ball_stats(field, center, r, -math.inf)


# --------------------------------------------------------------------------
# CSV export


def _atomic_write(path, text):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_field_csv(path, field, metadata=None):
    """Write ``x1,...,xn,value`` rows preceded by a ``#``-prefixed JSON header."""
    g = field.grid
    header = {
        "box": [[float(a), float(b)] for a, b in zip(g.lo, g.hi)],
        "resolution": list(g.resolution),
        "n_vertices": g.n_vertices,
    }
    if metadata:
        header["metadata"] = metadata
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    buf.write(",".join([f"x{i + 1}" for i in range(g.dim)] + ["value"]) + "\n")
    data = np.column_stack([g.vertices, field.values])
    for row in data:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    _atomic_write(path, buf.getvalue())


def read_field_csv(path):
    """Inverse of :func:`write_field_csv`; returns ``(field, header)``."""
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ConfigurationError("missing JSON header line")
        header = json.loads(first[2:])
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    grid = build_grid(header["box"], header["resolution"])
    if not np.allclose(data[:, :-1], grid.vertices, rtol=0, atol=1e-12):
        raise ConfigurationError("vertex coordinates do not match the header grid")
    return DiscreteField(grid, data[:, -1]), header
