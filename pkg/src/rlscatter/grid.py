"""Uniform Cartesian reconstruction grid over the disk and its transfers to meshes."""

import csv
import weakref

import numpy as np
from scipy.interpolate import RegularGridInterpolator


class ReconGrid:
    """``n x n`` cells over ``[-radius, radius]²``; cells with centers in Ω are active.

    Values are stored as ``(n, n)`` arrays indexed ``[iy, ix]``.
    """

    def __init__(self, n=64, radius=1.0):
        self.n = int(n)
        self.radius = float(radius)
        self.h = 2 * self.radius / self.n
        self.centers_1d = -self.radius + (np.arange(self.n) + 0.5) * self.h
        self.X, self.Y = np.meshgrid(self.centers_1d, self.centers_1d)
        self.inside = np.hypot(self.X, self.Y) < self.radius
        self.cell_area = self.h**2
        self._to_mesh = weakref.WeakKeyDictionary()
        self._from_mesh = weakref.WeakKeyDictionary()

    def __eq__(self, other):
        return isinstance(other, ReconGrid) and (self.n, self.radius) == (other.n, other.radius)

    def __hash__(self):
        return hash((self.n, self.radius))

    @property
    def points(self):
        """Centers of the active cells, (P, 2)."""
        return np.column_stack([self.X[self.inside], self.Y[self.inside]])

    def mask(self, support_radius=None):
        if support_radius is None:
            return self.inside.copy()
        return self.inside & (np.hypot(self.X, self.Y) < support_radius)

    def sample(self, func):
        """Evaluate ``func(points)`` at active cell centers; zero elsewhere."""
        out = np.zeros((self.n, self.n), dtype=np.result_type(func(np.zeros((1, 2))), float))
        out[self.inside] = func(self.points)
        return out

    def interpolator(self, values):
        """Bilinear interpolant of grid values (linear extrapolation past edge centers)."""
        return RegularGridInterpolator(
            (self.centers_1d, self.centers_1d), np.asarray(values).T,
            bounds_error=False, fill_value=None,
        )

    def to_mesh(self, values, mesh):
        """Grid values at mesh vertices (bilinear)."""
        return self.interpolator(values)(mesh.vertices)

    def from_mesh(self, mesh, nodal):
        """Nodal mesh field at active cell centers; zero outside Ω."""
        mat = self._from_mesh.get(mesh)
        if mat is None:
            pts = self.points.copy()
            # pull centers lying between a boundary chord and the arc onto the polygon
            nb = len(mesh.boundary_loop)
            r_poly = mesh.radius * np.cos(np.pi / nb) * (1 - 1e-9)
            r = np.hypot(pts[:, 0], pts[:, 1])
            scale = np.where(r > r_poly, r_poly / np.maximum(r, 1e-300), 1.0)
            mat = mesh.interpolation_matrix(pts * scale[:, None])
            self._from_mesh[mesh] = mat
        vals = mat @ np.asarray(nodal)
        out = np.zeros((self.n, self.n), dtype=vals.dtype)
        out[self.inside] = vals
        return out

    def cross_section(self, values, y, xs=None):
        """Bilinear samples along the horizontal line at height ``y``."""
        if xs is None:
            xs = self.centers_1d
        pts = np.column_stack([xs, np.full(len(xs), y)])
        return xs, self.interpolator(values)(pts)


def write_grid(path, grid, sigma):
    """CSV ``x,y,sigma`` with one row per cell center (row-major in y)."""
    sigma = np.asarray(sigma, dtype=float)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["x", "y", "sigma"])
        for iy in range(grid.n):
            for ix in range(grid.n):
                w.writerow([f"{grid.X[iy, ix]:.16e}", f"{grid.Y[iy, ix]:.16e}",
                            f"{sigma[iy, ix]:.16e}"])


def read_grid(path):
    """Inverse of :func:`write_grid`; returns ``(grid, sigma)``."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != ["x", "y", "sigma"]:
            raise ValueError(f"{path}: not a grid file (header {header})")
        rows = np.array([[float(v) for v in row] for row in reader])
    n = int(round(np.sqrt(len(rows))))
    if n * n != len(rows) or n == 0:
        raise ValueError(f"{path}: {len(rows)} rows is not a square grid")
    xs = rows[:n, 0]
    h = xs[1] - xs[0] if n > 1 else 2.0
    grid = ReconGrid(n, radius=round(n * h / 2, 12))
    if not np.allclose(grid.X.ravel(), rows[:, 0], atol=1e-9) or not np.allclose(
        grid.Y.ravel(), rows[:, 1], atol=1e-9
    ):
        raise ValueError(f"{path}: coordinates are not a uniform centered grid")
    return grid, rows[:, 2].reshape(n, n)
