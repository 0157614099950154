"""Conforming P1 triangulations of a disk.

Meshes are built from concentric rings (ring ``j`` carries ``6 j`` equispaced
vertices) stitched into triangle strips, which gives deterministic,
near-equilateral elements.  Uniform refinement splits every triangle into
four and pushes new boundary midpoints back onto the circle.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

logger = logging.getLogger(__name__)

MAX_VERTICES = 5_000_000


class OutOfDomainError(ValueError):
    """A query point lies outside the triangulated domain."""


class ResolutionWarning(UserWarning):
    """Fewer than ten elements per wavelength."""


def check_resolution(mesh, k, per_wavelength=10):
    """Warn when the median edge exceeds ``2π / (per_wavelength · k)``.

    The median edge of a generated mesh runs a few percent above its
    ``target_h``, so 20% slack is allowed before warning.
    """
    limit = 2 * np.pi / (per_wavelength * k)
    typical = float(np.median(mesh.edge_lengths()))
    if typical > 1.2 * limit:
        warnings.warn(f"mesh edge {typical:.3g} exceeds {limit:.3g} "
                      f"({per_wavelength} elements per wavelength at k={k:g})",
                      ResolutionWarning, stacklevel=3)
        return False
    return True


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation of the disk ``|x| < radius``.

    Attributes
    ----------
    vertices : ndarray, shape (V, 2)
    triangles : ndarray of int, shape (T, 3)
        Vertex indices, counterclockwise.
    boundary_loop : ndarray of int, shape (B,)
        Boundary vertices traversing the circle counterclockwise, starting at
        angle 0.
    radius : float
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_loop: np.ndarray
    radius: float
    _tree: object = field(default=None, repr=False, compare=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def boundary_angles(self):
        """Polar angles of the boundary loop vertices in [0, 2*pi)."""
        p = self.vertices[self.boundary_loop]
        return np.mod(np.arctan2(p[:, 1], p[:, 0]), 2 * np.pi)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edges(self):
        """Unique undirected edges as a sorted (E, 2) array."""
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def edge_lengths(self):
        e = self.edges()
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)

    def min_angle_degrees(self):
        p = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cos = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
        return float(np.min(angles))

    @property
    def h(self):
        """Largest edge length."""
        return float(self.edge_lengths().max())

    def validate(self):
        """Check the structural invariants; raise ValueError on failure."""
        if np.any(self.signed_areas() <= 0):
            raise ValueError("mesh has non-positive triangle areas")
        r = np.linalg.norm(self.vertices[self.boundary_loop], axis=1)
        if np.max(np.abs(r - self.radius)) > 1e-12 * self.radius:
            raise ValueError("boundary vertices are not on the circle")
        if len(np.unique(self.boundary_loop)) != len(self.boundary_loop):
            raise ValueError("boundary loop is not a simple cycle")
        ang = self.boundary_angles
        if np.any(np.diff(ang) <= 0):
            raise ValueError("boundary loop is not counterclockwise")
        tree = cKDTree(self.vertices)
        if tree.query_pairs(1e-12 * self.radius):
            raise ValueError("duplicate vertices")

    def _centroid_tree(self):
        if self._tree is None:
            centroids = self.vertices[self.triangles].mean(axis=1)
            object.__setattr__(self, "_tree", cKDTree(centroids))
        return self._tree

    def locate(self, points, tol=1e-10):
        """Containing triangle and barycentric coordinates for each point.

        Raises
        ------
        OutOfDomainError
            If a point is farther than ``tol`` (relative to the radius) from
            every triangle.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        tree = self._centroid_tree()
        tri_idx = np.full(len(points), -1)
        bary = np.zeros((len(points), 3))
        todo = np.arange(len(points))
        for n_near in (6, 24, 96):
            if len(todo) == 0:
                break
            n_near = min(n_near, self.n_triangles)
            _, cand = tree.query(points[todo], k=n_near)
            cand = np.atleast_2d(cand).reshape(len(todo), n_near)
            lam = self._barycentric(points[todo, None, :], cand)
            worst = lam.min(axis=2)
            best = np.argmax(worst, axis=1)
            ok = worst[np.arange(len(todo)), best] >= -tol
            found = todo[ok]
            tri_idx[found] = cand[ok, best[ok]]
            bary[found] = lam[ok, best[ok]]
            todo = todo[~ok]
        if len(todo):
            raise OutOfDomainError(f"{len(todo)} point(s) outside the mesh, e.g. {points[todo[0]]}")
        return tri_idx, bary

    def _barycentric(self, pts, tri):
        p = self.vertices[self.triangles[tri]]  # (..., 3, 2)
        v0 = p[..., 1, :] - p[..., 0, :]
        v1 = p[..., 2, :] - p[..., 0, :]
        v2 = pts - p[..., 0, :]
        det = v0[..., 0] * v1[..., 1] - v0[..., 1] * v1[..., 0]
        l1 = (v2[..., 0] * v1[..., 1] - v2[..., 1] * v1[..., 0]) / det
        l2 = (v0[..., 0] * v2[..., 1] - v0[..., 1] * v2[..., 0]) / det
        return np.stack([1 - l1 - l2, l1, l2], axis=-1)

    def interpolation_matrix(self, points, tol=1e-10):
        """Sparse (P, V) matrix mapping nodal values to values at ``points``."""
        from scipy.sparse import csr_matrix

        tri, lam = self.locate(points, tol)
        rows = np.repeat(np.arange(len(tri)), 3)
        cols = self.triangles[tri].ravel()
        return csr_matrix((lam.ravel(), (rows, cols)), shape=(len(tri), self.n_vertices))


def generate_disk_mesh(radius, target_h):
    """Quasi-uniform ring triangulation of the disk of given radius.

    The number of rings is ``ceil(radius / target_h)``; ring ``j`` holds
    ``6 j`` vertices, so both radial and circumferential spacing stay within
    a few percent of ``radius / n_rings``.
    """
    if not (radius > 0 and 0 < target_h < radius):
        raise ValueError(f"need 0 < target_h < radius, got h={target_h}, r={radius}")
    n_rings = math.ceil(radius / target_h - 1e-12)
    n_vertices = 1 + 3 * n_rings * (n_rings + 1)
    if n_vertices > MAX_VERTICES:
        raise MemoryError(
            f"target_h={target_h} needs {n_vertices} vertices (limit {MAX_VERTICES}); "
            "increase target_h"
        )

    verts = [np.zeros((1, 2))]
    ring_start = [0]
    offset = 1
    for j in range(1, n_rings + 1):
        n_j = 6 * j
        theta = 2 * np.pi * np.arange(n_j) / n_j
        r = radius if j == n_rings else radius * j / n_rings
        verts.append(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))
        ring_start.append(offset)
        offset += n_j
    vertices = np.vstack(verts)
    # exact boundary radius
    b = np.arange(ring_start[-1], offset)
    vertices[b] *= radius / np.linalg.norm(vertices[b], axis=1)[:, None]

    tris = [[0, 1 + i, 1 + (i + 1) % 6] for i in range(6)]
    for j in range(2, n_rings + 1):
        tris.extend(_stitch_rings(vertices, ring_start[j - 1], 6 * (j - 1), ring_start[j], 6 * j))
    mesh = Mesh(vertices, np.asarray(tris, dtype=np.int64), b.astype(np.int64), float(radius))
    return mesh


def _stitch_rings(vertices, s_in, n_in, s_out, n_out):
    """Triangle strip between two concentric rings (shorter-diagonal rule)."""
    tris = []
    i = o = 0
    while i < n_in or o < n_out:
        vi, vo = s_in + i % n_in, s_out + o % n_out
        vi_next, vo_next = s_in + (i + 1) % n_in, s_out + (o + 1) % n_out
        if i >= n_in:
            advance_out = True
        elif o >= n_out:
            advance_out = False
        else:
            d_out = np.linalg.norm(vertices[vi] - vertices[vo_next])
            d_in = np.linalg.norm(vertices[vo] - vertices[vi_next])
            advance_out = d_out <= d_in
        if advance_out:
            tris.append([vi, vo, vo_next])
            o += 1
        else:
            tris.append([vi, vo, vi_next])
            i += 1
    return tris


def refine(mesh):
    """Uniform red refinement: each triangle becomes four."""
    t = mesh.triangles
    edges = np.vstack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
    key = np.sort(edges, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    mid = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    nv = mesh.n_vertices
    mid_id = nv + inv.reshape(3, -1).T  # column m is the edge opposite vertex m

    bloop = mesh.boundary_loop
    nb = len(bloop)
    b_edges = np.sort(np.column_stack([bloop, np.roll(bloop, -1)]), axis=1)
    # locate boundary edges among unique edges
    lookup = {tuple(e): idx for idx, e in enumerate(uniq)}
    b_mid = np.array([nv + lookup[tuple(e)] for e in b_edges])
    vertices = np.vstack([mesh.vertices, mid])
    bm = vertices[b_mid]
    vertices[b_mid] = bm * (mesh.radius / np.linalg.norm(bm, axis=1))[:, None]

    v0, v1, v2 = t[:, 0], t[:, 1], t[:, 2]
    m0, m1, m2 = mid_id[:, 0], mid_id[:, 1], mid_id[:, 2]
    new_tris = np.vstack([
        np.column_stack([v0, m2, m1]),
        np.column_stack([m2, v1, m0]),
        np.column_stack([m1, m0, v2]),
        np.column_stack([m0, m1, m2]),
    ])
    new_loop = np.empty(2 * nb, dtype=np.int64)
    new_loop[0::2] = bloop
    new_loop[1::2] = b_mid
    return Mesh(vertices, new_tris, new_loop, mesh.radius)


def interpolate(mesh, values, points, tol=1e-10):
    """Barycentric-linear interpolation of nodal ``values`` at ``points``."""
    values = np.asarray(values)
    if values.shape[0] != mesh.n_vertices:
        raise ValueError("field length does not match vertex count")
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    tri, lam = mesh.locate(points, tol)
    out = np.einsum("pk,pk...->p...", lam, values[mesh.triangles[tri]])
    return out[0] if single else out


def save_mesh(mesh, path):
    with open(path, "w") as f:
        f.write(f"{mesh.n_vertices} vertices {mesh.n_triangles} triangles "
                f"{len(mesh.boundary_loop)} boundary {float(mesh.radius)!r}\n")
        for x, y in mesh.vertices:
            f.write(f"{x:.17g} {y:.17g}\n")
        for a, b, c in mesh.triangles:
            f.write(f"{a} {b} {c}\n")
        f.write(" ".join(str(i) for i in mesh.boundary_loop) + "\n")


def load_mesh(path):
    with open(path) as f:
        head = f.readline().split()
        if len(head) < 6 or head[1] != "vertices" or head[3] != "triangles" or head[5] != "boundary":
            raise ValueError(f"{path}: bad mesh header")
        nv, nt = int(head[0]), int(head[2])
        radius = float(head[6]) if len(head) > 6 else None
        verts = np.array([[float(v) for v in f.readline().split()] for _ in range(nv)])
        tris = np.array([[int(v) for v in f.readline().split()] for _ in range(nt)], dtype=np.int64)
        loop = np.array([int(v) for v in f.readline().split()], dtype=np.int64)
    if radius is None:
        radius = float(np.linalg.norm(verts[loop[0]]))
    return Mesh(verts, tris, loop, radius)
