"""Phantoms, multi-frequency synthetic data, noise and the error metric."""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import forward
from .forward import BoundaryTrace, CoupledSolver, SolverError

logger = logging.getLogger(__name__)

#: bit generator used for noise; recorded in dataset metadata
NOISE_GENERATOR = "MT19937"


def example1_sigma(x, y):
    """Smooth three-bump conductivity profile (unscaled coordinates)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (0.3 * (1 - x) ** 2 * np.exp(-x**2 - (y + 1) ** 2)
            - (x / 5 - x**3 - y**5) * np.exp(-(x**2 + y**2))
            - np.exp(-(x + 1) ** 2 - y**2) / 30)


EXAMPLE2_CENTERS = ((-0.25, 0.0), (0.25, 0.0))
EXAMPLE2_RADIUS = 0.2
EXAMPLE2_SIGMA = 0.2


def example2_sigma(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
    for cx, cy in EXAMPLE2_CENTERS:
        inside |= (x - cx) ** 2 + (y - cy) ** 2 < EXAMPLE2_RADIUS**2
    return np.where(inside, EXAMPLE2_SIGMA, 0.0)


def example2_q(x, y, k):
    """``i·0.2/k`` inside the two disks, zero elsewhere."""
    if not k > 0:
        raise ValueError("k must be positive")
    return 1j * example2_sigma(x, y) / k


@dataclass
class Phantom:
    """Conductivity phantom; ``q = iσ/k``.

    ``kind`` is ``"example1"``, ``"example2"`` or ``"grid"``; the latter
    needs ``grid`` and ``values`` (a σ array on that grid).
    """

    kind: str
    grid: object = None
    values: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("example1", "example2", "grid", "zero"):
            raise ValueError(f"unknown phantom kind {self.kind!r}")
        if self.kind == "grid" and (self.grid is None or self.values is None):
            raise ValueError("grid phantom needs grid and values")

    def sigma(self, points):
        points = np.atleast_2d(points)
        x, y = points[:, 0], points[:, 1]
        if self.kind == "example1":
            return example1_sigma(3 * x, 3 * y - 1)
        if self.kind == "example2":
            return example2_sigma(x, y)
        if self.kind == "zero":
            return np.zeros(len(points))
        return self.grid.interpolator(self.values)(points)

    def q_on_mesh(self, mesh, k):
        """Scatterer for the forward solver: callable for analytic phantoms,
        nodal values for grid phantoms (the reconstruction transfer path)."""
        if self.kind == "zero":
            return np.zeros(mesh.n_vertices, dtype=complex)
        if self.kind == "grid":
            return 1j * self.grid.to_mesh(self.values, mesh) / k
        return forward.Coefficient(mesh, lambda pts: 1j * self.sigma(pts) / k,
                                   resolve_jumps=self.kind != "example1")

    def on_grid(self, grid):
        if self.kind == "grid" and grid == self.grid:
            return np.where(grid.inside, self.values, 0.0)
        return grid.sample(self.sigma)

    def describe(self):
        return self.kind


@dataclass
class ScatteringDataset:
    """Scattered-field traces keyed by ``(k, angle index)``."""

    wavenumbers: list
    angles: np.ndarray
    traces: dict
    meta: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def partial(self):
        return bool(self.failures)

    def trace(self, k, index):
        key = (self.match_k(k), int(index))
        if key not in self.traces:
            raise KeyError(f"no trace for k={k}, angle index {index}")
        return self.traces[key]

    def traces_at(self, k):
        return [self.trace(k, i) for i in range(len(self.angles))]

    def match_k(self, k, tol=1e-9):
        for kk in self.wavenumbers:
            if abs(kk - k) <= tol * max(1.0, abs(k)):
                return kk
        raise KeyError(f"no data at k={k}")

    def missing(self, ks):
        """Wavenumbers from ``ks`` that the dataset does not fully cover."""
        gaps = []
        for k in ks:
            try:
                kk = self.match_k(k)
            except KeyError:
                gaps.append(k)
                continue
            if any((kk, i) not in self.traces for i in range(len(self.angles))):
                gaps.append(k)
        return gaps

    @property
    def quadrature_angles(self):
        return next(iter(self.traces.values())).angles


def data_modes(k_max, radius=1.0, extra=forward.EXTRA_MODES):
    """Exterior mode count for synthetic data: the reconstruction minimum plus ``extra``."""
    return int(np.ceil(k_max * radius)) + forward.EXTRA_MODES + int(extra)


def generate_data(phantom, ks, angles, fine_mesh, n_modes=None, workers=1):
    """Coupled forward solves for every ``(k, θ)``.

    One exterior mode count is used for all wavenumbers (the largest
    needed) so every trace shares the same quadrature angles.
    Failures are recorded in ``dataset.failures``.
    """
    ks = [float(k) for k in ks]
    angles = np.asarray(angles, dtype=float)
    if n_modes is None:
        n_modes = data_modes(max(ks), fine_mesh.radius)

    def run(k):
        try:
            solver = CoupledSolver(fine_mesh, phantom.q_on_mesh(fine_mesh, k), k, n_modes)
            return k, [r.trace for r in solver.solve(angles)], None
        except (SolverError, np.linalg.LinAlgError) as exc:
            logger.error("forward solve failed at k=%g: %s", k, exc)
            return k, None, str(exc)

    workers = max(1, int(workers or 1))
    if workers == 1:
        results = [run(k) for k in ks]
    else:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, ks))
    traces, failures = {}, []
    for k, trs, err in results:
        if trs is None:
            failures.extend((k, i, err) for i in range(len(angles)))
            continue
        for i, tr in enumerate(trs):
            traces[(k, i)] = tr
    meta = {
        "phantom": phantom.describe(),
        "mesh_h": f"{fine_mesh.h:.16e}",
        "n_vertices": str(fine_mesh.n_vertices),
        "radius": f"{fine_mesh.radius:.16e}",
        "N": str(n_modes),
        "level": "0",
        "seed": "none",
        "generator": NOISE_GENERATOR,
        "wavenumbers": " ".join(f"{k:.16e}" for k in ks),
        "angles": " ".join(f"{a:.16e}" for a in angles),
    }
    return ScatteringDataset(ks, angles, traces, meta, failures)


def add_noise(dataset, level, seed):
    """Multiply every trace sample by ``1 + level·U(-1, 1)``.

    One real uniform number per complex sample, drawn in sorted
    ``(k, index)`` order, Dirichlet before Neumann.
    """
    if level < 0:
        raise ValueError("noise level must be nonnegative")
    rng = np.random.Generator(np.random.MT19937(int(seed)))
    traces = {}
    for key in sorted(dataset.traces):
        tr = dataset.traces[key]
        if level == 0:
            traces[key] = tr
            continue
        fd = 1 + level * rng.uniform(-1.0, 1.0, len(tr.angles))
        fn = 1 + level * rng.uniform(-1.0, 1.0, len(tr.angles))
        traces[key] = BoundaryTrace(tr.angles, tr.dirichlet * fd, tr.neumann * fn)
    meta = dict(dataset.meta, level=repr(float(level)), seed=str(int(seed)))
    return ScatteringDataset(list(dataset.wavenumbers), dataset.angles.copy(), traces, meta,
                             list(dataset.failures))


def relative_error(reconstruction, truth, mask=None):
    """``‖σ_rec − σ_true‖₂ / ‖σ_true‖₂`` over the cells selected by ``mask``."""
    rec = np.asarray(reconstruction, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if rec.shape != tru.shape:
        raise ValueError(f"grid shapes differ: {rec.shape} vs {tru.shape}")
    if mask is not None:
        rec, tru = rec[mask], tru[mask]
    denom = np.linalg.norm(tru)
    if denom == 0:
        raise ValueError("relative error undefined for a zero truth")
    return float(np.linalg.norm(rec - tru) / denom)


# ---------------------------------------------------------------------------
# dataset directories
# ---------------------------------------------------------------------------
def trace_filename(k, index):
    return f"k{k:.6g}_th{index:03d}.csv"


def save_dataset(dataset, directory):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "meta"), "w") as f:
        for key in sorted(dataset.meta):
            f.write(f"{key}={dataset.meta[key]}\n")
        if dataset.failures:
            f.write("partial=" + ";".join(f"{k:.6g}:{i}" for k, i, _ in dataset.failures) + "\n")
    for (k, i), tr in sorted(dataset.traces.items()):
        forward.write_trace(os.path.join(directory, trace_filename(k, i)), tr,
                            dataset.angles[i], k)


def read_meta(path):
    meta = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            meta[key.strip()] = value.strip()
    return meta


def load_dataset(directory):
    meta = read_meta(os.path.join(directory, "meta"))
    try:
        ks = [float(v) for v in meta["wavenumbers"].split()]
        angles = np.array([float(v) for v in meta["angles"].split()])
    except KeyError as exc:
        raise ValueError(f"{directory}/meta lacks {exc}") from None
    traces = {}
    for k in ks:
        for i in range(len(angles)):
            path = os.path.join(directory, trace_filename(k, i))
            if os.path.exists(path):
                tr, _, _ = forward.read_trace(path)
                traces[(k, i)] = tr
    meta.pop("partial", None)
    return ScatteringDataset(ks, angles, traces, meta)
